"""High-accuracy sparse p-norm regression."""

import os as _os

# PNORM_THREADS caps BLAS threads as well as bench worker processes. The
# BLAS variables only take effect if numpy has not been imported yet.
if _os.environ.get("PNORM_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["PNORM_THREADS"])

from .errors import (ContractViolation, DimensionError, DivergenceError,  # noqa: E402
                     InfeasibleError, ParseError, PNormError, RankDeficientError,
                     StructuralError, UpdateRejected)
from .kernels import BACKEND  # noqa: E402
from .pnorm import (RegressionProblem, SolveConfig, SolveReport, homotopy_solve,  # noqa: E402
                    solve, solve_p1, solve_p2)
from .sparse import SparseMatrix, read_matrix_market, write_matrix_market  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ContractViolation", "DimensionError", "DivergenceError", "InfeasibleError",
    "ParseError", "PNormError", "RankDeficientError", "RegressionProblem", "SolveConfig",
    "SolveReport", "SparseMatrix", "StructuralError", "UpdateRejected", "homotopy_solve",
    "read_matrix_market", "solve", "solve_p1", "solve_p2", "write_matrix_market",
]
