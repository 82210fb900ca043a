"""CSR matrices, reproducible random streams and Matrix Market I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import kernels
from .errors import DimensionError, ParseError, RankDeficientError, StructuralError

_INDEX = np.int64


class SparseMatrix:
    """Immutable compressed-sparse-row matrix of float64 values.

    Construction validates the structure, sorts column indices within each
    row and drops stored zeros, so every instance satisfies the CSR
    invariants regardless of how it was built.
    """

    __slots__ = ("n_rows", "n_cols", "row_offsets", "col_indices", "values", "_scipy")

    def __init__(self, n_rows, n_cols, row_offsets, col_indices, values):
        n_rows, n_cols = int(n_rows), int(n_cols)
        if n_rows < 0 or n_cols < 0:
            raise StructuralError("negative dimensions")
        offsets = np.asarray(row_offsets, dtype=_INDEX)
        cols = np.asarray(col_indices, dtype=_INDEX)
        vals = np.asarray(values, dtype=np.float64)
        if offsets.shape != (n_rows + 1,):
            raise StructuralError(f"row_offsets must have length {n_rows + 1}")
        if offsets[0] != 0 or np.any(np.diff(offsets) < 0):
            raise StructuralError("row_offsets must start at 0 and be nondecreasing")
        if offsets[-1] != cols.shape[0] or cols.shape != vals.shape:
            raise StructuralError("row_offsets[-1] must equal the number of stored values")
        if cols.size and (cols.min() < 0 or cols.max() >= n_cols):
            raise StructuralError("column index out of range")

        csr = sp.csr_array((vals.copy(), cols.copy(), offsets.copy()), shape=(n_rows, n_cols))
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.row_offsets = np.ascontiguousarray(csr.indptr, dtype=_INDEX)
        self.col_indices = np.ascontiguousarray(csr.indices, dtype=_INDEX)
        self.values = np.ascontiguousarray(csr.data, dtype=np.float64)
        for arr in (self.row_offsets, self.col_indices, self.values):
            arr.setflags(write=False)
        self._scipy = None

    # construction -------------------------------------------------------

    @classmethod
    def from_dense(cls, dense):
        dense = np.atleast_2d(np.asarray(dense, dtype=np.float64))
        csr = sp.csr_array(dense)
        return cls(dense.shape[0], dense.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_scipy(cls, mat):
        csr = sp.csr_array(mat)
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def identity(cls, n):
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    # views --------------------------------------------------------------

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.values.shape[0])

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"

    def row_nnz(self):
        return np.diff(self.row_offsets)

    def to_scipy(self):
        if self._scipy is None:
            self._scipy = sp.csr_array(
                (self.values, self.col_indices, self.row_offsets), shape=self.shape
            )
        return self._scipy

    def to_dense(self):
        return self.to_scipy().toarray()

    # products -----------------------------------------------------------

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise DimensionError(f"expected vector of length {self.n_cols}, got {x.shape}")
        return kernels.csr_matvec(self.row_offsets, self.col_indices, self.values, x)

    def rmatvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_rows,):
            raise DimensionError(f"expected vector of length {self.n_rows}, got {x.shape}")
        return kernels.csr_rmatvec(
            self.row_offsets, self.col_indices, self.values, x, self.n_cols
        )

    def matmat(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.n_cols:
            raise DimensionError(f"expected {self.n_cols}-row matrix, got {X.shape}")
        return np.asarray(self.to_scipy() @ X)

    def rmatmat(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.n_rows:
            raise DimensionError(f"expected {self.n_rows}-row matrix, got {X.shape}")
        return np.asarray(self.to_scipy().T @ X)

    def __matmul__(self, other):
        other = np.asarray(other)
        return self.matvec(other) if other.ndim == 1 else self.matmat(other)

    def row_sqnorms(self, basis):
        """``‖(A @ basis)_i‖²`` for every row i."""
        basis = np.asarray(basis, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[0] != self.n_cols:
            raise DimensionError(f"expected {self.n_cols}-row basis, got {basis.shape}")
        return kernels.csr_row_sqnorms(self.row_offsets, self.col_indices, self.values, basis)

    def gram(self, weights=None):
        """Dense ``AᵀWA``; ``weights`` is the diagonal of W (default identity)."""
        S = self.to_scipy()
        if weights is None:
            G = S.T @ S
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (self.n_rows,):
                raise DimensionError("weights must have one entry per row")
            G = S.T @ (S.multiply(w[:, None]).tocsr())
        G = G.toarray() if sp.issparse(G) else np.asarray(G)
        return 0.5 * (G + G.T)

    # derived matrices ---------------------------------------------------

    def transpose(self):
        return SparseMatrix.from_scipy(self.to_scipy().T.tocsr())

    @property
    def T(self):
        return self.transpose()

    def scale_rows(self, s):
        s = np.asarray(s, dtype=np.float64)
        if s.shape != (self.n_rows,):
            raise DimensionError("row scaling must have one entry per row")
        vals = self.values * np.repeat(s, self.row_nnz())
        return SparseMatrix(self.n_rows, self.n_cols, self.row_offsets, self.col_indices, vals)

    def take_rows(self, rows):
        rows = np.asarray(rows, dtype=_INDEX)
        if rows.size and (rows.min() < 0 or rows.max() >= self.n_rows):
            raise StructuralError("row index out of range")
        return SparseMatrix.from_scipy(self.to_scipy()[rows])


def csr_from_triplets(triplets, n_rows, n_cols):
    """Build a SparseMatrix from ``(row, col, value)`` triplets.

    Duplicate positions are summed and exact zeros are dropped.
    """
    trip = list(triplets)
    if trip:
        rows, cols, vals = (np.asarray(c) for c in zip(*trip))
    else:
        rows = cols = np.zeros(0, dtype=_INDEX)
        vals = np.zeros(0)
    rows = rows.astype(_INDEX)
    cols = cols.astype(_INDEX)
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
        raise StructuralError("row index out of range")
    if cols.size and (cols.min() < 0 or cols.max() >= n_cols):
        raise StructuralError("column index out of range")
    coo = sp.coo_array((vals.astype(np.float64), (rows, cols)), shape=(n_rows, n_cols))
    return SparseMatrix.from_scipy(coo.tocsr())


def matvec(A, x):
    return A.matvec(x)


def matvec_t(A, x):
    return A.rmatvec(x)


def nnz_d(A, d):
    """Largest number of nonzeros held by any ``d`` rows of ``A``."""
    d = int(d)
    if not 1 <= d <= A.n_rows:
        raise ValueError(f"d must lie in [1, {A.n_rows}], got {d}")
    counts = np.sort(A.row_nnz())[::-1]
    return int(counts[:d].sum())


class SeededRng:
    """Counter-based (Philox) random stream keyed by ``(seed, stream)``.

    Streams with distinct ids are statistically independent, and a given
    pair always reproduces the same draws.
    """

    def __init__(self, seed=0, stream=0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def spawn(self, stream):
        """Independent child stream; does not advance this one."""
        return SeededRng(self.seed, (self.stream + 1) * 1_000_003 + int(stream))

    def __getattr__(self, name):
        return getattr(self.generator, name)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream={self.stream})"


def as_rng(rng):
    if isinstance(rng, SeededRng):
        return rng
    if rng is None:
        return SeededRng(0)
    return SeededRng(int(rng))


@dataclass(frozen=True)
class ConditionEstimate:
    kappa: float
    lambda_max: float
    lambda_min: float
    iterations: int


def condition_number_estimate(A, iters=100, rng=None):
    """Estimate the condition number of ``AᵀA``.

    Power iteration gives the top eigenvalue; inverse power iteration on a
    Cholesky factor of the Gram matrix gives the bottom one.
    """
    if A.nnz == 0:
        raise ValueError("condition number of the zero matrix is undefined")
    rng = as_rng(rng)
    gram = A.gram()
    try:
        factor = sla.cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError("rank-deficient: Gram matrix is not positive definite") from exc

    def power(apply):
        v = rng.standard_normal(A.n_cols)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = apply(v)
            lam = float(v @ w)
            nrm = np.linalg.norm(w)
            if nrm == 0.0:
                break
            v = w / nrm
        return lam

    lam_max = power(lambda v: A.rmatvec(A.matvec(v)))
    inv_top = power(lambda v: sla.cho_solve(factor, v))
    if not np.isfinite(inv_top) or inv_top <= 0.0:
        raise RankDeficientError("rank-deficient: inverse iteration failed")
    lam_min = 1.0 / inv_top
    if lam_min <= lam_max * 1e3 * np.finfo(float).eps:
        raise RankDeficientError("rank-deficient: smallest eigenvalue at round-off level")
    return ConditionEstimate(lam_max / lam_min, lam_max, lam_min, iters)


# Matrix Market and vector files ------------------------------------------


def _fmt(v):
    return repr(float(v)) if math.isfinite(v) else str(v)


def write_matrix_market(A, path):
    S = A.to_scipy().tocoo()
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n_rows} {A.n_cols} {S.nnz}\n")
        for i, j, v in zip(S.row, S.col, S.data):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def read_matrix_market(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    header = lines[0].split()
    if len(header) < 5 or header[0].lower() != "%%matrixmarket":
        raise ParseError("missing %%MatrixMarket banner", 1)
    obj, fmt, field, symmetry = (h.lower() for h in header[1:5])
    if obj != "matrix" or fmt != "coordinate":
        raise ParseError(f"unsupported format '{obj} {fmt}'", 1)
    if field not in ("real", "integer", "double"):
        raise ParseError(f"unsupported field '{field}'", 1)
    if symmetry not in ("general", "symmetric"):
        raise ParseError(f"unsupported symmetry '{symmetry}'", 1)

    lineno = 1
    body = iter(enumerate(lines[1:], start=2))
    size = None
    for lineno, line in body:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        size = s.split()
        break
    if size is None:
        raise ParseError("missing size line", lineno + 1)
    try:
        n_rows, n_cols, nnz = (int(v) for v in size)
    except ValueError:
        raise ParseError(f"bad size line '{' '.join(size)}'", lineno) from None
    if min(n_rows, n_cols, nnz) < 0:
        raise ParseError("negative dimensions", lineno)

    rows, cols, vals = [], [], []
    for lineno, line in body:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'row col value', got '{s}'", lineno)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"unparsable entry '{s}'", lineno) from None
        if not (1 <= i <= n_rows and 1 <= j <= n_cols):
            raise ParseError(f"entry ({i}, {j}) outside {n_rows}x{n_cols}", lineno)
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
        if symmetry == "symmetric" and i != j:
            rows.append(j - 1)
            cols.append(i - 1)
            vals.append(v)
    expected = nnz if symmetry == "general" else None
    if expected is not None and len(vals) != expected:
        raise ParseError(f"declared {nnz} entries, found {len(vals)}", lineno)
    return csr_from_triplets(zip(rows, cols, vals), n_rows, n_cols)


def write_vector(x, path):
    with open(path, "w") as fh:
        for v in np.asarray(x, dtype=np.float64):
            fh.write(f"{v:.17g}\n")


def read_vector(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("%") or s.startswith("#"):
                continue
            try:
                out.append(float(s))
            except ValueError:
                raise ParseError(f"not a number: '{s}'", lineno) from None
    return np.asarray(out, dtype=np.float64)


def load_path(path):
    return Path(path)
