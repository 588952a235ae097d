"""Dense/sparse storage, operator application and small dense kernels.

Dense matrices are plain 2-D ``float64`` numpy arrays and vectors are 1-D
arrays.  Sparse matrices use :class:`CsrMatrix`.  Everything here is written
against numpy only, so the factorizations and the eigensolver can serve as
independent checks on the iterative solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

EPS = np.finfo(np.float64).eps


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class SingularMatrixError(ArithmeticError):
    """Raised by :func:`lu_solve` on a factor flagged as singular."""


@dataclass(frozen=True)
class CsrMatrix:
    """Compressed sparse row matrix with sorted, unique column indices per row."""

    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        row_ptr = np.asarray(self.row_ptr, dtype=np.int64)
        col_idx = np.asarray(self.col_idx, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if self.rows < 0 or self.cols < 0:
            raise ValueError("negative dimensions")
        if row_ptr.shape != (self.rows + 1,):
            raise ValueError(f"row_ptr must have length {self.rows + 1}, got {row_ptr.shape[0]}")
        nnz = int(row_ptr[-1])
        if row_ptr[0] != 0 or np.any(np.diff(row_ptr) < 0):
            raise ValueError("row_ptr must start at 0 and be nondecreasing")
        if col_idx.shape != (nnz,) or values.shape != (nnz,):
            raise ValueError("col_idx and values must have length row_ptr[-1]")
        if nnz:
            if col_idx.min() < 0 or col_idx.max() >= self.cols:
                raise ValueError("column index out of range")
            # strictly increasing inside each row
            steps = np.diff(col_idx)
            row_starts = np.zeros(nnz, dtype=bool)
            row_starts[row_ptr[:-1][row_ptr[:-1] < nnz]] = True
            if np.any((steps <= 0) & ~row_starts[1:]):
                raise ValueError("column indices must be strictly increasing within a row")
        for name, arr in (("row_ptr", row_ptr), ("col_idx", col_idx), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def row_indices(self) -> np.ndarray:
        """Row index of every stored entry (COO expansion of ``row_ptr``)."""
        return np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.row_ptr))

    def diagonal(self) -> np.ndarray:
        diag = np.zeros(min(self.rows, self.cols))
        rows = self.row_indices()
        on_diag = rows == self.col_idx
        diag[rows[on_diag]] = self.values[on_diag]
        return diag

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.rows, self.cols))
        dense[self.row_indices(), self.col_idx] = self.values
        return dense

    @classmethod
    def from_dense(cls, a, drop_zeros: bool = True) -> "CsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("expected a 2-D array")
        mask = a != 0 if drop_zeros else np.ones(a.shape, dtype=bool)
        counts = mask.sum(axis=1)
        row_ptr = np.concatenate([[0], np.cumsum(counts)])
        rows, cols = np.nonzero(mask)
        return cls(a.shape[0], a.shape[1], row_ptr, cols, a[rows, cols])

    @classmethod
    def from_coo(cls, rows: int, cols: int, i, j, v) -> "CsrMatrix":
        """Build from coordinate triplets; duplicates are summed in input order."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        v = np.asarray(v, dtype=np.float64)
        if i.size and (i.min() < 0 or i.max() >= rows or j.min() < 0 or j.max() >= cols):
            raise ValueError("coordinate out of range")
        key = i * cols + j
        order = np.argsort(key, kind="stable")
        key, v = key[order], v[order]
        uniq, first = np.unique(key, return_index=True)
        summed = np.add.reduceat(v, first) if v.size else v
        r, c = np.divmod(uniq, cols) if cols else (uniq, uniq)
        row_ptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=rows))])
        return cls(rows, cols, row_ptr, c, summed)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        prod = self.values * v[self.col_idx]
        return np.bincount(self.row_indices(), weights=prod, minlength=self.rows)

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        prod = self.values * v[self.row_indices()]
        return np.bincount(self.col_idx, weights=prod, minlength=self.cols)


class LinearOperator:
    """A matrix seen only through ``A @ v`` and ``A.T @ v``.

    Parameters
    ----------
    backing : ndarray or CsrMatrix
        Dense 2-D array or CSR matrix. Dense input is copied to float64.
    """

    def __init__(self, backing: Union[np.ndarray, CsrMatrix]):
        if isinstance(backing, CsrMatrix):
            self._dense = None
            self._csr = backing
            self.shape = backing.shape
        else:
            arr = np.array(backing, dtype=np.float64)
            if arr.ndim != 2:
                raise ValueError("dense backing must be 2-D")
            arr.setflags(write=False)
            self._dense = arr
            self._csr = None
            self.shape = arr.shape

    @property
    def backing(self):
        return self._dense if self._dense is not None else self._csr

    @property
    def is_sparse(self) -> bool:
        return self._csr is not None

    def diagonal(self) -> np.ndarray:
        if self._dense is not None:
            return np.diagonal(self._dense).copy()
        return self._csr.diagonal()

    def to_dense(self) -> np.ndarray:
        if self._dense is not None:
            return np.array(self._dense)
        return self._csr.to_dense()

    def frobenius_norm(self) -> float:
        if self._dense is not None:
            return float(np.linalg.norm(self._dense))
        return float(np.linalg.norm(self._csr.values))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return matvec(self, v)

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        return matvec_transpose(self, v)

    def __repr__(self) -> str:
        kind = "csr" if self.is_sparse else "dense"
        return f"LinearOperator({self.shape[0]}x{self.shape[1]}, {kind})"


def as_operator(a) -> LinearOperator:
    return a if isinstance(a, LinearOperator) else LinearOperator(a)


def matvec(op: LinearOperator, v: np.ndarray) -> np.ndarray:
    """Return ``A @ v``."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != op.shape[1]:
        raise DimensionError(f"operator is {op.shape[0]}x{op.shape[1]} but vector has length {v.shape}")
    if op._dense is not None:
        return op._dense @ v
    return op._csr.matvec(v)


def matvec_transpose(op: LinearOperator, v: np.ndarray) -> np.ndarray:
    """Return ``A.T @ v``."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != op.shape[0]:
        raise DimensionError(f"operator is {op.shape[0]}x{op.shape[1]} but vector has length {v.shape}")
    if op._dense is not None:
        return v @ op._dense
    return op._csr.rmatvec(v)


# ---------------------------------------------------------------------------
# LU with partial pivoting
# ---------------------------------------------------------------------------

PIVOT_FLOOR = 1e-300


@dataclass(frozen=True)
class LuFactor:
    """Packed ``P A = L U``; ``perm[i]`` is the row of ``A`` placed at row ``i``."""

    lu: np.ndarray
    perm: np.ndarray
    singular: bool

    @property
    def L(self) -> np.ndarray:
        return np.tril(self.lu, -1) + np.eye(self.lu.shape[0])

    @property
    def U(self) -> np.ndarray:
        return np.triu(self.lu)

    @property
    def P(self) -> np.ndarray:
        return np.eye(self.lu.shape[0])[self.perm]


def lu_factor(a) -> LuFactor:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"lu_factor needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    lu = a.copy()
    perm = np.arange(n)
    singular = False
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        pivot = lu[k, k]
        if not abs(pivot) >= PIVOT_FLOOR:
            singular = True
            continue
        lu[k + 1:, k] /= pivot
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    lu.setflags(write=False)
    perm.setflags(write=False)
    return LuFactor(lu, perm, singular)


def lu_solve(f: LuFactor, b) -> np.ndarray:
    if f.singular:
        raise SingularMatrixError("matrix is singular to working precision")
    b = np.asarray(b, dtype=np.float64)
    n = f.lu.shape[0]
    if b.shape != (n,):
        raise DimensionError(f"factor is {n}x{n} but right-hand side has shape {b.shape}")
    lu = f.lu
    y = b[f.perm].copy()
    for i in range(1, n):
        y[i] -= lu[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - lu[i, i + 1:] @ y[i + 1:]) / lu[i, i]
    return y


def dense_solve(a, b) -> np.ndarray:
    """Direct solve ``a x = b`` through :func:`lu_factor`."""
    return lu_solve(lu_factor(a), b)


# ---------------------------------------------------------------------------
# Symmetric eigenproblem: cyclic Jacobi
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigDecomp:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament pairing: every (p, q) pair appears in exactly one round."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p < n and q < n:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=np.int64), np.array(qs, dtype=np.int64)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eig(a, tol: float = 1e-14, max_sweeps: int = 60) -> EigDecomp:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations are organised in tournament order so that each round applies
    ``n/2`` disjoint rotations at once. A pair is skipped when
    ``|a_pq| <= eps * sqrt(|a_pp a_qq|)``, which keeps small eigenvalues of
    well-scaled positive definite matrices (Hilbert matrices, say) relatively
    accurate. Sweeps stop once the off-diagonal Frobenius norm is at most
    ``tol * ||A||_F`` or a full sweep performs no rotation.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"sym_eig needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    fro = float(np.linalg.norm(a))
    if np.linalg.norm(a - a.T) > 1e-12 * fro:
        raise ValueError("sym_eig: matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    rounds = _round_robin(n)
    sweeps = 0

    def off_norm():
        return float(np.linalg.norm(a - np.diag(np.diagonal(a))))

    while sweeps < max_sweeps and n > 1:
        if off_norm() <= tol * fro:
            break
        rotated = 0
        for ps, qs in rounds:
            apq = a[ps, qs]
            app = a[ps, ps]
            aqq = a[qs, qs]
            active = np.abs(apq) > EPS * np.sqrt(np.abs(app * aqq))
            active &= np.abs(apq) > PIVOT_FLOOR
            if not active.any():
                continue
            ps, qs = ps[active], qs[active]
            apq, app, aqq = apq[active], app[active], aqq[active]
            rotated += ps.size
            theta = (aqq - app) / (2.0 * apq)
            with np.errstate(over="ignore"):
                big = np.abs(theta) > 1e150
                t = np.where(
                    big,
                    0.5 / np.where(big, theta, 1.0),
                    np.sign(theta + (theta == 0)) / (np.abs(theta) + np.sqrt(theta * theta + 1.0)),
                )
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # columns, then rows: A <- J^T A J
            col_p = a[:, ps].copy()
            col_q = a[:, qs]
            a[:, ps] = c * col_p - s * col_q
            a[:, qs] = s * col_p + c * col_q
            row_p = a[ps, :].copy()
            row_q = a[qs, :]
            a[ps, :] = c[:, None] * row_p - s[:, None] * row_q
            a[qs, :] = s[:, None] * row_p + c[:, None] * row_q
            a[ps, ps] = app - t * apq
            a[qs, qs] = aqq + t * apq
            a[ps, qs] = 0.0
            a[qs, ps] = 0.0
            vp = v[:, ps].copy()
            vq = v[:, qs]
            v[:, ps] = c * vp - s * vq
            v[:, qs] = s * vp + c * vq
        sweeps += 1
        if rotated == 0:
            break
    w = np.diagonal(a).copy()
    order = np.argsort(w, kind="stable")
    return EigDecomp(w[order], v[:, order], sweeps)


def cond2(a) -> float:
    """2-norm condition number of a symmetric matrix, ``max|lambda| / min|lambda|``."""
    lam = np.abs(sym_eig(a, tol=0.0).eigenvalues)
    lo = float(lam.min())
    if lo == 0.0:
        return math.inf
    return float(lam.max()) / lo


# ---------------------------------------------------------------------------
# Householder QR
# ---------------------------------------------------------------------------


def householder_qr(a) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR of an ``m x n`` matrix with ``m >= n``: ``Q`` is ``m x n``, ``R`` is ``n x n``."""
    r = np.array(a, dtype=np.float64)
    if r.ndim != 2:
        raise DimensionError("householder_qr needs a 2-D array")
    m, n = r.shape
    if m < n:
        raise DimensionError(f"householder_qr needs rows >= cols, got {m}x{n}")
    reflectors = []
    for k in range(n):
        x = r[k:, k]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            reflectors.append(None)
            continue
        alpha = -norm_x if x[0] >= 0 else norm_x
        v = x.copy()
        v[0] -= alpha
        v /= np.linalg.norm(v)
        r[k:, k:] -= 2.0 * np.outer(v, v @ r[k:, k:])
        r[k + 1:, k] = 0.0
        reflectors.append(v)
    q = np.eye(m, n)
    for k in range(n - 1, -1, -1):
        v = reflectors[k]
        if v is not None:
            q[k:, :] -= 2.0 * np.outer(v, v @ q[k:, :])
    return q, np.triu(r[:n, :])


# ---------------------------------------------------------------------------
# Truncated 2x2 least squares
# ---------------------------------------------------------------------------


def solve_ls_2x2(g, h, rel_tol: float = 1e-14) -> np.ndarray:
    """Minimum-norm solution of the symmetric PSD 2x2 system ``g c = h``.

    ``g`` is diagonalised in closed form; eigen-directions whose eigenvalue is
    not above ``rel_tol`` times the largest one are dropped.
    """
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    a, b, d = float(g[0, 0]), 0.5 * (float(g[0, 1]) + float(g[1, 0])), float(g[1, 1])
    if not all(math.isfinite(z) for z in (a, b, d, h[0], h[1])):
        return np.zeros(2)
    if b == 0.0:
        lam = (a, d)
        vecs = ((1.0, 0.0), (0.0, 1.0))
    else:
        theta = (d - a) / (2.0 * b)
        if abs(theta) > 1e150:
            t = 0.5 / theta
        else:
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
        c = 1.0 / math.sqrt(t * t + 1.0)
        s = t * c
        lam = (a - t * b, d + t * b)
        vecs = ((c, -s), (s, c))
    lam_max = max(lam)
    out = np.zeros(2)
    if not lam_max > 0.0:
        return out
    for lk, (v0, v1) in zip(lam, vecs):
        if lk > rel_tol * lam_max:
            coef = (v0 * h[0] + v1 * h[1]) / lk
            out[0] += coef * v0
            out[1] += coef * v1
    return out
