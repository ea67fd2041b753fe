"""Matrix-free transport operators on a slab and their dense counterparts.

T is the implicit upwind transport stencil, K and F the scattering and fission
integral operators, B = T - K. Adjoints are taken in the sigma-weighted inner
product: A* = S^-1 A^+ S where A^+ is the adjoint in the plain measure h*w_k
and S multiplies by sigma.
"""
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DimensionCap, ShapeMismatch
from .phase_model import weights

DEFAULT_DIMENSION_CAP = 4096
# largest n_cells^2 * n_ord for which the sweep is stored as per-ordinate propagators
PROPAGATOR_LIMIT = 2_000_000


@dataclass
class DenseOperator:
    """Square matrix acting on flattened fields, with its inner-product weights.

    ``d`` holds the diagonal of the inner product (h*w_k*sigma for fields on a
    grid, ones for synthetic matrices).
    """
    matrix: np.ndarray
    d: np.ndarray
    shape: tuple = None

    @classmethod
    def plain(cls, A):
        A = np.asarray(A, dtype=float)
        return cls(A, np.ones(A.shape[0]))

    @property
    def n(self):
        return self.matrix.shape[0]

    def weighted(self):
        """The matrix in coordinates where the inner product is Euclidean."""
        s = np.sqrt(self.d)
        return s[:, None] * self.matrix / s[None, :]

    def adjoint(self):
        return DenseOperator(self.matrix.T.conj() * self.d[None, :] / self.d[:, None], self.d,
                             self.shape)

    def norm(self):
        return float(np.linalg.norm(self.weighted(), 2))

    def to_weighted(self, x):
        return np.sqrt(self.d) * np.ravel(x)

    def from_weighted(self, y):
        x = np.asarray(y) / np.sqrt(self.d)
        return x.reshape(self.shape) if self.shape else x

    @property
    def field_shape(self):
        return self.shape or (self.n,)


class OperatorSet:
    def __init__(self, grid, optics, dimension_cap=DEFAULT_DIMENSION_CAP):
        if optics.sigma.shape != grid.shape:
            raise ShapeMismatch(f"optics {optics.sigma.shape} vs grid {grid.shape}")
        self.grid = grid
        self.optics = optics
        self.dimension_cap = dimension_cap
        self.counts = Counter()
        self._a = np.abs(grid.mu) / grid.h
        self._den = self._a[None, :] + optics.sigma
        half = grid.n_ord // 2
        self._neg = slice(0, half)
        self._pos = slice(half, grid.n_ord)
        # quadrature weight folded onto the summed index
        self._kw_in = optics.kappa * grid.w[None, :, None]
        self._kw_out = optics.kappa * grid.w[None, None, :]
        self._fw_in = optics.phi * grid.w[None, :, None]
        self._fw_out = optics.phi * grid.w[None, None, :]
        self.d = weights(grid, optics)
        self.sigma = optics.sigma
        self._prop = None
        if grid.n_cells ** 2 * grid.n_ord <= PROPAGATOR_LIMIT:
            self._prop = self._propagators()

    # -- helpers -----------------------------------------------------------
    def _check(self, u):
        u = np.asarray(u)
        if u.shape != self.grid.shape:
            raise ShapeMismatch(f"field {u.shape} does not match grid {self.grid.shape}")
        return u

    def inner(self, u, v):
        t = self.d * u * np.conj(v)
        s = t.sum(axis=1).sum()
        return complex(s) if np.iscomplexobj(t) else float(s)

    def norm(self, u):
        return float(np.sqrt(np.sum(self.d * np.abs(u) ** 2)))

    def zeros(self, dtype=float):
        return np.zeros(self.grid.shape, dtype=dtype)

    def _propagators(self):
        """Per-ordinate lower-triangular Green's matrices of the sweep.

        For mu > 0, u_i = c_i u_{i-1} + q_i/den_i with c_i = a/den_i, so
        u_i = sum_{j<=i} exp(L_i - L_j) q_j/den_j with L the cumulative sum of
        log c (logs keep thick cells from underflowing the products).
        """
        n, m = self.grid.n_cells, self.grid.n_ord
        P = np.zeros((m, n, n))
        low = np.tril(np.ones((n, n), dtype=bool))
        for k in range(m):
            den = self._den[:, k]
            if k >= m // 2:
                order = np.arange(n)
            else:
                order = np.arange(n)[::-1]
            dk = den[order]
            L = np.cumsum(np.log(self._a[k] / dk))
            G = np.where(low, np.exp(np.where(low, L[:, None] - L[None, :], 0.0)), 0.0)
            G = G / dk[None, :]
            P[k][np.ix_(order, order)] = G
        return P

    # -- transport ---------------------------------------------------------
    def solve_T(self, q):
        """Upwind sweep: left to right for mu > 0, right to left for mu < 0."""
        q = self._check(q)
        self.counts["Tinv"] += 1
        if self._prop is not None:
            return np.einsum("kij,jk->ik", self._prop, q)
        return self._sweep(q)

    def _sweep(self, q):
        n = self.grid.n_cells
        a, den, P, N = self._a, self._den, self._pos, self._neg
        u = np.empty(q.shape, dtype=np.result_type(q, float))
        up = np.zeros(u[0, P].shape, dtype=u.dtype)
        un = np.zeros(u[0, N].shape, dtype=u.dtype)
        for t in range(n):
            j = n - 1 - t
            up = (a[P] * up + q[t, P]) / den[t, P]
            un = (a[N] * un + q[j, N]) / den[j, N]
            u[t, P] = up
            u[j, N] = un
        return u

    def apply_T(self, u):
        u = self._check(u)
        self.counts["T"] += 1
        a, P, N = self._a, self._pos, self._neg
        out = self._den * u
        out[1:, P] -= a[P] * u[:-1, P]
        out[:-1, N] -= a[N] * u[1:, N]
        return out

    def solve_T_transpose(self, y):
        """Inverse of the plain-measure adjoint of T: sweeps run downwind."""
        y = self._check(y)
        self.counts["Tinv_adj"] += 1
        if self._prop is not None:
            return np.einsum("kji,jk->ik", self._prop, y)
        return self._sweep_transpose(y)

    def _sweep_transpose(self, y):
        n = self.grid.n_cells
        a, den, P, N = self._a, self._den, self._pos, self._neg
        z = np.empty(y.shape, dtype=np.result_type(y, float))
        zp = np.zeros(z[0, P].shape, dtype=z.dtype)
        zn = np.zeros(z[0, N].shape, dtype=z.dtype)
        for t in range(n):
            j = n - 1 - t
            zp = (a[P] * zp + y[j, P]) / den[j, P]
            zn = (a[N] * zn + y[t, N]) / den[t, N]
            z[j, P] = zp
            z[t, N] = zn
        return z

    def apply_T_transpose(self, z):
        z = self._check(z)
        a, P, N = self._a, self._pos, self._neg
        out = self._den * z
        out[:-1, P] -= a[P] * z[1:, P]
        out[1:, N] -= a[N] * z[:-1, N]
        return out

    # -- integral operators ------------------------------------------------
    def apply_K(self, u):
        u = self._check(u)
        self.counts["K"] += 1
        return np.einsum("ijk,ij->ik", self._kw_in, u)

    def apply_F(self, u):
        u = self._check(u)
        self.counts["F"] += 1
        return np.einsum("ijk,ij->ik", self._fw_in, u)

    def apply_K_transpose(self, v):
        v = self._check(v)
        self.counts["K_adj"] += 1
        return np.einsum("ijk,ik->ij", self._kw_out, v)

    def apply_F_transpose(self, v):
        v = self._check(v)
        self.counts["F_adj"] += 1
        return np.einsum("ijk,ik->ij", self._fw_out, v)

    def apply_B(self, u):
        return self.apply_T(u) - self.apply_K(u)

    def apply_adjoint(self, which, v):
        """sigma-adjoint of T^-1, K, F or B applied to v."""
        v = self._check(v)
        sv = self.sigma * v
        if which in ("Tinv", "T^-1"):
            out = self.solve_T_transpose(sv)
        elif which == "K":
            out = self.apply_K_transpose(sv)
        elif which == "F":
            out = self.apply_F_transpose(sv)
        elif which == "B":
            out = self.apply_T_transpose(sv) - self.apply_K_transpose(sv)
        elif which == "T":
            out = self.apply_T_transpose(sv)
        else:
            raise ValueError(f"no adjoint for {which!r}")
        return out / self.sigma

    # -- dense assembly ----------------------------------------------------
    def materialize(self, which):
        """Dense matrix of T, Tinv, K, F, B or C (C by dense solve B^-1 F)."""
        n = self.grid.size
        if n > self.dimension_cap:
            raise DimensionCap(f"dimension {n} exceeds cap {self.dimension_cap}")
        if which == "C":
            B = self.materialize("B").matrix
            F = self.materialize("F").matrix
            return DenseOperator(np.linalg.solve(B, F), self.d.ravel(), self.grid.shape)
        ops = {"T": self.apply_T, "Tinv": self.solve_T, "K": self.apply_K,
               "F": self.apply_F, "B": self.apply_B}
        if which not in ops:
            raise ValueError(f"cannot materialize {which!r}")
        saved = self.counts.copy()
        A = np.empty((n, n))
        e = self.zeros()
        flat = e.reshape(-1)
        for j in range(n):
            flat[j] = 1.0
            A[:, j] = ops[which](e).ravel()
            flat[j] = 0.0
        self.counts = saved
        return DenseOperator(A, self.d.ravel(), self.grid.shape)

    def cell_block_norm(self, table, transpose=False, scale=None):
        """Exact sigma-norm of a cell-local integral operator.

        ``table`` is a kernel (n_cells, n_ord, n_ord) in [in, out] layout. With
        ``scale`` the output is divided by it (used for sigma^-1 F^+).
        """
        w = self.grid.w
        best = 0.0
        for i in range(self.grid.n_cells):
            if transpose:
                A = table[i] * w[None, :]          # out index j, summed k
            else:
                A = (table[i] * w[:, None]).T      # out index k, summed k'
            if scale is not None:
                A = A / scale[i][:, None]
            s = np.sqrt(w * self.sigma[i])
            best = max(best, np.linalg.norm(s[:, None] * A / s[None, :], 2))
        return float(best)
