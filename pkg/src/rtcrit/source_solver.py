"""Certified source solves and applications of C = B^-1 F.

The fixed point u <- T^-1 (K u + q) contracts with factor rho in the sigma
norm, so rho/(1-rho)*||u_{k+1} - u_k|| bounds the distance of u_{k+1} to the
exact solution.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import IterationCap, NotContractive
from .phase_model import check_assumptions, compute_rho


@dataclass
class CertifiedResult:
    value: np.ndarray
    bound: float
    iterations: int
    c_applications: int = 0


class SourceSolver:
    def __init__(self, ops, rho=None):
        self.ops = ops
        self.rho = compute_rho(ops.grid, ops.optics) if rho is None else float(rho)
        if not self.rho < 1:
            raise NotContractive(f"rho = {self.rho} >= 1")
        # exact sigma-norms of the cell-local maps applied after the solve
        self._F_adj_norm = ops.cell_block_norm(ops.optics.phi, transpose=True,
                                               scale=ops.sigma)
        self.c_applications = 0

    @property
    def shape(self):
        return self.ops.grid.shape

    def inner(self, u, v):
        return self.ops.inner(u, v)

    def norm(self, u):
        return self.ops.norm(u)

    def norm_upper_bound(self):
        """M*sqrt(max sigma/min sigma)/alpha, an a priori bound on ||C||_sigma."""
        rep = check_assumptions(self.ops.grid, self.ops.optics)
        sig = self.ops.sigma
        return rep.M * math.sqrt(sig.max() / sig.min()) / rep.alpha

    def dense_C(self):
        """Dense C by LU (oracle use only), cached."""
        if getattr(self, "_dense", None) is None:
            self._dense = self.ops.materialize("C")
        return self._dense

    def _fixed_point(self, q, eta, sweep, scatter):
        ops, rho = self.ops, self.rho
        if not eta > 0:
            raise ValueError("eta must be positive")
        u = sweep(q)
        if not np.any(u):
            return CertifiedResult(u, 0.0, 1)
        if rho == 0:
            return CertifiedResult(u, 0.0, 1)
        cap = None
        k = 0
        while True:
            nxt = sweep(scatter(u) + q)
            k += 1
            step = ops.norm(nxt - u)
            if cap is None:
                if step == 0:
                    return CertifiedResult(nxt, 0.0, k)
                cap = max(1, math.ceil(math.log(eta * (1 - rho) / step) / math.log(rho))) + 10
            bound = rho / (1 - rho) * step
            u = nxt
            if bound <= eta:
                return CertifiedResult(u, bound, k)
            if k >= cap:
                raise IterationCap(f"no certificate after {k} sweeps (bound {bound:.3e} > {eta:.3e})")

    def solve_B(self, q, eta):
        """[B^-1, q; eta]: value with ||B^-1 q - value||_sigma <= bound <= eta."""
        ops = self.ops
        return self._fixed_point(ops._check(q), eta, ops.solve_T, ops.apply_K)

    def solve_B_transpose(self, y, eta):
        """Solve the plain-measure adjoint system; contracts with the same rho."""
        ops = self.ops
        return self._fixed_point(ops._check(y), eta, ops.solve_T_transpose,
                                 ops.apply_K_transpose)

    def apply_C(self, f, eta):
        g = self.ops.apply_F(f)
        res = self.solve_B(g, eta)
        self.c_applications += 1
        res.c_applications = 1
        return res

    def apply_C_adjoint(self, f, eta):
        """sigma-adjoint C* f = sigma^-1 F^+ B^-+ (sigma f)."""
        ops = self.ops
        scale = self._F_adj_norm
        if scale == 0:
            return CertifiedResult(ops.zeros(), 0.0, 0, 1)
        res = self.solve_B_transpose(ops.sigma * f, eta / scale)
        val = ops.apply_F_transpose(res.value) / ops.sigma
        self.c_applications += 1
        return CertifiedResult(val, res.bound * scale, res.iterations, 1)
