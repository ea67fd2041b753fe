"""Contour quadrature for M^-1 C u = (I - lambda C)^-1 C u near the dominant
eigenvalue, built from shifted solves (zeta - C) w = u on a circle.

With mu = 1/lambda at the circle centre, f(z) = mu z/(mu - z) has its pole
inside the contour. The trapezoid sum of f(zeta) R(zeta) u therefore does not
converge to f(C) u but to

    J = -mu u - f(C)(I - E1) u,

where E1 is the spectral projector of the eigenvalue inside the circle. The
same N resolvents also give E1 u and C E1 u = mu1 E1 u, so f(C) u is recovered
as f(mu1) E1 u - mu u - J. The raw sum is available as ``contour_sum``.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .errors import ContourDegenerate, ImaginaryResidue, ShiftTooClose
from .source_solver import CertifiedResult


@dataclass(frozen=True)
class ContourSpec:
    center: complex
    radius: float
    n_nodes: int

    def __post_init__(self):
        if not self.radius > 1e-14 * max(1.0, abs(self.center)):
            raise ContourDegenerate(f"radius {self.radius} is not positive")
        if self.n_nodes < 4:
            raise ContourDegenerate(f"need at least 4 nodes, got {self.n_nodes}")

    def nodes(self):
        j = np.arange(self.n_nodes)
        return self.center + self.radius * np.exp(2j * np.pi * j / self.n_nodes)

    def weights(self):
        # (1/2 pi i) dzeta on the circle, trapezoid rule
        return (self.nodes() - self.center) / self.n_nodes


def default_nodes(eps_target):
    return math.ceil(8.0 / 3.0 * math.log(1.0 / eps_target)) + 8


def contour_for(mu_bar, mu1, delta_bar, n_nodes):
    """Circle of radius mu1*delta_bar/2 around mu_bar."""
    return ContourSpec(complex(mu_bar), 0.5 * mu1 * delta_bar, n_nodes)


def _dense_C(ctx):
    if not hasattr(ctx, "_lu_cache"):
        ctx._lu_cache = {}
    return ctx.dense_C()


def _apply_complex(ctx, w, eta):
    """C w for complex w with total error <= eta."""
    re = ctx.apply_C(np.ascontiguousarray(w.real), eta / 2).value
    im = ctx.apply_C(np.ascontiguousarray(w.imag), eta / 2).value
    return re + 1j * im


def _dense_solve(ctx, zeta, rhs):
    A = _dense_C(ctx)
    lu = ctx._lu_cache.get(zeta)
    if lu is None:
        lu = scipy.linalg.lu_factor(zeta * np.eye(A.n) - A.matrix)
        ctx._lu_cache[zeta] = lu
    return scipy.linalg.lu_solve(lu, np.ravel(rhs)).reshape(np.shape(rhs))


def _krylov_solve(ctx, zeta, rhs, x0, tol):
    """GMRES on T^-1 (zeta B - F) w = T^-1 B rhs, exact matvecs."""
    ops = ctx.ops
    shape = ops.grid.shape
    s = np.sqrt(ops.d).ravel()

    def mv(x):
        w = (x / s).reshape(shape)
        y = zeta * (w - ops.solve_T(ops.apply_K(w))) - ops.solve_T(ops.apply_F(w))
        return s * y.ravel()

    n = ops.grid.size
    A = spla.LinearOperator((n, n), matvec=mv, dtype=complex)
    b = rhs - ops.solve_T(ops.apply_K(rhs))
    bw = s * b.ravel()
    x0w = None if x0 is None else s * x0.ravel()
    x, info = spla.gmres(A, bw, x0=x0w, rtol=tol, atol=0.0, restart=min(n, 200), maxiter=20)
    return (x / s).reshape(shape)


def shifted_resolve(ctx, zeta, u_bar, eta, backend="dense", max_refine=4):
    """Solve (zeta - C) w = u_bar and certify ||zeta w - C w - u_bar||_sigma <= eta.

    The certificate is an explicit post-check with C applied at eta/4.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    u_bar = np.asarray(u_bar)
    zeta = complex(zeta)
    if not np.any(u_bar):
        return CertifiedResult(np.zeros(u_bar.shape, dtype=complex), 0.0, 0, 0)
    w = None
    rhs = u_bar.astype(complex)
    nu = ctx.norm(u_bar)
    applications = 0
    for it in range(max_refine):
        if backend == "dense":
            dw = _dense_solve(ctx, zeta, rhs)
        elif backend == "krylov":
            dw = _krylov_solve(ctx, zeta, rhs, None, min(1e-3, 0.05 * eta / max(nu, 1e-300)))
        else:
            raise ValueError(f"unknown backend {backend!r}")
        w = dw if w is None else w + dw
        cw = _apply_complex(ctx, w, eta / 4)
        applications += 2
        res = zeta * w - cw - u_bar
        r = ctx.norm(res)
        if r + eta / 4 <= eta:
            return CertifiedResult(w, r + eta / 4, it + 1, applications)
        rhs = -res
    raise ShiftTooClose(f"residual {r:.3e} after {max_refine} refinements (eta {eta:.3e}); "
                        f"zeta = {zeta} is too close to the spectrum")


def _resolvents(ctx, spec, u_bar, eta_inner, backend):
    out = []
    for z in spec.nodes():
        out.append(shifted_resolve(ctx, z, u_bar, eta_inner, backend).value)
    return out


def _real(ctx, v, tol, what):
    im = ctx.norm(v.imag)
    if im > tol:
        raise ImaginaryResidue(f"{what}: imaginary part {im:.3e} exceeds {tol:.3e}")
    return np.ascontiguousarray(v.real)


def contour_sum(ctx, spec, lambda_bar, u_bar, eta_inner, backend="dense"):
    """Trapezoid sum of (mu z/(mu - z)) R(z) u_bar with mu = 1/lambda_bar."""
    mu = 1.0 / lambda_bar
    w = spec.weights()
    total = 0
    for wj, zj, rj in zip(w, spec.nodes(), _resolvents(ctx, spec, u_bar, eta_inner, backend)):
        total = total + wj * (mu * zj / (mu - zj)) * rj
    scale = 10 * spec.n_nodes * eta_inner * max(1.0, abs(mu)) * (1 + abs(mu) / spec.radius)
    return _real(ctx, total, scale, "contour sum")


def resolvent_terms(ctx, spec, lambda_bar, u_bar, eta_inner, backend="dense"):
    """E1 u, the eigenvalue estimate mu1 and the raw sum J from one set of solves."""
    mu = 1.0 / lambda_bar
    if abs(mu - spec.center) > 1e-12 * abs(mu) + 0.25 * spec.radius:
        raise ContourDegenerate("lambda_bar must be close to 1/center")
    res = _resolvents(ctx, spec, u_bar, eta_inner, backend)
    w = spec.weights()
    z = spec.nodes()
    P = sum(wj * rj for wj, rj in zip(w, res))
    Q = sum(wj * zj * rj for wj, zj, rj in zip(w, z, res))
    J = sum(wj * (mu * zj / (mu - zj)) * rj for wj, zj, rj in zip(w, z, res))
    n = spec.n_nodes
    tolP = 10 * n * eta_inner * spec.radius
    tolJ = 10 * n * eta_inner * max(1.0, abs(mu)) * (1 + abs(mu) / spec.radius) * spec.radius
    P = _real(ctx, P, max(tolP, 1e-12 * ctx.norm(P)), "projection")
    Q = _real(ctx, Q, max(tolP * abs(spec.center), 1e-12 * ctx.norm(Q)), "projection")
    J = _real(ctx, J, max(tolJ, 1e-12 * ctx.norm(J)), "contour sum")
    pp = ctx.inner(P, P)
    mu1 = ctx.inner(Q, P) / pp if pp > 0 else spec.center.real
    return {"P": P, "mu1": float(np.real(mu1)), "J": J, "mu": mu}


def apply_resolventC(ctx, spec, lambda_bar, u_bar, eta_inner, backend="dense"):
    """(I - lambda_bar C)^-1 C u_bar from N shifted solves on the contour."""
    t = resolvent_terms(ctx, spec, lambda_bar, u_bar, eta_inner, backend)
    mu, mu1 = t["mu"], t["mu1"]
    f1 = mu * mu1 / (mu - mu1)
    return f1 * t["P"] - mu * np.asarray(u_bar) - t["J"]
