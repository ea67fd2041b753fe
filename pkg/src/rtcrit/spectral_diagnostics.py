"""Dense oracle: spectra, the inf-sup constant theta, Riesz projectors and the
constants that govern the Newton and power-iteration convergence theory.

Everything here works on ``DenseOperator``; vectors are stored in field
coordinates (not the sigma-weighted ones) and normalized in the sigma norm.
"""
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (CertificateFail, ContourHitsSpectrum, DegenerateGap, NoConvergence,
                     UnsupportedP)
from .resolvent_quadrature import ContourSpec
from .source_solver import CertifiedResult
from .transport_ops import DenseOperator


class DenseHarness:
    """Exact applications of a dense operator behind the solver interface."""

    def __init__(self, A, shape=None):
        if not isinstance(A, DenseOperator):
            A = DenseOperator.plain(A)
        self.A = A
        self.At = A.adjoint().matrix
        self.shape = shape or A.field_shape
        self.c_applications = 0

    def _apply(self, M, f):
        self.c_applications += 1
        v = (M @ np.ravel(f)).reshape(self.shape)
        return CertifiedResult(v, 0.0, 0, 1)

    def apply_C(self, f, eta=0.0):
        return self._apply(self.A.matrix, f)

    def apply_C_adjoint(self, f, eta=0.0):
        return self._apply(self.At, f)

    def inner(self, u, v):
        t = self.A.d * np.ravel(u) * np.conj(np.ravel(v))
        s = t.sum()
        return complex(s) if np.iscomplexobj(t) else float(s)

    def norm(self, u):
        return float(np.sqrt(np.sum(self.A.d * np.abs(np.ravel(u)) ** 2)))

    def norm_upper_bound(self):
        return self.A.norm()

    def dense_C(self):
        return self.A


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    mu1: float
    mu2: complex
    u1: np.ndarray
    u1_adj: np.ndarray
    u_lambda_adj: np.ndarray
    delta: float
    delta_bar: float
    q: float
    dist: float
    norm: float
    d: np.ndarray
    theta: float = None
    r0: np.ndarray = None
    u1_nonnegative: bool = True

    @property
    def lam(self):
        return 1.0 / self.mu1

    def summary(self):
        return {"mu1": self.mu1, "mu2": [self.mu2.real, self.mu2.imag],
                "abs_mu2": abs(self.mu2), "lambda0": self.lam, "delta": self.delta,
                "delta_bar": self.delta_bar, "q": self.q, "theta": self.theta,
                "dist": self.dist, "norm_C": self.norm,
                "max_eig_residual": float(np.max(self.residuals[:2])),
                "u1_nonnegative": self.u1_nonnegative,
                "leading_eigenvalues": [[float(z.real), float(z.imag)]
                                        for z in self.eigenvalues[:6]]}


def _unit(v, d, shape=None):
    v = v / np.sqrt(np.sum(d * np.abs(v) ** 2))
    return v.reshape(shape) if shape else v


def dense_eigendecompose(A, cert_tol=1e-8):
    """Eigen-decomposition of a dense operator with residual certificates."""
    if not isinstance(A, DenseOperator):
        A = DenseOperator.plain(A)
    if A.n < 2:
        raise DegenerateGap("need dimension >= 2 for a second eigenvalue")
    Aw = A.weighted()
    s = np.sqrt(A.d)
    try:
        ev, V = np.linalg.eig(Aw)
        evh, W = np.linalg.eig(Aw.conj().T)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    order = np.argsort(-np.abs(ev), kind="stable")
    ev, V = ev[order], V[:, order]
    nrm = float(np.linalg.norm(Aw, 2))
    V = V / np.linalg.norm(V, axis=0)
    res = np.linalg.norm(Aw @ V - V * ev[None, :], axis=0)
    if np.any(res[:2] > cert_tol * max(nrm, 1e-300)):
        raise CertificateFail(f"eigen-residuals {res[:2]} exceed {cert_tol}*||C||")
    mu1 = ev[0]
    if abs(mu1.imag) > 1e-10 * abs(mu1) or mu1.real <= 0:
        raise CertificateFail(f"dominant eigenvalue {mu1} is not real positive")
    mu1 = float(mu1.real)
    mu2 = complex(ev[1])
    if mu1 - abs(mu2) <= 10 * cert_tol * nrm:
        raise CertificateFail(f"dominant eigenvalue not simple: mu1={mu1}, |mu2|={abs(mu2)}")

    def adjoint_vector(target):
        j = int(np.argmin(np.abs(evh - np.conj(target))))
        w = W[:, j] / np.linalg.norm(W[:, j])
        r = np.linalg.norm(Aw.conj().T @ w - np.conj(target) * w)
        if r > cert_tol * max(nrm, 1e-300):
            raise CertificateFail(f"adjoint eigen-residual {r:.2e}")
        return w

    u1w = V[:, 0].real.copy()
    if u1w.sum() < 0:
        u1w = -u1w
    a1w = adjoint_vector(mu1).real.copy()
    if a1w.sum() < 0:
        a1w = -a1w
    aLw = adjoint_vector(mu2)
    cosang = abs(np.vdot(u1w, a1w)) / (np.linalg.norm(u1w) * np.linalg.norm(a1w))
    dist = math.sqrt(max(0.0, 1.0 - min(1.0, cosang) ** 2))
    sh = A.field_shape
    u1 = _unit(u1w / s, A.d, sh)
    return SpectralReport(
        eigenvalues=ev, residuals=res, mu1=mu1, mu2=mu2, u1=u1,
        u1_adj=_unit(a1w / s, A.d, sh), u_lambda_adj=_unit(aLw / s, A.d, sh),
        delta=1.0 - abs(mu2) / mu1, delta_bar=abs(1.0 - mu2 / mu1), q=abs(mu2) / mu1,
        dist=dist, norm=nrm, d=A.d, u1_nonnegative=bool(np.all(u1 >= -1e-10)))


def _perp_basis(v):
    """Orthonormal basis of the Euclidean complement of v."""
    n = v.size
    Q = np.linalg.svd(np.eye(n) - np.outer(v, v) / np.vdot(v, v))[0][:, : n - 1]
    return Q


def compute_theta(report, A):
    """Smallest singular value of P(I - lambda A) on the complement of u1.

    Also stores r0, the unit vector of that complement on which the projected
    operator is smallest (its right singular vector).
    """
    if not isinstance(A, DenseOperator):
        A = DenseOperator.plain(A)
    s = np.sqrt(A.d)
    u1w = s * np.ravel(report.u1)
    u1w = u1w / np.linalg.norm(u1w)
    Q = _perp_basis(u1w)
    M = Q.T @ (np.eye(A.n) - report.lam * A.weighted()) @ Q
    _, sv, Vh = np.linalg.svd(M)
    theta = float(sv[-1])
    r0 = _unit((Q @ Vh[-1].conj()) / s, A.d, A.field_shape)
    report.theta = theta
    report.r0 = r0
    return theta, r0


def sandwich_check(report, tol=1e-12):
    """Evaluate both sides of the gap/theta sandwich.

    ``pass`` is the full chain with the (1 - dist) factor on the right;
    ``pass_delta_bar`` is the chain closed by theta <= delta_bar instead.
    """
    if report.mu1 - abs(report.mu2) <= 1e-12 * report.mu1:
        raise DegenerateGap("mu1 and |mu2| coincide")
    if report.theta is None:
        raise ValueError("compute_theta must run first")
    ip = abs(np.sum(report.d * np.ravel(report.r0) * np.conj(np.ravel(report.u_lambda_adj))))
    lhs = report.delta * ip
    mid = report.delta_bar * ip
    rhs = (1.0 - report.dist) * report.delta_bar
    th = report.theta
    lower = lhs <= mid + tol and mid <= th + tol
    return {"lhs": float(lhs), "mid": float(mid), "theta": th, "rhs": float(rhs),
            "delta_bar": report.delta_bar, "dist": report.dist,
            "lower": bool(lower), "upper": bool(th <= rhs + tol),
            "pass": bool(lower and th <= rhs + tol),
            "pass_delta_bar": bool(lower and th <= report.delta_bar + tol)}


# -- Schatten-class constants -----------------------------------------------

def _carleman_sup(p, n_r=4000, n_t=721):
    """sup over z of |z|^-p log|E(z)| on a log-radial grid (approximate)."""
    r = np.logspace(-4, 4, n_r)
    t = np.linspace(0.0, np.pi, n_t)
    z = r[:, None] * np.exp(1j * t[None, :])
    with np.errstate(divide="ignore"):
        if p <= 1:
            val = np.log(np.abs(1.0 + z))
        else:
            m = math.ceil(p) - 1
            series = sum((-z) ** j / j for j in range(1, m + 1))
            val = np.log(np.abs(1.0 + z)) + series.real
    val = val / np.abs(z) ** p
    return float(np.max(val[np.isfinite(val)]))


def schatten_constants(p):
    """(a_p, b_p, approximate) for the resolvent growth bound."""
    if not p > 0:
        raise UnsupportedP(f"p must be positive, got {p}")
    if p == 1:
        return 1.0, 0.0, False
    if p == 2:
        return 0.5, 0.5, False
    if p < 1:
        return _carleman_sup(p), 0.0, True
    # any number above the sup is admissible; b_p is not available in closed form
    return 1.01 * _carleman_sup(p), None, True


@dataclass
class ConstantBudget:
    norm_C: float
    lam: float
    mu1: float
    theta: float
    gauge: float
    M_lambda: float
    M_bar: float
    beta: float
    tau: float
    beta_bar: float
    gamma: float
    omega: float
    omega_exact: float
    neighborhood_nu: float
    C_bar: float
    eps0: float
    a_eps0: float
    eps1: float
    beta_param: float
    delta_bar_power: float
    eps_power: float
    p: float
    schatten_norm_p: float
    a_p: float
    b_p: float
    a_p_approximate: bool
    log_resolvent_bound: float
    log_M_schatten: float
    ell0: int
    M_eps: float
    ell0_general: int
    extras: dict = field(default_factory=dict)

    def a_eps(self, eps):
        return (1.0 - eps) ** 2 * (1.0 / self.lam - eps * self.norm_C * (2.0 + eps))

    def M_nu(self, nu):
        return 1.0 + abs(nu) * self.norm_C

    def as_dict(self):
        out = asdict(self)
        for k, v in list(out.items()):
            if isinstance(v, float) and not math.isfinite(v):
                out[k] = None
        return out


def _ell0(log_delta_bar, log_M):
    if log_M is None or not math.isfinite(log_M):
        return None
    return max(0, math.ceil(log_M / -log_delta_bar))


def lipschitz_gamma(norm_C, gauge=2.0, jacobian="frechet"):
    """Lipschitz constant of (u, nu) -> DR(u, nu).

    The simple Jacobian gives sqrt(2)||C||. The exact one has the constraint
    row -(2/g2)<C u, C .>, whose variation adds (2/g2)||C||^2, so
    gamma = ||C|| sqrt(max(2, 1 + (2||C||/g2)^2)); the two agree when
    2||C|| <= g2.
    """
    if jacobian == "simple":
        return math.sqrt(2.0) * norm_C
    if jacobian != "frechet":
        raise ValueError(f"unknown jacobian {jacobian!r}")
    return norm_C * math.sqrt(max(2.0, 1.0 + (2.0 / gauge * norm_C) ** 2))


def constant_budget(report, A, beta=0.5, p=2, gauge=2.0, n_contour=128, jacobian="frechet"):
    """Evaluate every constant of the convergence theory from oracle data."""
    if not isinstance(A, DenseOperator):
        A = DenseOperator.plain(A)
    if report.theta is None:
        compute_theta(report, A)
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    a_p, b_p, approx = schatten_constants(p)
    nC = report.norm
    lam = report.lam
    th = report.theta
    M_lam = 1.0 + lam * nC
    M_bar = 1.0 + lam * nC + th / 4.0
    r = 1.0 + M_lam / th
    beta_est = math.sqrt((1.0 / th + 0.5 * r) ** 2 + 0.25 * r ** 2 * (1.0 + M_lam / 2.0) ** 2)
    tau = min(1.0 / (8.0 * nC), 2.0 * th / (25.0 * (1.0 + lam * nC + th / 4.0) * nC),
              th / (25.0 * M_bar))
    k = 2.0 * lam / (2.0 * lam - tau)
    g = 1.0 + 4.0 * M_bar / th
    beta_bar = (math.sqrt(16.0 / th ** 2 + k ** 2 * g ** 2)
                + k * g * math.sqrt(1.0 + M_bar * 4.0 * lam ** 2 / (2.0 * lam - tau) ** 2))
    gamma = lipschitz_gamma(nC, gauge, jacobian)
    nbhd_nu = th / (4.0 * nC)
    omega = min(tau, nbhd_nu, 1.0 / (3.0 * beta_bar * gamma))
    omega_exact = min(tau, nbhd_nu, 2.0 / (beta_bar * gamma))
    C_bar = lam * nC
    eps0 = 1.0 / (16.0 * nC * lam)
    eps1 = (1.0 / (8.0 * C_bar)) * min(3.0, 8.0 * th / (25.0 * M_bar))

    mu1, amu2 = report.mu1, abs(report.mu2)
    eps = beta * (mu1 - amu2)
    # (|mu2| + eps)/mu1 = 1 - (1 - beta)*Delta, the decay rate on the circle
    dbar = (amu2 + eps) / mu1
    sv = np.linalg.svd(A.weighted(), compute_uv=False)
    norm_p = float(np.sum(sv ** p) ** (1.0 / p))
    radius = amu2 + eps
    length = 2.0 * math.pi * radius
    pp = 2.0 ** (1.0 + max(p - 1.0, 0.0))
    if b_p is None:
        log_res = log_M = None
    else:
        log_res = -math.log(eps) + pp * a_p * norm_p ** p / eps ** p + b_p
        log_M = (math.log(length / (2.0 * math.pi * eps))
                 + 2.0 ** (p + 1.0 + max(p - 1.0, 0.0)) * a_p * norm_p ** p
                 / (beta * (mu1 - amu2)) ** p + b_p)
    ell0 = _ell0(math.log(dbar), log_M)
    # sharper variant with the actual resolvent maximum on the circle
    z = radius * np.exp(2j * np.pi * np.arange(n_contour) / n_contour)
    Aw = A.weighted()
    I = np.eye(A.n)
    M_eps = max(1.0 / np.linalg.svd(zz * I - Aw, compute_uv=False)[-1] for zz in z)
    ell0_gen = _ell0(math.log(dbar), math.log(length * M_eps / (2.0 * math.pi)))

    return ConstantBudget(
        norm_C=nC, lam=lam, mu1=mu1, theta=th, gauge=gauge, M_lambda=M_lam, M_bar=M_bar,
        beta=beta_est, tau=tau, beta_bar=beta_bar, gamma=gamma, omega=omega,
        omega_exact=omega_exact, neighborhood_nu=nbhd_nu, C_bar=C_bar, eps0=eps0,
        a_eps0=(1.0 - eps0) ** 2 * (1.0 / lam - eps0 * nC * (2.0 + eps0)), eps1=eps1,
        beta_param=beta, delta_bar_power=dbar, eps_power=eps, p=p, schatten_norm_p=norm_p,
        a_p=a_p, b_p=b_p if b_p is not None else math.nan, a_p_approximate=approx,
        log_resolvent_bound=log_res if log_res is not None else math.nan,
        log_M_schatten=log_M if log_M is not None else math.nan,
        ell0=ell0, M_eps=float(M_eps), ell0_general=ell0_gen,
        extras={"contour_radius": radius, "contour_length": length})


# -- Newton-related dense checks --------------------------------------------

def eigen_reference(report, gauge=2.0):
    """(u, lambda) at the solution, scaled so that ||C u||^2 = gauge."""
    return report.u1 * math.sqrt(gauge) / report.mu1, report.lam


def dense_DR(A, u, nu, gauge=2.0, jacobian="frechet"):
    """Jacobian of R at (u, nu) in sigma-weighted coordinates."""
    if not isinstance(A, DenseOperator):
        A = DenseOperator.plain(A)
    Aw = A.weighted()
    fw = Aw @ A.to_weighted(u)
    n = A.n
    J = np.zeros((n + 1, n + 1))
    J[:n, :n] = np.eye(n) - nu * Aw
    J[:n, n] = -fw
    if jacobian == "frechet":
        J[n, :n] = -(2.0 / gauge) * (Aw.T @ fw)
    elif jacobian == "simple":
        J[n, :n] = -(2.0 / gauge) * fw
    else:
        raise ValueError(f"unknown jacobian {jacobian!r}")
    return J


def verify_DR_bound(report, budget, A, n_samples=100, seed=0, radius_scale=1.0,
                    jacobian="frechet"):
    """Sample N = B(u0, tau) x B(lambda0, theta/(4||C||)); check ||DR^-1|| <= beta_bar."""
    if not isinstance(A, DenseOperator):
        A = DenseOperator.plain(A)
    rng = np.random.default_rng(seed)
    u0, lam0 = eigen_reference(report, budget.gauge)
    worst = 0.0
    values = []
    for _ in range(n_samples):
        d = rng.standard_normal(A.n)
        d /= np.linalg.norm(d)
        rad = radius_scale * budget.tau * rng.random() ** (1.0 / A.n)
        u = u0 + A.from_weighted(rad * d)
        nu = lam0 + radius_scale * budget.neighborhood_nu * (2.0 * rng.random() - 1.0)
        smin = np.linalg.svd(dense_DR(A, u, nu, budget.gauge, jacobian),
                             compute_uv=False)[-1]
        val = 1.0 / smin
        values.append(val)
        worst = max(worst, val)
    return {"pass": bool(worst <= budget.beta_bar), "worst": worst,
            "beta_bar": budget.beta_bar, "values": values}


# -- Riesz projections ------------------------------------------------------

def riesz_projection(A, spec, report=None, min_distance=1e-8):
    """E = sum_j (1/N)(zeta_j - c)(zeta_j - A)^-1, real part after a check."""
    if not isinstance(A, DenseOperator):
        A = DenseOperator.plain(A)
    ev = report.eigenvalues if report is not None else np.linalg.eigvals(A.matrix)
    gap = np.min(np.abs(np.abs(ev - spec.center) - spec.radius))
    if gap < min_distance * max(1.0, spec.radius):
        raise ContourHitsSpectrum(f"contour passes within {gap:.2e} of an eigenvalue")
    I = np.eye(A.n)
    E = np.zeros((A.n, A.n), dtype=complex)
    for zj in spec.nodes():
        E += (zj - spec.center) * np.linalg.solve(zj * I - A.matrix, I)
    E /= spec.n_nodes
    if np.max(np.abs(E.imag)) > 1e-8 * max(1.0, np.max(np.abs(E.real))):
        raise ContourHitsSpectrum("projector has a significant imaginary part")
    return DenseOperator(E.real, A.d, A.shape)


def spectral_projectors(report, A, beta=0.5, n_nodes=256):
    """E(mu1) and E(sigma_>1) from two circles."""
    mu1, amu2 = report.mu1, abs(report.mu2)
    eps = beta * (mu1 - amu2)
    e1 = riesz_projection(A, ContourSpec(mu1, 0.5 * (mu1 - amu2), n_nodes), report)
    e2 = riesz_projection(A, ContourSpec(0.0, amu2 + eps, n_nodes), report)
    return e1, e2


def norm_equivalence(E1, E2):
    """(c1, C1) with c1 |||u||| <= ||u|| <= C1 |||u|||, |||u||| = ||E1 u|| + ||E2 u||."""
    return 1.0 / (E1.norm() + E2.norm()), 1.0
