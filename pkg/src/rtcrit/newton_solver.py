"""Newton's method for the eigenpair as a zero of

    R(u, nu) = (u - nu C u, 1 - ||C u||^2 / g2),

with exact dense updates (oracle) or matrix-free updates obtained by steepest
descent on the linearized least-squares problem. Errors are measured in the
product norm sqrt(||u||_sigma^2 + nu^2).

The derivative of the second component is -(2/g2) <C u, C du>. A frequently
quoted simplification, -<C u, du>, agrees with it only in special cases and
turns Newton into a linearly convergent chord-type method; it is available as
``jacobian="simple"`` for comparison.
"""
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DescentStall, Divergence, SingularSystem


@dataclass
class EigenIterate:
    u: np.ndarray
    lam: float
    gauge: float = 2.0

    def __add__(self, other):
        du, dl = other
        return EigenIterate(self.u + du, self.lam + dl, self.gauge)


def pair_norm(solver, u, lam):
    return math.sqrt(solver.norm(u) ** 2 + float(lam) ** 2)


def from_power_iterate(solver, a, gauge=2.0, eta=1e-12):
    """Scale a normalized power iterate so that ||C u||^2 = gauge; lambda = 1/rayleigh."""
    b = solver.apply_C(a, eta).value
    nb = solver.norm(b)
    rq = float(np.real(solver.inner(b, a))) / solver.norm(a) ** 2
    return EigenIterate(a * math.sqrt(gauge) / nb, 1.0 / rq, gauge)


# -- tolerance schedules ----------------------------------------------------

@dataclass
class Quadratic:
    omega: float
    beta_bar: float
    gamma: float
    name = "quad"

    def eta(self, e_hat):
        return min(self.omega / 2, 0.5 * self.beta_bar * self.gamma * e_hat ** 2)


@dataclass
class Linear:
    omega: float
    zeta: float = 0.5
    name = "lin"

    def __post_init__(self):
        if not 0 < self.zeta < 1:
            raise ValueError("zeta must lie in (0, 1)")
        if not self.omega > 0:
            raise ValueError("omega must be positive")

    def eta(self, e_hat):
        return min(self.omega / 2, 0.5 * self.zeta * e_hat)


@dataclass
class Switching:
    """Linear until the error estimate drops below omega/4, then quadratic."""
    linear: Linear
    quadratic: Quadratic
    name = "switch"

    def eta(self, e_hat):
        if e_hat <= self.linear.omega / 4:
            return self.quadratic.eta(e_hat)
        return self.linear.eta(e_hat)


# -- residual and derivative ------------------------------------------------

def residual_R(solver, it, eta):
    """(R1, R2, bound, C u) with bound >= error of the computed residual."""
    c = solver.apply_C(it.u, eta).value
    R1 = it.u - it.lam * c
    nc = solver.norm(c)
    R2 = 1.0 - nc ** 2 / it.gauge
    bound = math.hypot(abs(it.lam) * eta, (2 * nc + eta) * eta / it.gauge)
    return R1, R2, bound, c


def residual_norm(solver, R1, R2):
    return math.sqrt(solver.norm(R1) ** 2 + R2 ** 2)


def apply_DR(solver, base, fbar, du, dnu, eta, jacobian="frechet"):
    """DR(base)(du, dnu) = (du - lam C du - dnu fbar, -(2/g2) <fbar, C du>).

    With ``jacobian="simple"`` the second entry is -(2/g2) <fbar, du>.
    """
    cdu = solver.apply_C(du, eta).value
    first = du - base.lam * cdu - dnu * fbar
    if jacobian == "frechet":
        second = -(2.0 / base.gauge) * solver.inner(fbar, cdu)
    elif jacobian == "simple":
        second = -(2.0 / base.gauge) * solver.inner(fbar, du)
    else:
        raise ValueError(f"unknown jacobian {jacobian!r}")
    return first, float(np.real(second))


# -- updates ------------------------------------------------------------------

def _constraint_row(Aw, fw, jacobian):
    if jacobian == "frechet":
        return Aw.T @ fw
    if jacobian == "simple":
        return fw
    raise ValueError(f"unknown jacobian {jacobian!r}")


def _saddle_matrix(Aw, xw, lam, gauge, jacobian="frechet"):
    n = Aw.shape[0]
    fw = Aw @ xw
    J = np.zeros((n + 1, n + 1))
    J[:n, :n] = np.eye(n) - lam * Aw
    J[:n, n] = -fw
    J[n, :n] = -(2.0 / gauge) * _constraint_row(Aw, fw, jacobian)
    rhs = -np.concatenate([xw - lam * fw, [1.0 - fw @ fw / gauge]])
    return J, rhs


def newton_update_oracle(A, it, jacobian="frechet"):
    """Exact Newton update from the dense bordered system."""
    Aw = A.weighted()
    xw = A.to_weighted(it.u)
    lam = it.lam
    for attempt in range(2):
        J, rhs = _saddle_matrix(Aw, xw, lam, it.gauge, jacobian)
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] > 1e-15 * sv[0]:
            sol = np.linalg.solve(J, rhs)
            du = A.from_weighted(sol[:-1]).reshape(np.shape(it.u))
            return du, float(sol[-1]) + (lam - it.lam)
        if attempt == 0:
            warnings.warn("bordered Newton system is singular; perturbing lambda by 1e-12")
            lam = lam + 1e-12
    raise SingularSystem("bordered Newton system is singular")


def elimination_update(A, it, jacobian="frechet"):
    """Update from block elimination: du = dl z - u with z = M^-1 f and

        dl = (R2 + k <h, u>) / (k <h, z>),  k = 2/g2,

    where h is the constraint row (C* f, or f for the simple Jacobian, which
    gives dl = (1 + <f,u> - |f|^2/2)/<f, M^-1 f> for g2 = 2).
    """
    Aw = A.weighted()
    xw = A.to_weighted(it.u)
    fw = Aw @ xw
    h = _constraint_row(Aw, fw, jacobian)
    M = np.eye(A.n) - it.lam * Aw
    z = np.linalg.solve(M, fw)
    k = 2.0 / it.gauge
    dl = (1.0 - fw @ fw / it.gauge + k * (h @ xw)) / (k * (h @ z))
    du = A.from_weighted(dl * z - xw).reshape(np.shape(it.u))
    return du, float(dl)


@dataclass
class DescentResult:
    du: np.ndarray
    dlam: float
    residual: float
    iterations: int
    c_applications: int
    q_history: list = field(default_factory=list)


def _perp(solver, v, f, ff):
    return v - (solver.inner(v, f) / ff) * f


def newton_update_descent(solver, it, eta_n, beta_hat, max_iter=5000, stall_window=20,
                          stall_ratio=1e-3):
    """Approximate Newton update by projected steepest descent.

    Minimizes Q = 1/2 ||J(w, nu) + R||^2 over w in w0 + <h>^perp, where h = C* f
    is the constraint row and w0 satisfies that row exactly, so the second
    residual component stays zero and only the first needs to be driven down.
    Stops once ||r|| <= eta_n / beta_hat, verified with a freshly computed
    residual.
    """
    lam, g2 = it.lam, it.gauge
    k = 2.0 / g2
    tol = 0.05 * eta_n / (beta_hat * max(1.0, abs(lam)))
    napp = 0

    def C(v):
        nonlocal napp
        nv = solver.norm(v)
        if nv == 0:
            return np.zeros_like(v)
        napp += 1
        return nv * solver.apply_C(v / nv, tol).value

    def Cadj(v):
        nonlocal napp
        nv = solver.norm(v)
        if nv == 0:
            return np.zeros_like(v)
        napp += 1
        return nv * solver.apply_C_adjoint(v / nv, tol).value

    f = solver.apply_C(it.u, tol).value
    napp += 1
    ff = solver.inner(f, f)
    h = Cadj(f)
    hh = solver.inner(h, h)
    g = it.u - lam * f
    s = 1.0 - ff / g2
    w = _perp(solver, it.u, h, hh) + (s / (k * hh)) * h
    nu = 0.0

    def full_residual(w, nu):
        r1 = w - lam * C(w) - nu * f + g
        r2 = s - k * solver.inner(h, w)
        return r1, r2

    r1, r2 = full_residual(w, nu)
    target = eta_n / beta_hat
    qs = [0.5 * (solver.norm(r1) ** 2 + r2 ** 2)]
    n = 0
    while True:
        res = math.sqrt(2 * qs[-1])
        if res <= target:
            r1, r2 = full_residual(w, nu)
            res = math.hypot(solver.norm(r1), r2)
            qs[-1] = 0.5 * res ** 2
            if res <= target:
                break
        if n >= max_iter:
            raise DescentStall(f"no convergence in {max_iter} descent steps (residual {res:.3e})")
        if n >= stall_window and qs[-1] > (1 - stall_ratio) * qs[-1 - stall_window]:
            raise DescentStall(f"Q reduced by less than {stall_ratio:g} over {stall_window} steps")
        g1 = r1 - lam * Cadj(r1) - k * r2 * h
        g_nu = -solver.inner(f, r1)
        d1 = -_perp(solver, g1, h, hh)
        d_nu = -g_nu
        jd1 = d1 - lam * C(d1) - d_nu * f
        jd2 = -k * solver.inner(h, d1)
        den = solver.norm(jd1) ** 2 + jd2 ** 2
        if den == 0:
            break
        xi = -(solver.inner(r1, jd1) + r2 * jd2) / den
        w = w + xi * d1
        nu = nu + xi * d_nu
        r1 = r1 + xi * jd1
        r2 = r2 + xi * jd2
        qs.append(0.5 * (solver.norm(r1) ** 2 + r2 ** 2))
        n += 1
    return DescentResult(w, float(nu), math.sqrt(2 * qs[-1]), n, napp, qs)


# -- driver -----------------------------------------------------------------

@dataclass
class NewtonTrace:
    rows: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    final: EigenIterate = None
    converged: bool = False


def run_newton(solver, init, schedule, target, backend="descent", beta_hat=None,
               reference=None, max_steps=40, keep_iterates=False, on_row=None,
               residual_eta=None, jacobian="frechet", beta_cert=None):
    """Newton iteration until the certified bound beta_cert*(||R|| + err) <= target.

    ``beta_hat`` is the working estimate of ||DR^-1|| that sets the tolerance
    schedule (e_hat = beta_hat*||R||) and the descent stopping rule;
    ``beta_cert`` is a proven bound used for the error certificate and the stop
    test. Both default to the schedule's beta_bar. ``reference`` is an optional
    (u, lambda) used to record true errors.
    """
    if beta_hat is None:
        beta_hat = schedule.quadratic.beta_bar if isinstance(schedule, Switching) else \
            getattr(schedule, "beta_bar", None)
        if beta_hat is None:
            raise ValueError("beta_hat is required for this schedule")
    if beta_cert is None:
        beta_cert = beta_hat
    dense = solver.dense_C() if backend == "oracle" else None
    trace = NewtonTrace()
    it = init
    prev_res = None
    rising = 0
    for n in range(max_steps + 1):
        t0 = time.perf_counter()
        eta_R = residual_eta or 0.01 * target / (beta_cert * max(1.0, abs(it.lam)))
        R1, R2, rbound, _ = residual_R(solver, it, eta_R)
        res = residual_norm(solver, R1, R2)
        e_hat = beta_hat * res
        cert = beta_cert * (res + rbound)
        row = {"iter": n, "lambda": it.lam, "residual_norm": res, "residual_bound": rbound,
               "e_hat": e_hat, "certified_bound": cert, "eta": None, "descent_iters": 0,
               "c_applications": 1, "oracle_error": None, "update_norm": None}
        if reference is not None:
            row["oracle_error"] = pair_norm(solver, it.u - reference[0], it.lam - reference[1])
        if keep_iterates:
            trace.iterates.append(it)
        done = cert <= target
        if not done and n < max_steps:
            # nothing below this is needed to pass the stop test; avoids round-off stalls
            eta_n = max(schedule.eta(e_hat), 0.01 * target / beta_cert)
            row["eta"] = eta_n
            if backend == "oracle":
                du, dl = newton_update_oracle(dense, it, jacobian)
            elif backend == "descent":
                d = newton_update_descent(solver, it, eta_n, beta_hat)
                du, dl = d.du, d.dlam
                row["descent_iters"] = d.iterations
                row["c_applications"] += d.c_applications
            else:
                raise ValueError(f"unknown backend {backend!r}")
            row["update_norm"] = pair_norm(solver, du, dl)
            it = it + (du, dl)
        row["wallclock_ms"] = 1e3 * (time.perf_counter() - t0)
        trace.rows.append(row)
        if on_row is not None:
            on_row(row)
        if done:
            trace.converged = True
            break
        if prev_res is not None and res > prev_res:
            rising += 1
            if rising >= 3:
                raise Divergence("residual grew for 3 consecutive steps; "
                                 "extend the power-iteration warm-up")
        else:
            rising = 0
        prev_res = res
    trace.final = it
    return trace
