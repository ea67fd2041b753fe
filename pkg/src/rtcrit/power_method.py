"""Power iteration for the dominant eigenpair of C, plus norm and gap estimates.

The functions accept any ``solver`` exposing ``apply_C(f, eta)``,
``apply_C_adjoint(f, eta)``, ``inner``, ``norm`` and ``norm_upper_bound``;
both ``SourceSolver`` and the dense ``DenseHarness`` qualify.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData, Stagnation, ZeroImage


@dataclass
class PowerTrace:
    rayleigh: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    etas: list = field(default_factory=list)
    c_applications: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    final: np.ndarray = None
    converged_at: int = None
    distance_estimate: float = math.inf

    @property
    def n_steps(self):
        return len(self.rayleigh)


def power_step(solver, a, eta_apply):
    """One step a -> C a / ||C a||; returns (next, rayleigh quotient <Ca, a>)."""
    b = solver.apply_C(a, eta_apply).value
    nb = solver.norm(b)
    if nb <= eta_apply:
        raise ZeroImage(f"||C a|| = {nb:.3e} does not exceed the apply tolerance {eta_apply:.3e}")
    rayleigh = float(np.real(solver.inner(b, a)))
    return b / nb, rayleigh


def proportional_policy(c_pow=0.1, floor=1e-14, first=1e-3):
    """eta_n = c_pow * (latest increment), with a floor."""
    def policy(n, last_increment):
        if last_increment is None:
            return first
        return max(c_pow * last_increment, floor)
    return policy


def fixed_policy(eta):
    return lambda n, last_increment: eta


def _distance_estimate(incs):
    # geometric tail of the increments, contraction from the last two
    if incs[-1] == 0:
        return 0.0
    q = 0.999
    if len(incs) >= 2 and incs[-2] > 0:
        q = min(incs[-1] / incs[-2], q)
    return incs[-1] / (1.0 - q)


def run_power(solver, a0, target, tol_policy=None, max_steps=1000, keep_iterates=False,
              stop=None):
    """Normalized power iteration from a nonnegative start.

    Stops once the increment-based distance estimate falls below ``target`` (or
    ``stop(trace)`` returns true). ``tol_policy(n, last_increment)`` gives the
    apply tolerance of step n; the default is proportional with factor 0.1.
    """
    policy = tol_policy or proportional_policy()
    a = np.asarray(a0, dtype=float)
    na = solver.norm(a)
    if na == 0:
        raise ZeroImage("zero start vector")
    a = a / na
    trace = PowerTrace()
    if keep_iterates:
        trace.iterates.append(a)
    last = None
    rising = 0
    for n in range(max_steps):
        eta = policy(n, last)
        nxt, rq = power_step(solver, a, eta)
        inc = solver.norm(nxt - a)
        trace.rayleigh.append(rq)
        trace.increments.append(inc)
        trace.etas.append(eta)
        trace.c_applications.append(1)
        if keep_iterates:
            trace.iterates.append(nxt)
        rising = rising + 1 if last is not None and inc >= last else 0
        last = inc
        a = nxt
        trace.final = a
        trace.distance_estimate = _distance_estimate(trace.increments)
        if trace.distance_estimate <= target or inc == 0:
            trace.converged_at = n
            break
        if stop is not None and stop(trace):
            trace.converged_at = n
            break
        if rising >= 10:
            raise Stagnation(f"increments have not decreased for 10 steps (last {inc:.3e})")
    return trace


def estimate_norm_C(solver, eta, n_steps, start=None):
    """Interval (lo, hi) containing ||C||_sigma.

    lo comes from the power iteration on C*C: both ||C x|| and ||C* C x||/||C x||
    are lower bounds for unit x, less the apply tolerance. hi is the solver's a
    priori upper bound.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x = np.ones(solver.shape) if start is None else np.asarray(start, dtype=float)
    x = x / solver.norm(x)
    lo = 0.0
    for _ in range(n_steps):
        cx = solver.apply_C(x, eta).value
        ncx = solver.norm(cx)
        lo = max(lo, ncx - eta)
        if ncx == 0:
            break
        y = solver.apply_C_adjoint(cx, eta).value
        ny = solver.norm(y)
        # ||C*|| >= ||C* z||/||z|| with z = cx
        lo = max(lo, (ny - eta) / ncx)
        if ny == 0:
            break
        x = y / ny
    hi = solver.norm_upper_bound()
    return max(lo, 0.0), hi


def gap_fit(trace):
    """Least-squares geometric fit of the Rayleigh increments."""
    if trace.n_steps < 4:
        raise InsufficientData(f"need at least 4 recorded steps, have {trace.n_steps}")
    r = np.asarray(trace.rayleigh)
    d = np.abs(np.diff(r))
    scale = max(np.max(np.abs(r)), 1e-300)
    keep = d > 1e-14 * scale
    if not np.any(keep):
        return {"delta": 1.0, "q": 0.0, "certified": False}
    n = np.nonzero(keep)[0]
    if n.size < 2:
        return {"delta": 1.0, "q": 0.0, "certified": False}
    slope = np.polyfit(n.astype(float), np.log(d[keep]), 1)[0]
    q = float(np.exp(slope))
    return {"delta": float(np.clip(1.0 - q, 0.0, 1.0)), "q": q, "certified": False}


def estimate_gap(trace):
    """Heuristic spectral gap 1 - q from the Rayleigh increments; not certified."""
    return gap_fit(trace)["delta"]
