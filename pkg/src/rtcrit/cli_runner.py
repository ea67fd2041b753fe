"""Command line front-end: scenario loading, the power -> Newton pipeline and
trace/summary output.

Every flag can also be set through an environment variable named
RTCRIT_<FLAG> (for example RTCRIT_TARGET=1e-10). Precedence is command line,
then environment, then the scenario file's ``newton`` section
({schedule, zeta, target, backend}), then built-in defaults.

Outputs in --out: trace.jsonl (one JSON object per step), summary.json and
summary.csv. Exit codes: 0 ok, 1 numerical failure, 2 configuration error.
"""
import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, CritError, ScenarioError
from .newton_solver import (Linear, Quadratic, Switching, from_power_iterate,
                            pair_norm, run_newton)
from .phase_model import check_assumptions, load_scenario, named_scenario
from .power_method import estimate_gap, power_step, proportional_policy
from .source_solver import SourceSolver
from .spectral_diagnostics import (compute_theta, constant_budget, dense_eigendecompose,
                                   eigen_reference, norm_equivalence, sandwich_check,
                                   spectral_projectors, verify_DR_bound)
from .transport_ops import OperatorSet

ENV_PREFIX = "RTCRIT_"
SUBCOMMANDS = ("check", "source", "power", "newton", "pipeline", "diagnose", "oracle")
NEWTON_DEFAULTS = {"target": 1e-8, "schedule": "switch", "zeta": 0.5, "backend": "descent"}
TRACE_FIELDS = ("phase", "iter", "lambda", "rayleigh", "residual_norm", "eta",
                "certified_bound", "oracle_error", "c_applications", "wallclock_ms")


@dataclass
class RunConfig:
    subcommand: str
    scenario: str
    out: str = "out"
    seed: int = 0
    target: float = None
    schedule: str = None
    zeta: float = None
    backend: str = None
    oracle: str = "on"
    threads: int = 1
    timing: str = "on"
    warmup: int = 5
    beta_hat: float = None
    omega: float = None

    @property
    def use_oracle(self):
        return self.oracle == "on"

    def resolve(self, section):
        """Fill unset Newton parameters from a scenario section, then defaults."""
        section = section or {}
        for key, default in NEWTON_DEFAULTS.items():
            if getattr(self, key) is None:
                setattr(self, key, section.get(key, default))
        self.target, self.zeta = float(self.target), float(self.zeta)
        if not 0 < self.zeta < 1:
            raise ConfigError("zeta must lie in (0, 1)")
        if not self.target > 0:
            raise ConfigError("target must be positive")
        if self.schedule not in ("quad", "lin", "switch"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.backend not in ("descent", "oracle"):
            raise ConfigError(f"unknown backend {self.backend!r}")


# -- scenario and oracle setup ------------------------------------------------

def open_scenario(ref):
    """Named scenario (const, het, ref or SCEN-*) or a path to a JSON file."""
    if Path(ref).suffix == ".json" or os.sep in ref:
        return load_scenario(ref)
    return named_scenario(ref)


@dataclass
class Oracle:
    report: object
    budget: object
    reference: tuple
    dr_worst: float
    dense: object


def build_oracle(solver, seed=0, gauge=2.0, n_samples=100):
    """Dense reference data: eigenpair, theory constants and a sampled ||DR^-1||."""
    C = solver.dense_C()
    report = dense_eigendecompose(C)
    compute_theta(report, C)
    budget = constant_budget(report, C, gauge=gauge)
    dr = verify_DR_bound(report, budget, C, n_samples=n_samples, seed=seed)
    u0, lam0 = eigen_reference(report, gauge)
    return Oracle(report, budget, (u0, lam0), dr["worst"], C)


# -- pipeline -----------------------------------------------------------------

def _row(phase, it, **kw):
    row = dict.fromkeys(TRACE_FIELDS)
    row.update(phase=phase, iter=it)
    row.update({k: v for k, v in kw.items() if k in TRACE_FIELDS})
    return row


def run_power_phase(solver, emit, oracle=None, omega=None, max_steps=None, timing=True,
                    gauge=2.0, max_cap=500):
    """Power iteration from a constant start; returns the last normalized iterate.

    With ``omega`` the loop stops once the estimated error of the scaled pair,
    (sqrt(g2)/rho)*increment/gap_estimate, is below omega/2. Otherwise it runs
    ``max_steps`` steps.
    """
    a = np.ones(solver.shape)
    a = a / solver.norm(a)
    policy = proportional_policy()
    incs, rays = [], []
    last = None
    cap = max_steps if max_steps is not None else max_cap

    class _T:  # minimal trace view for estimate_gap
        pass

    for n in range(cap):
        t0 = time.perf_counter()
        eta = policy(n, last)
        nxt, rq = power_step(solver, a, eta)
        inc = solver.norm(nxt - a)
        incs.append(inc)
        rays.append(rq)
        last = inc
        err = None
        if oracle is not None:
            err = solver.norm(a - oracle.report.u1)
        a = nxt
        ms = 1e3 * (time.perf_counter() - t0) if timing else None
        emit(_row("power", n, **{"lambda": 1.0 / rq, "rayleigh": rq, "eta": eta,
                                 "oracle_error": err, "c_applications": 1,
                                 "wallclock_ms": ms}))
        if omega is None or len(rays) < 4:
            continue
        tr = _T()
        tr.n_steps, tr.rayleigh = len(rays), rays
        gap = max(estimate_gap(tr), 1e-3)
        est = math.sqrt(gauge) / rq * inc / gap
        if est <= omega / 2:
            break
    return a


def make_schedule(name, omega, beta_bar, gamma, zeta):
    if name == "quad":
        return Quadratic(omega, beta_bar, gamma)
    if name == "lin":
        return Linear(omega, zeta)
    if name == "switch":
        return Switching(Linear(omega, zeta), Quadratic(omega, beta_bar, gamma))
    raise ConfigError(f"unknown schedule {name!r}")


def pipeline(solver, target, emit=None, oracle=None, schedule="switch", zeta=0.5,
             warmup=None, beta_hat=None, omega=None, timing=True, gauge=2.0, max_steps=40,
             backend="descent"):
    """Power warm-up followed by Newton with descent updates.

    With an oracle, omega, beta_bar and gamma come from the constant budget, the
    working ||DR^-1|| estimate beta_hat from sampled dense Jacobians, and the
    power phase runs until the estimated pair error is below omega/2. Without
    one, ``beta_hat`` and ``omega`` must be supplied (defaults 100 and 1e-3) and
    the warm-up is a fixed step count.
    """
    rows = []

    def _emit(row):
        rows.append(row)
        if emit is not None:
            emit(row)

    if oracle is not None:
        b = oracle.budget
        omega_, beta_bar, gamma = b.omega, b.beta_bar, b.gamma
        beta_work = beta_hat or oracle.dr_worst
        beta_cert = beta_bar
    else:
        omega_ = omega or 1e-3
        beta_bar = beta_cert = beta_work = beta_hat or 100.0
        gamma = math.sqrt(2.0) * solver.norm_upper_bound()
    if oracle is not None and warmup is None:
        a = run_power_phase(solver, _emit, oracle, omega=omega_, timing=timing, gauge=gauge)
    else:
        a = run_power_phase(solver, _emit, oracle, max_steps=warmup or 20, timing=timing,
                            gauge=gauge)
    init = from_power_iterate(solver, a, gauge)
    sched = make_schedule(schedule, omega_, beta_bar, gamma, zeta)

    def newton_row(r):
        err = r["oracle_error"]
        _emit(_row("newton", r["iter"], **{
            "lambda": r["lambda"], "residual_norm": r["residual_norm"], "eta": r["eta"],
            "certified_bound": r["certified_bound"], "oracle_error": err,
            "c_applications": r["c_applications"],
            "wallclock_ms": r["wallclock_ms"] if timing else None}))

    if backend == "oracle" and oracle is None:
        raise ConfigError("the oracle update backend needs --oracle on")
    trace = run_newton(solver, init, sched, target, backend=backend, beta_hat=beta_work,
                       beta_cert=beta_cert,
                       reference=oracle.reference if oracle is not None else None,
                       on_row=newton_row, max_steps=max_steps)
    final = trace.final
    summary = {"lambda": final.lam, "mu": 1.0 / final.lam,
               "certified_bound": trace.rows[-1]["certified_bound"],
               "converged": trace.converged, "newton_steps": len(trace.rows) - 1,
               "power_steps": sum(r["phase"] == "power" for r in rows),
               "c_applications": sum(r["c_applications"] or 0 for r in rows),
               "beta_hat": beta_work, "beta_cert": beta_cert, "omega": omega_,
               "schedule": schedule}
    if oracle is not None:
        u0, l0 = oracle.reference
        summary["true_error"] = pair_norm(solver, final.u - u0, final.lam - l0)
        summary["lambda_oracle"] = l0
    return final, rows, summary


# -- subcommands ----------------------------------------------------------------

def _assumptions(grid, optics):
    rep = check_assumptions(grid, optics)
    out = rep.as_dict()
    out.update(n_cells=grid.n_cells, n_ord=grid.n_ord, length=grid.length)
    return rep, out


def cmd_check(cfg, grid, optics, emit):
    rep, out = _assumptions(grid, optics)
    return out, 0 if rep.ok else 1


def cmd_source(cfg, grid, optics, emit):
    ops = OperatorSet(grid, optics)
    solver = SourceSolver(ops)
    q = np.random.default_rng(cfg.seed).random(grid.shape)
    t0 = time.perf_counter()
    res = solver.solve_B(q, cfg.target)
    ms = 1e3 * (time.perf_counter() - t0) if cfg.timing == "on" else None
    err = None
    if cfg.use_oracle:
        B = ops.materialize("B").matrix
        err = ops.norm(np.linalg.solve(B, q.ravel()).reshape(grid.shape) - res.value)
    emit(_row("source", res.iterations, certified_bound=res.bound, eta=cfg.target,
              oracle_error=err, c_applications=0, wallclock_ms=ms))
    return {"iterations": res.iterations, "certified_bound": res.bound, "eta": cfg.target,
            "rho": solver.rho, "true_error": err}, 0


def _solver(grid, optics):
    return SourceSolver(OperatorSet(grid, optics))


def cmd_power(cfg, grid, optics, emit):
    solver = _solver(grid, optics)
    oracle = build_oracle(solver, cfg.seed, n_samples=1) if cfg.use_oracle else None
    rows = []

    def _emit(r):
        rows.append(r)
        emit(r)

    # run until the Rayleigh quotients settle below the target
    a = np.ones(grid.shape)
    a = a / solver.norm(a)
    policy = proportional_policy()
    last = None
    for n in range(1000):
        t0 = time.perf_counter()
        eta = policy(n, last)
        nxt, rq = power_step(solver, a, eta)
        inc = solver.norm(nxt - a)
        err = solver.norm(a - oracle.report.u1) if oracle else None
        a, last = nxt, inc
        _emit(_row("power", n, **{"lambda": 1.0 / rq, "rayleigh": rq, "eta": eta,
                                  "oracle_error": err, "c_applications": 1,
                                  "wallclock_ms": 1e3 * (time.perf_counter() - t0)
                                  if cfg.timing == "on" else None}))
        if inc <= cfg.target:
            break
    out = {"rayleigh": rows[-1]["rayleigh"], "lambda": rows[-1]["lambda"],
           "steps": len(rows), "last_increment": last}
    if oracle:
        out["mu1_oracle"] = oracle.report.mu1
        out["distance_to_u1"] = solver.norm(a - oracle.report.u1)
    return out, 0


def _finish(summary, oracle):
    if oracle is not None:
        summary["budget"] = oracle.budget.as_dict()
        summary["spectral"] = oracle.report.summary()
        summary["dr_inverse_sampled"] = oracle.dr_worst
    return summary


def cmd_newton(cfg, grid, optics, emit):
    solver = _solver(grid, optics)
    oracle = build_oracle(solver, cfg.seed) if cfg.use_oracle else None
    sched = cfg.schedule if cfg.schedule != "switch" else "quad"
    _, _, summary = pipeline(solver, cfg.target, emit, oracle, sched, cfg.zeta,
                             warmup=cfg.warmup, beta_hat=cfg.beta_hat, omega=cfg.omega,
                             timing=cfg.timing == "on", backend=cfg.backend)
    return _finish(summary, oracle), 0 if summary["converged"] else 1


def cmd_pipeline(cfg, grid, optics, emit):
    solver = _solver(grid, optics)
    oracle = build_oracle(solver, cfg.seed) if cfg.use_oracle else None
    warm = None if oracle is not None else max(cfg.warmup, 20)
    _, _, summary = pipeline(solver, cfg.target, emit, oracle, cfg.schedule, cfg.zeta,
                             warmup=warm, beta_hat=cfg.beta_hat, omega=cfg.omega,
                             timing=cfg.timing == "on")
    return _finish(summary, oracle), 0 if summary["converged"] else 1


def cmd_diagnose(cfg, grid, optics, emit):
    solver = _solver(grid, optics)
    oracle = build_oracle(solver, cfg.seed)
    C = oracle.dense
    sand = sandwich_check(oracle.report)
    E1, E2 = spectral_projectors(oracle.report, C)
    c1, C1 = norm_equivalence(E1, E2)
    M1, M2 = E1.matrix, E2.matrix
    out = _finish({"sandwich": sand}, oracle)
    out["projectors"] = {
        "idempotence_E1": float(np.abs(M1 @ M1 - M1).max()),
        "idempotence_E2": float(np.abs(M2 @ M2 - M2).max()),
        "cross": float(max(np.abs(M1 @ M2).max(), np.abs(M2 @ M1).max())),
        "c1": c1, "C1": C1}
    out["dr_bound_pass"] = bool(oracle.dr_worst <= oracle.budget.beta_bar)
    return out, 0


def cmd_oracle(cfg, grid, optics, emit):
    solver = _solver(grid, optics)
    C = solver.dense_C()
    rep = dense_eigendecompose(C)
    u0, l0 = eigen_reference(rep)
    out = Path(cfg.out)
    np.savez(out / "oracle.npz", u=u0, lam=l0, mu1=rep.mu1, eigenvalues=rep.eigenvalues)
    return {"mu1": rep.mu1, "lambda": l0, "mu2_abs": abs(rep.mu2), "delta": rep.delta,
            "norm_C": rep.norm, "u1_nonnegative": rep.u1_nonnegative}, 0


COMMANDS = {"check": cmd_check, "source": cmd_source, "power": cmd_power,
            "newton": cmd_newton, "pipeline": cmd_pipeline, "diagnose": cmd_diagnose,
            "oracle": cmd_oracle}


# -- output -----------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _flatten(d, prefix=""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        elif not isinstance(v, list):
            yield key, v


def write_summary(out, summary):
    summary = _jsonable(summary)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        for k, v in _flatten(summary):
            w.writerow([k, "" if v is None else v])


# -- argument handling ----------------------------------------------------------

def _env(name, default, cast=str):
    raw = os.environ.get(ENV_PREFIX + name.upper())
    return default if raw is None else cast(raw)


def build_parser():
    p = argparse.ArgumentParser(prog="rtcrit", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--scenario", default=_env("scenario", None),
                   help="const|het|ref or a scenario JSON file")
    p.add_argument("--out", default=_env("out", "out"))
    p.add_argument("--seed", type=int, default=_env("seed", 0, int))
    p.add_argument("--target", type=float, default=_env("target", None, float))
    p.add_argument("--schedule", choices=("quad", "lin", "switch"),
                   default=_env("schedule", None))
    p.add_argument("--zeta", type=float, default=_env("zeta", None, float))
    p.add_argument("--backend", choices=("descent", "oracle"), default=_env("backend", None),
                   help="Newton update backend for the newton subcommand")
    p.add_argument("--oracle", choices=("on", "off"), default=_env("oracle", "on"))
    p.add_argument("--threads", type=int, default=_env("threads", 1, int),
                   help="BLAS threads; values > 1 void the bit-reproducibility guarantee")
    p.add_argument("--timing", choices=("on", "off"), default=_env("timing", "on"),
                   help="off writes null wallclock_ms so traces are byte-identical")
    p.add_argument("--warmup", type=int, default=_env("warmup", 5, int))
    p.add_argument("--beta-hat", type=float, default=_env("beta_hat", None, float))
    p.add_argument("--omega", type=float, default=_env("omega", None, float))
    return p


def run(cfg):
    """Execute one subcommand; returns the exit status."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.jsonl"
    with open(trace_path, "w") as fh:
        def emit(row):
            fh.write(json.dumps(_jsonable(row)) + "\n")

        try:
            if cfg.scenario is None:
                raise ScenarioError("no scenario given (--scenario or RTCRIT_SCENARIO)")
            grid, optics, extra = open_scenario(cfg.scenario)
            cfg.resolve(extra.get("newton"))
            summary, status = COMMANDS[cfg.subcommand](cfg, grid, optics, emit)
        except CritError as exc:
            rec = exc.record()
            (out / "error.json").write_text(json.dumps(rec) + "\n")
            print(json.dumps(rec), file=sys.stderr)
            return exc.exit_code
    summary = {"subcommand": cfg.subcommand, "scenario": str(cfg.scenario), **summary}
    write_summary(out, summary)
    return status


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg = RunConfig(subcommand=args.subcommand, scenario=args.scenario, out=args.out,
                    seed=args.seed, target=args.target, schedule=args.schedule,
                    zeta=args.zeta, backend=args.backend, oracle=args.oracle,
                    threads=args.threads,
                    timing=args.timing, warmup=args.warmup, beta_hat=args.beta_hat,
                    omega=args.omega)
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=max(1, cfg.threads)):
        return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
