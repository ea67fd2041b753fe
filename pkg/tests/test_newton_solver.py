import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import rtcrit.newton_solver as ns
from rtcrit.errors import DescentStall, Divergence, SingularSystem
from rtcrit.newton_solver import (EigenIterate, Linear, Quadratic, Switching, apply_DR,
                                  elimination_update, from_power_iterate, newton_update_descent,
                                  newton_update_oracle, pair_norm, residual_R, residual_norm,
                                  run_newton)
from rtcrit.spectral_diagnostics import DenseOperator, dense_DR

from conftest import setup_for


def perturbed(s, size, seed=0, dlam=None):
    C, rep, budget, (u0, l0) = s.oracle()
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(s.grid.shape)
    d *= size / s.ops.norm(d)
    return EigenIterate(u0 + d, l0 + (size if dlam is None else dlam))


def test_pair_norm(const):
    u = np.ones(const.grid.shape)
    assert pair_norm(const.solver, u, 2.0) == pytest.approx(math.sqrt(2 + 4))


def test_residual_examples(const):
    C, rep, budget, (u0, l0) = const.oracle()
    R1, R2, bound, _ = residual_R(const.solver, EigenIterate(u0, l0), 1e-12)
    assert residual_norm(const.solver, R1, R2) <= bound + 1e-13
    R1, R2, bound, _ = residual_R(const.solver, EigenIterate(const.ops.zeros(), 0.0), 1e-12)
    assert not np.any(R1) and R2 == 1.0


def test_residual_bound_is_sound(ref):
    C, rep, budget, (u0, l0) = ref.oracle()
    it = perturbed(ref, 1e-3, 3)
    eta = 1e-6
    R1, R2, bound, _ = residual_R(ref.solver, it, eta)
    c = (C.matrix @ it.u.ravel()).reshape(it.u.shape)
    exact1 = it.u - it.lam * c
    exact2 = 1 - ref.ops.norm(c) ** 2 / 2
    assert math.hypot(ref.ops.norm(R1 - exact1), R2 - exact2) <= bound


@pytest.mark.parametrize("jacobian", ["frechet", "simple"])
def test_apply_DR_matches_dense(const, jacobian):
    C, rep, budget, (u0, l0) = const.oracle()
    it = perturbed(const, 1e-2, 1)
    fbar = const.solver.apply_C(it.u, 1e-13).value
    rng = np.random.default_rng(2)
    du = rng.standard_normal(const.grid.shape)
    dnu = 0.7
    a, b = apply_DR(const.solver, it, fbar, du, dnu, 1e-13, jacobian)
    J = dense_DR(C, it.u, it.lam, jacobian=jacobian)
    y = J @ np.concatenate([C.to_weighted(du), [dnu]])
    assert np.abs(y[:-1] - C.to_weighted(a)).max() <= 1e-10
    assert abs(y[-1] - b) <= 1e-10


def test_apply_DR_examples(const):
    C, rep, budget, (u0, l0) = const.oracle()
    it = EigenIterate(u0, l0)
    fbar = const.solver.apply_C(u0, 1e-13).value
    a, b = apply_DR(const.solver, it, fbar, const.ops.zeros(), 0.0, 1e-13)
    assert not np.any(a) and b == 0
    a, _ = apply_DR(const.solver, it, fbar, u0, 0.0, 1e-13)
    assert const.ops.norm(a) <= 1e-11
    with pytest.raises(ValueError):
        apply_DR(const.solver, it, fbar, u0, 0.0, 1e-13, "bogus")


def test_frechet_row_is_the_derivative(const):
    # finite differences of R2 = 1 - ||C u||^2/2 against the constraint row
    C, rep, budget, (u0, l0) = const.oracle()
    it = perturbed(const, 1e-2, 4)
    d = np.random.default_rng(5).standard_normal(const.grid.shape)
    R2 = lambda u: 1 - const.ops.norm((C.matrix @ u.ravel()).reshape(u.shape)) ** 2 / 2
    h = 1e-6
    fd = (R2(it.u + h * d) - R2(it.u - h * d)) / (2 * h)
    J = dense_DR(C, it.u, it.lam)
    row = J[-1, :-1] @ C.to_weighted(d)
    assert fd == pytest.approx(row, rel=1e-7)
    simple = dense_DR(C, it.u, it.lam, jacobian="simple")[-1, :-1] @ C.to_weighted(d)
    assert abs(simple - fd) > 1e-3 * abs(fd)


def test_oracle_update_zero_at_solution(const):
    C, rep, budget, (u0, l0) = const.oracle()
    du, dl = newton_update_oracle(C, EigenIterate(u0, l0))
    assert const.ops.norm(du) <= 1e-12 and abs(dl) <= 1e-12


@pytest.mark.parametrize("jacobian", ["frechet", "simple"])
def test_elimination_matches_saddle_far_from_solution(const, jacobian):
    C, rep, budget, (u0, l0) = const.oracle()
    it = perturbed(const, 0.05, 6, dlam=0.2 * l0)
    du1, dl1 = newton_update_oracle(C, it, jacobian)
    du2, dl2 = elimination_update(C, it, jacobian)
    assert abs(dl1 - dl2) <= 1e-8 * max(1, abs(dl1))
    assert const.ops.norm(du1 - du2) <= 1e-8 * max(1, const.ops.norm(du1))


def test_elimination_near_convergence_contrast(const):
    C, rep, budget, (u0, l0) = const.oracle()
    it = EigenIterate(u0.copy(), l0 * (1 + 1e-7))
    du, dl = newton_update_oracle(C, it)
    assert abs(dl + 1e-7 * l0) <= 1e-12                  # saddle solve lands on lambda0
    Aw = C.weighted()
    z = np.linalg.solve(np.eye(C.n) - it.lam * Aw, Aw @ C.to_weighted(it.u))
    assert np.linalg.norm(z) > 1e5                       # M^-1 C u blows up
    du2, dl2 = elimination_update(C, it)
    assert abs(dl2) <= 1e-5
    assert const.ops.norm(du) <= 1e-6


def test_singular_system():
    A = DenseOperator.plain(np.diag([2.0, 1.0]))
    with pytest.warns(UserWarning):
        newton_update_oracle(A, EigenIterate(np.array([0.0, 1.0]), 0.5))
    with pytest.warns(UserWarning), pytest.raises(SingularSystem):
        newton_update_oracle(A, EigenIterate(np.zeros(2), 0.5))


def test_descent_matches_saddle(const):
    C, rep, budget, (u0, l0) = const.oracle()
    it = perturbed(const, 1e-4, 7)
    eta = 1e-9
    beta_hat = 3.1
    d = newton_update_descent(const.solver, it, eta, beta_hat)
    du, dl = newton_update_oracle(C, it)
    assert d.residual <= eta / beta_hat
    assert pair_norm(const.solver, d.du - du, d.dlam - dl) <= eta
    # monotone decrease of the quadratic functional
    q = np.array(d.q_history)
    assert np.all(np.diff(q) <= 1e-12 * q[0])


def test_descent_at_solution(const):
    C, rep, budget, (u0, l0) = const.oracle()
    d = newton_update_descent(const.solver, EigenIterate(u0, l0), 1e-8, 3.1)
    assert pair_norm(const.solver, d.du, d.dlam) <= 1e-8


def test_descent_stall(const):
    it = perturbed(const, 1e-2, 8)
    with pytest.raises(DescentStall):
        newton_update_descent(const.solver, it, 1e-12, 3.1, max_iter=2)


def test_schedules():
    q = Quadratic(omega=1e-2, beta_bar=10.0, gamma=2.0)
    assert q.eta(1e-3) == pytest.approx(0.5 * 10 * 2 * 1e-6)
    assert q.eta(1.0) == 5e-3
    lin = Linear(omega=1e-2, zeta=0.5)
    assert lin.eta(1e-3) == pytest.approx(2.5e-4)
    assert lin.eta(1.0) == 5e-3
    sw = Switching(lin, q)
    assert sw.eta(1e-3) == q.eta(1e-3)
    assert sw.eta(3e-3) == lin.eta(3e-3)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            Linear(1e-2, bad)
    with pytest.raises(ValueError):
        Linear(0.0, 0.5)


@given(omega=st.floats(1e-6, 1), zeta=st.floats(0.01, 0.99), e=st.floats(0, 10),
       bb=st.floats(1, 100), g=st.floats(0.01, 10))
@settings(max_examples=100, deadline=None)
def test_schedule_caps(omega, zeta, e, bb, g):
    for s in (Linear(omega, zeta), Quadratic(omega, bb, g),
              Switching(Linear(omega, zeta), Quadratic(omega, bb, g))):
        v = s.eta(e)
        assert 0 <= v <= omega / 2


def test_run_newton_from_solution(const):
    C, rep, budget, (u0, l0) = const.oracle()
    tr = run_newton(const.solver, EigenIterate(u0, l0), Quadratic(budget.omega,
                    budget.beta_bar, budget.gamma), 1e-8, backend="oracle")
    assert tr.converged and len(tr.rows) == 1 and tr.rows[0]["iter"] == 0


@pytest.mark.parametrize("backend", ["oracle", "descent"])
def test_run_newton_rows(const, backend):
    C, rep, budget, (u0, l0) = const.oracle()
    it = perturbed(const, 1e-3, 9)
    tr = run_newton(const.solver, it, Quadratic(budget.omega, budget.beta_bar, budget.gamma),
                    1e-9, backend=backend, beta_hat=3.1, beta_cert=budget.beta_bar,
                    reference=(u0, l0))
    assert tr.converged
    its = [r["iter"] for r in tr.rows]
    assert its == sorted(set(its))
    for r in tr.rows:
        assert r["certified_bound"] >= r["oracle_error"]
    assert tr.rows[-1]["oracle_error"] <= 1e-9


def test_run_newton_needs_beta(const):
    it = perturbed(const, 1e-3)
    with pytest.raises(ValueError):
        run_newton(const.solver, it, Linear(1e-2), 1e-8)
    with pytest.raises(ValueError):
        run_newton(const.solver, it, Linear(1e-2), 1e-8, beta_hat=3.0, backend="nope")


def test_divergence(const, monkeypatch):
    C, rep, budget, (u0, l0) = const.oracle()
    monkeypatch.setattr(ns, "newton_update_oracle", lambda A, it, jac: (it.u, 0.0))
    with pytest.raises(Divergence):
        run_newton(const.solver, perturbed(const, 1e-3), Linear(1e-2), 1e-12,
                   backend="oracle", beta_hat=3.0)


def test_from_power_iterate(ref):
    C, rep, budget, (u0, l0) = ref.oracle()
    it = from_power_iterate(ref.solver, rep.u1)
    c = ref.solver.apply_C(it.u, 1e-13).value
    assert ref.ops.norm(c) ** 2 == pytest.approx(2.0, rel=1e-12)
    assert it.lam == pytest.approx(l0, rel=1e-10)
    assert ref.ops.norm(it.u - u0) <= 1e-10
