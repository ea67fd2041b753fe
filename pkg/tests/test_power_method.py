import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rtcrit.errors import InsufficientData, Stagnation, ZeroImage
from rtcrit.power_method import (PowerTrace, estimate_gap, estimate_norm_C, fixed_policy,
                                 gap_fit, power_step, run_power)
from rtcrit.spectral_diagnostics import DenseHarness

from conftest import setup_for


def test_power_step_diag():
    H = DenseHarness(np.diag([2.0, 1.0]))
    nxt, rq = power_step(H, np.array([1.0, 1.0]) / math.sqrt(2), 0.0)
    assert np.allclose(nxt, np.array([2.0, 1.0]) / math.sqrt(5), atol=1e-15)
    assert rq == pytest.approx(1.5, abs=1e-15)


def test_start_orthogonal_to_u1_stays_on_u2():
    H = DenseHarness(np.diag([2.0, 1.0]))
    tr = run_power(H, np.array([0.0, 1.0]), 1e-12, tol_policy=fixed_policy(1e-14))
    assert np.allclose(tr.final, [0.0, 1.0])
    assert tr.rayleigh[-1] == pytest.approx(1.0)


def test_zero_image():
    H = DenseHarness(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ZeroImage):
        power_step(H, np.array([1.0, 0.0]), 1e-12)
    with pytest.raises(ZeroImage):
        run_power(H, np.zeros(2), 1e-6)


def test_step_on_eigenvector(const):
    C, rep, _, _ = const.oracle()
    nxt, rq = power_step(const.solver, rep.u1, 1e-12)
    assert abs(rq - rep.mu1) <= 1e-12 + 1e-12
    assert const.ops.norm(nxt - rep.u1) <= 1e-10


def test_start_at_u1_converges_immediately(const):
    _, rep, _, _ = const.oracle()
    tr = run_power(const.solver, rep.u1, 1e-6)
    assert tr.converged_at == 0


def test_ref_perturbed_run():
    s = setup_for("ref")
    _, rep, _, _ = s.oracle()
    tr = run_power(s.solver, np.ones(s.grid.shape), 1e-6, keep_iterates=True)
    assert s.ops.norm(tr.final - rep.u1) <= 1e-5
    d = np.array([s.ops.norm(a - rep.u1) for a in tr.iterates])
    ratios = d[1:] / d[:-1]
    tail = ratios[len(ratios) // 2:]
    assert np.all(np.abs(tail - rep.q) <= 0.1 * rep.q)
    for a in tr.iterates:
        assert abs(s.ops.norm(a) - 1) <= 1e-13
        assert a.min() >= -1e-12


def test_const_exact_geometric_decay(const):
    C, rep, _, _ = const.oracle()
    H = DenseHarness(C)
    tr = run_power(H, np.ones(const.grid.shape), 1e-14, keep_iterates=True, max_steps=200)
    d = np.array([const.ops.norm(a - rep.u1) for a in tr.iterates])
    rate = rep.q + 0.05
    n = np.arange(d.size)
    keep = d > 1e-13
    fitted = np.max(d[keep] / rate ** n[keep])
    assert math.isfinite(fitted) and fitted < 10


def test_estimate_norm_C(const):
    C, rep, _, _ = const.oracle()
    lo, hi = estimate_norm_C(const.solver, 1e-12, 30)
    assert lo <= rep.norm <= hi
    assert rep.norm - lo <= 1e-6
    with pytest.raises(ValueError):
        estimate_norm_C(const.solver, 1e-12, 0)


def test_estimate_norm_C_rank_one():
    x = np.array([1.0, 2.0, 2.0])
    y = np.array([0.0, 3.0, 4.0])
    H = DenseHarness(np.outer(x, y))
    lo, hi = estimate_norm_C(H, 0.0, 1)
    assert lo == pytest.approx(3 * 5, rel=1e-14)
    assert lo <= hi * (1 + 1e-14)


def test_estimate_gap_cases():
    H = DenseHarness(np.diag([2.0, 1.0]))
    tr = run_power(H, np.array([1.0, 1.0]), 1e-30, tol_policy=fixed_policy(1e-15),
                   max_steps=12)
    # symmetric case: Rayleigh increments decay like (mu2/mu1)^2
    assert abs(estimate_gap(tr) - (1 - 0.5 ** 2)) <= 0.15
    t = PowerTrace(rayleigh=[1.0] * 6)
    assert estimate_gap(t) == 1.0
    t = PowerTrace(rayleigh=list(np.cumsum(np.full(8, 0.1))))
    assert estimate_gap(t) == pytest.approx(0.0, abs=1e-12)
    assert gap_fit(t)["certified"] is False
    with pytest.raises(InsufficientData):
        estimate_gap(PowerTrace(rayleigh=[1.0, 2.0, 3.0]))


def test_gap_estimate_on_scenarios():
    for name in ("const", "ref"):
        s = setup_for(name)
        _, rep, _, _ = s.oracle()
        tr = run_power(s.solver, np.ones(s.grid.shape), 1e-10)
        assert 0 <= estimate_gap(tr) <= 1


def test_stagnation():
    # rotation-like operator: increments never decrease
    H = DenseHarness(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(Stagnation):
        run_power(H, np.array([1.0, 0.0]), 1e-12, tol_policy=fixed_policy(1e-15))


@given(seed=st.integers(0, 2 ** 32 - 1), name=st.sampled_from(["const", "het", "ref"]))
@settings(max_examples=15, deadline=None)
def test_rayleigh_error_bound(seed, name):
    s = setup_for(name)
    C, rep, _, _ = s.oracle()
    H = DenseHarness(C)
    a0 = np.random.default_rng(seed).random(s.grid.shape) + 1e-3
    tr = run_power(H, a0, 1e-12, keep_iterates=True, max_steps=60,
                   tol_policy=fixed_policy(1e-15))
    for n, rq in enumerate(tr.rayleigh):
        dist = s.ops.norm(tr.iterates[n] - rep.u1)
        assert abs(rq - rep.mu1) <= (rep.mu1 + rep.norm) * dist + 1e-13
    for a in tr.iterates:
        assert a.min() >= -1e-12
