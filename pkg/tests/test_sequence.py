import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import eigh

from ionjunction import doublewell as dw
from ionjunction import sequence as sq

Q_FAR, Q_NEAR = 2.3, 2.06


@pytest.fixture(scope="module")
def ctx(small):
    basis, m = small
    return sq.build_context(basis, m, Q_FAR, Q_NEAR, M=16)


@pytest.fixture(scope="module")
def near(small):
    basis, m = small
    return dw.solve_at(basis, m, Q_NEAR)


def hold(q, T):
    return sq.RampSchedule((sq.Segment(T, q, q, "hold"),))


def fidelity(a, b):
    return abs(np.vdot(a, b)) ** 2


# schedules


@given(s=st.floats(0, 1), ds=st.floats(0, 1))
def test_smoothstep_monotone(s, ds):
    assert sq.smoothstep(0.0) == 0.0 and sq.smoothstep(1.0) == 1.0
    assert sq.smoothstep(min(s + ds, 1.0)) >= sq.smoothstep(s)


def test_schedule_shape():
    s = sq.make_schedule(Q_FAR, Q_NEAR, 100.0, 40.0, retreat_time=60.0)
    assert s.duration == 200.0
    assert s.q(0.0) == Q_FAR and s.q(120.0) == Q_NEAR and s.q(200.0) == pytest.approx(Q_FAR)
    t = np.linspace(0, 200, 2001)
    assert np.max(np.abs(np.diff(s.q(t)))) < 1e-2
    r = s.reversed()
    assert r.q_initial == s.q_final and r.segments[0].duration == 60.0
    assert sq.make_schedule(Q_FAR, Q_NEAR, 100.0, 0.0).duration == 200.0


def test_schedule_validation():
    with pytest.raises(ValueError):
        sq.make_schedule(2.0, 2.06, 100.0, 10.0)
    with pytest.raises(ValueError):
        sq.make_schedule(Q_FAR, Q_NEAR, 0.0, 10.0)
    with pytest.raises(ValueError):
        sq.Segment(10.0, 2.3, 2.0, "hold")
    with pytest.raises(ValueError):
        sq.RampSchedule((sq.Segment(1.0, 2.3, 2.2), sq.Segment(1.0, 2.1, 2.0)))


# propagation


def test_subspace_orthonormal(ctx):
    for s in ctx.sectors:
        assert np.allclose(s.B.T @ s.B, np.eye(s.dim), atol=1e-12)
        assert 8 <= s.dim <= 16


def test_stationary_state(ctx, near):
    c0 = near.phi_g
    tr = sq.propagate(ctx, c0, hold(Q_NEAR, 500.0), n_samples=50)
    for s in tr.samples:
        assert fidelity(c0, s.coefficients) == pytest.approx(1.0, abs=1e-8)
        assert s.P_L == pytest.approx(tr.samples[0].P_L, abs=1e-8)


def test_two_level_oracle(ctx, near):
    J, eps = near.J, near.epsilon
    T = math.pi / J
    tr = sq.propagate(ctx, near.phi_L, hold(Q_NEAR, T), n_samples=101)
    t = tr.column("t")
    overlap = np.array([fidelity(near.phi_L, s.coefficients) for s in tr.samples])
    assert np.max(np.abs(overlap - np.cos(J * t) ** 2)) < 1e-4
    c2 = np.cos(J * t) ** 2
    assert np.max(np.abs(tr.column("P_L") - (c2 * (1 - eps) + (1 - c2) * eps))) < 1e-4


def _full_evolution(small, c0, q, T):
    basis, m = small
    E, V = eigh(dw.assemble(basis, m, q))
    return V @ (np.exp(-1j * E * T) * (V.T @ c0))


def test_static_propagation_matches_exact_exponential(small, ctx, near):
    T = 80.0
    tr = sq.propagate(ctx, near.phi_L, hold(Q_NEAR, T), n_samples=2)
    assert fidelity(_full_evolution(small, near.phi_L, Q_NEAR, T), tr.final.coefficients) > 1 - 1e-6


def test_step_kernel_matches_exact_exponential(ctx):
    h, n = 0.01, 500
    for p in (0, 1):
        H = ctx.hamiltonian(p, 2.2)
        E, V = eigh(H)
        a0 = np.zeros(H.shape[0], complex)
        a0[:2] = 1 / math.sqrt(2)
        stepped = sq._apply_steps(sq._step_unitaries(ctx, p, np.full(n, 2.2), h), a0.copy())
        exact = V @ (np.exp(-1j * E * n * h) * (V.T @ a0))
        assert np.max(np.abs(stepped - exact)) < 1e-10


def test_sudden_quench_truncation_is_small(small, ctx):
    # Phi_L(q_far) has a small weight outside the q_near part of the subspace
    c0 = sq.initial_state(ctx)
    tr = sq.propagate(ctx, c0, hold(Q_NEAR, 80.0), n_samples=2)
    assert fidelity(_full_evolution(small, c0, Q_NEAR, 80.0), tr.final.coefficients) > 1 - 1e-3


def test_energy_conserved_during_hold(ctx):
    c0 = sq.initial_state(ctx)
    tr = sq.propagate(ctx, c0, hold(2.15, 300.0), n_samples=20)
    e = []
    for s in tr.samples:
        parts = ctx.project(s.coefficients)
        e.append(sum(np.vdot(a, ctx.hamiltonian(p, 2.15) @ a).real for p, a in enumerate(parts)))
    assert np.ptp(e) < 1e-8 * abs(np.mean(e))


@pytest.mark.property
def test_unitarity_and_time_reversal(ctx):
    c0 = sq.initial_state(ctx)
    sched = sq.make_schedule(Q_FAR, Q_NEAR, 150.0, 30.0, retreat_time=120.0)
    fwd = sq.propagate(ctx, c0, sched, n_samples=20)
    assert fwd.norm_drift < 1e-8
    back = sq.propagate(ctx, fwd.final.coefficients, sched.reversed(), n_samples=2, direction=-1)
    assert fidelity(c0, back.final.coefficients) > 1 - 1e-6


def test_adiabatic_return_without_tunnelling(ctx, small):
    basis, m = small
    g_far = dw.solve_at(basis, m, Q_FAR).phi_g
    # the even doublet member cannot tunnel: parity is conserved
    tr = sq.propagate(ctx, g_far, sq.make_schedule(Q_FAR, Q_NEAR, 400.0, 0.0), n_samples=2)
    assert fidelity(g_far, tr.final.coefficients) > 0.999


def test_step_size_guard(ctx):
    with pytest.raises(sq.StepSizeError):
        sq.propagate(ctx, sq.initial_state(ctx), hold(Q_NEAR, 10.0), dt=1.0)


# tuning and reports


def test_tune_times_hits_phase_conditions():
    up = sq.BranchCoupling(ramp_mean=0.004, hold=0.012, far=0.001)
    down = sq.BranchCoupling(ramp_mean=0.015, hold=0.042, far=0.004)
    tau, T = sq.tune_times(up, down, min_ramp=100.0)
    th_up = 2 * up.ramp_mean * tau + up.hold * T
    th_down = 2 * down.ramp_mean * tau + down.hold * T
    assert tau >= 100 and T >= 0
    assert math.remainder(abs(th_up) - math.pi / 2, math.pi) == pytest.approx(0, abs=1e-9)
    assert math.remainder(th_down, math.pi) == pytest.approx(0, abs=1e-9)


def test_tune_times_rejects_proportional_branches():
    b = sq.BranchCoupling(0.01, 0.02, 0.001)
    with pytest.raises(sq.SequenceError):
        sq.tune_times(b, b, 100.0)


def test_identical_branches_are_indistinguishable(ctx):
    rep = sq.entangle_report(ctx, ctx, sq.make_schedule(Q_FAR, Q_NEAR, 120.0, 20.0), n_samples=5)
    assert rep.distinguishability == pytest.approx(0.0, abs=1e-12)
    assert rep.up.target == "R" and rep.down.target == "L"
    assert -math.pi <= rep.beta <= math.pi
