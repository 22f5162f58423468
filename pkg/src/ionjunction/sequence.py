"""Time-dependent double-well sequence: approach, hold, retreat.

The state is propagated in a truncated subspace of each parity sector spanned
by the low-lying eigenvectors of H at the far and near separations.  Each
step applies the exact exponential of H at the step midpoint, so the
propagator is unitary to rounding for any step size.  Deep molecular states
are left out of the subspace: they barely couple to the trap states and
would otherwise set a step size orders of magnitude smaller.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh

from . import doublewell as dw
from .radial import BasisSet
from .scales import barrier_height

logger = logging.getLogger(__name__)

SHAPES = ("hold", "smoothstep")


class SequenceError(RuntimeError):
    """Propagation failure."""


class StepSizeError(SequenceError):
    pass


class NormDriftError(SequenceError):
    pass


# --------------------------------------------------------------------------
# schedules


def smoothstep(s):
    """3s^2 - 2s^3, C1 at both ends."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


@dataclass(frozen=True)
class Segment:
    duration: float
    q_start: float
    q_end: float
    shape: str = "smoothstep"

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown segment shape {self.shape!r}")
        if self.duration < 0 or not math.isfinite(self.duration):
            raise ValueError("segment duration must be finite and non-negative")
        if self.shape == "hold" and self.q_start != self.q_end:
            raise ValueError("a hold segment needs q_start == q_end")
        if min(self.q_start, self.q_end) <= 0:
            raise ValueError("q must stay positive")
        if self.duration == 0 and self.shape != "hold":
            raise ValueError("only holds may have zero duration")

    def q(self, tau):
        """q at local time ``tau`` in [0, duration]."""
        if self.shape == "hold" or self.duration == 0:
            return np.full_like(np.asarray(tau, dtype=float), self.q_start)
        return self.q_start + (self.q_end - self.q_start) * smoothstep(np.asarray(tau) / self.duration)


@dataclass(frozen=True)
class RampSchedule:
    """Piecewise q(t); times in hbar/E*, separations in R*."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("empty schedule")
        for a, b in zip(self.segments, self.segments[1:]):
            if not math.isclose(a.q_end, b.q_start, rel_tol=0, abs_tol=1e-12):
                raise ValueError("q(t) must be continuous across segments")

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)

    @property
    def q_initial(self) -> float:
        return self.segments[0].q_start

    @property
    def q_final(self) -> float:
        return self.segments[-1].q_end

    def q(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.q_final)
        t0 = 0.0
        for seg in self.segments:
            m = (t >= t0) & (t <= t0 + seg.duration)
            out[m] = seg.q(t[m] - t0)
            t0 += seg.duration
        return out

    def reversed(self) -> RampSchedule:
        return RampSchedule(tuple(Segment(s.duration, s.q_end, s.q_start, s.shape)
                                  for s in reversed(self.segments)))

    def describe(self) -> list[dict]:
        return [{"duration": s.duration, "q_start": s.q_start, "q_end": s.q_end, "shape": s.shape}
                for s in self.segments]


def make_schedule(q_far: float, q_near: float, ramp_time: float, hold_time: float,
                  retreat_time: float | None = None) -> RampSchedule:
    """Approach q_far -> q_near, hold, retreat to q_far.

    >>> s = make_schedule(2.3, 2.06, 100.0, 50.0)
    >>> s.duration, float(s.q(150.0))
    (250.0, 2.06)
    """
    if not (q_far > q_near > 0):
        raise ValueError(f"need q_far > q_near > 0, got q_far={q_far}, q_near={q_near}")
    if ramp_time <= 0 or (retreat_time is not None and retreat_time <= 0):
        raise ValueError("ramp durations must be positive")
    if hold_time < 0:
        raise ValueError("hold time must be non-negative")
    retreat_time = ramp_time if retreat_time is None else retreat_time
    return RampSchedule((Segment(ramp_time, q_far, q_near),
                         Segment(hold_time, q_near, q_near, "hold"),
                         Segment(retreat_time, q_near, q_far)))


# --------------------------------------------------------------------------
# propagation subspace


@dataclass
class Subspace:
    """Orthonormal columns ``B`` (in the full basis) of one parity sector and H projected onto them."""

    parity: int
    B: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    M2: np.ndarray = field(repr=False)
    M4: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.B.shape[1]


@dataclass
class SequenceContext:
    """Basis, moments and propagation subspaces for one short-range phase."""

    basis: BasisSet
    moments: dw.MomentMatrices
    sectors: tuple[Subspace, Subspace]
    q_far: float
    q_near: float

    @property
    def Aa(self) -> float:
        return self.basis.mass_ratio * self.basis.alpha

    def hamiltonian(self, p: int, q: float) -> np.ndarray:
        s = self.sectors[p]
        H = s.D - 1.5 * self.Aa * s.M2 + (self.Aa / (4 * q * q)) * s.M4
        H[np.diag_indices_from(H)] += barrier_height(self.basis.alpha, q, self.basis.mass_ratio)
        return H

    def project(self, c) -> tuple[np.ndarray, np.ndarray]:
        return tuple(s.B.T @ c for s in self.sectors)

    def embed(self, parts) -> np.ndarray:
        return sum(s.B @ a for s, a in zip(self.sectors, parts))

    def energy_span(self, q: float) -> float:
        return max(np.ptp(np.linalg.eigvalsh(self.hamiltonian(p, q))) for p in (0, 1))


def build_context(basis: BasisSet, moments: dw.MomentMatrices, q_far: float, q_near: float,
                  M: int = 16, below: float = 20.0) -> SequenceContext:
    """Subspaces from the eigenvectors of H(q_far) and H(q_near).

    Each parity takes the ``M // 2`` lowest eigenvectors at either end point,
    counted upward from ``below`` E* under the trap-like doublet; the union is
    orthonormalised, so a sector holds between ``M // 2`` and ``M`` vectors.
    """
    m = max(2, M // 2)
    sectors = []
    cols = {0: [], 1: []}
    for q in (q_far, q_near):
        blocks = dw.solve_sectors(basis, moments, q, n_extra=m + 10)
        for blk in blocks:
            E0 = blk.energies[blk.trap_like()[0]]
            sel = np.flatnonzero(blk.energies >= E0 - below)[:m]
            cols[blk.parity].append(blk.vectors[:, sel])
    bound = basis.energies < 0
    for p in (0, 1):
        C = np.concatenate(cols[p], axis=1)
        Uc, sv, _ = np.linalg.svd(C, full_matrices=False)
        B = Uc[:, sv > 1e-10 * sv[0]]
        sectors.append(Subspace(p, B, (B.T * basis.energies) @ B, B.T @ moments.M2 @ B,
                                B.T @ moments.M4 @ B, (B[bound].T @ B[bound])))
    return SequenceContext(basis, moments, tuple(sectors), q_far, q_near)


# --------------------------------------------------------------------------
# propagation


@dataclass
class TrajectorySample:
    t: float
    q: float
    coefficients: np.ndarray = field(repr=False)
    P_L: float
    P_R: float
    norm: float
    doublet_overlap: float


@dataclass
class Trajectory:
    samples: list[TrajectorySample]
    dt: float
    norm_drift: float
    initial_leakage: float

    @property
    def final(self) -> TrajectorySample:
        return self.samples[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])


def _doublet_weight(ctx: SequenceContext, parts, q: float) -> float:
    """Weight of the state in the instantaneous trap-like doublet."""
    w = 0.0
    for p, a in enumerate(parts):
        s = ctx.sectors[p]
        E, V = np.linalg.eigh(ctx.hamiltonian(p, q))
        bw = np.einsum("ij,ik,kj->j", V, s.bound, V)
        k = np.flatnonzero(bw < dw.BOUND_WEIGHT_CUT)[0]
        w += abs(np.vdot(V[:, k], a)) ** 2
    return w


class _Populations:
    def __init__(self, basis):
        self.basis = basis
        self.T = dw.half_space_table(basis.l_max)

    def __call__(self, c):
        P_R = dw.half_space_probability(self.basis, c, self.T)
        P_L = dw.half_space_probability(self.basis, dw.mirror(self.basis, c), self.T)
        return P_L, P_R


def well_populations(basis: BasisSet, coeffs) -> tuple[float, float]:
    """(P_L, P_R): probability in z < 0 and z > 0."""
    return _Populations(basis)(np.asarray(coeffs))


def _step_unitaries(ctx: SequenceContext, p: int, qs, h: float) -> np.ndarray:
    """exp(-i H(q) h) for each q, stacked."""
    s = ctx.sectors[p]
    qs = np.asarray(qs)[:, None, None]
    H = (s.D - 1.5 * ctx.Aa * s.M2)[None] + (ctx.Aa / (4 * qs * qs)) * s.M4[None]
    E, V = np.linalg.eigh(H)
    E = E + barrier_height(ctx.basis.alpha, qs[:, :, 0], ctx.basis.mass_ratio)
    return np.einsum("nij,nj,nkj->nik", V, np.exp(-1j * E * h), V)


@numba.njit(cache=True)
def _apply_steps(U, a):
    for i in range(U.shape[0]):
        a = U[i] @ a
    return a


def propagate(ctx: SequenceContext, c0, schedule: RampSchedule, dt: float | None = None,
              n_samples: int = 200, direction: int = 1, max_phase_step: float = 0.1,
              norm_tol: float = 1e-8, populations: bool = True) -> Trajectory:
    """Integrate i dc/dt = H(q(t)) c through ``schedule``.

    ``direction=-1`` applies the inverse step exp(+i H dt), which undoes a
    forward run when given the reversed schedule.  ``dt`` defaults to the
    largest step with ``dt * spread(H) <= max_phase_step``.
    """
    c0 = np.asarray(c0, dtype=complex)
    parts = [a.astype(complex) for a in ctx.project(c0)]
    n0 = sum(np.vdot(a, a).real for a in parts)
    leak0 = float(np.vdot(c0, c0).real - n0)
    span = max(ctx.energy_span(q) for q in (schedule.q_initial, min(s.q_end for s in schedule.segments)))
    if dt is None:
        dt = max_phase_step / span
    if dt * span > max_phase_step * (1 + 1e-12):
        raise StepSizeError(f"dt*dE = {dt * span:.3g} exceeds {max_phase_step}")
    total = schedule.duration
    every = max(total / max(n_samples - 1, 1), dt)
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    pops = _Populations(ctx.basis) if populations else None
    samples = []

    def record(t, q):
        c = ctx.embed(parts)
        nrm = float(sum(np.vdot(a, a).real for a in parts))
        P_L, P_R = pops(c) if pops else (math.nan, math.nan)
        samples.append(TrajectorySample(t, q, c, P_L, P_R, nrm, _doublet_weight(ctx, parts, q)))

    t = 0.0
    record(0.0, schedule.q_initial)
    for seg in schedule.segments:
        if seg.duration == 0:
            continue
        n = max(1, math.ceil(seg.duration / dt - 1e-9))
        h = seg.duration / n
        per = max(1, int(round(every / h)))
        const = seg.shape == "hold" or seg.q_start == seg.q_end
        if const:
            eig = [eigh(ctx.hamiltonian(p, seg.q_start)) for p in (0, 1)]
        for i0 in range(0, n, per):
            k = min(per, n - i0)
            for p in (0, 1):
                if const:
                    E, V = eig[p]
                    parts[p] = V @ (np.exp(-1j * direction * E * (k * h)) * (V.T @ parts[p]))
                else:
                    qm = seg.q((i0 + 0.5 + np.arange(k)) * h)
                    parts[p] = _apply_steps(_step_unitaries(ctx, p, qm, h * direction), parts[p])
            record(t + (i0 + k) * h, float(seg.q((i0 + k) * h)))
        t += seg.duration
    if abs(samples[-1].t - total) > 1e-9 * max(total, 1.0):
        record(total, schedule.q_final)
    drift = max(abs(s.norm - n0) for s in samples)
    if drift > norm_tol:
        raise NormDriftError(f"norm drift {drift:.2e} exceeds {norm_tol:.0e}")
    return Trajectory(samples, dt, drift, leak0)


# --------------------------------------------------------------------------
# auto-tuning and the two-branch report


def coupling_curve(basis: BasisSet, moments: dw.MomentMatrices, qs) -> np.ndarray:
    """Signed (E_odd - E_even)/2 of the trap-like doublet along ``qs``."""
    out = []
    prev = None
    for q in qs:
        res = dw.doublet_from_sectors(basis, dw.solve_sectors(basis, moments, float(q)), float(q), prev)
        prev = dw.doublet_vectors(res)
        out.append(res.J if res.ground_parity == 0 else -res.J)
    return np.array(out)


@dataclass(frozen=True)
class BranchCoupling:
    """Ramp-averaged and hold coupling of one branch for the effective two-level phase."""

    ramp_mean: float
    hold: float
    far: float


def branch_coupling(basis: BasisSet, moments: dw.MomentMatrices, q_far: float, q_near: float,
                    n_q: int = 13) -> BranchCoupling:
    qs = np.linspace(q_near, q_far, n_q)
    J = coupling_curve(basis, moments, qs)
    spline = CubicSpline(qs, J)
    s, w = np.polynomial.legendre.leggauss(32)
    s = 0.5 * (s + 1)
    mean = float(0.5 * w @ spline(q_far + (q_near - q_far) * smoothstep(s)))
    return BranchCoupling(mean, float(J[0]), float(J[-1]))


def tune_times(up: BranchCoupling, down: BranchCoupling, min_ramp: float,
               max_order: int = 12) -> tuple[float, float]:
    """(ramp_time, hold_time) for up: full transfer, down: return.

    The accumulated phase of a branch is Theta = 2 Jbar tau + J_hold T.
    Solves Theta_up = pi/2 + m pi, Theta_down = n pi for the shortest
    sequence with tau >= ``min_ramp`` and T >= 0.
    """
    M = np.array([[2 * up.ramp_mean, up.hold], [2 * down.ramp_mean, down.hold]])
    if abs(np.linalg.det(M)) < 1e-14:
        raise SequenceError("branches have proportional couplings; hold and ramp cannot be tuned")
    best = None
    for m in range(max_order):
        for n in range(-max_order, max_order + 1):
            for su in (1, -1):
                tau, T = np.linalg.solve(M, [su * (math.pi / 2 + m * math.pi), n * math.pi])
                if tau >= min_ramp and T >= 0:
                    tot = 2 * tau + T
                    if best is None or tot < best[0]:
                        best = (tot, float(tau), float(T))
    if best is None:
        raise SequenceError("no ramp/hold combination found; raise max_order or lower min_ramp")
    return best[1], best[2]


@dataclass
class BranchResult:
    label: str
    phi: float
    trajectory: Trajectory
    P_L: float
    P_R: float
    target: str
    phase: float

    @property
    def target_population(self) -> float:
        return self.P_R if self.target == "R" else self.P_L


@dataclass
class EntangleReport:
    schedule: RampSchedule
    up: BranchResult
    down: BranchResult
    beta: float
    distinguishability: float

    def summary(self) -> dict:
        return {"schedule": self.schedule.describe(), "beta": self.beta,
                "distinguishability": self.distinguishability,
                **{f"{b.label}_{k}": v for b in (self.up, self.down)
                   for k, v in (("P_L", b.P_L), ("P_R", b.P_R), ("target", b.target),
                                ("target_population", b.target_population),
                                ("norm_drift", b.trajectory.norm_drift))}}


def initial_state(ctx: SequenceContext) -> np.ndarray:
    """Left-localised mode at the far separation."""
    res = dw.doublet_from_sectors(ctx.basis, dw.solve_sectors(ctx.basis, ctx.moments, ctx.q_far), ctx.q_far)
    return res.phi_L


def run_branch(ctx: SequenceContext, schedule: RampSchedule, label: str, target: str,
               **kw) -> BranchResult:
    c0 = initial_state(ctx)
    traj = propagate(ctx, c0, schedule, **kw)
    fin = dw.doublet_from_sectors(ctx.basis, dw.solve_sectors(ctx.basis, ctx.moments, schedule.q_final),
                                  schedule.q_final)
    ref = fin.phi_R if target == "R" else fin.phi_L
    amp = np.vdot(ref, traj.final.coefficients)
    return BranchResult(label, ctx.basis.phi, traj, traj.final.P_L, traj.final.P_R, target,
                        float(np.angle(amp)))


def entangle_report(ctx_up: SequenceContext, ctx_down: SequenceContext, schedule: RampSchedule,
                    **kw) -> EntangleReport:
    """Run both ion-state branches; up is meant to tunnel across, down to return.

    ``beta`` is arg<Phi_R|psi_up(T)> - arg<Phi_L|psi_down(T)>, the relative
    phase between the two target localised modes at the end, wrapped to
    (-pi, pi].  It is gauge dependent through the sign choice of the modes.
    """
    up = run_branch(ctx_up, schedule, "up", "R", **kw)
    down = run_branch(ctx_down, schedule, "down", "L", **kw)
    beta = math.remainder(up.phase - down.phase, 2 * math.pi)
    return EntangleReport(schedule, up, down, beta, abs(up.P_R - down.P_R))


def auto_tune(ctx_up: SequenceContext, ctx_down: SequenceContext, min_ramp: float = 100.0,
              target: float = 0.99, max_rounds: int = 6, **kw) -> EntangleReport:
    """Pick ramp and hold times from the two-level phases, then verify by full propagation.

    If either branch ends below ``target`` a coordinate search on (ramp, hold)
    polishes the schedule against the full propagation.
    """
    cu = branch_coupling(ctx_up.basis, ctx_up.moments, ctx_up.q_far, ctx_up.q_near)
    cd = branch_coupling(ctx_down.basis, ctx_down.moments, ctx_down.q_far, ctx_down.q_near)
    tau, T = tune_times(cu, cd, min_ramp)
    logger.info("two-level tuning: ramp %.4g, hold %.4g", tau, T)
    rep = entangle_report(ctx_up, ctx_down, make_schedule(ctx_up.q_far, ctx_up.q_near, tau, T), **kw)

    def score(r):
        return min(r.up.target_population, r.down.target_population)

    if score(rep) >= target:
        return rep
    quick = {**kw, "n_samples": 2}
    step = np.array([0.02 * tau, 0.02 * max(T, tau)])
    x = np.array([tau, T])
    best = rep
    for _ in range(max_rounds):
        improved = False
        for d in ([1, 0], [-1, 0], [0, 1], [0, -1]):
            y = x + step * np.array(d)
            if y[0] <= 0 or y[1] < 0:
                continue
            r = entangle_report(ctx_up, ctx_down, make_schedule(ctx_up.q_far, ctx_up.q_near, y[0], y[1]),
                                **quick)
            if score(r) > score(best):
                best, x, improved = r, y, True
        if not improved:
            step = step / 2
    if best is not rep:
        best = entangle_report(ctx_up, ctx_down, best.schedule, **kw)
    return best
