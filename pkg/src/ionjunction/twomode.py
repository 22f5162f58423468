"""Two-mode Bose-Hubbard junction in the fixed-N Fock basis.

    H = J (c_L^+ c_R + c_R^+ c_L) + U n^2,    n = (n_R - n_L)/2,

with hbar = 1 and J, U in any common frequency unit.  Basis states
|n_L, n_R> are ordered by n_R = 0..N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

LAMBDA_C = 2.0
REGIMES = ("rabi", "josephson", "fock")


@dataclass(frozen=True)
class TwoModeParams:
    """Atom number and junction parameters for one ion spin state."""

    N: int
    J: float
    U: float
    label: str = ""

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not (self.J > 0 and math.isfinite(self.J)):
            raise ValueError(f"J must be positive and finite, got {self.J}")
        if not math.isfinite(self.U):
            raise ValueError("U must be finite")


def fock_state(N: int, n_left: int) -> np.ndarray:
    """|n_left, N - n_left> as a complex vector."""
    if not 0 <= n_left <= N:
        raise ValueError("n_left out of range")
    v = np.zeros(N + 1, dtype=complex)
    v[N - n_left] = 1.0
    return v


def _bands(p: TwoModeParams):
    nR = np.arange(p.N + 1)
    nL = p.N - nR
    diag = p.U * ((nR - nL) / 2.0) ** 2
    off = p.J * np.sqrt(nL[:-1] * (nR[:-1] + 1.0))
    return diag, off


def hamiltonian(p: TwoModeParams) -> np.ndarray:
    """Dense (N+1)x(N+1) tridiagonal matrix.

    >>> hamiltonian(TwoModeParams(2, 1.0, 4.0)).round(6).tolist()
    [[4.0, 1.414214, 0.0], [1.414214, 0.0, 1.414214], [0.0, 1.414214, 4.0]]
    """
    d, e = _bands(p)
    return np.diag(d) + np.diag(e, 1) + np.diag(e, -1)


def spectrum(p: TwoModeParams):
    d, e = _bands(p)
    return eigh_tridiagonal(d, e)


@dataclass
class TwoModeTrajectory:
    t: np.ndarray
    states: np.ndarray
    p_left: np.ndarray
    imbalance: np.ndarray
    energy: np.ndarray
    norm: np.ndarray

    @property
    def p_right(self) -> np.ndarray:
        return 1.0 - self.p_left


def evolve(initial, p: TwoModeParams, t) -> TwoModeTrajectory:
    """Exact evolution by spectral decomposition.

    ``p_left`` is <n_L>/N and ``imbalance`` is z = <n_R - n_L>/N.
    """
    psi0 = np.asarray(initial, dtype=complex)
    if psi0.shape != (p.N + 1,):
        raise ValueError("initial state has the wrong dimension")
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise ValueError("initial state must be normalized")
    t = np.asarray(t, dtype=float)
    E, V = spectrum(p)
    a = V.T @ psi0
    states = (np.exp(-1j * np.outer(t, E)) * a) @ V.T
    prob = np.abs(states) ** 2
    nR = np.arange(p.N + 1)
    norm = prob.sum(axis=1)
    mean_R = prob @ nR
    p_left = (p.N - mean_R) / p.N
    z = (2 * mean_R - p.N) / p.N
    H = hamiltonian(p)
    energy = np.real(np.einsum("ti,ij,tj->t", states.conj(), H, states))
    return TwoModeTrajectory(t, states, p_left, z, energy, norm)


def interaction_parameter(p: TwoModeParams) -> float:
    """Lambda = U N / (2 J)."""
    return p.U * p.N / (2.0 * p.J)


def rabi_period(J: float) -> float:
    """pi / J in the time unit reciprocal to J."""
    if not J > 0:
        raise ValueError("J must be positive")
    return math.pi / J


@dataclass(frozen=True)
class Classification:
    lam: float
    self_trapped: bool
    regime: str


def classify(p: TwoModeParams, rabi_below: float = 1.0, fock_above: float | None = None) -> Classification:
    """Self-trapped iff Lambda > 2; regime by Lambda < rabi_below, > fock_above (default N^2)."""
    lam = interaction_parameter(p)
    fock_above = p.N**2 if fock_above is None else fock_above
    if lam < rabi_below:
        regime = "rabi"
    elif lam > fock_above:
        regime = "fock"
    else:
        regime = "josephson"
    return Classification(lam, lam > LAMBDA_C, regime)


def oscillation_period(t, p_left) -> float:
    """Mean spacing of successive minima of ``p_left``, nan if fewer than two."""
    y = np.asarray(p_left)
    i = np.flatnonzero((y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:])) + 1
    if i.size < 2:
        return math.nan
    # parabolic refinement of each minimum
    tt = np.asarray(t)
    h = tt[1] - tt[0]
    den = y[i - 1] - 2 * y[i] + y[i + 1]
    shift = np.where(den > 0, 0.5 * (y[i - 1] - y[i + 1]) / np.where(den > 0, den, 1), 0.0)
    tm = tt[i] + shift * h
    return float(np.mean(np.diff(tm)))


def validity_ratio(N: int, l0: float, a_aa: float) -> float:
    """N a_aa / l0; the two-mode picture needs this well below one."""
    return N * a_aa / l0
