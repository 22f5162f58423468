"""Radial eigenbasis of an isotropic harmonic trap with a static ion at its centre.

The radial equation in R*/E* units reads

    -A u'' + [A l(l+1)/r^2 + A alpha r^2 - 1/r^4] u = E u,   A = mu/m_a,

with the short-range physics folded into the zero-energy solution
``sqrt(r) [cos(d) J_{l+1/2}(xi) + sin(d) Y_{l+1/2}(xi)]``, ``xi = 1/(sqrt(A) r)``,
``d = -phi - l pi/2``, imposed at a small inner radius.  Without the ion the
regular solution ``u(0) = 0`` is used instead.

The equation is integrated with the renormalized Numerov method on a grid
that is uniform in ``x = c r - s/r``.  The map keeps the number of points per
local wavelength roughly constant from the 1/r^4 core out to the trap
turning points.  Eigenvalues are located by bisection on the Sturm count
(negative Numerov ratios), which cannot skip a level.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import brentq
from scipy.special import jv, jvp, yv, yvp

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
R_MIN_MAX = 0.005


class RadialError(RuntimeError):
    """Numerical failure in the radial eigensolver."""


class MissedLevelError(RadialError):
    """A located eigenfunction does not have the node count of its level index."""


@dataclass(frozen=True)
class QuantumDefect:
    """Short-range phase ``phi`` and the mixing angle it implies for each ``l``."""

    phi: float

    def delta(self, l: int) -> float:
        return -self.phi - l * math.pi / 2


# --------------------------------------------------------------------------
# short-range reference solution


def _xi(r, mass_ratio):
    return 1.0 / (math.sqrt(mass_ratio) * np.asarray(r, dtype=float))


def reference_solution(l: int, phi: float, r, mass_ratio: float):
    """Zero-energy solution of the pure -1/r^4 problem (unnormalized).

    Returns ``sqrt(r) [cos(d) J_nu(xi) + sin(d) Y_nu(xi)]`` with
    ``nu = l + 1/2``; this is ``J + tan(d) Y`` up to the constant ``cos(d)``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("reference solution needs r > 0")
    d = QuantumDefect(phi).delta(l)
    xi = _xi(r, mass_ratio)
    nu = l + 0.5
    return np.sqrt(r) * (math.cos(d) * jv(nu, xi) + math.sin(d) * yv(nu, xi))


def reference_log_derivative(l: int, phi: float, r, mass_ratio: float):
    """u'/u of :func:`reference_solution`."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("reference solution needs r > 0")
    d = QuantumDefect(phi).delta(l)
    xi = _xi(r, mass_ratio)
    nu = l + 0.5
    z = math.cos(d) * jv(nu, xi) + math.sin(d) * yv(nu, xi)
    dz = math.cos(d) * jvp(nu, xi) + math.sin(d) * yvp(nu, xi)
    return 0.5 / r - dz * xi / r / z


# --------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class RadialGrid:
    """Grid uniform in ``x = c r - s/r`` on ``[r_min, r_max]``.

    ``s = 1`` concentrates points where the ion potential makes the wave
    function oscillate like ``sin(1/(sqrt(A) r))``; ``s = 0`` is a plain
    uniform grid starting at the origin (no ion).
    """

    c: float
    s: float
    r_min: float
    r_max: float
    h: float
    n: int
    x: np.ndarray = field(init=False, repr=False, compare=False)
    r: np.ndarray = field(init=False, repr=False, compare=False)
    jac: np.ndarray = field(init=False, repr=False, compare=False)
    schwarzian: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x0 = self._x_of_r(self.r_min)
        x = x0 + self.h * np.arange(self.n)
        if self.s:
            c, s = self.c, self.s
            r = (x + np.sqrt(x * x + 4 * c * s)) / (2 * c)
            p = c + s / r**2
            p1 = -2 * s / r**3
            p2 = 6 * s / r**4
            jac = 1.0 / p
            schw = -p2 / p**3 + 1.5 * p1**2 / p**4
        else:
            r = x / self.c
            jac = np.full(self.n, 1.0 / self.c)
            schw = np.zeros(self.n)
        w = self.h * jac
        w[0] *= 0.5
        w[-1] *= 0.5
        for k, v in (("x", x), ("r", r), ("jac", jac), ("schwarzian", schw), ("weights", w)):
            v.setflags(write=False)
            object.__setattr__(self, k, v)

    def _x_of_r(self, r):
        return self.c * r - (self.s / r if self.s else 0.0)

    @classmethod
    def build(cls, c, s, r_min, r_max, h):
        span = cls._x_of_span(c, s, r_min, r_max)
        n = int(math.ceil(span / h)) + 1
        if (n - 1) % 2:
            n += 1  # coarse grid (every other point) must end on the last node
        return cls(c=c, s=s, r_min=r_min, r_max=r_min_rmax_end(c, s, r_min, h, n), h=h, n=n)

    @staticmethod
    def _x_of_span(c, s, r_min, r_max):
        f = (lambda r: c * r - s / r) if s else (lambda r: c * r)
        return f(r_max) - f(r_min)

    def coarse(self) -> RadialGrid:
        """Every other node; used for Richardson extrapolation of eigenvalues."""
        return RadialGrid(self.c, self.s, self.r_min, self.r_max, 2 * self.h, (self.n - 1) // 2 + 1)

    def integrate(self, f, axis=-1):
        """Trapezoid rule in x, i.e. int f dr."""
        return np.tensordot(f, self.weights, axes=([axis], [0])) if np.ndim(f) > 1 else float(np.dot(f, self.weights))

    def descriptor(self) -> dict:
        return {"map": "x = c*r - s/r", "c": self.c, "s": self.s, "r_min": self.r_min,
                "r_max": self.r_max, "h": self.h, "n": self.n}


def r_min_rmax_end(c, s, r_min, h, n):
    x_end = (c * r_min - (s / r_min if s else 0.0)) + h * (n - 1)
    if s:
        return (x_end + math.sqrt(x_end * x_end + 4 * c * s)) / (2 * c)
    return x_end / c


def _outer_radius(E_hi, alpha, mass_ratio, tail):
    """Radius where the WKB decay exponent beyond the turning point of E_hi reaches ``tail``."""
    a = alpha * mass_ratio
    rt = math.sqrt(max(E_hi, 1e-12) / a)

    def decay(R):
        if R <= rt:
            return -tail
        s = math.sqrt(R * R - rt * rt)
        return 0.5 * math.sqrt(alpha) * (R * s - rt * rt * math.log((R + s) / rt)) - tail

    hi = rt + 1.0
    while decay(hi) < 0:
        hi *= 1.5
    R = brentq(decay, rt, hi)
    # keep at least 20 E* of potential above the top energy
    R20 = math.sqrt((max(E_hi, 0.0) + 20.0) / a)
    return max(R, R20)


def make_grid(E_lo: float, E_hi: float, alpha: float, mass_ratio: float, ion: bool = True,
              points_per_wavelength: float = 240.0, core_ratio: float = 1e6,
              tail: float = 30.0) -> RadialGrid:
    """Grid resolving every eigenfunction with energy in ``[E_lo, E_hi]``.

    The inner radius satisfies ``1/r_min^4 = core_ratio * max(|E|)``, so the
    neglected energy and trap terms are small next to the ion potential
    where the reference solution is imposed.  It never exceeds
    ``R_MIN_MAX``: the eigenvalue error from the zero-energy start falls
    off like r_min^2.5 and is ~2e-7 relative there.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    e_abs = max(abs(E_lo), abs(E_hi), 1.0)
    c = math.sqrt(max(E_hi, 1.0))
    h = 2 * math.pi * math.sqrt(mass_ratio) / points_per_wavelength
    r_max = _outer_radius(E_hi, alpha, mass_ratio, tail)
    if ion:
        r_min = min((1.0 / (core_ratio * e_abs)) ** 0.25, R_MIN_MAX)
        grid = RadialGrid.build(c, 1.0, r_min, r_max, h)
    else:
        grid = RadialGrid.build(c, 0.0, 0.0, r_max, h)
    return grid


# --------------------------------------------------------------------------
# renormalized Numerov kernels


@numba.njit(cache=True, nogil=True)
def _sturm_count(E, h2, rho, qq, w0, w1, start):
    n = rho.shape[0]
    T0 = -h2 * (E * rho[start] + qq[start]) / 12.0
    T1 = -h2 * (E * rho[start + 1] + qq[start + 1]) / 12.0
    F0 = (1.0 - T0) * w0
    F1 = (1.0 - T1) * w1
    R = F1 / F0 if F0 != 0.0 else np.inf
    cnt = 1 if R < 0.0 else 0
    for i in range(start + 1, n - 1):
        T = -h2 * (E * rho[i] + qq[i]) / 12.0
        R = (2.0 + 10.0 * T) / (1.0 - T) - 1.0 / R
        if R < 0.0:
            cnt += 1
    return cnt


@numba.njit(cache=True, nogil=True)
def _bisect_level(idx, lo, hi, h2, rho, qq, w0, w1, start, rtol):
    # smallest E with count(E) > idx, i.e. the idx-th eigenvalue
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= rtol * max(1.0, abs(mid)):
            return mid
        if _sturm_count(mid, h2, rho, qq, w0, w1, start) > idx:
            hi = mid
        else:
            lo = mid


@numba.njit(cache=True, nogil=True)
def _numerov_wavefunction(E, h2, rho, qq, w0, w1, start):
    n = rho.shape[0]
    T = np.zeros(n)
    U = np.zeros(n)
    for i in range(start, n):
        T[i] = -h2 * (E * rho[i] + qq[i]) / 12.0
        U[i] = (2.0 + 10.0 * T[i]) / (1.0 - T[i])
    F0 = (1.0 - T[start]) * w0
    F1 = (1.0 - T[start + 1]) * w1
    # matching point: outermost classically allowed node
    m = start + 1
    for i in range(n - 2, start + 1, -1):
        if E * rho[i] + qq[i] > 0.0:
            m = i
            break
    # outward ratios R[i] = F[i+1]/F[i]
    R = np.empty(n)
    R[start] = F1 / F0 if F0 != 0.0 else np.inf
    for i in range(start + 1, m):
        R[i] = U[i] - 1.0 / R[i - 1]
    # inward ratios P[i] = F[i+1]/F[i] with F[n-1] = 0
    P = np.empty(n)
    P[n - 2] = 0.0
    for i in range(n - 2, m, -1):
        P[i - 1] = 1.0 / (U[i] - P[i])
    F = np.zeros(n)
    F[m] = 1.0
    for i in range(m - 1, start - 1, -1):
        F[i] = F[i + 1] / R[i]
    for i in range(m + 1, n):
        F[i] = F[i - 1] * P[i - 1]
    # Numerov residual at the matching node
    mismatch = F[m + 1] - U[m] * F[m] + F[m - 1]
    w = np.zeros(n)
    for i in range(start, n):
        w[i] = F[i] / (1.0 - T[i])
    if F0 == 0.0:
        w[start] = 0.0
    return w, mismatch


# --------------------------------------------------------------------------
# single-l problem


@dataclass
class RadialProblem:
    """Discretised radial equation for one ``l`` on a given grid."""

    l: int
    phi: float | None
    alpha: float
    mass_ratio: float
    grid: RadialGrid
    rho: np.ndarray = field(init=False, repr=False)
    qq: np.ndarray = field(init=False, repr=False)
    w0: float = field(init=False)
    w1: float = field(init=False)
    start: int = field(init=False)

    def __post_init__(self):
        g, A, l = self.grid, self.mass_ratio, self.l
        r = g.r
        with np.errstate(divide="ignore", invalid="ignore"):
            V = A * self.alpha * r**2 + A * l * (l + 1) / r**2
            if self.phi is not None:
                V = V - 1.0 / r**4
        self.rho = g.jac**2 / A
        self.qq = -(g.jac**2) * V / A + 0.5 * g.schwarzian
        if self.phi is None:
            # Dirichlet node just inside the centrifugal barrier; u ~ r^(l+1) is
            # negligible there and (1 - T) > 0 holds from it onwards
            self.qq[0] = 0.0
            T = -(g.h**2) * self.qq / 12.0
            bad = np.flatnonzero(T >= 0.25)
            self.start = int(bad[-1]) + 1 if len(bad) else 0
            self.rho[: self.start] = 0.0
            self.qq[: self.start] = 0.0
            self.w0, self.w1 = 0.0, 1.0
        else:
            self.start = 0
            u = reference_solution(l, self.phi, r[:2], A)
            w = u / np.sqrt(g.jac[:2])
            scale = max(abs(w[0]), abs(w[1]))
            self.w0, self.w1 = float(w[0] / scale), float(w[1] / scale)

    @property
    def ion(self) -> bool:
        return self.phi is not None

    def count(self, E: float) -> int:
        """Number of discrete eigenvalues below ``E``."""
        return int(_sturm_count(float(E), self.grid.h**2, self.rho, self.qq, self.w0, self.w1, self.start))

    def check_step(self, E_lo: float):
        # (1 - T) > 0 keeps the ratio sign count equal to the node count
        T = -(self.grid.h**2) * (E_lo * self.rho + self.qq) / 12.0
        if np.nanmax(T[self.start + 1:]) >= 0.5:
            raise RadialError(f"grid too coarse for E={E_lo} at l={self.l} (max T={np.nanmax(T):.3g})")

    def eigenvalue(self, idx: int, lo: float, hi: float, rtol: float = 1e-14) -> float:
        return float(_bisect_level(idx, lo, hi, self.grid.h**2, self.rho, self.qq, self.w0, self.w1,
                                  self.start, rtol))

    def eigenvalues(self, E_lo: float, E_hi: float, rtol: float = 1e-14):
        """(indices, energies) of all levels in ``[E_lo, E_hi)``."""
        n_lo, n_hi = self.count(E_lo), self.count(E_hi)
        idx = np.arange(n_lo, n_hi)
        E = np.array([self.eigenvalue(i, E_lo, E_hi, rtol) for i in idx])
        return idx, E

    def wavefunction(self, E: float, n: int | None = None):
        """Normalized u(r) at eigenvalue ``E``; checks the node count if ``n`` given."""
        g = self.grid
        w, _ = _numerov_wavefunction(float(E), g.h**2, self.rho, self.qq, self.w0, self.w1, self.start)
        u = np.sqrt(g.jac) * w
        norm = math.sqrt(float(np.dot(g.weights, u * u)))
        if not np.isfinite(norm) or norm == 0:
            raise RadialError(f"wavefunction construction failed at l={self.l}, E={E}")
        u /= norm
        if n is not None:
            nodes = count_nodes(u)
            if nodes != n:
                raise MissedLevelError(f"l={self.l} level {n} at E={E:.10g} has {nodes} nodes")
        return u


def count_nodes(u) -> int:
    """Sign changes of ``u`` over its nonzero samples."""
    u = np.asarray(u)
    s = np.sign(u[u != 0])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def numerov_scan(l: int, phi: float | None, E_window, alpha: float, mass_ratio: float,
                 grid: RadialGrid | None = None, points_per_wavelength: float = 240.0,
                 richardson: bool = True):
    """All eigenvalues of the radial problem in ``E_window``.

    ``phi=None`` switches off the ion.  With ``richardson`` the Numerov
    O(h^4) error is removed by comparing with the grid of step 2h.

    Returns
    -------
    idx : ndarray of int
        Level indices (node counts on the grid).
    E : ndarray
        Eigenvalues in units of E*.
    """
    E_lo, E_hi = map(float, E_window)
    if not (math.isfinite(E_lo) and math.isfinite(E_hi) and E_hi > E_lo):
        raise ValueError("E_window must be a finite, increasing pair")
    if grid is None:
        grid = make_grid(E_lo, E_hi, alpha, mass_ratio, ion=phi is not None,
                         points_per_wavelength=points_per_wavelength)
    prob = RadialProblem(l, phi, alpha, mass_ratio, grid)
    prob.check_step(E_lo)
    idx, E = prob.eigenvalues(E_lo, E_hi)
    if richardson and len(E):
        E = _richardson(prob, idx, E)
    return idx, E


def _richardson(prob: RadialProblem, idx, E):
    coarse = RadialProblem(prob.l, prob.phi, prob.alpha, prob.mass_ratio, prob.grid.coarse())
    out = np.empty_like(E)
    for k, (i, e) in enumerate(zip(idx, E)):
        span = 1e-3 * max(1.0, abs(e))
        lo, hi = e - span, e + span
        while coarse.count(lo) > i:
            lo -= 4 * span
        while coarse.count(hi) <= i:
            hi += 4 * span
        ec = coarse.eigenvalue(int(i), lo, hi)
        out[k] = e + (e - ec) / 15.0
    return out


# --------------------------------------------------------------------------
# basis


@dataclass(frozen=True)
class RadialEigenstate:
    n: int
    l: int
    E0: float
    u: np.ndarray = field(repr=False, compare=False)


@dataclass
class BasisSet:
    """Eigenstates of the isotropic trap (+ ion), m = 0, sorted by (l, E0).

    Attributes
    ----------
    n, l : ndarray of int
        Level index (node count) and angular momentum of each state.
    energies : ndarray
        E0 in units of E*.
    u : ndarray, shape (K, grid.n)
        Reduced radial functions, normalized with ``grid.weights``.
    """

    alpha: float
    phi: float | None
    mass_ratio: float
    l_max: int
    E_min: float
    grid: RadialGrid
    n: np.ndarray
    l: np.ndarray
    energies: np.ndarray
    u: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.energies)

    @property
    def ion(self) -> bool:
        return self.phi is not None

    def __len__(self):
        return self.size

    @property
    def states(self) -> list[RadialEigenstate]:
        return [RadialEigenstate(int(n), int(l), float(e), u)
                for n, l, e, u in zip(self.n, self.l, self.energies, self.u)]

    def block(self, l: int) -> np.ndarray:
        """Indices of the states with angular momentum ``l``."""
        return np.flatnonzero(self.l == l)

    def overlap(self, l: int) -> np.ndarray:
        ix = self.block(l)
        U = self.u[ix]
        return (U * self.grid.weights) @ U.T

    def metadata(self) -> dict:
        d = {"format_version": FORMAT_VERSION, "alpha": self.alpha, "phi": self.phi,
             "mass_ratio": self.mass_ratio, "l_max": self.l_max, "K": self.size,
             "E_min": self.E_min, "grid": self.grid.descriptor()}
        d.update(self.meta)
        return d

    def content_hash(self) -> str:
        return basis_key(self.alpha, self.phi, self.mass_ratio, self.l_max, self.size, self.E_min,
                         self.meta.get("points_per_wavelength", 240.0))


def basis_key(alpha, phi, mass_ratio, l_max, K, E_min, points_per_wavelength=240.0) -> str:
    """Content hash of everything that determines a basis."""
    payload = {"v": FORMAT_VERSION, "alpha": repr(float(alpha)),
               "phi": None if phi is None else repr(float(phi)),
               "mass_ratio": repr(float(mass_ratio)), "l_max": int(l_max), "K": int(K),
               "E_min": repr(float(E_min)), "ppw": repr(float(points_per_wavelength))}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _estimate_top_energy(K, alpha, mass_ratio, l_max):
    hw = mass_ratio * math.sqrt(alpha)
    E = 3 * hw
    while True:
        N = E / hw
        cnt = sum(max(0, int((N - 3 - 2 * l) // 4) + 1) for l in range(l_max + 1))
        if cnt >= K:
            return E
        E *= 1.1


def build_basis(alpha: float, phi: float | None, mass_ratio: float, l_max: int = 48,
                K: int = 1250, E_min: float = -2000.0, points_per_wavelength: float = 240.0,
                workers: int = 1) -> BasisSet:
    """Lowest ``K`` radial eigenstates with ``E0 >= E_min`` over ``l = 0..l_max``.

    ``phi=None`` gives the pure harmonic-oscillator basis.
    """
    if l_max < 0 or K < 1:
        raise ValueError("need l_max >= 0 and K >= 1")
    E_hi = _estimate_top_energy(K, alpha, mass_ratio, l_max) * 1.05 + 5.0
    while True:
        grid = make_grid(E_min, E_hi, alpha, mass_ratio, ion=phi is not None,
                         points_per_wavelength=points_per_wavelength)
        probs = [RadialProblem(l, phi, alpha, mass_ratio, grid) for l in range(l_max + 1)]
        probs[0].check_step(E_min)
        base = np.array([p.count(E_min) for p in probs])
        total = sum(p.count(E_hi) for p in probs) - base.sum()
        if total >= K:
            break
        E_hi = E_hi * 1.25 + 5.0
    # energy cut holding exactly K states (levels are nondegenerate within an l)
    def n_below(E):
        return sum(p.count(E) for p in probs) - base.sum()

    lo, hi = E_min, E_hi
    while hi - lo > 1e-12 * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if n_below(mid) >= K:
            hi = mid
        else:
            lo = mid
    E_cut = hi
    if n_below(E_cut) != K:
        logger.warning("degenerate levels at the basis cut; keeping %d states", n_below(E_cut))

    def solve(p: RadialProblem):
        n_hi = p.count(E_cut)
        lo_i = p.count(E_min)
        idx = np.arange(lo_i, n_hi)
        E = np.array([p.eigenvalue(int(i), E_min, E_hi) for i in idx])
        U = np.array([p.wavefunction(e, int(i)) for i, e in zip(idx, E)]).reshape(len(idx), grid.n)
        Er = _richardson(p, idx, E) if len(E) else E
        return p.l, idx, Er, U

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(solve, probs))
    else:
        results = [solve(p) for p in probs]
    ns, ls, Es, Us = [], [], [], []
    for l, idx, E, U in results:
        ns.append(idx)
        ls.append(np.full(len(idx), l))
        Es.append(E)
        Us.append(U)
    basis = BasisSet(alpha=alpha, phi=phi, mass_ratio=mass_ratio, l_max=l_max, E_min=E_min, grid=grid,
                     n=np.concatenate(ns).astype(int), l=np.concatenate(ls).astype(int),
                     energies=np.concatenate(Es), u=np.concatenate(Us, axis=0),
                     meta={"points_per_wavelength": points_per_wavelength, "E_cut": E_cut,
                           "n_bound": int(np.count_nonzero(np.concatenate(Es) < 0))})
    return basis


def harmonic_energy(n: int, l: int, alpha: float, mass_ratio: float) -> float:
    """(mu/m_a) sqrt(alpha) (4n + 2l + 3)."""
    return mass_ratio * math.sqrt(alpha) * (4 * n + 2 * l + 3)
