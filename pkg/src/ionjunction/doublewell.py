"""Quartic double well with an ion at the barrier centre, expanded in the radial basis.

In R*/E* units the trap is

    V(z) = alpha A (z^2 - q^2)^2 / (4 q^2),      A = mu/m_a,

which, expanded around the isotropic oscillator already contained in the basis,
gives

    H = diag(E0) + (A alpha q^2 / 4) I - (3 A alpha / 2) M2 + (A alpha / (4 q^2)) M4

with ``Mj[k, k'] = <k| z^j |k'>``.  The moments do not depend on ``q`` so a
sweep costs one dense eigensolve per point.  States are m = 0 and z-parity is
(-1)^l, so even and odd l decouple and are diagonalised separately.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh
from scipy.special import eval_legendre

from .radial import BasisSet
from .scales import barrier_height, scattering_length_from_phase

logger = logging.getLogger(__name__)

# doublet state counts as molecular when more than this weight sits on E0 < 0 states
BOUND_WEIGHT_CUT = 0.5
TRACK_OVERLAP_MIN = 0.9


class DoubleWellError(RuntimeError):
    """Numerical failure while building or solving the double-well problem."""


# --------------------------------------------------------------------------
# angular algebra


def _z_matrix(L: int) -> np.ndarray:
    """cos(theta) in the Y_l0 basis, l = 0..L."""
    l = np.arange(L, dtype=float)
    off = (l + 1) / np.sqrt((2 * l + 1) * (2 * l + 3))
    return np.diag(off, 1) + np.diag(off, -1)


@lru_cache(maxsize=64)
def _angular_table(L: int, j: int) -> np.ndarray:
    Z = _z_matrix(L + j)
    return np.linalg.matrix_power(Z, j)[: L + 1, : L + 1]


def angular_moment(l: int, lp: int, j: int) -> float:
    """<Y_l0 | cos^j(theta) | Y_l'0> on the unit sphere.

    Products of the three-term recursion for cos(theta) Y_l0 are exact, so the
    only rounding is in the square roots.

    >>> round(angular_moment(0, 0, 2), 15), round(angular_moment(0, 0, 4), 15)
    (0.333333333333333, 0.2)
    """
    if j not in (2, 4):
        raise ValueError(f"only j = 2 and 4 are supported, got {j}")
    if l < 0 or lp < 0:
        raise ValueError("angular momenta must be non-negative")
    if abs(l - lp) > j or (l - lp) % 2:
        return 0.0
    return float(_angular_table(max(l, lp), j)[l, lp])


def half_space_table(l_max: int, order: int | None = None) -> np.ndarray:
    """T[l, l'] = integral of Y_l0 Y_l'0 over the z > 0 hemisphere.

    Gauss-Legendre in cos(theta) on [0, 1]; the integrand is a polynomial of
    degree l + l' so the default order is exact.
    """
    order = order or 2 * l_max + 8
    x, w = np.polynomial.legendre.leggauss(order)
    mu = 0.5 * (x + 1.0)
    w = 0.5 * w
    Y = ylm0(np.arange(l_max + 1), mu)
    return 2 * math.pi * (Y * w) @ Y.T


def ylm0(ls, mu) -> np.ndarray:
    """Y_l0(theta) for cos(theta) = mu, shape (len(ls), len(mu))."""
    ls = np.asarray(ls)[:, None]
    return np.sqrt((2 * ls + 1) / (4 * math.pi)) * eval_legendre(ls, np.asarray(mu)[None, :])


# --------------------------------------------------------------------------
# moments and Hamiltonian


@dataclass(frozen=True)
class MomentMatrices:
    """z^2 and z^4 in the basis.

    Attributes
    ----------
    M2, M4 : ndarray, shape (K, K)
    quad_error : float
        Largest change of a radial integral between the grid and its every
        other node subgrid, relative to the largest element.
    """

    M2: np.ndarray = field(repr=False)
    M4: np.ndarray = field(repr=False)
    quad_error: float = 0.0

    def asymmetry(self) -> float:
        return max(np.abs(self.M2 - self.M2.T).max(), np.abs(self.M4 - self.M4.T).max())


def moment_matrices(basis: BasisSet, check: bool = True, tol: float = 1e-8) -> MomentMatrices:
    """Angular factor times radial integral of u_k r^j u_k' for j = 2, 4."""
    K = basis.size
    g = basis.grid
    W = g.weights
    r2 = g.r**2
    r4 = r2 * r2
    A2 = _angular_table(basis.l_max, 2)
    A4 = _angular_table(basis.l_max, 4)
    M2 = np.zeros((K, K))
    M4 = np.zeros((K, K))
    blocks = [basis.block(l) for l in range(basis.l_max + 1)]
    err = 0.0
    if check:
        gc = g.coarse()
        Wc, rc2 = gc.weights, gc.r**2
    for l in range(basis.l_max + 1):
        il = blocks[l]
        if il.size == 0:
            continue
        ul = basis.u[il]
        for lp in range(l, min(l + 4, basis.l_max) + 1, 2):
            ip = blocks[lp]
            if ip.size == 0:
                continue
            up = basis.u[ip]
            R4 = (ul * (W * r4)) @ up.T
            M4[np.ix_(il, ip)] = A4[l, lp] * R4
            if lp <= l + 2:
                R2 = (ul * (W * r2)) @ up.T
                M2[np.ix_(il, ip)] = A2[l, lp] * R2
            if check:
                R4c = (ul[:, ::2] * (Wc * rc2 * rc2)) @ up[:, ::2].T
                scale = max(np.abs(R4).max(), 1e-300)
                err = max(err, np.abs(R4 - R4c).max() / scale)
    M2 = np.triu(M2) + np.triu(M2, 1).T
    M4 = np.triu(M4) + np.triu(M4, 1).T
    if check and err > tol:
        raise DoubleWellError(f"radial moment quadrature not converged: subgrid change {err:.2e}")
    return MomentMatrices(M2=M2, M4=M4, quad_error=err)


def assemble(basis: BasisSet, moments: MomentMatrices, q: float) -> np.ndarray:
    """Double-well Hamiltonian for half-separation ``q`` (R*)."""
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    Aa = basis.mass_ratio * basis.alpha
    H = (-1.5 * Aa) * moments.M2 + (Aa / (4 * q * q)) * moments.M4
    H[np.diag_indices_from(H)] += basis.energies + barrier_height(basis.alpha, q, basis.mass_ratio)
    return H


# --------------------------------------------------------------------------
# coordinate-space quantities


def radial_components(basis: BasisSet, coeffs) -> np.ndarray:
    """f_l(r) = sum over states of angular momentum l of c_k u_k(r), shape (l_max+1, n_r)."""
    c = np.asarray(coeffs)
    F = np.zeros((basis.l_max + 1, basis.grid.n), dtype=c.dtype)
    for l in range(basis.l_max + 1):
        ix = basis.block(l)
        if ix.size:
            F[l] = c[ix] @ basis.u[ix]
    return F


def half_space_probability(basis: BasisSet, coeffs, table: np.ndarray | None = None) -> float:
    """Probability of ``z > 0`` for the state with expansion ``coeffs``."""
    F = radial_components(basis, coeffs)
    T = half_space_table(basis.l_max) if table is None else table
    R = (F * basis.grid.weights) @ F.conj().T
    return float(np.real(np.sum(T * R)))


def _angular_grid(l_max: int, order: int | None = None):
    order = order or 2 * l_max + 8
    x, w = np.polynomial.legendre.leggauss(order)
    return ylm0(np.arange(l_max + 1), x), 2 * math.pi * w


def density_integrals(basis: BasisSet, a, b) -> tuple[float, float]:
    """(integral |Phi_a|^4, integral |Phi_a|^2 |Phi_b|^2) over all space."""
    Y, w = _angular_grid(basis.l_max)
    g = basis.grid
    Fa = radial_components(basis, a).T @ Y
    Fb = radial_components(basis, b).T @ Y
    da = np.abs(Fa) ** 2
    db = np.abs(Fb) ** 2
    # u ~ r at the origin of the ion-free grid, so u^4/r^2 vanishes there
    rw = np.divide(g.weights, g.r**2, out=np.zeros_like(g.r), where=g.r > 0)
    return float(rw @ (da * da) @ w), float(rw @ (da * db) @ w)


def z_density(basis: BasisSet, coeffs, z, rho_max: float | None = None, n_rho: int = 200):
    """Column density along z, integrated over the transverse plane."""
    z = np.asarray(z, dtype=float)
    rho_max = rho_max or basis.grid.r_max
    rho = np.linspace(0.0, rho_max, n_rho)
    Z, P = np.meshgrid(z, rho, indexing="ij")
    r = np.hypot(Z, P)
    r = np.clip(r, basis.grid.r[0], basis.grid.r[-1])
    mu = np.divide(Z, r, out=np.zeros_like(Z), where=r > 0)
    F = radial_components(basis, coeffs)
    psi = np.zeros(Z.shape, dtype=F.dtype)
    for l in range(basis.l_max + 1):
        if not np.any(F[l]):
            continue
        fl = np.interp(r, basis.grid.r, F[l].real)
        if np.iscomplexobj(F):
            fl = fl + 1j * np.interp(r, basis.grid.r, F[l].imag)
        psi += fl / r * ylm0([l], mu.ravel())[0].reshape(mu.shape)
    dens = np.abs(psi) ** 2 * 2 * math.pi * P
    return np.trapezoid(dens, rho, axis=1)


def onsite_prefactor(a_aa_rstar: float, mass_ratio: float) -> float:
    """U0 / E* with U = U0 * integral |Phi_L|^4 (Phi in R*^-3/2)."""
    if not a_aa_rstar > 0:
        raise ValueError("atom-atom scattering length must be positive")
    return 8 * math.pi * a_aa_rstar * mass_ratio


def onsite_interaction(basis: BasisSet, phi_L, a_aa_rstar: float) -> tuple[float, float]:
    """(U, cross) where ``cross`` is the same prefactor times the L-R density overlap.

    ``cross`` is neglected in the two-mode model and only reported.
    """
    if abs(np.vdot(phi_L, phi_L) - 1) > 1e-8:
        raise ValueError("Phi_L must be normalized")
    phi_R = mirror(basis, phi_L)
    i4, iLR = density_integrals(basis, phi_L, phi_R)
    u0 = onsite_prefactor(a_aa_rstar, basis.mass_ratio)
    return u0 * i4, u0 * iLR


def leakage(basis: BasisSet, phi_L, table: np.ndarray | None = None) -> float:
    """Weight of a left-localised mode in the right half space."""
    return half_space_probability(basis, phi_L, table)


def mirror(basis: BasisSet, coeffs) -> np.ndarray:
    """Apply z -> -z: Y_l0 picks up (-1)^l."""
    return np.where(basis.l % 2 == 0, 1.0, -1.0) * np.asarray(coeffs)


def parity_expectation(basis: BasisSet, coeffs) -> float:
    c = np.asarray(coeffs)
    return float(np.real(np.vdot(c, mirror(basis, c))))


# --------------------------------------------------------------------------
# solve at one q


@dataclass
class ParityBlock:
    """Lowest eigenpairs of one parity sector, vectors embedded in the full basis."""

    parity: int
    energies: np.ndarray
    vectors: np.ndarray = field(repr=False)
    bound_weight: np.ndarray = field(repr=False)

    def trap_like(self, cut: float = BOUND_WEIGHT_CUT) -> np.ndarray:
        return np.flatnonzero(self.bound_weight < cut)


def _solve_parity(basis: BasisSet, H: np.ndarray, parity: int, n_extra: int) -> ParityBlock:
    ix = np.flatnonzero(basis.l % 2 == parity)
    bound = basis.energies[ix] < 0
    n_want = min(ix.size, int(bound.sum()) + n_extra)
    try:
        w, v = eigh(H[np.ix_(ix, ix)], subset_by_index=(0, n_want - 1), driver="evr")
    except np.linalg.LinAlgError as exc:
        raise DoubleWellError(f"eigensolver failed in parity sector {parity}") from exc
    V = np.zeros((basis.size, v.shape[1]))
    V[ix] = v
    return ParityBlock(parity, w, V, (v[bound] ** 2).sum(axis=0))


def solve_sectors(basis: BasisSet, moments: MomentMatrices, q: float, n_extra: int = 30):
    """Even and odd blocks of H(q)."""
    H = assemble(basis, moments, q)
    return tuple(_solve_parity(basis, H, p, n_extra) for p in (0, 1))


@dataclass
class DoubleWellResult:
    """Ground doublet and derived two-mode parameters at one separation.

    Energies in E*, couplings in E*/hbar.  ``E_g < E_e`` always; the parity of
    the lower member is ``ground_parity`` (0 even, 1 odd).  An odd ground
    state happens for repulsive short-range phases and is flagged as
    ``inverted`` rather than relabelled.
    """

    q: float
    phi: float | None
    energies: np.ndarray
    parities: np.ndarray
    E_g: float
    E_e: float
    J: float
    phi_g: np.ndarray = field(repr=False)
    phi_e: np.ndarray = field(repr=False)
    phi_L: np.ndarray = field(repr=False)
    phi_R: np.ndarray = field(repr=False)
    ground_parity: int
    gap_ratio: float
    bound_weight: tuple[float, float]
    U: float | None = None
    U_cross: float | None = None
    epsilon: float | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def inverted(self) -> bool:
        return self.ground_parity == 1

    def summary(self) -> dict:
        return {"q": self.q, "phi": self.phi, "E_g": self.E_g, "E_e": self.E_e, "J": self.J,
                "U": self.U, "U_cross": self.U_cross, "epsilon": self.epsilon,
                "gap_ratio": self.gap_ratio, "ground_parity": self.ground_parity,
                "flags": list(self.flags)}


def _pick(block: ParityBlock, previous: np.ndarray | None):
    """Index of the doublet member in ``block`` and any ambiguity flag."""
    trap = block.trap_like()
    if trap.size == 0:
        raise DoubleWellError(f"no trap-like state in parity sector {block.parity}")
    flags = []
    if previous is not None:
        ov = np.abs(previous @ block.vectors)
        k = int(np.argmax(ov))
        if ov[k] < TRACK_OVERLAP_MIN:
            flags.append(f"tracking overlap {ov[k]:.3f} in parity {block.parity}")
        if k != trap[0]:
            flags.append(f"tracking chose level {k} over lowest trap-like {trap[0]} in parity {block.parity}")
        return k, flags
    k = int(trap[0])
    bw = block.bound_weight
    # a near-threshold molecular state mixing with the trap state
    if bw[k] > 0.1 or np.any((bw[:k] > BOUND_WEIGHT_CUT) & (bw[:k] < 0.9)):
        flags.append(f"doublet member in parity {block.parity} mixes with a bound state "
                     f"(bound weight {bw[k]:.3f})")
    return k, flags


def localized_modes(basis: BasisSet, phi_g, phi_e):
    """(Phi_L, Phi_R) = (Phi_g -/+ Phi_e)/sqrt(2), Phi_e sign chosen so Phi_L sits at z < 0."""
    s = 1.0 / math.sqrt(2.0)
    L = s * (phi_g - phi_e)
    R = s * (phi_g + phi_e)
    T = half_space_table(basis.l_max)
    if half_space_probability(basis, L, T) > 0.5:
        L, R = R, L
    return L, R


def doublet_from_sectors(basis: BasisSet, sectors, q: float, previous=None) -> DoubleWellResult:
    even, odd = sectors
    ke, fe = _pick(even, None if previous is None else previous[0])
    ko, fo = _pick(odd, None if previous is None else previous[1])
    ve, vo = even.vectors[:, ke], odd.vectors[:, ko]
    Ee, Eo = float(even.energies[ke]), float(odd.energies[ko])
    if Ee <= Eo:
        E_g, E_e, g, e, gp = Ee, Eo, ve, vo, 0
    else:
        E_g, E_e, g, e, gp = Eo, Ee, vo, ve, 1
    L, R = localized_modes(basis, g, e)
    # next trap-like level of either parity
    rest = [even.energies[i] for i in even.trap_like() if i != ke and even.energies[i] > E_e - 1e-12]
    rest += [odd.energies[i] for i in odd.trap_like() if i != ko and odd.energies[i] > E_e - 1e-12]
    E2 = min(rest) if rest else math.inf
    split = E_e - E_g
    gap = (E2 - E_e) / split if split > 0 else math.inf
    energies = np.concatenate([even.energies, odd.energies])
    parities = np.concatenate([np.zeros(even.energies.size, int), np.ones(odd.energies.size, int)])
    order = np.argsort(energies, kind="stable")
    flags = fe + fo
    if gp == 1:
        flags.append("inverted doublet: odd state lowest")
    return DoubleWellResult(
        q=q, phi=basis.phi, energies=energies[order], parities=parities[order],
        E_g=E_g, E_e=E_e, J=0.5 * split, phi_g=g, phi_e=e, phi_L=L, phi_R=R,
        ground_parity=gp, gap_ratio=float(gap),
        bound_weight=(float(even.bound_weight[ke]), float(odd.bound_weight[ko])), flags=flags)


def solve_at(basis: BasisSet, moments: MomentMatrices, q: float, a_aa_rstar: float | None = None,
             previous=None, n_extra: int = 30) -> DoubleWellResult:
    """Ground doublet, J, localised modes and (optionally) U and epsilon at ``q``.

    Parameters
    ----------
    previous : tuple of (even, odd) vectors, optional
        Doublet of a neighbouring sweep point; members are then tracked by overlap.
    a_aa_rstar : float, optional
        Atom-atom scattering length in R*; U is skipped when omitted.
    """
    sectors = solve_sectors(basis, moments, q, n_extra)
    res = doublet_from_sectors(basis, sectors, q, previous)
    res.epsilon = leakage(basis, res.phi_L)
    if a_aa_rstar is not None:
        res.U, res.U_cross = onsite_interaction(basis, res.phi_L, a_aa_rstar)
    for f in res.flags:
        logger.warning("q=%.4g phi=%s: %s", q, basis.phi, f)
    return res


def doublet_vectors(res: DoubleWellResult):
    """(even, odd) members, the form ``previous`` expects."""
    return (res.phi_g, res.phi_e) if res.ground_parity == 0 else (res.phi_e, res.phi_g)


def spectrum_sweep(basis: BasisSet, moments: MomentMatrices, qs, n_levels: int = 8,
                   trap_only: bool = True):
    """Low-lying levels along a q sweep.

    Returns a list of (q, energies, parities, result) with ``result`` the
    doublet at that point, tracked by overlap from the previous q.  Points
    that fail are returned with ``result`` set to the exception.
    """
    out = []
    prev = None
    for q in qs:
        try:
            sectors = solve_sectors(basis, moments, float(q))
            res = doublet_from_sectors(basis, sectors, float(q), prev)
        except (DoubleWellError, ValueError) as exc:
            out.append((float(q), np.empty(0), np.empty(0, int), exc))
            prev = None
            continue
        E, P = [], []
        for blk in sectors:
            sel = blk.trap_like() if trap_only else np.arange(blk.energies.size)
            E.append(blk.energies[sel])
            P.append(np.full(sel.size, blk.parity))
        E = np.concatenate(E)
        P = np.concatenate(P)
        order = np.argsort(E, kind="stable")[:n_levels]
        out.append((float(q), E[order], P[order], res))
        prev = doublet_vectors(res)
    return out


@dataclass(frozen=True)
class SpinCoupling:
    """Couplings for the two ion qubit states, in E*/hbar."""

    J_up: float
    J_down: float
    U_up: float
    U_down: float

    def operator(self, which: str = "J") -> np.ndarray:
        """Diagonal operator in the (up, down) basis."""
        if which == "J":
            return np.diag([self.J_up, self.J_down])
        if which == "U":
            return np.diag([self.U_up, self.U_down])
        raise ValueError(which)


@dataclass(frozen=True)
class CouplingRow:
    phi: float | None
    a_ia: float
    J: float
    U: float | None
    epsilon: float
    gap_ratio: float
    flags: tuple[str, ...]


def coupling_vs_phase(q: float, phis, provider, a_aa_rstar: float | None = None,
                      workers: int = 1) -> list[CouplingRow]:
    """J, U, epsilon at fixed ``q`` for each short-range phase.

    ``provider(phi)`` returns ``(basis, moments)``; a fresh basis is needed
    per phase because the boundary condition lives in the radial states.
    Rows come back in input order whatever ``workers`` is.
    """
    def one(phi):
        basis, moments = provider(phi)
        res = solve_at(basis, moments, q, a_aa_rstar=a_aa_rstar)
        a = math.nan if phi is None else scattering_length_from_phase(phi)
        return CouplingRow(phi, a, res.J, res.U, res.epsilon, res.gap_ratio, tuple(res.flags))

    phis = list(phis)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, phis))
    return [one(p) for p in phis]
