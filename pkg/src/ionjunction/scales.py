"""Physical scales of the atom-ion polarisation potential and unit conversions.

Everything downstream of this module works in the natural units of the
-C4/r^4 potential: lengths in R*, energies in E*, times in hbar/E*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants as _c

HBAR = _c.hbar
AMU = _c.physical_constants["atomic mass constant"][0]
BOHR = _c.physical_constants["Bohr radius"][0]
HARTREE = _c.physical_constants["Hartree energy"][0]
TWO_PI = 2.0 * math.pi

# 87Rb / 171Yb+ defaults.  C4 = alpha_p / 2 in atomic units.
RB87_MASS_U = 86.909180527
YB171_MASS_U = 170.936323
RB_POLARIZABILITY_AU = 318.8
DEFAULT_C4_AU = RB_POLARIZABILITY_AU / 2.0


class ScalesError(ValueError):
    """Raised for non-physical inputs to the scale definitions."""


def c4_from_polarizability(alpha_p_au: float) -> float:
    """C4 = e^2 alpha_p / 2, returned in J m^4 for alpha_p in atomic units."""
    return 0.5 * alpha_p_au * HARTREE * BOHR**4


def c4_au_to_si(c4_au: float) -> float:
    return c4_au * HARTREE * BOHR**4


@dataclass(frozen=True)
class SystemScales:
    """Masses, dispersion coefficient and the derived R*, E*.

    Attributes
    ----------
    m_a, m_i : float
        Atom and ion masses (kg).
    C4 : float
        Dispersion coefficient (J m^4).
    mu : float
        Reduced mass (kg).
    R_star : float
        Characteristic length (m).
    E_star : float
        Characteristic energy (J).
    """

    m_a: float
    m_i: float
    C4: float
    mu: float
    R_star: float
    E_star: float

    @property
    def mass_ratio(self) -> float:
        """mu / m_a, the kinetic prefactor of the static-ion problem."""
        return self.mu / self.m_a

    @property
    def omega_star(self) -> float:
        """E*/hbar in rad/s."""
        return self.E_star / HBAR

    @property
    def time_unit(self) -> float:
        """hbar/E* in seconds."""
        return HBAR / self.E_star

    # length / energy / time / frequency conversions
    def length_to_si(self, x):
        return np.multiply(x, self.R_star)

    def length_from_si(self, x):
        return np.divide(x, self.R_star)

    def energy_to_si(self, e):
        return np.multiply(e, self.E_star)

    def energy_from_si(self, e):
        return np.divide(e, self.E_star)

    def time_to_si(self, t):
        return np.multiply(t, self.time_unit)

    def time_from_si(self, t):
        return np.divide(t, self.time_unit)

    def time_to_ms(self, t):
        return np.multiply(t, 1e3 * self.time_unit)

    def time_from_ms(self, t_ms):
        return np.divide(np.multiply(t_ms, 1e-3), self.time_unit)

    def frequency_to_dimensionless(self, f, angular: bool = False):
        """Convert a frequency (Hz, or rad/s with ``angular=True``) to units of E*/hbar."""
        w = f if angular else np.multiply(f, TWO_PI)
        return np.divide(w, self.omega_star)

    def frequency_from_dimensionless(self, x, angular: bool = False):
        """Inverse of :meth:`frequency_to_dimensionless`; Hz unless ``angular``."""
        w = np.multiply(x, self.omega_star)
        return w if angular else np.divide(w, TWO_PI)

    def trap(self, omega_a: float) -> TrapGeometry:
        """Trap geometry for an angular trap frequency (rad/s) with q unset."""
        return TrapGeometry(alpha=self.alpha_from_omega(omega_a), omega_a=omega_a)

    def alpha_from_omega(self, omega_a: float) -> float:
        """alpha = (R*/l0)^4 with l0 = sqrt(hbar / (m_a omega_a))."""
        if omega_a <= 0:
            raise ScalesError("trap frequency must be positive")
        l0 = math.sqrt(HBAR / (self.m_a * omega_a))
        return (self.R_star / l0) ** 4

    def omega_from_alpha(self, alpha: float) -> float:
        if alpha <= 0:
            raise ScalesError("alpha must be positive")
        l0 = self.R_star / alpha**0.25
        return HBAR / (self.m_a * l0**2)


def derive_scales(m_a: float, m_i: float, C4: float) -> SystemScales:
    """Build :class:`SystemScales` from SI masses and C4.

    >>> s = derive_scales(87 * AMU, 87 * AMU, c4_au_to_si(DEFAULT_C4_AU))
    >>> abs(s.mu - 87 * AMU / 2) < 1e-40
    True
    """
    for name, v in (("m_a", m_a), ("m_i", m_i), ("C4", C4)):
        if not (v > 0 and math.isfinite(v)):
            raise ScalesError(f"{name} must be positive and finite, got {v!r}")
    mu = m_a * m_i / (m_a + m_i)
    R_star = math.sqrt(2.0 * mu * C4) / HBAR
    E_star = HBAR**2 / (2.0 * mu * R_star**2)
    return SystemScales(m_a=m_a, m_i=m_i, C4=C4, mu=mu, R_star=R_star, E_star=E_star)


def default_scales(c4_au: float = DEFAULT_C4_AU) -> SystemScales:
    """87Rb atom and 171Yb+ ion."""
    return derive_scales(RB87_MASS_U * AMU, YB171_MASS_U * AMU, c4_au_to_si(c4_au))


@dataclass(frozen=True)
class TrapGeometry:
    """Double-well trap in R*/E* units with omega_q = omega_a.

    ``alpha`` fixes the harmonic confinement, ``q`` is half the well
    separation.  The barrier height follows from equal local frequencies.
    """

    alpha: float
    omega_a: float
    q: float | None = None

    def barrier(self, mass_ratio: float, q: float | None = None) -> float:
        q = self.q if q is None else q
        if q is None or q <= 0:
            raise ScalesError("barrier needs a positive separation q")
        return barrier_height(self.alpha, q, mass_ratio)

    def with_q(self, q: float) -> TrapGeometry:
        return TrapGeometry(self.alpha, self.omega_a, q)


def barrier_height(alpha: float, q: float, mass_ratio: float) -> float:
    """b/E* = alpha (mu/m_a) q^2 / 4, from omega_q = sqrt(8 b / (m_a q^2)) = omega_a."""
    return alpha * mass_ratio * q * q / 4.0


def phase_from_scattering_length(a_ia: float) -> float:
    """Short-range phase from a_ia = -cot(phi) (a_ia in R*).

    The branch is phi in (-pi/2, pi/2]; a_ia = 0 maps to pi/2.
    """
    a_ia = float(a_ia)
    if not math.isfinite(a_ia):
        raise ScalesError("scattering length must be finite")
    if a_ia == 0.0:
        return math.pi / 2
    return math.atan(-1.0 / a_ia)


def scattering_length_from_phase(phi: float) -> float:
    """a_ia / R* = -cot(phi); inf at phi = 0 (mod pi)."""
    s = math.sin(phi)
    if s == 0.0:
        return math.inf
    return -math.cos(phi) / s


def wrap_phase(phi: float) -> float:
    """Map phi onto (-pi/2, pi/2]; the boundary condition is pi-periodic."""
    w = math.remainder(phi, math.pi)
    if w <= -math.pi / 2:
        w += math.pi
    return w
