"""Frame transformation between separated-atom hyperfine labels and short-range spin channels.

A pair state |F_i m_Fi; F_a m_Fa> (ion first, then atom, each F = i + s) is
re-expressed in |F M_F I S> with I = i_i + i_a and S = s_i + s_a:

    <(i_i s_i)F_i (i_a s_a)F_a; F | (i_i i_a)I (s_i s_a)S; F>
        = sqrt((2F_i+1)(2F_a+1)(2I+1)(2S+1)) {i_i s_i F_i; i_a s_a F_a; I S F}

Angular momenta are passed around as doubled integers so half-integers are
exact; the algebra itself is exact (sympy) and only the API surface is float.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product

import sympy
from sympy.physics.wigner import clebsch_gordan as _cg
from sympy.physics.wigner import wigner_6j as _w6j
from sympy.physics.wigner import wigner_9j as _w9j


class SpinError(ValueError):
    """Malformed angular momentum quantum numbers."""


def _half(x) -> sympy.Rational:
    """Accept an int, a float on the half-integer lattice or a Fraction and return it exactly."""
    f = Fraction(x).limit_denominator(2)
    if f.denominator not in (1, 2) or float(f) != float(x):
        raise SpinError(f"{x!r} is not an integer or half-integer")
    return sympy.Rational(f.numerator, f.denominator)


def _check_jm(j, m):
    if j < 0:
        raise SpinError(f"negative angular momentum {j}")
    if abs(m) > j:
        raise SpinError(f"|m| = {abs(m)} exceeds j = {j}")
    if (j - m) % 1 != 0:
        raise SpinError(f"j = {j} and m = {m} differ by a non-integer")


def _triangle(a, b, c) -> bool:
    return abs(a - b) <= c <= a + b and (a + b + c) % 1 == 0


@lru_cache(maxsize=None)
def clebsch_gordan_exact(j1, m1, j2, m2, J, M) -> sympy.Expr:
    j1, m1, j2, m2, J, M = map(_half, (j1, m1, j2, m2, J, M))
    for j, m in ((j1, m1), (j2, m2), (J, M)):
        _check_jm(j, m)
    if m1 + m2 != M or not _triangle(j1, j2, J):
        return sympy.Integer(0)
    return sympy.nsimplify(_cg(j1, j2, J, m1, m2, M))


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """<j1 m1; j2 m2 | J M>, Condon-Shortley phases.

    >>> round(clebsch_gordan(0.5, 0.5, 0.5, -0.5, 0, 0), 12)
    0.707106781187
    """
    return float(clebsch_gordan_exact(j1, m1, j2, m2, J, M))


@lru_cache(maxsize=None)
def wigner_6j_exact(*js) -> sympy.Expr:
    if len(js) != 6:
        raise SpinError("6-j symbol needs six arguments")
    j = list(map(_half, js))
    if any(x < 0 for x in j):
        raise SpinError("negative angular momentum")
    a, b, c, d, e, f = j
    if not all(_triangle(*t) for t in ((a, b, c), (a, e, f), (d, b, f), (d, e, c))):
        return sympy.Integer(0)
    return _w6j(*j)


def wigner_6j(*js) -> float:
    return float(wigner_6j_exact(*js))


@lru_cache(maxsize=None)
def wigner_9j_exact(*js) -> sympy.Expr:
    if len(js) != 9:
        raise SpinError("9-j symbol needs nine arguments")
    j = list(map(_half, js))
    if any(x < 0 for x in j):
        raise SpinError("negative angular momentum")
    rows = (j[0:3], j[3:6], j[6:9])
    cols = (j[0::3], j[1::3], j[2::3])
    if not all(_triangle(*t) for t in rows + cols):
        return sympy.Integer(0)
    # sympy evaluates the sum over products of three 6-j symbols
    return sympy.nsimplify(_w9j(*j))


def wigner_9j(*js) -> float:
    """{j1 j2 j3; j4 j5 j6; j7 j8 j9}, arguments row by row."""
    return float(wigner_9j_exact(*js))


# --------------------------------------------------------------------------
# species and states


@dataclass(frozen=True)
class SpeciesSpins:
    """Nuclear spin ``i`` and electron spin ``s``, as doubled integers."""

    i2: int
    s2: int

    @classmethod
    def of(cls, i, s) -> SpeciesSpins:
        return cls(int(2 * _half(i)), int(2 * _half(s)))

    @property
    def F_values(self) -> list[int]:
        """Allowed doubled F."""
        return list(range(abs(self.i2 - self.s2), self.i2 + self.s2 + 1, 2))


RB87 = SpeciesSpins.of(sympy.Rational(3, 2), sympy.Rational(1, 2))
YB171_ION = SpeciesSpins.of(sympy.Rational(1, 2), sympy.Rational(1, 2))


def _fmt(x2: int) -> str:
    return str(x2 // 2) if x2 % 2 == 0 else f"{x2}/2"


@dataclass(frozen=True)
class HyperfineState:
    """|F_i m_Fi; F_a m_Fa> with doubled quantum numbers."""

    Fi2: int
    mi2: int
    Fa2: int
    ma2: int

    @classmethod
    def of(cls, F_i, m_Fi, F_a, m_Fa) -> HyperfineState:
        return cls(*(int(2 * _half(x)) for x in (F_i, m_Fi, F_a, m_Fa)))

    @property
    def M2(self) -> int:
        return self.mi2 + self.ma2

    def validate(self, ion: SpeciesSpins, atom: SpeciesSpins):
        for F2, m2, sp, who in ((self.Fi2, self.mi2, ion, "ion"), (self.Fa2, self.ma2, atom, "atom")):
            if F2 not in sp.F_values:
                raise SpinError(f"{who} F = {_fmt(F2)} not allowed for i = {_fmt(sp.i2)}, s = {_fmt(sp.s2)}")
            if abs(m2) > F2 or (F2 - m2) % 2:
                raise SpinError(f"{who} m_F = {_fmt(m2)} invalid for F = {_fmt(F2)}")

    def label(self) -> str:
        return f"|{_fmt(self.Fi2)},{_fmt(self.mi2)},{_fmt(self.Fa2)},{_fmt(self.ma2)}>"


@dataclass(frozen=True)
class ChannelAmplitude:
    """Coefficient on |F M_F I S>; quantum numbers as plain numbers, amplitude exact and float."""

    F: float
    M_F: float
    I: float
    S: float
    exact: sympy.Expr

    @property
    def amplitude(self) -> float:
        return float(self.exact)

    @property
    def probability(self) -> float:
        return float(self.exact**2)

    def label(self) -> str:
        return "|" + ",".join(_fmt(int(2 * x)) for x in (self.F, self.M_F, self.I, self.S)) + ">"


def _q(x2: int) -> sympy.Rational:
    return sympy.Rational(x2, 2)


def frame_transform(state: HyperfineState, ion: SpeciesSpins = YB171_ION,
                    atom: SpeciesSpins = RB87) -> list[ChannelAmplitude]:
    """Decompose a hyperfine pair state onto short-range channels |F M_F I S>.

    Zero amplitudes are dropped; the output is sorted by (F, I, S).
    """
    state.validate(ion, atom)
    Fi, mi, Fa, ma = map(_q, (state.Fi2, state.mi2, state.Fa2, state.ma2))
    ii, si, ia, sa = map(_q, (ion.i2, ion.s2, atom.i2, atom.s2))
    M = mi + ma
    out = []
    F = abs(Fi - Fa)
    while F <= Fi + Fa:
        if abs(M) <= F:
            cg = clebsch_gordan_exact(Fi, mi, Fa, ma, F, M)
            if cg != 0:
                for I, S in product(_range(abs(ii - ia), ii + ia), _range(abs(si - sa), si + sa)):
                    nj = wigner_9j_exact(ii, si, Fi, ia, sa, Fa, I, S, F)
                    if nj == 0:
                        continue
                    amp = sympy.nsimplify(cg * sympy.sqrt((2 * Fi + 1) * (2 * Fa + 1) * (2 * I + 1) * (2 * S + 1)) * nj)
                    if amp != 0:
                        out.append(ChannelAmplitude(float(F), float(M), float(I), float(S), amp))
        F += 1
    out.sort(key=lambda c: (c.F, c.I, c.S))
    return out


def _range(lo, hi):
    x = lo
    while x <= hi:
        yield x
        x += 1


def norm_squared(amps: list[ChannelAmplitude]) -> sympy.Expr:
    return sympy.nsimplify(sum((a.exact**2 for a in amps), sympy.Integer(0)))


def mf_conservation_check(state: HyperfineState, ion: SpeciesSpins = YB171_ION,
                          atom: SpeciesSpins = RB87) -> list[HyperfineState]:
    """Other pair states with the same M_F as ``state`` (the input is excluded).

    >>> [s.label() for s in mf_conservation_check(HyperfineState.of(1, 1, 2, 2))]
    []
    """
    state.validate(ion, atom)
    return [s for s in states_with_M(state.M2, ion, atom) if s != state]


def states_with_M(M2: int, ion: SpeciesSpins = YB171_ION, atom: SpeciesSpins = RB87) -> list[HyperfineState]:
    """All pair states with doubled total projection ``M2``, sorted."""
    out = []
    for Fi2 in ion.F_values:
        for mi2 in range(-Fi2, Fi2 + 1, 2):
            for Fa2 in atom.F_values:
                ma2 = M2 - mi2
                if abs(ma2) <= Fa2 and (Fa2 - ma2) % 2 == 0:
                    out.append(HyperfineState(Fi2, mi2, Fa2, ma2))
    return sorted(out, key=lambda s: (s.Fi2, s.mi2, s.Fa2, s.ma2))
