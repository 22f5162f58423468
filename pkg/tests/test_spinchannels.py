from itertools import permutations, product

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from sympy import Rational as R
from sympy import sqrt

from ionjunction import spinchannels as sc

HALF = R(1, 2)


def _js(top):
    """0, 1/2, ..., top."""
    return [R(k, 2) for k in range(int(2 * top) + 1)]


def _ms(j):
    return [-j + k for k in range(int(2 * j) + 1)]


def test_cg_examples():
    assert sc.clebsch_gordan_exact(HALF, HALF, HALF, HALF, 1, 1) == 1
    assert sc.clebsch_gordan_exact(HALF, HALF, HALF, -HALF, 0, 0) == 1 / sqrt(2)
    assert sc.clebsch_gordan(HALF, HALF, HALF, -HALF, 0, 0) == pytest.approx(2**-0.5, abs=1e-15)
    # triangle or projection violation gives an exact zero
    assert sc.clebsch_gordan_exact(1, 0, 1, 0, 3, 0) == 0
    assert sc.clebsch_gordan_exact(1, 1, 1, 0, 2, 0) == 0


def test_cg_domain():
    with pytest.raises(sc.SpinError):
        sc.clebsch_gordan(1, 2, 1, 0, 1, 2)
    with pytest.raises(sc.SpinError):
        sc.clebsch_gordan(-1, 0, 1, 0, 1, 0)
    with pytest.raises(sc.SpinError):
        sc.clebsch_gordan(R(1, 3), 0, 1, 0, 1, 0)


@pytest.mark.property
def test_cg_orthogonality_exhaustive():
    """Both orthogonality relations, exactly, for j1, j2 <= 3."""
    for j1, j2 in product(_js(3), repeat=2):
        Js = [abs(j1 - j2) + k for k in range(int(j1 + j2 - abs(j1 - j2)) + 1)]
        for m1, m2 in product(_ms(j1), _ms(j2)):
            s = sum(sc.clebsch_gordan_exact(j1, m1, j2, m2, J, m1 + m2) ** 2
                    for J in Js if abs(m1 + m2) <= J)
            assert sympy.nsimplify(s) == 1
        if j1 + j2 > 2:
            continue
        for J, Jp in product(Js, repeat=2):
            for M in _ms(min(J, Jp)):
                s = sum(sc.clebsch_gordan_exact(j1, m1, j2, M - m1, J, M)
                        * sc.clebsch_gordan_exact(j1, m1, j2, M - m1, Jp, M)
                        for m1 in _ms(j1) if abs(M - m1) <= j2)
                assert sympy.simplify(s) == (1 if J == Jp else 0)


def _triad(a, b, c):
    return abs(a - b) <= c <= a + b and (a + b + c).is_integer


def _valid9(top):
    T = [t for t in product(_js(top), repeat=3) if _triad(*t)]
    return [r1 + r2 + r3 for r1 in T for r2 in T for r3 in T
            if all(_triad(r1[i], r2[i], r3[i]) for i in range(3))]


VALID9_SMALL = _valid9(1)
VALID9 = _valid9(2)


def _check_9j_symmetries(js):
    w = sc.wigner_9j_exact(*js)
    rows = [js[0:3], js[3:6], js[6:9]]
    transposed = [js[0], js[3], js[6], js[1], js[4], js[7], js[2], js[5], js[8]]
    assert sympy.simplify(sc.wigner_9j_exact(*transposed) - w) == 0
    sign = (-1) ** int(sum(js))
    for perm in permutations(range(3)):
        odd = sum(1 for i in range(3) for j in range(i + 1, 3) if perm[i] > perm[j]) % 2
        expected = w * (sign if odd else 1)
        swapped = [x for p in perm for x in rows[p]]
        assert sympy.simplify(sc.wigner_9j_exact(*swapped) - expected) == 0
        cols = [[r[p] for p in perm] for r in rows]
        assert sympy.simplify(sc.wigner_9j_exact(*[x for r in cols for x in r]) - expected) == 0


@pytest.mark.property
def test_9j_symmetries_exhaustive_up_to_one():
    for js in VALID9_SMALL:
        _check_9j_symmetries(js)


@pytest.mark.property
@settings(max_examples=60, deadline=None)
@given(js=st.sampled_from(VALID9))
def test_9j_symmetries_up_to_two(js):
    _check_9j_symmetries(js)


@settings(max_examples=40, deadline=None)
@given(js=st.lists(st.sampled_from(_js(2)), min_size=6, max_size=6))
def test_9j_with_zero_reduces_to_6j(js):
    a, b, c, d, e, f = js
    lhs = sc.wigner_9j_exact(a, b, c, d, e, c, f, f, 0)
    rhs = ((-1) ** int(b + c + d + f) / sqrt((2 * c + 1) * (2 * f + 1))
           * sc.wigner_6j_exact(a, b, c, e, d, f))
    assert sympy.simplify(lhs - rhs) == 0


@pytest.mark.property
def test_9j_orthogonality():
    """sum over (j12, j34) of the recoupling products is a Kronecker delta."""
    j1 = j2 = j3 = j4 = HALF
    for J in (0, 1, 2):
        for j13, j24, j13p, j24p in product((0, 1), repeat=4):
            s = 0
            for j12, j34 in product((0, 1), repeat=2):
                w = (2 * j12 + 1) * (2 * j34 + 1) * sqrt((2 * j13 + 1) * (2 * j24 + 1) * (2 * j13p + 1) * (2 * j24p + 1))
                s += (w * sc.wigner_9j_exact(j1, j2, j12, j3, j4, j34, j13, j24, J)
                      * sc.wigner_9j_exact(j1, j2, j12, j3, j4, j34, j13p, j24p, J))
            allowed = abs(j13 - j24) <= J <= j13 + j24
            expected = 1 if (j13, j24) == (j13p, j24p) and allowed else 0
            assert sympy.simplify(s) == expected


def test_6j_column_symmetry():
    args = (1, 2, 3, 2, 1, 2)
    v = sc.wigner_6j_exact(*args)
    assert v != 0
    assert sympy.simplify(sc.wigner_6j_exact(2, 1, 3, 1, 2, 2) - v) == 0
    assert sc.wigner_6j_exact(1, 1, 5, 1, 1, 1) == 0


def _table(state):
    return {(a.F, a.M_F, a.I, a.S): a.exact for a in sc.frame_transform(state)}


def test_decomposition_of_ion_down_atom_stretched():
    t = _table(sc.HyperfineState.of(0, 0, 2, 2))
    assert t == {(2.0, 2.0, 2.0, 0.0): R(-1, 2), (2.0, 2.0, 1.0, 1.0): sqrt(R(3, 8)),
                 (2.0, 2.0, 2.0, 1.0): sqrt(R(3, 8))}


def test_stretched_pair_is_pure_triplet():
    amps = sc.frame_transform(sc.HyperfineState.of(1, 1, 2, 2))
    assert len(amps) == 1
    a = amps[0]
    assert (a.F, a.M_F, a.S) == (3.0, 3.0, 1.0) and abs(a.exact) == 1


def test_every_pair_state_is_normalized():
    for M2 in range(-6, 7, 2):
        for s in sc.states_with_M(M2):
            assert sc.norm_squared(sc.frame_transform(s)) == 1


def test_rows_of_the_transformation_are_orthogonal():
    states = sc.states_with_M(2)
    tabs = [_table(s) for s in states]
    for i, a in enumerate(tabs):
        for b in tabs[i + 1:]:
            assert sympy.simplify(sum(a[k] * b[k] for k in set(a) & set(b))) == 0


def test_mixing_lists():
    same = sc.mf_conservation_check(sc.HyperfineState.of(0, 0, 2, 2))
    assert {s.label() for s in same} == {"|1,1,1,1>", "|1,1,2,1>", "|1,0,2,2>"}
    assert sc.mf_conservation_check(sc.HyperfineState.of(1, 1, 2, 2)) == []
    assert sc.states_with_M(10) == []


def test_invalid_states():
    with pytest.raises(sc.SpinError):
        sc.frame_transform(sc.HyperfineState.of(0, 0, 3, 2))
    with pytest.raises(sc.SpinError):
        sc.frame_transform(sc.HyperfineState.of(1, 2, 2, 2))
