import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import reject
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from ykshaping.polynomial import (Polynomial, RootSet, from_roots, poly_add, poly_mul,
                                  power_series_div, quantize_coeffs, roots)
from ykshaping.qdesign import char_poly

FS_REF = 104657.0
BANDS = (229.0, 338.0, 545.0, 633.0, 740.0)

unit = st.floats(-1.0, 1.0, allow_nan=False)
polys = st.lists(unit, min_size=1, max_size=9).map(Polynomial)


def _section(f, zeta, fs):
    w = 2 * np.pi * f / fs
    return Polynomial([1.0, -2 * zeta * math.cos(w), zeta * zeta])


# ---------------------------------------------------------------- poly_mul

def test_mul_difference_of_squares():
    p = poly_mul(Polynomial([1, -1]), Polynomial([1, 1]))
    np.testing.assert_array_equal(p.coeffs, [1, 0, -1])


def test_mul_identity_factor():
    s = Polynomial([1, -2 * 0.5 * math.cos(0.0), 0.25])
    np.testing.assert_array_equal(poly_mul(s, Polynomial([1.0])).coeffs, [1, -1, 0.25])


def test_mul_five_sections_matches_pointwise_product():
    secs = [_section(f, 0.9988, FS_REF) for f in BANDS]
    p = secs[0]
    for s in secs[1:]:
        p = poly_mul(p, s)
    assert p.degree == 10
    w = np.linspace(0.0, np.pi, 20)
    direct = np.prod([s.on_unit_circle(w) for s in secs], axis=0)
    # expanded-form evaluation cancels down to ~eps * sum|c| near the roots
    atol = 1e-15 * np.abs(p.coeffs).sum()
    np.testing.assert_allclose(p.on_unit_circle(w), direct, rtol=1e-12, atol=atol)


@given(polys, polys)
def test_mul_degree_is_additive(a, b):
    if a.is_zero() or b.is_zero():
        return
    if abs(a.coeffs[-1] * b.coeffs[-1]) <= 1e-14:
        return
    assert poly_mul(a, b).degree == a.degree + b.degree


@given(polys, polys, polys)
def test_mul_commutative_and_associative(a, b, c):
    np.testing.assert_allclose(poly_mul(a, b).coeffs, poly_mul(b, a).coeffs, atol=1e-12)
    l = poly_mul(poly_mul(a, b), c).coeffs
    r = poly_mul(a, poly_mul(b, c)).coeffs
    n = max(len(l), len(r))
    np.testing.assert_allclose(np.pad(l, (0, n - len(l))), np.pad(r, (0, n - len(r))),
                               atol=1e-12)


# ---------------------------------------------------------------- poly_add

def test_add_examples():
    assert poly_add(Polynomial([1, -1]), Polynomial([0, 1])) == Polynomial([1.0])
    p = Polynomial([0.3, -0.2, 0.7])
    assert poly_add(p, Polynomial([0.0])) == p
    z = poly_add(Polynomial([1, 0, 1]), Polynomial([-1, 0, -1]))
    assert z.is_zero() and z.degree == 0


def test_trailing_zero_normalisation_uses_absolute_epsilon():
    p = poly_add(Polynomial([1.0, 1.0]), Polynomial([0.0, -1.0 + 1e-15]))
    assert p.degree == 0


# ---------------------------------------------------------- power_series_div

def test_series_geometric():
    np.testing.assert_allclose(power_series_div(Polynomial([1]), Polynomial([1, -0.5]), 3),
                               [1, 0.5, 0.25])


def test_series_self_ratio():
    p = Polynomial([2.0, -0.3, 0.7])
    np.testing.assert_allclose(power_series_div(p, p, 4), [1, 0, 0, 0], atol=1e-15)


def test_series_notch_ratio():
    w0, a, b = math.pi / 4, 0.99, 1.0
    h = power_series_div(char_poly([w0], b), char_poly([w0], a), 2)
    np.testing.assert_allclose(h, [1.0, 2 * math.cos(w0) * (a - b)], rtol=1e-12)
    assert h[1] == pytest.approx(-0.0141421, abs=1e-7)


def test_series_rejects_zero_leading_denominator():
    with pytest.raises(ValueError):
        power_series_div(Polynomial([1]), Polynomial([0, 1]), 3)


@given(polys, st.lists(unit, min_size=1, max_size=6), st.integers(1, 10))
def test_series_matches_extended_precision_long_division(num, dtail, n):
    den = Polynomial([1.0] + list(dtail))
    got = power_series_div(num, den, n)
    with mpmath.workdps(40):
        d = [mpmath.mpf(x) for x in den.coeffs]
        c = [mpmath.mpf(x) for x in num.coeffs]
        out = []
        for k in range(n):
            acc = c[k] if k < len(c) else mpmath.mpf(0)
            for j in range(1, min(k, len(d) - 1) + 1):
                acc -= d[j] * out[k - j]
            out.append(acc / d[0])
        ref = np.array([float(x) for x in out])
    scale = np.maximum(1.0, np.abs(ref))
    assert np.all(np.abs(got - ref) <= 1e-12 * scale * 2.0 ** n)


# --------------------------------------------------------------------- roots

def test_roots_examples():
    r = np.sort_complex(roots(Polynomial([1, 0, -1])).roots)
    np.testing.assert_allclose(r, [-1, 1], atol=1e-14)
    r = roots(Polynomial([1, 0, 0.25])).roots
    np.testing.assert_allclose(np.sort(r.imag), [-0.5, 0.5], atol=1e-14)
    w = 2 * np.pi * 229 / FS_REF
    r = roots(_section(229, 0.9988, FS_REF)).roots
    want = 0.9988 * np.exp(1j * w * np.array([-1, 1]))
    np.testing.assert_allclose(np.sort_complex(r), np.sort_complex(want), atol=1e-8)


def test_roots_degree_zero_rejected():
    with pytest.raises(ValueError):
        roots(Polynomial([3.0]))


def test_roots_report_leading_zeros_as_delay():
    rs = roots(Polynomial([0, 0, 1, -0.5]))
    assert rs.delay == 2 and rs.gain == 1.0
    np.testing.assert_allclose(rs.roots, [0.5])
    assert from_roots(rs) == Polynomial([0, 0, 1, -0.5])


@st.composite
def separated_roots(draw):
    # conjugate pairs and reals with |r| <= 1.1 and pairwise gaps >= 0.05
    n_pairs = draw(st.integers(0, 6))
    n_real = draw(st.integers(0 if n_pairs else 1, 12 - 2 * n_pairs))
    out = []
    for _ in range(n_pairs):
        rad = draw(st.floats(0.05, 1.1))
        ang = draw(st.floats(0.05, math.pi - 0.05))
        out += [rad * np.exp(1j * ang), rad * np.exp(-1j * ang)]
    for _ in range(n_real):
        # a root at z = 0 has no delay-form factor, so keep reals away from it
        x = draw(st.floats(0.05, 1.1)) * draw(st.sampled_from([-1.0, 1.0]))
        out.append(complex(x))
    out = np.array(out)
    d = np.abs(out[:, None] - out[None, :]) + np.eye(len(out)) * 10
    if d.min() < 0.05:
        reject()
    return out


def _match(a, b):
    d = np.abs(a[:, None] - b[None, :])
    i, j = linear_sum_assignment(d)
    return d[i, j].max()


def _root_condition(p: Polynomial, r: np.ndarray) -> np.ndarray:
    # first-order root shift per unit relative coefficient perturbation
    c = p.coeffs
    n = len(c) - 1
    num = sum(abs(ck) * np.abs(r) ** (n - k) for k, ck in enumerate(c))
    dp = sum((n - k) * ck * r ** (n - k - 1) for k, ck in enumerate(c[:-1]))
    return num / np.abs(dp)


@settings(max_examples=60)
@given(separated_roots())
def test_roots_match_multiprecision_solve(r):
    p = from_roots(RootSet(r))
    exact = mpmath.polyroots([mpmath.mpf(float(x)) for x in p.coeffs], maxsteps=400,
                             extraprec=400)
    exact = np.array([complex(x) for x in exact])
    assert _match(roots(p).roots, exact) <= 1e-8


@settings(max_examples=60)
@given(separated_roots())
def test_roots_round_trip_accuracy(r):
    # the round trip also pays for rounding the expanded coefficients, so it
    # is only promised where that rounding alone cannot move a root by 1e-8
    p = from_roots(RootSet(r))
    if np.max(_root_condition(p, r)) * np.finfo(float).eps * len(r) > 1e-9:
        reject()
    assert _match(r, roots(p).roots) <= 1e-8


def test_round_trip_limited_by_coefficient_rounding():
    # four conjugate pairs within 0.13 of z = 1: the stored coefficients
    # already put the exact roots ~1e-8 away, and roots() returns those
    ang = [1.0, 0.0625, 0.25, 0.125, 0.125]
    rad = [1.0, 1.0, 1.0, 1.0, 1.0624]
    r = np.array([a * np.exp(1j * t) for a, t in zip(rad, ang)])
    r = np.concatenate([r, r.conj()])
    p = from_roots(RootSet(r))
    mpmath.mp.dps = 60
    try:
        exact = np.array([complex(x) for x in mpmath.polyroots(
            [mpmath.mpf(float(x)) for x in p.coeffs], maxsteps=400, extraprec=400)])
    finally:
        mpmath.mp.dps = 15
    assert _match(roots(p).roots, exact) <= 1e-12
    assert _match(r, exact) > 1e-9


# ---------------------------------------------------------------- from_roots

def test_from_roots_examples():
    assert from_roots(RootSet([0.5j, -0.5j])) == Polynomial([1, 0, 0.25])
    p = from_roots(RootSet([np.exp(1j * np.pi / 2), np.exp(-1j * np.pi / 2)]))
    np.testing.assert_allclose(p.coeffs, [1, 0, 1], atol=1e-15)


def test_from_roots_unpaired_complex_rejected():
    with pytest.raises(ValueError):
        from_roots(RootSet([0.5j]))


def test_from_roots_five_band_round_trip():
    w = [2 * np.pi * f / FS_REF for f in BANDS]
    a = char_poly(w, 0.9988)
    back = from_roots(roots(a))
    np.testing.assert_allclose(back.coeffs, a.coeffs, atol=1e-10, rtol=0)


# ---------------------------------------------------------- quantize_coeffs

def test_quantize_pi():
    assert quantize_coeffs(Polynomial([math.pi]), 7).coeffs[0] == 3.141593


def test_quantize_half_even():
    assert quantize_coeffs(Polynomial([0.125]), 2).coeffs[0] == 0.12
    assert quantize_coeffs(Polynomial([0.375]), 2).coeffs[0] == 0.38


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=8))
def test_quantize_17_digits_is_identity(c):
    p = Polynomial(c)
    np.testing.assert_array_equal(quantize_coeffs(p, 17).coeffs, p.coeffs)


def test_quantize_five_band_relative_error():
    w = [2 * np.pi * f / FS_REF for f in BANDS]
    a = char_poly(w, 0.9988)
    q = quantize_coeffs(a, 7)
    nz = a.coeffs != 0
    rel = np.abs(q.coeffs[nz] - a.coeffs[nz]) / np.abs(a.coeffs[nz])
    assert rel.max() <= 5e-7


def test_quantize_rejects_zero_digits():
    with pytest.raises(ValueError):
        quantize_coeffs(Polynomial([1.0]), 0)
