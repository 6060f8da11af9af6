import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from porodyn.errors import ConfigError, DomainError
from porodyn.phi_model import (BUMP_MASS, PhiModel, SmoothApproxParams, build_smooth_approx,
                               check_divergence_condition, check_growth_alpha, mollifier)


def quad(f, a, b, points=()):
    """Reference quadrature in extended precision, independent of the model's closed forms."""
    with mpmath.workdps(30):
        return float(mpmath.quad(f, [a, *points, b]))


def D_ref(z, a, b):
    return abs(z) ** b / (1 - abs(z)) ** a


def test_known_values_a1b1():
    m = PhiModel.biofilm(1, 1)
    assert m.phi(0.5) == pytest.approx(-math.log(0.5) - 0.5, abs=1e-14)
    assert m.phi(0.5) == pytest.approx(0.19314718056, abs=1e-11)
    assert m.Phi(0.5) == pytest.approx(0.02842640972, abs=1e-11)


@pytest.mark.parametrize("a,b", [(1, 1), (1, 2), (2, 1), (1.5, 0.5), (1, 2.5), (3, 3)])
@pytest.mark.parametrize("r", [-0.97, -0.6, -0.05, 0.01, 0.3, 0.9])
def test_phi_matches_quadrature(a, b, r):
    m = PhiModel.biofilm(a, b)
    R = abs(r)
    ref = math.copysign(quad(lambda z: D_ref(z, a, b), 0.0, R, [R / 2]), r)
    assert m.phi(r) == pytest.approx(ref, rel=1e-10, abs=1e-15)
    # Phi(r) = int_0^|r| (|r| - z) D(z) dz after integrating by parts
    Phi_ref = quad(lambda z: (R - z) * D_ref(z, a, b), 0.0, R, [R / 2])
    assert m.Phi(r) == pytest.approx(Phi_ref, rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("a,b", [(1, 2.5), (2.3, 0.7)])
def test_generic_b_against_mpmath(a, b):
    m = PhiModel.biofilm(a, b)
    for r in (0.2, 0.7, 0.99, 0.999999):
        ref = float(mpmath.quad(lambda z: z**b / (1 - z) ** a, [0, r / 2, r]))
        assert m.phi(r) == pytest.approx(ref, rel=1e-11)


def test_pme():
    m = PhiModel.pme(3)
    r = np.linspace(-2, 2, 41)
    assert np.allclose(m.phi(r), np.abs(r) ** 2 * r, atol=1e-15)
    assert np.allclose(m.Phi(r), np.abs(r) ** 4 / 4, atol=1e-14)
    assert np.allclose(m.beta(m.phi(r)), r, atol=1e-12)


@pytest.mark.parametrize("a,b", [(1, 1), (1, 2), (2, 0.5)])
def test_beta_against_bisection(a, b):
    m = PhiModel.biofilm(a, b)
    for w in (-20.0, -0.3, -1e-6, 0.0, 1e-8, 0.05, 4.0, 25.0):
        lo, hi = -1 + 1e-13, 1 - 1e-13
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if m.phi(mid) < w:
                lo = mid
            else:
                hi = mid
        assert m.beta(w) == pytest.approx(0.5 * (lo + hi), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(1, 3), st.floats(0.2, 3), st.floats(-0.999, 0.999), st.floats(-0.999, 0.999))
def test_monotone_and_roundtrip(a, b, r1, r2):
    m = PhiModel.biofilm(a, b)
    lo, hi = sorted((r1, r2))
    assert m.phi(lo) <= m.phi(hi)
    assert m.beta(m.phi(r1)) == pytest.approx(r1, abs=1e-9)
    assert m.Phi(r1) >= 0


def test_domain_guard():
    m = PhiModel.biofilm(1, 1)
    with pytest.raises(DomainError):
        m.phi(1.0)
    with pytest.raises(DomainError):
        m.phi(-1.5)
    assert math.isfinite(m.phi(1 - 1e-12))


def test_tabulated_piecewise_linear():
    x = np.linspace(-2, 2, 9)
    t = PhiModel.tabulated(x, x**2 + 1)
    r = np.linspace(-1.7, 1.9, 13)
    lin = lambda z: float(np.interp(float(z), x, x**2 + 1))
    ref = [quad(lin, 0.0, v, sorted((float(p) for p in x if min(0, v) < p < max(0, v)), reverse=bool(v < 0))) for v in r]
    assert np.allclose(t.phi(r), ref, atol=1e-12)
    assert np.allclose(t.beta(t.phi(r)), r, atol=1e-12)


def test_growth_alpha():
    m = PhiModel.biofilm(1, 1)
    ok, C = check_growth_alpha(m, 2.0, (-0.5, 0.5))
    assert ok and 0.5 <= C < 2
    ok, C = check_growth_alpha(m, 2.5, (-0.5, 0.5))
    assert not ok and math.isinf(C)
    ok, _ = check_growth_alpha(PhiModel.pme(3), 3.0, (-1, 1))
    assert ok


def test_divergence_condition():
    assert check_divergence_condition(lambda s: s**3, 3)
    assert not check_divergence_condition(lambda s: s**4, 3)
    assert check_divergence_condition(lambda s: s * abs(s), 3)
    assert check_divergence_condition(PhiModel.biofilm(1, 1), 3)
    with pytest.raises(ValueError):
        check_divergence_condition(lambda s: s, 2)


def test_mollifier_mass():
    ref = float(mpmath.quad(lambda t: mpmath.exp(-1 / (1 - t * t)), [-1, 0, 1]))
    assert BUMP_MASS == pytest.approx(ref, rel=1e-12)
    x = np.linspace(-1, 1, 200001)
    assert np.trapezoid(mollifier(x), x) == pytest.approx(1.0, abs=1e-9)


def test_smooth_approx():
    m = PhiModel.biofilm(1, 1)
    a8 = build_smooth_approx(m, 8)
    assert a8.smooth and a8.k == 8
    z = np.linspace(-0.9, 0.9, 2001)
    assert a8.D(z).min() >= 2.0**-8 * (1 - 1e-12)
    assert a8.phi(0.0) == pytest.approx(0.0, abs=1e-15)
    errs = []
    for k in (4, 6, 8):
        ak = build_smooth_approx(m, k)
        zz = np.linspace(-0.5, 0.5, 4001)
        errs.append(np.trapezoid(np.abs(ak.D(zz) - m.D(zz)), zz))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.01


def test_smooth_approx_interval_check():
    with pytest.raises(ConfigError):
        build_smooth_approx(PhiModel.biofilm(1, 1), SmoothApproxParams(3, (-0.99, 0.99), mollifier))
