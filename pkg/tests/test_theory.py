import math

import numpy as np
import pytest
from scipy import integrate as spi

from sseplab.errors import ArgumentOrderError, DegenerateDensityError, UnsupportedFunctionError
from sseplab.profiles import ProfileSpec
from sseplab.testfunctions import PiecewiseLinear, indicator, ramp
from sseplab.theory import (CovValue, KernelContext, covariance_matrix, current_covariance,
                            equilibrium_alpha, ou_covariance, pair_correlation_limit, ramp_decay_bound,
                            semigroup_apply, tagged_covariance)


@pytest.fixture(scope="module")
def tanh_ctx():
    return KernelContext(ProfileSpec.tanh_front(0.3, 0.7, width=0.5))


@pytest.fixture(scope="module")
def eq_ctx():
    return KernelContext(ProfileSpec.constant(0.5))


def test_covvalue_error_nonnegative():
    with pytest.raises(ValueError):
        CovValue(1.0, -1e-3)
    assert (CovValue(1.0, 0.1) + CovValue(2.0, 0.2)).error == pytest.approx(0.3)


def test_semigroup_apply():
    G = ramp(2)
    x = np.linspace(-1, 3, 9)
    assert np.allclose(semigroup_apply(G, 0.0)(x), G(x))
    assert semigroup_apply(G, 0.4).grad(0.5) == pytest.approx(G.semigroup_grad(0.4, 0.5))
    with pytest.raises(UnsupportedFunctionError):
        semigroup_apply(np.sin, 0.1)


def test_zero_function_gives_zero(tanh_ctx):
    Z = PiecewiseLinear([0.0, 1.0], [0.0, 0.0], [0.0, 0.0])
    assert ou_covariance(ramp(2), Z, 0.2, 0.5, tanh_ctx).value == 0.0


def test_equal_times_zero(tanh_ctx):
    H, G = ramp(1), indicator(-0.5, 0.5)
    p = tanh_ctx.profile
    brute = spi.quad(lambda x: float(H(x) * G(x)) * p(x) * (1 - p(x)), -0.5, 1.0, points=[0.0, 0.5])[0]
    for form in ("original", "partsIntegrated"):
        assert ou_covariance(H, G, 0.0, 0.0, tanh_ctx, form=form).value == pytest.approx(brute, abs=1e-8)


def test_argument_order(tanh_ctx):
    with pytest.raises(ArgumentOrderError):
        ou_covariance(ramp(1), ramp(1), 0.5, 0.2, tanh_ctx)
    with pytest.raises(ArgumentOrderError):
        current_covariance(0.5, 0.2, 0.0, tanh_ctx)
    with pytest.raises(ArgumentOrderError):
        tagged_covariance(0.5, 0.2, tanh_ctx)


def test_equilibrium_forms_agree(eq_ctx):
    H, G = ramp(2), indicator(-0.5, 1.0)
    s, t = 0.25, 0.75
    target = 0.25 * spi.quad(lambda x: float(H.semigroup(t - s, x) * G(x)), -0.5, 1.0)[0]
    a = ou_covariance(H, G, s, t, eq_ctx, form="original")
    b = ou_covariance(H, G, s, t, eq_ctx, form="partsIntegrated")
    assert a.value == pytest.approx(target, abs=1e-7)
    assert b.value == pytest.approx(target, abs=1e-7)


def test_nonequilibrium_forms_agree(tanh_ctx):
    H, G = ramp(1), indicator(0.0, 1.0)
    a = ou_covariance(H, G, 0.25, 0.5, tanh_ctx, form="original")
    b = ou_covariance(H, G, 0.25, 0.5, tanh_ctx, form="partsIntegrated")
    assert abs(a.value - b.value) <= 1e-4 * abs(b.value)


def test_unbounded_pair_unsupported(tanh_ctx):
    with pytest.raises(UnsupportedFunctionError):
        ou_covariance(indicator(0.0), indicator(0.0), 0.1, 0.2, tanh_ctx)


def test_current_covariance_trivial(tanh_ctx):
    assert current_covariance(0.0, 0.5, 0.0, tanh_ctx).value == 0.0
    assert tagged_covariance(0.0, 0.5, tanh_ctx).value == 0.0


def test_equilibrium_fractional_scaling(eq_ctx):
    alpha = equilibrium_alpha(0.25)
    vals = [current_covariance(t, t, 0.0, eq_ctx).value / math.sqrt(t) for t in (0.25, 0.5, 1.0, 2.0)]
    assert np.allclose(vals, alpha, rtol=1e-6)


def test_equilibrium_two_time_is_fbm(eq_ctx):
    """Cov = alpha/2 (sqrt s + sqrt t - sqrt(t - s)) (fractional Brownian motion, H = 1/4)."""
    s, t = 0.25, 1.0
    alpha = equilibrium_alpha(0.25)
    fbm = 0.5 * alpha * (math.sqrt(s) + math.sqrt(t) - math.sqrt(t - s))
    assert current_covariance(s, t, 0.0, eq_ctx).value == pytest.approx(fbm, rel=1e-6)


def test_translation_of_chi():
    u = 0.2
    base = KernelContext(ProfileSpec.tanh_front(0.3, 0.7, width=0.5))
    moved = KernelContext(ProfileSpec.tanh_front(0.3, 0.7, center=-u, width=0.5))
    a = current_covariance(0.25, 0.5, u, base)
    b = current_covariance(0.25, 0.5, 0.0, moved)
    assert a.value == pytest.approx(b.value, abs=1e-9)


def test_tagged_reduces_to_current_for_constant_profile():
    rho = 0.4
    ctx = KernelContext(ProfileSpec.constant(rho))
    assert tagged_covariance(0.3, 0.8, ctx).value == pytest.approx(
        current_covariance(0.3, 0.8, 0.0, ctx).value / rho ** 2, rel=1e-12)


def test_tagged_degenerate_density():
    with pytest.raises(DegenerateDensityError):
        tagged_covariance(0.2, 0.4, KernelContext(ProfileSpec.constant(0.0)))


def test_covariance_matrices_psd(tanh_ctx):
    times = [0.25, 0.5, 1.0]
    for fn in (lambda s, t: current_covariance(s, t, 0.0, tanh_ctx),
               lambda s, t: tagged_covariance(s, t, tanh_ctx)):
        V, E = covariance_matrix(times, fn)
        assert np.array_equal(V, V.T)
        assert np.all(E >= 0)
        assert np.linalg.eigvalsh(V).min() >= -1e-8


def test_known_tanh_values(tanh_ctx):
    """Frozen from tests/oracles/three_term_scipy.py (scipy quad plus Gauss-Hermite, no package code)."""
    assert current_covariance(0.25, 1.0, 0.0, tanh_ctx).value == pytest.approx(0.0852664332, abs=1e-7)
    assert current_covariance(1.0, 1.0, 0.0, tanh_ctx).value == pytest.approx(0.2710936336, abs=1e-7)
    assert tanh_ctx.u_at(0.25) == pytest.approx(-0.1317769575, abs=1e-8)
    assert tanh_ctx.u_at(1.0) == pytest.approx(-0.3481386028, abs=1e-8)
    assert tagged_covariance(0.25, 0.25, tanh_ctx).value == pytest.approx(0.6196965437, abs=1e-6)
    assert tagged_covariance(0.25, 1.0, tanh_ctx).value == pytest.approx(0.4023020289, abs=1e-6)
    assert tagged_covariance(1.0, 1.0, tanh_ctx).value == pytest.approx(1.2956843362, abs=1e-6)


def test_ramp_decay_bound():
    assert ramp_decay_bound(0.0, 3) == 0.0
    assert ramp_decay_bound(1.0, 100, C0=1.0) / ramp_decay_bound(1.0, 200, C0=1.0) == pytest.approx(2.0, rel=0.01)
    with pytest.raises(ValueError):
        ramp_decay_bound(1.0, 0.5)


def test_pair_correlation_limit(eq_ctx, tanh_ctx):
    assert pair_correlation_limit(0.5, 0.0, 0.1, eq_ctx).value == 0.0
    v = pair_correlation_limit(0.5, -0.1, 0.1, tanh_ctx)
    assert v.value < 0
    assert pair_correlation_limit(0.5, 0.1, -0.1, tanh_ctx).value == pytest.approx(v.value, rel=1e-10)
