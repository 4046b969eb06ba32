import math

import numpy as np
import pytest
from scipy.special import ndtr

from sseplab.errors import InvalidProfileError
from sseplab.profiles import KINDS, ProfileSpec


def all_kinds():
    return [
        ProfileSpec.constant(0.4),
        ProfileSpec.linear_ramp(0.1, 0.9),
        ProfileSpec.smoothstep(0.2, 0.8),
        ProfileSpec.tanh_front(0.3, 0.7),
        ProfileSpec.erf_front(0.2, 0.6, width=0.3),
        ProfileSpec.tabulated([-1, 0, 1], [0.2, 0.5, 0.4]),
        ProfileSpec.tabulated([-1, 0, 1], [0.2, 0.5, 0.4], interp="pchip"),
    ]


def test_every_kind_constructible():
    assert {p.kind for p in all_kinds()} == set(KINDS)


@pytest.mark.parametrize("p", all_kinds(), ids=lambda p: p.kind)
def test_range_and_roundtrip(p):
    u = np.linspace(-20, 20, 4001)
    assert p.values_in_range(u)
    assert ProfileSpec.from_dict(p.to_dict()) == p


def test_from_dict_fills_defaults():
    p = ProfileSpec.from_dict({"kind": "tanh-front", "lo": 0.3, "hi": 0.7})
    assert p.params["center"] == 0.0 and p.params["width"] == 0.5


def test_unknown_kind_and_parameters():
    with pytest.raises(InvalidProfileError):
        ProfileSpec("sawtooth")
    with pytest.raises(InvalidProfileError):
        ProfileSpec("constant", value=0.5, slope=1.0)
    with pytest.raises(InvalidProfileError):
        ProfileSpec("tanh-front", lo=0.3)


def test_out_of_range_detected():
    p = ProfileSpec.linear_ramp(-0.2, 0.5)
    with pytest.raises(InvalidProfileError):
        p.check_range(np.linspace(-2, 2, 11))


def test_tabulated_clamped():
    p = ProfileSpec.tabulated([0, 1], [-0.5, 1.5])
    v = p(np.linspace(-1, 2, 31))
    assert v.min() >= 0 and v.max() <= 1


@pytest.mark.parametrize("p", all_kinds()[2:5], ids=lambda p: p.kind)
def test_derivatives_match_finite_differences(p):
    u = np.linspace(-1.3, 1.1, 9)
    h = 1e-5
    fd1 = (p(u + h) - p(u - h)) / (2 * h)
    fd2 = (p.derivative(u + h, 1) - p.derivative(u - h, 1)) / (2 * h)
    assert np.allclose(p.derivative(u, 1), fd1, atol=1e-6)
    assert np.allclose(p.derivative(u, 2), fd2, atol=1e-6)


def test_erf_front_is_gaussian_cdf():
    p = ProfileSpec.erf_front(0.1, 0.9, center=0.2, width=0.4)
    u = np.linspace(-2, 2, 9)
    assert np.allclose(p(u), 0.1 + 0.8 * ndtr((u - 0.2) / 0.4))


def test_polynomial_pieces_reproduce_profile():
    for p in (ProfileSpec.smoothstep(0.2, 0.8, width=2.0), ProfileSpec.linear_ramp(0.1, 0.9),
              ProfileSpec.tabulated([-1, 0, 1], [0.2, 0.5, 0.4], interp="pchip")):
        u = np.linspace(-3, 3, 601)
        vals = np.empty_like(u)
        for a, b, origin, poly in p.polynomial_pieces():
            m = (u >= a) & (u < b)
            vals[m] = poly(u[m] - origin)
        assert np.allclose(vals, p(u), atol=1e-12)
    assert ProfileSpec.tanh_front(0.3, 0.7).polynomial_pieces() is None


def test_derivative_bounds():
    b = ProfileSpec.tanh_front(0.3, 0.7, width=0.5).derivative_bound
    assert b[0] == pytest.approx(0.2 / 0.5, rel=1e-6)
    assert all(math.isfinite(x) for x in b)
    assert math.isinf(ProfileSpec.linear_ramp(0.1, 0.9).derivative_bound[1])
