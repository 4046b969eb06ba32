import json
import math

import numpy as np
import pytest
from scipy import integrate as spi

from sseplab.errors import StabilityError
from sseplab.hydro import (build_field_grid, chi, convergence_check, heat_exact, lln_path, macroscopic_flux,
                           mass_between, mean_current, solve_discrete)
from sseplab.profiles import ProfileSpec
from sseplab.testfunctions import heat_kernel


def brute_heat(profile, t, u, deriv=0):
    f = (lambda y: heat_kernel(t, u, y) * float(profile(y))) if deriv == 0 else \
        (lambda y: heat_kernel(t, u, y) * float(profile.derivative(y, 1)))
    s = 12 * math.sqrt(2 * t)
    pts = [p for p in profile.breakpoints if u - s < p < u + s] or None
    return spi.quad(f, u - s, u + s, points=pts, limit=500, epsabs=1e-14)[0]


@pytest.mark.parametrize("profile", [
    ProfileSpec.smoothstep(0.2, 0.8, width=2.0),
    ProfileSpec.tanh_front(0.3, 0.7, width=0.5),
    ProfileSpec.linear_ramp(0.1, 0.9),
    ProfileSpec.tabulated([-1, 0, 0.5, 1], [0.2, 0.6, 0.5, 0.3], interp="pchip"),
], ids=lambda p: p.kind)
def test_heat_exact_against_brute_quadrature(profile):
    for t in (0.05, 0.5):
        for u in (-0.7, 0.0, 0.4):
            assert heat_exact(profile, t, u) == pytest.approx(brute_heat(profile, t, u), abs=1e-10)
            assert heat_exact(profile, t, u, derivative=1) == pytest.approx(
                brute_heat(profile, t, u, 1), abs=1e-9)


def test_heat_exact_trivial_cases():
    c = ProfileSpec.constant(0.37)
    assert np.all(heat_exact(c, 0.8, np.linspace(-3, 3, 7)) == 0.37)
    p = ProfileSpec.tanh_front(0.3, 0.7)
    u = np.linspace(-1, 1, 5)
    assert np.array_equal(heat_exact(p, 0.0, u), p(u))


def test_erf_front_widens():
    sigma, t = 0.3, 0.4
    p = ProfileSpec.erf_front(0.2, 0.9, center=0.1, width=sigma)
    q = ProfileSpec.erf_front(0.2, 0.9, center=0.1, width=math.sqrt(sigma ** 2 + 2 * t))
    u = np.linspace(-2, 2, 21)
    assert np.allclose(heat_exact(p, t, u), q(u), atol=1e-14)


def test_heat_exact_even_profile_stays_even():
    p = ProfileSpec.tabulated([-1, 0, 1], [0.2, 0.8, 0.2], interp="pchip")
    u = np.linspace(0, 2, 9)
    assert np.allclose(heat_exact(p, 0.3, u), heat_exact(p, 0.3, -u), atol=1e-10)


def test_chi_values():
    assert chi(ProfileSpec.constant(0.5), 0.3, 0.0) == 0.25
    assert chi(ProfileSpec.constant(1.0), 0.3, 0.0) == 0.0
    assert chi(ProfileSpec.constant(0.0), 0.3, 0.0) == 0.0


def test_constant_profile_field_constant():
    sites, field, flux, _ = solve_discrete(ProfileSpec.constant(0.3), 16, 1.0, [0.5, 1.0], bonds=[-1])
    assert np.all(field == 0.3)
    assert np.all(flux == 0.0)


def test_affine_interior_is_stationary():
    p = ProfileSpec.linear_ramp(0.1, 0.9, -2.0, 2.0)
    N = 16
    sites, field, _, _ = solve_discrete(p, N, 0.02, [0.02], window=48)
    inner = np.abs(sites) <= 8
    assert np.allclose(field[0, inner], p(sites[inner] / N), atol=1e-14)


def test_stability_error():
    with pytest.raises(StabilityError, match="stability"):
        solve_discrete(ProfileSpec.constant(0.5), 8, 0.1, [0.1], delta_ratio=0.6)
    with pytest.raises(StabilityError):
        solve_discrete(ProfileSpec.constant(0.5), 8, 0.1, [0.1], delta_ratio=0.5)


def test_maximum_principle_and_mass(tanh_front):
    sites, field, _, _ = solve_discrete(tanh_front, 32, 1.0, [0.1, 0.5, 1.0], window=100)
    v0 = tanh_front(sites / 32)
    assert field.min() >= v0.min() - 1e-15 and field.max() <= v0.max() + 1e-15
    assert np.allclose(field.sum(axis=1), v0.sum(), rtol=1e-13)


def test_smoothstep_matches_exact_at_second_order(smoothstep):
    tab = convergence_check(smoothstep, 0.5, [16, 32, 64])
    assert all(3.2 <= r <= 4.8 for r in tab.ratios)
    assert tab.errors[-1] < 0.5 / 64 ** 2


def test_convergence_constant_profile_zero_error():
    tab = convergence_check(ProfileSpec.constant(0.4), 0.5, [8, 16])
    assert tab.errors == [0.0, 0.0]


def test_lln_constant_and_even():
    assert np.all(lln_path(ProfileSpec.constant(0.4), [0.5, 1.0]) == 0.0)
    even = ProfileSpec.tabulated([-1, 0, 1], [0.6, 0.3, 0.6], interp="pchip")
    assert np.allclose(lln_path(even, [0.25, 1.0]), 0.0, atol=1e-9)


def test_lln_tanh_negative_with_small_residual(tanh_front):
    times = [0.25, 0.5, 1.0]
    u = lln_path(tanh_front, times)
    assert np.all(u < 0)
    for t, ut in zip(times, u):
        lhs = mass_between(tanh_front, t, 0.0, ut)
        assert abs(lhs - macroscopic_flux(tanh_front, t, 0.0)) <= 1e-8


def test_mean_current_trivial():
    assert mean_current(ProfileSpec.constant(0.6), 16, (-1, 0), 1.0) == 0.0
    assert mean_current(ProfileSpec.tanh_front(0.3, 0.7), 16, (-1, 0), 0.0) == 0.0


def test_mean_current_matches_macroscopic_flux(tanh_front):
    t = 0.5
    target = macroscopic_flux(tanh_front, t, 0.0)
    errs = [abs(mean_current(tanh_front, N, (-1, 0), t) / N - target) for N in (32, 64, 128)]
    assert all(e * N <= 0.01 for e, N in zip(errs, (32, 64, 128)))


def test_translation_equivariance(tanh_front):
    N = 16
    shifted = ProfileSpec.tanh_front(0.3, 0.7, center=1.0 / N, width=0.5)
    s, a, _, _ = solve_discrete(tanh_front, N, 0.3, [0.3], window=120)
    _, b, _, _ = solve_discrete(shifted, N, 0.3, [0.3], window=120)
    assert np.allclose(a[0, 10:-11], b[0, 11:-10], atol=1e-14)


def test_field_grid_exports(tmp_path, tanh_front):
    g = build_field_grid(tanh_front, 8, [0.0, 0.5], bonds=[-1])
    assert np.allclose(g.chi, g.exact * (1 - g.exact))
    assert g.mean_current((-1, 0), 0.0) == 0.0
    g.to_csv(tmp_path / "f.csv")
    g.to_json(tmp_path / "f.json")
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "t,x,rhoN,rhoExact,chi"
    assert len(rows) == 1 + 2 * g.sites.size
    meta = json.loads((tmp_path / "f.json").read_text())
    assert meta["N"] == 8 and meta["u_t"][0] == [0.0, 0.0]
