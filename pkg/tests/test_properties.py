"""Property-based checks of exact invariants."""
import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from sseplab.harness import ExperimentPlan, SampleSet, estimate_moments
from sseplab.hydro import heat_exact, solve_discrete
from sseplab.lattice import (Configuration, SimState, conservation_check, rank_check, replica_rng,
                             tagged_identity_all)
from sseplab.profiles import ProfileSpec
from sseplab.testfunctions import indicator, parse_test_function
from sseplab.theory import KernelContext, ou_covariance

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def tagged_configs(draw):
    bits = draw(st.lists(st.integers(0, 1), min_size=3, max_size=40))
    lo = -draw(st.integers(1, len(bits) - 1))
    bits[-lo] = 1  # the tagged particle starts at the origin
    return Configuration(np.array(bits, np.uint8), lo=lo, tagged=0)


@FAST
@given(cfg=tagged_configs(), N=st.integers(1, 6), seed=st.integers(0, 2**32),
       scheme=st.sampled_from(["rejection-free", "uniformized"]),
       times=st.lists(st.floats(0.0, 0.3), min_size=1, max_size=5))
def test_pathwise_identities(cfg, N, seed, scheme, times):
    rank0 = cfg.rank()
    count0 = cfg.particle_count
    s = SimState(cfg, N, replica_rng(seed, 0), scheme=scheme)
    for t in sorted(times):
        s.advance(t)
        assert conservation_check(s)
        assert tagged_identity_all(s)
        assert rank_check(s, rank0)
        assert s.config.particle_count == count0
        if scheme == "rejection-free":
            assert s.active_bonds() == s.rescan_active()


@FAST
@given(cfg=tagged_configs(), seed=st.integers(0, 2**32), scheme=st.sampled_from(["rejection-free", "uniformized"]))
def test_same_seed_same_path(cfg, seed, scheme):
    a = SimState(cfg.copy(), 3, replica_rng(seed, 7), scheme=scheme).advance(0.2)
    b = SimState(cfg.copy(), 3, replica_rng(seed, 7), scheme=scheme).advance(0.2)
    assert np.array_equal(a.eta, b.eta) and np.array_equal(a.currents, b.currents)
    assert a.config.tagged == b.config.tagged


@FAST
@given(vals=st.lists(st.floats(0, 1), min_size=2, max_size=8), N=st.integers(2, 10),
       t=st.floats(0.0, 0.5), ratio=st.floats(0.05, 0.25))
def test_explicit_scheme_max_principle_and_mass(vals, N, t, ratio):
    xs = np.linspace(-1, 1, len(vals))
    prof = ProfileSpec.tabulated(xs, vals)
    _, field, _, _ = solve_discrete(prof, N, t, [0.0, t], window=3 * N, delta_ratio=ratio)
    assert field.min() >= min(vals) - 1e-12 and field.max() <= max(vals) + 1e-12
    assert math.isclose(field[1].sum(), field[0].sum(), rel_tol=1e-12, abs_tol=1e-10)


@FAST
@given(k=st.integers(-6, 6), N=st.integers(2, 8), t=st.floats(0.01, 0.3))
def test_explicit_scheme_translation(k, N, t):
    L = 40
    a = ProfileSpec.tanh_front(0.2, 0.9, center=0.0, width=0.3)
    b = ProfileSpec.tanh_front(0.2, 0.9, center=k / N, width=0.3)
    _, fa, _, _ = solve_discrete(a, N, t, [t], window=L)
    _, fb, _, _ = solve_discrete(b, N, t, [t], window=L)
    # away from the closed ends the fields are shifts of each other
    inner = slice(L - 10, L + 11)
    shifted = slice(L - 10 + k, L + 11 + k)
    np.testing.assert_allclose(fb[0, shifted], fa[0, inner], atol=1e-9)


@FAST
@given(t=st.floats(0.0, 2.0), u=st.floats(-3, 3), lo=st.floats(0, 0.5), hi=st.floats(0.5, 1))
def test_heat_semigroup_symmetry_and_range(t, u, lo, hi):
    even = ProfileSpec.smoothstep(lo, hi, center=0.0, width=2.0)
    flipped = lambda x: heat_exact(even, t, x) + heat_exact(even, t, -x)
    assert math.isclose(flipped(u), lo + hi, abs_tol=1e-9)
    v = heat_exact(ProfileSpec.tanh_front(lo, hi), t, u)
    assert lo - 1e-12 <= v <= hi + 1e-12


@FAST
@given(a=st.floats(-2, 2), w=st.floats(0.1, 2), tau=st.floats(1e-4, 2), x=st.floats(-4, 4))
def test_semigroup_linearity(a, w, tau, x):
    b = a + w
    diff = indicator(a).semigroup(tau, x) - indicator(b).semigroup(tau, x)
    assert math.isclose(indicator(a, b).semigroup(tau, x), diff, abs_tol=1e-13)
    assert 0.0 <= indicator(a, b).semigroup(tau, x) <= 1.0


@settings(max_examples=6, deadline=None)
@given(s=st.sampled_from([0.1, 0.3]), pair=st.sampled_from([("ramp:1", "ind:-0.5:0.5"), ("ramp:2", "ramp:0.5")]))
def test_equal_time_covariance_symmetric(s, pair):
    ctx = KernelContext(ProfileSpec.tanh_front(0.3, 0.7), tol=1e-9)
    H, G = map(parse_test_function, pair)
    a = ou_covariance(H, G, s, s, ctx).value
    b = ou_covariance(G, H, s, s, ctx).value
    assert math.isclose(a, b, rel_tol=1e-6, abs_tol=1e-9)


@FAST
@given(seed=st.integers(0, 2**32), cut=st.integers(2, 98), scale=st.floats(1e-3, 1e6))
def test_jackknife_merge_is_exact(seed, cut, scale):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((100, 1, 2)) * scale + scale
    plan = ExperimentPlan(ProfileSpec.constant(0.5), 4, (1.0,), replicas=100)
    whole = SampleSet(plan, np.arange(100), np.array([1.0]), ["A", "B"], x)
    perm = rng.permutation(100)
    left = SampleSet(plan, perm[:cut], np.array([1.0]), ["A", "B"], x[perm[:cut]])
    right = SampleSet(plan, perm[cut:], np.array([1.0]), ["A", "B"], x[perm[cut:]])
    merged = right.merge(left)
    pairs = [("A", 1.0, "B", 1.0)]
    e1 = estimate_moments(whole, pairs=pairs).entries[0]
    e2 = estimate_moments(merged, pairs=pairs).entries[0]
    assert e1.empirical == e2.empirical and e1.standard_error == e2.standard_error
