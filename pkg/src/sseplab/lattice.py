"""Exact continuous-time simulation of the speeded-up symmetric exclusion
process on a closed window, with a tagged particle, bond currents, exact
occupation integrals and the associated martingales.

Two exact event schemes are available:

``rejection-free``
    holding times Exponential(N^2 * #active bonds), firing bond uniform among
    bonds with unequal occupancies. Maintains the active-bond set and exact
    time integrals (needed for martingales).
``uniformized``
    Poisson(N^2 * #bonds * dt) proposals on uniformly chosen bonds; a proposal
    on a bond with equal occupancies is a no-op, so the law of the occupation
    and tagged paths is the same. Faster, but keeps no time integrals.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from . import _kernels as K
from .errors import CorruptedDynamicsError, InvalidProfileError, MissingCounterError, TruncationWarning
from .profiles import ProfileSpec
from .testfunctions import GaussianBump, PiecewiseLinear, ramp  # noqa: F401  (ramp re-exported)

SCHEMES = ("rejection-free", "uniformized")
CHUNK = 1 << 14


def replica_rng(seed: int, replica_id: int) -> np.random.Generator:
    """Independent stream for one replica, keyed by (seed, replica_id)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replica_id),))
    return np.random.Generator(np.random.SFC64(ss))


def window_half_width(N: int, T_max: float, kappa: float = 6.0, margin: int = 4) -> int:
    """L = ceil(kappa * N * sqrt(T_max)) + margin."""
    return int(math.ceil(kappa * N * math.sqrt(max(T_max, 0.0)))) + int(margin)


def _window_bounds(window) -> tuple[int, int]:
    if isinstance(window, (int, np.integer)):
        return -int(window), int(window)
    lo, hi = (int(v) for v in window)
    return lo, hi


class Configuration:
    """Occupation bits on the window [lo, hi] plus the tagged particle's site."""

    def __init__(self, occupancy, lo: int = 0, tagged: int | None = None):
        occ = np.asarray(occupancy)
        if occ.ndim != 1 or occ.size < 1:
            raise ValueError("occupancy must be a nonempty 1-d array")
        if not np.all((occ == 0) | (occ == 1)):
            raise ValueError("occupancy values must be 0 or 1")
        self.occupancy = np.ascontiguousarray(occ, dtype=np.uint8)
        self.lo = int(lo)
        if tagged is not None:
            tagged = int(tagged)
            if not self.lo <= tagged <= self.hi:
                raise ValueError("tagged site outside the window")
            if self.occupancy[tagged - self.lo] != 1:
                raise ValueError("tagged site must be occupied")
        self.tagged = tagged

    @classmethod
    def from_string(cls, bits: str, lo: int = 0, tagged: int | None = None) -> "Configuration":
        return cls(np.array([int(c) for c in bits], dtype=np.uint8), lo=lo, tagged=tagged)

    @property
    def hi(self) -> int:
        return self.lo + self.occupancy.size - 1

    @property
    def window(self) -> tuple[int, int]:
        return self.lo, self.hi

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    @property
    def particle_count(self) -> int:
        return int(self.occupancy.sum(dtype=np.int64))

    def eta(self, x: int) -> int:
        return int(self.occupancy[x - self.lo])

    def rank(self) -> int:
        """Number of particles strictly left of the tagged particle."""
        if self.tagged is None:
            raise MissingCounterError("no tagged particle")
        return int(self.occupancy[: self.tagged - self.lo].sum(dtype=np.int64))

    def copy(self) -> "Configuration":
        return Configuration(self.occupancy.copy(), self.lo, self.tagged)

    def __str__(self):
        return "".join(str(int(v)) for v in self.occupancy)

    def __repr__(self):
        return f"Configuration({str(self)!r}, lo={self.lo}, tagged={self.tagged})"


def sample_initial(profile: ProfileSpec, N: int, window, conditioned: bool,
                   rng: np.random.Generator) -> Configuration:
    """Product Bernoulli(rho_0(x/N)) configuration; if ``conditioned`` the
    origin is forced occupied and carries the tagged particle."""
    if N < 1:
        raise ValueError("N must be >= 1")
    lo, hi = _window_bounds(window)
    if not lo <= 0 <= hi:
        raise ValueError("window must contain the origin")
    sites = np.arange(lo, hi + 1)
    p = profile(sites / N)
    bad = ~((p >= 0.0) & (p <= 1.0))
    if np.any(bad):
        i = int(np.argmax(bad))
        raise InvalidProfileError(f"profile value {p[i]!r} outside [0, 1] at site {sites[i]}")
    occ = (rng.random(sites.size) < p).astype(np.uint8)
    tagged = None
    if conditioned:
        occ[-lo] = 1
        tagged = 0
    return Configuration(occ, lo, tagged)


class SimState:
    """One replica: configuration, clock, counters, integrals and RNG stream."""

    def __init__(self, config: Configuration, N: int, rng: np.random.Generator | None = None,
                 scheme: str = "rejection-free", seed: int = 0, replica_id: int = 0):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        if N < 1:
            raise ValueError("N must be >= 1")
        self.config = config
        self.N = int(N)
        self.rate = float(N) ** 2
        self.scheme = scheme
        self.rng = rng if rng is not None else replica_rng(seed, replica_id)
        self.time = 0.0
        S = config.occupancy.size
        self.eta0 = config.occupancy.copy()
        self.currents = np.zeros(max(S - 1, 0), np.int64)
        self._tag = -1 if config.tagged is None else config.tagged - config.lo
        self.events = 0
        if scheme == "rejection-free":
            self._act = np.empty(max(S - 1, 1), np.int64)
            self._pos = np.empty(max(S - 1, 1), np.int64)
            self._na = K.rebuild_active(config.occupancy, self._act, self._pos) if S > 1 else 0
            self._occ = np.zeros(S)
            self._last = np.zeros(S)
            self._bact = np.zeros(max(S - 1, 1))
            self._blast = np.zeros(max(S - 1, 1))
            self._ex = np.empty(0)
            self._un = np.empty(0)
            self._i = 0
        else:
            self._raw = np.empty(0, np.uint64)
            self._j = 0

    # -- derived views --------------------------------------------------
    @property
    def eta(self) -> np.ndarray:
        return self.config.occupancy

    @property
    def lo(self) -> int:
        return self.config.lo

    @property
    def tracks_integrals(self) -> bool:
        return self.scheme == "rejection-free"

    def active_bonds(self) -> set[int]:
        """Left sites x of the bonds (x, x+1) with unequal occupancies."""
        if self.scheme == "rejection-free":
            return {int(b) + self.lo for b in self._act[: self._na]}
        e = self.eta
        return {int(b) + self.lo for b in np.flatnonzero(e[:-1] != e[1:])}

    def rescan_active(self) -> set[int]:
        e = self.eta
        return {int(b) + self.lo for b in np.flatnonzero(e[:-1] != e[1:])}

    def occupation_integrals(self) -> np.ndarray:
        """int_0^t eta_s(x) ds for every window site (macroscopic time)."""
        if not self.tracks_integrals:
            raise MissingCounterError("occupation integrals are kept by the rejection-free scheme only")
        return self._occ + self.eta * (self.time - self._last)

    def active_time(self) -> np.ndarray:
        """int_0^t (eta_s(x) - eta_s(x+1))^2 ds for every bond."""
        if not self.tracks_integrals:
            raise MissingCounterError("bond activity integrals are kept by the rejection-free scheme only")
        S1 = self.eta.size - 1
        out = self._bact[:S1].copy()
        live = self._pos[:S1] >= 0
        out[live] += self.time - self._blast[:S1][live]
        return out

    # -- dynamics ---------------------------------------------------------
    def advance(self, target: float) -> "SimState":
        if target < self.time:
            raise ValueError(f"target time {target} precedes the current time {self.time}")
        if self.eta.size < 2 or target == self.time:
            self.time = float(target)
            return self
        if self.scheme == "rejection-free":
            self._advance_rf(float(target))
        else:
            self._advance_unif(float(target))
        return self

    def _advance_rf(self, target):
        t = self.time
        tag = self._tag
        while True:
            if self._i >= self._ex.size:
                self._ex = self.rng.standard_exponential(CHUNK)
                self._un = self.rng.random(CHUNK)
                self._i = 0
            i0 = self._i
            na, t, tag, i, done = K.rf_run(self.eta, self._act, self._pos, self._na, t, target,
                                           self.rate, self._ex, self._un, self._i, self.currents,
                                           self._occ, self._last, self._bact, self._blast, tag)
            self._na, self._i = na, i
            self.events += i - i0 - (1 if done and na > 0 else 0)  # overshoot draw is not an event
            if done:
                break
        self.time = target
        self._tag = tag
        self._sync_tag()

    def _advance_unif(self, target):
        nb = self.eta.size - 1
        nprop = int(self.rng.poisson(self.rate * nb * (target - self.time)))
        tag = self._tag
        while nprop > 0:
            if self._j >= 2 * self._raw.size:
                self._raw = self.rng.bit_generator.random_raw(CHUNK)
                self._j = 0
            k, j, tag, moved = K.unif_run(self.eta, nprop, self._raw, self._j, self.currents, tag)
            self._j = j
            nprop -= k
            self.events += moved
        self.time = target
        self._tag = tag
        self._sync_tag()

    def _sync_tag(self):
        self.config.tagged = None if self._tag < 0 else int(self._tag) + self.lo


# ---------------------------------------------------------------------------
# operations on states
# ---------------------------------------------------------------------------

def advance(state: SimState, target_time: float) -> SimState:
    """Evolve ``state`` to ``target_time`` (macroscopic seconds)."""
    return state.advance(target_time)


def _bond_index(state: SimState, bond) -> int:
    x, y = bond
    if y != x + 1:
        raise ValueError("bond must be a nearest-neighbour pair (x, x+1)")
    b = x - state.lo
    if b < 0 or b >= state.currents.size:
        raise MissingCounterError(f"bond ({x},{y}) is not tracked (window {state.config.window})")
    return b


def current(state: SimState, bond) -> int:
    """Signed number of jumps x -> x+1 minus x+1 -> x since time 0."""
    return int(state.currents[_bond_index(state, bond)])


def centered_current(state: SimState, bond, mean_current: float) -> float:
    """(J - E[J]) / sqrt(N)."""
    return (current(state, bond) - mean_current) / math.sqrt(state.N)


def _field_weights(G, sites, N, tol=1e-12):
    """G(x/N) on the window; warns when G has mass outside the window image."""
    lo, hi = sites[0] / N, sites[-1] / N
    tail = 0.0
    if isinstance(G, GaussianBump):
        tail = G.tail_mass(lo, hi)
    elif isinstance(G, PiecewiseLinear):
        a, b = G.support
        if a < lo or b > hi:
            tail = math.inf if (math.isinf(a) or math.isinf(b)) else \
                float(np.sum(np.abs(G(np.arange(math.floor(a * N), math.ceil(b * N) + 1) / N)))) / N
    if tail > tol:
        warnings.warn(TruncationWarning(f"test function {G!r} has estimated tail mass {tail:.3g} "
                                        f"outside the window [{lo:g}, {hi:g}]"), stacklevel=3)
    return np.asarray(G(sites / N), float)


def density_field(state: SimState, G, rhoN) -> float:
    """Y^N_t(G) = N^{-1/2} sum_x G(x/N) (eta_t(x) - rho^N_t(x)).

    ``rhoN`` is a FieldGrid holding the state's time or an array aligned with
    the window.
    """
    sites = state.config.sites
    if hasattr(rhoN, "rhoN"):
        if rhoN.N != state.N:
            raise ValueError("FieldGrid built for a different N")
        r = rhoN.rhoN(state.time)
        gsites = rhoN.sites
        if gsites[0] > sites[0] or gsites[-1] < sites[-1]:
            raise ValueError("FieldGrid does not cover the simulation window")
        r = r[sites[0] - gsites[0]: sites[-1] - gsites[0] + 1]
    else:
        r = np.asarray(rhoN, float)
    w = _field_weights(G, sites, state.N)
    return float(np.dot(w, state.eta - r)) / math.sqrt(state.N)


def martingale_value(state: SimState, bond) -> float:
    """M_{x,x+1}(t) = J_{x,x+1}(t) - N^2 int_0^t (eta_s(x) - eta_s(x+1)) ds."""
    b = _bond_index(state, bond)
    occ = state.occupation_integrals()
    return float(state.currents[b]) - state.rate * (occ[b] - occ[b + 1])


def quadratic_variation(state: SimState, bond) -> float:
    """<M>_t = N^2 int_0^t (eta_s(x) - eta_s(x+1))^2 ds."""
    b = _bond_index(state, bond)
    return state.rate * float(state.active_time()[b])


def tagged_identity_check(state: SimState, n: int) -> bool:
    """({X_t >= n} iff {J_{-1,0}(t) >= sum_{x=0}^{n-1} eta_t(x)}) for n >= 1."""
    if state.config.tagged is None:
        raise MissingCounterError("no tagged particle")
    if n < 1:
        raise ValueError("n must be >= 1")
    J = current(state, (-1, 0))
    lo = state.lo
    if n - 1 > state.config.hi:
        raise ValueError("sites 0..n-1 must lie inside the window")
    mass = int(state.eta[-lo: -lo + n].sum(dtype=np.int64))
    return (state.config.tagged >= n) == (J >= mass)


def tagged_identity_all(state: SimState) -> bool:
    """Check the tagged/current identity for every n (both tails) at once.

    For n >= 1: X >= n iff J >= sum_{0}^{n-1} eta. Mirror image for n >= 1:
    X <= -n iff J <= -1 - sum_{-n+1}^{-1} eta. Requires X_0 = 0.
    """
    X = state.config.tagged
    if X is None:
        raise MissingCounterError("no tagged particle")
    J = current(state, (-1, 0))
    lo, e = state.lo, state.eta.astype(np.int64)
    right = np.cumsum(e[-lo:])[:-1]               # sums over 0..n-1, n = 1..hi
    n_r = np.arange(1, right.size + 1)
    ok = np.all((X >= n_r) == (J >= right))
    left = np.cumsum(e[: -lo][::-1])[:-1] if lo < 0 else np.zeros(0, np.int64)
    left = np.concatenate([[0], left]) if lo < 0 else left  # sums over -n+1..-1, n = 1..-lo
    n_l = np.arange(1, left.size + 1)
    ok &= np.all((X <= -n_l) == (J <= -1 - left))
    return bool(ok)


def conservation_check(state: SimState) -> bool:
    """J_{x-1,x} - J_{x,x+1} = eta_t(x) - eta_0(x) at every interior site,
    and the end sites see only one bond."""
    J = state.currents
    d = state.eta.astype(np.int64) - state.eta0.astype(np.int64)
    if J.size == 0:
        return bool(np.all(d == 0))
    inflow = np.concatenate([[0], J]) - np.concatenate([J, [0]])
    return bool(np.array_equal(inflow, d))


def rank_check(state: SimState, rank0: int) -> bool:
    return state.config.rank() == rank0


def assert_invariants(state: SimState, replica_id=None, rank0: int | None = None) -> None:
    """Raise CorruptedDynamicsError if an exact pathwise identity fails."""
    t = state.time
    if not conservation_check(state):
        raise CorruptedDynamicsError("conservation identity violated", replica_id, t)
    if state.config.tagged is not None:
        if not tagged_identity_all(state):
            raise CorruptedDynamicsError("tagged/current identity violated", replica_id, t)
        if rank0 is not None and not rank_check(state, rank0):
            raise CorruptedDynamicsError("tagged particle changed rank", replica_id, t)
