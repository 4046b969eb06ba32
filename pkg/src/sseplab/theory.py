"""Quadrature for the limiting Gaussian covariances.

All kernels use the Laplacian semigroup: p_t(u, v) is the Gaussian density of
variance 2t, and "P_a[B_t <= x]" is Phi((x - a) / sqrt(2t)).

Singular time integrals are handled with the substitution r = s - q^2 (the
integrands behave like (s - r)^{-1/2} near r = s), and space integrals use
panels graded around every kink, jump or kernel centre at the width of the
kernel that sits there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import ArgumentOrderError, DegenerateDensityError, UnsupportedFunctionError
from .hydro import heat_exact, lln_path
from .profiles import ProfileSpec
from .quadrature import gauss_expectation, panel_nodes, refine_edges
from .testfunctions import GaussianBump, PiecewiseLinear

_GRADE = np.array([0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0])


@dataclass(frozen=True)
class CovValue:
    value: float
    error: float = 0.0

    def __post_init__(self):
        if not self.error >= 0.0:
            raise ValueError("quadrature error estimate must be nonnegative")

    def __float__(self):
        return float(self.value)

    def __add__(self, other):
        if isinstance(other, CovValue):
            return CovValue(self.value + other.value, self.error + other.error)
        return CovValue(self.value + float(other), self.error)

    def __sub__(self, other):
        if isinstance(other, CovValue):
            return CovValue(self.value - other.value, self.error + other.error)
        return CovValue(self.value - float(other), self.error)

    def scaled(self, c: float) -> "CovValue":
        return CovValue(self.value * c, self.error * abs(c))


@dataclass
class KernelContext:
    """Everything the covariance formulas need besides the test functions.

    ``chi(r, x)`` is chi_r(x + shift); ``shift`` implements the translation of
    chi used for currents through a bond away from the origin.
    """

    profile: ProfileSpec
    truncation: float = 8.0
    tol: float = 1e-8
    shift: float = 0.0
    lln_table: dict = field(default_factory=dict)
    kernel_variance: str = "2t"
    max_level: int = 5

    def translated(self, u: float) -> "KernelContext":
        return KernelContext(self.profile, self.truncation, self.tol, self.shift + u,
                             self.lln_table, self.kernel_variance, self.max_level)

    def rho(self, r, x):
        return heat_exact(self.profile, r, np.asarray(x) + self.shift)

    def drho(self, r, x):
        return heat_exact(self.profile, r, np.asarray(x) + self.shift, derivative=1)

    def chi(self, r, x):
        v = self.rho(r, x)
        return v * (1.0 - v)

    def u_at(self, t: float) -> float:
        """LLN path u_t (cached)."""
        t = float(t)
        if t not in self.lln_table:
            self.lln_table[t] = float(lln_path(self.profile, [t])[0])
        return self.lln_table[t]

    @property
    def feature_scale(self) -> float:
        sc = self.profile.scale
        return 0.25 if not math.isfinite(sc) else min(0.25, 0.5 * sc)

    def profile_span(self) -> tuple[float, float]:
        a, b = self.profile.transition
        return a - self.shift, b - self.shift


# ---------------------------------------------------------------------------
# semigroup
# ---------------------------------------------------------------------------

class Evolved:
    """T_t G together with its gradient."""

    def __init__(self, G, t: float):
        self.G = G
        self.t = float(t)

    def __call__(self, x):
        return self.G.semigroup(self.t, x)

    def grad(self, x):
        if self.t == 0.0:
            if isinstance(self.G, PiecewiseLinear):
                return self.G.slope(x)
            x = np.asarray(x, float)
            return -(x - self.G.center) / self.G.width ** 2 * self.G(x)
        return self.G.semigroup_grad(self.t, x)


def _check_supported(G):
    if not isinstance(G, (PiecewiseLinear, GaussianBump)):
        raise UnsupportedFunctionError(
            f"{type(G).__name__} is not a supported test function; use ramps, indicators, "
            "piecewise-linear functions or Gaussian bumps")


def semigroup_apply(G, t: float) -> Evolved:
    """Closed-form T_t G (and its gradient) for the supported families."""
    _check_supported(G)
    if t < 0:
        raise ValueError("t must be nonnegative")
    return Evolved(G, t)


def _features(G):
    """(points, scale) pairs where G is not smooth or is concentrated."""
    if isinstance(G, PiecewiseLinear):
        return [(float(k), 0.0) for k in G.knots]
    return [(G.center, G.width)]


def _is_zero(G) -> bool:
    if isinstance(G, PiecewiseLinear):
        return not np.any(G.left) and not np.any(G.right) and G.tail_left == 0.0
    return G.amplitude == 0.0


def _bounded(G) -> bool:
    a, b = G.support
    return (math.isfinite(a) and math.isfinite(b)) or isinstance(G, GaussianBump)


# ---------------------------------------------------------------------------
# integration helpers
# ---------------------------------------------------------------------------

def _edges_1d(lo, hi, graded, background_h):
    """Sorted panel edges on [lo, hi]: graded around (centre, scale) pairs plus
    a uniform background mesh."""
    n_bg = max(4, int(math.ceil((hi - lo) / background_h)))
    pts = [np.linspace(lo, hi, n_bg + 1)]
    for c, sc in graded:
        pts.append(c - _GRADE * sc)
        pts.append(c + _GRADE * sc)
    pts = np.concatenate(pts)
    return np.unique(np.clip(pts, lo, hi))


def _edges_rows(lo, hi, graded_rows, background_h):
    """Like _edges_1d but with centres/scales varying along a batch axis.

    ``graded_rows`` holds (centre, scale_array) pairs; every row gets the same
    number of edges (clipping produces empty panels, which integrate to 0).
    """
    nrow = np.broadcast(*[np.asarray(s) for _, s in graded_rows]).shape[0] if graded_rows else 1
    n_bg = max(4, int(math.ceil((hi - lo) / background_h)))
    cols = [np.broadcast_to(np.linspace(lo, hi, n_bg + 1), (nrow, n_bg + 1))]
    for c, sc in graded_rows:
        sc = np.broadcast_to(np.asarray(sc, float), (nrow,))[:, None]
        cols.append(np.broadcast_to(c, (nrow, 1)) - _GRADE[None, :] * sc)
        cols.append(np.broadcast_to(c, (nrow, 1)) + _GRADE[None, :] * sc)
    e = np.sort(np.clip(np.concatenate(cols, axis=1), lo, hi), axis=1)
    return e


def _integrate_2d(f, q_edges, x_edges_fn, tol, max_level, m=8):
    """int dq int dx f(q, x) where the x-panels depend on q.

    ``x_edges_fn(q)`` returns an (nq, ne) array of x-edges for a flat array of
    q-nodes. Both meshes are halved together until two levels agree.
    Returns (value, error).
    """
    prev = None
    xlevel = 0
    for level in range(max_level + 1):
        q, wq = panel_nodes(q_edges, m)
        xe = x_edges_fn(q)
        for _ in range(xlevel):
            xe = refine_edges(xe)
        x, wx = panel_nodes(xe, m)
        vals = f(q[:, None], x)
        inner = np.sum(wx * vals, axis=1)
        val = float(np.dot(wq, inner))
        if prev is not None:
            err = abs(val - prev)
            if err <= tol:
                return val, err
        prev = val
        q_edges = refine_edges(q_edges)
        xlevel += 1
    return val, err  # caller reports the (large) error estimate


def _integrate_1d(f, edges, tol, max_level, m=8):
    prev = None
    for level in range(max_level + 1):
        x, w = panel_nodes(edges, m)
        val = float(np.dot(w, f(x)))
        if prev is not None:
            err = abs(val - prev)
            if err <= tol:
                return val, err
        prev = val
        edges = refine_edges(edges)
    return val, err


def _time_edges(s: float, n: int = 8):
    """q-edges on [0, sqrt(s)], denser close to q = 0 (r close to s)."""
    qs = math.sqrt(s)
    g = np.array([0.0, 1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0])
    return np.unique(np.concatenate([qs * g, np.linspace(0.0, qs, n + 1)]))


# ---------------------------------------------------------------------------
# OU covariance
# ---------------------------------------------------------------------------

def _x_range(H, G, t, ctx):
    pts = [p for p, _ in _features(H) + _features(G)]
    if isinstance(H, GaussianBump) or isinstance(G, GaussianBump):
        for B in (H, G):
            if isinstance(B, GaussianBump):
                pts += [B.center - 10 * B.width, B.center + 10 * B.width]
    if not pts:
        pts = [0.0]
    reach = ctx.truncation * math.sqrt(2.0 * t)
    return min(pts) - reach, max(pts) + reach


def ou_covariance(H, G, s: float, t: float, ctx: KernelContext, form: str = "partsIntegrated") -> CovValue:
    """E[Y_t(H) Y_s(G)] for 0 <= s <= t.

    ``form="original"`` integrates the chi_s term and the source term
    2 (d_x rho)^2; ``form="partsIntegrated"`` uses chi_0 and the gradient
    pairing. Both are equal; their difference is a quadrature check.
    """
    if s > t:
        raise ArgumentOrderError(f"need s <= t, got s={s}, t={t}")
    if s < 0:
        raise ValueError("times must be nonnegative")
    for F in (H, G):
        _check_supported(F)
    if _is_zero(H) or _is_zero(G):
        return CovValue(0.0, 0.0)
    if not (_bounded(H) or _bounded(G)):
        raise UnsupportedFunctionError("at least one of H, G needs bounded support")
    lo, hi = _x_range(H, G, t, ctx)
    bg = ctx.feature_scale
    pa, pb = ctx.profile_span()
    prof_feats = [(c - ctx.shift, ctx.profile.scale) for c in ctx.profile.breakpoints]
    if form == "original":
        first = _first_original(H, G, s, t, ctx, lo, hi, bg, prof_feats)
        if s == 0.0:
            return first
        second = _double_original(H, G, s, t, ctx, lo, hi, bg)
        return first - second
    if form == "partsIntegrated":
        first = _first_parts(H, G, s, t, ctx, lo, hi, bg, prof_feats)
        if s == 0.0:
            return first
        second = _double_parts(H, G, s, t, ctx, lo, hi, bg)
        return first + second
    raise ValueError(f"unknown form {form!r}")


def _graded(F, tau):
    sc = math.sqrt(2.0 * tau)
    return [(c, max(sc, w)) for c, w in _features(F)] + [(c, 0.0) for c, _ in _features(F)]


def _first_original(H, G, s, t, ctx, lo, hi, bg, prof_feats):
    TH = semigroup_apply(H, t - s)
    edges = _edges_1d(lo, hi, _graded(H, t - s) + _graded(G, 0.0) + prof_feats, bg)
    val, err = _integrate_1d(lambda x: TH(x) * G(x) * ctx.chi(s, x), edges, ctx.tol, ctx.max_level + 3)
    return CovValue(val, err)


def _first_parts(H, G, s, t, ctx, lo, hi, bg, prof_feats):
    TH, TG = semigroup_apply(H, t), semigroup_apply(G, s)
    edges = _edges_1d(lo, hi, _graded(H, t) + _graded(G, s) + prof_feats, bg)
    val, err = _integrate_1d(lambda x: TH(x) * TG(x) * ctx.chi(0.0, x), edges, ctx.tol, ctx.max_level + 3)
    return CovValue(val, err)


def _row_features(H, G, s, t, q):
    r = s - q * q
    sH = np.sqrt(2.0 * (t - r))
    sG = np.sqrt(2.0 * (s - r))
    rows = []
    for c, w in _features(H):
        rows.append((c, np.maximum(sH, w)))
    for c, w in _features(G):
        rows.append((c, np.maximum(sG, w)))
        rows.append((c, np.maximum(sG, w) * 16.0))
    return rows


def _double_original(H, G, s, t, ctx, lo, hi, bg):
    def f(q, x):
        r = s - q * q
        TH = H.semigroup(t - r, x)
        TG = G.semigroup(s - r, x)
        d = ctx.drho(r, x)
        return 2.0 * q * TH * TG * 2.0 * d * d

    val, err = _integrate_2d(f, _time_edges(s),
                             lambda q: _edges_rows(lo, hi, _row_features(H, G, s, t, q), bg),
                             ctx.tol, ctx.max_level)
    return CovValue(val, err)


def _double_parts(H, G, s, t, ctx, lo, hi, bg):
    def f(q, x):
        r = s - q * q
        gH = _grad(H, t - r, x)
        gG = _grad(G, s - r, x)
        return 2.0 * q * 2.0 * gH * gG * ctx.chi(r, x)

    val, err = _integrate_2d(f, _time_edges(s),
                             lambda q: _edges_rows(lo, hi, _row_features(H, G, s, t, q), bg),
                             ctx.tol, ctx.max_level)
    return CovValue(val, err)


def _grad(F, tau, x):
    tau = np.broadcast_to(np.asarray(tau, float), np.broadcast(tau, x).shape)
    out = F.semigroup_grad(np.maximum(tau, 1e-300), x)
    return out


# ---------------------------------------------------------------------------
# current and tagged covariances
# ---------------------------------------------------------------------------

def _three_term(s, t, a_s, a_t, c, ctx: KernelContext) -> CovValue:
    """Half-line terms with Brownian motions from a_s, a_t split at c, plus
    2 int_0^s dr int p_{t-r}(a_t, x) p_{s-r}(a_s, x) chi_r(x) dx."""
    if s > t:
        raise ArgumentOrderError(f"need s <= t, got s={s}, t={t}")
    if s < 0:
        raise ValueError("times must be nonnegative")
    if s == 0.0:
        return CovValue(0.0, 0.0)
    ss, st = math.sqrt(2.0 * s), math.sqrt(2.0 * t)
    reach = ctx.truncation * st
    lo = min(a_s, a_t, c) - reach
    hi = max(a_s, a_t, c) + reach
    pa, pb = ctx.profile_span()
    feats = [(a_s, ss), (a_t, st), (c, 0.0)] + [(b - ctx.shift, ctx.profile.scale)
                                                 for b in ctx.profile.breakpoints]
    bg = ctx.feature_scale

    def left(x):
        return ndtr((x - a_s) / ss) * ndtr((x - a_t) / st) * ctx.chi(0.0, x)

    def right(x):
        return ndtr((a_s - x) / ss) * ndtr((a_t - x) / st) * ctx.chi(0.0, x)

    e1 = _edges_1d(lo, c, [f for f in feats if lo < f[0] <= c] or [(c, 0.0)], bg) if c > lo else None
    e2 = _edges_1d(c, hi, [f for f in feats if c <= f[0] < hi] or [(c, 0.0)], bg) if hi > c else None
    v1, r1 = _integrate_1d(left, e1, ctx.tol, ctx.max_level + 3) if e1 is not None else (0.0, 0.0)
    v2, r2 = _integrate_1d(right, e2, ctx.tol, ctx.max_level + 3) if e2 is not None else (0.0, 0.0)

    # third term: p_{t-r}(a_t,x) p_{s-r}(a_s,x) = p_{t+s-2r}(a_t,a_s) N(x; m, v)
    inner_tol = ctx.tol * 1e-2

    def f(q):
        r = s - q * q
        tau1, tau2 = t - r, s - r
        tot = tau1 + tau2
        pref = np.exp(-(a_t - a_s) ** 2 / (4.0 * tot)) / np.sqrt(4.0 * math.pi * tot)
        m = (a_t * tau2 + a_s * tau1) / tot
        sd = np.sqrt(2.0 * tau1 * tau2 / tot)
        e, _ = gauss_expectation(lambda z: ctx.chi(r[None, :], m[None, :] + sd[None, :] * z[:, None]),
                                 tol=inner_tol, chunk=16)
        return 2.0 * 2.0 * q * pref * e

    v3, r3 = _integrate_1d(f, _time_edges(s), ctx.tol, ctx.max_level + 2)
    return CovValue(v1 + v2 + v3, r1 + r2 + r3 + inner_tol * 2.0 * s)


def current_covariance(s: float, t: float, u: float, ctx: KernelContext) -> CovValue:
    """Limiting E[Z_s Z_t] for the current through the bond at macroscopic u."""
    return _three_term(s, t, 0.0, 0.0, 0.0, ctx.translated(u))


def tagged_covariance(s: float, t: float, ctx: KernelContext) -> CovValue:
    """Limiting E[W_s W_t] for the tagged particle centred at N u_t."""
    if s > t:
        raise ArgumentOrderError(f"need s <= t, got s={s}, t={t}")
    if s == 0.0:
        return CovValue(0.0, 0.0)
    us, ut = ctx.u_at(s), ctx.u_at(t)
    rs, rt = float(ctx.rho(s, us)), float(ctx.rho(t, ut))
    if rs <= 1e-12 or rt <= 1e-12:
        raise DegenerateDensityError(f"density vanishes along the tagged path (rho={rs:g}, {rt:g})")
    raw = _three_term(s, t, us, ut, 0.0, ctx)
    return raw.scaled(1.0 / (rs * rt))


def covariance_matrix(times, fn) -> tuple[np.ndarray, np.ndarray]:
    """Matrix [fn(min(ti,tj), max(ti,tj))] with quadrature errors."""
    times = list(times)
    n = len(times)
    V = np.zeros((n, n))
    E = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            a, b = sorted((times[i], times[j]))
            cv = fn(a, b)
            V[i, j] = V[j, i] = cv.value
            E[i, j] = E[j, i] = cv.error
    return V, E


def ramp_decay_bound(t: float, n: float, C0: float = 1.0) -> float:
    """Envelope t/n + C0 t^{5/2} / n^2 for the ramp-approximation error."""
    if t < 0 or n < 1:
        raise ValueError("need t >= 0 and n >= 1")
    return t / n + C0 * t ** 2.5 / n ** 2


def equilibrium_alpha(chi_value: float) -> float:
    """alpha with E[Z_t^2] = alpha sqrt(t) at constant chi: 2 chi / sqrt(pi)."""
    return 2.0 * chi_value / math.sqrt(math.pi)


def pair_correlation_limit(t: float, u: float, v: float, ctx: KernelContext) -> CovValue:
    """Limit of N phi(t; uN, vN):
    -2 int_0^t ds int dw (d_w rho_s(w))^2 p_{t-s}(u, w) p_{t-s}(v, w)."""
    if t <= 0:
        return CovValue(0.0, 0.0)
    inner_tol = ctx.tol * 1e-2
    mid = 0.5 * (u + v)

    def f(q):
        s = t - q * q
        tau = q * q
        pref = np.exp(-(u - v) ** 2 / (8.0 * tau)) / np.sqrt(8.0 * math.pi * tau)
        sd = np.sqrt(tau)
        e, _ = gauss_expectation(lambda z: ctx.drho(s[None, :], mid + sd[None, :] * z[:, None]) ** 2,
                                 tol=inner_tol, chunk=16)
        return -2.0 * 2.0 * q * pref * e

    val, err = _integrate_1d(f, _time_edges(t), ctx.tol, ctx.max_level + 2)
    return CovValue(val, err + inner_tol * 2.0 * t)
