"""Deterministic side: discrete and continuum heat equations, chi, the
tagged-particle law-of-large-numbers path and the mean current.

Conventions: space is macroscopic u = x/N, time is macroscopic, and the heat
semigroup is the one generated by the Laplacian (Gaussian kernel of variance
2t).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import ndtr

from .errors import DegenerateDensityError, StabilityError
from .profiles import ProfileSpec
from .quadrature import gauss_expectation, integrate

_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

PDE_TOL = 1e-10


# ---------------------------------------------------------------------------
# continuum solution
# ---------------------------------------------------------------------------

_ZCLIP = 40.0


def _truncated_moments(za, zb, kmax):
    """M_k = int_za^zb z^k phi(z) dz for k = 0..kmax (limits may be infinite)."""
    # beyond |z| = 40 phi underflows to 0; clipping keeps z^k phi from becoming inf * 0
    za = np.clip(za, -_ZCLIP, _ZCLIP)
    zb = np.clip(zb, -_ZCLIP, _ZCLIP)
    pa = _INV_SQRT2PI * np.exp(-0.5 * za * za)
    pb = _INV_SQRT2PI * np.exp(-0.5 * zb * zb)
    fa, fb = za, zb
    m = [ndtr(zb) - ndtr(za)]
    if kmax >= 1:
        m.append(pa - pb)
    for k in range(2, kmax + 1):
        m.append((k - 1) * m[k - 2] + fa ** (k - 1) * pa - fb ** (k - 1) * pb)
    return m


def _convolve_pieces(pieces, x, s, deriv):
    out = np.zeros(np.broadcast(x, s).shape)
    for a, b, origin, poly in pieces:
        P = poly.deriv(deriv) if deriv else poly
        coef = P.coef
        if not np.any(coef):
            continue
        deg = coef.size - 1
        za = (a - x) / s if math.isfinite(a) else np.full_like(out, -np.inf)
        zb = (b - x) / s if math.isfinite(b) else np.full_like(out, np.inf)
        mom = _truncated_moments(za, zb, deg)
        y = x - origin
        dP = P
        fact = 1.0
        for j in range(deg + 1):
            if j:
                dP = dP.deriv()
                fact *= j
            out = out + dP(y) / fact * s ** j * mom[j]
    return out


def heat_exact(profile: ProfileSpec, t, u, derivative: int = 0, tol: float = PDE_TOL):
    """rho(t, u) = (T_t rho_0)(u), or its ``derivative``-th u-derivative.

    Closed forms are used for erf fronts and piecewise-polynomial profiles
    (constant, ramps, smoothstep, tabulated); other profiles are convolved by
    an adaptive trapezoid rule in the standardized variable on |z| <= 8.
    """
    t = np.asarray(t, float)
    u = np.asarray(u, float)
    if np.any(t < 0):
        raise ValueError("heat_exact needs t >= 0")
    shape = np.broadcast(t, u).shape
    t, u = np.broadcast_to(t, shape), np.broadcast_to(u, shape)
    s = np.sqrt(2.0 * t)
    out = np.empty(shape)
    at0 = s == 0.0
    if np.any(at0):
        out[at0] = profile(u[at0]) if derivative == 0 else profile.derivative(u[at0], derivative)
    pos = ~at0
    if not np.any(pos):
        return out[()] if out.ndim == 0 else out
    sp, up = s[pos], u[pos]
    p = profile.params
    pieces = profile.polynomial_pieces()
    if pieces is not None:
        out[pos] = _convolve_pieces(pieces, up, sp, derivative)
    elif profile.kind == "erf-front":
        width = np.sqrt(p["width"] ** 2 + sp ** 2)
        y = (up - p["center"]) / width
        if derivative == 0:
            out[pos] = p["lo"] + (p["hi"] - p["lo"]) * ndtr(y)
        else:
            he = np.polynomial.hermite_e.hermeval(y, [0.0] * (derivative - 1) + [1.0])
            out[pos] = ((p["hi"] - p["lo"]) * (-1) ** (derivative - 1) * he
                        * _INV_SQRT2PI * np.exp(-0.5 * y * y) / width ** derivative)
    else:
        if derivative == 0:
            def f(z):
                return profile(up[None, :] + sp[None, :] * z[:, None])
        else:
            def f(z):
                return profile.derivative(up[None, :] + sp[None, :] * z[:, None], derivative)
        val, _ = gauss_expectation(f, tol=tol)
        out[pos] = val
    return out[()] if out.ndim == 0 else out


def chi(profile: ProfileSpec, t, u):
    """chi(t, u) = rho (1 - rho)."""
    r = heat_exact(profile, t, u)
    return r * (1.0 - r)


def macroscopic_flux(profile: ProfileSpec, t: float, u: float = 0.0, tol: float = PDE_TOL) -> float:
    """-int_0^t d_u rho(s, u) ds: net mass carried across u up to time t."""
    if t <= 0:
        return 0.0
    # s = q^2 removes any sqrt(s) behaviour at the origin
    q_max = math.sqrt(t)

    def f(q):
        return 2.0 * q * heat_exact(profile, q * q, np.full_like(q, u), derivative=1)

    val, _ = integrate(f, np.linspace(0.0, q_max, 9), tol=tol)
    return -float(val)


def mass_between(profile: ProfileSpec, t: float, a: float, b: float, tol: float = PDE_TOL) -> float:
    """int_a^b rho(t, w) dw (signed, b may be below a)."""
    if a == b:
        return 0.0
    lo, hi = min(a, b), max(a, b)
    edges = _feature_edges(profile, t, lo, hi)
    val, _ = integrate(lambda w: heat_exact(profile, t, w), edges, tol=tol)
    return float(val) if b >= a else -float(val)


def _feature_edges(profile: ProfileSpec, t: float, lo: float, hi: float, npanel: int = 8):
    pts = [lo, hi, *np.linspace(lo, hi, npanel + 1)]
    scale = max(math.sqrt(2.0 * t), min(profile.scale, hi - lo) if math.isfinite(profile.scale) else 0.0)
    for c in profile.breakpoints:
        pts.extend(c + scale * r for r in (-2, -1, -0.5, 0.0, 0.5, 1, 2))
    pts = np.asarray(pts)
    return np.unique(pts[(pts >= lo) & (pts <= hi)])


def lln_path(profile: ProfileSpec, times, tol: float = 1e-10, residual_tol: float = 1e-8) -> np.ndarray:
    """u_t solving int_0^{u_t} rho(t, w) dw = -int_0^t d_u rho(s, 0) ds.

    Bracket expansion by doubling from [-1, 1], then bisection to ``tol``.
    """
    out = []
    for t in np.atleast_1d(np.asarray(times, float)):
        if t == 0.0:
            out.append(0.0)
            continue
        target = macroscopic_flux(profile, float(t), 0.0)
        if target == 0.0:
            out.append(0.0)
            continue

        def g(v):
            return mass_between(profile, float(t), 0.0, v) - target

        lo, hi = -1.0, 1.0
        glo, ghi = g(lo), g(hi)
        for _ in range(60):
            if glo <= 0.0 <= ghi:
                break
            if glo > 0.0:
                lo *= 2.0
                glo = g(lo)
            if ghi < 0.0:
                hi *= 2.0
                ghi = g(hi)
        else:
            raise DegenerateDensityError(f"no bracket for u_t at t={t:g}; density vanishes")
        if ghi - glo <= 1e-14:
            raise DegenerateDensityError(f"density vanishes over the bracket at t={t:g}")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if gm < 0.0:
                lo = mid
            else:
                hi = mid
        root = 0.5 * (lo + hi)
        res = abs(g(root))
        if res > residual_tol:
            raise DegenerateDensityError(f"u_t residual {res:.3g} above {residual_tol:g} at t={t:g}")
        out.append(root)
    return np.asarray(out)


# ---------------------------------------------------------------------------
# discrete scheme
# ---------------------------------------------------------------------------

@njit(cache=True)
def _explicit_steps(rho, lam, targets, bonds, field_out, flux_out):
    """Advance rho by the explicit recurrence with mirror ends.

    Snapshots rho at each step count in ``targets`` (sorted) and the
    trapezoid integral lam * sum (rho[b] - rho[b+1]) for each bond b.
    """
    S = rho.size
    new = np.empty_like(rho)
    acc = np.zeros(bonds.size)
    prev = np.empty(bonds.size)
    for j in range(bonds.size):
        prev[j] = rho[bonds[j]] - rho[bonds[j] + 1]
    k = 0
    step = 0
    nt = targets.size
    while k < nt and targets[k] == 0:
        field_out[k, :] = rho
        k += 1
    while k < nt:
        for i in range(S):
            left = rho[i - 1] if i > 0 else rho[i]
            right = rho[i + 1] if i < S - 1 else rho[i]
            new[i] = rho[i] + lam * (left + right - 2.0 * rho[i])
        rho, new = new, rho
        step += 1
        for j in range(bonds.size):
            cur = rho[bonds[j]] - rho[bonds[j] + 1]
            acc[j] += 0.5 * (prev[j] + cur)
            prev[j] = cur
        while k < nt and targets[k] == step:
            field_out[k, :] = rho
            for j in range(bonds.size):
                flux_out[k, j] = lam * acc[j]
            k += 1
    return rho


def default_pde_window(profile: ProfileSpec, N: int, T: float, radius: float = 8.0) -> int:
    """Half-width L (in sites) so that the mirror ends sit 8 kernel standard
    deviations outside the profile's transition region."""
    a, b = profile.transition
    reach = max(abs(a), abs(b)) + radius * math.sqrt(2.0 * max(T, 0.0))
    return int(math.ceil(N * reach)) + 2


def step_count(t: float, delta: float) -> int:
    return int(math.floor(t / delta + 1e-9))


def solve_discrete(profile: ProfileSpec, N: int, T: float, times, window: int | None = None,
                   delta_ratio: float = 0.25, bonds=()):
    """rho^{delta,N} at floor(t/delta) steps for each t in ``times``.

    ``window`` is the half-width L of the site window [-L, L] (closed, no-flux
    ends). ``bonds`` lists left sites x of bonds (x, x+1) whose time-integrated
    mean current N^2 int (rho(x) - rho(x+1)) ds is recorded.
    Returns ``(sites, field[nt, S], flux[nt, nbonds], delta)``.
    """
    if delta_ratio >= 0.5:
        raise StabilityError(f"delta*N^2 = {delta_ratio:g} violates the stability condition delta*N^2 < 1/2")
    if delta_ratio <= 0:
        raise StabilityError("delta*N^2 must be positive")
    times = np.asarray(times, float)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ValueError("times must be sorted and nonnegative")
    if T < (times.max() if times.size else 0.0):
        raise ValueError("times exceed T")
    L = default_pde_window(profile, N, T) if window is None else int(window)
    sites = np.arange(-L, L + 1)
    rho0 = np.ascontiguousarray(profile(sites / N), dtype=float)
    profile.check_range(sites / N)
    delta = delta_ratio / N ** 2
    targets = np.array([step_count(t, delta) for t in times], dtype=np.int64)
    bidx = np.array([int(b) + L for b in bonds], dtype=np.int64)
    if np.any(bidx < 0) or np.any(bidx >= sites.size - 1):
        raise ValueError("tracked bond outside the window")
    field_out = np.empty((times.size, sites.size))
    flux_out = np.zeros((times.size, bidx.size))
    _explicit_steps(rho0.copy(), float(delta_ratio), targets, bidx, field_out, flux_out)
    return sites, field_out, flux_out, delta


def mean_current(profile: ProfileSpec, N: int, bond, t: float, window: int | None = None,
                 delta_ratio: float = 0.25) -> float:
    """E[J_{x0-1,x0}(t)] = N^2 int_0^t (rho^N_s(x0-1) - rho^N_s(x0)) ds (particle units).

    ``bond`` is the pair (x0 - 1, x0).
    """
    x, y = bond
    if y != x + 1:
        raise ValueError("bond must be a nearest-neighbour pair (x, x+1)")
    if t == 0:
        return 0.0
    _, _, flux, _ = solve_discrete(profile, N, t, [t], window=window, delta_ratio=delta_ratio, bonds=[x])
    return float(flux[0, 0])


# ---------------------------------------------------------------------------
# FieldGrid
# ---------------------------------------------------------------------------

@dataclass
class FieldGrid:
    """rho^N, rho, chi on a space-time grid plus the LLN path u_t."""

    profile: ProfileSpec
    N: int
    times: np.ndarray
    sites: np.ndarray
    delta: float
    discrete: np.ndarray
    exact: np.ndarray | None = None
    lln: np.ndarray | None = None
    bonds: tuple = ()
    flux: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return int(-self.sites[0])

    @property
    def chi(self) -> np.ndarray | None:
        return None if self.exact is None else self.exact * (1.0 - self.exact)

    def time_index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-12:
            raise KeyError(f"time {t!r} not on the grid")
        return i

    def rhoN(self, t: float) -> np.ndarray:
        return self.discrete[self.time_index(t)]

    def mean_current(self, bond, t: float) -> float:
        x, _ = bond
        return float(self.flux[self.time_index(t), list(self.bonds).index(x)])

    def to_csv(self, path, comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh)
            w.writerow(["t", "x", "rhoN", "rhoExact", "chi"])
            chi_arr = self.chi
            for i, t in enumerate(self.times):
                for j, x in enumerate(self.sites):
                    ex = "" if self.exact is None else repr(float(self.exact[i, j]))
                    ch = "" if chi_arr is None else repr(float(chi_arr[i, j]))
                    w.writerow([repr(float(t)), int(x), repr(float(self.discrete[i, j])), ex, ch])

    def sidecar(self) -> dict:
        return {
            "N": self.N,
            "delta": self.delta,
            "window": [int(self.sites[0]), int(self.sites[-1])],
            "profile": self.profile.to_dict(),
            "times": [float(t) for t in self.times],
            "u_t": None if self.lln is None else [[float(t), float(u)] for t, u in zip(self.times, self.lln)],
            "mean_current": None if self.flux is None else {
                f"{b},{b + 1}": [float(v) for v in self.flux[:, j]] for j, b in enumerate(self.bonds)},
            **self.meta,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2)


def build_field_grid(profile: ProfileSpec, N: int, times, window: int | None = None,
                     delta_ratio: float = 0.25, bonds=(), exact: bool = True,
                     lln: bool = True) -> FieldGrid:
    times = np.asarray(times, float)
    T = float(times.max()) if times.size else 0.0
    sites, disc, flux, delta = solve_discrete(profile, N, T, times, window=window,
                                              delta_ratio=delta_ratio, bonds=bonds)
    ex = heat_exact(profile, times[:, None], sites[None, :] / N) if exact else None
    path = lln_path(profile, times) if lln else None
    return FieldGrid(profile, N, times, sites, delta, disc, ex, path, tuple(int(b) for b in bonds), flux)


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceTable:
    t: float
    Ns: list
    errors: list
    ratios: list

    def rows(self):
        out = []
        for i, (n, e) in enumerate(zip(self.Ns, self.errors)):
            out.append({"t": self.t, "N": n, "sup_error": e,
                        "ratio": self.ratios[i - 1] if i else None})
        return out

    def to_csv(self, path, comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.DictWriter(fh, fieldnames=["t", "N", "sup_error", "ratio"])
            w.writeheader()
            for r in self.rows():
                w.writerow({k: ("" if v is None else v) for k, v in r.items()})


def sup_error(profile: ProfileSpec, N: int, t: float, delta_ratio: float = 0.25,
              window: int | None = None) -> float:
    sites, disc, _, _ = solve_discrete(profile, N, t, [t], window=window, delta_ratio=delta_ratio)
    ex = heat_exact(profile, t, sites / N)
    return float(np.max(np.abs(disc[0] - ex)))


def convergence_check(profile: ProfileSpec, t: float, Ns, delta_ratio: float = 0.25) -> ConvergenceTable:
    """sup_x |rho^N_t(x) - rho(t, x/N)| for each N and successive ratios."""
    Ns = [int(n) for n in Ns]
    errs = [sup_error(profile, n, t, delta_ratio) for n in Ns]
    ratios = [(errs[i - 1] / errs[i]) if errs[i] > 0 else (math.inf if errs[i - 1] > 0 else math.nan)
              for i in range(1, len(errs))]
    return ConvergenceTable(float(t), Ns, errs, ratios)
