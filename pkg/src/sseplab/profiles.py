"""Initial macroscopic density profiles rho_0 : R -> [0, 1]."""
from __future__ import annotations

import json
import math

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import hermite_e
from scipy.interpolate import PchipInterpolator
from scipy.special import comb, ndtr

from .errors import InvalidProfileError
from .testfunctions import PiecewiseLinear

KINDS = ("constant", "linear-ramp", "smoothstep", "tanh-front", "erf-front", "tabulated")
_PARAMS = {
    "constant": {"value": None},
    "linear-ramp": {"lo": None, "hi": None, "start": -1.0, "end": 1.0},
    "smoothstep": {"lo": None, "hi": None, "center": 0.0, "width": 8.0, "order": 4},
    "tanh-front": {"lo": None, "hi": None, "center": 0.0, "width": 0.5},
    "erf-front": {"lo": None, "hi": None, "center": 0.0, "width": 1.0},
    "tabulated": {"xs": None, "values": None, "interp": "linear"},
}

_SQRT2PI = math.sqrt(2.0 * math.pi)


def smoothstep_polynomial(order: int) -> Polynomial:
    """Generalized smoothstep on [0, 1], C^order at both ends."""
    n = order
    coef = np.zeros(2 * n + 2)
    for k in range(n + 1):
        coef[n + 1 + k] = comb(n + k, k, exact=True) * comb(2 * n + 1, n - k, exact=True) * (-1) ** k
    return Polynomial(coef)


def _tanh_derivative_polys(kmax: int) -> list[Polynomial]:
    # d^k/dy^k tanh(y) = p_k(tanh y), p_{k+1} = p_k' * (1 - T^2)
    polys = [Polynomial([0.0, 1.0])]
    one_minus = Polynomial([1.0, 0.0, -1.0])
    for _ in range(kmax):
        polys.append(polys[-1].deriv() * one_minus)
    return polys


_TANH_POLYS = _tanh_derivative_polys(5)


class ProfileSpec:
    """A parametric or tabulated initial profile.

    Use the classmethod constructors rather than the raw initializer::

        ProfileSpec.tanh_front(0.3, 0.7, width=0.5)
        ProfileSpec.smoothstep(0.2, 0.8, width=8.0, order=4)
    """

    def __init__(self, kind: str, **params):
        if kind not in KINDS:
            raise InvalidProfileError(f"unknown profile kind {kind!r}; expected one of {KINDS}")
        unknown = set(params) - set(_PARAMS[kind])
        if unknown:
            raise InvalidProfileError(f"{kind} profile has no parameter(s) {sorted(unknown)}")
        missing = [k for k, v in _PARAMS[kind].items() if v is None and k not in params]
        if missing:
            raise InvalidProfileError(f"{kind} profile needs parameter(s) {missing}")
        self.kind = kind
        self.params = {**{k: v for k, v in _PARAMS[kind].items() if v is not None}, **params}
        self._setup()

    # -- constructors -------------------------------------------------
    @classmethod
    def constant(cls, value: float) -> "ProfileSpec":
        return cls("constant", value=float(value))

    @classmethod
    def linear_ramp(cls, lo: float, hi: float, start: float = -1.0, end: float = 1.0) -> "ProfileSpec":
        return cls("linear-ramp", lo=float(lo), hi=float(hi), start=float(start), end=float(end))

    @classmethod
    def smoothstep(cls, lo: float, hi: float, center: float = 0.0, width: float = 8.0,
                   order: int = 4) -> "ProfileSpec":
        return cls("smoothstep", lo=float(lo), hi=float(hi), center=float(center),
                   width=float(width), order=int(order))

    @classmethod
    def tanh_front(cls, lo: float, hi: float, center: float = 0.0, width: float = 0.5) -> "ProfileSpec":
        return cls("tanh-front", lo=float(lo), hi=float(hi), center=float(center), width=float(width))

    @classmethod
    def erf_front(cls, lo: float, hi: float, center: float = 0.0, width: float = 1.0) -> "ProfileSpec":
        return cls("erf-front", lo=float(lo), hi=float(hi), center=float(center), width=float(width))

    @classmethod
    def tabulated(cls, xs, values, interp: str = "linear") -> "ProfileSpec":
        return cls("tabulated", xs=[float(x) for x in xs], values=[float(v) for v in values],
                   interp=str(interp))

    @classmethod
    def from_dict(cls, d: dict) -> "ProfileSpec":
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, **d)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    def __eq__(self, other):
        return isinstance(other, ProfileSpec) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"ProfileSpec({self.kind!r}, {inner})"

    # -- internals ----------------------------------------------------
    def _setup(self):
        p = self.params
        k = self.kind
        if k in ("smoothstep", "tanh-front", "erf-front", "linear-ramp"):
            for name in ("lo", "hi"):
                if name not in p:
                    raise InvalidProfileError(f"{k} profile needs parameter {name!r}")
        if k == "constant":
            self._pl = PiecewiseLinear([], [], [], tail_left=p["value"], tail_right=p["value"])
        elif k == "linear-ramp":
            a, b = p["start"], p["end"]
            if not b > a:
                raise InvalidProfileError("linear-ramp needs start < end")
            self._pl = PiecewiseLinear([a, b], [p["lo"], p["hi"]], [p["lo"], p["hi"]])
        elif k == "smoothstep":
            if p["width"] <= 0 or p.get("order", 4) < 1:
                raise InvalidProfileError("smoothstep needs width > 0 and order >= 1")
            self._poly = smoothstep_polynomial(p.get("order", 4))
        elif k in ("tanh-front", "erf-front"):
            if p["width"] <= 0:
                raise InvalidProfileError(f"{k} needs width > 0")
        elif k == "tabulated":
            xs = np.asarray(p["xs"], float)
            vs = np.clip(np.asarray(p["values"], float), 0.0, 1.0)
            if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0) or vs.shape != xs.shape:
                raise InvalidProfileError("tabulated profile needs >= 2 strictly increasing xs and matching values")
            interp = p.get("interp", "linear")
            if interp == "linear":
                self._pl = PiecewiseLinear(xs, vs, vs)
            elif interp == "pchip":
                self._pchip = PchipInterpolator(xs, vs, extrapolate=False)
            else:
                raise InvalidProfileError(f"unknown interpolation rule {interp!r}")
            self._xs, self._vs = xs, vs

    # -- evaluation ---------------------------------------------------
    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        k, p = self.kind, self.params
        if k in ("constant", "linear-ramp") or (k == "tabulated" and p.get("interp", "linear") == "linear"):
            return self._pl(u)
        if k == "smoothstep":
            x = np.clip((u - p["center"]) / p["width"] + 0.5, 0.0, 1.0)
            return p["lo"] + (p["hi"] - p["lo"]) * self._poly(x)
        if k == "tanh-front":
            mid, amp = 0.5 * (p["hi"] + p["lo"]), 0.5 * (p["hi"] - p["lo"])
            return mid + amp * np.tanh((u - p["center"]) / p["width"])
        if k == "erf-front":
            return p["lo"] + (p["hi"] - p["lo"]) * ndtr((u - p["center"]) / p["width"])
        # tabulated pchip: clamp outside the table and into [0, 1]
        v = self._pchip(np.clip(u, self._xs[0], self._xs[-1]))
        return np.clip(v, 0.0, 1.0)

    def derivative(self, u, order: int = 1):
        """k-th derivative of rho_0 (k >= 1); kinks take the right-hand value."""
        u = np.asarray(u, dtype=float)
        k, p = self.kind, self.params
        if k == "constant":
            return np.zeros_like(u)
        if k == "linear-ramp" or (k == "tabulated" and p.get("interp", "linear") == "linear"):
            if order > 1:
                return np.zeros_like(u)
            return self._pl.slope(u)
        if k == "smoothstep":
            w = p["width"]
            x = (u - p["center"]) / w + 0.5
            inside = (x >= 0.0) & (x <= 1.0)
            d = (p["hi"] - p["lo"]) * self._poly.deriv(order)(np.clip(x, 0.0, 1.0)) / w ** order
            return np.where(inside, d, 0.0)
        if k == "tanh-front":
            w = p["width"]
            amp = 0.5 * (p["hi"] - p["lo"])
            T = np.tanh((u - p["center"]) / w)
            return amp * _TANH_POLYS[order](T) / w ** order
        if k == "erf-front":
            w = p["width"]
            y = (u - p["center"]) / w
            c = np.zeros(order)
            c[-1] = 1.0
            he = hermite_e.hermeval(y, c)
            return (p["hi"] - p["lo"]) * (-1) ** (order - 1) * he * np.exp(-0.5 * y * y) / _SQRT2PI / w ** order
        inside = (u >= self._xs[0]) & (u <= self._xs[-1])
        return np.where(inside, self._pchip.derivative(order)(np.clip(u, self._xs[0], self._xs[-1])), 0.0)

    def polynomial_pieces(self):
        """Return ``[(a, b, origin, poly), ...]`` with rho_0(v) = poly(v - origin)
        on [a, b), or None when the profile is not piecewise polynomial."""
        k, p = self.kind, self.params
        inf = math.inf
        if k == "constant":
            return [(-inf, inf, 0.0, Polynomial([p["value"]]))]
        if k == "smoothstep":
            w = p["width"]
            a = p["center"] - 0.5 * w
            local = Polynomial(self._poly.coef / w ** np.arange(self._poly.coef.size))
            mid = p["lo"] + (p["hi"] - p["lo"]) * local
            return [(-inf, a, 0.0, Polynomial([p["lo"]])), (a, a + w, a, mid),
                    (a + w, inf, 0.0, Polynomial([p["hi"]]))]
        if self.piecewise_linear is not None:
            pl = self._pl
            out = [(-inf, float(pl.knots[0]), 0.0, Polynomial([pl.tail_left]))]
            for i in range(pl.knots.size - 1):
                out.append((float(pl.knots[i]), float(pl.knots[i + 1]), float(pl.knots[i]),
                            Polynomial([pl.right[i], pl.slopes[i]])))
            out.append((float(pl.knots[-1]), inf, 0.0, Polynomial([pl.tail_right])))
            return out
        if k == "tabulated":
            pp = self._pchip
            xs = self._xs
            out = [(-inf, float(xs[0]), 0.0, Polynomial([self._vs[0]]))]
            for i in range(xs.size - 1):
                out.append((float(xs[i]), float(xs[i + 1]), float(xs[i]), Polynomial(pp.c[::-1, i])))
            out.append((float(xs[-1]), inf, 0.0, Polynomial([self._vs[-1]])))
            return out
        return None

    # -- metadata -----------------------------------------------------
    @property
    def piecewise_linear(self) -> PiecewiseLinear | None:
        """Piecewise-linear representation when the profile has one."""
        return getattr(self, "_pl", None)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        k, p = self.kind, self.params
        if k == "linear-ramp":
            return (p["start"], p["end"])
        if k == "smoothstep":
            h = 0.5 * p["width"]
            return (p["center"] - h, p["center"] + h)
        if k == "tabulated":
            return tuple(float(x) for x in self._xs)
        return ()

    @property
    def transition(self) -> tuple[float, float]:
        """Interval outside which rho_0 is constant to double precision."""
        k, p = self.kind, self.params
        if k == "constant":
            return (0.0, 0.0)
        if k == "tanh-front":
            return (p["center"] - 19.0 * p["width"], p["center"] + 19.0 * p["width"])
        if k == "erf-front":
            return (p["center"] - 9.0 * p["width"], p["center"] + 9.0 * p["width"])
        bp = self.breakpoints
        return (bp[0], bp[-1])

    @property
    def scale(self) -> float:
        """Length scale on which rho_0 varies."""
        k, p = self.kind, self.params
        if k == "constant":
            return math.inf
        if k in ("tanh-front", "erf-front"):
            return p["width"]
        if k == "smoothstep":
            return p["width"] / (2.0 * (p.get("order", 4) + 1))
        return float(np.min(np.diff(self.breakpoints)))

    @property
    def derivative_bound(self) -> tuple[float, float, float, float]:
        """Bounds on |rho_0^(k)| for k = 1..4; inf where a kink makes it unbounded."""
        k = self.kind
        if k == "constant":
            return (0.0, 0.0, 0.0, 0.0)
        if k == "linear-ramp" or (k == "tabulated" and self.params.get("interp", "linear") == "linear"):
            return (float(np.max(np.abs(self._pl.slopes))) if len(self._pl.slopes) else 0.0,
                    math.inf, math.inf, math.inf)
        a, b = self.transition
        u = np.linspace(a, b, 40001)
        bounds = [float(np.max(np.abs(self.derivative(u, j)))) for j in range(1, 5)]
        if k == "smoothstep":
            order = self.params.get("order", 4)
            bounds = [bd if j <= order else math.inf for j, bd in enumerate(bounds, start=1)]
        if k == "tabulated":
            bounds = [bounds[0]] + [math.inf] * 3
        return tuple(bounds)

    def values_in_range(self, u) -> bool:
        v = self(u)
        return bool(np.all((v >= 0.0) & (v <= 1.0)))

    def check_range(self, u) -> None:
        v = self(np.asarray(u, float))
        bad = (v < 0.0) | (v > 1.0) | ~np.isfinite(v)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise InvalidProfileError(
                f"profile value {float(np.ravel(v)[i])!r} outside [0, 1] at u={float(np.ravel(u)[i])!r}")
