"""Test functions paired with the density field.

Every class here knows its own image under the heat semigroup T_tau
(kernel variance 2*tau) in closed form, together with the spatial
derivative of that image.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _npdf(z):
    return _INV_SQRT2PI * np.exp(-0.5 * z * z)


def heat_kernel(tau, x, y):
    """p_tau(x, y) = (4 pi tau)^(-1/2) exp(-(y - x)^2 / (4 tau))."""
    tau = np.asarray(tau, float)
    d = np.asarray(y, float) - np.asarray(x, float)
    return np.exp(-d * d / (4.0 * tau)) / np.sqrt(4.0 * math.pi * tau)


class PiecewiseLinear:
    """Piecewise-linear function with jumps allowed at the knots.

    ``left[i]`` is the limit from the left at ``knots[i]``, ``right[i]`` the
    value at the knot and just after it. Between two knots the function
    interpolates ``right[i] -> left[i+1]``; it is constant outside the knots
    (equal to ``left[0]`` and ``right[-1]``).
    """

    def __init__(self, knots, left, right, tail_left=None, tail_right=None, name=None):
        self.knots = np.asarray(knots, float)
        self.left = np.asarray(left, float)
        self.right = np.asarray(right, float)
        if not (self.knots.shape == self.left.shape == self.right.shape) or self.knots.ndim != 1:
            raise ValueError("knots, left and right must be 1-d of equal length")
        if np.any(np.diff(self.knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if self.knots.size:
            self.tail_left = float(self.left[0])
            self.tail_right = float(self.right[-1])
        else:
            self.tail_left = float(tail_left or 0.0)
            self.tail_right = float(tail_right if tail_right is not None else self.tail_left)
            if self.tail_left != self.tail_right:
                raise ValueError("a knot-free function must be constant")
        h = np.diff(self.knots)
        self.slopes = (self.left[1:] - self.right[:-1]) / h if h.size else np.zeros(0)
        self.name = name or "pl"

    def __repr__(self):
        return f"PiecewiseLinear({self.name})"

    @property
    def jumps(self):
        return self.right - self.left

    @property
    def support(self) -> tuple[float, float]:
        if not self.knots.size:
            return (-math.inf, math.inf) if self.tail_left else (0.0, 0.0)
        a = -math.inf if self.tail_left else float(self.knots[0])
        b = math.inf if self.tail_right else float(self.knots[-1])
        return (a, b)

    @property
    def features(self) -> tuple[float, ...]:
        return tuple(float(k) for k in self.knots)

    def __call__(self, u):
        u = np.asarray(u, float)
        if not self.knots.size:
            return np.full_like(u, self.tail_left)
        k = self.knots
        i = np.searchsorted(k, u, side="right") - 1  # knot index at or left of u
        out = np.where(i < 0, self.tail_left, 0.0)
        last = i >= k.size - 1
        out = np.where(last, self.tail_right, out)
        mid = (i >= 0) & ~last
        if np.any(mid):
            j = np.clip(i, 0, k.size - 2)
            frac = (u - k[j]) / (k[j + 1] - k[j])
            val = self.right[j] + frac * (self.left[j + 1] - self.right[j])
            out = np.where(mid, val, out)
        return out

    def slope(self, u):
        u = np.asarray(u, float)
        if self.knots.size < 2:
            return np.zeros_like(u)
        i = np.searchsorted(self.knots, u, side="right") - 1
        mid = (i >= 0) & (i < self.knots.size - 1)
        return np.where(mid, self.slopes[np.clip(i, 0, self.knots.size - 2)], 0.0)

    def semigroup(self, tau, x):
        """(T_tau G)(x) in closed form."""
        x = np.asarray(x, float)
        tau = np.asarray(tau, float)
        if np.all(tau == 0):
            return self(x) + 0.0 * tau
        x, s = np.broadcast_arrays(x, np.sqrt(2.0 * tau))
        if not self.knots.size:
            return np.full(x.shape, self.tail_left)
        k = self.knots.reshape((-1,) + (1,) * x.ndim)
        z = (k - x) / s  # shape (K, ...)
        k = self.knots
        Phi = ndtr(z)
        out = self.tail_left * Phi[0] + self.tail_right * ndtr(-z[-1])
        for i in range(k.size - 1):
            va, beta = self.right[i], self.slopes[i]
            out = out + (va + beta * (x - k[i])) * (Phi[i + 1] - Phi[i]) \
                + beta * s * (_npdf(z[i]) - _npdf(z[i + 1]))
        return out

    def semigroup_grad(self, tau, x):
        """d/dx (T_tau G)(x) for tau > 0."""
        x = np.asarray(x, float)
        tau = np.asarray(tau, float)
        x, s = np.broadcast_arrays(x, np.sqrt(2.0 * tau))
        out = np.zeros(x.shape)
        k = self.knots
        if not k.size:
            return out
        z = (k.reshape((-1,) + (1,) * x.ndim) - x) / s
        for j in range(k.size):
            if self.jumps[j] != 0.0:
                out = out + self.jumps[j] * _npdf(z[j]) / s
        Phi = ndtr(z)
        for i in range(k.size - 1):
            if self.slopes[i] != 0.0:
                out = out + self.slopes[i] * (Phi[i + 1] - Phi[i])
        return out


class GaussianBump:
    """A * exp(-(u - c)^2 / (2 w^2)); smooth and rapidly decaying."""

    def __init__(self, amplitude=1.0, center=0.0, width=1.0, name=None):
        self.amplitude = float(amplitude)
        self.center = float(center)
        self.width = float(width)
        self.name = name or f"bump({self.center:g},{self.width:g})"

    def __repr__(self):
        return f"GaussianBump({self.amplitude:g}, {self.center:g}, {self.width:g})"

    @property
    def support(self):
        return (-math.inf, math.inf)

    @property
    def features(self):
        return (self.center,)

    def effective_support(self, eps=1e-16):
        r = self.width * math.sqrt(2.0 * math.log(max(abs(self.amplitude), 1e-300) / eps)) if self.amplitude else 0.0
        return (self.center - r, self.center + r)

    def tail_mass(self, a, b):
        """Integral of |G| outside [a, b]."""
        w = self.width
        tot = abs(self.amplitude) * w * math.sqrt(2.0 * math.pi)
        return tot * (ndtr((a - self.center) / w) + ndtr((self.center - b) / w))

    def __call__(self, u):
        d = np.asarray(u, float) - self.center
        return self.amplitude * np.exp(-0.5 * d * d / self.width ** 2)

    def semigroup(self, tau, x):
        s2 = self.width ** 2 + 2.0 * np.asarray(tau, float)
        d = np.asarray(x, float) - self.center
        return self.amplitude * self.width / np.sqrt(s2) * np.exp(-0.5 * d * d / s2)

    def semigroup_grad(self, tau, x):
        s2 = self.width ** 2 + 2.0 * np.asarray(tau, float)
        d = np.asarray(x, float) - self.center
        return -d / s2 * self.semigroup(tau, x)


def ramp(n: float) -> PiecewiseLinear:
    """G_n(u) = (1 - u/n)^+ 1{u >= 0}."""
    if n <= 0:
        raise ValueError("ramp needs n > 0")
    return PiecewiseLinear([0.0, float(n)], [0.0, 0.0], [1.0, 0.0], name=f"G{n:g}")


def indicator(a: float, b: float = math.inf) -> PiecewiseLinear:
    """Indicator of [a, b); b = inf gives the half-line H_a."""
    if math.isinf(b):
        return PiecewiseLinear([a], [0.0], [1.0], name=f"H{a:g}")
    if not b > a:
        raise ValueError("indicator needs a < b")
    return PiecewiseLinear([a, b], [0.0, 1.0], [1.0, 0.0], name=f"1[{a:g},{b:g})")


def parse_test_function(spec: str):
    """Build a test function from a short string: ``ramp:4``, ``ind:-1:1``,
    ``heaviside:0`` or ``bump:center:width``."""
    parts = spec.split(":")
    kind, args = parts[0], [float(p) for p in parts[1:]]
    if kind == "ramp" and len(args) == 1:
        return ramp(args[0])
    if kind == "ind" and len(args) == 2:
        return indicator(args[0], args[1])
    if kind == "heaviside" and len(args) == 1:
        return indicator(args[0])
    if kind == "bump" and len(args) in (2, 3):
        amp = args[2] if len(args) == 3 else 1.0
        return GaussianBump(amp, args[0], args[1], name=spec)
    raise ValueError(f"cannot parse test function {spec!r}")
