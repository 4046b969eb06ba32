"""Exact reference values for small or equilibrium systems.

* the full generator of the exclusion process on a small closed lattice and
  its matrix exponential;
* a batched driver that runs many replicas of such a lattice through the same
  compiled kernels the main simulator uses;
* the equilibrium current variance on the infinite lattice at finite N.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.linalg import expm
from scipy.special import ive

from . import _kernels as K
from .lattice import replica_rng


def enumerate_states(S: int, k: int) -> list[tuple[int, ...]]:
    """All occupation vectors on S sites with k particles, in lexicographic order."""
    out = []
    for occ in itertools.combinations(range(S), k):
        v = [0] * S
        for i in occ:
            v[i] = 1
        out.append(tuple(v))
    return sorted(out)


def generator_matrix(S: int, k: int, rate: float = 1.0):
    """Q[i, j] = jump rate from state i to state j (rows sum to zero)."""
    states = enumerate_states(S, k)
    index = {s: i for i, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    for i, s in enumerate(states):
        for b in range(S - 1):
            if s[b] != s[b + 1]:
                t = list(s)
                t[b], t[b + 1] = t[b + 1], t[b]
                Q[i, index[tuple(t)]] += rate
        Q[i, i] = -Q[i].sum()
    return states, Q


def exact_distribution(eta0, t: float, N: int = 1):
    """Law at macroscopic time t of the closed-lattice process started at eta0."""
    eta0 = tuple(int(v) for v in eta0)
    states, Q = generator_matrix(len(eta0), sum(eta0), float(N) ** 2)
    p0 = np.zeros(len(states))
    p0[states.index(eta0)] = 1.0
    return states, p0 @ expm(Q * t)


def site_marginals(states, probs) -> np.ndarray:
    return np.asarray(states, float).T @ np.asarray(probs)


def simulate_small(eta0, N: int, t: float, replicas: int, seed: int,
                   scheme: str = "rejection-free", batch: int = 100_000, tagged: int | None = None):
    """Final configurations (replicas x S, uint8) and tagged sites of
    independent runs from ``eta0`` to time t. Batch b draws from the stream
    keyed (seed, b)."""
    eta0 = np.ascontiguousarray(eta0, dtype=np.uint8)
    S = eta0.size
    rate = float(N) ** 2
    tag0 = -1 if tagged is None else int(tagged)
    configs = np.empty((replicas, S), np.uint8)
    tags = np.empty(replicas, np.int64)
    for b, start in enumerate(range(0, replicas, batch)):
        R = min(batch, replicas - start)
        rng = replica_rng(seed, b)
        out = configs[start:start + R]
        tg = tags[start:start + R]
        if scheme == "rejection-free":
            mean_events = rate * (S - 1) * t
            n = int(R * (2 * mean_events + 4)) + 64
            ex = rng.standard_exponential(n)
            un = rng.random(n)
            while K.small_batch_rf(eta0, tag0, rate, float(t), ex, un, out, tg) < 0:
                ex = np.concatenate([ex, rng.standard_exponential(n)])
                un = np.concatenate([un, rng.random(n)])
        elif scheme == "uniformized":
            nprops = rng.poisson(rate * (S - 1) * t, size=R).astype(np.int64)
            n = int(nprops.sum()) // 2 + 64
            raw = rng.bit_generator.random_raw(n)
            while K.small_batch_unif(eta0, tag0, nprops, raw, out, tg) < 0:
                raw = np.concatenate([raw, rng.bit_generator.random_raw(n)])
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    return configs, tags


def empirical_distribution(configs, states) -> np.ndarray:
    """Relative frequency of each state in ``states`` among the rows of ``configs``."""
    S = configs.shape[1]
    weights = 1 << np.arange(S - 1, -1, -1)
    codes = configs.astype(np.int64) @ weights
    state_codes = np.asarray(states, np.int64) @ weights
    order = {int(c): i for i, c in enumerate(state_codes)}
    counts = np.zeros(len(states))
    vals, cnt = np.unique(codes, return_counts=True)
    for v, c in zip(vals, cnt):
        counts[order[int(v)]] += c  # KeyError here would mean particle loss
    return counts / configs.shape[0]


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def expected_abs_walk(N: int, t: float) -> float:
    """E|S_t| for the continuous-time walk jumping +-1 at rate N^2 each way.

    P(S_t = k) = exp(-2 tau) I_k(2 tau) with tau = N^2 t.
    """
    tau = float(N) ** 2 * t
    if tau == 0:
        return 0.0
    kmax = int(2 * tau + 40 * math.sqrt(2 * tau + 1) + 50)
    k = np.arange(1, kmax + 1)
    return float(2.0 * np.sum(k * ive(k, 2.0 * tau)))


def equilibrium_current_variance(rho: float, N: int, t: float) -> float:
    """Var(J_{-1,0}(t)) / N at density rho on the infinite lattice:
    rho (1 - rho) E|S_t| / N. Tends to 2 chi sqrt(t / pi)."""
    return rho * (1.0 - rho) * expected_abs_walk(N, t) / N
