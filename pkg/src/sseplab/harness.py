"""Replica ensembles, estimators and verdicts."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, CorruptedDynamicsError, JoinError, SampleSizeError
from .hydro import FieldGrid, build_field_grid, mass_between
from .lattice import SimState, assert_invariants, replica_rng, sample_initial, window_half_width
from .profiles import ProfileSpec
from .testfunctions import parse_test_function

OBSERVABLE_GROUPS = ("current", "tagged", "field", "correlations", "martingales", "blocks")


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------

@dataclass
class ExperimentPlan:
    profile: ProfileSpec
    N: int
    times: tuple
    observables: tuple = ("current",)
    replicas: int = 100
    seed: int = 0
    kappa: float = 6.0
    bond_u: float = 0.0
    fields: tuple = ()            # test-function strings, e.g. "ramp:4"
    corr_sites: tuple = ()        # macroscopic positions of single sites
    corr_blocks: tuple = ()       # macroscopic intervals [a, b) pooled for pair correlations
    hydro_blocks: tuple = ()      # macroscopic intervals [a, b] for block densities
    conditioned: bool | None = None
    scheme: str = "auto"
    margin: int = 4
    window: int | None = None
    delta_ratio: float = 0.25

    def __post_init__(self):
        self.times = tuple(float(t) for t in self.times)
        self.observables = tuple(self.observables)
        self.fields = tuple(self.fields)
        self.corr_sites = tuple(float(u) for u in self.corr_sites)
        self.corr_blocks = tuple(tuple(float(v) for v in b) for b in self.corr_blocks)
        self.hydro_blocks = tuple(tuple(float(v) for v in b) for b in self.hydro_blocks)
        self.validate()

    def validate(self):
        problems = []
        if self.replicas < 2:
            problems.append("replicas must be >= 2")
        if self.N < 1:
            problems.append("N must be >= 1")
        if not self.times:
            problems.append("times must be nonempty")
        if any(t < 0 for t in self.times):
            problems.append("times must be nonnegative")
        for a, b in zip(self.times, self.times[1:]):
            if not b > a:
                problems.append(f"times not strictly increasing: {a} then {b}")
        for o in self.observables:
            if o not in OBSERVABLE_GROUPS:
                problems.append(f"unknown observable group {o!r}")
        if self.scheme not in ("auto", "rejection-free", "uniformized"):
            problems.append(f"unknown scheme {self.scheme!r}")
        if "martingales" in self.observables and self.scheme == "uniformized":
            problems.append("martingales need the rejection-free scheme")
        if self.delta_ratio > 0.25:
            problems.append(f"delta*N^2 = {self.delta_ratio} exceeds 1/4")
        if problems:
            raise ConfigurationError("; ".join(problems))
        L = self.half_width
        if self.window is not None and L < window_half_width(self.N, self.T, self.kappa, self.margin):
            raise ConfigurationError(
                f"window [-{L}, {L}] is narrower than the kappa rule "
                f"(needs half-width {window_half_width(self.N, self.T, self.kappa, self.margin)})")
        if self.window is not None and L < self._needed_half_width():
            raise ConfigurationError(
                f"window [-{L}, {L}] does not contain the supports of the requested observables "
                f"(needs half-width {self._needed_half_width()})")

    @property
    def is_conditioned(self) -> bool:
        return ("tagged" in self.observables) if self.conditioned is None else bool(self.conditioned)

    @property
    def resolved_scheme(self) -> str:
        if self.scheme != "auto":
            return self.scheme
        return "rejection-free" if "martingales" in self.observables else "uniformized"

    @property
    def T(self) -> float:
        return max(self.times)

    def _support_extent(self) -> float:
        ext = [abs(self.bond_u), 0.0]
        for s in self.fields:
            G = parse_test_function(s)
            if hasattr(G, "effective_support"):
                a, b = G.effective_support()
            else:
                a, b = G.support
            if math.isinf(a) or math.isinf(b):
                raise ConfigurationError(f"test function {s} has unbounded support")
            ext += [abs(a), abs(b)]
        ext += [abs(u) for u in self.corr_sites]
        ext += [abs(v) for blk in self.corr_blocks + self.hydro_blocks for v in blk]
        return max(ext)

    def _needed_half_width(self) -> int:
        return int(math.ceil(self.N * self._support_extent())) + self.margin

    @property
    def half_width(self) -> int:
        if self.window is not None:
            return int(self.window)
        base = window_half_width(self.N, self.T, self.kappa, self.margin)
        return base + int(math.ceil(self.N * self._support_extent()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["profile"] = self.profile.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        d = dict(d)
        d["profile"] = ProfileSpec.from_dict(d["profile"])
        return cls(**d)

    def hash(self) -> str:
        """Digest of every field except the replica count (so disjoint
        replica ranges of one plan can be merged)."""
        d = self.to_dict()
        d.pop("replicas")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def with_replicas(self, n: int) -> "ExperimentPlan":
        d = self.to_dict()
        d["replicas"] = int(n)
        return ExperimentPlan.from_dict(d)


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------

@dataclass
class SampleSet:
    """values[r, k, j]: replica r, time index k, observable j."""

    plan: ExperimentPlan
    replica_ids: np.ndarray
    times: np.ndarray
    names: list
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate observable names")
        if np.unique(self.replica_ids).size != self.replica_ids.size:
            raise ValueError("duplicate replica ids")

    @property
    def R(self) -> int:
        return int(self.replica_ids.size)

    def column(self, name: str, t: float) -> np.ndarray:
        try:
            j = self.names.index(name)
        except ValueError:
            raise KeyError(f"observable {name!r} not recorded") from None
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12:
            raise KeyError(f"time {t!r} not observed")
        return self.values[:, k, j]

    def records(self):
        """Flat (replicaId, time, observable, value) records."""
        for i, r in enumerate(self.replica_ids):
            for k, t in enumerate(self.times):
                for j, n in enumerate(self.names):
                    yield int(r), float(t), n, float(self.values[i, k, j])

    def merge(self, other: "SampleSet") -> "SampleSet":
        if self.plan.hash() != other.plan.hash():
            raise JoinError("cannot merge samples from different plans")
        if self.names != other.names or not np.array_equal(self.times, other.times):
            raise JoinError("observable layout differs")
        ids = np.concatenate([self.replica_ids, other.replica_ids])
        if np.unique(ids).size != ids.size:
            raise JoinError("replica ids overlap")
        order = np.argsort(ids, kind="stable")
        vals = np.concatenate([self.values, other.values])[order]
        meta = dict(self.meta)
        meta["assertion_checks"] = self.meta.get("assertion_checks", 0) + other.meta.get("assertion_checks", 0)
        return SampleSet(self.plan.with_replicas(ids.size), ids[order], self.times, list(self.names), vals, meta)

    # -- persistence -------------------------------------------------------
    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# plan_hash={self.plan.hash()}\n")
            w = csv.writer(fh)
            w.writerow(["replicaId", "time", *self.names])
            for i, r in enumerate(self.replica_ids):
                for k, t in enumerate(self.times):
                    w.writerow([int(r), repr(float(t)), *[repr(float(v)) for v in self.values[i, k]]])

    def metadata(self) -> dict:
        return {"plan_hash": self.plan.hash(), "plan": self.plan.to_dict(), "replicas": self.R,
                "names": self.names, "times": [float(t) for t in self.times], **self.meta}

    def save(self, stem) -> tuple[str, str]:
        stem = str(stem)
        self.to_csv(stem + ".csv")
        with open(stem + ".json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2)
        return stem + ".csv", stem + ".json"

    @classmethod
    def load(cls, stem) -> "SampleSet":
        stem = str(stem)
        with open(stem + ".json") as fh:
            meta = json.load(fh)
        plan = ExperimentPlan.from_dict(meta["plan"])
        with open(stem + ".csv") as fh:
            first = fh.readline().strip()
            if first != f"# plan_hash={meta['plan_hash']}":
                raise JoinError("sample CSV and metadata carry different plan hashes")
            rows = list(csv.reader(fh))
        header, rows = rows[0], rows[1:]
        names = header[2:]
        times = np.asarray(meta["times"], float)
        arr = np.asarray([[float(v) for v in row] for row in rows]) if rows else np.zeros((0, len(header)))
        nt = times.size
        ids = arr[::nt, 0].astype(np.int64)
        vals = arr[:, 2:].reshape(ids.size, nt, len(names))
        extra = {k: v for k, v in meta.items() if k not in ("plan_hash", "plan", "replicas", "names", "times")}
        return cls(plan, ids, times, names, vals, extra)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

class _Observer:
    """Precomputed weights and centerings shared by all replicas."""

    def __init__(self, plan: ExperimentPlan, grid: FieldGrid | None):
        self.plan = plan
        N = plan.N
        L = plan.half_width
        self.L = L
        self.sites = np.arange(-L, L + 1)
        self.sqrtN = math.sqrt(N)
        obs = plan.observables
        self.names = []
        self.x0 = int(math.floor(plan.bond_u * N))
        self.bond = (self.x0 - 1, self.x0)
        self.grid = grid
        if "current" in obs:
            self.names += ["J", "Z"]
            self.mean_J = grid.flux[:, 0]
        if "tagged" in obs:
            self.names += ["X", "W"]
            self.u_t = grid.lln
        self.G = []
        if "field" in obs:
            self.G = [parse_test_function(s) for s in plan.fields]
            self.Gw = np.array([G(self.sites / N) for G in self.G]) if self.G else np.zeros((0, self.sites.size))
            self.rho0 = plan.profile(self.sites / N)
            for s in plan.fields:
                self.names += [f"Y[{s}]", f"dY[{s}]"]
        if "martingales" in obs:
            self.names += ["M", "QV"]
        self.corr_idx = []
        self.block_masks = []
        if "correlations" in obs:
            for u in plan.corr_sites:
                x = int(math.floor(u * N))
                self.corr_idx.append(x + L)
                self.names.append(f"eta[{x}]")
            for i, (a, b) in enumerate(plan.corr_blocks):
                m = (self.sites >= a * N) & (self.sites < b * N)
                self.block_masks.append(m)
                self.names += [f"blockS[{i}]", f"blockQ[{i}]"]
        self.hydro_masks = []
        if "blocks" in obs:
            for a, b in plan.hydro_blocks:
                m = (self.sites >= a * N - 1e-9) & (self.sites <= b * N + 1e-9)
                self.hydro_masks.append(m)
                self.names.append(f"mass[{a:g},{b:g}]")

    def observe(self, st: SimState, k: int, y0, out: np.ndarray) -> None:
        plan = self.plan
        obs = plan.observables
        j = 0
        if "current" in obs:
            J = st.currents[self.x0 - 1 + self.L]
            out[j] = J
            out[j + 1] = (J - self.mean_J[k]) / self.sqrtN
            j += 2
        if "tagged" in obs:
            X = st.config.tagged
            out[j] = X
            out[j + 1] = (X - plan.N * self.u_t[k]) / self.sqrtN
            j += 2
        rho = self.grid.discrete[k] if self.grid is not None else None
        if self.G:
            Y = self.Gw @ (st.eta - rho) / self.sqrtN
            for g in range(len(self.G)):
                out[j] = Y[g]
                out[j + 1] = Y[g] - y0[g]
                j += 2
        if "martingales" in obs:
            from .lattice import martingale_value, quadratic_variation
            out[j] = martingale_value(st, self.bond)
            out[j + 1] = quadratic_variation(st, self.bond)
            j += 2
        if "correlations" in obs:
            cen = st.eta - rho
            for idx in self.corr_idx:
                out[j] = cen[idx]
                j += 1
            for m in self.block_masks:
                c = cen[m]
                out[j] = c.sum()
                out[j + 1] = np.dot(c, c)
                j += 2
        for m in self.hydro_masks:
            out[j] = st.eta[m].sum() / plan.N
            j += 1


def _needs_grid(plan: ExperimentPlan) -> bool:
    return bool(set(plan.observables) & {"current", "tagged", "field", "correlations"})


def field_grid_for(plan: ExperimentPlan) -> FieldGrid | None:
    if not _needs_grid(plan):
        return None
    L = plan.half_width
    x0 = int(math.floor(plan.bond_u * plan.N))
    return build_field_grid(plan.profile, plan.N, plan.times, window=L, delta_ratio=plan.delta_ratio,
                            bonds=[x0 - 1], exact=False, lln="tagged" in plan.observables)


def _run_range(plan, observer, ids, check_every):
    nt, nk = len(plan.times), len(observer.names)
    vals = np.empty((len(ids), nt, nk))
    L = observer.L
    scheme = plan.resolved_scheme
    checks = 0
    for i, r in enumerate(ids):
        rng = replica_rng(plan.seed, int(r))
        cfg = sample_initial(plan.profile, plan.N, L, plan.is_conditioned, rng)
        rank0 = cfg.rank() if cfg.tagged is not None else None
        st = SimState(cfg, plan.N, rng, scheme=scheme)
        y0 = None
        if observer.G:
            y0 = observer.Gw @ (st.eta - observer.rho0) / observer.sqrtN
        for k, t in enumerate(plan.times):
            st.advance(t)
            if check_every:
                try:
                    assert_invariants(st, int(r), rank0)
                except CorruptedDynamicsError:
                    raise
                checks += 1
            observer.observe(st, k, y0, vals[i, k])
    return vals, checks


def run_experiment(plan: ExperimentPlan, replica_ids=None, workers: int = 1,
                   check_invariants: bool = True, grid: FieldGrid | None = None) -> SampleSet:
    """Simulate the plan's replicas (or the given subset of replica ids).

    Every snapshot is checked against the conservation law and, with a tagged
    particle, the tagged/current identity and rank preservation; a violation
    raises CorruptedDynamicsError carrying (replica id, time).
    """
    ids = np.arange(plan.replicas) if replica_ids is None else np.sort(np.asarray(replica_ids, np.int64))
    if grid is None:
        grid = field_grid_for(plan)
    observer = _Observer(plan, grid)
    if workers <= 1 or ids.size < 2 * workers:
        vals, checks = _run_range(plan, observer, ids, check_invariants)
    else:
        chunks = np.array_split(ids, workers * 4)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda c: _run_range(plan, observer, c, check_invariants), chunks))
        vals = np.concatenate([p[0] for p in parts])
        checks = sum(p[1] for p in parts)
    meta = {"assertion_checks": checks, "assertion_failures": 0, "window": [-observer.L, observer.L],
            "scheme": plan.resolved_scheme, "bond": list(observer.bond)}
    sub = replica_ids is not None and ids.size >= 2
    return SampleSet(plan.with_replicas(ids.size) if sub else plan, ids, np.asarray(plan.times), observer.names, vals, meta)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def _fsum(a: np.ndarray) -> float:
    return math.fsum(a.tolist())


def _mean_jk(x):
    n = x.size
    tot = _fsum(x)
    m = tot / n
    loo = (tot - x) / (n - 1)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return m, se


def _cov_jk(a, b):
    n = a.size
    Sa, Sb, Sab = _fsum(a), _fsum(b), _fsum(a * b)
    cov = (Sab - Sa * Sb / n) / (n - 1)
    loo = ((Sab - a * b) - (Sa - a) * (Sb - b) / (n - 1)) / (n - 2)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return cov, se


def _shape_stats(S1, S2, S3, S4, n):
    m = S1 / n
    m2 = S2 / n - m * m
    m3 = S3 / n - 3 * m * S2 / n + 2 * m ** 3
    m4 = S4 / n - 4 * m * S3 / n + 6 * m * m * S2 / n - 3 * m ** 4
    with np.errstate(invalid="ignore", divide="ignore"):
        return m3 / m2 ** 1.5, m4 / m2 ** 2 - 3.0


def _shape_jk(x):
    n = x.size
    x = x - x.mean()
    p = [x ** k for k in (1, 2, 3, 4)]
    S = [_fsum(v) for v in p]
    skew, kurt = _shape_stats(*S, n)
    ls, lk = _shape_stats(*[S[k] - p[k] for k in range(4)], n - 1)

    def se(v):
        if not np.all(np.isfinite(v)):
            return 0.0
        return math.sqrt((n - 1) / n * float(np.sum((v - v.mean()) ** 2)))

    return (float(skew), se(ls)), (float(kurt), se(lk))


@dataclass
class ReportEntry:
    kind: str                # mean | cov | skew | exkurt | mse
    a: str
    b: str
    s: float
    t: float
    empirical: float
    standard_error: float
    theoretical: float | None = None
    z_score: float | None = None
    allowance: float | None = None
    verdict: str | None = None

    @property
    def key(self):
        return (self.kind, self.a, self.b, round(self.s, 12), round(self.t, 12))


@dataclass
class CovarianceReport:
    entries: list
    plan_hash: str = ""
    k_sigma: float | None = None
    bias_c: float | None = None
    N: int | None = None
    meta: dict = field(default_factory=dict)

    def entry(self, kind, a, b=None, s=None, t=None) -> ReportEntry:
        b = a if b is None else b
        for e in self.entries:
            if e.kind == kind and e.a == a and e.b == b and (s is None or abs(e.s - s) < 1e-12) \
                    and (t is None or abs(e.t - t) < 1e-12):
                return e
        raise KeyError((kind, a, b, s, t))

    @property
    def all_pass(self) -> bool:
        return all(e.verdict == "pass" for e in self.entries if e.verdict is not None)

    def to_dict(self) -> dict:
        return {"plan_hash": self.plan_hash, "k_sigma": self.k_sigma, "bias_c": self.bias_c, "N": self.N,
                "entries": [asdict(e) for e in self.entries], **self.meta}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_csv(self, path) -> None:
        cols = list(ReportEntry.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            fh.write(f"# plan_hash={self.plan_hash}\n")
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for e in self.entries:
                w.writerow({k: ("" if v is None else v) for k, v in asdict(e).items()})

    @classmethod
    def from_dict(cls, d: dict) -> "CovarianceReport":
        entries = [ReportEntry(**e) for e in d["entries"]]
        meta = {k: v for k, v in d.items() if k not in ("plan_hash", "k_sigma", "bias_c", "N", "entries")}
        return cls(entries, d.get("plan_hash", ""), d.get("k_sigma"), d.get("bias_c"), d.get("N"), meta)


def estimate_moments(samples: SampleSet, pairs=(), singles=(), min_replicas: int = 30) -> CovarianceReport:
    """Jackknife estimates.

    ``pairs`` holds (a, s, b, t) tuples for Cov(a_s, b_t) (a variance when
    a == b and s == t); ``singles`` holds (a, t) for which mean, skewness and
    excess kurtosis are produced.
    """
    if samples.R < min_replicas:
        raise SampleSizeError(f"{samples.R} replicas; at least {min_replicas} are needed for jackknife errors")
    out = []
    for a, s, b, t in pairs:
        if s > t:
            a, s, b, t = b, t, a, s
        x, y = samples.column(a, s), samples.column(b, t)
        c, se = _cov_jk(x, y)
        out.append(ReportEntry("cov", a, b, float(s), float(t), c, se))
    for a, t in singles:
        x = samples.column(a, t)
        m, se = _mean_jk(x)
        out.append(ReportEntry("mean", a, a, float(t), float(t), m, se))
        (sk, sks), (ku, kus) = _shape_jk(x)
        out.append(ReportEntry("skew", a, a, float(t), float(t), sk, sks))
        out.append(ReportEntry("exkurt", a, a, float(t), float(t), ku, kus))
    return CovarianceReport(out, samples.plan.hash(), N=samples.plan.N)


def compare(report: CovarianceReport, theory: dict, k_sigma: float | dict = 3.0, bias_c: float = 1.0,
            N: int | None = None, bias_kinds=("cov",)) -> CovarianceReport:
    """Fill theoretical values, z-scores and verdicts.

    ``theory`` maps (kind, a, b, s, t) to a value. An entry passes iff
    |empirical - theoretical| <= k_sigma * SE + allowance, where the allowance
    is bias_c / sqrt(N) for the kinds in ``bias_kinds`` and 0 otherwise.
    ``k_sigma`` may map observable names to their own multiplier, with "*" as
    the fallback. Every report entry must have a theory value (JoinError
    otherwise).
    """
    N = report.N if N is None else N
    th = {(k[0], k[1], k[2], round(float(k[3]), 12), round(float(k[4]), 12)): float(v) for k, v in theory.items()}
    out = []
    for e in report.entries:
        if e.key not in th:
            raise JoinError(f"no theoretical value for {e.key}")
        v = th[e.key]
        k = k_sigma.get(e.a, k_sigma.get("*", 3.0)) if isinstance(k_sigma, dict) else k_sigma
        allowance = bias_c / math.sqrt(N) if (e.kind in bias_kinds and N) else 0.0
        diff = abs(e.empirical - v)
        z = (e.empirical - v) / e.standard_error if e.standard_error > 0 else (0.0 if diff == 0 else math.inf)
        ok = diff <= k * e.standard_error + allowance
        out.append(ReportEntry(e.kind, e.a, e.b, e.s, e.t, e.empirical, e.standard_error, v, z,
                               allowance, "pass" if ok else "fail"))
    extra = set(th) - {e.key for e in report.entries}
    if extra:
        raise JoinError(f"theory values without matching estimates: {sorted(extra)}")
    return CovarianceReport(out, report.plan_hash, k_sigma, bias_c, N, dict(report.meta))


# ---------------------------------------------------------------------------
# specialised tests
# ---------------------------------------------------------------------------

@dataclass
class DecayTable:
    t: float
    ns: list
    mse: list
    se: list
    strictly_decreasing: bool
    ratio_ok: bool
    ratios: list
    C0_fit: float
    below_envelope: bool

    @property
    def passed(self) -> bool:
        return self.strictly_decreasing and self.ratio_ok


def ramp_decay_test(plan: ExperimentPlan, ns, t: float | None = None, samples: SampleSet | None = None,
                     ratio_bound: float = 0.75, workers: int = 1) -> DecayTable:
    """MSE of Z_t - (Y_t(G_n) - Y_0(G_n)) for the ramps G_n, n in ``ns``.

    Checks strict decrease and MSE(2n) <= ratio_bound * MSE(n) for every
    consecutive pair of the grid where n doubles.
    """
    from .theory import ramp_decay_bound
    ns = [int(n) for n in ns]
    t = plan.T if t is None else float(t)
    fields = tuple(f"ramp:{n}" for n in ns)
    if samples is None:
        d = plan.to_dict()
        d["fields"] = tuple(dict.fromkeys(tuple(d["fields"]) + fields))
        d["observables"] = tuple(dict.fromkeys(tuple(d["observables"]) + ("current", "field")))
        plan = ExperimentPlan.from_dict(d)
        samples = run_experiment(plan, workers=workers)
    Z = samples.column("Z", t)
    mse, se = [], []
    for f in fields:
        D = Z - samples.column(f"dY[{f}]", t)
        m, s = _mean_jk(D * D)
        mse.append(m)
        se.append(s)
    dec = all(b < a for a, b in zip(mse, mse[1:]))
    ratios, ok = [], True
    for i in range(1, len(ns)):
        r = mse[i] / mse[i - 1]
        ratios.append(r)
        if ns[i] == 2 * ns[i - 1] and not r <= ratio_bound:
            ok = False
    C0 = max(0.0, max((m - t / n) * n * n / t ** 2.5 for m, n in zip(mse, ns))) if t > 0 else 0.0
    below = all(m <= ramp_decay_bound(t, n, C0) + 1e-15 for m, n in zip(mse, ns))
    return DecayTable(t, ns, mse, se, dec, ok, ratios, C0, below)


@dataclass
class CorrelationRow:
    N: int
    t: float
    label: str
    estimate: float
    se: float
    scaled: float
    scaled_se: float
    inconclusive: bool


def pair_correlations(samples: SampleSet, t: float, s: float | None = None) -> list[CorrelationRow]:
    """phi(t; x, y) for the recorded single sites (x != y) and pooled block
    pairs; with ``s`` given, the two-time phi(s, t; x, y) for single sites."""
    N = samples.plan.N
    rows = []
    sites = [n for n in samples.names if n.startswith("eta[")]
    scale = N / math.sqrt(t) if t > 0 else 0.0
    for i, a in enumerate(sites):
        for b in sites[i + 1:] if s is None else sites:
            if s is None:
                v = samples.column(a, t) * samples.column(b, t)
            else:
                v = samples.column(a, s) * samples.column(b, t)
            m, se = _mean_jk(v)
            lab = f"{a}x{b}" if s is None else f"{a}@{s:g}x{b}@{t:g}"
            rows.append(CorrelationRow(N, t, lab, m, se, abs(m) * scale, se * scale, se > abs(m)))
    if s is not None:
        return rows
    nb = len(samples.plan.corr_blocks)
    sizes = []
    for a, b in samples.plan.corr_blocks:
        x = np.arange(-samples.plan.half_width, samples.plan.half_width + 1)
        sizes.append(int(np.sum((x >= a * N) & (x < b * N))))
    for i in range(nb):
        for j in range(i, nb):
            Si, Sj = samples.column(f"blockS[{i}]", t), samples.column(f"blockS[{j}]", t)
            if i == j:
                npairs = sizes[i] * (sizes[i] - 1)
                v = (Si * Si - samples.column(f"blockQ[{i}]", t)) / npairs
            else:
                v = Si * Sj / (sizes[i] * sizes[j])
            m, se = _mean_jk(v)
            rows.append(CorrelationRow(N, t, f"block[{i}]x[{j}]", m, se, abs(m) * scale, se * scale,
                                       se > abs(m)))
    return rows


@dataclass
class ScalingTable:
    t: float
    Ns: list
    sup_scaled: list
    sup_se: list
    sup_label: list
    inconclusive: list
    monotone_growth: bool
    rows: list

    @property
    def bounded(self) -> bool:
        return not self.monotone_growth


def correlation_bound_test(sample_sets, t: float, pooled: bool = True, z: float = 2.0) -> ScalingTable:
    """sup over the pair set of |phi(t;x,y)| N / sqrt(t) for each sample set
    (one per N). Growth is declared only when every consecutive increase
    exceeds ``z`` combined standard errors."""
    Ns, sups, ses, labs, inc, allrows = [], [], [], [], [], []
    for smp in sorted(sample_sets, key=lambda s: s.plan.N):
        rows = pair_correlations(smp, t)
        allrows += rows
        cand = [r for r in rows if r.label.startswith("block")] if pooled else \
            [r for r in rows if not r.label.startswith("block")]
        if not cand:
            raise ConfigurationError("no pairs recorded for the requested pair set")
        best = max(cand, key=lambda r: r.scaled)
        Ns.append(smp.plan.N)
        sups.append(best.scaled)
        ses.append(best.scaled_se)
        labs.append(best.label)
        inc.append(best.inconclusive)
    growth = len(sups) > 1 and all(b - a > z * math.hypot(sa, sb)
                                   for a, b, sa, sb in zip(sups, sups[1:], ses, ses[1:]))
    return ScalingTable(t, Ns, sups, ses, labs, inc, growth, allrows)


@dataclass
class HydroRow:
    t: float
    a: float
    b: float
    empirical: float
    exact: float
    mean_dev: float
    rms_dev: float
    clt_scale: float


def hydro_check(samples: SampleSet, grid: FieldGrid | None = None) -> list[HydroRow]:
    """Block densities N^-1 sum_{a <= x/N <= b} eta_t(x) against int_a^b rho(t,u) du."""
    plan = samples.plan
    out = []
    for t in plan.times:
        for a, b in plan.hydro_blocks:
            v = samples.column(f"mass[{a:g},{b:g}]", t)
            ex = mass_between(plan.profile, t, a, b)
            d = v - ex
            chi_bar = max(1e-300, float(np.mean(v)) / (b - a) * (1 - float(np.mean(v)) / (b - a)))
            out.append(HydroRow(t, a, b, float(v.mean()), ex, float(d.mean()), float(np.sqrt(np.mean(d * d))),
                                math.sqrt(chi_bar * (b - a) / plan.N)))
    return out
