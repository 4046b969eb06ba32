"""TOML run configuration with a versioned schema.

Layout (schema 1)::

    schema = 1
    [profile]      kind plus kind-specific parameters
    [experiment]   N, times, observables, replicas, seed, ... (see ExperimentPlan)
    [pde]          delta_ratio, tol, convergence_Ns, convergence_t
    [theory]       truncation, tol, ou (list of {H, G, s, t})
    [compare]      k_sigma, k_sigma_tagged, bias_c
    [verify]       small-lattice oracle and invariant-suite settings
    [output]       dir

Every problem found is collected into one ConfigError with its key path.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError, ConfigurationError, InvalidProfileError
from .harness import OBSERVABLE_GROUPS, ExperimentPlan
from .profiles import ProfileSpec
from .testfunctions import parse_test_function

SCHEMA_VERSION = 1

_EXPERIMENT_KEYS = {
    "N": int, "times": list, "observables": list, "replicas": int, "seed": int, "kappa": float,
    "bond_u": float, "fields": list, "corr_sites": list, "corr_blocks": list, "hydro_blocks": list,
    "conditioned": bool, "scheme": str, "margin": int, "window": int,
}
_PDE_DEFAULTS = {"delta_ratio": 0.25, "tol": 1e-10, "convergence_Ns": [16, 32, 64, 128],
                 "convergence_t": None, "order_band": [3.2, 4.8]}
_THEORY_DEFAULTS = {"truncation": 8.0, "tol": 1e-8, "ou": []}
_COMPARE_DEFAULTS = {"k_sigma": 3.0, "k_sigma_tagged": 4.0, "bias_c": 1.0}
_VERIFY_DEFAULTS = {"oracle_config": "111000", "oracle_t": 0.1, "oracle_N": 1, "oracle_replicas": 1_000_000,
                    "oracle_tv": 0.01, "invariant_replicas": 20, "schemes": ["rejection-free", "uniformized"]}
_OUTPUT_DEFAULTS = {"dir": "out"}
_SECTIONS = {"schema", "profile", "experiment", "pde", "theory", "compare", "verify", "output"}


@dataclass
class RunConfig:
    plan: ExperimentPlan
    pde: dict = field(default_factory=lambda: dict(_PDE_DEFAULTS))
    theory: dict = field(default_factory=lambda: dict(_THEORY_DEFAULTS))
    compare: dict = field(default_factory=lambda: dict(_COMPARE_DEFAULTS))
    verify: dict = field(default_factory=lambda: dict(_VERIFY_DEFAULTS))
    output: dict = field(default_factory=lambda: dict(_OUTPUT_DEFAULTS))

    def hash(self) -> str:
        """Identifies the experiment; output files carry it for provenance."""
        return self.plan.hash()

    def to_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION, "plan": self.plan.to_dict(), "pde": self.pde, "theory": self.theory,
                "compare": self.compare, "verify": self.verify, "output": self.output}

    def full_hash(self) -> str:
        d = self.to_dict()
        d["plan"].pop("replicas")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _section(doc, name, defaults, problems):
    raw = doc.get(name, {})
    if not isinstance(raw, dict):
        problems.append((name, "must be a table"))
        return dict(defaults)
    out = dict(defaults)
    for k, v in raw.items():
        if k not in defaults:
            problems.append((f"{name}.{k}", "unknown key"))
        else:
            out[k] = v
    return out


def _check_experiment(exp, problems):
    for k, v in exp.items():
        if k not in _EXPERIMENT_KEYS:
            problems.append((f"experiment.{k}", "unknown key"))
            continue
        want = _EXPERIMENT_KEYS[k]
        ok = (want is float and _is_num(v)) or (want is int and isinstance(v, int) and not isinstance(v, bool)) \
            or (want is not float and want is not int and isinstance(v, want))
        if not ok:
            problems.append((f"experiment.{k}", f"expected {want.__name__}, got {type(v).__name__}"))
    for k in ("N", "times"):
        if k not in exp:
            problems.append((f"experiment.{k}", "missing required field"))
    if isinstance(exp.get("N"), int) and exp["N"] < 1:
        problems.append(("experiment.N", "must be >= 1"))
    if isinstance(exp.get("replicas"), int) and exp["replicas"] < 2:
        problems.append(("experiment.replicas", "must be >= 2"))
    times = exp.get("times")
    if isinstance(times, list):
        if not times:
            problems.append(("experiment.times", "must be nonempty"))
        for i, t in enumerate(times):
            if not _is_num(t):
                problems.append((f"experiment.times[{i}]", "not a number"))
            elif t < 0:
                problems.append((f"experiment.times[{i}]", f"negative time {t}"))
        for i in range(len(times) - 1):
            a, b = times[i], times[i + 1]
            if _is_num(a) and _is_num(b) and not b > a:
                problems.append(("experiment.times",
                                 f"not strictly increasing: times[{i}] = {a} then times[{i + 1}] = {b}"))
    for i, o in enumerate(exp.get("observables", []) or []):
        if o not in OBSERVABLE_GROUPS:
            problems.append((f"experiment.observables[{i}]", f"unknown observable group {o!r}"))
    for i, s in enumerate(exp.get("fields", []) or []):
        try:
            parse_test_function(str(s))
        except ValueError as e:
            problems.append((f"experiment.fields[{i}]", str(e)))
    if exp.get("scheme", "auto") not in ("auto", "rejection-free", "uniformized"):
        problems.append(("experiment.scheme", f"unknown scheme {exp['scheme']!r}"))


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    problems: list[tuple[str, str]] = []
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError([("<document>", f"not valid TOML: {e}")]) from None
    for k in doc:
        if k not in _SECTIONS:
            problems.append((k, "unknown key"))
    schema = doc.get("schema")
    if schema is None:
        problems.append(("schema", "missing required field"))
    elif schema != SCHEMA_VERSION:
        problems.append(("schema", f"unsupported schema version {schema!r} (expected {SCHEMA_VERSION})"))

    profile = None
    praw = doc.get("profile")
    if not isinstance(praw, dict) or "kind" not in praw:
        problems.append(("profile.kind", "missing required field"))
    else:
        try:
            profile = ProfileSpec.from_dict(praw)
        except (InvalidProfileError, TypeError, KeyError, ValueError) as e:
            problems.append(("profile", str(e)))

    exp = doc.get("experiment", {})
    if not isinstance(exp, dict):
        problems.append(("experiment", "must be a table"))
        exp = {}
    _check_experiment(exp, problems)

    pde = _section(doc, "pde", _PDE_DEFAULTS, problems)
    theory = _section(doc, "theory", _THEORY_DEFAULTS, problems)
    compare = _section(doc, "compare", _COMPARE_DEFAULTS, problems)
    verify = _section(doc, "verify", _VERIFY_DEFAULTS, problems)
    output = _section(doc, "output", _OUTPUT_DEFAULTS, problems)

    dr = pde["delta_ratio"]
    if not _is_num(dr) or dr <= 0:
        problems.append(("pde.delta_ratio", "must be a positive number"))
    elif dr > 0.25:
        problems.append(("pde.delta_ratio",
                         f"delta*N^2 = {dr:g} breaks the stability condition of the explicit scheme "
                         f"(delta*N^2 < 1/2 required; this package enforces delta*N^2 <= 1/4)"))
    for key in ("k_sigma", "k_sigma_tagged", "bias_c"):
        if not _is_num(compare[key]) or compare[key] < 0:
            problems.append((f"compare.{key}", "must be a nonnegative number"))
    if not _is_num(theory["tol"]) or theory["tol"] <= 0:
        problems.append(("theory.tol", "must be positive"))
    for i, item in enumerate(theory["ou"]):
        if not isinstance(item, dict) or set(item) != {"H", "G", "s", "t"}:
            problems.append((f"theory.ou[{i}]", "needs exactly the keys H, G, s, t"))
            continue
        for k in ("H", "G"):
            try:
                parse_test_function(str(item[k]))
            except ValueError as e:
                problems.append((f"theory.ou[{i}].{k}", str(e)))
        if _is_num(item["s"]) and _is_num(item["t"]) and item["s"] > item["t"]:
            problems.append((f"theory.ou[{i}]", "needs s <= t"))

    plan = None
    if not problems and profile is not None:
        kwargs = {k: (tuple(v) if isinstance(v, list) else v) for k, v in exp.items()}
        kwargs["delta_ratio"] = float(dr)
        try:
            plan = ExperimentPlan(profile=profile, **kwargs)
        except (ConfigurationError, ValueError, TypeError) as e:
            problems.append(("experiment", str(e)))
        if plan is not None:
            try:
                L = plan.half_width
                profile.check_range(np.arange(-L, L + 1) / plan.N)
            except InvalidProfileError as e:
                problems.append(("profile", str(e)))
    if problems:
        raise ConfigError(problems)
    return RunConfig(plan, pde, theory, compare, verify, output)


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ConfigError([("<document>", f"not UTF-8: {e}")]) from None
    return parse_config(text)
