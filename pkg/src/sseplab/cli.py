"""Command-line driver: simulate | pde | theory | compare | verify | report.

Exit status is 0 iff every verdict produced by the command passes and no
runtime assertion fired; 1 for failed verdicts; 2 for configuration,
dependency or dynamics errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigError, CorruptedDynamicsError, DependencyError, JoinError, SSEPLabError
from .harness import (CovarianceReport, ExperimentPlan, SampleSet, compare, estimate_moments,
                      run_experiment)
from .hydro import build_field_grid, convergence_check
from .lattice import SimState, assert_invariants, replica_rng, sample_initial
from .oracle import exact_distribution, simulate_small, empirical_distribution, site_marginals, total_variation
from .testfunctions import parse_test_function
from .theory import KernelContext, current_covariance, ou_covariance, tagged_covariance

log = logging.getLogger("sseplab")

THREADS_ENV = "SSEPLAB_THREADS"
SAMPLES = "samples"
THEORY = "theory.json"
REPORT = "report.json"
FIELD = "field.json"
CONVERGENCE = "convergence.json"
VERIFY = "verify.json"


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=float)


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise DependencyError(f"required input {path} is missing")
    with open(path) as fh:
        return json.load(fh)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    d = cfg.plan.to_dict()
    if args.seed is not None:
        d["seed"] = int(args.seed)
    if args.replicas is not None:
        d["replicas"] = int(args.replicas)
    cfg.plan = ExperimentPlan.from_dict(d)
    if args.out is not None:
        cfg.output["dir"] = args.out
    return cfg


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, int(args.threads))
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def _context(cfg: RunConfig) -> KernelContext:
    return KernelContext(cfg.plan.profile, truncation=float(cfg.theory["truncation"]),
                         tol=float(cfg.theory["tol"]))


def theory_targets(plan: ExperimentPlan) -> list[tuple]:
    """(kind, a, b, s, t) keys the theory step evaluates for a plan."""
    times = [t for t in plan.times if t > 0]
    keys = []
    pairs = [(s, t) for i, s in enumerate(times) for t in times[i:]]
    if "current" in plan.observables:
        keys += [("cov", "Z", "Z", s, t) for s, t in pairs]
        keys += [("skew", "Z", "Z", times[-1], times[-1]), ("exkurt", "Z", "Z", times[-1], times[-1])]
    if "tagged" in plan.observables:
        keys += [("cov", "W", "W", s, t) for s, t in pairs]
        keys += [("skew", "W", "W", times[-1], times[-1]), ("exkurt", "W", "W", times[-1], times[-1])]
    if "field" in plan.observables:
        for f in plan.fields:
            keys += [("cov", f"Y[{f}]", f"Y[{f}]", s, t) for s, t in pairs]
    return keys


def evaluate_theory(plan: ExperimentPlan, ctx: KernelContext) -> list[dict]:
    rows = []
    for kind, a, b, s, t in theory_targets(plan):
        if kind in ("skew", "exkurt"):
            rows.append({"kind": kind, "a": a, "b": b, "s": s, "t": t, "value": 0.0, "quadError": 0.0})
            continue
        if a == "Z":
            v = current_covariance(s, t, plan.bond_u, ctx)
        elif a == "W":
            v = tagged_covariance(s, t, ctx)
        else:
            G = parse_test_function(a[2:-1])
            # E[Y_t(G) Y_s(G)] with the later time first
            v = ou_covariance(G, G, s, t, ctx)
        rows.append({"kind": kind, "a": a, "b": b, "s": s, "t": t, "value": v.value, "quadError": v.error})
    return rows


def _theory_map(doc: dict) -> dict:
    return {(r["kind"], r["a"], r["b"], r["s"], r["t"]): r["value"] for r in doc["rows"]}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out: Path, threads: int) -> int:
    t0 = time.perf_counter()
    samples = run_experiment(cfg.plan, workers=threads)
    samples.meta["wall_seconds"] = time.perf_counter() - t0
    samples.meta["config_hash"] = cfg.hash()
    samples.save(out / SAMPLES)
    log.info("simulated %d replicas in %.1fs", samples.R, samples.meta["wall_seconds"])
    return 0


def cmd_pde(cfg: RunConfig, out: Path) -> int:
    plan = cfg.plan
    h = cfg.hash()
    grid = build_field_grid(plan.profile, plan.N, plan.times, window=plan.half_width,
                            delta_ratio=cfg.pde["delta_ratio"], bonds=[int(np.floor(plan.bond_u * plan.N)) - 1],
                            lln=_lln_defined(plan))
    grid.meta["plan_hash"] = h
    grid.to_csv(out / "field.csv", comment=f"plan_hash={h}")
    grid.to_json(out / FIELD)
    t_conv = cfg.pde["convergence_t"] if cfg.pde["convergence_t"] is not None else plan.T
    table = convergence_check(plan.profile, t_conv, cfg.pde["convergence_Ns"], cfg.pde["delta_ratio"])
    table.to_csv(out / "convergence.csv", comment=f"plan_hash={h}")
    lo, hi = cfg.pde["order_band"]
    resolved = [r for r, e in zip(table.ratios, table.errors[1:]) if e > 1e-12]
    order_ok = all(lo <= r <= hi for r in resolved)
    field_ok = bool(np.all(grid.discrete >= -1e-15) and np.all(grid.discrete <= 1 + 1e-15))
    mass = grid.discrete.sum(axis=1)
    mass_ok = bool(np.all(np.abs(mass - mass[0]) <= 1e-9 * max(1.0, abs(mass[0]))))
    _write_json(out / CONVERGENCE, {"plan_hash": h, "rows": table.rows(), "order_band": [lo, hi],
                                   "verdicts": {"order": order_ok, "field_range": field_ok,
                                                "mass_conservation": mass_ok}})
    return 0 if (order_ok and field_ok and mass_ok) else 1


def _lln_defined(plan: ExperimentPlan) -> bool:
    return "tagged" in plan.observables


def cmd_theory(cfg: RunConfig, out: Path) -> int:
    ctx = _context(cfg)
    rows = evaluate_theory(cfg.plan, ctx)
    extra = []
    for item in cfg.theory["ou"]:
        H, G = parse_test_function(item["H"]), parse_test_function(item["G"])
        a = ou_covariance(H, G, item["s"], item["t"], ctx, form="original")
        b = ou_covariance(H, G, item["s"], item["t"], ctx, form="partsIntegrated")
        agree = abs(a.value - b.value) <= a.error + b.error + 1e-4 * max(abs(a.value), abs(b.value), 1e-12)
        extra.append({**item, "original": a.value, "originalError": a.error, "partsIntegrated": b.value,
                      "partsIntegratedError": b.error, "agree": bool(agree)})
    doc = {"plan_hash": cfg.hash(), "rows": rows, "ou_checks": extra}
    _write_json(out / THEORY, doc)
    with open(out / "theory.csv", "w", newline="") as fh:
        fh.write(f"# plan_hash={cfg.hash()}\n")
        w = csv.writer(fh)
        w.writerow(["kind", "a", "b", "s", "t", "value", "quadError"])
        for r in rows:
            w.writerow([r["kind"], r["a"], r["b"], r["s"], r["t"], repr(r["value"]), repr(r["quadError"])])
    return 0 if all(e["agree"] for e in extra) else 1


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    for f in (SAMPLES + ".json", SAMPLES + ".csv", THEORY):
        if not (out / f).exists():
            raise DependencyError(f"compare needs {out / f}; run the "
                                  f"{'simulate' if f.startswith(SAMPLES) else 'theory'} command first")
    samples = SampleSet.load(out / SAMPLES)
    th = _read_json(out / THEORY)
    if th["plan_hash"] != samples.plan.hash() or th["plan_hash"] != cfg.hash():
        raise JoinError("samples, theory and config carry different plan hashes")
    theory = _theory_map(th)
    pairs = [(a, s, b, t) for (k, a, b, s, t) in theory if k == "cov"]
    singles = sorted({(a, t) for (k, a, b, s, t) in theory if k in ("skew", "exkurt")})
    skel = estimate_moments(samples, pairs=pairs, singles=singles)
    skel.entries = [e for e in skel.entries if e.kind != "mean"]
    ks = {"*": cfg.compare["k_sigma"], "W": cfg.compare["k_sigma_tagged"]}
    rep = compare(skel, theory, k_sigma=ks, bias_c=cfg.compare["bias_c"], N=cfg.plan.N)
    rep.meta["assertion_checks"] = samples.meta.get("assertion_checks", 0)
    rep.to_json(out / REPORT)
    rep.to_csv(out / "report.csv")
    for e in rep.entries:
        log.info("%-6s %-12s s=%-5g t=%-5g emp=%.5g se=%.2g th=%.5g %s", e.kind, e.a, e.s, e.t,
                 e.empirical, e.standard_error, e.theoretical, e.verdict)
    return 0 if rep.all_pass else 1


def run_verify(cfg: RunConfig, threads: int = 1) -> dict:
    v = cfg.verify
    res = {"plan_hash": cfg.hash(), "oracle": [], "invariants": {}}
    eta0 = np.array([int(c) for c in v["oracle_config"]], np.uint8)
    states, probs = exact_distribution(eta0, v["oracle_t"], v["oracle_N"])
    marg = site_marginals(states, probs)
    for scheme in v["schemes"]:
        configs, _ = simulate_small(eta0, v["oracle_N"], v["oracle_t"], v["oracle_replicas"],
                                    cfg.plan.seed, scheme=scheme)
        tv = total_variation(empirical_distribution(configs, states), probs)
        merr = float(np.max(np.abs(configs.mean(axis=0) - marg)))
        res["oracle"].append({"scheme": scheme, "state_tv": tv, "max_site_marginal_error": merr,
                              "pass": bool(tv <= v["oracle_tv"] and merr <= v["oracle_tv"])})
    # exact identities along trajectories, for both schemes
    d = cfg.plan.to_dict()
    d.update(replicas=max(2, int(v["invariant_replicas"])), conditioned=True,
             observables=tuple(dict.fromkeys(tuple(d["observables"]) + ("current", "tagged"))))
    inv = {}
    for scheme in ("rejection-free", "uniformized"):
        d["scheme"] = scheme
        plan = ExperimentPlan.from_dict(d)
        try:
            s1 = run_experiment(plan, workers=threads)
            s2 = run_experiment(plan, workers=1)
            inv[scheme] = {"checks": s1.meta["assertion_checks"], "violations": 0,
                           "deterministic": bool(np.array_equal(s1.values, s2.values))}
        except CorruptedDynamicsError as e:
            inv[scheme] = {"checks": None, "violations": 1, "error": str(e), "deterministic": None}
    # active-bond bookkeeping against a full rescan
    plan = cfg.plan
    rng = replica_rng(plan.seed, 0)
    st = SimState(sample_initial(plan.profile, plan.N, plan.half_width, True, rng), plan.N, rng)
    ok = True
    for k in range(1, 21):
        st.advance(plan.T * k / 20)
        ok &= st.active_bonds() == st.rescan_active()
        assert_invariants(st, 0)
    inv["active_bonds_rescan"] = bool(ok)
    res["invariants"] = inv
    res["pass"] = bool(all(o["pass"] for o in res["oracle"]) and ok and all(
        x["violations"] == 0 and x["deterministic"] for k, x in inv.items() if isinstance(x, dict)))
    return res


def cmd_verify(cfg: RunConfig, out: Path, threads: int) -> int:
    res = run_verify(cfg, threads)
    _write_json(out / VERIFY, res)
    for o in res["oracle"]:
        log.info("oracle %-15s TV=%.2e marginal=%.2e %s", o["scheme"], o["state_tv"],
                 o["max_site_marginal_error"], "pass" if o["pass"] else "FAIL")
    return 0 if res["pass"] else 1


def cmd_report(cfg: RunConfig | None, out: Path) -> int:
    found = {}
    for name in (SAMPLES + ".json", FIELD, CONVERGENCE, THEORY, REPORT, VERIFY):
        p = out / name
        if p.exists():
            found[name] = _read_json(p)
    if not found:
        raise DependencyError(f"report found no inputs in {out}; expected at least one of "
                              f"{SAMPLES}.json, {FIELD}, {CONVERGENCE}, {THEORY}, {REPORT}, {VERIFY}")
    hashes = {n: d.get("plan_hash") for n, d in found.items()}
    if cfg is not None:
        hashes["<config>"] = cfg.hash()
    if len(set(hashes.values())) != 1:
        raise JoinError("refusing to merge files with different plan hashes: "
                        + ", ".join(f"{n}={h}" for n, h in sorted(hashes.items())))
    h = next(iter(hashes.values()))
    verdicts = {}
    if REPORT in found:
        rep = CovarianceReport.from_dict(found[REPORT])
        verdicts["compare"] = rep.all_pass
        with open(out / "summary_covariances.csv", "w", newline="") as fh:
            fh.write(f"# plan_hash={h}\n")
            w = csv.writer(fh)
            w.writerow(["kind", "a", "b", "s", "t", "empirical", "se", "theoretical", "verdict"])
            for e in rep.entries:
                w.writerow([e.kind, e.a, e.b, e.s, e.t, e.empirical, e.standard_error, e.theoretical, e.verdict])
    if CONVERGENCE in found:
        verdicts["pde"] = all(found[CONVERGENCE]["verdicts"].values())
        with open(out / "summary_convergence.csv", "w", newline="") as fh:
            fh.write(f"# plan_hash={h}\n")
            w = csv.DictWriter(fh, fieldnames=["t", "N", "sup_error", "ratio"])
            w.writeheader()
            for r in found[CONVERGENCE]["rows"]:
                w.writerow(r)
    if THEORY in found and found[THEORY].get("ou_checks"):
        verdicts["theory"] = all(x["agree"] for x in found[THEORY]["ou_checks"])
    if VERIFY in found:
        verdicts["verify"] = found[VERIFY]["pass"]
    summary = {"plan_hash": h, "inputs": sorted(found), "verdicts": verdicts,
               "all_pass": all(verdicts.values()), "contents": found}
    _write_json(out / "summary.json", summary)
    return 0 if summary["all_pass"] else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sseplab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "pde", "theory", "compare", "verify", "report"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=(name != "report"), help="TOML run configuration")
        s.add_argument("--seed", type=int, help="override experiment.seed")
        s.add_argument("--replicas", type=int, help="override experiment.replicas")
        s.add_argument("--out", help="output directory (overrides output.dir)")
        s.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = None
        if args.config:
            cfg = _apply_overrides(load_config(args.config), args)
            out = Path(cfg.output["dir"])
        else:
            out = Path(args.out or "out")
        out.mkdir(parents=True, exist_ok=True)
        threads = _threads(args)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, threads)
        if args.command == "pde":
            return cmd_pde(cfg, out)
        if args.command == "theory":
            return cmd_theory(cfg, out)
        if args.command == "compare":
            return cmd_compare(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out, threads)
        return cmd_report(cfg, out)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return 2
    except (DependencyError, JoinError, CorruptedDynamicsError, SSEPLabError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
