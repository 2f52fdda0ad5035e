"""Command-line interface: price, simulate, verify, fragility, report."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import arbitrage, kernels, simulate, superhedge
from .errors import ConfigurationError, DomainError, ScenarioWarning, SimulationError
from .fragility import MODES, fragility_sweep
from .model import load_scenario, scenario_hash

log = logging.getLogger("arbforge")

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


def fmt(x: float) -> str:
    """Probabilities and estimates: 7 significant digits."""
    return f"{x:.7g}"


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _load(path: str):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ScenarioWarning)
        spec = load_scenario(path)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return spec


def _price_line(rep) -> str:
    se = "-" if rep.standard_error is None else fmt(rep.standard_error)
    return f"{rep.scenario:<22} {fmt(rep.price_or_bound):>12} {fmt(rep.implied_U):>12} {se:>12}  {rep.kind:<18} {rep.method}"


_TABLE_HEAD = f"{'scenario':<22} {'price/bound':>12} {'U':>12} {'SE':>12}  {'kind':<18} method"


def cmd_price(args) -> int:
    spec = _load(args.scenario)
    rep = superhedge.superhedge_for_scenario(spec, args.paths, threads=args.threads)
    print(_TABLE_HEAD)
    print(_price_line(rep))
    ub = rep.extras.get("upper_bound_S_T_positive")
    if ub is not None:
        print(f"analytic upper bound Q[S_T > 0] = {fmt(ub)}")
    if args.json:
        Path(args.json).write_text(rep.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _load(args.scenario)
    n = spec.n_paths if args.paths is None else args.paths
    run = {"q": simulate.simulate_q, "p": simulate.simulate_p_direct, "p-weighted": simulate.simulate_p_weighted}
    bundle = run[args.measure](spec, n, threads=args.threads)
    print(f"scenario {spec.label} ({scenario_hash(spec)}), measure {args.measure}, {bundle.n_paths} paths")
    if args.measure == "p":
        ok = bool(np.all(bundle.tau > spec.T))
        print(f"all paths survive: {str(ok).lower()}")
        if "rejected_steps" in bundle.extras:
            rej, acc = int(np.sum(bundle.extras["rejected_steps"])), int(np.sum(bundle.extras["accepted_steps"]))
            print(f"rejected steps: {rej} of {acc} accepted")
    elif args.measure == "p-weighted":
        w = bundle.weight
        se = float(w.std(ddof=1) / np.sqrt(w.size)) if w.size > 1 else float("nan")
        print(f"mean weight: {fmt(float(w.mean()))} +/- {fmt(se)}")
    else:
        if n > 1:
            p = float(bundle.survived.mean())
            print(f"Q[sigma > T]: {fmt(p)} +/- {fmt(np.sqrt(p * (1 - p) / n))}")
    out = args.out or f"{scenario_hash(spec)}-{args.measure}.csv"
    digest = simulate.bundle_to_csv(bundle, out)
    print(f"wrote {out}")
    print(f"output sha256: {digest}")
    if args.cache:
        print(f"cached {simulate.save_bundle(bundle, spec, args.measure)}")
    return EXIT_OK


# --- verify suites ----------------------------------------------------------


def _suite_kernels(spec, args) -> list[tuple[str, bool, str]]:
    if spec.kind == "poisson":
        checks = []
        for s, want in ((1.0, 2.0), (0.5, 3.0)):
            got = float(kernels.poisson_p_intensity(s, spec.model.intensity) / spec.model.intensity)
            checks.append((f"P-intensity ratio at s={s}", abs(got - want) < 1e-12, fmt(got)))
        return checks
    kern = kernels.SurvivalKernel.for_scenario(spec)
    T, h = spec.T, 1e-5
    t = np.linspace(0.0, 0.98 * T, 50)[:, None]
    s = kern.boundary(t) + np.sqrt(T - t) * np.linspace(0.02, 3.0, 50)[None, :]
    fd = (kern.value(t, s + h) - kern.value(t, s - h)) / (2 * h)
    d = kern.delta(t, s)
    rel = np.abs(fd - d) / np.maximum(np.abs(d), 1e-300)
    v = kern.value(t, s)
    ident = np.abs(kern.drift(t, s) * v - d).max()
    return [
        ("delta vs central differences (50x50 lattice, rel 1e-6)", bool(rel.max() <= 1e-6), f"max rel {rel.max():.2e}"),
        ("0 <= value <= 1", bool(np.all((v >= 0) & (v <= 1))), ""),
        ("value nondecreasing away from boundary", bool(np.all(np.diff(v, axis=1) >= 0)), ""),
        ("drift * value - delta == 0", bool(ident <= 1e-12), f"max {ident:.1e}"),
    ]


def _suite_crossval(spec, args):
    n = args.paths or spec.n_paths
    res = simulate.cross_validate(spec, n_paths=n, threads=args.threads)
    return [(f"{k}: direct {fmt(r.direct.mean)} vs weighted {fmt(r.weighted.mean)}", r.passed, f"z = {r.z:+.3f}")
            for k, r in res.items()]


def _suite_hedge(spec, args):
    n = args.paths or 1000
    fine = spec.with_grid(max(1, int(round(spec.T / 1e-4))))
    rep = arbitrage.delta_hedge_run(fine, n, threads=args.threads)
    frac = float(np.mean(np.abs(rep.v_T - 1.0) <= 0.05))
    ref = arbitrage.replication_refinement(spec, n_paths=min(n, 300), threads=args.threads)
    return [
        ("V_T within 0.05 of 1 on >= 99% of P-paths (dt=1e-4)", frac >= 0.99, f"fraction {fmt(frac)}"),
        ("wealth >= -0.05 on all paths", bool(rep.v_min.min() >= -0.05), f"min {fmt(float(rep.v_min.min()))}"),
        ("refinement exponent in [0.4, 0.6]", ref.within(),
         f"exponent {ref.exponent:.3f}, errors {[fmt(e) for e in ref.errors]}"),
    ]


def _suite_superhedge(spec, args):
    n = args.paths or spec.n_paths
    rep = superhedge.superhedge_for_scenario(spec, n, threads=args.threads)
    checks = [("report value in (0, 1] and p * U == 1", abs(rep.price_or_bound * rep.implied_U - 1) < 1e-15,
               f"{fmt(rep.price_or_bound)}")]
    if spec.kind in ("bm_zero", "bm_line"):
        mc = superhedge.mc_survival_report(spec, n, threads=args.threads)
        z = (mc.price_or_bound - rep.price_or_bound) / mc.standard_error
        checks.append(("MC survival within 3 SE of closed form", abs(z) <= 3,
                       f"MC {fmt(mc.price_or_bound)} +/- {fmt(mc.standard_error)}, z = {z:+.3f}"))
    elif spec.kind == "poisson":
        ub = rep.extras["upper_bound_S_T_positive"]
        checks.append(("MC <= Q[S_T > 0] + 3 SE", rep.price_or_bound <= ub + 3 * rep.standard_error,
                       f"{fmt(rep.price_or_bound)} +/- {fmt(rep.standard_error)} vs {fmt(ub)}"))
    elif spec.kind in ("vol_bet", "bracket_bet"):
        q = superhedge.q_side_check(spec, min(n, 20_000), threads=args.threads)
        checks.append(("Q[sigma_1 <= T, sigma_2 > T] > 0 (3 SE)", q.assumption_holds,
                       f"{fmt(q.joint_estimate)} +/- {fmt(q.joint_se)}"))
        checks.append(("Q[sigma_1 <= T | sigma_2 > T] >= 1 - bound (3 SE)", q.bound_consistent,
                       f"{fmt(q.cond_estimate)} +/- {fmt(q.cond_se)} vs {fmt(q.bound_complement)}"))
    return checks


SUITES = {
    "kernels": _suite_kernels,
    "crossval": _suite_crossval,
    "hedge": _suite_hedge,
    "superhedge": _suite_superhedge,
}


def cmd_verify(args) -> int:
    spec = _load(args.scenario)
    checks = SUITES[args.suite](spec, args)
    for name, ok, detail in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f"  ({detail})" if detail else ""))
    n_ok = sum(ok for _, ok, _ in checks)
    print(f"{args.suite}: {n_ok}/{len(checks)} passed")
    return EXIT_OK if n_ok == len(checks) else EXIT_FAIL


def cmd_fragility(args) -> int:
    spec = _load(args.scenario)
    rep = fragility_sweep(spec, args.strategy, _floats(args.kappa), _floats(args.eps),
                          args.paths or 2000, mode=args.mode, wait=args.wait)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"fragility-{spec.label}-{rep.strategy}"
    rep.to_json(out / f"{stem}.json")
    rep.heatmap_csv(out / f"{stem}-vt_min.csv", "vt_min")
    rep.heatmap_csv(out / f"{stem}-fraction_below.csv", "fraction_below_guarantee")
    print(f"{'kappa':>10} {'eps':>10} {'min V_T':>12} {'mean V_T':>12} {'frac below':>12}")
    for c in rep.cells:
        print(f"{c['kappa']:>10g} {c['epsilon']:>10g} {fmt(c['vt_min']):>12} {fmt(c['vt_mean']):>12} "
              f"{fmt(c['fraction_below_guarantee']):>12}")
    print(f"verdict: {rep.verdict}")
    print(f"wrote {out / stem}.json and heat-map CSVs")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for path in args.scenario:
        spec = _load(path)
        rows.append(superhedge.superhedge_for_scenario(spec, args.paths, threads=args.threads))
    print(_TABLE_HEAD)
    for r in rows:
        print(_price_line(r))
    if args.json:
        Path(args.json).write_text(json.dumps([r.to_dict() for r in rows], indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arbforge", description="Optimal-arbitrage scenario engine")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("price", help="superhedging price or bound of a scenario")
    c.add_argument("--scenario", required=True)
    c.add_argument("--paths", type=int, default=None, help="MC paths (Poisson only)")
    c.add_argument("--json", help="write the report as JSON")
    c.set_defaults(func=cmd_price)

    c = sub.add_parser("simulate", help="simulate a path bundle and export it")
    c.add_argument("--scenario", required=True)
    c.add_argument("--measure", choices=("q", "p", "p-weighted"), default="q")
    c.add_argument("--paths", type=int, default=None)
    c.add_argument("--out", help="CSV output file")
    c.add_argument("--cache", action="store_true", help="also store the bundle in the binary cache")
    c.set_defaults(func=cmd_simulate)

    c = sub.add_parser("verify", help="run a verification suite")
    c.add_argument("--scenario", required=True)
    c.add_argument("--suite", choices=sorted(SUITES), required=True)
    c.add_argument("--paths", type=int, default=None)
    c.set_defaults(func=cmd_verify)

    c = sub.add_parser("fragility", help="cost/perturbation sweep of a strategy")
    c.add_argument("--scenario", required=True)
    c.add_argument("--strategy", required=True, choices=("delta_hedge", "buy_hold"))
    c.add_argument("--kappa", default="0,1e-4,1e-3,1e-2")
    c.add_argument("--eps", default="0,1e-3,1e-2")
    c.add_argument("--mode", choices=MODES, default="multiplicative-noise")
    c.add_argument("--wait", type=float, default=0.1, help="wait time of the Poisson buy-and-hold")
    c.add_argument("--paths", type=int, default=None)
    c.add_argument("--out-dir", default=".")
    c.set_defaults(func=cmd_fragility)

    c = sub.add_parser("report", help="comparison table over several scenarios")
    c.add_argument("--scenario", nargs="+", required=True)
    c.add_argument("--paths", type=int, default=None)
    c.add_argument("--json")
    c.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
