"""Command line entry points: ``porodyn solve|verify|regularity|kinetic|sweep``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import harness
from .config import RunConfig, parse_config
from .errors import PorodynError
from .evolution import export_trajectory, is_nonincreasing, solve_any, trotter_kato_sweep
from .ioutil import atomic_write, write_csv, worker_count
from .kinetic import default_basket, defect_measure, export_residuals, export_sample, kinetic_residual, residual_magnitude
from .regularity import exponent_scan

log = logging.getLogger("porodyn")


def _outdir(cfg: RunConfig, out, sub: str) -> Path:
    base = Path(out) if out else Path(cfg.outputs["directory"])
    d = base / sub
    d.mkdir(parents=True, exist_ok=True)
    return d


def _run(cfg: RunConfig, n: int | None = None, k: int | None = None, eps: float | None = None):
    grid = cfg.build_grid(n)
    model = cfg.build_model(k)
    u0 = cfg.build_initial(grid, cfg.base_model())
    src = cfg.build_source(grid)
    t = cfg.time
    return solve_any(model, u0, src, float(t["T"]), float(eps or t["eps"]), float(t["tol"]), float(t["t0"]))


def cmd_solve(cfg: RunConfig, out=None) -> int:
    traj = _run(cfg)
    d = _outdir(cfg, out, "solve")
    export_trajectory(traj, d, int(cfg.outputs["snapshot_stride"]))
    log.info("wrote %d states to %s", len(traj), d)
    return 0


def _suite_results(cfg: RunConfig, suite: str):
    model = cfg.base_model()
    grid = cfg.build_grid()
    t = cfg.time
    batch = harness.Batch(model, grid, float(t["T"]), float(t["eps"]), int(cfg.verify["trials"]), cfg.seed,
                          float(t["tol"]), forced=True)
    unforced = harness.Batch(model, grid, batch.T, batch.eps, batch.trials, cfg.seed, batch.tol, forced=False)
    if suite == "contraction":
        return [harness.check_contraction(batch)]
    if suite == "comparison":
        return [harness.check_comparison(batch), harness.check_comparison(batch, "ordered")]
    if suite == "gronwall":
        return [harness.check_gronwall(batch)]
    if suite == "positivity":
        return [harness.check_positivity_and_range(unforced),
                harness.check_positivity_and_range(unforced, "logistic", amp_max=0.95)]
    if suite == "energy":
        return [harness.check_energy(unforced), harness.check_energy(batch)]
    if suite == "chi":
        return [harness.check_chi_suite(batch)]
    if suite == "defect":
        return [harness.check_defect_suite(unforced, k=int(cfg.kinetic["k"]))]
    raise ValueError(f"unknown suite {suite!r}")


def cmd_verify(cfg: RunConfig, suite: str | None = None, out=None) -> int:
    suites = [suite] if suite else list(cfg.verify["suites"])
    results = []
    for s in suites:
        results.extend(_suite_results(cfg, s))
    d = _outdir(cfg, out, "verify")
    harness.export_csv(results, d / "results.csv")
    harness.export_trials_csv(results, d / "trials.csv")
    harness.export_junit(results, d / "junit.xml")
    for r in results:
        log.info("%s: %d/%d failures (worst slack %.3g)", r.name, r.failures, r.trials, r.worst_slack)
    return 0 if all(r.passed for r in results) else 1


def cmd_regularity(cfg: RunConfig, out=None) -> int:
    r = cfg.regularity
    n0 = int(cfg.grid["n"])
    eps0 = float(cfg.time["eps"])
    runs = [_run(cfg, n0 * 2**lev, eps=eps0 / 2**lev) for lev in range(int(r["levels"]))]
    rep = exponent_scan(runs, float(r["p"]), r["sigma_t"], r["sigma_x"], int(r["time_stride"]))
    rep.export(_outdir(cfg, out, "regularity"))
    return 0


def cmd_kinetic(cfg: RunConfig, out=None) -> int:
    k = int(cfg.kinetic["k"])
    traj = _run(cfg, k=k)
    sample = defect_measure(traj, B=int(cfg.kinetic["bins"]))
    d = _outdir(cfg, out, "kinetic")
    export_sample(sample, d)
    tests = default_basket(traj.times[0], traj.times[-1], traj.grid, sample.J)
    res = kinetic_residual(traj, sample, tests)
    export_residuals(res, traj.grid.h, traj.tau, d / "residuals.csv")
    atomic_write(d / "residual_summary.json",
                 json.dumps({"magnitude": residual_magnitude(res), "h": traj.grid.h, "tau": traj.tau}, indent=2) + "\n")
    return 0


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def cmd_sweep(cfg: RunConfig, param: str | None = None, values=None, out=None) -> int:
    """Trotter-Kato sweep over ``sweep.ks`` or, with ``param``, one solve per parameter value."""
    d = _outdir(cfg, out, "sweep")
    if not param:
        t = cfg.time
        ks = list(cfg.sweep["ks"])
        errs = trotter_kato_sweep(cfg.base_model(), ks, cfg.build_initial(cfg.build_grid()),
                                  cfg.build_source(cfg.build_grid()), float(t["T"]), float(t["eps"]), float(t["tol"]))
        write_csv(d / "trotter_kato.csv", ("k", "error_CtL1"), errs)
        return 0 if is_nonincreasing(errs, 0.1) else 1

    def work(item):
        i, v = item
        sub = cfg.with_overrides(**{param: v})
        cmd_solve(sub, d / f"{param}={v}")
        return i

    with ThreadPoolExecutor(max_workers=worker_count(len(values))) as pool:
        list(pool.map(work, enumerate(values)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="porodyn", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "verify", "regularity", "kinetic", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML file or preset name")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory (overrides outputs.directory)")
        if name == "verify":
            p.add_argument("--suite", default=None)
        if name == "sweep":
            p.add_argument("--param", default=None, help="dotted key, e.g. grid.n")
            p.add_argument("--values", default=None, help="comma separated values")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_overrides(**{"seeds.seed": args.seed})
        if args.command == "solve":
            return cmd_solve(cfg, args.out)
        if args.command == "verify":
            return cmd_verify(cfg, args.suite, args.out)
        if args.command == "regularity":
            return cmd_regularity(cfg, args.out)
        if args.command == "kinetic":
            return cmd_kinetic(cfg, args.out)
        values = [_coerce(v) for v in args.values.split(",")] if args.values else None
        if args.param and not values:
            raise PorodynError("--param needs --values")
        return cmd_sweep(cfg, args.param, values, args.out)
    except PorodynError as exc:
        print(f"porodyn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
