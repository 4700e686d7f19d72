"""Command-line entry point: ``run``, ``verify``, ``plot`` and ``tasks``.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 a run stopped on a numeric failure (its partial CSV is kept).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import policy
from .config import OUT_ENV, ConfigError, RunConfig, RunVariant, read_run_config
from .plotting import plot_csvs
from .suites import SUITES, Check, run_suite
from .tasks import builtin_tasks
from .trainer import MetricsWriter, NonFiniteGradient, config_dict, detect_collapse, train, trailing_mean

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_RUN = 0, 1, 2, 3


# -- run -----------------------------------------------------------------------

def _run_one(job: tuple[RunVariant, int, str, int]) -> dict:
    """Train one (variant, seed) pair into its own directory; returns a summary row."""
    variant, seed, out_dir, window = job
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = replace(variant.train, seed=seed)
    writer = MetricsWriter(out / "metrics.csv")
    try:
        result = train(cfg, on_record=writer)
    except NonFiniteGradient as e:
        return {"label": variant.label, "seed": seed, "error": str(e)}
    finally:
        writer.close()
    policy.save(result.params, out / "params.txt")
    recs = result.records
    row = {
        "label": variant.label,
        "seed": seed,
        "kind": cfg.objective.kind,
        "H0": cfg.objective.H0,
        "trailing_entropy": trailing_mean(recs, "policy_entropy", window),
        "terminal_reward": trailing_mean(recs, "mean_reward", window),
        "final_entropy": recs[-1].policy_entropy,
        "collapsed": detect_collapse(recs, cfg.entropy_floor, window),
    }
    summary = dict(row, steps=len(recs), window=window, config=config_dict(cfg))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")
    return row


def _jobs(rc: RunConfig) -> list[tuple]:
    jobs = []
    for v in rc.variants:
        for s in v.seeds:
            sub = rc.out_dir / v.label / f"seed{s}" if rc.is_sweep else rc.out_dir / f"seed{s}"
            jobs.append((v, s, str(sub), rc.window))
    return jobs


def comparison_table(rows: list[dict]) -> str:
    """Per-variant means over seeds; status is ``collapsed`` if any seed collapsed."""
    labels = list(dict.fromkeys(r["label"] for r in rows))
    lines = [f"{'variant':<20} {'kind':<18} {'H0':>5} {'seeds':>5} {'entropy':>9} {'reward':>8}  status"]
    for lab in labels:
        rs = [r for r in rows if r["label"] == lab]
        n_col = sum(r["collapsed"] for r in rs)
        status = "regulated" if n_col == 0 else f"collapsed {n_col}/{len(rs)}"
        lines.append(f"{lab:<20} {rs[0]['kind']:<18} {rs[0]['H0']:>5.2f} {len(rs):>5d} "
                     f"{np.mean([r['trailing_entropy'] for r in rs]):>9.4f} "
                     f"{np.mean([r['terminal_reward'] for r in rs]):>8.4f}  {status}")
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    try:
        rc = read_run_config(args.config, seed=args.seed, out=args.out)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    jobs = _jobs(rc)
    rc.out_dir.mkdir(parents=True, exist_ok=True)
    if args.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.parallel) as ex:
            rows = list(ex.map(_run_one, jobs))
    else:
        rows = [_run_one(j) for j in jobs]
    failed = [r for r in rows if "error" in r]
    for r in failed:
        print(f"error: {r['label']} seed {r['seed']}: {r['error']}", file=sys.stderr)
    good = [r for r in rows if "error" not in r]
    if good:
        table = comparison_table(good)
        (rc.out_dir / "comparison.txt").write_text(table)
        print(table, end="")
        done = {(r["label"], r["seed"]) for r in good}
        kept = [j for j in jobs if (j[0].label, j[1]) in done]
        plot_csvs([Path(j[2]) / "metrics.csv" for j in kept], rc.out_dir / "entropy.svg",
                  [f"{j[0].label}/seed{j[1]}" for j in kept])
    print(f"outputs in {rc.out_dir}")
    return EXIT_RUN if failed else EXIT_OK


# -- verify --------------------------------------------------------------------

def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    checks: list[Check] = []
    for name in names:
        kw = {}
        if name == "theorem1":
            kw = {"T_high": args.t_high, "T_low": args.t_low}
        elif name == "mc-consistency":
            kw = {"samples": args.samples}
        if args.seed is not None:
            kw["seed"] = args.seed
        for c in run_suite(name, **kw):
            print(c.line(), flush=True)
            checks.append(c)
    n_fail = sum(not c.passed for c in checks)
    print(f"{len(checks) - n_fail}/{len(checks)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_VERIFY


# -- plot / tasks --------------------------------------------------------------

def cmd_plot(args) -> int:
    labels = args.labels.split(",") if args.labels else None
    try:
        path = plot_csvs(args.csv, args.out, labels)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {path}")
    return EXIT_OK


def cmd_tasks(args) -> int:
    print(f"{'name':<10} {'vocab':>5} {'horizon':>7} {'queries':>7} {'refs/query':>10} {'responses':>9}  description")
    for t in builtin_tasks():
        n_refs = "/".join(str(len(t.references[q])) for q in t.queries)
        print(f"{t.name:<10} {t.vocab.size:>5} {t.horizon:>7} {len(t.queries):>7} {n_refs:>10} "
              f"{t.sequence_space_size():>9}  {t.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcpo-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="train one config or a sweep of variants")
    r.add_argument("--config", required=True, help="flat key = value config file")
    r.add_argument("--seed", type=int, help="run this single seed instead of run.seeds")
    r.add_argument("--out", help=f"output directory (default: run.out, else ${OUT_ENV}/<label>)")
    r.add_argument("--parallel", type=int, default=1, help="worker processes for sweeps")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run oracle suites and print pass/fail lines")
    v.add_argument("--suite", default="all", choices=list(SUITES) + ["all"])
    v.add_argument("--seed", type=int, help="seed for the randomized cases")
    v.add_argument("--samples", type=int, default=10_000, help="Monte-Carlo samples (mc-consistency)")
    v.add_argument("--t-high", type=float, default=1.5, help="temperature expected to raise entropy")
    v.add_argument("--t-low", type=float, default=0.7, help="temperature expected to lower entropy")
    v.set_defaults(func=cmd_verify)

    pl = sub.add_parser("plot", help="entropy-vs-step SVG from metrics CSVs")
    pl.add_argument("csv", nargs="*", help="metrics CSV files")
    pl.add_argument("--out", required=True, help="output .svg path")
    pl.add_argument("--labels", help="comma-separated series labels")
    pl.set_defaults(func=cmd_plot)

    t = sub.add_parser("tasks", help="list builtin tasks")
    t.set_defaults(func=cmd_tasks)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
