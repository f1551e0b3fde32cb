"""Command-line entry point.

Subcommands: normalize (raw scores -> noise.jsonl), preview (pacing schedule
table), simulate (synthetic experiment harness), analyze (trace statistics).
Every run echoes its fully resolved configuration; flags override config-file
values, which override built-in defaults. With a fixed seed every subcommand
is bit-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np
from scipy import stats

from . import dataset_io, metrics, pacing, scheduler, simulator
from .errors import M2dfError

PROG = "m2df"


def _fail(message: str, code: int = 1) -> int:
    print(f"{PROG}: error: {message}", file=sys.stderr)
    return code


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise M2dfError(f"config file {path} must hold a JSON object")
    return obj


def _resolve_seed(args, file_cfg: dict) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in file_cfg:
        return int(file_cfg["seed"])
    env = os.environ.get("M2DF_SEED")
    if env is not None:
        return int(env)
    return 0


def _echo(resolved: dict) -> None:
    print("resolved-config: " + json.dumps(resolved, sort_keys=True))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="random seed (fallback: config file, then M2DF_SEED env var, then 0)")
    parser.add_argument("--config", default=None, help="JSON config file with default option values")


def cmd_normalize(args) -> int:
    file_cfg = _load_config_file(args.config)
    fallback = args.fallback or file_cfg.get("fallback", "dc")
    seed = _resolve_seed(args, file_cfg)
    _echo(
        {
            "command": "normalize",
            "manifest": args.manifest,
            "scores": args.scores,
            "out": args.out,
            "fallback": fallback,
            "seed": seed,
        }
    )
    manifest = dataset_io.load_manifest(args.manifest)
    scores = dataset_io.load_scores(args.scores, manifest)
    by_id = {s.id: s for s in scores}
    train = [r for r in manifest if r.split == "train"]
    missing = [r.id for r in train if r.id not in by_id]
    if missing:
        raise M2dfError(f"missing score for train instance {missing[0]!r}")
    train_scores = [by_id[r.id] for r in train]
    rows = metrics.score_records(train_scores, fallback=fallback)
    noise = [
        dataset_io.NoiseScores(id=rid, d_c=d_c, d_f=d_f, d_f_fallback=fb)
        for rid, d_c, d_f, fb in rows
    ]
    dataset_io.write_noise(args.out, noise)

    d_c = np.array([n.d_c for n in noise])
    d_f = np.array([n.d_f for n in noise])
    n_fallback = sum(1 for n in noise if n.d_f_fallback)
    print(f"instances: {len(noise)}")
    print(f"d_c: min {d_c.min():.6f} mean {d_c.mean():.6f} max {d_c.max():.6f}")
    print(f"d_f: min {d_f.min():.6f} mean {d_f.mean():.6f} max {d_f.max():.6f}")
    print(f"fine-metric fallbacks: {n_fallback}")
    return 0


def cmd_preview(args) -> int:
    file_cfg = _load_config_file(args.config)
    p0 = args.p0 if args.p0 is not None else float(file_cfg.get("p0", 0.01))
    T = args.T if args.T is not None else file_cfg.get("T")
    steps = args.steps if args.steps is not None else file_cfg.get("steps")
    if T is None or steps is None:
        print(f"{PROG} preview: --T and --steps are required", file=sys.stderr)
        return 2
    T = int(T)
    steps = int(steps)
    if T < 1:
        print(f"{PROG} preview: T must be >= 1, got {T}", file=sys.stderr)
        return 2
    if steps < 0:
        print(f"{PROG} preview: steps must be >= 0, got {steps}", file=sys.stderr)
        return 2
    seed = _resolve_seed(args, file_cfg)
    _echo(
        {
            "command": "preview",
            "noise": args.noise,
            "p0": p0,
            "T": T,
            "steps": steps,
            "seed": seed,
        }
    )
    noise = dataset_io.load_noise(args.noise)
    d_c = sorted(n.d_c for n in noise)
    d_f = sorted(n.d_f for n in noise)
    d_m = sorted(min(1.0, max(0.0, (n.d_c + n.d_f) / 2.0)) for n in noise)
    schedule = pacing.PacingSchedule(p0=p0, T=T)
    from bisect import bisect_right

    print(f"{'t':>6} {'p(t)':>10} {'coarse':>8} {'fine':>8} {'merged':>8}")
    for t in range(steps + 1):
        p = pacing.pace(t, schedule)
        print(
            f"{t:>6} {p:>10.6f} {bisect_right(d_c, p):>8} "
            f"{bisect_right(d_f, p):>8} {bisect_right(d_m, p):>8}"
        )
    return 0


def _synthetic_config(args, file_cfg: dict, seed: int) -> simulator.SyntheticConfig:
    cfg = simulator.SyntheticConfig(seed=seed)
    for name in (
        "n_train",
        "n_dev",
        "n_test",
        "feature_dim",
        "noise_fraction",
        "noise_strength",
        "jitter",
    ):
        if name in file_cfg:
            cfg = replace(cfg, **{name: file_cfg[name]})
        flag = getattr(args, name, None)
        if flag is not None:
            cfg = replace(cfg, **{name: flag})
    return cfg


def _run_config(args, file_cfg: dict, strategy: str, seed: int) -> scheduler.RunConfig:
    cfg = simulator.default_run_config(strategy, seed)
    for name in ("batch_size", "max_steps", "validate_every", "T", "p0", "patience"):
        if name in file_cfg:
            cfg = replace(cfg, **{name: file_cfg[name]})
        flag = getattr(args, name, None)
        if flag is not None:
            cfg = replace(cfg, **{name: flag})
    return cfg


def cmd_simulate(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _resolve_seed(args, file_cfg)
    if args.strategies:
        strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    elif "strategies" in file_cfg:
        strategies = list(file_cfg["strategies"])
    else:
        strategies = list(simulator.ALL_STRATEGIES)
    replicates = (
        args.replicates
        if args.replicates is not None
        else int(file_cfg.get("replicates", 10))
    )
    bin_metric = args.bin_metric or file_cfg.get("bin_metric", "coarse")
    syn = _synthetic_config(args, file_cfg, seed)
    run_cfg = _run_config(args, file_cfg, strategies[0], seed)
    _echo(
        {
            "command": "simulate",
            "out": args.out,
            "strategies": strategies,
            "replicates": replicates,
            "bin_metric": bin_metric,
            "synthetic": syn.__dict__ | {},
            "run": run_cfg.__dict__ | {},
        }
    )
    started = time.perf_counter()
    if args.traces:
        report, traces = simulator.run_experiment(
            syn, strategies, replicates, run_config=run_cfg, bin_metric=bin_metric,
            keep_traces=True,
        )
    else:
        report = simulator.run_experiment(
            syn, strategies, replicates, run_config=run_cfg, bin_metric=bin_metric
        )
        traces = {}
    elapsed = time.perf_counter() - started

    os.makedirs(args.out, exist_ok=True)
    if traces:
        trace_dir = os.path.join(args.out, "traces")
        os.makedirs(trace_dir, exist_ok=True)
        for (strategy, rep), trace in sorted(traces.items()):
            trace.to_jsonl(os.path.join(trace_dir, f"{strategy}-{rep:02d}.jsonl"))
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    text = report.to_text()
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    with open(os.path.join(args.out, "results.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["strategy", "replicate", "bin", "f1"])
        writer.writeheader()
        for row in report.to_rows():
            writer.writerow(row)
    print(text)
    print(f"wall-clock: {elapsed:.2f}s", file=sys.stderr)
    return 0


def cmd_analyze(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _resolve_seed(args, file_cfg)
    _echo({"command": "analyze", "trace": args.trace, "noise": args.noise, "seed": seed})
    trace = scheduler.RunTrace.from_jsonl(args.trace)
    if not trace.steps:
        raise M2dfError(f"trace {args.trace} contains no steps")

    counts = trace.curriculum_counts()
    total = sum(counts.values())
    print(f"strategy: {trace.strategy}   steps: {total}   train size: {trace.n_train}")
    for name in sorted(counts):
        print(f"  {name}: {counts[name]} steps")

    validations = trace.validations
    if validations:
        print("s-history (step, f1, s_coarse, s_fine):")
        for v in validations:
            sc = "unset" if v.s_coarse is None else f"{v.s_coarse:.6f}"
            sf = "unset" if v.s_fine is None else f"{v.s_fine:.6f}"
            print(f"  {v.step:>6} {v.f1:.6f} {sc} {sf}")

    if args.noise:
        noise = dataset_io.load_noise(args.noise)
        by_id = {n.id: n for n in noise}
        batch_ids = {rid for s in trace.steps for rid in s.batch}
        unknown = batch_ids - set(by_id)
        if unknown:
            raise M2dfError(f"trace references ids missing from noise file, e.g. {sorted(unknown)[0]!r}")
        ids = sorted(by_id)
        index = {rid: i for i, rid in enumerate(ids)}
        d_vals = {
            "coarse": [by_id[r].d_c for r in ids],
            "fine": [by_id[r].d_f for r in ids],
            "merged": [
                min(1.0, max(0.0, (by_id[r].d_c + by_id[r].d_f) / 2.0)) for r in ids
            ],
        }
        orders = {
            m: sorted(range(len(ids)), key=lambda i: (vals[i], ids[i]))
            for m, vals in d_vals.items()
        }
        empirical = np.zeros(len(ids))
        expected = np.zeros(len(ids))
        for s in trace.steps:
            for rid in s.batch:
                empirical[index[rid]] += 1.0
            weight = len(s.batch) / s.prefix_len
            if s.curriculum == scheduler.BASELINE:
                expected += len(s.batch) / len(ids)
            else:
                eligible_rows = orders[s.curriculum][: s.prefix_len]
                expected[eligible_rows] += weight
        rho_exp, _ = stats.spearmanr(expected, empirical)
        rho_c, _ = stats.spearmanr(d_vals["coarse"], empirical)
        rho_f, _ = stats.spearmanr(d_vals["fine"], empirical)
        print("sampling-weight correlations (spearman):")
        print(f"  expected vs empirical: {rho_exp:.4f}")
        print(f"  d_c vs empirical count: {rho_c:.4f}")
        print(f"  d_f vs empirical count: {rho_f:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Curriculum-based denoising scheduler and desk-scale simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", help="compute normalized noise scores from raw similarities")
    p.add_argument("--manifest", required=True, help="manifest.jsonl path")
    p.add_argument("--scores", required=True, help="scores.jsonl path")
    p.add_argument("--out", required=True, help="output noise.jsonl path")
    p.add_argument("--fallback", choices=["dc", "one"], default=None,
                   help="fine-metric fallback rule for instances with no aspects/objects (default dc)")
    _add_common(p)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("preview", help="tabulate the pacing schedule and eligible counts")
    p.add_argument("--noise", required=True, help="noise.jsonl path")
    p.add_argument("--p0", type=float, default=None, help="initial competence (default 0.01)")
    p.add_argument("--T", type=int, default=None, help="curriculum duration in steps")
    p.add_argument("--steps", type=int, default=None, help="last step to tabulate")
    _add_common(p)
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("simulate", help="run the synthetic denoising experiment")
    p.add_argument("--out", required=True, help="output directory for the report")
    p.add_argument("--strategies", default=None,
                   help="comma-separated strategies (default: all six plus baseline)")
    p.add_argument("--replicates", type=int, default=None, help="paired replicates (default 10)")
    p.add_argument("--bin-metric", dest="bin_metric", choices=["coarse", "fine"], default=None,
                   help="emitted metric used to bin the test set (default coarse)")
    p.add_argument("--traces", action="store_true",
                   help="also write per-run traces under <out>/traces/")
    p.add_argument("--n-train", dest="n_train", type=int, default=None)
    p.add_argument("--n-dev", dest="n_dev", type=int, default=None)
    p.add_argument("--n-test", dest="n_test", type=int, default=None)
    p.add_argument("--feature-dim", dest="feature_dim", type=int, default=None)
    p.add_argument("--noise-fraction", dest="noise_fraction", type=float, default=None)
    p.add_argument("--noise-strength", dest="noise_strength", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    p.add_argument("--validate-every", dest="validate_every", type=int, default=None)
    p.add_argument("--T", dest="T", type=int, default=None)
    p.add_argument("--p0", dest="p0", type=float, default=None)
    p.add_argument("--patience", dest="patience", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="summarize a scheduler run trace")
    p.add_argument("--trace", required=True, help="trace.jsonl path")
    p.add_argument("--noise", default=None,
                   help="noise.jsonl path, enables sampling-weight correlations")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except M2dfError as exc:
        return _fail(str(exc))
    except FileNotFoundError as exc:
        return _fail(f"{exc.filename}: no such file")
    except (ValueError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
