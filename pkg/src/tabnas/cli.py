"""Command-line entry point: ``tabnas <command> ...``.

Failures print one JSON object on stderr, e.g.
``{"error": "ConfigError", "field": "param_limit", "message": "..."}``,
and exit with status 2 for invalid input or 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Callable, Sequence

from .artifacts import (
    export_feasible,
    export_probabilities,
    export_selections,
    prepare_run_dir,
    write_csv,
)
from .compare import compare_job, compare_jobs, most_probable_feasible
from .config import build_search_config, dump_config, load_config, load_dataset, run_dir_name
from .errors import ConfigError, TabNASError, ValidationError
from .oracle import toy_example
from .rewards import RewardSpec
from .search import RunLog, SearchConfig, run_search
from .space import feasible_indices, param_count, pareto_front
from .supernet import WarmupSchedule, standalone_train


def parallel_map(fn: Callable, items: Sequence, threads: int) -> list:
    """``map`` over worker processes when ``threads > 1``; results keep input order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _parse_ints(text: str) -> list[int]:
    """Nonnegative integers from ``"1,3,5"`` or ranges like ``"0-9"``."""
    out = []
    try:
        for part in text.split(","):
            a, _, b = part.strip().partition("-")
            out.extend(range(int(a), int(b) + 1) if b else [int(a)])
    except ValueError:
        raise ValidationError(f"cannot parse integer list {text!r}") from None
    return out


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


# -- commands -----------------------------------------------------------------

def cmd_search(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    search_cfg = build_search_config(cfg)
    out = prepare_run_dir(args.out, run_dir_name(cfg), force=args.force)
    (out / "config.json").write_text(dump_config(cfg) + "\n", encoding="utf-8")
    _, log = run_search(search_cfg)
    log.write(out / "runlog.jsonl")
    export_selections(log.footer["selected"], cfg.space, out / "selections.csv")
    export_probabilities(log, out / "probabilities.csv")
    print(json.dumps({"run_dir": str(out), "selected": log.footer["selected"],
                      "selection_failed": log.footer["selection_failed"]}))
    return 0


def cmd_enumerate(args) -> int:
    cfg = load_config(args.config)
    n = export_feasible(cfg.space, cfg.constraint, args.out)
    print(json.dumps({"out": str(args.out), "feasible": n}))
    return 0


def cmd_pareto(args) -> int:
    with open(args.input, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("param_count", "loss"):
            if col not in header:
                raise ValidationError(f"input CSV needs a {col!r} column")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append((int(row["param_count"]), float(row["loss"]), row))
            except (TypeError, ValueError):
                raise ValidationError(f"line {lineno}: cannot parse param_count/loss") from None
    front = set(pareto_front([(p, l) for p, l, _ in rows]))
    kept, seen = [], set()
    for p, l, row in sorted(rows, key=lambda r: (r[0], r[1])):
        if (p, l) in front and (p, l) not in seen:
            seen.add((p, l))
            kept.append([row[c] for c in header])
    write_csv(args.out, header, kept)
    print(json.dumps({"out": str(args.out), "front_size": len(kept)}))
    return 0


TOY_RUNS = (("rejection", None), ("abs", -1.0), ("abs", -2.0))


def _toy_job(job):
    kind, beta, seed, steps, eta = job
    table, constraint = toy_example()
    cfg = SearchConfig(table.space, constraint, RewardSpec(kind, beta), eta, epochs=1, steps_per_epoch=steps,
                       warmup=WarmupSchedule(0.0), table=table, seed=seed)
    _, log = run_search(cfg)
    return log


def cmd_toy(args) -> int:
    if args.steps < 1:
        raise ValidationError("--steps must be >= 1")
    table, constraint = toy_example()
    space = table.space
    settings = {"seed": args.seed, "steps": args.steps, "eta": args.eta, "abs_eta": args.abs_eta}
    digest = hashlib.sha256(json.dumps(settings, sort_keys=True).encode()).hexdigest()[:12]
    out = prepare_run_dir(args.out, f"toy-{digest}-seed{args.seed}", force=args.force)
    jobs = [(k, b, args.seed, args.steps, args.eta if k == "rejection" else args.abs_eta) for k, b in TOY_RUNS]
    logs = parallel_map(_toy_job, jobs, args.threads)
    feasible = feasible_indices(space, constraint)
    summary = {"settings": settings, "runs": {}}
    for (kind, beta), log in zip(TOY_RUNS, logs):
        name = kind if beta is None else f"{kind}_beta{beta:g}"
        export_probabilities(log, out / f"{name}.csv")
        probs = log.footer["final_probabilities"]
        mp = log.footer["final_most_probable"]
        summary["runs"][name] = {
            "most_probable": mp,
            "most_probable_is_feasible": param_count(mp, space) <= constraint.limit,
            "most_probable_feasible": list(most_probable_feasible(probs, space, feasible)),
            "selected": log.footer["selected"],
        }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps({"run_dir": str(out), **{k: v["most_probable"] for k, v in summary["runs"].items()}}))
    return 0


def cmd_standalone(args) -> int:
    cfg = load_config(args.config)
    if cfg.evaluation.kind != "supernet":
        raise ConfigError("standalone training needs a SuperNet-evaluation config with a dataset",
                          field="evaluation")
    arch = cfg.space.validate(_parse_ints(args.arch))
    dataset = load_dataset(cfg)
    loss, _ = standalone_train(arch, dataset, cfg.train, seed=cfg.seed if args.seed is None else args.seed)
    print(json.dumps({"arch": list(arch), "param_count": param_count(arch, cfg.space),
                      "validation_loss": loss}))
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    if cfg.evaluation.kind != "oracle":
        raise ConfigError("compare runs on an oracle loss table", field="evaluation")
    search_cfg = replace(build_search_config(cfg), log_probabilities=True)
    seeds = _parse_ints(args.seeds)
    betas = _parse_floats(args.betas)
    out = prepare_run_dir(args.out, f"compare-{run_dir_name(cfg)}", force=args.force)
    jobs = compare_jobs(search_cfg, seeds, betas, points=args.points)
    rows = [row for part in parallel_map(compare_job, jobs, args.threads) for row in part]
    write_csv(out / "loss_vs_budget.csv", ["method", "seed", "budget", "loss"], rows)
    _, best = search_cfg.table.feasible_optimum(search_cfg.constraint)
    final: dict = {}
    for method, seed, budget, loss in rows:
        final[(method, seed)] = loss  # rows are in budget order per job
    summary = {}
    for (method, _), loss in final.items():
        s = summary.setdefault(method, {"runs": 0, "within_noise": 0})
        s["runs"] += 1
        s["within_noise"] += int(loss <= best + search_cfg.table.noise_sd)
    (out / "summary.json").write_text(json.dumps({"feasible_optimum_loss": best, "methods": summary},
                                                 indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps({"run_dir": str(out), "rows": len(rows)}))
    return 0


def cmd_export_plots(args) -> int:
    log = RunLog.read(args.runlog)
    n = export_probabilities(log, args.out)
    print(json.dumps({"out": str(args.out), "rows": n}))
    return 0


# -- argument parsing -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker processes for independent runs")

    p = argparse.ArgumentParser(prog="tabnas", description="Resource-constrained architecture search.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("search", parents=[common], help="run a search from a JSON config")
    s.add_argument("config")
    s.add_argument("--out", required=True, help="root directory for run directories")
    s.add_argument("--seed", type=int)
    s.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("enumerate", parents=[common], help="list feasible architectures")
    s.add_argument("config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_enumerate)

    s = sub.add_parser("pareto", parents=[common], help="Pareto front of evaluated architectures")
    s.add_argument("input", help="CSV with param_count and loss columns")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pareto)

    s = sub.add_parser("toy", parents=[common], help="rejection vs. abs reward on the 3x3 toy space")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--steps", type=int, default=500)
    s.add_argument("--eta", type=float, default=0.1, help="controller learning rate (rejection)")
    s.add_argument("--abs-eta", type=float, default=0.1, help="controller learning rate (abs reward)")
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_toy)

    s = sub.add_parser("standalone", parents=[common], help="train one architecture from scratch")
    s.add_argument("config")
    s.add_argument("--arch", required=True, help="comma-separated layer sizes")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_standalone)

    s = sub.add_parser("compare", parents=[common], help="controller vs. random and evolutionary search")
    s.add_argument("config")
    s.add_argument("--seeds", default="0-4", help="e.g. 0-9 or 1,3,5")
    s.add_argument("--betas", default="-0.5,-1,-2", help="abs-reward cost weights")
    s.add_argument("--points", type=int, default=10, help="budget checkpoints per run")
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("export-plots", parents=[common], help="flatten a run log into a CSV")
    s.add_argument("runlog")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export_plots)
    return p


def _report(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    field = getattr(exc, "field", None)
    if field is not None:
        payload["field"] = field
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        return _report(ValidationError("--threads must be >= 1"), 2)
    try:
        return args.func(args)
    except (ValidationError, json.JSONDecodeError) as exc:
        return _report(exc, 2)
    except (TabNASError, OSError) as exc:
        return _report(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
