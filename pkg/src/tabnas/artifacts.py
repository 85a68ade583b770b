"""Run directories and CSV exports of run artifacts."""

from __future__ import annotations

import csv
import shutil
from pathlib import Path
from typing import Iterable, Sequence

from .errors import TabNASError
from .search import RunLog
from .space import ResourceConstraint, SearchSpace, enumerate_feasible, param_count


class RunDirExists(TabNASError):
    """The run directory already holds artifacts and overwriting was not requested."""


def prepare_run_dir(root: str | Path, name: str, force: bool = False) -> Path:
    path = Path(root) / name
    if path.exists() and any(path.iterdir()):
        if not force:
            raise RunDirExists(f"{path} already exists; pass --force to overwrite")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def export_feasible(space: SearchSpace, constraint: ResourceConstraint, path: str | Path) -> int:
    """Feasible architectures with their parameter counts; returns the row count."""
    archs = enumerate_feasible(space, constraint)
    header = [f"size_{i + 1}" for i in range(space.num_layers)] + ["param_count"]
    write_csv(path, header, ([*a, param_count(a, space)] for a in archs))
    return len(archs)


def export_selections(archs: Sequence[Sequence[int]], space: SearchSpace, path: str | Path) -> None:
    header = [f"size_{i + 1}" for i in range(space.num_layers)] + ["param_count"]
    write_csv(path, header, ([*a, param_count(a, space)] for a in archs))


def probability_columns(space_dict: dict) -> list[str]:
    return [f"p_layer{i + 1}_{s}" for i, layer in enumerate(space_dict["layers"]) for s in layer]


def export_probabilities(log: RunLog, path: str | Path) -> int:
    """Flatten a run log into one CSV row per step for plotting.

    Columns: step, phase, P(V) exact and estimated, the number of skipped
    controller steps so far, then one column per (layer, size) probability.
    """
    cols = probability_columns(log.header["space"])
    header = ["step", "phase", "pv_exact", "pv_estimate", "skipped_total"] + cols
    rows = []
    for r in log.records:
        probs = [p for row in r.get("probs", []) for p in row] or [""] * len(cols)
        sk = r.get("skips", {})
        rows.append([r["step"], r["phase"], _blank(r.get("pv_exact")), _blank(r.get("pv_estimate")),
                     sk.get("infeasible_sample", 0) + sk.get("zero_pv_estimate", 0), *probs])
    write_csv(path, header, rows)
    return len(rows)


def _blank(v):
    return "" if v is None else v
