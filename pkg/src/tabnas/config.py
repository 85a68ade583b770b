"""JSON run configuration: parsing, validation, serialization and loading.

A run config is a JSON object::

    {
      "search_space": {"layers": [[2, 3, 4], [2, 3, 4]], "input_dim": 2,
                       "output_dim": 1, "param_limit": 25},
      "reward": {"kind": "rejection", "beta": null, "mc_samples": 1024,
                 "pv_mode": "auto", "proposal": "policy"},
      "evaluation": {"kind": "oracle", "table": "toy", "noise_sd": 0.0},
      "rl_learning_rate": 0.1, "epochs": 5, "steps_per_epoch": 100,
      "warmup_fraction": 0.0, "seed": 0, ...
    }

``param_limit`` is required; use the string ``"unbounded"`` to disable the
constraint.  ``evaluation.table`` is ``"toy"``, ``"planted"`` or the path of a
loss-table CSV; SuperNet evaluation takes ``evaluation.dataset``, either
``{"path": ..., "label_column": ...}`` or ``{"generator": "teacher", ...}``.
Relative paths resolve against the config file's directory.  Unknown keys
are rejected so that typos do not silently fall back to defaults.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .data import Dataset, load_csv, teacher_classification
from .errors import ConfigError, ValidationError
from .oracle import LossTable, import_table, planted_benchmark, toy_example
from .rewards import RewardSpec
from .search import SearchConfig, SelectionConfig
from .space import ResourceConstraint, SearchSpace
from .supernet import TrainHyper, WarmupSchedule


@dataclass(frozen=True)
class EvaluationSpec:
    kind: str = "oracle"
    table: Optional[str] = None
    noise_sd: float = 0.0
    dataset: Optional[dict] = None


@dataclass(frozen=True)
class RunConfig:
    space: SearchSpace
    param_limit: float
    reward: RewardSpec = RewardSpec()
    evaluation: EvaluationSpec = EvaluationSpec(table="toy")
    train: TrainHyper = TrainHyper()
    selection: SelectionConfig = SelectionConfig()
    rl_learning_rate: float = 0.1
    epochs: int = 20
    steps_per_epoch: int = 100
    warmup_fraction: float = 0.25
    replicas: int = 1
    skip_infeasible_weight_updates: bool = False
    seed: int = 0
    baseline_decay: float = 0.9
    baseline_tracks: str = "quality"
    rl_eval: str = "minibatch"
    max_failures: int = 10
    base_dir: str = field(default=".", compare=False)

    @property
    def constraint(self) -> ResourceConstraint:
        return ResourceConstraint(self.param_limit)


_SCALARS = ("rl_learning_rate", "epochs", "steps_per_epoch", "warmup_fraction", "replicas",
            "skip_infeasible_weight_updates", "seed", "baseline_decay", "baseline_tracks", "rl_eval",
            "max_failures")
_SCALAR_TYPES = {
    "rl_learning_rate": (int, float), "epochs": int, "steps_per_epoch": int,
    "warmup_fraction": (int, float), "replicas": int, "skip_infeasible_weight_updates": bool,
    "seed": int, "baseline_decay": (int, float), "baseline_tracks": str, "rl_eval": str,
    "max_failures": int,
}
_TOP_KEYS = {"search_space", "reward", "evaluation", "train", "selection", *_SCALARS}
_SPACE_KEYS = {"layers", "input_dim", "output_dim", "param_limit"}
_DATASET_KEYS = {"path", "label_column", "split_ratio", "seed", "standardize",
                 "generator", "n", "d", "hidden", "label_noise"}


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"missing required field {key!r} in {where}", field=key)
    return obj[key]


def _check_keys(obj: Any, allowed, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object", field=where)
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ConfigError(f"unknown field {extra[0]!r} in {where}", field=extra[0])
    return obj


def _build(cls, obj: Any, where: str):
    names = {f.name for f in fields(cls)}
    _check_keys(obj, names, where)
    try:
        return cls(**obj)
    except ConfigError:
        raise
    except (ValidationError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}", field=where) from None


def _parse_limit(value) -> float:
    if value == "unbounded":
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not float(value).is_integer() \
            or value < 0:
        raise ConfigError("param_limit must be a nonnegative integer or \"unbounded\"", field="param_limit")
    return int(value)


def parse_config(obj: dict, base_dir: str | Path = ".") -> RunConfig:
    """Validate a decoded JSON config and fill in defaults."""
    _check_keys(obj, _TOP_KEYS, "config")
    ss = _check_keys(_require(obj, "search_space", "config"), _SPACE_KEYS, "search_space")
    try:
        space = SearchSpace(tuple(tuple(l) for l in _require(ss, "layers", "search_space")),
                            _require(ss, "input_dim", "search_space"),
                            _require(ss, "output_dim", "search_space"))
    except ConfigError:
        raise
    except (ValidationError, TypeError) as exc:
        raise ConfigError(f"search_space: {exc}", field="search_space") from None
    limit = _parse_limit(_require(ss, "param_limit", "search_space"))

    ev = dict(obj.get("evaluation", {"kind": "oracle", "table": "toy"}))
    evaluation = _build(EvaluationSpec, ev, "evaluation")
    if evaluation.kind not in ("oracle", "supernet"):
        raise ConfigError("evaluation.kind must be 'oracle' or 'supernet'", field="kind")
    if evaluation.kind == "oracle" and not evaluation.table:
        raise ConfigError("oracle evaluation needs 'table'", field="table")
    if evaluation.kind == "supernet":
        if not evaluation.dataset:
            raise ConfigError("SuperNet evaluation needs 'dataset'", field="dataset")
        _check_keys(evaluation.dataset, _DATASET_KEYS, "dataset")
    if evaluation.noise_sd < 0:
        raise ConfigError("noise_sd must be nonnegative", field="noise_sd")

    kwargs = {k: obj[k] for k in _SCALARS if k in obj}
    for k, v in kwargs.items():
        want = _SCALAR_TYPES[k]
        ok = isinstance(v, want) and not (want is not bool and isinstance(v, bool))
        if not ok:
            raise ConfigError(f"{k} must be of type {want.__name__ if isinstance(want, type) else 'number'}",
                              field=k)
    cfg = RunConfig(
        space=space,
        param_limit=limit,
        reward=_build(RewardSpec, obj.get("reward", {}), "reward"),
        evaluation=evaluation,
        train=_build(TrainHyper, obj.get("train", {}), "train"),
        selection=_build(SelectionConfig, obj.get("selection", {}), "selection"),
        base_dir=str(base_dir),
        **kwargs,
    )
    try:
        WarmupSchedule(cfg.warmup_fraction)
    except ValidationError as exc:
        raise ConfigError(str(exc), field="warmup_fraction") from None
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    """Inverse of :func:`parse_config` (every default written out)."""
    space = cfg.space.to_dict()
    space["param_limit"] = "unbounded" if cfg.param_limit == math.inf else int(cfg.param_limit)
    out = {"search_space": space, "reward": asdict(cfg.reward), "evaluation": asdict(cfg.evaluation),
           "train": asdict(cfg.train), "selection": asdict(cfg.selection)}
    for k in _SCALARS:
        out[k] = getattr(cfg, k)
    return out


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", field=None) from None
    return parse_config(obj, base_dir=path.parent)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)


def config_hash(cfg: RunConfig) -> str:
    """Short content hash of the config, seed excluded."""
    d = config_to_dict(cfg)
    d.pop("seed")
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


def run_dir_name(cfg: RunConfig) -> str:
    return f"{config_hash(cfg)}-seed{cfg.seed}"


def _resolve(cfg: RunConfig, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else Path(cfg.base_dir) / path


def load_table(cfg: RunConfig) -> LossTable:
    name = cfg.evaluation.table
    noise = cfg.evaluation.noise_sd
    if name == "toy":
        table, _ = toy_example(noise_sd=noise)
    elif name == "planted":
        table, _, _ = planted_benchmark(noise_sd=noise)
    else:
        table = import_table(_resolve(cfg, name), cfg.space, noise_sd=noise)
    if table.space != cfg.space:
        raise ConfigError(f"table {name!r} does not match search_space", field="table")
    return table


def load_dataset(cfg: RunConfig) -> Dataset:
    spec = dict(cfg.evaluation.dataset or {})
    if spec.get("generator") == "teacher":
        return teacher_classification(n=spec.get("n", 5000), d=spec.get("d", 10),
                                      hidden=spec.get("hidden", 64), seed=spec.get("seed", 0),
                                      label_noise=spec.get("label_noise", 0.0),
                                      split_ratio=spec.get("split_ratio", 0.8))
    if "generator" in spec:
        raise ConfigError(f"unknown dataset generator {spec['generator']!r}", field="generator")
    path = _require(spec, "path", "dataset")
    label = _require(spec, "label_column", "dataset")
    return load_csv(_resolve(cfg, path), label, split_ratio=spec.get("split_ratio", 0.8),
                    seed=spec.get("seed", 0), standardize=spec.get("standardize", False))


def build_search_config(cfg: RunConfig, **overrides) -> SearchConfig:
    """Load the table or dataset a run config points to and assemble a SearchConfig."""
    ev = cfg.evaluation
    kwargs = dict(
        space=cfg.space, constraint=cfg.constraint, reward=cfg.reward,
        rl_learning_rate=cfg.rl_learning_rate, epochs=cfg.epochs, steps_per_epoch=cfg.steps_per_epoch,
        warmup=WarmupSchedule(cfg.warmup_fraction), train_hyper=cfg.train, evaluation=ev.kind,
        replicas=cfg.replicas, skip_infeasible_weight_updates=cfg.skip_infeasible_weight_updates,
        seed=cfg.seed, selection=cfg.selection, baseline_decay=cfg.baseline_decay,
        baseline_tracks=cfg.baseline_tracks, rl_eval=cfg.rl_eval, max_failures=cfg.max_failures,
    )
    if ev.kind == "oracle":
        kwargs["table"] = load_table(cfg)
    else:
        kwargs["dataset"] = load_dataset(cfg)
    kwargs.update(overrides)
    return SearchConfig(**kwargs)
