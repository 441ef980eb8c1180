"""End-to-end runs, seed sweeps and their reports.

A run resolves its data source (CSV plus truth file, a shipped Bayesian
network, or a linear chain SEM), executes one pipeline, scores the
skeleton against the truth and returns a :class:`RunReport`. Reports are
JSON documents; sweeps add a flat CSV summary grouped by grid point.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import statistics
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from .data import DataMatrix
from .datasets import chain_sem, load_csv, load_network, sample_bayesnet, sample_sem
from .graph import EdgeList
from .metrics import SCORING, edges_from_weights, f1_score
from .score import ScoreConfig, augmented_lagrangian
from .skeleton import MODES, SkeletonConfig, run_skeleton

FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``source`` is ``"chain"`` (linear chain SEM with ``d``, ``weight``,
    ``noise_std``, ``n``), ``"network"`` (shipped Bayesian network
    ``network`` sampled with ``n`` rows) or ``"csv"`` (``data_path`` with an
    optional ``truth_path``). Pipeline options not listed here go into
    ``skeleton`` / ``score`` as keyword overrides of the pipeline configs.
    """

    pipeline: str = "skeleton"
    mode: str = "curate"
    seed: int = 0
    source: str = "chain"
    d: int = 5
    weight: float = 2.0
    noise_std: float = 0.5
    n: int = 10_000
    network: Optional[str] = None
    data_path: Optional[str] = None
    truth_path: Optional[str] = None
    epsilon_total: float = 1.0
    skeleton: Dict[str, Any] = field(default_factory=dict)
    score: Dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if self.pipeline not in ("skeleton", "score"):
            raise ConfigError(f"unknown pipeline {self.pipeline!r}")
        if self.pipeline == "skeleton" and self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        if self.source not in ("chain", "network", "csv"):
            raise ConfigError(f"unknown source {self.source!r}")
        if self.source == "csv" and not self.data_path:
            raise ConfigError("source 'csv' needs data_path")
        if self.source == "network" and not self.network:
            raise ConfigError("source 'network' needs a network name")
        known = {f.name for f in fields(SkeletonConfig)}
        bad = set(self.skeleton) - known
        if bad:
            raise ConfigError(f"unknown skeleton options: {sorted(bad)}")
        known = {f.name for f in fields(ScoreConfig)}
        bad = set(self.score) - known
        if bad:
            raise ConfigError(f"unknown score options: {sorted(bad)}")

    def skeleton_config(self) -> SkeletonConfig:
        opts = {"epsilon_total": self.epsilon_total, "seed": self.seed, **self.skeleton}
        try:
            return SkeletonConfig(**opts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def score_config(self) -> ScoreConfig:
        opts = {"epsilon_total": self.epsilon_total, "seed": self.seed, **self.score}
        return ScoreConfig(**opts)


@dataclass
class RunReport:
    mode: str
    pipeline: str
    seed: int
    config: Dict[str, Any]
    names: List[str]
    edges: List[Tuple[str, str]]
    ledger: Dict[str, Any]
    epsilon_total_spent: float
    delta_total_spent: float
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    ci_test_count: Dict[str, int]
    wall_time: float
    truncated: bool = False
    status: str = "ok"
    error: Optional[str] = None
    details: Dict[str, Any] = field(default_factory=dict)
    scoring: str = SCORING
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, include_wall_time: bool = True) -> str:
        obj = self.to_dict()
        if not include_wall_time:
            obj.pop("wall_time")
        return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False, default=_jsonable)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if hasattr(x, "tolist"):
        return x.tolist()
    raise TypeError(f"not serialisable: {type(x).__name__}")


def resolve_data(cfg: ExperimentConfig) -> Tuple[DataMatrix, Optional[EdgeList]]:
    if cfg.source == "chain":
        return sample_sem(chain_sem(cfg.d, cfg.weight, cfg.noise_std, cfg.n, cfg.seed))
    if cfg.source == "network":
        return sample_bayesnet(load_network(cfg.network), cfg.n, cfg.seed)
    data = load_csv(cfg.data_path)
    truth = EdgeList.load(cfg.truth_path) if cfg.truth_path else None
    return data, truth


def _clean_floats(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_floats(v) for v in obj]
    return obj


def run_experiment(cfg: ExperimentConfig, data: Optional[DataMatrix] = None, truth: Optional[EdgeList] = None) -> RunReport:
    """Run one pipeline end to end; pass ``data``/``truth`` to skip source resolution."""
    cfg.validate()
    if data is None:
        data, truth = resolve_data(cfg)
    echo = _clean_floats(asdict(cfg))

    if cfg.pipeline == "skeleton":
        res = run_skeleton(data, cfg.skeleton_config(), cfg.mode)
        estimate = EdgeList.from_graph(res.graph, data.names)
        ledger = res.ledger
        counts = {str(k): v for k, v in sorted(res.ci_test_count.items())}
        details = {
            "sepsets": res.sepsets.to_list(),
            "orders": _clean_floats([asdict(o) for o in res.orders]),
            "notes": res.notes,
        }
        truncated, wall, mode = res.truncated, res.wall_time, cfg.mode
    else:
        start = time.perf_counter()
        sres = augmented_lagrangian(data, cfg.score_config())
        wall = time.perf_counter() - start
        estimate = edges_from_weights(sres.W, data.names)
        ledger = sres.ledger
        counts = {}
        details = {
            "W": sres.W.tolist(),
            "omega_used": sres.omega_used,
            "h_history": sres.h_history,
            "rounds": sres.rounds,
            "iterations": sres.iterations,
            "stop_reason": sres.stop_reason,
        }
        truncated, mode = sres.truncated, "score"

    if truth is not None:
        precision, recall, f1 = f1_score(estimate, truth)
    else:
        precision = recall = f1 = None
    return RunReport(
        mode=mode,
        pipeline=cfg.pipeline,
        seed=cfg.seed,
        config=echo,
        names=list(data.names),
        edges=[(data.names[a], data.names[b]) for a, b in estimate.pairs],
        ledger=_clean_floats(ledger.to_dict()),
        epsilon_total_spent=ledger.epsilon_spent,
        delta_total_spent=ledger.delta_spent,
        precision=precision,
        recall=recall,
        f1=f1,
        ci_test_count=counts,
        wall_time=wall,
        truncated=truncated,
        details=details,
    )


def _failure(cfg: ExperimentConfig, exc: BaseException) -> RunReport:
    return RunReport(
        mode=cfg.mode if cfg.pipeline == "skeleton" else "score",
        pipeline=cfg.pipeline,
        seed=cfg.seed,
        config=_clean_floats(asdict(cfg)),
        names=[],
        edges=[],
        ledger={},
        epsilon_total_spent=0.0,
        delta_total_spent=0.0,
        precision=None,
        recall=None,
        f1=None,
        ci_test_count={},
        wall_time=0.0,
        status="failed",
        error="".join(traceback.format_exception_only(type(exc), exc)).strip(),
    )


def _safe_run(cfg: ExperimentConfig) -> RunReport:
    try:
        return run_experiment(cfg)
    except Exception as exc:  # a failed grid point must not stop the sweep
        return _failure(cfg, exc)


def expand_grid(base: ExperimentConfig, grid: Dict[str, Sequence], seeds: Iterable[int]) -> List[ExperimentConfig]:
    keys = sorted(grid)
    out = []
    for values in itertools.product(*(grid[k] for k in keys)):
        point = dict(zip(keys, values))
        for seed in seeds:
            out.append(_apply(base, {**point, "seed": seed}))
    return out


def _apply(base: ExperimentConfig, overrides: Dict[str, Any]) -> ExperimentConfig:
    top = {f.name for f in fields(ExperimentConfig)}
    direct = {k: v for k, v in overrides.items() if k in top}
    cfg = replace(base, **direct, skeleton=dict(base.skeleton), score=dict(base.score))
    for k, v in overrides.items():
        if k in top:
            continue
        prefix, _, name = k.partition(".")
        if prefix in ("skeleton", "score") and name:
            getattr(cfg, prefix)[name] = v
        else:
            raise ConfigError(f"unknown grid key {k!r}")
    return cfg


def sweep(
    base: ExperimentConfig,
    grid: Dict[str, Sequence],
    seeds: Iterable[int],
    workers: int = 1,
) -> List[RunReport]:
    """One report per (grid point, seed); failures become ``status='failed'`` records.

    Grid keys are ``ExperimentConfig`` fields or ``skeleton.<opt>`` /
    ``score.<opt>`` pipeline overrides.
    """
    configs = expand_grid(base, grid, list(seeds))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_safe_run, configs))
    return [_safe_run(c) for c in configs]


def _grid_value(report: RunReport, key: str):
    prefix, _, name = key.partition(".")
    if name and prefix in ("skeleton", "score"):
        return report.config[prefix].get(name)
    return report.config.get(key)


def summarize(reports: Sequence[RunReport], keys: Sequence[str]) -> List[Dict[str, Any]]:
    """Mean and standard deviation per grid point (population std over seeds)."""
    groups: Dict[tuple, List[RunReport]] = {}
    for r in reports:
        groups.setdefault(tuple(_grid_value(r, k) for k in keys), []).append(r)
    rows = []
    for point, members in groups.items():
        ok = [m for m in members if m.status == "ok"]
        row: Dict[str, Any] = {"format_version": FORMAT_VERSION, "scoring": SCORING}
        row.update(dict(zip(keys, point)))
        row["runs"] = len(members)
        row["failures"] = len(members) - len(ok)
        for metric in ("f1", "precision", "recall", "epsilon_total_spent"):
            vals = [getattr(m, metric) for m in ok if getattr(m, metric) is not None]
            row[f"{metric}_mean"] = statistics.fmean(vals) if vals else None
            row[f"{metric}_std"] = statistics.pstdev(vals) if vals else None
        rows.append(row)
    return rows


def summary_csv(rows: Sequence[Dict[str, Any]]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: "" if v is None else v for k, v in row.items()})
    return buf.getvalue()
