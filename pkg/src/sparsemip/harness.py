"""Experiment orchestration: instance grids, direct-vs-surrogate runs, summaries.

A study walks a grid of network shapes and seeds, solves each instance both
directly and through every configured pruned surrogate, and records one CSV
row per (instance, pruning configuration) carrying both sides' outcomes.
Wall-time columns are measured quantities and are the only CSV content that
varies between identical runs; everything else replays byte-for-byte for a
fixed config (single worker or not, since rows are sorted before writing).

Verification comparisons are on time-to-adversarial (finding beats not
finding; both-none-found is a tie); maximization comparisons are on the best
dense value with a 1e-9 tie band.  Ties are excluded from percentages.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from itertools import product
from pathlib import Path
from typing import Optional

import numpy as np

from .network import (
    Dataset,
    accuracy,
    forward,
    load_idx_dataset,
    make_synthetic_classification,
    random_init,
    train,
)
from .pruning import FinetuneSpec, PruningSpec, prune
from .solver import SolverConfig
from .surrogate import (
    VerificationInstance,
    maximize_direct,
    maximize_via_surrogate,
    verify_direct,
    verify_via_surrogate,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunRecord",
    "StudyResult",
    "load_config",
    "run_verification_study",
    "run_maximization_study",
    "summarize",
    "emit_scatter",
    "load_scatter",
    "write_records",
    "load_records",
    "DEFAULT_GROUP_BY",
]

logger = logging.getLogger(__name__)

_EPS_REFERENCE_INPUT = 784  # epsilon scaling anchor: full-size image input

DEFAULT_GROUP_BY = ("granularity", "method", "rate", "finetune")


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


@dataclass
class ExperimentConfig:
    """Everything a study needs; loadable from a TOML document."""

    study: str  # "verification" | "maximization"
    input_sizes: list
    depths: list  # hidden ReLU layers per network
    widths: list
    seeds: list
    rates: list
    methods: list = field(default_factory=lambda: ["magnitude"])
    granularities: list = field(default_factory=lambda: ["unstructured"])
    finetune: list = field(default_factory=lambda: [False])
    finetune_rounds: int = 5
    finetune_epochs: int = 5
    eps_range: tuple = (4.5, 5.5)
    scale_eps_by_input: bool = True
    time_limit: float = 300.0
    pool_size: int = 1000
    workers: int = 1
    classes: int = 3
    samples: int = 300
    train_epochs: int = 20
    learning_rate: float = 0.1
    batch_size: int = 32
    data_source: str = "synthetic"  # "synthetic" | "idx"
    idx_images: Optional[str] = None
    idx_labels: Optional[str] = None
    downscale: Optional[int] = None
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.study not in ("verification", "maximization"):
            raise ConfigError(f"unknown study {self.study!r}")
        for name in ("input_sizes", "depths", "widths", "seeds", "rates"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be a non-empty list")
        for rate in self.rates:
            if not (0.0 <= rate < 1.0):
                raise ConfigError(f"pruning rate {rate} outside [0, 1)")
        for m in self.methods:
            if m not in ("magnitude", "random"):
                raise ConfigError(f"unknown pruning method {m!r}")
        for g in self.granularities:
            if g not in ("unstructured", "structured"):
                raise ConfigError(f"unknown granularity {g!r}")
        if self.study == "maximization" and any(self.finetune):
            raise ConfigError(
                "maximization studies use randomly initialized networks; "
                "there is no dataset to finetune on"
            )
        if len(self.eps_range) != 2 or self.eps_range[0] > self.eps_range[1]:
            raise ConfigError("eps_range must be [lo, hi] with lo <= hi")
        if self.data_source not in ("synthetic", "idx"):
            raise ConfigError(f"unknown data source {self.data_source!r}")
        if self.data_source == "idx" and not (self.idx_images and self.idx_labels):
            raise ConfigError("idx data source needs idx_images and idx_labels paths")
        if self.time_limit <= 0 or self.workers < 1:
            raise ConfigError("time_limit must be positive, workers >= 1")

    def pruning_specs(self):
        """Deterministic order: granularity, method, rate, finetune flag."""
        specs = []
        for gran, method, rate, ft in product(
            self.granularities, self.methods, self.rates, self.finetune
        ):
            finetune = (
                FinetuneSpec(
                    self.finetune_rounds,
                    self.finetune_epochs,
                    self.learning_rate,
                    self.batch_size,
                )
                if ft
                else None
            )
            specs.append(PruningSpec(method, gran, rate, finetune))
        return specs


def read_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    """Read a TOML study configuration."""
    doc = read_toml(path)

    def section(name):
        sub = doc.get(name, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"[{name}] must be a table")
        return sub

    grid = section("grid")
    pruning = section("pruning")
    data = section("data")
    training = section("train")
    verify = section("verify")
    solver = section("solver")
    try:
        return ExperimentConfig(
            study=doc.get("study", "verification"),
            output_dir=doc.get("output_dir"),
            input_sizes=list(grid.get("input_sizes", [])),
            depths=list(grid.get("depths", [])),
            widths=list(grid.get("widths", [])),
            seeds=list(grid.get("seeds", [])),
            rates=list(pruning.get("rates", [])),
            methods=list(pruning.get("methods", ["magnitude"])),
            granularities=list(pruning.get("granularities", ["unstructured"])),
            finetune=list(pruning.get("finetune", [False])),
            finetune_rounds=int(pruning.get("rounds", 5)),
            finetune_epochs=int(pruning.get("epochs_per_round", 5)),
            eps_range=tuple(verify.get("eps_range", (4.5, 5.5))),
            scale_eps_by_input=bool(verify.get("scale_eps_by_input", True)),
            time_limit=float(solver.get("time_limit", 300.0)),
            pool_size=int(solver.get("pool_size", 1000)),
            workers=int(solver.get("workers", 1)),
            classes=int(data.get("classes", 3)),
            samples=int(data.get("samples", 300)),
            data_source=data.get("source", "synthetic"),
            idx_images=data.get("idx_images"),
            idx_labels=data.get("idx_labels"),
            downscale=data.get("downscale"),
            train_epochs=int(training.get("epochs", 20)),
            learning_rate=float(training.get("learning_rate", 0.1)),
            batch_size=int(training.get("batch_size", 32)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


@dataclass
class RunRecord:
    """One instance under one pruning configuration, both solve routes."""

    instance_id: str
    study: str
    n_inputs: int
    depth: int
    width: int
    seed: int
    eps: Optional[float]
    j: Optional[int]
    j_prime: Optional[int]
    dense_accuracy: Optional[float]
    pruned_accuracy: Optional[float]
    method: str
    granularity: str
    rate: float
    finetune: bool
    finetune_seconds: float
    direct_outcome: str
    direct_status: str
    direct_objective: Optional[float]
    direct_seconds: float
    direct_incumbents: int
    surrogate_outcome: str
    surrogate_status: str
    surrogate_objective: Optional[float]
    surrogate_seconds: float
    surrogate_incumbents: int


RECORD_COLUMNS = [f.name for f in fields(RunRecord)]
TIMING_COLUMNS = ("finetune_seconds", "direct_seconds", "surrogate_seconds")

_INT_FIELDS = {"n_inputs", "depth", "width", "seed", "j", "j_prime",
               "direct_incumbents", "surrogate_incumbents"}
_FLOAT_FIELDS = {"eps", "dense_accuracy", "pruned_accuracy", "rate",
                 "finetune_seconds", "direct_objective", "direct_seconds",
                 "surrogate_objective", "surrogate_seconds"}


@dataclass
class StudyResult:
    records: list
    skipped: list  # (instance_id, reason)
    paths: dict  # name -> written file path


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _uncell(name: str, text: str):
    if text == "":
        return None
    if name == "finetune":
        return text == "true"
    if name in _INT_FIELDS:
        return int(text)
    if name in _FLOAT_FIELDS:
        return float(text)
    return text


def write_records(records, path) -> None:
    """RFC-4180 CSV with the fixed record schema, sorted for reproducibility."""
    ordered = sorted(records, key=lambda r: (r.instance_id, r.granularity, r.method, r.rate, r.finetune))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for rec in ordered:
            writer.writerow([_cell(getattr(rec, col)) for col in RECORD_COLUMNS])


def load_records(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            RunRecord(**{k: _uncell(k, v) for k, v in row.items()})
            for row in reader
        ]


# -- studies -------------------------------------------------------------------


def build_dataset(
    n_inputs: int,
    source: str = "synthetic",
    classes: int = 3,
    samples: int = 300,
    idx_images=None,
    idx_labels=None,
    downscale=None,
) -> Dataset:
    """Dataset for a given input size; synthetic blobs are seeded by size."""
    if source == "idx":
        data = load_idx_dataset(idx_images, idx_labels, samples, downscale)
        if data.X.shape[1] != n_inputs:
            raise ConfigError(
                f"idx data provides {data.X.shape[1]} inputs, expected {n_inputs}"
            )
        return data
    return make_synthetic_classification(n_inputs, classes, samples, seed=n_inputs)


def _dataset_for(config: ExperimentConfig, n_inputs: int) -> Dataset:
    return build_dataset(
        n_inputs,
        source=config.data_source,
        classes=config.classes,
        samples=config.samples,
        idx_images=config.idx_images,
        idx_labels=config.idx_labels,
        downscale=config.downscale,
    )


def _train_test_split(data: Dataset):
    cut = max(1, int(0.8 * len(data)))
    return data.subset(slice(0, cut)), data.subset(slice(cut, len(data)))


def _instance_eps(config: ExperimentConfig, seed: int, n_inputs: int) -> float:
    lo, hi = config.eps_range
    raw = float(np.random.default_rng(seed).uniform(lo, hi))
    if config.scale_eps_by_input and config.data_source == "synthetic":
        return raw * n_inputs / _EPS_REFERENCE_INPUT
    return raw


def _solver_config(config: ExperimentConfig, emphasis: str) -> SolverConfig:
    return SolverConfig(
        time_limit_seconds=config.time_limit,
        pool_size=config.pool_size,
        emphasis=emphasis,
    )


def _result_fields(result):
    return {
        "outcome": result.outcome,
        "status": result.solver_status,
        "objective": result.value,
        "seconds": result.wall_seconds,
        "incumbents": result.incumbents_evaluated,
    }


def _verification_instance_task(config: ExperimentConfig, n0, depth, width, seed):
    instance_id = f"v-n{n0}-d{depth}-w{width}-s{seed}"
    data = _dataset_for(config, n0)
    train_set, test_set = _train_test_split(data)
    dims = [n0] + [width] * depth + [data.num_classes]
    net = random_init(dims, seed=seed, domain=(data.box.lo, data.box.hi))
    net = train(
        net,
        train_set,
        epochs=config.train_epochs,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        seed=seed,
    )
    dense_acc = accuracy(net, train_set)
    predicted = np.argmax(
        np.array([forward(net, x).output for x in test_set.X]), axis=1
    )
    hits = np.flatnonzero(predicted == test_set.y)
    if hits.size == 0:
        return instance_id, None, "no correctly-classified test sample"
    x0 = test_set.X[hits[0]]
    y0 = forward(net, x0).output
    j = int(test_set.y[hits[0]])
    j_prime = int(np.argsort(y0)[-2])
    eps = _instance_eps(config, seed, n0)
    instance = VerificationInstance(net, x0, eps, j, j_prime)
    solver_cfg = _solver_config(config, emphasis="feasibility")
    direct = _result_fields(verify_direct(instance, solver_cfg))

    records = []
    for spec in config.pruning_specs():
        t0 = time.perf_counter()
        sparse = prune(net, spec, train_set if spec.finetune else None)
        prune_seconds = time.perf_counter() - t0
        surrogate = _result_fields(verify_via_surrogate(instance, sparse, solver_cfg))
        records.append(
            RunRecord(
                instance_id=instance_id,
                study="verification",
                n_inputs=n0,
                depth=depth,
                width=width,
                seed=seed,
                eps=eps,
                j=j,
                j_prime=j_prime,
                dense_accuracy=dense_acc,
                pruned_accuracy=accuracy(sparse, train_set),
                method=spec.method,
                granularity=spec.granularity,
                rate=spec.rate,
                finetune=spec.finetune is not None,
                finetune_seconds=prune_seconds,
                direct_outcome=direct["outcome"],
                direct_status=direct["status"],
                direct_objective=direct["objective"],
                direct_seconds=direct["seconds"],
                direct_incumbents=direct["incumbents"],
                surrogate_outcome=surrogate["outcome"],
                surrogate_status=surrogate["status"],
                surrogate_objective=surrogate["objective"],
                surrogate_seconds=surrogate["seconds"],
                surrogate_incumbents=surrogate["incumbents"],
            )
        )
    return instance_id, records, None


def _maximization_instance_task(config: ExperimentConfig, n0, depth, width, seed):
    instance_id = f"m-n{n0}-d{depth}-w{width}-s{seed}"
    dims = [n0] + [width] * depth + [1]
    dense = random_init(dims, seed=seed)
    direct = _result_fields(
        maximize_direct(dense, _solver_config(config, emphasis="balanced"))
    )
    surrogate_cfg = _solver_config(config, emphasis="feasibility")
    records = []
    for spec in config.pruning_specs():
        t0 = time.perf_counter()
        sparse = prune(dense, spec)
        prune_seconds = time.perf_counter() - t0
        surrogate = _result_fields(maximize_via_surrogate(dense, sparse, surrogate_cfg))
        records.append(
            RunRecord(
                instance_id=instance_id,
                study="maximization",
                n_inputs=n0,
                depth=depth,
                width=width,
                seed=seed,
                eps=None,
                j=None,
                j_prime=None,
                dense_accuracy=None,
                pruned_accuracy=None,
                method=spec.method,
                granularity=spec.granularity,
                rate=spec.rate,
                finetune=spec.finetune is not None,
                finetune_seconds=prune_seconds,
                direct_outcome=direct["outcome"],
                direct_status=direct["status"],
                direct_objective=direct["objective"],
                direct_seconds=direct["seconds"],
                direct_incumbents=direct["incumbents"],
                surrogate_outcome=surrogate["outcome"],
                surrogate_status=surrogate["status"],
                surrogate_objective=surrogate["objective"],
                surrogate_seconds=surrogate["seconds"],
                surrogate_incumbents=surrogate["incumbents"],
            )
        )
    return instance_id, records, None


def _run_study(config: ExperimentConfig, task) -> StudyResult:
    points = list(
        product(config.input_sizes, config.depths, config.widths, config.seeds)
    )
    records = []
    skipped = []

    def run_point(point):
        return task(config, *point)

    if config.workers == 1:
        results = [run_point(p) for p in points]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run_point, points))
    for instance_id, recs, reason in results:
        if recs is None:
            logger.warning("skipping %s: %s", instance_id, reason)
            skipped.append((instance_id, reason))
        else:
            records.extend(recs)

    paths = {}
    if config.output_dir is not None:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths["records"] = out / "records.csv"
        write_records(records, paths["records"])
        paths["scatter"] = out / "scatter.csv"
        emit_scatter(records, paths["scatter"])
        paths["summary"] = out / "summary.csv"
        write_summary(summarize(records), paths["summary"])
    return StudyResult(records=records, skipped=skipped, paths=paths)


def run_verification_study(config: ExperimentConfig) -> StudyResult:
    """Train, pick a sample, and race direct vs surrogate adversarial search."""
    if config.study != "verification":
        raise ConfigError("config is not a verification study")
    return _run_study(config, _verification_instance_task)


def run_maximization_study(config: ExperimentConfig) -> StudyResult:
    """Random networks; race direct vs surrogate output maximization."""
    if config.study != "maximization":
        raise ConfigError("config is not a maximization study")
    return _run_study(config, _maximization_instance_task)


# -- comparisons, summaries, scatter -------------------------------------------

_VALUE_TIE = 1e-9


def _comparison(rec) -> dict:
    """Normalize a RunRecord or scatter-CSV row into comparison form."""
    if isinstance(rec, RunRecord):
        if rec.study == "verification":
            return {
                "study": rec.study,
                "instance_id": rec.instance_id,
                "n_inputs": rec.n_inputs,
                "depth": rec.depth,
                "width": rec.width,
                "seed": rec.seed,
                "method": rec.method,
                "granularity": rec.granularity,
                "rate": rec.rate,
                "finetune": rec.finetune,
                "direct_metric": rec.direct_seconds,
                "surrogate_metric": rec.surrogate_seconds,
                "finetune_seconds": rec.finetune_seconds,
                "direct_timeout": rec.direct_outcome != "adversarial-found",
                "surrogate_timeout": rec.surrogate_outcome != "adversarial-found",
            }
        return {
            "study": rec.study,
            "instance_id": rec.instance_id,
            "n_inputs": rec.n_inputs,
            "depth": rec.depth,
            "width": rec.width,
            "seed": rec.seed,
            "method": rec.method,
            "granularity": rec.granularity,
            "rate": rec.rate,
            "finetune": rec.finetune,
            "direct_metric": rec.direct_objective,
            "surrogate_metric": rec.surrogate_objective,
            "finetune_seconds": rec.finetune_seconds,
            "direct_timeout": rec.direct_objective is None,
            "surrogate_timeout": rec.surrogate_objective is None,
        }
    return rec  # already a comparison dict (scatter row)


def _surrogate_wins(comp: dict, include_finetune_time: bool):
    """True / False / None (tie)."""
    if comp["study"] == "verification":
        d_found = not comp["direct_timeout"]
        s_found = not comp["surrogate_timeout"]
        if not d_found and not s_found:
            return None
        if d_found != s_found:
            return s_found
        s_time = comp["surrogate_metric"]
        if include_finetune_time:
            s_time = s_time + comp["finetune_seconds"]
        if s_time == comp["direct_metric"]:
            return None
        return s_time < comp["direct_metric"]
    d, s = comp["direct_metric"], comp["surrogate_metric"]
    if d is None and s is None:
        return None
    if d is None or s is None:
        return d is None
    if abs(s - d) <= _VALUE_TIE:
        return None
    return s > d


def summarize(records, group_by=DEFAULT_GROUP_BY) -> list:
    """Percentage of non-tied instances where the surrogate route wins.

    Verification rows report both time accountings (finetune cost excluded
    and included); maximization rows compare best values.  Returns one dict
    per group, ordered by the group key.
    """
    comps = [_comparison(r) for r in records]
    groups = {}
    for comp in comps:
        key = tuple(comp[g] for g in group_by)
        groups.setdefault(key, []).append(comp)

    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(v) for v in k)):
        comps_g = groups[key]
        row = dict(zip(group_by, key))
        row["n_records"] = len(comps_g)
        for tag, include_ft in (("", False), ("_incl_finetune", True)):
            wins = loses = ties = 0
            for comp in comps_g:
                outcome = _surrogate_wins(comp, include_ft)
                if outcome is None:
                    ties += 1
                elif outcome:
                    wins += 1
                else:
                    loses += 1
            decided = wins + loses
            row[f"surrogate_wins{tag}"] = wins
            row[f"direct_wins{tag}"] = loses
            row[f"ties{tag}"] = ties
            row[f"pct_surrogate{tag}"] = (
                100.0 * wins / decided if decided else None
            )
            if comps_g[0]["study"] == "maximization":
                break  # value comparison has no finetune-time variant
        rows.append(row)
    return rows


def write_summary(rows, path) -> None:
    if not rows:
        with open(path, "w", newline="") as fh:
            fh.write("")
        return
    columns = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(col)) for col in columns])


SCATTER_COLUMNS = [
    "instance_id",
    "study",
    "n_inputs",
    "depth",
    "width",
    "seed",
    "method",
    "granularity",
    "rate",
    "finetune",
    "direct_metric",
    "surrogate_metric",
    "finetune_seconds",
    "direct_timeout",
    "surrogate_timeout",
]


def emit_scatter(records, path) -> None:
    """One row per direct/surrogate comparison, plot-ready.

    ``direct_metric``/``surrogate_metric`` are seconds (verification) or best
    values (maximization); the timeout flags mark sides that found nothing,
    the scatter-plot convention for points pinned to the limit boundary.
    """
    comps = [_comparison(r) for r in records]
    comps.sort(key=lambda c: (c["instance_id"], c["granularity"], c["method"],
                              str(c["rate"]), str(c["finetune"])))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCATTER_COLUMNS)
        for comp in comps:
            writer.writerow([_cell(comp[col]) for col in SCATTER_COLUMNS])


def load_scatter(path) -> list:
    """Read a scatter CSV back into comparison dicts for summarize()."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            comp = {
                "instance_id": row["instance_id"],
                "study": row["study"],
                "n_inputs": int(row["n_inputs"]),
                "depth": int(row["depth"]),
                "width": int(row["width"]),
                "seed": int(row["seed"]),
                "method": row["method"],
                "granularity": row["granularity"],
                "rate": float(row["rate"]),
                "finetune": row["finetune"] == "true",
                "direct_metric": float(row["direct_metric"]) if row["direct_metric"] else None,
                "surrogate_metric": float(row["surrogate_metric"]) if row["surrogate_metric"] else None,
                "finetune_seconds": float(row["finetune_seconds"]),
                "direct_timeout": row["direct_timeout"] == "true",
                "surrogate_timeout": row["surrogate_timeout"] == "true",
            }
            out.append(comp)
    return out
