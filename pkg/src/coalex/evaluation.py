"""Scoring approximations against the exact influence, and the benchmark loop.

The error of an approximate influence vector is its distance to the exact
vector for the same instance and class, using the scale-normalized sum of
absolute differences d(i, j) = (1 / 2 sqrt(n)) * sum_k |i_k - j_k|.  The
benchmark runs a grid of datasets x methods, recording mean error and
wall-clock per instance with everything a method needs (grouping,
threshold search, subset training, influence sums) inside its span.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from math import comb
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .complexity import complexity_proportion, find_threshold
from .dataset import Dataset
from .errors import ConfigError
from .grouping import GROUPING_METHODS, Coalition, group_model_based
from .influence import (
    COMPLETE_ATTRIBUTE_CAP,
    InfluenceVector,
    complete_influence,
    coalitional_influence,
    kdepth_influence,
    predicted_class,
)
from .model import ModelSpec, SubsetModelCache

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "dataset", "method", "param", "mean_error", "time_per_instance_s",
    "time_ratio_vs_complete", "complexity_proportion", "group_count_mean",
    "group_size_mean", "seed",
)


def influence_distance(i, j) -> float:
    """Scaled L1 distance between two influence vectors of equal length."""
    a = i.values if isinstance(i, InfluenceVector) else tuple(i)
    b = j.values if isinstance(j, InfluenceVector) else tuple(j)
    if len(a) != len(b):
        raise ValueError(f"influence vectors of different lengths ({len(a)} vs {len(b)})")
    if len(a) == 0:
        raise ValueError("influence vectors must be non-empty")
    return sum(abs(x - y) for x, y in zip(a, b)) / (2.0 * math.sqrt(len(a)))


@dataclass(frozen=True)
class ErrorScore:
    value: float
    n: int
    method_tag: str


def error_score(approx: InfluenceVector, oracle: InfluenceVector) -> ErrorScore:
    """Distance of an approximation from the exact vector it approximates."""
    if approx.instance_index != oracle.instance_index:
        raise ValueError("error score across different instances")
    if approx.target != oracle.target:
        raise ValueError("error score across different target classes")
    if len(approx) != len(oracle):
        raise ValueError("error score across different attribute counts")
    return ErrorScore(influence_distance(approx, oracle), len(approx), approx.method_tag)


def group_stats(G: Coalition) -> tuple[int, float]:
    """Group count and mean group size of a coalition."""
    sizes = [g.size for g in G.groups]
    return len(sizes), sum(sizes) / len(sizes)


# ---------------------------------------------------------------------------
# synthetic data


def make_synthetic_dataset(n_attributes: int, n_instances: int, seed: int,
                           name: str | None = None, rho: float = 0.88) -> Dataset:
    """Seeded dataset with a planted correlation chain and interaction labels.

    The attributes form an autoregressive chain with neighbor correlation
    ``rho``, so correlation-driven grouping sees graded structure: tight
    thresholds isolate neighbors, loose ones merge most of the chain.  The
    binary label is the parity of two or three median-thresholded attributes
    spread along the chain, so no single attribute carries the class signal
    on its own.
    """
    if n_attributes < 1 or n_instances < 4:
        raise ValueError("need n_attributes >= 1 and n_instances >= 4")
    rng = np.random.default_rng([7340841, seed, n_attributes, n_instances])
    n, m = n_attributes, n_instances
    X = np.empty((m, n))
    X[:, 0] = rng.standard_normal(m)
    for j in range(1, n):
        X[:, j] = rho * X[:, j - 1] + math.sqrt(1 - rho ** 2) * rng.standard_normal(m)
    parity_attrs = sorted({0, n - 1} | ({n // 2} if n >= 6 else set()))
    parity = np.zeros(m, dtype=bool)
    for j in parity_attrs:
        parity ^= X[:, j] > np.median(X[:, j])
    labels = parity.astype(int).tolist()
    if len(set(labels)) < 2:
        labels[-1] = 1 - labels[-1]
    return Dataset(
        attribute_names=tuple(f"a{j}" for j in range(n)),
        features=X,
        labels=tuple(labels),
        name=name or f"synth-n{n}-m{m}-s{seed}",
    )


def make_synthetic_suite(count: int, seed: int, n_range: tuple[int, int] = (2, 8),
                         m_range: tuple[int, int] = (50, 120)) -> list[Dataset]:
    """A reproducible list of synthetic datasets spanning the given shape ranges."""
    rng = np.random.default_rng([9218231, seed])
    suite = []
    for k in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        suite.append(make_synthetic_dataset(n, m, seed=seed * 1000 + k))
    return suite


# ---------------------------------------------------------------------------
# benchmark harness


def normalize_grouping_name(name: str) -> str:
    """Canonical grouping name; tolerates hyphens and squeezed aliases."""
    canon = name.strip().lower().replace("-", "_")
    return {"modelbased": "model_based", "revvif": "rev_vif",
            "revspearman": "rev_spearman"}.get(canon, canon)


@dataclass(frozen=True)
class MethodConfig:
    """One benchmark method: complete, kdepth:k, or coalitional:<grouping>."""

    kind: str
    k: int | None = None
    grouping: str | None = None
    threshold: float | None = None
    proportion: float | None = None
    delta: float | None = None
    repetitions: int = 10

    def __post_init__(self):
        if self.kind not in ("complete", "kdepth", "coalitional"):
            raise ConfigError(f"unknown method kind {self.kind!r}")
        if self.kind == "kdepth" and (self.k is None or self.k < 1):
            raise ConfigError("kdepth needs k >= 1")
        if self.kind == "coalitional":
            known = set(GROUPING_METHODS) | {"model_based"}
            if self.grouping not in known:
                raise ConfigError(f"unknown grouping {self.grouping!r}; choose from {sorted(known)}")
            if self.threshold is not None and self.proportion is not None:
                raise ConfigError("threshold and proportion are mutually exclusive")

    @classmethod
    def parse(cls, text: str) -> "MethodConfig":
        """Parse method strings like ``complete``, ``kdepth:2``,
        ``coalitional:spearman:0.25`` (proportion of complete complexity),
        ``coalitional:vif:t=0.3`` (raw threshold) or
        ``coalitional:model_based:0.1`` (fidelity delta)."""
        parts = text.strip().split(":")
        kind = parts[0]
        if kind == "complete":
            if len(parts) > 1:
                raise ConfigError(f"method {text!r}: complete takes no parameter")
            return cls("complete")
        if kind == "kdepth":
            if len(parts) != 2:
                raise ConfigError(f"method {text!r}: expected kdepth:<k>")
            try:
                return cls("kdepth", k=int(parts[1]))
            except ValueError:
                raise ConfigError(f"method {text!r}: k must be an integer") from None
        if kind == "coalitional":
            if len(parts) < 2:
                raise ConfigError(f"method {text!r}: expected coalitional:<grouping>[:<value>]")
            grouping = normalize_grouping_name(parts[1])
            kwargs: dict = {"grouping": grouping}
            if len(parts) == 3:
                value = parts[2]
                try:
                    if value.startswith("t="):
                        kwargs["threshold"] = float(value[2:])
                    elif value.startswith("p="):
                        kwargs["proportion"] = float(value[2:])
                    elif grouping == "model_based":
                        kwargs["delta"] = float(value)
                    else:
                        kwargs["proportion"] = float(value)
                except ValueError:
                    raise ConfigError(f"method {text!r}: bad parameter {value!r}") from None
            elif len(parts) > 3:
                raise ConfigError(f"method {text!r}: too many ':' segments")
            return cls("coalitional", **kwargs)
        raise ConfigError(f"unknown method {text!r}; expected complete, kdepth:<k> "
                          f"or coalitional:<grouping>[:<value>]")

    @property
    def method_id(self) -> str:
        if self.kind == "coalitional":
            return f"coalitional:{self.grouping}"
        return self.kind

    @property
    def param_label(self) -> str:
        if self.kind == "kdepth":
            return f"k={self.k}"
        if self.kind == "coalitional":
            if self.grouping == "model_based":
                return f"delta={self.delta}"
            if self.proportion is not None:
                return f"p={self.proportion}"
            if self.threshold is not None:
                return f"t={self.threshold}"
            return ""
        return ""


@dataclass(frozen=True)
class BenchmarkRecord:
    dataset_id: str
    method_id: str
    param: str
    mean_error: float
    time_per_instance_s: float
    time_ratio_vs_complete: float
    complexity_proportion: float | None
    group_count_mean: float | None
    group_size_mean: float | None
    seed: int
    model: str = ""
    parallel_timed: bool = False

    def to_row(self) -> list:
        opt = lambda v: "" if v is None else repr(float(v))
        return [
            self.dataset_id, self.method_id, self.param,
            repr(self.mean_error), repr(self.time_per_instance_s),
            repr(self.time_ratio_vs_complete),
            opt(self.complexity_proportion), opt(self.group_count_mean),
            opt(self.group_size_mean), str(self.seed),
        ]

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset_id,
            "method": self.method_id,
            "param": self.param,
            "mean_error": self.mean_error,
            "time_per_instance_s": self.time_per_instance_s,
            "time_ratio_vs_complete": self.time_ratio_vs_complete,
            "complexity_proportion": self.complexity_proportion,
            "group_count_mean": self.group_count_mean,
            "group_size_mean": self.group_size_mean,
            "seed": self.seed,
            "model": self.model,
            "parallel_timed": self.parallel_timed,
        }


def _kdepth_proportion(n: int, k: int) -> float:
    touched = sum(comb(n, s) for s in range(1, k + 1))
    return touched / float((1 << n) - 1)


def _spec_id(spec: ModelSpec) -> str:
    if spec.kind == "prior_baseline":
        return spec.kind
    if spec.kind == "decision_tree":
        return f"decision_tree(max_depth={spec.max_depth},min_leaf={spec.min_leaf})"
    return (f"random_forest(trees={spec.tree_count},max_depth={spec.max_depth},"
            f"min_leaf={spec.min_leaf},seed={spec.seed})")


def _run_cell(d: Dataset, mc: MethodConfig, spec: ModelSpec, seed: int,
              targets, oracle_vectors, cap: int) -> BenchmarkRecord:
    """Time one (dataset, method) cell against precomputed oracle vectors."""
    m = d.n_instances
    cache = SubsetModelCache()
    prop = None
    stats: tuple[float, float] | None = None
    started = time.perf_counter()
    if mc.kind == "kdepth":
        vectors = [kdepth_influence(cache, spec, d, i, mc.k, targets[i]) for i in range(m)]
        prop = _kdepth_proportion(d.n_attributes, mc.k)
    else:
        if mc.grouping == "model_based":
            if mc.delta is None:
                raise ConfigError("model_based grouping needs delta > 0")
            G = group_model_based(d, spec, mc.delta, mc.repetitions, seed, cache=cache)
        elif mc.proportion is not None:
            search = find_threshold(mc.grouping, d, mc.proportion)
            if not search.converged:
                logger.info("bisection on %s/%s hit closest-achievable %.4f for target %.4f",
                            d.name, mc.grouping, search.achieved, mc.proportion)
            G = search.coalition
        else:
            t = mc.threshold if mc.threshold is not None else 0.25
            G = GROUPING_METHODS[mc.grouping](d, t)
        vectors = [coalitional_influence(cache, spec, d, i, G, targets[i]) for i in range(m)]
        prop = complexity_proportion(G)
        stats = group_stats(G)
    elapsed = time.perf_counter() - started
    mean_err = float(np.mean([error_score(v, o).value for v, o in zip(vectors, oracle_vectors)]))
    return BenchmarkRecord(
        dataset_id=d.name,
        method_id=mc.method_id,
        param=mc.param_label,
        mean_error=mean_err,
        time_per_instance_s=elapsed / m,
        time_ratio_vs_complete=math.nan,  # filled by the caller
        complexity_proportion=prop,
        group_count_mean=None if stats is None else float(stats[0]),
        group_size_mean=None if stats is None else float(stats[1]),
        seed=seed,
        model=_spec_id(spec),
    )


def run_benchmark(datasets: Sequence[Dataset], methods: Sequence[MethodConfig],
                  spec: ModelSpec, seed: int = 0, jobs: int = 1,
                  cap: int = COMPLETE_ATTRIBUTE_CAP) -> list[BenchmarkRecord]:
    """Grid of datasets x methods, scored against the exact influence.

    Per dataset the exact vectors are computed once (this also fixes each
    instance's target class, taken from the full model's prediction); each
    method then runs on a fresh cache so its span covers everything it
    needs.  Datasets beyond the attribute cap are skipped with a logged
    reason.  ``jobs`` > 1 runs method cells concurrently; their wall-clock
    shares the machine, so records are marked parallel-timed.
    """
    records: list[BenchmarkRecord] = []
    for d in datasets:
        if d.n_attributes > cap:
            logger.warning("skipping %s: %d attributes exceed the cap of %d",
                           d.name, d.n_attributes, cap)
            continue
        m = d.n_instances
        started = time.perf_counter()
        oracle_cache = SubsetModelCache()
        targets = [predicted_class(oracle_cache, spec, d, i) for i in range(m)]
        oracle_vectors = []
        for i in range(m):
            memo: dict = {}
            oracle_vectors.append(
                complete_influence(oracle_cache, spec, d, i, targets[i], cap=cap,
                                   eval_memo=memo))
        oracle_tpi = (time.perf_counter() - started) / m

        complete_record = BenchmarkRecord(
            dataset_id=d.name, method_id="complete", param="",
            mean_error=0.0, time_per_instance_s=oracle_tpi,
            time_ratio_vs_complete=1.0, complexity_proportion=1.0,
            group_count_mean=None, group_size_mean=None, seed=seed,
            model=_spec_id(spec),
        )

        pending = [mc for mc in methods if mc.kind != "complete"]
        if jobs > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                cells = list(pool.map(
                    lambda mc: _run_cell(d, mc, spec, seed, targets, oracle_vectors, cap),
                    pending))
            cells = [replace(c, parallel_timed=True) for c in cells]
        else:
            cells = [_run_cell(d, mc, spec, seed, targets, oracle_vectors, cap)
                     for mc in pending]

        by_config = iter(cells)
        for mc in methods:
            if mc.kind == "complete":
                records.append(complete_record)
            else:
                cell = next(by_config)
                records.append(replace(
                    cell, time_ratio_vs_complete=cell.time_per_instance_s / oracle_tpi))
    return records


def write_benchmark_csv(records: Iterable[BenchmarkRecord], path: str | Path,
                        config: dict | None = None) -> None:
    path = Path(path)
    buf = io.StringIO()
    if config is not None:
        buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(r.to_row())
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_benchmark_json(records: Iterable[BenchmarkRecord], path: str | Path,
                         config: dict | None = None) -> None:
    path = Path(path)
    payload: dict = {"records": [r.to_dict() for r in records]}
    if config is not None:
        payload["config"] = config
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
