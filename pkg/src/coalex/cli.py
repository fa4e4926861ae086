"""Command-line interface: explain, groups, complexity, benchmark.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 attribute-cap
violation.  Every option can come from (in order of precedence) the command
line, a ``COALEX_*`` environment variable, a JSON config file passed with
``--config``, or the built-in default.  The effective configuration is
echoed into every output file for provenance.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click

from .complexity import ComplexityReport, find_threshold
from .dataset import Dataset, load_csv
from .errors import ComplexityCapError, ConfigError, DataError
from .evaluation import (
    MethodConfig,
    make_synthetic_suite,
    normalize_grouping_name,
    run_benchmark,
    write_benchmark_csv,
    write_benchmark_json,
)
from .grouping import GROUPING_METHODS, Coalition, group_model_based
from .influence import (
    COMPLETE_ATTRIBUTE_CAP,
    InfluenceRequest,
    compute_influence,
)
from .model import ModelSpec, SubsetModelCache

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CAP = 4

_MODEL_ALIASES = {
    "rf": "random_forest", "random_forest": "random_forest",
    "dt": "decision_tree", "tree": "decision_tree", "decision_tree": "decision_tree",
    "prior": "prior_baseline", "prior_baseline": "prior_baseline",
}


@dataclass
class RunConfig:
    """Resolved settings for one command invocation (echoed into outputs)."""

    command: str
    dataset: str | list[str] | None = None
    target: str | None = None
    model: dict = field(default_factory=dict)
    method: str | None = None
    k: int | None = None
    threshold: float | None = None
    proportion: float | None = None
    delta: float | None = None
    repetitions: int = 10
    seed: int = 0
    jobs: int = 1
    delimiter: str = ","
    instances: str = "all"
    output: str | None = None
    output_format: str = "json"
    cap: int = COMPLETE_ATTRIBUTE_CAP

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    return data


def _pick(flag, file_cfg: dict, key: str, default):
    if flag is not None:
        return flag
    if key in file_cfg:
        return file_cfg[key]
    return default


def _model_spec(name: str, file_cfg: dict, trees, max_depth, min_leaf, seed) -> ModelSpec:
    model_cfg = file_cfg.get("model", {}) if isinstance(file_cfg.get("model"), dict) else {}
    kind_raw = _pick(name, model_cfg, "kind", "random_forest")
    kind = _MODEL_ALIASES.get(str(kind_raw).lower())
    if kind is None:
        raise ConfigError(f"unknown model {kind_raw!r}; choose from {sorted(set(_MODEL_ALIASES))}")
    try:
        return ModelSpec(
            kind=kind,
            tree_count=int(_pick(trees, model_cfg, "tree_count", 100)),
            max_depth=_pick(max_depth, model_cfg, "max_depth", None),
            min_leaf=int(_pick(min_leaf, model_cfg, "min_leaf", 1)),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _parse_instances(text: str, m: int) -> list[int]:
    if text.strip().lower() == "all":
        return list(range(m))
    try:
        picks = [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ConfigError(f"bad --instances value {text!r}: use 'all' or e.g. '0,3,7'") from None
    for i in picks:
        if not 0 <= i < m:
            raise ConfigError(f"instance index {i} out of range [0, {m})")
    return picks


def _resolve_class(d: Dataset, label: str | None):
    if label is None:
        return None
    if label in d.class_set:
        return d.class_target(label)
    try:
        as_int = int(label)
    except ValueError:
        as_int = None
    if as_int is not None and as_int in d.class_set:
        return d.class_target(as_int)
    raise ConfigError(f"class {label!r} not in the dataset classes {list(d.class_set)}")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text.rstrip("\n") + "\n", encoding="utf-8")
    else:
        click.echo(text.rstrip("\n"))


def _fail(exc: BaseException, code: int) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


def _guarded(fn):
    try:
        fn()
    except ComplexityCapError as exc:
        _fail(exc, EXIT_CAP)
    except DataError as exc:
        _fail(exc, EXIT_DATA)
    except (ConfigError, ValueError) as exc:
        _fail(exc, EXIT_CONFIG)


def common_options(f):
    f = click.option("--config", "config_path", default=None, envvar="COALEX_CONFIG",
                     help="JSON config file; flags override its values.")(f)
    f = click.option("--seed", type=int, default=None, envvar="COALEX_SEED",
                     help="Master seed; fully determines all numeric output.")(f)
    f = click.option("--jobs", type=int, default=None, envvar="COALEX_JOBS",
                     help="Worker threads (default 1 for timing fidelity).")(f)
    f = click.option("--delimiter", default=None, envvar="COALEX_DELIMITER",
                     help="CSV field delimiter (default ',').")(f)
    return f


def model_options(f):
    f = click.option("--model", "model_name", default=None, envvar="COALEX_MODEL",
                     help="rf (random forest), dt (decision tree) or prior.")(f)
    f = click.option("--trees", type=int, default=None, help="Forest size.")(f)
    f = click.option("--max-depth", type=int, default=None, help="Tree depth limit.")(f)
    f = click.option("--min-leaf", type=int, default=None, help="Minimum leaf size.")(f)
    return f


@click.group()
@click.version_option(package_name="coalex")
def main():
    """Attribute-influence explanations for tabular classifiers."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")


@main.command("explain")
@click.argument("data", type=click.Path())
@click.option("--target", default=None, help="Label column name or index.")
@click.option("--method", "method_name", default=None,
              help="complete, kdepth or coalitional:<grouping>.")
@click.option("--k", type=int, default=None, help="Depth for kdepth.")
@click.option("--t", "threshold", type=float, default=None, help="Grouping threshold in (0, 0.5).")
@click.option("--proportion", type=float, default=None,
              help="Target complexity proportion of complete; bisection picks t.")
@click.option("--delta", type=float, default=None, help="model_based fidelity delta.")
@click.option("--repetitions", type=int, default=None, help="model_based fidelity rounds.")
@click.option("--class-label", default=None,
              help="Explain this class instead of each instance's predicted class.")
@click.option("--instances", default=None, help="'all' or comma-separated indices.")
@click.option("--out", default=None, help="Output file (stdout when omitted).")
@click.option("--format", "fmt", default=None, type=click.Choice(["json", "csv"]))
@click.option("--cap", type=int, default=None, help="Attribute cap for complete influence.")
@model_options
@common_options
def cmd_explain(data, target, method_name, k, threshold, proportion, delta, repetitions,
                class_label, instances, out, fmt, cap, model_name, trees, max_depth,
                min_leaf, config_path, seed, jobs, delimiter):
    """Write one influence vector per selected instance of DATA."""

    def body():
        file_cfg = _load_config_file(config_path)
        cfg = RunConfig(
            command="explain",
            dataset=str(data),
            target=_pick(target, file_cfg, "target", None),
            method=_pick(method_name, file_cfg, "method", "complete"),
            k=_pick(k, file_cfg, "k", None),
            threshold=_pick(threshold, file_cfg, "threshold", None),
            proportion=_pick(proportion, file_cfg, "proportion", None),
            delta=_pick(delta, file_cfg, "delta", None),
            repetitions=int(_pick(repetitions, file_cfg, "repetitions", 10)),
            seed=int(_pick(seed, file_cfg, "seed", 0)),
            jobs=int(_pick(jobs, file_cfg, "jobs", 1)),
            delimiter=_pick(delimiter, file_cfg, "delimiter", ","),
            instances=_pick(instances, file_cfg, "instances", "all"),
            output=out,
            output_format=_pick(fmt, file_cfg, "format", "json"),
            cap=int(_pick(cap, file_cfg, "cap", COMPLETE_ATTRIBUTE_CAP)),
        )
        if cfg.target is None:
            raise ConfigError("--target is required")
        if cfg.threshold is not None and cfg.proportion is not None:
            raise ConfigError("--t and --proportion are mutually exclusive")
        spec = _model_spec(model_name, file_cfg, trees, max_depth, min_leaf, cfg.seed)
        cfg.model = asdict(spec)

        method_text = cfg.method
        if method_text == "kdepth" and cfg.k is not None:
            method_text = f"kdepth:{cfg.k}"
        mc = MethodConfig.parse(method_text)
        if mc.kind == "kdepth" and cfg.k is not None:
            mc = MethodConfig("kdepth", k=cfg.k)
        if mc.kind == "coalitional":
            mc = MethodConfig("coalitional", grouping=mc.grouping,
                              threshold=cfg.threshold if mc.threshold is None else mc.threshold,
                              proportion=cfg.proportion if mc.proportion is None else mc.proportion,
                              delta=cfg.delta if mc.delta is None else mc.delta,
                              repetitions=cfg.repetitions)

        d = load_csv(data, cfg.target, delimiter=cfg.delimiter)
        picks = _parse_instances(cfg.instances, d.n_instances)
        fixed_class = _resolve_class(d, class_label)
        cache = SubsetModelCache()

        coalition = None
        extra: dict = {}
        if mc.kind == "coalitional":
            coalition, extra = _build_coalition(d, mc, spec, cfg.seed, cache)
        requests = [
            InfluenceRequest(
                dataset=d, spec=spec, instance_index=i,
                method=mc.kind, target=fixed_class, k=mc.k,
                coalition=coalition, cap=cfg.cap,
            )
            for i in picks
        ]
        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                vectors = list(pool.map(lambda r: compute_influence(r, cache), requests))
        else:
            vectors = [compute_influence(r, cache) for r in requests]

        payload_cfg = cfg.to_dict() | extra
        if cfg.output_format == "json":
            doc = {"config": payload_cfg, "influences": [v.to_json(d) for v in vectors]}
            _emit(json.dumps(doc, indent=2), out)
        else:
            buf = io.StringIO()
            buf.write("# config: " + json.dumps(payload_cfg, sort_keys=True) + "\n")
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["instance", "class", "method", *d.attribute_names])
            for v in vectors:
                writer.writerow([v.instance_index, v.target.class_id,
                                 v.method_tag, *map(repr, v.values)])
            _emit(buf.getvalue(), out)

    _guarded(body)


def _build_coalition(d: Dataset, mc: MethodConfig, spec: ModelSpec, seed: int,
                     cache: SubsetModelCache) -> tuple[Coalition, dict]:
    """Build the coalition an explain/groups run needs, plus provenance extras."""
    if mc.grouping == "model_based":
        if mc.proportion is not None:
            raise ConfigError("model_based grouping has no threshold; --proportion unsupported")
        if mc.delta is None:
            raise ConfigError("model_based grouping requires --delta > 0")
        G = group_model_based(d, spec, mc.delta, mc.repetitions, seed, cache=cache)
        return G, {"delta": mc.delta}
    if mc.proportion is not None:
        search = find_threshold(mc.grouping, d, mc.proportion)
        extra = {
            "threshold": search.threshold,
            "achieved_proportion": search.achieved,
            "converged": search.converged,
        }
        if not search.converged:
            extra["note"] = "closest achievable proportion; target not reachable within tolerance"
        return search.coalition, extra
    t = mc.threshold if mc.threshold is not None else 0.25
    return GROUPING_METHODS[mc.grouping](d, t), {"threshold": t}


@main.command("groups")
@click.argument("data", type=click.Path())
@click.option("--target", default=None, help="Label column name or index.")
@click.option("--method", "method_name", default=None,
              help=f"One of {sorted(GROUPING_METHODS)} or model_based.")
@click.option("--t", "threshold", type=float, default=None, help="Grouping threshold in (0, 0.5).")
@click.option("--proportion", type=float, default=None,
              help="Target complexity proportion; bisection picks t.")
@click.option("--delta", type=float, default=None, help="model_based fidelity delta.")
@click.option("--repetitions", type=int, default=None, help="model_based fidelity rounds.")
@click.option("--out", default=None, help="Output file (stdout when omitted).")
@model_options
@common_options
def cmd_groups(data, target, method_name, threshold, proportion, delta, repetitions, out,
               model_name, trees, max_depth, min_leaf, config_path, seed, jobs, delimiter):
    """Extract and write an attribute coalition for DATA."""

    def body():
        file_cfg = _load_config_file(config_path)
        cfg = RunConfig(
            command="groups",
            dataset=str(data),
            target=_pick(target, file_cfg, "target", None),
            method=_pick(method_name, file_cfg, "method", None),
            threshold=_pick(threshold, file_cfg, "threshold", None),
            proportion=_pick(proportion, file_cfg, "proportion", None),
            delta=_pick(delta, file_cfg, "delta", None),
            repetitions=int(_pick(repetitions, file_cfg, "repetitions", 10)),
            seed=int(_pick(seed, file_cfg, "seed", 0)),
            delimiter=_pick(delimiter, file_cfg, "delimiter", ","),
            output=out,
        )
        if cfg.target is None:
            raise ConfigError("--target is required")
        if cfg.method is None:
            raise ConfigError(f"--method is required; choose from "
                              f"{sorted(GROUPING_METHODS) + ['model_based']}")
        if cfg.threshold is not None and cfg.proportion is not None:
            raise ConfigError("--t and --proportion are mutually exclusive")
        mc = MethodConfig("coalitional", grouping=normalize_grouping_name(cfg.method),
                          threshold=cfg.threshold, proportion=cfg.proportion,
                          delta=cfg.delta, repetitions=cfg.repetitions)
        spec = _model_spec(model_name, file_cfg, trees, max_depth, min_leaf, cfg.seed)
        cfg.model = asdict(spec)

        d = load_csv(data, cfg.target, delimiter=cfg.delimiter)
        G, extra = _build_coalition(d, mc, spec, cfg.seed, SubsetModelCache())
        if cfg.proportion is not None:
            click.echo(f"threshold={extra['threshold']:.6f} "
                       f"achieved_proportion={extra['achieved_proportion']:.6f} "
                       f"converged={extra['converged']}", err=True)
        doc = {"config": cfg.to_dict() | extra} | G.to_json(d, method=mc.grouping) | extra
        _emit(json.dumps(doc, indent=2), out)

    _guarded(body)


@main.command("complexity")
@click.argument("data", type=click.Path())
@click.option("--target", default=None, help="Label column name or index.")
@click.option("--method", "method_name", default=None,
              help=f"One of {sorted(GROUPING_METHODS)} or model_based.")
@click.option("--t", "threshold", type=float, default=None, help="Grouping threshold in (0, 0.5).")
@click.option("--proportion", type=float, default=None, help="Target complexity proportion.")
@click.option("--delta", type=float, default=None, help="model_based fidelity delta.")
@click.option("--repetitions", type=int, default=None, help="model_based fidelity rounds.")
@click.option("--out", default=None, help="Output file (stdout when omitted).")
@model_options
@common_options
def cmd_complexity(data, target, method_name, threshold, proportion, delta, repetitions, out,
                   model_name, trees, max_depth, min_leaf, config_path, seed, jobs, delimiter):
    """Report the evaluation cost of a coalition for DATA."""

    def body():
        file_cfg = _load_config_file(config_path)
        cfg = RunConfig(
            command="complexity",
            dataset=str(data),
            target=_pick(target, file_cfg, "target", None),
            method=_pick(method_name, file_cfg, "method", None),
            threshold=_pick(threshold, file_cfg, "threshold", None),
            proportion=_pick(proportion, file_cfg, "proportion", None),
            delta=_pick(delta, file_cfg, "delta", None),
            repetitions=int(_pick(repetitions, file_cfg, "repetitions", 10)),
            seed=int(_pick(seed, file_cfg, "seed", 0)),
            delimiter=_pick(delimiter, file_cfg, "delimiter", ","),
            output=out,
        )
        if cfg.target is None or cfg.method is None:
            raise ConfigError("--target and --method are required")
        if cfg.threshold is not None and cfg.proportion is not None:
            raise ConfigError("--t and --proportion are mutually exclusive")
        mc = MethodConfig("coalitional", grouping=normalize_grouping_name(cfg.method),
                          threshold=cfg.threshold, proportion=cfg.proportion,
                          delta=cfg.delta, repetitions=cfg.repetitions)
        spec = _model_spec(model_name, file_cfg, trees, max_depth, min_leaf, cfg.seed)
        cfg.model = asdict(spec)
        d = load_csv(data, cfg.target, delimiter=cfg.delimiter)
        G, extra = _build_coalition(d, mc, spec, cfg.seed, SubsetModelCache())
        report = ComplexityReport.from_coalition(G)
        doc = {"config": cfg.to_dict() | extra} | report.to_dict() | G.to_json(d, method=mc.grouping)
        _emit(json.dumps(doc, indent=2), out)

    _guarded(body)


@main.command("benchmark")
@click.argument("data", type=click.Path(), nargs=-1)
@click.option("--target", default=None, help="Label column name or index (CSV datasets).")
@click.option("--synthetic", "synthetic_count", type=int, default=None,
              help="Use N generated datasets instead of CSV files.")
@click.option("--methods", "methods_text", default=None,
              help="Comma-separated, e.g. complete,kdepth:2,coalitional:spearman:0.25")
@click.option("--out", default=None, help="CSV output path (a .json mirror is written too).")
@click.option("--cap", type=int, default=None, help="Attribute cap for the exact baseline.")
@model_options
@common_options
def cmd_benchmark(data, target, synthetic_count, methods_text, out, cap,
                  model_name, trees, max_depth, min_leaf, config_path, seed, jobs, delimiter):
    """Score methods against the exact influence over a dataset grid."""

    def body():
        file_cfg = _load_config_file(config_path)
        cfg = RunConfig(
            command="benchmark",
            dataset=[str(p) for p in data] or None,
            target=_pick(target, file_cfg, "target", None),
            method=_pick(methods_text, file_cfg, "methods", None),
            seed=int(_pick(seed, file_cfg, "seed", 0)),
            jobs=int(_pick(jobs, file_cfg, "jobs", 1)),
            delimiter=_pick(delimiter, file_cfg, "delimiter", ","),
            output=out,
            cap=int(_pick(cap, file_cfg, "cap", COMPLETE_ATTRIBUTE_CAP)),
        )
        synth = _pick(synthetic_count, file_cfg, "synthetic", None)
        if cfg.method is None:
            raise ConfigError("--methods is required, e.g. complete,kdepth:2")
        methods = [MethodConfig.parse(tok) for tok in cfg.method.split(",") if tok.strip()]
        if not methods:
            raise ConfigError("no methods given")
        for mc in methods:
            if mc.kind == "coalitional" and mc.grouping == "model_based" and mc.delta is None:
                raise ConfigError("coalitional:model_based needs a delta, "
                                  "e.g. coalitional:model_based:0.1")
        spec = _model_spec(model_name, file_cfg, trees, max_depth, min_leaf, cfg.seed)
        cfg.model = asdict(spec)

        if synth is not None:
            datasets = make_synthetic_suite(int(synth), cfg.seed)
        elif data:
            if cfg.target is None:
                raise ConfigError("--target is required for CSV datasets")
            datasets = [load_csv(p, cfg.target, delimiter=cfg.delimiter) for p in data]
        else:
            raise ConfigError("give dataset files or --synthetic N")

        records = run_benchmark(datasets, methods, spec, seed=cfg.seed,
                                jobs=cfg.jobs, cap=cfg.cap)
        payload_cfg = cfg.to_dict()
        if synth is not None:
            payload_cfg["synthetic"] = int(synth)
        if out:
            csv_path = Path(out)
            write_benchmark_csv(records, csv_path, config=payload_cfg)
            write_benchmark_json(records, csv_path.with_suffix(".json"), config=payload_cfg)
            click.echo(f"wrote {len(records)} records to {csv_path} "
                       f"and {csv_path.with_suffix('.json')}", err=True)
        else:
            for r in records:
                click.echo(json.dumps(r.to_dict()))

    _guarded(body)


if __name__ == "__main__":
    main()
