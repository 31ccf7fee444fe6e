"""Command line: offline coreset selection, experiment sweeps, reports.

Subcommands::

    gmcoreset select DATA.csv -n SIZE --out coreset.csv   # weighted subset
    gmcoreset run --config exp.cfg --out results/         # full sweep
    gmcoreset report results/                              # summary tables

Configuration files are flat ``key = value`` lines with ``#`` comments
and comma-separated lists.  Precedence: command-line flags over file
values over defaults.  Exit codes: 0 success, 1 runtime failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import harness, nn, scenarios
from .grad_embed import EmbeddingConfig, embed_batch, embedding_dim
from .matching_pursuit import omp_select


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in str(text).split(",") if part.strip())


def _parse_str_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in str(text).split(",") if part.strip())


def _parse_opt_int(text: str):
    return None if str(text).strip().lower() in ("", "none") else int(text)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return "" if value is None else str(value)


# key -> (parser, default); the manifest writes every key back out, so a
# manifest is itself a runnable configuration.
CONFIG_SCHEMA = {
    "scenario": (str, "sorted"),
    "dataset": (str, "synthetic"),
    "label_column": (str, "-1"),
    "has_header": (_parse_bool, True),
    "standardize": (_parse_bool, True),
    "test_fraction": (float, 0.2),
    "data_seed": (int, 0),
    "num_batches": (int, 10),
    "classes_per_task": (int, 2),
    "sort_feature": (int, 0),
    "synth_classes": (int, 4),
    "synth_per_class": (int, 500),
    "synth_dims": (int, 8),
    "synth_drift": (float, 2.0),
    "methods": (_parse_str_list, ("gmc",)),
    "paradigm": (str, "gdumb"),
    "memory_sizes": (_parse_int_list, ()),  # empty = defaults restricted to feasible sizes
    "seeds": (_parse_int_list, (0, 1, 2, 3, 4)),
    "step_size": (float, 1e-3),
    "batch_size": (int, 100),
    "epochs": (int, 200),
    "replay_epochs": (_parse_opt_int, None),
    "hidden": (_parse_int_list, (128, 128)),
    "embedding": (str, "random_projection"),
    "proj_dim": (int, 2000),
    "draws": (int, 4),
    "init_seed": (int, 0),
    "proj_seed": (int, 0),
    "jobs": (int, 1),
    "out": (str, "results"),
}


class ConfigError(ValueError):
    pass


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and ``#`` comments ignored."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def resolve_config(file_values: dict[str, str], overrides: dict[str, str]) -> dict:
    """Apply defaults, file values, then overrides; reject unknown keys."""
    unknown = sorted(set(file_values) - set(CONFIG_SCHEMA))
    if unknown:
        raise ConfigError("unknown configuration keys: " + ", ".join(unknown))
    resolved = {}
    for key, (parser, default) in CONFIG_SCHEMA.items():
        if key in overrides and overrides[key] is not None:
            raw = overrides[key]
        elif key in file_values:
            raw = file_values[key]
        else:
            resolved[key] = default
            continue
        try:
            resolved[key] = parser(str(raw))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}")
    return resolved


@dataclass
class RunManifest:
    """Everything needed to reproduce a run: the fully resolved config."""

    resolved: dict
    config_path: str | None
    out_dir: str

    def to_text(self) -> str:
        lines = ["# resolved run configuration; reusable as --config"]
        if self.config_path:
            lines.append(f"# source config: {self.config_path}")
        for key in CONFIG_SCHEMA:
            lines.append(f"{key} = {_fmt(self.resolved[key])}")
        return "\n".join(lines) + "\n"


def _label_column(raw: str) -> int | str:
    try:
        return int(raw)
    except ValueError:
        return raw


def load_dataset(cfg: dict) -> scenarios.Dataset:
    if cfg["dataset"] == "synthetic":
        return scenarios.synth_blobs(
            cfg["data_seed"], cfg["synth_per_class"], cfg["synth_classes"],
            cfg["synth_dims"], cfg["synth_drift"],
        )
    return scenarios.load_csv(cfg["dataset"], _label_column(cfg["label_column"]), cfg["has_header"])


def build_scenario(cfg: dict) -> scenarios.ContinualScenario:
    data = load_dataset(cfg)
    train, test = scenarios.train_test_split(data, cfg["test_fraction"], cfg["data_seed"])
    if cfg["standardize"]:
        train, test = scenarios.standardize_features(train, test)
    kind = cfg["scenario"]
    if kind == "sorted":
        return scenarios.make_sorted_scenario(
            train, cfg["sort_feature"], cfg["num_batches"], test=test
        )
    if kind == "class_incremental":
        return scenarios.make_class_incremental(train, cfg["classes_per_task"], test=test)
    if kind == "iid_incremental":
        return scenarios.make_iid_incremental(
            train, cfg["num_batches"], test=test, seed=cfg["data_seed"]
        )
    raise ConfigError(f"unknown scenario kind {cfg['scenario']!r}")


def experiment_config(cfg: dict) -> harness.ExperimentConfig:
    return harness.ExperimentConfig(
        methods=tuple(cfg["methods"]),
        paradigm=cfg["paradigm"],
        memory_sizes=tuple(cfg["memory_sizes"]) or harness.DEFAULT_MEMORY_SIZES,
        seeds=tuple(cfg["seeds"]),
        train=nn.TrainConfig(
            step_size=cfg["step_size"], batch_size=cfg["batch_size"], epochs=cfg["epochs"]
        ),
        embedding=EmbeddingConfig(
            draws=cfg["draws"], mode=cfg["embedding"], proj_dim=cfg["proj_dim"],
            projection_seed=cfg["proj_seed"], init_seed=cfg["init_seed"],
        ),
        hidden=tuple(cfg["hidden"]),
        replay_epochs=cfg["replay_epochs"],
    )


def _feasible_sizes(cfg: dict, config: harness.ExperimentConfig, scenario) -> tuple[int, ...]:
    """Resolve memory sizes; defaults are intersected with feasibility."""
    arch = nn.MlpArch(scenario.num_features, config.hidden, scenario.num_classes)
    limit = None
    for method in config.methods:
        if method in harness.GMC_METHODS:
            emb = harness.method_embedding(config, method, 0)
            if method == "gmc_local":
                emb = replace(emb, draws=1)
            dim = embedding_dim(emb, arch)
            limit = dim if limit is None else min(limit, dim)
    if cfg["memory_sizes"]:
        if limit is not None:
            bad = [s for s in cfg["memory_sizes"] if s > limit]
            if bad:
                raise ConfigError(
                    f"memory sizes {bad} exceed the embedding dimension {limit}; "
                    f"gradient matching requires D >= n"
                )
        return tuple(cfg["memory_sizes"])
    sizes = harness.DEFAULT_MEMORY_SIZES
    if limit is not None:
        sizes = tuple(s for s in sizes if s <= limit)
    if not sizes:
        raise ConfigError(
            f"no default memory size is feasible for embedding dimension {limit}"
        )
    return sizes


# --- output files -----------------------------------------------------------

RAW_HEADER = "scenario,paradigm,method,memory_size,seed,task_index,test_accuracy,wall_time_s"
AGG_HEADER = "scenario,paradigm,method,memory_size,mean_final_acc,std_final_acc,num_seeds"


def write_raw_csv(path: str, rows, with_timings: bool = False) -> None:
    """Raw per-task rows.

    The wall_time_s field is left empty in raw.csv so re-running an
    identical configuration reproduces the file byte for byte; measured
    times go to the timings.csv companion (with_timings=True).
    """
    with open(path, "w", newline="") as fh:
        fh.write(RAW_HEADER + "\n")
        for r in rows:
            stamp = repr(r.wall_time) if with_timings else ""
            fh.write(
                f"{r.scenario},{r.paradigm},{r.method},{r.memory_size},"
                f"{r.seed},{r.task_index},{r.test_accuracy!r},{stamp}\n"
            )


def write_aggregate_csv(path: str, aggregates) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(AGG_HEADER + "\n")
        for a in aggregates:
            fh.write(
                f"{a.scenario},{a.paradigm},{a.method},{a.memory_size},"
                f"{a.mean_final_acc!r},{a.std_final_acc!r},{a.num_seeds}\n"
            )


def write_frequency_csv(path: str, scenario) -> None:
    table = scenarios.class_frequencies(scenario)
    with open(path, "w", newline="") as fh:
        fh.write("task_index," + ",".join(f"class_{c}" for c in range(table.shape[1])) + "\n")
        for t, row in enumerate(table):
            fh.write(f"{t}," + ",".join(repr(float(v)) for v in row) + "\n")


def read_raw_csv(path: str) -> list[harness.ResultRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(harness.ResultRow(
                rec["scenario"], rec["paradigm"], rec["method"],
                int(rec["memory_size"]), int(rec["seed"]), int(rec["task_index"]),
                float(rec["test_accuracy"]),
                float(rec["wall_time_s"]) if rec["wall_time_s"] else 0.0,
            ))
    return rows


# --- subcommands -------------------------------------------------------------


def cmd_select(args) -> int:
    try:
        data = scenarios.load_csv(args.dataset, _label_column(args.label_column), args.header)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.standardize:
        mean = data.features.mean(axis=0)
        std = data.features.std(axis=0)
        data = scenarios.Dataset(
            (data.features - mean) / np.where(std > 0, std, 1.0), data.labels,
            data.feature_names, data.label_names,
        )
    arch = nn.MlpArch(data.num_features, tuple(args.hidden), data.num_classes)
    config = EmbeddingConfig(
        draws=args.draws, mode=args.embedding, proj_dim=args.proj_dim,
        projection_seed=args.proj_seed, init_seed=args.init_seed,
    )
    dim = embedding_dim(config, arch)
    if args.size > dim:
        print(
            f"error: coreset size {args.size} exceeds the embedding dimension {dim}; "
            f"gradient matching requires D >= n (increase --proj-dim or --draws)",
            file=sys.stderr,
        )
        return 2
    if args.size > data.num_examples:
        print(
            f"error: coreset size {args.size} exceeds the dataset size {data.num_examples}",
            file=sys.stderr,
        )
        return 2
    try:
        G = embed_batch(data.features, data.labels, arch, config)
        selection = omp_select(G, G.data.sum(axis=1), args.size)
        with open(args.out, "w", newline="") as fh:
            fh.write("row_index,weight\n")
            for ix, w in zip(selection.indices, selection.weights):
                fh.write(f"{int(ix)},{float(w)!r}\n")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_run(args) -> int:
    file_values: dict[str, str] = {}
    config_path = None
    if args.config:
        config_path = args.config
        try:
            with open(args.config) as fh:
                file_values = parse_config_text(fh.read(), args.config)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    overrides = {
        "seeds": args.seed,
        "memory_sizes": args.memory_sizes,
        "methods": args.method,
        "paradigm": args.paradigm,
        "embedding": args.embedding,
        "proj_dim": args.proj_dim,
        "draws": args.draws,
        "jobs": args.jobs,
        "out": args.out,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        cfg = resolve_config(file_values, overrides)
        scenario = build_scenario(cfg)
        config = experiment_config(cfg)
        sizes = _feasible_sizes(cfg, config, scenario)
        config = replace(config, memory_sizes=sizes)
        cfg["memory_sizes"] = sizes
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out_dir = cfg["out"]
    os.makedirs(out_dir, exist_ok=True)
    result = harness.sweep(config, scenario, jobs=cfg["jobs"])
    write_raw_csv(os.path.join(out_dir, "raw.csv"), result.rows)
    write_raw_csv(os.path.join(out_dir, "timings.csv"), result.rows, with_timings=True)
    write_aggregate_csv(os.path.join(out_dir, "aggregate.csv"), result.aggregates)
    write_frequency_csv(os.path.join(out_dir, "class_frequencies.csv"), scenario)
    scenarios.write_scenario_manifest(
        scenario, os.path.join(out_dir, "scenario.txt"), seed=cfg["data_seed"]
    )
    manifest = RunManifest(cfg, config_path, out_dir)
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write(manifest.to_text())
    if result.failures:
        for failure in result.failures:
            print(
                f"cell failed: method={failure.method} memory_size={failure.memory_size} "
                f"seed={failure.seed} task={failure.task_index}: {failure.message}",
                file=sys.stderr,
            )
        return 1
    return 0


def cmd_report(args) -> int:
    raw_path = os.path.join(args.results_dir, "raw.csv")
    freq_path = os.path.join(args.results_dir, "class_frequencies.csv")
    try:
        rows = read_raw_csv(raw_path)
        if not rows:
            raise ValueError(f"{raw_path}: no result rows")
        with open(freq_path) as fh:
            freq_text = fh.read()
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = args.out or args.results_dir
    os.makedirs(out_dir, exist_ok=True)

    num_tasks = max(r.task_index for r in rows) + 1
    aggregates = harness.aggregate_rows(rows, num_tasks)
    write_aggregate_csv(os.path.join(out_dir, "report_final_accuracy.csv"), aggregates)

    size = args.memory_size or max(r.memory_size for r in rows)
    grouped: dict[tuple, list[float]] = {}
    for r in rows:
        if r.memory_size == size:
            key = (r.scenario, r.paradigm, r.method, r.task_index)
            grouped.setdefault(key, []).append(r.test_accuracy)
    with open(os.path.join(out_dir, "report_per_task.csv"), "w", newline="") as fh:
        fh.write("scenario,paradigm,method,memory_size,task_index,mean_acc,std_acc,num_seeds\n")
        for key in sorted(grouped):
            accs = np.asarray(grouped[key])
            std = float(accs.std(ddof=1)) if len(accs) > 1 else 0.0
            fh.write(
                f"{key[0]},{key[1]},{key[2]},{size},{key[3]},"
                f"{float(accs.mean())!r},{std!r},{len(accs)}\n"
            )
    with open(os.path.join(out_dir, "report_class_frequencies.csv"), "w") as fh:
        fh.write(freq_text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmcoreset", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sel = sub.add_parser("select", help="select a weighted coreset from a CSV dataset")
    sel.add_argument("dataset", help="path to a CSV dataset")
    sel.add_argument("-n", "--size", type=int, required=True, help="coreset size")
    sel.add_argument("--out", default="coreset.csv", help="output CSV (row_index, weight)")
    sel.add_argument("--label-column", default="-1", help="label column name or index")
    sel.add_argument("--header", dest="header", action="store_true", default=True)
    sel.add_argument("--no-header", dest="header", action="store_false")
    sel.add_argument("--standardize", dest="standardize", action="store_true", default=True)
    sel.add_argument("--no-standardize", dest="standardize", action="store_false")
    sel.add_argument("--embedding", choices=["random_projection", "last_layer"],
                     default="random_projection")
    sel.add_argument("--proj-dim", type=int, default=2000)
    sel.add_argument("--draws", type=int, default=4)
    sel.add_argument("--init-seed", type=int, default=0)
    sel.add_argument("--proj-seed", type=int, default=0)
    sel.add_argument("--hidden", type=lambda s: _parse_int_list(s), default=(128, 128))

    run = sub.add_parser("run", help="run an experiment sweep from a configuration")
    run.add_argument("--config", help="flat key = value configuration file")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", help="comma-separated seed list")
    run.add_argument("--jobs", help="parallel sweep cells")
    run.add_argument("--memory-sizes", help="comma-separated memory sizes")
    run.add_argument("--method", help="comma-separated method names")
    run.add_argument("--paradigm", choices=["gdumb", "replay"])
    run.add_argument("--embedding", choices=["random_projection", "last_layer"])
    run.add_argument("--proj-dim")
    run.add_argument("--draws")

    rep = sub.add_parser("report", help="summarize a results directory")
    rep.add_argument("results_dir")
    rep.add_argument("--out", help="directory for report tables (default: results dir)")
    rep.add_argument("--memory-size", type=int, help="memory size for the per-task table")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "select":
        return cmd_select(args)
    if args.command == "run":
        return cmd_run(args)
    return cmd_report(args)


if __name__ == "__main__":
    sys.exit(main())
