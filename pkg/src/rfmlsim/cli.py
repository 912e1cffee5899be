"""Command-line entry point.

Settings resolve in three layers: built-in defaults, then an optional
``--config`` file, then command-line flags. The config file is INI-style
``key = value`` text with one section per module (``[dataset]``, ``[model]``,
``[train]``, ``[experiment]``) plus ``[run]`` for paths; unknown sections or
keys are rejected. Every command writes a manifest in the same format, so
``rfmlsim <command> --config <manifest>`` repeats the run.

Exit codes: 0 success, 2 configuration or usage error, 3 I/O or file-format
error, 4 invalid input.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import logging
import os
import sys

from . import __version__
from . import experiments as ex
from .classifier import ModelConfig, TrainConfig, evaluate, load_params, save_params, train
from .dataset import DatasetSpec, generate, load, save, split
from .errors import ConfigError, FileFormatError, InvalidInputError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INVALID = 0, 2, 3, 4

_MODEL_KEYS = ("conv1_channels", "conv2_channels", "kernel_width", "fc1_units", "norm_mode", "dropout_rate")
_SPLIT_DEFAULTS = {"split_seed": 0, "test_frac": 0.30, "val_frac": 0.05}
_RUN_KEYS = {"version", "command", "dataset", "model", "models", "datasets", "output", "history",
             "accuracy_table", "manifest"}

log = logging.getLogger("rfmlsim")


# ----------------------------------------------------------------------------
# layered settings


def _section_defaults() -> dict[str, dict]:
    sweep = {f.name: f.default for f in dataclasses.fields(ex.SweepConfig)}
    return {
        "dataset": DatasetSpec().to_dict(),
        "model": {k: getattr(ModelConfig(128, 2), k) for k in _MODEL_KEYS},
        "train": {**TrainConfig().to_dict(), **_SPLIT_DEFAULTS},
        "experiment": sweep,
    }


def _parse_scalar(text: str, like):
    text = text.strip()
    if like is None or isinstance(like, float):
        if text.lower() in ("off", "none", ""):
            if like is None:
                return None
            raise ConfigError(f"expected a number, got {text!r}")
        return float(text)
    if isinstance(like, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(text)
    return text


def _parse_value(text: str, default):
    try:
        if isinstance(default, (tuple, list)):
            like = default[0] if default else ""
            if isinstance(like, int) and not isinstance(like, bool):
                like = float(like) if "." in text or "inf" in text.lower() else like
            return tuple(_parse_scalar(p, like) for p in text.split(",") if p.strip())
        return _parse_scalar(text, default)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {text!r}: {exc}") from exc


def _format_value(value) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(v) for v in value)
    if value is None:
        return "off"
    if isinstance(value, float):
        return repr(value + 0.0)
    return str(value)


def read_config(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    known = _section_defaults()
    out = {}
    for section in parser.sections():
        allowed = _RUN_KEYS if section == "run" else set(known.get(section, ()))
        if not allowed:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in allowed:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
        out[section] = dict(parser[section])
    return out


def resolve(section: str, file_cfg: dict, flags: dict, seed_default: int | None, seed_override: int | None) -> dict:
    """Merge defaults < RFML_SEED < config file < flags for one section."""
    values = dict(_section_defaults()[section])
    seed_keys = [k for k in ("seed", "split_seed") if k in values]
    if seed_default is not None:
        for k in seed_keys:
            values[k] = seed_default
    for key, text in file_cfg.get(section, {}).items():
        values[key] = _parse_value(text, values[key])
    if seed_override is not None:
        for k in seed_keys:
            values[k] = seed_override
    values.update({k: v for k, v in flags.items() if v is not None})
    return values


def write_manifest(path, command: str, sections: dict[str, dict], run: dict) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["run"] = {"version": __version__, "command": command,
                     **{k: _format_value(v) for k, v in run.items() if v is not None}}
    for name, values in sections.items():
        parser[name] = {k: _format_value(v) for k, v in values.items()}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def _echo(sections: dict[str, dict]) -> None:
    for name, values in sections.items():
        print(f"[{name}]")
        for k, v in values.items():
            print(f"{k} = {_format_value(v)}")


# ----------------------------------------------------------------------------
# commands


def _run_paths(args, file_cfg, *names) -> dict:
    run = file_cfg.get("run", {})
    return {n: getattr(args, n, None) if getattr(args, n, None) is not None else run.get(n) for n in names}


def _require(paths: dict, *names):
    for n in names:
        if not paths.get(n):
            raise ConfigError(f"missing required path: --{n.replace('_', '-')}")


def cmd_gen_dataset(args, file_cfg, seeds) -> int:
    flags = {"input_size": args.input_size, "examples_per_class_per_snr": args.examples_per_cell,
             "rolloffs": args.rolloffs, "spans": args.spans}
    values = resolve("dataset", file_cfg, flags, *seeds)
    try:
        spec = DatasetSpec.from_dict(values)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc
    paths = _run_paths(args, file_cfg, "output")
    _require(paths, "output")
    _echo({"dataset": spec.to_dict()})
    ds = generate(spec)
    save(ds, paths["output"])
    write_manifest(_manifest_path(args, paths["output"]), "gen-dataset", {"dataset": spec.to_dict()}, paths)
    print(f"wrote {len(ds)} examples to {paths['output']}")
    for (scheme, snr), n in sorted(ds.cell_counts().items(), key=lambda kv: (kv[0][0], kv[0][1])):
        print(f"  {scheme:6s} {snr:5.1f} dB  {n}")
    return EXIT_OK


def _manifest_path(args, output) -> str:
    return getattr(args, "manifest", None) or f"{output}.manifest"


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_value(v) for v in row])


def _split_of(ds, train_values: dict):
    return split(ds, test_frac=train_values["test_frac"], val_frac_of_train=train_values["val_frac"],
                 seed=train_values["split_seed"])


def accuracy_vs_snr(params, test) -> list[tuple]:
    rows = []
    for snr in sorted(set(test.es_n0.tolist())):
        mask = test.es_n0 == snr
        rows.append((float(snr), evaluate(params, test.x[mask], test.labels[mask])[1], int(mask.sum())))
    return rows


def cmd_train(args, file_cfg, seeds) -> int:
    paths = _run_paths(args, file_cfg, "dataset", "output", "history", "accuracy_table")
    _require(paths, "dataset", "output")
    model_values = resolve("model", file_cfg, {"norm_mode": args.norm_mode}, None, None)
    train_values = resolve("train", file_cfg, {"max_epochs": args.max_epochs}, *seeds)
    split_keys = tuple(_SPLIT_DEFAULTS)
    try:
        tcfg = TrainConfig(**{k: v for k, v in train_values.items() if k not in split_keys})
    except (InvalidInputError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    ds = load(paths["dataset"])
    try:
        mcfg = ModelConfig(input_size=ds.spec.input_size, num_classes=len(ds.class_names),
                           class_names=ds.class_names, **model_values)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc
    _echo({"model": model_values, "train": train_values})
    tr, va, te = _split_of(ds, train_values)
    params, history = train((tr.x, tr.labels), (va.x, va.labels), mcfg, tcfg,
                            progress=lambda r: print(f"epoch {r['epoch']}: train_loss {r['train_loss']:.4f} "
                                                     f"val_loss {r['val_loss']:.4f} val_acc {r['val_acc']:.3f}"))
    params.meta.update({k: train_values[k] for k in split_keys})
    params.meta["dataset_seed"] = ds.spec.seed
    save_params(params, paths["output"])
    if paths["history"]:
        cols = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")
        _write_csv(paths["history"], cols, [[row[c] for c in cols] for row in history])
    table = accuracy_vs_snr(params, te)
    if paths["accuracy_table"]:
        _write_csv(paths["accuracy_table"], ("es_n0_db", "accuracy", "count"), table)
    print("es_n0_db,accuracy,count")
    for snr, acc, count in table:
        print(f"{snr:g},{acc:.4f},{count}")
    write_manifest(_manifest_path(args, paths["output"]), "train",
                   {"model": model_values, "train": train_values}, paths)
    return EXIT_OK


def _test_split(model, dataset_path):
    ds = load(dataset_path)
    meta = model.meta
    values = {k: meta.get(k, v) for k, v in _SPLIT_DEFAULTS.items()}
    return _split_of(ds, values)[2]


def _sweep_config(args, file_cfg, seeds, name) -> ex.SweepConfig:
    flags = {"trials": args.trials, "es_ej_grid": args.es_ej_grid, "es_n0_grid": args.es_n0_grid,
             "schemes": args.scheme, "example_scheme": args.example_scheme, "example_index": args.example_index,
             "max_examples": args.max_examples}
    values = resolve("experiment", file_cfg, {k: v for k, v in flags.items() if v is not None}, *seeds)
    base = dataclasses.asdict(ex.default_config(name))
    # experiment-specific defaults apply to keys the file and flags leave alone
    explicit = set(file_cfg.get("experiment", {})) | {k for k, v in flags.items() if v is not None}
    merged = {k: (values[k] if k in explicit or k == "seed" else base[k]) for k in base}
    merged["experiment"] = name
    try:
        return ex.SweepConfig(**merged)
    except (InvalidInputError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_experiment(args, file_cfg, seeds) -> int:
    name = args.name or file_cfg.get("experiment", {}).get("experiment")
    if name not in ex.EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {', '.join(ex.EXPERIMENTS)}")
    paths = _run_paths(args, file_cfg, "model", "dataset", "models", "datasets", "output")
    _require(paths, "output")
    cfg = _sweep_config(args, file_cfg, seeds, name)
    _echo({"experiment": cfg.to_dict()})
    threads = max(1, args.threads)

    if name == "input-size":
        models_arg, data_arg = paths["models"], paths["datasets"]
        _require(paths, "models", "datasets")
        model_paths = [p.strip() for p in _as_text(models_arg).split(",")]
        data_paths = [p.strip() for p in _as_text(data_arg).split(",")]
        if len(model_paths) != len(data_paths):
            raise InvalidInputError("--models and --datasets must list the same number of files")
        models, tests = {}, {}
        for mp, dp in zip(model_paths, data_paths):
            m = load_params(mp)
            models[m.config.input_size] = m
            tests[m.config.input_size] = _test_split(m, dp)
        records, rankings = ex.run_input_size_study(models, tests, cfg, threads)
        for es_ej, order in rankings:
            print(f"Es/Ej {es_ej:g} dB: " + " > ".join(str(n) for n in order))
    else:
        _require(paths, "model")
        model = load_params(paths["model"])
        if name in ("direct-access", "logit-sweep", "mutation"):
            _require(paths, "dataset")
            test = _test_split(model, paths["dataset"])
        if name == "direct-access":
            records = ex.run_direct_access_sweep(model, test, cfg, threads)
        elif name == "logit-sweep":
            x, idx = ex.select_example(test, cfg.example_scheme, cfg.example_index)
            records = ex.run_logit_sweep(model, x, cfg.example_scheme, cfg, idx)
        elif name == "mutation":
            x, idx = ex.select_example(test, cfg.example_scheme, cfg.example_index)
            records = ex.run_mutation_test(model, x, cfg.example_scheme, cfg, idx, threads)
        elif name == "self-protect":
            records = ex.run_self_protect_grid(model, cfg, threads)
        elif name == "freq-offset":
            records = ex.run_freq_offset_sweep(model, cfg, threads)
        else:
            records = ex.run_time_offset_sweep(model, cfg, threads)

    ex.write_records(paths["output"], records)
    write_manifest(_manifest_path(args, paths["output"]), "experiment", {"experiment": cfg.to_dict()}, paths)
    print(f"wrote {len(records)} records to {paths['output']}")
    return EXIT_OK


def _as_text(value) -> str:
    return ",".join(value) if isinstance(value, (list, tuple)) else str(value)


# ----------------------------------------------------------------------------
# plot data


def _acc_rows(records, keys):
    acc = ex.accuracy_by(records, keys)
    return [(*k, a, n) for k, (a, n) in sorted(acc.items())]


def plot_rows(records, figure: str) -> tuple[tuple, list]:
    """Aggregate trial records into the series one figure would plot."""
    if figure == "direct-access":
        return ("family", "es_ej_db", "accuracy", "count"), _acc_rows(records, ("family", "es_ej_db"))
    if figure == "input-size":
        rank = {(e, n): r + 1 for e, order in ex.accuracy_rankings(records) for r, n in enumerate(order)}
        rows = _acc_rows(records, ("es_ej_db", "input_size"))
        return ("es_ej_db", "input_size", "accuracy", "count", "rank"), [(*r, rank[r[:2]]) for r in rows]
    if figure == "logit-sweep":
        if any(not r.logits for r in records):
            raise FileFormatError("logit-sweep plot data needs records carrying logits")
        width = len(records[0].logits)
        header = ("es_ej_db", "delta_logits", "predicted") + tuple(f"logit_{i}" for i in range(width))
        return header, [(r.es_ej_db, r.delta_logits, r.predicted, *r.logits) for r in records]
    if figure == "mutation":
        rows = sorted(ex.mutation_summary(records), key=lambda d: -d["es_n0_db"])
        return ("es_n0_db", "mean", "p25", "p75"), [(d["es_n0_db"], d["mean"], d["p25"], d["p75"]) for d in rows]
    if figure == "self-protect":
        rows = sorted(ex.self_protect_summary(records),
                      key=lambda d: (d["scheme"], d["family"], d["es_ej_db"], d["es_n0_db"]))
        header = ("scheme", "family", "es_ej_db", "es_n0_db", "ber", "accuracy", "trials")
        return header, [tuple(d[h] for h in header) for d in rows]
    if figure == "freq-offset":
        return (("family", "es_ej_db", "es_n0_db", "cfo", "accuracy", "count"),
                _acc_rows(records, ("family", "es_ej_db", "es_n0_db", "cfo")))
    if figure == "time-offset":
        return (("family", "es_ej_db", "es_n0_db", "time_offset", "accuracy", "count"),
                _acc_rows(records, ("family", "es_ej_db", "es_n0_db", "time_offset")))
    raise ConfigError(f"unknown figure {figure!r}; expected one of {', '.join(ex.EXPERIMENTS)}")


def cmd_plotdata(args, file_cfg, seeds) -> int:
    records = ex.read_records(args.csv)
    if not records:
        raise FileFormatError(f"{args.csv} holds no records")
    header, rows = plot_rows(records, args.figure)
    if args.output:
        _write_csv(args.output, header, rows)
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_value(v) for v in row])
    return EXIT_OK


# ----------------------------------------------------------------------------
# argument parsing


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfmlsim", description="Adversarial evasion studies for modulation classifiers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="INI-style settings file (a manifest from a previous run works too)")
    p.add_argument("--seed", type=int, help="seed for every stage; overrides the config file and RFML_SEED")
    p.add_argument("--threads", type=int, default=1, help="worker threads for experiment sweeps")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", help="generate a labelled dataset")
    g.add_argument("-o", "--output")
    g.add_argument("--input-size", type=int)
    g.add_argument("--examples-per-cell", type=int, help="examples per (class, Es/N0) cell")
    g.add_argument("--rolloffs", type=_floats)
    g.add_argument("--spans", type=_ints)
    g.add_argument("--manifest")
    g.set_defaults(func=cmd_gen_dataset)

    t = sub.add_parser("train", help="train a classifier on a dataset file")
    t.add_argument("--dataset")
    t.add_argument("-o", "--output", help="model file to write")
    t.add_argument("--history", help="per-epoch history CSV")
    t.add_argument("--accuracy-table", help="test accuracy per Es/N0 CSV")
    t.add_argument("--max-epochs", type=int)
    t.add_argument("--norm-mode", choices=("batchnorm", "dropout"))
    t.add_argument("--manifest")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("experiment", help="run one study and write its trial records")
    e.add_argument("name", nargs="?", help=", ".join(ex.EXPERIMENTS))
    e.add_argument("--model")
    e.add_argument("--dataset")
    e.add_argument("--models", help="comma-separated model files (input-size study)")
    e.add_argument("--datasets", help="comma-separated dataset files, same order as --models")
    e.add_argument("-o", "--output")
    e.add_argument("--manifest")
    e.add_argument("--trials", type=int)
    e.add_argument("--es-ej-grid", type=_floats)
    e.add_argument("--es-n0-grid", type=_floats)
    e.add_argument("--scheme", type=lambda s: tuple(v.strip() for v in s.split(",")),
                   help="comma-separated source schemes for transmitter studies")
    e.add_argument("--example-scheme")
    e.add_argument("--example-index", type=int)
    e.add_argument("--max-examples", type=int)
    e.set_defaults(func=cmd_experiment)

    d = sub.add_parser("plotdata", help="aggregate a record CSV into plot-ready series")
    d.add_argument("csv")
    d.add_argument("figure", help=", ".join(ex.EXPERIMENTS))
    d.add_argument("-o", "--output")
    d.set_defaults(func=cmd_plotdata)
    return p


def _env_seed() -> int | None:
    text = os.environ.get("RFML_SEED")
    if text is None or not text.strip():
        return None
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"RFML_SEED must be an integer, got {text!r}") from exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        file_cfg = read_config(args.config) if args.config else {}
        command = file_cfg.get("run", {}).get("command")
        if command and command != args.command:
            raise ConfigError(f"config file was written by {command!r}, not {args.command!r}")
        return args.func(args, file_cfg, (_env_seed(), args.seed))
    except ConfigError as exc:
        print(f"rfmlsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FileFormatError) as exc:
        print(f"rfmlsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvalidInputError as exc:
        print(f"rfmlsim: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
