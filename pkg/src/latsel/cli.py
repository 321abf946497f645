"""Command-line entry point: generate, train, evaluate, select, predict, pipeline.

Every option can also come from an INI-style config file passed with
``--config``. Keys in the ``[latsel]`` section apply to every command, keys
in a section named after the command apply to that command only, and flags
given on the command line win over both. Keys use the option name with
dashes or underscores, for example ``epochs = 50`` or ``full-ranges = yes``.

Exit codes: 0 success, 1 other package error, 2 bad configuration or
arguments, 3 I/O failure, 4 non-finite training loss, 5 missing model or
evaluation input, or a schema mismatch.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import __version__
from .dataset import dataset_path, default_count, generate_dataset, load_dataset, save_dataset, split_dataset
from .errors import (
    ChecksumFailure,
    DimensionMismatch,
    InvalidConfig,
    LatselError,
    MalformedHeader,
    MissingFeature,
    MissingInput,
    NonFiniteLoss,
    SchemaMismatch,
    VersionMismatch,
)
from .kernels import clock_from_env
from .kinds import ALL_KINDS, ModuleKind
from .load import LoadProfile
from .metrics import EvalResult, averages, evaluate
from .params import (
    DESK_RANGES,
    MEASURABLE_ORDER,
    FULL_RANGES,
    SamplingConfig,
    compute_inferables,
    features_from_mapping,
    validate_config,
)
from .probe import default_probe, parse_probe_spec
from .regressors import ForestConfig, RegressorId, TrainConfig, fit_regressor, load_model, model_path, save_model
from .select import Objective, SelectionConfig, auto_select, baseline_delta

log = logging.getLogger("latsel")

REPORT_FORMAT = "latsel-report"
REPORT_VERSION = 1
MANIFEST_NAME = "manifest.json"
DEFAULT_ROSTER = "LR,MLP,RF,MEDN"

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_IO, EXIT_NONFINITE, EXIT_MISSING = 0, 1, 2, 3, 4, 5


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# --- argument types -----------------------------------------------------------


def _kinds(text: str) -> tuple[ModuleKind, ...]:
    if text.strip().lower() == "all":
        return ALL_KINDS
    try:
        kinds = tuple(dict.fromkeys(ModuleKind.parse(t) for t in text.split(",") if t.strip()))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    return kinds


def _roster(text: str) -> tuple[RegressorId, ...]:
    try:
        return tuple(dict.fromkeys(RegressorId.parse(t.strip()) for t in text.split(",") if t.strip()))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _objectives(text: str) -> tuple[Objective, ...]:
    if text.strip().lower() == "both":
        return (Objective.TIME_PER_SAMPLE, Objective.MODEL_SIZE)
    try:
        return tuple(dict.fromkeys(Objective.parse(t) for t in text.split(",") if t.strip()))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


# --- parser -------------------------------------------------------------------


def _add_generate_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kinds", type=_kinds, default="all", help="comma-separated module kinds, or 'all'")
    p.add_argument("--count", type=_positive_int, default=None,
                   help="samples per kind (default 10000 for conv kinds, 2000 otherwise)")
    p.add_argument("--dynamic", action="store_true", help="run background inference jobs while measuring")
    p.add_argument("--full-ranges", action="store_true",
                   help="draw from the unrestricted parameter ranges instead of the desk-sized budgets")
    p.add_argument("--warmups", type=_positive_int, default=3)
    p.add_argument("--repeats", type=_positive_int, default=7)


def _add_train_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--roster", type=_roster, default=DEFAULT_ROSTER, help="comma-separated regressor labels")
    p.add_argument("--epochs", type=_positive_int, default=500)
    p.add_argument("--lr", type=float, default=0.005, help="learning rate")
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--trees", type=_positive_int, default=100, help="random forest size")


def _add_select_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--objective", type=_objectives, default="both", help="time, space or both")
    p.add_argument("--eps-a", type=float, default=0.05, help="accuracy tolerance")
    p.add_argument("--eps-r", type=float, default=0.05, help="R^2 tolerance")
    p.add_argument("--baseline", type=RegressorId.parse, default="MEDN", help="single-selection baseline")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latsel", description="Latency prediction for DNN modules.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="INI config file; command-line flags override it")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="measure modules and write datasets")
    _add_generate_opts(g)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="data", help="existing output directory")

    t = sub.add_parser("train", help="train regressors on generated datasets")
    t.add_argument("--kinds", type=_kinds, default="all")
    _add_train_opts(t)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--data", default="data")
    t.add_argument("--models", default="models")

    e = sub.add_parser("evaluate", help="score trained regressors on the test split")
    e.add_argument("--kinds", type=_kinds, default=None, help="default: every kind in the model manifest")
    e.add_argument("--roster", type=_roster, default=None, help="default: the trained roster")
    e.add_argument("--p10", action="store_true", help="also report P10 accuracy")
    e.add_argument("--data", default="data")
    e.add_argument("--models", default="models")
    e.add_argument("--out", default="evaluation.json")

    s = sub.add_parser("select", help="pick one regressor per module from an evaluation report")
    _add_select_opts(s)
    s.add_argument("--report", default="evaluation.json", help="evaluation report to read")
    s.add_argument("--out", default="selection.json")

    p = sub.add_parser("predict", help="predict the latency of one module instance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="model file")
    src.add_argument("--selection", help="selection report; routes to the selected regressor")
    p.add_argument("--models", default="models", help="model directory used with --selection")
    p.add_argument("--objective", type=Objective.parse, default=None,
                   help="which selection map to use (default: the first in the report)")
    p.add_argument("--probe", default=None,
                   help="'live' or fake:<mem>:<util>; fills M and U from the device probe")
    p.add_argument("descriptor", help="kind=<kind>,N=..,C_i=..,... (M and U optional)")

    pl = sub.add_parser("pipeline", help="generate, train, evaluate and select in one run")
    _add_generate_opts(pl)
    _add_train_opts(pl)
    _add_select_opts(pl)
    pl.add_argument("--p10", action="store_true")
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--workdir", default=".", help="data/, models/ and reports/ are created here")
    return parser


_TRUE, _FALSE = {"1", "yes", "true", "on"}, {"0", "no", "false", "off"}


def _apply_config(parser: argparse.ArgumentParser, command: str, path: str) -> None:
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as e:
        raise CommandError(EXIT_IO, f"cannot read config {path}: {e}") from None
    except configparser.Error as e:
        raise CommandError(EXIT_CONFIG, f"bad config {path}: {e}") from None
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices
    unknown_sections = set(cp.sections()) - {"latsel", *sub}
    if unknown_sections:
        raise CommandError(EXIT_CONFIG, f"unknown config sections: {sorted(unknown_sections)}")
    known_anywhere = {a.dest for p in sub.values() for a in p._actions}
    cmd_parser = sub[command]
    actions = {a.dest: a for a in cmd_parser._actions}
    defaults = {}
    for section in ("latsel", command):
        if not cp.has_section(section):
            continue
        for key, value in cp.items(section):
            dest = key.replace("-", "_")
            if dest not in known_anywhere:
                raise CommandError(EXIT_CONFIG, f"unknown config key {key!r} in [{section}]")
            action = actions.get(dest)
            if action is None:
                continue
            if isinstance(action, argparse._StoreTrueAction):
                v = value.strip().lower()
                if v not in _TRUE | _FALSE:
                    raise CommandError(EXIT_CONFIG, f"{key}: expected a boolean, got {value!r}")
                defaults[dest] = v in _TRUE
            else:
                # argparse applies the option's type to string defaults
                defaults[dest] = value
    cmd_parser.set_defaults(**defaults)


def parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config:
        command = next((a for a in rest if a in _COMMANDS), None)
        if command is not None:
            _apply_config(parser, command, known.config)
    return parser.parse_args(argv)


# --- reports ------------------------------------------------------------------


def report_schema() -> dict:
    """JSON schema that every evaluate and select report validates against."""
    return json.loads(resources.files("latsel").joinpath("schemas/report.schema.json").read_text(encoding="utf-8"))


def _report(command: str, config: dict, **body) -> dict:
    return {"format": REPORT_FORMAT, "version": REPORT_VERSION, "command": command, "config": config, **body}


def write_json(path: Path, doc: dict) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    path.write_text(text, encoding="utf-8")


def read_report(path: Path, command: str) -> dict:
    if not path.is_file():
        raise MissingInput(f"{path} not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaMismatch(f"{path}: not JSON ({e})") from None
    if doc.get("format") != REPORT_FORMAT or doc.get("command") != command:
        raise SchemaMismatch(f"{path}: not a latsel {command} report")
    if doc.get("version") != REPORT_VERSION:
        raise SchemaMismatch(f"{path}: report version {doc.get('version')}, expected {REPORT_VERSION}")
    return doc


def _result_row(res: EvalResult, p10: bool) -> dict:
    row = res.to_dict()
    if not p10:
        row.pop("acc10")
    return row


# --- commands -----------------------------------------------------------------


def _ensure_dir(path: Path, what: str) -> Path:
    if not path.is_dir():
        raise CommandError(EXIT_IO, f"{what} directory {path} does not exist")
    return path


def run_generate(args: argparse.Namespace, out_dir: Path) -> dict[str, dict]:
    _ensure_dir(out_dir, "output")
    ranges = FULL_RANGES if args.full_ranges else DESK_RANGES
    load = LoadProfile(enabled=True, seed=args.seed) if args.dynamic else None
    clock = clock_from_env()
    summary = {}
    for i, kind in enumerate(args.kinds):
        count = args.count or default_count(kind)
        records = generate_dataset(
            kind, count, load, seed=args.seed + i, ranges=ranges, clock=clock,
            warmups=args.warmups, repeats=args.repeats,
        )
        save_dataset(dataset_path(out_dir, kind), records, kind=kind, seed=args.seed + i, load=load, ranges=ranges)
        failures = sum(r.probe_flagged for r in records)
        summary[kind.value] = {"samples": len(records), "probe_failures": failures}
        print(f"{kind.value}: {len(records)} samples, {failures} probe failures")
    return summary


def run_train(args, data_dir: Path, models_dir: Path) -> dict:
    if not args.roster:
        raise CommandError(EXIT_CONFIG, "empty roster")
    _ensure_dir(models_dir, "models")
    train_cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size, seed=args.seed)
    forest_cfg = ForestConfig(tree_count=args.trees, seed=args.seed)
    entries = []
    for kind in args.kinds:
        path = dataset_path(data_dir, kind)
        if not path.is_file():
            raise CommandError(EXIT_IO, f"dataset {path} not found; run generate first")
        split = split_dataset(load_dataset(path), args.seed)
        (models_dir / kind.value).mkdir(exist_ok=True)
        for rid in args.roster:
            model = fit_regressor(rid, split, train_cfg, forest_cfg=forest_cfg)
            target = model_path(models_dir, kind, rid)
            size = save_model(target, model)
            entry = {"module": kind.value, "regressor": rid.label, "file": f"{kind.value}/{target.name}",
                     "size_bytes": size}
            if model.history:
                _write_loss_csv(target.with_suffix(".loss.csv"), model.history)
                entry["initial_loss"] = model.history["train"][0]
                entry["final_loss"] = model.history["train"][-1]
                entry["best_epoch"] = model.history["best_epoch"]
                print(f"{kind.value}/{rid.label}: loss {entry['initial_loss']:.4g} -> {entry['final_loss']:.4g}")
            else:
                print(f"{kind.value}/{rid.label}: fitted")
            entries.append(entry)
    manifest = {
        "format": "latsel-models",
        "version": REPORT_VERSION,
        "seed": args.seed,
        "kinds": [k.value for k in args.kinds],
        "roster": [r.label for r in args.roster],
        "train": train_cfg.to_dict(),
        "forest": forest_cfg.to_dict(),
        "models": entries,
    }
    write_json(models_dir / MANIFEST_NAME, manifest)
    return manifest


def _write_loss_csv(path: Path, history: dict) -> None:
    val = history.get("validation") or []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "validation_loss"])
        for epoch, loss in enumerate(history["train"]):
            w.writerow([epoch, repr(float(loss)), repr(float(val[epoch])) if epoch < len(val) else ""])


def _read_manifest(models_dir: Path) -> dict:
    path = models_dir / MANIFEST_NAME
    if not path.is_file():
        raise MissingInput(f"{path} not found; run train first")
    return json.loads(path.read_text(encoding="utf-8"))


def run_evaluate(args, data_dir: Path, models_dir: Path, out: Path) -> dict:
    manifest = _read_manifest(models_dir)
    kinds = args.kinds if args.kinds is not None else tuple(ModuleKind.parse(k) for k in manifest["kinds"])
    roster = args.roster if args.roster is not None else tuple(RegressorId.parse(r) for r in manifest["roster"])
    if not roster or not kinds:
        raise CommandError(EXIT_CONFIG, "empty roster or kind list")
    missing = [model_path(models_dir, k, r) for k in kinds for r in roster if not model_path(models_dir, k, r).is_file()]
    if missing:
        raise MissingInput("missing model files: " + ", ".join(str(m) for m in missing))
    clock = clock_from_env()
    seed = manifest["seed"]
    results = []
    for kind in kinds:
        path = dataset_path(data_dir, kind)
        if not path.is_file():
            raise CommandError(EXIT_IO, f"dataset {path} not found")
        split = split_dataset(load_dataset(path), seed)
        for rid in roster:
            model = load_model(model_path(models_dir, kind, rid))
            if model.schema.kind is not kind:
                raise SchemaMismatch(f"{model_path(models_dir, kind, rid)} was trained for {model.schema.kind}")
            res = evaluate(model, kind, split.test, clock=clock)
            results.append(res)
            extra = f" P10 {res.acc10:.4f}" if args.p10 else ""
            print(f"{kind.value}/{rid.label}: P20 {res.acc:.4f}{extra} R2 {res.r:.4f} "
                  f"Tps {res.tps_ms:.4g} ms Size {res.size_kb:.4g} KB")
    avg = averages(results)
    if not args.p10:
        for v in avg.values():
            v.pop("acc10")
    config = {
        "kinds": [k.value for k in kinds],
        "roster": [r.label for r in roster],
        "seed": seed,
        "p10": bool(args.p10),
        "train": manifest.get("train"),
    }
    doc = _report("evaluate", config, results=[_result_row(r, args.p10) for r in results], averages=avg)
    write_json(out, doc)
    return doc


def run_select(args, report: Path, out: Path) -> dict:
    evaluation = read_report(report, "evaluate")
    try:
        results = [EvalResult.from_dict(row) for row in evaluation["results"]]
    except (KeyError, ValueError, TypeError) as e:
        raise SchemaMismatch(f"{report}: bad result row ({e})") from None
    selections = []
    for objective in args.objective:
        cfg = SelectionConfig(args.eps_a, args.eps_r, objective)
        sel = auto_select(results, cfg)
        selections.append({
            "objective": objective.value,
            "mapping": sel.labels(),
            "audits": [sel.audits[m].to_dict() for m in sorted(sel.audits, key=lambda m: m.value)],
            "baseline_delta": baseline_delta(results, sel, args.baseline),
        })
        print(f"[{objective.value}] " + ", ".join(f"{m}: {label}" for m, label in sel.labels().items()))
    config = {
        "epsilon_a": args.eps_a,
        "epsilon_r": args.eps_r,
        "objectives": [o.value for o in args.objective],
        "baseline": args.baseline.label,
        "evaluation": evaluation["config"],
    }
    doc = _report("select", config, selections=selections)
    write_json(out, doc)
    return doc


_DESCRIPTOR_NAMES = {n.lower(): n for n in ("N", "C_i", "C_o", "K", "S", "L", "M", "U", "N_d", "N_m")}


def parse_descriptor(text: str) -> tuple[ModuleKind, dict[str, float]]:
    """``kind=conv,N=2,L=32,C_i=16,C_o=32,K=3,S=1[,M=..,U=..]`` -> (kind, feature values)."""
    values: dict[str, float] = {}
    kind = None
    for part in text.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise InvalidConfig(f"descriptor entry {part!r} is not key=value")
        key, value = (s.strip() for s in part.split("=", 1))
        if key.lower() == "kind":
            kind = ModuleKind.parse(value)
            continue
        name = _DESCRIPTOR_NAMES.get(key.lower())
        if name is None:
            raise InvalidConfig(f"unknown descriptor key {key!r}")
        try:
            values[name] = float(value)
        except ValueError:
            raise InvalidConfig(f"descriptor value for {key} is not a number: {value!r}") from None
    if kind is None:
        raise InvalidConfig("descriptor needs kind=<module kind>")
    return kind, values


def run_predict(args) -> float:
    try:
        kind, values = parse_descriptor(args.descriptor)
        cfg = SamplingConfig.from_features(kind, values)
        validate_config(kind, cfg, strict=False)
    except (MissingFeature, ValueError) as e:
        raise CommandError(EXIT_CONFIG, f"malformed descriptor: {e}") from None
    if args.probe is not None or any(m not in values for m in MEASURABLE_ORDER):
        probe = parse_probe_spec(args.probe) if args.probe is not None else default_probe()
        state = probe()
        values["M"], values["U"] = float(state.available_memory_bytes), float(state.utilization)
    for name, v in compute_inferables(kind, cfg).as_features(kind).items():
        values.setdefault(name, float(v))

    if args.model:
        path = Path(args.model)
    else:
        doc = read_report(Path(args.selection), "select")
        sels = doc["selections"]
        if args.objective is not None:
            sels = [s for s in sels if s["objective"] == args.objective.value]
        if not sels:
            raise SchemaMismatch(f"{args.selection}: no selection for objective {args.objective}")
        label = sels[0]["mapping"].get(kind.value)
        if label is None:
            raise SchemaMismatch(f"{args.selection}: no regressor selected for {kind.value}")
        path = model_path(args.models, kind, RegressorId.parse(label))
    if not path.is_file():
        raise MissingInput(f"model {path} not found")
    model = load_model(path)
    if model.schema.kind is not kind:
        raise SchemaMismatch(f"{path} predicts {model.schema.kind}, descriptor is {kind}")
    x = features_from_mapping(values, model.schema)
    latency = model.predict(x)
    print(f"{latency:.6g} ms ({kind.value} via {model.rid.label})")
    return latency


def run_pipeline(args) -> dict:
    work = Path(args.workdir)
    data, models, reports = work / "data", work / "models", work / "reports"
    for d in (data, models, reports):
        d.mkdir(parents=True, exist_ok=True)
    run_generate(args, data)
    run_train(args, data, models)
    eval_args = argparse.Namespace(kinds=args.kinds, roster=args.roster, p10=args.p10)
    run_evaluate(eval_args, data, models, reports / "evaluation.json")
    return run_select(args, reports / "evaluation.json", reports / "selection.json")


_COMMANDS = ("generate", "train", "evaluate", "select", "predict", "pipeline")


def _dispatch(args) -> None:
    if args.command == "generate":
        run_generate(args, Path(args.out))
    elif args.command == "train":
        run_train(args, Path(args.data), Path(args.models))
    elif args.command == "evaluate":
        run_evaluate(args, Path(args.data), Path(args.models), Path(args.out))
    elif args.command == "select":
        run_select(args, Path(args.report), Path(args.out))
    elif args.command == "predict":
        run_predict(args)
    else:
        run_pipeline(args)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, CommandError):
        return exc.code
    if isinstance(exc, NonFiniteLoss):
        return EXIT_NONFINITE
    if isinstance(exc, (MissingInput, SchemaMismatch, VersionMismatch, ChecksumFailure, DimensionMismatch)):
        return EXIT_MISSING
    if isinstance(exc, (OSError, MalformedHeader)):
        return EXIT_IO
    if isinstance(exc, (InvalidConfig, ValueError)):
        return EXIT_CONFIG
    return EXIT_ERROR


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except CommandError as e:
        print(f"latsel: error: {e}", file=sys.stderr)
        return e.code
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _dispatch(args)
    except (CommandError, LatselError, OSError, ValueError) as e:
        print(f"latsel: error: {e}", file=sys.stderr)
        return exit_code_for(e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
