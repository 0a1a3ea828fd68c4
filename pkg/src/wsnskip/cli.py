"""Command-line front end.

Subcommands::

    wsnskip run       --config cfg.json --out DIR [--seed N] [--force]
    wsnskip schedule  TR1 TR2 HORIZON
    wsnskip sweep     --config cfg.json --param alpha --values 0.5,1,2
    wsnskip gen-trace --kind sine --length 400 ... [--out trace.csv]
    wsnskip train     --config cfg.json [--out DIR]

Exit codes: 0 success, 2 config error, 3 I/O error, 4 simulation error.
Every failure prints one ``wsnskip: error: <Kind>: <message>`` line to stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from .errors import ConfigError, EmptyTrace, InvalidSpec, ParseError, WsnError
from .forecast import evaluate, model_to_dict, predict_closed_loop
from .rma import rma_schedule
from .sim import (
    SimConfig,
    SimReport,
    build_forecaster,
    run_experiment,
    run_training_phase,
)
from .trace import SyntheticSpec, TraceSeries, WaveKind, generate, load_trace, save_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SIM = 4

SWEEP_PARAMS = ("alpha", "tr1", "tr2", "resolution")
REPORT_FORMATS = ("json", "csv")


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def _coerce(value: Any, like: Any, path: str) -> Any:
    if isinstance(like, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, "expected a boolean")
        return value
    if isinstance(like, int):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(path, "expected an integer")
        return value
    if isinstance(like, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "expected a number")
        return float(value)
    if isinstance(like, str):
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    return value


def _build(cls, doc: Any, path: str):
    """Instantiate dataclass ``cls`` from a JSON object, naming bad fields by path."""
    if not isinstance(doc, dict):
        raise ConfigError(path or "<root>", "expected an object")
    template = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    for key in doc:
        if key not in known:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown field")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in doc:
            continue
        sub = f"{path}.{f.name}" if path else f.name
        default = getattr(template, f.name)
        if dataclasses.is_dataclass(default):
            kwargs[f.name] = _build(type(default), doc[f.name], sub)
        elif isinstance(default, WaveKind):
            try:
                kwargs[f.name] = WaveKind(doc[f.name])
            except ValueError:
                raise ConfigError(sub, f"unknown kind {doc[f.name]!r}") from None
        else:
            kwargs[f.name] = _coerce(doc[f.name], default, sub)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        # dataclass __post_init__ messages start with the field name
        name = str(exc).split()[0]
        field = f"{path}.{name}" if path and name in known else (name if name in known else path or "<root>")
        raise ConfigError(field, str(exc)) from None


@dataclasses.dataclass
class RunManifest:
    config_path: Path
    config: SimConfig
    trace_source: dict
    output_dir: Path
    report_formats: tuple[str, ...] = REPORT_FORMATS


def parse_config(doc: dict, base_dir: Path = Path(".")) -> tuple[SimConfig, dict, tuple[str, ...]]:
    """Split a config document into (SimConfig, trace source, report formats)."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected an object")
    doc = dict(doc)
    trace_doc = doc.pop("trace", None)
    formats = doc.pop("report_formats", list(REPORT_FORMATS))
    cfg = _build(SimConfig, doc, "")
    cfg.validate()

    if not isinstance(formats, list) or not formats or any(f not in REPORT_FORMATS for f in formats):
        raise ConfigError("report_formats", f"expected a non-empty subset of {list(REPORT_FORMATS)}")

    if not isinstance(trace_doc, dict) or len({"file", "synthetic"} & set(trace_doc)) != 1:
        raise ConfigError("trace", "expected an object with exactly one of 'file' or 'synthetic'")
    source = dict(trace_doc)
    extra = set(source) - {"file", "synthetic", "sensor_id", "period"}
    if extra:
        raise ConfigError(f"trace.{sorted(extra)[0]}", "unknown field")
    source["sensor_id"] = _coerce(source.get("sensor_id", 0), 0, "trace.sensor_id")
    source["period"] = _coerce(source.get("period", 1.0), 1.0, "trace.period")
    if "file" in source:
        source["file"] = str(base_dir / _coerce(source["file"], "", "trace.file"))
    else:
        spec = _build(SyntheticSpec, source["synthetic"], "trace.synthetic")
        try:
            spec.validate()
        except InvalidSpec as exc:
            raise ConfigError("trace.synthetic", str(exc)) from None
        source["synthetic"] = spec
    return cfg, source, tuple(dict.fromkeys(formats))


def load_config(path: Path) -> tuple[SimConfig, dict, tuple[str, ...]]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return parse_config(doc, Path(path).parent)


def resolve_trace(source: dict, seed: Optional[int] = None) -> TraceSeries:
    if "file" in source:
        return load_trace(source["file"], source["sensor_id"], source["period"])
    spec = source["synthetic"]
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    return generate(spec, source["sensor_id"], source["period"])


def _with_seed(cfg: SimConfig, seed: Optional[int]) -> SimConfig:
    if seed is None:
        return cfg
    cfg = dataclasses.replace(cfg, seed=seed)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _prepare_out(out: Path, names: Sequence[str], force: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if not force:
        for name in names:
            if (out / name).exists():
                raise FileExistsError(f"{out / name} exists (use --force to overwrite)")


def write_report(report: SimReport, out: Path, formats: Sequence[str], force: bool = False) -> list[Path]:
    files = {}
    if "json" in formats:
        files["report.json"] = report.to_json()
    if "csv" in formats:
        files["rounds.csv"] = report.rounds_csv()
        files["summary.csv"] = report.summary_csv()
    _prepare_out(out, list(files), force)
    written = []
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
        written.append(out / name)
    return written


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def load_manifest(config_path: Path, output_dir: Path, seed: Optional[int] = None) -> RunManifest:
    cfg, source, formats = load_config(config_path)
    return RunManifest(config_path, _with_seed(cfg, seed), source, output_dir, formats)


def execute(manifest: RunManifest, seed: Optional[int] = None, force: bool = False) -> SimReport:
    trace = resolve_trace(manifest.trace_source, seed)
    report = run_experiment(trace, manifest.config)
    write_report(report, manifest.output_dir, manifest.report_formats, force)
    return report


def cmd_run(args) -> int:
    manifest = load_manifest(Path(args.config), Path(args.out or "out"), args.seed)
    report = execute(manifest, args.seed, args.force)
    sys.stdout.write(report.summary_csv())
    return EXIT_OK


def cmd_schedule(args) -> int:
    if args.tr1 < 1 or args.tr1 >= args.tr2:
        raise ConfigError("tr1", f"must satisfy 1 <= tr1 < tr2 (got tr1={args.tr1}, tr2={args.tr2})")
    if args.horizon < 1:
        raise ConfigError("horizon", "must be >= 1")
    contacts = rma_schedule(args.tr1, args.tr2, [False] * args.horizon, horizon=args.horizon)
    sys.stdout.write("".join(f"{t}\n" for t in contacts))
    return EXIT_OK


def _parse_values(raw: Sequence[str]) -> list[float]:
    values = []
    for chunk in raw:
        for item in chunk.split(","):
            if not item.strip():
                continue
            try:
                values.append(float(item))
            except ValueError:
                raise ConfigError("values", f"not a number: {item!r}") from None
    return values


def sweep_config(cfg: SimConfig, param: str, value: float) -> SimConfig:
    if param == "alpha":
        new = dataclasses.replace(cfg, alpha=value)
    elif param in ("tr1", "tr2"):
        if not float(value).is_integer():
            raise ConfigError(param, f"must be an integer, got {value}")
        new = dataclasses.replace(cfg, **{param: int(value)})
    else:
        try:
            quant = dataclasses.replace(cfg.quant, resolution=value)
        except ValueError as exc:
            raise ConfigError("quant.resolution", str(exc)) from None
        new = dataclasses.replace(cfg, quant=quant)
    new.validate()
    return new


def run_sweep(cfg: SimConfig, trace: TraceSeries, param: str, values: Sequence[float]) -> list[SimReport]:
    """One experiment per value, in input order, all with the same seed."""
    if param not in SWEEP_PARAMS:
        raise ConfigError("param", f"unknown sweep parameter {param!r}; expected one of {list(SWEEP_PARAMS)}")
    if not values:
        raise ConfigError("values", "at least one value is required")
    configs = [sweep_config(cfg, param, v) for v in values]
    return [run_experiment(trace, c) for c in configs]


def sweep_csv(param: str, values: Sequence[float], reports: Sequence[SimReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param", "value", *SimReport.SUMMARY_COLUMNS])
    for v, rep in zip(values, reports):
        row = [repr(x) if isinstance(x, float) else ("" if x is None else x) for x in rep.summary().values()]
        w.writerow([param, repr(float(v)), *row])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    values = _parse_values(args.values or [])
    cfg, source, _ = load_config(Path(args.config))
    cfg = _with_seed(cfg, args.seed)
    if args.param not in SWEEP_PARAMS:
        raise ConfigError("param", f"unknown sweep parameter {args.param!r}")
    if not values:
        raise ConfigError("values", "at least one value is required")
    trace = resolve_trace(source, args.seed)
    text = sweep_csv(args.param, values, run_sweep(cfg, trace, args.param, values))
    if args.out:
        out = Path(args.out)
        _prepare_out(out, ["sweep.csv"], args.force)
        (out / "sweep.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    spec = SyntheticSpec(
        kind=args.kind,
        amplitude=args.amplitude,
        period_samples=args.period_samples,
        offset=args.offset,
        noise_std=args.noise_std,
        length=args.length,
        seed=args.seed if args.seed is not None else 0,
        trend=args.trend,
    )
    try:
        trace = generate(spec)
    except InvalidSpec as exc:
        raise ConfigError("gen-trace", str(exc)) from None
    if args.out:
        out = Path(args.out)
        if out.exists() and not args.force:
            raise FileExistsError(f"{out} exists (use --force to overwrite)")
        out.parent.mkdir(parents=True, exist_ok=True)
        save_trace(trace, out)
    else:
        sys.stdout.write("t,value\n" + "".join(f"{t},{v!r}\n" for t, v in enumerate(trace.values, 1)))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, source, _ = load_config(Path(args.config))
    cfg = _with_seed(cfg, args.seed)
    trace = resolve_trace(source, args.seed)
    cfg.validate(len(trace))
    collected, _ = run_training_phase(trace, cfg.train_len, cfg.quant, cfg.energy, cfg.alpha)
    model = build_forecaster(cfg.forecaster, collected, cfg.seed)
    preds = predict_closed_loop(model, collected, cfg.horizon) if collected else [0.0] * cfg.horizon
    actual = trace.values[cfg.train_len:cfg.train_len + cfg.horizon]
    report = evaluate(preds, actual)
    text = json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if args.out:
        out = Path(args.out)
        _prepare_out(out, ["model.json", "forecast_report.json"], args.force)
        (out / "model.json").write_text(json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8")
        (out / "forecast_report.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"wsnskip: error: ConfigError: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (or file for gen-trace)")
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--force", action="store_true", help="overwrite existing output files")

    parser = _Parser(prog="wsnskip", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="run one experiment")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("schedule", parents=[common], help="print RMA contact rounds for all-silent replies")
    p.add_argument("tr1", type=int)
    p.add_argument("tr2", type=int)
    p.add_argument("horizon", type=int)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("sweep", parents=[common], help="run one experiment per parameter value")
    p.add_argument("--param", required=True)
    p.add_argument("--values", nargs="+", help="comma- or space-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-trace", parents=[common], help="write a synthetic trace CSV")
    p.add_argument("--kind", default="sine", choices=[k.value for k in WaveKind])
    p.add_argument("--amplitude", type=float, default=10.0)
    p.add_argument("--period-samples", type=int, default=24)
    p.add_argument("--offset", type=float, default=20.0)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--length", type=int, default=400)
    p.add_argument("--trend", type=float, default=0.05)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("train", parents=[common], help="train and evaluate the configured forecaster")
    p.set_defaults(func=cmd_train)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    sys.stderr.write(f"wsnskip: error: {type(exc).__name__}: {message}\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("run", "sweep", "train") and not args.config:
        return _fail(EXIT_CONFIG, ConfigError("config", "--config is required"))
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except FileNotFoundError as exc:
        return _fail(EXIT_IO, FileNotFoundError(f"{exc.strerror or 'not found'}: {exc.filename}"))
    except (OSError, ParseError, EmptyTrace) as exc:
        return _fail(EXIT_IO, exc)
    except (WsnError, ValueError, ArithmeticError) as exc:
        return _fail(EXIT_SIM, exc)


if __name__ == "__main__":
    raise SystemExit(main())
