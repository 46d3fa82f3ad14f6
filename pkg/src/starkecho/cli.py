"""Command-line front end: ``starkecho {simulate,scan,fit,ingest,table}``.

Outputs go to ``--out`` (stdout when omitted).  Any validation failure
prints a key/value error record on stderr and exits with status 2.
"""

import argparse
import math
import sys
import warnings

from .config import ConfigError, RunConfig
from .echo import EchoEngine, StarkPulse
from .fit import DegenerateTraceError, FitError, fit_trace
from .io import (
    IngestError,
    echo_to_csv,
    file_digest,
    fit_record,
    ingest_csv,
    load_trace,
    read_records,
    record_to_text,
    table_to_csv,
    trace_to_csv,
)
from .scan import ModulationTrace, modulation_metrics, scan, with_noise

EXIT_USAGE = 2


def _emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _load_config(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "axis", None):
        overrides["scan.axis"] = args.axis
    if getattr(args, "samples", None) is not None:
        overrides["scan.samples"] = args.samples
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = args.seed
    if getattr(args, "fit_decay", None):
        overrides["fit.decay"] = args.fit_decay
    if getattr(args, "workers", None) is not None:
        overrides["scan.workers"] = args.workers
    if overrides:
        cfg = RunConfig({**cfg.values, **{k: str(v) for k, v in overrides.items()}}, cfg.source)
    return cfg


def _physics(cfg):
    return dict(ens=cfg.ensemble(), dip=cfg.dipoles(), light=cfg.light(), detection=cfg.detection())


def run_scan(cfg: RunConfig) -> ModulationTrace:
    """Scan described entirely by ``cfg`` (noise included)."""
    seq = cfg.sequence()
    axis = cfg.raw("scan.axis")
    trace = scan(
        seq,
        cfg.stark(),
        axis=axis,
        samples=cfg.get_int("scan.samples"),
        start=cfg.get_optional_float("scan.start"),
        stop=cfg.get_optional_float("scan.stop"),
        t_on=cfg.get_float("stark.t_on") if axis == "voltage" else None,
        window_start=cfg.get_float("stark.window_start"),
        guard=cfg.get_float("stark.guard"),
        T1=cfg.get_float("relax.T1"),
        T2=cfg.get_float("relax.T2"),
        observable=cfg.raw("echo.observable"),
        workers=cfg.get_int("scan.workers"),
        engine_options=cfg.engine_options(),
        **_physics(cfg),
    )
    trace.meta["config_hash"] = cfg.digest()
    return with_noise(trace, cfg.get_float("scan.noise"), cfg.get_int("run.seed"))


def cmd_simulate(args):
    cfg = _load_config(args)
    seq = cfg.sequence()
    stark = StarkPulse(
        cfg.get_float("stark.t_on"),
        cfg.stark().angular_shift(),
        cfg.get_float("stark.window_start"),
        cfg.get_float("stark.guard"),
    )
    stark.check(seq)
    phys = _physics(cfg)
    engine = EchoEngine(
        seq,
        phys["ens"],
        phys["dip"],
        phys["light"],
        phys["detection"],
        T1=cfg.get_float("relax.T1"),
        T2=cfg.get_float("relax.T2"),
        **cfg.engine_options(),
    )
    obs = engine.observe(stark)
    meta = {"config_hash": cfg.digest(), "t_on": stark.t_on, "applied_shift_mhz": cfg.stark().applied_shift_mhz()}
    _emit(echo_to_csv(obs, meta), args.out)
    return 0


def cmd_scan(args):
    cfg = _load_config(args)
    trace = run_scan(cfg)
    _emit(trace_to_csv(trace), args.out)
    if args.metrics:
        channel = cfg.raw("fit.channel")
        try:
            m = modulation_metrics(trace, channel=channel, decay=cfg.raw("fit.decay"))
            rec = {"config_hash": cfg.digest(), **m.as_dict()}
        except DegenerateTraceError as exc:
            rec = {"config_hash": cfg.digest(), "channel": channel, "status": "no_modulation", "message": str(exc)}
        _emit(record_to_text(rec), args.metrics)
    return 0


def cmd_fit(args):
    cfg = RunConfig.from_file(args.config) if args.config else None
    ingest_kw = {}
    for key in ("thickness", "voltage", "t_on"):
        if getattr(args, key) is not None:
            ingest_kw[key] = getattr(args, key)
    if args.x_unit:
        ingest_kw["x_unit"] = args.x_unit
    trace = load_trace(args.trace, **ingest_kw)
    decay = args.fit_decay or (cfg.raw("fit.decay") if cfg else "auto")
    channel = args.channel or (cfg.raw("fit.channel") if cfg else "parallel")
    if trace.axis != "on_time":
        decay = "off"
    kw = {"f_threshold": cfg.get_float("fit.f_threshold")} if cfg else {}
    result = fit_trace(trace, channel=channel, decay=decay, **kw)
    labels = {}
    if args.direction:
        labels["direction"] = args.direction
    if args.branch:
        labels["branch"] = args.branch
    rec = fit_record(
        result,
        source=args.trace,
        input_sha256=file_digest(args.trace),
        config_hash=cfg.digest() if cfg else trace.meta.get("config_hash", ""),
        channel=channel,
        axis=trace.axis,
        **labels,
    )
    _emit(record_to_text(rec), args.out)
    return 0


def cmd_ingest(args):
    column_map = {}
    for item in args.column or []:
        key, _, col = item.partition("=")
        column_map[key.strip()] = col.strip()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        trace = ingest_csv(
            args.trace, column_map or None, x_unit=args.x_unit, thickness=args.thickness,
            voltage=args.voltage, t_on=args.t_on,
        )
    for w in caught:
        sys.stderr.write(f"warning = {w.message}\n")
    _emit(trace.to_csv(), args.out)
    return 0


def cmd_table(args):
    records = []
    for path in args.records:
        records.extend(read_records(path))
    _emit(table_to_csv(records), args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="starkecho", description="Stark-modulated photon echo simulation and fitting.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="run configuration file")
        p.add_argument("--out", help="output path (default stdout)")

    p = sub.add_parser("simulate", help="one echo at stark.t_on; dumps the window time series")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scan", help="on-time or voltage scan; writes a trace CSV")
    common(p)
    p.add_argument("--axis", choices=("on_time", "voltage"))
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--fit-decay", choices=("auto", "on", "off"))
    p.add_argument("--metrics", help="also fit the trace and write a metrics record here ('-' for stdout)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("fit", help="fit a trace file and write a FitResult record")
    common(p)
    p.add_argument("trace")
    p.add_argument("--fit-decay", choices=("auto", "on", "off"))
    p.add_argument("--channel", choices=("parallel", "perp", "total"))
    p.add_argument("--voltage", type=float, help="applied voltage for a raw on-time file, V")
    p.add_argument("--thickness", type=float, help="plate separation, cm")
    p.add_argument("--t-on", dest="t_on", type=float, help="on-time for a raw field-axis file, us")
    p.add_argument("--x-unit", help="x unit when the header has none (us, ns, V, V/cm)")
    p.add_argument("--direction", help="label stored in the record, e.g. D1")
    p.add_argument("--branch", help="Zeeman branch label, e.g. lower or upper")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("ingest", help="normalize a raw experiment CSV")
    p.add_argument("--out")
    p.add_argument("trace")
    p.add_argument("--column", action="append", help="logical=header mapping, e.g. x=time or parallel=A1")
    p.add_argument("--x-unit")
    p.add_argument("--thickness", type=float)
    p.add_argument("--voltage", type=float)
    p.add_argument("--t-on", dest="t_on", type=float)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("table", help="direction x branch summary from FitResult records")
    p.add_argument("--out")
    p.add_argument("records", nargs="+")
    p.set_defaults(func=cmd_table)
    return parser


def _error_record(command, exc):
    lines = [
        "status = error",
        f"command = {command}",
        f"error = {type(exc).__name__}",
        "message = " + " | ".join(str(exc).splitlines()),
    ]
    return "\n".join(lines) + "\n"


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IngestError, DegenerateTraceError, FitError, ValueError, KeyError, OSError) as exc:
        sys.stderr.write(_error_record(args.command, exc))
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
