"""CSV traces, raw-data ingestion and key/value result records.

Trace CSV layout (column order is fixed)::

    # axis = on_time
    # <meta key> = <value>
    x,I_parallel,I_perp,I_total
    0,1.00000000,...

Numbers are written with 9 significant digits by default.  Pass
``precision=None`` for the shortest exact representation, which makes
write-then-read reproduce a trace bit for bit.

Records are ``key = value`` lines; several records in one file are
separated by a blank line.
"""

from dataclasses import dataclass, field
import csv
import hashlib
import io as _io
import math
import re
import warnings

import numpy as np

from .scan import AXES, CHANNELS, ModulationTrace, on_time_scale, voltage_scale, zeeman_branch_shifts
from .fit import PARAM_NAMES

TRACE_HEADER = ("x",) + tuple("I_" + c for c in CHANNELS)
DEFAULT_PRECISION = 9


class IngestError(ValueError):
    pass


class UnsortedRowsWarning(UserWarning):
    pass


def format_number(v, precision=DEFAULT_PRECISION):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if precision is None:
        return repr(v)
    return f"{v:.{precision}g}"


def _format_value(v, precision):
    if isinstance(v, (int, float, np.integer, np.floating, bool, np.bool_)):
        return format_number(v, precision)
    text = str(v)
    if "\n" in text:
        raise ValueError("record values must fit on one line")
    return text


def _parse_value(text):
    if text in ("true", "false"):
        return text == "true"
    try:
        return float(text)
    except ValueError:
        return text


def _open_text(target, mode):
    if hasattr(target, "write" if "w" in mode else "read"):
        return target, False
    return open(target, mode, encoding="utf-8", newline=""), True


# ---------------------------------------------------------------------------
# ModulationTrace CSV


def trace_to_csv(trace: ModulationTrace, precision=DEFAULT_PRECISION) -> str:
    out = [f"# axis = {trace.axis}\n"]
    for key, value in trace.meta.items():
        out.append(f"# {key} = {_format_value(value, precision)}\n")
    out.append(",".join(TRACE_HEADER) + "\n")
    cols = [trace.x] + [trace.channel(c) for c in CHANNELS]
    for row in zip(*cols):
        out.append(",".join(format_number(v, precision) for v in row) + "\n")
    return "".join(out)


def write_trace_csv(trace: ModulationTrace, target, precision=DEFAULT_PRECISION):
    text = trace_to_csv(trace, precision)
    fh, close = _open_text(target, "w")
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()
    return text


def _split_comments(lines):
    meta, body = {}, []
    for line in lines:
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            entry = stripped[1:].strip()
            if "=" in entry:
                key, value = (s.strip() for s in entry.split("=", 1))
                meta[key] = value
            continue
        body.append(line)
    return meta, body


def read_trace_csv(source) -> ModulationTrace:
    """Inverse of :func:`write_trace_csv`."""
    fh, close = _open_text(source, "r")
    try:
        text = fh.read()
    finally:
        if close:
            fh.close()
    raw_meta, body = _split_comments(text.splitlines())
    if "axis" not in raw_meta:
        raise IngestError("trace file has no '# axis = ...' line")
    axis = raw_meta.pop("axis")
    rows = list(csv.reader(body))
    if not rows or tuple(h.strip() for h in rows[0]) != TRACE_HEADER:
        raise IngestError(f"trace header must be {','.join(TRACE_HEADER)}")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, 4)
    meta = {k: _parse_value(v) for k, v in raw_meta.items()}
    return ModulationTrace(axis, data[:, 0], data[:, 1], data[:, 2], data[:, 3], meta)


# ---------------------------------------------------------------------------
# Echo dump


def echo_to_csv(obs, meta=None, precision=DEFAULT_PRECISION) -> str:
    """Window time series plus the scalar observables as comments."""
    out = []
    for key, value in (meta or {}).items():
        out.append(f"# {key} = {_format_value(value, precision)}\n")
    for c in CHANNELS:
        out.append(f"# peak_intensity.{c} = {format_number(obs.peak_intensity[c], precision)}\n")
        out.append(f"# peak_time.{c} = {format_number(obs.peak_time[c], precision)}\n")
        out.append(f"# integrated_area.{c} = {format_number(obs.integrated_area[c], precision)}\n")
    header = ["t"] + ["I_" + c for c in CHANNELS]
    header += [f"P_{ax}_{part}" for ax in "xyz" for part in ("re", "im")]
    out.append(",".join(header) + "\n")
    P = np.asarray(obs.P)
    for k, t in enumerate(obs.t_grid):
        row = [t, obs.I_parallel[k], obs.I_perp[k], obs.I_total[k]]
        for j in range(3):
            row += [P[k, j].real, P[k, j].imag]
        out.append(",".join(format_number(v, precision) for v in row) + "\n")
    return "".join(out)


# ---------------------------------------------------------------------------
# Raw experiment CSV ingestion

_TIME_UNITS = {"us": 1.0, "µs": 1.0, "μs": 1.0, "ns": 1e-3, "ms": 1e3, "s": 1e6}
_UNIT_RE = re.compile(r"^\s*(.*?)\s*(?:[\[(]\s*([^\])]*?)\s*[\])])?\s*$")


def _split_unit(header):
    name, unit = _UNIT_RE.match(header).groups()
    return name, unit or None


def _channel_key(name):
    low = name.lower()
    for prefix in ("i_", "area_"):
        if low.startswith(prefix):
            low = low[len(prefix):]
    return low if low in CHANNELS else None


def _parse_wait_time(text):
    """Wait time in seconds from strings like '240 ms' or '0.24'."""
    m = re.match(r"^\s*([-+0-9.eE]+)\s*(ms|s|us|µs|μs)?\s*$", str(text))
    if not m:
        raise IngestError(f"cannot parse wait_time {text!r}")
    factor = {"ms": 1e-3, "s": 1.0, None: 1.0, "us": 1e-6, "µs": 1e-6, "μs": 1e-6}[m.group(2)]
    return float(m.group(1)) * factor


@dataclass
class ExperimentTrace:
    """Normalized experimental modulation data.

    ``axis`` is 'on_time' (``x`` in us) or 'field' (``x`` in V/cm).
    ``areas`` maps channel name to background-subtracted echo areas.
    ``voltage`` (on-time axis) or ``t_on`` (field axis) fix the Stark phase
    scale when known.
    """

    axis: str
    x: np.ndarray
    areas: dict
    voltage: float = None
    thickness: float = None
    t_on: float = None
    shots: int = None
    wait_time: float = None  # seconds
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.axis not in ("on_time", "field"):
            raise ValueError("ExperimentTrace axis must be 'on_time' or 'field'")
        self.x = np.asarray(self.x, dtype=float)
        if np.any(np.diff(self.x) <= 0):
            raise IngestError("x values must be strictly increasing")
        if not self.areas:
            raise IngestError("no intensity channels present")
        for name, arr in list(self.areas.items()):
            arr = np.asarray(arr, dtype=float)
            if arr.shape != self.x.shape:
                raise IngestError("channel length differs from x")
            if np.any(arr < 0):
                raise IngestError(f"negative echo area in channel {name!r}")
            self.areas[name] = arr

    def __len__(self):
        return len(self.x)

    def channel(self, name):
        if name not in self.areas:
            raise KeyError(f"channel {name!r} not present (have {sorted(self.areas)})")
        return self.areas[name]

    def phase_scale(self):
        if self.axis == "on_time":
            if self.voltage is None or self.thickness is None:
                raise IngestError("an on-time trace needs voltage and thickness to set the Stark phase scale")
            return on_time_scale(self.voltage, self.thickness)
        if self.t_on is None:
            raise IngestError("a field trace needs t_on to set the Stark phase scale")
        return voltage_scale(self.t_on, 1.0)

    def to_csv(self, precision=DEFAULT_PRECISION) -> str:
        out = []
        for key in ("voltage", "thickness", "t_on", "shots", "wait_time"):
            value = getattr(self, key)
            if value is not None:
                out.append(f"# {key} = {format_number(value, precision)}{' s' if key == 'wait_time' else ''}\n")
        for key, value in self.meta.items():
            out.append(f"# {key} = {_format_value(value, precision)}\n")
        xname = "t_on [us]" if self.axis == "on_time" else "field [V/cm]"
        names = list(self.areas)
        out.append(",".join([xname] + names) + "\n")
        for k in range(len(self.x)):
            vals = [self.x[k]] + [self.areas[n][k] for n in names]
            out.append(",".join(format_number(v, precision) for v in vals) + "\n")
        return "".join(out)


def ingest_csv(source, column_map=None, x_unit=None, thickness=None, voltage=None, t_on=None) -> ExperimentTrace:
    """Read a raw experiment CSV into an :class:`ExperimentTrace`.

    ``column_map`` maps 'x', 'parallel', 'perp', 'total' to header names
    (unit suffixes such as ``[ns]`` stripped).  By default the first column
    is x and channels are found by name (``parallel``, ``I_parallel``,
    ``area_parallel``...).  The x unit comes from the header suffix or
    ``x_unit``; supplying both with different values is an error.  Voltage
    axes need ``thickness`` (cm) and are converted to field in V/cm.

    Echo areas are taken as already background-subtracted.
    """
    fh, close = _open_text(source, "r")
    try:
        text = fh.read()
    finally:
        if close:
            fh.close()
    comments, body = _split_comments(text.splitlines())
    rows = [r for r in csv.reader(body) if r]
    if not rows:
        raise IngestError("file has no header row")
    headers = [h.strip() for h in rows[0]]
    parsed = [_split_unit(h) for h in headers]
    names = [p[0] for p in parsed]

    cmap = dict(column_map or {})
    if "x" not in cmap:
        cmap["x"] = names[0]
    for name in names:
        key = _channel_key(name)
        if key and key not in cmap and name != cmap["x"]:
            cmap[key] = name
    for key, col in cmap.items():
        if col not in names:
            raise IngestError(f"column {col!r} for {key!r} not found (have {names})")
    if not any(k in cmap for k in CHANNELS):
        raise IngestError("no intensity columns found; pass a column_map")

    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(headers))
    except ValueError as exc:
        raise IngestError(f"non-numeric value: {exc}") from None
    if data.shape[0] == 0:
        raise IngestError("file has no data rows")

    xi = names.index(cmap["x"])
    header_unit = parsed[xi][1]
    if "axis" in comments and header_unit is None:
        header_unit = "us" if comments["axis"] == "on_time" else "V"
    if header_unit and x_unit and header_unit != x_unit:
        raise IngestError(f"x unit ambiguous: header says {header_unit!r}, flag says {x_unit!r}")
    unit = header_unit or x_unit
    if unit is None:
        raise IngestError("x unit ambiguous: no unit in the header and none given")

    def comment_float(key, given):
        if given is not None:
            return float(given)
        return float(comments[key]) if key in comments else None

    thickness = comment_float("thickness", thickness)
    voltage = comment_float("voltage", voltage)
    t_on = comment_float("t_on", t_on)

    x = data[:, xi]
    if unit in _TIME_UNITS:
        axis, x = "on_time", x * _TIME_UNITS[unit]
    elif unit == "V":
        if thickness is None:
            raise IngestError("x unit ambiguous: voltage axis needs a plate thickness to convert to field")
        axis, x = "field", x / thickness
    elif unit == "V/cm":
        axis = "field"
    else:
        raise IngestError(f"unrecognised x unit {unit!r}")

    order = np.argsort(x, kind="stable")
    if np.any(np.diff(order) < 0):
        warnings.warn("rows were not sorted by x; sorted on ingest", UnsortedRowsWarning, stacklevel=2)
    x = x[order]
    if np.any(np.diff(x) == 0):
        raise IngestError("duplicate x values: x must be strictly monotone")
    areas = {k: data[order, names.index(cmap[k])] for k in CHANNELS if k in cmap}

    shots = int(float(comments["shots"])) if "shots" in comments else None
    wait = _parse_wait_time(comments["wait_time"]) if "wait_time" in comments else None
    known = {"voltage", "thickness", "t_on", "shots", "wait_time", "axis"}
    extra = {k: v for k, v in comments.items() if k not in known}
    return ExperimentTrace(axis, x, areas, voltage, thickness, t_on, shots, wait, extra)


def load_trace(source, **ingest_kw):
    """Read either an emitted ModulationTrace CSV or a raw experiment CSV."""
    with open(source, encoding="utf-8") as fh:
        text = fh.read()
    meta, body = _split_comments(text.splitlines())
    header = body[0].strip() if body else ""
    if "axis" in meta and meta["axis"] in AXES and header == ",".join(TRACE_HEADER) and not ingest_kw:
        return read_trace_csv(_io.StringIO(text))
    return ingest_csv(_io.StringIO(text), **ingest_kw)


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# key/value records


def record_to_text(record: dict, precision=DEFAULT_PRECISION) -> str:
    return "".join(f"{k} = {_format_value(v, precision)}\n" for k, v in record.items())


def write_records(records, target, precision=DEFAULT_PRECISION):
    text = "\n".join(record_to_text(r, precision) for r in records)
    fh, close = _open_text(target, "w")
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()
    return text


def parse_records(text, typed=False):
    """Split ``key = value`` text into records; values stay strings unless ``typed``."""
    records, current = [], {}
    for line in text.splitlines():
        if not line.strip():
            if current:
                records.append(current)
                current = {}
            continue
        if line.lstrip().startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad record line {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        current[key] = _parse_value(value) if typed else value
    if current:
        records.append(current)
    return records


def read_records(source, typed=False):
    fh, close = _open_text(source, "r")
    try:
        return parse_records(fh.read(), typed)
    finally:
        if close:
            fh.close()


def fit_record(result, source="", input_sha256="", config_hash="", channel="parallel", axis="on_time", **labels):
    """Key/value record of a :class:`~starkecho.fit.FitResult` with provenance."""
    rec = {"source": str(source), "input_sha256": input_sha256, "config_hash": config_hash}
    rec.update({k: str(v) for k, v in labels.items()})
    rec["channel"] = channel
    rec["axis"] = axis
    p = result.params
    for name in PARAM_NAMES:
        rec[name] = getattr(p, name)
        rec[name + ".sigma"] = result.uncertainties.get(name, math.nan)
    rec["phi_deg"] = math.degrees(p.phi)
    rec["decay_fitted"] = bool(result.decay_fitted)
    rec["residual_norm"] = result.residual_norm
    rec["gradient_norm"] = result.gradient_norm
    rec["iterations"] = int(result.iterations)
    rec["converged"] = bool(result.converged)
    return rec


# ---------------------------------------------------------------------------
# summary table


def build_table(records):
    """Direction x branch table of ``delta_s ± sigma`` copied verbatim from records.

    Returns ``(branches, rows)`` where each row is
    ``(direction, {branch: (delta_s, sigma)}, (delta_o, delta_g) or None)``.
    The split into optical and g-shift parts is given when both 'lower'
    and 'upper' branches are present.
    """
    directions, branches, cells = [], [], {}
    for rec in records:
        for key in ("delta_s", "delta_s.sigma"):
            if key not in rec:
                raise ValueError(f"record from {rec.get('source', '?')!r} lacks {key!r}")
        direction = rec.get("direction", "-") or "-"
        branch = rec.get("branch", "-") or "-"
        if (direction, branch) in cells:
            raise ValueError(f"two records for direction {direction!r}, branch {branch!r}")
        cells[(direction, branch)] = (str(rec["delta_s"]), str(rec["delta_s.sigma"]))
        if direction not in directions:
            directions.append(direction)
        if branch not in branches:
            branches.append(branch)
    rows = []
    for d in directions:
        cols = {b: cells[(d, b)] for b in branches if (d, b) in cells}
        split = None
        if "lower" in cols and "upper" in cols:
            z = zeeman_branch_shifts(float(cols["lower"][0]), float(cols["upper"][0]))
            split = (z.delta_o, z.delta_g)
        rows.append((d, cols, split))
    return branches, rows


def table_to_csv(records, precision=DEFAULT_PRECISION) -> str:
    branches, rows = build_table(records)
    header = ["direction"]
    for b in branches:
        header += [f"{b}.delta_s", f"{b}.sigma"]
    header += ["delta_o", "delta_g"]
    out = [",".join(header) + "\n"]
    for d, cols, split in rows:
        line = [d]
        for b in branches:
            line += list(cols.get(b, ("", "")))
        line += [format_number(v, precision) for v in split] if split else ["", ""]
        out.append(",".join(line) + "\n")
    return "".join(out)
