"""Run configuration: a flat ``section.key = value`` text format.

Grammar, one entry per line::

    # comment (also allowed after a value)
    section.key = value

Blank lines are ignored, keys are case-sensitive, and a key may appear only
once.  Vectors are three comma-separated components, each a Python
int/float/complex literal (``1, 0.5j, 0``).  ``inf`` is accepted for
times.  An empty value or ``auto`` selects the documented default
behaviour.  Unknown keys are rejected.

Frequencies are ordinary frequencies in MHz and times are in us; the
conversion to angular units happens when the physics objects are built.
"""

from dataclasses import dataclass, field
import hashlib
import math

import numpy as np

from .echo import EchoSequence, EnsembleSpec
from .moments import DipoleSet, LightField, parse_vector
from .scan import AXES, CHANNELS, StarkConfig

# key: (default text, description).  This table is the only source of defaults.
DEFAULTS = {
    "dipole.d": ("1, 0, 0", "electric transition dipole (arbitrary units)"),
    "dipole.m": ("0, 0, 0", "magnetic transition dipole times n/c"),
    "dipole.n": ("1.0", "refractive index (bookkeeping)"),
    "light.epsilon": ("1, 0, 0", "unit polarization of the driving light"),
    "light.khat": ("0, 0, 1", "unit wavevector"),
    "light.amplitude": ("0.159154943091895", "field amplitude in MHz per unit moment; chi = 2*pi*amplitude*(mu . epsilon)"),
    "sequence.t_pi2": ("1.5707963267948966", "first pulse duration, us"),
    "sequence.t_pi": ("3.141592653589793", "second pulse duration, us"),
    "sequence.tau": ("13.0", "pulse separation, start to start, us"),
    "stark.shift_coeff": ("50.0", "Stark coefficient, kHz/(V/cm)"),
    "stark.voltage": ("10.0", "applied voltage, V"),
    "stark.thickness": ("1.0", "plate separation, cm"),
    "stark.t_on": ("0.0", "field on-time for 'simulate' and voltage scans, us"),
    "stark.window_start": ("0.0", "field switch-on delay after the first pulse, us"),
    "stark.guard": ("0.0", "minimum clearance between field and second pulse, us"),
    "ensemble.shape": ("flat", "flat or gaussian"),
    "ensemble.width": ("80.0", "inhomogeneous width (FWHM for gaussian), MHz"),
    "ensemble.count": ("5000", "number of detuning classes"),
    "ensemble.span": ("auto", "sampled range, MHz (auto: width for flat, 3*width for gaussian)"),
    "detection.e1": ("auto", "'parallel' detection axis (auto: light.epsilon)"),
    "detection.e2": ("auto", "'perp' detection axis (auto: khat x epsilon)"),
    "relax.T1": ("inf", "population lifetime, us"),
    "relax.T2": ("inf", "coherence lifetime, us"),
    "echo.window_points": ("41", "samples in the echo window"),
    "echo.window_halfwidth": ("auto", "echo window half-width, us"),
    "echo.observable": ("peak", "peak or area"),
    "scan.axis": ("on_time", "on_time or voltage"),
    "scan.samples": ("121", "number of scan points"),
    "scan.start": ("auto", "first x value (auto: 0)"),
    "scan.stop": ("auto", "last x value (auto: end of gap, or stark.voltage)"),
    "scan.workers": ("1", "threads used to evaluate scan points"),
    "scan.noise": ("0.0", "Gaussian noise added to the trace, fraction of max total intensity"),
    "fit.decay": ("auto", "auto, on or off"),
    "fit.channel": ("parallel", "parallel, perp or total"),
    "fit.f_threshold": ("10.0", "F statistic needed to keep the decay term"),
    "run.seed": ("0", "seed for the noise generator"),
}


# keys that change how a run executes but not what it produces
EXECUTION_ONLY = frozenset({"scan.workers"})


class ConfigError(ValueError):
    pass


def parse_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _is_auto(v):
    return v == "" or v.lower() == "auto"


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def __post_init__(self):
        for key in self.values:
            if key not in DEFAULTS:
                raise ConfigError(f"unknown key {key!r}")
        self.validate()

    @classmethod
    def from_text(cls, text, source="<string>"):
        return cls(parse_text(text), source)

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), str(path))

    def raw(self, key):
        return self.values.get(key, DEFAULTS[key][0])

    def get_float(self, key):
        try:
            return float(self.raw(key))
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {self.raw(key)!r}") from None

    def get_int(self, key):
        try:
            return int(self.raw(key))
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {self.raw(key)!r}") from None

    def get_optional_float(self, key):
        return None if _is_auto(self.raw(key)) else self.get_float(key)

    def get_vector(self, key):
        try:
            return parse_vector(self.raw(key))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None

    def with_overrides(self, **overrides):
        values = dict(self.values)
        for key, value in overrides.items():
            values[key.replace("__", ".")] = str(value)
        return RunConfig(values, self.source)

    # physics objects ----------------------------------------------------

    def dipoles(self):
        return DipoleSet(self.get_vector("dipole.d"), self.get_vector("dipole.m"), self.get_float("dipole.n"))

    def light(self):
        khat = self.get_vector("light.khat")
        if np.any(khat.imag != 0):
            raise ConfigError("light.khat must be real")
        return LightField(
            epsilon=self.get_vector("light.epsilon"),
            khat=khat.real,
            E0=2 * math.pi * self.get_float("light.amplitude"),
        )

    def sequence(self):
        return EchoSequence(
            self.get_float("sequence.t_pi2"), self.get_float("sequence.t_pi"), self.get_float("sequence.tau")
        )

    def ensemble(self):
        return EnsembleSpec(
            shape=self.raw("ensemble.shape"),
            width=self.get_float("ensemble.width"),
            count=self.get_int("ensemble.count"),
            span=self.get_optional_float("ensemble.span"),
        )

    def stark(self):
        return StarkConfig(
            self.get_float("stark.shift_coeff"), self.get_float("stark.voltage"), self.get_float("stark.thickness")
        )

    def detection(self):
        e1, e2 = self.raw("detection.e1"), self.raw("detection.e2")
        if _is_auto(e1) and _is_auto(e2):
            return None
        if _is_auto(e1) or _is_auto(e2):
            raise ConfigError("set both detection.e1 and detection.e2, or neither")
        return self.get_vector("detection.e1"), self.get_vector("detection.e2")

    def engine_options(self):
        opts = {"window_points": self.get_int("echo.window_points")}
        hw = self.get_optional_float("echo.window_halfwidth")
        if hw is not None:
            opts["window_halfwidth"] = hw
        return opts

    def validate(self):
        """Build every physics object once so bad input fails before any work."""
        try:
            self.dipoles()
            light = self.light()
            seq = self.sequence()
            self.ensemble()
            self.stark()
            det = self.detection()
            if det is not None:
                from .echo import check_basis

                check_basis(det, light.khat)
            if self.raw("echo.observable") not in ("peak", "area"):
                raise ConfigError("echo.observable must be 'peak' or 'area'")
            if self.raw("scan.axis") not in AXES:
                raise ConfigError(f"scan.axis must be one of {AXES}")
            if self.raw("fit.decay") not in ("auto", "on", "off"):
                raise ConfigError("fit.decay must be auto, on or off")
            if self.raw("fit.channel") not in CHANNELS:
                raise ConfigError(f"fit.channel must be one of {CHANNELS}")
            if self.get_int("scan.samples") < 2:
                raise ConfigError("scan.samples must be >= 2")
            if self.get_int("scan.workers") < 1:
                raise ConfigError("scan.workers must be >= 1")
            if self.get_float("scan.noise") < 0:
                raise ConfigError("scan.noise must be >= 0")
            if self.get_int("echo.window_points") < 2:
                raise ConfigError("echo.window_points must be >= 2")
            T1, T2 = self.get_float("relax.T1"), self.get_float("relax.T2")
            if T1 <= 0 or T2 <= 0:
                raise ConfigError("relax.T1 and relax.T2 must be positive")
            if math.isfinite(T1) and T2 > 2 * T1:
                raise ConfigError("relax.T2 cannot exceed 2*relax.T1")
            self.get_int("run.seed")
            self.get_float("fit.f_threshold")
            for key in ("stark.t_on", "stark.window_start", "stark.guard"):
                if self.get_float(key) < 0:
                    raise ConfigError(f"{key} must be >= 0")
            if self.raw("scan.axis") == "on_time":
                stop = self.get_optional_float("scan.stop")
                limit = seq.gap - self.get_float("stark.window_start") - self.get_float("stark.guard")
                if stop is not None and stop > limit + 1e-12:
                    raise ConfigError(f"scan.stop = {stop:g} us runs into the second pulse (limit {limit:g} us)")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def canonical_text(self):
        """Every result-affecting key with its effective value, sorted; used for hashing."""
        return "".join(f"{k} = {self.raw(k)}\n" for k in sorted(DEFAULTS) if k not in EXECUTION_ONLY)

    def digest(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


def defaults_table():
    lines = ["| key | default | meaning |", "|---|---|---|"]
    lines += [f"| `{k}` | `{v}` | {d} |" for k, (v, d) in DEFAULTS.items()]
    return "\n".join(lines)
