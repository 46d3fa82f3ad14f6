"""Stark on-time / voltage sweeps, modulation metrics and Zeeman-branch shifts."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np

from .echo import EchoEngine, EchoSequence, StarkPulse
from .moments import format_vector
from .fit import (
    KHZ_US,
    DegenerateTraceError,
    TraceTooShortError,
    fit_curve,
    initial_guess,
    on_time_scale,
    voltage_scale,
)

AXES = ("on_time", "voltage")
CHANNELS = ("parallel", "perp", "total")


class NoModulationError(DegenerateTraceError):
    """The trace has no resolvable modulation, so frequency is undefined."""


@dataclass(frozen=True)
class StarkConfig:
    """Linear Stark coefficient (kHz/(V/cm)), applied voltage (V), plate gap (cm)."""

    shift_coeff: float
    voltage: float = 10.0
    thickness: float = 1.0

    def __post_init__(self):
        if not self.thickness > 0:
            raise ValueError("plate separation must be positive")

    def applied_shift_mhz(self, voltage=None):
        v = self.voltage if voltage is None else voltage
        return self.shift_coeff * v / self.thickness * KHZ_US

    def angular_shift(self, voltage=None):
        return 2 * np.pi * self.applied_shift_mhz(voltage)


@dataclass
class ModulationTrace:
    axis: str
    x: np.ndarray
    I_parallel: np.ndarray
    I_perp: np.ndarray
    I_total: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        self.x = np.asarray(self.x, dtype=float)
        for name in CHANNELS:
            arr = np.asarray(getattr(self, "I_" + name), dtype=float)
            if arr.shape != self.x.shape:
                raise ValueError("trace arrays must have the same length")
            if np.any(arr < 0):
                raise ValueError(f"negative intensity in channel {name!r}")
            setattr(self, "I_" + name, arr)
        if self.x.ndim != 1 or np.any(np.diff(self.x) <= 0):
            raise ValueError("trace x values must be strictly increasing")

    def channel(self, name):
        if name not in CHANNELS:
            raise ValueError(f"channel must be one of {CHANNELS}")
        return getattr(self, "I_" + name)

    def phase_scale(self):
        """Factor turning ``x`` into Stark phase per unit ``delta_s``."""
        m = self.meta
        if self.axis == "on_time":
            return on_time_scale(m["voltage"], m["thickness"], m.get("time_unit", 1.0))
        return voltage_scale(m["t_on"], m["thickness"])

    def __eq__(self, other):
        if not isinstance(other, ModulationTrace):
            return NotImplemented
        return (
            self.axis == other.axis
            and self.meta == other.meta
            and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("x", "I_parallel", "I_perp", "I_total"))
        )


@dataclass(frozen=True)
class ModulationMetrics:
    frequency: float  # modulation frequency along x (MHz for an on-time axis in us)
    visibility: float
    phase: float  # radians
    decay: float  # C, in x-units squared; inf = no decay
    delta_s: float  # kHz/(V/cm)
    channel: str = "parallel"
    uncertainties: dict = field(default_factory=dict)
    converged: bool = True

    def as_dict(self):
        return {
            "channel": self.channel,
            "frequency": self.frequency,
            "visibility": self.visibility,
            "phase": self.phase,
            "phase_deg": math.degrees(self.phase),
            "decay": self.decay,
            "delta_s": self.delta_s,
            "delta_s.sigma": self.uncertainties.get("delta_s", float("nan")),
            "converged": self.converged,
        }


def scan(
    seq: EchoSequence,
    stark_config: StarkConfig,
    ens,
    dip,
    light,
    detection=None,
    axis="on_time",
    samples=121,
    start=None,
    stop=None,
    t_on=None,
    window_start=0.0,
    guard=0.0,
    T1=math.inf,
    T2=math.inf,
    observable="peak",
    workers=1,
    engine_options=None,
) -> ModulationTrace:
    """Simulate the echo at each sample point and collect a modulation trace.

    ``samples`` is either a count (evenly spaced between ``start`` and
    ``stop``) or an explicit increasing sequence of x values.  For the
    on-time axis the default range is the whole gap between the pulses
    less ``window_start`` and ``guard``; for the voltage axis it is
    0..``stark_config.voltage`` at fixed ``t_on``.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    if axis == "on_time":
        lo = 0.0 if start is None else start
        hi = seq.gap - window_start - guard if stop is None else stop
    else:
        if t_on is None:
            raise ValueError("a voltage scan needs a fixed t_on")
        lo = 0.0 if start is None else start
        hi = stark_config.voltage if stop is None else stop

    if np.ndim(samples) == 0:
        if int(samples) < 2:
            raise ValueError("a scan needs at least 2 samples")
        x = np.linspace(lo, hi, int(samples))
    else:
        x = np.asarray(samples, dtype=float)
        if x.size < 2:
            raise ValueError("a scan needs at least 2 samples")

    if axis == "on_time":
        pulses = [StarkPulse(t, stark_config.angular_shift(), window_start, guard) for t in x]
    else:
        pulses = [StarkPulse(t_on, stark_config.angular_shift(v), window_start, guard) for v in x]

    bad = []
    for i, p in enumerate(pulses):
        try:
            p.check(seq)
        except ValueError as exc:
            bad.append(f"sample {i} (x={x[i]:g}): {exc}")
    if bad:
        raise ValueError("Stark window guard violated:\n  " + "\n  ".join(bad))

    engine = EchoEngine(seq, ens, dip, light, detection, T1=T1, T2=T2, **(engine_options or {}))

    def run(p):
        obs = engine.observe(p)
        return [obs.scalar(c, observable) for c in CHANNELS]

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, pulses))
    else:
        rows = [run(p) for p in pulses]
    values = np.array(rows)

    meta = {
        "voltage": float(stark_config.voltage),
        "thickness": float(stark_config.thickness),
        "shift_coeff": float(stark_config.shift_coeff),
        "time_unit": 1.0,
        "tau": float(seq.tau),
        "t_pi2": float(seq.t_pi2),
        "t_pi": float(seq.t_pi),
        "observable": observable,
        "window_start": float(window_start),
        "guard": float(guard),
        "T1": float(T1),
        "T2": float(T2),
        "ensemble": f"{ens.shape} width={ens.width:.9g} count={ens.count} span={ens.span:.9g}",
        "dipole.d": format_vector(dip.d),
        "dipole.m": format_vector(dip.m),
        "light.epsilon": format_vector(light.epsilon),
        "light.khat": format_vector(light.khat),
        "light.E0": float(light.E0),
        "detection": " | ".join(format_vector(e) for e in engine.detection),
    }
    if t_on is not None:
        meta["t_on"] = float(t_on)
    return ModulationTrace(axis, x, values[:, 0], values[:, 1], values[:, 2], meta)


def modulation_metrics(trace: ModulationTrace, channel="parallel", decay="off", min_periods=1.5) -> ModulationMetrics:
    """Modulation frequency, visibility and phase of one channel.

    The frequency is seeded from extrema spacing and refined by the
    damped least-squares fit.
    """
    y = trace.channel(channel)
    ref = max(float(np.max(trace.I_total)), 1e-300)
    if np.ptp(y) <= 1e-9 * ref:
        raise NoModulationError(f"channel {channel!r} is flat; modulation frequency undefined")
    scale = trace.phase_scale()
    try:
        guess = initial_guess(trace.x, y, scale, decay=decay != "off")
    except DegenerateTraceError as exc:
        raise NoModulationError(str(exc)) from exc
    span = float(trace.x[-1] - trace.x[0])
    periods = span * 2 * guess.delta_s * scale
    if periods < min_periods:
        raise TraceTooShortError(f"trace spans {periods:.2f} modulation periods; need >= {min_periods}")
    if trace.axis == "voltage":
        decay = "off"
    result = fit_curve(trace.x, y, scale, decay=decay, min_periods=min_periods)
    p = result.params
    return ModulationMetrics(
        frequency=2 * p.delta_s * scale,
        visibility=p.W,
        phase=p.phi,
        decay=p.C,
        delta_s=p.delta_s,
        channel=channel,
        uncertainties=result.uncertainties,
        converged=result.converged,
    )


def measured_visibility(y):
    """(max - min) / (max + min) straight from the samples."""
    y = np.asarray(y, dtype=float)
    return float((y.max() - y.min()) / (y.max() + y.min()))


@dataclass(frozen=True)
class ZeemanBranchShifts:
    """Stark shifts of the two Zeeman branches, kHz/(V/cm).

    Convention: ``upper = delta_o + delta_g`` and ``lower = delta_o - delta_g``,
    so ``delta_g`` is signed.
    """

    delta_o: float
    delta_g: float
    lower: float
    upper: float


def zeeman_branch_shifts(lower, upper) -> ZeemanBranchShifts:
    """Split measured branch shifts into optical and g-shift parts."""
    return ZeemanBranchShifts(
        delta_o=(lower + upper) / 2,
        delta_g=(upper - lower) / 2,
        lower=lower,
        upper=upper,
    )


def branch_shifts(delta_o, delta_g) -> ZeemanBranchShifts:
    return ZeemanBranchShifts(delta_o, delta_g, lower=delta_o - delta_g, upper=delta_o + delta_g)


def gshift_vs_field(kappa, B):
    """Quadratic g-shift ``kappa * B**2`` (kappa in kHz/T^2/(V/cm), B in T)."""
    if not math.isfinite(kappa):
        raise ValueError("kappa must be finite")
    return kappa * np.asarray(B, dtype=float) ** 2


def with_noise(trace: ModulationTrace, level, seed=0) -> ModulationTrace:
    """Copy of ``trace`` with Gaussian noise of ``level * max(I_total)`` added.

    Noisy samples are clipped at zero so intensities stay physical.
    """
    if level < 0:
        raise ValueError("noise level must be >= 0")
    if level == 0:
        return trace
    rng = np.random.default_rng(seed)
    sigma = level * float(np.max(trace.I_total))
    noisy = {
        name: np.clip(trace.channel(name) + rng.normal(0.0, sigma, trace.x.shape), 0.0, None) for name in CHANNELS
    }
    meta = dict(trace.meta, noise=float(level), seed=float(seed))
    return ModulationTrace(trace.axis, trace.x, noisy["parallel"], noisy["perp"], noisy["total"], meta)
