"""Stark-modulated two-pulse photon echo over an inhomogeneous ensemble.

Timing convention: the first pulse starts at t = 0, ``tau`` is measured
start-to-start, and the echo is looked for in a window centred on
t = 2*tau + t_pi - t_pi2/2, where finite pulses put the rephasing point.
The Stark field is on for ``t_on`` somewhere inside the gap
between the two pulses; because free evolution only rotates the coherence,
where exactly it sits in the gap does not change the result.

Ensemble widths and spans are ordinary frequencies (MHz); everything is
converted to rad/us before it reaches the propagators.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .dynamics import free_propagator, pulse_propagator
from .moments import SUBSITES, DipoleSet, LightField, as_vec3, rabi_frequency, total_moment

TWO_PI = 2.0 * np.pi
ORTHO_TOL = 1e-10


class AliasingWarning(UserWarning):
    """The detuning grid is too coarse: its free-induction decay revives inside the echo window."""


def revival_time(ens) -> float:
    """Time (us) after which an evenly spaced detuning grid rephases by itself."""
    if ens.count < 2:
        return math.inf
    return (ens.count - 1) / ens.span


@dataclass(frozen=True)
class EchoSequence:
    t_pi2: float
    t_pi: float
    tau: float

    def __post_init__(self):
        if self.t_pi2 <= 0:
            raise ValueError("t_pi2 must be positive")
        if self.t_pi < 0:
            raise ValueError("t_pi must be >= 0")
        if self.tau <= self.t_pi2 + self.t_pi:
            raise ValueError("tau must exceed t_pi2 + t_pi")

    @property
    def gap(self):
        """Free time between the end of the first pulse and the second pulse."""
        return self.tau - self.t_pi2


@dataclass(frozen=True)
class StarkPulse:
    """Stark field window.  ``shift`` is the angular shift magnitude (rad/us)."""

    t_on: float
    shift: float
    window_start: float = 0.0
    guard: float = 0.0

    def check(self, seq: EchoSequence):
        if self.t_on < 0 or self.window_start < 0 or self.guard < 0:
            raise ValueError("t_on, window_start and guard must be >= 0")
        end = self.window_start + self.t_on
        limit = seq.gap - self.guard
        if end > limit + 1e-12:
            raise ValueError(
                f"Stark window ends at {end:g} us, past the allowed {limit:g} us "
                "(field must clear the second pulse by the guard time)"
            )


@dataclass(frozen=True)
class EnsembleSpec:
    """Inhomogeneous line: ``shape`` is 'flat' or 'gaussian' (FWHM ``width``).

    ``width`` and ``span`` are in MHz; ``span`` defaults to the width for a
    flat line and to three widths for a gaussian.
    """

    shape: str = "flat"
    width: float = 80.0
    count: int = 5000
    span: float = None

    def __post_init__(self):
        if self.shape not in ("flat", "gaussian"):
            raise ValueError("ensemble shape must be 'flat' or 'gaussian'")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError("ensemble count must be an integer >= 1")
        if self.width <= 0:
            raise ValueError("ensemble width must be positive")
        if self.span is None:
            object.__setattr__(self, "span", self.width if self.shape == "flat" else 3.0 * self.width)
        if self.span <= 0:
            raise ValueError("ensemble span must be positive")
        if self.shape == "flat" and self.span < self.width * (1 - 1e-12):
            raise ValueError("span must cover the full width of a flat profile")


def build_ensemble(ens: EnsembleSpec):
    """Evenly spaced detunings (rad/us, ascending) and normalized weights."""
    if ens.count == 1:
        return np.zeros(1), np.ones(1)
    nu = np.linspace(-ens.span / 2, ens.span / 2, int(ens.count))
    if ens.shape == "flat":
        w = (np.abs(nu) <= ens.width / 2 * (1 + 1e-12)).astype(float)
    else:
        w = np.exp(-4 * np.log(2) * nu**2 / ens.width**2)
    if w.sum() == 0:
        raise ValueError("no ensemble members fall inside the profile")
    return TWO_PI * nu, w / w.sum()


def default_detection(light: LightField):
    e1 = light.epsilon
    e2 = np.cross(light.khat, e1)
    return e1, e2 / np.linalg.norm(e2)


def check_basis(basis, khat=None):
    e1, e2 = (as_vec3(e) for e in basis)
    gram = np.array([[np.vdot(a, b) for b in (e1, e2)] for a in (e1, e2)])
    if np.max(np.abs(gram - np.eye(2))) > ORTHO_TOL:
        raise ValueError("detection basis must be orthonormal")
    if khat is not None:
        if abs(np.dot(e1, khat)) > ORTHO_TOL or abs(np.dot(e2, khat)) > ORTHO_TOL:
            raise ValueError("detection basis must be transverse to khat")
    return e1, e2


def polarized_intensities(P, basis):
    """Project a polarization time series onto a detection basis.

    ``P`` has shape (..., 3).  Returns ``(I_1, I_2, I_1 + I_2)`` with
    ``I_k = |e_k^* . P|^2``.
    """
    e1, e2 = check_basis(basis)
    P = np.asarray(P, dtype=complex)
    i1 = np.abs(P @ np.conj(e1)) ** 2
    i2 = np.abs(P @ np.conj(e2)) ** 2
    return i1, i2, i1 + i2


@dataclass
class EchoObservables:
    t_grid: np.ndarray
    P: np.ndarray
    I_parallel: np.ndarray
    I_perp: np.ndarray
    I_total: np.ndarray
    peak_intensity: dict = field(default_factory=dict)
    integrated_area: dict = field(default_factory=dict)
    peak_time: dict = field(default_factory=dict)

    CHANNELS = ("parallel", "perp", "total")

    def __post_init__(self):
        for name in self.CHANNELS:
            series = getattr(self, "I_" + name)
            k = int(np.argmax(series))
            self.peak_intensity[name] = float(series[k])
            self.peak_time[name] = float(self.t_grid[k])
            self.integrated_area[name] = float(np.trapezoid(series, self.t_grid))

    def scalar(self, channel, observable="peak"):
        if observable == "peak":
            return self.peak_intensity[channel]
        if observable == "area":
            return self.integrated_area[channel]
        raise ValueError("observable must be 'peak' or 'area'")


class EchoEngine:
    """Precomputed pulse maps for one sequence/ensemble/moment geometry.

    The expensive part (pulse maps for every sub-site and detuning) is done
    once; :meth:`observe` then only applies the Stark-dependent free
    evolution.  Instances are not mutated after construction and can be
    shared between threads.
    """

    def __init__(
        self,
        seq: EchoSequence,
        ens: EnsembleSpec,
        dip: DipoleSet,
        light: LightField,
        detection=None,
        T1=math.inf,
        T2=math.inf,
        window_points=41,
        window_halfwidth=None,
    ):
        self.seq, self.ens, self.dip, self.light = seq, ens, dip, light
        self.T1, self.T2 = T1, T2
        self.detection = check_basis(detection or default_detection(light), light.khat)
        self.detunings, self.weights = build_ensemble(ens)

        self.sites = SUBSITES
        self.moments = np.array([total_moment(dip, light.khat, s) for s in self.sites])
        self.chi = np.array([rabi_frequency(mu, light.epsilon, light.E0) for mu in self.moments])
        self.parity = np.array(self.sites, dtype=float)

        chi = self.chi[:, None]
        det = self.detunings[None, :]
        first = pulse_propagator(chi, det, seq.t_pi2)
        ground = np.array([1.0, 0.0, 0.0, 0.0])
        self._after_first = first.apply(ground)  # (site, detuning, 4)
        self._second = pulse_propagator(chi, det, seq.t_pi)

        center = 2 * seq.tau + seq.t_pi - 0.5 * seq.t_pi2
        if window_halfwidth is None:
            window_halfwidth = max(5.0 / ens.width, seq.t_pi2 + seq.t_pi)
        # the window never reaches back into the second pulse
        window_halfwidth = min(window_halfwidth, center - (seq.tau + seq.t_pi))
        self.echo_center = center
        self.window_halfwidth = window_halfwidth
        self.t_grid = center + np.linspace(-window_halfwidth, window_halfwidth, window_points)
        if ens.count > 1 and revival_time(ens) <= self.t_grid[-1]:
            warnings.warn(
                f"{ens.count} detunings over {ens.span:g} MHz revive every {revival_time(ens):.3g} us, "
                f"before the end of the echo window at {self.t_grid[-1]:.3g} us; increase ensemble.count",
                AliasingWarning,
                stacklevel=2,
            )
        after = self.t_grid - (seq.tau + seq.t_pi)
        self._readout = np.exp((1j * det[..., None] - (0.0 if math.isinf(T2) else 1.0 / T2)) * after)

    def coherence(self, stark: StarkPulse):
        """rho_ab at each window time, shape (site, detuning, time)."""
        stark.check(self.seq)
        det = self.detunings[None, :]
        shift = (self.parity * stark.shift)[:, None]
        rest = self.seq.gap - stark.t_on
        gap_map = free_propagator(det, 0.0, rest, self.T1, self.T2) @ free_propagator(
            det, shift, stark.t_on, self.T1, self.T2
        )
        v = self._second.apply(gap_map.apply(self._after_first))
        rho_ab = v[..., 2] + 1j * v[..., 3]
        return rho_ab[..., None] * self._readout

    def polarization(self, stark: StarkPulse):
        """Complex polarization envelope P(t) = sum w mu^* rho_ba, shape (time, 3)."""
        rho_ba = np.conj(self.coherence(stark))
        per_site = np.einsum("n,snt->st", self.weights, rho_ba)
        return np.einsum("sk,st->tk", np.conj(self.moments), per_site)

    def observe(self, stark: StarkPulse) -> EchoObservables:
        P = self.polarization(stark)
        i1, i2, tot = polarized_intensities(P, self.detection)
        return EchoObservables(self.t_grid.copy(), P, i1, i2, tot)


def simulate_echo(seq, stark, ens, dip, light, detection_basis=None, T1=math.inf, T2=math.inf, **kwargs):
    """One Stark-modulated echo; see :class:`EchoEngine` for the options."""
    if ens.count < 1:
        raise ValueError("ensemble count must be >= 1")
    engine = EchoEngine(seq, ens, dip, light, detection_basis, T1=T1, T2=T2, **kwargs)
    return engine.observe(stark)
