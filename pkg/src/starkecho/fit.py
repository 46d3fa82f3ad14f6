"""Damped least-squares fitting of Stark modulation traces.

Model::

    I(x) = A [cos^2(2 pi delta_s * scale * x + phi) + (1 - W)/(2 W)] exp(-x^2 / C)

``scale`` converts the sample axis into the Stark phase.  For an on-time
axis in microseconds with ``delta_s`` in kHz/(V/cm) it is
``(V/d) * 1e-3``; :func:`on_time_scale` builds it.  The modulation
frequency along ``x`` is ``2 * delta_s * scale``.

Internally the optimizer works on ``(ln A, delta_s, phi, logit W, ln C)``
so that ``A > 0``, ``0 < W < 1`` and ``C > 0`` hold without bounds.
"""

from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

_log = logging.getLogger(__name__)

KHZ_US = 1e-3  # kHz * us
PARAM_NAMES = ("A", "delta_s", "phi", "W", "C")


class FitError(RuntimeError):
    """The optimizer failed to converge."""


class TraceTooShortError(ValueError):
    """The trace covers fewer modulation periods than a fit needs."""


class DegenerateTraceError(ValueError):
    """Trace carries no resolvable modulation (constant or too few extrema)."""


def on_time_scale(voltage, thickness, time_unit=1.0):
    """Phase scale for an on-time axis; ``time_unit`` is the axis unit in us."""
    if thickness <= 0:
        raise ValueError("plate separation must be positive")
    return voltage / thickness * KHZ_US * time_unit


def voltage_scale(t_on, thickness):
    """Phase scale for a voltage axis at fixed on-time ``t_on`` (us)."""
    if thickness <= 0:
        raise ValueError("plate separation must be positive")
    return t_on / thickness * KHZ_US


@dataclass(frozen=True)
class FitModelParams:
    A: float
    delta_s: float
    phi: float
    W: float
    C: float = math.inf

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("A must be positive")
        if not 0 < self.W <= 1:
            raise ValueError(f"visibility W must lie in (0, 1], got {self.W!r}")
        if not self.C > 0:
            raise ValueError("C must be positive (or inf)")

    def as_dict(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}


@dataclass
class FitResult:
    params: FitModelParams
    uncertainties: dict
    residual_norm: float
    converged: bool
    iterations: int
    gradient_norm: float = 0.0
    decay_fitted: bool = False
    cost_history: list = field(default_factory=list, repr=False)

    @property
    def frequency(self):
        """Modulation frequency per unit of ``scale``; multiply by scale for x."""
        return 2.0 * self.params.delta_s


def _modulation(x, scale, delta_s, phi):
    return 2 * np.pi * delta_s * scale * x + phi


def model_curve(x, scale, p: FitModelParams):
    x = np.asarray(x, dtype=float)
    theta = _modulation(x, scale, p.delta_s, p.phi)
    decay = 1.0 if math.isinf(p.C) else np.exp(-(x**2) / p.C)
    return p.A * (np.cos(theta) ** 2 + (1 - p.W) / (2 * p.W)) * decay


def model_eval(p: FitModelParams, t_on, V, d_plate, time_unit=1.0):
    """Evaluate the modulation model at on-times ``t_on``.

    ``delta_s`` is in kHz/(V/cm), ``V`` in volts, ``d_plate`` in cm and
    ``t_on`` in units of ``time_unit`` microseconds.
    """
    t_on = np.asarray(t_on, dtype=float)
    if np.any(t_on < 0):
        raise ValueError("t_on must be >= 0")
    if not 0 < p.W <= 1:
        raise ValueError("W out of range")
    return model_curve(t_on, on_time_scale(V, d_plate, time_unit), p)


def natural_jacobian(x, scale, p: FitModelParams, with_decay=True):
    """d I / d(A, delta_s, phi, W[, C]) evaluated analytically."""
    x = np.asarray(x, dtype=float)
    theta = _modulation(x, scale, p.delta_s, p.phi)
    decay = np.ones_like(x) if math.isinf(p.C) else np.exp(-(x**2) / p.C)
    bracket = np.cos(theta) ** 2 + (1 - p.W) / (2 * p.W)
    s2 = np.sin(2 * theta)
    cols = [
        bracket * decay,
        -p.A * decay * s2 * 2 * np.pi * scale * x,
        -p.A * decay * s2,
        -p.A * decay / (2 * p.W**2),
    ]
    if with_decay:
        if math.isinf(p.C):
            cols.append(np.zeros_like(x))
        else:
            cols.append(p.A * bracket * decay * x**2 / p.C**2)
    return np.column_stack(cols)


def _to_internal(p, with_decay):
    W = min(p.W, 1 - 1e-12)
    q = [math.log(p.A), p.delta_s, p.phi, math.log(W / (1 - W))]
    if with_decay:
        q.append(math.log(p.C))
    return np.array(q)


def _from_internal(q, fixed_C):
    A = math.exp(q[0])
    W = 1.0 / (1.0 + math.exp(-q[3]))
    C = math.exp(q[4]) if len(q) > 4 else fixed_C
    return FitModelParams(A=A, delta_s=q[1], phi=q[2], W=max(W, 1e-300), C=C)


def _internal_jacobian(x, scale, p, with_decay):
    J = natural_jacobian(x, scale, p, with_decay)
    J[:, 0] *= p.A
    J[:, 3] *= p.W * (1 - p.W)
    if with_decay:
        J[:, 4] *= p.C
    return J


def _wrap_phase(delta_s, phi):
    if delta_s < 0:
        delta_s, phi = -delta_s, -phi
    # cos^2 has period pi in phi
    phi = (phi + np.pi / 2) % np.pi - np.pi / 2
    if phi <= -np.pi / 2:
        phi += np.pi
    return delta_s, phi


def levenberg_marquardt(
    x, y, scale, init: FitModelParams, with_decay, max_iter=500, xtol=1e-13, ftol=1e-16, gtol=1e-8
):
    """Minimize the squared residual from ``init``.

    Returns ``(params, iterations, converged, gradient_norm, cost_history)``.
    Only steps that lower the cost are accepted, so the history is
    monotone.
    """
    fixed_C = init.C
    q = _to_internal(init, with_decay)
    p = _from_internal(q, fixed_C)
    r = model_curve(x, scale, p) - y
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = 1e-3
    converged = False
    it = 0
    J = _internal_jacobian(x, scale, p, with_decay)
    for it in range(1, max_iter + 1):
        JtJ = J.T @ J
        g = J.T @ r
        diag = np.maximum(np.diag(JtJ), 1e-30)
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(JtJ + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            q_new = q + step
            try:
                p_new = _from_internal(q_new, fixed_C)
            except (OverflowError, ValueError):
                lam *= 10
                continue
            r_new = model_curve(x, scale, p_new) - y
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            break
        rel_drop = (cost - cost_new) / max(cost, 1e-300)
        q, p, r, cost = q_new, p_new, r_new, cost_new
        history.append(cost)
        J = _internal_jacobian(x, scale, p, with_decay)
        lam = max(lam / 10, 1e-12)
        small_step = np.max(np.abs(step) / (np.abs(q) + 1e-8)) < xtol
        if small_step or rel_drop < ftol or cost == 0.0:
            break
    gnorm = _scaled_gradient(J, r, y)
    converged = gnorm <= gtol
    return p, it, converged, gnorm, history


def _scaled_gradient(J, r, y):
    """Gradient components scaled by column norms and the data norm."""
    ynorm = math.sqrt(float(y @ y)) or 1.0
    cols = np.linalg.norm(J, axis=0)
    cols[cols == 0] = 1.0
    return float(np.max(np.abs(J.T @ r) / (cols * ynorm)))


def _uncertainties(x, scale, p, with_decay, rss):
    n = len(x)
    J = natural_jacobian(x, scale, p, with_decay)
    n_par = J.shape[1]
    dof = max(n - n_par, 1)
    s2 = rss / dof
    try:
        cov = s2 * np.linalg.pinv(J.T @ J)
        sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        sig = np.full(n_par, np.nan)
    out = dict(zip(PARAM_NAMES, [float(s) for s in sig]))
    out.setdefault("C", 0.0)
    return out


def _hysteresis_crossings(t, resid, band):
    crossings = []
    state = 0
    last_t = None
    for ti, ri, prev_t, prev_r in zip(t[1:], resid[1:], t[:-1], resid[:-1]):
        if ri > band and state <= 0:
            if state < 0:
                crossings.append((ti if last_t is None else last_t, +1))
            state = 1
        elif ri < -band and state >= 0:
            if state > 0:
                crossings.append((ti if last_t is None else last_t, -1))
            state = -1
        if prev_r * ri <= 0 and ri != prev_r:
            # interpolated midline crossing, remembered until hysteresis confirms it
            last_t = prev_t + (ti - prev_t) * prev_r / (prev_r - ri)
    return crossings


def _extrema(t, y, resid, band):
    """Locate (time, value, kind) extrema between hysteresis crossings."""
    sign = np.where(resid > band, 1, np.where(resid < -band, -1, 0))
    out = []
    current = 0
    start = None
    for i, s in enumerate(sign):
        if s != 0 and s != current:
            if current != 0:
                out.append(_segment_extremum(t, y, start, i, current))
            current, start = s, i
    if current != 0:
        out.append(_segment_extremum(t, y, start, len(t), current))
    return out


def _segment_extremum(t, y, lo, hi, kind):
    seg = y[lo:hi]
    j = lo + (int(np.argmax(seg)) if kind > 0 else int(np.argmin(seg)))
    return t[j], y[j], kind


def initial_guess(x, y, scale, decay=True) -> FitModelParams:
    """Seed the fit from the trace shape alone.

    Frequency comes from the spacing of midline crossings, visibility from
    the first max/min pair, phase from the first maximum and the decay
    constant from the envelope of successive maxima.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 4:
        raise DegenerateTraceError("need at least 4 samples")
    span = float(np.max(y) - np.min(y))
    if not np.all(np.isfinite(y)) or span <= 1e-12 * max(float(np.max(np.abs(y))), 1e-300):
        raise DegenerateTraceError("trace is constant; no modulation to fit")

    baseline = np.polyval(np.polyfit(x, y, 2), x)
    resid = y - baseline
    band = 0.25 * float(np.std(resid))
    crossings = _hysteresis_crossings(x, resid, band)
    extrema = _extrema(x, y, resid, band)
    if len(crossings) < 2 or len(extrema) < 2:
        raise DegenerateTraceError("fewer than 2 resolvable extrema")

    times = [c[0] for c in crossings]
    half_period = (times[-1] - times[0]) / (len(times) - 1)
    f_mod = 1.0 / (2.0 * half_period)
    delta_s = f_mod / (2.0 * scale)

    maxima = [(t, v) for t, v, k in extrema if k > 0]
    minima = [(t, v) for t, v, k in extrema if k < 0]
    if not maxima or not minima:
        raise DegenerateTraceError("fewer than 2 resolvable extrema")
    i_max, i_min = maxima[0][1], minima[0][1]
    if i_max + i_min <= 0:
        W = 1.0
    else:
        W = float(np.clip((i_max - i_min) / (i_max + i_min), 1e-3, 1.0))
    A = i_max * 2 * W / (1 + W)

    t_peak = maxima[0][0]
    phi = -2 * np.pi * delta_s * scale * t_peak
    delta_s, phi = _wrap_phase(delta_s, phi)

    C = math.inf
    if decay and len(maxima) >= 2:
        tm = np.array([m[0] for m in maxima])
        vm = np.array([m[1] for m in maxima])
        if np.all(vm > 0) and np.ptp(tm**2) > 0:
            slope = np.polyfit(tm**2, np.log(vm), 1)[0]
            if slope < 0:
                C = -1.0 / slope
    return FitModelParams(A=max(A, 1e-300), delta_s=delta_s, phi=phi, W=W, C=C)


def _refine_frequency(x, y, scale, guess, rel_width=0.1, n=81):
    """Scan delta_s near the guess, solving A, W, phi linearly at each point.

    Without decay ``I = A/(2W) + (A/2) cos(omega x + 2 phi)`` is linear in
    ``[1, cos, sin]``, so each trial frequency costs one small lstsq.
    """
    env = np.ones_like(x) if math.isinf(guess.C) else np.exp(-(x**2) / guess.C)
    best = None
    for ds in guess.delta_s * np.linspace(1 - rel_width, 1 + rel_width, n):
        omega = 4 * np.pi * ds * scale
        basis = np.column_stack([env, env * np.cos(omega * x), env * np.sin(omega * x)])
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        rss = float(np.sum((basis @ coef - y) ** 2))
        if best is None or rss < best[0]:
            best = (rss, ds, coef)
    _, ds, (b0, c1, c2) = best
    amp = math.hypot(c1, c2)
    if b0 <= 0 or amp <= 0:
        return guess
    A = 2 * amp
    W = float(np.clip(amp / b0, 1e-3, 1 - 1e-9))
    phi = 0.5 * math.atan2(-c2, c1)
    ds, phi = _wrap_phase(ds, phi)
    return FitModelParams(A=A, delta_s=ds, phi=phi, W=W, C=guess.C)


def fit_curve(x, y, scale, init=None, decay="auto", f_threshold=10.0, max_iter=500, min_periods=1.5) -> FitResult:
    """Fit the modulation model to samples ``y(x)``.

    ``decay`` is ``"off"`` (C fixed at infinity), ``"on"`` (C always free) or
    ``"auto"``: fit without decay first and keep the decaying model only if
    the F statistic for the extra parameter exceeds ``f_threshold``.
    ``x`` must be increasing and cover at least ``min_periods`` modulation
    periods.
    """
    if decay not in ("auto", "on", "off"):
        raise ValueError("decay must be 'auto', 'on' or 'off'")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    if len(x) < 8:
        raise DegenerateTraceError("need at least 8 samples to fit")
    if init is None:
        init = initial_guess(x, y, scale, decay=decay != "off")
        init = _refine_frequency(x, y, scale, init)
    periods = float(x[-1] - x[0]) * 2 * init.delta_s * abs(scale)
    if periods < min_periods:
        raise TraceTooShortError(f"trace spans {periods:.2f} modulation periods; need >= {min_periods}")

    base = replace(init, C=math.inf)
    it1 = 0
    p0, it0, conv0, g0, hist0 = levenberg_marquardt(x, y, scale, base, False, max_iter=max_iter)
    rss0 = float(np.sum((model_curve(x, scale, p0) - y) ** 2))
    best = (p0, it0, conv0, g0, hist0, rss0, False)

    if decay != "off":
        c_start = init.C if math.isfinite(init.C) else 4.0 * float(np.max(x**2) or 1.0)
        p1, it1, conv1, g1, hist1 = levenberg_marquardt(
            x, y, scale, replace(p0, C=c_start), True, max_iter=max_iter
        )
        rss1 = float(np.sum((model_curve(x, scale, p1) - y) ** 2))
        dof = max(len(x) - 5, 1)
        if decay == "on":
            keep = True
        elif rss1 >= rss0 or rss0 <= 1e-28 * max(float(y @ y), 1e-300):
            keep = False
        else:
            F = (rss0 - rss1) / max(rss1 / dof, 1e-300)
            keep = F > f_threshold
        if keep:
            best = (p1, it0 + it1, conv1, g1, hist0 + hist1[1:], rss1, True)

    p, iters, conv, gnorm, hist, rss, decay_fitted = best
    if not conv and (it1 if decay_fitted else it0) >= max_iter:
        raise FitError(f"no convergence after {max_iter} iterations (scaled gradient {gnorm:.3g})")
    ds, phi = _wrap_phase(p.delta_s, p.phi)
    p = replace(p, delta_s=ds, phi=phi)
    unc = _uncertainties(x, scale, p, decay_fitted, rss)
    if not decay_fitted:
        unc["C"] = 0.0
    if not conv:
        _log.warning("fit stopped after %d iterations without meeting the gradient tolerance", iters)
    return FitResult(
        params=p,
        uncertainties=unc,
        residual_norm=math.sqrt(rss),
        converged=conv,
        iterations=iters,
        gradient_norm=gnorm,
        decay_fitted=decay_fitted,
        cost_history=hist,
    )


def fit_trace(trace, init=None, channel="parallel", decay=None, **kwargs) -> FitResult:
    """Fit one detection channel of a :class:`~starkecho.scan.ModulationTrace`."""
    y = trace.channel(channel)
    scale = trace.phase_scale()
    if decay is None:
        decay = "off" if trace.axis == "voltage" else "auto"
    if trace.axis == "voltage" and decay != "off":
        raise ValueError("decay in on-time is constant along a voltage axis; use decay='off'")
    return fit_curve(trace.x, y, scale, init=init, decay=decay, **kwargs)
