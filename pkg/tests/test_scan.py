import math

import numpy as np
import pytest

from regimes import BROAD, PI_SEQ, REGIMES, STARK, light, run
from starkecho.echo import EnsembleSpec
from starkecho.fit import fit_trace
from starkecho.scan import (
    ModulationTrace,
    NoModulationError,
    StarkConfig,
    TraceTooShortError,
    branch_shifts,
    gshift_vs_field,
    measured_visibility,
    modulation_metrics,
    scan,
    with_noise,
    zeeman_branch_shifts,
)


@pytest.fixture(scope="module")
def trace_electric():
    return run("electric", samples=61, stop=6.0)


@pytest.fixture(scope="module")
def trace_parallel_m():
    return run("parallel_m", samples=61, stop=6.0)


def test_zero_shift_gives_constant_trace():
    dip, E0 = REGIMES["electric"]
    t = scan(PI_SEQ, StarkConfig(0.0), BROAD, dip, light(E0), samples=11)
    assert np.ptp(t.I_total) <= 1e-9 * t.I_total.max()
    with pytest.raises(NoModulationError):
        modulation_metrics(t)


def test_electric_only_full_visibility(trace_electric):
    m = modulation_metrics(trace_electric)
    assert m.frequency == pytest.approx(1.0, rel=1e-2)
    assert m.visibility >= 0.99
    assert abs(math.degrees(m.phase)) <= 1.0
    assert np.max(trace_electric.I_perp) <= 1e-6 * np.max(trace_electric.I_parallel)
    assert m.delta_s == pytest.approx(50.0, rel=1e-2)


def test_parallel_moments_split_visibility(trace_parallel_m):
    par = modulation_metrics(trace_parallel_m, "parallel")
    perp = modulation_metrics(trace_parallel_m, "perp")
    tot = modulation_metrics(trace_parallel_m, "total")
    assert par.visibility >= 0.99 and perp.visibility >= 0.99
    assert tot.visibility < min(par.visibility, perp.visibility)


def test_perpendicular_moment_shifts_phase():
    t = run("perpendicular_m", samples=61, stop=6.0)
    m = modulation_metrics(t)
    assert abs(math.degrees(m.phase)) > 1.0 and m.visibility < 0.99
    assert np.max(t.I_perp) <= 1e-12 * np.max(t.I_parallel)


def test_frequency_linear_in_voltage():
    dip, E0 = REGIMES["electric"]
    volts = np.array([4.0, 7.0, 10.0, 13.0])
    freqs, sig = [], []
    for v in volts:
        t = scan(PI_SEQ, StarkConfig(50.0, v, 1.0), BROAD, dip, light(E0), samples=61, stop=8.0)
        m = modulation_metrics(t)
        freqs.append(m.frequency)
        sig.append(2 * m.uncertainties["delta_s"] * t.phase_scale())
    slope = np.sum(volts * freqs) / np.sum(volts**2)
    resid = np.array(freqs) - slope * volts
    assert np.all(np.abs(resid) <= np.maximum(3 * np.array(sig), 1e-3 * np.array(freqs)))
    assert slope == pytest.approx(2 * 50.0 * 1e-3, rel=1e-2)


def test_voltage_axis_scan():
    dip, E0 = REGIMES["electric"]
    t = scan(PI_SEQ, STARK, BROAD, dip, light(E0), axis="voltage", samples=41, t_on=4.0, stop=20.0)
    assert t.axis == "voltage" and t.meta["t_on"] == 4.0
    res = fit_trace(t)
    assert res.params.delta_s == pytest.approx(50.0, rel=1e-2)
    with pytest.raises(ValueError):
        scan(PI_SEQ, STARK, BROAD, dip, light(E0), axis="voltage", samples=5)


def test_guard_violations_listed_per_sample():
    dip, E0 = REGIMES["electric"]
    with pytest.raises(ValueError, match="sample 2") as exc:
        scan(PI_SEQ, STARK, BROAD, dip, light(E0), samples=[1.0, 10.0, 11.0, 12.0], guard=0.5)
    assert "sample 3" in str(exc.value) and "sample 0" not in str(exc.value)


def test_trace_validation():
    with pytest.raises(ValueError):
        ModulationTrace("on_time", [0, 1, 1], [1, 1, 1], [0, 0, 0], [1, 1, 1])
    with pytest.raises(ValueError):
        ModulationTrace("on_time", [0, 1, 2], [1, -1, 1], [0, 0, 0], [1, 1, 1])
    with pytest.raises(ValueError):
        ModulationTrace("time", [0, 1, 2], [1, 1, 1], [0, 0, 0], [1, 1, 1])


def test_short_trace_rejected(trace_electric):
    short = ModulationTrace(
        "on_time", trace_electric.x[:9], trace_electric.I_parallel[:9], trace_electric.I_perp[:9], trace_electric.I_total[:9], trace_electric.meta
    )
    with pytest.raises((TraceTooShortError, NoModulationError)):
        modulation_metrics(short)


def test_parallel_workers_match_serial():
    a = run("general_m", samples=24, stop=5.0, ens=EnsembleSpec("flat", 80.0, 3000))
    b = run("general_m", samples=24, stop=5.0, ens=EnsembleSpec("flat", 80.0, 3000), workers=4)
    assert a == b


def test_metadata_records_physics_inputs(trace_electric):
    for key in ("voltage", "thickness", "shift_coeff", "tau", "t_pi2", "t_pi", "ensemble", "dipole.d",
                "dipole.m", "light.epsilon", "light.khat", "light.E0", "detection", "T1", "T2"):
        assert key in trace_electric.meta


def test_noise_is_seeded(trace_electric):
    a = with_noise(trace_electric, 0.01, seed=3)
    b = with_noise(trace_electric, 0.01, seed=3)
    c = with_noise(trace_electric, 0.01, seed=4)
    assert a == b and a != c
    assert np.all(a.I_parallel >= 0)
    assert with_noise(trace_electric, 0.0) is trace_electric


def test_measured_visibility():
    assert measured_visibility([1.0, 3.0, 2.0]) == pytest.approx(0.5)


def test_zeeman_branch_arithmetic():
    z = zeeman_branch_shifts(1.61, 2.12)
    assert z.delta_o == pytest.approx(1.865, abs=1e-12)
    assert z.delta_g == pytest.approx(0.255, abs=1e-12)
    back = branch_shifts(z.delta_o, z.delta_g)
    assert back.lower == pytest.approx(1.61, abs=1e-12) and back.upper == pytest.approx(2.12, abs=1e-12)
    same = branch_shifts(3.0, 0.0)
    assert same.lower == same.upper == 3.0


def test_gshift_quadratic_law():
    assert gshift_vs_field(10.0, 0.3) == pytest.approx(0.9, abs=1e-12)
    assert gshift_vs_field(10.0, 0.35) == pytest.approx(1.225, abs=1e-12)
    assert gshift_vs_field(10.0, 0.0) == 0.0
    assert gshift_vs_field(10.0, 0.6) == pytest.approx(4 * gshift_vs_field(10.0, 0.3), rel=1e-14)
    with pytest.raises(ValueError):
        gshift_vs_field(math.inf, 1.0)


from hypothesis import given, settings, strategies as st  # noqa: E402


@settings(max_examples=200, deadline=None)
@given(lower=st.floats(-100, 100), upper=st.floats(-100, 100))
def test_zeeman_split_is_inverted_by_recombination(lower, upper):
    z = zeeman_branch_shifts(lower, upper)
    back = branch_shifts(z.delta_o, z.delta_g)
    assert back.lower == pytest.approx(lower, abs=1e-12) and back.upper == pytest.approx(upper, abs=1e-12)
