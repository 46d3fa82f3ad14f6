import io
import warnings

import numpy as np
import pytest

from regimes import run
from starkecho.echo import EnsembleSpec
from starkecho.fit import FitModelParams, FitResult
from starkecho.io import (
    IngestError,
    UnsortedRowsWarning,
    build_table,
    echo_to_csv,
    fit_record,
    ingest_csv,
    parse_records,
    read_trace_csv,
    record_to_text,
    table_to_csv,
    trace_to_csv,
    write_trace_csv,
)
from starkecho.scan import ModulationTrace


@pytest.fixture(scope="module")
def trace():
    return run("general_m", samples=30, stop=5.0, ens=EnsembleSpec("flat", 80.0, 3000))


def test_exact_round_trip(trace):
    buf = io.StringIO()
    write_trace_csv(trace, buf, precision=None)
    back = read_trace_csv(io.StringIO(buf.getvalue()))
    assert back == trace


def test_nine_digit_output_is_stable(trace):
    text = trace_to_csv(trace)
    back = read_trace_csv(io.StringIO(text))
    assert trace_to_csv(back) == text
    np.testing.assert_allclose(back.I_total, trace.I_total, rtol=1e-8)
    row = text.splitlines()[-1].split(",")
    assert all(f"{float(v):.9g}" == v for v in row)


def test_column_order_is_fixed(trace):
    lines = [l for l in trace_to_csv(trace).splitlines() if not l.startswith("#")]
    assert lines[0] == "x,I_parallel,I_perp,I_total"


def test_trace_reader_requires_axis_and_header():
    with pytest.raises(IngestError):
        read_trace_csv(io.StringIO("x,I_parallel,I_perp,I_total\n0,1,0,1\n"))
    with pytest.raises(IngestError):
        read_trace_csv(io.StringIO("# axis = on_time\nx,a,b,c\n0,1,0,1\n"))


def test_ingest_three_column_file():
    text = "t_on [us],parallel,perp\n0.1,1.0,0.2\n0.2,0.8,0.3\n0.3,0.5,0.1\n"
    tr = ingest_csv(io.StringIO(text))
    assert len(tr) == 3 and tr.axis == "on_time"
    assert set(tr.areas) == {"parallel", "perp"}


def test_ingest_sorts_shuffled_rows_with_warning():
    text = "t_on (ns),parallel\n300,3\n100,1\n200,2\n"
    with pytest.warns(UnsortedRowsWarning):
        tr = ingest_csv(io.StringIO(text))
    np.testing.assert_allclose(tr.x, [0.1, 0.2, 0.3])
    np.testing.assert_array_equal(tr.areas["parallel"], [1, 2, 3])


def test_ingest_voltage_axis_converts_to_field():
    text = "voltage [V],parallel\n1,1\n2,2\n5,3\n"
    tr = ingest_csv(io.StringIO(text), thickness=0.5)
    assert tr.axis == "field"
    np.testing.assert_allclose(tr.x, [2.0, 4.0, 10.0])
    with pytest.raises(IngestError, match="thickness"):
        ingest_csv(io.StringIO(text))


def test_ingest_errors():
    with pytest.raises(IngestError, match="not found"):
        ingest_csv(io.StringIO("t [us],a\n1,2\n"), column_map={"parallel": "b"})
    with pytest.raises(IngestError, match="no intensity"):
        ingest_csv(io.StringIO("t [us],a\n1,2\n"))
    with pytest.raises(IngestError, match="ambiguous"):
        ingest_csv(io.StringIO("t,parallel\n1,2\n2,3\n"))
    with pytest.raises(IngestError, match="ambiguous"):
        ingest_csv(io.StringIO("t [ns],parallel\n1,2\n2,3\n"), x_unit="us")
    with pytest.raises(IngestError, match="monotone"):
        ingest_csv(io.StringIO("t [us],parallel\n1,2\n1,3\n"))
    with pytest.raises(IngestError, match="negative"):
        ingest_csv(io.StringIO("t [us],parallel\n1,2\n2,-3\n"))


def test_ingest_reads_shot_metadata_and_column_map():
    text = "# shots = 8\n# wait_time = 240 ms\n# voltage = 10\ntime [us],A1,A2\n0.1,1,0\n0.2,2,0\n"
    tr = ingest_csv(io.StringIO(text), column_map={"parallel": "A1", "perp": "A2"}, thickness=0.317)
    assert tr.shots == 8 and tr.wait_time == pytest.approx(0.24)
    assert tr.voltage == 10.0 and tr.thickness == 0.317
    assert tr.phase_scale() == pytest.approx(10 / 0.317 * 1e-3)


def test_normalized_output_reingests_identically():
    text = "# shots = 8\nt_on [ns],parallel,total\n100,1,2\n250,3,4\n"
    tr = ingest_csv(io.StringIO(text), voltage=10.0, thickness=0.3)
    again = ingest_csv(io.StringIO(tr.to_csv(precision=None)))
    np.testing.assert_array_equal(again.x, tr.x)
    assert again.voltage == 10.0 and again.shots == 8


def test_ingest_accepts_emitted_trace(trace):
    tr = ingest_csv(io.StringIO(trace_to_csv(trace, precision=None)))
    np.testing.assert_array_equal(tr.x, trace.x)
    np.testing.assert_array_equal(tr.areas["perp"], trace.I_perp)


def _result(ds, sigma):
    p = FitModelParams(A=1.0, delta_s=ds, phi=0.1, W=0.9)
    unc = {"A": 0.01, "delta_s": sigma, "phi": 0.01, "W": 0.01, "C": 0.0}
    return FitResult(p, unc, 0.1, True, 7, 1e-12)


def test_fit_record_round_trip():
    rec = fit_record(_result(1.61, 0.01), source="a.csv", config_hash="abc", direction="D1", branch="lower")
    back = parse_records(record_to_text(rec))[0]
    assert back["delta_s"] == "1.61" and back["delta_s.sigma"] == "0.01"
    assert back["config_hash"] == "abc" and back["direction"] == "D1"
    assert parse_records(record_to_text(rec), typed=True)[0]["converged"] is True


def test_table_copies_values_verbatim():
    shifts = {("D1", "lower"): (1.61, 0.01), ("D1", "upper"): (2.12, 0.01), ("D2", "lower"): (15.35, 0.05),
              ("D2", "upper"): (14.9, 0.04), ("D3", "lower"): (3.375, 0.012), ("D3", "upper"): (3.0123456789, 0.02)}
    text = "\n".join(
        record_to_text(fit_record(_result(ds, s), direction=d, branch=b)) for (d, b), (ds, s) in shifts.items()
    )
    records = parse_records(text)
    branches, rows = build_table(records)
    assert branches == ["lower", "upper"]
    for d, cols, split in rows:
        for b in branches:
            rec = next(r for r in records if r["direction"] == d and r["branch"] == b)
            assert cols[b] == (rec["delta_s"], rec["delta_s.sigma"])
    d1 = rows[0][2]
    assert d1[0] == pytest.approx(1.865) and d1[1] == pytest.approx(0.255)
    csv_text = table_to_csv(records)
    assert csv_text.splitlines()[0] == "direction,lower.delta_s,lower.sigma,upper.delta_s,upper.sigma,delta_o,delta_g"
    assert csv_text.splitlines()[1].startswith("D1,1.61,0.01,2.12,0.01,1.865,0.255")
    with pytest.raises(ValueError):
        build_table(records + records[:1])


def test_echo_dump_lists_scalars():
    from regimes import BROAD, PI_SEQ, REGIMES, light
    from starkecho.echo import StarkPulse, simulate_echo

    dip, E0 = REGIMES["electric"]
    obs = simulate_echo(PI_SEQ, StarkPulse(0.2, np.pi), BROAD, dip, light(E0), window_points=11)
    text = echo_to_csv(obs)
    assert "# peak_intensity.total = " in text
    assert len([l for l in text.splitlines() if not l.startswith("#")]) == 12
