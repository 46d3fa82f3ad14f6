"""From a raw measurement file to a Stark-shift table.

A synthetic measurement stands in for lab data: two Zeeman branches along
one direction, on-times in ns, echo areas with 1% noise, rows in
acquisition order.  Each file is ingested, fitted and summarised.

    python demos/04_fit_measurement.py
"""

from pathlib import Path

import numpy as np

from starkecho.fit import FitModelParams, fit_trace, model_curve, on_time_scale
from starkecho.io import fit_record, ingest_csv, parse_records, record_to_text, table_to_csv
from starkecho.scan import zeeman_branch_shifts

OUT = Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)

V, THICKNESS = 10.0, 0.317  # volts, cm
rng = np.random.default_rng(5)

records = []
for branch, delta_s in (("lower", 1.61), ("upper", 2.12)):
    t_on = np.linspace(0.1, 18.5, 93)
    truth = FitModelParams(A=1.0, delta_s=delta_s, phi=0.1, W=0.8)
    area = model_curve(t_on, on_time_scale(V, THICKNESS), truth) + rng.normal(0, 0.01, t_on.shape)
    order = rng.permutation(t_on.size)
    raw = OUT / f"raw_{branch}.csv"
    lines = ["# shots = 8", "# wait_time = 240 ms", "t_on [ns],area_parallel"]
    lines += [f"{t_on[i] * 1e3:.1f},{area[i]:.6f}" for i in order]
    raw.write_text("\n".join(lines) + "\n")

    trace = ingest_csv(raw, voltage=V, thickness=THICKNESS)  # warns: rows were shuffled
    result = fit_trace(trace, decay="off")
    p, s = result.params, result.uncertainties
    print(f"{branch:5s}: delta_s = {p.delta_s:.3f} +- {s['delta_s']:.3f} kHz/(V/cm), W = {p.W:.2f}")
    # records as they would be read back from the per-fit files
    text = record_to_text(fit_record(result, source=raw.name, direction="D1", branch=branch))
    records += parse_records(text)

print()
print(table_to_csv(records))
z = zeeman_branch_shifts(float(records[0]["delta_s"]), float(records[1]["delta_s"]))
print(f"optical part {z.delta_o:.3f}, g-shift part {z.delta_g:.3f} kHz/(V/cm)")
