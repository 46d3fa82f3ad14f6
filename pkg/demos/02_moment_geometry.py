"""How the magnetic moment changes the on-time modulation.

Scans the Stark on-time for four moment geometries and fits each detection
channel.  Writes plot-ready CSVs next to the script.

    python demos/02_moment_geometry.py
"""

from pathlib import Path

import numpy as np

from starkecho import DipoleSet, EchoSequence, EnsembleSpec, LightField, StarkConfig, modulation_metrics, scan
from starkecho.fit import DegenerateTraceError
from starkecho.io import write_trace_csv

OUT = Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)

seq = EchoSequence(np.pi / 2, np.pi, 13.0)
ensemble = EnsembleSpec("flat", 80.0, 5000)
stark = StarkConfig(50.0, 10.0, 1.0)

# (label, magnetic moment, field amplitude).  For the perpendicular and
# general cases the drive is chosen so the weaker sub-site sees exact
# pi/2 and pi pulses while the stronger one is overdriven.
cases = [
    ("electric only", [0, 0, 0], 1.0),
    ("m parallel to d", [0.5, 0, 0], 1.0),
    ("m perpendicular to d", [0, 0.5, 0], 2.0),
    ("general m", [0.3, 0.45, 0.2], 1 / 0.55),
]

for label, m, E0 in cases:
    trace = scan(seq, stark, ensemble, DipoleSet([1, 0, 0], m), LightField([1, 0, 0], [0, 0, 1], E0=E0))
    path = OUT / (label.replace(" ", "_") + ".csv")
    write_trace_csv(trace, path)
    print(f"{label}  ->  {path.name}")
    for channel in ("parallel", "perp", "total"):
        try:
            mm = modulation_metrics(trace, channel)
        except DegenerateTraceError:
            print(f"    {channel:8s}  no signal")
            continue
        print(f"    {channel:8s}  f = {mm.frequency:.4f} MHz  W = {mm.visibility:.3f}  "
              f"phi = {np.degrees(mm.phase):7.2f} deg")
