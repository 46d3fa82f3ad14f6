"""Weak pulses on a narrow line halve the modulation frequency.

With pulse areas well below pi/2 and pi, a 100 kHz wide line is driven
almost uniformly and the sub-sites no longer interfere as two equal
phasors.  An 80 MHz line driven the same way still shows the usual
modulation at twice the Stark shift.

    python demos/03_weak_drive.py
"""

import numpy as np

from starkecho import DipoleSet, EchoSequence, EnsembleSpec, LightField, StarkConfig, modulation_metrics, scan

weak = EchoSequence(t_pi2=np.pi / 8, t_pi=np.pi / 4, tau=13.0)
stark = StarkConfig(50.0, 10.0, 1.0)
dipoles = DipoleSet([1, 0, 0], [0, 0, 0])
light = LightField([1, 0, 0], [0, 0, 1], E0=1.0)

for label, ensemble in (("100 kHz line", EnsembleSpec("flat", 0.1, 201)),
                        ("80 MHz line", EnsembleSpec("flat", 80.0, 5000))):
    trace = scan(weak, stark, ensemble, dipoles, light)
    m = modulation_metrics(trace)
    print(f"{label:13s} f = {m.frequency:.4f} MHz (shift {stark.applied_shift_mhz():g} MHz)  W = {m.visibility:.3f}")
