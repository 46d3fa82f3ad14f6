"""Simulation set-ups shared by the scan and acceptance tests.

All use light along z polarized along x, a 13 us pulse separation and a
0.5 MHz Stark shift (50 kHz/(V/cm) at 10 V over 1 cm).
"""

import numpy as np

from starkecho.echo import EchoSequence, EnsembleSpec
from starkecho.moments import DipoleSet, LightField
from starkecho.scan import StarkConfig, scan

PI_SEQ = EchoSequence(np.pi / 2, np.pi, 13.0)
WEAK_SEQ = EchoSequence(np.pi / 8, np.pi / 4, 13.0)
BROAD = EnsembleSpec("flat", 80.0, 5000)
NARROW = EnsembleSpec("flat", 0.1, 201)
STARK = StarkConfig(shift_coeff=50.0, voltage=10.0, thickness=1.0)

REGIMES = {
    # electric dipole only
    "electric": (DipoleSet([1, 0, 0], [0, 0, 0]), 1.0),
    # magnetic moment parallel to the electric one
    "parallel_m": (DipoleSet([1, 0, 0], [0.5, 0, 0]), 1.0),
    # perpendicular magnetic moment; drive set so the weaker sub-site gets exact pulses
    "perpendicular_m": (DipoleSet([1, 0, 0], [0, 0.5, 0]), 2.0),
    # general magnetic moment, same idea
    "general_m": (DipoleSet([1, 0, 0], [0.3, 0.45, 0.2]), 1.0 / 0.55),
}


def light(E0):
    return LightField([1, 0, 0], [0, 0, 1], E0=E0)


def run(regime, samples=121, stop=None, seq=PI_SEQ, ens=BROAD, **kw):
    dip, E0 = REGIMES[regime]
    return scan(seq, STARK, ens, dip, light(E0), samples=samples, stop=stop, **kw)
