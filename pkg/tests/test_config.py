import re
from pathlib import Path

import numpy as np
import pytest

import starkecho
from starkecho.config import DEFAULTS, ConfigError, RunConfig, defaults_table, parse_text

SRC = Path(starkecho.__file__).parent


def test_defaults_build_every_object():
    cfg = RunConfig()
    assert cfg.sequence().tau == 13.0
    assert cfg.light().E0 == pytest.approx(1.0, rel=1e-14)
    assert cfg.ensemble().count == 5000
    assert cfg.stark().applied_shift_mhz() == pytest.approx(0.5)
    assert cfg.detection() is None


def test_grammar():
    text = """
    # comment line
    dipole.m = 0, 0.5j, 0   # trailing comment
    sequence.tau=20
    ensemble.span =
    """
    cfg = RunConfig.from_text(text)
    np.testing.assert_array_equal(cfg.dipoles().m, [0, 0.5j, 0])
    assert cfg.sequence().tau == 20.0
    assert cfg.ensemble().span == 80.0


@pytest.mark.parametrize(
    "text, message",
    [
        ("foo.bar = 1", "unknown key"),
        ("sequence.tau = 1\nsequence.tau = 2", "duplicate"),
        ("sequence.tau", "expected"),
        ("sequence.tau = abc", "number"),
        ("sequence.tau = 3", "tau"),
        ("light.epsilon = 0, 0, 1", "transverse"),
        ("ensemble.shape = lorentz", "shape"),
        ("scan.axis = field", "scan.axis"),
        ("fit.decay = maybe", "fit.decay"),
        ("relax.T1 = 1\nrelax.T2 = 5", "T2"),
        ("scan.stop = 40", "second pulse"),
        ("detection.e1 = 1, 0, 0", "both"),
        ("detection.e1 = 1, 0, 0\ndetection.e2 = 1, 0, 0", "orthonormal"),
        ("dipole.d = 1, 0", "three"),
        ("scan.samples = 1", "samples"),
    ],
)
def test_validation_errors(text, message):
    with pytest.raises(ConfigError, match=message):
        RunConfig.from_text(text)


def test_every_key_is_consumed():
    consumers = (SRC / "config.py").read_text().split("DEFAULTS = {", 1)[1].split("\n}\n", 1)[1]
    consumers += (SRC / "cli.py").read_text()
    for key in DEFAULTS:
        assert re.search(rf'"{re.escape(key)}"', consumers), key


def test_digest_tracks_effective_values():
    a = RunConfig()
    b = RunConfig.from_text("sequence.tau = 13.0")
    c = RunConfig.from_text("sequence.tau = 14.0")
    assert a.digest() == b.digest() != c.digest()


def test_defaults_table_lists_every_key():
    table = defaults_table()
    for key in DEFAULTS:
        assert f"`{key}`" in table


def test_parse_text_returns_raw_strings():
    assert parse_text("stark.voltage = 12") == {"stark.voltage": "12"}
