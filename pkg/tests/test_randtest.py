import numpy as np
import pytest

from lpnqrng.exceptions import ParameterError
from lpnqrng.extractor import BitStream
from lpnqrng.randtest import (
    FAIL,
    NOT_APPLICABLE,
    PASS,
    BatteryConfig,
    block_frequency_test,
    byte_uniformity_test,
    monobit_test,
    run_battery,
    runs_test,
    serial_correlation_test,
)

N = 10**4
ZEROS = np.zeros(N, np.uint8)
ALT = np.tile(np.array([0, 1], np.uint8), N // 2)


def _prng_bits(seed, n=10**6):
    return np.random.default_rng(seed).integers(0, 2, n, dtype=np.uint8)


def test_monobit_examples():
    assert monobit_test(ZEROS).status == FAIL
    r = monobit_test(ALT)
    assert r.statistic == 0 and r.p_value == 1.0 and r.status == PASS
    with pytest.raises(ParameterError):
        monobit_test(ZEROS[:50])


def test_runs_examples():
    r = runs_test(ALT)
    assert r.status == FAIL and r.statistic == N
    assert runs_test(ZEROS).status == NOT_APPLICABLE


def test_block_frequency_examples():
    assert block_frequency_test(ZEROS, 100).status == FAIL
    r = block_frequency_test(ALT, 100)
    assert r.statistic == 0 and r.p_value == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        block_frequency_test(ZEROS[:1000], 100)


def test_serial_correlation_examples():
    period2 = np.tile(np.array([0, 0, 1, 1], np.uint8), N // 4)
    r = serial_correlation_test(period2, 4)
    assert r.status == FAIL and r.details["rho"][1] == pytest.approx(-1.0, abs=1e-3)
    alt = serial_correlation_test(ALT, 4)
    assert alt.details["rho"][1] == pytest.approx(1.0, abs=1e-3)
    doubled = np.repeat(_prng_bits(1, N // 2), 2)
    d = serial_correlation_test(doubled, 4)
    assert d.status == FAIL and d.details["rho"][0] == pytest.approx(0.5, abs=0.05)


def test_serial_correlation_white_bits_within_bound():
    r = serial_correlation_test(_prng_bits(2), 16)
    assert r.details["within_bound"] and r.status == PASS


def test_byte_uniformity_applicability():
    assert byte_uniformity_test(ZEROS[:800]).status == NOT_APPLICABLE
    assert byte_uniformity_test(np.zeros(2 * N, np.uint8)).status == FAIL
    assert byte_uniformity_test(_prng_bits(3)).status == PASS


def test_battery_accepts_bitstream_and_reports(tmp_path):
    rep = run_battery(BitStream.from_bits(_prng_bits(4)))
    assert rep.passed and rep.bit_count == 10**6
    assert rep["monobit"].passed
    rep.to_json(tmp_path / "t.json")
    assert rep.to_dict()["counts"]["failed"] == 0
    with pytest.raises(ParameterError):
        run_battery(ZEROS[:100])


def test_battery_flags_bad_stream():
    rep = run_battery(np.repeat(_prng_bits(5, 10**5), 2))
    assert not rep.passed
    assert "serial_correlation" in [r.name for r in rep.failures]


@pytest.mark.parametrize("test", [monobit_test, runs_test, block_frequency_test])
def test_calibration_over_seeds(test):
    # at alpha = 0.01 a correct test passes about 99 of 100 good streams
    passes = sum(test(_prng_bits(1000 + s)).status == PASS for s in range(100))
    assert passes >= 98


def test_battery_calibration_over_seeds():
    cfg = BatteryConfig()
    failures = sum(not run_battery(_prng_bits(5000 + s, 2 * 10**5), cfg).passed for s in range(100))
    # five tests at alpha = 0.01: about 5 expected failures, 11 is beyond 2.5 sigma
    assert failures <= 11
