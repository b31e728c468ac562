"""A compact statistical battery for extracted bits.

Frequency (monobit), block frequency and runs follow their NIST SP 800-22
definitions.  The serial-correlation test checks the +/-1 bit autocorrelation
at lags ``1..max_lag``; its p-value is the Sidak-adjusted two-sided normal
p-value of the largest lag statistic.  Byte uniformity is a 255-dof
chi-square over byte values.
"""

from dataclasses import asdict, dataclass, field
import json
import math

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import chi2

from ._validation import check_bits, check_int
from .exceptions import ParameterError

PASS, FAIL, NOT_APPLICABLE = "pass", "fail", "not_applicable"


@dataclass
class TestResult:
    name: str
    statistic: float
    p_value: float
    status: str
    details: dict = field(default_factory=dict)

    __test__ = False

    @property
    def passed(self):
        return self.status == PASS

    @property
    def applicable(self):
        return self.status != NOT_APPLICABLE


def _result(name, statistic, p, alpha, **details):
    p = float(min(max(p, 0.0), 1.0))
    return TestResult(name, float(statistic), p, PASS if p >= alpha else FAIL, details)


def _bits(bits):
    return check_bits(bits.to_bits() if hasattr(bits, "to_bits") else bits)


def monobit_test(bits, alpha=0.01):
    x = _bits(bits)
    n = x.size
    if n < 100:
        raise ParameterError("monobit test needs at least 100 bits")
    s = 2 * int(np.count_nonzero(x)) - n
    stat = abs(s) / math.sqrt(n)
    return _result("monobit", stat, erfc(stat / math.sqrt(2)), alpha, ones=n // 2 + s // 2)


def runs_test(bits, alpha=0.01):
    """Runs test; not applicable when the ones proportion is off by >= 2/sqrt(n)."""
    x = _bits(bits)
    n = x.size
    if n < 100:
        raise ParameterError("runs test needs at least 100 bits")
    pi = np.count_nonzero(x) / n
    if abs(pi - 0.5) >= 2 / math.sqrt(n):
        return TestResult("runs", float("nan"), float("nan"), NOT_APPLICABLE, {"proportion": pi})
    runs = 1 + int(np.count_nonzero(x[1:] != x[:-1]))
    num = abs(runs - 2 * n * pi * (1 - pi))
    p = erfc(num / (2 * math.sqrt(2 * n) * pi * (1 - pi)))
    return _result("runs", runs, p, alpha, proportion=pi)


def block_frequency_test(bits, block_len=128, alpha=0.01):
    x = _bits(bits)
    block_len = check_int("block_len", block_len, minimum=1)
    nblocks = x.size // block_len
    if nblocks < 20:
        raise ParameterError("block frequency test needs at least 20 blocks")
    ones = x[: nblocks * block_len].reshape(nblocks, block_len).sum(axis=1, dtype=np.int64)
    stat = 4.0 * block_len * float(np.sum((ones / block_len - 0.5) ** 2))
    return _result("block_frequency", stat, gammaincc(nblocks / 2, stat / 2), alpha, blocks=nblocks)


def serial_correlation_test(bits, max_lag=16, alpha=0.01):
    """Bit autocorrelation at lags 1..max_lag against the +/-4/sqrt(N) white-noise bound."""
    x = _bits(bits)
    max_lag = check_int("max_lag", max_lag, minimum=1)
    n = x.size
    if n < 100 * max_lag:
        raise ParameterError("serial correlation test needs at least 100*max_lag bits")
    y = x.astype(np.float64) * 2 - 1
    y -= y.mean()
    r0 = float(np.dot(y, y))
    if r0 == 0:
        rho = np.ones(max_lag)
    else:
        rho = np.array([np.dot(y[:-k], y[k:]) / r0 for k in range(1, max_lag + 1)])
    zmax = float(np.max(np.abs(rho))) * math.sqrt(n)
    p_one = erfc(zmax / math.sqrt(2))
    p = -math.expm1(max_lag * math.log1p(-p_one)) if p_one < 1 else 1.0
    bound = 4 / math.sqrt(n)
    return _result(
        "serial_correlation",
        zmax,
        p,
        alpha,
        rho=rho.tolist(),
        bound=bound,
        within_bound=bool(np.all(np.abs(rho) <= bound)),
    )


def byte_uniformity_test(bits, alpha=0.01):
    """Chi-square of byte frequencies; not applicable below 5 expected counts per value."""
    x = _bits(bits)
    nbytes = x.size // 8
    if nbytes < 5 * 256:
        return TestResult("byte_uniformity", float("nan"), float("nan"), NOT_APPLICABLE, {"bytes": nbytes})
    counts = np.bincount(np.packbits(x[: nbytes * 8]), minlength=256)
    expected = nbytes / 256
    stat = float(np.sum((counts - expected) ** 2) / expected)
    return _result("byte_uniformity", stat, chi2.sf(stat, 255), alpha, bytes=nbytes)


@dataclass
class BatteryConfig:
    alpha: float = 0.01
    block_len: int = 128
    max_lag: int = 16

    @property
    def min_bits(self):
        return max(100 * self.max_lag, 20 * self.block_len, 100)


@dataclass
class TestReport:
    results: list
    alpha: float
    bit_count: int

    __test__ = False

    @property
    def applicable(self):
        return [r for r in self.results if r.applicable]

    @property
    def failures(self):
        return [r for r in self.results if r.status == FAIL]

    @property
    def passed(self):
        return not self.failures

    def __getitem__(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "bit_count": self.bit_count,
            "passed": self.passed,
            "counts": {
                "total": len(self.results),
                "applicable": len(self.applicable),
                "failed": len(self.failures),
            },
            "tests": [asdict(r) for r in self.results],
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def run_battery(bits, config=None):
    """Run every test; the battery passes when no applicable test fails."""
    config = config or BatteryConfig()
    x = _bits(bits)
    if x.size < config.min_bits:
        raise ParameterError(f"battery needs at least {config.min_bits} bits, got {x.size}")
    a = config.alpha
    results = [
        monobit_test(x, a),
        block_frequency_test(x, config.block_len, a),
        runs_test(x, a),
        serial_correlation_test(x, config.max_lag, a),
        byte_uniformity_test(x, a),
    ]
    return TestReport(results, a, int(x.size))
