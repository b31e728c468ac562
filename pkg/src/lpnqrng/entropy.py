"""ADC quantiser model and worst-case conditional min-entropy.

The measured signal is ``M = Q + E`` with independent zero-mean Gaussian
quantum (``Q``) and electrical (``E``) parts.  An adversary who knows ``E``
exactly, with ``E`` bounded in ``[-k*sigma_E, +k*sigma_E]``, sees ``M`` as
``N(e, sigma_Q**2)``.  The guessing probability of the quantised sample is
the largest bin probability over all admissible ``e``; it reduces to the
maximum of three closed-form terms (lower saturation bin, an interior bin
centred on ``e``, upper saturation bin), each with its argument scaled by
``sigma_Q``.
"""

from dataclasses import asdict, dataclass
import json
import math

import numpy as np
from scipy.special import erf, erfc

from ._validation import check_int, check_nonnegative, check_positive, check_signal
from .exceptions import NegativeQuantumVarianceError, ParameterError
from .phasesim import Waveform

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class AdcSpec:
    """``n_bits`` converter with half range ``R``; bin width ``R / 2**(n-1)``."""

    n_bits: int
    half_range_volts: float

    def __post_init__(self):
        object.__setattr__(self, "n_bits", check_int("n_bits", self.n_bits, minimum=1))
        if self.n_bits > 32:
            raise ParameterError("n_bits above 32 is not supported")
        object.__setattr__(self, "half_range_volts", check_positive("half_range_volts", self.half_range_volts))

    @classmethod
    def from_full_range(cls, n_bits, full_range_volts):
        return cls(n_bits, check_positive("full_range_volts", full_range_volts) / 2.0)

    @property
    def bin_width_volts(self):
        return self.half_range_volts / 2 ** (self.n_bits - 1)

    @property
    def i_min(self):
        return -(2 ** (self.n_bits - 1))

    @property
    def i_max(self):
        return 2 ** (self.n_bits - 1) - 1

    @property
    def dynamic_range(self):
        d = self.bin_width_volts
        return (-self.half_range_volts + d / 2, self.half_range_volts - 3 * d / 2)

    def to_dict(self):
        return {"n_bits": self.n_bits, "half_range_volts": self.half_range_volts}


@dataclass
class QuantizedTrace:
    codes: np.ndarray
    spec: AdcSpec
    source_rate_hz: float = None

    def __len__(self):
        return len(self.codes)

    @property
    def volts(self):
        """Bin-centre voltages ``delta * code``."""
        return self.codes.astype(np.float64) * self.spec.bin_width_volts


@dataclass(frozen=True)
class NoiseBound:
    """Electrical noise confined to ``[-k*sigma_E, +k*sigma_E]``."""

    sigma_e_volts: float
    k_sigma: float = 10.0

    def __post_init__(self):
        check_nonnegative("sigma_e_volts", self.sigma_e_volts)
        check_positive("k_sigma", self.k_sigma)

    @property
    def e_min(self):
        return -self.k_sigma * self.sigma_e_volts

    @property
    def e_max(self):
        return self.k_sigma * self.sigma_e_volts


@dataclass
class EntropyReport:
    sigma_m_sq: float
    sigma_e_sq: float
    sigma_q_sq: float
    h_min_bits: float
    dominant_term: str
    p_max: float
    n_bits: int
    half_range_volts: float
    k_sigma: float

    @property
    def extraction_ratio(self):
        """Upper bound on output bits per raw bit, ``h_min / n_bits``."""
        return self.h_min_bits / self.n_bits

    def summary(self):
        return (
            f"H_min = {self.h_min_bits:.4f} bits/sample (dominant: {self.dominant_term}); "
            f"extraction ratio <= {self.extraction_ratio:.4f}"
        )

    def to_dict(self):
        d = asdict(self)
        d["extraction_ratio"] = self.extraction_ratio
        return d

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def quantize(wave, spec):
    """Map voltages to ADC codes; out-of-range samples saturate at ``i_min``/``i_max``.

    Interior code ``i`` covers ``[delta*i - delta/2, delta*i + delta/2)``.
    """
    rate = None
    if isinstance(wave, Waveform):
        rate = wave.sample_rate_hz
        v = wave.settled
    else:
        v = wave
    v = check_signal(v, "waveform")
    codes = np.floor(v / spec.bin_width_volts + 0.5)
    np.clip(codes, spec.i_min, spec.i_max, out=codes)
    dtype = np.int16 if spec.n_bits <= 16 else np.int32 if spec.n_bits <= 31 else np.int64
    return QuantizedTrace(codes.astype(dtype), spec, rate)


def _as_volts(x):
    if isinstance(x, QuantizedTrace):
        return x.volts
    if isinstance(x, Waveform):
        return check_signal(x.settled)
    return check_signal(x)


def estimate_variances(raw, noise):
    """Sample variances ``(sigma_M^2, sigma_E^2, sigma_Q^2)`` of a raw and a noise-only record.

    Quantised traces are converted to bin-centre voltages first.
    """
    sm = float(np.var(_as_volts(raw)))
    se = float(np.var(_as_volts(noise)))
    if se > sm:
        raise NegativeQuantumVarianceError(
            f"electrical noise variance {se:.4g} V^2 exceeds measured variance {sm:.4g} V^2"
        )
    return sm, se, sm - se


def _terms(sigma_q, spec, bound):
    R, d = spec.half_range_volts, spec.bin_width_volts
    s = _SQRT2 * sigma_q
    terms = {
        "low": 0.5 * float(erfc((bound.e_min + R - d / 2) / s)),
        "high": 0.5 * float(erfc((R - 3 * d / 2 - bound.e_max) / s)),
    }
    if spec.n_bits >= 2:
        # an interior bin centred on e; bin 0 sits inside any noise bound
        terms["central"] = float(erf(d / (2 * s)))
    return terms


def max_conditional_prob(sigma_m, sigma_e, spec, bound=None, k_sigma=10.0):
    """Worst-case probability of the most likely ADC code given the electrical noise.

    Parameters
    ----------
    sigma_m, sigma_e : float
        Standard deviations (V) of the measured signal and the electrical noise.
    spec : AdcSpec
    bound : NoiseBound, optional
        Defaults to ``NoiseBound(sigma_e, k_sigma)``.

    Returns
    -------
    p_max : float
    dominant : {'low', 'central', 'high', 'deterministic'}
    """
    sigma_m = check_nonnegative("sigma_m", sigma_m)
    sigma_e = check_nonnegative("sigma_e", sigma_e)
    if bound is None:
        bound = NoiseBound(sigma_e, k_sigma)
    var_q = sigma_m**2 - sigma_e**2
    if var_q < 0:
        raise NegativeQuantumVarianceError("sigma_e exceeds sigma_m")
    if var_q == 0:
        return 1.0, "deterministic"
    terms = _terms(math.sqrt(var_q), spec, bound)
    dominant = max(terms, key=terms.get)
    return min(1.0, terms[dominant]), dominant


def conditional_min_entropy(sigma_m, sigma_e, spec, bound=None, k_sigma=10.0):
    """Per-sample min-entropy ``-log2(p_max)`` with the inputs echoed in the report."""
    if bound is None:
        bound = NoiseBound(check_nonnegative("sigma_e", sigma_e), k_sigma)
    p, dominant = max_conditional_prob(sigma_m, sigma_e, spec, bound)
    h = 0.0 if p >= 1.0 else -math.log2(p)
    h = min(max(h, 0.0), float(spec.n_bits))
    return EntropyReport(
        sigma_m_sq=sigma_m**2,
        sigma_e_sq=sigma_e**2,
        sigma_q_sq=sigma_m**2 - sigma_e**2,
        h_min_bits=h,
        dominant_term=dominant,
        p_max=p,
        n_bits=spec.n_bits,
        half_range_volts=spec.half_range_volts,
        k_sigma=bound.k_sigma,
    )


def min_entropy_from_variances(sigma_m_sq, sigma_e_sq, spec, k_sigma=10.0):
    """Same as :func:`conditional_min_entropy` but taking variances (V^2)."""
    sigma_m_sq = check_nonnegative("sigma_m_sq", sigma_m_sq)
    sigma_e_sq = check_nonnegative("sigma_e_sq", sigma_e_sq)
    rep = conditional_min_entropy(math.sqrt(sigma_m_sq), math.sqrt(sigma_e_sq), spec, k_sigma=k_sigma)
    rep.sigma_m_sq, rep.sigma_e_sq, rep.sigma_q_sq = sigma_m_sq, sigma_e_sq, sigma_m_sq - sigma_e_sq
    return rep
