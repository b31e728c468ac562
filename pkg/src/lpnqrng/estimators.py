"""scikit-learn style wrappers so the back-end chain composes with ``sklearn.pipeline``.

Inputs are single-channel signals, given either as 1-D arrays or as column
vectors of shape ``(n_samples, 1)``; outputs keep the input's layout.
Hyper-parameters are plain constructor arguments (``get_params`` /
``set_params`` work as usual) and fitted state carries a trailing
underscore.

    >>> from sklearn.pipeline import make_pipeline
    >>> chain = make_pipeline(
    ...     BandPassFilter(4e9, 24e9, sample_rate_hz=80e9, stopband_atten_db=100),
    ...     Decimator(2),
    ...     AdcQuantizer(n_bits=8, full_range_volts=0.02),
    ...     ToeplitzExtractor(m=2800, n=4096, word_bits=8),
    ... )
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_bits, check_signal
from .dsp import BandSpec, apply_filter, design_bandpass
from .entropy import AdcSpec, conditional_min_entropy, estimate_variances, quantize
from .extractor import ToeplitzConfig, codes_to_bits, extract_blocks
from .phasesim import Waveform


def _as_column(x, template):
    template = np.asarray(template)
    return x.reshape(-1, 1) if template.ndim == 2 else x


class BandPassFilter(TransformerMixin, BaseEstimator):
    """Elliptic band-pass (or low/high-pass) filter designed at ``fit`` time.

    ``fit`` ignores the data; it designs the filter for ``sample_rate_hz``
    and checks the measured response.  ``transform`` drops the start-up
    transient unless ``drop_transient=False``.
    """

    def __init__(
        self,
        f_low_hz=4e9,
        f_high_hz=24e9,
        sample_rate_hz=80e9,
        stopband_atten_db=40.0,
        passband_ripple_db=1.0,
        transition_hz=None,
        drop_transient=True,
    ):
        self.f_low_hz = f_low_hz
        self.f_high_hz = f_high_hz
        self.sample_rate_hz = sample_rate_hz
        self.stopband_atten_db = stopband_atten_db
        self.passband_ripple_db = passband_ripple_db
        self.transition_hz = transition_hz
        self.drop_transient = drop_transient

    def fit(self, X=None, y=None):
        band = BandSpec(
            self.f_low_hz, self.f_high_hz, self.stopband_atten_db, self.passband_ripple_db, self.transition_hz
        )
        self.filter_ = design_bandpass(band, self.sample_rate_hz)
        self.n_transient_ = self.filter_.transient_samples
        return self

    def transform(self, X):
        check_is_fitted(self, "filter_")
        x = check_signal(X, "X")
        out = apply_filter(Waveform(x, self.sample_rate_hz), self.filter_)
        y = out.settled if self.drop_transient else out.samples
        return _as_column(np.ascontiguousarray(y), X)


class Decimator(TransformerMixin, BaseEstimator):
    """Keep every ``factor``-th sample."""

    def __init__(self, factor=2):
        self.factor = factor

    def fit(self, X=None, y=None):
        if int(self.factor) != self.factor or self.factor < 1:
            raise ValueError("factor must be a positive integer")
        self.factor_ = int(self.factor)
        return self

    def transform(self, X):
        check_is_fitted(self, "factor_")
        x = check_signal(X, "X")
        return _as_column(x[:: self.factor_].copy(), X)


class AdcQuantizer(TransformerMixin, BaseEstimator):
    """n-bit ADC; ``output='codes'`` returns integers, ``'volts'`` bin centres."""

    def __init__(self, n_bits=8, full_range_volts=0.02, output="codes"):
        self.n_bits = n_bits
        self.full_range_volts = full_range_volts
        self.output = output

    def fit(self, X=None, y=None):
        if self.output not in ("codes", "volts"):
            raise ValueError("output must be 'codes' or 'volts'")
        self.spec_ = AdcSpec.from_full_range(self.n_bits, self.full_range_volts)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        trace = quantize(check_signal(X, "X"), self.spec_)
        y = trace.codes if self.output == "codes" else trace.volts
        return _as_column(y, X)


class MinEntropyEstimator(BaseEstimator):
    """Estimate the worst-case conditional min-entropy per ADC sample.

    ``fit(X, noise=...)`` takes the raw record and a noise-only record (both in
    volts); alternatively set ``sigma_e_volts`` and call ``fit(X)``.  The
    result is in ``h_min_`` and the full report in ``report_``.
    """

    def __init__(self, n_bits=8, full_range_volts=0.02, k_sigma=10.0, sigma_e_volts=None):
        self.n_bits = n_bits
        self.full_range_volts = full_range_volts
        self.k_sigma = k_sigma
        self.sigma_e_volts = sigma_e_volts

    def fit(self, X, y=None, noise=None):
        spec = AdcSpec.from_full_range(self.n_bits, self.full_range_volts)
        x = check_signal(X, "X")
        if noise is not None:
            sm2, se2, _ = estimate_variances(x, check_signal(noise, "noise"))
        elif self.sigma_e_volts is not None:
            sm2, se2 = float(np.var(x)), float(self.sigma_e_volts) ** 2
        else:
            raise ValueError("pass a noise record to fit() or set sigma_e_volts")
        self.report_ = conditional_min_entropy(np.sqrt(sm2), np.sqrt(se2), spec, k_sigma=self.k_sigma)
        self.h_min_ = self.report_.h_min_bits
        return self

    def score(self, X=None, y=None):
        check_is_fitted(self, "h_min_")
        return self.h_min_


class ToeplitzExtractor(TransformerMixin, BaseEstimator):
    """Toeplitz hashing of a bit stream, or of ADC codes when ``word_bits`` is set.

    The seed matrix is drawn from ``seed`` at ``fit``; a trailing partial
    block is dropped.
    """

    def __init__(self, m=2800, n=4096, seed=0, word_bits=None):
        self.m = m
        self.n = n
        self.seed = seed
        self.word_bits = word_bits

    def fit(self, X=None, y=None):
        self.config_ = ToeplitzConfig.random(self.m, self.n, self.seed)
        return self

    def _bits(self, X):
        if self.word_bits is None:
            return check_bits(np.asarray(X).reshape(-1))
        return codes_to_bits(np.asarray(X).reshape(-1), self.word_bits).to_bits()

    def transform(self, X):
        check_is_fitted(self, "config_")
        bits = self._bits(X)
        k = bits.size // self.n
        return extract_blocks(bits[: k * self.n].reshape(k, self.n), self.config_).reshape(-1)
