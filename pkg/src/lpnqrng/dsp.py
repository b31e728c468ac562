"""Spectral analysis and the digital filtering chain.

Spectra are averaged one-sided periodograms of non-overlapping, mean-removed
segments.  Bin powers are normalised so that they sum to the mean-square of
the analysed (mean-removed) data, which makes the dB values relative to
1 V^2 per bin.  The filter is an elliptic IIR realised as second-order
sections; its compliance with a :class:`BandSpec` is checked on a response
measured from the filtered unit impulse, never on the design targets.
"""

from collections import deque
from dataclasses import dataclass, field
import csv
import json
import math

import numpy as np
from scipy import signal
from scipy.ndimage import median_filter, uniform_filter1d

from ._validation import check_int, check_nonnegative, check_positive, check_signal
from .exceptions import (
    DegenerateInputError,
    DesignError,
    NoFlatAreaError,
    ParameterError,
    UnboundedBandError,
)
from .phasesim import Waveform

_TINY = 1e-300
_BATCH_BYTES = 64 << 20


@dataclass
class SpectrumEstimate:
    freqs_hz: np.ndarray
    power_db: np.ndarray
    resolution_hz: float
    n_segments: int
    window: str = "rect"
    analyzed_variance: float = float("nan")

    @property
    def power_linear(self):
        return 10.0 ** (self.power_db / 10.0)

    @property
    def total_power(self):
        return float(np.sum(self.power_linear))

    @property
    def parseval_ratio(self):
        """Total bin power divided by the variance of the analysed samples."""
        return self.total_power / self.analyzed_variance

    def parseval_ok(self, rtol=0.01):
        return abs(self.parseval_ratio - 1.0) <= rtol

    def band_mask(self, f_lo, f_hi):
        return (self.freqs_hz >= f_lo) & (self.freqs_hz <= f_hi)

    def level_db(self, f_lo, f_hi):
        """Median power (dB) over ``[f_lo, f_hi]``."""
        return float(np.median(self.power_db[self.band_mask(f_lo, f_hi)]))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_hz", "power_db"])
            for f, p in zip(self.freqs_hz, self.power_db):
                w.writerow([repr(float(f)), repr(float(p))])


def _window(name, n):
    if name in ("rect", "rectangular", "boxcar"):
        return np.ones(n)
    if name == "hann":
        return signal.get_window("hann", n)
    raise ParameterError(f"unknown window {name!r}; use 'rect' or 'hann'")


class SpectrumAccumulator:
    """Running average of segment periodograms.

    Samples may be pushed in arbitrary chunk sizes; complete segments are
    transformed as they fill and the leftover is carried over.  The result
    depends only on the concatenated input, not on the chunking.
    """

    def __init__(self, segment_len, sample_rate_hz, window="rect", max_segments=None):
        self.segment_len = check_int("segment_len", segment_len, minimum=2)
        if self.segment_len & (self.segment_len - 1):
            raise ParameterError("segment_len must be a power of two")
        self.sample_rate_hz = check_positive("sample_rate_hz", sample_rate_hz)
        self.window = window
        self._w = _window(window, self.segment_len)
        self._wss = float(np.sum(self._w**2))
        self.max_segments = max_segments
        self._acc = np.zeros(self.segment_len // 2 + 1)
        self._pending = np.zeros(0)
        self._var_sum = 0.0
        self.n_segments = 0
        self._fac = np.full(self.segment_len // 2 + 1, 2.0)
        self._fac[0] = 1.0
        self._fac[-1] = 1.0

    @property
    def full(self):
        return self.max_segments is not None and self.n_segments >= self.max_segments

    def push(self, samples):
        if self.full:
            return
        x = np.concatenate([self._pending, np.asarray(samples, dtype=np.float64)])
        L = self.segment_len
        k = x.size // L
        if self.max_segments is not None:
            k = min(k, self.max_segments - self.n_segments)
        batch = max(1, _BATCH_BYTES // (16 * L))
        for start in range(0, k, batch):
            stop = min(k, start + batch)
            seg = x[start * L : stop * L].reshape(stop - start, L)
            seg = seg - seg.mean(axis=1, keepdims=True)
            self._var_sum += float(np.sum(np.mean(seg**2, axis=1)))
            spec = np.fft.rfft(seg * self._w, axis=1)
            self._acc += np.sum(spec.real**2 + spec.imag**2, axis=0)
        self.n_segments += k
        self._pending = x[k * L :] if not self.full else np.zeros(0)

    def result(self):
        if self.n_segments == 0:
            raise ParameterError("not enough samples for a single segment")
        L = self.segment_len
        p = self._fac * self._acc / (self.n_segments * L * self._wss)
        return SpectrumEstimate(
            freqs_hz=np.fft.rfftfreq(L, 1.0 / self.sample_rate_hz),
            power_db=10.0 * np.log10(np.maximum(p, _TINY)),
            resolution_hz=self.sample_rate_hz / L,
            n_segments=self.n_segments,
            window=self.window,
            analyzed_variance=self._var_sum / self.n_segments,
        )


def power_spectrum(wave, segment_len=1 << 16, n_segments=None, window="rect"):
    """Averaged periodogram of ``wave`` (settled samples only).

    Parameters
    ----------
    wave : Waveform
    segment_len : int
        Power-of-two FFT length; sets the resolution ``f_s / segment_len``.
    n_segments : int, optional
        Number of segments to average; all complete segments by default.
    window : {'rect', 'hann'}
    """
    x = check_signal(wave.settled, "waveform")
    if x.size < segment_len:
        raise ParameterError(f"segment of {segment_len} samples is longer than the {x.size}-sample trace")
    if n_segments is not None:
        n_segments = check_int("n_segments", n_segments, minimum=1)
        if n_segments * segment_len > x.size:
            raise ParameterError("requested more segments than the trace holds")
    acc = SpectrumAccumulator(segment_len, wave.sample_rate_hz, window, max_segments=n_segments)
    acc.push(x)
    return acc.result()


def _smooth_linear(spec, smooth_bins):
    p = spec.power_linear
    if smooth_bins > 1:
        p = uniform_filter1d(p, smooth_bins, mode="nearest")
    return 10.0 * np.log10(np.maximum(p, _TINY))


def _crossing(freqs, db, i_in, i_out, thr):
    # linear interpolation of the threshold crossing between an inside and an outside bin
    d_in, d_out = db[i_in], db[i_out]
    t = (d_in - thr) / (d_in - d_out) if d_in != d_out else 0.5
    return freqs[i_in] + t * (freqs[i_out] - freqs[i_in])


def measure_3db_bandwidth(spec, smooth_bins=1, drop_db=3.0):
    """Width of the contiguous band around the global peak within ``drop_db`` of it.

    ``smooth_bins`` > 1 applies a moving average to the linear power first,
    which tames the per-bin scatter of lightly averaged spectra.
    """
    db = _smooth_linear(spec, check_int("smooth_bins", smooth_bins, minimum=1))
    f = spec.freqs_hz
    k = int(np.argmax(db))
    thr = db[k] - drop_db
    lo = k
    while lo > 0 and db[lo - 1] >= thr:
        lo -= 1
    hi = k
    while hi < db.size - 1 and db[hi + 1] >= thr:
        hi += 1
    if lo == 0 or hi == db.size - 1:
        raise UnboundedBandError("the -3 dB band reaches the edge of the spectrum")
    return float(_crossing(f, db, hi, hi + 1, thr) - _crossing(f, db, lo, lo - 1, thr))


def flatness_bandwidth(spec, smooth_bins=64, drop_db=3.0):
    """Extent from DC over which the smoothed spectrum stays within ``drop_db`` of its plateau.

    The plateau is the median smoothed level over the lowest
    ``max(smooth_bins, 1%)`` bins, skipping the DC bin.  Returns the Nyquist
    frequency when the spectrum never drops that far.
    """
    db = median_filter(spec.power_db, size=smooth_bins, mode="nearest")
    n_ref = max(smooth_bins, db.size // 100)
    plateau = float(np.median(db[1 : 1 + n_ref]))
    thr = plateau - drop_db
    below = np.nonzero(db[1:] < thr)[0]
    if below.size == 0:
        return float(spec.freqs_hz[-1])
    i = int(below[0]) + 1
    if i == 1:
        return float(spec.freqs_hz[1])
    return float(_crossing(spec.freqs_hz, db, i - 1, i, thr))


def _max_range_windows(s, idx_lo, idx_hi, span):
    """Maximal windows inside [idx_lo, idx_hi] whose max-min stays <= span."""
    out = []
    qmax, qmin = deque(), deque()
    a = idx_lo
    for b in range(idx_lo, idx_hi + 1):
        while qmax and s[qmax[-1]] <= s[b]:
            qmax.pop()
        qmax.append(b)
        while qmin and s[qmin[-1]] >= s[b]:
            qmin.pop()
        qmin.append(b)
        while s[qmax[0]] - s[qmin[0]] > span:
            if not out or out[-1][1] != b - 1 or out[-1][0] != a:
                out.append((a, b - 1))
            a += 1
            if qmax[0] < a:
                qmax.popleft()
            if qmin[0] < a:
                qmin.popleft()
    out.append((a, idx_hi))
    return out


def detect_flat_area(raw, noise, min_clearance_db=6.0, max_flatness_db=3.0, smooth_bins=64, min_bins=None):
    """Locate the widest quantum-dominated flat band of ``raw`` above ``noise``.

    Both spectra are median-smoothed over ``smooth_bins`` bins.  A band
    qualifies when raw exceeds noise by ``min_clearance_db`` everywhere in it,
    every smoothed raw level lies within ``max_flatness_db`` of the band's
    mid-range level, it spans at least ``min_bins`` bins and it does not
    contain the global peak of ``raw``.

    Returns
    -------
    (f_lo, f_hi) : tuple of float
        Band edges in Hz (bin centres).
    """
    if raw.freqs_hz.shape != noise.freqs_hz.shape or not np.allclose(raw.freqs_hz, noise.freqs_hz):
        raise ParameterError("raw and noise spectra are on different frequency grids")
    min_bins = smooth_bins if min_bins is None else min_bins
    s = median_filter(raw.power_db, size=smooth_bins, mode="nearest")
    z = median_filter(noise.power_db, size=smooth_bins, mode="nearest")
    ok = (s - z) >= min_clearance_db
    ok[int(np.argmax(raw.power_db))] = False
    best = None
    edges = np.diff(np.concatenate([[0], ok.astype(np.int8), [0]]))
    for lo, hi in zip(np.nonzero(edges == 1)[0], np.nonzero(edges == -1)[0] - 1):
        for a, b in _max_range_windows(s, int(lo), int(hi), 2 * max_flatness_db):
            if b - a + 1 >= min_bins and (best is None or b - a > best[1] - best[0]):
                best = (a, b)
    if best is None:
        raise NoFlatAreaError("no band satisfies the clearance and flatness criteria")
    return float(raw.freqs_hz[best[0]]), float(raw.freqs_hz[best[1]])


@dataclass(frozen=True)
class BandSpec:
    """Pass band ``[f_low, f_high]`` with the tolerances its filter must meet.

    ``transition_hz`` defaults to 10% of the pass-band width.  ``f_low = 0``
    describes a low-pass and ``f_high = f_s/2`` a high-pass.
    """

    f_low_hz: float
    f_high_hz: float
    stopband_atten_db: float = 40.0
    passband_ripple_db: float = 1.0
    transition_hz: float = None

    def __post_init__(self):
        lo = check_nonnegative("f_low_hz", self.f_low_hz)
        hi = check_positive("f_high_hz", self.f_high_hz)
        if lo >= hi:
            raise DesignError(f"f_low ({lo}) must be below f_high ({hi})")
        check_positive("stopband_atten_db", self.stopband_atten_db)
        check_positive("passband_ripple_db", self.passband_ripple_db)
        if self.transition_hz is None:
            object.__setattr__(self, "transition_hz", 0.1 * (hi - lo))
        check_positive("transition_hz", self.transition_hz)

    @property
    def width_hz(self):
        return self.f_high_hz - self.f_low_hz

    def to_dict(self):
        return {
            "f_low_hz": self.f_low_hz,
            "f_high_hz": self.f_high_hz,
            "stopband_atten_db": self.stopband_atten_db,
            "passband_ripple_db": self.passband_ripple_db,
            "transition_hz": self.transition_hz,
        }


@dataclass
class FilterRealization:
    sos: np.ndarray
    band: BandSpec
    sample_rate_hz: float
    order: int
    response_freqs_hz: np.ndarray = field(repr=False)
    response_db: np.ndarray = field(repr=False)

    @property
    def transient_samples(self):
        return 4 * self.order

    def gain_db(self, f_hz):
        return np.interp(f_hz, self.response_freqs_hz, self.response_db)

    def _regions(self):
        b, f = self.band, self.response_freqs_hz
        nyq = self.sample_rate_hz / 2
        lo_edge = b.f_low_hz + b.transition_hz if b.f_low_hz > 0 else 0.0
        hi_edge = b.f_high_hz - b.transition_hz if b.f_high_hz < nyq else nyq
        passband = (f >= lo_edge) & (f <= hi_edge)
        stop_lo = f < b.f_low_hz - b.transition_hz
        stop_hi = f > b.f_high_hz + b.transition_hz
        return passband, stop_lo | stop_hi

    def compliance(self):
        """Measured passband ripple and worst stopband gain against the band spec."""
        passband, stopband = self._regions()
        ripple = float(np.max(np.abs(self.response_db[passband]))) if passband.any() else 0.0
        worst_stop = float(np.max(self.response_db[stopband])) if stopband.any() else -math.inf
        return {
            "passband_max_abs_db": ripple,
            "stopband_max_db": worst_stop,
            "passband_ok": ripple <= self.band.passband_ripple_db,
            "stopband_ok": worst_stop <= -self.band.stopband_atten_db,
        }

    def meets_spec(self):
        c = self.compliance()
        return c["passband_ok"] and c["stopband_ok"]

    def to_dict(self):
        return {
            "kind": "iir-sos",
            "sample_rate_hz": self.sample_rate_hz,
            "order": self.order,
            "band": self.band.to_dict(),
            "sos": self.sos.tolist(),
            "transient_samples": self.transient_samples,
            "compliance": self.compliance(),
            "response": {"freq_hz": self.response_freqs_hz.tolist(), "gain_db": self.response_db.tolist()},
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, d):
        return cls(
            sos=np.asarray(d["sos"], dtype=np.float64),
            band=BandSpec(**d["band"]),
            sample_rate_hz=d["sample_rate_hz"],
            order=d["order"],
            response_freqs_hz=np.asarray(d["response"]["freq_hz"]),
            response_db=np.asarray(d["response"]["gain_db"]),
        )


def measure_response(sos, sample_rate_hz, n_fft=1 << 16):
    """Frequency response obtained by filtering a unit impulse."""
    impulse = np.zeros(n_fft)
    impulse[0] = 1.0
    h = signal.sosfilt(sos, impulse)
    H = np.fft.rfft(h)
    return np.fft.rfftfreq(n_fft, 1.0 / sample_rate_hz), 20.0 * np.log10(np.maximum(np.abs(H), 1e-200))


def design_bandpass(spec, sample_rate_hz, max_order=24):
    """Design an elliptic filter for ``spec`` and verify it on its measured response.

    The design targets half the allowed ripple and 3 dB of extra stopband
    attenuation so the measured response keeps a margin.  Raises
    :class:`DesignError` when the minimal order exceeds ``max_order`` or the
    measured response misses the spec.
    """
    fs = check_positive("sample_rate_hz", sample_rate_hz)
    nyq = fs / 2
    lo, hi, tw = spec.f_low_hz, spec.f_high_hz, spec.transition_hz
    if hi > nyq:
        raise DesignError(f"f_high ({hi}) exceeds the Nyquist frequency ({nyq})")
    low_open, high_open = lo <= 0, hi >= nyq
    if low_open and high_open:
        raise DesignError("a band covering 0..f_s/2 needs no filter")
    if (not low_open and lo - tw <= 0) or (not high_open and hi + tw >= nyq):
        raise DesignError("transition band does not fit between the pass band and 0 or f_s/2")
    rp, rs = spec.passband_ripple_db / 2, spec.stopband_atten_db + 3.0
    if low_open:
        btype, wp, ws = "lowpass", hi, hi + tw
    elif high_open:
        btype, wp, ws = "highpass", lo, lo - tw
    else:
        btype, wp, ws = "bandpass", [lo, hi], [lo - tw, hi + tw]
    n, wn = signal.ellipord(wp, ws, rp, rs, fs=fs)
    order = n * (2 if btype == "bandpass" else 1)
    if order > max_order:
        raise DesignError(f"spec needs filter order {order} > max_order {max_order}")
    sos = signal.ellip(n, rp, rs, wn, btype=btype, output="sos", fs=fs)
    freqs, gain = measure_response(sos, fs)
    filt = FilterRealization(sos, spec, fs, order, freqs, gain)
    if not filt.meets_spec():
        raise DesignError(f"measured response misses the spec: {filt.compliance()}")
    return filt


def apply_filter(wave, filt):
    """Filter ``wave``; the output flags ``4*order`` more transient samples."""
    if not math.isclose(wave.sample_rate_hz, filt.sample_rate_hz, rel_tol=1e-9):
        raise ParameterError(
            f"waveform rate {wave.sample_rate_hz} Hz differs from filter design rate {filt.sample_rate_hz} Hz"
        )
    y = signal.sosfilt(filt.sos, wave.samples)
    out = wave.replace(y, transient_samples=wave.transient_samples + filt.transient_samples)
    out.metadata["filter"] = filt.band.to_dict()
    return out


def downsample(wave, factor):
    """Keep every ``factor``-th sample; the band-pass stage serves as anti-alias filter."""
    factor = check_int("factor", factor, minimum=1)
    if factor == 1:
        return wave.replace(wave.samples.copy())
    out = wave.replace(
        wave.samples[::factor].copy(),
        sample_rate_hz=wave.sample_rate_hz / factor,
        transient_samples=-(-wave.transient_samples // factor),
    )
    out.metadata["decimation"] = out.metadata.get("decimation", 1) * factor
    return out


def autocorrelation(samples, max_lag):
    """Normalised sample autocorrelation ``rho(1..max_lag)``.

    Uses the biased estimator ``sum(x[t]*x[t+k]) / sum(x[t]**2)`` on the
    mean-removed data.
    """
    x = check_signal(samples)
    max_lag = check_int("max_lag", max_lag, minimum=1)
    if max_lag >= x.size:
        raise ParameterError("max_lag must be shorter than the data")
    x = x - x.mean()
    r0 = float(np.dot(x, x))
    if r0 <= 0 or np.ptp(x) == 0:
        raise DegenerateInputError("autocorrelation of a constant signal is undefined")
    nfft = 1 << int(math.ceil(math.log2(2 * x.size)))
    X = np.fft.rfft(x, nfft)
    r = np.fft.irfft(X.real**2 + X.imag**2, nfft)[: max_lag + 1]
    return r[1:] / r0


def tone_gain_db(filt, freq_hz, n_samples=1 << 15):
    """Empirical gain at ``freq_hz``: RMS of the filtered tone over RMS of the input."""
    fs = filt.sample_rate_hz
    t = np.arange(n_samples) / fs
    x = np.cos(2 * np.pi * freq_hz * t)
    y = apply_filter(Waveform(x, fs), filt).samples
    settle = max(filt.transient_samples, n_samples // 4)
    rms_in = np.sqrt(np.mean(x[settle:] ** 2))
    rms_out = np.sqrt(np.mean(y[settle:] ** 2))
    return float(20 * np.log10(max(rms_out, 1e-300) / rms_in))
