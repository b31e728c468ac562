"""End-to-end scenarios, the delay/sample-rate sweep and figure reproductions.

A scenario runs

    simulate -> add noise -> [filter -> decimate] -> quantize -> entropy
    -> plan -> extract -> test

on a raw record and on a noise-only record that goes through the same DSP.
Seeds for the individual streams are derived from one scenario seed with
:func:`lpnqrng.phasesim.derive_seed`:

    key 1  laser phase(s)          key 3  noise-only record
    key 2  noise on the raw record key 4  Toeplitz seed bits
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import math
import os
import platform

import numpy as np
import scipy
from scipy import stats

from . import __version__
from . import io as qio
from .dsp import (
    BandSpec,
    apply_filter,
    autocorrelation,
    design_bandpass,
    detect_flat_area,
    downsample,
    flatness_bandwidth,
    measure_3db_bandwidth,
    power_spectrum,
    tone_gain_db,
)
from .entropy import AdcSpec, conditional_min_entropy, estimate_variances, quantize
from .exceptions import EntropyDeficitError, ParameterError, QrngError, StageError
from .extractor import (
    ToeplitzConfig,
    codes_to_bits,
    generation_rate_bps,
    output_bits_per_sample,
    plan_extraction,
    stream_extract,
)
from .phasesim import (
    LaserSpec,
    SimGrid,
    Waveform,
    derive_seed,
    make_rng,
    simulate_dual,
    simulate_single,
)
from .randtest import BatteryConfig, run_battery

STAGE_EXIT_CODES = {
    "config": 2,
    "io": 3,
    "simulate": 10,
    "noise": 11,
    "spectrum": 12,
    "filter": 13,
    "decimate": 14,
    "quantize": 15,
    "entropy": 16,
    "plan": 17,
    "extract": 18,
    "test": 19,
}

# Published operating points of the two experimental paths.
ANALOG_PATH = {"sigma_m_sq": 1.792e-3, "sigma_e_sq": 1.075e-4, "n_bits": 14, "full_range_volts": 0.8}
DIGITAL_PATH = {"sigma_m_sq": 2.272e-6, "sigma_e_sq": 1.511e-7, "n_bits": 8, "full_range_volts": 0.02}
FIG3_BANDWIDTHS_HZ = {1e5: 0.14e6, 1e6: 1.73e6, 1e8: 200.43e6}


class _stage:
    """Context manager tagging any package error with the stage it came from."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, (QrngError, ValueError, ArithmeticError)):
            if isinstance(exc, StageError):
                return False
            raise StageError(self.name, exc) from exc
        return False


@dataclass
class ScenarioConfig:
    """Everything needed to regenerate one scenario bit for bit.

    ``band`` is a dict of :class:`~lpnqrng.dsp.BandSpec` fields or ``None``.
    ``extractor`` keys: ``block_in_bits`` (n), optional ``m`` (defaults to the
    largest admissible value), ``eps`` and ``plain_ratio``.  Setting both
    ``target_sigma_m_sq`` and ``target_sigma_e_sq`` rescales the amplitude
    and the electrical noise so the post-DSP variances hit those values.
    """

    name: str = "scenario"
    scheme: str = "dual"
    linewidth_hz: float = 1e5
    linewidth2_hz: float = None
    beat_hz: float = 1.9e9
    delay_s: float = 0.0
    amplitude_volts: float = 1.0
    sigma_e_volts: float = 0.0
    sample_rate_hz: float = 5e9
    n_samples: int = 10**6
    adc_bits: int = 8
    adc_full_range_volts: float = 2.0
    k_sigma: float = 10.0
    band: dict = None
    decimation: int = 1
    extractor: dict = field(default_factory=lambda: {"block_in_bits": 4096, "eps": 2.0**-100})
    battery: dict = field(default_factory=dict)
    spectrum_segment: int = 1 << 16
    spectrum_window: str = "rect"
    target_sigma_m_sq: float = None
    target_sigma_e_sq: float = None
    seed: int = 0

    def validate(self):
        if self.scheme not in ("single", "dual"):
            raise ParameterError(f"scheme must be 'single' or 'dual', got {self.scheme!r}")
        LaserSpec(self.linewidth_hz)
        if self.scheme == "dual":
            LaserSpec(self.linewidth2_hz if self.linewidth2_hz is not None else self.linewidth_hz)
        grid = SimGrid.from_rate(self.sample_rate_hz, self.n_samples, self.seed)
        if self.scheme == "single":
            m = self.delay_s * self.sample_rate_hz
            if self.delay_s <= 0 or abs(m - round(m)) > 1e-6:
                raise ParameterError("delay_s must be a positive integer multiple of the sample period")
        if self.amplitude_volts <= 0 or self.sigma_e_volts < 0:
            raise ParameterError("amplitude must be positive and sigma_e non-negative")
        if int(self.decimation) != self.decimation or self.decimation < 1:
            raise ParameterError("decimation must be a positive integer")
        if self.band is not None:
            b = BandSpec(**self.band)
            if b.f_high_hz > self.sample_rate_hz / 2:
                raise ParameterError("band edge beyond the Nyquist frequency")
        if (self.target_sigma_m_sq is None) != (self.target_sigma_e_sq is None):
            raise ParameterError("set both target variances or neither")
        AdcSpec.from_full_range(self.adc_bits, self.adc_full_range_volts)
        return grid

    @property
    def delay_samples(self):
        return int(round(self.delay_s * self.sample_rate_hz))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(qio.read_json(path))


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    raw: Waveform
    noise: Waveform
    processed: Waveform
    processed_noise: Waveform
    spectrum: object
    noise_spectrum: object
    processed_spectrum: object
    entropy: object
    plan: object
    extractor_config: ToeplitzConfig
    bits: object
    throughput: object
    tests: object
    filter: object = None
    amplitude_volts: float = None
    sigma_e_volts: float = None
    codes: object = None
    files: dict = field(default_factory=dict)

    def summary(self):
        return {
            "name": self.config.name,
            "amplitude_volts": self.amplitude_volts,
            "sigma_e_volts": self.sigma_e_volts,
            "raw_samples": len(self.raw),
            "processed_samples": len(self.processed.settled),
            "processed_rate_hz": self.processed.sample_rate_hz,
            "raw_std_volts": float(np.std(self.raw.samples)),
            "processed_std_volts": float(np.std(self.processed.settled)),
            "h_min_bits": self.entropy.h_min_bits,
            "plan": self.plan.to_dict(),
            "toeplitz": {"m": self.extractor_config.out_bits_m, "n": self.extractor_config.in_bits_n},
            "output_bits": self.bits.bit_count,
            "battery_passed": self.tests.passed,
            "parseval": {
                "raw": self.spectrum.parseval_ratio,
                "noise": self.noise_spectrum.parseval_ratio,
                "processed": self.processed_spectrum.parseval_ratio,
            },
        }


def _spectrum(wave, cfg):
    seg = cfg.spectrum_segment
    n = len(wave.settled)
    while seg > n and seg > 2:
        seg //= 2
    return power_spectrum(wave, seg, window=cfg.spectrum_window)


def _simulate_clean(cfg, grid):
    seed = derive_seed(cfg.seed, 1)
    if cfg.scheme == "single":
        return simulate_single(LaserSpec(cfg.linewidth_hz), grid.with_seed(seed), cfg.delay_samples, 1.0)
    l2 = cfg.linewidth2_hz if cfg.linewidth2_hz is not None else cfg.linewidth_hz
    return simulate_dual(LaserSpec(cfg.linewidth_hz), LaserSpec(l2), grid.with_seed(seed), cfg.beat_hz, 1.0)


def _dsp(wave, filt, cfg):
    if filt is not None:
        with _stage("filter"):
            wave = apply_filter(wave, filt)
    with _stage("decimate"):
        return downsample(wave, int(cfg.decimation))


def run_scenario(cfg, out_dir=None):
    """Execute one scenario and optionally persist every artifact under ``out_dir``."""
    with _stage("config"):
        grid = cfg.validate()
    with _stage("simulate"):
        clean = _simulate_clean(cfg, grid)
    n = len(clean)
    with _stage("noise"):
        z_raw = make_rng(derive_seed(cfg.seed, 2)).standard_normal(n)
        z_noise = make_rng(derive_seed(cfg.seed, 3)).standard_normal(n)
    filt = None
    if cfg.band is not None:
        with _stage("filter"):
            filt = design_bandpass(BandSpec(**cfg.band), cfg.sample_rate_hz)

    amplitude, sigma_e = cfg.amplitude_volts, cfg.sigma_e_volts
    if cfg.target_sigma_m_sq is not None:
        # every stage before the ADC is linear, so unit-scale pilots fix the gains
        unit_signal = _dsp(clean, filt, cfg).settled
        unit_noise = _dsp(clean.replace(z_noise), filt, cfg).settled
        sigma_e = math.sqrt(cfg.target_sigma_e_sq / np.var(unit_noise))
        target_q = cfg.target_sigma_m_sq - cfg.target_sigma_e_sq
        if target_q <= 0:
            raise StageError("config", ParameterError("target sigma_m^2 must exceed sigma_e^2"))
        amplitude = math.sqrt(target_q / np.var(unit_signal))

    raw = clean.replace(amplitude * clean.samples + sigma_e * z_raw, amplitude_volts=amplitude, seed=cfg.seed)
    noise = Waveform(sigma_e * z_noise, cfg.sample_rate_hz, seed=cfg.seed, metadata={"scheme": "noise"})
    with _stage("spectrum"):
        spec_raw = _spectrum(raw, cfg)
        spec_noise = _spectrum(noise, cfg)
    proc = _dsp(raw, filt, cfg)
    proc_noise = _dsp(noise, filt, cfg)
    with _stage("spectrum"):
        spec_proc = _spectrum(proc, cfg)
    adc = AdcSpec.from_full_range(cfg.adc_bits, cfg.adc_full_range_volts)
    with _stage("quantize"):
        codes = quantize(proc, adc)
        noise_codes = quantize(proc_noise, adc)
    with _stage("entropy"):
        sm2, se2, _ = estimate_variances(codes, noise_codes)
        report = conditional_min_entropy(math.sqrt(sm2), math.sqrt(se2), adc, k_sigma=cfg.k_sigma)
    ext = dict(cfg.extractor)
    with _stage("plan"):
        plan = plan_extraction(
            report.h_min_bits,
            adc.n_bits,
            int(ext.get("block_in_bits", 4096)),
            float(ext.get("eps", 2.0**-100)),
            bool(ext.get("plain_ratio", False)),
        )
        m = int(ext.get("m", plan.block_out_bits))
        if not plan.admits(m):
            raise EntropyDeficitError(f"m = {m} exceeds the admissible {plan.block_out_bits}")
    with _stage("extract"):
        tconf = ToeplitzConfig.random(m, plan.block_in_bits, derive_seed(cfg.seed, 4))
        stream = codes_to_bits(codes)
        stream.metadata["source"] = cfg.name
        bits, throughput = stream_extract(stream, tconf)
    with _stage("test"):
        tests = run_battery(bits, BatteryConfig(**cfg.battery))

    result = ScenarioResult(
        cfg,
        raw,
        noise,
        proc,
        proc_noise,
        spec_raw,
        spec_noise,
        spec_proc,
        report,
        plan,
        tconf,
        bits,
        throughput,
        tests,
        filter=filt,
        amplitude_volts=amplitude,
        sigma_e_volts=sigma_e,
        codes=codes,
    )
    if out_dir is not None:
        with _stage("io"):
            write_scenario(result, out_dir)
    return result


def write_scenario(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    p = lambda name: os.path.join(out_dir, name)  # noqa: E731
    qio.write_json(p("config.json"), cfg.to_dict())
    qio.write_json(p("waveform_summary.json"), result.summary())
    result.spectrum.to_csv(p("spectrum_raw.csv"))
    result.noise_spectrum.to_csv(p("spectrum_noise.csv"))
    result.processed_spectrum.to_csv(p("spectrum_processed.csv"))
    counts, edges = qio.histogram(result.raw.samples, 256)
    qio.histogram_to_csv(p("histogram_analog.csv"), list(map(float, 0.5 * (edges[1:] + edges[:-1]))), counts, "volts")
    codes, ccounts = qio.code_histogram(result.codes)
    qio.histogram_to_csv(p("histogram_codes.csv"), codes, ccounts, "code")
    result.entropy.to_json(p("entropy.json"))
    qio.write_json(p("plan.json"), result.plan.to_dict())
    result.bits.save(p("bits.bin"))
    result.tests.to_json(p("tests.json"))
    if result.filter is not None:
        result.filter.to_json(p("filter.json"))
    provenance = {
        "config": cfg.to_dict(),
        "derived_seeds": {k: derive_seed(cfg.seed, i) for i, k in enumerate(["laser", "raw_noise", "noise", "toeplitz"], 1)},
        "versions": {
            "lpnqrng": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "timing": result.throughput.to_dict(),
        "files": qio.tree_hashes(out_dir),
    }
    qio.write_json(p("provenance.json"), provenance)
    result.files = provenance["files"]
    return provenance


def regenerate(provenance_path, out_dir):
    """Re-run the scenario recorded in ``provenance_path`` and compare file hashes.

    Returns the list of files whose hash differs (empty when the regeneration
    is bit identical).
    """
    prov = qio.read_json(provenance_path)
    run_scenario(ScenarioConfig.from_dict(prov["config"]), out_dir)
    fresh = qio.tree_hashes(out_dir)
    return sorted(k for k in set(prov["files"]) | set(fresh) if prov["files"].get(k) != fresh.get(k))


# ---------------------------------------------------------------- presets


def digital_path_config(n_samples=4 * 10**6, seed=0, **overrides):
    """Desk-scale twin of the digital filtering experiment (80 GSa/s, 4-24 GHz, /2, 8 bit)."""
    cfg = dict(
        name="digital-path",
        scheme="dual",
        linewidth_hz=1e5,
        beat_hz=1.9e9,
        sample_rate_hz=80e9,
        n_samples=n_samples,
        adc_bits=DIGITAL_PATH["n_bits"],
        adc_full_range_volts=DIGITAL_PATH["full_range_volts"],
        band={"f_low_hz": 4e9, "f_high_hz": 24e9, "stopband_atten_db": 100.0, "passband_ripple_db": 1.0},
        decimation=2,
        extractor={"block_in_bits": 4096, "m": 2800, "eps": 2.0**-16},
        target_sigma_m_sq=DIGITAL_PATH["sigma_m_sq"],
        target_sigma_e_sq=DIGITAL_PATH["sigma_e_sq"],
        seed=seed,
    )
    cfg.update(overrides)
    return ScenarioConfig(**cfg)


def analog_path_config(n_samples=5 * 10**6, seed=0, **overrides):
    """Twin of the analog filtering experiment: 1.5 GHz low-pass, 1 GSa/s, 14 bit."""
    cfg = dict(
        name="analog-path",
        scheme="dual",
        linewidth_hz=1e5,
        beat_hz=1.9e9,
        sample_rate_hz=5e9,
        n_samples=n_samples,
        adc_bits=ANALOG_PATH["n_bits"],
        adc_full_range_volts=ANALOG_PATH["full_range_volts"],
        band={"f_low_hz": 0.0, "f_high_hz": 1.5e9, "stopband_atten_db": 100.0, "passband_ripple_db": 1.0},
        decimation=5,
        extractor={"block_in_bits": 7168, "m": 5120, "eps": 2.0**-100},
        target_sigma_m_sq=ANALOG_PATH["sigma_m_sq"],
        target_sigma_e_sq=ANALOG_PATH["sigma_e_sq"],
        seed=seed,
    )
    cfg.update(overrides)
    return ScenarioConfig(**cfg)


# ---------------------------------------------------------------- sweep


@dataclass
class SweepPoint:
    delay_s: float
    sample_rate_hz: float
    valid: bool
    h_min_bits: float = float("nan")
    bw_hz: float = float("nan")
    raw_std_volts: float = float("nan")
    sigma_m_sq: float = float("nan")
    sigma_e_sq: float = float("nan")
    error: str = None

    @property
    def figure_of_merit(self):
        return self.h_min_bits * self.bw_hz


@dataclass
class SweepResult:
    points: list

    @property
    def valid_points(self):
        return [p for p in self.points if p.valid]

    @property
    def best(self):
        """Largest ``h_min * bw``; ties go to the smaller delay, then the higher rate."""
        cands = self.valid_points
        if not cands:
            return None
        return max(cands, key=lambda p: (p.figure_of_merit, -p.delay_s, p.sample_rate_hz))

    def to_rows(self):
        return [
            {**asdict(p), "figure_of_merit": p.figure_of_merit}
            for p in self.points
        ]

    def to_csv(self, path):
        import csv

        rows = self.to_rows()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


def sigma_e_for_clearance(wave, clearance_db=10.0, f_lo=None, f_hi=None, segment_len=1 << 14):
    """White-noise standard deviation sitting ``clearance_db`` below ``wave``'s level in a band.

    One-sided bins of white noise with variance ``s**2`` each hold ``2*s**2/L``.
    """
    seg = segment_len
    while seg > len(wave.settled):
        seg //= 2
    sp = power_spectrum(wave, seg)
    f_lo = sp.freqs_hz[1] if f_lo is None else f_lo
    f_hi = sp.freqs_hz[-2] if f_hi is None else f_hi
    level = sp.level_db(f_lo, f_hi)
    return math.sqrt(seg / 2 * 10 ** ((level - clearance_db) / 10))


def _sweep_point(laser, delay, rate, adc, sigma_e_volts, n_samples, amplitude, point_seed, k_sigma, segment_len):
    try:
        grid = SimGrid.from_rate(rate, n_samples, derive_seed(point_seed, 1))
        clean = simulate_single(laser, grid, int(round(delay * rate)), amplitude)
        raw = clean.replace(
            clean.samples + sigma_e_volts * make_rng(derive_seed(point_seed, 2)).standard_normal(n_samples)
        )
        noise = sigma_e_volts * make_rng(derive_seed(point_seed, 3)).standard_normal(n_samples)
        spec = power_spectrum(raw, min(segment_len, n_samples))
        sm2, se2, _ = estimate_variances(quantize(raw, adc), quantize(noise, adc))
        rep = conditional_min_entropy(math.sqrt(sm2), math.sqrt(se2), adc, k_sigma=k_sigma)
        point = SweepPoint(
            delay, rate, True, rep.h_min_bits, flatness_bandwidth(spec), float(np.std(raw.samples)), sm2, se2
        )
        return point, (raw, spec)
    except QrngError as exc:
        return SweepPoint(delay, rate, False, error=f"{type(exc).__name__}: {exc}"), None


def sweep_delay_rate(
    coherence_time_s,
    delays_s,
    rates_hz,
    adc,
    sigma_e_volts,
    n_samples=10**6,
    amplitude=1.0,
    seed=0,
    k_sigma=10.0,
    segment_len=1 << 14,
    keep_waveforms=False,
    n_jobs=1,
):
    """Evaluate ``h_min * bandwidth`` for the single-laser scheme on a delay x rate grid.

    Point ``(i, j)`` is seeded from ``derive_seed(seed, i, j)``, so results do
    not depend on ``n_jobs``.  A point whose simulation or estimation fails is
    kept with ``valid=False`` and the error text.
    """
    laser = LaserSpec.from_coherence_time(coherence_time_s)
    if not delays_s or not rates_hz:
        raise ParameterError("delay and rate grids must be non-empty")
    tasks = []
    for i, delay in enumerate(delays_s):
        for j, rate in enumerate(rates_hz):
            m = delay * rate
            if abs(m - round(m)) > 1e-6 or round(m) < 1:
                raise ParameterError(f"delay {delay} s is not a multiple of the period 1/{rate} s")
            tasks.append((delay, rate, derive_seed(seed, i, j)))

    def work(task):
        delay, rate, point_seed = task
        return _sweep_point(laser, delay, rate, adc, sigma_e_volts, n_samples, amplitude, point_seed, k_sigma, segment_len)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            outcomes = list(pool.map(work, tasks))
    else:
        outcomes = [work(t) for t in tasks]
    result = SweepResult([p for p, _ in outcomes])
    result.waveforms = {
        (p.delay_s, p.sample_rate_hz): w for p, w in outcomes if keep_waveforms and w is not None
    }
    return result


# ---------------------------------------------------------------- figures


@dataclass
class Check:
    name: str
    passed: bool
    value: object
    target: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.value} (target {self.target})"


@dataclass
class FigureResult:
    fig_id: str
    checks: list
    data: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def arcsine_ks(samples, amplitude):
    """Kolmogorov-Smirnov distance to the arcsine law of ``A*cos(uniform phase)``."""
    cdf = lambda v: np.arcsin(np.clip(v / amplitude, -1, 1)) / np.pi + 0.5  # noqa: E731
    return float(stats.kstest(samples, cdf).statistic)


def line_width(wave, min_line_bins=16, smooth_fraction=0.1, min_segments=32, start_segment=1 << 12):
    """-3 dB width of the dominant spectral line with resolution adapted to the line.

    Starting from a coarse, heavily averaged spectrum, the segment length is
    raised until the line spans about ``min_line_bins`` bins (keeping at least
    ``min_segments`` averages) and the spectrum is smoothed over roughly
    ``smooth_fraction`` of the line width (at least 3 bins) before the
    crossing search.  Widths finer than the best reachable resolution are
    resolution limited; the returned spectrum records that resolution.
    """
    n = len(wave.settled)
    L, width, smooth = start_segment, None, 1
    for _ in range(8):
        spec = power_spectrum(wave, L)
        if width is not None:
            smooth = max(3, int(round(smooth_fraction * width / spec.resolution_hz)))
        width = measure_3db_bandwidth(spec, smooth)
        new_L = start_segment
        while wave.sample_rate_hz / new_L > width / min_line_bins and new_L * 2 * min_segments <= n:
            new_L *= 2
        if new_L == L and smooth > 1:
            break
        L = new_L
    return width, spec, smooth


def _write_spectrum(out_dir, name, spec, files):
    if out_dir:
        path = os.path.join(out_dir, name)
        spec.to_csv(path)
        files.append(path)


def _write_hist(out_dir, name, values, files, bins=256):
    if out_dir:
        counts, edges = qio.histogram(values, bins)
        path = os.path.join(out_dir, name)
        qio.histogram_to_csv(path, list(map(float, 0.5 * (edges[1:] + edges[:-1]))), counts, "volts")
        files.append(path)


def _strictly_increasing(xs):
    return all(b > a for a, b in zip(xs, xs[1:]))


def figure_2(out_dir=None, n_samples=10**7, seed=0):
    """Single laser, coherence time 10 ns, 5 GSa/s, delays 200 ps / 600 ps / 1 ns."""
    delays = [200e-12, 600e-12, 1e-9]
    rate, tau_c = 5e9, 10e-9
    # range leaves room for A plus the k-sigma noise bound, so saturation never dominates
    adc = AdcSpec.from_full_range(12, 8.0)
    first = simulate_single(
        LaserSpec.from_coherence_time(tau_c), SimGrid.from_rate(rate, min(n_samples, 10**6), seed), 1
    )
    sigma_e = sigma_e_for_clearance(first, 10.0)
    sweep = sweep_delay_rate(tau_c, delays, [rate], adc, sigma_e, n_samples, seed=seed, keep_waveforms=True)
    files = []
    for d in delays:
        raw, spec = sweep.waveforms[(d, rate)]
        tag = f"td_{int(round(d * 1e12))}ps"
        _write_hist(out_dir, f"fig2_hist_{tag}.csv", raw.samples, files)
        _write_spectrum(out_dir, f"fig2_spectrum_{tag}.csv", spec, files)
    if out_dir:
        path = os.path.join(out_dir, "fig2_sweep.csv")
        sweep.to_csv(path)
        files.append(path)
    pts = sweep.points
    stds = [p.raw_std_volts for p in pts]
    hs = [p.h_min_bits for p in pts]
    bws = [p.bw_hz for p in pts]
    par = [sweep.waveforms[(d, rate)][1].parseval_ratio for d in delays]
    checks = [
        Check("raw std increases with delay", _strictly_increasing(stds), stds, "strictly increasing"),
        Check("H_min increases with delay", _strictly_increasing(hs), hs, "strictly increasing"),
        Check("flatness bandwidth decreases with delay", _strictly_increasing(bws[::-1]), bws, "strictly decreasing"),
        Check("Parseval", all(abs(r - 1) <= 0.01 for r in par), par, "|ratio-1| <= 1%"),
    ]
    res = FigureResult("2", checks, {"sweep": sweep, "sigma_e_volts": sigma_e}, files)
    return res


def figure_3(out_dir=None, n_samples=10**7, seed=0):
    """Dual laser at 0.1 / 1 / 100 MHz linewidth, beat 1.9 GHz, 5 GSa/s."""
    rate, beat = 5e9, 1.9e9
    files, widths, ks, peaks, par = [], {}, {}, {}, []
    flat_band = None
    for i, dnu in enumerate(sorted(FIG3_BANDWIDTHS_HZ)):
        grid = SimGrid.from_rate(rate, n_samples, derive_seed(seed, i))
        wave = simulate_dual(LaserSpec(dnu), LaserSpec(dnu), grid, beat, 1.0)
        ks[dnu] = arcsine_ks(wave.samples, 1.0)
        width, wspec, _ = line_width(wave)
        widths[dnu] = width
        spec = power_spectrum(wave, 1 << 16)
        par += [spec.parseval_ratio, wspec.parseval_ratio]
        peaks[dnu] = float(spec.freqs_hz[np.argmax(spec.power_db)])
        tag = f"{dnu / 1e6:g}MHz"
        _write_hist(out_dir, f"fig3_hist_{tag}.csv", wave.samples, files)
        _write_spectrum(out_dir, f"fig3_spectrum_{tag}.csv", spec, files)
        if dnu == 1e5:
            sigma_e = sigma_e_for_clearance(wave, 10.0, 0.0, 1.5e9, 1 << 16)
            z = make_rng(derive_seed(seed, 100)).standard_normal(n_samples) * sigma_e
            zn = make_rng(derive_seed(seed, 101)).standard_normal(n_samples) * sigma_e
            raw = power_spectrum(wave.replace(wave.samples + z), 1 << 16)
            noise = power_spectrum(Waveform(zn, rate), 1 << 16)
            par += [raw.parseval_ratio, noise.parseval_ratio]
            flat_band = detect_flat_area(raw, noise)
    order = sorted(widths)
    w = [widths[k] for k in order]
    checks = [
        Check("bandwidth increases with linewidth", _strictly_increasing(w), w, "strictly increasing"),
        Check(
            "100 MHz bandwidth",
            abs(widths[1e8] / 200.43e6 - 1) <= 0.30,
            widths[1e8],
            "200.43 MHz +/- 30%",
        ),
        Check("100 kHz bandwidth", 0.5 <= widths[1e5] / 0.14e6 <= 2, widths[1e5], "0.14 MHz within x2"),
        Check("1 MHz bandwidth", 0.5 <= widths[1e6] / 1.73e6 <= 2, widths[1e6], "1.73 MHz within x2"),
        Check("arcsine marginal", max(ks.values()) < 0.01, ks, "KS < 0.01"),
        Check(
            "peak at beat frequency",
            all(abs(peaks[k] - beat) <= max(2 * rate / (1 << 16), widths[k] / 2) for k in peaks),
            peaks,
            "1.9 GHz +/- max(2 bins, half the line width)",
        ),
        Check(
            "flat area below the dominate area",
            flat_band is not None and flat_band[1] <= 1.5e9,
            flat_band,
            "inside 0-1.5 GHz",
        ),
        Check("Parseval", all(abs(r - 1) <= 0.01 for r in par), par, "|ratio-1| <= 1%"),
    ]
    return FigureResult("3", checks, {"widths": widths, "ks": ks, "flat_band": flat_band}, files)


def figure_4_sim(out_dir=None, n_samples=10**7, seed=0):
    """Dual laser at 20 GSa/s, A = 0.87 V, electrical noise about 10 dB under the flat area."""
    rate, beat, amp = 20e9, 1.9e9, 0.87
    clean = simulate_dual(LaserSpec(1e5), LaserSpec(1e5), SimGrid.from_rate(rate, n_samples, seed), beat, amp)
    sigma_e = sigma_e_for_clearance(clean, 10.0, 4e9, 10e9, 1 << 16)
    raw = clean.replace(clean.samples + sigma_e * make_rng(derive_seed(seed, 2)).standard_normal(n_samples))
    noise = Waveform(sigma_e * make_rng(derive_seed(seed, 3)).standard_normal(n_samples), rate)
    s_raw, s_noise = power_spectrum(raw, 1 << 16), power_spectrum(noise, 1 << 16)
    files = []
    _write_spectrum(out_dir, "fig4_spectrum_raw.csv", s_raw, files)
    _write_spectrum(out_dir, "fig4_spectrum_noise.csv", s_noise, files)
    _write_hist(out_dir, "fig4_hist_raw.csv", raw.samples, files)
    if out_dir:
        qio.waveform_to_csv(raw, os.path.join(out_dir, "fig4_waveform.csv"), max_rows=2000)
        files.append(os.path.join(out_dir, "fig4_waveform.csv"))
    band = detect_flat_area(s_raw, s_noise)
    clearance = s_raw.level_db(*band) - s_noise.level_db(*band)
    peak = float(s_raw.freqs_hz[np.argmax(s_raw.power_db)])
    checks = [
        Check("flat area excludes the beat", not (band[0] <= beat <= band[1]), band, "beat outside band"),
        Check("clearance about 10 dB", 8.0 <= clearance <= 12.0, clearance, "10 +/- 2 dB"),
        Check("peak at beat frequency", abs(peak - beat) <= 2 * s_raw.resolution_hz, peak, "1.9 GHz"),
        Check(
            "Parseval",
            s_raw.parseval_ok() and s_noise.parseval_ok(),
            [s_raw.parseval_ratio, s_noise.parseval_ratio],
            "|ratio-1| <= 1%",
        ),
    ]
    return FigureResult("4-sim", checks, {"band": band, "clearance_db": clearance, "sigma_e_volts": sigma_e}, files)


def _gaussian_ks(x):
    x = np.asarray(x, dtype=np.float64)
    return float(stats.kstest((x - x.mean()) / x.std(), "norm").statistic)


def figure_6_sim(out_dir=None, n_samples=5 * 10**6, seed=0):
    """Analog-filtering twin: 1.5 GHz low-pass, 1 GSa/s, 14-bit ADC, 7168x5120 extraction."""
    res = run_scenario(analog_path_config(n_samples, seed), out_dir)
    ks = _gaussian_ks(res.processed.settled)
    rate = generation_rate_bps(14, 5120, 7168, 1e9)
    checks = [
        Check("H_min near 11.0407", abs(res.entropy.h_min_bits - 11.0407) <= 0.05, res.entropy.h_min_bits, "+/- 0.05"),
        Check("7168x5120 admissible", res.plan.admits(5120), res.plan.block_out_bits, ">= 5120"),
        Check("10 Gbps at 1 GSa/s", rate == 10 * 10**9, float(rate), "10 Gbps"),
        Check("Gaussian histogram", ks < 0.01, ks, "KS to normal < 0.01"),
        Check("battery", res.tests.passed, [r.status for r in res.tests.results], "all applicable pass"),
    ]
    return FigureResult("6-sim", checks, {"scenario": res}, sorted(res.files))


def figure_7_sim(out_dir=None, n_samples=4 * 10**6, seed=0, max_lag=10):
    """Digital-filtering twin: spectra before/after the band-pass and autocorrelation at 80/40/20 GSa/s."""
    res = run_scenario(digital_path_config(n_samples, seed), out_dir)
    filt = res.filter
    beat = res.config.beat_hz
    files = sorted(res.files)
    attenuation = -tone_gain_db(filt, beat)
    filtered = apply_filter(res.raw, filt)
    s_post = power_spectrum(filtered, res.config.spectrum_segment)
    s_post_noise = power_spectrum(apply_filter(res.noise, filt), res.config.spectrum_segment)
    flat_level = s_post.level_db(filt.band.f_low_hz, filt.band.f_high_hz)
    spike = float(np.max(s_post.power_db[s_post.band_mask(beat - 0.25e9, beat + 0.25e9)]))
    acf = {}
    for factor in (1, 2, 4):
        rate = filtered.sample_rate_hz / factor
        acf[rate] = autocorrelation(downsample(filtered, factor).settled, max_lag)
    if out_dir:
        s_post.to_csv(os.path.join(out_dir, "fig7_spectrum_post_raw.csv"))
        s_post_noise.to_csv(os.path.join(out_dir, "fig7_spectrum_post_noise.csv"))
        import csv

        path = os.path.join(out_dir, "fig7_autocorrelation.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lag"] + [f"rho_{r / 1e9:g}GSa" for r in acf])
            for k in range(max_lag):
                w.writerow([k + 1] + [repr(float(acf[r][k])) for r in acf])
        files += [os.path.join(out_dir, n) for n in ("fig7_spectrum_post_raw.csv", "fig7_spectrum_post_noise.csv")]
        files.append(path)
    rho40 = acf[40e9]
    try:
        pre_band = detect_flat_area(res.spectrum, res.noise_spectrum)
    except QrngError:
        pre_band = None
    checks = [
        Check("1.9 GHz tone attenuation", attenuation >= 40.0, attenuation, ">= 40 dB"),
        Check("residual spike vs flat area", spike <= flat_level + 3.0, spike - flat_level, "<= +3 dB"),
        Check(
            "decimated autocorrelation",
            bool(np.all(np.abs(rho40) <= 0.05)),
            np.round(rho40, 4).tolist(),
            "|rho(k)| <= 0.05, k=1..10",
        ),
        Check(
            "lag-1 lower after decimation",
            abs(acf[40e9][0]) < abs(acf[80e9][0]),
            [float(acf[80e9][0]), float(acf[40e9][0])],
            "|rho40(1)| < |rho80(1)|",
        ),
        Check(
            "Parseval",
            all(s.parseval_ok() for s in (res.spectrum, res.noise_spectrum, res.processed_spectrum, s_post, s_post_noise)),
            [s.parseval_ratio for s in (res.spectrum, res.noise_spectrum, res.processed_spectrum, s_post, s_post_noise)],
            "|ratio-1| <= 1%",
        ),
    ]
    data = {
        "scenario": res,
        "attenuation_db": attenuation,
        "spike_minus_flat_db": spike - flat_level,
        "autocorrelation": acf,
        "pre_filter_flat_band": pre_band,
    }
    return FigureResult("7-sim", checks, data, files)


FIGURES = {"2": figure_2, "3": figure_3, "4-sim": figure_4_sim, "6-sim": figure_6_sim, "7-sim": figure_7_sim}


def reproduce_figure(fig_id, out_dir=None, **kwargs):
    """Run one figure scenario, write its CSVs and evaluate its checks."""
    fig_id = str(fig_id)
    if fig_id not in FIGURES:
        raise ParameterError(f"unsupported figure {fig_id!r}; choose from {sorted(FIGURES)}")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    return FIGURES[fig_id](out_dir, **kwargs)


def rate_identities():
    """Output bits per sample and line rates of the two published extraction plans."""
    return {
        "analog": {
            "bits_per_sample": output_bits_per_sample(14, 5120, 7168),
            "rate_bps": generation_rate_bps(14, 5120, 7168, 10**9),
        },
        "digital": {
            "bits_per_sample": output_bits_per_sample(8, 2800, 4096),
            "rate_bps": generation_rate_bps(8, 2800, 4096, 40 * 10**9),
        },
    }


__all__ = [
    "ScenarioConfig",
    "ScenarioResult",
    "run_scenario",
    "regenerate",
    "sweep_delay_rate",
    "SweepResult",
    "reproduce_figure",
    "rate_identities",
]
