"""Wiener phase trajectories and the photodetector signals built from them.

The laser phase is a discretised Wiener process whose increments over one
sample period ``T_s`` are i.i.d. ``N(0, 2*pi*linewidth*T_s)``.  Two detection
schemes are synthesised from it:

* single laser through an unbalanced interferometer with delay
  ``T_d = m*T_s``: ``v[n] = A*sin(theta[n+m] - theta[n])``
* two free-running lasers beating at ``delta_f``:
  ``v[n] = A*cos(2*pi*delta_f*n*T_s + theta1[n] - theta2[n])``

Random streams come from :class:`numpy.random.Philox` (counter based, period
well above 2**128) seeded through :class:`numpy.random.SeedSequence`.
Sub-streams for independent lasers or noise sources use :func:`derive_seed`.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from ._validation import check_int, check_nonnegative, check_positive, check_signal
from .exceptions import ParameterError

DEFAULT_CHUNK = 1 << 20


def derive_seed(seed, *keys):
    """Deterministically derive a 64-bit child seed from ``seed`` and ``keys``.

    The child is ``SeedSequence(seed, spawn_key=keys).generate_state(1, uint64)``,
    so the same ``(seed, keys)`` always maps to the same value and distinct
    keys give statistically independent streams.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed):
    """Return the package's standard generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True)
class LaserSpec:
    """A laser characterised only by its Lorentzian linewidth (Hz)."""

    linewidth_hz: float

    def __post_init__(self):
        object.__setattr__(self, "linewidth_hz", check_positive("linewidth_hz", self.linewidth_hz))

    @property
    def coherence_time_s(self):
        return 1.0 / (math.pi * self.linewidth_hz)

    @classmethod
    def from_coherence_time(cls, coherence_time_s):
        return cls(1.0 / (math.pi * check_positive("coherence_time_s", coherence_time_s)))

    def increment_variance(self, sample_period_s):
        """Variance of one phase step, ``2*pi*linewidth*T_s`` (rad^2)."""
        return 2.0 * math.pi * self.linewidth_hz * sample_period_s


@dataclass(frozen=True)
class SimGrid:
    """Uniform time grid plus the seed that drives everything sampled on it."""

    sample_period_s: float
    n_samples: int
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sample_period_s", check_positive("sample_period_s", self.sample_period_s))
        object.__setattr__(self, "n_samples", check_int("n_samples", self.n_samples, minimum=1))
        seed = check_int("rng_seed", self.rng_seed, minimum=0)
        if seed >= 1 << 64:
            raise ParameterError("rng_seed must fit in 64 bits")
        object.__setattr__(self, "rng_seed", seed)

    @property
    def sample_rate_hz(self):
        return 1.0 / self.sample_period_s

    @classmethod
    def from_rate(cls, sample_rate_hz, n_samples, rng_seed=0):
        return cls(1.0 / check_positive("sample_rate_hz", sample_rate_hz), n_samples, rng_seed)

    def with_seed(self, rng_seed):
        return SimGrid(self.sample_period_s, self.n_samples, rng_seed)

    def compatible(self, other):
        return self.n_samples == other.n_samples and math.isclose(
            self.sample_period_s, other.sample_period_s, rel_tol=1e-12
        )


@dataclass
class PhasePath:
    """Sampled phase trajectory ``theta(n*T_s)`` in radians."""

    values: np.ndarray
    grid: SimGrid = None
    laser: LaserSpec = None

    def __len__(self):
        return len(self.values)


@dataclass
class Waveform:
    """Uniformly sampled voltage trace.

    ``transient_samples`` counts leading samples that belong to a filter
    start-up transient; :attr:`settled` drops them and every statistic in
    the package is computed on the settled part.
    """

    samples: np.ndarray
    sample_rate_hz: float
    amplitude_volts: float = None
    seed: int = None
    transient_samples: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.sample_rate_hz = check_positive("sample_rate_hz", self.sample_rate_hz)

    def __len__(self):
        return len(self.samples)

    @property
    def sample_period_s(self):
        return 1.0 / self.sample_rate_hz

    @property
    def settled(self):
        return self.samples[self.transient_samples:]

    @property
    def times_s(self):
        return np.arange(len(self.samples)) * self.sample_period_s

    def replace(self, samples, **changes):
        """Copy with new samples; metadata is shallow-copied."""
        fields = dict(
            sample_rate_hz=self.sample_rate_hz,
            amplitude_volts=self.amplitude_volts,
            seed=self.seed,
            transient_samples=self.transient_samples,
            metadata=dict(self.metadata),
        )
        fields.update(changes)
        return Waveform(samples, **fields)


def iter_wiener_increments(laser, grid, chunk_size=DEFAULT_CHUNK, variance_scale=1.0):
    """Yield the ``n_samples - 1`` phase increments in chunks.

    Concatenating the chunks gives exactly :func:`wiener_increments` for any
    ``chunk_size``.  ``variance_scale`` multiplies the increment variance and
    exists so tests can drive the zero-variance limit.
    """
    chunk_size = check_int("chunk_size", chunk_size, minimum=1)
    scale = check_nonnegative("variance_scale", variance_scale)
    std = math.sqrt(laser.increment_variance(grid.sample_period_s) * scale)
    rng = make_rng(grid.rng_seed)
    remaining = grid.n_samples - 1
    while remaining > 0:
        k = min(chunk_size, remaining)
        yield rng.standard_normal(k) * std
        remaining -= k


def wiener_increments(laser, grid, variance_scale=1.0):
    """Draw the i.i.d. Gaussian phase steps of one laser on ``grid``."""
    chunks = list(iter_wiener_increments(laser, grid, variance_scale=variance_scale))
    if not chunks:
        return np.zeros(0)
    return np.concatenate(chunks)


def accumulate_phase(increments, laser=None, grid=None, initial_phase=0.0):
    """Cumulatively sum ``increments`` into a phase path starting at ``initial_phase``."""
    inc = check_signal(increments, "increments", allow_empty=True)
    values = np.empty(inc.size + 1)
    values[0] = float(initial_phase)
    np.cumsum(inc, out=values[1:])
    values[1:] += values[0]
    return PhasePath(values, grid=grid, laser=laser)


def simulate_phase(laser, grid, initial_phase=0.0, variance_scale=1.0):
    """Generate a full Wiener phase path (increments then cumulative sum)."""
    inc = wiener_increments(laser, grid, variance_scale=variance_scale)
    return accumulate_phase(inc, laser=laser, grid=grid, initial_phase=initial_phase)


def iter_phase(laser, grid, chunk_size=DEFAULT_CHUNK, initial_phase=0.0):
    """Yield consecutive chunks of the phase path without materialising all of it."""
    carry = float(initial_phase)
    first = True
    for inc in iter_wiener_increments(laser, grid, chunk_size):
        if first:
            out = np.empty(inc.size + 1)
            out[0] = carry
            np.cumsum(inc, out=out[1:])
            out[1:] += carry
            first = False
        else:
            out = np.cumsum(inc) + carry
        carry = out[-1]
        yield out
    if first:
        yield np.array([carry])


def _grid_of(path):
    if path.grid is None:
        raise ParameterError("phase path carries no SimGrid")
    return path.grid


def synth_single(path, delay_samples, amplitude=1.0):
    """Single-laser interferometer output ``A*sin(theta[n+m] - theta[n])``."""
    grid = _grid_of(path)
    m = check_int("delay_samples", delay_samples, minimum=0)
    amplitude = check_positive("amplitude", amplitude)
    theta = np.asarray(path.values)
    if m >= theta.size:
        raise ParameterError(f"delay of {m} samples does not fit a path of length {theta.size}")
    dtheta = theta[m:] - theta[: theta.size - m]
    return Waveform(
        amplitude * np.sin(dtheta),
        grid.sample_rate_hz,
        amplitude_volts=amplitude,
        seed=grid.rng_seed,
        metadata={"scheme": "single", "delay_samples": m},
    )


def _beat_phase(n0, n, beat_hz, sample_period_s):
    # reduce modulo one cycle before scaling so large n keeps full precision
    cycles = np.mod(np.arange(n0, n0 + n, dtype=np.float64) * (beat_hz * sample_period_s), 1.0)
    return 2.0 * np.pi * cycles


def synth_dual(path1, path2, beat_hz, amplitude=1.0):
    """Two-laser beat note ``A*cos(2*pi*df*n*T_s + theta1[n] - theta2[n])``."""
    g1, g2 = _grid_of(path1), _grid_of(path2)
    if not g1.compatible(g2) or len(path1) != len(path2):
        raise ParameterError("phase paths live on different grids")
    beat_hz = check_nonnegative("beat_hz", beat_hz)
    amplitude = check_positive("amplitude", amplitude)
    phase = _beat_phase(0, len(path1), beat_hz, g1.sample_period_s)
    phase += np.asarray(path1.values) - np.asarray(path2.values)
    return Waveform(
        amplitude * np.cos(phase),
        g1.sample_rate_hz,
        amplitude_volts=amplitude,
        seed=g1.rng_seed,
        metadata={"scheme": "dual", "beat_hz": beat_hz},
    )


def iter_dual(laser1, laser2, grid, beat_hz, amplitude=1.0, chunk_size=DEFAULT_CHUNK):
    """Stream the dual-laser waveform chunk by chunk.

    The lasers use seeds ``derive_seed(grid.rng_seed, 1)`` and ``(…, 2)``,
    the same convention as :func:`simulate_dual`, so the concatenated chunks
    equal the bulk result bit for bit.
    """
    g1 = grid.with_seed(derive_seed(grid.rng_seed, 1))
    g2 = grid.with_seed(derive_seed(grid.rng_seed, 2))
    n0 = 0
    for a, b in zip(iter_phase(laser1, g1, chunk_size), iter_phase(laser2, g2, chunk_size)):
        phase = _beat_phase(n0, a.size, beat_hz, grid.sample_period_s) + (a - b)
        n0 += a.size
        yield amplitude * np.cos(phase)


def simulate_dual(laser1, laser2, grid, beat_hz, amplitude=1.0):
    """Generate both phase paths from derived seeds and synthesise the beat."""
    p1 = simulate_phase(laser1, grid.with_seed(derive_seed(grid.rng_seed, 1)))
    p2 = simulate_phase(laser2, grid.with_seed(derive_seed(grid.rng_seed, 2)))
    wave = synth_dual(p1, p2, beat_hz, amplitude)
    wave.seed = grid.rng_seed
    return wave


def simulate_single(laser, grid, delay_samples, amplitude=1.0):
    """Generate a phase path and the delayed-interferometer output.

    The path is ``n_samples + delay_samples`` long so the waveform keeps
    ``n_samples`` points.
    """
    m = check_int("delay_samples", delay_samples, minimum=0)
    long_grid = SimGrid(grid.sample_period_s, grid.n_samples + m, grid.rng_seed)
    return synth_single(simulate_phase(laser, long_grid), m, amplitude)


def add_electrical_noise(wave, sigma_e_volts, rng_seed):
    """Add independent ``N(0, sigma_e**2)`` samples to every point of ``wave``."""
    sigma = check_nonnegative("sigma_e_volts", sigma_e_volts)
    if sigma == 0:
        return wave.replace(wave.samples.copy())
    noise = make_rng(rng_seed).standard_normal(len(wave)) * sigma
    out = wave.replace(wave.samples + noise)
    out.metadata["sigma_e_volts"] = sigma
    return out


def electrical_noise(n_samples, sample_rate_hz, sigma_e_volts, rng_seed):
    """Noise-only trace, the "lasers switched off" measurement."""
    sigma = check_nonnegative("sigma_e_volts", sigma_e_volts)
    n = check_int("n_samples", n_samples, minimum=1)
    samples = make_rng(rng_seed).standard_normal(n) * sigma
    return Waveform(samples, sample_rate_hz, seed=rng_seed, metadata={"scheme": "noise", "sigma_e_volts": sigma})
