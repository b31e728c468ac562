"""Toeplitz-hash randomness extraction over GF(2).

A Toeplitz matrix ``T`` (``m`` output rows, ``n`` input columns) is fixed by
``m + n - 1`` seed bits with ``T[i, j] = seed[i + n - 1 - j]``.  Since that is
a convolution, ``T @ x`` equals ``(seed * x)[n-1 : n-1+m]`` and the package
evaluates it with batched FFT convolutions, rounding back to integers before
reducing mod 2.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
import hashlib
import json
import math
import os
import time

import numpy as np

from ._validation import check_bits, check_int
from .exceptions import DataError, EntropyDeficitError, ParameterError
from .phasesim import make_rng


@dataclass
class BitStream:
    """Packed bits, MSB first within each byte; pad bits are zero."""

    data: np.ndarray
    bit_count: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.uint8)
        if self.bit_count > 8 * self.data.size:
            raise DataError("bit_count exceeds the packed buffer")

    @classmethod
    def from_bits(cls, bits, metadata=None):
        bits = check_bits(bits)
        return cls(np.packbits(bits), int(bits.size), dict(metadata or {}))

    def to_bits(self):
        return np.unpackbits(self.data, count=self.bit_count)

    def __len__(self):
        return self.bit_count

    def sha256(self):
        return hashlib.sha256(self.data.tobytes()).hexdigest()

    def save(self, path):
        """Write ``path`` (raw bytes) and ``path + '.json'`` (sidecar)."""
        path = os.fspath(path)
        with open(path, "wb") as fh:
            fh.write(self.data.tobytes())
        side = {"bit_count": self.bit_count, "sha256": self.sha256(), **self.metadata}
        with open(path + ".json", "w") as fh:
            json.dump(side, fh, indent=2, default=str)

    @classmethod
    def load(cls, path):
        path = os.fspath(path)
        data = np.fromfile(path, dtype=np.uint8)
        meta = {}
        if os.path.exists(path + ".json"):
            with open(path + ".json") as fh:
                meta = json.load(fh)
        bit_count = int(meta.pop("bit_count", 8 * data.size))
        meta.pop("sha256", None)
        return cls(data, bit_count, meta)


def parse_dimensions(text, orientation="input-output"):
    """Parse ``'7168x5120'`` into ``(m, n)`` = (output bits, input bits).

    ``orientation`` says how the text is written: ``'input-output'`` (the
    convention of the published dimensions) or ``'output-input'``.
    """
    parts = text.lower().replace("×", "x").split("x")
    if len(parts) != 2:
        raise ParameterError(f"cannot parse matrix dimensions {text!r}")
    a, b = (int(p) for p in parts)
    if orientation == "input-output":
        return b, a
    if orientation == "output-input":
        return a, b
    raise ParameterError(f"unknown orientation {orientation!r}")


@dataclass
class ToeplitzConfig:
    out_bits_m: int
    in_bits_n: int
    seed_bits: np.ndarray

    def __post_init__(self):
        self.out_bits_m = check_int("out_bits_m", self.out_bits_m, minimum=1)
        self.in_bits_n = check_int("in_bits_n", self.in_bits_n, minimum=1)
        if self.out_bits_m > self.in_bits_n:
            raise ParameterError("a Toeplitz extractor needs m <= n")
        self.seed_bits = check_bits(self.seed_bits, "seed_bits")
        if self.seed_bits.size != self.out_bits_m + self.in_bits_n - 1:
            raise ParameterError(
                f"seed must hold m+n-1 = {self.out_bits_m + self.in_bits_n - 1} bits, got {self.seed_bits.size}"
            )

    @classmethod
    def random(cls, m, n, seed):
        """Seed bits drawn from the package generator with ``seed``."""
        return cls(m, n, make_rng(seed).integers(0, 2, m + n - 1, dtype=np.uint8))

    @classmethod
    def from_dimensions(cls, text, seed, orientation="input-output"):
        m, n = parse_dimensions(text, orientation)
        return cls.random(m, n, seed)

    @classmethod
    def from_seed_file(cls, m, n, path):
        bits = BitStream.load(path).to_bits()
        if bits.size < m + n - 1:
            raise ParameterError(f"seed file holds {bits.size} bits, need {m + n - 1}")
        return cls(m, n, bits[: m + n - 1])

    @property
    def ratio(self):
        return Fraction(self.out_bits_m, self.in_bits_n)

    def seed_hash(self):
        return hashlib.sha256(np.packbits(self.seed_bits).tobytes()).hexdigest()

    def config_hash(self):
        h = hashlib.sha256(f"toeplitz:{self.out_bits_m}x{self.in_bits_n}:".encode())
        h.update(np.packbits(self.seed_bits).tobytes())
        return h.hexdigest()

    def matrix(self):
        """Dense ``(m, n)`` 0/1 matrix; only for inspection and small sizes."""
        win = np.lib.stride_tricks.sliding_window_view(self.seed_bits, self.in_bits_n)
        return win[: self.out_bits_m, ::-1].copy()


def _fft_len(m, n):
    return 1 << int(math.ceil(math.log2(max(2, m + 2 * n - 2))))


class _Hasher:
    """Batched FFT evaluation of ``T @ X`` mod 2 for one configuration."""

    def __init__(self, config):
        self.m, self.n = config.out_bits_m, config.in_bits_n
        self.nfft = _fft_len(self.m, self.n)
        self.seed_f = np.fft.rfft(config.seed_bits.astype(np.float64), self.nfft)

    def __call__(self, blocks):
        blocks = np.atleast_2d(blocks)
        xf = np.fft.rfft(blocks.astype(np.float64), self.nfft, axis=1)
        conv = np.fft.irfft(xf * self.seed_f, self.nfft, axis=1)[:, self.n - 1 : self.n - 1 + self.m]
        r = np.rint(conv)
        if self.n > 8 and np.max(np.abs(conv - r), initial=0.0) > 0.25:
            raise ArithmeticError("FFT rounding error too large for exact GF(2) reduction")
        return (r.astype(np.int64) & 1).astype(np.uint8)


def extract_block(bits, config):
    """Hash one ``n``-bit block to ``m`` bits."""
    x = check_bits(bits)
    if x.size != config.in_bits_n:
        raise ParameterError(f"block must hold {config.in_bits_n} bits, got {x.size}")
    return _Hasher(config)(x[None, :])[0]


def extract_blocks(blocks, config):
    """Hash every row of a ``(k, n)`` 0/1 array."""
    blocks = np.asarray(blocks, dtype=np.uint8)
    if blocks.ndim != 2 or blocks.shape[1] != config.in_bits_n:
        raise ParameterError(f"blocks must have shape (k, {config.in_bits_n})")
    if blocks.shape[0] == 0:
        return np.zeros((0, config.out_bits_m), dtype=np.uint8)
    return _Hasher(config)(blocks)


@dataclass
class ThroughputReport:
    input_bits: int
    output_bits: int
    blocks: int
    seconds: float

    @property
    def input_rate_bps(self):
        return self.input_bits / self.seconds if self.seconds > 0 else float("inf")

    @property
    def output_rate_bps(self):
        return self.output_bits / self.seconds if self.seconds > 0 else float("inf")

    def to_dict(self):
        return {
            "input_bits": self.input_bits,
            "output_bits": self.output_bits,
            "blocks": self.blocks,
            "seconds": self.seconds,
            "input_rate_bps": self.input_rate_bps,
            "output_rate_bps": self.output_rate_bps,
        }


def stream_extract(stream, config, batch_blocks=256, n_jobs=1):
    """Split ``stream`` into whole ``n``-bit blocks, hash each with the same seed.

    The trailing partial block is dropped (never padded).  With ``n_jobs > 1``
    batches are hashed on a thread pool; outputs are placed by block index so
    the result is identical to sequential processing.  Throughput is measured
    on the wall clock.
    """
    n, m = config.in_bits_n, config.out_bits_m
    if stream.bit_count < n:
        raise ParameterError(f"stream of {stream.bit_count} bits is shorter than one {n}-bit block")
    k = stream.bit_count // n
    t0 = time.perf_counter()
    bits = np.unpackbits(stream.data, count=k * n).reshape(k, n)
    hasher = _Hasher(config)
    out = np.empty((k, m), dtype=np.uint8)
    starts = range(0, k, batch_blocks)

    def work(s):
        out[s : s + batch_blocks] = hasher(bits[s : s + batch_blocks])

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            list(pool.map(work, starts))
    else:
        for s in starts:
            work(s)
    packed = np.packbits(out.reshape(-1))
    seconds = time.perf_counter() - t0
    meta = {
        "source": stream.metadata.get("source"),
        "source_sha256": stream.sha256(),
        "config_hash": config.config_hash(),
        "seed_hash": config.seed_hash(),
        "m": m,
        "n": n,
    }
    result = BitStream(packed, k * m, meta)
    return result, ThroughputReport(k * n, k * m, k, seconds)


def codes_to_bits(trace, n_bits=None, chunk=1 << 20):
    """Serialise ADC codes as ``n_bits`` two's-complement words, MSB first."""
    codes = getattr(trace, "codes", trace)
    if n_bits is None:
        n_bits = trace.spec.n_bits
    codes = np.asarray(codes, dtype=np.int64)
    mask = (1 << n_bits) - 1
    shifts = np.arange(n_bits - 1, -1, -1, dtype=np.int64)
    parts = []
    for s in range(0, codes.size, chunk):
        u = codes[s : s + chunk] & mask
        parts.append(((u[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1))
    bits = np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint8)
    return BitStream.from_bits(bits, {"word_bits": n_bits, "samples": int(codes.size)})


@dataclass
class ExtractionPlan:
    h_min_bits_per_sample: float
    bits_per_sample: int
    block_in_bits: int
    block_out_bits: int
    security_eps: float
    mode: str = "leftover-hash"

    @property
    def implied_ratio(self):
        return self.block_out_bits / self.block_in_bits

    def admits(self, m):
        """True if an ``m``-row matrix stays within this plan."""
        return 1 <= m <= self.block_out_bits

    def to_dict(self):
        return {
            "h_min_bits_per_sample": self.h_min_bits_per_sample,
            "bits_per_sample": self.bits_per_sample,
            "block_in_bits": self.block_in_bits,
            "block_out_bits": self.block_out_bits,
            "security_eps": self.security_eps,
            "mode": self.mode,
            "implied_ratio": self.implied_ratio,
        }


def plan_extraction(h_min, bits_per_sample, block_in_n, eps=2.0**-100, plain_ratio=False):
    """Largest admissible output length for an ``n``-bit input block.

    ``m = floor(n * h_min / bits_per_sample - 2 * log2(1/eps))`` by the
    leftover hash bound.  ``plain_ratio=True`` drops the security slack and
    keeps the plain ratio ``m/n <= h_min / bits_per_sample``.
    """
    bits_per_sample = check_int("bits_per_sample", bits_per_sample, minimum=1)
    block_in_n = check_int("block_in_n", block_in_n, minimum=1)
    h_min = float(h_min)
    if not 0 <= h_min <= bits_per_sample:
        raise ParameterError("h_min must lie in [0, bits_per_sample]")
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    budget = block_in_n * h_min / bits_per_sample
    if not plain_ratio:
        budget -= 2.0 * math.log2(1.0 / eps)
    m = min(int(math.floor(budget)), block_in_n)
    if m <= 0:
        raise EntropyDeficitError(f"no output bits left (budget {budget:.2f})")
    return ExtractionPlan(
        h_min, bits_per_sample, block_in_n, m, eps, "plain-ratio" if plain_ratio else "leftover-hash"
    )


def output_bits_per_sample(bits_per_sample, m, n):
    """Exact output bits produced per ADC sample at ratio ``m/n``."""
    return Fraction(bits_per_sample) * Fraction(m, n)


def generation_rate_bps(bits_per_sample, m, n, sample_rate_hz):
    """Final random bit rate for ADC samples arriving at ``sample_rate_hz``."""
    return output_bits_per_sample(bits_per_sample, m, n) * Fraction(sample_rate_hz)
