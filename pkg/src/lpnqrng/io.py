"""File formats.

Waveform container: one JSON header line terminated by ``\\n`` (keys
``sample_rate_hz``, ``n_samples``, ``amplitude_volts``, ``seed`` plus
optional extras), followed by ``n_samples`` little-endian float64 values.
"""

import csv
import hashlib
import json
import os

import numpy as np

from .exceptions import DataError
from .phasesim import Waveform


def save_waveform(wave, path):
    header = {
        "sample_rate_hz": wave.sample_rate_hz,
        "n_samples": len(wave),
        "amplitude_volts": wave.amplitude_volts,
        "seed": wave.seed,
        "transient_samples": wave.transient_samples,
        "metadata": wave.metadata,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, default=_jsonable).encode() + b"\n")
        fh.write(np.ascontiguousarray(wave.samples, dtype="<f8").tobytes())


def load_waveform(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        samples = np.frombuffer(fh.read(), dtype="<f8")
    if samples.size != header["n_samples"]:
        raise DataError(f"{path}: header announces {header['n_samples']} samples, found {samples.size}")
    return Waveform(
        samples.astype(np.float64),
        header["sample_rate_hz"],
        amplitude_volts=header.get("amplitude_volts"),
        seed=header.get("seed"),
        transient_samples=header.get("transient_samples", 0),
        metadata=header.get("metadata") or {},
    )


def waveform_to_csv(wave, path, max_rows=None):
    n = len(wave) if max_rows is None else min(max_rows, len(wave))
    t = np.arange(n) / wave.sample_rate_hz
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "volts"])
        for ti, v in zip(t, wave.samples[:n]):
            w.writerow([repr(float(ti)), repr(float(v))])


def histogram(values, bins=256, value_range=None):
    counts, edges = np.histogram(values, bins=bins, range=value_range)
    return counts, edges


def code_histogram(trace):
    """One bin per ADC code, from ``i_min`` to ``i_max``."""
    spec = trace.spec
    counts = np.bincount(trace.codes.astype(np.int64) - spec.i_min, minlength=spec.i_max - spec.i_min + 1)
    return np.arange(spec.i_min, spec.i_max + 1), counts


def histogram_to_csv(path, centers, counts, label="value"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([label, "count"])
        for c, k in zip(centers, counts):
            w.writerow([repr(float(c)) if isinstance(c, float) else int(c), int(k)])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_jsonable)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def tree_hashes(directory, exclude=("provenance.json",)):
    """SHA-256 of every file below ``directory`` keyed by relative path."""
    out = {}
    for root, _, files in os.walk(directory):
        for name in sorted(files):
            if name in exclude:
                continue
            full = os.path.join(root, name)
            out[os.path.relpath(full, directory)] = file_sha256(full)
    return dict(sorted(out.items()))


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
