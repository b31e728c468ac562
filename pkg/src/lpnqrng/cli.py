"""Command line interface: ``lpnqrng <subcommand> ...``.

Every subcommand accepts ``--seed``, ``--config FILE.json`` and ``--out DIR``.
Keys in the JSON config override the subcommand's defaults (use the long
option names with dashes replaced by underscores); explicit command line
options win over the config.  Exit status is 0 on success, the stage code
from :data:`lpnqrng.pipeline.STAGE_EXIT_CODES` on a failing stage, and the
``test`` code when a battery does not pass.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from . import io as qio
from .dsp import BandSpec, apply_filter, design_bandpass, downsample, flatness_bandwidth, measure_3db_bandwidth
from .dsp import power_spectrum
from .entropy import AdcSpec, conditional_min_entropy, estimate_variances, min_entropy_from_variances, quantize
from .exceptions import EntropyDeficitError, ParameterError, QrngError, StageError
from .extractor import BitStream, ToeplitzConfig, codes_to_bits, parse_dimensions, plan_extraction, stream_extract
from .phasesim import LaserSpec, SimGrid, electrical_noise, simulate_dual, simulate_single, derive_seed
from .pipeline import (
    STAGE_EXIT_CODES,
    ScenarioConfig,
    reproduce_figure,
    regenerate,
    run_scenario,
    sweep_delay_rate,
)
from .randtest import BatteryConfig, run_battery

log = logging.getLogger("lpnqrng")


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _print(obj):
    print(json.dumps(obj, indent=2, default=qio._jsonable))


def cmd_simulate(args):
    grid = SimGrid.from_rate(args.rate, args.samples, derive_seed(args.seed, 1))
    if args.scheme == "single":
        if args.delay is None:
            raise ParameterError("--delay is required for the single-laser scheme")
        laser = LaserSpec.from_coherence_time(args.coherence_time) if args.coherence_time else LaserSpec(args.linewidth)
        m = args.delay * args.rate
        if abs(m - round(m)) > 1e-6 or round(m) < 1:
            raise ParameterError("--delay must be a positive multiple of the sample period")
        wave = simulate_single(laser, grid, int(round(m)), args.amplitude)
    else:
        l2 = args.linewidth2 if args.linewidth2 is not None else args.linewidth
        wave = simulate_dual(LaserSpec(args.linewidth), LaserSpec(l2), grid, args.beat, args.amplitude)
    if args.sigma_e > 0:
        z = electrical_noise(len(wave), args.rate, args.sigma_e, derive_seed(args.seed, 2))
        wave = wave.replace(wave.samples + z.samples)
    path = _out_path(args, args.name + ".wf")
    qio.save_waveform(wave, path)
    if args.csv:
        qio.waveform_to_csv(wave, _out_path(args, args.name + ".csv"), max_rows=args.csv_rows)
    if args.noise_record:
        noise = electrical_noise(len(wave), args.rate, args.sigma_e, derive_seed(args.seed, 3))
        qio.save_waveform(noise, _out_path(args, args.name + "_noise.wf"))
    _print({"waveform": path, "samples": len(wave), "std_volts": float(np.std(wave.samples))})
    return 0


def cmd_spectrum(args):
    wave = qio.load_waveform(args.input)
    spec = power_spectrum(wave, args.segment, window=args.window)
    path = _out_path(args, args.name + ".csv")
    spec.to_csv(path)
    out = {"spectrum": path, "segments": spec.n_segments, "parseval_ratio": spec.parseval_ratio}
    if args.bandwidth == "peak":
        out["bandwidth_hz"] = measure_3db_bandwidth(spec, args.smooth)
    elif args.bandwidth == "flatness":
        out["bandwidth_hz"] = flatness_bandwidth(spec)
    _print(out)
    return 0


def cmd_filter(args):
    wave = qio.load_waveform(args.input)
    band = BandSpec(args.f_low, args.f_high, args.atten, args.ripple, args.transition)
    filt = design_bandpass(band, wave.sample_rate_hz)
    filt.to_json(_out_path(args, args.name + "_filter.json"))
    out = downsample(apply_filter(wave, filt), args.decimate)
    path = _out_path(args, args.name + ".wf")
    qio.save_waveform(out, path)
    _print({"waveform": path, "order": filt.order, "rate_hz": out.sample_rate_hz, "compliance": filt.compliance()})
    return 0


def cmd_entropy(args):
    spec = AdcSpec.from_full_range(args.bits, args.full_range)
    if args.raw:
        tr = quantize(qio.load_waveform(args.raw), spec)
        tn = quantize(qio.load_waveform(args.noise), spec)
        sm2, se2, _ = estimate_variances(tr, tn)
        rep = conditional_min_entropy(np.sqrt(sm2), np.sqrt(se2), spec, k_sigma=args.k_sigma)
    elif args.sigma_m_sq is not None and args.sigma_e_sq is not None:
        rep = min_entropy_from_variances(args.sigma_m_sq, args.sigma_e_sq, spec, k_sigma=args.k_sigma)
    else:
        raise ParameterError("give --raw and --noise waveforms or --sigma-m-sq and --sigma-e-sq")
    rep.to_json(_out_path(args, args.name + ".json"))
    print(rep.summary())
    return 0


def cmd_extract(args):
    if args.dims:
        m, n = parse_dimensions(args.dims, args.orientation)
    elif args.m and args.n:
        m, n = args.m, args.n
    else:
        raise ParameterError("give --dims or both --m and --n")
    conf = ToeplitzConfig.from_seed_file(m, n, args.seed_file) if args.seed_file else ToeplitzConfig.random(m, n, args.seed)
    if args.input.endswith(".wf"):
        spec = AdcSpec.from_full_range(args.bits, args.full_range)
        stream = codes_to_bits(quantize(qio.load_waveform(args.input), spec))
    else:
        stream = BitStream.load(args.input)
    if args.h_min is not None:
        plan = plan_extraction(args.h_min, args.bits, n, args.eps, args.plain_ratio)
        if not plan.admits(m):
            raise StageError("plan", EntropyDeficitError(f"m = {m} exceeds the admissible {plan.block_out_bits}"))
    bits, rep = stream_extract(stream, conf, n_jobs=args.jobs)
    path = _out_path(args, args.name + ".bin")
    bits.metadata.update({"m": m, "n": n, "seed_sha256": conf.seed_hash})
    bits.save(path)
    _print({"bits": path, "output_bits": bits.bit_count, "throughput": rep.to_dict()})
    return 0


def cmd_test(args):
    stream = BitStream.load(args.input)
    report = run_battery(stream, BatteryConfig(args.alpha, args.block_len, args.max_lag))
    report.to_json(_out_path(args, args.name + ".json"))
    for r in report.results:
        print(f"{r.name:20s} {r.status:15s} p={r.p_value:.4g}")
    print("battery:", "PASS" if report.passed else "FAIL")
    return 0 if report.passed else STAGE_EXIT_CODES["test"]


def cmd_sweep(args):
    adc = AdcSpec.from_full_range(args.bits, args.full_range)
    res = sweep_delay_rate(
        args.coherence_time, args.delays, args.rates, adc, args.sigma_e, args.samples, args.amplitude, args.seed
    )
    res.to_csv(_out_path(args, args.name + ".csv"))
    best = res.best
    _print({"points": len(res.points), "valid": len(res.valid_points), "best": None if best is None else best.__dict__})
    return 0


def cmd_figure(args):
    kwargs = {"seed": args.seed}
    if args.samples:
        kwargs["n_samples"] = args.samples
    res = reproduce_figure(args.fig_id, os.path.join(args.out, f"fig{args.fig_id}"), **kwargs)
    for c in res.checks:
        print(c.line())
    return 0 if res.passed else 1


def cmd_run(args):
    cfg = ScenarioConfig.from_json(args.scenario) if args.scenario else ScenarioConfig()
    if args.seed_given:
        cfg.seed = args.seed
    res = run_scenario(cfg, args.out)
    _print(res.summary())
    return 0 if res.tests.passed else STAGE_EXIT_CODES["test"]


def cmd_regenerate(args):
    diff = regenerate(args.provenance, args.out)
    _print({"identical": not diff, "mismatched_files": diff})
    return 0 if not diff else 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--config", help="JSON file with option defaults")
    common.add_argument("--out", default=None, help="output directory (default .)")
    common.add_argument("--name", default=None, help="base name of the output files")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lpnqrng", description="Laser phase-noise QRNG simulator and post-processing chain")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    p.subcommands = sub.choices

    s = sub.add_parser("simulate", parents=[common], help="simulate a raw detector trace")
    s.add_argument("--scheme", choices=["single", "dual"], default="dual")
    s.add_argument("--linewidth", type=float, default=1e5, help="laser linewidth in Hz")
    s.add_argument("--linewidth2", type=float, default=None)
    s.add_argument("--coherence-time", type=float, default=None, help="single scheme, overrides --linewidth")
    s.add_argument("--beat", type=float, default=1.9e9)
    s.add_argument("--delay", type=float, default=None, help="delay in seconds (single scheme)")
    s.add_argument("--rate", type=float, default=5e9)
    s.add_argument("--samples", type=int, default=10**6)
    s.add_argument("--amplitude", type=float, default=1.0)
    s.add_argument("--sigma-e", type=float, default=0.0)
    s.add_argument("--noise-record", action="store_true", help="also write a noise-only trace")
    s.add_argument("--csv", action="store_true")
    s.add_argument("--csv-rows", type=int, default=10000)
    s.set_defaults(func=cmd_simulate, default_name="waveform")

    s = sub.add_parser("spectrum", parents=[common], help="averaged power spectrum of a waveform")
    s.add_argument("input")
    s.add_argument("--segment", type=int, default=1 << 16)
    s.add_argument("--window", choices=["rect", "hann"], default="rect")
    s.add_argument("--bandwidth", choices=["none", "peak", "flatness"], default="none")
    s.add_argument("--smooth", type=int, default=1)
    s.set_defaults(func=cmd_spectrum, default_name="spectrum")

    s = sub.add_parser("filter", parents=[common], help="band-pass filter and decimate a waveform")
    s.add_argument("input")
    s.add_argument("--f-low", type=float, required=False, default=4e9)
    s.add_argument("--f-high", type=float, required=False, default=24e9)
    s.add_argument("--atten", type=float, default=40.0)
    s.add_argument("--ripple", type=float, default=1.0)
    s.add_argument("--transition", type=float, default=None)
    s.add_argument("--decimate", type=int, default=1)
    s.set_defaults(func=cmd_filter, default_name="filtered")

    s = sub.add_parser("entropy", parents=[common], help="conditional min-entropy per sample")
    s.add_argument("--raw")
    s.add_argument("--noise")
    s.add_argument("--sigma-m-sq", type=float)
    s.add_argument("--sigma-e-sq", type=float)
    s.add_argument("--bits", type=int, default=8)
    s.add_argument("--full-range", type=float, default=0.02, help="ADC full range 2R in volts")
    s.add_argument("--k-sigma", type=float, default=10.0)
    s.set_defaults(func=cmd_entropy, default_name="entropy")

    s = sub.add_parser("extract", parents=[common], help="Toeplitz hashing of ADC codes or a bit stream")
    s.add_argument("input", help=".wf waveform (quantized with --bits/--full-range) or a bit file")
    s.add_argument("--dims", help="matrix dimensions such as 4096x2800")
    s.add_argument("--orientation", choices=["input-output", "output-input"], default="input-output")
    s.add_argument("--m", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--seed-file")
    s.add_argument("--bits", type=int, default=8)
    s.add_argument("--full-range", type=float, default=0.02)
    s.add_argument("--h-min", type=float, default=None, help="check m against the leftover-hash plan")
    s.add_argument("--eps", type=float, default=2.0**-100)
    s.add_argument("--plain-ratio", action="store_true", help="omit the 2 log2(1/eps) slack")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_extract, default_name="bits")

    s = sub.add_parser("test", parents=[common], help="run the randomness battery on a bit file")
    s.add_argument("input")
    s.add_argument("--alpha", type=float, default=0.01)
    s.add_argument("--block-len", type=int, default=128)
    s.add_argument("--max-lag", type=int, default=16)
    s.set_defaults(func=cmd_test, default_name="tests")

    s = sub.add_parser("sweep", parents=[common], help="H_min x bandwidth over a delay x rate grid")
    s.add_argument("--coherence-time", type=float, default=10e-9)
    s.add_argument("--delays", type=float, nargs="+", default=[200e-12, 600e-12, 1e-9])
    s.add_argument("--rates", type=float, nargs="+", default=[5e9])
    s.add_argument("--samples", type=int, default=10**6)
    s.add_argument("--amplitude", type=float, default=1.0)
    s.add_argument("--sigma-e", type=float, default=0.062)
    s.add_argument("--bits", type=int, default=12)
    s.add_argument("--full-range", type=float, default=8.0)
    s.set_defaults(func=cmd_sweep, default_name="sweep")

    s = sub.add_parser("figure", parents=[common], help="reproduce a figure scenario and its checks")
    s.add_argument("fig_id", choices=["2", "3", "4-sim", "6-sim", "7-sim"])
    s.add_argument("--samples", type=int, default=None)
    s.set_defaults(func=cmd_figure, default_name="figure")

    s = sub.add_parser("run", parents=[common], help="run a full scenario from a JSON file")
    s.add_argument("scenario", nargs="?", help="ScenarioConfig JSON")
    s.set_defaults(func=cmd_run, default_name="scenario")

    s = sub.add_parser("regenerate", parents=[common], help="re-run a scenario from provenance.json")
    s.add_argument("provenance")
    s.set_defaults(func=cmd_regenerate, default_name="regenerated")
    return p


def _apply_config(parser, args, argv):
    """Reparse with the ``--config`` values installed as subcommand defaults."""
    if not args.config:
        return args
    with open(args.config) as fh:
        conf = {k.replace("-", "_"): v for k, v in json.load(fh).items()}
    unknown = [k for k in conf if not hasattr(args, k)]
    if unknown:
        raise ParameterError(f"config keys {unknown} are not options of {args.command!r}")
    parser.subcommands[args.command].set_defaults(**conf)
    return parser.parse_args(argv)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args = _apply_config(parser, args, argv)
        args.seed_given = args.seed is not None
        args.seed = 0 if args.seed is None else args.seed
        args.out = args.out or "."
        args.name = args.name or args.default_name
        return args.func(args)
    except StageError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (QrngError, ValueError, OSError) as exc:
        stage = {"simulate": "simulate", "spectrum": "spectrum", "filter": "filter", "entropy": "entropy",
                 "extract": "extract", "test": "test", "sweep": "simulate", "figure": "simulate"}.get(args.command)
        code = STAGE_EXIT_CODES["io"] if isinstance(exc, OSError) else (
            STAGE_EXIT_CODES["config"] if isinstance(exc, ParameterError) else STAGE_EXIT_CODES.get(stage, 1))
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
