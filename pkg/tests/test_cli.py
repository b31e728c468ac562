import json

import pytest

from lpnqrng.cli import main
from lpnqrng.extractor import BitStream
from lpnqrng.pipeline import STAGE_EXIT_CODES


def test_full_cli_chain(tmp_path, capsys):
    d = str(tmp_path)
    assert main(["simulate", "--rate", "80e9", "--samples", "300000", "--amplitude", "0.49",
                 "--sigma-e", "5.6e-4", "--noise-record", "--out", d]) == 0
    assert main(["spectrum", f"{d}/waveform.wf", "--out", d, "--segment", "4096"]) == 0
    assert main(["filter", f"{d}/waveform.wf", "--atten", "100", "--decimate", "2", "--out", d]) == 0
    assert main(["filter", f"{d}/waveform_noise.wf", "--atten", "100", "--decimate", "2",
                 "--out", d, "--name", "fnoise"]) == 0
    assert main(["entropy", "--raw", f"{d}/filtered.wf", "--noise", f"{d}/fnoise.wf", "--out", d]) == 0
    rep = json.loads((tmp_path / "entropy.json").read_text())
    assert 5.0 < rep["h_min_bits"] < 6.0
    assert main(["extract", f"{d}/filtered.wf", "--dims", "4096x2800", "--h-min", str(rep["h_min_bits"]),
                 "--eps", str(2.0**-16), "--out", d]) == 0
    assert BitStream.load(tmp_path / "bits.bin").bit_count % 2800 == 0
    assert main(["test", f"{d}/bits.bin", "--out", d]) == 0
    assert "battery: PASS" in capsys.readouterr().out


def test_battery_failure_exit_code(tmp_path):
    BitStream.from_bits([0] * 5000).save(tmp_path / "z.bin")
    assert main(["test", str(tmp_path / "z.bin"), "--out", str(tmp_path)]) == STAGE_EXIT_CODES["test"]


def test_distinct_exit_codes(tmp_path):
    d = str(tmp_path)
    assert main(["simulate", "--scheme", "single", "--out", d]) == STAGE_EXIT_CODES["config"]
    assert main(["entropy", "--sigma-m-sq", "1e-4", "--sigma-e-sq", "1e-3", "--out", d]) == STAGE_EXIT_CODES["entropy"]
    assert main(["spectrum", f"{d}/missing.wf", "--out", d]) == STAGE_EXIT_CODES["io"]
    assert len(set(STAGE_EXIT_CODES.values())) == len(STAGE_EXIT_CODES)


def test_config_file_supplies_defaults(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"samples": 1234, "scheme": "single", "delay": 2e-10}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    from lpnqrng.io import load_waveform

    assert len(load_waveform(tmp_path / "waveform.wf")) == 1234
    assert main(["simulate", "--config", str(cfg), "--samples", "99", "--out", str(tmp_path)]) == 0
    assert len(load_waveform(tmp_path / "waveform.wf")) == 99
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == STAGE_EXIT_CODES["config"]


def test_run_and_regenerate(tmp_path):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps({"n_samples": 100000, "sigma_e_volts": 0.05, "adc_full_range_volts": 2.6,
                                "band": {"f_low_hz": 0.0, "f_high_hz": 1.5e9, "stopband_atten_db": 60.0},
                                "extractor": {"block_in_bits": 1024, "eps": 2.0**-20}}))
    out = tmp_path / "run"
    assert main(["run", str(scen), "--out", str(out), "--seed", "5"]) == 0
    assert json.loads((out / "config.json").read_text())["seed"] == 5
    assert main(["regenerate", str(out / "provenance.json"), "--out", str(tmp_path / "again")]) == 0


def test_sweep_and_figure_commands(tmp_path, capsys):
    assert main(["sweep", "--samples", "50000", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "sweep.csv").exists()
    code = main(["figure", "4-sim", "--samples", "1000000", "--out", str(tmp_path)])
    assert "[PASS]" in capsys.readouterr().out
    assert code in (0, 1)


def test_help_and_unknown(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    with pytest.raises(SystemExit):
        main(["frobnicate"])
