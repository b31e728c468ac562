import csv
import json

import pytest

from lpnqrng import pipeline
from lpnqrng.exceptions import ParameterError, StageError
from lpnqrng.pipeline import (
    STAGE_EXIT_CODES,
    ScenarioConfig,
    SweepPoint,
    SweepResult,
    regenerate,
    reproduce_figure,
    run_scenario,
    sweep_delay_rate,
)
from lpnqrng.entropy import AdcSpec


def small_config(**kw):
    base = dict(
        n_samples=200_000,
        sigma_e_volts=0.05,
        adc_full_range_volts=2.6,
        band={"f_low_hz": 0.0, "f_high_hz": 1.5e9, "stopband_atten_db": 60.0},
        extractor={"block_in_bits": 1024, "eps": 2.0**-20},
        seed=3,
    )
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture(scope="module")
def scenario_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenario")
    res = run_scenario(small_config(), out)
    return out, res


def test_degenerate_config_rejected():
    with pytest.raises(StageError) as exc:
        run_scenario(small_config(linewidth_hz=0.0, sigma_e_volts=0.0))
    assert exc.value.stage == "config"
    assert exc.value.exit_code == STAGE_EXIT_CODES["config"]


@pytest.mark.parametrize(
    "kw",
    [
        {"scheme": "single", "delay_s": 3.3e-10},
        {"scheme": "triple"},
        {"band": {"f_low_hz": 1e9, "f_high_hz": 3e9}},
        {"decimation": 0},
        {"target_sigma_m_sq": 1e-3},
    ],
)
def test_inconsistent_configs(kw):
    with pytest.raises(ParameterError):
        small_config(**kw).validate()


def test_config_json_roundtrip(tmp_path):
    cfg = small_config(name="x")
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert ScenarioConfig.from_json(tmp_path / "c.json") == cfg
    with pytest.raises(ParameterError):
        ScenarioConfig.from_dict({"nope": 1})


def test_scenario_artifacts(scenario_dir):
    out, res = scenario_dir
    names = {p.name for p in out.iterdir()}
    for f in [
        "config.json",
        "spectrum_raw.csv",
        "histogram_codes.csv",
        "histogram_analog.csv",
        "entropy.json",
        "bits.bin",
        "bits.bin.json",
        "tests.json",
        "filter.json",
        "provenance.json",
    ]:
        assert f in names
    prov = json.loads((out / "provenance.json").read_text())
    assert set(prov) >= {"config", "derived_seeds", "versions", "files"}
    assert res.bits.bit_count > 0 and res.tests.passed
    with open(out / "histogram_analog.csv") as fh:
        assert sum(1 for _ in csv.reader(fh)) == 257


def test_entropy_uses_extraction_trace(scenario_dir):
    _, res = scenario_dir
    assert res.codes.codes.size * res.config.adc_bits // 1024 * res.plan.block_out_bits == res.bits.bit_count


def test_scenario_spectra_satisfy_parseval(scenario_dir):
    _, res = scenario_dir
    assert all(abs(v - 1) <= 0.01 for v in res.summary()["parseval"].values())


def test_regenerate_is_bit_identical(scenario_dir, tmp_path):
    out, _ = scenario_dir
    assert regenerate(out / "provenance.json", tmp_path / "again") == []


def test_different_seed_changes_output(scenario_dir):
    _, res = scenario_dir
    other = run_scenario(small_config(seed=4))
    assert other.bits.sha256() != res.bits.sha256()


def test_stage_tag_on_plan_failure():
    with pytest.raises(StageError) as exc:
        run_scenario(small_config(extractor={"block_in_bits": 1024, "m": 1024}))
    assert exc.value.stage == "plan"
    assert exc.value.exit_code == STAGE_EXIT_CODES["plan"]


def test_calibration_hits_target_variances():
    cfg = small_config(
        target_sigma_m_sq=1.792e-3,
        target_sigma_e_sq=1.075e-4,
        adc_bits=14,
        adc_full_range_volts=0.8,
        decimation=5,
        n_samples=500_000,
    )
    res = run_scenario(cfg)
    assert res.entropy.sigma_e_sq == pytest.approx(1.075e-4, rel=1e-3)
    assert res.entropy.sigma_m_sq == pytest.approx(1.792e-3, rel=0.02)


def test_sweep_single_point_and_fom():
    adc = AdcSpec.from_full_range(12, 8.0)
    res = sweep_delay_rate(10e-9, [200e-12], [5e9], adc, 0.06, n_samples=100_000)
    assert res.best is res.points[0]
    p = res.points[0]
    assert p.figure_of_merit == p.h_min_bits * p.bw_hz


def test_sweep_rejects_incommensurate_grid():
    with pytest.raises(ParameterError):
        sweep_delay_rate(10e-9, [250e-12], [5e9], AdcSpec(8, 1.0), 0.06, n_samples=10_000)
    with pytest.raises(ParameterError):
        sweep_delay_rate(10e-9, [], [5e9], AdcSpec(8, 1.0), 0.06)


def test_sweep_marks_failed_points(monkeypatch):
    real = pipeline.simulate_single

    def flaky(laser, grid, m, amp):
        if m == 3:
            raise ParameterError("boom")
        return real(laser, grid, m, amp)

    monkeypatch.setattr(pipeline, "simulate_single", flaky)
    res = sweep_delay_rate(10e-9, [200e-12, 600e-12], [5e9], AdcSpec.from_full_range(12, 8.0), 0.06, 50_000)
    assert [p.valid for p in res.points] == [True, False]
    assert "boom" in res.points[1].error
    assert res.best is res.points[0]


def test_sweep_tie_break():
    pts = [
        SweepPoint(1e-9, 5e9, True, 2.0, 1.0),
        SweepPoint(2e-10, 5e9, True, 1.0, 2.0),
        SweepPoint(2e-10, 1e10, True, 2.0, 1.0),
        SweepPoint(1e-10, 1e10, False),
    ]
    assert SweepResult(pts).best is pts[2]


def test_unsupported_figure():
    with pytest.raises(ParameterError):
        reproduce_figure("5")


def test_figure_2_bundle(tmp_path):
    res = reproduce_figure("2", tmp_path, n_samples=10**6)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert sum(n.startswith("fig2_hist_") for n in names) == 3
    assert sum(n.startswith("fig2_spectrum_") for n in names) == 3
    assert res.check("raw std increases with delay").passed


def test_figure_7_bundle(tmp_path):
    res = reproduce_figure("7-sim", tmp_path, n_samples=10**6)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"spectrum_raw.csv", "fig7_spectrum_post_raw.csv", "fig7_autocorrelation.csv"} <= names
    with open(tmp_path / "fig7_autocorrelation.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["lag", "rho_80GSa", "rho_40GSa", "rho_20GSa"] and len(rows) == 11
    assert res.check("1.9 GHz tone attenuation").passed


def test_rate_identities():
    r = pipeline.rate_identities()
    assert r["analog"]["bits_per_sample"] == 10
    assert r["digital"]["rate_bps"] == 218_750_000_000


def test_sweep_parallel_matches_serial():
    adc = AdcSpec.from_full_range(12, 8.0)
    args = (10e-9, [200e-12, 600e-12], [5e9, 10e9], adc, 0.06, 50_000)
    a = sweep_delay_rate(*args)
    b = sweep_delay_rate(*args, n_jobs=3)
    assert a.to_rows() == b.to_rows()
