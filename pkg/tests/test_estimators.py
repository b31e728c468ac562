import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from lpnqrng.estimators import AdcQuantizer, BandPassFilter, Decimator, MinEntropyEstimator, ToeplitzExtractor
from lpnqrng.extractor import ToeplitzConfig, extract_blocks
from lpnqrng.phasesim import LaserSpec, SimGrid, simulate_dual


@pytest.fixture(scope="module")
def trace():
    w = simulate_dual(LaserSpec(1e5), LaserSpec(1e5), SimGrid.from_rate(80e9, 1 << 18, 0), 1.9e9, 0.5)
    return w.samples + 5e-4 * np.random.default_rng(0).standard_normal(len(w))


def test_params_roundtrip():
    est = BandPassFilter(1e9, 2e9, sample_rate_hz=10e9)
    assert est.get_params()["f_low_hz"] == 1e9
    c = clone(est).set_params(stopband_atten_db=60.0)
    assert c.stopband_atten_db == 60.0 and est.stopband_atten_db == 40.0


def test_chain_composes(trace):
    chain = make_pipeline(
        BandPassFilter(4e9, 24e9, sample_rate_hz=80e9, stopband_atten_db=100.0),
        Decimator(2),
        AdcQuantizer(n_bits=8, full_range_volts=0.02),
        ToeplitzExtractor(m=2800, n=4096, word_bits=8),
    )
    out = chain.fit_transform(trace)
    filt = chain.steps[0][1]
    n_codes = (trace.size - filt.n_transient_ + 1) // 2
    assert out.size == 2800 * (n_codes * 8 // 4096)
    assert set(np.unique(out)) <= {0, 1}


def test_column_input_keeps_layout(trace):
    y = Decimator(4).fit_transform(trace[:100].reshape(-1, 1))
    assert y.shape == (25, 1)


def test_quantizer_outputs():
    q = AdcQuantizer(8, 0.02).fit()
    assert q.transform(np.array([0.0, 1.0])).tolist() == [0, 127]
    v = AdcQuantizer(8, 0.02, output="volts").fit().transform(np.array([0.0]))
    assert v.tolist() == [0.0]
    with pytest.raises(ValueError):
        AdcQuantizer(output="bits").fit()


def test_min_entropy_estimator():
    rng = np.random.default_rng(1)
    raw = rng.normal(0, np.sqrt(2.272e-6), 10**6)
    noise = rng.normal(0, np.sqrt(1.511e-7), 10**6)
    est = MinEntropyEstimator(8, 0.02).fit(raw, noise=noise)
    assert est.score() == pytest.approx(5.546, abs=0.02)
    fixed = MinEntropyEstimator(8, 0.02, sigma_e_volts=np.sqrt(1.511e-7)).fit(raw)
    assert fixed.h_min_ == pytest.approx(5.546, abs=0.02)
    with pytest.raises(ValueError):
        MinEntropyEstimator().fit(raw)


def test_extractor_matches_functional_api():
    bits = np.random.default_rng(2).integers(0, 2, 64 * 5, dtype=np.uint8)
    est = ToeplitzExtractor(m=40, n=64, seed=9).fit()
    ref = extract_blocks(bits.reshape(5, 64), ToeplitzConfig.random(40, 64, 9)).reshape(-1)
    np.testing.assert_array_equal(est.transform(bits), ref)


def test_unfitted_raises():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        Decimator(2).transform(np.zeros(4))
