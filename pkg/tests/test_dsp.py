import numpy as np
import pytest

from hopsim import dsp
from hopsim.channel import apply_isi
from hopsim.errors import ConfigError, TrainingDivergedError, UsageError
from hopsim.rng import seeded_generator


def link(isi=(1.0,), n=6000, snr=None, seed=0):
    rng = seeded_generator(seed, "dsp-test")
    levels = dsp.pam_levels(7)
    sym = levels[rng.integers(0, 7, n)]
    rx = apply_isi(np.repeat(sym, 2), isi)
    if snr is not None:
        rx = rx + np.sqrt(np.mean(rx**2)) * 10 ** (-snr / 20) * rng.standard_normal(rx.size)
    return rx, sym


def test_identity_channel_converges_to_spike():
    rx, sym = link(n=10_000)
    st = dsp.lms_train(rx, sym)
    c = st.taps.size // 2
    assert st.taps[c] >= 0.99
    assert np.sum(np.delete(st.taps, c) ** 2) <= 1e-3


def test_identity_equalizer_is_decimation():
    rx, sym = link(n=10_000)
    st = dsp.lms_train(rx, sym)
    assert np.allclose(dsp.equalize(st, rx)[:100], rx[::2][:100], atol=0.02)


def test_mu_zero_keeps_taps():
    rx, sym = link(isi=(1, 0.4, 0.2), n=500)
    init = dsp.EqualizerState.center_spike()
    st = dsp.lms_train(rx, sym, mu=0.0)
    assert np.array_equal(st.taps, init.taps)


def test_isi_demo_improves():
    r = dsp.eq_demo()
    assert r.mse_ratio <= 0.1
    assert r.post_ser < r.pre_ser


def test_equalize_contract():
    with pytest.raises(UsageError):
        dsp.equalize(dsp.EqualizerState.center_spike(), np.zeros(10))
    rx, sym = link(n=300)
    st = dsp.lms_train(rx, sym)
    assert len(dsp.equalize(st, rx)) == len(rx) // 2
    assert len(dsp.equalize(st, rx[:-1])) == (len(rx) - 1) // 2
    with pytest.raises(ConfigError):
        dsp.EqualizerState(np.zeros(4))


def test_divergence_detected():
    rx, sym = link(isi=(1, 0.4, 0.2), n=3000)
    with pytest.raises(TrainingDivergedError, match="running MSE"):
        dsp.lms_train(rx, sym, mu=0.05)


def test_training_data_mse_consistent():
    rx, sym = link(isi=(1, 0.4, 0.2), n=20_000, snr=30, seed=2)
    st = dsp.lms_train(rx, sym)
    mse = np.mean((dsp.equalize(st, rx) - sym) ** 2)
    assert mse <= st.final_mse * 1.1


def test_long_run_mse_does_not_increase():
    for seed in range(3):
        rx, sym = link(isi=(1, 0.4, 0.2), n=20_000, snr=30, seed=seed)
        curve = dsp.lms_train(rx, sym).mse_curve
        assert curve[-2000:].mean() <= curve[:2000].mean()


def test_lowpass_properties():
    assert np.allclose(dsp.lowpass_fir(np.ones(200), 0.4), 1.0, atol=1e-6)
    h = dsp.lowpass_taps(0.25)
    assert np.allclose(h, h[::-1])
    alt = np.cos(np.pi * np.arange(400))
    y = dsp.lowpass_fir(alt, 0.25)[100:300]
    assert 20 * np.log10(np.max(np.abs(y))) <= -20
    with pytest.raises(ConfigError):
        dsp.lowpass_fir(np.ones(10), 1.5)


def test_filters_linear():
    rng = seeded_generator(1, "lin")
    x, y = rng.normal(size=300), rng.normal(size=300)
    a, b = 1.7, -0.3
    assert np.allclose(dsp.lowpass_fir(a * x + b * y, 0.3), a * dsp.lowpass_fir(x, 0.3) + b * dsp.lowpass_fir(y, 0.3),
                       atol=1e-9)
    st = dsp.lms_train(*link(n=500))
    assert np.allclose(dsp.equalize(st, a * x + b * y), a * dsp.equalize(st, x) + b * dsp.equalize(st, y),
                       atol=1e-9)


def test_resample_length():
    assert len(dsp.resample(np.ones(100), 3, 2)) == 150


def test_mse_curve_rows():
    rows = dsp.mse_curve_rows(np.ones(250), block=100)
    assert rows == [(100, 1.0), (200, 1.0)]
