import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from pqiga.features import (
    FeatureScaler,
    MfccMatrix,
    StftConfig,
    istft,
    mel_band_edges,
    mfcc,
    pad_to_even,
    scale_mfcc,
    stft,
    to_mono,
)

CFG = StftConfig()


def rel_err_db(x, y):
    return 10 * math.log10(np.sum((x - y) ** 2) / np.sum(x**2) + 1e-300)


@pytest.mark.parametrize("kwargs", [
    {"frame_len": 1000}, {"hop": 0}, {"hop": 2048}, {"sample_rate": 0}, {"window": "hamming"},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        StftConfig(**kwargs)


def test_zero_signal_gives_zero_spectrogram():
    spec = stft(np.zeros(4000), CFG)
    assert spec.frames.shape[1] == 513
    assert not np.any(spec.frames)
    assert not np.any(istft(spec))


def test_too_short_signal_rejected():
    with pytest.raises(ValueError):
        stft(np.zeros(1023), CFG)


def test_sine_at_bin_center_is_concentrated():
    k0 = 37
    n = np.arange(16000)
    x = np.sin(2 * np.pi * k0 * n / CFG.frame_len)
    frames = stft(x, CFG).frames[2:-2]  # frames fully inside the signal
    power = np.abs(frames) ** 2
    near = power[:, k0 - 1 : k0 + 2].sum(axis=1)
    assert np.all(near / power.sum(axis=1) > 0.99)
    assert np.all(np.argmax(power, axis=1) == k0)


def test_parseval_per_frame():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(5000)
    spec = stft(x, CFG)
    n = CFG.frame_len
    padded = np.zeros((spec.frames.shape[0] - 1) * CFG.hop + n)
    padded[n // 2 : n // 2 + x.size] = x
    win = CFG.get_window()
    for t in range(spec.frames.shape[0]):
        seg = padded[t * CFG.hop : t * CFG.hop + n] * win
        p = np.abs(spec.frames[t]) ** 2
        freq_energy = (p[0] + p[-1] + 2 * p[1:-1].sum()) / n
        assert freq_energy == pytest.approx(np.sum(seg**2), rel=1e-6)


def test_round_trip_twenty_signals():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.standard_normal(int(rng.integers(1024, 20000)))
        y = istft(stft(x, CFG))
        assert y.shape == x.shape
        assert rel_err_db(x, y) < -60


def test_round_trip_other_cola_hops():
    x = np.random.default_rng(2).standard_normal(3000)
    for hop in (128, 256):
        cfg = StftConfig(frame_len=512, hop=hop)
        assert rel_err_db(x, istft(stft(x, cfg))) < -60


def test_non_cola_hop_rejected():
    cfg = StftConfig(frame_len=1024, hop=300)
    with pytest.raises(ValueError):
        istft(stft(np.ones(4096), cfg))


def test_istft_linearity():
    rng = np.random.default_rng(3)
    a, b = stft(rng.standard_normal(6000), CFG), stft(rng.standard_normal(6000), CFG)
    both = istft(a.with_frames(a.frames + b.frames))
    assert np.max(np.abs(both - istft(a) - istft(b))) < 1e-9


def test_stereo_downmix():
    x = np.stack([np.ones(10), 3 * np.ones(10)], axis=1)
    assert np.allclose(to_mono(x), 2.0)


def test_mel_band_edges_span_and_increase():
    e = mel_band_edges(16, 16000)
    assert e[0] == 0 and e[-1] == pytest.approx(8000)
    assert np.all(np.diff(e) > 0)
    assert e.size == 17


def test_mfcc_shape_and_determinism():
    x = np.random.default_rng(4).standard_normal(8000)
    a, b = mfcc(x, CFG), mfcc(x, CFG)
    assert a.frames.shape[1] == 13
    assert np.array_equal(a.frames, b.frames)
    assert np.all(np.isfinite(a.frames))


def test_mfcc_silence_frames_equal():
    m = mfcc(np.zeros(8000), CFG)
    assert np.all(m.frames == m.frames[0])
    assert m.frames[0, 0] == pytest.approx(math.log(1e-10) * math.sqrt(40))


def test_mfcc_amplitude_doubling_shifts_c0_only():
    x = np.random.default_rng(5).standard_normal(8000)
    a, b = mfcc(x, CFG).frames, mfcc(2 * x, CFG).frames
    shift = b[:, 0] - a[:, 0]
    assert np.allclose(shift, shift[0], atol=1e-6)
    assert shift[0] == pytest.approx(math.log(4) * math.sqrt(40))
    assert np.max(np.abs(b[:, 1:] - a[:, 1:])) < 1e-6


def test_mfcc_white_noise_variance_decreases():
    rng = np.random.default_rng(6)
    coeffs = np.vstack([mfcc(rng.standard_normal(4096), CFG).frames for _ in range(100)])
    var = coeffs[:, 1:].var(axis=0)
    rho = scipy.stats.spearmanr(np.arange(var.size), var)[0]
    assert rho < 0


@pytest.mark.parametrize("n_mels,n_mfcc", [(40, 41), (40, 0), (600, 13)])
def test_mfcc_rejects_bad_counts(n_mels, n_mfcc):
    with pytest.raises(ValueError):
        mfcc(np.zeros(4096), CFG, n_mels, n_mfcc)


def test_scale_mfcc_endpoints():
    scaler = FeatureScaler(np.array([-2.0, 0.0]), np.array([4.0, 0.0]))
    m = np.array([[-2.0, 0.0], [4.0, 5.0], [1.0, -1.0]])
    out = scale_mfcc(m, scaler)
    assert out[0, 0] == 0.0
    assert out[1, 0] == pytest.approx(math.pi)
    assert out[2, 0] == pytest.approx(math.pi / 2)
    # degenerate coefficient maps to pi/2 regardless of value
    assert np.all(out[:, 1] == math.pi / 2)


def test_scaler_rejects_inverted_range():
    with pytest.raises(ValueError):
        FeatureScaler(np.array([1.0]), np.array([0.0]))


def test_scaler_fit_global_min_max():
    a = MfccMatrix(np.array([[0.0, 5.0], [2.0, 1.0]]), 40, 2)
    b = MfccMatrix(np.array([[-1.0, 3.0]]), 40, 2)
    s = FeatureScaler.fit([a, b])
    assert np.array_equal(s.min, [-1.0, 1.0]) and np.array_equal(s.max, [2.0, 5.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3),
       st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
       st.lists(st.floats(0, 1e3), min_size=3, max_size=3))
def test_scale_mfcc_always_in_range(values, lo, span):
    lo = np.array(lo)
    out = scale_mfcc(np.array([values]), FeatureScaler(lo, lo + np.array(span)))
    assert np.all((out >= 0) & (out <= math.pi))


def test_pad_to_even():
    assert pad_to_even(np.ones((2, 13))).shape == (2, 14)
    assert pad_to_even(np.ones(4)).shape == (4,)
    assert pad_to_even([1.0, 2.0, 3.0])[-1] == 0.0
