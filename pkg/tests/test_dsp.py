import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scae import dsp
from scae.dsp import DegenerateStatsError, DspConfig, DspError
from scae.tensor import Xoshiro256

CFG = DspConfig()


def test_blackman_small_window():
    w = dsp.blackman_window(5)
    assert w[0] == 0.0 and w[-1] == 0.0
    assert w[2] == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(w, w[::-1])


def test_blackman_690_sum_matches_high_precision():
    mpmath.mp.dps = 40
    n = 690
    exact = mpmath.fsum(0.42 - 0.5 * mpmath.cos(2 * mpmath.pi * k / (n - 1))
                        + 0.08 * mpmath.cos(4 * mpmath.pi * k / (n - 1)) for k in range(n))
    assert float(np.sum(dsp.blackman_window(n))) == pytest.approx(float(exact), rel=1e-6)


def test_blackman_rejects_tiny():
    with pytest.raises(DspError):
        dsp.blackman_window(1)


def test_config_invariants():
    with pytest.raises(DspError):
        DspConfig(window_len=2048)
    with pytest.raises(DspError):
        DspConfig(fmax=9000)
    with pytest.raises(DspError):
        DspConfig(hop=0)
    with pytest.raises(DspError):
        DspConfig(n_mels=1)


def test_fingerprint_tracks_fields():
    assert CFG.fingerprint() == DspConfig().fingerprint()
    assert CFG.fingerprint() != DspConfig(hop=200).fingerprint()


def test_frame_count():
    assert dsp.n_frames(64000, CFG) == 254


def test_stft_shape_and_zero():
    spec = dsp.stft(np.zeros(64000), CFG)
    assert spec.shape == (513, 254)
    assert not np.any(spec)


def test_stft_sine_peak_bin():
    t = np.arange(16000) / 16000
    mag = np.abs(dsp.stft(np.sin(2 * np.pi * 1000 * t), CFG))
    assert np.all(mag.argmax(axis=0) == 64)


def test_stft_dc_bin_is_window_sum():
    mag = np.abs(dsp.stft(np.ones(5000), CFG))
    assert np.allclose(mag[0], dsp.blackman_window(690).sum(), rtol=1e-4)


def test_stft_matches_explicit_dft():
    x = Xoshiro256(1).normal(1500)
    w = dsp.blackman_window(690)
    frame = np.zeros(1024)
    frame[:690] = x[250:940] * w
    k = np.arange(513)[:, None]
    dft = (frame[None, :] * np.exp(-2j * np.pi * k * np.arange(1024) / 1024)).sum(axis=1)
    assert np.allclose(dsp.stft(x, CFG)[:, 1], dft, atol=1e-9)


def test_stft_linear():
    x = Xoshiro256(2).normal(4000)
    assert np.allclose(dsp.stft(3.5 * x, CFG), 3.5 * dsp.stft(x, CFG), rtol=1e-5, atol=1e-12)


def test_stft_too_short():
    with pytest.raises(DspError):
        dsp.stft(np.zeros(100), CFG)


def _interior_snr(x, y, margin):
    a, b = x[margin:-margin], y[margin:len(x) - margin]
    return 10 * np.log10(np.sum(a ** 2) / np.sum((a - b) ** 2))


def test_istft_roundtrip_white_noise():
    x = Xoshiro256(0).normal(16000)
    y = dsp.istft(dsp.stft(x, CFG), CFG)
    assert _interior_snr(x, y, 690) > 40


def test_istft_zero_and_single_frame():
    z = dsp.istft(np.zeros((513, 10), complex), CFG)
    assert not np.any(z)
    one = np.zeros((513, 1), complex)
    one[3, 0] = 5.0
    y = dsp.istft(one, CFG)
    assert len(y) == 690
    assert np.any(y[1:-1])


def test_istft_does_not_amplify_edges():
    rng = Xoshiro256(3)
    spec = np.exp(2j * np.pi * rng.random((513, 20)))
    y = dsp.istft(spec, CFG)
    # an inconsistent spectrogram gets divided by the lone window near the
    # ends; the normalizer floor caps that gain at about 1/sqrt(0.01)
    interior = np.abs(y[690:-690]).max()
    assert np.abs(y[:690]).max() <= 10 * interior
    assert np.abs(y[-690:]).max() <= 10 * interior


def test_istft_geometry_mismatch():
    with pytest.raises(DspError):
        dsp.istft(np.zeros((100, 4), complex), CFG)


def test_mel_scale_values():
    assert dsp.hz_to_mel(0) == 0
    assert dsp.hz_to_mel(700) == pytest.approx(781.17, abs=0.01)
    assert dsp.hz_to_mel(700) == pytest.approx(2595 * math.log10(2), rel=1e-15)
    assert dsp.hz_to_mel(8000) == pytest.approx(2840.03, abs=0.01)


def test_mel_scale_rejects_negative():
    with pytest.raises(DspError):
        dsp.hz_to_mel(-1.0)
    with pytest.raises(DspError):
        dsp.mel_to_hz(-1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 8000))
def test_mel_inverse(f):
    assert dsp.mel_to_hz(dsp.hz_to_mel(f)) == pytest.approx(f, rel=1e-6, abs=1e-9)


def test_mel_strictly_increasing():
    f = np.linspace(0, 8000, 10001)
    assert np.all(np.diff(dsp.hz_to_mel(f)) > 0)


def test_filterbank_geometry():
    fb = dsp.mel_filterbank(CFG)
    assert fb.shape == (128, 513)
    assert np.all(fb >= 0)
    assert np.all(fb.max(axis=1) == pytest.approx(1.0))
    pts = dsp.mel_points_hz(CFG)
    assert len(pts) == 130
    assert np.allclose(np.diff(dsp.hz_to_mel(pts)), dsp.hz_to_mel(8000) / 129)
    for row in fb:
        nz = np.flatnonzero(row)
        peak = row.argmax()
        assert np.all(np.diff(row[nz[0]:peak + 1]) >= 0)
        assert np.all(np.diff(row[peak:nz[-1] + 1]) <= 0)


def test_filterbank_too_many_mels():
    with pytest.raises(DspError):
        dsp.mel_filterbank(DspConfig(n_mels=400))


def _sine(f, n=64000, amp=0.5):
    return amp * np.sin(2 * np.pi * f * np.arange(n) / 16000)


def test_log_mel_shape_and_range():
    spec = dsp.log_mel_spectrogram(_sine(440))
    assert spec.values.shape == spec.db.shape == (128, 256)
    assert spec.values.min() >= 0 and spec.values.max() <= 1
    assert np.allclose(spec.denormalize(), spec.db, atol=1e-4)
    assert np.all(spec.db[:, 254:] == CFG.db_floor)


def test_log_mel_silence():
    spec = dsp.log_mel_spectrogram(np.zeros(64000), CFG, stats=(-100.0, 0.0))
    assert np.all(spec.db == -100.0)
    assert not np.any(spec.values)


def test_log_mel_sine_lands_on_nearest_band():
    spec = dsp.log_mel_spectrogram(_sine(440))
    centers = dsp.mel_centers_hz(CFG)
    width = np.diff(centers).max()
    for t in range(10, 250):
        assert abs(centers[spec.db[:, t].argmax()] - 440) < width


def test_normalize_stats_examples():
    db = np.array([[-80.0, -20.0], [-50.0, -30.0]])
    stats = dsp.normalize_stats([db])
    assert stats == (-80.0, -20.0)
    assert dsp.normalize(np.array([-50.0]), stats)[0] == 0.5
    assert np.allclose(dsp.denormalize(dsp.normalize(db, stats), stats), db, atol=1e-4)
    with pytest.raises(DegenerateStatsError):
        dsp.normalize_stats([np.full((3, 3), -7.0)])
    with pytest.raises(DspError):
        dsp.normalize_stats([])


def test_mel_to_linear_properties():
    fb = dsp.mel_filterbank(CFG)
    assert not np.any(dsp.mel_to_linear(np.zeros((128, 3)), fb))
    # smooth mel frame: projection through the filterbank is nearly recovered
    m = 1 + np.sin(np.linspace(0, 3, 513))[:, None]
    mel = fb @ m
    back = fb @ dsp.mel_to_linear(mel, fb)
    assert np.linalg.norm(back - mel) / np.linalg.norm(mel) < 0.1
    single = np.zeros((128, 1))
    single[40] = 1.0
    lin = dsp.mel_to_linear(single, fb)[:, 0]
    support = np.flatnonzero(fb[40])
    energy = lin ** 2
    near = energy[max(support[0] - 10, 0):support[-1] + 11].sum()
    assert near / energy.sum() > 0.95
    with pytest.raises(DspError):
        dsp.mel_to_linear(np.zeros((10, 2)), fb)


def test_griffin_lim_zero():
    x, res = dsp.griffin_lim(np.zeros((513, 20)), CFG, 5)
    assert not np.any(x)
    assert res == [0.0] * 5


def test_griffin_lim_sine():
    mag = np.abs(dsp.stft(_sine(440, 16000), CFG))
    x, res = dsp.griffin_lim(mag, CFG, 60, Xoshiro256(0))
    assert res[-1] < res[0]
    out = np.abs(dsp.stft(x, CFG))
    assert abs(int(np.median(out.argmax(axis=0))) - int(np.median(mag.argmax(axis=0)))) <= 1


def test_griffin_lim_residual_over_iterations():
    mag = np.abs(dsp.stft(Xoshiro256(4).normal(8000), CFG))
    _, r1 = dsp.griffin_lim(mag, CFG, 1, Xoshiro256(9))
    _, r60 = dsp.griffin_lim(mag, CFG, 60, Xoshiro256(9))
    assert r60[-1] <= r1[-1]
    assert r60[0] == r1[0]


def test_griffin_lim_errors():
    with pytest.raises(DspError):
        dsp.griffin_lim(np.ones((513, 4)), CFG, 0)
    with pytest.raises(DspError):
        dsp.griffin_lim(-np.ones((513, 4)), CFG, 3)
    with pytest.raises(DspError):
        dsp.griffin_lim(np.ones((10, 4)), CFG, 3)


def test_spectral_convergence_of_exact_signal():
    x = _sine(300, 8000)
    assert dsp.spectral_convergence(x, np.abs(dsp.stft(x, CFG)), CFG) == pytest.approx(0.0, abs=1e-12)
