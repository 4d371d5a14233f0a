import csv
import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from skimage.metrics import structural_similarity

from scae.dsp import DspConfig, mel_centers_hz
from scae.metrics import (Peak, SampleMetrics, aggregate, detect_peaks, evaluate_pair, frame_prf,
                          match_frequencies, peak_scores, prf_from_counts, rmse, ssim)
from scae.tensor import Xoshiro256

CENTERS = mel_centers_hz(DspConfig())


def peaks(*freqs):
    return [Peak(i, float(f), 0.0) for i, f in enumerate(freqs)]


def brute_force_matches(orig, gen, tol=0.03):
    """Largest one-to-one admissible matching, by trying every assignment."""
    best = 0
    small, large, flip = (orig, gen, False) if len(orig) <= len(gen) else (gen, orig, True)
    for perm in itertools.permutations(range(len(large)), len(small)):
        n = 0
        for i, j in enumerate(perm):
            o, g = (large[j], small[i]) if flip else (small[i], large[j])
            n += abs(g.freq - o.freq) <= tol * o.freq
        best = max(best, n)
    return best


def random_frame(rng, n):
    # clustered around a few frequencies so overlaps and conflicts are common
    base = 200 + 50 * float(rng.random())
    return peaks(*(base * (1 + 0.05 * float(rng.random())) for _ in range(n)))


def test_rmse_examples():
    x = Xoshiro256(0).random((4, 4))
    assert rmse(x, x) == 0.0
    assert rmse([0, 1], [1, 1]) == pytest.approx(np.sqrt(0.5), abs=1e-15)
    assert rmse(np.zeros((3, 3)), np.ones((3, 3))) == 1.0
    y = Xoshiro256(1).random((4, 4))
    assert rmse(x, y) == rmse(y, x)
    with pytest.raises(ValueError):
        rmse(np.zeros(2), np.zeros(3))


def test_ssim_examples():
    x = Xoshiro256(0).random((32, 40))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-6)
    c1 = 0.01 ** 2
    assert ssim(np.zeros((16, 16)), np.ones((16, 16))) == pytest.approx(c1 / (1 + c1), rel=1e-12)
    y = Xoshiro256(1).random((32, 40))
    assert ssim(x, y) == ssim(y, x)
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 20)), np.zeros((10, 20)))


@pytest.mark.parametrize("seed", range(4))
def test_ssim_matches_skimage(seed):
    rng = Xoshiro256(seed)
    a = rng.random((64, 48))
    b = np.clip(a + 0.2 * rng.normal((64, 48)), 0, 1)
    ref = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                data_range=1.0)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-10)


def test_detect_peaks_examples():
    assert detect_peaks(np.full(128, -20.0), CENTERS) == []
    frame = np.full(128, -80.0)
    frame[20], frame[60] = -10.0, -45.0
    found = detect_peaks(frame, CENTERS)
    assert [p.mel_bin for p in found] == [20]
    assert found[0].freq == CENTERS[20] and found[0].amp == -10.0
    impulse = np.zeros(128)
    impulse[77] = 1.0
    assert [p.mel_bin for p in detect_peaks(impulse, CENTERS)] == [77]


def test_detect_peaks_plateaus_and_edges():
    frame = np.array([0, 1, 3, 3, 3, 1, 0, 5, 5, 0, 9], dtype=float)
    assert [p.mel_bin for p in detect_peaks(frame, np.arange(11.0) + 1)] == [2, 7]
    # a plateau that rises again is not a peak
    assert detect_peaks(np.array([0, 2, 2, 3, 0.0]), np.arange(5.0) + 1)[0].mel_bin == 3


def test_match_examples():
    assert len(match_frequencies(peaks(440), peaks(450))) == 1
    assert match_frequencies(peaks(440), peaks(455)) == []
    same = peaks(100, 200, 300)
    assert len(match_frequencies(same, same)) == 3
    with pytest.raises(ValueError):
        match_frequencies(same, same, tol=0)


def test_tolerance_is_relative_to_original():
    assert len(match_frequencies(peaks(100), peaks(97.05))) == 1
    assert match_frequencies(peaks(97.05), peaks(100)) == []


def test_greedy_choice_is_repaired():
    # greedy grabs 100<->101.5 first, which would leave both others unmatched
    orig, gen = peaks(100, 104), peaks(101.5, 97.5)
    assert len(match_frequencies(orig, gen)) == 2


def test_matcher_equals_brute_force_on_random_frames():
    rng = Xoshiro256(11)
    for _ in range(1000):
        orig = random_frame(rng, int(rng.random() * 7))
        gen = random_frame(rng, int(rng.random() * 7))
        pairs = match_frequencies(orig, gen)
        assert len(pairs) == brute_force_matches(orig, gen)
        assert len({id(o) for o, _ in pairs}) == len(pairs) == len({id(g) for _, g in pairs})
        assert all(abs(g.freq - o.freq) <= 0.03 * o.freq for o, g in pairs)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(100, 130), max_size=6), st.lists(st.floats(100, 130), min_size=1, max_size=6),
       st.floats(100, 130))
def test_matching_monotonicity(o, g, extra):
    orig, gen = peaks(*o), peaks(*g)
    n = len(match_frequencies(orig, gen))
    assert len(match_frequencies(orig, gen[1:])) <= n
    if orig:
        more = gen + [Peak(len(gen), extra, 0.0)]
        assert frame_prf(orig, more)[1] >= frame_prf(orig, gen)[1]


def test_frame_prf_examples():
    assert prf_from_counts(3, 4, 5) == (0.75, 0.6, 2 / 3)
    p, r, f = prf_from_counts(3, 4, 5)
    assert f == pytest.approx(2 * p * r / (p + r), abs=1e-15)
    assert frame_prf(peaks(100, 200), peaks(100, 200)) == (1.0, 1.0, 1.0)
    assert frame_prf(peaks(100), []) == (0.0, 0.0, 0.0)
    assert frame_prf([], peaks(100)) is None


@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20))
def test_prf_bounds(ident, extra_gen, extra_orig):
    p, r, f = prf_from_counts(ident, ident + extra_gen, ident + extra_orig)
    assert 0 <= p <= 1 and 0 <= r <= 1 and 0 <= f <= 1
    assert f <= max(p, r) + 1e-15


def test_sample_f1_is_mean_of_frame_f1():
    orig = np.full((128, 3), -40.0)
    gen = np.full((128, 3), -40.0)
    orig[20, 0] = gen[20, 0] = 0.0                 # F1 = 1
    orig[[10, 30, 50, 70, 90], 1] = 0.0             # one of five recovered: F1 = 1/3
    gen[10, 1] = 0.0
    gen[40, 2] = 0.0                                # no original peaks: frame skipped
    p, r, f, n = peak_scores(orig, gen, CENTERS)
    assert n == 2
    assert f == pytest.approx(2 / 3, abs=1e-15)
    assert (p, r) == (1.0, pytest.approx(0.6))


def test_evaluate_pair_identity(toy_train):
    _, specs, _ = toy_train
    for s in specs[:3]:
        m = evaluate_pair(s, s.values, s.stats, CENTERS)
        assert m.rmse == 0.0
        assert m.ssim == pytest.approx(1.0, abs=1e-6)
        assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)
        assert m.frames_scored > 0
    with pytest.raises(ValueError):
        evaluate_pair(specs[0], specs[0].values[:, :10], specs[0].stats, CENTERS)


def test_aggregate_and_report_format():
    a = SampleMetrics(0.06, 0.5, 0.2, 0.4, 0.3, 10)
    b = SampleMetrics(0.10, 0.7, 0.4, 0.6, 0.5, 20)
    assert aggregate([a]).mean == a
    report = aggregate([a, b], ["x", "y"])
    assert report.mean.rmse == pytest.approx(0.08)
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert rows[0] == ["id", "RMSE", "SSIM", "Recall", "Precision", "F1", "frames_scored"]
    assert [r[0] for r in rows[1:]] == ["x", "y", "mean"]
    assert rows[1][3] == "0.400000" and rows[1][4] == "0.200000"
    text = report.to_text("no-reg")
    assert text.splitlines()[0].split() == ["Experiment", "RMSE", "SSIM", "Recall", "Precision", "F1"]
    assert text.splitlines()[-1].startswith("no-reg")
    with pytest.raises(ValueError):
        aggregate([])
