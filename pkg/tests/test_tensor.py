import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scae.tensor import ShapeError, Xoshiro256, fans, glorot_uniform_init, splitmix64, tensor_create

M64 = (1 << 64) - 1


class RefXoshiro:
    """Straight transcription of the reference C generator, on Python ints."""

    def __init__(self, seed):
        self.s = []
        x = seed
        for _ in range(4):
            x = (x + 0x9E3779B97F4A7C15) & M64
            z = x
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
            self.s.append(z ^ (z >> 31))

    @staticmethod
    def rotl(x, k):
        return ((x << k) | (x >> (64 - k))) & M64

    def next(self):
        s = self.s
        result = (self.rotl((s[1] * 5) & M64, 7) * 9) & M64
        t = (s[1] << 17) & M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = self.rotl(s[3], 45)
        return result


def test_splitmix64_check_value():
    assert splitmix64(0)[1] == 0xE220A8397B1DCDAF


def test_xoshiro_reference_vector():
    rng = Xoshiro256.from_state([1, 2, 3, 4])
    assert list(map(int, rng.next_uint64(4))) == [11520, 0, 1509978240, 1215971899390074240]


@pytest.mark.parametrize("seed", [0, 1, 7, 2**63 + 5])
def test_xoshiro_matches_python_reference(seed):
    ref = RefXoshiro(seed)
    got = Xoshiro256(seed).next_uint64(200)
    assert [int(v) for v in got] == [ref.next() for _ in range(200)]


def test_unit_draws_use_top_53_bits():
    ref = RefXoshiro(3)
    u = Xoshiro256(3).random(50)
    assert np.array_equal(u, [(ref.next() >> 11) * 2.0**-53 for _ in range(50)])
    assert u.min() >= 0 and u.max() < 1


def test_same_seed_same_stream_and_state_roundtrip():
    a, b = Xoshiro256(11), Xoshiro256(11)
    assert np.array_equal(a.random(100), b.random(100))
    c = Xoshiro256.from_state(a.state)
    assert np.array_equal(a.normal(10), c.normal(10))


def test_jumped_streams_are_distinct_and_leave_parent_untouched():
    root = Xoshiro256(0)
    before = root.state
    one, two = root.jumped(1), root.jumped(2)
    assert root.state == before
    draws = [r.next_uint64(8).tolist() for r in (Xoshiro256(0), one, two)]
    assert len({tuple(d) for d in draws}) == 3
    again = Xoshiro256(0).jumped(1)
    assert again.next_uint64(8).tolist() == draws[1]


def test_normal_moments():
    z = Xoshiro256(5).normal(200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1) < 0.01


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 300), seed=st.integers(0, M64))
def test_permutation_is_a_permutation(n, seed):
    p = Xoshiro256(seed).permutation(n)
    assert sorted(p.tolist()) == list(range(n))


def test_tensor_create_examples():
    assert np.array_equal(tensor_create([2, 2], 0.0), np.zeros((2, 2)))
    assert tensor_create([3], 1.5).tolist() == [1.5, 1.5, 1.5]
    t = tensor_create([2, 3], 2.0)
    assert t.size == 6 and t.sum() == 12.0
    assert t.dtype == np.float32


def test_tensor_create_does_not_alias():
    a = tensor_create([4], 1.0)
    b = tensor_create([4], 1.0)
    a[0] = 5
    assert b[0] == 1.0


@pytest.mark.parametrize("shape", [[], [0], [2, -1]])
def test_tensor_create_rejects_bad_shapes(shape):
    with pytest.raises(ShapeError):
        tensor_create(shape)


def test_glorot_bound_and_determinism():
    w = glorot_uniform_init([4, 4], Xoshiro256(3))
    assert np.all(np.abs(w) <= math.sqrt(6 / 8))
    assert np.array_equal(w, glorot_uniform_init([4, 4], Xoshiro256(3)))


def test_glorot_mean_near_zero():
    w = glorot_uniform_init([100, 100], Xoshiro256(7))
    assert abs(float(w.mean())) < 0.05


def test_glorot_seeds_differ():
    a = glorot_uniform_init([64, 64], Xoshiro256(1))
    b = glorot_uniform_init([64, 64], Xoshiro256(2))
    assert np.any(a != b)


def test_glorot_conv_fans():
    assert fans((16, 1, 4, 4)) == (16, 256)
    w = glorot_uniform_init((16, 1, 4, 4), Xoshiro256(0))
    assert np.abs(w).max() <= math.sqrt(6 / (16 + 256))


def test_glorot_rejects_vectors():
    with pytest.raises(ValueError):
        glorot_uniform_init([5], Xoshiro256(0))
