import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simclr_har import augment as A
from simclr_har.augment import TransformKind as TK


def window(seed=0, length=40):
    return np.random.default_rng(seed).normal(size=(length, 3)).astype(np.float32)


def gen(seed=0):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------- noise

def test_noise_zero_sigma_is_identity():
    w = window()
    np.testing.assert_array_equal(A.t_noise(w, gen(), sigma=0.0), w)


def test_noise_standard_deviation():
    out = A.t_noise(np.zeros((10**4, 3)), gen(1), sigma=0.05)
    assert 0.045 <= out.std() <= 0.055


def test_noise_independent_streams_differ():
    w = window()
    a = A.t_noise(w, A.rng_stream(0, 0, 0, 0))
    b = A.t_noise(w, A.rng_stream(0, 0, 1, 0))
    assert np.max(np.abs(a - b)) > 0


# ---------------------------------------------------------------- scale

def test_scale_forced_factors():
    w = window()
    np.testing.assert_array_equal(A.t_scale(w, factors=(1, 1, 1)), w)
    out = A.t_scale(w, factors=(2, 1, 1))
    np.testing.assert_array_equal(out[:, 0], 2 * w[:, 0])
    np.testing.assert_array_equal(out[:, 1:], w[:, 1:])


def test_scale_factor_moments():
    w = np.ones((1, 3))
    factors = np.concatenate([A.t_scale(w, A.rng_stream(5, i))[0] for i in range(3334)])[:10**4]
    assert 0.99 <= factors.mean() <= 1.01
    assert 0.095 <= factors.std() <= 0.105


# ---------------------------------------------------------------- rotate

def test_rotate_zero_angle():
    w = window()
    np.testing.assert_allclose(A.t_rotate(w, axis=(1, 2, 3), angle=0.0), w, atol=1e-7)


def test_rotate_canonical_quarter_turn():
    w = np.tile([1.0, 0.0, 0.0], (5, 1))
    out = A.t_rotate(w, axis=(0, 0, 1), angle=np.pi / 2)
    np.testing.assert_allclose(out, np.tile([0.0, 1.0, 0.0], (5, 1)), atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_rotate_is_proper_orthogonal(seed):
    r = gen(seed)
    mat = A.rotation_matrix(r.standard_normal(3), r.uniform(0, 2 * np.pi))
    np.testing.assert_allclose(mat.T @ mat, np.eye(3), atol=1e-6)
    assert np.linalg.det(mat) == pytest.approx(1.0, abs=1e-6)
    w = window(seed)
    out = A.t_rotate(w, r)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), np.linalg.norm(w, axis=1), atol=1e-5)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(w), abs=1e-4)


def test_rotate_needs_three_channels():
    with pytest.raises(A.TransformError):
        A.t_rotate(np.zeros((10, 2)), gen())


# ---------------------------------------------------------------- invert / reverse

def test_invert():
    assert not A.t_invert(np.zeros((4, 3))).any()
    np.testing.assert_array_equal(A.t_invert(np.array([[1.0, -2.0, 3.0]])), [[-1, 2, -3]])
    w = window()
    np.testing.assert_array_equal(A.t_invert(A.t_invert(w)), w)


def test_time_reverse():
    const = np.full((6, 3), 0.7)
    np.testing.assert_array_equal(A.t_time_reverse(const), const)
    ramp = np.tile(np.arange(4.0)[:, None], (1, 3))
    np.testing.assert_array_equal(A.t_time_reverse(ramp)[:, 0], [3, 2, 1, 0])
    w = window()
    np.testing.assert_array_equal(A.t_time_reverse(A.t_time_reverse(w)), w)


def test_reverse_does_not_alias_input():
    w = window()
    out = A.t_time_reverse(w)
    out[0, 0] = 99
    assert w[-1, 0] != 99


# ---------------------------------------------------------------- permute

def test_permute_forced_orders():
    w = window()
    np.testing.assert_array_equal(A.t_permute(w, order=(0, 1, 2, 3)), w)
    ramp = np.tile(np.arange(8.0)[:, None], (1, 3))
    out = A.t_permute(ramp, order=(1, 0, 3, 2))
    np.testing.assert_array_equal(out[:, 0], [2, 3, 0, 1, 6, 7, 4, 5])


def test_permute_last_segment_absorbs_remainder():
    ramp = np.tile(np.arange(10.0)[:, None], (1, 3))
    out = A.t_permute(ramp, order=(3, 0, 1, 2))
    np.testing.assert_array_equal(out[:, 0], [6, 7, 8, 9, 0, 1, 2, 3, 4, 5])


def test_permute_too_short():
    with pytest.raises(A.TransformError):
        A.t_permute(np.zeros((3, 3)), gen())


# ---------------------------------------------------------------- warp

def test_warp_uniform_speed_is_identity():
    w = window(length=100)
    np.testing.assert_allclose(A.t_time_warp(w, knots=(1.0, 1.0, 1.0, 1.0)), w, atol=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_warp_fixes_endpoints(seed):
    w = window(seed, length=64)
    out = A.t_time_warp(w, gen(seed))
    np.testing.assert_allclose(out[0], w[0], atol=1e-6)
    np.testing.assert_allclose(out[-1], w[-1], atol=1e-6)
    assert out.shape == w.shape


def test_warp_keeps_ramp_monotone():
    ramp = np.tile(np.linspace(0, 1, 200)[:, None], (1, 3))
    for seed in range(100):
        out = A.t_time_warp(ramp, gen(seed), sigma=0.5)
        assert np.all(np.diff(out, axis=0) >= -1e-12)


def test_warp_too_short():
    with pytest.raises(A.TransformError):
        A.t_time_warp(np.zeros((7, 3)), gen())


# ---------------------------------------------------------------- shuffle

def test_shuffle_forced():
    w = window()
    np.testing.assert_array_equal(A.t_channel_shuffle(w, perm=(0, 1, 2)), w)
    out = A.t_channel_shuffle(w, perm=(1, 2, 0))
    np.testing.assert_array_equal(out, w[:, [1, 2, 0]])


def test_shuffle_uniform_over_permutations():
    w = np.array([[0.0, 1.0, 2.0]])
    counts = Counter(tuple(A.t_channel_shuffle(w, A.rng_stream(3, i))[0].astype(int)) for i in range(6000))
    assert set(counts) == set(itertools.permutations(range(3)))
    for c in counts.values():
        assert abs(c / 6000 - 1 / 6) <= 0.02


# ---------------------------------------------------------------- pipelines

def test_parse_pipeline_spec():
    assert A.parse_pipeline_spec("shuffle,permute") == (TK.CHANNEL_SHUFFLE, TK.PERMUTE)
    assert A.parse_pipeline_spec("") == ()
    with pytest.raises(A.TransformError, match="rotatee"):
        A.parse_pipeline_spec("noise,rotatee")
    names = "identity,noise,scale,rotate,invert,reverse,permute,warp,shuffle"
    assert len(A.parse_pipeline_spec(names)) == 9


def test_empty_and_involution_pipelines():
    w = window()
    np.testing.assert_array_equal(A.apply_pipeline(A.TransformPipeline(), w, 0, 0), w)
    p = A.TransformPipeline((TK.INVERT, TK.INVERT))
    np.testing.assert_array_equal(A.apply_pipeline(p, w, 3, 1), w)


def test_order_sensitivity_closed_form():
    w = window().astype(np.float64)
    eps = np.random.default_rng(9).normal(0, 0.05, size=w.shape)
    scale_then_noise = A.t_noise(A.t_scale(w, factors=(2, 2, 2)), noise=eps)
    noise_then_scale = A.t_scale(A.t_noise(w, noise=eps), factors=(2, 2, 2))
    np.testing.assert_allclose(scale_then_noise, 2 * w + eps, rtol=1e-14)
    np.testing.assert_allclose(noise_then_scale, 2 * (w + eps), rtol=1e-14)
    np.testing.assert_allclose(noise_then_scale - scale_then_noise, eps, atol=1e-14)


def test_pipeline_applies_stages_left_to_right():
    w = window()
    p = A.TransformPipeline((TK.SCALE, TK.NOISE), seed=4)
    expected = A.t_noise(A.t_scale(w, A.rng_stream(4, 7, 1, 0)), A.rng_stream(4, 7, 1, 1))
    np.testing.assert_array_equal(A.apply_pipeline(p, w, 7, 1), expected)


def test_identity_stage_is_exact_noop():
    w = window()
    for kind in A.ALL_KINDS:
        single = A.TransformPipeline((kind,), seed=11)
        for other in ((kind, TK.IDENTITY), (TK.IDENTITY, kind)):
            p = A.TransformPipeline(other, seed=11)
            np.testing.assert_array_equal(A.apply_pipeline(p, w, 2, 0), A.apply_pipeline(single, w, 2, 0))


def test_two_views():
    batch = np.stack([window(i) for i in range(4)])
    a, b = A.two_views(A.TransformPipeline((TK.IDENTITY,)), batch)
    np.testing.assert_array_equal(a, batch)
    np.testing.assert_array_equal(b, batch)
    a, b = A.two_views(A.TransformPipeline((TK.NOISE,), seed=1), batch)
    assert np.all(np.any(a != b, axis=(1, 2)))
    a2, b2 = A.two_views(A.TransformPipeline((TK.NOISE,), seed=1), batch)
    assert a.tobytes() == a2.tobytes() and b.tobytes() == b2.tobytes()


def test_streams_independent_of_call_order():
    p = A.TransformPipeline.from_spec("rotate,warp,noise", seed=5)
    ws = [window(i, 64) for i in range(5)]
    forward = [A.apply_pipeline(p, w, i, 1) for i, w in enumerate(ws)]
    backward = [A.apply_pipeline(p, ws[i], i, 1) for i in reversed(range(5))][::-1]
    for f, b in zip(forward, backward):
        assert f.tobytes() == b.tobytes()


# ---------------------------------------------------------------- properties

windows = st.integers(0, 2**31 - 1).map(lambda s: window(s, 48))


@settings(max_examples=50, deadline=None)
@given(w=windows, seed=st.integers(0, 2**31 - 1))
def test_involutions_commute(w, seed):
    inv, rev = A.t_invert, A.t_time_reverse
    s = gen(seed).normal(1, 0.1, 3)
    np.testing.assert_array_equal(inv(rev(w)), rev(inv(w)))
    np.testing.assert_array_equal(inv(A.t_scale(w, factors=s)), A.t_scale(inv(w), factors=s))
    np.testing.assert_array_equal(rev(A.t_scale(w, factors=s)), A.t_scale(rev(w), factors=s))


@settings(max_examples=30, deadline=None)
@given(w=windows, seed=st.integers(0, 2**31 - 1), kind=st.sampled_from(A.ALL_KINDS))
def test_shape_preserved(w, seed, kind):
    out = A.apply_transform(kind, w, gen(seed))
    assert out.shape == w.shape
    assert out.dtype == w.dtype


@settings(max_examples=50, deadline=None)
@given(w=windows, seed=st.integers(0, 2**31 - 1))
def test_multisets_preserved(w, seed):
    for fn in (A.t_permute, A.t_time_reverse):
        out = fn(w, gen(seed))
        np.testing.assert_array_equal(np.sort(out, axis=0), np.sort(w, axis=0))
    out = A.t_channel_shuffle(w, gen(seed))
    np.testing.assert_array_equal(np.sort(out, axis=1), np.sort(w, axis=1))


@settings(max_examples=30, deadline=None)
@given(w=windows, seed=st.integers(0, 2**31 - 1))
def test_rotation_preserves_norms(w, seed):
    out = A.t_rotate(w, gen(seed))
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), np.linalg.norm(w, axis=1), atol=1e-5)
