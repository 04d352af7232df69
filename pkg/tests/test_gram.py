import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from crossgram.encoder import STYLE_LAYERS, UnknownLayerError
from crossgram.gram import PairStrategy, constraint_count, gram_backward, gram_cross, gram_within
from crossgram.tensor import ShapeError

REFERENCE_WIDTHS = dict(zip(STYLE_LAYERS, (64, 128, 256, 512, 512)))


def test_single_channel_ones():
    g = gram_within(np.ones((1, 3, 5), np.float32))
    assert g.shape == (1, 1)
    assert g.values[0, 0] == 15
    assert g.sites == 15


def test_disjoint_supports_give_diagonal(rng):
    f = np.zeros((3, 4, 4))
    f[0, :2] = rng.uniform(1, 2, (2, 4))
    f[1, 2:, :2] = rng.uniform(1, 2, (2, 2))
    f[2, 2:, 2:] = rng.uniform(1, 2, (2, 2))
    g = gram_within(f).values
    assert np.count_nonzero(g - np.diag(np.diag(g))) == 0


def test_within_matches_oracle(rng):
    f = rng.standard_normal((3, 4, 4))
    np.testing.assert_allclose(gram_within(f).values, oracles.gram(f, f), rtol=1e-12)


def test_cross_matches_oracle(rng):
    fl = rng.standard_normal((2, 4, 4))
    fm = rng.standard_normal((3, 2, 2))
    np.testing.assert_allclose(gram_cross(fl, fm).values, oracles.gram(fl, fm), rtol=1e-12)


def test_cross_degenerate_and_constant(rng):
    f = rng.standard_normal((4, 5, 5)).astype(np.float32)
    assert gram_within(f).values.tobytes() == gram_cross(f, f).values.tobytes()
    ones = np.ones((1, 2, 3), np.float32)
    fl = rng.standard_normal((3, 4, 6)).astype(np.float32)
    np.testing.assert_allclose(gram_cross(fl, ones).values[:, 0], fl.reshape(3, -1).sum(axis=1), rtol=1e-6)


def test_cross_rejects_larger_coarse_map():
    with pytest.raises(ShapeError):
        gram_cross(np.zeros((2, 2, 2)), np.zeros((2, 4, 4)))


def test_within_symmetric_exactly(rng):
    f = rng.standard_normal((16, 9, 11)).astype(np.float32)
    g = gram_within(f).values
    assert np.array_equal(g, g.T)


@settings(max_examples=30, deadline=None)
@given(k=st.integers(1, 12), h=st.integers(1, 8), w=st.integers(1, 8), seed=st.integers(0, 2**31))
def test_within_psd(k, h, w, seed):
    f = np.random.default_rng(seed).standard_normal((k, h, w))
    g = gram_within(f).values
    assert np.linalg.eigvalsh(g).min() >= -1e-5 * np.trace(g)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3), b=st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3),
       seed=st.integers(0, 2**31))
def test_scale_law(a, b, seed):
    rng = np.random.default_rng(seed)
    fl = rng.standard_normal((3, 6, 6))
    fm = rng.standard_normal((4, 3, 3))
    g = gram_cross(fl, fm).values
    np.testing.assert_allclose(gram_cross(a * fl, b * fm).values, a * b * g, rtol=1e-5, atol=1e-5 * abs(a * b) * np.abs(g).max())


def test_backward_trivial(rng):
    f = rng.standard_normal((3, 4, 4))
    gl, gm = gram_backward(f, f, np.zeros((3, 3)))
    assert not gl.any() and not gm.any()
    gl, gm = gram_backward(f, f, np.eye(3))
    np.testing.assert_allclose(gl + gm, 2 * f, rtol=1e-12)


def test_backward_shape_error(rng):
    with pytest.raises(ShapeError):
        gram_backward(rng.standard_normal((2, 4, 4)), rng.standard_normal((3, 2, 2)), np.zeros((3, 2)))


@pytest.mark.parametrize("coarse", [(3, 2, 2), (3, 3, 2), (3, 5, 5)])
def test_backward_finite_differences(rng, coarse):
    fl = rng.standard_normal((2, 5, 5))
    fm = rng.standard_normal(coarse)
    u = rng.standard_normal((2, 3))
    gl, gm = gram_backward(fl, fm, u)
    nl = [oracles.central_difference(lambda z: float(np.sum(gram_cross(z, fm).values * u)), fl, i, 1e-3)
          for i in np.ndindex(fl.shape)]
    nm = [oracles.central_difference(lambda z: float(np.sum(gram_cross(fl, z).values * u)), fm, i, 1e-3)
          for i in np.ndindex(fm.shape)]
    assert oracles.max_relative_error(gl, nl) < 1e-3
    assert oracles.max_relative_error(gm, nm) < 1e-3


def test_backward_adjoint_dot_product(rng):
    fl = rng.standard_normal((3, 6, 6))
    fm = rng.standard_normal((4, 3, 3))
    dl = rng.standard_normal(fl.shape)
    dm = rng.standard_normal(fm.shape)
    eps = 1e-6
    jd = (gram_cross(fl + eps * dl, fm + eps * dm).values - gram_cross(fl - eps * dl, fm - eps * dm).values) / (2 * eps)
    u = rng.standard_normal(jd.shape)
    gl, gm = gram_backward(fl, fm, u)
    lhs = float(np.sum(jd * u))
    rhs = float(np.sum(dl * gl) + np.sum(dm * gm))
    assert abs(lhs - rhs) <= 1e-4 * abs(lhs)


def test_strategies_resolve():
    layers = ["R51", "R31", "R11", "R41", "R21"]
    assert PairStrategy.pairwise_descending(layers).resolve() == [
        ("R11", "R21"), ("R21", "R31"), ("R31", "R41"), ("R41", "R51")]
    assert PairStrategy.individual(layers).resolve() == [(l, l) for l in STYLE_LAYERS]
    pairs = PairStrategy.all_distinct(layers).resolve()
    assert len(pairs) == 10 and len(set(pairs)) == 10
    assert all(a < b for a, b in pairs)
    assert PairStrategy.explicit([("R21", "R11"), ("R31", "R31")]).resolve() == [("R11", "R21"), ("R31", "R31")]
    with pytest.raises(ValueError):
        PairStrategy.explicit([("R11", "R21"), ("R21", "R11")]).resolve()
    with pytest.raises(ValueError):
        PairStrategy("zigzag", tuple(layers))


def test_constraint_counts():
    assert constraint_count(PairStrategy.pairwise_descending(STYLE_LAYERS), REFERENCE_WIDTHS) == 434176
    assert constraint_count(PairStrategy.individual(STYLE_LAYERS), REFERENCE_WIDTHS) == 610304
    assert constraint_count(PairStrategy.individual(["R11"]), {"R11": 1}) == 1
    with pytest.raises(UnknownLayerError):
        constraint_count(PairStrategy.individual(["R11", "R21"]), {"R11": 3})
