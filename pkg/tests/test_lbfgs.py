import math

import numpy as np
import pytest

import oracles
from crossgram.lbfgs import (
    CONVERGED,
    History,
    OptimizerAbort,
    Options,
    minimize,
    two_loop_direction,
)


def spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(np.geomspace(1.0, cond, n)) @ q.T


def quadratic(a, b):
    return lambda x: (0.5 * x @ a @ x - b @ x, a @ x - b)


def rosenbrock(x):
    f = 100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
    g = np.array([-400.0 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200.0 * (x[1] - x[0] ** 2)])
    return f, g


def test_quadratic_5d(rng):
    a = spd(rng, 5)
    b = rng.standard_normal(5)
    res = minimize(quadratic(a, b), np.zeros(5), gtol=1e-10, max_iter=25)
    assert np.max(np.abs(res.x - np.linalg.solve(a, b))) < 1e-8
    assert res.iterations <= 25


def test_zero_gradient_returns_start():
    x0 = np.array([1.0, -2.0])
    res = minimize(lambda x: (3.0, np.zeros(2)), x0)
    assert res.status == CONVERGED and res.iterations == 0
    np.testing.assert_array_equal(res.x, x0)


def test_rosenbrock():
    res = minimize(rosenbrock, np.array([-1.2, 1.0]), gtol=1e-12, max_iter=200)
    assert res.f < 1e-10
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-5)


def test_empty_history_is_steepest_descent(rng):
    g = rng.standard_normal(7)
    np.testing.assert_array_equal(two_loop_direction(History(), g), -g)


def test_one_dimensional_newton_step():
    h = History()
    assert h.push(np.array([2.0]), np.array([6.0]))
    # curvature 3 recovered exactly: direction is -g / 3
    np.testing.assert_allclose(two_loop_direction(h, np.array([1.5])), [-0.5], rtol=1e-15)


def test_two_loop_matches_dense_bfgs(rng):
    n = 8
    a = spd(rng, n, cond=50)
    h = History(memory=5)
    pairs = []
    for _ in range(5):
        s = rng.standard_normal(n)
        y = a @ s
        assert h.push(s, y)
        pairs.append((s, y))
    g = rng.standard_normal(n)
    d = two_loop_direction(h, g)
    ref = oracles.dense_bfgs_direction(pairs, h.gamma, g)
    assert np.max(np.abs(d - ref)) <= 1e-6 * np.max(np.abs(ref))


def test_memory_keeps_newest_pairs(rng):
    h = History(memory=2)
    for k in range(4):
        s = rng.standard_normal(3)
        h.push(s, 2.0 * s)
    assert len(h) == 2


def test_curvature_condition_failure_skips_pair():
    h = History()
    assert not h.push(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    assert not h.push(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert len(h) == 0 and h.gamma == 1.0


def test_monotone_descent_and_strong_wolfe(rng):
    a = spd(rng, 20, cond=1e3)
    b = rng.standard_normal(20)
    opts = Options(gtol=1e-9, max_iter=200)
    for fun, x0 in ((quadratic(a, b), np.zeros(20)), (rosenbrock, np.array([-1.2, 1.0]))):
        res = minimize(fun, x0, opts)
        fs = [r.f for r in res.records]
        assert all(f1 <= f0 for f0, f1 in zip(fs, fs[1:]))
        for r in res.records[1:]:
            assert r.slope0 < 0
            assert r.f <= r.f_prev + opts.c1 * r.step * r.slope0
            assert abs(r.slope) <= opts.c2 * abs(r.slope0)


def test_deterministic(rng):
    a = spd(rng, 12, cond=100)
    b = rng.standard_normal(12)
    r1 = minimize(quadratic(a, b), np.ones(12), max_iter=30)
    r2 = minimize(quadratic(a, b), np.ones(12), max_iter=30)
    assert r1.x.tobytes() == r2.x.tobytes()
    assert [(r.f, r.step) for r in r1.records] == [(r.f, r.step) for r in r2.records]


def test_non_finite_aborts_with_best_point():
    def fun(x):
        if x[0] > 0.5:
            return math.nan, np.array([math.nan])
        return float((x[0] - 2) ** 2), np.array([2 * (x[0] - 2)])

    with pytest.raises(OptimizerAbort) as info:
        minimize(fun, np.array([0.0]))
    assert info.value.f == pytest.approx(4.0)
    np.testing.assert_array_equal(info.value.x, [0.0])


def test_nan_at_start_aborts():
    with pytest.raises(OptimizerAbort):
        minimize(lambda x: (math.inf, x), np.zeros(2))


def test_callback_sees_every_iteration(rng):
    seen = []
    res = minimize(rosenbrock, np.array([-1.2, 1.0]), max_iter=15,
                   callback=lambda rec, x: seen.append(rec.iteration))
    assert seen == list(range(res.iterations + 1))


def test_unknown_option():
    with pytest.raises(TypeError):
        minimize(rosenbrock, np.zeros(2), learning_rate=1.0)
