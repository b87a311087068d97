import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dode.network import Bounds, TripProductions
from dode.objective import (
    BudgetExhausted,
    EvaluationCounter,
    Objective,
    ObjectiveConfig,
    OutOfBoundsError,
    ZeroNormError,
    check_generation,
    clip_to_bounds,
    compose,
    f1,
    f2,
    project_feasible,
    rmse,
)

# zero or at least 1e-6 in magnitude: squares of subnormal entries underflow inside the norms
entries = st.one_of(st.just(0.0), st.floats(1e-6, 1e3), st.floats(-1e3, -1e-6))
vectors = arrays(np.float64, st.integers(1, 30), elements=entries)


def test_f1_examples():
    assert f1([1.0, 2.0], [1.0, 2.0]) == 0
    assert f1([4.0, 4.0], [2.0, 2.0]) == pytest.approx(1.0)
    assert f1(2 * np.ones(528), np.ones(528)) == pytest.approx(1.0)
    with pytest.raises(ZeroNormError):
        f1([1.0], [0.0])


def test_f2_examples():
    c_hat = np.array([3.0, 4.0, 12.0])
    assert f2(c_hat, c_hat) == 0
    assert f2([0.0, 0.0], [3.0, 4.0]) == pytest.approx(1.0)
    assert f2(c_hat + [1, 0, 0], c_hat) == pytest.approx(1 / 13)
    with pytest.raises(ZeroNormError):
        f2([1.0], [0.0])


@pytest.mark.parametrize("k", [0, 0.5, 1, 2])
def test_f1_homogeneity(k):
    seed = np.array([1.0, 5.0, 2.5])
    assert f1(k * seed, seed) == pytest.approx(abs(k - 1), abs=1e-15)


def test_rmse_examples():
    assert rmse([1, 2], [1, 2]) == 0
    assert rmse([0, 0, 0, 0], [1, 1, 1, 1]) == 1
    assert rmse([3, 4], [0, 0]) == pytest.approx(3.53553, abs=1e-5)
    with pytest.raises(ValueError):
        rmse([1, 2], [1])


@settings(max_examples=100)
@given(st.data())
def test_norm_properties(data):
    y = data.draw(vectors)
    z = data.draw(arrays(np.float64, y.shape, elements=entries))
    w = data.draw(arrays(np.float64, y.shape, elements=entries))
    assert rmse(y, z) >= 0 and (rmse(y, z) == 0) == np.array_equal(y, z)
    assert rmse(y, w) <= rmse(y, z) + rmse(z, w) + 1e-9
    assert rmse(y, z) == pytest.approx(np.linalg.norm(y - z) / np.sqrt(y.size))
    if np.any(z):
        assert f1(y, z) >= 0 and f2(y, z) >= 0
        assert (f1(y, z) == 0) == np.array_equal(y, z)


def test_clip_examples():
    b = Bounds(np.zeros(3), np.full(3, 30.0))
    assert clip_to_bounds([-1.0, 5.0, 100.0], b).tolist() == [0.0, 5.0, 30.0]


def productions(values):
    return TripProductions(tuple(range(len(values))), np.asarray(values, dtype=float))


def test_check_generation_examples():
    x_true = np.array([3.0, 4.0, 2.5, 0.0])
    owner = np.array([0, 0, 1, 2])
    prods = productions([7.0, 2.5, 0.0])
    ok = check_generation(x_true, prods, owner)
    assert ok.feasible and np.allclose(ok.slack, 0)
    bad = check_generation(1.01 * x_true, prods, owner)
    assert not bad.feasible and np.all(bad.slack[:2] < 0) and bad.slack[2] == 0
    zero = check_generation(np.zeros(4), prods, owner)
    assert zero.feasible and np.array_equal(zero.slack, prods.values)


@settings(max_examples=200)
@given(st.data())
def test_project_feasible(data):
    n = data.draw(st.integers(1, 12))
    owner = np.array(data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n)))
    upper = np.full(n, data.draw(st.floats(0.1, 50)))
    x = np.array(data.draw(st.lists(st.floats(-20, 80), min_size=n, max_size=n)))
    prods = productions(data.draw(st.lists(st.floats(0, 100), min_size=3, max_size=3)))
    b = Bounds(np.zeros(n), upper)
    y = project_feasible(x, b, prods, owner)
    assert np.all(y >= 0) and np.all(y <= upper)
    totals = np.bincount(owner, weights=y, minlength=3)
    assert np.all(totals <= prods.values)
    clipped = clip_to_bounds(x, b)
    if check_generation(clipped, prods, owner, rtol=0).feasible:
        assert np.array_equal(y, clipped)


def test_counter_budget_and_threads():
    c = EvaluationCounter(budget=3)
    assert [c.acquire() for _ in range(3)] == [1, 2, 3]
    with pytest.raises(BudgetExhausted):
        c.acquire()
    assert c.count == 3 and c.remaining == 0

    shared = EvaluationCounter(budget=500)
    failures = []

    def grab():
        for _ in range(100):
            try:
                shared.acquire()
            except BudgetExhausted:
                failures.append(1)

    threads = [threading.Thread(target=grab) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert shared.count == 500 and len(failures) == 300


def make_config(seed=None, c_hat=(3.0, 4.0), omega1=None):
    n = 2
    return ObjectiveConfig(omega1 if omega1 is not None else (1.0 if seed is not None else 0.0), 1.0,
                           None if seed is None else np.asarray(seed, dtype=float),
                           np.asarray(c_hat, dtype=float), Bounds(np.zeros(n), np.full(n, 10.0)),
                           productions([20.0]), np.zeros(n, dtype=int))


class CountingSource:
    is_true_simulator = True

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return self.fn(x)


class FreeSource:
    is_true_simulator = False

    def __call__(self, x):
        return np.asarray(x)


def test_objective_examples():
    cfg = make_config()
    assert compose(cfg, np.ones(2), np.array([3.0, 4.0]))[2] == 0
    with pytest.raises(ValueError):
        make_config(None, omega1=1.0)
    cfg = make_config(seed=[2.0, 2.0], c_hat=[3.0, 4.0])
    # f1 = 0.5 via x = 1.5 * seed, f2 = 0.25 via c = c_hat * 1.25
    t1, t2, total = compose(cfg, np.array([3.0, 3.0]), np.array([3.75, 5.0]))
    assert (t1, t2) == pytest.approx((0.5, 0.25)) and total == pytest.approx(0.75)


def test_objective_at_fixed_point(tiny_scenario):
    cfg = ObjectiveConfig.for_scenario(tiny_scenario, "LD")
    cfg = ObjectiveConfig(1.0, 1.0, tiny_scenario.x_true, cfg.observed_counts, cfg.bounds, cfg.productions,
                          cfg.owner)
    value = Objective(cfg).evaluate(tiny_scenario.x_true, tiny_scenario.simulator())
    assert value.f1 == 0 and value.f2 == 0 and value.of_eval_counted


def test_only_true_simulator_is_counted():
    cfg = make_config()
    obj = Objective(cfg, EvaluationCounter(budget=2))
    src = CountingSource(lambda x: np.array([3.0, 4.0]))
    seen = []
    for k in range(4):
        obj.evaluate(np.full(2, k), FreeSource())
        obj.evaluate(np.ones(2), src) if k < 2 else None
        seen.append(obj.evaluations)
    assert seen == [1, 2, 2, 2] and src.calls == obj.evaluations
    with pytest.raises(BudgetExhausted):
        obj.evaluate(np.ones(2), src)
    assert src.calls == 2
    with pytest.raises(OutOfBoundsError):
        obj.evaluate(np.array([-1.0, 0.0]), FreeSource())
