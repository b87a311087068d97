import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dode.network import (
    InvalidDimensionError,
    InvalidRangeError,
    Network,
    Node,
    OdSet,
    SeedKind,
    TimeGrid,
    apply_seed_noise,
    build_irregular_grid,
    derive_bounds,
    derive_trip_productions,
    enumerate_od_pairs,
    make_seed_demand,
    sample_ground_truth,
)


def brute_force_adjacencies(rows, cols):
    cells = [(r, c) for r in range(rows) for c in range(cols)]
    return sum(1 for a in cells for b in cells
               if a < b and abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1)


def test_benchmark_grid_shape():
    net = build_irregular_grid(4, 4, 1250, 50, 1250, rng_seed=7)
    assert len(net.nodes) == 16
    assert len(net.arcs) == 48
    assert len(net.origins) == len(net.destinations) == 12
    assert net.sensors == [a.id for a in net.arcs]
    assert 5 not in net.origins and 10 not in net.origins


def test_zero_jitter_gives_lattice_spacing():
    net = build_irregular_grid(2, 2, 1250, 50, 0, rng_seed=3)
    assert len(net.nodes) == 4 and len(net.arcs) == 8
    assert all(a.length == 1250.0 for a in net.arcs)
    assert net.arcs[0].free_flow_time == pytest.approx(90.0)


def test_three_by_two():
    net = build_irregular_grid(3, 2, 1000, 50, 0)
    assert len(net.nodes) == 6 and len(net.arcs) == 14


@pytest.mark.parametrize("rows, cols", [(1, 4), (4, 1), (0, 0)])
def test_invalid_dimension(rows, cols):
    with pytest.raises(InvalidDimensionError):
        build_irregular_grid(rows, cols)


@pytest.mark.parametrize("rows", range(2, 7))
@pytest.mark.parametrize("cols", range(2, 7))
def test_arc_count_formula(rows, cols):
    net = build_irregular_grid(rows, cols, jitter_max=100.0, rng_seed=rows * 10 + cols)
    assert len(net.arcs) == 2 * brute_force_adjacencies(rows, cols)
    assert len(net.arcs) == 2 * (2 * rows * cols - rows - cols)


def test_opposing_arcs_share_length_and_jitter_range():
    net = build_irregular_grid(4, 4, 1250, 50, 1250, rng_seed=11)
    for fwd, back in zip(net.arcs[::2], net.arcs[1::2]):
        assert (fwd.from_node, fwd.to_node) == (back.to_node, back.from_node)
        assert fwd.length == back.length
    for n in net.nodes:
        r, c = divmod(n.id, 4)
        assert 0 <= n.x - c * 1250 < 1250 and 0 <= n.y - r * 1250 < 1250
    assert net.is_strongly_connected_over(set(net.origins))


def test_od_pairs():
    net = build_irregular_grid(4, 4)
    od = enumerate_od_pairs(net)
    assert od.m == 132
    assert all(i != j for i, j in od.pairs)
    nodes = [Node(0, 0, 0), Node(1, 1, 0)]
    one = Network(nodes, [], [0], [0], [])
    assert enumerate_od_pairs(one).m == 0
    two = Network(nodes, [], [0, 1], [0, 1], [])
    assert enumerate_od_pairs(two).pairs == ((0, 1), (1, 0))


def test_od_set_rejects_loops_and_duplicates():
    with pytest.raises(ValueError):
        OdSet(((1, 1),))
    with pytest.raises(ValueError):
        OdSet(((1, 2), (1, 2)))


def test_time_grid():
    grid = TimeGrid(3600, 4)
    assert grid.interval_duration == 900
    assert grid.interval_of(950) == 1
    assert grid.interval_of(3600) == 3 and grid.interval_of(9999) == 3
    with pytest.raises(InvalidDimensionError):
        TimeGrid(3600, 0)


def test_ground_truth_examples():
    od = enumerate_od_pairs(build_irregular_grid(4, 4))
    x = sample_ground_truth(od, TimeGrid(3600, 4), 1, 20, rng_seed=5)
    assert x.shape == (528,) and x.min() >= 1 and x.max() < 20
    assert np.all(sample_ground_truth(od, TimeGrid(3600, 4), 5, 5, 0) == 5)
    raw = np.random.default_rng(9).uniform(0, 1, size=528)
    assert np.array_equal(sample_ground_truth(od, TimeGrid(3600, 4), 0, 1, 9), raw)
    with pytest.raises(InvalidRangeError):
        sample_ground_truth(od, TimeGrid(3600, 4), 2, 1, 0)


def test_bounds():
    assert np.all(derive_bounds(np.array([1.0, 20.0])).upper == 30.0)
    b = derive_bounds(np.array([3.0, 18.4]))
    assert np.allclose(b.upper, 27.6) and np.all(b.lower == 0)
    with pytest.warns(UserWarning):
        assert np.all(derive_bounds(np.zeros(3)).upper == 0)


def test_trip_productions():
    od = OdSet(((0, 1), (0, 2)))
    assert derive_trip_productions(np.array([3.0, 4.0]), od).as_dict() == {0: 7.0}
    assert derive_trip_productions(np.zeros(2), od).as_dict() == {0: 0.0}
    big = enumerate_od_pairs(build_irregular_grid(4, 4))
    x = sample_ground_truth(big, TimeGrid(3600, 4), 1, 20, 0)
    prods = derive_trip_productions(x, big)
    assert prods.values.sum() == pytest.approx(x.sum(), rel=1e-13)
    manual = {i: sum(x[w * 4 + s] for w, (o, _) in enumerate(big.pairs) if o == i for s in range(4))
              for i in big.origins}
    assert prods.as_dict() == pytest.approx(manual, rel=1e-13)


def test_seed_endpoints():
    ten = np.array([10.0, 10.0])
    assert np.allclose(apply_seed_noise(ten, "LD", [0.0, 1.0]), [7.0, 10.0])
    assert np.allclose(apply_seed_noise(ten, "HD", [0.0, 1.0]), [9.0, 12.0])
    for kind in ("LD", "HD"):
        assert np.all(make_seed_demand(np.zeros(4), kind, 0) == 0)
    assert make_seed_demand(ten, SeedKind.NONE, 0) is None


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(0, 10), width=st.floats(0.1, 20))
def test_seed_ranges_and_ground_truth_feasibility(seed, a, width):
    od = OdSet(((0, 1), (0, 2), (1, 0)))
    grid = TimeGrid(3600, 3)
    x = sample_ground_truth(od, grid, a, a + width, seed)
    ld = make_seed_demand(x, "LD", seed)
    hd = make_seed_demand(x, "HD", seed + 1)
    assert np.all(ld >= 0.7 * x) and np.all(ld <= x)
    assert np.all(hd >= 0.9 * x) and np.all(hd <= 1.2 * x)
    b = derive_bounds(x)
    assert np.all(b.lower <= x) and np.all(x <= b.upper)
    prods = derive_trip_productions(x, od)
    owner = od.origin_of_entries(3)
    slack = prods.values - np.bincount(owner, weights=x)
    assert np.all(slack >= -1e-12 * prods.values)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_determinism(seed):
    a = build_irregular_grid(3, 3, rng_seed=seed)
    b = build_irregular_grid(3, 3, rng_seed=seed)
    assert a == b
    od = enumerate_od_pairs(a)
    x1 = sample_ground_truth(od, TimeGrid(3600, 2), 1, 20, seed)
    x2 = sample_ground_truth(od, TimeGrid(3600, 2), 1, 20, seed)
    assert np.array_equal(x1, x2)
    assert np.array_equal(make_seed_demand(x1, "HD", seed), make_seed_demand(x2, "HD", seed))
