import numpy as np
import pytest

from lipbound import (
    Activation,
    AnnealingSchedule,
    DenseOperator,
    DimensionTooLarge,
    EmptyDataset,
    SearchDomain,
    SequentialNet,
    annealing_lower_bound,
    dataset_lower_bound,
    grid_lower_bound,
    jacobian_norm_at,
    random_net,
    seqlip_exact,
    svd_dense,
)
from lipbound.spectral import PowerConfig


def linear_net(W):
    return SequentialNet([DenseOperator(np.asarray(W, dtype=float))])


def test_jacobian_norm_linear_net_constant():
    W = np.array([[1.0, 2.0], [0.0, -1.0]])
    net = linear_net(W)
    s = svd_dense(W).S[0]
    for x in (np.zeros(2), np.array([3.0, -1.0])):
        assert abs(jacobian_norm_at(net, x) - s) <= 1e-9


def test_jacobian_norm_gates_open():
    rng = np.random.default_rng(1)
    M1 = rng.standard_normal((4, 4))
    M2 = rng.standard_normal((3, 4))
    net = SequentialNet([DenseOperator(M1), Activation("relu"), DenseOperator(M2)])
    x = np.linalg.solve(M1, np.ones(4))
    assert abs(jacobian_norm_at(net, x) - svd_dense(M2 @ M1).S[0]) <= 1e-9


def test_jacobian_norm_below_split_bound():
    net = random_net([3, 6, 5, 2], activation="tanh", seed=4)
    bound = seqlip_exact(net).value
    rng = np.random.default_rng(5)
    for _ in range(10):
        assert jacobian_norm_at(net, rng.standard_normal(3)) <= bound + 1e-9


def test_jacobian_norm_methods_agree():
    net = random_net([4, 9, 3], seed=6)
    x = np.random.default_rng(7).standard_normal(4)
    exact = jacobian_norm_at(net, x, method="exact")
    power = jacobian_norm_at(net, x, PowerConfig(max_iters=4000, tol=1e-14, seed=1),
                             method="power")
    assert abs(exact - power) <= 1e-8 * max(exact, 1.0)


def test_grid_linear_net_any_resolution():
    W = np.array([[2.0, 1.0], [0.0, 1.0]])
    net = linear_net(W)
    rep = grid_lower_bound(net, resolution=3)
    assert abs(rep.value - svd_dense(W).S[0]) <= 1e-9
    assert rep.direction == "lower"


def test_grid_resolution_two_hits_corners():
    net = random_net([2, 5, 2], seed=8)
    rep = grid_lower_bound(net, SearchDomain.cube(2), resolution=2)
    corners = [np.array([a, b]) for a in (-1.0, 1.0) for b in (-1.0, 1.0)]
    want = max(jacobian_norm_at(net, c) for c in corners)
    assert abs(rep.value - want) <= 1e-12


def test_grid_monotone_in_resolution_on_nested_grids():
    net = random_net([2, 6, 3], seed=9)
    dom = SearchDomain.cube(2)
    coarse = grid_lower_bound(net, dom, resolution=3).value
    fine = grid_lower_bound(net, dom, resolution=5).value  # refines the 3-grid
    assert fine >= coarse - 1e-12


def test_grid_dimension_guard():
    net = random_net([7, 3, 2], seed=0)
    with pytest.raises(DimensionTooLarge):
        grid_lower_bound(net, resolution=3)


def test_annealing_linear_net_immediate():
    W = np.array([[1.0, -2.0], [0.5, 1.0]])
    rep = annealing_lower_bound(linear_net(W), schedule=AnnealingSchedule(proposals=5, seed=1))
    assert abs(rep.value - svd_dense(W).S[0]) <= 1e-9


def test_annealing_below_fine_grid_low_dim():
    net = random_net([2, 7, 4, 2], seed=10)
    dom = SearchDomain.cube(2)
    ann = annealing_lower_bound(net, dom, AnnealingSchedule(proposals=800, seed=2))
    grid = grid_lower_bound(net, dom, resolution=200)
    assert ann.value <= grid.value + 1e-9


def test_annealing_seeds_both_valid_lower_bounds():
    net = random_net([3, 8, 8, 2], seed=11)
    upper = seqlip_exact(net).value
    for seed in (1, 2):
        rep = annealing_lower_bound(net, schedule=AnnealingSchedule(proposals=300, seed=seed))
        assert rep.value <= upper + 1e-9


def test_annealing_deterministic():
    net = random_net([3, 6, 2], seed=12)
    sched = AnnealingSchedule(proposals=150, seed=9)
    a = annealing_lower_bound(net, schedule=sched)
    b = annealing_lower_bound(net, schedule=sched)
    assert a.value == b.value
    assert np.array_equal(a.params["argmax"], b.params["argmax"])


def test_dataset_single_point_linear():
    W = np.array([[3.0, 0.0], [0.0, 1.0]])
    rep = dataset_lower_bound(linear_net(W), [np.zeros(2)])
    assert abs(rep.value - 3.0) <= 1e-9


def test_dataset_equals_grid_on_same_nodes():
    net = random_net([2, 6, 3], seed=13)
    dom = SearchDomain.cube(2)
    res = 4
    axes = np.linspace(-1, 1, res)
    points = [np.array([a, b]) for a in axes for b in axes]
    assert abs(dataset_lower_bound(net, points).value
               - grid_lower_bound(net, dom, resolution=res).value) <= 1e-12


def test_dataset_seeding_annealing_only_improves():
    net = random_net([3, 9, 4, 2], seed=14)
    rng = np.random.default_rng(15)
    points = [rng.uniform(-1, 1, 3) for _ in range(100)]
    ds = dataset_lower_bound(net, points)
    best_point = points[ds.params["argmax_index"]]
    ann = annealing_lower_bound(net, schedule=AnnealingSchedule(proposals=200, seed=3),
                                x0=best_point)
    assert ann.value >= ds.value - 1e-12


def test_dataset_empty_raises():
    with pytest.raises(EmptyDataset):
        dataset_lower_bound(random_net([2, 3, 2], seed=0), [])


def test_lower_bounds_never_exceed_uppers(dense_corpus):
    for net in dense_corpus[:5]:
        upper = seqlip_exact(net).value
        d = net.input_shape[0]
        pts = [np.random.default_rng((50, i)).uniform(-1, 1, d) for i in range(20)]
        assert dataset_lower_bound(net, pts).value <= upper + 1e-9
