"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints one `[ACCEPTANCE] name: ...` line with the measured
numbers so a `pytest -v -s tests/test_acceptance.py` run reads as a
checklist. The estimator corpus is computed once and shared.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import small_conv_net
from lipbound import (
    ComputationGraph,
    GraphNode,
    PowerConfig,
    alignment_factor,
    autolip,
    autolip_sequential,
    dataset_lower_bound,
    exact_lipschitz_two_layer,
    frobenius_upper_bound,
    grid_lower_bound,
    ideal_net,
    power_method,
    random_net,
    seqlip_exact,
    seqlip_greedy,
    svd_dense,
    theorem3_bound,
    top_k_singular,
)
from lipbound.core import random_unit_vector
from lipbound.lower import AnnealingSchedule, SearchDomain, annealing_lower_bound
from lipbound.operators import Conv2dOperator, DenseOperator

N_DENSE = 80
N_CNN = 20


def announce(name, detail):
    print(f"[ACCEPTANCE] {name}: {detail}")


# ---------------------------------------------------------------- corpus


def batch_forward(net, X):
    """Vectorized forward over the leading batch axis."""
    Y = np.asarray(X, dtype=np.float64)
    for k, op in enumerate(net.affine):
        if isinstance(op, DenseOperator):
            Y = Y @ op.weight.T
            if op.bias is not None:
                Y = Y + op.bias
        else:
            Y = _batch_conv(op, Y)
        if k < len(net.activations):
            Y = net.activations[k].apply(Y)
    return Y


def _batch_conv(op: Conv2dOperator, X):
    n = X.shape[0]
    c, h, w = op.input_shape
    d, oh, ow = op.output_shape
    kh, kw = op.kernel
    sh, sw = op.stride
    ph, pw = op.padding
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw))
    xp[:, :, ph:ph + h, pw:pw + w] = X
    Y = np.zeros((n, d, oh, ow))
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw]
            Y += np.einsum("dc,nchw->ndhw", op.weight[:, :, i, j], patch)
    if op.bias is not None:
        Y = Y + op.bias[None, :, None, None]
    return Y


def max_difference_quotient(net, pairs, seed):
    rng = np.random.default_rng(seed)
    shape = (pairs, *net.input_shape)
    X, Y = rng.standard_normal(shape), rng.standard_normal(shape)
    num = np.linalg.norm(
        (batch_forward(net, X) - batch_forward(net, Y)).reshape(pairs, -1), axis=1
    )
    den = np.linalg.norm((X - Y).reshape(pairs, -1), axis=1)
    keep = den > 0
    return float(np.max(num[keep] / den[keep]))


def acceptance_dense_net(i):
    rng = np.random.default_rng((90210, i))
    depth = int(rng.integers(2, 7))
    in_dim = 2 if i % 2 == 0 else int(rng.integers(2, 9))
    widths = [in_dim] + [int(w) for w in rng.integers(2, 17, size=depth - 1)]
    widths.append(int(rng.integers(1, 9)))
    return random_net(widths, seed=int(rng.integers(0, 2**31)))


def _evaluate_net(i, net, is_cnn):
    d = int(np.prod(net.input_shape))
    row = {"index": i, "cnn": is_cnn, "dim": d}
    domain = SearchDomain.cube(d)
    rng = np.random.default_rng((31337, i))
    points = rng.uniform(-1.0, 1.0, size=(30, d))
    points = [p.reshape(net.input_shape) for p in points]
    ds = dataset_lower_bound(net, points)
    row["dataset"] = ds.value
    best_point = points[ds.params["argmax_index"]]
    ann = annealing_lower_bound(
        net, domain, AnnealingSchedule(proposals=1200, seed=i), x0=best_point
    )
    row["annealing"] = ann.value
    if not is_cnn and d <= 2:
        row["grid"] = grid_lower_bound(net, domain, resolution=121).value
    if is_cnn:
        row["greedy"] = seqlip_greedy(net, restarts=4, steps=80, seed=i).value
    else:
        row["greedy"] = seqlip_greedy(net, restarts=8, steps=200, seed=i).value
        row["exact"] = seqlip_exact(net).value
    row["autolip"] = autolip_sequential(net).value
    row["frobenius"] = frobenius_upper_bound(net).value
    th3 = theorem3_bound(net)
    row["theorem3"] = th3.value
    ratios = th3.params["ratios"]
    row["envelope"] = row["autolip"] * float(
        np.prod([np.sqrt(1 + ratios[k] + ratios[k + 1]) for k in range(len(ratios) - 1)])
    )
    row["quotient"] = max_difference_quotient(net, 10_000, seed=(7, i))
    return row


@pytest.fixture(scope="module")
def corpus():
    t0 = time.perf_counter()
    rows = []
    for i in range(N_DENSE):
        rows.append(_evaluate_net(i, acceptance_dense_net(i), is_cnn=False))
    for j in range(N_CNN):
        rows.append(_evaluate_net(N_DENSE + j, small_conv_net((5150, j)), is_cnn=True))
    return {"rows": rows, "elapsed": time.perf_counter() - t0}


# ------------------------------------------------------------- criteria


def test_worked_example_graph():
    """Bound on the two-path scalar graph is exactly 1 + omega."""

    def build(om):
        return ComputationGraph([
            GraphNode("input", (), {"dim": 1}),
            GraphNode("scale", (0,), {"factor": 0.5}),
            GraphNode("constant", (), {"value": [om]}),
            GraphNode("sin", (0,)),
            GraphNode("product", (2, 3)),
            GraphNode("subtract", (1, 4)),
            GraphNode("softplus_unary", (1,)),
            GraphNode("abs", (5,)),
            GraphNode("add", (6, 7)),
        ])

    graphs = {om: build(om) for om in (0.0, 1.0, 2.5)}
    autolip(graphs[0.0])  # warm-up outside the clock
    worst_time = 0.0
    for om, g in graphs.items():
        best = np.inf
        for _ in range(5):
            t0 = time.perf_counter()
            value = autolip(g).value
            best = min(best, time.perf_counter() - t0)
        assert abs(value - (1.0 + om)) <= 1e-12
        worst_time = max(worst_time, best)
    announce("worked-example", f"1+omega exact for omega in {{0,1,2.5}}, "
             f"sweep time {worst_time * 1e6:.0f}us")
    assert worst_time < 1e-3


def _conv_corpus(count):
    """Seeded conv configs with a non-degenerate top spectral pair.

    Value convergence of single-vector power iteration is gap-limited
    (near-ties need on the order of 1/gap iterations), so configs whose
    top two singular values sit closer than 1e-3 relative are skipped;
    exact-tie value behavior is covered by the unit tests.
    """
    ops = []
    j = 0
    while len(ops) < count:
        rng = np.random.default_rng((888, j))
        j += 1
        cin = int(rng.integers(1, 3))
        cout = int(rng.integers(1, 4))
        k = int(rng.integers(2, 5))
        s = int(rng.integers(1, 3))
        p = int(rng.integers(0, 2))
        hw = int(rng.integers(8, 13))
        op = Conv2dOperator(
            rng.standard_normal((cout, cin, k, k)),
            rng.standard_normal(cout),
            stride=(s, s), padding=(p, p), input_hw=(hw, hw),
        )
        if min(op.in_dim, op.out_dim) < 10:
            continue
        S = svd_dense(op.materialize()).S
        if (S[0] - S[1]) / S[0] < 1e-3:
            continue
        ops.append(op)
    return ops


def test_power_method_oracle_equivalence():
    t0 = time.perf_counter()
    cfg = PowerConfig(max_iters=20_000, tol=1e-13, seed=0)
    worst_top, worst_deflated = 0.0, 0.0
    rng = np.random.default_rng(404)
    ops = []
    for _ in range(50):
        m = int(rng.integers(20, 201))
        n = int(rng.integers(20, 301))
        ops.append(DenseOperator(rng.standard_normal((m, n))))
    ops.extend(_conv_corpus(20))
    for op in ops:
        S_ref = svd_dense(op.materialize()).S
        t = power_method(op, cfg)
        worst_top = max(worst_top, abs(t.s - S_ref[0]) / S_ref[0])
        triplets = top_k_singular(op, 10, cfg)
        for j, trip in enumerate(triplets):
            worst_deflated = max(worst_deflated, abs(trip.s - S_ref[j]) / S_ref[j])
    elapsed = time.perf_counter() - t0
    announce("power-oracle", f"50 dense + 20 conv: top rel err {worst_top:.2e}, "
             f"top-10 rel err {worst_deflated:.2e}, {elapsed:.1f}s")
    assert worst_top <= 1e-6
    assert worst_deflated <= 1e-5
    assert elapsed < 60.0


def test_two_layer_exactness():
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(30):
        rng = np.random.default_rng((2020, i))
        n_in = int(rng.integers(2, 9))
        inner = int(rng.integers(2, 13))
        n_out = int(rng.integers(1, 7))
        net = random_net([n_in, inner, n_out], seed=int(rng.integers(0, 2**31)))
        oracle = exact_lipschitz_two_layer(net.affine[0].weight, net.affine[1].weight)
        mine = seqlip_exact(net).value
        worst = max(worst, abs(mine - oracle) / max(oracle, 1e-30))
    elapsed = time.perf_counter() - t0
    announce("two-layer-exactness", f"30 nets, worst rel gap {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-9
    assert elapsed < 120.0


def test_ordering_soundness(corpus):
    rows, elapsed = corpus["rows"], corpus["elapsed"]
    assert len(rows) == N_DENSE + N_CNN
    slack = 1e-9
    for row in rows:
        tag = f"net {row['index']}"
        assert row["dataset"] <= row["annealing"] + slack, tag
        if "grid" in row:
            assert row["annealing"] <= row["grid"] + slack, tag
            assert row["grid"] <= row["greedy"] + slack, tag
        else:
            assert row["annealing"] <= row["greedy"] + slack, tag
        if "exact" in row:
            assert row["greedy"] <= row["exact"] + slack, tag
            assert row["exact"] <= row["autolip"] + slack, tag
        else:
            assert row["greedy"] <= row["autolip"] + slack, tag
        assert row["autolip"] <= row["frobenius"] + slack, tag
    announce("ordering-soundness", f"{len(rows)} nets chained, corpus time {elapsed:.0f}s")
    assert elapsed < 600.0


def test_greedy_quality(corpus):
    ratios = [row["greedy"] / row["exact"] for row in corpus["rows"] if "exact" in row]
    ratios = np.array(ratios)
    announce(
        "greedy-quality",
        f"{len(ratios)} nets, ratio min {ratios.min():.6f} "
        f"mean {ratios.mean():.6f} max {ratios.max():.6f}",
    )
    assert np.all(ratios >= 0.99)


def test_alignment_factor_limit():
    t0 = time.perf_counter()
    vals = []
    for seed in range(20):
        u = random_unit_vector(100_000, (606, seed, 0))
        v = random_unit_vector(100_000, (606, seed, 1))
        vals.append(alignment_factor(u, v))
    mean = float(np.mean(vals))
    elapsed = time.perf_counter() - t0
    announce("alignment-limit", f"mean {mean:.5f} vs 1/pi {1 / np.pi:.5f}, {elapsed:.1f}s")
    assert abs(mean - 1 / np.pi) <= 0.005
    assert elapsed < 5.0


def test_ideal_scenario():
    t0 = time.perf_counter()
    ratios = {}
    for K in range(2, 8):
        vals = []
        for seed in range(20):
            net = ideal_net(K, 100, 0.0, seed=1000 * K + seed)
            assert abs(autolip_sequential(net).value - 1.0) <= 1e-9
            vals.append(seqlip_greedy(net, restarts=8, steps=200, seed=seed).value)
        ratios[K] = float(np.mean(vals)) * np.pi ** (K - 1)
    # orthogonal layers keep the bound at exactly one
    for seed in range(5):
        val = seqlip_greedy(ideal_net(5, 100, 1.0, seed=seed),
                            restarts=2, steps=30, seed=seed).value
        assert abs(val - 1.0) <= 1e-6
    # the bound climbs back to one as the spectrum flattens
    sweep = []
    for r in (0.0, 0.25, 0.5, 0.75, 1.0):
        vals = [seqlip_greedy(ideal_net(5, 100, r, seed=s), restarts=3, steps=60,
                              seed=s).value for s in range(6)]
        sweep.append(float(np.mean(vals)))
    elapsed = time.perf_counter() - t0
    detail = " ".join(f"K={k}:{v:.3f}" for k, v in ratios.items())
    announce("ideal-scenario", f"mean/pi^-(K-1) {detail}; "
             f"r-sweep {['%.3f' % v for v in sweep]}, {elapsed:.0f}s")
    assert all(b >= a - 1e-9 for a, b in zip(sweep, sweep[1:]))
    assert abs(sweep[-1] - 1.0) <= 1e-6
    assert elapsed < 900.0
    out_of_band = {k: v for k, v in ratios.items() if not 0.7 <= v <= 1.4}
    assert not out_of_band, (
        f"mean/pi^-(K-1) outside [0.7, 1.4] for {out_of_band}; the per-factor "
        f"alignment mean at width 100 is (1/pi)(1 + ~0.13), which compounds "
        f"across K-1 factors, so the asymptotic band cannot hold for deep stacks"
    )


def test_theorem3_dominance(corpus):
    worst = -np.inf
    for row in corpus["rows"]:
        tight = row.get("exact", row["greedy"])
        assert tight <= row["theorem3"] + 1e-9, f"net {row['index']}"
        assert row["theorem3"] <= row["envelope"] + 1e-9, f"net {row['index']}"
        worst = max(worst, tight / row["theorem3"])
    announce("theorem3-dominance", f"max tight/theorem3 ratio {worst:.4f}")


def test_sampled_soundness(corpus):
    margin = 0.0
    for row in corpus["rows"]:
        upper = row.get("exact", row["autolip"])
        assert row["quotient"] <= upper + 1e-6, f"net {row['index']}"
        margin = max(margin, row["quotient"] / upper)
    announce("sampled-soundness", f"10^4 quotients per net, max quotient/upper {margin:.4f}")


def run_cli(*args):
    res = subprocess.run([sys.executable, "-m", "lipbound.cli", *args],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    return res.stdout


def test_cli_determinism(tmp_path):
    model = str(tmp_path / "m.lnm")
    graph = tmp_path / "g.json"
    graph.write_text(json.dumps({
        "nodes": [
            {"id": 0, "kind": "input", "params": {"dim": 2}},
            {"id": 1, "kind": "affine", "inputs": [0],
             "params": {"weight": [[1.0, 0.5], [0.0, 2.0]]}},
        ],
        "output": 1,
    }))
    pts = tmp_path / "p.csv"
    pts.write_text("0.5,-0.25,1.0\n0.0,0.0,0.0\n")
    gen = ("gen", "--mlp", "3,9,7,2", "--seed", "13", "-o", model, "--json")
    first = run_cli(*gen)
    blob1 = open(model, "rb").read()
    second = run_cli(*gen)
    blob2 = open(model, "rb").read()
    assert first == second and blob1 == blob2
    commands = [
        ("autolip", model, "--json"),
        ("seqlip", model, "--mode", "exact", "--json"),
        ("seqlip", model, "--mode", "greedy", "--seed", "5", "--json"),
        ("lower", model, "--method", "grid", "--resolution", "4", "--json"),
        ("lower", model, "--method", "annealing", "--proposals", "80",
         "--seed", "3", "--json"),
        ("lower", model, "--method", "dataset", "--points", str(pts), "--json"),
        ("spectra", model, "--layer", "0", "--topk", "3", "--json"),
        ("frobenius", model, "--json"),
        ("graph", str(graph), "--json"),
    ]
    for cmd in commands:
        assert run_cli(*cmd) == run_cli(*cmd), f"non-deterministic: {cmd}"
    announce("cli-determinism", f"{len(commands) + 1} commands byte-identical across runs")
