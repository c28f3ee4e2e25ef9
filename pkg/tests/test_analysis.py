"""Probes, rank correlation, sweeps, and the gain ranking."""

import math

import numpy as np
import pytest

from ntps import analysis
from ntps.analysis import (
    logistic_probe,
    max_workers,
    ols_probe,
    one_hot,
    predict_lora_gain,
    score_stats,
    softmax_cross_entropy,
    spearman,
    sweep,
)
from ntps.subspace import autoregressive_subspace, ntps, perception_subspace
from ntps.synth import SynthConfig, corpus_moments, generate


def _moments(overlap, seed, n=600):
    config = SynthConfig(d=8, c=5, k_true=4, overlap=overlap, n=n, seed=seed)
    return corpus_moments(generate(config))


# --- ols_probe -------------------------------------------------------------


def test_ols_probe_recovers_realizable_map():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((200, 5))
    w_true = rng.standard_normal((5, 3))
    fit = ols_probe(x, x @ w_true)
    assert fit.mse < 1e-10
    assert np.allclose(fit.weights, w_true, atol=1e-5)


def test_ols_probe_matches_lstsq():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((40, 6))
    y = rng.standard_normal((40, 3))
    fit = ols_probe(x, y)
    w_ref = np.linalg.lstsq(x, y, rcond=None)[0]
    assert np.allclose(fit.weights, w_ref, atol=1e-6)
    mse_ref = float(np.sum((x @ w_ref - y) ** 2)) / 40
    assert abs(fit.mse - mse_ref) < 1e-8


def test_ols_probe_zero_features_falls_back():
    y = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    fit = ols_probe(np.zeros((3, 4)), y)
    assert np.array_equal(fit.weights, np.zeros((4, 2)))
    assert fit.mse == pytest.approx(float(np.sum(y * y)) / 3)


def test_probe_input_validation():
    with pytest.raises(ValueError, match="bad probe shapes"):
        ols_probe(np.zeros((3, 2)), np.zeros((4, 1)))
    with pytest.raises(ValueError, match="empty probe input"):
        ols_probe(np.zeros((0, 2)), np.zeros((0, 1)))
    with pytest.raises(ValueError, match="non-finite"):
        ols_probe(np.array([[1.0, np.nan]]), np.array([1.0]))
    with pytest.raises(ValueError, match="non-finite"):
        logistic_probe(np.array([[1.0, 2.0]]), np.array([[np.inf]]))


# --- one_hot ---------------------------------------------------------------


def test_one_hot():
    out = one_hot([2, 0, 1], 3)
    assert np.array_equal(
        out, np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    )
    with pytest.raises(ValueError, match="1-D indices"):
        one_hot([3], 3)
    with pytest.raises(ValueError, match="1-D indices"):
        one_hot([-1], 3)
    with pytest.raises(ValueError, match="1-D indices"):
        one_hot([[0, 1]], 3)


# --- logistic_probe --------------------------------------------------------


def test_logistic_probe_separates_blobs():
    rng = np.random.default_rng(0)
    x = np.vstack(
        [
            rng.standard_normal((50, 2)) + np.array([4.0, 0.0]),
            rng.standard_normal((50, 2)) + np.array([-4.0, 0.0]),
        ]
    )
    y = one_hot([0] * 50 + [1] * 50, 2)
    fit = logistic_probe(x, y)
    assert fit.accuracy == 1.0


def test_logistic_probe_random_labels_near_chance():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((400, 4))
    y = one_hot(rng.integers(0, 2, 400), 2)
    fit = logistic_probe(x, y)
    # training accuracy on pure noise: chance plus a small overfit margin
    assert 0.45 <= fit.accuracy <= 0.62


def test_logistic_probe_deterministic():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((60, 3))
    y = one_hot(rng.integers(0, 3, 60), 3)
    a = logistic_probe(x, y)
    b = logistic_probe(x, y)
    assert np.array_equal(a.weights, b.weights) and a.accuracy == b.accuracy


def test_softmax_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((7, 3))
    y = one_hot(rng.integers(0, 4, 7), 4)
    w = 0.3 * rng.standard_normal((3, 4))
    _, grad = softmax_cross_entropy(w, x, y)
    eps = 1e-6
    for i in range(3):
        for j in range(4):
            bump = np.zeros_like(w)
            bump[i, j] = eps
            hi, _ = softmax_cross_entropy(w + bump, x, y)
            lo, _ = softmax_cross_entropy(w - bump, x, y)
            assert abs((hi - lo) / (2 * eps) - grad[i, j]) < 1e-5


# --- spearman --------------------------------------------------------------


def _rank_with_ties(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


def _spearman_reference(x, y):
    rx = _rank_with_ties(list(x))
    ry = _rank_with_ties(list(y))
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return num / den


def test_spearman_matches_average_rank_reference():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(3, 12))
        x = rng.integers(0, 4, n).astype(float)  # coarse values force ties
        y = rng.integers(0, 4, n).astype(float)
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert spearman(x, y) == pytest.approx(_spearman_reference(x, y), abs=1e-12)


def test_spearman_monotone_extremes():
    x = [1.0, 2.0, 5.0, 9.0]
    assert spearman(x, [2.0, 4.0, 4.5, 100.0]) == 1.0
    assert spearman(x, [5.0, 1.0, 0.0, -3.0]) == -1.0


def test_spearman_validation():
    with pytest.raises(ValueError, match="equal-length"):
        spearman([1.0, 2.0], [1.0])
    with pytest.raises(ValueError, match="at least 2"):
        spearman([1.0], [1.0])
    with pytest.raises(ValueError, match="zero rank variance"):
        spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


# --- worker cap ------------------------------------------------------------


def test_max_workers_env(monkeypatch):
    import os

    monkeypatch.delenv("NTPS_THREADS", raising=False)
    assert max_workers() == (os.cpu_count() or 1)
    monkeypatch.setenv("NTPS_THREADS", "0")
    assert max_workers() == (os.cpu_count() or 1)
    monkeypatch.setenv("NTPS_THREADS", "3")
    assert max_workers() == 3
    monkeypatch.setenv("NTPS_THREADS", "abc")
    with pytest.raises(ValueError, match="NTPS_THREADS"):
        max_workers()
    monkeypatch.setenv("NTPS_THREADS", "-1")
    with pytest.raises(ValueError, match=">= 0"):
        max_workers()


# --- score_stats and sweep --------------------------------------------------


def test_score_stats_matches_direct_computation():
    moments = _moments(0.6, seed=9)
    for k_prop, k in ((1.0, 8), (0.5, 4)):
        direct = ntps(
            perception_subspace(moments, k, pooling="mean"),
            autoregressive_subspace(moments, k),
        )
        assert score_stats(moments, k_prop) == direct


def test_sweep_single_dataset_grid(monkeypatch):
    per_layer = {1: _moments(0.8, seed=21), 0: _moments(0.2, seed=20)}
    result = sweep(per_layer, [0.5, 0.25])
    assert result.spearman_by_config is None and result.best_config is None
    assert [(cell.layer, cell.k_prop) for cell in result.cells] == [
        (0, 0.25),
        (0, 0.5),
        (1, 0.25),
        (1, 0.5),
    ]
    assert all(cell.dataset is None for cell in result.cells)
    assert all(0.0 <= cell.ntps <= 1.0 for cell in result.cells)

    # the thread count must not change the numbers
    monkeypatch.setenv("NTPS_THREADS", "1")
    serial = sweep(per_layer, [0.5, 0.25])
    monkeypatch.setenv("NTPS_THREADS", "4")
    threaded = sweep(per_layer, [0.5, 0.25])
    assert [cell.ntps for cell in serial.cells] == [cell.ntps for cell in threaded.cells]
    assert [cell.ntps for cell in serial.cells] == [cell.ntps for cell in result.cells]


def test_sweep_validation():
    per_layer = {0: _moments(0.5, seed=30, n=200)}
    with pytest.raises(ValueError, match="empty k grid"):
        sweep(per_layer, [])
    with pytest.raises(ValueError, match="k proportions"):
        sweep(per_layer, [0.0])
    with pytest.raises(ValueError, match="k proportions"):
        sweep(per_layer, [1.5])
    with pytest.raises(ValueError, match="no stats"):
        sweep({}, [0.5])


def test_sweep_joined_against_metrics():
    stats = {}
    plants = {"low": 0.1, "mid": 0.5, "high": 0.9}
    for i, (name, overlap) in enumerate(sorted(plants.items())):
        for layer in (0, 1):
            stats[(name, layer)] = _moments(overlap, seed=40 + 2 * i + layer, n=1200)
    metrics = {name: plants[name] for name in plants}

    result = sweep(stats, [0.5], metrics=metrics)
    assert set(result.spearman_by_config) == {(0, 0.5), (1, 0.5)}
    # scores track the plant, and the metric IS the plant: perfect ranks
    for r in result.spearman_by_config.values():
        assert r == 1.0
    # tie on |r| resolves to the earliest (layer, k) in sort order
    assert result.best_config == (0, 0.5)

    with pytest.raises(ValueError, match="at least 2 datasets"):
        sweep({("solo", 0): stats[("low", 0)]}, [0.5], metrics={"solo": 1.0})
    with pytest.raises(ValueError, match="no metric value"):
        sweep(stats, [0.5], metrics={"low": 1.0, "mid": 2.0})


def test_sweep_joined_ragged_layers_rejected():
    stats = {
        ("a", 0): _moments(0.2, seed=50, n=400),
        ("a", 1): _moments(0.2, seed=51, n=400),
        ("b", 0): _moments(0.8, seed=52, n=400),
    }
    with pytest.raises(ValueError, match="missing datasets"):
        sweep(stats, [0.5], metrics={"a": 1.0, "b": 2.0})


def test_sweep_joined_degenerate_scores_give_nan():
    shared = _moments(0.5, seed=60, n=400)
    stats = {("a", 0): shared, ("b", 0): shared}
    result = sweep(stats, [0.5], metrics={"a": 1.0, "b": 2.0})
    assert math.isnan(result.spearman_by_config[(0, 0.5)])
    assert result.best_config is None


# --- predict_lora_gain -----------------------------------------------------


def test_predict_lora_gain_ranking_and_correlation():
    scores = {"x": 0.8, "y": 0.2, "z": 0.5}
    observed = {"x": 0.1, "y": 0.9, "z": 0.5}
    pred = predict_lora_gain(scores, observed)
    assert [entry.dataset for entry in pred.ranking] == ["y", "z", "x"]
    assert [entry.observed_gain for entry in pred.ranking] == [0.9, 0.5, 0.1]
    assert pred.spearman_r == -1.0


def test_predict_lora_gain_edge_cases():
    pred = predict_lora_gain({"b": 0.5, "a": 0.5, "c": 0.1})
    assert [entry.dataset for entry in pred.ranking] == ["c", "a", "b"]
    assert pred.spearman_r is None

    partial = predict_lora_gain({"a": 0.3, "b": 0.7}, observed={"a": 1.0})
    assert partial.spearman_r is None
    assert partial.ranking[0].observed_gain == 1.0

    with pytest.raises(ValueError, match="at least 2 datasets"):
        predict_lora_gain({"only": 0.5})
