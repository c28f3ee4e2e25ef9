"""Probes, rank correlation, configuration sweeps and gain ranking.

Everything here consumes finalized Moments or plain feature/label arrays;
nothing touches raw corpora. The sweep enumerates (layer, k) cells, which
are independent of each other, so they run on a thread pool sized by the
NTPS_THREADS environment variable (0 or unset means use all cores).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .stats import Moments
from .subspace import autoregressive_subspace, k_from_proportion, ntps, perception_subspace

OLS_RIDGE_REL = 1e-8
LOGISTIC_STEP_FACTOR = 0.1
LOGISTIC_ITERS = 500


@dataclass(frozen=True)
class ProbeFit:
    weights: np.ndarray
    mse: float


@dataclass(frozen=True)
class LogisticFit:
    weights: np.ndarray
    accuracy: float


@dataclass(frozen=True)
class SweepCell:
    dataset: str | None
    layer: int
    k_prop: float
    ntps: float


@dataclass(frozen=True)
class SweepResult:
    """Grid of overlap scores, optionally joined against a metric.

    spearman_by_config maps (layer, k_prop) to the rank correlation of the
    scores against the joined per-dataset metric; best_config is the cell
    with the largest |r|, ties broken by earlier layer then smaller k.
    """

    cells: tuple[SweepCell, ...]
    spearman_by_config: dict[tuple[int, float], float] | None
    best_config: tuple[int, float] | None


@dataclass(frozen=True)
class GainEntry:
    dataset: str
    ntps: float
    observed_gain: float | None


@dataclass(frozen=True)
class GainPrediction:
    """Datasets ranked by adaptation headroom (ascending overlap score)."""

    ranking: tuple[GainEntry, ...]
    spearman_r: float | None


def _check_xy(features: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"bad probe shapes: features {x.shape}, labels {y.shape}")
    if x.shape[0] == 0:
        raise ValueError("empty probe input")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("probe input has non-finite entries")
    return x, y


def one_hot(labels, c: int) -> np.ndarray:
    """(n, c) one-hot matrix from integer class indices."""
    idx = np.asarray(labels, dtype=np.int64)
    if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= c)):
        raise ValueError("labels must be 1-D indices in [0, c)")
    out = np.zeros((idx.size, c))
    out[np.arange(idx.size), idx] = 1.0
    return out


def ols_probe(features, labels) -> ProbeFit:
    """Least-squares linear readout with a small relative ridge.

    Returns the weights minimizing mean ||x_i @ W - y_i||^2 and that mean.
    Zero or rank-deficient features fall back to the pseudoinverse, so an
    all-zero design gives zero weights and mse = mean ||y_i||^2.
    """
    x, y = _check_xy(features, labels)
    n, d = x.shape
    gram = x.T @ x / n
    rhs = x.T @ y / n
    ridge = OLS_RIDGE_REL * float(np.trace(gram)) / d
    try:
        weights = np.linalg.solve(gram + ridge * np.eye(d), rhs)
    except np.linalg.LinAlgError:
        weights = np.linalg.pinv(gram + ridge * np.eye(d)) @ rhs
    mse = float(np.sum((x @ weights - y) ** 2)) / n
    return ProbeFit(weights=weights, mse=mse)


def softmax_cross_entropy(
    weights: np.ndarray, features: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(features @ weights) and its gradient."""
    n = features.shape[0]
    logits = features @ weights
    logits = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    loss = float(-np.sum(labels * np.log(np.maximum(probs, 1e-300)))) / n
    grad = features.T @ (probs - labels) / n
    return loss, grad


def logistic_probe(features, labels, iters: int = LOGISTIC_ITERS) -> LogisticFit:
    """Multinomial logistic readout by deterministic full-batch descent.

    Starts from zero weights and takes `iters` steps of size 0.1 / L, with
    L = lambda_max(X^T X) / (2n) the softmax gradient's Lipschitz bound.
    No regularization; labels are one-hot rows. Reruns are bit-identical.
    """
    x, y = _check_xy(features, labels)
    n = x.shape[0]
    lip = float(np.linalg.eigvalsh(x.T @ x)[-1]) / (2.0 * n)
    weights = np.zeros((x.shape[1], y.shape[1]))
    if lip > 0.0:
        step = LOGISTIC_STEP_FACTOR / lip
        for _ in range(iters):
            _, grad = softmax_cross_entropy(weights, x, y)
            weights = weights - step * grad
    accuracy = float(np.mean(np.argmax(x @ weights, axis=1) == np.argmax(y, axis=1)))
    return LogisticFit(weights=weights, accuracy=accuracy)


def spearman(x, y) -> float:
    """Rank correlation with average ranks on ties.

    Raises on length mismatch, fewer than 2 points, or zero rank variance
    in either input.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
        raise ValueError(f"inputs must be equal-length 1-D, got {x.shape}, {y.shape}")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    rx = rankdata(x)
    ry = rankdata(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    sxx = float(np.sum(rx * rx))
    syy = float(np.sum(ry * ry))
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("zero rank variance")
    # single sqrt of the product: perfectly concordant (or reversed)
    # rankings come out as exactly +/-1.0
    r = float(np.dot(rx, ry)) / np.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def max_workers() -> int:
    """Worker cap from NTPS_THREADS (0 or unset = all cores)."""
    raw = os.environ.get("NTPS_THREADS", "0").strip()
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"NTPS_THREADS must be an integer, got {raw!r}") from None
    if value < 0:
        raise ValueError(f"NTPS_THREADS must be >= 0, got {value}")
    return value if value > 0 else (os.cpu_count() or 1)


def score_stats(moments: Moments, k_prop: float, pooling: str = "mean") -> float:
    """Overlap score for one stats summary at a proportional rank."""
    k = k_from_proportion(k_prop, moments.d)
    u = perception_subspace(moments, k, pooling=pooling)
    v = autoregressive_subspace(moments, k)
    return ntps(u, v)


def sweep(
    per_layer_stats,
    k_grid,
    metrics=None,
    pooling: str = "mean",
) -> SweepResult:
    """Overlap scores over a (layer, k proportion) grid.

    Without metrics, per_layer_stats maps layer id -> Moments for a single
    dataset. With metrics (dataset -> performance value), the keys must be
    (dataset, layer) pairs; each grid cell is then rank-correlated against
    the metric across datasets and the strongest cell reported. A cell
    whose scores have zero rank variance gets r = nan and is skipped when
    picking best_config.
    """
    k_grid = [float(k) for k in k_grid]
    if not k_grid:
        raise ValueError("empty k grid")
    if any(not 0.0 < k <= 1.0 for k in k_grid):
        raise ValueError(f"k proportions must lie in (0, 1], got {k_grid}")
    if not per_layer_stats:
        raise ValueError("no stats given")

    if metrics is None:
        keyed = {(None, int(layer)): m for layer, m in per_layer_stats.items()}
    else:
        keyed = {}
        for key, m in per_layer_stats.items():
            dataset, layer = key
            keyed[(str(dataset), int(layer))] = m
        datasets = sorted({ds for ds, _ in keyed})
        if len(datasets) < 2:
            raise ValueError("joining metrics needs at least 2 datasets")
        missing = [ds for ds in datasets if ds not in metrics]
        if missing:
            raise ValueError(f"no metric value for datasets: {missing}")

    order = sorted(keyed, key=lambda key: (key[0] or "", key[1]))
    jobs = [(ds, layer, k) for ds, layer in order for k in sorted(k_grid)]

    workers = max_workers()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(
                pool.map(lambda j: score_stats(keyed[(j[0], j[1])], j[2], pooling), jobs)
            )
    else:
        scores = [score_stats(keyed[(ds, layer)], k, pooling) for ds, layer, k in jobs]

    cells = tuple(
        SweepCell(dataset=ds, layer=layer, k_prop=k, ntps=score)
        for (ds, layer, k), score in zip(jobs, scores)
    )

    if metrics is None:
        return SweepResult(cells=cells, spearman_by_config=None, best_config=None)

    by_config: dict[tuple[int, float], dict[str, float]] = {}
    for cell in cells:
        by_config.setdefault((cell.layer, cell.k_prop), {})[cell.dataset] = cell.ntps
    r_by_config: dict[tuple[int, float], float] = {}
    best: tuple[int, float] | None = None
    best_r = -1.0
    for config in sorted(by_config):
        per_ds = by_config[config]
        names = sorted(per_ds)
        if len(names) < 2:
            raise ValueError(f"config {config} missing datasets for the join")
        try:
            r = spearman(
                [per_ds[ds] for ds in names], [float(metrics[ds]) for ds in names]
            )
        except ValueError:
            r_by_config[config] = float("nan")
            continue
        r_by_config[config] = r
        if abs(r) > best_r:
            best_r = abs(r)
            best = config
    return SweepResult(cells=cells, spearman_by_config=r_by_config, best_config=best)


def predict_lora_gain(ntps_by_dataset, observed=None) -> GainPrediction:
    """Rank datasets by expected adaptation gain (lowest overlap first).

    A low overlap score means the next-token subspace is missing label
    directions, so fine-tuning has the most room to help. When observed
    gains are supplied for at least 2 of the datasets, their rank
    correlation against the scores is reported.
    """
    items = {str(ds): float(v) for ds, v in dict(ntps_by_dataset).items()}
    if len(items) < 2:
        raise ValueError(f"need at least 2 datasets, got {len(items)}")
    observed = {str(k): float(v) for k, v in dict(observed or {}).items()}

    ranked = sorted(items.items(), key=lambda kv: (kv[1], kv[0]))
    ranking = tuple(
        GainEntry(dataset=ds, ntps=score, observed_gain=observed.get(ds))
        for ds, score in ranked
    )
    common = [entry for entry in ranking if entry.observed_gain is not None]
    r = None
    if len(common) >= 2:
        r = spearman(
            [entry.ntps for entry in common],
            [entry.observed_gain for entry in common],
        )
    return GainPrediction(ranking=ranking, spearman_r=r)
