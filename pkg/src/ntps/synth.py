"""Synthetic corpora with a planted subspace overlap, and a theorem suite.

The generator plants two k_true-dimensional frames: A drives the token
dynamics and B drives the labels, with B = sqrt(rho) A + sqrt(1-rho) A_perp
columnwise so that the overlap statistic between their spans is exactly
rho for any basis choice. Tokens evolve as

    x_{t+1} = W0^T A^T (x_1 + ... + x_t) + sigma * noise

with W0^T = A @ W_mix, i.e. the predictable part of every step lies inside
col(A). The start token gets independent components along col(A) and
col(A_perp) (plus noise), which keeps labels informative at rho = 0 and
makes the noiseless endpoints exact: at sigma = 0 every token lives in the
planted frame, so recovered subspaces match the plant to machine
precision.

theorem_suite() replays the library's guarantees on a grid of such
corpora: overlap recovery, decoder optimality against perturbations and
gradient descent, the excess-loss sandwich, and the margin-decoding
certificate. The report is a plain JSON-ready dict.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import spearman
from .stats import Moments, SentenceSample, SufficientStats
from .subspace import (
    Subspace,
    autoregressive_subspace,
    excess_loss_and_bounds,
    margin_decode_check,
    ntps,
    optimal_w,
    optimal_z,
    perception_loss,
    perception_subspace,
)

# Spectral norm of the autoregressive mixing map; keeps prefix sums from
# exploding over the longest admissible sentences.
DRIVE_GAIN = 0.5

GD_REL_TOL = 1e-6
PERTURB_TOL = 1e-12
SANDWICH_TOL = 1e-8
ENDPOINT_HIGH = 0.99
ENDPOINT_LOW = 0.05
RECOVERY_MIN_R = 0.95


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of one planted corpus.

    overlap is the planted score in [0, 1]; any overlap below 1 needs
    d >= 2 * k_true so the orthogonal frame exists. k_true may not exceed
    c - 1: one-hot labels carry at most c - 1 informative directions.
    """

    d: int
    c: int
    k_true: int
    overlap: float
    n: int
    len_range: tuple[int, int] = (4, 10)
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d < 1 or self.c < 2 or self.n < 1:
            raise ValueError("need d >= 1, c >= 2, n >= 1")
        if not 1 <= self.k_true <= min(self.d, self.c - 1):
            raise ValueError(
                f"k_true must lie in [1, min(d, c-1)] = "
                f"[1, {min(self.d, self.c - 1)}], got {self.k_true}"
            )
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError(f"overlap must be in [0, 1], got {self.overlap}")
        if self.overlap < 1.0 and self.d < 2 * self.k_true:
            raise ValueError(
                f"overlap {self.overlap} infeasible: d={self.d} < 2*k_true="
                f"{2 * self.k_true}"
            )
        lo, hi = self.len_range
        if not 2 <= lo <= hi:
            raise ValueError(f"len_range must satisfy 2 <= lo <= hi, got {self.len_range}")
        if self.noise_sigma < 0.0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def _conformal_mix(rng: np.random.Generator, k: int, gain: float) -> np.ndarray:
    # gain * (rotated skew-orthogonal J): since J J^T = I and J^T = -J,
    # (I + W)(I + W)^T = (1 + gain^2) I, so prefix sums scale uniformly and
    # every planted drive direction is equally identifiable. A raw Gaussian
    # mix can be so ill-conditioned that the weakest direction's pencil
    # eigenvalue drowns in sampling noise. Odd k leaves one scalar channel
    # at gain (mildly anisotropic); the validation grids use even k.
    j = np.zeros((k, k))
    for i in range(0, k - 1, 2):
        j[i, i + 1] = -1.0
        j[i + 1, i] = 1.0
    if k % 2:
        j[k - 1, k - 1] = 1.0
    r = np.linalg.qr(rng.standard_normal((k, k)))[0]
    return gain * r @ j @ r.T


def _simplex_rows(k: int, c: int) -> np.ndarray:
    # First k rows of an orthonormal basis of the zero-sum hyperplane in
    # R^c (Helmert construction): rows are orthonormal, columns sum to 0.
    rows = np.zeros((k, c))
    for i in range(1, k + 1):
        rows[i - 1, :i] = 1.0
        rows[i - 1, i] = -float(i)
        rows[i - 1] /= np.sqrt(i * (i + 1.0))
    return rows


def _pooled_label_cov(config: SynthConfig, a, a_perp, b, w_mix) -> np.ndarray:
    # Exact covariance of B^T (sum of tokens), averaged over the uniform
    # length mixture: the prefix sum follows p_{t+1} = (I + D) p_t + noise.
    d = config.d
    drive = a @ w_mix @ a.T
    step = np.eye(d) + drive
    cov = a @ a.T + (a_perp @ a_perp.T if a_perp is not None else 0.0)
    cov = cov + config.noise_sigma**2 * np.eye(d)
    lo, hi = config.len_range
    total = np.zeros((d, d))
    for ell in range(2, hi + 1):
        cov = step @ cov @ step.T + config.noise_sigma**2 * np.eye(d)
        if ell >= lo:
            total += cov
    return b.T @ (total / (hi - lo + 1)) @ b


def _draw_model(rng: np.random.Generator, config: SynthConfig):
    k = config.k_true
    wide = config.d >= 2 * k
    frame = np.linalg.qr(rng.standard_normal((config.d, 2 * k if wide else k)))[0]
    a = frame[:, :k]
    a_perp = frame[:, k:] if wide else None
    if config.overlap == 1.0:
        b = a.copy()
    else:
        b = np.sqrt(config.overlap) * a + np.sqrt(1.0 - config.overlap) * a_perp
    w_mix = _conformal_mix(rng, k, DRIVE_GAIN)

    # Label map: whiten the pooled B-coordinates, rotate randomly, then
    # read out against regular-simplex directions. The whitening keeps
    # every one of the k planted label directions equally informative;
    # a raw Gaussian Z0 can leave the k-th direction orders of magnitude
    # weaker than the first, in which case its recovered eigenvector is
    # sampling noise rather than plant.
    rotation = np.linalg.qr(rng.standard_normal((k, k)))[0]
    cov_b = _pooled_label_cov(config, a, a_perp, b, w_mix)
    w, q = np.linalg.eigh((cov_b + cov_b.T) / 2.0)
    whiten = (q / np.sqrt(np.maximum(w, 1e-12 * w[-1]))) @ q.T
    z0 = whiten @ rotation @ _simplex_rows(k, config.c)
    return a, a_perp, b, w_mix, z0


def planted_frames(config: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """The (A, B) frames generate() will use for this config."""
    a, _, b, _, _ = _draw_model(np.random.default_rng(config.seed), config)
    return a, b


def generate(config: SynthConfig, shard: int | None = None) -> list[SentenceSample]:
    """Materialize one corpus; same (config, shard) gives identical bits."""
    seed = config.seed if shard is None else [config.seed, int(shard)]
    rng = np.random.default_rng(seed)
    a, a_perp, b, w_mix, z0 = _draw_model(rng, config)
    drive = a @ w_mix  # maps A-coordinates of the prefix back into col(A)
    sigma = config.noise_sigma
    lo, hi = config.len_range

    samples = []
    for _ in range(config.n):
        ell = int(rng.integers(lo, hi + 1))
        tokens = np.empty((ell, config.d))
        start = a @ rng.standard_normal(config.k_true)
        if a_perp is not None:
            start = start + a_perp @ rng.standard_normal(config.k_true)
        if sigma > 0.0:
            start = start + sigma * rng.standard_normal(config.d)
        tokens[0] = start
        prefix = start.copy()
        for t in range(1, ell):
            nxt = drive @ (a.T @ prefix)
            if sigma > 0.0:
                nxt = nxt + sigma * rng.standard_normal(config.d)
            tokens[t] = nxt
            prefix += nxt
        label = int(np.argmax(z0.T @ (b.T @ prefix)))
        samples.append(SentenceSample(tokens=tokens, label=label))
    return samples


def corpus_moments(samples) -> Moments:
    """Accumulate and finalize a corpus in one call."""
    samples = list(samples)
    if not samples:
        raise ValueError("empty corpus")
    stats = SufficientStats(d=samples[0].tokens.shape[1], c=_label_span(samples))
    stats.accumulate_all(samples)
    return stats.finalize()


def _label_span(samples) -> int:
    return max(2, max(sample.label for sample in samples) + 1)


def default_grid(seed: int = 0, dims=(8, 16, 32)) -> list[SynthConfig]:
    """The standard validation grid: d x overlap at a fixed noise level.

    The sample count scales with d: the label pencil's sampling noise
    enters at the sqrt(d * c / n) scale and has to stay well under the
    planted eigenvalues for the recovered subspace to be plant, not junk.
    """
    configs = []
    for di, d in enumerate(dims):
        for oi, overlap in enumerate((0.0, 0.25, 0.5, 0.75, 1.0)):
            configs.append(
                SynthConfig(
                    d=d,
                    c=5,
                    k_true=4,
                    overlap=overlap,
                    n=150 * d,
                    len_range=(4, 10),
                    noise_sigma=0.1,
                    seed=seed * 1000 + di * 10 + oi,
                )
            )
    return configs


# ---------------------------------------------------------------------------
# Direct-evaluation helpers shared by the suite and the test suite.


def autoregressive_mse(samples, encoder, decoder: np.ndarray) -> float:
    """Mean over sentences of sum_t ||W^T V^T p_t - x_{t+1}||^2."""
    encoder = np.asarray(getattr(encoder, "basis", encoder), dtype=np.float64)
    total = 0.0
    for sample in samples:
        x = sample.tokens
        prefixes = np.cumsum(x[:-1], axis=0)
        pred = prefixes @ encoder @ decoder
        total += float(np.sum((pred - x[1:]) ** 2))
    return total / len(samples)


def pooled_label_mse(samples, c: int, encoder, decoder, pooling: str = "sum") -> float:
    """Mean ||Z^T E^T pooled_x - Y||^2 evaluated directly on a corpus."""
    encoder = np.asarray(getattr(encoder, "basis", encoder), dtype=np.float64)
    total = 0.0
    for sample in samples:
        pooled = sample.tokens.sum(0) if pooling == "sum" else sample.tokens.mean(0)
        pred = decoder.T @ (encoder.T @ pooled)
        target = np.zeros(c)
        target[sample.label] = 1.0
        total += float(np.sum((pred - target) ** 2))
    return total / len(samples)


def _ar_loss_quadratic(moments: Moments, sq_next: float, basis, w) -> float:
    inner = basis.T @ moments.cov0 @ basis
    cross = basis.T @ moments.cov1
    return float(np.sum(w * (inner @ w)) - 2.0 * np.sum(w * cross) + sq_next)


def _gd_minimize(inner: np.ndarray, cross: np.ndarray, w0: np.ndarray, iters: int = 2000):
    # Gradient descent on Tr(W^T inner W) - 2 Tr(W^T cross) + const.
    lip = 2.0 * float(np.linalg.eigvalsh(inner)[-1])
    if lip <= 0.0:
        return w0
    step = 1.0 / lip
    w = w0.copy()
    for _ in range(iters):
        grad = 2.0 * (inner @ w - cross)
        w = w - step * grad
        if float(np.abs(grad).max()) < 1e-13 * (1.0 + float(np.abs(w).max())):
            break
    return w


def _check_decoder_optimality(
    rng: np.random.Generator,
    moments: Moments,
    samples,
    v: Subspace,
    u: Subspace,
    perturbations: int = 20,
) -> dict:
    sq_next = sum(float(np.sum(s.tokens[1:] ** 2)) for s in samples) / len(samples)

    w_star = optimal_w(moments, v)
    loss_w = _ar_loss_quadratic(moments, sq_next, v.basis, w_star)
    w_slack = np.inf
    for _ in range(perturbations):
        delta = rng.standard_normal(w_star.shape)
        delta *= 1e-3 / np.linalg.norm(delta)
        trial = _ar_loss_quadratic(moments, sq_next, v.basis, w_star + delta)
        w_slack = min(w_slack, trial - loss_w)
    inner = v.basis.T @ moments.cov0 @ v.basis
    cross = v.basis.T @ moments.cov1
    w_gd = _gd_minimize(inner, cross, rng.standard_normal(w_star.shape))
    loss_w_gd = _ar_loss_quadratic(moments, sq_next, v.basis, w_gd)
    w_gd_gap = abs(loss_w_gd - loss_w) / max(1.0, abs(loss_w))

    z_star = optimal_z(moments, u, pooling="sum")
    loss_z = perception_loss(moments, u, pooling="sum")
    n_mat = moments.sum_xx
    m_mat = moments.sum_xy
    inner_z = u.basis.T @ n_mat @ u.basis
    cross_z = u.basis.T @ m_mat

    def z_loss(z):
        return float(
            np.sum(z * (inner_z @ z)) - 2.0 * np.sum(z * cross_z) + moments.yy_trace
        )

    z_slack = np.inf
    for _ in range(perturbations):
        delta = rng.standard_normal(z_star.shape)
        delta *= 1e-3 / np.linalg.norm(delta)
        z_slack = min(z_slack, z_loss(z_star + delta) - loss_z)
    z_gd = _gd_minimize(inner_z, cross_z, rng.standard_normal(z_star.shape))
    z_gd_gap = abs(z_loss(z_gd) - loss_z) / max(1.0, abs(loss_z))

    scale_w = PERTURB_TOL * max(1.0, abs(loss_w))
    scale_z = PERTURB_TOL * max(1.0, abs(loss_z))
    return {
        "w_perturb_slack": w_slack,
        "w_gd_rel_gap": w_gd_gap,
        "z_perturb_slack": z_slack,
        "z_gd_rel_gap": z_gd_gap,
        "pass": bool(
            w_slack >= -scale_w
            and z_slack >= -scale_z
            and w_gd_gap <= GD_REL_TOL
            and z_gd_gap <= GD_REL_TOL
        ),
    }


def _check_margin_decoding(seed: int, trials: int = 1000) -> dict:
    rng = np.random.default_rng(seed)
    vocab = rng.standard_normal((64, 16))
    vocab /= np.linalg.norm(vocab, axis=1, keepdims=True)
    target = vocab[0]

    probe = margin_decode_check(vocab, target, target)
    radius = probe.margin / probe.diameter
    directions = rng.standard_normal((trials, 16))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    scales = [4.0, 2.0, 1.5, 1.01, 0.99, 0.75, 0.5, 0.25]
    fractions = []
    violations = 0
    for scale in scales:
        correct = 0
        for i in range(trials):
            check = margin_decode_check(
                vocab, target, target + scale * radius * directions[i]
            )
            if check.guaranteed and not check.correct:
                violations += 1
            correct += int(check.correct)
        fractions.append(correct / trials)
    monotone = all(b >= a for a, b in zip(fractions, fractions[1:]))
    return {
        "scales_of_radius": scales,
        "fraction_correct": fractions,
        "guaranteed_but_wrong": violations,
        "pass": bool(violations == 0 and monotone and fractions[-1] == 1.0),
    }


def theorem_suite(configs=None, seeds: int = 1) -> dict:
    """Replay the library's guarantees on synthetic corpora.

    Returns a JSON-ready report; report["all_pass"] summarizes it. The
    default grid covers d in {8, 16, 32} crossed with five overlap levels,
    plus noiseless endpoint corpora per d. A rerun with the same arguments
    produces an identical report.
    """
    if configs is None:
        configs = default_grid()
    configs = list(configs)
    if len(configs) < 10:
        raise ValueError(f"need a grid of >= 10 configs, got {len(configs)}")
    if seeds < 1:
        raise ValueError(f"seeds must be >= 1, got {seeds}")

    recovery_cells = []
    optimality_cells = []
    sandwich_cells = []
    for round_idx in range(seeds):
        for config in configs:
            if round_idx:
                config = SynthConfig(
                    **{**config.__dict__, "seed": config.seed + 7919 * round_idx}
                )
            samples = generate(config)
            moments = corpus_moments(samples)
            k = config.k_true
            u_mean = perception_subspace(moments, k, pooling="mean")
            u_sum = perception_subspace(moments, k, pooling="sum")
            v = autoregressive_subspace(moments, k)
            recovered = ntps(u_mean, v)
            recovery_cells.append(
                {
                    "d": config.d,
                    "overlap": config.overlap,
                    "seed": config.seed,
                    "recovered": recovered,
                }
            )

            rng = np.random.default_rng(config.seed + 1)
            cell = _check_decoder_optimality(rng, moments, samples, v, u_sum)
            cell.update({"d": config.d, "overlap": config.overlap, "seed": config.seed})
            optimality_cells.append(cell)

            report = excess_loss_and_bounds(moments, u_sum, v)
            scale = SANDWICH_TOL * max(1.0, abs(report.excess_loss))
            lower_slack = report.excess_loss - report.lower
            upper_slack = report.upper - report.excess_loss
            sandwich_cells.append(
                {
                    "d": config.d,
                    "overlap": config.overlap,
                    "seed": config.seed,
                    "ntps": report.ntps,
                    "excess_loss": report.excess_loss,
                    "lower": report.lower,
                    "upper": report.upper,
                    "lower_slack": lower_slack,
                    "upper_slack": upper_slack,
                    "pass": bool(lower_slack >= -scale and upper_slack >= -scale),
                }
            )

    # Rank correlation within each d family: the noise-floor alignment of
    # a junk direction scales with k/d, so mixing d regimes in one ranking
    # would compare incommensurate baselines.
    r_by_d = {}
    for d in sorted({cell["d"] for cell in recovery_cells}):
        family = [cell for cell in recovery_cells if cell["d"] == d]
        r_by_d[str(d)] = spearman(
            [cell["overlap"] for cell in family],
            [cell["recovered"] for cell in family],
        )
    min_r = min(r_by_d.values())
    recovery = {
        "name": "overlap_recovery",
        "spearman_r_by_d": r_by_d,
        "min_spearman_r": min_r,
        "cells": recovery_cells,
        "pass": bool(min_r >= RECOVERY_MIN_R),
    }

    endpoint_cells = []
    for di, d in enumerate(sorted({config.d for config in configs})):
        k = min(config.k_true for config in configs if config.d == d)
        c = min(config.c for config in configs if config.d == d)
        for overlap, bound, is_high in ((1.0, ENDPOINT_HIGH, True), (0.0, ENDPOINT_LOW, False)):
            if overlap < 1.0 and d < 2 * k:
                continue
            config = SynthConfig(
                d=d, c=c, k_true=k, overlap=overlap, n=500 * d,
                len_range=(4, 10), noise_sigma=0.0, seed=900 + di,
            )
            moments = corpus_moments(generate(config))
            recovered = ntps(
                perception_subspace(moments, k, pooling="mean"),
                autoregressive_subspace(moments, k),
            )
            ok = recovered >= bound if is_high else recovered <= bound
            endpoint_cells.append(
                {"d": d, "overlap": overlap, "recovered": recovered,
                 "bound": bound, "pass": bool(ok)}
            )
    endpoints = {
        "name": "noiseless_endpoints",
        "cells": endpoint_cells,
        "pass": all(cell["pass"] for cell in endpoint_cells),
    }

    optimality = {
        "name": "decoder_optimality",
        "cells": optimality_cells,
        "pass": all(cell["pass"] for cell in optimality_cells),
    }
    sandwich = {
        "name": "excess_loss_sandwich",
        "cells": sandwich_cells,
        "pass": all(cell["pass"] for cell in sandwich_cells),
    }
    margin = _check_margin_decoding(seed=1234)
    margin["name"] = "margin_decoding"

    checks = [recovery, endpoints, optimality, sandwich, margin]
    return {
        "grid_size": len(configs),
        "seeds": seeds,
        "checks": checks,
        "all_pass": all(check["pass"] for check in checks),
    }
