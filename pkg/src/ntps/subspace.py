"""Subspace extraction and the overlap score connecting the two pencils.

Two generalized eigenproblems share one solver: the next-token pencil
(cov1 cov1^T, cov0) whose top-k basis V is the best k-dimensional encoder
for predicting the next token from the running prefix sum, and the label
pencil (M M^T, N) over pooled sentence vectors whose top-k basis U is the
best k-dimensional encoder for predicting the label. The overlap score

    ntps(U, V) = ||P_V U||_F^2 / ||U||_F^2,   P_V = V V^+

measures how much of the label-optimal subspace the next-token-optimal
one already carries, and sandwiches the excess label loss of V.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import PINV_RCOND, solve_gevp, projector
from .stats import Moments

# Overshoot beyond [0, 1] tolerated before clamping the score.
NTPS_CLAMP_TOL = 1e-9

POOLINGS = ("mean", "sum")


@dataclass(frozen=True)
class Subspace:
    """A b-orthonormal pencil basis.

    basis: (d, k) columns with basis.T @ b @ basis = I_k for the pencil's
        right-hand matrix b.
    eigenvalues: (k,) descending generalized eigenvalues.
    kind: "perception" (label pencil) or "autoregressive" (next-token).
    pooling: "mean" or "sum" for the label pencil, None otherwise.
    ridge: regularizer applied to the right-hand matrix.
    """

    basis: np.ndarray
    eigenvalues: np.ndarray
    kind: str
    pooling: str | None
    ridge: float

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    def project(self, tokens: np.ndarray) -> np.ndarray:
        """Coordinates of row vectors in this basis (tokens @ basis)."""
        return np.asarray(tokens, dtype=np.float64) @ self.basis


@dataclass(frozen=True)
class BoundsReport:
    """Excess label loss of an encoder and its overlap-score sandwich."""

    ntps: float
    excess_loss: float
    lower: float
    upper: float
    c_min: float
    c_max: float
    lambda_min_n: float
    lambda_max_n: float
    lambda_min_spec: float
    lambda_max_spec: float
    u_frob_sq: float


@dataclass(frozen=True)
class MarginCheck:
    """Nearest-row decoding margin versus a perturbed query."""

    margin: float
    diameter: float
    guaranteed: bool
    correct: bool


def k_from_proportion(proportion: float, d: int) -> int:
    """Basis size for a proportion of d, floored at 1."""
    return max(1, int(np.floor(proportion * d + 0.5)))


def _basis_of(subspace_or_matrix) -> np.ndarray:
    basis = getattr(subspace_or_matrix, "basis", subspace_or_matrix)
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim == 1:
        basis = basis[:, None]
    return basis


def _label_pencil(moments: Moments, pooling: str) -> tuple[np.ndarray, np.ndarray]:
    if pooling == "mean":
        return moments.mean_xy, moments.mean_xx
    if pooling == "sum":
        return moments.sum_xy, moments.sum_xx
    raise ValueError(f"pooling must be one of {POOLINGS}, got {pooling!r}")


def perception_subspace(moments: Moments, k: int, pooling: str = "mean") -> Subspace:
    """Top-k basis of the label pencil (M M^T, N) over pooled features."""
    m, n_mat = _label_pencil(moments, pooling)
    pair = solve_gevp(m @ m.T, n_mat, k)
    return Subspace(
        basis=pair.vectors,
        eigenvalues=pair.values,
        kind="perception",
        pooling=pooling,
        ridge=pair.ridge,
    )


def autoregressive_subspace(moments: Moments, k: int) -> Subspace:
    """Top-k basis of the next-token pencil (cov1 cov1^T, cov0)."""
    pair = solve_gevp(moments.cov1 @ moments.cov1.T, moments.cov0, k)
    return Subspace(
        basis=pair.vectors,
        eigenvalues=pair.values,
        kind="autoregressive",
        pooling=None,
        ridge=pair.ridge,
    )


def ntps(u, v) -> float:
    """Overlap score ||P_v u||_F^2 / ||u||_F^2 in [0, 1].

    Accepts Subspace objects or plain (d, k) arrays. The score depends only
    on the column spaces: u is orthonormalized internally (the formula is
    evaluated on an orthonormal basis of col(u), and the projector already
    sees only col(v)), so right-multiplying either argument by an invertible
    matrix changes nothing beyond roundoff. Raises for a zero u.
    """
    u = _basis_of(u)
    v = _basis_of(v)
    if u.shape[0] != v.shape[0]:
        raise ValueError(f"row mismatch: u has {u.shape[0]}, v has {v.shape[0]}")
    q, s, _ = np.linalg.svd(u, full_matrices=False)
    keep = s > (s[0] * max(u.shape) * np.finfo(np.float64).eps if s.size else 0.0)
    if not np.any(keep):
        raise ValueError("u has zero Frobenius norm")
    q = q[:, keep]
    proj = projector(v) @ q
    score = float(np.sum(proj * proj)) / q.shape[1]
    if score < -NTPS_CLAMP_TOL or score > 1.0 + NTPS_CLAMP_TOL:
        raise ValueError(f"overlap score {score} escapes [0, 1] beyond tolerance")
    return min(1.0, max(0.0, score))


def _solve_inner(inner: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # Relative-threshold pseudoinverse: exact minimizer even when the
    # encoder is rank deficient, and cov0^+-like behaviour for v = I.
    inner = (inner + inner.T) / 2.0
    w, q = np.linalg.eigh(inner)
    cut = PINV_RCOND * max(float(w[-1]), 0.0)
    inv = np.zeros_like(w)
    inv[w > cut] = 1.0 / w[w > cut]
    return (q * inv) @ q.T @ rhs


def optimal_w(moments: Moments, v) -> np.ndarray:
    """Best next-token decoder for encoder v: (V^T cov0 V)^-1 V^T cov1."""
    basis = _basis_of(v)
    return _solve_inner(basis.T @ moments.cov0 @ basis, basis.T @ moments.cov1)


def optimal_z(moments: Moments, u, pooling: str = "mean") -> np.ndarray:
    """Best label decoder for encoder u: (U^T N U)^-1 U^T M."""
    m, n_mat = _label_pencil(moments, pooling)
    basis = _basis_of(u)
    return _solve_inner(basis.T @ n_mat @ basis, basis.T @ m)


def perception_loss(moments: Moments, encoder, pooling: str = "sum") -> float:
    """Label MSE of the best linear decoder through a fixed encoder.

    Closed form Tr E[Y Y^T] - Tr(E^T M M^T E (E^T N E)^-1), the minimum of
    E||Z^T E^T pooled_x - Y||^2 over Z.
    """
    m, n_mat = _label_pencil(moments, pooling)
    basis = _basis_of(encoder)
    g = basis.T @ m
    explained = float(np.sum(g * _solve_inner(basis.T @ n_mat @ basis, g)))
    return moments.yy_trace - explained


def excess_loss_and_bounds(moments: Moments, u: Subspace, v_encoder) -> BoundsReport:
    """Excess label loss of v_encoder over the optimal U, with its sandwich.

    Requires a sum-pooled, N-orthonormal U from perception_subspace. The
    constants are c_min = lambda_min(N) * Lambda_min * ||U||_F^2 and
    c_max = lambda_max(N) * Lambda_max * ||U||_F^2, with Lambda the pencil
    eigenvalues carried by U, and the sandwich is

        c_min * (1 - ntps) <= excess <= c_max * (1 - ntps).
    """
    if not isinstance(u, Subspace) or u.kind != "perception":
        raise ValueError("u must be a perception Subspace")
    if u.pooling != "sum":
        raise ValueError(f"bounds require sum pooling, got {u.pooling!r}")
    v_basis = _basis_of(v_encoder)

    n_eigs = np.linalg.eigvalsh((moments.sum_xx + moments.sum_xx.T) / 2.0)
    lam_min_n = float(n_eigs[0])
    lam_max_n = float(n_eigs[-1])
    lam_min_spec = float(u.eigenvalues[-1])
    lam_max_spec = float(u.eigenvalues[0])
    u_frob_sq = float(np.sum(u.basis * u.basis))

    loss_u = perception_loss(moments, u, pooling="sum")
    loss_v = perception_loss(moments, v_basis, pooling="sum")
    score = ntps(u, v_basis)

    c_min = lam_min_n * lam_min_spec * u_frob_sq
    c_max = lam_max_n * lam_max_spec * u_frob_sq
    return BoundsReport(
        ntps=score,
        excess_loss=loss_v - loss_u,
        lower=c_min * (1.0 - score),
        upper=c_max * (1.0 - score),
        c_min=c_min,
        c_max=c_max,
        lambda_min_n=lam_min_n,
        lambda_max_n=lam_max_n,
        lambda_min_spec=lam_min_spec,
        lambda_max_spec=lam_max_spec,
        u_frob_sq=u_frob_sq,
    )


def margin_decode_check(
    vocab: np.ndarray, target: np.ndarray, predicted: np.ndarray
) -> MarginCheck:
    """Certify nearest-row argmax decoding of a perturbed query.

    margin is the target's inner-product gap between its best and second
    best vocab rows; diameter is the largest pairwise row distance. When
    ||predicted - target|| < margin / diameter the argmax provably cannot
    move, so guaranteed implies correct.
    """
    vocab = np.asarray(vocab, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if vocab.ndim != 2 or vocab.shape[0] < 2:
        raise ValueError("vocab must have at least 2 rows")

    scores = vocab @ target
    y = int(np.argmax(scores))
    rest = np.delete(scores, y)
    margin = float(scores[y] - rest.max())
    if margin <= 0.0:
        raise ValueError("target has a tied best vocab row (margin <= 0)")

    sq_norms = np.sum(vocab * vocab, axis=1)
    gram = vocab @ vocab.T
    dist_sq = sq_norms[:, None] + sq_norms[None, :] - 2.0 * gram
    diameter = float(np.sqrt(max(dist_sq.max(), 0.0)))

    err = float(np.linalg.norm(predicted - target))
    guaranteed = diameter > 0.0 and err < margin / diameter
    correct = int(np.argmax(vocab @ predicted)) == y
    return MarginCheck(
        margin=margin, diameter=diameter, guaranteed=guaranteed, correct=correct
    )
