"""Dense symmetric-pencil linear algebra shared by every pipeline stage.

The generalized eigenproblem a v = lambda b v is solved by an explicit
whiten-then-eigh route: ridge the right-hand matrix, eigendecompose it,
drop numerically null directions, map the pencil to an ordinary symmetric
eigenproblem in the retained subspace, and map the eigenvectors back.
Returned bases are b-orthonormal and carry a deterministic sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Ridge added to the pencil's right-hand matrix, times trace(b)/d.
RIDGE_REL = 1e-8
# Right-hand eigenvalues below this times the largest are treated as null.
EIG_DROP_REL = 1e-12
# Symmetry tolerance, times max(1, largest absolute entry).
SYM_TOL = 1e-8
# Relative cutoff for pseudoinverses of small inner matrices.
PINV_RCOND = 1e-12


@dataclass(frozen=True)
class EigPair:
    """Top-k generalized eigenpairs of a symmetric pencil.

    vectors: (d, k) b-orthonormal eigenvectors, one per column.
    values: (k,) eigenvalues in descending order.
    ridge: the regularizer that was added to the right-hand diagonal.
    """

    vectors: np.ndarray
    values: np.ndarray
    ridge: float


def check_symmetric(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate a square symmetric finite matrix and return it symmetrized.

    Symmetry is accepted within SYM_TOL * max(1, max abs entry); the
    returned copy is (a + a.T) / 2 so downstream eigh calls see an exactly
    symmetric operand.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.abs(a).max())) if a.size else 1.0
    if a.size and float(np.abs(a - a.T).max()) > SYM_TOL * scale:
        raise ValueError(f"{name} is not symmetric within tolerance")
    return (a + a.T) / 2.0


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # Deterministic orientation: largest-magnitude component made positive.
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            vectors[:, j] = -col
    return vectors


def solve_gevp(a: np.ndarray, b: np.ndarray, k: int) -> EigPair:
    """Solve a v = lambda b v for the top-k pairs of a symmetric pencil.

    Args:
        a: (d, d) symmetric matrix, positive semidefinite in intended use.
        b: (d, d) symmetric positive-semidefinite matrix.
        k: number of leading eigenpairs, 1 <= k <= d.

    Returns:
        EigPair with b-orthonormal columns (vectors.T @ b @ vectors = I_k up
        to the applied ridge) and descending eigenvalues.

    Raises:
        ValueError: on shape mismatch, k out of range, or a right-hand
            matrix that is numerically indefinite or zero.
    """
    a = check_symmetric(a, "a")
    b = check_symmetric(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"pencil shape mismatch: {a.shape} vs {b.shape}")
    d = a.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")

    ridge = RIDGE_REL * float(np.trace(b)) / d
    b_reg = b + ridge * np.eye(d)

    w, q = np.linalg.eigh(b_reg)
    w_max = float(w[-1])
    if w_max <= 0.0:
        raise ValueError("right-hand matrix is numerically zero")
    if float(w[0]) < -1e-10 * max(1.0, w_max):
        raise ValueError(
            f"right-hand matrix is numerically indefinite "
            f"(smallest eigenvalue {w[0]:.3e})"
        )
    keep = w > EIG_DROP_REL * w_max
    rank = int(np.count_nonzero(keep))
    if k > rank:
        raise ValueError(
            f"pencil right-hand side has numerical rank {rank} < k={k}"
        )

    # Whitening map t: columns scale retained eigenvectors to unit b-norm.
    t = q[:, keep] / np.sqrt(w[keep])
    c = t.T @ a @ t
    c = (c + c.T) / 2.0
    vals, vecs = np.linalg.eigh(c)

    order = np.argsort(vals)[::-1][:k]
    values = vals[order]
    vectors = _fix_signs(t @ vecs[:, order])
    return EigPair(vectors=vectors, values=values, ridge=ridge)


def pinv(m: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a finite matrix."""
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return np.linalg.pinv(m)


def projector(v: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column space of v.

    Computed from the thin SVD rather than literally as v @ pinv(v): the
    retained left singular vectors give an exactly symmetric, idempotent
    v v^+ even for ill-conditioned or rank-deficient v. A zero matrix maps
    to the zero projector.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    if not np.all(np.isfinite(v)):
        raise ValueError("matrix has non-finite entries")
    u, s, _ = np.linalg.svd(v, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((v.shape[0], v.shape[0]))
    keep = s > s[0] * max(v.shape) * np.finfo(np.float64).eps
    u = u[:, keep]
    p = u @ u.T
    return (p + p.T) / 2.0
