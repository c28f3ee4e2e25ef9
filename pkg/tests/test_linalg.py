"""Solver-level checks: pencil eigensolver, pseudoinverse, projectors."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg

from ntps.linalg import RIDGE_REL, check_symmetric, pinv, projector, solve_gevp


def _random_pencil(rng, d):
    g = rng.standard_normal((d, d))
    h = rng.standard_normal((d, d))
    a = g @ g.T
    b = h @ h.T + 0.5 * np.eye(d)
    return a, b


def test_diagonal_pencil_matches_hand_computation():
    a = np.diag([3.0, 1.0])
    b = np.eye(2)
    pair = solve_gevp(a, b, 1)
    # ridge shifts the unit b by 1e-8, so the top eigenvalue is 3/(1+1e-8)
    assert abs(pair.values[0] - 3.0) < 1e-6
    assert abs(abs(pair.vectors[0, 0]) - 1.0) < 1e-6
    assert abs(pair.vectors[1, 0]) < 1e-9
    assert pair.vectors[0, 0] > 0  # sign convention: largest entry positive

    both = solve_gevp(a, b, 2)
    assert np.all(np.diff(both.values) <= 0)
    assert abs(both.values[1] - 1.0) < 1e-6


def test_random_pencils_match_generalized_eigh_oracle():
    rng = np.random.default_rng(42)
    for _ in range(60):
        d = int(rng.integers(2, 11))
        k = int(rng.integers(1, d + 1))
        a, b = _random_pencil(rng, d)
        ridge = RIDGE_REL * np.trace(b) / d
        b_reg = b + ridge * np.eye(d)

        oracle_vals = scipy.linalg.eigh(a, b_reg, eigvals_only=True)[::-1][:k]
        pair = solve_gevp(a, b, k)
        assert np.allclose(pair.values, oracle_vals, rtol=1e-8, atol=1e-10)
        assert abs(pair.ridge - ridge) < 1e-18 + 1e-12 * ridge

        # b_reg-orthonormal columns, and each pair solves the pencil
        gram = pair.vectors.T @ b_reg @ pair.vectors
        assert np.allclose(gram, np.eye(k), atol=1e-8)
        resid = a @ pair.vectors - b_reg @ pair.vectors * pair.values
        assert np.linalg.norm(resid) <= 1e-6 * (1.0 + np.linalg.norm(a))

        # same span as the oracle's top-k vectors
        _, oracle_vecs = scipy.linalg.eigh(a, b_reg)
        span_oracle = projector(oracle_vecs[:, ::-1][:, :k])
        assert np.allclose(projector(pair.vectors), span_oracle, atol=1e-6)


def test_solver_is_deterministic_with_positive_leading_signs():
    rng = np.random.default_rng(7)
    a, b = _random_pencil(rng, 6)
    first = solve_gevp(a, b, 3)
    second = solve_gevp(a, b, 3)
    assert np.array_equal(first.vectors, second.vectors)
    assert np.array_equal(first.values, second.values)
    for col in first.vectors.T:
        assert col[np.argmax(np.abs(col))] > 0


def test_singular_rhs_is_repaired_by_the_ridge():
    a = np.diag([2.0, 1.0, 0.5])
    b = np.diag([1.0, 1.0, 0.0])  # rank deficient, ridge makes it SPD
    pair = solve_gevp(a, b, 2)
    assert np.all(np.isfinite(pair.vectors))
    assert np.all(np.isfinite(pair.values))
    assert pair.values[0] >= pair.values[1] > 0


def test_solver_input_validation():
    a = np.eye(3)
    b = np.eye(3)
    with pytest.raises(ValueError, match="shape mismatch"):
        solve_gevp(a, np.eye(2), 1)
    with pytest.raises(ValueError, match="k must be in"):
        solve_gevp(a, b, 0)
    with pytest.raises(ValueError, match="k must be in"):
        solve_gevp(a, b, 4)
    with pytest.raises(ValueError, match="not symmetric"):
        solve_gevp(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2), 1)
    with pytest.raises(ValueError, match="numerically zero"):
        solve_gevp(np.eye(2), np.zeros((2, 2)), 1)
    with pytest.raises(ValueError, match="indefinite"):
        solve_gevp(np.eye(2), np.diag([1.0, -1.0]), 1)
    with pytest.raises(ValueError, match="non-finite"):
        solve_gevp(np.array([[np.nan, 0.0], [0.0, 1.0]]), np.eye(2), 1)


def test_check_symmetric_symmetrizes_roundoff():
    a = np.array([[1.0, 2.0], [2.0 + 1e-12, 3.0]])
    out = check_symmetric(a, "test matrix")
    assert np.array_equal(out, out.T)


def test_pinv_examples_and_penrose_conditions():
    assert np.allclose(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]), atol=1e-12)

    rng = np.random.default_rng(3)
    for _ in range(25):
        rows = int(rng.integers(1, 7))
        cols = int(rng.integers(1, 7))
        rank = int(rng.integers(1, min(rows, cols) + 1))
        m = rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))
        p = pinv(m)
        assert np.allclose(m @ p @ m, m, atol=1e-9)
        assert np.allclose(p @ m @ p, p, atol=1e-9)
        assert np.allclose((m @ p).T, m @ p, atol=1e-9)
        assert np.allclose((p @ m).T, p @ m, atol=1e-9)

        # least-squares oracle: pinv solution = minimum-norm lstsq solution
        rhs = rng.standard_normal(rows)
        direct = np.linalg.lstsq(m, rhs, rcond=None)[0]
        assert np.allclose(p @ rhs, direct, atol=1e-8)

    with pytest.raises(ValueError, match="non-finite"):
        pinv(np.array([[np.inf]]))


def test_projector_hand_examples():
    e1 = np.array([[1.0], [0.0], [0.0]])
    assert np.allclose(projector(e1), np.diag([1.0, 0.0, 0.0]), atol=1e-12)

    e12 = np.eye(3)[:, :2]
    assert np.allclose(projector(e12), np.diag([1.0, 1.0, 0.0]), atol=1e-12)

    diag_dir = np.array([[1.0], [1.0]]) / np.sqrt(2.0)
    assert np.allclose(projector(diag_dir), np.full((2, 2), 0.5), atol=1e-12)

    assert np.array_equal(projector(np.zeros((3, 2))), np.zeros((3, 3)))


def test_projector_depends_only_on_the_span():
    rng = np.random.default_rng(11)
    for _ in range(20):
        d = int(rng.integers(2, 9))
        k = int(rng.integers(1, d + 1))
        v = rng.standard_normal((d, k))
        p = projector(v)
        assert np.allclose(p @ p, p, atol=1e-10)
        assert np.allclose(p, p.T, atol=1e-12)
        mix = rng.standard_normal((k, k)) + np.eye(k) * (k + 1)  # invertible
        assert np.allclose(projector(v @ mix), p, atol=1e-8)
