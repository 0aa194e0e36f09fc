"""
rank_reduction 测试用例

覆盖线性无关列筛选、近等周基证书、降秩分解的形状/误差约定与 span(W) ⊆ span(U)
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.config import config
from src.css_exact import EnumerationBudgetError
from src.lp_regression import projection_residual, solve_matrix
from src.matrix_core import entrywise_norm, numerical_rank
from src.rank_reduction import (
    IsoperimetricBasis,
    independent_columns,
    make_isoperimetric,
    probe_set,
    reduce_rank,
)
from src.schemas import RegressionConfig


def _make_reg(p) -> RegressionConfig:
    return RegressionConfig.from_settings(p)


def _make_random(n: int, m: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((n, m))


def _make_factors(A: np.ndarray, cols: int, p) -> tuple[np.ndarray, np.ndarray]:
    U = A[:, :cols]
    return U, solve_matrix(U, A, _make_reg(p)).coefficients


class TestIndependentColumns:
    def test_drops_duplicates(self):
        U = _make_random(6, 3)
        U = np.hstack([U, U[:, :1], 2 * U[:, 2:3]])
        keep = independent_columns(U)
        assert keep.size == 3
        assert numerical_rank(U[:, list(keep.indices)]) == 3

    def test_zero_matrix(self):
        assert independent_columns(np.zeros((4, 3))).size == 0

    def test_empty(self):
        assert independent_columns(np.zeros((4, 0))).size == 0


class TestProbeSet:
    def test_shape_and_norms(self):
        X = probe_set(4, 10, 0)
        assert X.shape == (4, 4 + 20)
        np.testing.assert_array_equal(X[:, :4], np.eye(4))
        np.testing.assert_allclose(np.linalg.norm(X[:, 14:], axis=0), 1.0)

    def test_seeded(self):
        np.testing.assert_array_equal(probe_set(3, 5, 7), probe_set(3, 5, 7))


class TestIsoperimetric:
    """近等周基"""

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0, math.inf])
    def test_certificate(self, p):
        U = _make_random(12, 4, 1)
        basis = make_isoperimetric(U, p, probes=200)
        assert basis.certificate_holds
        assert basis.upper_ratio == pytest.approx(1.0)
        assert basis.lower_ratio >= 1 / (2 * basis.t)
        np.testing.assert_allclose(U @ basis.change_of_basis, basis.B, atol=1e-10)

    def test_p2_is_orthonormal(self):
        basis = make_isoperimetric(_make_random(10, 3, 2), 2, probes=50)
        np.testing.assert_allclose(basis.B.T @ basis.B, np.eye(3), atol=1e-10)
        assert basis.rounds == 0

    def test_badly_scaled_columns(self):
        U = _make_random(10, 3, 3) * np.array([1e-4, 1.0, 1e4])
        basis = make_isoperimetric(U, 1, probes=200)
        assert basis.certificate_holds

    def test_rank_deficient_rejected(self):
        U = _make_random(6, 2)
        with pytest.raises(ValueError, match="不满秩"):
            make_isoperimetric(np.hstack([U, U[:, :1]]), 2)

    def test_no_columns(self):
        with pytest.raises(ValueError):
            make_isoperimetric(np.zeros((4, 0)), 2)

    def test_certificate_flag(self):
        B = np.eye(2)
        good = IsoperimetricBasis(B=B, change_of_basis=B, lower_ratio=0.3, upper_ratio=1.0)
        bad = IsoperimetricBasis(B=B, change_of_basis=B, lower_ratio=0.2, upper_ratio=1.0)
        assert good.certificate_holds
        assert not bad.certificate_holds


class TestReduceRank:
    """(U, V) → 秩 k 的 (W, Z)"""

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
    def test_shapes_and_rank(self, p):
        A = _make_random(8, 10, 4)
        U, V = _make_factors(A, 4, p)
        res = reduce_rank(A, U, V, 2, p, _make_reg(p))
        assert res.W.shape == (8, 2)
        assert res.Z.shape == (2, 10)
        assert res.k == 2
        assert numerical_rank(res.W @ res.Z) <= 2
        assert res.error == pytest.approx(entrywise_norm(A - res.W @ res.Z, p))
        assert res.inner_subset.size == 2
        assert res.basis.certificate_holds

    def test_exact_low_rank_recovered(self):
        rng = np.random.default_rng(5)
        A = rng.standard_normal((8, 2)) @ rng.standard_normal((2, 9))
        U, V = _make_factors(A, 5, 1.5)
        res = reduce_rank(A, U, V, 2, 1.5, _make_reg(1.5))
        assert res.error < 1e-6 * np.abs(A).max()

    def test_rank_below_k_padded(self):
        rng = np.random.default_rng(6)
        A = np.outer(rng.standard_normal(6), rng.standard_normal(7))
        U, V = _make_factors(A, 3, 2)
        res = reduce_rank(A, U, V, 2, 2, _make_reg(2))
        assert res.W.shape == (6, 2)
        np.testing.assert_array_equal(res.W[:, 1], 0.0)
        np.testing.assert_array_equal(res.Z[1], 0.0)
        assert res.error < 1e-9

    def test_zero_u(self):
        A = _make_random(5, 6, 7)
        res = reduce_rank(A, np.zeros((5, 3)), np.zeros((3, 6)), 2, 3, _make_reg(3))
        assert res.error == pytest.approx(entrywise_norm(A, 3))
        assert res.basis is None

    def test_too_few_columns(self):
        A = _make_random(5, 6)
        with pytest.raises(ValueError, match="小于目标秩"):
            reduce_rank(A, A[:, :1], np.zeros((1, 6)), 2, 2, _make_reg(2))

    def test_shape_mismatch(self):
        A = _make_random(5, 6)
        with pytest.raises(ValueError, match="形状"):
            reduce_rank(A, A[:, :3], np.zeros((2, 6)), 2, 2, _make_reg(2))

    def test_budget_refusal(self, monkeypatch):
        A = _make_random(8, 10, 8)
        U, V = _make_factors(A, 4, 2)
        monkeypatch.setattr(config, "css_budget", 1)
        with pytest.raises(EnumerationBudgetError, match="reduce_rank"):
            reduce_rank(A, U, V, 2, 2, _make_reg(2))


class TestSpanContainment:
    """W 的列落在 span(U) 内"""

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(0, 10_000),
        st.integers(3, 5),
        st.integers(1, 2),
        st.sampled_from([1, 2, 3, "inf"]),
        st.booleans(),
    )
    def test_w_in_span_of_u(self, seed, t, k, p, duplicate):
        A = _make_random(7, 9, seed)
        U, V = _make_factors(A, t, p)
        if duplicate:
            U = np.hstack([U, U[:, :1]])
            V = np.vstack([V, np.zeros((1, 9))])
        res = reduce_rank(A, U, V, k, p, _make_reg(p))
        leak = projection_residual(U, res.W)
        assert np.abs(leak).max() <= 1e-8 * (1 + np.abs(res.W).max())
