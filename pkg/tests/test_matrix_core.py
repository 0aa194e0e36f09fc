"""
matrix_core 测试用例

覆盖 PNorm 常数、逐元素范数、列子集、行列式（含乘法性）与数值秩
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from src.matrix_core import (
    ColumnSubset,
    Factorization,
    PNorm,
    as_dense,
    determinant,
    entrywise_norm,
    numerical_rank,
    submatrix_columns,
)


# ──── 辅助函数 ────


def _make_random(n: int, m: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((n, m))


def _cofactor_det(M: np.ndarray) -> float:
    """首行 Laplace 展开（仅作小矩阵对照）"""
    n = M.shape[0]
    if n == 1:
        return float(M[0, 0])
    total = 0.0
    for j in range(n):
        minor = np.delete(M[1:], j, axis=1)
        total += (-1) ** j * M[0, j] * _cofactor_det(minor)
    return total


_finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
_matrices = arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)), elements=_finite)
_p_values = st.sampled_from([1.0, 1.5, 2.0, 3.0, 7.5, math.inf])


# ──── PNorm ────


class TestPNorm:
    """范数指数解析与派生常数"""

    def test_parse_tokens(self):
        assert PNorm.parse("inf").is_inf
        assert PNorm.parse("∞").is_inf
        assert PNorm.parse(" Infinity ").is_inf
        assert PNorm.parse("2.5").p == 2.5
        assert PNorm.parse(3).p == 3.0

    def test_rejects_p_below_one(self):
        with pytest.raises(ValueError):
            PNorm.parse("0.5")
        with pytest.raises(ValueError):
            PNorm(float("nan"))

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            PNorm.parse("two")

    def test_dual_exponent(self):
        assert PNorm(1).q == math.inf
        assert PNorm(2).q == 2
        assert PNorm(math.inf).q == 1
        assert PNorm(4).q == pytest.approx(4 / 3)

    def test_ratio_constants(self):
        """c_{p,k}：p ≤ 2 取 (k+1)^{1/p}，p ≥ 2 取 (k+1)^{1−1/p}"""
        assert PNorm(2).c(3) == pytest.approx(2.0)
        assert PNorm(1).c(2) == pytest.approx(3.0)
        assert PNorm(4).c(3) == pytest.approx(4 ** 0.75)
        assert PNorm(math.inf).c(3) == 4.0

    def test_power_constants(self):
        assert PNorm(2).C(3) == pytest.approx(4.0)
        assert PNorm(3).C(2) == pytest.approx(9.0)
        assert PNorm(math.inf).C(1) == math.inf
        for p in (1.0, 1.5, 2.0, 3.0):
            assert PNorm(p).C(2) == pytest.approx(PNorm(p).c(2) ** p)

    def test_lambda_operator_bound(self):
        assert PNorm(2).M(5) == 1.0
        assert PNorm(1.5).M(3) == 1.0
        assert PNorm(4).M(3) == pytest.approx(2.0)
        assert PNorm(math.inf).M(2) == 3.0

    def test_label(self):
        assert PNorm(math.inf).label == "inf"
        assert PNorm(2).label == "2"
        assert PNorm(1.5).label == "1.5"


# ──── 构造与范数 ────


class TestAsDense:
    """as_dense 校验"""

    def test_read_only(self):
        A = as_dense([[1, 2], [3, 4]])
        assert A.dtype == np.float64
        with pytest.raises(ValueError):
            A[0, 0] = 5.0

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="非有限"):
            as_dense([[1.0, np.nan]])
        with pytest.raises(ValueError):
            as_dense([[np.inf]])

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError):
            as_dense([1.0, 2.0])
        with pytest.raises(ValueError):
            as_dense(np.zeros((0, 3)))


class TestEntrywiseNorm:
    """逐元素 ℓp 范数"""

    def test_known_values(self):
        A = np.array([[3.0, -4.0]])
        assert entrywise_norm(A, 2) == pytest.approx(5.0)
        assert entrywise_norm(A, 1) == pytest.approx(7.0)
        assert entrywise_norm(A, "inf") == 4.0

    def test_is_not_operator_norm(self):
        """2×2 全 1 矩阵的逐元素 ℓ1 为 4，诱导 ℓ1 算子范数为 2"""
        A = np.ones((2, 2))
        assert entrywise_norm(A, 1) == pytest.approx(4.0)

    def test_zero_matrix(self):
        assert entrywise_norm(np.zeros((3, 2)), 3) == 0.0

    def test_no_overflow_for_large_entries(self):
        A = np.full((2, 2), 1e200)
        assert entrywise_norm(A, 4) == pytest.approx(1e200 * 4 ** 0.25)

    @settings(max_examples=60, deadline=None)
    @given(_matrices, st.floats(-10, 10, allow_nan=False), _p_values)
    def test_homogeneity(self, A, c, p):
        assert entrywise_norm(c * A, p) == pytest.approx(abs(c) * entrywise_norm(A, p), rel=1e-9, abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(_matrices, _p_values, _p_values)
    def test_monotone_in_p(self, A, p1, p2):
        lo, hi = sorted([p1, p2])
        assert entrywise_norm(A, hi) <= entrywise_norm(A, lo) * (1 + 1e-12) + 1e-12

    @settings(max_examples=60, deadline=None)
    @given(st.data(), _p_values)
    def test_triangle_inequality(self, data, p):
        shape = data.draw(st.tuples(st.integers(1, 4), st.integers(1, 4)))
        A = data.draw(arrays(np.float64, shape, elements=_finite))
        B = data.draw(arrays(np.float64, shape, elements=_finite))
        lhs = entrywise_norm(A + B, p)
        assert lhs <= (entrywise_norm(A, p) + entrywise_norm(B, p)) * (1 + 1e-12) + 1e-9


# ──── 列子集 ────


class TestColumnSubset:
    """列下标元组"""

    def test_proper_requires_increasing(self):
        with pytest.raises(ValueError):
            ColumnSubset((2, 1))
        with pytest.raises(ValueError):
            ColumnSubset((1, 1))

    def test_sequence_allows_repeats(self):
        J = ColumnSubset((2, 0, 2), sequence=True)
        assert J.size == 3
        assert not J.is_distinct

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ColumnSubset((-1,))

    def test_proper_constructor_sorts(self):
        assert ColumnSubset.proper([3, 1, 3, 0]).indices == (0, 1, 3)

    def test_validate_out_of_range(self):
        with pytest.raises(IndexError):
            ColumnSubset((0, 5)).validate(5)
        ColumnSubset((0, 4)).validate(5)

    def test_complement_and_remap(self):
        J = ColumnSubset((1, 3))
        assert J.complement(5).indices == (0, 2, 4)
        inner = ColumnSubset((0, 2))
        assert inner.remap(ColumnSubset((1, 4, 6))).indices == (1, 6)

    def test_one_based(self):
        assert ColumnSubset((0, 2)).one_based() == [1, 3]

    def test_submatrix_order(self):
        A = np.arange(12, dtype=float).reshape(3, 4)
        J = ColumnSubset((3, 1), sequence=True)
        np.testing.assert_array_equal(submatrix_columns(A, J), A[:, [3, 1]])

    def test_all_columns(self):
        assert ColumnSubset.all_columns(3).indices == (0, 1, 2)


class TestFactorization:
    def test_product_and_rank_bound(self):
        L = _make_random(4, 2)
        R = _make_random(2, 5, seed=1)
        f = Factorization(left=L, right=R, error=0.0)
        assert f.rank_bound == 2
        np.testing.assert_allclose(f.product(), L @ R)


# ──── 行列式与秩 ────


class TestDeterminant:
    """LU 行列式"""

    def test_identity(self):
        assert determinant(np.eye(4)) == pytest.approx(1.0)

    def test_matches_cofactor_expansion(self):
        for seed in range(5):
            M = _make_random(4, 4, seed)
            assert determinant(M) == pytest.approx(_cofactor_det(M), rel=1e-10, abs=1e-12)

    def test_empty_is_one(self):
        assert determinant(np.zeros((0, 0))) == 1.0

    def test_non_square(self):
        with pytest.raises(ValueError):
            determinant(np.zeros((2, 3)))

    def test_singular(self):
        M = np.array([[1.0, 2.0], [2.0, 4.0]])
        assert abs(determinant(M)) < 1e-12

    def test_permutation_sign(self):
        P = np.eye(3)[[1, 0, 2]]
        assert determinant(P) == pytest.approx(-1.0)

    @settings(max_examples=80, deadline=None)
    @given(st.data(), st.integers(1, 4))
    def test_multiplicative(self, data, n):
        """det(AB) = det(A)·det(B)"""
        entries = st.floats(min_value=-10, max_value=10, allow_nan=False, allow_infinity=False)
        A = data.draw(arrays(np.float64, (n, n), elements=entries))
        B = data.draw(arrays(np.float64, (n, n), elements=entries))
        scale = max(1.0, (np.linalg.norm(A) * np.linalg.norm(B)) ** n)
        assert abs(determinant(A @ B) - determinant(A) * determinant(B)) <= 1e-10 * scale


class TestNumericalRank:
    """奇异值数值秩"""

    def test_outer_product(self):
        u = np.arange(1.0, 5.0)
        assert numerical_rank(np.outer(u, u)) == 1

    def test_full_rank(self):
        assert numerical_rank(_make_random(5, 3)) == 3

    def test_zero(self):
        assert numerical_rank(np.zeros((3, 3))) == 0

    def test_relative_tolerance(self):
        M = np.diag([1.0, 1e-12])
        assert numerical_rank(M) == 1
        assert numerical_rank(M, tol=1e-13) == 2

    def test_rejects_non_positive_tol(self):
        with pytest.raises(ValueError):
            numerical_rank(np.eye(2), tol=0)

    def test_rank_of_sums(self):
        for r in (1, 2, 3):
            A = sum(np.outer(*_make_random(2, 6, seed=s)) for s in range(r))
            assert numerical_rank(A) == r
