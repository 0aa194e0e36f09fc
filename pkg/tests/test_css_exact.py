"""
css_exact 测试用例

覆盖精确枚举、植入实例上界、Hadamard 实例、预算拒绝、
置换/缩放不变性、k 单调性与调度无关性
"""

import math

import numpy as np
import pytest

from src.adversarial import hadamard_instance, planted_instance
from src.config import config
from src.css_exact import (
    EnumerationBudgetError,
    RatioBound,
    check_budget,
    css_exact,
    css_ratio_report,
)
from src.lp_regression import err_of_subset
from src.matrix_core import PNorm
from src.schemas import RegressionConfig


def _make_cfg(p) -> RegressionConfig:
    return RegressionConfig.from_settings(p)


def _make_random(n: int, m: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((n, m))


class TestRatioBound:
    """c_{p,k} 与 C_{p,k}"""

    def test_continuous_at_two(self):
        k = 4
        below = RatioBound(PNorm(2 - 1e-12), k).c_pk
        above = RatioBound(PNorm(2 + 1e-12), k).c_pk
        assert below == pytest.approx(above, rel=1e-9)
        assert RatioBound(PNorm(2), k).c_pk == pytest.approx(math.sqrt(5))

    def test_power_form(self):
        assert RatioBound(PNorm(1.5), 2).C_pk == pytest.approx(3.0)
        assert RatioBound(PNorm(3), 2).C_pk == pytest.approx(9.0)

    def test_admits(self):
        b = RatioBound(PNorm(2), 3)
        assert b.admits(2.0)
        assert b.admits(2.019)
        assert not b.admits(2.03)


class TestCssExact:
    """精确枚举"""

    def test_identity_full_rank(self):
        res = css_exact(np.eye(4), 4, _make_cfg(2))
        assert res.error == pytest.approx(0.0, abs=1e-12)
        assert res.subsets_evaluated == 1
        assert res.best_subset.indices == (0, 1, 2, 3)

    def test_exact_rank_k(self):
        """A = U₀V₀，U₀ 取自 A 的 k 列 → 误差 0"""
        rng = np.random.default_rng(0)
        U0 = rng.standard_normal((6, 2))
        V0 = np.hstack([np.eye(2), rng.standard_normal((2, 5))])
        A = U0 @ V0
        for p in (1.0, 2.0, 3.0):
            res = css_exact(A, 2, _make_cfg(p))
            assert res.error < 1e-6 * np.abs(A).max()

    def test_error_matches_err_of_subset(self):
        A = _make_random(5, 6, 1)
        cfg = _make_cfg(1.5)
        res = css_exact(A, 2, cfg)
        assert res.error == pytest.approx(err_of_subset(A, res.best_subset, cfg), rel=1e-10)
        assert res.factorization.left.shape == (5, 2)
        assert res.factorization.right.shape == (2, 6)
        assert res.subsets_evaluated == math.comb(6, 2)

    def test_best_is_minimum(self):
        A = _make_random(4, 5, 2)
        cfg = _make_cfg(1.0)
        res = css_exact(A, 2, cfg)
        from itertools import combinations
        from src.matrix_core import ColumnSubset
        errs = [err_of_subset(A, ColumnSubset(J), cfg) for J in combinations(range(5), 2)]
        assert res.error <= min(errs) * (1 + 1e-9)

    def test_hadamard_ratio_two(self):
        """A(ε)，r = 2，p = 2：误差 ≈ 4ε，相对 OPT 上界 2ε 的比值 ≈ 2"""
        inst = hadamard_instance(2, 1e-3, 2)
        res = css_exact(inst.A_eps, 3, _make_cfg(2))
        assert res.error == pytest.approx(4e-3, rel=1e-2)
        assert res.error / inst.opt_upper == pytest.approx(2.0, rel=1e-2)

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0, math.inf])
    @pytest.mark.parametrize("k", [1, 2])
    def test_upper_bound_planted(self, p, k):
        """植入实例：误差 ≤ c_{p,k}‖E‖_p（1% 松弛）"""
        for i in range(3):
            kind = "gaussian" if i % 2 == 0 else "laplace"
            inst = planted_instance(8, 10, k, p, kind, 0.1, [17, i])
            res = css_exact(inst.A, k, _make_cfg(p))
            assert res.error <= PNorm(p).c(k) * inst.noise_norm(p) * 1.01

    def test_k_out_of_range(self):
        with pytest.raises(ValueError):
            css_exact(np.eye(3), 0, _make_cfg(2))
        with pytest.raises(ValueError):
            css_exact(np.ones((2, 5)), 3, _make_cfg(2))


class TestInvariances:
    """置换、缩放与 k 单调性"""

    def test_permutation(self):
        A = _make_random(5, 6, 3)
        cfg = _make_cfg(1.5)
        perm = np.array([4, 2, 0, 5, 1, 3])
        base = css_exact(A, 2, cfg)
        moved = css_exact(A[:, perm], 2, cfg)
        assert moved.error == pytest.approx(base.error, rel=1e-6)
        mapped = tuple(sorted(int(perm[i]) for i in moved.best_subset.indices))
        assert err_of_subset(A, type(base.best_subset)(mapped), cfg) == pytest.approx(base.error, rel=1e-6)

    def test_scale(self):
        A = _make_random(5, 6, 4)
        cfg = _make_cfg(3)
        base = css_exact(A, 2, cfg)
        scaled = css_exact(-7.5 * A, 2, cfg)
        assert scaled.error == pytest.approx(7.5 * base.error, rel=1e-6)
        assert scaled.best_subset == base.best_subset

    def test_monotone_in_k(self):
        A = _make_random(5, 6, 5)
        cfg = _make_cfg(1)
        errors = [css_exact(A, k, cfg).error for k in (1, 2, 3)]
        assert errors[1] <= errors[0] * (1 + 1e-9)
        assert errors[2] <= errors[1] * (1 + 1e-9)


class TestBudget:
    """枚举预算拒绝"""

    def test_refuses_large_enumeration(self):
        with pytest.raises(EnumerationBudgetError) as ei:
            css_exact(np.ones((15, 30)), 15, _make_cfg(2))
        assert ei.value.needed == math.comb(30, 15)
        assert ei.value.budget == config.css_budget
        assert "bicriteria" in str(ei.value)

    def test_explicit_budget(self):
        assert check_budget(6, 2, 15) == 15
        with pytest.raises(EnumerationBudgetError):
            check_budget(6, 2, 14)


class TestDeterminism:
    def test_thread_count_independent(self, monkeypatch):
        A = _make_random(5, 7, 6)
        cfg = _make_cfg(1.5)
        monkeypatch.setattr(config, "threads", 1)
        serial = css_exact(A, 2, cfg)
        monkeypatch.setattr(config, "threads", 4)
        parallel = css_exact(A, 2, cfg)
        assert serial.best_subset == parallel.best_subset
        assert serial.error == parallel.error


class TestRatioReport:
    """css_ratio_report"""

    def test_zero_error_passes(self):
        rep = css_ratio_report(np.eye(3), 3, _make_cfg(2), 1.0)
        assert rep.ratio == pytest.approx(0.0, abs=1e-12)
        assert rep.passed

    def test_planted_reference(self):
        inst = planted_instance(8, 10, 2, 2, "gaussian", 0.1, 3)
        rep = css_ratio_report(
            inst.A, 2, _make_cfg(2), inst.noise_norm(2), reference_kind="planted-noise",
        )
        assert rep.passed
        assert rep.reference_kind == "planted-noise"
        assert rep.bound == pytest.approx(math.sqrt(3))
        assert rep.ratio == pytest.approx(rep.error / rep.reference, rel=1e-12)

    def test_hadamard_p4_ratio(self):
        inst = hadamard_instance(2, 1e-4, 4)
        rep = css_ratio_report(inst.A_eps, 3, _make_cfg(4), inst.opt_upper)
        assert rep.ratio >= inst.lb_formula * 0.99

    def test_rejects_non_positive_reference(self):
        with pytest.raises(ValueError):
            css_ratio_report(np.eye(2), 1, _make_cfg(2), 0.0)
