"""
pipeline 测试用例 — 双准则 → 降秩 全流程、误差链与误差单调性
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.adversarial import planted_instance
from src.bicriteria import BicriteriaFailure
from src.matrix_core import PNorm, entrywise_norm, numerical_rank, submatrix_columns
from src.pipeline import full_pipeline
from src.schemas import RegressionConfig


def _make_reg(p) -> RegressionConfig:
    return RegressionConfig.from_settings(p)


class TestFullPipeline:
    @pytest.mark.parametrize("p", [1.0, 2.0])
    def test_planted_rank_k(self, p):
        kind = "laplace" if p < 2 else "gaussian"
        inst = planted_instance(20, 32, 2, p, kind, 0.1, 21)
        res = full_pipeline(inst.A, 2, p, 0, _make_reg(p))
        W, Z = res.factorization.W, res.factorization.Z
        assert W.shape == (20, 2)
        assert Z.shape == (2, 32)
        assert numerical_rank(W @ Z) <= 2
        assert res.error == pytest.approx(entrywise_norm(inst.A - W @ Z, p))
        bound = 50 * PNorm(p).c(2) ** 3 * 2 * np.log2(32) * inst.noise_norm(p)
        assert res.error <= bound

    def test_provenance_chain(self):
        inst = planted_instance(16, 24, 1, 2, "gaussian", 0.1, 22)
        res = full_pipeline(inst.A, 1, 2, 1, _make_reg(2))
        stages = [s.stage for s in res.provenance]
        assert stages == ["bicriteria", "reduce_rank"]
        assert res.provenance[0].rank == res.selected.size
        assert res.provenance[1].rank <= 1
        assert set(res.phase_timings) == {"bicriteria", "reduce_rank"}
        assert res.elapsed_seconds >= 0
        assert "误差链" in res.summary()

    def test_reproducible(self):
        inst = planted_instance(16, 24, 1, 1, "laplace", 0.1, 23)
        a = full_pipeline(inst.A, 1, 1, 5, _make_reg(1))
        b = full_pipeline(inst.A, 1, 1, 5, _make_reg(1))
        assert a.selected == b.selected
        np.testing.assert_array_equal(a.factorization.W, b.factorization.W)

    def test_small_matrix_selects_all(self):
        A = np.random.default_rng(24).standard_normal((5, 4))
        res = full_pipeline(A, 2, 2, 0, _make_reg(2))
        assert res.selected.size == 4
        assert res.provenance[0].note == "全选"

    def test_failure_propagates(self, monkeypatch):
        monkeypatch.setattr("src.bicriteria.guess_ladder", lambda A, k, p: [1e-12])
        A = np.random.default_rng(25).standard_normal((20, 60))
        monkeypatch.setattr("src.bicriteria.config.max_rounds_per_level", 2)
        with pytest.raises(BicriteriaFailure):
            full_pipeline(A, 2, 2, 0, _make_reg(2))


class TestErrorMonotone:
    """降秩只会增大误差：‖A − WZ‖_p ≥ ‖A − UV‖_p"""

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([1, 2, "inf"]))
    def test_rank_reduction_never_beats_bicriteria(self, seed, p):
        inst = planted_instance(12, 16, 1, p, "gaussian", 0.1, seed)
        res = full_pipeline(inst.A, 1, p, seed, _make_reg(p))
        U = submatrix_columns(inst.A, res.selected)
        bic_err = entrywise_norm(inst.A - U @ res.bicriteria.coefficients, p)
        assert res.error >= bic_err * (1 - 1e-8) - 1e-8
