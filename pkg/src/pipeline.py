"""
全流程编排 — 双准则选列 → 回归得 V → 降秩。

执行流：
  bicriteria_with_guessing（O(k log m) 列）→ solve_matrix（V）→ reduce_rank（秩 k 的 W, Z）
每个阶段的误差与耗时记入 PipelineResult，形成可追溯的误差链。
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .bicriteria import BicriteriaResult, bicriteria_with_guessing
from .matrix_core import ColumnSubset, DenseMatrix, PLike, as_pnorm, numerical_rank, submatrix_columns
from .rank_reduction import RankKFactorization, reduce_rank
from .schemas import RegressionConfig

logger = logging.getLogger(__name__)


@dataclass
class ProvenanceStep:
    """误差链中的一个阶段"""

    stage: str
    error: float
    rank: int
    note: str = ""


@dataclass
class PipelineResult:
    """全流程执行结果"""

    factorization: RankKFactorization
    selected: ColumnSubset
    bicriteria: BicriteriaResult
    provenance: list[ProvenanceStep] = field(default_factory=list)
    # 阶段耗时（秒）
    phase_timings: dict[str, float] = field(default_factory=dict)

    @property
    def error(self) -> float:
        return self.factorization.error

    @property
    def elapsed_seconds(self) -> float:
        return sum(self.phase_timings.values())

    def summary(self) -> str:
        """生成执行摘要"""
        lines = [
            f"📊 双准则选列：{self.selected.size} 列，{self.bicriteria.levels} 层",
            f"🔗 降秩后误差：{self.error:.6g}（秩 {self.factorization.k}）",
            f"⏱️ 总耗时：{self.elapsed_seconds:.2f}s",
            "  误差链：",
        ]
        for step in self.provenance:
            note = f"（{step.note}）" if step.note else ""
            lines.append(f"    {step.stage}: {step.error:.6g}，秩 {step.rank}{note}")
        if self.phase_timings:
            lines.append("  阶段耗时：")
            for phase, t in self.phase_timings.items():
                lines.append(f"    {phase}: {t:.2f}s")
        return "\n".join(lines)


def full_pipeline(
    A: DenseMatrix,
    k: int,
    p: PLike,
    seeds: int,
    reg: RegressionConfig,
    *,
    lam: float | None = None,
) -> PipelineResult:
    """
    多项式时间全流程，输出秩 k 分解与误差链。

    Args:
        A: 输入矩阵
        k: 目标秩
        p: 范数指数
        seeds: 双准则采样的随机种子
        reg: 回归配置

    Raises:
        ValueError: k 超出 [1, min(n, m)/2]
        BicriteriaFailure / EnumerationBudgetError: 由各阶段原样传播
    """
    pn = as_pnorm(p)
    if reg.pnorm != pn:
        reg = reg.with_p(pn.p)
    A = np.asarray(A, dtype=np.float64)
    timings: dict[str, float] = {}
    provenance: list[ProvenanceStep] = []

    # ── 阶段 1：双准则选列 ──
    t0 = time.monotonic()
    bic = bicriteria_with_guessing(A, k, pn, reg, seeds, lam=lam)
    timings["bicriteria"] = time.monotonic() - t0
    provenance.append(ProvenanceStep(
        stage="bicriteria",
        error=bic.error,
        rank=bic.selected.size,
        note=f"N={bic.N:.4g}" if bic.N is not None else "全选",
    ))
    logger.info("阶段 1 完成：%d 列，误差 %.6g", bic.selected.size, bic.error)

    # ── 阶段 2：降秩 ──
    t0 = time.monotonic()
    U = submatrix_columns(A, bic.selected)
    V = bic.coefficients
    fact = reduce_rank(A, U, V, k, pn, reg)
    timings["reduce_rank"] = time.monotonic() - t0
    provenance.append(ProvenanceStep(
        stage="reduce_rank",
        error=fact.error,
        rank=numerical_rank(fact.W @ fact.Z),
        note=f"内层子集 {fact.inner_subset.indices}" if fact.inner_subset is not None else "",
    ))
    logger.info("阶段 2 完成：误差 %.6g", fact.error)

    return PipelineResult(
        factorization=fact,
        selected=bic.selected,
        bicriteria=bic,
        provenance=provenance,
        phase_timings=timings,
    )
