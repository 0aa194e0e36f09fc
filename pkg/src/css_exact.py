"""
精确列子集选择 — 枚举全部 k 列子集，取 ℓp 投影误差最小者。

保证：返回误差 ≤ c_{p,k} · OPT。
子集按字典序枚举，经 lp_regression.subset_errors 分块批量求值，再以 (error, subset)
字典序归约，并列时取字典序最小的子集，结果与并行调度无关。
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import config
from .lp_regression import solve_matrix, subset_errors
from .matrix_core import ColumnSubset, DenseMatrix, Factorization, PNorm, submatrix_columns
from .schemas import ApproxReport, RegressionConfig

logger = logging.getLogger(__name__)


class EnumerationBudgetError(ValueError):
    """所需子集数超出枚举预算"""

    def __init__(self, needed: int, budget: int, *, what: str = "css_exact") -> None:
        self.needed = needed
        self.budget = budget
        super().__init__(
            f"{what} 需要枚举 {needed} 个子集，超出预算 {budget}；"
            f"请改用 bicriteria（多项式时间双准则算法）"
        )


@dataclass(frozen=True)
class RatioBound:
    """近似比上界 c_{p,k} 与 C_{p,k} = c_{p,k}^p"""

    p: PNorm
    k: int

    @property
    def c_pk(self) -> float:
        return self.p.c(self.k)

    @property
    def C_pk(self) -> float:
        return self.p.C(self.k)

    def admits(self, ratio: float, tol: float = 1e-2) -> bool:
        return ratio <= self.c_pk * (1 + tol)


@dataclass
class CssResult:
    """精确 CSS 结果"""

    best_subset: ColumnSubset
    factorization: Factorization
    error: float
    subsets_evaluated: int
    elapsed_seconds: float = 0.0

    def summary(self) -> str:
        return (
            f"最优子集 {self.best_subset.indices}（共评估 {self.subsets_evaluated} 个），"
            f"误差 {self.error:.6g}，耗时 {self.elapsed_seconds:.2f}s"
        )


def check_budget(m: int, k: int, budget: Optional[int] = None, *, what: str = "css_exact") -> int:
    """返回 C(m, k)；超出预算抛 EnumerationBudgetError"""
    budget = config.css_budget if budget is None else budget
    needed = math.comb(m, k)
    if needed > budget:
        raise EnumerationBudgetError(needed, budget, what=what)
    return needed


def css_exact(
    A: DenseMatrix,
    k: int,
    cfg: RegressionConfig,
    *,
    budget: Optional[int] = None,
) -> CssResult:
    """
    枚举 ([m] choose k) 的全部子集，返回 ℓp 误差最小的列子集分解。

    Raises:
        ValueError: k 不在 [1, min(n, m)]
        EnumerationBudgetError: C(m, k) 超出预算
    """
    A = np.asarray(A, dtype=np.float64)
    n, m = A.shape
    if not 1 <= k <= min(n, m):
        raise ValueError(f"k 必须满足 1 ≤ k ≤ min(n, m) = {min(n, m)}，实际：{k}")
    needed = check_budget(m, k, budget)

    t0 = time.monotonic()
    subsets = list(itertools.combinations(range(m), k))
    logger.info("css_exact：%d×%d，k=%d，p=%s，枚举 %d 个子集", n, m, k, cfg.pnorm.label, needed)

    errors = subset_errors(A, subsets, cfg)
    best = min(range(len(subsets)), key=lambda i: (errors[i], subsets[i]))
    J = ColumnSubset(subsets[best])

    X = submatrix_columns(A, J)
    sol = solve_matrix(X, A, cfg)
    elapsed = time.monotonic() - t0
    logger.info("css_exact 完成：J=%s，误差 %.6g（%.2fs）", J.indices, sol.objective, elapsed)
    return CssResult(
        best_subset=J,
        factorization=Factorization(left=X, right=sol.coefficients, error=sol.objective),
        error=sol.objective,
        subsets_evaluated=len(subsets),
        elapsed_seconds=elapsed,
    )


def css_ratio_report(
    A: DenseMatrix,
    k: int,
    cfg: RegressionConfig,
    opt_reference: float,
    *,
    reference_kind: str = "analytic",
    tol: float = 1e-2,
    result: Optional[CssResult] = None,
) -> ApproxReport:
    """
    打包 css_exact 的近似比报告：ratio = error / opt_reference，
    通过条件 ratio ≤ c_{p,k} · (1 + tol)。
    """
    if not opt_reference > 0:
        raise ValueError(f"opt_reference 必须为正，实际：{opt_reference}")
    res = result or css_exact(A, k, cfg)
    bound = RatioBound(cfg.pnorm, k)
    ratio = res.error / opt_reference
    return ApproxReport(
        command="css",
        inputs={"shape": list(np.shape(A)), "p": cfg.pnorm.label, "k": k},
        error=res.error,
        reference_kind=reference_kind,
        reference=opt_reference,
        bound=bound.c_pk,
        passed=bound.admits(ratio, tol),
        runtime_ms=int(res.elapsed_seconds * 1000),
        extra={
            "best_subset": list(res.best_subset.indices),
            "subsets_evaluated": res.subsets_evaluated,
        },
    )
