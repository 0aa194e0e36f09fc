"""
双准则列选择 — 多项式时间递归采样，输出 O(k log m) 列，ℓp 误差 O(c_{p,k}) · OPT。

流程（每个 N 猜测独立执行）：
1. 当前矩阵列数 ≤ 2k 时全选
2. 否则反复均匀抽取 2k 列 R，直到至少 1/10 的列被 R 近似覆盖
3. 记下 R，在未被覆盖的列上继续
N 取自以 ‖Δ‖₂（ℓ2 最优秩 k 残差，由奇异值得到）为基准的几何梯度 2^j · ‖Δ‖₂，
所有猜测中取最终回归误差最小者。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import linalg

from .config import config
from .lp_regression import column_norms, projection_residual, solve_matrix, solve_vector
from .matrix_core import ColumnSubset, DenseMatrix, PLike, PNorm, as_pnorm, submatrix_columns
from .schemas import CoverageConfig, RegressionConfig
from .workers import fan_out

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator]


class CoverageFailure(RuntimeError):
    """某一递归层在 max_rounds_per_level 轮内未达到 1/10 覆盖"""

    def __init__(self, level: int, rounds: int, remaining: int, N: float) -> None:
        self.level = level
        self.rounds = rounds
        self.remaining = remaining
        self.N = N
        super().__init__(
            f"第 {level} 层 {rounds} 轮采样均未覆盖 1/10 的列（剩余 {remaining} 列，N={N:.6g}）"
        )


@dataclass
class GuessOutcome:
    """单个 N 猜测的执行结果"""

    N: float
    error: Optional[float] = None
    selected_size: int = 0
    levels: int = 0
    rounds: int = 0
    reason: str = ""

    @property
    def failed(self) -> bool:
        return self.error is None


class BicriteriaFailure(RuntimeError):
    """所有 N 猜测均失败"""

    def __init__(self, outcomes: list[GuessOutcome]) -> None:
        self.outcomes = outcomes
        tried = ", ".join(f"{o.N:.3g}" for o in outcomes)
        super().__init__(f"全部 {len(outcomes)} 个 N 猜测均失败（N = {tried}）；可尝试增大 --lambda")


@dataclass
class BicriteriaResult:
    """双准则选择结果"""

    selected: ColumnSubset
    error: float
    levels: int
    guesses_tried: list[GuessOutcome] = field(default_factory=list)
    N: Optional[float] = None
    coefficients: Optional[np.ndarray] = None

    def summary(self) -> str:
        lines = [
            f"选中 {self.selected.size} 列，递归 {self.levels} 层，误差 {self.error:.6g}",
            "",
            "| N | 误差 | 列数 | 层数 | 轮数 | 状态 |",
            "|---|------|------|------|------|------|",
        ]
        for o in self.guesses_tried:
            err = f"{o.error:.6g}" if o.error is not None else "-"
            status = "❌ " + o.reason if o.failed else "✅"
            lines.append(f"| {o.N:.4g} | {err} | {o.selected_size} | {o.levels} | {o.rounds} | {status} |")
        return "\n".join(lines)


def column_cap(m: int, k: int) -> int:
    """选中列数的上限 2k·ceil(log₂ m + 1) + 2k"""
    return 2 * k * math.ceil(math.log2(m) + 1) + 2 * k


# ──── 近似覆盖 ────


def coverage_threshold(cfg: CoverageConfig, m_cur: int) -> float:
    """
    覆盖阈值（范数形式）。

    p < ∞：obj^p ≤ λ · 100 · C_{p,k} · N^p / m_cur，即 obj ≤ N · (λ·100·C_{p,k}/m_cur)^{1/p}
    p = ∞：obj ≤ λ · (k+1) · N
    """
    pn = cfg.pnorm
    if pn.is_inf:
        return cfg.lam * (cfg.k + 1) * cfg.N
    return cfg.N * (cfg.lam * 100 * pn.C(cfg.k) / m_cur) ** (1 / pn.p)


def _ls_bracket(U: np.ndarray, A: np.ndarray, pn: PNorm) -> tuple[np.ndarray, np.ndarray]:
    """
    由最小二乘残差 r 夹逼逐列 ℓp 最优值：
    上界 ‖r‖_p；下界 ‖r‖₂ · min(1, n^{1/p − 1/2})（ℓ2 最优残差不大于任何残差的 ℓ2 范数）。
    """
    R = projection_residual(U, A)
    n = A.shape[0]
    expo = (0.0 if pn.is_inf else 1 / pn.p) - 0.5
    factor = min(1.0, float(n) ** expo) if n else 1.0
    lo = column_norms(R, PNorm(2)) * factor * (1 - 1e-9)
    return lo, column_norms(R, pn)


def coverage_mask(
    A: DenseMatrix,
    S: ColumnSubset,
    cfg: CoverageConfig,
    reg: RegressionConfig,
    *,
    need: Optional[float] = None,
) -> np.ndarray:
    """
    A 每一列是否被 A_S 近似覆盖；回归未收敛的列按未覆盖处理。

    先用最小二乘上下界筛掉能直接判定的列，只对其余列求 ℓp 回归。
    给定 need 且可能覆盖的列数不足 need 时直接返回确定覆盖的列（本轮必然失败）。
    """
    A = np.asarray(A, dtype=np.float64)
    U = submatrix_columns(A, S)
    thr = coverage_threshold(cfg, A.shape[1])
    lo, hi = _ls_bracket(U, A, cfg.pnorm)
    covered = hi <= thr
    undecided = ~covered & (lo <= thr)
    if need is not None and covered.sum() + undecided.sum() < need:
        return covered
    if undecided.any():
        sol = solve_matrix(U, A[:, undecided], reg)
        covered[undecided] = (sol.column_objectives <= thr) & sol.column_converged
    return covered


def is_approximately_covered(
    A: DenseMatrix,
    S: ColumnSubset,
    i: int,
    cfg: CoverageConfig,
    reg: RegressionConfig,
) -> bool:
    """第 i 列是否被 A_S 近似覆盖（S 必须恰好 2k 列）"""
    if S.size != cfg.sample_size:
        raise ValueError(f"S 必须恰好包含 2k = {cfg.sample_size} 列，实际：{S.size}")
    if not 0 <= i < A.shape[1]:
        raise IndexError(f"列下标越界：{i}（矩阵列数 {A.shape[1]}）")
    sol = solve_vector(submatrix_columns(A, S), np.asarray(A)[:, i], reg)
    if not sol.converged:
        return False
    return bool(sol.objective <= coverage_threshold(cfg, A.shape[1]))


# ──── 递归采样 ────


@dataclass
class _Selection:
    subset: ColumnSubset
    levels: int
    rounds: int


def _select(
    A: DenseMatrix,
    k: int,
    cfg: CoverageConfig,
    reg: RegressionConfig,
    rng: np.random.Generator,
) -> _Selection:
    A = np.asarray(A, dtype=np.float64)
    remaining = np.arange(A.shape[1])
    chosen: list[int] = []
    levels = 0
    total_rounds = 0

    while remaining.size > cfg.sample_size:
        sub = A[:, remaining]
        m_cur = remaining.size
        need = cfg.coverage_fraction * m_cur
        for rounds in range(1, cfg.max_rounds_per_level + 1):
            R = np.sort(rng.choice(m_cur, size=cfg.sample_size, replace=False))
            mask = coverage_mask(sub, ColumnSubset(tuple(int(i) for i in R)), cfg, reg, need=need)
            logger.debug("层 %d 轮 %d：覆盖 %d/%d", levels, rounds, int(mask.sum()), m_cur)
            if mask.sum() >= need:
                break
        else:
            raise CoverageFailure(levels, cfg.max_rounds_per_level, m_cur, cfg.N)

        total_rounds += rounds
        chosen.extend(int(i) for i in remaining[R])
        keep = ~mask
        keep[R] = False
        remaining = remaining[keep]
        levels += 1

    chosen.extend(int(i) for i in remaining)
    return _Selection(ColumnSubset.proper(chosen), levels, total_rounds)


def _as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def select_columns(
    A: DenseMatrix,
    k: int,
    cfg: CoverageConfig,
    reg: RegressionConfig,
    rng_seed: SeedLike,
) -> ColumnSubset:
    """
    递归采样选列。

    Raises:
        CoverageFailure: 某层超过 max_rounds_per_level 轮仍未覆盖 1/10
    """
    if k != cfg.k:
        raise ValueError(f"k={k} 与 CoverageConfig.k={cfg.k} 不一致")
    return _select(A, k, cfg, reg, _as_rng(rng_seed)).subset


# ──── N 猜测梯度 ────


def l2_residual(A: DenseMatrix, k: int) -> float:
    """‖Δ‖₂：ℓ2 最优秩 k 残差 = 第 k+1 个起的奇异值平方和开方"""
    sv = linalg.svdvals(np.asarray(A, dtype=np.float64))
    return float(np.sqrt(np.sum(sv[k:] ** 2)))


def guess_ladder(A: DenseMatrix, k: int, p: PLike) -> list[float]:
    """
    N 的几何猜测序列 2^j · ‖Δ‖₂。

    以全部 n·m 个元素的范数等价确定 ‖Δ‖_p / ‖Δ‖₂ 的范围：
    p < 2 时在 [1, (nm)^{1/p-1/2}]，p > 2 时在 [(nm)^{1/p-1/2}, 1]。
    A 恰为秩 k 时退化为单个极小猜测。
    """
    pn = as_pnorm(p)
    A = np.asarray(A, dtype=np.float64)
    n, m = A.shape
    delta2 = l2_residual(A, k)
    fro = float(np.linalg.norm(A))
    if fro == 0.0:
        return [1.0]
    if delta2 <= config.rank_tol * fro:
        return [1e-9 * fro]

    entries = n * m
    expo = (0.0 if pn.is_inf else 1 / pn.p) - 0.5
    bound = entries ** expo
    lo, hi = min(1.0, bound), max(1.0, bound)
    j_min = math.floor(math.log2(lo))
    j_max = max(j_min + 1, math.ceil(math.log2(hi)))
    return [delta2 * 2.0 ** j for j in range(j_min, j_max + 1)]


def bicriteria_with_guessing(
    A: DenseMatrix,
    k: int,
    p: PLike,
    reg: RegressionConfig,
    rng_seed: int,
    *,
    lam: Optional[float] = None,
    max_rounds_per_level: Optional[int] = None,
) -> BicriteriaResult:
    """
    对每个 N 猜测运行 select_columns，返回最终回归误差最小的选择。

    列数 m = 2k 时直接全选（递归的基本情形），不做猜测。

    Raises:
        ValueError: k 不满足 1 ≤ k ≤ min(n, m)/2
        BicriteriaFailure: 所有猜测均失败
    """
    pn = as_pnorm(p)
    A = np.asarray(A, dtype=np.float64)
    n, m = A.shape
    if k < 1 or 2 * k > min(n, m):
        raise ValueError(f"k 必须满足 1 ≤ k ≤ min(n, m)/2 = {min(n, m) // 2}，实际：{k}")
    if reg.pnorm != pn:
        reg = reg.with_p(pn.p)
    lam = config.coverage_lambda if lam is None else lam
    rounds_cap = config.max_rounds_per_level if max_rounds_per_level is None else max_rounds_per_level

    if m <= 2 * k:
        sel = ColumnSubset.all_columns(m)
        sol = solve_matrix(A, A, reg)
        return BicriteriaResult(
            selected=sel, error=sol.objective, levels=0, coefficients=sol.coefficients,
        )

    ladder = guess_ladder(A, k, pn)
    logger.info("bicriteria：%d×%d，k=%d，p=%s，%d 个 N 猜测", n, m, k, pn.label, len(ladder))

    def _run(item: tuple[int, float]) -> tuple[GuessOutcome, Optional[ColumnSubset]]:
        j, N = item
        cov = CoverageConfig(p=pn.p, k=k, N=N, lam=lam, max_rounds_per_level=rounds_cap)
        rng = np.random.default_rng([rng_seed, j])
        try:
            sel = _select(A, k, cov, reg, rng)
        except CoverageFailure as e:
            logger.warning("⚠️ N=%.4g 失败：%s", N, e)
            return GuessOutcome(N=N, reason=str(e)), None
        err = solve_matrix(submatrix_columns(A, sel.subset), A, reg).objective
        logger.info("N=%.4g：%d 列，%d 层，误差 %.6g", N, sel.subset.size, sel.levels, err)
        return GuessOutcome(
            N=N, error=err, selected_size=sel.subset.size, levels=sel.levels, rounds=sel.rounds,
        ), sel.subset

    runs = fan_out(_run, list(enumerate(ladder)), label="bicriteria")
    outcomes = [o for o, _ in runs]
    ok = [i for i, (o, _) in enumerate(runs) if not o.failed]
    if not ok:
        raise BicriteriaFailure(outcomes)

    best = min(ok, key=lambda i: (outcomes[i].error, i))
    selected = runs[best][1]
    assert selected is not None
    sol = solve_matrix(submatrix_columns(A, selected), A, reg)
    return BicriteriaResult(
        selected=selected,
        error=sol.objective,
        levels=outcomes[best].levels,
        guesses_tried=outcomes,
        N=outcomes[best].N,
        coefficients=sol.coefficients,
    )
