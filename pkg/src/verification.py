"""
数值验证 — 近似保证依赖的恒等式与不等式，以及 OPT 上界预言机。

检查项：
- lambda：‖Λ(a, b)‖_p ≤ M_p ‖a‖_p ‖b‖_p（p × k × m 网格，批量随机实例）
- schur：det(V_J)(Δ_di − Δ_dJ V_J⁻¹ V_i) = det([[Δ_di, Δ_dJ], [V_i, V_J]])
- lemma1：Err^p(A_J) ≤ ‖Δ − Δ_J V_J⁻¹ V‖_p^p
- weighted：min_J Err^p(A_J) ≤ Σ_J w_J Err^p(A_J) ≤ C_{p,k}‖Δ‖_p^p，w_J ∝ |det V_J|^p

每个试验使用独立的 default_rng([seed, i])，结果与并行调度无关。
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
import numpy.typing as npt
from scipy import linalg

from .css_exact import css_exact
from .lambda_operator import LambdaInstance, lambda_norms
from .lp_regression import err_of_subset, solve_matrix, subset_errors
from .matrix_core import (
    ColumnSubset,
    DenseMatrix,
    PLike,
    PNorm,
    as_pnorm,
    determinant,
    entrywise_norm,
    numerical_rank,
    submatrix_columns,
)
from .schemas import OracleConfig, RegressionConfig
from .workers import fan_out

logger = logging.getLogger(__name__)

LAMBDA_GRID_P: tuple[float, ...] = (1.0, 1.25, 1.5, 2.0, 3.0, 4.0, math.inf)
LAMBDA_GRID_K: tuple[int, ...] = (1, 2, 3)
LAMBDA_MAX_M = 7

_IDENTITY_TOL = 1e-9
_COND_LIMIT = 1e12
# 残差数值噪声的绝对容差（相对 ‖A‖_p）
_ABS_TOL = 1e-10


@dataclass
class CheckOutcome:
    """单次检查：lhs 与 rhs、是否成立、是否因前置条件跳过"""

    lhs: float
    rhs: float
    holds: bool
    skipped: bool = False
    note: str = ""


@dataclass
class WeightedAverageCheck:
    """加权平均界检查"""

    err_best: float
    weighted_average: float
    bound: float
    weights_sum: float
    holds: bool
    chain_holds: bool
    skipped: bool = False
    note: str = ""


# ──── 单项检查 ────


def _power(x: float, pn: PNorm) -> float:
    """p < ∞ 时取 x^p；p = ∞ 时直接比较范数"""
    return x if pn.is_inf else x ** pn.p


def _is_singular(M: np.ndarray) -> bool:
    if M.size == 0:
        return False
    cond = np.linalg.cond(M)
    return not np.isfinite(cond) or cond > _COND_LIMIT


def check_lemma1(
    A: DenseMatrix,
    U: npt.ArrayLike,
    V: npt.ArrayLike,
    J: ColumnSubset,
    p: PLike,
    reg: RegressionConfig,
) -> CheckOutcome:
    """Err^p(A_J) ≤ ‖Δ − Δ_J V_J⁻¹ V‖_p^p，Δ = A − UV；V_J 奇异时跳过"""
    pn = as_pnorm(p)
    if reg.pnorm != pn:
        reg = reg.with_p(pn.p)
    A = np.asarray(A, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    VJ = submatrix_columns(V, J)
    if _is_singular(VJ):
        return CheckOutcome(0.0, 0.0, holds=False, skipped=True, note="det(V_J) = 0，不满足前置条件")

    delta = A - U @ V
    correction = delta - submatrix_columns(delta, J) @ linalg.solve(VJ, V)
    lhs = _power(err_of_subset(A, J, reg), pn)
    rhs = _power(entrywise_norm(correction, pn), pn)
    atol = _power(_ABS_TOL * entrywise_norm(A, pn), pn)
    return CheckOutcome(lhs, rhs, holds=lhs <= rhs * (1 + 10 * reg.rel_tol) + atol)


def check_schur_identity(
    delta_col: float,
    delta_dJ: npt.ArrayLike,
    V_i: npt.ArrayLike,
    V_J: npt.ArrayLike,
) -> CheckOutcome:
    """det(V_J)(Δ_di − Δ_dJ V_J⁻¹ V_i) 与加边行列式相等；V_J 奇异时跳过"""
    dJ = np.asarray(delta_dJ, dtype=np.float64).ravel()
    Vi = np.asarray(V_i, dtype=np.float64).ravel()
    VJ = np.asarray(V_J, dtype=np.float64)
    if _is_singular(VJ):
        return CheckOutcome(0.0, 0.0, holds=False, skipped=True, note="V_J 奇异")

    lhs = determinant(VJ) * (float(delta_col) - float(dJ @ linalg.solve(VJ, Vi)))
    bordered = np.block([[np.array([[float(delta_col)]]), dJ[None, :]], [Vi[:, None], VJ]])
    rhs = determinant(bordered)
    equal = abs(lhs - rhs) <= _IDENTITY_TOL * max(1.0, abs(rhs))
    return CheckOutcome(lhs, rhs, holds=equal)


def l2_optimal_factors(A: npt.ArrayLike, k: int) -> tuple[np.ndarray, np.ndarray]:
    """ℓ2 最优秩 k 分解 (U, V)：U = P_k Σ_k，V = Q_kᵀ"""
    P, s, Qt = linalg.svd(np.asarray(A, dtype=np.float64), full_matrices=False)
    return P[:, :k] * s[:k], Qt[:k]


def check_weighted_average_bound(
    A: DenseMatrix,
    k: int,
    p: PLike,
    reg: RegressionConfig,
    *,
    chain_slack: float = 1e-2,
) -> WeightedAverageCheck:
    """
    Δ 取 ℓ2 最优残差，权重 w_J ∝ |det V_J|^p 遍历全部有序 k 元组（重复下标 det = 0）。

    p = ∞ 时权重集中在 |det V_J| 最大的元组上，比较的是范数而非幂次，界为 (k+1)‖Δ‖_∞。
    """
    pn = as_pnorm(p)
    if reg.pnorm != pn:
        reg = reg.with_p(pn.p)
    A = np.asarray(A, dtype=np.float64)
    m = A.shape[1]
    U, V = l2_optimal_factors(A, k)
    if numerical_rank(V) < k:
        return WeightedAverageCheck(0, 0, 0, 0, False, False, skipped=True, note="rank(V) < k")
    delta = A - U @ V

    subsets = list(itertools.combinations(range(m), k))
    errs = {J: _power(float(e), pn) for J, e in zip(subsets, subset_errors(A, subsets, reg))}
    err_best = min(errs.values())

    tuples = [J for J in itertools.product(range(m), repeat=k) if len(set(J)) == k]
    dets = np.abs(np.array([determinant(V[:, list(J)]) for J in tuples]))
    if pn.is_inf:
        top = dets.max()
        w = np.where(dets >= top * (1 - 1e-12), 1.0, 0.0)
    else:
        logd = np.where(dets > 0, np.log(np.where(dets > 0, dets, 1.0)), -np.inf)
        w = np.exp(pn.p * (logd - logd.max()))
    w = w / w.sum()
    weighted = float(sum(wi * errs[tuple(sorted(J))] for wi, J in zip(w, tuples)))

    bound = pn.c(k) * entrywise_norm(delta, pn) if pn.is_inf else pn.C(k) * entrywise_norm(delta, pn) ** pn.p
    tol = 1 + 10 * reg.rel_tol
    atol = _power(_ABS_TOL * entrywise_norm(A, pn), pn)
    return WeightedAverageCheck(
        err_best=err_best,
        weighted_average=weighted,
        bound=bound,
        weights_sum=float(w.sum()),
        holds=err_best <= weighted * tol + atol,
        chain_holds=err_best <= bound * (1 + chain_slack) + atol,
    )


# ──── OPT 预言机 ────


def _alternate(A: np.ndarray, U0: np.ndarray, cfg: OracleConfig, reg: RegressionConfig) -> float:
    """从 U0 出发交替求解 V、U，返回途中最优目标"""
    U = U0
    best = math.inf
    prev = math.inf
    for _ in range(cfg.inner_iters):
        sol_v = solve_matrix(U, A, reg)
        best = min(best, sol_v.objective)
        sol_u = solve_matrix(sol_v.coefficients.T, A.T, reg)
        best = min(best, sol_u.objective)
        U = sol_u.coefficients.T
        if prev - sol_u.objective <= 1e-6 * max(prev, 1e-300) and math.isfinite(prev):
            break
        prev = sol_u.objective
    return best


def opt_oracle_runs(
    A: DenseMatrix, k: int, cfg: OracleConfig, reg: RegressionConfig,
) -> list[float]:
    """各起点的最优目标；第 0 个起点为 ℓ2 最优解，其余为种子 [seed, i] 的高斯初值"""
    pn = cfg.pnorm
    if reg.pnorm != pn:
        reg = reg.with_p(pn.p)
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    U_svd, _ = l2_optimal_factors(A, k)

    def _start(i: int) -> float:
        if i == 0:
            U0 = U_svd
        else:
            U0 = np.random.default_rng([cfg.seed, i]).standard_normal((n, k))
        return _alternate(A, U0, cfg, reg)

    return fan_out(_start, range(cfg.restarts), label="opt_oracle")


def opt_oracle(A: DenseMatrix, k: int, cfg: OracleConfig, reg: RegressionConfig) -> float:
    """
    OPT 的上界估计。

    p = 2 时为奇异值截断的精确残差；其他 p 为多起点交替极小化的最小值
    （起点固定，因此随 restarts 增加单调不增）。p ≠ 2 时只是启发式上估计，
    以它为分母的 ratio 可能低于真实近似比。
    """
    A = np.asarray(A, dtype=np.float64)
    if cfg.pnorm.p == 2:
        s = linalg.svdvals(A)
        return float(np.sqrt(np.sum(s[k:] ** 2)))
    return float(min(opt_oracle_runs(A, k, cfg, reg)))


# ──── 批量试验 ────


@dataclass
class VerifySummary:
    """某类检查的计数汇总"""

    kind: str
    trials: int = 0
    passed: int = 0
    failed: int = 0
    skipped: int = 0
    worst_ratio: float = 0.0
    params: dict[str, Any] = field(default_factory=dict)
    failures: list[dict[str, Any]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def merge(self, outcomes: Sequence[CheckOutcome], **params: Any) -> None:
        for i, o in enumerate(outcomes):
            self.trials += 1
            if o.skipped:
                self.skipped += 1
                continue
            if o.rhs > 0:
                self.worst_ratio = max(self.worst_ratio, o.lhs / o.rhs)
            if o.holds:
                self.passed += 1
            else:
                self.failed += 1
                if len(self.failures) < 10:
                    self.failures.append({**params, "trial": i, "lhs": o.lhs, "rhs": o.rhs})

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def summary(self) -> str:
        flag = "✅" if self.ok else "❌"
        return (
            f"{flag} verify {self.kind}：{self.passed}/{self.trials} 通过，"
            f"{self.failed} 失败，{self.skipped} 跳过，最大 lhs/rhs = {self.worst_ratio:.6g}"
        )


def _lambda_batch(p: float, k: int, m: int, trials: int, seed: Sequence[int]) -> list[CheckOutcome]:
    """高斯、符号、稀疏三类实例各占约 1/3"""
    rng = np.random.default_rng(list(seed))
    nb = math.comb(m, k)
    a = rng.standard_normal((trials, m))
    b = rng.standard_normal((trials, nb))
    kind = np.arange(trials) % 3
    signs = kind == 1
    a[signs] = np.sign(a[signs])
    b[signs] = np.sign(b[signs])
    sparse = kind == 2
    b[sparse] *= rng.random((int(sparse.sum()), nb)) < 0.3
    inst = LambdaInstance(m=m, k=k, a=a, b=b)
    lhs, rhs = lambda_norms(inst, p)
    holds = lhs <= rhs * (1 + _IDENTITY_TOL)
    return [CheckOutcome(float(l), float(r), bool(h)) for l, r, h in zip(lhs, rhs, holds)]


def _random_schur(k: int, rng: np.random.Generator) -> CheckOutcome:
    return check_schur_identity(
        rng.standard_normal(),
        rng.standard_normal(k),
        rng.standard_normal(k),
        rng.standard_normal((k, k)),
    )


def _random_lemma1(k: int, p: float, rng: np.random.Generator, reg: RegressionConfig) -> CheckOutcome:
    A = rng.standard_normal((4, 5))
    css = css_exact(A, k, reg.with_p(2.0))
    U, V = css.factorization.left, css.factorization.right
    J = ColumnSubset(tuple(sorted(rng.choice(5, size=k, replace=False).tolist())))
    return check_lemma1(A, U, V, J, p, reg)


def _random_weighted(k: int, p: float, rng: np.random.Generator, reg: RegressionConfig) -> CheckOutcome:
    A = rng.standard_normal((4, 6))
    res = check_weighted_average_bound(A, k, p, reg)
    return CheckOutcome(
        lhs=res.err_best,
        rhs=min(res.weighted_average, res.bound),
        holds=res.holds and res.chain_holds,
        skipped=res.skipped,
        note=res.note,
    )


def run_checks(
    kind: str,
    trials: int,
    seed: int,
    p: Optional[PLike] = None,
    k: Optional[int] = None,
    *,
    reg: Optional[RegressionConfig] = None,
) -> VerifySummary:
    """
    执行一类检查的 trials 次种子试验。

    kind ∈ {lambda, schur, lemma1, weighted}。p、k 缺省时：
    lambda 遍历完整网格（每个 (p, k, m) 各 trials 个实例）；
    schur 取 k = 3；lemma1 取 k = 2、p = 2；weighted 在 k ∈ {1, 2} 间交替、p = 2。
    """
    if trials < 1:
        raise ValueError(f"trials 必须 ≥ 1，实际：{trials}")
    summary = VerifySummary(kind=kind, params={"seed": seed, "p": None if p is None else as_pnorm(p).label, "k": k})
    reg = reg or RegressionConfig.from_settings(2.0)

    if kind == "lambda":
        ps = LAMBDA_GRID_P if p is None else (as_pnorm(p).p,)
        ks = LAMBDA_GRID_K if k is None else (k,)
        combos = [
            (pp, kk, mm)
            for pp in ps
            for kk in ks
            for mm in range(kk + 1, max(LAMBDA_MAX_M, kk + 1) + 1)
        ]
        grid = [(gi, *c) for gi, c in enumerate(combos)]
        batches = fan_out(
            lambda g: _lambda_batch(g[1], g[2], g[3], trials, (seed, g[0])),
            grid,
            label="verify lambda",
        )
        for (gi, pp, kk, mm), outcomes in zip(grid, batches):
            summary.merge(outcomes, p=PNorm(pp).label, k=kk, m=mm)
    elif kind == "schur":
        kk = 3 if k is None else k
        outcomes = fan_out(
            lambda i: _random_schur(kk, np.random.default_rng([seed, i])),
            range(trials),
            label="verify schur",
        )
        summary.merge(outcomes, k=kk)
    elif kind == "lemma1":
        kk = 2 if k is None else k
        pp = 2.0 if p is None else as_pnorm(p).p
        outcomes = fan_out(
            lambda i: _random_lemma1(kk, pp, np.random.default_rng([seed, i]), reg.with_p(pp)),
            range(trials),
            label="verify lemma1",
        )
        summary.merge(outcomes, k=kk, p=PNorm(pp).label)
    elif kind == "weighted":
        pp = 2.0 if p is None else as_pnorm(p).p

        def _trial(i: int) -> CheckOutcome:
            kk = (1 + i % 2) if k is None else k
            return _random_weighted(kk, pp, np.random.default_rng([seed, i]), reg.with_p(pp))

        outcomes = fan_out(_trial, range(trials), label="verify weighted")
        summary.merge(outcomes, p=PNorm(pp).label)
    else:
        raise ValueError(f"未知的检查类型：{kind}（支持：lambda, schur, lemma1, weighted）")

    log = logger.info if summary.ok else logger.warning
    log(summary.summary())
    return summary
