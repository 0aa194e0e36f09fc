"""
ℓp 线性回归 — min_x ‖Ux − b‖_p 与 min_Y ‖A − UY‖_p。

求解策略：
- 先对 U 做 SVD 得到列空间正交基 Q（秩亏时只在 range(U) 上求解，再映射回最小范数系数）
- p = 2：Qᵀ A 闭式最小二乘
- p = 1 / p = ∞：线性规划（scipy.optimize.linprog，HiGHS），各列拼成块对角 LP 一次求解；
  LP 对偶值给出逐列的最优值下界证书
- 1 < p < ∞：按列批量 IRLS，权重 (r² + eps²)^{(p-2)/2}；p < 2 时 eps 逐级减半到下限，
  每步回溯线搜索保证平滑目标单调不增

"问题"指一个 (基, 右端列) 对。基可以所有问题共享（Q 为 n×r），
也可以逐问题给出（Q 为 P×n×r，用于一次求解大量列子集）。
各问题互相独立，结果与处理顺序、分块方式无关。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt
from scipy import linalg, optimize, sparse
from scipy.special import logsumexp

from .config import config
from .matrix_core import ColumnSubset, DenseMatrix, PNorm, entrywise_norm, submatrix_columns
from .schemas import RegressionConfig
from .workers import fan_out

logger = logging.getLogger(__name__)

# 中间平滑级的停滞阈值与迭代上限（最终级使用 cfg.rel_tol / cfg.max_iters）
_LEVEL_TOL = 1e-3
_LEVEL_MAX_ITERS = 20
_MAX_HALVINGS = 30
_RIDGE = 1e-13
# 单个 LP 的残差元素数上限（行数 × 问题数）
_LP_MAX_ENTRIES = 4096
# subset_errors 单批的问题数上限
_BATCH_PROBLEMS = 2048


@dataclass
class RegressionSolution:
    """回归结果；objective 总是由 coefficients 重新计算残差得到"""

    coefficients: np.ndarray
    objective: float
    iterations: int = 0
    converged: bool = True
    rank: int = 0
    rank_deficient: bool = False
    column_objectives: np.ndarray = field(default_factory=lambda: np.zeros(0))
    column_converged: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    # 平滑目标（各列平滑范数之和）逐迭代记录，单调不增；LP 路径只有最终值
    history: list[float] = field(default_factory=list)
    # p ∈ {1, ∞}：各列最优值的 LP 对偶下界
    lower_bound: Optional[np.ndarray] = None
    # restarts > 1 时各起点最终目标的最大相对差
    restart_spread: float = 0.0

    @property
    def dual_gap(self) -> Optional[float]:
        """p ∈ {1, ∞} 时 max_j (obj_j − lb_j) / obj_j；其他 p 为 None"""
        if self.lower_bound is None:
            return None
        obj = self.column_objectives
        mask = obj > 0
        if not mask.any():
            return 0.0
        return float(np.max((obj[mask] - self.lower_bound[mask]) / obj[mask]))


# ──── 工具函数 ────


def column_norms(R: npt.ArrayLike, p: PNorm) -> np.ndarray:
    """逐列 ℓp 范数（按列最大值缩放）"""
    a = np.abs(np.asarray(R, dtype=np.float64))
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] == 0:
        return np.zeros(a.shape[1])
    s = a.max(axis=0)
    if p.is_inf:
        return s
    out = np.zeros(a.shape[1])
    nz = s > 0
    if nz.any():
        scaled = a[:, nz] / s[nz]
        out[nz] = s[nz] * np.sum(scaled ** p.p, axis=0) ** (1 / p.p)
    return out


def uses_linear_program(p: PNorm) -> bool:
    return p.is_inf or p.p == 1


def _range_basis(U: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """U 的列空间正交基 Q、对应奇异值与右奇异向量（按相对容差截断）"""
    n, k = U.shape
    if k == 0 or not np.any(U):
        return np.zeros((n, 0)), np.zeros(0), np.zeros((0, k))
    Uu, sv, Vt = linalg.svd(U, full_matrices=False)
    r = int(np.count_nonzero(sv > config.rank_tol * sv[0]))
    return Uu[:, :r], sv[:r], Vt[:r]


def projection_residual(U: npt.ArrayLike, A: npt.ArrayLike) -> np.ndarray:
    """A 减去其在 range(U) 上的正交投影（ℓ2 最优残差）"""
    U = np.asarray(U, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    Q, _, _ = _range_basis(U)
    return A - Q @ (Q.T @ A)


# 共享基 Q (n×r) 与逐问题基 Q (P×n×r) 的统一运算


def _mul(Q: np.ndarray, Z: np.ndarray) -> np.ndarray:
    return Q @ Z if Q.ndim == 2 else np.einsum("jir,rj->ij", Q, Z)


def _project(Q: np.ndarray, B: np.ndarray) -> np.ndarray:
    return Q.T @ B if Q.ndim == 2 else np.einsum("jir,ij->rj", Q, B)


def _rows(Q: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return Q if Q.ndim == 2 else Q[idx]


def _normal_equations(Q: np.ndarray, W: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if Q.ndim == 2:
        return np.einsum("ir,ij,is->jrs", Q, W, Q), np.einsum("ir,ij,ij->jr", Q, W, B)
    return np.einsum("jir,ij,jis->jrs", Q, W, Q), np.einsum("jir,ij,ij->jr", Q, W, B)


def _log_smoothed(R: np.ndarray, eps: float, p: float) -> np.ndarray:
    """逐列 log Σ_i (r_i² + eps²)^{p/2}（对数域，避免大 p 溢出）"""
    return logsumexp(0.5 * p * np.log(R * R + eps * eps), axis=0)


def _batched_solve(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(G, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.einsum("jrs,js->jr", np.linalg.pinv(G), rhs)


def _smoothing_levels(p: float, cfg: RegressionConfig) -> list[tuple[float, float, int]]:
    """(eps, 停滞阈值, 迭代上限) 序列；eps 以列的 ‖b‖_∞ 为单位"""
    floor = cfg.smoothing_eps
    if p >= 2:
        return [(floor, cfg.rel_tol, cfg.max_iters)]
    levels: list[tuple[float, float, int]] = []
    eps = cfg.smoothing_start
    while eps > floor:
        levels.append((eps, max(cfg.rel_tol, _LEVEL_TOL), min(cfg.max_iters, _LEVEL_MAX_ITERS)))
        eps *= cfg.smoothing_decay
    levels.append((floor, cfg.rel_tol, cfg.max_iters))
    return levels


@dataclass
class _BatchSolution:
    """归一化单位下的批量解"""

    Z: np.ndarray
    objectives: np.ndarray
    converged: np.ndarray
    iterations: int = 0
    history: list[float] = field(default_factory=list)
    lower: Optional[np.ndarray] = None
    spread: float = 0.0


# ──── IRLS 核心 ────


def _irls(
    Q: np.ndarray,
    B: np.ndarray,
    p: float,
    cfg: RegressionConfig,
    Z0: np.ndarray,
) -> _BatchSolution:
    """
    对 B 的所有列同时做 IRLS（B 已按列 ‖·‖_∞ 归一化）。

    每步：加权最小二乘得到方向 D，沿 D 回溯直到平滑目标不增；
    无可接受步长或相对下降低于阈值时该列在本级收敛。返回途中最优迭代。
    """
    r = Q.shape[-1]
    m = B.shape[1]
    pn = PNorm(p)
    Z = Z0.copy()
    R = B - _mul(Q, Z)
    best_Z = Z.copy()
    best_obj = column_norms(R, pn)
    converged = np.zeros(m, dtype=bool)
    history: list[float] = []
    iterations = 0
    eye = np.eye(r)
    levels = _smoothing_levels(p, cfg)

    for level_no, (eps, tol, max_iters) in enumerate(levels):
        logf = _log_smoothed(R, eps, p)
        history.append(float(np.exp(logf / p).sum()))
        active = np.ones(m, dtype=bool)

        for _ in range(max_iters):
            if not active.any():
                break
            idx = np.flatnonzero(active)
            Qa = _rows(Q, idx)
            Ra, Ba, Za = R[:, idx], B[:, idx], Z[:, idx]

            logw = 0.5 * (p - 2) * np.log(Ra * Ra + eps * eps)
            W = np.exp(logw - logw.max(axis=0))
            G, rhs = _normal_equations(Qa, W, Ba)
            trace = np.trace(G, axis1=1, axis2=2) / r
            scale = np.where(trace > 0, trace, 1.0)
            G += (_RIDGE * scale)[:, None, None] * eye
            D = _batched_solve(G, rhs).T - Za

            f0 = logf[idx]
            t = np.ones(idx.size)
            newZ, newR, newf = Za.copy(), Ra.copy(), f0.copy()
            accepted = np.zeros(idx.size, dtype=bool)
            pending = np.ones(idx.size, dtype=bool)
            for _h in range(_MAX_HALVINGS):
                if not pending.any():
                    break
                pi = np.flatnonzero(pending)
                cand = Za[:, pi] + t[pi] * D[:, pi]
                candR = Ba[:, pi] - _mul(_rows(Qa, pi), cand)
                fc = _log_smoothed(candR, eps, p)
                ok = fc <= f0[pi]
                hit = pi[ok]
                newZ[:, hit] = cand[:, ok]
                newR[:, hit] = candR[:, ok]
                newf[hit] = fc[ok]
                accepted[hit] = True
                pending[hit] = False
                t[pi[~ok]] *= 0.5

            Z[:, idx], R[:, idx], logf[idx] = newZ, newR, newf
            iterations += 1
            history.append(float(np.exp(logf / p).sum()))

            obj = column_norms(newR, pn)
            better = obj < best_obj[idx]
            best_obj[idx[better]] = obj[better]
            best_Z[:, idx[better]] = newZ[:, better]

            decrease = -np.expm1(newf - f0)
            done = (~accepted) | (decrease <= tol)
            active[idx[done]] = False

        if level_no == len(levels) - 1:
            converged = ~active

    return _BatchSolution(
        Z=best_Z, objectives=best_obj, converged=converged, iterations=iterations, history=history,
    )


# ──── 线性规划（p = 1 / p = ∞）────


def _linprog_block(Q: np.ndarray, B: np.ndarray, pn: PNorm) -> Optional[tuple[np.ndarray, np.ndarray, int]]:
    """
    块对角 LP：
    p = ∞：min Σ_j t_j，  −t_j ≤ b_j − Q_j z_j ≤ t_j
    p = 1：min Σ_ij s_ij，−s_j ≤ b_j − Q_j z_j ≤ s_j

    返回 (Z, 逐问题对偶目标, 迭代数)；求解失败返回 None。
    """
    n, P = B.shape
    r = Q.shape[-1]
    if Q.ndim == 2:
        K = sparse.kron(sparse.identity(P, format="csr"), sparse.csr_matrix(Q), format="csr")
    else:
        K = sparse.block_diag([sparse.csr_matrix(q) for q in Q], format="csr")
    if pn.is_inf:
        E = sparse.kron(sparse.identity(P, format="csr"), sparse.csr_matrix(np.ones((n, 1))), format="csr")
    else:
        E = sparse.identity(n * P, format="csr")
    slacks = E.shape[1]

    b = B.T.ravel()
    A_ub = sparse.vstack([sparse.hstack([K, -E]), sparse.hstack([-K, -E])], format="csc")
    b_ub = np.concatenate([b, -b])
    c = np.concatenate([np.zeros(r * P), np.ones(slacks)])
    bounds = [(None, None)] * (r * P) + [(0, None)] * slacks

    res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        logger.warning("⚠️ linprog 失败（%d 个问题）：%s", P, res.message)
        return None
    Z = res.x[: r * P].reshape(P, r).T
    y = res.ineqlin.marginals
    dual = ((y[: n * P] - y[n * P:]) * b).reshape(P, n).sum(axis=1)
    return Z, dual, int(res.nit)


def _solve_linear_program(Q: np.ndarray, B: np.ndarray, pn: PNorm) -> _BatchSolution:
    """按 _LP_MAX_ENTRIES 分块求解；失败块退回最小二乘解并标记未收敛"""
    n, P = B.shape
    Z = _project(Q, B)
    lower = np.zeros(P)
    converged = np.ones(P, dtype=bool)
    iterations = 0
    per = max(1, _LP_MAX_ENTRIES // max(n, 1))
    for start in range(0, P, per):
        sl = slice(start, min(P, start + per))
        out = _linprog_block(Q if Q.ndim == 2 else Q[sl], B[:, sl], pn)
        if out is None:
            converged[sl] = False
            continue
        Z[:, sl], lower[sl], nit = out
        iterations += nit

    objectives = column_norms(B - _mul(Q, Z), pn)
    lower = np.clip(lower, 0.0, objectives)
    return _BatchSolution(
        Z=Z, objectives=objectives, converged=converged, iterations=iterations,
        history=[float(objectives.sum())], lower=lower,
    )


def _solve_normalized(Q: np.ndarray, B: np.ndarray, cfg: RegressionConfig) -> _BatchSolution:
    """B 的各列已按 ‖·‖_∞ 归一化；按 p 选择闭式、LP 或 IRLS"""
    pn = cfg.pnorm
    Z_ls = _project(Q, B)
    if pn.p == 2:
        obj = column_norms(B - _mul(Q, Z_ls), pn)
        return _BatchSolution(
            Z=Z_ls, objectives=obj, converged=np.ones(B.shape[1], dtype=bool), iterations=1,
        )
    if uses_linear_program(pn):
        return _solve_linear_program(Q, B, pn)

    starts = [Z_ls]
    rng = np.random.default_rng(0)
    for _ in range(cfg.restarts - 1):
        starts.append(Z_ls + 0.1 * rng.standard_normal(Z_ls.shape))
    runs = [_irls(Q, B, pn.p, cfg, Z0) for Z0 in starts]
    if len(runs) == 1:
        return runs[0]

    objs = np.stack([run.objectives for run in runs])
    pick = np.argmin(objs, axis=0)
    cols = np.arange(B.shape[1])
    Z = np.stack([run.Z for run in runs])[pick, :, cols].T
    conv = np.stack([run.converged for run in runs])[pick, cols]
    hi = objs.max(axis=0)
    nz = hi > 0
    spread = float(np.max((hi[nz] - objs.min(axis=0)[nz]) / hi[nz])) if nz.any() else 0.0
    return _BatchSolution(
        Z=Z, objectives=objs[pick, cols], converged=conv,
        iterations=max(run.iterations for run in runs), history=runs[0].history, spread=spread,
    )


# ──── 公共接口 ────


def solve_matrix(U: npt.ArrayLike, A: npt.ArrayLike, cfg: RegressionConfig) -> RegressionSolution:
    """
    逐列求解 min_Y ‖A − UY‖_p。

    Returns:
        RegressionSolution，coefficients 为 k×m；objective 为各列目标的合并 p 范数
    """
    U = np.asarray(U, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if U.ndim != 2 or A.ndim != 2:
        raise ValueError(f"U 与 A 必须为二维矩阵，实际：{U.shape}, {A.shape}")
    if U.shape[0] != A.shape[0]:
        raise ValueError(f"行数不匹配：U {U.shape} 与 A {A.shape}")
    pn = cfg.pnorm
    n, k = U.shape
    m = A.shape[1]

    Q, sv, Vt = _range_basis(U)
    r = Q.shape[1]

    Z = np.zeros((r, m))
    lower: Optional[np.ndarray] = np.zeros(m) if uses_linear_program(pn) else None
    history: list[float] = []
    iterations = 0
    col_conv = np.ones(m, dtype=bool)
    spread = 0.0

    scales = np.abs(A).max(axis=0) if n else np.zeros(m)
    live = np.flatnonzero(scales > 0)
    if r > 0 and live.size:
        sol = _solve_normalized(Q, A[:, live] / scales[live], cfg)
        Z[:, live] = sol.Z * scales[live]
        col_conv[live] = sol.converged
        iterations = sol.iterations
        history = sol.history
        spread = sol.spread
        if lower is not None and sol.lower is not None:
            lower[live] = sol.lower * scales[live]

    coef = Vt.T @ (Z / sv[:, None]) if r > 0 else np.zeros((k, m))
    residual = A - U @ coef
    col_obj = column_norms(residual, pn)
    if lower is not None:
        if r == 0:
            lower = col_obj.copy()
        lower = np.minimum(lower, col_obj)
    converged = bool(col_conv.all())
    if not converged:
        logger.warning(
            "⚠️ ℓp 回归未收敛：%d/%d 列（p=%s，max_iters=%d），返回最优迭代",
            int((~col_conv).sum()), m, pn.label, cfg.max_iters,
        )
    return RegressionSolution(
        coefficients=coef,
        objective=entrywise_norm(residual, pn),
        iterations=iterations,
        converged=converged,
        rank=r,
        rank_deficient=r < k,
        column_objectives=col_obj,
        column_converged=col_conv,
        history=history,
        lower_bound=lower,
        restart_spread=spread,
    )


def solve_vector(U: npt.ArrayLike, b: npt.ArrayLike, cfg: RegressionConfig) -> RegressionSolution:
    """min_x ‖Ux − b‖_p；coefficients 为长度 k 的向量"""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1:
        raise ValueError(f"b 必须为向量，实际维数：{b.ndim}")
    sol = solve_matrix(U, b[:, None], cfg)
    sol.coefficients = sol.coefficients[:, 0]
    return sol


def err_of_subset(A: DenseMatrix, J: ColumnSubset, cfg: RegressionConfig) -> float:
    """Err(A_J) = min_Y ‖A − A_J Y‖_p"""
    if J.size > A.shape[1]:
        raise ValueError(f"|J| = {J.size} 超过列数 {A.shape[1]}")
    if J.size == 0:
        return entrywise_norm(A, cfg.pnorm)
    return solve_matrix(submatrix_columns(A, J), A, cfg).objective


# ──── 多子集批量求值 ────


def _subset_bases(A: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    """每个子集 A_J 的列空间正交基，秩亏方向置零；形状 S×n×k"""
    X = np.transpose(A[:, subsets], (1, 0, 2))
    Uu, sv, _ = np.linalg.svd(X, full_matrices=False)
    keep = sv > config.rank_tol * sv[:, :1]
    return Uu * keep[:, None, :]


def subset_errors(A: DenseMatrix, subsets: Sequence[tuple[int, ...]], cfg: RegressionConfig) -> np.ndarray:
    """
    批量计算 Err(A_J)，所有子集大小相同。

    (子集, 列) 对拼成一批问题一起求解，按固定大小分块并经 workers.fan_out 并行；
    分块只取决于输入规模，结果与线程数无关。
    """
    A = np.asarray(A, dtype=np.float64)
    pn = cfg.pnorm
    n, m = A.shape
    if not subsets:
        return np.zeros(0)
    sizes = {len(J) for J in subsets}
    if len(sizes) != 1:
        raise ValueError(f"子集大小必须一致，实际：{sorted(sizes)}")
    if sizes == {0}:
        return np.full(len(subsets), entrywise_norm(A, pn))

    scales = np.abs(A).max(axis=0) if n else np.zeros(m)
    live = np.flatnonzero(scales > 0)
    if live.size == 0:
        return np.zeros(len(subsets))
    Bn = A[:, live] / scales[live]
    w = live.size
    idx = np.asarray(subsets, dtype=np.intp)
    per = max(1, _BATCH_PROBLEMS // w)
    chunks = [idx[s:s + per] for s in range(0, len(idx), per)]

    def _chunk(block: np.ndarray) -> np.ndarray:
        S = block.shape[0]
        Q = np.repeat(_subset_bases(A, block), w, axis=0)
        sol = _solve_normalized(Q, np.tile(Bn, (1, S)), cfg)
        if not sol.converged.all():
            logger.warning("⚠️ subset_errors：%d/%d 个问题未收敛", int((~sol.converged).sum()), sol.converged.size)
        cols = sol.objectives.reshape(S, w) * scales[live]
        return column_norms(cols.T, pn)

    return np.concatenate(fan_out(_chunk, chunks, label="subset_errors"))
