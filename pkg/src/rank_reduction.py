"""
降秩 — 把 O(k log m) 秩的分解 (U, V) 转成严格秩 k 的 (W, Z)。

步骤：
1. W⁰ = make_isoperimetric(U)：与 U 同列空间的近 ℓp 等周基
2. Z⁰ = argmin ‖W⁰Z⁰ − UV‖_p
3. 在 (Z⁰)ᵀ 上做秩 k 精确 CSS 得到 X、Y
4. Z = Xᵀ，W = W⁰Yᵀ

近等周基的契约是探针证书：所有探针 x 上 ‖x‖_p/(2t) ≤ ‖Bx‖_p ≤ ‖x‖_p。
构造方式：列主元 QR 得正交基 → p ≠ 2 时列 ℓp 归一化 + 基于探针的列缩放平衡 →
整体缩放使上比值为 1。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt
from scipy import linalg

from .config import config
from .css_exact import check_budget, css_exact
from .lp_regression import column_norms, solve_matrix
from .matrix_core import ColumnSubset, DenseMatrix, PLike, PNorm, as_pnorm, entrywise_norm
from .schemas import RegressionConfig

logger = logging.getLogger(__name__)

_CERT_SLACK = 1e-9


class ConditioningError(RuntimeError):
    """构造出的基未满足近等周证书（构造缺陷，不是数据问题）"""


@dataclass(frozen=True)
class IsoperimetricBasis:
    """近等周基 B = U · change_of_basis 及其探针证书"""

    B: DenseMatrix
    change_of_basis: np.ndarray
    lower_ratio: float
    upper_ratio: float
    rounds: int = 0

    @property
    def t(self) -> int:
        return int(self.B.shape[1])

    @property
    def certificate_holds(self) -> bool:
        return (
            self.upper_ratio <= 1 + _CERT_SLACK
            and self.lower_ratio >= 1 / (2 * self.t) - _CERT_SLACK
        )


@dataclass
class RankKFactorization:
    """秩 k 分解 W (n×k) · Z (k×m)"""

    W: DenseMatrix
    Z: DenseMatrix
    error: float
    basis: Optional[IsoperimetricBasis] = None
    inner_subset: Optional[ColumnSubset] = None

    @property
    def k(self) -> int:
        return int(self.W.shape[1])


# ──── 近等周基 ────


def independent_columns(U: npt.ArrayLike, tol: Optional[float] = None) -> ColumnSubset:
    """列主元 QR 选出一组线性无关列（按原列号递增返回）"""
    tol = config.rank_tol if tol is None else tol
    U = np.asarray(U, dtype=np.float64)
    if U.shape[1] == 0 or not np.any(U):
        return ColumnSubset(())
    Rm, piv = linalg.qr(U, mode="r", pivoting=True)
    diag = np.abs(np.diag(Rm))
    r = int(np.count_nonzero(diag > tol * diag[0]))
    return ColumnSubset.proper(piv[:r])


def probe_set(t: int, probes: int, seed: int) -> np.ndarray:
    """t 个坐标向量 + probes 个随机符号向量 + probes 个归一化高斯方向（按列排列）"""
    rng = np.random.default_rng(seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=(t, probes))
    gauss = rng.standard_normal((t, probes))
    gauss /= np.linalg.norm(gauss, axis=0)
    return np.hstack([np.eye(t), signs, gauss])


def _ratios(B: np.ndarray, X: np.ndarray, pn: PNorm, xnorms: np.ndarray) -> np.ndarray:
    return column_norms(B @ X, pn) / xnorms


def make_isoperimetric(
    U: npt.ArrayLike,
    p: PLike,
    *,
    rounds: Optional[int] = None,
    probes: Optional[int] = None,
    seed: Optional[int] = None,
) -> IsoperimetricBasis:
    """
    构造与 U 同列空间、满足近等周证书的基。

    Raises:
        ValueError: U 列不满秩（应先用 independent_columns 过滤）
        ConditioningError: 证书不成立
    """
    pn = as_pnorm(p)
    rounds = config.iso_rounds if rounds is None else rounds
    probes = config.iso_probes if probes is None else probes
    seed = config.iso_seed if seed is None else seed

    U = np.asarray(U, dtype=np.float64)
    n, t = U.shape
    if t == 0:
        raise ValueError("U 至少需要一列")
    Q, Rm, piv = linalg.qr(U, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rm))
    if diag.size < t or diag[-1] <= config.rank_tol * diag[0]:
        raise ValueError(f"U 列不满秩（t={t}），请先用 independent_columns 去除相关列")

    # U[:, piv] = Q Rm  ⇒  U @ T = Q，T[piv] = Rm⁻¹
    T = np.zeros((t, t))
    T[piv, :] = linalg.solve_triangular(Rm, np.eye(t))

    X = probe_set(t, probes, seed)
    xnorms = column_norms(X, pn)
    B, D = Q, np.ones(t)
    used = 0

    if pn.p != 2:
        D = 1.0 / column_norms(Q, pn)
        ratios = _ratios(Q * D, X, pn, xnorms)
        best_D, best_spread = D.copy(), ratios.max() / ratios.min()
        share = np.abs(X) ** (1.0 if pn.is_inf else pn.p)
        share /= share.sum(axis=0)
        for _ in range(rounds):
            if best_spread <= 2:
                break
            used += 1
            # 各列在探针上的平均放大倍数，向几何均值收缩
            c = (share @ ratios) / share.sum(axis=1)
            c /= np.exp(np.mean(np.log(c)))
            D = D * c ** -0.5
            ratios = _ratios(Q * D, X, pn, xnorms)
            spread = ratios.max() / ratios.min()
            if spread < best_spread:
                best_D, best_spread = D.copy(), spread
        D = best_D
        B = Q * D

    ratios = _ratios(B, X, pn, xnorms)
    scale = ratios.max()
    B = B / scale
    D = D / scale
    ratios = ratios / scale
    basis = IsoperimetricBasis(
        B=B,
        change_of_basis=T * D,
        lower_ratio=float(ratios.min()),
        upper_ratio=float(ratios.max()),
        rounds=used,
    )
    if not basis.certificate_holds:
        raise ConditioningError(
            f"近等周证书不成立：下比值 {basis.lower_ratio:.3e} < 1/(2t) = {1 / (2 * t):.3e}"
            f" 或上比值 {basis.upper_ratio:.6f} > 1（p={pn.label}，t={t}）"
        )
    logger.debug(
        "近等周基 t=%d p=%s：比值 [%.4f, %.4f]，平衡 %d 轮",
        t, pn.label, basis.lower_ratio, basis.upper_ratio, used,
    )
    return basis


# ──── 降秩 ────


def reduce_rank(
    A: DenseMatrix,
    U: npt.ArrayLike,
    V: npt.ArrayLike,
    k: int,
    p: PLike,
    reg: RegressionConfig,
) -> RankKFactorization:
    """
    把 (U, V) 降为秩 k 分解 (W, Z)。

    Raises:
        ValueError: 形状不匹配或 cols(U) < k
        EnumerationBudgetError: C(t, k) 超出枚举预算
    """
    pn = as_pnorm(p)
    if reg.pnorm != pn:
        reg = reg.with_p(pn.p)
    A = np.asarray(A, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    n, m = A.shape
    t = U.shape[1]
    if U.shape[0] != n or V.shape != (t, m):
        raise ValueError(f"形状不匹配：A {A.shape}，U {U.shape}，V {V.shape}")
    if t < k:
        raise ValueError(f"cols(U) = {t} 小于目标秩 k = {k}")

    target = U @ V
    keep = independent_columns(U)
    t_eff = keep.size
    if t_eff < t:
        logger.info("降秩：U 中 %d 列线性相关，已剔除", t - t_eff)

    if t_eff == 0:
        W, Z = np.zeros((n, k)), np.zeros((k, m))
        return RankKFactorization(W=W, Z=Z, error=entrywise_norm(A, pn))

    basis = make_isoperimetric(U[:, list(keep.indices)], pn)
    W0 = basis.B
    Z0 = solve_matrix(W0, target, reg).coefficients

    inner: Optional[ColumnSubset] = None
    if t_eff <= k:
        # 秩不足 k：补零列/零行，内维恰为 k
        W = np.hstack([W0, np.zeros((n, k - t_eff))])
        Z = np.vstack([Z0, np.zeros((k - t_eff, m))])
        inner = ColumnSubset.all_columns(t_eff)
    else:
        check_budget(t_eff, k, what="reduce_rank")
        css = css_exact(Z0.T, k, reg)
        inner = css.best_subset
        Z = css.factorization.left.T
        W = W0 @ css.factorization.right.T

    error = entrywise_norm(A - W @ Z, pn)
    logger.info("降秩完成：t=%d → k=%d，误差 %.6g", t_eff, k, error)
    return RankKFactorization(W=W, Z=Z, error=error, basis=basis, inner_subset=inner)
