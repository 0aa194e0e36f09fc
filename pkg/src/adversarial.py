"""
对抗实例 — 扰动 Hadamard 下界实例 A(ε) 与带噪低秩植入实例。

A(ε)：取 Sylvester 构造的 H^{(2^r)}，把第一行全部替换为 ε。
k = 2^r − 1，任何 k 列子集的留一误差都约为 (k+1)^{1−1/p} · OPT。
H 的第 2..k+1 行与全 1 行正交，因此各列之和在第一行以下为 0，
留一回归的系数接近全 −1 向量。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .config import config
from .lp_regression import err_of_subset, solve_vector
from .matrix_core import ColumnSubset, DenseMatrix, PLike, PNorm, as_pnorm, entrywise_norm
from .schemas import ApproxReport, RegressionConfig
from .workers import fan_out

logger = logging.getLogger(__name__)

MAX_HADAMARD_ORDER = 64


# ──── Hadamard 下界实例 ────


def sylvester_hadamard(r: int) -> DenseMatrix:
    """
    H^{(2^r)}：H^{(1)} = [1]，H^{(2l)} = [[H, H], [H, −H]]。

    Raises:
        ValueError: r < 0 或 2^r > 64
    """
    if r < 0:
        raise ValueError(f"r 必须 ≥ 0，实际：{r}")
    order = 2 ** r
    if order > MAX_HADAMARD_ORDER:
        raise ValueError(f"2^r = {order} 超过上限 {MAX_HADAMARD_ORDER}")
    return linalg.hadamard(order).astype(np.float64)


def _lb_formula(k: int, eps: float, pn: PNorm) -> float:
    """(k+1)^{1−1/p} / (1 + k ε^q)^{1/q}"""
    q = pn.q
    head = (k + 1) ** (1 - 1 / pn.p)
    if math.isinf(q):
        # q → ∞ 时 (1 + kε^q)^{1/q} → 1（ε < 1）
        return float(head)
    return float(head / (1 + k * eps ** q) ** (1 / q))


@dataclass(frozen=True)
class HadamardInstance:
    """A(ε) 及其解析量"""

    r: int
    eps: float
    p: PNorm
    H: DenseMatrix
    A_eps: DenseMatrix
    # OPT ≤ (k+1)^{1/p} ε
    opt_upper: float
    lb_formula: float

    @property
    def k(self) -> int:
        return 2 ** self.r - 1

    @property
    def tight_limit(self) -> float:
        """ε → 0 时下界的极限 (k+1)^{1−1/p}"""
        return float((self.k + 1) ** (1 - 1 / self.p.p))

    def with_p(self, p: PLike) -> "HadamardInstance":
        pn = as_pnorm(p)
        return replace(
            self,
            p=pn,
            opt_upper=_opt_upper(self.k, self.eps, pn),
            lb_formula=_lb_formula(self.k, self.eps, pn),
        )


def _opt_upper(k: int, eps: float, pn: PNorm) -> float:
    if pn.is_inf:
        return float(eps)
    return float((k + 1) ** (1 / pn.p) * eps)


def hadamard_instance(r: int, eps: float, p: PLike) -> HadamardInstance:
    """
    构造 A(ε)：第一行为 ε，其余行取自 H^{(2^r)}。

    Raises:
        ValueError: r < 1、2^r > 64 或 ε ∉ (0, 1)
    """
    if r < 1:
        raise ValueError(f"r 必须 ≥ 1（k = 2^r − 1 ≥ 1），实际：{r}")
    if not 0 < eps < 1:
        raise ValueError(f"eps 必须在 (0, 1) 内，实际：{eps}")
    pn = as_pnorm(p)
    H = sylvester_hadamard(r)
    A = H.copy()
    A[0, :] = eps
    H.setflags(write=False)
    A.setflags(write=False)
    k = 2 ** r - 1
    return HadamardInstance(
        r=r,
        eps=float(eps),
        p=pn,
        H=H,
        A_eps=A,
        opt_upper=_opt_upper(k, eps, pn),
        lb_formula=_lb_formula(k, eps, pn),
    )


def _leave_one_out(inst: HadamardInstance, reg: RegressionConfig) -> list[float]:
    m = inst.k + 1

    def _err(j: int) -> float:
        keep = ColumnSubset.proper(i for i in range(m) if i != j)
        return err_of_subset(inst.A_eps, keep, reg)

    return fan_out(_err, range(m), label="leave-one-out")


def projection_deviation(inst: HadamardInstance, reg: RegressionConfig) -> float:
    """
    把最后一列回归到其余 k 列上，返回系数与全 −1 向量的最大偏差。

    p = 2 时偏差为 4ε²/(1 + 3ε²) 量级（r = 2）。
    """
    if reg.pnorm != inst.p:
        reg = reg.with_p(inst.p.p)
    A = inst.A_eps
    sol = solve_vector(A[:, :-1], A[:, -1], reg)
    deviation = float(np.max(np.abs(sol.coefficients + 1.0)))
    logger.info(
        "A(ε) 投影系数诊断 r=%d ε=%g p=%s：max|x + 1| = %.3e",
        inst.r, inst.eps, inst.p.label, deviation,
    )
    return deviation


def measure_lower_bound(
    inst: HadamardInstance,
    p: Optional[PLike] = None,
    reg: Optional[RegressionConfig] = None,
) -> ApproxReport:
    """
    逐列留一误差 Err(A_{[k+1]∖{j}})，取最小值除以 opt_upper 得 ratio。

    通过条件：每一列的比值都 ≥ lb_formula · (1 − lowerbound_slack)。
    1 < p < 2 时上下界之间有间隙，只报告不判定紧性。
    """
    if p is not None and as_pnorm(p) != inst.p:
        inst = inst.with_p(p)
    pn = inst.p
    reg = reg or RegressionConfig.from_settings(pn.p)
    if reg.pnorm != pn:
        reg = reg.with_p(pn.p)

    errors = _leave_one_out(inst, reg)
    ratios = [e / inst.opt_upper for e in errors]
    threshold = inst.lb_formula * (1 - config.lowerbound_slack)
    passed = all(r >= threshold for r in ratios)
    deviation = projection_deviation(inst, reg)

    min_err = min(errors)
    log = logger.info if passed else logger.warning
    log(
        "下界实例 r=%d k=%d ε=%g p=%s：ratio = %.6g，下界公式 %.6g，极限 %.6g",
        inst.r, inst.k, inst.eps, pn.label, min_err / inst.opt_upper, inst.lb_formula, inst.tight_limit,
    )
    return ApproxReport(
        command="lowerbound",
        inputs={"r": inst.r, "k": inst.k, "eps": inst.eps, "p": pn.label},
        error=min_err,
        reference_kind="analytic",
        reference=inst.opt_upper,
        bound=inst.lb_formula,
        passed=passed,
        extra={
            "per_column_ratios": ratios,
            "tight_limit": inst.tight_limit,
            "projection_deviation": deviation,
            "gap_regime": 1 < pn.p < 2,
        },
    )


# ──── 植入实例 ────


class NoiseKind(str, Enum):
    """噪声分布"""

    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    SPARSE = "sparse"


SeedLike = Union[int, Sequence[int]]


@dataclass(frozen=True)
class PlantedInstance:
    """A = L + E，rank(L) ≤ k；‖E‖_p 是 OPT 的上界"""

    A: DenseMatrix
    L: DenseMatrix
    E: DenseMatrix
    k: int
    noise_kind: NoiseKind
    scale: float

    def noise_norm(self, p: PLike) -> float:
        return entrywise_norm(self.E, p)


def _noise(
    rng: np.random.Generator, shape: tuple[int, int], kind: NoiseKind, scale: float, density: float,
) -> np.ndarray:
    if kind is NoiseKind.GAUSSIAN:
        return rng.normal(0.0, 1.0, size=shape) * scale
    if kind is NoiseKind.LAPLACE:
        return rng.laplace(0.0, 1.0, size=shape) * scale
    # 稀疏尖峰：恰好 round(d·nm) 个 ±scale
    total = shape[0] * shape[1]
    count = int(round(density * total))
    E = np.zeros(total)
    where = rng.choice(total, size=count, replace=False)
    E[where] = rng.choice(np.array([-1.0, 1.0]), size=count) * scale
    return E.reshape(shape)


def planted_instance(
    n: int,
    m: int,
    k: int,
    p: PLike,
    noise_kind: Union[NoiseKind, str],
    scale: float,
    seed: SeedLike,
    *,
    density: float = 0.1,
) -> PlantedInstance:
    """
    L = G₁G₂（n×k 与 k×m 标准高斯因子），E 按 noise_kind 独立同分布生成。

    Raises:
        ValueError: k ∉ [1, min(n, m)]、scale < 0 或 density ∉ [0, 1]
    """
    if not 1 <= k <= min(n, m):
        raise ValueError(f"需要 1 ≤ k ≤ min(n, m) = {min(n, m)}，实际：{k}")
    if scale < 0:
        raise ValueError(f"scale 必须 ≥ 0，实际：{scale}")
    if not 0 <= density <= 1:
        raise ValueError(f"density 必须在 [0, 1] 内，实际：{density}")
    kind = NoiseKind(noise_kind)
    pn = as_pnorm(p)

    rng = np.random.default_rng(seed if isinstance(seed, int) else list(seed))
    L = rng.standard_normal((n, k)) @ rng.standard_normal((k, m))
    E = _noise(rng, (n, m), kind, float(scale), density)
    A = L + E
    for arr in (A, L, E):
        arr.setflags(write=False)

    if kind is NoiseKind.GAUSSIAN and scale > 0:
        concentration = float(np.sum(E ** 2) / (n * m * scale ** 2))
        logger.info("高斯噪声 ‖E‖₂²/(nmσ²) = %.4f", concentration)
    logger.debug(
        "植入实例 %d×%d k=%d noise=%s scale=%g：‖E‖_%s = %.6g",
        n, m, k, kind.value, scale, pn.label, entrywise_norm(E, pn),
    )
    return PlantedInstance(A=A, L=L, E=E, k=k, noise_kind=kind, scale=float(scale))
