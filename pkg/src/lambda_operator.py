"""
Λ 多线性算子 — [Λ(a, b)]_I = Σ_t (−1)^t a_{i_t} b_{I∖i_t}（t 从 0 计）。

a 以单个列号为下标（长度 m），b 以递增 k 元组为下标（长度 C(m, k)，字典序），
输出以递增 (k+1) 元组为下标。当 b_J = det(S_J) 时 Λ(r, b)_I = det([r; S]_I)（按首行 Laplace 展开）。

b 延拓到任意序列下标：有重复下标时为 0，交换两个下标变号。
不等式 ‖Λ(a, b)‖_p ≤ M_p ‖a‖_p ‖b‖_p，M_p = max(1, (k+1)^{1−2/p})。
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import numpy.typing as npt

from .lp_regression import column_norms
from .matrix_core import PLike, as_pnorm, determinant

logger = logging.getLogger(__name__)

_INEQ_SLACK = 1e-9


# ──── 下标表 ────


@lru_cache(maxsize=128)
def combinations_table(m: int, k: int) -> tuple[tuple[int, ...], ...]:
    """[m] 的全部递增 k 元组（字典序）"""
    return tuple(itertools.combinations(range(m), k))


@lru_cache(maxsize=128)
def _position(m: int, k: int) -> dict[tuple[int, ...], int]:
    return {J: i for i, J in enumerate(combinations_table(m, k))}


@lru_cache(maxsize=64)
def _expansion_tables(m: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """
    对每个 (k+1) 元组 I 与位置 t：a 的下标 i_t，以及 I∖i_t 在 k 元组表中的位置。

    Returns:
        (a_idx, b_idx)，形状均为 C(m, k+1) × (k+1)
    """
    pos = _position(m, k)
    rows = combinations_table(m, k + 1)
    a_idx = np.array(rows, dtype=np.intp).reshape(len(rows), k + 1)
    b_idx = np.empty_like(a_idx)
    for r, I in enumerate(rows):
        for t in range(k + 1):
            b_idx[r, t] = pos[I[:t] + I[t + 1:]]
    return a_idx, b_idx


# ──── 实例 ────


@dataclass(frozen=True)
class LambdaInstance:
    """Λ 算子输入：a ∈ ℝ^m，b ∈ ℝ^{C(m,k)}"""

    m: int
    k: int
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        if self.k < 1 or self.m < self.k + 1:
            raise ValueError(f"需要 k ≥ 1 且 m ≥ k + 1，实际 m={self.m}, k={self.k}")
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.shape[-1] != self.m:
            raise ValueError(f"a 长度应为 m = {self.m}，实际：{a.shape[-1]}")
        if b.shape[-1] != math.comb(self.m, self.k):
            raise ValueError(f"b 长度应为 C(m, k) = {math.comb(self.m, self.k)}，实际：{b.shape[-1]}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def k_subsets(self) -> tuple[tuple[int, ...], ...]:
        return combinations_table(self.m, self.k)

    @property
    def output_subsets(self) -> tuple[tuple[int, ...], ...]:
        return combinations_table(self.m, self.k + 1)


def from_determinants(r: npt.ArrayLike, S: npt.ArrayLike) -> LambdaInstance:
    """a = r，b_J = det(S_J)；S 为 k×m"""
    S = np.asarray(S, dtype=np.float64)
    k, m = S.shape
    b = np.array([determinant(S[:, list(J)]) for J in combinations_table(m, k)])
    return LambdaInstance(m=m, k=k, a=np.asarray(r, dtype=np.float64), b=b)


def permutation_sign(seq: Sequence[int]) -> int:
    """排列奇偶性：偶 +1，奇 −1；有重复元素返回 0"""
    items = list(seq)
    if len(set(items)) != len(items):
        return 0
    sign = 1
    seen = [False] * len(items)
    order = sorted(range(len(items)), key=items.__getitem__)
    for start in range(len(items)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = order[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def extended_b(inst: LambdaInstance, J: Sequence[int]) -> float:
    """b 在任意 k 长序列上的延拓：重复 → 0，奇置换 → 变号"""
    if len(J) != inst.k:
        raise ValueError(f"序列长度应为 k = {inst.k}，实际：{len(J)}")
    sign = permutation_sign(J)
    if sign == 0:
        return 0.0
    return sign * float(inst.b[_position(inst.m, inst.k)[tuple(sorted(J))]])


# ──── 算子 ────


def lambda_apply(inst: LambdaInstance) -> np.ndarray:
    """
    计算 Λ(a, b)，按递增 (k+1) 元组字典序排列。

    a、b 可带前导批维度（形状 (..., m) 与 (..., C(m,k))），一次算完整批实例。
    """
    a_idx, b_idx = _expansion_tables(inst.m, inst.k)
    signs = np.where(np.arange(inst.k + 1) % 2 == 0, 1.0, -1.0)
    terms = inst.a[..., a_idx] * inst.b[..., b_idx]
    return np.sum(terms * signs, axis=-1)


def lambda_apply_ordered(inst: LambdaInstance, I: Sequence[int]) -> float:
    """任意 (k+1) 长序列 I 上的 Λ：Σ_t (−1)^t a_{i_t} · b̃(I∖i_t)"""
    if len(I) != inst.k + 1:
        raise ValueError(f"序列长度应为 k + 1 = {inst.k + 1}，实际：{len(I)}")
    total = 0.0
    for t, i in enumerate(I):
        rest = tuple(I[:t]) + tuple(I[t + 1:])
        total += (-1) ** t * float(inst.a[i]) * extended_b(inst, rest)
    return total


@dataclass
class LambdaCheck:
    """不等式检查结果"""

    lhs: float
    rhs: float
    holds: bool


def lambda_norms(inst: LambdaInstance, p: PLike) -> tuple[np.ndarray, np.ndarray]:
    """批量计算 (‖Λ(a,b)‖_p, M_p‖a‖_p‖b‖_p)"""
    pn = as_pnorm(p)
    out = np.atleast_2d(lambda_apply(inst))
    a = np.atleast_2d(inst.a)
    b = np.atleast_2d(inst.b)
    lhs = column_norms(out.T, pn)
    rhs = pn.M(inst.k) * column_norms(a.T, pn) * column_norms(b.T, pn)
    return lhs, rhs


def check_lambda_inequality(inst: LambdaInstance, p: PLike) -> LambdaCheck:
    """‖Λ(a, b)‖_p ≤ M_p ‖a‖_p ‖b‖_p（相对松弛 1e-9）"""
    lhs, rhs = lambda_norms(inst, p)
    l, r = float(lhs[0]), float(rhs[0])
    return LambdaCheck(lhs=l, rhs=r, holds=l <= r * (1 + _INEQ_SLACK))


def probe_lambda_tightness(
    m: int, k: int, p: PLike, *, trials: int = 2000, seed: int = 0,
) -> float:
    """
    随机符号搜索 max ‖Λ(a,b)‖_p / (‖a‖_p‖b‖_p)，返回与 M_p 之比（探索性，只记录日志）。
    """
    pn = as_pnorm(p)
    rng = np.random.default_rng(seed)
    nb = math.comb(m, k)
    a = rng.choice(np.array([-1.0, 1.0]), size=(trials, m))
    b = rng.choice(np.array([-1.0, 1.0]), size=(trials, nb))
    # 一部分 b 只保留单个非零元
    sparse = rng.random(trials) < 0.5
    keep = rng.integers(0, nb, size=trials)
    b[sparse] = 0.0
    b[sparse, keep[sparse]] = 1.0
    inst = LambdaInstance(m=m, k=k, a=a, b=b)
    lhs, rhs = lambda_norms(inst, pn)
    best = float(np.max(lhs / rhs))
    logger.info(
        "Λ 紧性探测 m=%d k=%d p=%s：max lhs/(‖a‖‖b‖) = %.4f，M_p = %.4f",
        m, k, pn.label, best * pn.M(k), pn.M(k),
    )
    return best
