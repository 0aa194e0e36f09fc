"""
稠密矩阵核心 — 逐元素 ℓp 范数、列子集、行列式与数值秩。

所有下游模块（回归、CSS、双准则、降秩、验证）共享这里的类型：
- DenseMatrix：float64 二维 ndarray（只读、全有限）
- PNorm：p ∈ [1, ∞] 及其 Hölder 对偶 q，派生常数 c_{p,k} / C_{p,k} / M_p
- ColumnSubset：0 起始的列下标元组，分 proper（严格递增）与 sequence（允许重复）两种
- Factorization：左右因子 + 所达残差
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

import numpy as np
import numpy.typing as npt
from scipy import linalg

from .config import config


DenseMatrix = npt.NDArray[np.float64]


# ──── 构造与校验 ────


def as_dense(x: npt.ArrayLike, *, name: str = "A") -> DenseMatrix:
    """转为只读 float64 二维矩阵；非二维、空矩阵或含 NaN/±∞ 时抛 ValueError"""
    arr = np.array(x, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"{name} 必须是二维矩阵，实际维数：{arr.ndim}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} 行列数必须为正，实际形状：{arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} 含非有限元素（NaN 或 ±∞）")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PNorm:
    """范数指数 p ∈ [1, ∞]，q 为 Hölder 对偶（1/p + 1/q = 1）"""

    p: float

    def __post_init__(self) -> None:
        p = float(self.p)
        if math.isnan(p) or p < 1:
            raise ValueError(f"p 必须满足 p ≥ 1，实际：{self.p}")
        object.__setattr__(self, "p", p)

    @classmethod
    def parse(cls, token: Union[str, float, "PNorm"]) -> "PNorm":
        """从十进制字面量或 "inf" 解析"""
        if isinstance(token, PNorm):
            return token
        if isinstance(token, str):
            t = token.strip().lower()
            if t in {"inf", "infinity", "∞", "+inf"}:
                return cls(math.inf)
            try:
                return cls(float(t))
            except ValueError as e:
                raise ValueError(f"无法解析 p：{token!r}（需为 ≥1 的小数或 inf）") from e
        return cls(float(token))

    @property
    def is_inf(self) -> bool:
        return math.isinf(self.p)

    @property
    def q(self) -> float:
        if self.p == 1:
            return math.inf
        if self.is_inf:
            return 1.0
        return self.p / (self.p - 1)

    @property
    def label(self) -> str:
        """报告与日志中使用的文本形式"""
        return "inf" if self.is_inf else f"{self.p:g}"

    def c(self, k: int) -> float:
        """近似比常数 c_{p,k}"""
        if self.is_inf:
            return float(k + 1)
        if self.p <= 2:
            return (k + 1) ** (1 / self.p)
        return (k + 1) ** (1 - 1 / self.p)

    def C(self, k: int) -> float:
        """C_{p,k} = c_{p,k}^p（p = ∞ 时为 ∞）"""
        if self.is_inf:
            return math.inf
        if self.p <= 2:
            return float(k + 1)
        return (k + 1) ** (self.p - 1)

    def M(self, k: int) -> float:
        """Λ 算子的 ℓp 算子界 M_p = max(1, (k+1)^{1-2/p})"""
        if self.is_inf:
            return float(k + 1)
        return max(1.0, (k + 1) ** (1 - 2 / self.p))

    def __str__(self) -> str:
        return self.label


PLike = Union[PNorm, float, str]


def as_pnorm(p: PLike) -> PNorm:
    return PNorm.parse(p)


@dataclass(frozen=True)
class ColumnSubset:
    """
    列下标元组（0 起始）。

    proper 子集要求严格递增（对应无序子集记号）；
    sequence=True 时允许重复与任意顺序，供 Λ 算子与有序元组恒等式使用。
    """

    indices: tuple[int, ...]
    sequence: bool = False

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise ValueError(f"列下标不能为负：{idx}")
        if not self.sequence and any(a >= b for a, b in zip(idx, idx[1:])):
            raise ValueError(f"proper 列子集必须严格递增：{idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def proper(cls, indices: Iterable[int]) -> "ColumnSubset":
        """去重排序后构造 proper 子集"""
        return cls(tuple(sorted(set(int(i) for i in indices))))

    @classmethod
    def all_columns(cls, m: int) -> "ColumnSubset":
        return cls(tuple(range(m)))

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def is_distinct(self) -> bool:
        return len(set(self.indices)) == len(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def validate(self, m: int) -> None:
        """下标越界时抛 IndexError"""
        bad = [i for i in self.indices if i >= m]
        if bad:
            raise IndexError(f"列下标越界：{bad}（矩阵列数 {m}）")

    def complement(self, m: int) -> "ColumnSubset":
        chosen = set(self.indices)
        return ColumnSubset(tuple(i for i in range(m) if i not in chosen))

    def remap(self, original: "ColumnSubset") -> "ColumnSubset":
        """把相对 original 的下标映射回 original 的原始列号"""
        return ColumnSubset.proper(original.indices[i] for i in self.indices)

    def one_based(self) -> list[int]:
        return [i + 1 for i in self.indices]


@dataclass(frozen=True)
class Factorization:
    """秩受限的分解 left · right 及其 ℓp 残差"""

    left: DenseMatrix
    right: DenseMatrix
    error: float

    @property
    def rank_bound(self) -> int:
        return int(self.left.shape[1])

    def product(self) -> DenseMatrix:
        return self.left @ self.right


# ──── 基本运算 ────


def entrywise_norm(A: npt.ArrayLike, p: PLike) -> float:
    """
    逐元素 ℓp 范数：(Σ|A_ij|^p)^{1/p}，p = ∞ 时取 max|A_ij|。

    按最大元素缩放后求幂和，避免大 p 时上溢/下溢。
    """
    pn = as_pnorm(p)
    a = np.abs(np.asarray(A, dtype=np.float64))
    if a.size == 0:
        return 0.0
    s = float(a.max())
    if s == 0.0:
        return 0.0
    if pn.is_inf:
        return s
    if pn.p == 1:
        return float(a.sum())
    return s * float(np.sum((a / s) ** pn.p)) ** (1 / pn.p)


def submatrix_columns(A: DenseMatrix, J: ColumnSubset) -> DenseMatrix:
    """按 J 给定顺序取列，得到 n×|J| 矩阵"""
    J.validate(A.shape[1])
    return np.asarray(A)[:, list(J.indices)]


def determinant(A: npt.ArrayLike) -> float:
    """部分主元 LU 求行列式（scipy.linalg.det）"""
    a = np.asarray(A, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"行列式需要方阵，实际形状：{a.shape}")
    if a.shape[0] == 0:
        return 1.0
    return float(linalg.det(a))


def numerical_rank(A: npt.ArrayLike, tol: float | None = None) -> int:
    """奇异值大于 tol · σ_max 的个数"""
    tol = config.rank_tol if tol is None else tol
    if tol <= 0:
        raise ValueError(f"tol 必须为正，实际：{tol}")
    a = np.asarray(A, dtype=np.float64)
    if a.size == 0:
        return 0
    s = linalg.svdvals(a)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))
