"""Pydantic V2 配置/报告模型"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import config
from .matrix_core import PNorm


def _parse_p(v: Any) -> float:
    return PNorm.parse(v).p


# ── 求解配置 ──


class RegressionConfig(BaseModel):
    """ℓp 回归参数（IRLS 平滑下限、停滞阈值、起点数）"""

    model_config = ConfigDict(frozen=True)

    p: float = Field(default=2.0, ge=1.0)
    max_iters: int = Field(default=500, ge=1)
    smoothing_eps: float = Field(default=1e-10, gt=0)
    smoothing_start: float = Field(default=1e-2, gt=0)
    smoothing_decay: float = Field(default=0.25, gt=0, lt=1)
    rel_tol: float = Field(default=1e-9, gt=0)
    # 仅对 IRLS 路径生效；p ∈ {1, 2, ∞} 为精确解，不做多起点
    restarts: int = Field(default=1, ge=1, le=8)

    @field_validator("p", mode="before")
    @classmethod
    def _p_token(cls, v: Any) -> float:
        return _parse_p(v)

    @property
    def pnorm(self) -> PNorm:
        return PNorm(self.p)

    @classmethod
    def from_settings(cls, p: Any, **overrides: Any) -> "RegressionConfig":
        """以全局配置 config.reg 为默认值构造"""
        base = dict(
            p=p,
            max_iters=config.reg.max_iters,
            smoothing_eps=config.reg.smoothing_floor,
            smoothing_start=config.reg.smoothing_start,
            smoothing_decay=config.reg.smoothing_decay,
            rel_tol=config.reg.rel_tol,
        )
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def with_p(self, p: Any) -> "RegressionConfig":
        return self.model_copy(update={"p": _parse_p(p)})


class CoverageConfig(BaseModel):
    """近似覆盖判定参数；N 为 ‖Δ‖_p 的当前猜测"""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    p: float = Field(ge=1.0)
    k: int = Field(ge=1)
    N: float = Field(gt=0)
    lam: float = Field(default=1.0, ge=1.0, alias="lambda")
    max_rounds_per_level: int = Field(default=200, ge=1)

    @field_validator("p", mode="before")
    @classmethod
    def _p_token(cls, v: Any) -> float:
        return _parse_p(v)

    @property
    def pnorm(self) -> PNorm:
        return PNorm(self.p)

    @property
    def sample_size(self) -> int:
        return 2 * self.k

    @property
    def coverage_fraction(self) -> float:
        return 0.1


class OracleConfig(BaseModel):
    """OPT 上界预言机（交替极小化）参数"""

    model_config = ConfigDict(frozen=True)

    p: float = Field(default=2.0, ge=1.0)
    restarts: int = Field(default=20, ge=1)
    inner_iters: int = Field(default=30, ge=1)
    seed: int = 0

    @field_validator("p", mode="before")
    @classmethod
    def _p_token(cls, v: Any) -> float:
        return _parse_p(v)

    @property
    def pnorm(self) -> PNorm:
        return PNorm(self.p)


# ── 报告 ──


ReferenceKind = Literal["analytic", "planted-noise", "oracle", "none"]


class ApproxReport(BaseModel):
    """
    命令输出的近似报告。

    ratio 由 error / reference 派生（reference 为 0 或缺省时为 None），
    构造时自动计算，调用方不应自行填写。
    """

    command: str
    inputs: dict[str, Any] = Field(default_factory=dict)
    error: float = Field(ge=0)
    reference_kind: ReferenceKind = "none"
    reference: Optional[float] = None
    ratio: Optional[float] = None
    bound: float
    passed: bool
    runtime_ms: int = 0
    extra: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _derive_ratio(self) -> "ApproxReport":
        if self.reference is not None and self.reference > 0 and math.isfinite(self.reference):
            self.ratio = self.error / self.reference
        else:
            self.ratio = None
        return self


class RunConfig(BaseModel):
    """CLI 单次运行参数"""

    p: float = Field(default=2.0, ge=1.0)
    rank: Optional[int] = Field(default=None, ge=1)
    seed: int = 0
    rel_tol: Optional[float] = Field(default=None, gt=0)
    max_iters: Optional[int] = Field(default=None, ge=1)
    lam: float = Field(default=1.0, ge=1.0)
    input_path: Optional[Path] = None
    report_path: Optional[Path] = None

    @field_validator("p", mode="before")
    @classmethod
    def _p_token(cls, v: Any) -> float:
        return _parse_p(v)

    @property
    def pnorm(self) -> PNorm:
        return PNorm(self.p)

    def regression(self) -> RegressionConfig:
        return RegressionConfig.from_settings(
            self.p, rel_tol=self.rel_tol, max_iters=self.max_iters,
        )
