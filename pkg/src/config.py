"""
全局配置 — 集中管理并行度、枚举预算、数值容差与报告选项。

基于 pydantic-settings 自动解析 .env + 环境变量（前缀 LPLA_）。
config_hash 为数值配置指纹，写入运行日志，用于区分不同容差下的结果。
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings


# ── 项目根目录 ──────────────────────────────
_PROJECT_ROOT = Path(__file__).resolve().parent.parent
_ENV_PATH = _PROJECT_ROOT / ".env"


class RegressionDefaults(BaseSettings):
    """ℓp 回归求解器默认参数（IRLS；p ∈ {1, ∞} 走线性规划）"""

    max_iters: int = 500
    rel_tol: float = 1e-9
    smoothing_floor: float = 1e-10
    smoothing_start: float = 1e-2
    smoothing_decay: float = 0.25

    model_config = {
        "env_prefix": "LPLA_REG_",
        "env_file": str(_ENV_PATH),
        "env_file_encoding": "utf-8",
        "extra": "ignore",
    }


class LplaConfig(BaseSettings):
    """lpla 全局配置"""

    reg: RegressionDefaults = Field(default_factory=RegressionDefaults)

    # 并行度上限（LPLA_THREADS，0 = 自动取 CPU 数）
    threads: int = 0
    # css_exact 子集枚举预算
    css_budget: int = 1_000_000
    # numerical_rank 相对容差
    rank_tol: float = 1e-10
    # 近似覆盖松弛 λ
    coverage_lambda: float = 1.0
    max_rounds_per_level: int = 200
    # 近等周基构造
    iso_rounds: int = 50
    iso_probes: int = 1000
    iso_seed: int = 0
    # 下界复现的相对松弛
    lowerbound_slack: float = 1e-2
    # 报告是否写入 runtime_ms（写入则失去逐字节可复现性）
    report_timings: bool = False
    log_dir: str = "logs"

    model_config = {
        "env_prefix": "LPLA_",
        "env_file": str(_ENV_PATH),
        "env_file_encoding": "utf-8",
        "extra": "ignore",
    }

    @property
    def worker_count(self) -> int:
        """实际并行线程数"""
        if self.threads > 0:
            return self.threads
        return os.cpu_count() or 1

    @property
    def config_hash(self) -> str:
        """
        数值配置指纹 — MD5 哈希。

        容差或预算变更时哈希值不同，写入运行日志供结果比对。
        """
        key_content = (
            f"{self.reg.max_iters}|{self.reg.rel_tol!r}|"
            f"{self.reg.smoothing_floor!r}|{self.reg.smoothing_start!r}|"
            f"{self.reg.smoothing_decay!r}|"
            f"{self.css_budget}|{self.rank_tol!r}|{self.coverage_lambda!r}|"
            f"{self.max_rounds_per_level}|{self.iso_rounds}|"
            f"{self.iso_probes}|{self.iso_seed}|{self.lowerbound_slack!r}"
        )
        return hashlib.md5(key_content.encode("utf-8")).hexdigest()

    def ensure_filesystem(self) -> Path:
        """创建运行日志目录（仅 CLI 调用），返回其路径"""
        log_path = Path(self.log_dir)
        if not log_path.is_absolute():
            log_path = _PROJECT_ROOT / log_path
        log_path.mkdir(parents=True, exist_ok=True)
        return log_path


config = LplaConfig()
