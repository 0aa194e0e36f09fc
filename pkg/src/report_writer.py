"""
报告输出 — 规范 JSON 报告与 JSONL 运行日志。

规范 JSON：键排序、浮点数 17 位有效数字、NaN → null、±∞ → "inf"/"-inf"，
相同输入与种子两次运行得到逐字节相同的文件。
墙钟时间默认只进运行日志（LPLA_REPORT_TIMINGS=true 时才写入报告）。
"""

from __future__ import annotations

import json
import logging
import math
import uuid
from dataclasses import asdict, dataclass, is_dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from .config import config
from .schemas import ApproxReport

logger = logging.getLogger(__name__)

_INDENT = "  "


# ──── 规范 JSON ────


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "null"
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    # −0.0 与 0.0 输出一致
    return "%.17g" % (x + 0.0)


def _normalize(value: Any) -> Any:
    """把 numpy / pydantic / dataclass / Path / Enum 转成内建类型"""
    if isinstance(value, BaseModel):
        return value.model_dump(mode="python")
    if is_dataclass(value) and not isinstance(value, type):
        return asdict(value)
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def _encode(value: Any, depth: int) -> str:
    value = _normalize(value)
    pad = _INDENT * (depth + 1)
    end = _INDENT * depth
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _format_float(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = sorted(value.items(), key=lambda kv: str(kv[0]))
        body = ",\n".join(
            f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, depth + 1)}" for k, v in items
        )
        return "{\n" + body + "\n" + end + "}"
    if isinstance(value, (list, tuple, set, frozenset)):
        seq = sorted(value) if isinstance(value, (set, frozenset)) else list(value)
        if not seq:
            return "[]"
        body = ",\n".join(f"{pad}{_encode(v, depth + 1)}" for v in seq)
        return "[\n" + body + "\n" + end + "]"
    raise TypeError(f"无法序列化的类型：{type(value).__name__}")


def canonical_json(payload: Any) -> str:
    """规范化 JSON 文本（以换行结尾）"""
    return _encode(payload, 0) + "\n"


def report_payload(report: ApproxReport, *, timings: Optional[bool] = None) -> dict[str, Any]:
    """报告的可序列化字典；timings 缺省取 config.report_timings"""
    payload = report.model_dump(mode="python")
    keep_timings = config.report_timings if timings is None else timings
    if not keep_timings:
        payload.pop("runtime_ms", None)
    return payload


def write_json(payload: Any, path: str | Path) -> Path:
    """
    写入规范 JSON。

    Raises:
        OSError: 路径不可写
    """
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(canonical_json(payload), encoding="utf-8")
    logger.info("报告已写入：%s", out)
    return out


def write_report(report: ApproxReport, path: str | Path) -> Path:
    """写入 ApproxReport 的规范 JSON"""
    return write_json(report_payload(report), path)


# ──── 运行日志 ────


@dataclass
class RunRecord:
    """单次 CLI 调用的日志记录"""

    run_id: str
    command: str
    argv: list[str]
    runtime_ms: int
    config_hash: str
    passed: Optional[bool]
    exit_code: int
    timestamp: str


class RunLogger:
    """JSONL 格式的运行日志管理器（按日期分文件）"""

    def __init__(self, log_dir: str | Path | None = None) -> None:
        self.log_dir = Path(log_dir) if log_dir is not None else config.ensure_filesystem()
        self.log_dir.mkdir(parents=True, exist_ok=True)

    def log(
        self,
        *,
        command: str,
        argv: Sequence[str],
        runtime_ms: int,
        passed: Optional[bool],
        exit_code: int,
    ) -> str:
        """记录一条运行日志，返回 run_id"""
        run_id = str(uuid.uuid4())[:8]
        record = RunRecord(
            run_id=run_id,
            command=command,
            argv=list(argv),
            runtime_ms=runtime_ms,
            config_hash=config.config_hash,
            passed=passed,
            exit_code=exit_code,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )
        date_str = datetime.now().strftime("%Y-%m-%d")
        log_file = self.log_dir / f"{date_str}.jsonl"
        with open(log_file, "a", encoding="utf-8") as f:
            f.write(json.dumps(asdict(record), ensure_ascii=False) + "\n")
        return run_id
