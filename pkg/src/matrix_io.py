"""
矩阵文件读写 — MatrixMarket 稠密 array 格式与无表头 CSV。

格式按扩展名检测：
- .mtx / .mm：scipy.io（mminfo 校验头部，mmread / mmwrite 读写）
- .csv / .txt：pandas（round_trip 浮点解析，写出 17 位有效数字）

写出再读回逐位相等。格式错误统一抛 MatrixFormatError，附带行号/列号。
"""

from __future__ import annotations

import logging
import re
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy import io as spio

from .matrix_core import DenseMatrix, as_dense

logger = logging.getLogger(__name__)


class MatrixFormat(Enum):
    """支持的矩阵文件格式"""

    MATRIX_MARKET = "mtx"
    CSV = "csv"


class MatrixFormatError(ValueError):
    """矩阵文件格式错误（带 1 起始的行号/列号）"""

    def __init__(
        self,
        message: str,
        *,
        path: str | Path = "",
        line: Optional[int] = None,
        column: Optional[int] = None,
    ) -> None:
        self.path = str(path)
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"第 {line} 行" + (f"第 {column} 列" if column is not None else "")
        prefix = f"{self.path}: " if self.path else ""
        super().__init__(f"{prefix}{where}{'：' if where else ''}{message}")


# ──── 格式检测 ────


def detect_format(filepath: str | Path) -> MatrixFormat:
    """根据文件扩展名检测矩阵格式"""
    suffix = Path(filepath).suffix.lower()
    mapping = {
        ".mtx": MatrixFormat.MATRIX_MARKET,
        ".mm": MatrixFormat.MATRIX_MARKET,
        ".csv": MatrixFormat.CSV,
        ".txt": MatrixFormat.CSV,
    }
    fmt = mapping.get(suffix)
    if fmt is None:
        raise ValueError(f"不支持的矩阵文件格式：{suffix or '(无扩展名)'}（支持：.mtx, .mm, .csv, .txt）")
    return fmt


# ──── MatrixMarket ────


def _diagnose_mtx(path: Path) -> MatrixFormatError:
    """逐行扫描 array 格式正文，定位第一个非法记录"""
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("%%MatrixMarket"):
        return MatrixFormatError("缺少 %%MatrixMarket 头部", path=path, line=1, column=1)

    size_seen = False
    expected = 0
    count = 0
    for lineno, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if not text or text.startswith("%"):
            continue
        tokens = text.split()
        if not size_seen:
            if len(tokens) != 2 or not all(t.isdigit() for t in tokens):
                return MatrixFormatError(
                    f"尺寸行应为两个正整数，实际：{text!r}", path=path, line=lineno, column=1,
                )
            expected = int(tokens[0]) * int(tokens[1])
            size_seen = True
            continue
        for col, tok in enumerate(tokens, start=1):
            try:
                value = float(tok)
            except ValueError:
                return MatrixFormatError(f"无法解析为实数：{tok!r}", path=path, line=lineno, column=col)
            if not np.isfinite(value):
                return MatrixFormatError(f"非有限元素：{tok!r}", path=path, line=lineno, column=col)
            count += 1
    if not size_seen:
        return MatrixFormatError("缺少尺寸行", path=path, line=len(lines) + 1)
    return MatrixFormatError(
        f"元素个数 {count} 与尺寸声明 {expected} 不符", path=path, line=len(lines) + 1,
    )


def _load_mtx(path: Path) -> DenseMatrix:
    try:
        _rows, _cols, _entries, fmt, field, _symm = spio.mminfo(str(path))
    except (ValueError, IndexError, OSError) as e:
        if isinstance(e, FileNotFoundError):
            raise
        raise MatrixFormatError(f"头部无法解析：{e}", path=path, line=1, column=1) from e
    if fmt != "array":
        raise MatrixFormatError(f"仅支持稠密 array 格式，实际：{fmt}", path=path, line=1)
    if field not in {"real", "integer", "double"}:
        raise MatrixFormatError(f"仅支持实数矩阵，实际 field：{field}", path=path, line=1)
    try:
        data = spio.mmread(str(path))
    except (ValueError, IndexError, TypeError, RuntimeError) as e:
        raise _diagnose_mtx(path) from e
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise _diagnose_mtx(path)
    return as_dense(arr, name=path.name)


# ──── CSV ────


def _diagnose_csv(path: Path) -> MatrixFormatError:
    """以字符串读入，定位第一个缺失或非数值单元"""
    raw_lines = path.read_text(encoding="utf-8").splitlines()
    line_numbers = [i for i, s in enumerate(raw_lines, start=1) if s.strip()]
    try:
        df = pd.read_csv(
            path, header=None, dtype=str, keep_default_na=False, skipinitialspace=True,
        )
    except pd.errors.EmptyDataError:
        return MatrixFormatError("空文件", path=path, line=1, column=1)
    except pd.errors.ParserError as e:
        return MatrixFormatError(f"列数不一致：{e}", path=path, line=_parser_error_line(e))

    cells = df.to_numpy(dtype=object)
    numeric = pd.to_numeric(pd.Series(cells.ravel()), errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(numeric)
    if not bad.any():
        return MatrixFormatError("内容无法解析", path=path, line=1)
    flat = int(np.argmax(bad))
    row, col = divmod(flat, cells.shape[1])
    token = cells[row, col]
    line = line_numbers[row] if row < len(line_numbers) else None
    if token is None or (isinstance(token, float) and np.isnan(token)) or token == "":
        return MatrixFormatError("缺少元素（行长度不一致）", path=path, line=line, column=col + 1)
    return MatrixFormatError(f"无法解析为有限实数：{token!r}", path=path, line=line, column=col + 1)


def _parser_error_line(e: Exception) -> Optional[int]:
    m = re.search(r"line (\d+)", str(e))
    return int(m.group(1)) if m else None


def _load_csv(path: Path) -> DenseMatrix:
    try:
        df = pd.read_csv(
            path, header=None, float_precision="round_trip", skipinitialspace=True,
        )
    except pd.errors.EmptyDataError as e:
        raise MatrixFormatError("空文件", path=path, line=1, column=1) from e
    except pd.errors.ParserError as e:
        raise MatrixFormatError(
            f"列数不一致：{e}", path=path, line=_parser_error_line(e),
        ) from e

    if not all(pd.api.types.is_numeric_dtype(t) for t in df.dtypes):
        raise _diagnose_csv(path)
    arr = df.to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise _diagnose_csv(path)
    return as_dense(arr, name=path.name)


# ──── 统一入口 ────


def load_matrix(filepath: str | Path) -> DenseMatrix:
    """
    读取矩阵文件。

    Raises:
        FileNotFoundError: 文件不存在
        ValueError: 扩展名不支持
        MatrixFormatError: 内容格式错误（含行列诊断）
    """
    path = Path(filepath)
    if not path.exists():
        raise FileNotFoundError(f"矩阵文件不存在：{path}")
    fmt = detect_format(path)
    A = _load_mtx(path) if fmt is MatrixFormat.MATRIX_MARKET else _load_csv(path)
    logger.debug("读取 %s：%d×%d（%s）", path, A.shape[0], A.shape[1], fmt.value)
    return A


def write_matrix(filepath: str | Path, A: DenseMatrix) -> Path:
    """按扩展名写出矩阵（17 位有效数字，读回逐位相等）"""
    path = Path(filepath)
    fmt = detect_format(path)
    arr = np.asarray(A, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"只能写出二维矩阵，实际维数：{arr.ndim}")
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt is MatrixFormat.MATRIX_MARKET:
        # 传文件句柄，避免 mmwrite 对非 .mtx 路径追加扩展名
        with path.open("wb") as fh:
            spio.mmwrite(fh, arr, field="real", precision=17, symmetry="general")
    else:
        pd.DataFrame(arr).to_csv(path, header=False, index=False, float_format="%.17g")
    logger.debug("写出 %s：%d×%d", path, arr.shape[0], arr.shape[1])
    return path
