"""
matrix_io 测试用例

覆盖 MatrixMarket / CSV 读写、格式检测与行列诊断
"""

import numpy as np
import pytest

from src.matrix_io import (
    MatrixFormat,
    MatrixFormatError,
    detect_format,
    load_matrix,
    write_matrix,
)


def _make_awkward() -> np.ndarray:
    """需要 17 位有效数字才能精确往返的元素"""
    return np.array([
        [0.1, 1.0 / 3.0, -2.0 ** -40],
        [1e300, -7.0, np.nextafter(1.0, 2.0)],
    ])


class TestDetectFormat:
    """扩展名检测"""

    def test_known_extensions(self):
        assert detect_format("a.mtx") is MatrixFormat.MATRIX_MARKET
        assert detect_format("a.MM") is MatrixFormat.MATRIX_MARKET
        assert detect_format("b.csv") is MatrixFormat.CSV
        assert detect_format("b.txt") is MatrixFormat.CSV

    def test_unknown_extension(self):
        with pytest.raises(ValueError, match="不支持"):
            detect_format("c.npy")


class TestRoundTrip:
    """写出再读回逐位相等"""

    def test_matrix_market(self, tmp_path):
        A = _make_awkward()
        path = write_matrix(tmp_path / "a.mtx", A)
        assert path == tmp_path / "a.mtx"
        np.testing.assert_array_equal(load_matrix(path), A)

    def test_csv(self, tmp_path):
        A = _make_awkward()
        path = write_matrix(tmp_path / "a.csv", A)
        np.testing.assert_array_equal(load_matrix(path), A)

    def test_loaded_matrix_is_read_only(self, tmp_path):
        path = write_matrix(tmp_path / "e.csv", np.eye(2))
        A = load_matrix(path)
        assert not A.flags.writeable

    def test_creates_parent_dirs(self, tmp_path):
        path = write_matrix(tmp_path / "deep" / "x.mtx", np.eye(3))
        assert path.exists()


class TestMalformed:
    """格式错误诊断"""

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_matrix(tmp_path / "nope.csv")

    def test_csv_bad_token(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2,3\n4,5,abc\n")
        with pytest.raises(MatrixFormatError) as ei:
            load_matrix(path)
        assert ei.value.line == 2
        assert ei.value.column == 3
        assert "abc" in str(ei.value)

    def test_csv_short_row(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("1,2,3\n4,5\n")
        with pytest.raises(MatrixFormatError) as ei:
            load_matrix(path)
        assert ei.value.line == 2
        assert ei.value.column == 3

    def test_csv_long_row(self, tmp_path):
        path = tmp_path / "long.csv"
        path.write_text("1,2\n3,4,5\n")
        with pytest.raises(MatrixFormatError) as ei:
            load_matrix(path)
        assert ei.value.line == 2

    def test_csv_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(MatrixFormatError):
            load_matrix(path)

    def test_mtx_coordinate_rejected(self, tmp_path):
        path = tmp_path / "coo.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real general\n"
            "2 2 1\n"
            "1 1 3.0\n"
        )
        with pytest.raises(MatrixFormatError, match="array"):
            load_matrix(path)

    def test_mtx_bad_value(self, tmp_path):
        path = tmp_path / "bad.mtx"
        path.write_text(
            "%%MatrixMarket matrix array real general\n"
            "2 2\n"
            "1.0\n"
            "2.0\n"
            "oops\n"
            "4.0\n"
        )
        with pytest.raises(MatrixFormatError) as ei:
            load_matrix(path)
        assert ei.value.line == 5
        assert ei.value.column == 1

    def test_format_error_is_value_error(self):
        assert issubclass(MatrixFormatError, ValueError)
