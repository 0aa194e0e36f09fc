"""
report_writer 测试用例

覆盖规范 JSON 格式、字节级可复现性、报告计时开关与 JSONL 运行日志
"""

import json
import math
from enum import Enum
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.config import config
from src.report_writer import RunLogger, canonical_json, report_payload, write_json, write_report
from src.schemas import ApproxReport


def _make_report(**kw) -> ApproxReport:
    base = dict(
        command="css", inputs={"k": 2, "p": "2"}, error=0.5, reference_kind="oracle",
        reference=0.25, bound=math.sqrt(3), passed=True, runtime_ms=123,
    )
    base.update(kw)
    return ApproxReport(**base)


class _Color(Enum):
    RED = "red"


_keys = st.text(min_size=1, max_size=8)
_finite = st.floats(allow_nan=False, allow_infinity=False)


class TestCanonicalJson:
    """规范化编码"""

    def test_sorted_keys_and_indent(self):
        text = canonical_json({"b": 1, "a": {"d": [1, 2], "c": None}})
        assert text == (
            '{\n'
            '  "a": {\n'
            '    "c": null,\n'
            '    "d": [\n'
            '      1,\n'
            '      2\n'
            '    ]\n'
            '  },\n'
            '  "b": 1\n'
            '}\n'
        )

    def test_float_format(self):
        assert canonical_json(0.1).strip() == "0.10000000000000001"
        assert canonical_json(-0.0).strip() == "0"

    def test_non_finite(self):
        doc = json.loads(canonical_json({"a": math.nan, "b": math.inf, "c": -math.inf}))
        assert doc == {"a": None, "b": "inf", "c": "-inf"}

    def test_normalizes_library_types(self):
        doc = json.loads(canonical_json({
            "arr": np.array([[1.5, 2.0]]),
            "i": np.int64(3),
            "f": np.float32(0.5),
            "flag": np.bool_(True),
            "path": Path("x/y.json"),
            "enum": _Color.RED,
            "set": {3, 1, 2},
        }))
        assert doc == {
            "arr": [[1.5, 2.0]], "i": 3, "f": 0.5, "flag": True,
            "path": "x/y.json", "enum": "red", "set": [1, 2, 3],
        }

    def test_non_ascii_kept(self):
        assert "误差" in canonical_json({"误差": 1})

    def test_unsupported_type(self):
        with pytest.raises(TypeError):
            canonical_json({"x": object()})

    @settings(max_examples=100, deadline=None)
    @given(st.dictionaries(_keys, _finite, max_size=8))
    def test_floats_round_trip_exactly(self, payload):
        assert json.loads(canonical_json(payload)) == payload

    @settings(max_examples=100, deadline=None)
    @given(st.dictionaries(_keys, st.one_of(_finite, st.integers(), st.booleans()), max_size=8))
    def test_insertion_order_irrelevant(self, payload):
        reordered = dict(reversed(list(payload.items())))
        assert canonical_json(payload) == canonical_json(reordered)


class TestReportFiles:
    """报告写入"""

    def test_runtime_dropped_by_default(self, monkeypatch):
        monkeypatch.setattr(config, "report_timings", False)
        payload = report_payload(_make_report())
        assert "runtime_ms" not in payload
        assert payload["ratio"] == pytest.approx(2.0)

    def test_runtime_kept_when_enabled(self):
        assert report_payload(_make_report(), timings=True)["runtime_ms"] == 123

    def test_byte_identical(self, tmp_path, monkeypatch):
        monkeypatch.setattr(config, "report_timings", False)
        a = write_report(_make_report(runtime_ms=1), tmp_path / "a.json")
        b = write_report(_make_report(runtime_ms=999), tmp_path / "sub" / "b.json")
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text(encoding="utf-8").endswith("}\n")

    def test_write_json_creates_dirs(self, tmp_path):
        out = write_json({"x": 1}, tmp_path / "deep" / "r.json")
        assert json.loads(out.read_text(encoding="utf-8")) == {"x": 1}


class TestRunLogger:
    """JSONL 运行日志"""

    def test_appends_records(self, tmp_path):
        rl = RunLogger(tmp_path / "logs")
        first = rl.log(command="css", argv=["css", "--rank", "2"], runtime_ms=5, passed=True, exit_code=0)
        rl.log(command="verify", argv=["verify", "schur"], runtime_ms=7, passed=False, exit_code=1)
        files = list((tmp_path / "logs").glob("*.jsonl"))
        assert len(files) == 1
        lines = files[0].read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        rec = json.loads(lines[0])
        assert rec["run_id"] == first
        assert len(first) == 8
        assert rec["config_hash"] == config.config_hash
        assert rec["argv"] == ["css", "--rank", "2"]
        assert json.loads(lines[1])["exit_code"] == 1
