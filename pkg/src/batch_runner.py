"""
验收批量运行 — 按固定种子复现各项验收判据，生成 Markdown 汇总。

支持的 sweep：
1. lowerbound — A(ε) 下界复现（±2% 目标值、参数网格、ε 梯度单调）
2. upper      — 植入实例上 css_exact 误差 ≤ c_{p,k}‖E‖_p·1.01
3. l2         — p = 2 时 css_exact 误差 ≤ √(k+1) · SVD 残差
4-6. lambda / schur / lemma1 / weighted — 数值验证套件
7. bicriteria — 选列数与误差界
8. reduce     — 全流程误差界

结果字典不含耗时，同一种子两次运行逐字节一致。
"""

from __future__ import annotations

import itertools
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
from scipy import linalg

from .adversarial import NoiseKind, hadamard_instance, measure_lower_bound, planted_instance
from .bicriteria import BicriteriaFailure, bicriteria_with_guessing
from .css_exact import css_exact
from .matrix_core import PNorm
from .pipeline import full_pipeline
from .schemas import RegressionConfig
from .verification import run_checks
from .workers import fan_out

logger = logging.getLogger(__name__)

UPPER_P: tuple[float, ...] = (1.0, 1.5, 2.0, 3.0, math.inf)
UPPER_K: tuple[int, ...] = (1, 2, 3)
LOWERBOUND_TARGET_P: tuple[float, ...] = (2.0, 4.0, math.inf)
LOWERBOUND_GRID_P: tuple[float, ...] = (2.0, 3.0, 4.0, math.inf)
LOWERBOUND_GRID_R: tuple[int, ...] = (1, 2, 3)
LOWERBOUND_GRID_EPS: tuple[float, ...] = (1e-2, 1e-3)
EPS_LADDER: tuple[float, ...] = (1e-1, 1e-2, 1e-3)

PLANTED_SCALE = 0.1


@dataclass
class SweepCase:
    """一个实例的判定结果"""

    params: dict[str, Any]
    error: float
    reference: float
    bound: float
    passed: bool
    note: str = ""


@dataclass
class SweepResult:
    """一项验收判据的结果"""

    name: str
    criterion: int
    total: int
    passes: int
    required: int
    cases: list[SweepCase] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)
    elapsed_seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.passes >= self.required

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "criterion": self.criterion,
            "total": self.total,
            "passes": self.passes,
            "required": self.required,
            "ok": self.ok,
            "cases": [c.__dict__ for c in self.cases],
            "details": self.details,
        }


@dataclass
class BatchResult:
    """批量验收结果"""

    sweeps: list[SweepResult] = field(default_factory=list)
    seed: int = 0
    total_elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.sweeps)

    def to_dict(self) -> dict[str, Any]:
        return {"seed": self.seed, "ok": self.ok, "sweeps": [s.to_dict() for s in self.sweeps]}

    def summary(self) -> str:
        lines = [
            "# 验收报告",
            "",
            f"种子：{self.seed}",
            f"判据数：{len(self.sweeps)}，通过：{sum(s.ok for s in self.sweeps)}",
            f"总耗时：{self.total_elapsed:.1f}s",
            "",
            "| 判据 | 名称 | 通过/总数 | 要求 | 结果 | 耗时 |",
            "|------|------|-----------|------|------|------|",
        ]
        for s in self.sweeps:
            flag = "✅" if s.ok else "❌"
            lines.append(
                f"| {s.criterion} | {s.name} | {s.passes}/{s.total} | "
                f"≥ {s.required} | {flag} | {s.elapsed_seconds:.1f}s |"
            )

        failed = [(s, c) for s in self.sweeps for c in s.cases if not c.passed]
        if failed:
            lines.extend([
                "",
                "## 未通过实例",
                "",
                "| 判据 | 参数 | 误差 | 参考 | 界 | 说明 |",
                "|------|------|------|------|----|------|",
            ])
            for s, c in failed[:50]:
                lines.append(
                    f"| {s.name} | {c.params} | {c.error:.6g} | {c.reference:.6g} | "
                    f"{c.bound:.6g} | {c.note[:80]} |"
                )
        return "\n".join(lines)


def _result(name: str, criterion: int, cases: list[SweepCase], required: Optional[int] = None) -> SweepResult:
    passes = sum(c.passed for c in cases)
    return SweepResult(
        name=name,
        criterion=criterion,
        total=len(cases),
        passes=passes,
        required=len(cases) if required is None else required,
        cases=cases,
    )


# ──── 判据 1：下界复现 ────


def sweep_lowerbound(*, eps: float = 1e-3) -> SweepResult:
    """r = 2 的三个目标值、参数网格与 ε 梯度单调性"""
    reg = RegressionConfig.from_settings(2.0)
    cases: list[SweepCase] = []

    for p in LOWERBOUND_TARGET_P:
        inst = hadamard_instance(2, eps, p)
        rep = measure_lower_bound(inst, p, reg)
        ratio = rep.ratio or 0.0
        within = abs(ratio / inst.lb_formula - 1) <= 0.02
        cases.append(SweepCase(
            params={"check": "target", "r": 2, "eps": eps, "p": PNorm(p).label},
            error=ratio, reference=inst.lb_formula, bound=0.02,
            passed=within and rep.passed,
        ))

    for p, r, e in itertools.product(LOWERBOUND_GRID_P, LOWERBOUND_GRID_R, LOWERBOUND_GRID_EPS):
        rep = measure_lower_bound(hadamard_instance(r, e, p), p, reg)
        cases.append(SweepCase(
            params={"check": "grid", "r": r, "eps": e, "p": PNorm(p).label},
            error=min(rep.extra["per_column_ratios"]), reference=rep.bound, bound=rep.bound,
            passed=rep.passed,
        ))

    for p, r in itertools.product(LOWERBOUND_GRID_P, LOWERBOUND_GRID_R):
        ladder = [hadamard_instance(r, e, p) for e in EPS_LADDER]
        ratios = [measure_lower_bound(inst, p, reg).ratio or 0.0 for inst in ladder]
        monotone = all(b >= a * (1 - 1e-9) for a, b in zip(ratios, ratios[1:]))
        cases.append(SweepCase(
            params={"check": "monotone", "r": r, "p": PNorm(p).label, "ratios": ratios},
            error=ratios[-1], reference=ratios[0], bound=ladder[-1].tight_limit,
            passed=monotone,
        ))
    return _result("lowerbound", 1, cases)


# ──── 判据 2：植入实例上界 ────


def sweep_upper_bound(*, instances: int = 50, seed: int = 0) -> SweepResult:
    """n = 8, m = 10 植入实例（高斯/拉普拉斯噪声交替）"""
    grid = [
        (pi, p, k, i)
        for pi, p in enumerate(UPPER_P)
        for k in UPPER_K
        for i in range(instances)
    ]

    def _case(item: tuple[int, float, int, int]) -> SweepCase:
        pi, p, k, i = item
        kind = NoiseKind.GAUSSIAN if i % 2 == 0 else NoiseKind.LAPLACE
        inst = planted_instance(8, 10, k, p, kind, PLANTED_SCALE, (seed, pi, k, i))
        noise = inst.noise_norm(p)
        res = css_exact(inst.A, k, RegressionConfig.from_settings(p))
        bound = PNorm(p).c(k) * noise * 1.01
        return SweepCase(
            params={"p": PNorm(p).label, "k": k, "instance": i, "noise": kind.value},
            error=res.error, reference=noise, bound=bound, passed=res.error <= bound,
        )

    return _result("upper", 2, fan_out(_case, grid, label="sweep upper"))


# ──── 判据 3：p = 2 经典界 ────


def sweep_l2_tightness(*, instances: int = 50, seed: int = 0, k: int = 2) -> SweepResult:
    """6×8 随机矩阵，css_exact 误差 ≤ √(k+1) · SVD 残差"""
    reg = RegressionConfig.from_settings(2.0)

    def _case(i: int) -> SweepCase:
        A = np.random.default_rng([seed, i]).standard_normal((6, 8))
        svd_res = float(np.sqrt(np.sum(linalg.svdvals(A)[k:] ** 2)))
        res = css_exact(A, k, reg)
        bound = math.sqrt(k + 1) * svd_res * (1 + 1e-9)
        return SweepCase(
            params={"instance": i, "k": k},
            error=res.error, reference=svd_res, bound=bound, passed=res.error <= bound,
        )

    return _result("l2", 3, fan_out(_case, range(instances), label="sweep l2"))


# ──── 判据 4-6：验证套件 ────


def sweep_verify(kind: str, criterion: int, *, trials: int, seed: int = 0, p: Any = None) -> SweepResult:
    summary = run_checks(kind, trials, seed, p)
    label = kind if p is None else f"{kind}(p={PNorm.parse(p).label})"
    return SweepResult(
        name=label,
        criterion=criterion,
        total=summary.trials,
        passes=summary.passed + summary.skipped,
        required=summary.trials,
        details=summary.to_dict(),
    )


# ──── 判据 7：双准则选列 ────


def sweep_bicriteria(
    p: float, *, instances: int = 100, seed: int = 0, n: int = 30, m: int = 64, k: int = 2,
) -> SweepResult:
    """列数 ≤ 2k(log₂ m + 1) 且误差 ≤ 10·c_{p,k}‖E‖_p 的运行占比 ≥ 90%"""
    pn = PNorm(p)
    kind = NoiseKind.LAPLACE if p < 2 else NoiseKind.GAUSSIAN
    reg = RegressionConfig.from_settings(p)
    cap = 2 * k * (math.log2(m) + 1)

    def _case(i: int) -> SweepCase:
        inst = planted_instance(n, m, k, p, kind, PLANTED_SCALE, (seed, i))
        noise = inst.noise_norm(p)
        bound = 10 * pn.c(k) * noise
        try:
            res = bicriteria_with_guessing(inst.A, k, p, reg, 10_000 * seed + i)
        except BicriteriaFailure as e:
            return SweepCase(
                params={"p": pn.label, "instance": i}, error=math.inf, reference=noise,
                bound=bound, passed=False, note=str(e),
            )
        size_ok = res.selected.size <= cap
        return SweepCase(
            params={"p": pn.label, "instance": i, "columns": res.selected.size},
            error=res.error, reference=noise, bound=bound,
            passed=size_ok and res.error <= bound,
            note="" if size_ok else f"列数 {res.selected.size} > {cap:g}",
        )

    cases = fan_out(_case, range(instances), label=f"sweep bicriteria p={pn.label}")
    return _result(f"bicriteria(p={pn.label})", 7, cases, required=math.ceil(0.9 * instances))


# ──── 判据 8：降秩全流程 ────


def sweep_reduce(*, instances: int = 20, seed: int = 0, n: int = 20, m: int = 32, k: int = 2) -> SweepResult:
    """full_pipeline 误差 ≤ 50·c³·k·log₂ m·‖E‖₂，≥ 90% 通过"""
    pn = PNorm(2.0)
    reg = RegressionConfig.from_settings(2.0)
    factor = 50 * pn.c(k) ** 3 * k * math.log2(m)

    def _case(i: int) -> SweepCase:
        inst = planted_instance(n, m, k, 2.0, NoiseKind.GAUSSIAN, PLANTED_SCALE, (seed, i))
        noise = inst.noise_norm(2.0)
        res = full_pipeline(inst.A, k, 2.0, 10_000 * seed + i, reg)
        bound = factor * noise
        return SweepCase(
            params={"instance": i, "selected": res.selected.size},
            error=res.error, reference=noise, bound=bound, passed=res.error <= bound,
        )

    cases = fan_out(_case, range(instances), label="sweep reduce")
    return _result("reduce", 8, cases, required=math.ceil(0.9 * instances))


# ──── 调度 ────


SWEEP_NAMES = ("lowerbound", "upper", "l2", "lambda", "schur", "lemma1", "weighted", "bicriteria", "reduce")


def _plan(name: str, seed: int, instances: Optional[int]) -> list[Callable[[], SweepResult]]:
    def n(default: int) -> int:
        return default if instances is None else instances

    plans: dict[str, list[Callable[[], SweepResult]]] = {
        "lowerbound": [sweep_lowerbound],
        "upper": [lambda: sweep_upper_bound(instances=n(50), seed=seed)],
        "l2": [lambda: sweep_l2_tightness(instances=n(50), seed=seed)],
        "lambda": [lambda: sweep_verify("lambda", 4, trials=n(10_000), seed=seed)],
        "schur": [lambda: sweep_verify("schur", 5, trials=n(1000), seed=seed)],
        "lemma1": [lambda: sweep_verify("lemma1", 5, trials=n(1000), seed=seed)],
        "weighted": [
            lambda pp=pp: sweep_verify("weighted", 6, trials=n(100), seed=seed, p=pp)
            for pp in (1.0, 2.0, 3.0)
        ],
        "bicriteria": [
            lambda pp=pp: sweep_bicriteria(pp, instances=n(100), seed=seed)
            for pp in (1.0, 2.0)
        ],
        "reduce": [lambda: sweep_reduce(instances=n(20), seed=seed)],
    }
    if name == "all":
        return [fn for key in SWEEP_NAMES for fn in plans[key]]
    if name not in plans:
        raise ValueError(f"未知的 sweep：{name}（支持：{', '.join(SWEEP_NAMES)}, all）")
    return plans[name]


def run_sweep(name: str, *, seed: int = 0, instances: Optional[int] = None) -> BatchResult:
    """
    串行执行一个或全部判据（每个判据内部并行）。

    Args:
        name: SWEEP_NAMES 之一或 "all"
        seed: 基础种子
        instances: 覆盖各判据的实例/试验数（缺省为验收数量）
    """
    plans = _plan(name, seed, instances)
    batch = BatchResult(seed=seed)
    t_start = time.monotonic()

    for i, fn in enumerate(plans):
        print(f"\n{'=' * 60}", file=sys.stderr)
        print(f"[{i + 1}/{len(plans)}] sweep {name}", file=sys.stderr)
        print(f"{'=' * 60}", file=sys.stderr)
        t0 = time.monotonic()
        result = fn()
        result.elapsed_seconds = time.monotonic() - t0
        flag = "✅" if result.ok else "❌"
        print(f"{flag} {result.name}：{result.passes}/{result.total}（要求 ≥ {result.required}）", file=sys.stderr)
        batch.sweeps.append(result)

    batch.total_elapsed = time.monotonic() - t_start
    logger.info("sweep %s 完成：%s", name, "通过" if batch.ok else "未通过")
    print(f"\n{'=' * 60}", file=sys.stderr)
    print(batch.summary(), file=sys.stderr)
    return batch
