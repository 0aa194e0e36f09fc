"""
lpla 命令行入口 — 读入矩阵、构造配置、执行并输出 ApproxReport。

子命令：css | bicriteria | reduce | pipeline | verify | gen | lowerbound | sweep
退出码：0 成功/通过；1 判定未通过、枚举预算拒绝或报告写入失败；2 用法或输入错误。

用法：python -m src.cli <子命令> [选项]（或仓库根目录的 ./lpla 包装脚本）
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from .adversarial import NoiseKind, hadamard_instance, measure_lower_bound, planted_instance
from .batch_runner import SWEEP_NAMES, run_sweep
from .bicriteria import BicriteriaFailure, bicriteria_with_guessing
from .config import config
from .css_exact import EnumerationBudgetError, RatioBound, css_exact, css_ratio_report
from .matrix_core import PNorm, entrywise_norm
from .matrix_io import MatrixFormatError, load_matrix, write_matrix
from .pipeline import full_pipeline
from .rank_reduction import ConditioningError, reduce_rank
from .report_writer import RunLogger, canonical_json, report_payload, write_json, write_report
from .schemas import ApproxReport, OracleConfig, RunConfig
from .verification import opt_oracle, run_checks

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

# pipeline / reduce 复合界的声明松弛：50 · c³ · k · log₂ m
_PIPELINE_SLACK = 50.0
# bicriteria 的 O(c_{p,k}) 常数解释
_BICRITERIA_SLACK = 10.0

_ORACLE_NOTE = "p ≠ 2 时 reference 为交替极小化的启发式 OPT 上估计，ratio 可能低于真实近似比"


# ──── 参数解析 ────


def _add_common(sp: argparse.ArgumentParser, *, rank: bool = True, seed: bool = False) -> None:
    sp.add_argument("--input", required=True, type=Path, help="输入矩阵（.mtx 或 .csv）")
    if rank:
        sp.add_argument("--rank", required=True, type=int, help="目标秩 k")
    sp.add_argument("--p", default="2", help="范数指数：≥1 的小数或 inf（默认 2）")
    if seed:
        sp.add_argument("--seed", type=int, default=0, help="随机种子（默认 0）")
    sp.add_argument("--rel-tol", type=float, default=None, help="回归停滞阈值")
    sp.add_argument("--max-iters", type=int, default=None, help="回归最大迭代次数")
    sp.add_argument("--report", type=Path, default=None, help="报告输出路径（规范 JSON）")


def _add_reference(sp: argparse.ArgumentParser) -> None:
    group = sp.add_mutually_exclusive_group()
    group.add_argument("--reference", type=float, default=None, help="已知的 OPT 参考值（analytic）")
    group.add_argument("--oracle", action="store_true", help="用交替极小化预言机估计 OPT")
    sp.add_argument("--oracle-restarts", type=int, default=20, help="预言机起点数（默认 20）")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpla", description="ℓp 低秩近似：列子集选择与数值验证")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v 输出 INFO，-vv 输出 DEBUG")
    parser.add_argument("--threads", type=int, default=None, help="并行线程上限（覆盖 LPLA_THREADS）")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("css", help="精确列子集选择")
    _add_common(sp)
    sp.add_argument("--tol", type=float, default=None, help="回归相对容差（同 --rel-tol）")
    _add_reference(sp)

    sp = sub.add_parser("bicriteria", help="双准则选列（O(k log m) 列）")
    _add_common(sp, seed=True)
    sp.add_argument("--lambda", dest="lam", type=float, default=None, help="覆盖判定松弛 λ ≥ 1")
    _add_reference(sp)

    sp = sub.add_parser("reduce", help="把 (U, V) 降为秩 k 分解")
    _add_common(sp)
    sp.add_argument("--u", required=True, type=Path, help="左因子 U")
    sp.add_argument("--v", required=True, type=Path, help="右因子 V")
    sp.add_argument("--out-prefix", type=Path, default=None, help="写出 <prefix>_W.mtx 与 <prefix>_Z.mtx")
    _add_reference(sp)

    sp = sub.add_parser("pipeline", help="双准则选列 + 降秩全流程")
    _add_common(sp, seed=True)
    sp.add_argument("--lambda", dest="lam", type=float, default=None, help="覆盖判定松弛 λ ≥ 1")
    sp.add_argument("--out-prefix", type=Path, default=None, help="写出 <prefix>_W.mtx 与 <prefix>_Z.mtx")
    _add_reference(sp)

    sp = sub.add_parser("verify", help="数值验证套件")
    sp.add_argument("kind", choices=["lambda", "lemma1", "schur", "weighted"])
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--p", default=None, help="范数指数（缺省按检查类型）")
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--report", type=Path, default=None)

    gen = sub.add_parser("gen", help="生成实例矩阵")
    gsub = gen.add_subparsers(dest="family", required=True)
    gp = gsub.add_parser("hadamard", help="扰动 Hadamard 下界实例 A(ε)")
    gp.add_argument("--r", type=int, required=True)
    gp.add_argument("--eps", type=float, required=True)
    gp.add_argument("--p", default="2")
    gp.add_argument("--out", type=Path, default=None)
    gp = gsub.add_parser("planted", help="植入实例 A = L + E")
    gp.add_argument("--n", type=int, required=True)
    gp.add_argument("--m", type=int, required=True)
    gp.add_argument("--rank", type=int, required=True)
    gp.add_argument("--noise", choices=[k.value for k in NoiseKind], default="gaussian")
    gp.add_argument("--scale", type=float, default=0.1)
    gp.add_argument("--seed", type=int, default=0)
    gp.add_argument("--density", type=float, default=0.1, help="稀疏尖峰密度")
    gp.add_argument("--p", default="2", help="打印 ‖E‖_p 所用的 p")
    gp.add_argument("--out", type=Path, default=None)
    gp.add_argument("--out-prefix", type=Path, default=None, help="另外写出 <prefix>_L 与 <prefix>_E")

    sp = sub.add_parser("lowerbound", help="A(ε) 留一下界复现")
    sp.add_argument("--r", type=int, required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--p", default="2")
    sp.add_argument("--report", type=Path, default=None)

    sp = sub.add_parser("sweep", help="验收判据批量运行")
    sp.add_argument("name", choices=[*SWEEP_NAMES, "all"])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--instances", type=int, default=None, help="覆盖实例/试验数")
    sp.add_argument("--report", type=Path, default=None)
    return parser


# ──── 输出 ────
# stdout 只输出 JSON（或 gen 的 CSV 矩阵），进度与摘要走 stderr


def _say(text: str) -> None:
    print(text, file=sys.stderr)


def _heuristic_reference(report: ApproxReport) -> bool:
    return report.reference_kind == "oracle" and report.inputs.get("p") != "2"


def _emit(report: ApproxReport, path: Optional[Path]) -> int:
    flag = "✅" if report.passed else "❌"
    ratio = f"{report.ratio:.6g}" if report.ratio is not None else "—"
    if _heuristic_reference(report):
        report.extra["reference_note"] = _ORACLE_NOTE
        ratio += "（相对启发式 OPT）"
    _say(f"{flag} {report.command}：误差 {report.error:.6g}，ratio {ratio}，界 {report.bound:.6g}")
    if path is not None:
        write_report(report, path)
    else:
        sys.stdout.write(canonical_json(report_payload(report)))
    return EXIT_OK if report.passed else EXIT_FAIL


def _run_config(args: argparse.Namespace) -> RunConfig:
    rel_tol = getattr(args, "tol", None) or args.rel_tol
    return RunConfig(
        p=args.p,
        rank=getattr(args, "rank", None),
        seed=getattr(args, "seed", 0),
        rel_tol=rel_tol,
        max_iters=args.max_iters,
        lam=args.lam if getattr(args, "lam", None) is not None else config.coverage_lambda,
        input_path=args.input,
        report_path=args.report,
    )


def _reference(args: argparse.Namespace, A: np.ndarray, rc: RunConfig) -> tuple[Optional[float], str]:
    if args.reference is not None:
        return args.reference, "analytic"
    if args.oracle:
        cfg = OracleConfig(p=rc.p, restarts=args.oracle_restarts, seed=rc.seed)
        return opt_oracle(A, rc.rank or 1, cfg, rc.regression()), "oracle"
    return None, "none"


def _judged(
    command: str,
    inputs: dict,
    error: float,
    bound: float,
    reference: Optional[float],
    kind: str,
    extra: dict,
) -> ApproxReport:
    """有正参考值时判定 error/reference ≤ bound；否则只报告"""
    if reference is not None and reference > 0:
        passed = error / reference <= bound * (1 + 1e-2)
    elif reference is not None:
        passed = error <= 1e-9 * max(1.0, error)
    else:
        passed = True
    return ApproxReport(
        command=command,
        inputs=inputs,
        error=error,
        reference_kind=kind if reference is not None else "none",
        reference=reference,
        bound=bound,
        passed=passed,
        extra=extra,
    )


def _write_factors(prefix: Optional[Path], W: np.ndarray, Z: np.ndarray) -> None:
    if prefix is None:
        return
    write_matrix(f"{prefix}_W.mtx", W)
    write_matrix(f"{prefix}_Z.mtx", Z)
    _say(f"📁 因子已写入：{prefix}_W.mtx, {prefix}_Z.mtx")


# ──── 子命令 ────


def cmd_css(args: argparse.Namespace) -> int:
    rc = _run_config(args)
    A = load_matrix(rc.input_path)
    reg = rc.regression()
    t0 = time.monotonic()
    res = css_exact(A, rc.rank, reg)
    reference, kind = _reference(args, A, rc)
    if reference is not None and reference > 0:
        report = css_ratio_report(A, rc.rank, reg, reference, reference_kind=kind, result=res)
    else:
        report = _judged(
            "css",
            {"shape": list(A.shape), "p": rc.pnorm.label, "k": rc.rank},
            res.error, RatioBound(rc.pnorm, rc.rank).c_pk, reference, kind,
            {"best_subset": list(res.best_subset.indices), "subsets_evaluated": res.subsets_evaluated},
        )
    report.runtime_ms = int((time.monotonic() - t0) * 1000)
    _say(res.summary())
    return _emit(report, rc.report_path)


def cmd_bicriteria(args: argparse.Namespace) -> int:
    rc = _run_config(args)
    A = load_matrix(rc.input_path)
    t0 = time.monotonic()
    res = bicriteria_with_guessing(A, rc.rank, rc.pnorm, rc.regression(), rc.seed, lam=rc.lam)
    reference, kind = _reference(args, A, rc)
    report = _judged(
        "bicriteria",
        {"shape": list(A.shape), "p": rc.pnorm.label, "k": rc.rank, "seed": rc.seed},
        res.error, _BICRITERIA_SLACK * rc.pnorm.c(rc.rank), reference, kind,
        {
            "selected": list(res.selected.indices),
            "selected_size": res.selected.size,
            "levels": res.levels,
            "guesses": len(res.guesses_tried),
            "N": res.N,
        },
    )
    report.runtime_ms = int((time.monotonic() - t0) * 1000)
    _say(res.summary())
    return _emit(report, rc.report_path)


def _pipeline_bound(pn: PNorm, k: int, m: int) -> float:
    return _PIPELINE_SLACK * pn.c(k) ** 3 * k * max(1.0, math.log2(m))


def cmd_reduce(args: argparse.Namespace) -> int:
    rc = _run_config(args)
    A = load_matrix(rc.input_path)
    U = load_matrix(args.u)
    V = load_matrix(args.v)
    t0 = time.monotonic()
    fact = reduce_rank(A, U, V, rc.rank, rc.pnorm, rc.regression())
    reference, kind = _reference(args, A, rc)
    report = _judged(
        "reduce",
        {"shape": list(A.shape), "p": rc.pnorm.label, "k": rc.rank, "t": int(U.shape[1])},
        fact.error, _pipeline_bound(rc.pnorm, rc.rank, A.shape[1]), reference, kind,
        {
            "input_error": entrywise_norm(A - U @ V, rc.pnorm),
            "inner_subset": list(fact.inner_subset.indices) if fact.inner_subset is not None else [],
        },
    )
    report.runtime_ms = int((time.monotonic() - t0) * 1000)
    _write_factors(args.out_prefix, fact.W, fact.Z)
    return _emit(report, rc.report_path)


def cmd_pipeline(args: argparse.Namespace) -> int:
    rc = _run_config(args)
    A = load_matrix(rc.input_path)
    t0 = time.monotonic()
    res = full_pipeline(A, rc.rank, rc.pnorm, rc.seed, rc.regression(), lam=rc.lam)
    reference, kind = _reference(args, A, rc)
    report = _judged(
        "pipeline",
        {"shape": list(A.shape), "p": rc.pnorm.label, "k": rc.rank, "seed": rc.seed},
        res.error, _pipeline_bound(rc.pnorm, rc.rank, A.shape[1]), reference, kind,
        {
            "selected": list(res.selected.indices),
            "provenance": [{"stage": s.stage, "error": s.error, "rank": s.rank} for s in res.provenance],
        },
    )
    report.runtime_ms = int((time.monotonic() - t0) * 1000)
    _say(res.summary())
    _write_factors(args.out_prefix, res.factorization.W, res.factorization.Z)
    return _emit(report, rc.report_path)


def cmd_verify(args: argparse.Namespace) -> int:
    summary = run_checks(args.kind, args.trials, args.seed, args.p, args.k)
    _say(summary.summary())
    if args.report is not None:
        write_json(summary.to_dict(), args.report)
    else:
        sys.stdout.write(canonical_json(summary.to_dict()))
    return EXIT_OK if summary.ok else EXIT_FAIL


def cmd_gen(args: argparse.Namespace) -> int:
    if args.family == "hadamard":
        inst = hadamard_instance(args.r, args.eps, args.p)
        _say(
            f"A(ε)：{inst.k + 1}×{inst.k + 1}，k={inst.k}，p={inst.p.label}，"
            f"OPT ≤ {inst.opt_upper:.6g}，下界公式 {inst.lb_formula:.6g}"
        )
        if args.out is not None:
            write_matrix(args.out, inst.A_eps)
            _say(f"📁 已写入：{args.out}")
        else:
            np.savetxt(sys.stdout, inst.A_eps, fmt="%.17g", delimiter=",")
        return EXIT_OK

    inst = planted_instance(
        args.n, args.m, args.rank, args.p, args.noise, args.scale, args.seed, density=args.density,
    )
    pn = PNorm.parse(args.p)
    _say(f"植入实例：{args.n}×{args.m}，k={args.rank}，‖E‖_{pn.label} = {inst.noise_norm(pn):.17g}")
    if args.out is not None:
        write_matrix(args.out, inst.A)
        _say(f"📁 已写入：{args.out}")
    if args.out_prefix is not None:
        for name, arr in (("A", inst.A), ("L", inst.L), ("E", inst.E)):
            write_matrix(f"{args.out_prefix}_{name}.mtx", arr)
        _say(f"📁 已写入：{args.out_prefix}_{{A,L,E}}.mtx")
    if args.out is None and args.out_prefix is None:
        np.savetxt(sys.stdout, inst.A, fmt="%.17g", delimiter=",")
    return EXIT_OK


def cmd_lowerbound(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    inst = hadamard_instance(args.r, args.eps, args.p)
    report = measure_lower_bound(inst)
    report.runtime_ms = int((time.monotonic() - t0) * 1000)
    return _emit(report, args.report)


def cmd_sweep(args: argparse.Namespace) -> int:
    batch = run_sweep(args.name, seed=args.seed, instances=args.instances)
    if args.report is not None:
        write_json(batch.to_dict(), args.report)
    else:
        sys.stdout.write(canonical_json(batch.to_dict()))
    return EXIT_OK if batch.ok else EXIT_FAIL


_COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "css": cmd_css,
    "bicriteria": cmd_bicriteria,
    "reduce": cmd_reduce,
    "pipeline": cmd_pipeline,
    "verify": cmd_verify,
    "gen": cmd_gen,
    "lowerbound": cmd_lowerbound,
    "sweep": cmd_sweep,
}


# ──── 入口 ────


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _fail(code: int, message: str) -> int:
    print(f"lpla: {message}", file=sys.stderr)
    return code


def _run_logged(command: str, argv: Sequence[str], runtime_ms: int, code: int) -> None:
    try:
        RunLogger().log(
            command=command,
            argv=argv,
            runtime_ms=runtime_ms,
            passed=None if code == EXIT_USAGE else code == EXIT_OK,
            exit_code=code,
        )
    except OSError as e:
        logger.warning("⚠️ 运行日志写入失败：%s", e)


def parse_and_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """解析参数并执行子命令，返回退出码（不调用 sys.exit）"""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    _configure_logging(args.verbose)
    if args.threads is not None:
        if args.threads < 0:
            return _fail(EXIT_USAGE, f"--threads 必须 ≥ 0，实际：{args.threads}")
        config.threads = args.threads

    t0 = time.monotonic()
    try:
        code = _COMMANDS[args.command](args)
    except MatrixFormatError as e:
        code = _fail(EXIT_USAGE, f"矩阵文件格式错误：{e}")
    except EnumerationBudgetError as e:
        code = _fail(EXIT_FAIL, str(e))
    except ValidationError as e:
        code = _fail(EXIT_USAGE, f"参数无效：{e.errors()[0]['msg']}")
    except (BicriteriaFailure, ConditioningError) as e:
        code = _fail(EXIT_FAIL, str(e))
    except FileNotFoundError as e:
        code = _fail(EXIT_USAGE, f"文件不存在：{e.filename or e}")
    except ValueError as e:
        code = _fail(EXIT_USAGE, str(e))
    except OSError as e:
        code = _fail(EXIT_FAIL, f"IO 失败：{e}")

    _run_logged(args.command, argv, int((time.monotonic() - t0) * 1000), code)
    return code


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
