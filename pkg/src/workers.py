"""
并行执行 — 按输入顺序返回结果的线程池扇出。

并发上限取 config.threads（环境变量 LPLA_THREADS，0 = CPU 数，1 = 串行）。
已在工作线程内部的嵌套调用直接串行执行，不再开新线程池。
结果按输入顺序收集，下游归约与调度无关。
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

from .config import config

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_local = threading.local()


def fan_out(
    fn: Callable[[T], R],
    items: Iterable[T],
    *,
    threads: Optional[int] = None,
    label: str = "",
) -> list[R]:
    """
    对 items 逐个执行 fn，返回与 items 等长、同序的结果列表。

    Args:
        fn: 纯函数（不共享可变状态）
        items: 任务输入
        threads: 覆盖并发数；None 取全局配置
        label: 日志标识

    任一任务抛出的异常原样向上传播。
    """
    tasks = list(items)
    if not tasks:
        return []
    workers = threads if threads and threads > 0 else config.worker_count
    workers = min(workers, len(tasks))

    if workers <= 1 or getattr(_local, "inside", False):
        return [fn(t) for t in tasks]

    def _run(task: T) -> R:
        _local.inside = True
        try:
            return fn(task)
        finally:
            _local.inside = False

    logger.debug("%s 并行 %d 项（%d 线程）", label or "fan_out", len(tasks), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, tasks))
