# -*- coding: utf-8 -*-
"""
资源文件路径与运行环境工具
"""

import os
import logging
from pathlib import Path
from typing import Dict

THREADS_ENV = "CAAI_THREADS"

logger = logging.getLogger(__name__)


def get_resource_path(relative_path: str) -> str:
    """
    获取包内资源文件的绝对路径

    Args:
        relative_path: 相对路径，例如:
            - "resources/desk.cfg"
            - "resources/synthetic.cfg"

    Returns:
        绝对路径
    """
    # 当前文件: caai_net/utils/resource_utils.py, 向上两级到 caai_net 包目录
    base_path = Path(__file__).resolve().parent.parent
    return str(base_path / relative_path)


def get_thread_limit() -> int:
    """
    读取 CAAI_THREADS 环境变量得到并行上限

    Returns:
        线程数上限, 未设置时为全部 CPU 核心; 同时用于 BLAS 线程数(见 apply_blas_thread_limit)
    """
    default = os.cpu_count() or 1
    raw = os.getenv(THREADS_ENV)
    if raw is None or not raw.strip():
        return default

    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"{THREADS_ENV}={raw!r} 不是整数，使用默认值 {default}")
        return default

    if value < 1:
        logger.warning(f"{THREADS_ENV}={value} 必须为正数，使用默认值 {default}")
        return default
    return value


BLAS_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def apply_blas_thread_limit() -> Dict[str, str]:
    """
    把 CAAI_THREADS 同步到 numpy 底层 BLAS/OpenMP 的线程数环境变量

    只在 numpy 首次导入之前调用才生效, 因此在包初始化时最先执行;
    已显式设置的变量保持不变, 未设置 CAAI_THREADS 时不做任何修改

    Returns:
        本次写入的变量
    """
    if not (os.getenv(THREADS_ENV) or "").strip():
        return {}
    limit = str(get_thread_limit())
    applied = {}
    for name in BLAS_THREAD_VARS:
        if name not in os.environ:
            os.environ[name] = limit
            applied[name] = limit
    return applied
