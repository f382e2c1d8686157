# -*- coding: utf-8 -*-
"""
日志配置工具
"""

import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
DEFAULT_LOG_DIR = Path.home() / '.caai_net' / 'logs'


def _has_file_handler(logger: logging.Logger) -> bool:
    return any(isinstance(h, logging.FileHandler) for h in logger.handlers)


def _file_handler(log_dir: Path, formatter: logging.Formatter) -> logging.FileHandler:
    log_dir.mkdir(parents=True, exist_ok=True)
    # 每天一个文件, 多次运行追加写入
    log_file = log_dir / f"caai_{datetime.now().strftime('%Y%m%d')}.log"
    handler = logging.FileHandler(log_file, encoding='utf-8')
    handler.setFormatter(formatter)
    return handler


def setup_logger(
    name: str = "caai_net",
    level: int = logging.INFO,
    log_to_file: bool = False,
    log_dir: Optional[Union[str, Path]] = None
) -> logging.Logger:
    """
    配置日志系统

    重复调用不会重复添加 handler, 只刷新级别;
    之前未启用文件输出而本次 log_to_file=True 时补挂文件 handler

    Args:
        name: 日志器名称
        level: 日志级别
        log_to_file: 是否输出到文件
        log_dir: 日志目录, 默认 ~/.caai_net/logs

    Returns:
        配置好的日志器
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    if not logger.handlers:
        console = logging.StreamHandler(sys.stdout)
        console.setFormatter(formatter)
        logger.addHandler(console)

    if log_to_file and not _has_file_handler(logger):
        logger.addHandler(_file_handler(Path(log_dir) if log_dir else DEFAULT_LOG_DIR, formatter))

    for handler in logger.handlers:
        handler.setLevel(level)
    return logger
