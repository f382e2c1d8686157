# -*- coding: utf-8 -*-
"""工具模块"""

from .resource_utils import apply_blas_thread_limit, get_resource_path, get_thread_limit
from .logger import setup_logger

__all__ = ['apply_blas_thread_limit', 'get_resource_path', 'get_thread_limit', 'setup_logger']
