# -*- coding: utf-8 -*-
"""命令行视图"""

from .cli import build_parser, dispatch, parse_args

__all__ = ['build_parser', 'dispatch', 'parse_args']
