# -*- coding: utf-8 -*-
"""
参数初始化方案
"""

import zlib
from typing import Optional, Sequence

import numpy as np

from ..exceptions import InitError

FAN_IN_UNIFORM = "fan_in_uniform"
ZEROS = "zeros"
PRELU_SLOPE = "prelu_slope"

SCHEMES = (FAN_IN_UNIFORM, ZEROS, PRELU_SLOPE)
PRELU_INIT = 0.25


def param_rng(seed: int, name: str) -> np.random.Generator:
    """按 (种子, 参数全名) 派生随机数生成器, 与注册顺序无关"""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode('utf-8'))])


def fan_in_bound(fan_in: int) -> float:
    """均匀分布边界 1/sqrt(fan_in)"""
    if fan_in <= 0:
        raise InitError(f"fan_in 必须为正, 当前 {fan_in}")
    return 1.0 / float(np.sqrt(fan_in))


def init_params(
    shape: Sequence[int],
    scheme: str,
    rng: Optional[np.random.Generator] = None,
    fan_in: Optional[int] = None,
    dtype=np.float64
) -> np.ndarray:
    """
    生成初始参数

    Args:
        shape: 参数形状
        scheme: fan_in_uniform(卷积核) / zeros(偏置) / prelu_slope(常数 0.25)
        rng: 随机数生成器, fan_in_uniform 必需
        fan_in: 输入扇入 Cin*k*k, 缺省时由 shape 推断
        dtype: 浮点类型

    Returns:
        初始化后的数组

    Raises:
        InitError: 未知方案
    """
    shape = tuple(int(s) for s in shape)
    if scheme == ZEROS:
        return np.zeros(shape, dtype=dtype)
    if scheme == PRELU_SLOPE:
        return np.full(shape, PRELU_INIT, dtype=dtype)
    if scheme == FAN_IN_UNIFORM:
        if rng is None:
            raise InitError("fan_in_uniform 初始化需要随机数生成器")
        if fan_in is None:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else int(shape[0])
        bound = fan_in_bound(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(dtype)
    raise InitError(f"未知的初始化方案: {scheme} (支持: {', '.join(SCHEMES)})")
