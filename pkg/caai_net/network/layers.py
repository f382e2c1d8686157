# -*- coding: utf-8 -*-
"""
基础层: 卷积、PReLU、卷积单元
"""

from typing import Optional

from ..core.functional import SUPPORTED_KERNELS, Conv2dParams, conv2d
from ..core.init import FAN_IN_UNIFORM, PRELU_SLOPE, ZEROS
from ..core.tensor import Tensor, prelu, relu
from ..exceptions import ConfigError
from .module import BuildContext, Module


class Conv2d(Module):
    """卷积层, 默认 padding=k//2 保持空间尺寸"""

    def __init__(
        self,
        ctx: BuildContext,
        prefix: str,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        stride: int = 1,
        padding: Optional[int] = None
    ):
        super().__init__(ctx, prefix)
        if kernel_size not in SUPPORTED_KERNELS:
            raise ConfigError(f"{prefix}: 不支持的卷积核 {kernel_size} (支持: 1, 3, 5)")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = self.add_param(
            "weight", (out_channels, in_channels, kernel_size, kernel_size), FAN_IN_UNIFORM, fan_in
        )
        self.bias = self.add_param("bias", (out_channels,), ZEROS)
        self.params = Conv2dParams(
            self.weight,
            self.bias,
            stride=stride,
            padding=kernel_size // 2 if padding is None else padding,
        )

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.params)


class PReLU(Module):
    """单斜率 PReLU, 斜率初始化为 0.25"""

    def __init__(self, ctx: BuildContext, prefix: str):
        super().__init__(ctx, prefix)
        self.slope = self.add_param("slope", (1,), PRELU_SLOPE)

    def forward(self, x: Tensor) -> Tensor:
        return prelu(x, self.slope)


class ConvUnit(Module):
    """3x3 卷积 + ReLU(无归一化)"""

    def __init__(self, ctx: BuildContext, prefix: str, in_channels: int, out_channels: int,
                 kernel_size: int = 3):
        super().__init__(ctx, prefix)
        self.conv = self.add_module(
            "conv", Conv2d(ctx, self.child_prefix("conv"), in_channels, out_channels, kernel_size)
        )

    def forward(self, x: Tensor) -> Tensor:
        return relu(self.conv(x))
