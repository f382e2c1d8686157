# -*- coding: utf-8 -*-
"""
通道注意力(CA)与空间注意力(SA)组件
CA: GAP -> 1x1 瓶颈 -> ReLU -> 1x1 -> Sigmoid
SA: 通道均值/最大值 -> k×k 卷积 -> Sigmoid
"""

from ..core.functional import channel_max, channel_mean, global_avg_pool
from ..core.tensor import Tensor, concat, relu, sigmoid
from ..exceptions import ShapeError
from .layers import Conv2d
from .module import BuildContext, Module


class ChannelAttention(Module):
    """逐通道权重 w = σ(FC2(ReLU(FC1(GAP(x)))))"""

    def __init__(self, ctx: BuildContext, prefix: str, channels: int, ratio: int = 4):
        super().__init__(ctx, prefix)
        if channels < ratio:
            raise ShapeError(f"{prefix}: 通道数 {channels} 小于瓶颈比 {ratio}")
        hidden = channels // ratio
        self.channels = channels
        self.fc1 = self.add_module("fc1", Conv2d(ctx, self.child_prefix("fc1"), channels, hidden, 1))
        self.fc2 = self.add_module("fc2", Conv2d(ctx, self.child_prefix("fc2"), hidden, channels, 1))

    def weights(self, x: Tensor) -> Tensor:
        return sigmoid(self.fc2(relu(self.fc1(global_avg_pool(x)))))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeError(f"{self.prefix}: 需要 NCHW 输入, 当前 {x.shape}")
        return x * self.weights(x)


class SpatialAttention(Module):
    """空间权重图 a = σ(Conv_k(Cat(mean_c(x), max_c(x))))"""

    def __init__(self, ctx: BuildContext, prefix: str, kernel_size: int = 5):
        super().__init__(ctx, prefix)
        self.conv = self.add_module(
            "conv", Conv2d(ctx, self.child_prefix("conv"), 2, 1, kernel_size)
        )

    def weights(self, x: Tensor) -> Tensor:
        return sigmoid(self.conv(concat([channel_mean(x), channel_max(x)], axis=1)))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[2] < 1 or x.shape[3] < 1:
            raise ShapeError(f"{self.prefix}: 需要空间尺寸至少 1x1 的 NCHW 输入, 当前 {x.shape}")
        return x * self.weights(x)
