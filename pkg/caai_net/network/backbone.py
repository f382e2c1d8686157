# -*- coding: utf-8 -*-
"""
双流 VGG 风格骨干网络
五个卷积块, 第 1 块不池化, 第 2-5 块先 2x2 最大池化再卷积,
各级特征空间尺寸依次为输入的 1, 1/2, 1/4, 1/8, 1/16
"""

from dataclasses import dataclass
from typing import Dict, Iterator, List, Tuple

from ..core.functional import max_pool2d
from ..core.tensor import Tensor
from ..exceptions import ShapeError
from ..models.train_params import BackboneConfig
from .layers import ConvUnit
from .module import BuildContext, Module

LOW_LEVELS = (1, 2)
HIGH_LEVELS = (3, 4, 5)


@dataclass
class FeaturePyramid:
    """单个流的五级特征 f1..f5"""
    f1: Tensor
    f2: Tensor
    f3: Tensor
    f4: Tensor
    f5: Tensor

    def level(self, index: int) -> Tensor:
        if index not in (1, 2, 3, 4, 5):
            raise ShapeError(f"特征层级必须在 1-5 之间, 当前 {index}")
        return getattr(self, f"f{index}")

    def levels(self) -> List[Tensor]:
        return [self.f1, self.f2, self.f3, self.f4, self.f5]

    def shapes(self) -> List[Tuple[int, ...]]:
        return [t.shape for t in self.levels()]

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.levels())


class VGGStream(Module):
    """单流特征提取器"""

    def __init__(self, ctx: BuildContext, prefix: str, in_channels: int, config: BackboneConfig):
        super().__init__(ctx, prefix)
        self.in_channels = in_channels
        self.config = config
        self.blocks: List[List[ConvUnit]] = []

        previous = in_channels
        for block_index, (width, count) in enumerate(
            zip(config.channels, config.convs_per_block), 1
        ):
            units = []
            for conv_index in range(1, count + 1):
                local = f"block{block_index}.conv{conv_index}"
                unit = ConvUnit(ctx, self.child_prefix(local), previous, width)
                self.add_module(local, unit)
                units.append(unit)
                previous = width
            self.blocks.append(units)

    def extract(self, x: Tensor) -> FeaturePyramid:
        """
        提取五级特征

        Args:
            x: N×C×S×S 输入, S 为配置的 input_size

        Returns:
            五级特征金字塔

        Raises:
            ShapeError: 通道数或空间尺寸不符
        """
        size = self.config.input_size
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"{self.prefix}: 需要 N×{self.in_channels}×{size}×{size} 输入, 当前 {x.shape}"
            )
        if x.shape[2] != size or x.shape[3] != size:
            raise ShapeError(
                f"{self.prefix}: 输入空间尺寸 {x.shape[2]}×{x.shape[3]} 与配置 {size}×{size} 不符"
            )

        levels = []
        out = x
        for block_index, units in enumerate(self.blocks, 1):
            if block_index > 1:
                out = max_pool2d(out)
            for unit in units:
                out = unit(out)
            levels.append(out)
        return FeaturePyramid(*levels)

    def forward(self, x: Tensor) -> FeaturePyramid:
        return self.extract(x)


class TwoStreamBackbone(Module):
    """RGB 流与深度流, 两者参数完全独立"""

    def __init__(self, ctx: BuildContext, config: BackboneConfig, prefix: str = "backbone"):
        super().__init__(ctx, prefix)
        self.config = config
        self.rgb = self.add_module(
            "rgb", VGGStream(ctx, self.child_prefix("rgb"), config.rgb_channels, config)
        )
        self.depth = self.add_module(
            "depth", VGGStream(ctx, self.child_prefix("depth"), config.depth_channels, config)
        )

    def level_shapes(self, batch: int = 1) -> Dict[int, Tuple[int, int, int, int]]:
        """按配置推算的各级特征形状"""
        return {
            level: (batch, self.config.channels[level - 1],
                    self.config.level_size(level), self.config.level_size(level))
            for level in range(1, 6)
        }

    def forward(self, rgb: Tensor, depth: Tensor) -> Tuple[FeaturePyramid, FeaturePyramid]:
        return self.rgb.extract(rgb), self.depth.extract(depth)
