# -*- coding: utf-8 -*-
"""
自适应特征融合(AFI)模块
逐级融合 RGB 与深度特征, 经残差单元后在第 2 级分辨率上逐级相加;
低层(第 1、2 级)特征先经各自的空间注意力细化
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.functional import global_avg_pool, resample, resample_like
from ..core.tensor import Tensor, concat, relu, reverse_op, sigmoid
from ..exceptions import ConfigError, ShapeError
from .attention import SpatialAttention
from .backbone import LOW_LEVELS
from .layers import Conv2d, PReLU
from .module import BuildContext, Module

LEVELS = (1, 2, 3, 4, 5)
STREAMS = ("rgb", "depth")


@dataclass
class FusionCoefficients:
    """门控系数 n、m 与逐通道系数 k, 取值均在 [0,1]"""
    n: Tensor
    m: Tensor
    k: Tensor


@dataclass
class FusionTrace:
    """单级融合的中间量"""
    coefficients: FusionCoefficients
    h: Tensor
    d: Tensor
    fused: Tensor


class LowLevelRefiner(Module):
    """第 1、2 级特征的空间注意力细化, 每个流每一级各一组参数"""

    def __init__(self, ctx: BuildContext, prefix: str, kernel_size: int = 5):
        super().__init__(ctx, prefix)
        self.attention: Dict[Tuple[str, int], SpatialAttention] = {}
        for stream in STREAMS:
            for level in LOW_LEVELS:
                local = f"{stream}_sa{level}"
                self.attention[(stream, level)] = self.add_module(
                    local, SpatialAttention(ctx, self.child_prefix(local), kernel_size)
                )

    def refine(self, stream: str, level: int, feature: Tensor) -> Tensor:
        key = (stream, level)
        if key not in self.attention:
            raise ShapeError(f"{self.prefix}: 没有 {stream} 流第 {level} 级的细化参数")
        return self.attention[key](feature)

    def forward(self, stream: str, f1: Tensor, f2: Tensor) -> Tuple[Tensor, Tensor]:
        return self.refine(stream, 1, f1), self.refine(stream, 2, f2)


class LevelFusion(Module):
    """
    单级跨模态融合

    Args:
        ctx: 构建上下文
        prefix: 参数名前缀
        channels: 本级特征通道数 C(必须为偶数)
        guide_channels: 引导特征(上一级 RGB 特征)的通道数
    """

    def __init__(self, ctx: BuildContext, prefix: str, channels: int, guide_channels: int):
        super().__init__(ctx, prefix)
        if channels % 2 != 0:
            raise ConfigError(f"{prefix}: 融合通道数 {channels} 必须为偶数")
        half = channels // 2
        self.channels = channels

        def conv(local: str, cin: int, cout: int, k: int) -> Conv2d:
            return self.add_module(local, Conv2d(ctx, self.child_prefix(local), cin, cout, k))

        self.n_conv = conv("n_conv", guide_channels, half, 1)
        self.m_conv = conv("m_conv", guide_channels, half, 3)
        self.h_conv1 = conv("h_conv1", channels, half, 3)
        self.h_conv2 = conv("h_conv2", channels, half, 3)
        self.d_conv1 = conv("d_conv1", channels, channels, 3)
        self.d_act1 = self.add_module("d_act1", PReLU(ctx, self.child_prefix("d_act1")))
        self.d_conv2 = conv("d_conv2", channels, channels, 3)
        self.d_act2 = self.add_module("d_act2", PReLU(ctx, self.child_prefix("d_act2")))
        self.k_conv = conv("k_conv", channels, channels, 1)

    def coefficients(self, fh: Tensor, guide: Tensor) -> FusionCoefficients:
        guide = resample_like(guide, fh)
        return FusionCoefficients(
            n=sigmoid(self.n_conv(guide)),
            m=sigmoid(self.m_conv(guide)),
            k=sigmoid(self.k_conv(global_avg_pool(fh))),
        )

    def forward(
        self,
        fh: Tensor,
        fd: Tensor,
        guide: Optional[Tensor] = None,
        k_override: Optional[float] = None
    ) -> Tuple[Tensor, FusionTrace]:
        """
        融合一级特征

        Args:
            fh: RGB 特征
            fd: 深度特征
            guide: 上一级 RGB 特征, 为 None 时用 fh 自身引导(第 1 级)
            k_override: 强制 k 取常数(0 为 RGB 直通, 1 为纯融合分支)

        Returns:
            (Cat(f', fd), 中间量)
        """
        if fh.shape != fd.shape:
            raise ShapeError(f"{self.prefix}: RGB 特征 {fh.shape} 与深度特征 {fd.shape} 形状不一致")
        if fh.shape[1] != self.channels:
            raise ShapeError(f"{self.prefix}: 需要 {self.channels} 通道, 当前 {fh.shape}")

        coeff = self.coefficients(fh, fh if guide is None else guide)
        if k_override is not None:
            coeff.k = Tensor(np.full(coeff.k.shape, float(k_override)), dtype=fh.dtype)

        h = concat([
            coeff.n * resample_like(self.h_conv1(fh), fh),
            coeff.m * resample_like(self.h_conv2(fh), fh),
        ], axis=1)
        d = self.d_act2(self.d_conv2(self.d_act1(self.d_conv1(fd))))
        if h.shape != fh.shape or d.shape != fh.shape:
            raise ShapeError(f"{self.prefix}: h {h.shape}, d {d.shape} 与 fh {fh.shape} 不一致")

        fused = reverse_op(coeff.k) * fh + coeff.k * (h + d) * 0.5
        out = concat([fused, fd], axis=1)
        return out, FusionTrace(coefficients=coeff, h=h, d=d, fused=fused)


class ResidualUnit(Module):
    """y = ReLU(Conv1x1(x) + Conv3x3(ReLU(Conv3x3(x)))), 再重采样到融合分辨率"""

    def __init__(self, ctx: BuildContext, prefix: str, in_channels: int, out_channels: int):
        super().__init__(ctx, prefix)
        self.proj = self.add_module("proj", Conv2d(ctx, self.child_prefix("proj"), in_channels, out_channels, 1))
        self.conv1 = self.add_module("conv1", Conv2d(ctx, self.child_prefix("conv1"), in_channels, out_channels, 3))
        self.conv2 = self.add_module("conv2", Conv2d(ctx, self.child_prefix("conv2"), out_channels, out_channels, 3))

    def forward(self, x: Tensor, target_size: Optional[Tuple[int, int]] = None) -> Tensor:
        y = relu(self.proj(x) + self.conv2(relu(self.conv1(x))))
        if target_size is not None:
            y = resample(y, target_size[0], target_size[1])
        return y


def fuse_all(features: Sequence[Tensor]) -> Tensor:
    """按固定顺序逐项相加"""
    features = list(features)
    if not features:
        raise ShapeError("fuse_all 至少需要一个输入")
    reference = features[0].shape
    for feature in features[1:]:
        if feature.shape != reference:
            raise ShapeError(f"fuse_all: 形状 {reference} 与 {feature.shape} 不一致")
    total = features[0]
    for feature in features[1:]:
        total = total + feature
    return total


@dataclass
class AFIOutput:
    fused: Tensor
    per_level: List[Tensor]
    traces: Dict[int, FusionTrace]


class AFIModule(Module):
    """
    五级融合 + 残差单元 + 逐级求和

    Args:
        ctx: 构建上下文
        prefix: 参数名前缀
        level_channels: 第 1-5 级融合前的通道数
        fuse_channels: 残差单元输出通道数
        fusion_size: 公共融合分辨率(第 2 级边长)
        use_afi: 关闭时每级直接拼接 Cat(fh, fd)
    """

    def __init__(
        self,
        ctx: BuildContext,
        prefix: str,
        level_channels: Sequence[int],
        fuse_channels: int,
        fusion_size: int,
        use_afi: bool = True
    ):
        super().__init__(ctx, prefix)
        if len(level_channels) != len(LEVELS):
            raise ShapeError(f"{prefix}: 需要 5 级通道数, 当前 {list(level_channels)}")
        self.level_channels = list(level_channels)
        self.fusion_size = fusion_size
        self.use_afi = use_afi

        self.fusions: Dict[int, LevelFusion] = {}
        self.residuals: Dict[int, ResidualUnit] = {}
        for level, width in zip(LEVELS, self.level_channels):
            if use_afi:
                guide = self.level_channels[max(level - 2, 0)]
                self.fusions[level] = self.add_module(
                    f"fuse{level}", LevelFusion(ctx, self.child_prefix(f"fuse{level}"), width, guide)
                )
            self.residuals[level] = self.add_module(
                f"res{level}",
                ResidualUnit(ctx, self.child_prefix(f"res{level}"), 2 * width, fuse_channels),
            )

    def fuse_level(
        self, level: int, fh: Tensor, fd: Tensor, guide: Optional[Tensor]
    ) -> Tuple[Tensor, Optional[FusionTrace]]:
        if not self.use_afi:
            if fh.shape != fd.shape:
                raise ShapeError(f"第 {level} 级: RGB 特征 {fh.shape} 与深度特征 {fd.shape} 形状不一致")
            return concat([fh, fd], axis=1), None
        return self.fusions[level](fh, fd, guide)

    def forward(self, rgb: Dict[int, Tensor], depth: Dict[int, Tensor]) -> AFIOutput:
        per_level: List[Tensor] = []
        traces: Dict[int, FusionTrace] = {}
        size = (self.fusion_size, self.fusion_size)
        for level in LEVELS:
            guide = rgb[level - 1] if level > 1 else None
            merged, trace = self.fuse_level(level, rgb[level], depth[level], guide)
            if trace is not None:
                traces[level] = trace
            per_level.append(self.residuals[level](merged, size))
        return AFIOutput(fused=fuse_all(per_level), per_level=per_level, traces=traces)
