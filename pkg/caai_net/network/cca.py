# -*- coding: utf-8 -*-
"""
上下文感知互补注意力(CCA)模块
作用于高层特征(第 3-5 级):
    1. 投影到公共通道数
    2. 特征交互金字塔(六个卷积单元, 跨尺度相加)
    3. CA->SA 互补注意力, 用相邻层的反转权重门控
    4. 全局上下文残差分支
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

from ..core.functional import resample_like
from ..core.tensor import Tensor, relu, reverse_op, sigmoid
from ..exceptions import ShapeError
from ..models.train_params import ModelConfig
from .attention import ChannelAttention, SpatialAttention
from .backbone import HIGH_LEVELS
from .layers import Conv2d, ConvUnit
from .module import BuildContext, Module

# 金字塔节点 (行 j, 列 k) 的计算顺序, 行 j 对应第 3+j 级分辨率
PYRAMID_NODES: Tuple[Tuple[int, int], ...] = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


@dataclass
class AttentionState:
    """某一级的注意力输出 S 与反转权重 ω = 1 - σ(S)"""
    s: Tensor
    omega: Tensor


@dataclass
class CCAOutput:
    """CCA 输出: 三个门控特征与中间量"""
    fhat: Dict[int, Tensor]
    primes: Dict[int, Tensor]
    states: Dict[int, AttentionState] = field(default_factory=dict)


class FeatureInteraction(Module):
    """特征交互金字塔"""

    def __init__(self, ctx: BuildContext, prefix: str, channels: int):
        super().__init__(ctx, prefix)
        self.channels = channels
        self.units: Dict[Tuple[int, int], ConvUnit] = {}
        for j, k in PYRAMID_NODES:
            local = f"cu_{j}{k}"
            self.units[(j, k)] = self.add_module(
                local, ConvUnit(ctx, self.child_prefix(local), channels, channels)
            )
        # 置 False 时切断所有上/下采样路径, 各行退化为独立的卷积单元链
        self.cross_scale = True

    def _resampled(self, x: Tensor, reference: Tensor) -> Optional[Tensor]:
        if not self.cross_scale:
            return None
        out = resample_like(x, reference)
        if out.shape != reference.shape:
            raise ShapeError(f"{self.prefix}: 重采样后形状 {out.shape} 与 {reference.shape} 不一致")
        return out

    @staticmethod
    def _add(base: Tensor, *extras: Optional[Tensor]) -> Tensor:
        out = base
        for extra in extras:
            if extra is not None:
                out = out + extra
        return out

    def nodes(self, f3: Tensor, f4: Tensor, f5: Tensor) -> Dict[Tuple[int, int], Tensor]:
        """按依赖顺序计算全部六个节点"""
        cu = self.units
        n = {}
        n[(0, 0)] = cu[(0, 0)](f3)
        n[(1, 0)] = cu[(1, 0)](self._add(f4, self._resampled(n[(0, 0)], f4)))
        n[(0, 1)] = cu[(0, 1)](self._add(n[(0, 0)], self._resampled(n[(1, 0)], n[(0, 0)])))
        n[(2, 0)] = cu[(2, 0)](self._add(f5, self._resampled(n[(1, 0)], f5)))
        n[(1, 1)] = cu[(1, 1)](self._add(
            n[(1, 0)],
            self._resampled(n[(2, 0)], n[(1, 0)]),
            self._resampled(n[(0, 1)], n[(1, 0)]),
        ))
        if self.cross_scale:
            n[(0, 2)] = cu[(0, 2)](resample_like(n[(1, 1)], n[(0, 1)]) + n[(0, 1)])
        else:
            n[(0, 2)] = cu[(0, 2)](n[(0, 1)])
        return n

    def forward(self, f3: Tensor, f4: Tensor, f5: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        """返回 (f3', f4', f5') = (f_02, f_11, f_20)"""
        n = self.nodes(f3, f4, f5)
        return n[(0, 2)], n[(1, 1)], n[(2, 0)]


class ComplementaryAttention(Module):
    """逐级 CA->SA, 并以 ω_i ⊙ US(S_{i+1}) 得到第 3、4 级输出"""

    def __init__(self, ctx: BuildContext, prefix: str, channels: int, ratio: int = 4,
                 sa_kernel: int = 5):
        super().__init__(ctx, prefix)
        self.ca: Dict[int, ChannelAttention] = {}
        self.sa: Dict[int, SpatialAttention] = {}
        for level in HIGH_LEVELS:
            self.ca[level] = self.add_module(
                f"ca{level}", ChannelAttention(ctx, self.child_prefix(f"ca{level}"), channels, ratio)
            )
            self.sa[level] = self.add_module(
                f"sa{level}", SpatialAttention(ctx, self.child_prefix(f"sa{level}"), sa_kernel)
            )

    def state(self, level: int, feature: Tensor) -> AttentionState:
        s = self.sa[level](self.ca[level](feature))
        return AttentionState(s=s, omega=reverse_op(sigmoid(s)))

    @staticmethod
    def gate(state: AttentionState, next_state: AttentionState) -> Tensor:
        """f̂_i = ω_i ⊙ US(S_{i+1})"""
        return state.omega * resample_like(next_state.s, state.s)

    def forward(
        self, f3p: Tensor, f4p: Tensor, f5p: Tensor
    ) -> Tuple[Tensor, Tensor, Dict[int, AttentionState]]:
        states = {level: self.state(level, f) for level, f in zip(HIGH_LEVELS, (f3p, f4p, f5p))}
        fhat3 = self.gate(states[3], states[4])
        fhat4 = self.gate(states[4], states[5])
        return fhat3, fhat4, states


class GlobalContext(Module):
    """f̂5 = ω5 ⊙ (f5' + ReLU(Conv(ReLU(Conv(f5')))))"""

    def __init__(self, ctx: BuildContext, prefix: str, channels: int):
        super().__init__(ctx, prefix)
        self.conv1 = self.add_module("conv1", Conv2d(ctx, self.child_prefix("conv1"), channels, channels, 3))
        self.conv2 = self.add_module("conv2", Conv2d(ctx, self.child_prefix("conv2"), channels, channels, 3))

    def forward(self, f5p: Tensor, omega5: Optional[Tensor] = None) -> Tensor:
        out = f5p + relu(self.conv2(relu(self.conv1(f5p))))
        if omega5 is not None:
            out = omega5 * out
        return out


class CCAModule(Module):
    """
    单个流的 CCA

    Args:
        ctx: 构建上下文
        prefix: 参数名前缀
        level_channels: 骨干第 3、4、5 级通道数
        config: 模型配置(公共通道数、注意力参数与消融开关)
    """

    def __init__(self, ctx: BuildContext, prefix: str, level_channels: Sequence[int],
                 config: ModelConfig):
        super().__init__(ctx, prefix)
        if len(level_channels) != len(HIGH_LEVELS):
            raise ShapeError(f"{prefix}: 需要第 3-5 级共 3 个通道数, 当前 {list(level_channels)}")
        self.config = config
        self.common = config.common_channels

        self.projections: Dict[int, Conv2d] = {}
        for level, width in zip(HIGH_LEVELS, level_channels):
            self.projections[level] = self.add_module(
                f"proj{level}", Conv2d(ctx, self.child_prefix(f"proj{level}"), width, self.common, 1)
            )

        self.interaction = None
        if config.use_feature_interaction:
            self.interaction = self.add_module(
                "fi", FeatureInteraction(ctx, self.child_prefix("fi"), self.common)
            )
        self.attention = None
        if config.use_complementary_attention:
            self.attention = self.add_module(
                "attn",
                ComplementaryAttention(ctx, self.child_prefix("attn"), self.common,
                                       config.ca_ratio, config.sa_kernel),
            )
        self.context = None
        if config.use_global_context:
            self.context = self.add_module(
                "gc", GlobalContext(ctx, self.child_prefix("gc"), self.common)
            )

    def project_common(self, feature: Tensor, level: int) -> Tensor:
        """1x1 卷积投影到公共通道数并 ReLU"""
        if level not in self.projections:
            raise ShapeError(f"{self.prefix}: 只能投影第 3-5 级特征, 当前第 {level} 级")
        return relu(self.projections[level](feature))

    def forward(self, f3: Tensor, f4: Tensor, f5: Tensor) -> CCAOutput:
        projected = [self.project_common(f, level) for level, f in zip(HIGH_LEVELS, (f3, f4, f5))]
        if self.interaction is not None:
            f3p, f4p, f5p = self.interaction(*projected)
        else:
            f3p, f4p, f5p = projected
        primes = {3: f3p, 4: f4p, 5: f5p}

        states: Dict[int, AttentionState] = {}
        if self.attention is not None:
            fhat3, fhat4, states = self.attention(f3p, f4p, f5p)
            omega5: Optional[Tensor] = states[5].omega
        else:
            fhat3, fhat4, omega5 = f3p, f4p, None

        if self.context is not None:
            fhat5 = self.context(f5p, omega5)
        elif omega5 is not None:
            fhat5 = omega5 * f5p
        else:
            fhat5 = f5p

        return CCAOutput(fhat={3: fhat3, 4: fhat4, 5: fhat5}, primes=primes, states=states)
