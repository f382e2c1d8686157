# -*- coding: utf-8 -*-
"""
CAAI-Net 整体网络
骨干(双流) -> 低层空间注意力细化 + 高层 CCA -> AFI 逐级融合 -> 预测头
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from ..core.functional import resample
from ..core.tensor import Tensor, is_grad_enabled, no_grad, relu, reset_tape, sigmoid
from ..exceptions import ShapeError
from ..models.config import ExperimentConfig
from ..models.saliency_map import SaliencyMap
from ..models.train_params import BackboneConfig, ModelConfig
from .afi import AFIModule, AFIOutput, LowLevelRefiner
from .backbone import TwoStreamBackbone
from .cca import CCAModule, CCAOutput
from .layers import Conv2d
from .module import BuildContext, Module

PRECISIONS = {'float32': np.float32, 'float64': np.float64}


class SaliencyHead(Module):
    """Conv3x3 -> ReLU -> Conv1x1 -> Sigmoid -> 重采样到输入尺寸"""

    def __init__(self, ctx: BuildContext, prefix: str, channels: int):
        super().__init__(ctx, prefix)
        self.conv1 = self.add_module("conv1", Conv2d(ctx, self.child_prefix("conv1"), channels, channels, 3))
        self.conv2 = self.add_module("conv2", Conv2d(ctx, self.child_prefix("conv2"), channels, 1, 1))

    def forward(self, x: Tensor, output_size: int) -> Tensor:
        return resample(sigmoid(self.conv2(relu(self.conv1(x)))), output_size, output_size)


class CAAINet(Module):
    """
    RGB-D 显著性检测网络

    Args:
        backbone_config: 骨干网络配置
        model_config: CCA/AFI 配置与消融开关
        seed: 参数初始化种子
        dtype: 浮点精度, 缺省取 model_config.precision
    """

    def __init__(
        self,
        backbone_config: BackboneConfig,
        model_config: ModelConfig,
        seed: int = 0,
        dtype: Optional[np.dtype] = None
    ):
        dtype = np.dtype(dtype if dtype is not None else PRECISIONS[model_config.precision])
        ctx = BuildContext(seed=seed, dtype=dtype)
        super().__init__(ctx, "")
        self.backbone_config = backbone_config
        self.model_config = model_config
        self.logger = logging.getLogger(__name__)

        channels = backbone_config.channels
        common = model_config.common_channels
        self.backbone = self.add_module("backbone", TwoStreamBackbone(ctx, backbone_config))
        self.refiner = self.add_module("refine", LowLevelRefiner(ctx, "refine", model_config.sa_kernel))
        self.cca_rgb = self.add_module("cca_rgb", CCAModule(ctx, "cca_rgb", channels[2:], model_config))
        self.cca_depth = self.add_module("cca_depth", CCAModule(ctx, "cca_depth", channels[2:], model_config))
        self.afi = self.add_module(
            "afi",
            AFIModule(
                ctx, "afi",
                level_channels=[channels[0], channels[1], common, common, common],
                fuse_channels=model_config.fuse_channels,
                fusion_size=backbone_config.level_size(2),
                use_afi=model_config.use_afi,
            ),
        )
        self.head = self.add_module("head", SaliencyHead(ctx, "head", model_config.fuse_channels))

        self.logger.debug(
            f"网络已构建: {model_config.variant_name()}, 参数量 {self.parameters().count()}, "
            f"精度 {dtype.name}"
        )

    @property
    def dtype(self) -> np.dtype:
        return self.ctx.dtype

    @property
    def input_size(self) -> int:
        return self.backbone_config.input_size

    def as_input(self, values, name: str) -> Tensor:
        """把 numpy 数组或张量转换为网络精度的输入张量"""
        data = values.data if isinstance(values, Tensor) else np.asarray(values)
        if data.ndim == 3:
            data = data[None]
        if data.ndim != 4:
            raise ShapeError(f"{name} 输入必须是 N×C×H×W, 当前 {data.shape}")
        return Tensor(data, dtype=self.dtype)

    def encode(self, rgb: Tensor, depth: Tensor):
        """骨干 + 低层细化 + CCA, 返回两个流的五级特征与 CCA 输出"""
        if rgb.shape[0] != depth.shape[0]:
            raise ShapeError(f"RGB 批大小 {rgb.shape} 与深度批大小 {depth.shape} 不一致")
        rgb_pyramid, depth_pyramid = self.backbone(rgb, depth)

        streams = {}
        cca_outputs = {}
        for stream, pyramid, cca in (
            ("rgb", rgb_pyramid, self.cca_rgb),
            ("depth", depth_pyramid, self.cca_depth),
        ):
            f1, f2 = self.refiner(stream, pyramid.f1, pyramid.f2)
            out: CCAOutput = cca(pyramid.f3, pyramid.f4, pyramid.f5)
            streams[stream] = {1: f1, 2: f2, **out.fhat}
            cca_outputs[stream] = out
        return streams, cca_outputs

    def fuse(self, rgb: Tensor, depth: Tensor) -> AFIOutput:
        streams, _ = self.encode(rgb, depth)
        return self.afi(streams["rgb"], streams["depth"])

    def forward(self, rgb, depth) -> Tensor:
        """
        前向计算

        记录梯度时先清空当前线程的计算带, 上一次未反向的前向节点随之释放

        Args:
            rgb: N×3×S×S, 取值 [0,1]
            depth: N×1×S×S, 取值 [0,1]

        Returns:
            N×1×S×S 显著概率
        """
        if is_grad_enabled():
            reset_tape()
        rgb = self.as_input(rgb, "RGB")
        depth = self.as_input(depth, "深度")
        fused = self.fuse(rgb, depth)
        return self.head(fused.fused, self.input_size)

    def predict(self, rgb, depth, stems: Optional[Sequence[str]] = None) -> List[SaliencyMap]:
        """不记录计算带的推理, 返回逐样本显著图"""
        with no_grad():
            out = self.forward(rgb, depth).data
        stems = list(stems) if stems is not None else [str(i) for i in range(out.shape[0])]
        if len(stems) != out.shape[0]:
            raise ShapeError(f"名称数 {len(stems)} 与批大小 {out.shape[0]} 不一致")
        return [SaliencyMap(stem, out[i, 0]) for i, stem in enumerate(stems)]


def build_model(config: ExperimentConfig, dtype: Optional[np.dtype] = None) -> CAAINet:
    """按实验配置构建网络, 参数种子取 train.seed"""
    return CAAINet(config.backbone, config.model, seed=config.train.seed, dtype=dtype)
