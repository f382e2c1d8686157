# -*- coding: utf-8 -*-
"""网络结构: 骨干、CCA、AFI 与整体模型"""

from .module import BuildContext, Module, ModuleParams, ParamMeta
from .backbone import FeaturePyramid, TwoStreamBackbone, VGGStream
from .cca import CCAModule, ComplementaryAttention, FeatureInteraction, GlobalContext
from .afi import AFIModule, LevelFusion, LowLevelRefiner, ResidualUnit, fuse_all
from .model import CAAINet, SaliencyHead, build_model

__all__ = [
    'BuildContext', 'Module', 'ModuleParams', 'ParamMeta',
    'FeaturePyramid', 'TwoStreamBackbone', 'VGGStream',
    'CCAModule', 'ComplementaryAttention', 'FeatureInteraction', 'GlobalContext',
    'AFIModule', 'LevelFusion', 'LowLevelRefiner', 'ResidualUnit', 'fuse_all',
    'CAAINet', 'SaliencyHead', 'build_model',
]
