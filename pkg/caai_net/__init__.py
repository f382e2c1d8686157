# -*- coding: utf-8 -*-
"""
CAAI-Net RGB-D 显著性检测
~~~~~~~~~~~~~~~~~~~~~~~~~

桌面规模的互补注意力 + 自适应特征融合网络, 自带自动微分张量核心与评估指标

:license: MIT
"""

__version__ = '1.0.0'

# 必须先于 numpy 导入执行
from .utils.resource_utils import apply_blas_thread_limit

apply_blas_thread_limit()

from .models.config import ConfigManager, ExperimentConfig
from .network.model import CAAINet, build_model
from .controllers.training_controller import TrainingController
from .controllers.evaluation_controller import EvaluationController

__all__ = [
    'ConfigManager', 'ExperimentConfig', 'CAAINet', 'build_model',
    'TrainingController', 'EvaluationController', '__version__',
]
