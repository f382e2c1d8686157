# -*- coding: utf-8 -*-
"""数据模型模块"""

from .train_params import BackboneConfig, ModelConfig, SyntheticSpec, TrainConfig
from .config import AppConfig, ConfigManager, ExperimentConfig
from .saliency_map import SaliencyMap

__all__ = [
    'BackboneConfig', 'ModelConfig', 'SyntheticSpec', 'TrainConfig',
    'AppConfig', 'ConfigManager', 'ExperimentConfig', 'SaliencyMap',
]
