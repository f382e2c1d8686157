# -*- coding: utf-8 -*-
"""服务模块"""

from .checkpoint_service import Checkpoint, CheckpointService
from .dataset_service import DatasetLayout, DatasetService, RgbdDataset, RgbdSample
from .gradcheck_service import GradCheckResult, GradCheckSuite, GradientChecker
from .metrics_service import EvalPair, ImageMetrics, MetricReport, MetricsService
from .synthetic_service import SyntheticService

__all__ = [
    'Checkpoint', 'CheckpointService',
    'DatasetLayout', 'DatasetService', 'RgbdDataset', 'RgbdSample',
    'GradCheckResult', 'GradCheckSuite', 'GradientChecker',
    'EvalPair', 'ImageMetrics', 'MetricReport', 'MetricsService',
    'SyntheticService',
]
