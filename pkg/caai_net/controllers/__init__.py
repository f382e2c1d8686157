# -*- coding: utf-8 -*-
"""控制器模块"""

from .training_controller import TaskState, TrainingController, TrainingResult, TrainingStats
from .evaluation_controller import EvaluationController

__all__ = ['TaskState', 'TrainingController', 'TrainingResult', 'TrainingStats', 'EvaluationController']
