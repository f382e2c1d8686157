# -*- coding: utf-8 -*-
"""张量核心: 自动微分、层原语、初始化与优化器"""

from .tensor import (
    Tensor, Tape, Function, backward, concat, elementwise, activation, reverse_op,
    sigmoid, relu, prelu, no_grad, record_kinks, set_debug_checks, get_tape, reset_tape, is_grad_enabled,
)
from .functional import (
    Conv2dParams, conv2d, resample, resample_like, global_avg_pool, max_pool2d,
    channel_mean, channel_max, binary_cross_entropy, bilinear_resize_array,
)
from .init import init_params
from .optim import SGD

__all__ = [
    'Tensor', 'Tape', 'Function', 'backward', 'concat', 'elementwise', 'activation',
    'reverse_op', 'sigmoid', 'relu', 'prelu', 'no_grad', 'record_kinks',
    'set_debug_checks', 'get_tape', 'reset_tape', 'is_grad_enabled',
    'Conv2dParams', 'conv2d', 'resample', 'resample_like', 'global_avg_pool',
    'max_pool2d', 'channel_mean', 'channel_max', 'binary_cross_entropy',
    'bilinear_resize_array', 'init_params', 'SGD',
]
