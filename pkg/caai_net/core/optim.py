# -*- coding: utf-8 -*-
"""
带动量与权重衰减的随机梯度下降
"""

import logging
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from ..exceptions import MissingGradientError
from .tensor import Tensor


class SGD:
    """
    动量 SGD
        v <- momentum * v + grad + weight_decay * param
        param <- param - lr * v
    """

    def __init__(
        self,
        params: Iterable[Tuple[str, Tensor]],
        lr: float,
        momentum: float = 0.0,
        weight_decay: float = 0.0
    ):
        if lr < 0:
            raise ValueError(f"学习率不能为负: {lr}")
        if not 0 <= momentum < 1:
            raise ValueError(f"动量必须在 [0,1) 内: {momentum}")
        if weight_decay < 0:
            raise ValueError(f"权重衰减不能为负: {weight_decay}")
        self.params: Dict[str, Tensor] = dict(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities: Dict[str, np.ndarray] = {}
        self.logger = logging.getLogger(__name__)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def step(self) -> None:
        """用当前梯度更新一次参数"""
        missing = [name for name, param in self.params.items() if param.grad is None]
        if missing:
            preview = ', '.join(missing[:5])
            raise MissingGradientError(f"{len(missing)} 个参数没有梯度: {preview}")

        for name, param in self.params.items():
            update = param.grad + self.weight_decay * param.data
            velocity = self.velocities.get(name)
            if velocity is None:
                velocity = update
            else:
                velocity = self.momentum * velocity + update
            self.velocities[name] = velocity.astype(param.dtype, copy=False)
            param.assign(param.data - self.lr * self.velocities[name])

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: v.copy() for name, v in self.velocities.items()}

    def load_state_dict(self, velocities: Optional[Dict[str, np.ndarray]]) -> None:
        self.velocities = {}
        for name, value in (velocities or {}).items():
            if name not in self.params:
                self.logger.warning(f"忽略未知参数的动量: {name}")
                continue
            self.velocities[name] = np.asarray(value, dtype=self.params[name].dtype).copy()
