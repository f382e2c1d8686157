# -*- coding: utf-8 -*-
"""
显著图数据模型
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..exceptions import ShapeError


@dataclass
class SaliencyMap:
    """单通道 [0,1] 显著图及其图像标识"""
    stem: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"显著图必须是二维数组, 当前形状 {values.shape}")
        self.values = values

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def binarized(self, threshold: float = 0.5) -> 'SaliencyMap':
        """按阈值二值化(真值图读取时使用)"""
        return SaliencyMap(self.stem, (self.values > threshold).astype(np.float64))

    def to_uint8(self, stretch: bool = False) -> np.ndarray:
        """
        转为 8 位灰度

        Args:
            stretch: 是否先做最小-最大拉伸到 [0,255](常数图保持原值)
        """
        values = self.values
        if stretch:
            low, high = float(values.min()), float(values.max())
            if high > low:
                values = (values - low) / (high - low)
        return np.clip(np.round(values * 255.0), 0, 255).astype(np.uint8)
