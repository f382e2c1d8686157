# -*- coding: utf-8 -*-
"""
合成 RGB-D 数据生成服务
每个样本含一个显著形状(最后绘制, 深度最近)与若干干扰形状,
真值图直接取显著形状的栅格掩码
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Union

import numpy as np
from PIL import Image, ImageDraw

from ..exceptions import DatasetError
from ..models.config import AppConfig
from ..models.train_params import SyntheticSpec
from ..utils.resource_utils import get_thread_limit
from .dataset_service import write_gray_png, write_rgb_png


@dataclass
class SyntheticSample:
    """内存中的合成样本(写盘前)"""
    stem: str
    rgb: np.ndarray  # H×W×3, [0,1]
    depth: np.ndarray  # H×W, [0,1], 越小越近
    gt: np.ndarray  # H×W, {0,1}


@dataclass
class GenerationResult:
    """生成结果"""
    root: Path
    stems: List[str] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.stems)


class SyntheticService:
    """按 SyntheticSpec 生成数据集"""

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.config = AppConfig()
        self.logger = logging.getLogger(__name__)

    def _shape_mask(self, rng: np.random.Generator) -> np.ndarray:
        size = self.spec.canvas_size
        kind = self.spec.shape_kinds[int(rng.integers(len(self.spec.shape_kinds)))]
        half_w = int(rng.integers(max(size // 8, 1), max(size // 4, 2) + 1))
        half_h = int(rng.integers(max(size // 8, 1), max(size // 4, 2) + 1))
        cx = int(rng.integers(half_w, size - half_w))
        cy = int(rng.integers(half_h, size - half_h))
        box = (cx - half_w, cy - half_h, cx + half_w - 1, cy + half_h - 1)

        canvas = Image.new('L', (size, size), 0)
        draw = ImageDraw.Draw(canvas)
        if kind == 'rectangle':
            draw.rectangle(box, fill=255)
        else:
            draw.ellipse(box, fill=255)
        return np.asarray(canvas) > 0

    def render(self, index: int, seed: int) -> SyntheticSample:
        """
        渲染一个样本

        Args:
            index: 样本序号
            seed: 数据集种子, 每个样本用 (seed, index) 派生独立随机流

        Returns:
            合成样本
        """
        spec = self.spec
        size = spec.canvas_size
        rng = np.random.default_rng([seed, index])

        base = rng.uniform(0.0, 0.4, size=3)
        texture = rng.uniform(-1.0, 1.0, size=(size, size, 1)) * spec.texture_amplitude
        rgb = np.clip(base[None, None, :] + texture, 0.0, 1.0)
        depth = np.full((size, size), spec.background_depth)

        middle = 0.5 * (spec.salient_depth + spec.background_depth)
        for _ in range(spec.num_shapes - 1):
            mask = self._shape_mask(rng)
            rgb[mask] = rng.uniform(0.3, 0.7, size=3)
            depth[mask] = middle

        salient = self._shape_mask(rng)
        rgb[salient] = rng.uniform(0.6, 1.0, size=3)
        depth[salient] = spec.salient_depth

        if spec.depth_noise_sigma > 0:
            depth = depth + rng.normal(0.0, spec.depth_noise_sigma, size=depth.shape)
        low, high = float(depth.min()), float(depth.max())
        depth = (depth - low) / (high - low) if high > low else np.full(depth.shape, 0.5)

        return SyntheticSample(
            stem=f"{index:04d}",
            rgb=rgb,
            depth=depth,
            gt=salient.astype(np.float64),
        )

    def _write(self, sample: SyntheticSample, root: Path) -> None:
        dirs = self.config.DATASET_DIRS
        write_rgb_png(root / dirs['rgb'] / f"{sample.stem}.png", sample.rgb)
        write_gray_png(root / dirs['depth'] / f"{sample.stem}.png", sample.depth, bits=16)
        write_gray_png(root / dirs['gt'] / f"{sample.stem}.png", sample.gt, bits=8)

    def generate(self, n: int, seed: int, out_dir: Union[str, Path]) -> GenerationResult:
        """
        生成 n 个样本并按数据集布局写盘

        Raises:
            DatasetError: n 非正或目录不可写
        """
        if n < 1:
            raise DatasetError(f"样本数必须为正, 当前 {n}")
        root = Path(out_dir)
        try:
            for kind in ('rgb', 'depth', 'gt'):
                (root / self.config.DATASET_DIRS[kind]).mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise DatasetError(f"无法创建输出目录 {root}: {e}") from e

        def job(index: int) -> str:
            sample = self.render(index, seed)
            self._write(sample, root)
            return sample.stem

        with ThreadPoolExecutor(max_workers=get_thread_limit()) as pool:
            stems = list(pool.map(job, range(n)))

        self.logger.info(f"已生成 {n} 个合成样本 (seed={seed}): {root}")
        return GenerationResult(root=root, stems=stems)
