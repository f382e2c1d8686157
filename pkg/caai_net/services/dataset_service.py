# -*- coding: utf-8 -*-
"""
RGB-D 数据集读写服务
目录布局: <root>/RGB, <root>/depth, <root>/GT, 三者以相同文件名(不含后缀)对应
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..core.functional import bilinear_resize_array
from ..exceptions import DatasetError
from ..models.config import AppConfig
from ..utils.resource_utils import get_thread_limit

# 16 位及整型灰度模式按原始位深读取
WIDE_MODES = ('I;16', 'I;16B', 'I;16L', 'I', 'F')


@dataclass
class DatasetLayout:
    """数据集目录布局"""
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)
        self.config = AppConfig()

    def subdir(self, kind: str) -> Path:
        return self.root / self.config.DATASET_DIRS[kind]

    def find_file(self, kind: str, stem: str) -> Optional[Path]:
        folder = self.subdir(kind)
        for suffix in self.config.IMAGE_SUFFIXES:
            for candidate in (folder / f"{stem}{suffix}", folder / f"{stem}{suffix.upper()}"):
                if candidate.is_file():
                    return candidate
        return None

    def require_file(self, kind: str, stem: str) -> Path:
        path = self.find_file(kind, stem)
        if path is None:
            raise DatasetError(f"缺少 {stem} 对应的 {self.config.DATASET_DIRS[kind]} 文件 (目录: {self.subdir(kind)})")
        return path

    def list_stems(self, kind: str) -> List[str]:
        folder = self.subdir(kind)
        if not folder.is_dir():
            raise DatasetError(f"数据目录不存在: {folder}")
        suffixes = set(self.config.IMAGE_SUFFIXES)
        return sorted(p.stem for p in folder.iterdir() if p.is_file() and p.suffix.lower() in suffixes)

    def stems(self, require_gt: bool = True) -> List[str]:
        """
        全部样本名, 并检查每个样本在各子目录都有对应文件

        Raises:
            DatasetError: 目录缺失或对应文件缺失
        """
        stems = self.list_stems('rgb')
        kinds = ('depth', 'gt') if require_gt else ('depth',)
        for stem in stems:
            for kind in kinds:
                self.require_file(kind, stem)
        return stems


@dataclass
class RgbdSample:
    """一个预处理后的样本"""
    stem: str
    rgb: np.ndarray  # 3×S×S, [0,1]
    depth: np.ndarray  # C×S×S, [0,1]
    gt: Optional[np.ndarray]  # 1×S×S, {0,1}
    original_size: Tuple[int, int]  # RGB 原始 (高, 宽)


@dataclass
class Batch:
    stems: List[str]
    rgb: np.ndarray
    depth: np.ndarray
    gt: Optional[np.ndarray]

    def __len__(self) -> int:
        return len(self.stems)


def read_image(path: Union[str, Path], mode: Optional[str] = None) -> np.ndarray:
    """
    解码图像为 numpy 数组

    Args:
        path: 图像路径
        mode: 'RGB'、'L' 或 None(保持原始位深, 多通道转灰度)

    Raises:
        DatasetError: 文件缺失或无法解码
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            if mode is not None:
                return np.asarray(img.convert(mode))
            if img.mode in WIDE_MODES:
                return np.asarray(img).astype(np.float64)
            return np.asarray(img.convert('L'))
    except FileNotFoundError:
        raise DatasetError(f"文件不存在: {path}") from None
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise DatasetError(f"无法解码图像 {path}: {e}") from e


def write_gray_png(path: Union[str, Path], values: np.ndarray, bits: int = 8) -> None:
    """写单通道 8 位或 16 位 PNG, values 取值 [0,1]"""
    values = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    if bits == 16:
        array = np.round(values * 65535.0).astype(np.uint16)
    elif bits == 8:
        array = np.round(values * 255.0).astype(np.uint8)
    else:
        raise ValueError(f"只支持 8 或 16 位, 当前 {bits}")
    try:
        Image.fromarray(array).save(path, format='PNG')
    except OSError as e:
        raise DatasetError(f"无法写入图像 {path}: {e}") from e


def write_rgb_png(path: Union[str, Path], values: np.ndarray) -> None:
    """写 RGB PNG, values 为 H×W×3 的 [0,1] 数组"""
    array = np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    try:
        Image.fromarray(array).save(path, format='PNG')
    except OSError as e:
        raise DatasetError(f"无法写入图像 {path}: {e}") from e


class DatasetService:
    """样本读取与预处理"""

    def __init__(self, target_size: int, depth_channels: int = 1):
        self.target_size = target_size
        self.depth_channels = depth_channels
        self.logger = logging.getLogger(__name__)

    def _resize(self, array: np.ndarray) -> np.ndarray:
        return bilinear_resize_array(array, self.target_size, self.target_size)

    def load_rgb(self, path: Path) -> Tuple[np.ndarray, Tuple[int, int]]:
        pixels = read_image(path, 'RGB').astype(np.float64) / 255.0
        chw = pixels.transpose(2, 0, 1)
        return self._resize(chw), (pixels.shape[0], pixels.shape[1])

    def load_depth(self, path: Path) -> np.ndarray:
        """逐图最小-最大归一化, 数值范围为零时置 0.5"""
        raw = read_image(path).astype(np.float64)
        low, high = float(raw.min()), float(raw.max())
        if high > low:
            normalized = (raw - low) / (high - low)
        else:
            self.logger.warning(f"深度图数值范围为零, 置为常数 0.5: {path}")
            normalized = np.full(raw.shape, 0.5)
        depth = self._resize(normalized)[None]
        return np.repeat(depth, self.depth_channels, axis=0)

    def load_gt(self, path: Path) -> np.ndarray:
        gray = read_image(path, 'L').astype(np.float64) / 255.0
        return (self._resize(gray) > 0.5).astype(np.float64)[None]

    def load_sample(self, stem: str, layout: DatasetLayout, with_gt: bool = True) -> RgbdSample:
        """
        读取一个样本

        Args:
            stem: 文件名(不含后缀)
            layout: 数据集布局
            with_gt: 是否读取真值

        Returns:
            缩放到 target_size 的样本
        """
        rgb, original_size = self.load_rgb(layout.require_file('rgb', stem))
        depth = self.load_depth(layout.require_file('depth', stem))
        gt = self.load_gt(layout.require_file('gt', stem)) if with_gt else None
        return RgbdSample(stem=stem, rgb=rgb, depth=depth, gt=gt, original_size=original_size)


class RgbdDataset:
    """
    内存中的 RGB-D 数据集

    Args:
        root: 数据集根目录
        target_size: 缩放边长
        with_gt: 是否需要真值(推理时为 False)
        depth_channels: 深度流输入通道数
    """

    def __init__(self, root: Union[str, Path], target_size: int, with_gt: bool = True,
                 depth_channels: int = 1):
        self.logger = logging.getLogger(__name__)
        self.layout = DatasetLayout(Path(root))
        self.with_gt = with_gt
        self.service = DatasetService(target_size, depth_channels)

        stems = self.layout.stems(require_gt=with_gt)
        if not stems:
            raise DatasetError(f"数据集为空: {self.layout.subdir('rgb')}")
        with ThreadPoolExecutor(max_workers=get_thread_limit()) as pool:
            self.samples: List[RgbdSample] = list(
                pool.map(lambda stem: self.service.load_sample(stem, self.layout, with_gt), stems)
            )
        self.logger.info(f"已加载 {len(self.samples)} 个样本: {self.layout.root}")

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> RgbdSample:
        return self.samples[index]

    @property
    def stems(self) -> List[str]:
        return [sample.stem for sample in self.samples]

    def collate(self, indices) -> Batch:
        chosen = [self.samples[i] for i in indices]
        gt = np.stack([s.gt for s in chosen]) if self.with_gt else None
        return Batch(
            stems=[s.stem for s in chosen],
            rgb=np.stack([s.rgb for s in chosen]),
            depth=np.stack([s.depth for s in chosen]),
            gt=gt,
        )

    def batches(self, batch_size: int, seed: int = 0, epoch: int = 0,
                shuffle: bool = True) -> Iterator[Batch]:
        """按 (seed, epoch) 确定的顺序产生批次"""
        order = np.arange(len(self.samples))
        if shuffle:
            order = np.random.default_rng([seed, epoch]).permutation(len(self.samples))
        for start in range(0, len(order), batch_size):
            yield self.collate(order[start:start + batch_size])

    def sample_map(self) -> Dict[str, RgbdSample]:
        return {sample.stem: sample for sample in self.samples}
