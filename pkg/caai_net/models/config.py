# -*- coding: utf-8 -*-
"""
应用配置管理
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

from pydantic import ValidationError as PydanticValidationError

from ..exceptions import ConfigError
from .train_params import (
    FULL_PROFILE,
    BackboneConfig,
    ModelConfig,
    SyntheticSpec,
    TrainConfig,
)


@dataclass
class AppConfig:
    """应用配置类"""

    # 应用信息
    APP_NAME: str = "CAAI-Net"
    APP_VERSION: str = "1.0.0"

    # 检查点格式
    CHECKPOINT_MAGIC: bytes = b"CAAI1"
    CHECKPOINT_VERSION: int = 1

    # 评估指标常量
    F_BETA2: float = 0.3
    THRESHOLD_COUNT: int = 255
    E_EPSILON: float = 1e-12
    S_ALPHA: float = 0.5
    S_LAMBDA: float = 1.0
    SSIM_C1: float = 0.01 ** 2
    SSIM_C2: float = 0.03 ** 2

    # 训练
    BCE_EPSILON: float = 1e-7

    # 梯度检查
    GRADCHECK_STEP: float = 1e-3
    GRADCHECK_TOLERANCE: float = 1e-4
    GRADCHECK_FLOOR: float = 1e-3
    GRADCHECK_SEEDS: int = 10

    # 数据集目录名
    DATASET_DIRS: Dict[str, str] = None

    # 支持的图像后缀
    IMAGE_SUFFIXES: tuple = ('.png', '.jpg', '.jpeg', '.bmp')

    def __post_init__(self):
        """初始化后处理"""
        if self.DATASET_DIRS is None:
            self.DATASET_DIRS = {'rgb': 'RGB', 'depth': 'depth', 'gt': 'GT'}


@dataclass
class ExperimentConfig:
    """一次实验的完整配置(骨干 + 模型 + 训练)"""

    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        """跨模型一致性校验"""
        if self.backbone.input_size != self.train.input_size:
            raise ConfigError(
                f"input_size 不一致: backbone={self.backbone.input_size}, "
                f"train={self.train.input_size}"
            )
        for level in (1, 2):
            width = self.backbone.channels[level - 1]
            if self.model.use_afi and width % 2 != 0:
                raise ConfigError(f"第{level}级通道数({width})必须为偶数以便 AFI 对半分支")

    def to_dict(self) -> dict:
        """转换为字典"""
        return {
            'backbone': self.backbone.to_dict(),
            'model': self.model.to_dict(),
            'train': self.train.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'ExperimentConfig':
        """从字典创建"""
        try:
            return cls(
                backbone=BackboneConfig(**data.get('backbone', {})),
                model=ModelConfig(**data.get('model', {})),
                train=TrainConfig(**data.get('train', {})),
            )
        except PydanticValidationError as e:
            raise ConfigError(f"配置字典无效: {e}") from e


class ConfigManager:
    """key=value 配置文件管理器"""

    SECTIONS = {
        'backbone': BackboneConfig,
        'model': ModelConfig,
        'train': TrainConfig,
    }

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    @staticmethod
    def parse_text(text: str, source: str = "<text>") -> Dict[str, str]:
        """
        解析 key=value 文本

        Args:
            text: 配置文本, 支持 # 注释与空行
            source: 来源名称(用于报错)

        Returns:
            键值字典
        """
        entries: Dict[str, str] = {}
        for line_number, raw in enumerate(text.splitlines(), 1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigError(f"{source}:{line_number} 格式错误, 应为 key=value: {raw!r}")
            key, value = (part.strip() for part in line.split('=', 1))
            if not key:
                raise ConfigError(f"{source}:{line_number} 缺少键名")
            if key in entries:
                raise ConfigError(f"{source}:{line_number} 重复的键: {key}")
            entries[key] = value
        return entries

    def read_file(self, path: Union[str, Path]) -> Dict[str, str]:
        """读取配置文件"""
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"配置文件不存在: {path}")
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigError(f"无法读取配置文件 {path}: {e}") from e
        return self.parse_text(text, source=str(path))

    def experiment_from_mapping(self, entries: Dict[str, str]) -> ExperimentConfig:
        """
        把扁平键值分派到各配置模型

        Args:
            entries: 键值字典

        Returns:
            实验配置
        """
        entries = dict(entries)
        profile = entries.get('profile', 'desk').strip().lower()
        if profile not in ('desk', 'full'):
            raise ConfigError(f"未知的 profile: {profile} (支持: desk, full)")

        known = set()
        for model_cls in self.SECTIONS.values():
            known.update(model_cls.__fields__.keys())
        unknown = sorted(set(entries) - known)
        if unknown:
            raise ConfigError(f"未知的配置键: {', '.join(unknown)}")

        merged: Dict[str, object] = {}
        if profile == 'full':
            merged.update(FULL_PROFILE)
        merged.update(entries)

        sections = {}
        for name, model_cls in self.SECTIONS.items():
            fields = model_cls.__fields__.keys()
            values = {key: value for key, value in merged.items() if key in fields}
            try:
                sections[name] = model_cls(**values)
            except PydanticValidationError as e:
                raise ConfigError(f"[{name}] 配置无效: {e}") from e

        self.logger.debug(f"配置已解析: profile={profile}, 键数={len(entries)}")
        return ExperimentConfig(**sections)

    def load_experiment(self, path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
        """加载实验配置, path 为 None 时返回桌面规模默认值"""
        if path is None:
            return ExperimentConfig()
        return self.experiment_from_mapping(self.read_file(path))

    def load_synthetic_spec(self, path: Union[str, Path]) -> SyntheticSpec:
        """加载合成数据规格"""
        entries = self.read_file(path)
        unknown = sorted(set(entries) - set(SyntheticSpec.__fields__.keys()))
        if unknown:
            raise ConfigError(f"未知的合成数据配置键: {', '.join(unknown)}")
        try:
            return SyntheticSpec(**entries)
        except PydanticValidationError as e:
            raise ConfigError(f"合成数据配置无效: {e}") from e

    @staticmethod
    def render(config: ExperimentConfig) -> str:
        """把实验配置写回 key=value 文本"""
        lines = [f"# {AppConfig.APP_NAME} experiment config"]
        written = set()
        for section in ('backbone', 'model', 'train'):
            lines.append(f"# [{section}]")
            for key, value in getattr(config, section).to_dict().items():
                if key in written:
                    continue
                written.add(key)
                lines.append(f"{key} = {_format_value(value)}")
        return "\n".join(lines) + "\n"

    def save_experiment(self, config: ExperimentConfig, path: Union[str, Path]) -> None:
        """保存实验配置"""
        try:
            Path(path).write_text(self.render(config), encoding='utf-8')
        except OSError as e:
            raise ConfigError(f"无法写入配置文件 {path}: {e}") from e
        self.logger.info(f"配置已保存: {path}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (list, tuple)):
        return ','.join(str(item) for item in value)
    return str(value)


def known_config_keys() -> Iterable[str]:
    """全部可寻址的配置键"""
    keys = set()
    for model_cls in ConfigManager.SECTIONS.values():
        keys.update(model_cls.__fields__.keys())
    return sorted(keys)
