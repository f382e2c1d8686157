# -*- coding: utf-8 -*-
"""
网络与训练参数数据模型
使用pydantic进行参数验证
"""

from typing import List, Literal

from pydantic import BaseModel, Field, validator


def _split_list(v):
    """配置文件中的列表写作逗号分隔字符串"""
    if isinstance(v, str):
        return [item.strip() for item in v.split(',') if item.strip()]
    return v


class BackboneConfig(BaseModel):
    """双流 VGG 风格骨干网络参数"""

    channels: List[int] = Field(default=[8, 16, 32, 64, 64], description="五个卷积块的输出通道数")
    convs_per_block: List[int] = Field(default=[2, 2, 2, 2, 2], description="每个卷积块的卷积层数")
    input_size: int = Field(default=64, ge=16, le=4096, description="输入边长")
    rgb_channels: int = Field(default=3, ge=1, le=4, description="RGB 流输入通道")
    depth_channels: int = Field(default=1, ge=1, le=3, description="深度流输入通道")

    @validator('channels', 'convs_per_block', pre=True)
    def split_lists(cls, v):
        """逗号分隔字符串转列表"""
        return _split_list(v)

    @validator('channels')
    def channels_must_have_five_levels(cls, v):
        """验证通道表恰好五级且为正"""
        if len(v) != 5:
            raise ValueError(f'channels 必须有5项(当前{len(v)}项)')
        if any(c <= 0 for c in v):
            raise ValueError(f'channels 必须全部为正数: {v}')
        return v

    @validator('convs_per_block')
    def convs_must_have_five_blocks(cls, v):
        """验证每块卷积数"""
        if len(v) != 5:
            raise ValueError(f'convs_per_block 必须有5项(当前{len(v)}项)')
        if any(c <= 0 for c in v):
            raise ValueError(f'convs_per_block 必须全部为正数: {v}')
        return v

    @validator('input_size')
    def input_size_divisible_by_16(cls, v):
        """四次池化后仍需整数尺寸"""
        if v % 16 != 0:
            raise ValueError(f'input_size({v})必须能被16整除')
        return v

    def level_size(self, level: int) -> int:
        """第 level 级(1-5)特征的空间边长"""
        return self.input_size // (2 ** (level - 1))

    def to_dict(self) -> dict:
        """转换为字典"""
        return self.dict()

    class Config:
        """Pydantic配置"""
        validate_assignment = True
        extra = 'forbid'


class ModelConfig(BaseModel):
    """CCA / AFI / 预测头参数及消融开关"""

    common_channels: int = Field(default=32, ge=2, le=1024, description="CCA 公共通道数")
    fuse_channels: int = Field(default=32, ge=1, le=1024, description="残差单元输出通道数")
    ca_ratio: int = Field(default=4, ge=1, le=64, description="通道注意力瓶颈比")
    sa_kernel: int = Field(default=5, description="空间注意力卷积核")
    precision: Literal['float32', 'float64'] = Field(default='float32', description="浮点精度")

    use_feature_interaction: bool = True
    use_complementary_attention: bool = True
    use_global_context: bool = True
    use_afi: bool = True

    @validator('sa_kernel')
    def sa_kernel_supported(cls, v):
        """只支持 1/3/5 的卷积核"""
        if v not in (1, 3, 5):
            raise ValueError(f'sa_kernel({v})必须为1、3或5')
        return v

    @validator('common_channels')
    def common_channels_even(cls, v):
        """AFI 的两个分支各占一半通道"""
        if v % 2 != 0:
            raise ValueError(f'common_channels({v})必须为偶数')
        return v

    @validator('ca_ratio')
    def ratio_within_channels(cls, v, values):
        """瓶颈宽度 common_channels // ca_ratio 至少为 1"""
        channels = values.get('common_channels')
        if channels is not None and channels < v:
            raise ValueError(f'common_channels({channels})不能小于 ca_ratio({v})')
        return v

    def variant_name(self) -> str:
        """消融实验标签"""
        cca_parts = [
            ('a', self.use_feature_interaction),
            ('b', self.use_complementary_attention),
            ('c', self.use_global_context),
        ]
        enabled = [tag for tag, on in cca_parts if on]
        if len(enabled) == 3:
            label = "B+CCA"
        elif enabled:
            label = "B+" + "+".join(f"({tag})" for tag in enabled)
        else:
            label = "B"
        if self.use_afi:
            label += "+AFI"
        return label

    def to_dict(self) -> dict:
        """转换为字典"""
        return self.dict()

    class Config:
        """Pydantic配置"""
        validate_assignment = True
        extra = 'forbid'


class TrainConfig(BaseModel):
    """训练参数(默认值为桌面规模)"""

    input_size: int = Field(default=64, ge=16, le=4096, description="输入边长")
    batch_size: int = Field(default=2, ge=1, le=256, description="批大小")
    lr: float = Field(default=1e-3, gt=0, description="学习率")
    momentum: float = Field(default=0.9, ge=0, lt=1, description="动量")
    weight_decay: float = Field(default=0.0005, ge=0, description="权重衰减")
    epochs: int = Field(default=300, ge=1, le=100000, description="训练轮数")
    seed: int = Field(default=0, ge=0, description="随机种子")
    profile: Literal['desk', 'full'] = Field(default='desk', description="预设规模")

    def to_dict(self) -> dict:
        """转换为字典"""
        return self.dict()

    class Config:
        """Pydantic配置"""
        validate_assignment = True
        extra = 'forbid'


class SyntheticSpec(BaseModel):
    """合成 RGB-D 数据生成参数"""

    canvas_size: int = Field(default=64, ge=8, le=4096, description="画布边长")
    num_shapes: int = Field(default=3, ge=1, le=32, description="形状总数(1个显著 + 干扰)")
    shape_kinds: List[Literal['rectangle', 'ellipse']] = Field(default=['rectangle', 'ellipse'])
    salient_depth: float = Field(default=0.25, ge=0, le=1, description="显著物体深度(越小越近)")
    background_depth: float = Field(default=0.75, ge=0, le=1, description="背景深度")
    depth_noise_sigma: float = Field(default=0.02, ge=0, le=1, description="深度高斯噪声")
    texture_amplitude: float = Field(default=0.1, ge=0, le=1, description="背景纹理幅度")

    @validator('shape_kinds', pre=True)
    def split_kinds(cls, v):
        """逗号分隔字符串转列表"""
        return _split_list(v)

    @validator('shape_kinds')
    def kinds_not_empty(cls, v):
        """至少一种形状"""
        if not v:
            raise ValueError('shape_kinds 不能为空')
        return v

    @validator('background_depth')
    def salient_must_be_nearer(cls, v, values):
        """显著物体必须比背景更近"""
        if 'salient_depth' in values and values['salient_depth'] >= v:
            raise ValueError(
                f'salient_depth({values["salient_depth"]})必须小于 background_depth({v})'
            )
        return v

    def to_dict(self) -> dict:
        """转换为字典"""
        return self.dict()

    class Config:
        """Pydantic配置"""
        validate_assignment = True
        extra = 'forbid'


# 与原始训练设置一致的预设, 显式配置键会覆盖这些值
FULL_PROFILE = {
    'channels': [64, 128, 256, 512, 512],
    'convs_per_block': [2, 2, 4, 4, 4],
    'input_size': 256,
    'batch_size': 2,
    'lr': 1e-10,
    'momentum': 0.99,
    'weight_decay': 0.0005,
    'epochs': 61,
}
