# -*- coding: utf-8 -*-
"""
异常定义
CLI 根据 exit_code 决定进程退出码: 校验类错误为 1, 运行期错误为 2
"""


class CaaiError(Exception):
    """所有 CAAI-Net 异常的基类"""

    exit_code = 2


class ValidationError(CaaiError):
    """输入/配置校验失败"""

    exit_code = 1


class ConfigError(ValidationError):
    """配置文件或参数非法"""


class DatasetError(ValidationError):
    """数据集目录、文件缺失或无法解码"""


class UsageError(ValidationError):
    """命令行用法错误"""


class ShapeError(CaaiError, ValueError):
    """张量形状不匹配"""


class InitError(CaaiError, ValueError):
    """未知的参数初始化方案"""


class TapeError(CaaiError):
    """反向传播调用非法(损失非标量或不在计算带上)"""


class NonFiniteError(CaaiError):
    """前向计算出现 NaN/Inf"""

    def __init__(self, op_name: str, message: str = ""):
        self.op_name = op_name
        super().__init__(message or f"算子 {op_name} 输出了非有限值 (NaN/Inf)")


class MissingGradientError(CaaiError):
    """优化器更新时参数没有梯度"""


class TrainingError(CaaiError):
    """训练过程失败"""


class CheckpointError(CaaiError):
    """检查点读写失败"""


class EmptyGroundTruthError(CaaiError):
    """真值图没有前景像素, F-measure 无定义"""
