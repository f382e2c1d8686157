# -*- coding: utf-8 -*-
"""
训练业务控制器
逐轮执行 前向 -> BCE 损失 -> 反向 -> 动量 SGD 更新, 每轮写检查点
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np

from ..core.functional import binary_cross_entropy
from ..core.optim import SGD
from ..core.tensor import backward, reset_tape, set_debug_checks
from ..exceptions import CheckpointError, NonFiniteError, TrainingError
from ..models.config import AppConfig, ExperimentConfig
from ..network.model import CAAINet, build_model
from ..services.checkpoint_service import Checkpoint, CheckpointService
from ..services.dataset_service import Batch, RgbdDataset


class TaskState(Enum):
    """任务状态枚举"""
    IDLE = "idle"  # 空闲
    RUNNING = "running"  # 运行中
    COMPLETED = "completed"  # 已完成
    ERROR = "error"  # 错误


@dataclass
class TrainingStats:
    """训练统计信息"""
    total_epochs: int = 0
    epoch: int = 0
    steps: int = 0
    last_loss: Optional[float] = None

    @property
    def remaining(self) -> int:
        return self.total_epochs - self.epoch

    @property
    def progress_percent(self) -> int:
        if self.total_epochs == 0:
            return 0
        return int((self.epoch / self.total_epochs) * 100)


@dataclass
class TrainingResult:
    """训练结果"""
    model: CAAINet
    loss_history: List[float] = field(default_factory=list)
    checkpoint_path: Optional[Path] = None
    stats: TrainingStats = field(default_factory=TrainingStats)


class TrainingController:
    """
    训练控制器

    Args:
        config: 实验配置
        progress_callback: 每轮结束时接收进度文案, 可为 None
    """

    def __init__(self, config: ExperimentConfig,
                 progress_callback: Optional[Callable[[str], None]] = None):
        self.logger = logging.getLogger(__name__)
        self.config = config
        self.app_config = AppConfig()
        self.checkpoints = CheckpointService()
        self.progress_callback = progress_callback
        self.task_state = TaskState.IDLE
        self.stats = TrainingStats(total_epochs=config.train.epochs)

    def _set_state(self, state: TaskState) -> None:
        self.logger.debug(f"任务状态变更: {self.task_state.value} -> {state.value}")
        self.task_state = state

    def build_optimizer(self, model: CAAINet) -> SGD:
        train = self.config.train
        return SGD(model.parameters().items(), lr=train.lr, momentum=train.momentum,
                   weight_decay=train.weight_decay)

    def batch_loss(self, model: CAAINet, batch: Batch):
        pred = model(batch.rgb, batch.depth)
        return binary_cross_entropy(pred, batch.gt, eps=self.app_config.BCE_EPSILON)

    def diagnose_non_finite(self, model: CAAINet, batch: Batch) -> TrainingError:
        """先检查参数本身, 再打开 NaN/Inf 检查重跑一次前向, 找出第一个产生非有限值的算子"""
        reset_tape()
        broken = [name for name, param in model.parameters().items()
                  if not np.all(np.isfinite(param.data))]
        if broken:
            return TrainingError(
                f"损失出现非有限值, 参数已含 NaN/Inf: {', '.join(broken[:5])} (共 {len(broken)} 个)"
            )
        previous = set_debug_checks(True)
        try:
            self.batch_loss(model, batch)
        except NonFiniteError as e:
            return TrainingError(f"损失出现非有限值, 起因算子: {e.op_name} (样本: {', '.join(batch.stems)})")
        finally:
            set_debug_checks(previous)
            reset_tape()
        return TrainingError(f"损失出现非有限值, 输入数据可能含 NaN/Inf (样本: {', '.join(batch.stems)})")

    def train_step(self, model: CAAINet, optimizer: SGD, batch: Batch) -> float:
        """
        单步训练

        Returns:
            本批损失

        Raises:
            TrainingError: 损失非有限
        """
        optimizer.zero_grad()
        loss = self.batch_loss(model, batch)
        value = loss.item()
        if not np.isfinite(value):
            raise self.diagnose_non_finite(model, batch)
        backward(loss)
        optimizer.step()
        self.stats.steps += 1
        return value

    def _resume(self, model: CAAINet, optimizer: SGD, path: Union[str, Path]) -> Checkpoint:
        checkpoint = self.checkpoints.load(path)
        saved, current = checkpoint.config.to_dict(), self.config.to_dict()
        saved['train'].pop('epochs', None)
        current['train'].pop('epochs', None)
        if saved != current:
            raise CheckpointError(f"检查点 {path} 的配置与当前配置不一致, 无法续训")
        model.parameters().load_state(checkpoint.params)
        optimizer.load_state_dict(checkpoint.velocities)
        self.logger.info(f"从检查点续训: {path} (已完成 {checkpoint.epoch} 轮)")
        return checkpoint

    def _report(self, message: str) -> None:
        self.logger.info(message)
        if self.progress_callback:
            self.progress_callback(message)

    def train(
        self,
        dataset: RgbdDataset,
        checkpoint_path: Optional[Union[str, Path]] = None,
        resume_from: Optional[Union[str, Path]] = None
    ) -> TrainingResult:
        """
        训练模型

        Args:
            dataset: 带真值的训练集
            checkpoint_path: 每轮写入的检查点路径, None 表示不保存
            resume_from: 续训的检查点路径

        Returns:
            训练结果

        Raises:
            TrainingError: 数据集为空或损失非有限
            CheckpointError: 检查点读写失败
        """
        if len(dataset) == 0:
            raise TrainingError("训练集为空")
        if not dataset.with_gt:
            raise TrainingError("训练集缺少真值")

        train = self.config.train
        self._set_state(TaskState.RUNNING)
        model = build_model(self.config)
        optimizer = self.build_optimizer(model)
        history: List[float] = []
        start_epoch = 0
        if resume_from is not None:
            checkpoint = self._resume(model, optimizer, resume_from)
            history = list(checkpoint.loss_history)
            start_epoch = checkpoint.epoch

        self.logger.info(
            f"开始训练: {self.config.model.variant_name()}, 样本 {len(dataset)}, "
            f"轮数 {train.epochs}, 参数量 {model.parameters().count()}"
        )
        self.stats = TrainingStats(total_epochs=train.epochs, epoch=start_epoch)
        try:
            for epoch in range(start_epoch, train.epochs):
                started = time.perf_counter()
                losses = [
                    self.train_step(model, optimizer, batch)
                    for batch in dataset.batches(train.batch_size, seed=train.seed, epoch=epoch)
                ]
                mean_loss = float(np.mean(losses))
                history.append(mean_loss)
                self.stats.epoch = epoch + 1
                self.stats.last_loss = mean_loss
                self._report(
                    f"第 {epoch + 1}/{train.epochs} 轮: 平均损失 {mean_loss:.6f} "
                    f"({time.perf_counter() - started:.1f}s)"
                )
                if checkpoint_path is not None:
                    self.checkpoints.save(Checkpoint(
                        config=self.config,
                        seed=train.seed,
                        epoch=epoch + 1,
                        params=model.parameters().state(),
                        velocities=optimizer.state_dict(),
                        loss_history=history,
                    ), checkpoint_path)
        except Exception:
            self._set_state(TaskState.ERROR)
            self.logger.error("训练失败", exc_info=True)
            raise

        self._set_state(TaskState.COMPLETED)
        return TrainingResult(
            model=model,
            loss_history=history,
            checkpoint_path=Path(checkpoint_path) if checkpoint_path is not None else None,
            stats=self.stats,
        )
