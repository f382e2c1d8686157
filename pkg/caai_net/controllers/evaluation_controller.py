# -*- coding: utf-8 -*-
"""
评估与推理控制器
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from ..core.functional import bilinear_resize_array
from ..exceptions import DatasetError
from ..models.config import AppConfig
from ..models.saliency_map import SaliencyMap
from ..network.model import CAAINet, build_model
from ..services.checkpoint_service import CheckpointService
from ..services.dataset_service import RgbdDataset, read_image, write_gray_png
from ..services.metrics_service import EvalPair, ImageMetrics, MetricReport, MetricsService
from ..utils.resource_utils import get_thread_limit


def _list_images(folder: Path) -> dict:
    if not folder.is_dir():
        raise DatasetError(f"目录不存在: {folder}")
    suffixes = set(AppConfig().IMAGE_SUFFIXES)
    return {p.stem: p for p in sorted(folder.iterdir()) if p.is_file() and p.suffix.lower() in suffixes}


class EvaluationController:
    """预测图评估与模型推理"""

    def __init__(self, metrics: Optional[MetricsService] = None):
        self.logger = logging.getLogger(__name__)
        self.metrics = metrics or MetricsService()
        self.checkpoints = CheckpointService()

    def load_pair(self, stem: str, pred_path: Path, gt_path: Path) -> EvalPair:
        """读取一对预测/真值图, 尺寸不同时把预测图双线性缩放到真值尺寸"""
        pred = read_image(pred_path, 'L').astype(np.float64) / 255.0
        gt = read_image(gt_path, 'L').astype(np.float64) / 255.0
        if pred.shape != gt.shape:
            self.logger.warning(f"{stem}: 预测图尺寸 {pred.shape} 与真值 {gt.shape} 不同, 已缩放")
            pred = np.clip(bilinear_resize_array(pred, gt.shape[0], gt.shape[1]), 0.0, 1.0)
        return EvalPair(pred, (gt > 0.5).astype(np.float64), stem=stem)

    def evaluate_dataset(self, pred_dir: Union[str, Path], gt_dir: Union[str, Path]) -> MetricReport:
        """
        按文件名配对评估整个目录

        Args:
            pred_dir: 预测图目录
            gt_dir: 真值图目录

        Returns:
            按文件名排序的指标报告

        Raises:
            DatasetError: 目录为空或缺少对应文件
        """
        preds = _list_images(Path(pred_dir))
        gts = _list_images(Path(gt_dir))
        missing_gt = sorted(set(preds) - set(gts))
        if missing_gt:
            raise DatasetError(f"预测图 {preds[missing_gt[0]]} 在 {gt_dir} 中没有对应的真值图")
        missing_pred = sorted(set(gts) - set(preds))
        if missing_pred:
            raise DatasetError(f"真值图 {gts[missing_pred[0]]} 在 {pred_dir} 中没有对应的预测图")
        if not preds:
            raise DatasetError(f"预测目录为空: {pred_dir}")

        def job(stem: str) -> ImageMetrics:
            return self.metrics.evaluate_pair(self.load_pair(stem, preds[stem], gts[stem]))

        stems = sorted(preds)
        with ThreadPoolExecutor(max_workers=get_thread_limit()) as pool:
            rows = list(pool.map(job, stems))
        report = self.metrics.build_report(rows)
        if report.skipped:
            self.logger.warning(f"真值为空的图像(maxF 未计入): {', '.join(report.skipped)}")
        self.logger.info(f"评估完成: {len(rows)} 张图像")
        return report

    def evaluate_maps(self, preds: List[SaliencyMap], gts: List[SaliencyMap]) -> MetricReport:
        """内存中的显著图评估"""
        gt_by_stem = {gt.stem: gt for gt in gts}
        rows = []
        for pred in preds:
            if pred.stem not in gt_by_stem:
                raise DatasetError(f"显著图 {pred.stem} 没有对应的真值")
            rows.append(self.metrics.evaluate_pair(EvalPair.from_maps(pred, gt_by_stem[pred.stem])))
        return self.metrics.build_report(rows)

    def load_model(self, checkpoint_path: Union[str, Path]) -> CAAINet:
        """从检查点恢复模型, 精度与保存时一致"""
        checkpoint = self.checkpoints.load(checkpoint_path)
        dtypes = {array.dtype for array in checkpoint.params.values()}
        model = build_model(checkpoint.config, dtype=dtypes.pop() if len(dtypes) == 1 else None)
        model.parameters().load_state(checkpoint.params)
        self.logger.info(f"已载入模型: {checkpoint_path} ({checkpoint.config.model.variant_name()}, "
                         f"epoch {checkpoint.epoch})")
        return model

    def predict_dataset(self, model: CAAINet, dataset: RgbdDataset,
                        batch_size: int = 1) -> List[SaliencyMap]:
        """逐批推理, 结果缩放回 RGB 原始尺寸"""
        maps = []
        originals = {sample.stem: sample.original_size for sample in dataset}
        for batch in dataset.batches(batch_size, shuffle=False):
            for saliency in model.predict(batch.rgb, batch.depth, batch.stems):
                h, w = originals[saliency.stem]
                values = np.clip(bilinear_resize_array(saliency.values, h, w), 0.0, 1.0)
                maps.append(SaliencyMap(saliency.stem, values))
        return maps

    def infer(self, model: CAAINet, data_dir: Union[str, Path],
              out_dir: Union[str, Path], batch_size: int = 1) -> List[Path]:
        """
        对数据目录推理并写出 8 位 PNG 显著图

        Returns:
            写出的文件路径
        """
        dataset = RgbdDataset(
            data_dir, model.input_size, with_gt=False,
            depth_channels=model.backbone_config.depth_channels,
        )
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise DatasetError(f"无法创建输出目录 {out}: {e}") from e

        written = []
        for saliency in self.predict_dataset(model, dataset, batch_size):
            path = out / f"{saliency.stem}.png"
            write_gray_png(path, saliency.to_uint8(stretch=True) / 255.0, bits=8)
            written.append(path)
        self.logger.info(f"推理完成: {len(written)} 张显著图写入 {out}")
        return written
