# -*- coding: utf-8 -*-
"""
显著性评估指标服务
S-measure、MAE、最大 F-measure、最大 E-measure 的逐图计算与数据集汇总
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import EmptyGroundTruthError, ShapeError
from ..models.config import AppConfig
from ..models.saliency_map import SaliencyMap

METRIC_FIELDS = ('s_measure', 'mae', 'max_f', 'max_e')
TABLE_HEADERS = {'s_measure': 'S_α↑', 'mae': 'MAE↓', 'max_e': 'maxE↑', 'max_f': 'maxF↑'}
FLAG_EMPTY_GT = "empty_gt"


@dataclass
class EvalPair:
    """预测图与二值真值图"""
    pred: np.ndarray
    gt: np.ndarray
    stem: str = ""

    def __post_init__(self):
        self.pred = np.asarray(self.pred, dtype=np.float64)
        self.gt = np.asarray(self.gt, dtype=np.float64)
        if self.pred.shape != self.gt.shape or self.pred.ndim != 2:
            raise ShapeError(f"{self.stem}: 预测图 {self.pred.shape} 与真值图 {self.gt.shape} 形状不一致")
        if not np.all((self.gt == 0) | (self.gt == 1)):
            raise ShapeError(f"{self.stem}: 真值图必须为 0/1 二值图")

    @classmethod
    def from_maps(cls, pred: SaliencyMap, gt: SaliencyMap) -> 'EvalPair':
        return cls(pred.values, gt.binarized().values, stem=pred.stem)


@dataclass
class ImageMetrics:
    """单张图像的指标"""
    stem: str
    s_measure: float
    mae: float
    max_f: Optional[float]
    max_e: float
    flags: List[str] = field(default_factory=list)

    def value(self, name: str) -> Optional[float]:
        return getattr(self, name)


def _fmt(value: Optional[float]) -> str:
    if value is None or np.isnan(value):
        return "nan"
    return repr(round(float(value), 10))


@dataclass
class MetricReport:
    """逐图指标与数据集均值"""
    rows: List[ImageMetrics]

    @property
    def skipped(self) -> List[str]:
        return [row.stem for row in self.rows if row.flags]

    def mean(self) -> Dict[str, float]:
        """各指标的算术平均, 被跳过的值不计入"""
        means = {}
        for name in METRIC_FIELDS:
            values = [row.value(name) for row in self.rows if row.value(name) is not None]
            means[name] = float(np.mean(values)) if values else float('nan')
        return means

    def csv_rows(self) -> List[List[str]]:
        rows = [['stem', *METRIC_FIELDS]]
        for row in self.rows:
            rows.append([row.stem, *(_fmt(row.value(name)) for name in METRIC_FIELDS)])
        means = self.mean()
        rows.append(['MEAN', *(_fmt(means[name]) for name in METRIC_FIELDS)])
        return rows

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, 'w', newline='', encoding='utf-8') as f:
            csv.writer(f).writerows(self.csv_rows())

    def to_table(self) -> str:
        """对齐的文本表格, 列顺序 S_α、MAE、maxE、maxF"""
        order = ('s_measure', 'mae', 'max_e', 'max_f')
        header = ['stem', *(TABLE_HEADERS[name] for name in order)]
        body = [
            [row.stem, *(_table_value(row.value(name)) for name in order)] for row in self.rows
        ]
        means = self.mean()
        body.append(['MEAN', *(_table_value(means[name]) for name in order)])
        widths = [max(len(line[i]) for line in [header, *body]) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)).rstrip()
                 for line in [header, *body]]
        return "\n".join(lines)


def _table_value(value: Optional[float]) -> str:
    if value is None or np.isnan(value):
        return "-"
    return f"{value:.4f}"


class MetricsService:
    """四项显著性指标"""

    def __init__(self, config: Optional[AppConfig] = None):
        self.config = config or AppConfig()
        self.logger = logging.getLogger(__name__)
        count = self.config.THRESHOLD_COUNT
        self.thresholds = np.arange(1, count + 1) / (count + 1)

    # ---------------- MAE ----------------
    @staticmethod
    def mae(pair: EvalPair) -> float:
        return float(np.mean(np.abs(pair.pred - pair.gt)))

    # ------------- 阈值扫描 -------------
    def _threshold_counts(self, pair: EvalPair) -> Tuple[np.ndarray, np.ndarray]:
        """
        每个阈值 k/256 下预测为正的像素数与其中真正例数

        pred >= k/256 等价于 floor(pred*256) >= k, 用直方图累加一次得到全部阈值
        """
        levels = self.config.THRESHOLD_COUNT + 1
        bins = np.clip(np.floor(pair.pred * levels), 0, levels).astype(np.int64).ravel()
        fg = pair.gt.ravel() > 0.5
        all_hist = np.bincount(bins, minlength=levels + 1)
        fg_hist = np.bincount(bins[fg], minlength=levels + 1)
        # 从高到低累加: at_least[k] = #{bin >= k}
        predicted = np.cumsum(all_hist[::-1])[::-1][1:levels]
        true_pos = np.cumsum(fg_hist[::-1])[::-1][1:levels]
        return predicted.astype(np.float64), true_pos.astype(np.float64)

    def f_measure_curve(self, pair: EvalPair) -> np.ndarray:
        """
        255 个阈值下的 F-measure

        Raises:
            EmptyGroundTruthError: 真值图没有前景
        """
        positives = float(pair.gt.sum())
        if positives == 0:
            raise EmptyGroundTruthError(f"{pair.stem}: 真值图没有前景像素")
        beta2 = self.config.F_BETA2
        predicted, true_pos = self._threshold_counts(pair)
        precision = np.divide(true_pos, predicted, out=np.zeros_like(true_pos), where=predicted > 0)
        recall = true_pos / positives
        numerator = (1 + beta2) * precision * recall
        denominator = beta2 * precision + recall
        return np.divide(numerator, denominator, out=np.zeros_like(numerator), where=denominator > 0)

    def max_f(self, pair: EvalPair) -> float:
        return float(self.f_measure_curve(pair).max())

    def enhanced_alignment(self, binary: np.ndarray, gt: np.ndarray) -> float:
        """单个二值预测图的 E-measure"""
        binary = np.asarray(binary, dtype=np.float64)
        gt = np.asarray(gt, dtype=np.float64)
        g = gt.mean()
        if g == 0:
            return float(np.mean(1.0 - binary))
        if g == 1:
            return float(np.mean(binary))
        phi_b = binary - binary.mean()
        phi_g = gt - g
        align = 2.0 * phi_g * phi_b / (phi_g ** 2 + phi_b ** 2 + self.config.E_EPSILON)
        return float(np.mean((1.0 + align) ** 2 / 4.0))

    def e_measure_curve(self, pair: EvalPair) -> np.ndarray:
        """
        255 个阈值下的 E-measure

        二值图只有四种 (B, G) 组合, 每个阈值按组合计数加权即可
        """
        total = float(pair.gt.size)
        positives = float(pair.gt.sum())
        predicted, true_pos = self._threshold_counts(pair)
        b = predicted / total
        if positives == 0:
            return 1.0 - b
        if positives == total:
            return b

        g = positives / total
        counts = {
            (1, 1): true_pos,
            (1, 0): predicted - true_pos,
            (0, 1): positives - true_pos,
            (0, 0): total - predicted - positives + true_pos,
        }
        eps = self.config.E_EPSILON
        score = np.zeros_like(b)
        for (b_value, g_value), count in counts.items():
            phi_b = b_value - b
            phi_g = g_value - g
            align = 2.0 * phi_g * phi_b / (phi_g ** 2 + phi_b ** 2 + eps)
            score += count * (1.0 + align) ** 2 / 4.0
        return score / total

    def max_e(self, pair: EvalPair) -> float:
        return float(self.e_measure_curve(pair).max())

    # ------------- S-measure -------------
    def _object_score(self, values: np.ndarray) -> float:
        if values.size == 0:
            return 0.0
        mean = values.mean()
        sigma = values.std()
        return float(2.0 * mean / (mean * mean + 1.0 + 2.0 * self.config.S_LAMBDA * sigma))

    def s_object(self, pair: EvalPair) -> float:
        fg = pair.gt > 0.5
        mu = fg.mean()
        o_fg = self._object_score(pair.pred[fg])
        o_bg = self._object_score(1.0 - pair.pred[~fg])
        return float(mu * o_fg + (1.0 - mu) * o_bg)

    def _ssim(self, pred: np.ndarray, gt: np.ndarray) -> float:
        c1, c2 = self.config.SSIM_C1, self.config.SSIM_C2
        x, y = pred.mean(), gt.mean()
        sigma_x = ((pred - x) ** 2).mean()
        sigma_y = ((gt - y) ** 2).mean()
        sigma_xy = ((pred - x) * (gt - y)).mean()
        numerator = (2 * x * y + c1) * (2 * sigma_xy + c2)
        denominator = (x * x + y * y + c1) * (sigma_x + sigma_y + c2)
        return float(numerator / denominator)

    @staticmethod
    def centroid(gt: np.ndarray) -> Tuple[int, int]:
        """前景质心的分割位置 (列, 行), 取整后加一"""
        h, w = gt.shape
        points = np.argwhere(gt > 0.5)
        if points.size == 0:
            return int(np.round(w / 2)) + 1, int(np.round(h / 2)) + 1
        row, col = points.mean(axis=0).round()
        return int(col) + 1, int(row) + 1

    def s_region(self, pair: EvalPair) -> float:
        h, w = pair.gt.shape
        x, y = self.centroid(pair.gt)
        total = float(h * w)
        score = 0.0
        for rows in (slice(0, y), slice(y, h)):
            for cols in (slice(0, x), slice(x, w)):
                block_pred = pair.pred[rows, cols]
                if block_pred.size == 0:
                    continue
                weight = block_pred.size / total
                score += weight * self._ssim(block_pred, pair.gt[rows, cols])
        return score

    def s_measure(self, pair: EvalPair) -> float:
        mu = pair.gt.mean()
        if mu == 0:
            return float(1.0 - pair.pred.mean())
        if mu == 1:
            return float(pair.pred.mean())
        alpha = self.config.S_ALPHA
        score = (1.0 - alpha) * self.s_object(pair) + alpha * self.s_region(pair)
        return max(float(score), 0.0)

    # ------------- 汇总 -------------
    def evaluate_pair(self, pair: EvalPair) -> ImageMetrics:
        flags = []
        try:
            max_f: Optional[float] = self.max_f(pair)
        except EmptyGroundTruthError:
            self.logger.warning(f"{pair.stem}: 真值图为空, maxF 跳过")
            max_f = None
            flags.append(FLAG_EMPTY_GT)
        return ImageMetrics(
            stem=pair.stem,
            s_measure=self.s_measure(pair),
            mae=self.mae(pair),
            max_f=max_f,
            max_e=self.max_e(pair),
            flags=flags,
        )

    def build_report(self, metrics: Sequence[ImageMetrics]) -> MetricReport:
        """按文件名排序生成报告"""
        return MetricReport(rows=sorted(metrics, key=lambda row: row.stem))
