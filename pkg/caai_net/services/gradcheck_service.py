# -*- coding: utf-8 -*-
"""
有限差分梯度检查服务
以 L = sum(out ⊙ W)(W 为固定随机权重)为标量损失, 比较反向传播梯度
与步长 h 的中心差分, 越过非光滑点(ReLU、最大值等分支切换)的坐标跳过
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.functional import (
    Conv2dParams, binary_cross_entropy, channel_max, channel_mean, conv2d,
    global_avg_pool, max_pool2d, resample, resample_like,
)
from ..core.tensor import Tensor, backward, concat, no_grad, prelu, record_kinks, relu, reverse_op, sigmoid
from ..models.config import AppConfig
from ..models.train_params import BackboneConfig, ModelConfig
from ..network.afi import AFIModule
from ..network.backbone import VGGStream
from ..network.cca import CCAModule
from ..network.model import CAAINet
from ..network.module import BuildContext

SUITE_MODULES = ('tensor-core', 'nn-ops', 'backbone', 'cca', 'afi', 'model')


@dataclass
class GradCheckResult:
    """单个检查的结果"""
    name: str
    max_rel_error: float
    checked: int
    skipped: int
    worst: str = ""
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error < self.tolerance


class GradientChecker:
    """
    中心差分梯度检查器

    Args:
        step: 差分步长
        tolerance: 相对误差阈值
        floor: 相对误差分母下限, 梯度量级低于它的坐标改用绝对误差 tolerance * floor 判定
        coords_per_tensor: 每个张量抽查的坐标数
    """

    def __init__(
        self,
        step: Optional[float] = None,
        tolerance: Optional[float] = None,
        floor: Optional[float] = None,
        coords_per_tensor: int = 3
    ):
        config = AppConfig()
        self.step = config.GRADCHECK_STEP if step is None else step
        self.tolerance = config.GRADCHECK_TOLERANCE if tolerance is None else tolerance
        self.floor = config.GRADCHECK_FLOOR if floor is None else floor
        self.coords_per_tensor = coords_per_tensor
        self.logger = logging.getLogger(__name__)

    @staticmethod
    def _same_kinks(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
        return len(a) == len(b) and all(
            x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b)
        )

    def relative_error(self, analytic: float, numeric: float) -> float:
        """
        |a - n| / max(|a|, |n|, floor)

        通过条件为该值 < tolerance, 即:
            max(|a|, |n|) >= floor 时按相对误差 |a - n| / max(|a|, |n|) < tolerance 判定;
            两者都小于 floor 时按绝对误差 |a - n| < tolerance * floor 判定
        """
        return abs(analytic - numeric) / max(abs(analytic), abs(numeric), self.floor)

    def check(
        self,
        name: str,
        fn: Callable[[], Tensor],
        tensors: Sequence[Tuple[str, Tensor]],
        rng: np.random.Generator,
        max_tensors: Optional[int] = None
    ) -> GradCheckResult:
        """
        检查 fn 对 tensors 的梯度

        Args:
            name: 检查名称
            fn: 无参前向函数, 读取 tensors 的当前值
            tensors: (名称, 叶子张量) 列表, 均需 requires_grad
            rng: 随机数生成器(抽样坐标与损失权重)
            max_tensors: 最多抽查的张量个数

        Returns:
            检查结果
        """
        tensors = list(tensors)
        if max_tensors is not None and len(tensors) > max_tensors:
            chosen = sorted(rng.choice(len(tensors), size=max_tensors, replace=False))
            tensors = [tensors[i] for i in chosen]
        for _, t in tensors:
            t.zero_grad()

        with record_kinks() as base_kinks:
            out = fn()
            weights = Tensor(rng.standard_normal(out.shape), dtype=out.dtype)
            loss = (out * weights).sum()
        backward(loss)

        def probe() -> Tuple[float, List[np.ndarray]]:
            with no_grad(), record_kinks() as kinks:
                value = (fn() * weights).sum().item()
            return value, kinks

        worst_error, worst_label = 0.0, ""
        checked = skipped = 0
        for label, t in tensors:
            analytic = np.zeros(t.shape) if t.grad is None else t.grad
            flat_count = t.size
            count = min(self.coords_per_tensor, flat_count)
            for flat in rng.choice(flat_count, size=count, replace=False):
                index = np.unravel_index(int(flat), t.shape)
                original = t.data.copy()

                plus = original.copy()
                plus[index] += self.step
                t.assign(plus)
                loss_plus, kinks_plus = probe()

                minus = original.copy()
                minus[index] -= self.step
                t.assign(minus)
                loss_minus, kinks_minus = probe()
                t.assign(original)

                if not (self._same_kinks(base_kinks, kinks_plus)
                        and self._same_kinks(base_kinks, kinks_minus)):
                    skipped += 1
                    continue

                numeric = (loss_plus - loss_minus) / (2.0 * self.step)
                error = self.relative_error(float(analytic[index]), numeric)
                checked += 1
                if error > worst_error:
                    worst_error, worst_label = error, f"{label}{list(index)}"

        for _, t in tensors:
            t.zero_grad()
        self.logger.debug(
            f"{name}: 最大相对误差 {worst_error:.3e}, 检查 {checked}, 跳过 {skipped}"
        )
        return GradCheckResult(name, worst_error, checked, skipped, worst_label, self.tolerance)


def _leaf(rng: np.random.Generator, shape: Tuple[int, ...], scale: float = 1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True, dtype=np.float64)


class GradCheckSuite:
    """逐模块的端到端梯度检查(64 位)"""

    def __init__(self, checker: Optional[GradientChecker] = None):
        self.checker = checker or GradientChecker()
        self.logger = logging.getLogger(__name__)
        self.ctx_dtype = np.dtype(np.float64)

    def _tensor_core(self, rng: np.random.Generator) -> GradCheckResult:
        a = _leaf(rng, (2, 3, 4, 4))
        b = _leaf(rng, (1, 3, 1, 1))
        c = _leaf(rng, (2, 2, 4, 4))
        slope = Tensor(np.array([0.25]), requires_grad=True, dtype=np.float64)

        def fn():
            gated = a * sigmoid(b) + a / (b * b + 2.0) - reverse_op(sigmoid(a))
            return concat([relu(gated), prelu(c, slope)], axis=1)

        return self.checker.check(
            'tensor-core', fn, [('a', a), ('b', b), ('c', c), ('slope', slope)], rng
        )

    def _nn_ops(self, rng: np.random.Generator) -> GradCheckResult:
        x = _leaf(rng, (2, 3, 6, 6))
        weight = _leaf(rng, (4, 3, 3, 3), 0.3)
        bias = _leaf(rng, (4,), 0.1)
        target = rng.uniform(0.0, 1.0, size=(2, 4, 4, 4))

        def fn():
            y = conv2d(x, Conv2dParams(weight, bias, padding=1))
            pooled = max_pool2d(resample(y, 9, 9))
            gated = pooled * sigmoid(global_avg_pool(pooled))
            out = gated + channel_max(pooled) + channel_mean(pooled)
            return out + binary_cross_entropy(sigmoid(pooled), target)

        return self.checker.check(
            'nn-ops', fn, [('x', x), ('weight', weight), ('bias', bias)], rng
        )

    def _backbone(self, rng: np.random.Generator, seed: int) -> GradCheckResult:
        config = BackboneConfig(channels=[2, 3, 4, 4, 4], convs_per_block=[1, 1, 1, 1, 1], input_size=16)
        stream = VGGStream(BuildContext(seed=seed, dtype=self.ctx_dtype), "rgb", 3, config)
        x = _leaf(rng, (1, 3, 16, 16))

        def fn():
            pyramid = stream.extract(x)
            return concat([resample(level, 4, 4) for level in pyramid], axis=1)

        return self.checker.check(
            'backbone', fn, [('input', x), *stream.parameters().items()], rng
        )

    def _cca(self, rng: np.random.Generator, seed: int) -> GradCheckResult:
        module = CCAModule(
            BuildContext(seed=seed, dtype=self.ctx_dtype), "cca", [4, 4, 4],
            ModelConfig(common_channels=8, ca_ratio=4),
        )
        f3, f4, f5 = _leaf(rng, (1, 4, 8, 8)), _leaf(rng, (1, 4, 4, 4)), _leaf(rng, (1, 4, 2, 2))

        def fn():
            out = module(f3, f4, f5)
            return concat([resample_like(out.fhat[level], out.fhat[3]) for level in (3, 4, 5)], axis=1)

        return self.checker.check(
            'cca', fn, [('f3', f3), ('f4', f4), ('f5', f5), *module.parameters().items()], rng
        )

    def _afi(self, rng: np.random.Generator, seed: int) -> GradCheckResult:
        module = AFIModule(
            BuildContext(seed=seed, dtype=self.ctx_dtype), "afi",
            level_channels=[4, 4, 4, 4, 4], fuse_channels=4, fusion_size=8,
        )
        sizes = (16, 8, 4, 2, 1)
        rgb = {level: _leaf(rng, (1, 4, s, s)) for level, s in enumerate(sizes, 1)}
        depth = {level: _leaf(rng, (1, 4, s, s)) for level, s in enumerate(sizes, 1)}

        def fn():
            return module(rgb, depth).fused

        inputs = [(f"rgb{k}", v) for k, v in rgb.items()] + [(f"depth{k}", v) for k, v in depth.items()]
        return self.checker.check('afi', fn, [*inputs, *module.parameters().items()], rng)

    def _model(self, rng: np.random.Generator, seed: int) -> GradCheckResult:
        model = CAAINet(
            BackboneConfig(channels=[2, 4, 4, 4, 4], convs_per_block=[1, 1, 1, 1, 1], input_size=16),
            ModelConfig(common_channels=4, fuse_channels=4, ca_ratio=4),
            seed=seed,
            dtype=self.ctx_dtype,
        )
        rgb = rng.uniform(0.0, 1.0, size=(1, 3, 16, 16))
        depth = rng.uniform(0.0, 1.0, size=(1, 1, 16, 16))

        def fn():
            return model(rgb, depth)

        return self.checker.check('model', fn, model.parameters().items(), rng, max_tensors=40)

    def run(self, seed: int, modules: Sequence[str] = SUITE_MODULES) -> Dict[str, GradCheckResult]:
        """
        运行梯度检查套件

        Args:
            seed: 随机种子
            modules: 需要检查的模块名

        Returns:
            模块名 -> 检查结果
        """
        runners = {
            'tensor-core': lambda rng: self._tensor_core(rng),
            'nn-ops': lambda rng: self._nn_ops(rng),
            'backbone': lambda rng: self._backbone(rng, seed),
            'cca': lambda rng: self._cca(rng, seed),
            'afi': lambda rng: self._afi(rng, seed),
            'model': lambda rng: self._model(rng, seed),
        }
        results = {}
        for index, name in enumerate(modules):
            if name not in runners:
                raise ValueError(f"未知的检查模块: {name} (支持: {', '.join(SUITE_MODULES)})")
            results[name] = runners[name](np.random.default_rng([seed, index]))
            self.logger.info(
                f"[{name}] 最大相对误差 {results[name].max_rel_error:.3e} "
                f"(检查 {results[name].checked}, 跳过 {results[name].skipped})"
            )
        return results
