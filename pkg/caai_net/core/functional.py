# -*- coding: utf-8 -*-
"""
神经网络层原语
卷积、双线性重采样、池化、通道统计与二值交叉熵
所有 4 维特征张量均为 NCHW 排布
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import numpy as np

from ..exceptions import ShapeError
from .tensor import Function, Tensor, note_kink

SUPPORTED_KERNELS = (1, 3, 5)


@dataclass
class Conv2dParams:
    """二维卷积参数"""
    weight: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weight.ndim != 4:
            raise ShapeError(f"卷积核必须是4维 [Cout, Cin, kH, kW], 当前 {self.weight.shape}")
        out_channels, _, k_h, k_w = self.weight.shape
        if k_h != k_w or k_h not in SUPPORTED_KERNELS:
            raise ShapeError(f"卷积核尺寸 {k_h}x{k_w} 不受支持 (支持: 1x1, 3x3, 5x5)")
        if self.bias.shape != (out_channels,):
            raise ShapeError(f"偏置形状 {self.bias.shape} 与输出通道 {out_channels} 不一致")
        if self.stride < 1:
            raise ShapeError(f"stride 必须为正, 当前 {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"padding 不能为负, 当前 {self.padding}")

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def output_size(self, in_size: int) -> int:
        return (in_size + 2 * self.padding - self.kernel_size) // self.stride + 1


def _window(array: np.ndarray, i: int, j: int, out_h: int, out_w: int, stride: int) -> np.ndarray:
    return array[:, :, i:i + stride * (out_h - 1) + 1:stride, j:j + stride * (out_w - 1) + 1:stride]


class Conv2dFn(Function):
    """互相关(不翻转卷积核), 按卷积核偏移逐块累加"""

    @staticmethod
    def forward(ctx, x, weight, bias, stride=1, padding=0):
        n, _, h, w = x.shape
        out_channels, _, k, _ = weight.shape
        padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        out_h = (h + 2 * padding - k) // stride + 1
        out_w = (w + 2 * padding - k) // stride + 1

        out = np.zeros((n, out_channels, out_h, out_w), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                patch = _window(padded, i, j, out_h, out_w, stride)
                out += np.tensordot(weight[:, :, i, j], patch, axes=([1], [1])).transpose(1, 0, 2, 3)
        out += bias.reshape(1, out_channels, 1, 1)

        ctx.save(padded, weight, stride, padding, x.shape)
        return out

    @staticmethod
    def backward(ctx, grad):
        padded, weight, stride, padding, x_shape = ctx.saved
        _, _, k, _ = weight.shape
        _, _, out_h, out_w = grad.shape

        grad_weight = np.zeros_like(weight)
        grad_padded = np.zeros_like(padded)
        for i in range(k):
            for j in range(k):
                patch = _window(padded, i, j, out_h, out_w, stride)
                grad_weight[:, :, i, j] = np.tensordot(grad, patch, axes=([0, 2, 3], [0, 2, 3]))
                contribution = np.tensordot(weight[:, :, i, j], grad, axes=([0], [1]))
                _window(grad_padded, i, j, out_h, out_w, stride)[...] += contribution.transpose(1, 0, 2, 3)

        h, w = x_shape[2], x_shape[3]
        grad_x = grad_padded[:, :, padding:padding + h, padding:padding + w]
        grad_bias = grad.sum(axis=(0, 2, 3))
        return np.ascontiguousarray(grad_x), grad_weight, grad_bias


def conv2d(x: Tensor, params: Conv2dParams) -> Tensor:
    """
    二维卷积

    Args:
        x: NCHW 输入
        params: 卷积参数

    Returns:
        NCHW 输出

    Raises:
        ShapeError: 通道数不匹配或输出尺寸退化
    """
    if x.ndim != 4:
        raise ShapeError(f"conv2d 输入必须是 NCHW 4维张量, 当前 {x.shape}")
    if x.shape[1] != params.in_channels:
        raise ShapeError(
            f"conv2d 通道不匹配: 输入 {x.shape} 需要 {params.in_channels} 通道, "
            f"卷积核 {params.weight.shape}"
        )
    out_h, out_w = params.output_size(x.shape[2]), params.output_size(x.shape[3])
    if out_h <= 0 or out_w <= 0:
        raise ShapeError(
            f"conv2d 输出尺寸退化: 输入 {x.shape}, 卷积核 {params.weight.shape}, "
            f"padding={params.padding}, stride={params.stride}"
        )
    return Conv2dFn.apply(x, params.weight, params.bias, stride=params.stride, padding=params.padding)


@lru_cache(maxsize=256)
def _bilinear_matrix(in_size: int, out_size: int) -> np.ndarray:
    """align_corners=False 的一维线性插值矩阵 [out_size, in_size]"""
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    scale = in_size / out_size
    for o in range(out_size):
        src = max((o + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(np.floor(src)), in_size - 1)
        i1 = min(i0 + 1, in_size - 1)
        frac = src - i0
        matrix[o, i0] += 1.0 - frac
        matrix[o, i1] += frac
    matrix.setflags(write=False)
    return matrix


def interpolation_matrix(in_size: int, out_size: int, dtype=np.float64) -> np.ndarray:
    if in_size < 1 or out_size < 1:
        raise ShapeError(f"插值尺寸必须为正: {in_size} -> {out_size}")
    return _bilinear_matrix(in_size, out_size).astype(dtype, copy=False)


class Resample(Function):
    @staticmethod
    def forward(ctx, x, out_h, out_w):
        rows = interpolation_matrix(x.shape[-2], out_h, x.dtype)
        cols = interpolation_matrix(x.shape[-1], out_w, x.dtype)
        ctx.save(rows, cols)
        return rows @ x @ cols.T

    @staticmethod
    def backward(ctx, grad):
        rows, cols = ctx.saved
        return (rows.T @ grad @ cols,)


def resample(x: Tensor, target_h: int, target_w: int) -> Tensor:
    """
    双线性重采样(上采样 US 与下采样 DS 共用)

    Args:
        x: NCHW 输入
        target_h: 目标高度
        target_w: 目标宽度

    Returns:
        重采样结果, 尺寸相同时原样返回
    """
    if target_h < 1 or target_w < 1:
        raise ShapeError(f"重采样目标尺寸必须为正: ({target_h}, {target_w})")
    if x.ndim != 4:
        raise ShapeError(f"resample 输入必须是 NCHW 4维张量, 当前 {x.shape}")
    if x.shape[2] == target_h and x.shape[3] == target_w:
        return x
    return Resample.apply(x, target_h, target_w)


def resample_like(x: Tensor, reference: Union[Tensor, Tuple[int, ...]]) -> Tensor:
    """重采样到参考张量的空间尺寸"""
    shape = reference.shape if isinstance(reference, Tensor) else reference
    return resample(x, shape[-2], shape[-1])


def bilinear_resize_array(array: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """对 numpy 数组最后两维做同一套双线性重采样(数据读取用)"""
    array = np.asarray(array, dtype=np.float64)
    if array.shape[-2:] == (target_h, target_w):
        return array.copy()
    rows = interpolation_matrix(array.shape[-2], target_h)
    cols = interpolation_matrix(array.shape[-1], target_w)
    return rows @ array @ cols.T


class MaxPool2d(Function):
    """2x2 步长 2 最大池化, 梯度回传到窗口内第一个最大值"""

    @staticmethod
    def forward(ctx, x):
        n, c, h, w = x.shape
        out_h, out_w = h // 2, w // 2
        cropped = x[:, :, :2 * out_h, :2 * out_w]
        windows = (
            cropped.reshape(n, c, out_h, 2, out_w, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, out_h, out_w, 4)
        )
        index = windows.argmax(axis=-1)
        note_kink(index)
        ctx.save(index, x.shape)
        return np.take_along_axis(windows, index[..., None], axis=-1)[..., 0]

    @staticmethod
    def backward(ctx, grad):
        index, x_shape = ctx.saved
        n, c, out_h, out_w = grad.shape
        windows = np.zeros((n, c, out_h, out_w, 4), dtype=grad.dtype)
        np.put_along_axis(windows, index[..., None], grad[..., None], axis=-1)
        block = (
            windows.reshape(n, c, out_h, out_w, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, 2 * out_h, 2 * out_w)
        )
        grad_x = np.zeros(x_shape, dtype=grad.dtype)
        grad_x[:, :, :2 * out_h, :2 * out_w] = block
        return (grad_x,)


def max_pool2d(x: Tensor) -> Tensor:
    if x.ndim != 4 or x.shape[2] < 2 or x.shape[3] < 2:
        raise ShapeError(f"max_pool2d 需要空间尺寸至少 2x2 的 NCHW 输入, 当前 {x.shape}")
    return MaxPool2d.apply(x)


class GlobalAvgPool(Function):
    @staticmethod
    def forward(ctx, x):
        ctx.save(x.shape)
        return x.mean(axis=(2, 3), keepdims=True)

    @staticmethod
    def backward(ctx, grad):
        (shape,) = ctx.saved
        count = shape[2] * shape[3]
        return (np.broadcast_to(grad / count, shape).copy(),)


def global_avg_pool(x: Tensor) -> Tensor:
    """逐通道空间均值, 输出 N×C×1×1"""
    if x.ndim != 4 or x.shape[2] < 1 or x.shape[3] < 1:
        raise ShapeError(f"global_avg_pool 需要 NCHW 输入, 当前 {x.shape}")
    return GlobalAvgPool.apply(x)


class ChannelMean(Function):
    @staticmethod
    def forward(ctx, x):
        ctx.save(x.shape)
        return x.mean(axis=1, keepdims=True)

    @staticmethod
    def backward(ctx, grad):
        (shape,) = ctx.saved
        return (np.broadcast_to(grad / shape[1], shape).copy(),)


class ChannelMax(Function):
    @staticmethod
    def forward(ctx, x):
        index = x.argmax(axis=1)[:, None]
        note_kink(index)
        ctx.save(index, x.shape)
        return np.take_along_axis(x, index, axis=1)

    @staticmethod
    def backward(ctx, grad):
        index, shape = ctx.saved
        grad_x = np.zeros(shape, dtype=grad.dtype)
        np.put_along_axis(grad_x, index, grad, axis=1)
        return (grad_x,)


def channel_mean(x: Tensor) -> Tensor:
    return ChannelMean.apply(x)


def channel_max(x: Tensor) -> Tensor:
    return ChannelMax.apply(x)


class BinaryCrossEntropy(Function):
    @staticmethod
    def forward(ctx, pred, target, eps=1e-7):
        inside = (pred > eps) & (pred < 1.0 - eps)
        note_kink(inside)
        p = np.clip(pred, eps, 1.0 - eps)
        losses = -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))
        ctx.save(p, target, inside)
        return np.asarray(losses.mean(), dtype=pred.dtype)

    @staticmethod
    def backward(ctx, grad):
        p, target, inside = ctx.saved
        local = (p - target) / (p * (1.0 - p)) / p.size
        return (grad * local * inside).astype(p.dtype, copy=False), None


def binary_cross_entropy(
    pred: Tensor,
    target: Union[Tensor, np.ndarray],
    eps: float = 1e-7
) -> Tensor:
    """
    带 epsilon 截断的平均二值交叉熵

    Args:
        pred: 预测概率 [0,1]
        target: 真值, 允许软标签
        eps: 截断阈值

    Returns:
        标量损失
    """
    target_data = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    if target_data.shape != pred.shape:
        raise ShapeError(f"BCE 形状不匹配: pred {pred.shape}, gt {target_data.shape}")
    return BinaryCrossEntropy.apply(pred, target_data.astype(pred.dtype, copy=False), eps=eps)
