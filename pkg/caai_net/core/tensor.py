# -*- coding: utf-8 -*-
"""
张量与反向模式自动微分
每次前向传播把算子依次记录到当前线程的计算带(Tape)上,
backward 按追加顺序的逆序遍历一次并在结束后释放计算带。
只做前向不反向时, 计算带由下一次 CAAINet 顶层前向(或 reset_tape)释放;
直接调用子模块而不反向的场合应包在 no_grad() 里。
"""

import contextlib
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import NonFiniteError, ShapeError, TapeError

Scalar = Union[int, float]
ArrayLike = Union[np.ndarray, Sequence, Scalar]

DEFAULT_DTYPE = np.float64
SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """稠密 N 维浮点张量"""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Optional[Any] = None,
        name: Optional[str] = None
    ):
        array = np.asarray(data)
        if dtype is None:
            dtype = array.dtype if array.dtype in SUPPORTED_DTYPES else DEFAULT_DTYPE
        dtype = np.dtype(dtype)
        if dtype not in SUPPORTED_DTYPES:
            raise TypeError(f"不支持的数据类型: {dtype} (仅支持 float32/float64)")
        self.data: np.ndarray = np.ascontiguousarray(array, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.tape_id: Optional[Tuple[int, int]] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.tape_id is None

    def numpy(self) -> np.ndarray:
        """返回数据副本"""
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"只有单元素张量可以转为标量, 当前形状 {self.shape}")
        return float(self.data.reshape(-1)[0])

    def assign(self, values: ArrayLike) -> None:
        """原地替换叶子张量的数据(参数更新、有限差分扰动)"""
        if not self.is_leaf:
            raise TapeError("只能对叶子张量赋值")
        values = np.asarray(values, dtype=self.dtype)
        if values.shape != self.shape:
            raise ShapeError(f"赋值形状 {values.shape} 与张量形状 {self.shape} 不一致")
        self.data = np.ascontiguousarray(values)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> 'Tensor':
        return Tensor(self.data, dtype=self.dtype)

    def backward(self) -> None:
        backward(self)

    # 运算符
    def __add__(self, other):
        return elementwise('add', self, other)

    def __radd__(self, other):
        return elementwise('add', self, other)

    def __sub__(self, other):
        return elementwise('sub', self, other)

    def __rsub__(self, other):
        return elementwise('sub', _as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return elementwise('mul', self, other)

    def __rmul__(self, other):
        return elementwise('mul', self, other)

    def __truediv__(self, other):
        return elementwise('div', self, other)

    def __rtruediv__(self, other):
        return elementwise('div', _as_tensor(other, self.dtype), self)

    def __neg__(self):
        return Neg.apply(self)

    def sum(self) -> 'Tensor':
        return Sum.apply(self)

    def mean(self) -> 'Tensor':
        return Mean.apply(self)

    def __repr__(self) -> str:
        grad_flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad_flag})"


@dataclass
class TapeNode:
    """计算带上的一个节点"""
    function: type
    ctx: 'Context'
    inputs: Tuple[Optional[Tensor], ...]
    output: Tensor


@dataclass
class Tape:
    """按追加顺序记录的计算带"""
    nodes: List[TapeNode] = field(default_factory=list)
    generation: int = 0

    def record(self, node: TapeNode) -> Tuple[int, int]:
        self.nodes.append(node)
        return self.generation, len(self.nodes) - 1

    def contains(self, tensor: Tensor) -> bool:
        if tensor.tape_id is None:
            return False
        generation, index = tensor.tape_id
        return (
            generation == self.generation
            and index < len(self.nodes)
            and self.nodes[index].output is tensor
        )

    def clear(self) -> None:
        """释放所有节点, 旧的 tape_id 随之失效"""
        self.nodes = []
        self.generation += 1

    def __len__(self) -> int:
        return len(self.nodes)


class _State(threading.local):
    """每个线程独立的自动微分状态"""

    def __init__(self):
        self.tape = Tape()
        self.grad_enabled = True
        self.debug_checks = False
        self.kink_log: Optional[List[np.ndarray]] = None


_state = _State()


class Context:
    """算子在前向时保存的中间量"""

    def __init__(self):
        self.saved: Tuple[Any, ...] = ()

    def save(self, *values: Any) -> None:
        self.saved = values


class Function:
    """可微算子基类: 子类实现 forward/backward 两个静态方法"""

    @staticmethod
    def forward(ctx: Context, *args: Any, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Any, **kwargs: Any) -> Tensor:
        ctx = Context()
        raw = [item.data if isinstance(item, Tensor) else item for item in inputs]
        out_data = cls.forward(ctx, *raw, **kwargs)

        if _state.debug_checks:
            _check_finite(cls.__name__, raw, out_data)

        tensors = [item if isinstance(item, Tensor) else None for item in inputs]
        needs_grad = _state.grad_enabled and any(t is not None and t.requires_grad for t in tensors)
        out = Tensor(out_data, requires_grad=needs_grad)
        if needs_grad:
            out.tape_id = _state.tape.record(TapeNode(cls, ctx, tuple(tensors), out))
        return out


def _check_finite(op_name: str, raw_inputs: List[Any], out: np.ndarray) -> None:
    inputs_finite = all(
        np.all(np.isfinite(item)) for item in raw_inputs if isinstance(item, np.ndarray)
    )
    if inputs_finite and not np.all(np.isfinite(out)):
        raise NonFiniteError(op_name)


def note_kink(mask: np.ndarray) -> None:
    """非光滑算子登记分支掩码(仅在 record_kinks 期间生效)"""
    if _state.kink_log is not None:
        _state.kink_log.append(np.array(mask, copy=True))


@contextlib.contextmanager
def record_kinks():
    """收集本次前向中所有非光滑算子的分支掩码"""
    previous = _state.kink_log
    log: List[np.ndarray] = []
    _state.kink_log = log
    try:
        yield log
    finally:
        _state.kink_log = previous


@contextlib.contextmanager
def no_grad():
    """不记录计算带"""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def set_debug_checks(enabled: bool) -> bool:
    """开关 NaN/Inf 检查, 返回旧值"""
    previous = _state.debug_checks
    _state.debug_checks = bool(enabled)
    return previous


def is_grad_enabled() -> bool:
    return _state.grad_enabled


def get_tape() -> Tape:
    return _state.tape


def reset_tape() -> None:
    _state.tape.clear()


def backward(loss: Tensor) -> None:
    """
    从标量损失反向传播

    Args:
        loss: 记录在当前计算带上的标量张量

    Raises:
        TapeError: 损失不是标量或不在计算带上
    """
    if loss.size != 1:
        raise TapeError(f"损失必须是标量, 当前形状 {loss.shape}")
    tape = _state.tape
    if not tape.contains(loss):
        raise TapeError("损失不在当前计算带上(可能已被释放或未启用梯度)")

    _, start = loss.tape_id
    grads: Dict[int, np.ndarray] = {start: np.ones_like(loss.data)}
    try:
        for index in range(start, -1, -1):
            grad = grads.pop(index, None)
            if grad is None:
                continue
            node = tape.nodes[index]
            input_grads = node.function.backward(node.ctx, grad)
            for tensor, input_grad in zip(node.inputs, input_grads):
                if tensor is None or input_grad is None or not tensor.requires_grad:
                    continue
                if tape.contains(tensor):
                    _, parent = tensor.tape_id
                    if parent in grads:
                        grads[parent] = grads[parent] + input_grad
                    else:
                        grads[parent] = input_grad
                else:
                    if tensor.grad is None:
                        tensor.grad = np.array(input_grad, dtype=tensor.dtype, copy=True)
                    else:
                        tensor.grad = tensor.grad + np.asarray(input_grad, dtype=tensor.dtype)
    finally:
        tape.clear()


def _as_tensor(value: Union[Tensor, ArrayLike], dtype: np.dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype), dtype=dtype)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """把广播后的梯度求和回原始形状"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Add(Function):
    @staticmethod
    def forward(ctx, a, b):
        ctx.save(np.shape(a), np.shape(b))
        return a + b

    @staticmethod
    def backward(ctx, grad):
        a_shape, b_shape = ctx.saved
        return unbroadcast(grad, a_shape), unbroadcast(grad, b_shape)


class Sub(Function):
    @staticmethod
    def forward(ctx, a, b):
        ctx.save(np.shape(a), np.shape(b))
        return a - b

    @staticmethod
    def backward(ctx, grad):
        a_shape, b_shape = ctx.saved
        return unbroadcast(grad, a_shape), unbroadcast(-grad, b_shape)


class Mul(Function):
    @staticmethod
    def forward(ctx, a, b):
        ctx.save(a, b)
        return a * b

    @staticmethod
    def backward(ctx, grad):
        a, b = ctx.saved
        return unbroadcast(grad * b, np.shape(a)), unbroadcast(grad * a, np.shape(b))


class Div(Function):
    @staticmethod
    def forward(ctx, a, b):
        ctx.save(a, b)
        return a / b

    @staticmethod
    def backward(ctx, grad):
        a, b = ctx.saved
        grad_a = unbroadcast(grad / b, np.shape(a))
        grad_b = unbroadcast(-grad * a / (b * b), np.shape(b))
        return grad_a, grad_b


_ELEMENTWISE = {'add': Add, 'sub': Sub, 'mul': Mul, 'div': Div}


def elementwise(kind: str, a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    """
    逐元素二元运算(支持标量与单例维广播)

    Args:
        kind: add / sub / mul / div
        a: 左操作数
        b: 右操作数, 张量或标量

    Returns:
        广播形状的结果张量
    """
    if kind not in _ELEMENTWISE:
        raise ValueError(f"未知的逐元素运算: {kind}")
    a = _as_tensor(a, DEFAULT_DTYPE)
    b = _as_tensor(b, a.dtype)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: 形状 {a.shape} 与 {b.shape} 无法广播") from None
    return _ELEMENTWISE[kind].apply(a, b)


class Neg(Function):
    @staticmethod
    def forward(ctx, a):
        return -a

    @staticmethod
    def backward(ctx, grad):
        return (-grad,)


class Reverse(Function):
    @staticmethod
    def forward(ctx, a):
        return np.ones_like(a) - a

    @staticmethod
    def backward(ctx, grad):
        return (-grad,)


def reverse_op(a: Tensor) -> Tensor:
    """反转运算: 用全一矩阵减去输入"""
    return Reverse.apply(a)


class Sigmoid(Function):
    @staticmethod
    def forward(ctx, a):
        # tanh 形式在两端都不会溢出, 且 sigmoid(0) 恰为 0.5
        out = 0.5 * (1.0 + np.tanh(0.5 * a))
        ctx.save(out)
        return out

    @staticmethod
    def backward(ctx, grad):
        (out,) = ctx.saved
        return (grad * out * (1.0 - out),)


class ReLU(Function):
    @staticmethod
    def forward(ctx, a):
        mask = a > 0
        note_kink(mask)
        ctx.save(mask)
        return np.where(mask, a, 0).astype(a.dtype, copy=False)

    @staticmethod
    def backward(ctx, grad):
        (mask,) = ctx.saved
        return (grad * mask,)


class PReLU(Function):
    @staticmethod
    def forward(ctx, a, slope):
        mask = a > 0
        note_kink(mask)
        ctx.save(a, slope, mask)
        return np.where(mask, a, slope * a).astype(a.dtype, copy=False)

    @staticmethod
    def backward(ctx, grad):
        a, slope, mask = ctx.saved
        grad_a = np.where(mask, grad, slope * grad)
        grad_slope = np.where(mask, 0, grad * a).sum()
        return grad_a, np.full(np.shape(slope), grad_slope, dtype=grad.dtype)


def sigmoid(a: Tensor) -> Tensor:
    return Sigmoid.apply(a)


def relu(a: Tensor) -> Tensor:
    return ReLU.apply(a)


def prelu(a: Tensor, slope: Tensor) -> Tensor:
    """PReLU, slope 为单元素可学习参数"""
    if slope.size != 1:
        raise ShapeError(f"PReLU 斜率必须是单元素张量, 当前形状 {slope.shape}")
    return PReLU.apply(a, slope)


def activation(kind: str, a: Tensor, slope: Optional[Tensor] = None) -> Tensor:
    """按名称选择激活函数: sigmoid / relu / prelu"""
    if kind == 'sigmoid':
        return sigmoid(a)
    if kind == 'relu':
        return relu(a)
    if kind == 'prelu':
        if slope is None:
            raise ValueError("prelu 需要 slope 参数")
        return prelu(a, slope)
    raise ValueError(f"未知的激活函数: {kind}")


class Concat(Function):
    @staticmethod
    def forward(ctx, *parts, axis=1):
        ctx.save(axis, [p.shape[axis] for p in parts])
        return np.concatenate(parts, axis=axis)

    @staticmethod
    def backward(ctx, grad):
        axis, sizes = ctx.saved
        splits = np.cumsum(sizes)[:-1]
        return tuple(np.split(grad, splits, axis=axis))


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    """
    沿通道轴拼接

    Args:
        parts: 待拼接张量, 除拼接轴外形状必须一致
        axis: 拼接轴, 默认通道轴

    Returns:
        拼接结果
    """
    parts = list(parts)
    if not parts:
        raise ShapeError("concat 至少需要一个输入")
    if len(parts) == 1:
        return parts[0]
    reference = parts[0].shape
    for part in parts[1:]:
        if part.ndim != len(reference) or any(
            size != ref for i, (size, ref) in enumerate(zip(part.shape, reference)) if i != axis
        ):
            raise ShapeError(f"concat: 形状 {reference} 与 {part.shape} 在非拼接维上不一致")
    return Concat.apply(*parts, axis=axis)


class Sum(Function):
    @staticmethod
    def forward(ctx, a):
        ctx.save(a.shape)
        return np.asarray(a.sum(), dtype=a.dtype)

    @staticmethod
    def backward(ctx, grad):
        (shape,) = ctx.saved
        return (np.broadcast_to(grad, shape).copy(),)


class Mean(Function):
    @staticmethod
    def forward(ctx, a):
        ctx.save(a.shape, a.size)
        return np.asarray(a.mean(), dtype=a.dtype)

    @staticmethod
    def backward(ctx, grad):
        shape, count = ctx.saved
        return (np.broadcast_to(grad / count, shape).copy(),)


def tensor(data: ArrayLike, requires_grad: bool = False, dtype: Optional[Any] = None) -> Tensor:
    """构造张量的便捷函数"""
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape: Sequence[int], dtype: Any = DEFAULT_DTYPE, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(tuple(shape), dtype=dtype), requires_grad=requires_grad)


def ones(shape: Sequence[int], dtype: Any = DEFAULT_DTYPE, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(tuple(shape), dtype=dtype), requires_grad=requires_grad)

