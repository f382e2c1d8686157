# -*- coding: utf-8 -*-
"""
参数注册表与模块基类
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..core.init import init_params, param_rng
from ..core.tensor import Tensor
from ..exceptions import ShapeError


@dataclass(frozen=True)
class ParamMeta:
    """参数初始化元数据"""
    shape: Tuple[int, ...]
    scheme: str
    seed: int
    fan_in: Optional[int] = None


@dataclass(frozen=True)
class BuildContext:
    """构建网络时共享的随机种子与精度"""
    seed: int = 0
    dtype: np.dtype = np.dtype(np.float32)


class ModuleParams:
    """有名、有序的可学习张量集合"""

    def __init__(self):
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict()
        self._meta: Dict[str, ParamMeta] = {}

    def register(self, name: str, tensor: Tensor, meta: ParamMeta) -> None:
        if name in self._tensors:
            raise ValueError(f"参数名重复: {name}")
        self._tensors[name] = tensor
        self._meta[name] = meta

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> List[str]:
        return list(self._tensors.keys())

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._tensors.items())

    def meta(self, name: str) -> ParamMeta:
        return self._meta[name]

    def count(self) -> int:
        """可学习标量总数"""
        return sum(t.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def state(self) -> Dict[str, np.ndarray]:
        return {name: tensor.numpy() for name, tensor in self._tensors.items()}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        """按名称载入参数, 名称集合与形状必须完全一致"""
        missing = sorted(set(self._tensors) - set(state))
        unexpected = sorted(set(state) - set(self._tensors))
        if missing or unexpected:
            raise ShapeError(f"参数名不匹配: 缺少 {missing[:5]}, 多余 {unexpected[:5]}")
        for name, tensor in self._tensors.items():
            tensor.assign(state[name])


class Module:
    """网络模块基类: 参数全名为 前缀.局部名"""

    def __init__(self, ctx: BuildContext, prefix: str):
        self.ctx = ctx
        self.prefix = prefix
        self._params: "OrderedDict[str, Tuple[Tensor, ParamMeta]]" = OrderedDict()
        self._children: "OrderedDict[str, Module]" = OrderedDict()

    def _full_name(self, local: str) -> str:
        return f"{self.prefix}.{local}" if self.prefix else local

    def add_param(
        self,
        local: str,
        shape: Tuple[int, ...],
        scheme: str,
        fan_in: Optional[int] = None
    ) -> Tensor:
        """注册并初始化一个参数"""
        full = self._full_name(local)
        data = init_params(shape, scheme, rng=param_rng(self.ctx.seed, full),
                           fan_in=fan_in, dtype=self.ctx.dtype)
        tensor = Tensor(data, requires_grad=True, dtype=self.ctx.dtype, name=full)
        self._params[local] = (tensor, ParamMeta(tuple(shape), scheme, self.ctx.seed, fan_in))
        return tensor

    def add_module(self, local: str, module: 'Module') -> 'Module':
        self._children[local] = module
        return module

    def child_prefix(self, local: str) -> str:
        return self._full_name(local)

    def parameters(self) -> ModuleParams:
        registry = ModuleParams()
        self._collect(registry)
        return registry

    def _collect(self, registry: ModuleParams) -> None:
        for local, (tensor, meta) in self._params.items():
            registry.register(self._full_name(local), tensor, meta)
        for child in self._children.values():
            child._collect(registry)

    def zero_grad(self) -> None:
        self.parameters().zero_grad()

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)
