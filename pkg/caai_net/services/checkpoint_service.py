# -*- coding: utf-8 -*-
"""
检查点读写服务
文件布局:
    b"CAAI1\\n" | uint32 小端头部长度 | UTF-8 JSON 头部 | 参数与动量的小端原始字节
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from ..exceptions import CheckpointError, ConfigError
from ..models.config import AppConfig, ExperimentConfig

GROUP_PARAM = "param"
GROUP_VELOCITY = "velocity"


@dataclass
class Checkpoint:
    """检查点内容"""
    config: ExperimentConfig
    seed: int
    epoch: int
    params: Dict[str, np.ndarray]
    velocities: Dict[str, np.ndarray] = field(default_factory=dict)
    loss_history: List[float] = field(default_factory=list)


class CheckpointService:
    """检查点序列化"""

    def __init__(self):
        self.config = AppConfig()
        self.logger = logging.getLogger(__name__)
        self.magic = self.config.CHECKPOINT_MAGIC + b"\n"

    def encode(self, checkpoint: Checkpoint) -> bytes:
        dtypes = {array.dtype for array in checkpoint.params.values()}
        if len(dtypes) > 1:
            raise CheckpointError(f"参数精度不一致: {sorted(str(d) for d in dtypes)}")
        dtype = np.dtype(dtypes.pop() if dtypes else np.float32)
        little = dtype.newbyteorder('<')

        table = []
        blobs = []
        offset = 0
        for group, arrays in ((GROUP_PARAM, checkpoint.params), (GROUP_VELOCITY, checkpoint.velocities)):
            for name, array in arrays.items():
                raw = np.ascontiguousarray(array, dtype=little).tobytes()
                table.append({'name': name, 'shape': list(array.shape), 'group': group, 'offset': offset})
                blobs.append(raw)
                offset += len(raw)

        header = {
            'version': self.config.CHECKPOINT_VERSION,
            'seed': checkpoint.seed,
            'epoch': checkpoint.epoch,
            'config': checkpoint.config.to_dict(),
            'loss_history': [float(v) for v in checkpoint.loss_history],
            'dtype': dtype.name,
            'tensors': table,
        }
        header_bytes = json.dumps(header, ensure_ascii=False).encode('utf-8')
        return b"".join([self.magic, struct.pack('<I', len(header_bytes)), header_bytes, *blobs])

    def decode(self, data: bytes, source: str = "<bytes>") -> Checkpoint:
        if not data.startswith(self.magic):
            raise CheckpointError(f"{source} 不是 CAAI 检查点(魔数不符)")
        start = len(self.magic)
        try:
            (length,) = struct.unpack_from('<I', data, start)
            header = json.loads(data[start + 4:start + 4 + length].decode('utf-8'))
        except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"{source} 头部损坏: {e}") from e
        if not isinstance(header, dict):
            raise CheckpointError(f"{source} 头部不是 JSON 对象")
        if header.get('version') != self.config.CHECKPOINT_VERSION:
            raise CheckpointError(f"{source} 版本 {header.get('version')} 不受支持")

        body = memoryview(data)[start + 4 + length:]
        try:
            return self._read_body(header, body, source)
        except KeyError as e:
            raise CheckpointError(f"{source} 头部缺少字段 {e}") from e
        except (AttributeError, TypeError, ValueError, ConfigError) as e:
            raise CheckpointError(f"{source} 头部字段非法: {e}") from e

    def _read_body(self, header: dict, body: memoryview, source: str) -> Checkpoint:
        dtype = np.dtype(header['dtype']).newbyteorder('<')
        groups: Dict[str, Dict[str, np.ndarray]] = {GROUP_PARAM: {}, GROUP_VELOCITY: {}}
        for entry in header['tensors']:
            shape = tuple(entry['shape'])
            count = int(np.prod(shape)) if shape else 1
            end = entry['offset'] + count * dtype.itemsize
            if end > len(body):
                raise CheckpointError(f"{source} 数据截断: {entry['name']}")
            if entry['group'] not in groups:
                raise CheckpointError(f"{source} 未知的张量分组: {entry['group']}")
            array = np.frombuffer(body[entry['offset']:end], dtype=dtype).reshape(shape)
            groups[entry['group']][entry['name']] = array.astype(dtype.newbyteorder('='))

        return Checkpoint(
            config=ExperimentConfig.from_dict(header['config']),
            seed=int(header['seed']),
            epoch=int(header['epoch']),
            params=groups[GROUP_PARAM],
            velocities=groups[GROUP_VELOCITY],
            loss_history=list(header.get('loss_history', [])),
        )

    def save(self, checkpoint: Checkpoint, path: Union[str, Path]) -> None:
        """原子写入: 先写临时文件再替换"""
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp.write_bytes(self.encode(checkpoint))
            tmp.replace(path)
        except OSError as e:
            raise CheckpointError(f"无法写入检查点 {path}: {e}") from e
        self.logger.debug(f"检查点已保存: {path} (epoch={checkpoint.epoch})")

    def load(self, path: Union[str, Path]) -> Checkpoint:
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise CheckpointError(f"无法读取检查点 {path}: {e}") from e
        return self.decode(data, source=str(path))
