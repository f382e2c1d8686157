# -*- coding: utf-8 -*-
"""测试公共夹具"""

import os

import numpy as np
import pytest

from caai_net.models.config import ExperimentConfig
from caai_net.models.train_params import BackboneConfig, ModelConfig, SyntheticSpec, TrainConfig
from caai_net.services.synthetic_service import SyntheticService


def pytest_collection_modifyitems(config, items):
    if os.getenv("CAAI_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="需要 CAAI_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_backbone():
    """16x16 输入的小骨干"""
    return BackboneConfig(channels=[2, 4, 4, 4, 4], convs_per_block=[1, 1, 1, 1, 1], input_size=16)


@pytest.fixture
def tiny_model_config():
    return ModelConfig(common_channels=4, fuse_channels=4, ca_ratio=4, precision='float64')


@pytest.fixture
def tiny_experiment(tiny_backbone, tiny_model_config):
    return ExperimentConfig(
        backbone=tiny_backbone,
        model=tiny_model_config,
        train=TrainConfig(input_size=16, batch_size=2, epochs=2, seed=3),
    )


@pytest.fixture
def synthetic_root(tmp_path):
    """4 个 16x16 合成样本"""
    spec = SyntheticSpec(canvas_size=16, num_shapes=2)
    SyntheticService(spec).generate(4, seed=7, out_dir=tmp_path / "data")
    return tmp_path / "data"
