# -*- coding: utf-8 -*-
"""配置解析、资源路径与运行环境测试"""

import logging
import os
from pathlib import Path

import pytest

from caai_net.exceptions import ConfigError
from caai_net.models.config import AppConfig, ConfigManager, ExperimentConfig, known_config_keys
from caai_net.models.train_params import BackboneConfig, ModelConfig, TrainConfig
from caai_net.utils.logger import setup_logger
from caai_net.utils.resource_utils import (
    BLAS_THREAD_VARS, THREADS_ENV, apply_blas_thread_limit, get_resource_path, get_thread_limit,
)


@pytest.fixture
def manager():
    return ConfigManager()


def test_parse_text_handles_comments_and_blanks(manager):
    entries = manager.parse_text("# comment\n\nlr = 0.01  # inline\nchannels=2,4,4,4,4\n")
    assert entries == {'lr': '0.01', 'channels': '2,4,4,4,4'}


@pytest.mark.parametrize("text", ["lr 0.01", "= 3", "lr=1\nlr=2"])
def test_parse_text_rejects_malformed_lines(manager, text):
    with pytest.raises(ConfigError):
        manager.parse_text(text)


def test_values_dispatched_to_sections(manager):
    config = manager.experiment_from_mapping({
        'channels': '2,4,4,4,4', 'input_size': '32', 'common_channels': '8',
        'use_afi': 'false', 'lr': '0.05', 'epochs': '3',
    })
    assert config.backbone.channels == [2, 4, 4, 4, 4]
    assert config.backbone.input_size == config.train.input_size == 32
    assert config.model.common_channels == 8
    assert config.model.use_afi is False
    assert config.train.lr == 0.05
    assert config.train.epochs == 3


def test_unknown_keys_and_invalid_values(manager):
    with pytest.raises(ConfigError) as excinfo:
        manager.experiment_from_mapping({'learning_rate': '0.1'})
    assert 'learning_rate' in str(excinfo.value)
    with pytest.raises(ConfigError):
        manager.experiment_from_mapping({'channels': '8,16,32'})
    with pytest.raises(ConfigError):
        manager.experiment_from_mapping({'input_size': '40'})
    with pytest.raises(ConfigError):
        manager.experiment_from_mapping({'sa_kernel': '7'})
    with pytest.raises(ConfigError):
        manager.experiment_from_mapping({'profile': 'huge'})
    with pytest.raises(ConfigError):
        manager.experiment_from_mapping({'common_channels': '2', 'ca_ratio': '4'})


def test_cross_section_consistency():
    with pytest.raises(ConfigError):
        ExperimentConfig(backbone=BackboneConfig(input_size=32), train=TrainConfig(input_size=64))
    with pytest.raises(ConfigError):
        ExperimentConfig(backbone=BackboneConfig(channels=[3, 4, 4, 4, 4]))
    config = ExperimentConfig(backbone=BackboneConfig(channels=[3, 4, 4, 4, 4]),
                              model=ModelConfig(use_afi=False))
    assert config.backbone.channels[0] == 3


def test_profiles_from_bundled_resources(manager):
    desk = manager.load_experiment(get_resource_path("resources/desk.cfg"))
    assert desk.to_dict() == ExperimentConfig().to_dict()

    full = manager.load_experiment(get_resource_path("resources/full.cfg"))
    assert full.backbone.channels == [64, 128, 256, 512, 512]
    assert full.backbone.convs_per_block == [2, 2, 4, 4, 4]
    assert full.train.input_size == 256
    assert full.train.lr == 1e-10
    assert full.train.momentum == 0.99
    assert full.train.epochs == 61

    overridden = manager.experiment_from_mapping({'profile': 'full', 'epochs': '5'})
    assert overridden.train.epochs == 5

    spec = manager.load_synthetic_spec(get_resource_path("resources/synthetic.cfg"))
    assert spec.canvas_size == 64
    assert spec.shape_kinds == ['rectangle', 'ellipse']


def test_missing_config_file(manager, tmp_path):
    with pytest.raises(ConfigError):
        manager.load_experiment(tmp_path / "absent.cfg")
    assert manager.load_experiment(None).to_dict() == ExperimentConfig().to_dict()


def test_save_and_reload(manager, tmp_path):
    config = manager.experiment_from_mapping({'channels': '2,4,4,4,4', 'input_size': '16',
                                              'use_global_context': 'false', 'seed': '9'})
    path = tmp_path / "saved.cfg"
    manager.save_experiment(config, path)
    assert manager.load_experiment(path).to_dict() == config.to_dict()


def test_checkpoint_dict_round_trip():
    config = ExperimentConfig(model=ModelConfig(precision='float64', use_afi=False))
    assert ExperimentConfig.from_dict(config.to_dict()).to_dict() == config.to_dict()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({'train': {'epochs': 0}})


def test_known_keys_cover_every_section():
    keys = set(known_config_keys())
    assert {'channels', 'common_channels', 'use_afi', 'lr', 'profile'} <= keys


def test_resource_path_points_into_package():
    path = Path(get_resource_path("resources/desk.cfg"))
    assert path.is_file()
    assert path.parent.parent.name == "caai_net"


def test_thread_limit(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert get_thread_limit() == 3
    monkeypatch.setenv(THREADS_ENV, "zero")
    assert get_thread_limit() >= 1
    monkeypatch.setenv(THREADS_ENV, "-2")
    assert get_thread_limit() >= 1
    monkeypatch.delenv(THREADS_ENV)
    assert get_thread_limit() >= 1


def test_blas_thread_limit_follows_caai_threads(monkeypatch):
    for name in BLAS_THREAD_VARS:
        monkeypatch.delenv(name, raising=False)
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert apply_blas_thread_limit() == {}

    monkeypatch.setenv(THREADS_ENV, "2")
    monkeypatch.setenv("MKL_NUM_THREADS", "5")
    applied = apply_blas_thread_limit()
    assert applied == {"OMP_NUM_THREADS": "2", "OPENBLAS_NUM_THREADS": "2"}
    assert os.environ["MKL_NUM_THREADS"] == "5"


def test_setup_logger_is_idempotent(tmp_path):
    logger = setup_logger("caai_net.test_logger", logging.DEBUG, log_to_file=True, log_dir=tmp_path)
    count = len(logger.handlers)
    again = setup_logger("caai_net.test_logger", logging.WARNING)
    assert again is logger
    assert len(again.handlers) == count == 2
    assert all(handler.level == logging.WARNING for handler in again.handlers)
    assert list(tmp_path.glob("caai_*.log"))
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)


def test_setup_logger_attaches_file_handler_later(tmp_path):
    logger = setup_logger("caai_net.test_late_file", logging.INFO)
    assert len(logger.handlers) == 1
    setup_logger("caai_net.test_late_file", logging.INFO, log_to_file=True, log_dir=tmp_path)
    setup_logger("caai_net.test_late_file", logging.INFO, log_to_file=True, log_dir=tmp_path)
    assert sum(isinstance(h, logging.FileHandler) for h in logger.handlers) == 1
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)


def test_app_constants():
    config = AppConfig()
    assert config.DATASET_DIRS == {'rgb': 'RGB', 'depth': 'depth', 'gt': 'GT'}
    assert config.THRESHOLD_COUNT == 255
    assert config.F_BETA2 == 0.3
