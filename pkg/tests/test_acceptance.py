# -*- coding: utf-8 -*-
"""桌面规模收敛验收(耗时, 需 CAAI_RUN_SLOW=1)"""

import numpy as np
import pytest

from caai_net.controllers.evaluation_controller import EvaluationController
from caai_net.controllers.training_controller import TrainingController
from caai_net.models.config import ExperimentConfig
from caai_net.models.saliency_map import SaliencyMap
from caai_net.models.train_params import SyntheticSpec, TrainConfig
from caai_net.services.dataset_service import RgbdDataset
from caai_net.services.synthetic_service import SyntheticService

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def desk_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    SyntheticService(SyntheticSpec()).generate(16, seed=0, out_dir=root)
    return root


def test_desk_training_reaches_targets(desk_data):
    config = ExperimentConfig()
    dataset = RgbdDataset(desk_data, config.train.input_size)
    result = TrainingController(config).train(dataset)
    assert len(result.loss_history) == config.train.epochs

    controller = EvaluationController()
    preds = controller.predict_dataset(result.model, dataset, batch_size=4)
    gts = [SaliencyMap(sample.stem, sample.gt[0]) for sample in dataset]
    report = controller.evaluate_maps(preds, gts)
    means = report.mean()
    assert means['mae'] < 0.10
    assert means['max_f'] > 0.85


def test_single_sample_overfits(tmp_path):
    single = tmp_path / "one"
    SyntheticService(SyntheticSpec()).generate(1, seed=3, out_dir=single)
    config = ExperimentConfig(train=TrainConfig(batch_size=1, epochs=200))
    result = TrainingController(config).train(RgbdDataset(single, 64))
    assert result.loss_history[-1] < 0.05


def test_loss_history_is_bit_reproducible(desk_data):
    config = ExperimentConfig(train=TrainConfig(epochs=3))
    dataset = RgbdDataset(desk_data, 64)
    first = TrainingController(config).train(dataset).loss_history
    second = TrainingController(config).train(dataset).loss_history
    assert np.array_equal(np.array(first), np.array(second))
