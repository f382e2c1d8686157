# -*- coding: utf-8 -*-
"""整体网络、损失、优化器与训练流程测试"""

import json
import math
import struct

import numpy as np
import pytest

from caai_net.controllers.training_controller import TaskState, TrainingController
from caai_net.core.functional import binary_cross_entropy
from caai_net.core.optim import SGD
from caai_net.core.tensor import Tensor, backward, get_tape, reset_tape
from caai_net.exceptions import CheckpointError, MissingGradientError, ShapeError, TrainingError
from caai_net.models.config import ExperimentConfig
from caai_net.models.train_params import ModelConfig, TrainConfig
from caai_net.network.model import CAAINet, build_model
from caai_net.services.checkpoint_service import Checkpoint, CheckpointService
from caai_net.services.dataset_service import Batch, RgbdDataset


def conv_count(cin, cout, k):
    return cout * cin * k * k + cout


def expected_param_count(backbone, model):
    """按结构逐项累加的可学习标量数"""
    channels = backbone.channels
    common, fuse, sa = model.common_channels, model.fuse_channels, model.sa_kernel
    total = 0
    for cin in (backbone.rgb_channels, backbone.depth_channels):
        previous = cin
        for width, count in zip(channels, backbone.convs_per_block):
            for _ in range(count):
                total += conv_count(previous, width, 3)
                previous = width
    total += 4 * conv_count(2, 1, sa)

    cca = sum(conv_count(c, common, 1) for c in channels[2:])
    if model.use_feature_interaction:
        cca += 6 * conv_count(common, common, 3)
    if model.use_complementary_attention:
        hidden = common // model.ca_ratio
        cca += 3 * (conv_count(common, hidden, 1) + conv_count(hidden, common, 1) + conv_count(2, 1, sa))
    if model.use_global_context:
        cca += 2 * conv_count(common, common, 3)
    total += 2 * cca

    levels = [channels[0], channels[1], common, common, common]
    for index, c in enumerate(levels):
        if model.use_afi:
            guide = levels[max(index - 1, 0)]
            total += conv_count(guide, c // 2, 1) + conv_count(guide, c // 2, 3)
            total += 2 * conv_count(c, c // 2, 3) + 2 * conv_count(c, c, 3) + 2
            total += conv_count(c, c, 1)
        total += conv_count(2 * c, fuse, 1) + conv_count(2 * c, fuse, 3) + conv_count(fuse, fuse, 3)
    total += conv_count(fuse, fuse, 3) + conv_count(fuse, 1, 1)
    return total


@pytest.fixture
def model(tiny_backbone, tiny_model_config):
    return CAAINet(tiny_backbone, tiny_model_config, seed=0)


def test_output_shape_and_range(model, rng):
    maps = model.predict(rng.uniform(size=(2, 3, 16, 16)), rng.uniform(size=(2, 1, 16, 16)), ["a", "b"])
    assert [m.stem for m in maps] == ["a", "b"]
    for m in maps:
        assert m.shape == (16, 16)
        assert ((m.values > 0) & (m.values < 1)).all()
    with pytest.raises(ShapeError):
        model.predict(rng.uniform(size=(2, 3, 16, 16)), rng.uniform(size=(2, 1, 16, 16)), ["a"])


def test_forward_is_deterministic(tiny_backbone, tiny_model_config, rng):
    rgb, depth = rng.uniform(size=(1, 3, 16, 16)), rng.uniform(size=(1, 1, 16, 16))
    first = CAAINet(tiny_backbone, tiny_model_config, seed=9).predict(rgb, depth)[0].values
    second = CAAINet(tiny_backbone, tiny_model_config, seed=9).predict(rgb, depth)[0].values
    assert np.array_equal(first, second)


def test_output_depends_on_depth(model, rng):
    rgb = rng.uniform(size=(1, 3, 16, 16))
    base = model.predict(rgb, rng.uniform(size=(1, 1, 16, 16)))[0].values
    other = model.predict(rgb, rng.uniform(size=(1, 1, 16, 16)))[0].values
    assert not np.array_equal(base, other)


def test_mismatched_batches_rejected(model):
    with pytest.raises(ShapeError):
        model(np.zeros((2, 3, 16, 16)), np.zeros((1, 1, 16, 16)))


@pytest.mark.parametrize("flags", [
    {},
    {'use_feature_interaction': False},
    {'use_complementary_attention': False},
    {'use_global_context': False},
    {'use_afi': False},
    {'use_feature_interaction': False, 'use_complementary_attention': False,
     'use_global_context': False, 'use_afi': False},
])
def test_parameter_count_matches_structure(tiny_backbone, flags):
    config = ModelConfig(common_channels=4, fuse_channels=6, ca_ratio=2, sa_kernel=3,
                         precision='float64', **flags)
    model = CAAINet(tiny_backbone, config)
    assert model.parameters().count() == expected_param_count(tiny_backbone, config)


def test_variant_names():
    assert ModelConfig().variant_name() == "B+CCA+AFI"
    assert ModelConfig(use_afi=False).variant_name() == "B+CCA"
    assert ModelConfig(use_complementary_attention=False, use_afi=False).variant_name() == "B+(a)+(c)"
    assert ModelConfig(use_feature_interaction=False, use_complementary_attention=False,
                       use_global_context=False, use_afi=False).variant_name() == "B"


def test_bce_values_and_gradient():
    loss = binary_cross_entropy(Tensor(np.array([0.5, 0.5])), np.array([1.0, 0.0]))
    assert math.isclose(loss.item(), math.log(2.0), rel_tol=1e-12)

    clipped = binary_cross_entropy(Tensor(np.array([0.0])), np.array([1.0]))
    assert math.isclose(clipped.item(), -math.log(1e-7), rel_tol=1e-9)
    assert math.isfinite(clipped.item())

    pred = Tensor(np.array([0.25, 0.8]), requires_grad=True)
    backward(binary_cross_entropy(pred, np.array([0.0, 1.0])))
    expected = np.array([(0.25 - 0.0) / (0.25 * 0.75), (0.8 - 1.0) / (0.8 * 0.2)]) / 2
    np.testing.assert_allclose(pred.grad, expected, rtol=1e-12)

    with pytest.raises(ShapeError):
        binary_cross_entropy(Tensor(np.zeros(3)), np.zeros(2))


def test_sgd_momentum_and_weight_decay_recurrence():
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = SGD([("p", p)], lr=0.1, momentum=0.9)
    p.grad = np.array([0.5])
    opt.step()
    assert math.isclose(p.item(), 0.95)
    p.grad = np.array([0.5])
    opt.step()
    assert math.isclose(opt.velocities["p"][0], 0.95)
    assert math.isclose(p.item(), 0.855)

    q = Tensor(np.array([2.0]), requires_grad=True)
    decayed = SGD([("q", q)], lr=0.5, momentum=0.0, weight_decay=0.1)
    q.grad = np.array([0.0])
    decayed.step()
    assert math.isclose(q.item(), 2.0 - 0.5 * 0.2)

    with pytest.raises(ValueError):
        SGD([("q", q)], lr=0.1, momentum=1.0)


def test_optimizer_detects_parameters_off_the_graph():
    used = Tensor(np.array([1.0]), requires_grad=True)
    dead = Tensor(np.array([1.0]), requires_grad=True)
    opt = SGD([("used", used), ("dead", dead)], lr=0.1)
    backward((used * 3.0).sum())
    with pytest.raises(MissingGradientError) as excinfo:
        opt.step()
    assert "dead" in str(excinfo.value)


def test_every_parameter_receives_gradient(model, rng):
    pred = model(rng.uniform(size=(2, 3, 16, 16)), rng.uniform(size=(2, 1, 16, 16)))
    backward(binary_cross_entropy(pred, (rng.uniform(size=(2, 1, 16, 16)) > 0.5).astype(float)))
    missing = [name for name, t in model.parameters().items() if t.grad is None]
    assert missing == []


def test_forward_without_backward_does_not_grow_tape(model, rng):
    rgb, depth = rng.uniform(size=(1, 3, 16, 16)), rng.uniform(size=(1, 1, 16, 16))
    stale = model(rgb, depth)
    nodes = len(get_tape())
    assert nodes > 0
    fresh = model(rgb, depth)
    assert len(get_tape()) == nodes
    assert not get_tape().contains(stale)
    assert get_tape().contains(fresh)

    reset_tape()
    model.predict(rgb, depth)
    assert len(get_tape()) == 0


def test_non_finite_loss_names_the_operator(tiny_experiment, model, monkeypatch):
    controller = TrainingController(tiny_experiment)

    def broken_loss(_model, _batch):
        return (Tensor(np.ones(1)) / Tensor(np.zeros(1))).sum()

    monkeypatch.setattr(controller, "batch_loss", broken_loss)
    batch = Batch(stems=["x"], rgb=np.zeros((1, 3, 16, 16)), depth=np.zeros((1, 1, 16, 16)),
                  gt=np.zeros((1, 1, 16, 16)))
    with pytest.raises(TrainingError) as excinfo:
        controller.train_step(model, controller.build_optimizer(model), batch)
    assert "Div" in str(excinfo.value)


def test_non_finite_parameter_is_named(tiny_experiment, model, rng):
    controller = TrainingController(tiny_experiment)
    name = "head.conv2.bias"
    param = model.parameters()[name]
    corrupted = param.numpy()
    corrupted.flat[0] = np.nan
    param.assign(corrupted)
    batch = Batch(stems=["x"], rgb=rng.uniform(size=(1, 3, 16, 16)),
                  depth=rng.uniform(size=(1, 1, 16, 16)), gt=np.ones((1, 1, 16, 16)))
    with pytest.raises(TrainingError) as excinfo:
        controller.train_step(model, controller.build_optimizer(model), batch)
    assert name in str(excinfo.value)
    assert "输入数据" not in str(excinfo.value)


def test_training_is_reproducible(tiny_experiment, synthetic_root, tmp_path):
    dataset = RgbdDataset(synthetic_root, 16)
    first = TrainingController(tiny_experiment).train(dataset)
    second = TrainingController(tiny_experiment).train(dataset)
    assert len(first.loss_history) == 2
    assert first.loss_history == second.loss_history
    assert all(math.isfinite(v) for v in first.loss_history)


def test_checkpoint_round_trip(tiny_experiment, synthetic_root, tmp_path):
    path = tmp_path / "model.ckpt"
    controller = TrainingController(tiny_experiment)
    result = controller.train(RgbdDataset(synthetic_root, 16), checkpoint_path=path)
    assert controller.task_state is TaskState.COMPLETED
    assert path.read_bytes().startswith(b"CAAI1\n")
    assert not path.with_name(path.name + ".tmp").exists()

    checkpoint = CheckpointService().load(path)
    assert checkpoint.epoch == 2
    assert checkpoint.loss_history == result.loss_history
    assert checkpoint.config.to_dict() == tiny_experiment.to_dict()
    state = result.model.parameters().state()
    assert checkpoint.params.keys() == state.keys()
    assert all(np.array_equal(checkpoint.params[k], state[k]) for k in state)
    assert checkpoint.velocities.keys() == state.keys()

    restored = build_model(checkpoint.config)
    restored.parameters().load_state(checkpoint.params)
    rgb = np.full((1, 3, 16, 16), 0.3)
    depth = np.full((1, 1, 16, 16), 0.6)
    assert np.array_equal(restored.predict(rgb, depth)[0].values, result.model.predict(rgb, depth)[0].values)


def test_resume_matches_uninterrupted_run(tiny_experiment, synthetic_root, tmp_path):
    dataset = RgbdDataset(synthetic_root, 16)
    full = TrainingController(tiny_experiment).train(dataset)

    short_config = ExperimentConfig(
        backbone=tiny_experiment.backbone,
        model=tiny_experiment.model,
        train=TrainConfig(**{**tiny_experiment.train.to_dict(), 'epochs': 1}),
    )
    path = tmp_path / "half.ckpt"
    TrainingController(short_config).train(dataset, checkpoint_path=path)
    resumed = TrainingController(tiny_experiment).train(dataset, resume_from=path)

    assert resumed.loss_history == full.loss_history
    full_state = full.model.parameters().state()
    resumed_state = resumed.model.parameters().state()
    assert all(np.array_equal(full_state[k], resumed_state[k]) for k in full_state)


def test_resume_rejects_different_config(tiny_experiment, synthetic_root, tmp_path):
    dataset = RgbdDataset(synthetic_root, 16)
    path = tmp_path / "a.ckpt"
    TrainingController(tiny_experiment).train(dataset, checkpoint_path=path)
    other = ExperimentConfig(
        backbone=tiny_experiment.backbone,
        model=tiny_experiment.model,
        train=TrainConfig(**{**tiny_experiment.train.to_dict(), 'lr': 0.5}),
    )
    with pytest.raises(CheckpointError):
        TrainingController(other).train(dataset, resume_from=path)


def test_corrupt_checkpoint(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        CheckpointService().load(path)
    with pytest.raises(CheckpointError):
        CheckpointService().load(tmp_path / "missing.ckpt")


def test_every_parameter_gets_nonzero_gradient_within_ten_steps(tiny_experiment, model):
    controller = TrainingController(tiny_experiment)
    optimizer = controller.build_optimizer(model)
    params = model.parameters()
    touched = {name: False for name in params}
    rng = np.random.default_rng(0)
    for step in range(10):
        batch = Batch(
            stems=[f"r{step}a", f"r{step}b"],
            rgb=rng.uniform(size=(2, 3, 16, 16)),
            depth=rng.uniform(size=(2, 1, 16, 16)),
            gt=(rng.uniform(size=(2, 1, 16, 16)) > 0.5).astype(float),
        )
        controller.train_step(model, optimizer, batch)
        for name, tensor in params.items():
            touched[name] = touched[name] or bool(np.any(tensor.grad != 0))
    assert [name for name, hit in touched.items() if not hit] == []


@pytest.mark.parametrize("field_name", ["tensors", "dtype", "seed", "config"])
def test_checkpoint_header_missing_field(tiny_experiment, model, tmp_path, field_name):
    service = CheckpointService()
    checkpoint = Checkpoint(config=tiny_experiment, seed=3, epoch=1, params=model.parameters().state())
    data = service.encode(checkpoint)
    start = len(service.magic)
    (length,) = struct.unpack_from('<I', data, start)
    header = json.loads(data[start + 4:start + 4 + length].decode('utf-8'))
    del header[field_name]
    header_bytes = json.dumps(header).encode('utf-8')
    broken = b"".join([service.magic, struct.pack('<I', len(header_bytes)), header_bytes,
                       data[start + 4 + length:]])

    path = tmp_path / "partial.ckpt"
    path.write_bytes(broken)
    with pytest.raises(CheckpointError) as excinfo:
        service.load(path)
    assert field_name in str(excinfo.value)


def test_checkpoint_header_with_wrong_types(tiny_experiment, model):
    service = CheckpointService()
    data = service.encode(Checkpoint(config=tiny_experiment, seed=3, epoch=1, params=model.parameters().state()))
    start = len(service.magic)
    (length,) = struct.unpack_from('<I', data, start)
    header = json.loads(data[start + 4:start + 4 + length].decode('utf-8'))
    header['dtype'] = "complex-ish"
    header_bytes = json.dumps(header).encode('utf-8')
    with pytest.raises(CheckpointError):
        service.decode(b"".join([service.magic, struct.pack('<I', len(header_bytes)), header_bytes]))
