# -*- coding: utf-8 -*-
"""CCA 模块测试: 投影、特征交互、互补注意力、全局上下文与消融"""

import numpy as np
import pytest

from caai_net.core.functional import resample_like
from caai_net.core.tensor import Tensor, no_grad, reverse_op, sigmoid
from caai_net.exceptions import ShapeError
from caai_net.models.train_params import ModelConfig
from caai_net.network.attention import ChannelAttention, SpatialAttention
from caai_net.network.cca import (
    AttentionState, CCAModule, ComplementaryAttention, FeatureInteraction, GlobalContext,
)
from caai_net.network.module import BuildContext
import oracles

CTX = BuildContext(seed=2, dtype=np.dtype(np.float64))


def fill(module, value=0.0, rng=None):
    """把模块全部参数置为常数或 [0, 0.2) 均匀随机正数"""
    for _, tensor in module.parameters().items():
        if rng is None:
            tensor.assign(np.full(tensor.shape, value))
        else:
            tensor.assign(rng.uniform(0.0, 0.2, size=tensor.shape))


def features(rng, batch=1, channels=4, positive=False):
    draw = rng.uniform if positive else rng.standard_normal
    return [Tensor(draw(size=(batch, channels, s, s))) for s in (8, 4, 2)]


def test_project_common(rng):
    module = CCAModule(CTX, "cca", [3, 5, 6], ModelConfig(common_channels=4))
    with no_grad():
        out = module.project_common(Tensor(rng.standard_normal((2, 5, 4, 4))), 4)
    assert out.shape == (2, 4, 4, 4)
    assert (out.data >= 0).all()
    with pytest.raises(ShapeError):
        module.project_common(Tensor(rng.standard_normal((2, 5, 4, 4))), 2)
    with pytest.raises(ShapeError):
        CCAModule(CTX, "cca", [3, 5], ModelConfig(common_channels=4))


def test_interaction_keeps_resolutions_and_zero_weights_give_zeros(rng):
    fi = FeatureInteraction(CTX, "fi", 4)
    inputs = features(rng)
    with no_grad():
        outputs = fi(*inputs)
    assert [o.shape for o in outputs] == [i.shape for i in inputs]

    fill(fi, 0.0)
    with no_grad():
        outputs = fi(*inputs)
    assert all(not o.data.any() for o in outputs)


def test_interaction_top_output_depends_on_deepest_level(rng):
    fi = FeatureInteraction(CTX, "fi", 4)
    fill(fi, rng=rng)
    f3, f4, f5 = features(rng, positive=True)
    with no_grad():
        base = fi(f3, f4, f5)[0].numpy()
        shifted = fi(f3, f4, Tensor(f5.data + 1.0))[0].numpy()
    assert not np.allclose(base, shifted)


def test_interaction_without_cross_scale_is_three_chains(rng):
    fi = FeatureInteraction(CTX, "fi", 4)
    fi.cross_scale = False
    f3, f4, f5 = features(rng)
    cu = fi.units
    with no_grad():
        f02, f11, f20 = fi(f3, f4, f5)
        assert np.array_equal(f02.data, cu[(0, 2)](cu[(0, 1)](cu[(0, 0)](f3))).data)
        assert np.array_equal(f11.data, cu[(1, 1)](cu[(1, 0)](f4)).data)
        assert np.array_equal(f20.data, cu[(2, 0)](f5).data)


def test_zero_attention_weights_halve_input(rng):
    x = Tensor(rng.standard_normal((2, 4, 3, 3)))
    ca = ChannelAttention(CTX, "ca", 4, ratio=4)
    sa = SpatialAttention(CTX, "sa", 5)
    fill(ca, 0.0)
    fill(sa, 0.0)
    with no_grad():
        np.testing.assert_allclose(ca(x).data, x.data / 2, atol=1e-15)
        np.testing.assert_allclose(sa(x).data, x.data / 2, atol=1e-15)


def test_attention_matches_oracles(rng):
    x = Tensor(rng.standard_normal((2, 8, 5, 5)))
    ca = ChannelAttention(CTX, "ca", 8, ratio=4)
    sa = SpatialAttention(CTX, "sa", 3)
    with no_grad():
        expected, expected_w = oracles.channel_attention(
            x.data, ca.fc1.weight.data, ca.fc1.bias.data, ca.fc2.weight.data, ca.fc2.bias.data
        )
        np.testing.assert_allclose(ca(x).data, expected, atol=1e-12)
        np.testing.assert_allclose(ca.weights(x).data, expected_w, atol=1e-12)

        expected, expected_a = oracles.spatial_attention(x.data, sa.conv.weight.data, sa.conv.bias.data)
        np.testing.assert_allclose(sa(x).data, expected, atol=1e-12)
        np.testing.assert_allclose(sa.weights(x).data, expected_a, atol=1e-12)


def test_channel_attention_ratio_error():
    with pytest.raises(ShapeError):
        ChannelAttention(CTX, "ca", 2, ratio=4)


def test_zero_level_output_gives_half_upsampled_neighbour(rng):
    attn = ComplementaryAttention(CTX, "attn", 4, ratio=4, sa_kernel=5)
    _, f4p, f5p = features(rng)
    f3p = Tensor(np.zeros((1, 4, 8, 8)))
    with no_grad():
        fhat3, fhat4, states = attn(f3p, f4p, f5p)
        assert not states[3].s.data.any()
        expected = 0.5 * resample_like(states[4].s, f3p).data
    np.testing.assert_allclose(fhat3.data, expected, atol=1e-15)
    assert fhat4.shape == f4p.shape


def test_gate_with_zero_attention_state():
    s = Tensor(np.zeros((1, 2, 4, 4)))
    state = AttentionState(s=s, omega=reverse_op(sigmoid(s)))
    next_s = Tensor(np.arange(8.0).reshape(1, 2, 2, 2))
    gated = ComplementaryAttention.gate(state, AttentionState(next_s, next_s))
    np.testing.assert_allclose(gated.data, 0.5 * resample_like(next_s, s).data)


def test_reverse_weights_complement_sigmoid(rng):
    attn = ComplementaryAttention(CTX, "attn", 4)
    with no_grad():
        _, _, states = attn(*features(rng))
    for state in states.values():
        np.testing.assert_allclose(state.omega.data + oracles.sigmoid(state.s.data), 1.0, atol=1e-12)
        assert ((state.omega.data > 0) & (state.omega.data < 1)).all()


def test_global_context(rng):
    gc = GlobalContext(CTX, "gc", 4)
    f5p = Tensor(rng.standard_normal((1, 4, 2, 2)))
    with no_grad():
        expected = f5p.data + oracles.relu(oracles.naive_conv2d(
            oracles.relu(oracles.naive_conv2d(f5p.data, gc.conv1.weight.data, gc.conv1.bias.data, padding=1)),
            gc.conv2.weight.data, gc.conv2.bias.data, padding=1,
        ))
        np.testing.assert_allclose(gc(f5p).data, expected, atol=1e-12)

        omega = Tensor(np.full((1, 4, 2, 2), 0.25))
        np.testing.assert_allclose(gc(f5p, omega).data, 0.25 * expected, atol=1e-12)

        assert not gc(Tensor(np.zeros((1, 4, 2, 2)))).data.any()
        fill(gc, 0.0)
        assert np.array_equal(gc(f5p).data, f5p.data)


def test_cca_output_shapes_and_batch_permutation(rng):
    module = CCAModule(CTX, "cca", [4, 4, 4], ModelConfig(common_channels=4))
    inputs = features(rng, batch=3)
    order = [2, 0, 1]
    with no_grad():
        out = module(*inputs)
        permuted = module(*[Tensor(f.data[order]) for f in inputs])
    for level, size in zip((3, 4, 5), (8, 4, 2)):
        assert out.fhat[level].shape == (3, 4, size, size)
        np.testing.assert_allclose(permuted.fhat[level].data, out.fhat[level].data[order], atol=1e-12)


def test_ablation_flags_remove_parameters_and_paths(rng):
    bare = CCAModule(CTX, "cca", [4, 4, 4], ModelConfig(
        common_channels=4, use_feature_interaction=False,
        use_complementary_attention=False, use_global_context=False,
    ))
    names = bare.parameters().names()
    assert all(name.startswith("cca.proj") for name in names)
    inputs = features(rng)
    with no_grad():
        out = bare(*inputs)
        for level, f in zip((3, 4, 5), inputs):
            projected = bare.project_common(f, level).data
            assert np.array_equal(out.primes[level].data, projected)
            assert np.array_equal(out.fhat[level].data, projected)
    assert out.states == {}

    no_gc = CCAModule(CTX, "cca", [4, 4, 4], ModelConfig(common_channels=4, use_global_context=False))
    assert not any(".gc." in name for name in no_gc.parameters().names())
    with no_grad():
        out = no_gc(*inputs)
    np.testing.assert_allclose(out.fhat[5].data, out.states[5].omega.data * out.primes[5].data)

    no_ca = CCAModule(CTX, "cca", [4, 4, 4], ModelConfig(common_channels=4, use_complementary_attention=False))
    assert not any(".attn." in name for name in no_ca.parameters().names())
    with no_grad():
        out = no_ca(*inputs)
        expected5 = no_ca.context(out.primes[5]).data
    assert np.array_equal(out.fhat[3].data, out.primes[3].data)
    assert np.array_equal(out.fhat[4].data, out.primes[4].data)
    np.testing.assert_allclose(out.fhat[5].data, expected5)
