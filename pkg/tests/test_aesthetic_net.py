import numpy as np
import pytest

from aesnet.aesthetic_net import (
    DecisionModule,
    DenseBlock,
    NetConfig,
    Transition,
    build_network,
    count_parameters,
)
from aesnet.errors import InvalidConfig, ShapeMismatch
from aesnet.tensor_core import softmax, softmax_cross_entropy

SMALL = NetConfig(growth_rate=4, layers_per_block=(2, 2, 2), input_size=(16, 16), level_fc_dim=8)
# frozen from a standalone per-layer enumeration of the default architecture
DEFAULT_PARAMS_K12 = 189_138
DEFAULT_PARAMS_K24 = 715_810


def rand_input(rng, n, cfg):
    return rng.standard_normal((n, 3, *cfg.input_size)).astype(np.float32)


@pytest.mark.parametrize("k", [12, 24])
def test_growth_rate_variants_build(k):
    net = build_network(NetConfig(growth_rate=k), seed=0)
    assert net.cfg.stem_channels == 2 * k


def test_same_seed_same_parameters():
    a = dict(build_network(SMALL, 5).named_parameters())
    b = dict(build_network(SMALL, 5).named_parameters())
    assert list(a) == list(b)
    assert all(np.array_equal(a[n].data, b[n].data) for n in a)
    c = dict(build_network(SMALL, 6).named_parameters())
    assert not np.array_equal(a["stem.conv.weight"].data, c["stem.conv.weight"].data)


def test_init_scheme():
    net = build_network(NetConfig(), seed=0)
    params = net.parameters()
    assert np.all(params["stem.bn.gamma"].data == 1) and np.all(params["stem.bn.beta"].data == 0)
    assert np.all(params["decision.final.bias"].data == 0)
    w = params["block1.layer5.conv.weight"].data
    assert w.std() == pytest.approx(np.sqrt(2 / (84 * 9)), rel=0.05)


class TestDenseBlock:
    def test_channel_growth(self, rng):
        block = DenseBlock(24, 12, 6)
        assert [layer.in_channels for layer in block.layers] == [24 + 12 * i for i in range(6)]
        out = block.forward(rng.standard_normal((1, 24, 4, 4)).astype(np.float32), training=True)
        assert out.shape == (1, 96, 4, 4)

    def test_empty_block_is_identity(self, rng):
        x = rng.standard_normal((2, 5, 4, 4)).astype(np.float32)
        block = DenseBlock(5, 12, 0)
        assert block.forward(x) is x
        g = rng.standard_normal(x.shape)
        np.testing.assert_array_equal(block.backward(g), g)

    def test_input_passes_through(self, rng):
        x = rng.standard_normal((2, 6, 4, 4)).astype(np.float32)
        out = DenseBlock(6, 3, 2).forward(x, training=True)
        np.testing.assert_array_equal(out[:, :6], x)

    def test_wrong_channels(self, rng):
        with pytest.raises(ShapeMismatch):
            DenseBlock(6, 3, 2).forward(np.zeros((1, 5, 4, 4), dtype=np.float32))


class TestTransition:
    @pytest.mark.parametrize("c, expected", [(96, 48), (3, 1)])
    def test_channel_halving(self, c, expected):
        assert Transition(c).out_channels == expected

    def test_spatial_halving(self, rng):
        out = Transition(96).forward(rng.standard_normal((1, 96, 32, 32)).astype(np.float32), training=True)
        assert out.shape == (1, 48, 16, 16)

    def test_odd_spatial(self):
        with pytest.raises(ShapeMismatch):
            Transition(4).forward(np.zeros((1, 4, 5, 4), dtype=np.float32))


class TestDecision:
    def test_reduction_to_a_third(self):
        head = DecisionModule([90, 60, 45], fc_dim=16)
        assert [lvl.reduced_channels for lvl in head.levels] == [30, 20, 15]
        assert head.final.in_features == 48

    def test_output_shape_independent_of_spatial(self, rng):
        head = DecisionModule([9, 12, 15], fc_dim=4)
        levels = [rng.standard_normal((3, c, s, s)).astype(np.float32) for c, s in [(9, 7), (12, 3), (15, 1)]]
        trace = {}
        assert head.forward(levels, trace=trace).shape == (3, 2)
        assert trace["decision.concat"] == (3, 12)


def test_forward_shape_default_width(rng):
    cfg = NetConfig(input_size=(64, 64))
    assert build_network(cfg, 0).forward(rand_input(rng, 4, cfg)).shape == (4, 2)


def test_channel_bookkeeping(rng):
    cfg = NetConfig(growth_rate=5, layers_per_block=(3, 2, 4), stem_channels=7, input_size=(16, 16), level_fc_dim=4)
    trace = {}
    build_network(cfg, 0).forward(rand_input(rng, 2, cfg), training=True, trace=trace)
    db1 = 7 + 3 * 5
    t1 = db1 // 2
    db2 = t1 + 2 * 5
    t2 = db2 // 2
    db3 = t2 + 4 * 5
    assert trace["block1"][1:] == (db1, 16, 16)
    assert trace["trans1"][1:] == (t1, 8, 8)
    assert trace["block2"][1:] == (db2, 8, 8)
    assert trace["trans2"][1:] == (t2, 4, 4)
    assert trace["block3"][1:] == (db3, 4, 4)
    assert [trace[f"decision.level{i}.reduced"][1] for i in range(3)] == [db1 // 3, db2 // 3, db3 // 3]


def test_zero_parameters_give_tied_logits(rng):
    net = build_network(SMALL, 0)
    for _, t in net.named_parameters():
        t.data[...] = 0
    logits = net.forward(rand_input(rng, 3, SMALL))
    assert np.all(logits == 0)
    np.testing.assert_allclose(softmax(logits), 0.5)


def test_wrong_input_size(rng):
    with pytest.raises(ShapeMismatch):
        build_network(SMALL, 0).forward(rng.standard_normal((1, 3, 32, 32)).astype(np.float32))


def test_invalid_config():
    with pytest.raises(InvalidConfig):
        NetConfig(growth_rate=0).validate()
    with pytest.raises(InvalidConfig):
        NetConfig(num_classes=3).validate()
    with pytest.raises(InvalidConfig):
        NetConfig(input_size=(30, 30)).validate()


def test_parameter_count_default():
    assert count_parameters(build_network(NetConfig(), 0)) == DEFAULT_PARAMS_K12
    assert count_parameters(build_network(NetConfig(growth_rate=24), 0)) == DEFAULT_PARAMS_K24


def test_parameter_count_excludes_running_stats():
    net = build_network(SMALL, 0)
    n_buffers = sum(t.size for _, t in net.named_buffers())
    assert n_buffers > 0
    assert count_parameters(net) == sum(t.size for _, t in net.named_parameters())


def test_every_parameter_receives_gradient(rng):
    cfg = NetConfig(growth_rate=4, layers_per_block=(2, 2, 2), input_size=(16, 16))
    net = build_network(cfg, 3)
    x = rand_input(rng, 4, cfg)
    _, g = softmax_cross_entropy(net.forward(x, training=True), np.array([0, 1, 0, 1]))
    net.zero_grad()
    net.backward(g.astype(np.float32))
    dead = [n for n, t in net.named_parameters() if not np.any(t.grad)]
    assert dead == []


def test_network_gradient_matches_finite_differences(rng):
    """End-to-end chain rule check on a tiny network in float64."""
    cfg = NetConfig(growth_rate=2, layers_per_block=(1, 1, 1), input_size=(8, 8), level_fc_dim=3)
    net = build_network(cfg, 11)
    x = rng.standard_normal((3, 3, 8, 8))
    labels = np.array([0, 1, 1])
    params = net.parameters()
    for t in params.values():
        t.data = t.data.astype(np.float64)
        t.grad = np.zeros_like(t.data)
    for _, t in net.named_buffers():
        t.data = t.data.astype(np.float64)

    def loss():
        return softmax_cross_entropy(net.forward(x, training=True), labels)[0]

    _, g = softmax_cross_entropy(net.forward(x, training=True), labels)
    net.zero_grad()
    net.backward(g)
    from aesnet.tensor_core.gradcheck import numeric_grad, relative_error

    for name in ["stem.conv.weight", "block2.layer0.conv.weight", "trans1.conv.weight", "decision.level1.fc.weight", "block3.layer0.bn.gamma"]:
        num = numeric_grad(loss, params[name].data, h=1e-5)
        assert relative_error(params[name].grad, num) <= 1e-4, name


def test_eval_batch_invariance(rng):
    net = build_network(SMALL, 2)
    x = rand_input(rng, 5, SMALL)
    for _ in range(3):
        net.forward(x, training=True)  # move running statistics off their defaults
    batched = net.forward(x, training=False)
    single = np.concatenate([net.forward(x[i:i + 1], training=False) for i in range(5)])
    assert np.array_equal(batched, single)


def test_k24_has_more_parameters_than_k12():
    small = count_parameters(build_network(NetConfig(growth_rate=12, layers_per_block=(3, 3, 3)), 0))
    big = count_parameters(build_network(NetConfig(growth_rate=24, layers_per_block=(3, 3, 3)), 0))
    assert big > small
