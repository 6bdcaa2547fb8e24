import numpy as np
import pytest

from aesnet.aesthetic_net import NetConfig, build_network
from aesnet.coherence import BatchPlan, build_fallback_index
from aesnet.errors import (
    EmptySplit,
    FormatViolation,
    InvalidConfig,
    NameMismatch,
    NonFiniteLoss,
    PlanMismatch,
    ShapeMismatch,
)
from aesnet.images import ImageStore
from aesnet.trainer import (
    LrSchedule,
    OptimizerState,
    TrainConfig,
    iter_training,
    load_checkpoint,
    load_into,
    lr_at,
    save_checkpoint,
    sgd_momentum_step,
    train,
)

TINY = NetConfig(growth_rate=4, layers_per_block=(1, 1, 1), input_size=(16, 16), level_fc_dim=8)


class TestSgd:
    def step(self, w, g, state, lr=0.1):
        params, grads = {"w": w}, {"w": np.array([g])}
        sgd_momentum_step(params, grads, state, lr)
        return state.velocity["w"][0], w[0]

    def test_two_steps(self):
        state = OptimizerState(momentum=0.9)
        w = np.array([1.0])
        v, wv = self.step(w, 0.5, state)
        assert v == pytest.approx(-0.05) and wv == pytest.approx(0.95)
        v, wv = self.step(w, 0.5, state)
        assert v == pytest.approx(-0.095) and wv == pytest.approx(0.855)

    def test_zero_momentum_is_plain_sgd(self, rng):
        w = rng.standard_normal(5)
        g = rng.standard_normal(5)
        expected = w - 0.3 * g
        sgd_momentum_step({"w": w}, {"w": g}, OptimizerState(momentum=0.0), 0.3)
        np.testing.assert_allclose(w, expected)

    def test_zero_gradient(self, rng):
        w = rng.standard_normal(4)
        v0 = rng.standard_normal(4)
        state = OptimizerState(momentum=0.9, velocity={"w": v0.copy()})
        w_before = w.copy()
        sgd_momentum_step({"w": w}, {"w": np.zeros(4)}, state, 0.1)
        np.testing.assert_allclose(state.velocity["w"], 0.9 * v0)
        np.testing.assert_allclose(w, w_before + 0.9 * v0)

    def test_zero_gradient_and_velocity_leaves_params(self, rng):
        w = rng.standard_normal(4)
        before = w.copy()
        sgd_momentum_step({"w": w}, {"w": np.zeros(4)}, OptimizerState(), 0.1)
        assert np.array_equal(w, before)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            sgd_momentum_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, OptimizerState(), 0.1)

    def test_bad_momentum(self):
        with pytest.raises(InvalidConfig):
            OptimizerState(momentum=1.0)


class TestSchedule:
    def test_values(self):
        s = LrSchedule(0.01, 0.1, 10)
        assert lr_at(s, 0) == 0.01
        assert lr_at(s, 12) == pytest.approx(0.001)
        assert lr_at(s, 25) == pytest.approx(0.0001)

    def test_non_increasing(self):
        s = LrSchedule(0.05, 0.5, 3)
        lrs = [lr_at(s, e) for e in range(50)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_invalid(self):
        with pytest.raises(InvalidConfig):
            LrSchedule(0.01, 0.0, 10)
        with pytest.raises(InvalidConfig):
            LrSchedule(0.01, 0.1, 0)


@pytest.fixture(scope="module")
def tiny_setup(toy_dataset):
    directory, entries = toy_dataset
    store = ImageStore(directory, TINY.input_size)
    return entries[:16], store, build_fallback_index(entries[:16], store)


def run_epochs(setup, cfg, seed=0):
    entries, store, index = setup
    net = build_network(TINY, seed)
    history = [m for m in iter_training(net, entries, store, cfg, index)]
    return net, history


def test_deterministic_runs(tiny_setup):
    cfg = TrainConfig(epochs=2, batch_size=4, seed=3)
    _, a = run_epochs(tiny_setup, cfg)
    _, b = run_epochs(tiny_setup, cfg)
    assert [m.line() for m in a] == [m.line() for m in b]
    assert a[0].loss == b[0].loss


def test_random_mode_runs(tiny_setup):
    _, history = run_epochs(tiny_setup, TrainConfig(epochs=1, batch_size=4, coherent=False))
    assert 0.0 <= history[0].accuracy <= 1.0
    assert history[0].line().startswith("epoch=1 loss=")


def test_plan_mismatch_before_any_step(tiny_setup):
    entries, store, index = tiny_setup
    net = build_network(TINY, 0)
    before = {n: t.data.copy() for n, t in net.named_parameters()}
    bad = BatchPlan(2, 0, [[entries[0].image_id, "not-in-manifest"]])
    with pytest.raises(PlanMismatch):
        list(iter_training(net, entries, store, TrainConfig(epochs=1, batch_size=2), plans=[bad]))
    assert all(np.array_equal(before[n], t.data) for n, t in net.named_parameters())


def test_explicit_plans_are_used(tiny_setup):
    entries, store, _ = tiny_setup
    net = build_network(TINY, 0)
    ids = [e.image_id for e in entries[:4]]
    plan = BatchPlan(2, 0, [ids[:2], ids[2:]])
    history = list(iter_training(net, entries, store, TrainConfig(epochs=1, batch_size=2, coherent=False), plans=[plan]))
    assert len(history) == 1


def test_non_finite_loss(tiny_setup):
    entries, store, index = tiny_setup

    class NanStore:
        def batch(self, paths):
            return np.full((len(paths), 3, 16, 16), np.nan, dtype=np.float32)

    with pytest.raises(NonFiniteLoss):
        list(iter_training(build_network(TINY, 0), entries, NanStore(), TrainConfig(epochs=1, batch_size=4), index))


def test_empty_train_split(tiny_setup):
    entries, store, index = tiny_setup
    from dataclasses import replace

    test_only = [replace(e, split="test") for e in entries]
    with pytest.raises(EmptySplit):
        list(iter_training(build_network(TINY, 0), test_only, store, TrainConfig(epochs=1, batch_size=4), index))


def test_loss_decreases_over_twenty_epochs(toy_dataset):
    directory, entries = toy_dataset
    cfg_net = NetConfig(growth_rate=12, layers_per_block=(2, 2, 2), input_size=(32, 32))
    store = ImageStore(directory, cfg_net.input_size)
    index = build_fallback_index(entries, store)
    history = list(iter_training(build_network(cfg_net, 0), entries, store, TrainConfig(epochs=20, batch_size=8), index))
    means = [np.mean([m.loss for m in history[i:i + 5]]) for i in range(0, 20, 5)]
    assert all(a > b for a, b in zip(means, means[1:])), means


class TestCheckpoint:
    @pytest.fixture
    def trained(self, tiny_setup, tmp_path):
        entries, store, index = tiny_setup
        net = build_network(TINY, 0)
        _, opt, _ = train(net, entries, store, TrainConfig(epochs=1, batch_size=4), index,
                          metrics_path=tmp_path / "metrics.txt")
        return net, opt, store.batch([e.path for e in entries[:5]])

    def test_metrics_file(self, trained, tmp_path):
        lines = (tmp_path / "metrics.txt").read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("epoch=1 loss=") and " acc=" in lines[0] and " lr=" in lines[0]

    def test_roundtrip(self, trained, tmp_path):
        net, opt, probe = trained
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(net, opt, a)
        net2, opt2 = load_checkpoint(a)
        save_checkpoint(net2, opt2, b)
        assert a.read_bytes() == b.read_bytes()
        assert net2.cfg == net.cfg
        assert np.array_equal(net.forward(probe), net2.forward(probe))
        for name, v in opt.velocity.items():
            assert np.array_equal(v, opt2.velocity[name])

    def test_header(self, trained, tmp_path):
        net, opt, _ = trained
        path = tmp_path / "c.ckpt"
        save_checkpoint(net, None, path)
        raw = path.read_bytes()
        assert raw[:4] == b"AESN"
        assert int.from_bytes(raw[4:8], "little") == 1
        n_tensors = int.from_bytes(raw[8:16], "little")
        assert n_tensors == 6 + len(list(net.named_parameters())) + len(list(net.named_buffers()))
        assert load_checkpoint(path)[1] is None

    def test_truncated(self, trained, tmp_path):
        net, opt, _ = trained
        path = tmp_path / "t.ckpt"
        save_checkpoint(net, opt, path)
        path.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(FormatViolation):
            load_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(FormatViolation):
            load_checkpoint(path)

    def test_name_mismatch(self, trained, tmp_path):
        net, opt, _ = trained
        path = tmp_path / "n.ckpt"
        save_checkpoint(net, opt, path)
        other = build_network(NetConfig(growth_rate=4, layers_per_block=(2, 1, 1), input_size=(16, 16), level_fc_dim=8))
        with pytest.raises(NameMismatch):
            load_into(other, path)
