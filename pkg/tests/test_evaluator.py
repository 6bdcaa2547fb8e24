from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aesnet.aesthetic_net import NetConfig, build_network
from aesnet.errors import EmptySplit, MissingImage
from aesnet.evaluator import evaluate, predict_one, write_per_image
from aesnet.images import ImageStore

TINY = NetConfig(growth_rate=4, layers_per_block=(1, 1, 1), input_size=(16, 16), level_fc_dim=8)


def forced(bias):
    """A network whose logits are exactly ``bias`` for every input."""
    net = build_network(TINY, 0)
    params = dict(net.named_parameters())
    params["decision.final.weight"].data[...] = 0.0
    params["decision.final.bias"].data[...] = bias
    return net


@pytest.fixture(scope="module")
def store(toy_dataset):
    return ImageStore(toy_dataset[0], TINY.input_size)


@pytest.fixture(scope="module")
def test_entries(toy_dataset):
    # three attractive, one unattractive
    entries = toy_dataset[1]
    chosen = [entries[1], entries[3], entries[5], entries[0]]
    return [replace(e, split="test") for e in chosen]


def test_forced_attractive(store, test_entries):
    report = evaluate(forced([0.0, 1.0]), test_entries, "test", store)
    assert report.accuracy == pytest.approx(0.75)
    assert report.confusion.tolist() == [[0, 1], [0, 3]]
    assert (report.tp, report.tn, report.fp, report.fn) == (3, 0, 1, 0)
    assert report.summary() == "n=4 acc=0.750000 tp=3 tn=0 fp=1 fn=0"


def test_tie_goes_to_unattractive(store, test_entries):
    report = evaluate(forced([0.0, 0.0]), test_entries, "test", store)
    assert report.confusion.tolist() == [[1, 0], [3, 0]]
    assert all(p == 0.5 for _, _, p in report.per_image)


def test_zeroed_network_predicts_unattractive(store, test_entries):
    net = build_network(TINY, 0)
    for _, t in net.named_parameters():
        t.data[...] = 0.0
    report = evaluate(net, test_entries, "test", store)
    assert report.confusion[:, 1].sum() == 0


def test_per_image_recount(store, toy_dataset):
    entries = [replace(e, split="test") for e in toy_dataset[1][:20]]
    report = evaluate(build_network(TINY, 7), entries, "test", store, batch_size=6)
    # oracle: recompute the confusion matrix from the per-image rows
    confusion = np.zeros((2, 2), dtype=int)
    for _, label, p in report.per_image:
        confusion[int(label == "attractive"), int(p > 0.5)] += 1
    assert confusion.tolist() == report.confusion.tolist()
    assert report.confusion.sum() == report.n == 20
    assert report.accuracy == pytest.approx(np.trace(confusion) / 20)


@settings(max_examples=10, deadline=None)
@given(st.permutations(list(range(12))))
def test_order_invariance(store, toy_dataset, perm):
    entries = [replace(e, split="test") for e in toy_dataset[1][:12]]
    net = build_network(TINY, 1)
    base = evaluate(net, entries, "test", store, batch_size=5)
    shuffled = evaluate(net, [entries[i] for i in perm], "test", store, batch_size=5)
    assert base.accuracy == shuffled.accuracy
    assert np.array_equal(base.confusion, shuffled.confusion)
    assert dict((i, p) for i, _, p in base.per_image) == dict((i, p) for i, _, p in shuffled.per_image)


def test_predict_one_matches_report(store, test_entries):
    net = build_network(TINY, 2)
    report = evaluate(net, test_entries, "test", store)
    for entry, (image_id, _, p) in zip(test_entries, report.per_image):
        label, q = predict_one(net, entry.path)
        assert q == p
        assert label == ("attractive" if p > 0.5 else "unattractive")
    assert predict_one(net, test_entries[0].path) == predict_one(net, test_entries[0].path)


def test_predict_one_tie(test_entries):
    assert predict_one(forced([0.5, 0.5]), test_entries[0].path) == ("unattractive", 0.5)


def test_predict_one_missing(tmp_path):
    with pytest.raises(MissingImage):
        predict_one(build_network(TINY, 0), tmp_path / "absent.png")


def test_empty_split(store, toy_dataset):
    with pytest.raises(EmptySplit):
        evaluate(build_network(TINY, 0), toy_dataset[1], "test", store)


def test_missing_image_in_split(store, test_entries):
    broken = test_entries + [replace(test_entries[0], image_id="ghost", path="/nonexistent/ghost.png")]
    with pytest.raises(MissingImage):
        evaluate(build_network(TINY, 0), broken, "test", store)


def test_write_per_image(store, test_entries, tmp_path):
    report = evaluate(forced([0.0, 1.0]), test_entries, "test", store)
    out = tmp_path / "per_image.csv"
    write_per_image(report, out)
    rows = [line.split(",") for line in out.read_text().splitlines()]
    assert [r[0] for r in rows] == [e.image_id for e in test_entries]
    assert all(float(r[2]) == pytest.approx(1 / (1 + np.exp(-1.0))) for r in rows)
