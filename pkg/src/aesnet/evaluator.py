"""Eval-mode inference: split accuracy, confusion matrix, single-image prediction."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .aesthetic_net import AestheticNet
from .ava_dataset import LABELS, ManifestEntry
from .errors import EmptySplit, IoFailure
from .images import ImageStore, preprocess
from .tensor_core import softmax


@dataclass
class EvalReport:
    split: str
    n: int
    accuracy: float
    confusion: np.ndarray  # rows = true class, cols = predicted; index 1 = attractive
    per_image: list[tuple[str, str, float]] = field(default_factory=list)

    @property
    def tp(self) -> int:
        return int(self.confusion[1, 1])

    @property
    def tn(self) -> int:
        return int(self.confusion[0, 0])

    @property
    def fp(self) -> int:
        return int(self.confusion[0, 1])

    @property
    def fn(self) -> int:
        return int(self.confusion[1, 0])

    def summary(self) -> str:
        return f"n={self.n} acc={self.accuracy:.6f} tp={self.tp} tn={self.tn} fp={self.fp} fn={self.fn}"


def predict_logits(net: AestheticNet, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode forward. Returns (labels, p_attractive); ties go to class 0."""
    logits = net.forward(x, training=False)
    # np.argmax returns the first maximum, i.e. unattractive on an exact tie
    return np.argmax(logits, axis=1), softmax(logits.astype(np.float64))[:, 1]


def evaluate(
    net: AestheticNet,
    entries: Sequence[ManifestEntry],
    split: str,
    store: ImageStore,
    batch_size: int = 32,
) -> EvalReport:
    chosen = [e for e in entries if e.split == split]
    if not chosen:
        raise EmptySplit(f"split {split!r} has no entries")
    confusion = np.zeros((2, 2), dtype=np.int64)
    per_image = []
    for start in range(0, len(chosen), batch_size):
        part = chosen[start:start + batch_size]
        pred, p = predict_logits(net, store.batch([e.path for e in part]))
        for e, yhat, prob in zip(part, pred, p):
            confusion[e.class_id, int(yhat)] += 1
            per_image.append((e.image_id, e.label, float(prob)))
    n = len(chosen)
    return EvalReport(split, n, float(np.trace(confusion)) / n, confusion, per_image)


def predict_one(net: AestheticNet, image_path: str | Path) -> tuple[str, float]:
    """Return (label, p_attractive) for one image file."""
    x = preprocess(image_path, net.cfg.input_size)[None]
    pred, p = predict_logits(net, x)
    return LABELS[int(pred[0])], float(p[0])


def write_per_image(report: EvalReport, path: str | Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for image_id, label, p in report.per_image:
                fh.write(f"{image_id},{label},{p!r}\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
