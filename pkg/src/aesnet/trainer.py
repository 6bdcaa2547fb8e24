"""SGD with momentum, step learning-rate decay, the epoch loop, and checkpoints."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from . import checkpoint as ckpt
from .aesthetic_net import AestheticNet, build_network
from .ava_dataset import ManifestEntry
from .coherence import BatchPlan, EmbeddingIndex, plan_epoch, random_plan
from .errors import EmptySplit, InvalidConfig, NameMismatch, NonFiniteLoss, PlanMismatch, ShapeMismatch
from .images import ImageStore
from .tensor_core import softmax_cross_entropy


@dataclass
class OptimizerState:
    momentum: float = 0.9
    lr0: float = 0.01
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidConfig(f"momentum must lie in [0, 1), got {self.momentum}")


@dataclass(frozen=True)
class LrSchedule:
    lr0: float = 0.01
    gamma: float = 0.1
    step_epochs: int = 30

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidConfig(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.step_epochs < 1:
            raise InvalidConfig(f"step_epochs must be at least 1, got {self.step_epochs}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 90
    batch_size: int = 32
    momentum: float = 0.9
    lr: float = 0.01
    lr_gamma: float = 0.1
    step_epochs: int = 30
    seed: int = 0
    coherent: bool = True
    weight_decay: float = 0.0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfig("epochs and batch_size must be positive")
        if self.lr <= 0:
            raise InvalidConfig(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise InvalidConfig("weight_decay must be non-negative")
        if self.seed < 0:
            raise InvalidConfig("seed must be non-negative")
        self.schedule()

    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr, self.lr_gamma, self.step_epochs)


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int  # 1-based
    loss: float
    accuracy: float
    lr: float

    def line(self) -> str:
        return f"epoch={self.epoch} loss={self.loss:.6f} acc={self.accuracy:.6f} lr={self.lr:.6g}"


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    """Step decay: lr0 * gamma ** floor(epoch / step_epochs), epochs counted from 0."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    return schedule.lr0 * schedule.gamma ** (epoch // schedule.step_epochs)


def sgd_momentum_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    weight_decay: float = 0.0,
) -> OptimizerState:
    """In-place update: v <- momentum * v - lr * g; w <- w + v."""
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} != parameter {w.shape}")
        if weight_decay:
            g = g + weight_decay * w
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(w)
        elif v.shape != w.shape:
            raise ShapeMismatch(f"{name}: velocity {v.shape} != parameter {w.shape}")
        v *= state.momentum
        v -= lr * g
        w += v
    return state


def new_optimizer(net: AestheticNet, cfg: TrainConfig) -> OptimizerState:
    state = OptimizerState(cfg.momentum, cfg.lr)
    state.velocity = {name: np.zeros_like(t.data) for name, t in net.named_parameters()}
    return state


def check_plan(plan: BatchPlan, train_ids: set[str]) -> None:
    stray = [i for i in plan.ids() if i not in train_ids]
    if stray:
        raise PlanMismatch(f"plan references {len(stray)} ids outside the manifest train split, e.g. {stray[0]!r}")


def train_step(net: AestheticNet, opt: OptimizerState, x: np.ndarray, y: np.ndarray, lr: float, weight_decay: float = 0.0) -> tuple[float, int]:
    """One forward/backward/update. Returns (mean loss, correct count)."""
    logits = net.forward(x, training=True)
    loss, grad = softmax_cross_entropy(logits, y)
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"loss became {loss} (lr={lr}); logits range [{logits.min()}, {logits.max()}]")
    net.zero_grad()
    net.backward(grad.astype(np.float32))
    params = {name: t.data for name, t in net.named_parameters()}
    grads = {name: t.grad for name, t in net.named_parameters()}
    sgd_momentum_step(params, grads, opt, lr, weight_decay)
    return loss, int(np.sum(np.argmax(logits, axis=1) == y))


PlanSource = Sequence[BatchPlan] | Callable[[int], BatchPlan] | None


def iter_training(
    net: AestheticNet,
    entries: Sequence[ManifestEntry],
    store: ImageStore,
    cfg: TrainConfig,
    index: EmbeddingIndex | None = None,
    plans: PlanSource = None,
    opt: OptimizerState | None = None,
) -> Iterator[EpochMetrics]:
    """Train epoch by epoch, yielding metrics after each.

    Without explicit ``plans`` each epoch gets a fresh plan seeded with
    ``cfg.seed + epoch``: coherent (needs ``index``) or a random shuffle.
    """
    cfg.validate()
    train = [e for e in entries if e.split == "train"]
    if not train:
        raise EmptySplit("manifest has no train entries")
    train_ids = {e.image_id for e in train}
    by_id = {e.image_id: e for e in train}
    if cfg.coherent and plans is None and index is None:
        raise InvalidConfig("coherent training needs an embedding index")
    if plans is not None and not callable(plans):
        plans = list(plans)
        if len(plans) < cfg.epochs:
            raise PlanMismatch(f"{len(plans)} plans supplied for {cfg.epochs} epochs")
        for p in plans:
            check_plan(p, train_ids)

    if opt is None:
        opt = new_optimizer(net, cfg)
    schedule = cfg.schedule()
    for epoch in range(cfg.epochs):
        if plans is None:
            seed = cfg.seed + epoch
            plan = plan_epoch(index, train, cfg.batch_size, seed) if cfg.coherent else random_plan(train, cfg.batch_size, seed)
        elif callable(plans):
            plan = plans(epoch)
            check_plan(plan, train_ids)
        else:
            plan = plans[epoch]
        lr = lr_at(schedule, epoch)
        total_loss, correct, seen = 0.0, 0, 0
        for batch in plan.batches:
            x = store.batch([by_id[i].path for i in batch])
            y = np.array([by_id[i].class_id for i in batch])
            loss, hits = train_step(net, opt, x, y, lr, cfg.weight_decay)
            total_loss += loss * len(batch)
            correct += hits
            seen += len(batch)
        yield EpochMetrics(epoch + 1, total_loss / seen, correct / seen, lr)


def train(
    net: AestheticNet,
    entries: Sequence[ManifestEntry],
    store: ImageStore,
    cfg: TrainConfig,
    index: EmbeddingIndex | None = None,
    plans: PlanSource = None,
    opt: OptimizerState | None = None,
    metrics_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    on_epoch: Callable[[EpochMetrics], None] | None = None,
) -> tuple[AestheticNet, OptimizerState, list[EpochMetrics]]:
    """Run all ``cfg.epochs`` epochs; checkpoint after every epoch if a path is given."""
    if opt is None:
        opt = new_optimizer(net, cfg)
    history = []
    for m in iter_training(net, entries, store, cfg, index, plans, opt):
        history.append(m)
        if on_epoch is not None:
            on_epoch(m)
        if metrics_path is not None:
            with open(metrics_path, "a", encoding="utf-8") as fh:
                fh.write(m.line() + "\n")
        if checkpoint_path is not None:
            save_checkpoint(net, opt, checkpoint_path)
    return net, opt, history


def save_checkpoint(net: AestheticNet, opt: OptimizerState | None, path: str | Path) -> None:
    tensors = ckpt.config_tensors(net.cfg) + ckpt.net_tensors(net)
    if opt is not None:
        tensors.append(("optim.momentum", np.float32(opt.momentum)))
        tensors.append(("optim.lr0", np.float32(opt.lr0)))
        tensors.extend((f"velocity.{name}", v) for name, v in opt.velocity.items())
    ckpt.write_file(path, ckpt.encode_tensors(tensors))


def load_checkpoint(path: str | Path) -> tuple[AestheticNet, OptimizerState | None]:
    """Rebuild the network from the stored config and restore every tensor."""
    named = dict(ckpt.decode_tensors(ckpt.read_file(path)))
    net = build_network(ckpt.config_from_tensors(named))
    ckpt.load_state(net, named)
    opt = None
    if "optim.momentum" in named:
        opt = OptimizerState(float(named["optim.momentum"]), float(named["optim.lr0"]))
        opt.velocity = {name[len("velocity."):]: v.copy() for name, v in named.items() if name.startswith("velocity.")}
        params = dict(net.named_parameters())
        for name, v in opt.velocity.items():
            if name not in params or params[name].shape != v.shape:
                raise NameMismatch(f"velocity for unknown or mis-shaped parameter {name}")
    return net, opt


def load_into(net: AestheticNet, path: str | Path) -> None:
    """Restore a checkpoint into an existing network of matching config."""
    named = dict(ckpt.decode_tensors(ckpt.read_file(path)))
    ckpt.load_state(net, named)
