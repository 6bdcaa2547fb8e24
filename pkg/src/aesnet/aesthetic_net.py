"""Multi-level dense network for binary aesthetic classification.

stem -> dense block 1 -> transition -> dense block 2 -> transition -> dense block 3,
with the output of every dense block tapped into a decision head that reduces
each level to a third of its channels, pools, embeds it with a per-level FC
layer, and classifies the concatenated level vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, ShapeMismatch
from .tensor_core import (
    AvgPool2d,
    BatchNorm2d,
    Conv2d,
    GlobalAvgPool,
    Linear,
    Module,
    ReLU,
    Sequential,
    concat_channels,
    split_channels,
)


@dataclass(frozen=True)
class NetConfig:
    growth_rate: int = 12
    layers_per_block: tuple[int, int, int] = (6, 6, 6)
    stem_channels: int | None = None  # None -> 2 * growth_rate
    input_size: tuple[int, int] = (224, 224)
    level_fc_dim: int = 128
    num_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "layers_per_block", tuple(int(v) for v in self.layers_per_block))
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        if self.stem_channels is None:
            object.__setattr__(self, "stem_channels", 2 * int(self.growth_rate))

    def validate(self) -> None:
        if self.growth_rate < 1:
            raise InvalidConfig(f"growth_rate must be positive, got {self.growth_rate}")
        if len(self.layers_per_block) != 3 or any(n < 0 for n in self.layers_per_block):
            raise InvalidConfig(f"layers_per_block must be three non-negative ints, got {self.layers_per_block}")
        if self.stem_channels < 1 or self.level_fc_dim < 1:
            raise InvalidConfig("stem_channels and level_fc_dim must be positive")
        if len(self.input_size) != 2 or any(s < 4 or s % 4 for s in self.input_size):
            raise InvalidConfig(f"input_size must be two positive multiples of 4, got {self.input_size}")
        if self.num_classes != 2:
            raise InvalidConfig(f"num_classes must be 2, got {self.num_classes}")

    def block_channels(self) -> list[tuple[int, int]]:
        """(input, output) channel counts of the three dense blocks."""
        k = self.growth_rate
        c = self.stem_channels
        out = []
        for i, n_layers in enumerate(self.layers_per_block):
            out.append((c, c + n_layers * k))
            c = c + n_layers * k
            if i < 2:
                c //= 2
        return out


class DenseLayer(Sequential):
    """BN -> ReLU -> 3x3 conv producing ``growth_rate`` new channels."""

    def __init__(self, in_channels: int, growth_rate: int):
        super().__init__(bn=BatchNorm2d(in_channels), relu=ReLU(), conv=Conv2d(in_channels, growth_rate, 3, 1, 1))
        self.in_channels = in_channels


class DenseBlock(Module):
    def __init__(self, in_channels: int, growth_rate: int, n_layers: int):
        super().__init__()
        self.in_channels = in_channels
        self.growth_rate = growth_rate
        self.layers = [
            self.add_child(f"layer{i}", DenseLayer(in_channels + i * growth_rate, growth_rate))
            for i in range(n_layers)
        ]
        self.out_channels = in_channels + n_layers * growth_rate

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatch(f"dense block expects {self.in_channels} input channels, got shape {x.shape}")
        features = [x]
        for layer in self.layers:
            features.append(layer.forward(concat_channels(features), training))
        return concat_channels(features)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        widths = [self.in_channels] + [self.growth_rate] * len(self.layers)
        grads = [g.copy() for g in split_channels(grad_out, widths)]
        for i in range(len(self.layers) - 1, -1, -1):
            g_in = self.layers[i].backward(grads[i + 1])
            for j, g in enumerate(split_channels(g_in, widths[: i + 1])):
                grads[j] += g
        return grads[0]


class Transition(Sequential):
    """BN -> ReLU -> 1x1 conv to floor(C/2) channels -> 2x2 average pool."""

    def __init__(self, in_channels: int):
        if in_channels < 2:
            raise InvalidConfig(f"transition needs at least 2 channels, got {in_channels}")
        self.out_channels = in_channels // 2
        super().__init__(
            bn=BatchNorm2d(in_channels), relu=ReLU(), conv=Conv2d(in_channels, self.out_channels, 1), pool=AvgPool2d(2, 2)
        )

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ShapeMismatch(f"transition needs even spatial extents, got {x.shape[2:]}")
        return super().forward(x, training)


class LevelHead(Sequential):
    """1x1 conv to floor(C/3) channels -> global pool -> FC -> ReLU."""

    def __init__(self, in_channels: int, fc_dim: int):
        self.reduced_channels = in_channels // 3
        if self.reduced_channels < 1:
            raise InvalidConfig(f"decision level needs at least 3 channels, got {in_channels}")
        super().__init__(
            conv=Conv2d(in_channels, self.reduced_channels, 1), pool=GlobalAvgPool(), fc=Linear(self.reduced_channels, fc_dim), relu=ReLU()
        )


class DecisionModule(Module):
    def __init__(self, level_channels, fc_dim: int, num_classes: int = 2):
        super().__init__()
        self.fc_dim = fc_dim
        self.levels = [self.add_child(f"level{i}", LevelHead(c, fc_dim)) for i, c in enumerate(level_channels)]
        self.final = self.add_child("final", Linear(fc_dim * len(self.levels), num_classes))

    def forward(self, levels, training: bool = False, trace: dict | None = None) -> np.ndarray:
        if len(levels) != len(self.levels):
            raise ShapeMismatch(f"decision module expects {len(self.levels)} levels, got {len(levels)}")
        vectors = []
        for i, (head, x) in enumerate(zip(self.levels, levels)):
            reduced = head.layers[0].forward(x, training)
            if trace is not None:
                trace[f"decision.level{i}.reduced"] = reduced.shape
            v = reduced
            for layer in head.layers[1:]:
                v = layer.forward(v, training)
            vectors.append(v)
        joined = np.concatenate(vectors, axis=1)
        if trace is not None:
            trace["decision.concat"] = joined.shape
        return self.final.forward(joined, training)

    def backward(self, grad_logits: np.ndarray) -> list[np.ndarray]:
        g = self.final.backward(grad_logits)
        parts = np.split(g, len(self.levels), axis=1)
        return [head.backward(np.ascontiguousarray(p)) for head, p in zip(self.levels, parts)]


class AestheticNet(Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        k = cfg.growth_rate
        s = cfg.stem_channels
        self.stem = self.add_child("stem", Sequential(conv=Conv2d(3, s, 3, 1, 1), bn=BatchNorm2d(s), relu=ReLU()))
        chans = cfg.block_channels()
        self.blocks = [self.add_child(f"block{i + 1}", DenseBlock(cin, k, n)) for i, ((cin, _), n) in enumerate(zip(chans, cfg.layers_per_block))]
        self.transitions = [self.add_child(f"trans{i + 1}", Transition(chans[i][1])) for i in range(2)]
        self.decision = self.add_child("decision", DecisionModule([c for _, c in chans], cfg.level_fc_dim, cfg.num_classes))

    def forward(self, x: np.ndarray, training: bool = False, trace: dict | None = None) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != 3 or tuple(x.shape[2:]) != self.cfg.input_size:
            raise ShapeMismatch(f"expected (N, 3, {self.cfg.input_size[0]}, {self.cfg.input_size[1]}) input, got {x.shape}")
        h = self.stem.forward(x, training)
        if trace is not None:
            trace["stem"] = h.shape
        taps = []
        for i, block in enumerate(self.blocks):
            h = block.forward(h, training)
            taps.append(h)
            if trace is not None:
                trace[f"block{i + 1}"] = h.shape
            if i < 2:
                h = self.transitions[i].forward(h, training)
                if trace is not None:
                    trace[f"trans{i + 1}"] = h.shape
        logits = self.decision.forward(taps, training, trace)
        if trace is not None:
            trace["logits"] = logits.shape
        return logits

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        tap_grads = self.decision.backward(grad_logits)
        g = tap_grads[2]
        g = self.blocks[2].backward(g)
        g = self.transitions[1].backward(g) + tap_grads[1]
        g = self.blocks[1].backward(g)
        g = self.transitions[0].backward(g) + tap_grads[0]
        g = self.blocks[0].backward(g)
        return self.stem.backward(g)

    def parameters(self) -> dict:
        return dict(self.named_parameters())

    def buffers(self) -> dict:
        return dict(self.named_buffers())


def _he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def build_network(cfg: NetConfig, seed: int = 0) -> AestheticNet:
    """Construct and initialize the network deterministically from ``seed``.

    Conv and FC weights are He-normal; biases and BN betas zero; gammas one.
    """
    net = AestheticNet(cfg)
    rng = np.random.default_rng(seed)
    for name, t in net.named_parameters():
        if name.endswith(".weight"):
            fan_in = int(np.prod(t.shape[1:])) if t.data.ndim == 4 else t.shape[0]
            t.data[...] = _he_normal(rng, t.shape, fan_in)
    return net


def count_parameters(net: Module) -> int:
    """Total number of learnable scalars (running statistics excluded)."""
    return sum(t.size for _, t in net.named_parameters())


def layer_shapes(net: Module) -> list[tuple[str, tuple[int, ...]]]:
    return [(name, t.shape) for name, t in net.named_parameters()]
