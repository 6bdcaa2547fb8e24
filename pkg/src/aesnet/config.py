"""``key = value`` configuration files merged with command-line overrides.

Precedence: overrides > file > defaults. Unknown keys are rejected.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Mapping

from .aesthetic_net import NetConfig
from .errors import InvalidConfig, IoFailure, ParseFailure, UnknownKey
from .trainer import TrainConfig


def _int_tuple(n: int) -> Callable[[str], tuple[int, ...]]:
    def parse(text: str) -> tuple[int, ...]:
        parts = [p for p in re.split(r"[\s,x()\[\]]+", text.strip()) if p]
        if len(parts) != n:
            raise ValueError(f"expected {n} integers, got {text!r}")
        return tuple(int(p) for p in parts)

    return parse


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


NET_KEYS: dict[str, Callable[[str], Any]] = {
    "growth_rate": int,
    "layers_per_block": _int_tuple(3),
    "stem_channels": int,
    "input_size": _int_tuple(2),
    "level_fc_dim": int,
    "num_classes": int,
}
TRAIN_KEYS: dict[str, Callable[[str], Any]] = {
    "epochs": int,
    "batch_size": int,
    "momentum": float,
    "lr": float,
    "lr_gamma": float,
    "step_epochs": int,
    "seed": int,
    "coherent": _bool,
    "weight_decay": float,
}
PARSERS = {**NET_KEYS, **TRAIN_KEYS}


@dataclass(frozen=True)
class GlobalConfig:
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: Mapping[str, str] = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = []
        for f in fields(self.net):
            v = getattr(self.net, f.name)
            out.append(f"{f.name} = {','.join(map(str, v)) if isinstance(v, tuple) else v}")
        out.extend(f"{f.name} = {getattr(self.train, f.name)}" for f in fields(self.train))
        return out


def parse_config_text(text: str) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ParseFailure(f"expected 'key = value', got {raw!r}", line_no)
        if key not in PARSERS:
            raise UnknownKey(f"line {line_no}: unknown key {key!r}")
        try:
            values[key] = PARSERS[key](value)
        except ValueError as exc:
            raise ParseFailure(f"{key}: {exc}", line_no) from None
    return values


def _coerce(key: str, value: Any) -> Any:
    if key not in PARSERS:
        raise UnknownKey(f"unknown key {key!r}")
    if isinstance(value, str):
        try:
            return PARSERS[key](value)
        except ValueError as exc:
            raise ParseFailure(f"{key}: {exc}") from None
    return value


def resolve(values: Mapping[str, Any], paths: Mapping[str, str] | None = None) -> GlobalConfig:
    net_kwargs = {k: v for k, v in values.items() if k in NET_KEYS}
    train_kwargs = {k: v for k, v in values.items() if k in TRAIN_KEYS}
    net = NetConfig(**net_kwargs)
    net.validate()
    train = TrainConfig(**train_kwargs)
    train.validate()
    return GlobalConfig(net, train, dict(paths or {}))


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None, paths: Mapping[str, str] | None = None) -> GlobalConfig:
    """Read ``path`` (None means defaults only) and apply non-None ``overrides``."""
    values: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read config {path}: {exc}") from exc
        values.update(parse_config_text(text))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, value)
    try:
        return resolve(values, paths)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from None
