"""AVA vote parsing, mean scores, AVA2 split construction and manifest I/O."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    EmptyVotes,
    InvalidConfig,
    IoFailure,
    MalformedLine,
    SchemaViolation,
)

log = logging.getLogger(__name__)

ATTRACTIVE = "attractive"
UNATTRACTIVE = "unattractive"
LABELS = (UNATTRACTIVE, ATTRACTIVE)  # index == class id
SPLITS = ("train", "test")
MANIFEST_FIELDS = ("image_id", "path", "mean_score", "label", "split")


@dataclass(frozen=True)
class VoteRecord:
    image_id: str
    votes: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.votes)


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    path: str
    mean_score: float
    label: str
    split: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise SchemaViolation(f"unknown label {self.label!r} for {self.image_id}")
        if self.split not in SPLITS:
            raise SchemaViolation(f"unknown split {self.split!r} for {self.image_id}")
        # the manifest stores 6 decimals; normalizing here keeps write/read an identity
        object.__setattr__(self, "mean_score", round(float(self.mean_score), 6))

    @property
    def class_id(self) -> int:
        return LABELS.index(self.label)


@dataclass(frozen=True)
class SplitConfig:
    top_frac: float = 0.1
    bottom_frac: float = 0.1
    test_frac: float = 0.5
    seed: int = 0
    extend_percentile: float | None = None

    def validate(self) -> None:
        for name in ("top_frac", "bottom_frac", "test_frac"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InvalidConfig(f"{name} must lie in (0, 1), got {v}")
        if self.top_frac + self.bottom_frac > 1.0:
            raise InvalidConfig("top_frac + bottom_frac must not exceed 1")
        if self.extend_percentile is not None and not 0.0 < self.extend_percentile < 1.0:
            raise InvalidConfig(f"extend_percentile must lie in (0, 1), got {self.extend_percentile}")
        if self.seed < 0:
            raise InvalidConfig("seed must be non-negative")


def parse_ava_metadata(lines: Iterable[str]) -> tuple[list[VoteRecord], list[MalformedLine]]:
    """Parse AVA.txt-style lines: ``row image_id v1 .. v10 [tags...]``.

    Malformed lines do not stop parsing; they are returned alongside the records.
    """
    records: list[VoteRecord] = []
    malformed: list[MalformedLine] = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 12:
            malformed.append(MalformedLine(line_no, line, f"expected at least 12 tokens, got {len(tokens)}"))
            continue
        try:
            votes = tuple(int(t) for t in tokens[2:12])
        except ValueError:
            malformed.append(MalformedLine(line_no, line, "non-integer vote count"))
            continue
        if any(v < 0 for v in votes):
            malformed.append(MalformedLine(line_no, line, "negative vote count"))
            continue
        records.append(VoteRecord(tokens[1], votes))
    for err in malformed:
        log.warning("skipping malformed metadata %s", err)
    return records, malformed


def mean_score(record: VoteRecord) -> float:
    total = record.total
    if total == 0:
        raise EmptyVotes(f"image {record.image_id} has no votes")
    weighted = sum(score * n for score, n in enumerate(record.votes, start=1))
    # int / int is correctly rounded in Python
    return weighted / total


def _image_path(image_dir: str | Path, image_id: str, ext: str) -> str:
    return os.path.join(str(image_dir), f"{image_id}{ext}")


def build_ava2(
    records: Sequence[VoteRecord],
    cfg: SplitConfig,
    image_dir: str | Path,
    ext: str = ".jpg",
) -> list[ManifestEntry]:
    """Build the AVA2 manifest (plus optional train-only percentile extension).

    Output order: AVA2 unattractive, AVA2 attractive (each in ascending score
    order), then extension entries in ascending score order.
    """
    cfg.validate()
    scored = []
    for r in records:
        if r.total == 0:
            log.warning("dropping image %s with zero votes", r.image_id)
            continue
        scored.append((mean_score(r), r.image_id))
    if not scored:
        raise EmptyInput("no usable vote records")
    scored.sort()
    n = len(scored)

    n_bottom = int(np.floor(cfg.bottom_frac * n))
    n_top = int(np.floor(cfg.top_frac * n))
    bottom = scored[:n_bottom]
    top = scored[n - n_top:] if n_top else []

    rng = np.random.default_rng(cfg.seed)
    entries: list[ManifestEntry] = []
    for label, group in ((UNATTRACTIVE, bottom), (ATTRACTIVE, top)):
        n_test = int(np.floor(cfg.test_frac * len(group)))
        test_idx = set(rng.permutation(len(group))[:n_test].tolist())
        for i, (score, image_id) in enumerate(group):
            split = "test" if i in test_idx else "train"
            entries.append(ManifestEntry(image_id, _image_path(image_dir, image_id, ext), score, label, split))

    if cfg.extend_percentile is not None:
        n_ext = int(np.floor(cfg.extend_percentile * n))
        if n_ext > 0:
            low_cut = scored[n_ext - 1][0]
            high_cut = scored[n - n_ext][0]
            taken = {image_id for _, image_id in bottom} | {image_id for _, image_id in top}
            for score, image_id in scored:
                if image_id in taken:
                    continue
                if score <= low_cut:
                    label = UNATTRACTIVE
                elif score >= high_cut:
                    label = ATTRACTIVE
                else:
                    continue
                entries.append(ManifestEntry(image_id, _image_path(image_dir, image_id, ext), score, label, "train"))
    return entries


def format_entry(e: ManifestEntry) -> str:
    return "\t".join(
        [
            f"image_id={e.image_id}",
            f"path={e.path}",
            f"mean_score={e.mean_score:.6f}",
            f"label={e.label}",
            f"split={e.split}",
        ]
    )


def parse_entry(line: str, line_no: int = 0) -> ManifestEntry:
    fields = line.rstrip("\n").split("\t")
    if len(fields) != len(MANIFEST_FIELDS):
        raise SchemaViolation(f"line {line_no}: expected {len(MANIFEST_FIELDS)} fields, got {len(fields)}")
    values = {}
    for expected, field in zip(MANIFEST_FIELDS, fields):
        key, sep, value = field.partition("=")
        if not sep or key != expected:
            raise SchemaViolation(f"line {line_no}: expected field {expected!r}, got {field!r}")
        values[key] = value
    try:
        score = float(values["mean_score"])
    except ValueError:
        raise SchemaViolation(f"line {line_no}: bad mean_score {values['mean_score']!r}") from None
    try:
        return ManifestEntry(values["image_id"], values["path"], score, values["label"], values["split"])
    except SchemaViolation as exc:
        raise SchemaViolation(f"line {line_no}: {exc}") from None


def write_manifest(entries: Iterable[ManifestEntry], path: str | Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for e in entries:
                fh.write(format_entry(e) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write manifest {path}: {exc}") from exc


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise IoFailure(f"cannot read manifest {path}: {exc}") from exc
    return [parse_entry(line, i) for i, line in enumerate(lines, start=1) if line.strip()]


def train_entries(entries: Iterable[ManifestEntry]) -> list[ManifestEntry]:
    return [e for e in entries if e.split == "train"]
