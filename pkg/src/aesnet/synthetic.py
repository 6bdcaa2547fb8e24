"""Synthetic fixtures for desk-scale checks: toy images, vote tables, clustered embeddings."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .ava_dataset import ATTRACTIVE, UNATTRACTIVE, ManifestEntry, VoteRecord
from .coherence import EmbeddingIndex
from .images import save_rgb

# per-class mean colour of the toy images (unattractive, attractive)
TOY_COLORS = np.array([[170.0, 90.0, 70.0], [70.0, 110.0, 170.0]])


def toy_image(rng: np.random.Generator, class_id: int, size: int = 64, noise: float = 45.0) -> np.ndarray:
    """Colored noise whose mean hue depends on the class."""
    base = TOY_COLORS[class_id] + rng.normal(0.0, 20.0, size=3)
    pixels = base + rng.normal(0.0, noise, size=(size, size, 3))
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


def write_toy_dataset(directory: str | Path, n_images: int = 64, size: int = 64, seed: int = 0) -> list[ManifestEntry]:
    """Write ``n_images`` PNGs (half per class) and return an all-train manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n_images):
        class_id = i % 2
        path = directory / f"toy{i:04d}.png"
        save_rgb(toy_image(rng, class_id, size), path)
        score = 7.0 + rng.random() if class_id else 3.0 + rng.random()
        entries.append(ManifestEntry(f"toy{i:04d}", str(path), score, ATTRACTIVE if class_id else UNATTRACTIVE, "train"))
    return entries


def random_votes(rng: np.random.Generator, n: int, max_votes: int = 60) -> list[VoteRecord]:
    """Vote histograms with at least one vote each."""
    records = []
    for i in range(n):
        votes = rng.integers(0, max_votes, size=10)
        if votes.sum() == 0:
            votes[rng.integers(10)] = 1
        records.append(VoteRecord(f"{100000 + i}", tuple(int(v) for v in votes)))
    return records


def two_cluster_embeddings(
    rng: np.random.Generator, n: int = 200, dim: int = 8, separation: float = 10.0
) -> tuple[EmbeddingIndex, list[ManifestEntry]]:
    """Two well-separated Gaussian clusters; labels alternate independently of cluster."""
    centers = np.zeros((2, dim))
    centers[1, 0] = separation
    items, entries = [], []
    for i in range(n):
        image_id = f"e{i:04d}"
        cluster = int(rng.integers(2))
        items.append((image_id, centers[cluster] + rng.standard_normal(dim)))
        label = ATTRACTIVE if i % 2 else UNATTRACTIVE
        entries.append(ManifestEntry(image_id, f"{image_id}.jpg", 5.0, label, "train"))
    return EmbeddingIndex(items), entries
