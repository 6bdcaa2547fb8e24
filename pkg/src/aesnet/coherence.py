"""Image embeddings, exact nearest neighbours and coherent minibatch planning.

A coherent batch is grown around a randomly drawn seed image from its
nearest unconsumed neighbours of *both* labels, so every batch mixes
attractive and unattractive images that look alike.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ava_dataset import ATTRACTIVE, UNATTRACTIVE, ManifestEntry
from .colorspace import LabImage
from .images import ImageStore, load_lab
from .errors import DimensionMismatch, EmptyClass, InvalidBatchSize, IoFailure, SchemaViolation, UnknownId

FALLBACK_GRID = 8


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) matrix averaging input cells by their overlap with each output cell."""
    edges = np.linspace(0.0, n_in, n_out + 1)
    w = np.zeros((n_out, n_in))
    for o in range(n_out):
        lo, hi = edges[o], edges[o + 1]
        for i in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            w[o, i] = min(hi, i + 1) - max(lo, i)
        w[o] /= hi - lo
    return w


def fallback_embed(img: LabImage, dim: int = FALLBACK_GRID * FALLBACK_GRID) -> np.ndarray:
    """L channel area-averaged onto an 8x8 grid, scaled to [0, 1], flattened row-major."""
    side = int(round(np.sqrt(dim)))
    if side * side != dim:
        raise DimensionMismatch(f"fallback embedding dimension must be a square, got {dim}")
    plane = img.data[..., 0].astype(np.float64) / 100.0
    grid = _area_weights(img.height, side) @ plane @ _area_weights(img.width, side).T
    return np.clip(grid, 0.0, 1.0).astype(np.float32).reshape(-1)


def build_fallback_index(entries: Sequence[ManifestEntry], store: ImageStore) -> "EmbeddingIndex":
    """Fallback embeddings for every manifest entry, decoded at native resolution."""
    return EmbeddingIndex((e.image_id, fallback_embed(load_lab(store.resolve(e.path)))) for e in entries)


class EmbeddingIndex:
    """Immutable id -> vector map with exact Euclidean kNN."""

    def __init__(self, entries: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]], dim: int | None = None):
        items = list(entries.items() if isinstance(entries, Mapping) else entries)
        ids = [str(i) for i, _ in items]
        if len(set(ids)) != len(ids):
            raise SchemaViolation("duplicate image ids in embedding index")
        if items:
            vectors = np.stack([np.asarray(v, dtype=np.float32).reshape(-1) for _, v in items])
            if dim is not None and vectors.shape[1] != dim:
                raise DimensionMismatch(f"expected dimension {dim}, got {vectors.shape[1]}")
            dim = vectors.shape[1]
            if not np.all(np.isfinite(vectors)):
                raise SchemaViolation("embedding vectors must be finite")
        else:
            vectors = np.zeros((0, dim or 0), dtype=np.float32)
        self.dim = int(dim or 0)
        self.ids = ids
        self.vectors = vectors
        self.vectors.flags.writeable = False
        self._row = {image_id: i for i, image_id in enumerate(ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._row

    def vector(self, image_id: str) -> np.ndarray:
        try:
            return self.vectors[self._row[image_id]]
        except KeyError:
            raise UnknownId(f"image id {image_id!r} not in embedding index") from None

    def rows(self, ids: Iterable[str]) -> np.ndarray:
        try:
            return np.array([self._row[i] for i in ids], dtype=np.int64)
        except KeyError as exc:
            raise UnknownId(f"image id {exc.args[0]!r} not in embedding index") from None

    def subset(self, ids: Iterable[str]) -> "EmbeddingIndex":
        ids = list(ids)
        return EmbeddingIndex(zip(ids, self.vectors[self.rows(ids)]), dim=self.dim)


def _distances(query: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    diff = vectors.astype(np.float64) - query.astype(np.float64)
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def _rank(query: np.ndarray, cand_vectors: np.ndarray, cand_ids: Sequence[str], k: int) -> list[str]:
    dist = _distances(query, cand_vectors)
    order = np.lexsort((np.asarray(cand_ids, dtype=str), dist))[:k]
    return [cand_ids[i] for i in order]


def knn(index: EmbeddingIndex, query_id: str, k: int, restrict_to: Iterable[str] | None = None) -> list[str]:
    """The ``k`` ids nearest to ``query_id`` (itself excluded); ties by id ascending."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    query = index.vector(query_id)
    if restrict_to is None:
        cand = [i for i in index.ids if i != query_id]
    else:
        cand = [i for i in restrict_to if i != query_id]
    if not cand:
        return []
    return _rank(query, index.vectors[index.rows(cand)], cand, k)


@dataclass
class BatchPlan:
    batch_size: int
    seed: int
    batches: list[list[str]] = field(default_factory=list)
    single_class: bool = False

    def ids(self) -> list[str]:
        return [i for b in self.batches for i in b]

    def serialize(self) -> str:
        lines = [f"#batch_size={self.batch_size} seed={self.seed}"]
        lines.extend(",".join(b) for b in self.batches)
        return "\n".join(lines) + "\n"


def _check_batch_size(batch_size: int) -> None:
    if batch_size < 2 or batch_size % 2:
        raise InvalidBatchSize(f"batch size must be even and at least 2, got {batch_size}")


def plan_epoch(index: EmbeddingIndex, entries: Sequence[ManifestEntry], batch_size: int, seed: int) -> BatchPlan:
    """Coherent, epoch-exhaustive batch plan over the train entries.

    Each batch starts from a seed drawn uniformly among unconsumed images and
    takes up to B/2 nearest unconsumed images from each label (the seed
    counts toward its own label); a label that runs short is backfilled with
    the seed's nearest unconsumed images of the other label.
    """
    _check_batch_size(batch_size)
    train = [e for e in entries if e.split == "train"]
    if not train:
        raise SchemaViolation("no train entries to plan")
    label_of = {e.image_id: e.label for e in train}
    if len(label_of) != len(train):
        raise SchemaViolation("duplicate image ids among train entries")
    plan = BatchPlan(batch_size, seed)
    empty = [lbl for lbl in (UNATTRACTIVE, ATTRACTIVE) if lbl not in label_of.values()]
    if empty:
        warnings.warn(EmptyClass(f"no train images labelled {empty[0]}; planning single-class batches"), stacklevel=2)
        plan.single_class = True

    ids = np.array(sorted(label_of))  # row order doubles as the id tie-break order
    is_attr = np.array([label_of[i] == ATTRACTIVE for i in ids])
    vectors = index.vectors[index.rows(ids)]
    free = np.ones(len(ids), dtype=bool)
    rng = np.random.default_rng(seed)
    half = batch_size // 2

    def nearest(query, mask, k):
        cand = np.flatnonzero(mask)
        if k <= 0 or not cand.size:
            return cand[:0]
        order = np.lexsort((cand, _distances(query, vectors[cand])))
        return cand[order[:k]]

    while free.any():
        pool = np.flatnonzero(free)
        seed_row = pool[int(rng.integers(pool.size))]
        free[seed_row] = False
        own = is_attr == is_attr[seed_row]
        query = vectors[seed_row]
        batch = [seed_row]
        for mask, k in ((own, half - 1), (~own, half), (own, None), (~own, None)):
            k = batch_size - len(batch) if k is None else k
            picked = nearest(query, free & mask, k)
            free[picked] = False
            batch.extend(picked.tolist())
        plan.batches.append([str(ids[r]) for r in batch])
    return plan


def random_plan(entries: Sequence[ManifestEntry], batch_size: int, seed: int) -> BatchPlan:
    """Seeded uniform shuffle cut into batches: the non-coherent baseline."""
    if batch_size < 1:
        raise InvalidBatchSize(f"batch size must be positive, got {batch_size}")
    ids = sorted(e.image_id for e in entries if e.split == "train")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    return BatchPlan(batch_size, seed, [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)])


def mean_intra_batch_distance(index: EmbeddingIndex, plan: BatchPlan) -> float:
    """Mean pairwise Euclidean distance inside each batch, averaged over batches."""
    per_batch = []
    for batch in plan.batches:
        if len(batch) < 2:
            continue
        v = index.vectors[index.rows(batch)].astype(np.float64)
        d = np.sqrt(((v[:, None, :] - v[None, :, :]) ** 2).sum(-1))
        iu = np.triu_indices(len(batch), k=1)
        per_batch.append(d[iu].mean())
    return float(np.mean(per_batch)) if per_batch else 0.0


def write_embeddings(index: EmbeddingIndex, path: str | Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"#dim={index.dim}\n")
            for image_id, vec in zip(index.ids, index.vectors):
                # repr of float32 -> float is shortest round-tripping decimal
                fh.write(image_id + "," + ",".join(repr(float(x)) for x in vec) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write embeddings {path}: {exc}") from exc


def read_embeddings(path: str | Path) -> EmbeddingIndex:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read embeddings {path}: {exc}") from exc
    if not lines or not lines[0].startswith("#dim="):
        raise SchemaViolation(f"{path}: first line must be '#dim=<d>'")
    try:
        dim = int(lines[0][len("#dim="):])
    except ValueError:
        raise SchemaViolation(f"{path}: bad dimension header {lines[0]!r}") from None
    items = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        image_id, *values = line.split(",")
        if len(values) != dim:
            raise DimensionMismatch(f"{path} line {line_no}: expected {dim} values, got {len(values)}")
        try:
            items.append((image_id, np.array([float(v) for v in values], dtype=np.float32)))
        except ValueError:
            raise SchemaViolation(f"{path} line {line_no}: non-numeric value") from None
    return EmbeddingIndex(items, dim=dim)


def write_plan(plan: BatchPlan, path: str | Path) -> None:
    try:
        Path(path).write_text(plan.serialize(), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write plan {path}: {exc}") from exc


def read_plan(path: str | Path) -> BatchPlan:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read plan {path}: {exc}") from exc
    header = lines[0].split() if lines else []
    try:
        meta = dict(tok.lstrip("#").split("=", 1) for tok in header)
        plan = BatchPlan(int(meta["batch_size"]), int(meta["seed"]))
    except (KeyError, ValueError):
        raise SchemaViolation(f"{path}: first line must be '#batch_size=<B> seed=<s>'") from None
    plan.batches = [line.split(",") for line in lines[1:] if line.strip()]
    return plan
