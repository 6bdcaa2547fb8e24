"""Coherent vs random batching: train both modes over several seeds and compare accuracy.

Long-running; not part of the test suite. Without --manifest it runs on a
freshly generated toy set, which is far too easy to separate the modes.

    python3 scripts/ablation.py --manifest ava2.txt --images ava/ --epochs 30 --seeds 0 1 2
"""
from __future__ import annotations

import argparse
import tempfile
from dataclasses import replace

import numpy as np

from aesnet.aesthetic_net import NetConfig, build_network
from aesnet.ava_dataset import read_manifest
from aesnet.coherence import build_fallback_index
from aesnet.evaluator import evaluate
from aesnet.images import ImageStore
from aesnet.synthetic import write_toy_dataset
from aesnet.trainer import TrainConfig, train


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--manifest", default=None)
    p.add_argument("--images", default=None)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--size", type=int, default=64, help="square input size (multiple of 4)")
    p.add_argument("--growth-rate", type=int, default=12)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = p.parse_args()

    if args.manifest:
        entries, images = read_manifest(args.manifest), args.images
    else:
        images = tempfile.mkdtemp(prefix="aesnet-toy-")
        entries = write_toy_dataset(images, n_images=128, size=args.size)
        entries = [replace(e, split="test" if i % 4 == 0 else "train") for i, e in enumerate(entries)]

    net_cfg = NetConfig(growth_rate=args.growth_rate, layers_per_block=(6, 6, 6), input_size=(args.size, args.size))
    store = ImageStore(images, net_cfg.input_size)
    index = build_fallback_index([e for e in entries if e.split == "train"], store)
    split = "test" if any(e.split == "test" for e in entries) else "train"

    results: dict[str, list[float]] = {"coherent": [], "random": []}
    for seed in args.seeds:
        for mode in results:
            cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, seed=seed, coherent=mode == "coherent")
            net = build_network(net_cfg, seed)
            train(net, entries, store, cfg, index=index if cfg.coherent else None)
            acc = evaluate(net, entries, split, store).accuracy
            results[mode].append(acc)
            print(f"seed={seed} mode={mode} {split}_acc={acc:.4f}", flush=True)
    for mode, accs in results.items():
        print(f"{mode}: mean={np.mean(accs):.4f} std={np.std(accs):.4f}")


if __name__ == "__main__":
    main()
