"""Command-line entry point: ``aesnet <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import AesnetError, IoFailure

log = logging.getLogger("aesnet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_lines(path: str) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def cmd_build_dataset(args) -> int:
    from .ava_dataset import SplitConfig, build_ava2, parse_ava_metadata, write_manifest

    records, malformed = parse_ava_metadata(_read_lines(args.ava_meta))
    for err in malformed:
        print(f"MalformedLine: {err}", file=sys.stderr)
    cfg = SplitConfig(args.top_frac, args.bottom_frac, args.test_frac, args.seed, args.extend_percentile)
    entries = build_ava2(records, cfg, args.images, ext=args.ext)
    if args.check_files:
        missing = [e.path for e in entries if not Path(e.path).is_file()]
        for p in missing:
            log.warning("image file not found: %s", p)
    write_manifest(entries, args.out)
    n_test = sum(e.split == "test" for e in entries)
    print(f"records={len(records)} malformed={len(malformed)} entries={len(entries)} "
          f"train={len(entries) - n_test} test={n_test}")
    return 0


def cmd_lab_convert(args) -> int:
    from .colorspace import write_lab_raw
    from .images import load_lab

    img = load_lab(args.input)
    write_lab_raw(img, args.out)
    print(f"width={img.width} height={img.height}")
    return 0


def cmd_embed(args) -> int:
    from .ava_dataset import read_manifest
    from .coherence import build_fallback_index, write_embeddings
    from .images import ImageStore

    entries = read_manifest(args.manifest)
    index = build_fallback_index(entries, ImageStore(args.images, None, cache=False))
    write_embeddings(index, args.out)
    print(f"embedded={len(index)} dim={index.dim}")
    return 0


def cmd_plan_batches(args) -> int:
    from .ava_dataset import read_manifest
    from .coherence import plan_epoch, read_embeddings, write_plan

    plan = plan_epoch(read_embeddings(args.embeddings), read_manifest(args.manifest), args.batch_size, args.seed)
    write_plan(plan, args.out)
    print(f"batches={len(plan.batches)} images={len(plan.ids())}")
    return 0


def cmd_train(args) -> int:
    from .aesthetic_net import build_network
    from .ava_dataset import read_manifest
    from .coherence import build_fallback_index, read_embeddings
    from .config import load_config
    from .images import ImageStore
    from .trainer import train

    overrides = {"epochs": args.epochs, "seed": args.seed, "batch_size": args.batch_size, "coherent": args.coherent}
    cfg = load_config(args.config, overrides, paths={"manifest": args.manifest, "images": args.images, "out": args.out})
    entries = read_manifest(args.manifest)
    store = ImageStore(args.images, cfg.net.input_size)
    index = None
    if cfg.train.coherent:
        train_entries = [e for e in entries if e.split == "train"]
        index = read_embeddings(args.embeddings) if args.embeddings else build_fallback_index(train_entries, store)
    net = build_network(cfg.net, cfg.train.seed)
    metrics = args.metrics or f"{args.out}.metrics"
    train(net, entries, store, cfg.train, index=index, metrics_path=metrics, checkpoint_path=args.out,
          on_epoch=lambda m: print(m.line(), flush=True))
    return 0


def cmd_eval(args) -> int:
    from .ava_dataset import read_manifest
    from .evaluator import evaluate, write_per_image
    from .images import ImageStore
    from .trainer import load_checkpoint

    net, _ = load_checkpoint(args.checkpoint)
    entries = read_manifest(args.manifest)
    report = evaluate(net, entries, args.split, ImageStore(args.images, net.cfg.input_size))
    print(report.summary())
    if args.per_image:
        write_per_image(report, args.per_image)
    return 0


def cmd_predict(args) -> int:
    from .evaluator import predict_one
    from .trainer import load_checkpoint

    net, _ = load_checkpoint(args.checkpoint)
    label, p = predict_one(net, args.image)
    print(f"label={label} p_attractive={p:.6f}")
    return 0


def cmd_gradcheck(args) -> int:
    from .tensor_core.gradcheck import TOLERANCE, run_gradcheck

    results = run_gradcheck(args.seed, args.trials)
    ok = True
    for name, err in results.items():
        status = "ok" if err <= TOLERANCE else "FAIL"
        ok &= err <= TOLERANCE
        print(f"{name:<24} max_rel_err={err:.3e} {status}")
    return 0 if ok else 2


def cmd_params(args) -> int:
    from .aesthetic_net import build_network, count_parameters, layer_shapes
    from .config import load_config

    cfg = load_config(args.config)
    net = build_network(cfg.net, 0)
    for name, shape in layer_shapes(net):
        print(f"{name:<40} {'x'.join(map(str, shape))}")
    print(f"total {count_parameters(net)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aesnet", description=__doc__.splitlines()[0],
                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    sub = p.add_subparsers(dest="command", metavar="command")

    def add(name, func, help):
        sp = sub.add_parser(name, help=help, description=help, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        sp.set_defaults(func=func)
        return sp

    sp = add("build-dataset", cmd_build_dataset, "build an AVA2 manifest from AVA vote metadata")
    sp.add_argument("--ava-meta", required=True, help="AVA.txt-style vote file")
    sp.add_argument("--images", required=True, help="image directory recorded in manifest paths")
    sp.add_argument("--out", required=True, help="manifest to write")
    sp.add_argument("--top-frac", type=float, default=0.1)
    sp.add_argument("--bottom-frac", type=float, default=0.1)
    sp.add_argument("--test-frac", type=float, default=0.5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--extend-percentile", type=float, default=None, help="add train-only images beyond this percentile")
    sp.add_argument("--ext", default=".jpg", help="image file extension")
    sp.add_argument("--check-files", action="store_true", help="warn about missing image files")

    sp = add("lab-convert", cmd_lab_convert, "convert an 8-bit image to a raw LABF float file")
    sp.add_argument("--in", dest="input", required=True, help="input image")
    sp.add_argument("--out", required=True, help="raw LABF output")

    sp = add("embed", cmd_embed, "compute per-image embeddings for a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--images", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--method", choices=["fallback"], default="fallback")

    sp = add("plan-batches", cmd_plan_batches, "write one epoch of coherent minibatches")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, "train a network from scratch")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--images", required=True)
    sp.add_argument("--embeddings", default=None, help="embedding file; fallback embeddings are computed if omitted")
    sp.add_argument("--config", default=None, help="key = value config file")
    sp.add_argument("--out", required=True, help="checkpoint path (rewritten every epoch)")
    sp.add_argument("--metrics", default=None, help="metrics file (default: <out>.metrics)")
    mode = sp.add_mutually_exclusive_group()
    mode.add_argument("--coherent", dest="coherent", action="store_true", default=None, help="coherent batches")
    mode.add_argument("--random", dest="coherent", action="store_false", help="random-shuffle batches")
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)

    sp = add("eval", cmd_eval, "evaluate a checkpoint on a manifest split")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--images", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", choices=["train", "test"], default="test")
    sp.add_argument("--per-image", default=None, help="write image_id,true_label,p_attractive rows here")

    sp = add("predict", cmd_predict, "classify a single image")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--image", required=True)

    sp = add("gradcheck", cmd_gradcheck, "finite-difference check of every differentiable op")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trials", type=int, default=10)

    sp = add("params", cmd_params, "print per-layer parameter shapes and the total")
    sp.add_argument("--config", default=None)
    return p


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("aesnet: error: a command is required", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AesnetError as exc:
        print(f"{exc.name}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"IoFailure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
