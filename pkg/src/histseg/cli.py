"""Command line interface: ``histseg superpixels|train|segment|eval|sweep``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from histseg.imageio import DEFAULT_PALETTE, FormatError, Palette, downscale, load_gray, write_labels
from histseg.metrics import ConfusionMatrix
from histseg.model import RunConfig, load_model, save_model
from histseg.nn import NetworkConfig, TrainConfig
from histseg.superpixel import slic

log = logging.getLogger("histseg")

METRIC_KEYS = ("pixel_acc", "mean_acc", "mean_iu", "fw_iu")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _palette(args) -> Palette:
    return Palette.load(args.palette) if args.palette else DEFAULT_PALETTE


def _add_preprocessing(p):
    p.add_argument("--scale-exp", type=int, default=3, help="downscale pages by 2^-k (default 3)")
    p.add_argument("--superpixels", type=int, default=3000, help="requested superpixels per page")
    p.add_argument("--compactness", type=float, default=10.0)
    p.add_argument("--slic-iterations", type=int, default=10)


def _add_run(p):
    _add_preprocessing(p)
    p.add_argument("--kernels", type=_int_list, default=[4], help="kernels per conv layer, e.g. 4 or 4,6")
    p.add_argument("--max-pool", action="store_true", help="2x2 max pooling after the conv layers")
    p.add_argument("--dense", type=int, default=100, help="hidden dense layer width")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--batches", type=int, default=5000)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--validate-every", type=int, default=500, help="validation interval in batches")
    p.add_argument("--palette", help="palette file with one name=R,G,B line per class")


def run_config_from_args(args) -> RunConfig:
    palette = _palette(args)
    net = NetworkConfig(
        conv_kernel_counts=tuple(args.kernels),
        use_max_pool=args.max_pool,
        dense_width=args.dense,
        num_classes=palette.num_classes,
    )
    tr = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        num_batches=args.batches,
        dropout_p=args.dropout,
        seed=args.seed,
        validate_every=args.validate_every,
    )
    return RunConfig(
        scale_exp=args.scale_exp,
        superpixels=args.superpixels,
        compactness=args.compactness,
        slic_iterations=args.slic_iterations,
        network=net,
        training=tr,
        palette=palette,
    )


def overlay_boundaries(img: np.ndarray, boundaries: np.ndarray) -> np.ndarray:
    rgb = np.repeat(np.round(img * 255).astype(np.uint8)[..., None], 3, axis=2)
    rgb[boundaries] = (255, 0, 0)
    return rgb


# ---------------------------------------------------------------------------
# commands


def cmd_superpixels(args) -> int:
    img = load_gray(args.image)
    small = downscale(img, args.scale_exp)
    spmap = slic(small, args.superpixels, args.compactness, args.slic_iterations)
    if spmap.count > 65536:
        raise ValueError(f"{spmap.count} superpixels do not fit a 16-bit PNG")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem
    Image.fromarray(spmap.assignment.astype(np.uint16)).save(out / f"{stem}_superpixels.png")
    Image.fromarray(overlay_boundaries(small, spmap.boundaries())).save(out / f"{stem}_overlay.png")
    print(f"{stem}: {small.shape[1]}x{small.shape[0]}, {spmap.count} superpixels (requested {args.superpixels})")
    return 0


def cmd_train(args) -> int:
    from histseg.pipeline import find_pairs, train_model
    from histseg.plotting import plot_training_log

    run = run_config_from_args(args)
    pairs = find_pairs(args.images, args.labels)
    val_pairs = find_pairs(args.val_images, args.val_labels) if args.val_images else None
    t0 = time.perf_counter()
    net, tlog, patches = train_model(pairs, run, val_pairs)
    model = Path(args.model)
    model.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, net, run)
    log_path = Path(args.log) if args.log else model.with_suffix(".log.csv")
    tlog.write_csv(log_path)
    if not args.no_figures:
        plot_training_log(tlog, log_path.with_suffix(".png"))
    print(
        f"{len(pairs)} pages, {len(patches)} patches, {len(tlog)} batches "
        f"in {time.perf_counter() - t0:.1f}s -> {model}"
    )
    return 0


def cmd_segment(args) -> int:
    from histseg.pipeline import segment_image

    net, run = load_model(args.model)
    if args.palette and _palette(args) != run.palette:
        raise ValueError("palette file does not match the palette stored in the model")
    t0 = time.perf_counter()
    labels = segment_image(net, load_gray(args.image), run)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    write_labels(labels, run.palette, args.output)
    print(f"{args.image}: {labels.shape[1]}x{labels.shape[0]} in {time.perf_counter() - t0:.2f}s -> {args.output}")
    return 0


def format_table(rows: list[tuple[str, dict]]) -> str:
    head = f"{'dataset':<20} {'pixel acc.':>10} {'mean acc.':>10} {'mean IU':>10} {'f.w. IU':>10}"
    lines = [head, "-" * len(head)]
    for name, m in rows:
        lines.append(f"{name:<20} " + " ".join(f"{round(100 * m[k]):>10d}" for k in METRIC_KEYS))
    return "\n".join(lines)


def write_metrics_csv(path, rows: list[tuple[str, dict]]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["dataset", *METRIC_KEYS, *(f"{k}_full" for k in METRIC_KEYS)])
        for name, m in rows:
            w.writerow([name, *(round(100 * m[k]) for k in METRIC_KEYS), *(repr(m[k]) for k in METRIC_KEYS)])


def cmd_eval(args) -> int:
    from histseg.pipeline import evaluate_dirs

    palette = _palette(args)
    cm, stems = evaluate_dirs(args.pred, args.gt, palette, args.gt_scale_exp)
    rows = [(args.dataset, cm.summary())]
    print(format_table(rows))
    if args.csv:
        write_metrics_csv(args.csv, rows)
        if not args.no_figures:
            from histseg.plotting import plot_confusion

            plot_confusion(cm, palette.names, Path(args.csv).with_suffix(".confusion.png"))
    log.info("evaluated %d pages", len(stems))
    return 0


def write_sweep_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sweep_value", *METRIC_KEYS])
        for r in rows:
            w.writerow([r["sweep_value"], *(repr(r[k]) for k in METRIC_KEYS)])


def cmd_sweep(args) -> int:
    from histseg.pipeline import find_pairs, run_sweep

    run = run_config_from_args(args)
    train_pairs = find_pairs(args.train_images, args.train_labels)
    test_pairs = find_pairs(args.test_images, args.test_labels)
    rows = run_sweep(args.kind, train_pairs, test_pairs, run, args.values, args.jobs)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out, rows)
    if not args.no_figures:
        from histseg.plotting import plot_sweep

        plot_sweep(args.kind, rows, out.with_suffix(".png"))
    for r in rows:
        print(f"{args.kind}={r['sweep_value']:<4d} " + "  ".join(f"{k}={100 * r[k]:.1f}" for k in METRIC_KEYS))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="histseg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("superpixels", help="write the superpixel id map and a boundary overlay")
    p.add_argument("image")
    p.add_argument("-o", "--output", default=".", help="output directory")
    _add_preprocessing(p)
    p.set_defaults(func=cmd_superpixels)

    p = sub.add_parser("train", help="train a model on paired image/label directories")
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--val-images")
    p.add_argument("--val-labels")
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--log", help="training log CSV (default: <model>.log.csv)")
    p.add_argument("--no-figures", action="store_true")
    _add_run(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="segment one page with a trained model")
    p.add_argument("model")
    p.add_argument("image")
    p.add_argument("output")
    p.add_argument("--palette")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="metrics of predicted label maps against ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--palette")
    p.add_argument("--dataset", default="dataset", help="row name in the table/CSV")
    p.add_argument("--csv")
    p.add_argument("--gt-scale-exp", type=int, default=0, help="majority-downscale ground truth by 2^-k first")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train/evaluate over a range of one hyperparameter")
    p.add_argument("kind", choices=("kernels", "layers", "train_images"))
    p.add_argument("--train-images", required=True)
    p.add_argument("--train-labels", required=True)
    p.add_argument("--test-images", required=True)
    p.add_argument("--test-labels", required=True)
    p.add_argument("--output", required=True, help="CSV path; the figure goes next to it")
    p.add_argument("--values", type=_int_list, help="override the default sweep values")
    p.add_argument("--jobs", type=int, default=1, help="run sweep points in parallel processes")
    p.add_argument("--no-figures", action="store_true")
    _add_run(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, FormatError) as e:
        print(f"histseg: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
