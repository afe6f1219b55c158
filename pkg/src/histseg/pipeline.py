"""End-to-end glue: paired datasets, training, page segmentation, evaluation, sweeps."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from histseg.dataset import PatchSet, build_training_set, inference_patches, project_labels
from histseg.imageio import Palette, downscale, downscale_labels, load_gray, load_labels
from histseg.metrics import ConfusionMatrix
from histseg.model import RunConfig
from histseg.nn import Network, NetworkConfig, TrainingLog, train
from histseg.superpixel import SuperpixelMap, slic

log = logging.getLogger(__name__)

KERNEL_SWEEP = (1, 2, 4, 6, 8, 10, 12, 14)
LAYER_SWEEP = (1, 2, 3, 4)
TRAIN_IMAGE_SWEEP = (1, 2, 4, 8, 10, 12, 14, 16, 18, 20)


@dataclass(frozen=True)
class Pair:
    stem: str
    image: Path
    labels: Path


def find_pairs(image_dir, label_dir) -> list[Pair]:
    """Match ``*.png`` files of two directories by filename stem, sorted by stem."""
    image_dir, label_dir = Path(image_dir), Path(label_dir)
    for d in (image_dir, label_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"no such directory: {d}")
    images = {p.stem: p for p in image_dir.glob("*.png")}
    labels = {p.stem: p for p in label_dir.glob("*.png")}
    stems = sorted(images.keys() & labels.keys())
    if not stems:
        raise ValueError(f"no image/label pairs with matching names in {image_dir} and {label_dir}")
    for s in sorted(images.keys() ^ labels.keys()):
        log.warning("ignoring %s: no counterpart in the other directory", s)
    return [Pair(s, images[s], labels[s]) for s in stems]


def preprocess(img: np.ndarray, run: RunConfig) -> tuple[np.ndarray, SuperpixelMap]:
    small = downscale(img, run.scale_exp)
    return small, slic(small, run.superpixels, run.compactness, run.slic_iterations)


def ground_truth_for(labels: np.ndarray, shape, run: RunConfig, source="labels") -> np.ndarray:
    """Bring a label map to the working resolution.

    Full-size maps are reduced by majority vote; maps already at the
    downscaled size are used as they are.
    """
    if labels.shape == tuple(shape):
        return labels
    reduced = downscale_labels(labels, run.scale_exp, run.palette.num_classes)
    if reduced.shape != tuple(shape):
        raise ValueError(f"{source}: label map {labels.shape[::-1]} does not match the image")
    return reduced


def load_pair(pair: Pair, run: RunConfig) -> tuple[np.ndarray, np.ndarray, SuperpixelMap]:
    img = load_gray(pair.image)
    small, spmap = preprocess(img, run)
    lab = load_labels(pair.labels, run.palette)
    if lab.shape != img.shape and lab.shape != small.shape:
        raise ValueError(f"{pair.stem}: image is {img.shape[::-1]}, labels are {lab.shape[::-1]}")
    return small, ground_truth_for(lab, small.shape, run, pair.stem), spmap


def patches_from_pairs(pairs, run: RunConfig) -> PatchSet:
    imgs, labs, sps = [], [], []
    for p in pairs:
        img, lab, sp = load_pair(p, run)
        imgs.append(img)
        labs.append(lab)
        sps.append(sp)
        log.info("%s: %dx%d, %d superpixels", p.stem, img.shape[1], img.shape[0], sp.count)
    return build_training_set(imgs, labs, sps, run.palette.num_classes, names=[p.stem for p in pairs])


def segment_preprocessed(net: Network, img: np.ndarray, spmap: SuperpixelMap) -> np.ndarray:
    patches, _ = inference_patches(img, spmap)
    return project_labels(spmap, net.predict_classes(patches))


def segment_image(net: Network, img: np.ndarray, run: RunConfig) -> np.ndarray:
    """Label map for a full-size gray page, at the downscaled resolution."""
    small, spmap = preprocess(img, run)
    return segment_preprocessed(net, small, spmap)


def evaluate_pairs(net: Network, pairs, run: RunConfig) -> ConfusionMatrix:
    cm = ConfusionMatrix(run.palette.num_classes)
    for p in pairs:
        img, lab, sp = load_pair(p, run)
        cm.accumulate(segment_preprocessed(net, img, sp), lab)
    return cm


def train_model(pairs, run: RunConfig, val_pairs=None) -> tuple[Network, TrainingLog, PatchSet]:
    patches = patches_from_pairs(pairs, run)
    log.info("training on %d patches, class histogram %s", len(patches), patches.class_histogram.tolist())
    net = Network.init(run.network, seed=run.seed)
    validate = None
    if val_pairs:
        val = [load_pair(p, run) for p in val_pairs]

        def validate(n):
            cm = ConfusionMatrix(run.palette.num_classes)
            for img, lab, sp in val:
                cm.accumulate(segment_preprocessed(n, img, sp), lab)
            return cm.pixel_accuracy()

    if run.training.num_batches:
        tlog = train(net, patches, run.training, validate)
    else:
        tlog = TrainingLog()
    return net, tlog, patches


def evaluate_dirs(pred_dir, gt_dir, palette: Palette, gt_scale_exp: int = 0):
    """Dataset-level confusion matrix over predicted/ground-truth maps matched by stem."""
    pairs = find_pairs(pred_dir, gt_dir)
    pred_names = {p.stem for p in Path(pred_dir).glob("*.png")}
    gt_names = {p.stem for p in Path(gt_dir).glob("*.png")}
    if pred_names != gt_names:
        raise ValueError(f"unmatched files: {sorted(pred_names ^ gt_names)}")
    cm = ConfusionMatrix(palette.num_classes)
    for p in pairs:
        pred = load_labels(p.image, palette)
        gt = load_labels(p.labels, palette)
        if gt_scale_exp:
            gt = downscale_labels(gt, gt_scale_exp, palette.num_classes)
        if pred.shape != gt.shape:
            raise ValueError(f"{p.stem}: prediction {pred.shape[::-1]} vs ground truth {gt.shape[::-1]}")
        cm.accumulate(pred, gt)
    return cm, [p.stem for p in pairs]


# ---------------------------------------------------------------------------
# sweeps


def sweep_values(kind: str, available_train: int, values=None) -> list[int]:
    if kind == "kernels":
        return list(values or KERNEL_SWEEP)
    if kind == "layers":
        return list(values or LAYER_SWEEP)
    if kind == "train_images":
        if values:
            too_many = [v for v in values if v > available_train]
            if too_many:
                raise ValueError(f"requested {too_many} training images, only {available_train} available")
            return list(values)
        return [v for v in TRAIN_IMAGE_SWEEP if v <= available_train]
    raise ValueError(f"unknown sweep kind {kind!r}")


def sweep_run_config(kind: str, value: int, run: RunConfig, seed: int) -> RunConfig:
    net = run.network
    if kind == "kernels":
        net = replace(net, conv_kernel_counts=(value,))
    elif kind == "layers":
        net = NetworkConfig.with_depth(
            value,
            use_max_pool=net.use_max_pool,
            dense_width=net.dense_width,
            num_classes=net.num_classes,
            input_side=net.input_side,
        )
    return replace(run, network=net, training=replace(run.training, seed=seed))


def point_seeds(master_seed: int, n: int) -> list[int]:
    """Independent per-point seeds derived from the master seed."""
    children = np.random.SeedSequence(master_seed).spawn(n)
    return [int(c.generate_state(1)[0]) for c in children]


def _sweep_point(args):
    kind, value, run, train_pairs, test_pairs = args
    pairs = train_pairs[:value] if kind == "train_images" else train_pairs
    net, _, _ = train_model(pairs, run)
    cm = evaluate_pairs(net, test_pairs, run)
    return {"sweep_value": value, **cm.summary()}


def run_sweep(kind: str, train_pairs, test_pairs, run: RunConfig, values=None, jobs: int = 1) -> list[dict]:
    """One train + evaluate cycle per sweep value; rows in sweep order."""
    values = sweep_values(kind, len(train_pairs), values)
    seeds = point_seeds(run.seed, len(values))
    tasks = [
        (kind, v, sweep_run_config(kind, v, run, s), list(train_pairs), list(test_pairs))
        for v, s in zip(values, seeds)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]
