"""Superpixel-centred 28x28 patches for training and inference."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from histseg.superpixel import SuperpixelMap, centroids

PATCH_SIDE = 28
HALF = PATCH_SIDE // 2

PATCHSET_MAGIC = b"HSPS"
PATCHSET_VERSION = 1


@dataclass(frozen=True)
class Patch:
    values: np.ndarray  # (28, 28)
    origin: tuple[int, int]  # (x, y) of the centre pixel
    label: int | None = None


def mirror_indices(idx: np.ndarray, n: int) -> np.ndarray:
    """Fold out-of-range indices back into ``[0, n)`` by edge-repeating reflection.

    ``-1 -> 0, -2 -> 1, n -> n-1``; the pattern repeats with period ``2n``.
    """
    m = np.mod(idx, 2 * n)
    return np.where(m >= n, 2 * n - 1 - m, m)


def _window(center: np.ndarray, side: int) -> np.ndarray:
    # centre sits at offset HALF: the window spans [c - 14, c + 13]
    return center[:, None] + np.arange(-(side // 2), side - side // 2)[None, :]


def extract_patches(img: np.ndarray, centers: np.ndarray, side: int = PATCH_SIDE) -> np.ndarray:
    """Cut one ``side x side`` window per ``(x, y)`` centre; returns ``(n, side, side)``."""
    img = np.asarray(img, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.int64).reshape(-1, 2)
    h, w = img.shape
    if len(centers) and (
        centers[:, 0].min() < 0 or centers[:, 0].max() >= w
        or centers[:, 1].min() < 0 or centers[:, 1].max() >= h
    ):
        bad = centers[(centers[:, 0] < 0) | (centers[:, 0] >= w) | (centers[:, 1] < 0) | (centers[:, 1] >= h)][0]
        raise ValueError(f"patch centre {tuple(int(v) for v in bad)} outside {w}x{h} image")
    rows = mirror_indices(_window(centers[:, 1], side), h)
    cols = mirror_indices(_window(centers[:, 0], side), w)
    return img[rows[:, :, None], cols[:, None, :]]


def extract_patch(img: np.ndarray, center) -> Patch:
    x, y = int(center[0]), int(center[1])
    return Patch(extract_patches(img, np.array([[x, y]]))[0], (x, y))


class PatchSet:
    """Labeled patches stored as stacked arrays.

    Attributes:
        values: ``(n, 28, 28)`` float64 intensities.
        labels: ``(n,)`` class indices.
        origins: ``(n, 2)`` patch centres as ``(x, y)``.
        num_classes: number of classes M.
    """

    def __init__(self, values, labels, origins, num_classes: int):
        values = np.asarray(values, dtype=np.float64).reshape(-1, PATCH_SIDE, PATCH_SIDE)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
        if not (len(values) == len(labels) == len(origins)):
            raise ValueError("values, labels and origins must have equal length")
        if len(labels) and (labels.min() < 0 or labels.max() >= num_classes):
            raise ValueError(f"patch labels must lie in [0, {num_classes})")
        self.values = values
        self.labels = labels
        self.origins = origins
        self.num_classes = int(num_classes)

    @classmethod
    def empty(cls, num_classes: int) -> "PatchSet":
        return cls(np.zeros((0, PATCH_SIDE, PATCH_SIDE)), np.zeros(0), np.zeros((0, 2)), num_classes)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> Patch:
        x, y = self.origins[i]
        return Patch(self.values[i], (int(x), int(y)), int(self.labels[i]))

    @property
    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, idx) -> "PatchSet":
        return PatchSet(self.values[idx], self.labels[idx], self.origins[idx], self.num_classes)

    @classmethod
    def concatenate(cls, sets, num_classes: int) -> "PatchSet":
        sets = list(sets)
        if not sets:
            return cls.empty(num_classes)
        return cls(
            np.concatenate([s.values for s in sets]),
            np.concatenate([s.labels for s in sets]),
            np.concatenate([s.origins for s in sets]),
            num_classes,
        )

    def save(self, path) -> None:
        """Write the ``HSPS`` debug dump (little-endian float32 patches + 1-byte labels)."""
        if self.num_classes > 256:
            raise ValueError("HSPS stores labels in one byte")
        with open(path, "wb") as f:
            f.write(struct.pack("<4sIII", PATCHSET_MAGIC, PATCHSET_VERSION, len(self), self.num_classes))
            rec = np.zeros(len(self), dtype=[("v", "<f4", (PATCH_SIDE * PATCH_SIDE,)), ("y", "u1")])
            rec["v"] = self.values.reshape(len(self), -1)
            rec["y"] = self.labels
            f.write(rec.tobytes())

    @classmethod
    def load(cls, path) -> "PatchSet":
        with open(path, "rb") as f:
            head = f.read(16)
            if len(head) < 16:
                raise ValueError(f"{path}: truncated HSPS header")
            magic, version, count, m = struct.unpack("<4sIII", head)
            if magic != PATCHSET_MAGIC:
                raise ValueError(f"{path}: not an HSPS file")
            if version != PATCHSET_VERSION:
                raise ValueError(f"{path}: unsupported HSPS version {version}")
            dt = np.dtype([("v", "<f4", (PATCH_SIDE * PATCH_SIDE,)), ("y", "u1")])
            body = f.read()
        if len(body) != count * dt.itemsize:
            raise ValueError(f"{path}: expected {count} patches, file size disagrees")
        rec = np.frombuffer(body, dtype=dt)
        # the dump does not keep patch origins
        return cls(rec["v"].astype(np.float64), rec["y"], np.zeros((count, 2)), m)


def build_training_set(imgs, labelmaps, spmaps, num_classes: int, names=None) -> PatchSet:
    """One patch per superpixel per image, labeled by the ground truth at its centroid."""
    imgs, labelmaps, spmaps = list(imgs), list(labelmaps), list(spmaps)
    if not (len(imgs) == len(labelmaps) == len(spmaps)):
        raise ValueError("need the same number of images, label maps and superpixel maps")
    names = list(names) if names is not None else [f"image {i}" for i in range(len(imgs))]
    parts = []
    for name, img, lab, sp in zip(names, imgs, labelmaps, spmaps):
        img = np.asarray(img)
        lab = np.asarray(lab)
        if img.shape != lab.shape or img.shape != sp.assignment.shape:
            raise ValueError(
                f"{name}: shape mismatch (image {img.shape}, labels {lab.shape}, "
                f"superpixels {sp.assignment.shape})"
            )
        c = centroids(sp)
        parts.append(PatchSet(extract_patches(img, c), lab[c[:, 1], c[:, 0]], c, num_classes))
    return PatchSet.concatenate(parts, num_classes)


def inference_patches(img: np.ndarray, spmap: SuperpixelMap) -> tuple[np.ndarray, np.ndarray]:
    """Patches centred on every superpixel of ``spmap``, plus the centres used."""
    c = centroids(spmap)
    return extract_patches(img, c), c


def project_labels(spmap: SuperpixelMap, center_labels) -> np.ndarray:
    """Give every pixel the label predicted for its superpixel."""
    center_labels = np.asarray(center_labels)
    if center_labels.ndim != 1 or len(center_labels) != spmap.count:
        raise ValueError(f"need {spmap.count} superpixel labels, got {center_labels.shape}")
    return center_labels[spmap.assignment]
