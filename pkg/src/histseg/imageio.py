"""Reading and writing document images and color-coded label maps.

Gray images are 2-D ``float64`` arrays of shape ``(height, width)`` with
intensities in ``[0, 1]``. Label images are 2-D integer arrays of class
indices into a :class:`Palette`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class FormatError(ValueError):
    """Raised for image files the toolkit cannot interpret."""


@dataclass(frozen=True)
class Palette:
    """Ordered mapping between class names, class indices and RGB colors."""

    names: tuple[str, ...]
    colors: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if len(self.names) != len(self.colors):
            raise ValueError("palette needs one color per class name")
        if len(self.names) < 2:
            raise ValueError("palette needs at least 2 classes")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate class names in palette: {self.names}")
        if len(set(self.colors)) != len(self.colors):
            raise ValueError(f"duplicate colors in palette: {self.colors}")
        for c in self.colors:
            if len(c) != 3 or not all(0 <= v <= 255 for v in c):
                raise ValueError(f"invalid RGB color {c}")

    @property
    def num_classes(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @classmethod
    def from_entries(cls, entries) -> "Palette":
        entries = list(entries)
        return cls(tuple(n for n, _ in entries), tuple(tuple(int(v) for v in c) for _, c in entries))

    @classmethod
    def parse(cls, text: str) -> "Palette":
        """Parse ``name=R,G,B`` lines; blank lines and ``#`` comments are skipped."""
        entries = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                name, rgb = line.split("=", 1)
                color = tuple(int(v) for v in rgb.split(","))
            except ValueError:
                raise ValueError(f"palette line {lineno}: expected name=R,G,B, got {raw!r}") from None
            if len(color) != 3:
                raise ValueError(f"palette line {lineno}: expected 3 color components")
            entries.append((name.strip(), color))
        return cls.from_entries(entries)

    @classmethod
    def load(cls, path) -> "Palette":
        return cls.parse(Path(path).read_text())

    def dumps(self) -> str:
        return "".join(f"{n}={r},{g},{b}\n" for n, (r, g, b) in zip(self.names, self.colors))

    def to_dict(self) -> dict:
        return {"names": list(self.names), "colors": [list(c) for c in self.colors]}

    @classmethod
    def from_dict(cls, d: dict) -> "Palette":
        return cls(tuple(d["names"]), tuple(tuple(c) for c in d["colors"]))


# black, white, blue, red, pink
DEFAULT_PALETTE = Palette(
    names=("periphery", "page", "text", "decoration", "comment"),
    colors=((0, 0, 0), (255, 255, 255), (0, 0, 255), (255, 0, 0), (255, 192, 203)),
)


def _open_png(path) -> Image.Image:
    try:
        im = Image.open(path)
        im.load()
    except FileNotFoundError:
        raise
    except OSError as e:
        raise FormatError(f"cannot read image {path}: {e}") from e
    return im


def _rgb_array(im: Image.Image, path) -> np.ndarray:
    """Return an ``(H, W, 3)`` uint8 array, or ``(H, W)`` for gray inputs."""
    if im.mode == "L":
        return np.asarray(im, dtype=np.uint8)
    if im.mode == "RGB":
        return np.asarray(im, dtype=np.uint8)
    if im.mode in ("RGBA", "P", "LA"):
        # alpha is ignored; palette images are expanded to their 8-bit colors
        target = "L" if im.mode == "LA" else "RGB"
        return np.asarray(im.convert(target), dtype=np.uint8)
    raise FormatError(f"{path}: unsupported PNG mode {im.mode!r} (need 8-bit gray or RGB)")


def load_gray(path) -> np.ndarray:
    """Load a PNG as normalized gray intensities.

    RGB pixels are converted with the BT.601 luminance weights before
    dividing by 255.
    """
    im = _open_png(path)
    arr = _rgb_array(im, path)
    if arr.ndim == 3:
        gray = arr.astype(np.float64) @ LUMA_WEIGHTS
    else:
        gray = arr.astype(np.float64)
    return np.clip(gray / 255.0, 0.0, 1.0)


def save_gray(img: np.ndarray, path) -> None:
    img = validate_gray(img)
    Image.fromarray(np.round(img * 255.0).astype(np.uint8), mode="L").save(path)


def validate_gray(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"gray image must be 2-D, got shape {img.shape}")
    if img.size and (not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0):
        raise ValueError("gray intensities must lie in [0, 1]")
    return img


def _check_exponent(k: int) -> int:
    if int(k) != k or k < 0:
        raise ValueError(f"scale exponent must be a non-negative integer, got {k}")
    return int(k)


def downscale(img: np.ndarray, k: int) -> np.ndarray:
    """Shrink by ``2**k`` using the mean of each ``2**k x 2**k`` block.

    Trailing rows/columns that do not fill a whole block are discarded.
    """
    k = _check_exponent(k)
    img = np.asarray(img, dtype=np.float64)
    if k == 0:
        return img.copy()
    f = 1 << k
    h, w = img.shape[0] // f, img.shape[1] // f
    if h == 0 or w == 0:
        raise ValueError(f"downscaling {img.shape[1]}x{img.shape[0]} by 2^-{k} leaves an empty image")
    blocks = img[: h * f, : w * f].reshape(h, f, w, f)
    return blocks.mean(axis=(1, 3))


def downscale_labels(labels: np.ndarray, k: int, num_classes: int) -> np.ndarray:
    """Shrink a label image by ``2**k`` taking the majority class of each block.

    Ties go to the lowest class index.
    """
    k = _check_exponent(k)
    labels = np.asarray(labels)
    if k == 0:
        return labels.copy()
    f = 1 << k
    h, w = labels.shape[0] // f, labels.shape[1] // f
    if h == 0 or w == 0:
        raise ValueError(f"downscaling {labels.shape[1]}x{labels.shape[0]} by 2^-{k} leaves an empty image")
    blocks = labels[: h * f, : w * f].reshape(h, f, w, f).transpose(0, 2, 1, 3).reshape(h, w, f * f)
    counts = np.stack([(blocks == c).sum(axis=2) for c in range(num_classes)], axis=-1)
    return counts.argmax(axis=-1).astype(labels.dtype)


def colors_to_labels(rgb: np.ndarray, palette: Palette, source="image") -> np.ndarray:
    """Map an ``(H, W, 3)`` color array to class indices, rejecting unknown colors."""
    key = (rgb[..., 0].astype(np.int64) << 16) | (rgb[..., 1].astype(np.int64) << 8) | rgb[..., 2]
    pal_keys = np.array([(r << 16) | (g << 8) | b for r, g, b in palette.colors], dtype=np.int64)
    order = np.argsort(pal_keys)
    sorted_keys = pal_keys[order]
    pos = np.clip(np.searchsorted(sorted_keys, key), 0, len(sorted_keys) - 1)
    found = sorted_keys[pos] == key
    if not found.all():
        y, x = np.argwhere(~found)[0]
        color = tuple(int(v) for v in rgb[y, x])
        raise FormatError(f"{source}: color {color} at (x={x}, y={y}) is not in the palette")
    return order[pos].astype(np.int32)


def load_labels(path, palette: Palette = DEFAULT_PALETTE) -> np.ndarray:
    im = _open_png(path)
    arr = _rgb_array(im, path)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    return colors_to_labels(arr, palette, source=str(path))


def labels_to_rgb(labels: np.ndarray, palette: Palette = DEFAULT_PALETTE) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"label image must be 2-D, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= palette.num_classes):
        raise ValueError(
            f"labels must lie in [0, {palette.num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    lut = np.array(palette.colors, dtype=np.uint8)
    return lut[labels]


def write_labels(labels: np.ndarray, palette: Palette, path) -> None:
    rgb = labels_to_rgb(labels, palette)
    Image.fromarray(rgb, mode="RGB").save(path)
