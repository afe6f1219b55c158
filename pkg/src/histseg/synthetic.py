"""Synthetic three-class "documents" for smoke-testing the whole pipeline.

Each page has a dark periphery border, a light page background and one or
two blocks of dark word-like strokes arranged in text lines. The text class
covers the whole block rectangle, gaps between strokes included.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from histseg.imageio import Palette, save_gray, write_labels

PALETTE = Palette(names=("periphery", "page", "text"), colors=((0, 0, 0), (255, 255, 255), (0, 0, 255)))
PERIPHERY, PAGE, TEXT = 0, 1, 2


def _text_block(img, lab, rng, y0, y1, x0, x1):
    lab[y0:y1, x0:x1] = TEXT
    line_gap = int(rng.integers(8, 12))
    stroke = int(rng.integers(3, 5))
    for y in range(y0 + 1, y1 - stroke, line_gap):
        x = x0 + int(rng.integers(0, 3))
        while x < x1 - 2:
            word = int(rng.integers(4, 16))
            end = min(x + word, x1)
            img[y : y + stroke, x:end] = rng.uniform(0.05, 0.25)
            # ascenders/descenders break up the strokes a little
            for _ in range(int(rng.integers(0, 3))):
                cx = int(rng.integers(x, max(x + 1, end)))
                img[max(y0, y - 2) : min(y1, y + stroke + 2), cx] = 0.15
            x = end + int(rng.integers(2, 5))


def make_document(seed: int, size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(gray image, label image)`` for one synthetic page."""
    rng = np.random.default_rng(seed)
    img = np.clip(rng.normal(0.85, 0.03, (size, size)), 0, 1)
    lab = np.full((size, size), PAGE, dtype=np.int32)

    top, bottom, left, right = (int(v) for v in rng.integers(size // 16, size // 8, 4))
    border = np.zeros((size, size), dtype=bool)
    border[:top] = border[size - bottom :] = True
    border[:, :left] = border[:, size - right :] = True
    img[border] = np.clip(rng.normal(0.12, 0.04, border.sum()), 0, 1)
    lab[border] = PERIPHERY

    def px(v):  # lengths below are tuned for 256-pixel pages
        return max(1, v * size // 256)

    margin = px(12)
    inner = (top + margin, size - bottom - margin, left + margin, size - right - margin)
    blocks = int(rng.integers(1, 3))
    h = (inner[1] - inner[0]) // blocks
    for b in range(blocks):
        by0 = inner[0] + b * h + int(rng.integers(0, px(10)))
        by1 = inner[0] + (b + 1) * h - int(rng.integers(px(10), px(25)))
        bx0 = inner[2] + int(rng.integers(0, px(30)))
        bx1 = inner[3] - int(rng.integers(0, px(30)))
        if by1 - by0 > 12 and bx1 - bx0 > 20:
            _text_block(img, lab, rng, by0, by1, bx0, bx1)
    return np.clip(img, 0, 1), lab


def write_dataset(root, count: int, seed: int = 0, size: int = 256) -> tuple[Path, Path]:
    """Write ``count`` pages as ``root/images/*.png`` and ``root/labels/*.png``."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    for i in range(count):
        img, lab = make_document(seed + i, size)
        save_gray(img, root / "images" / f"doc{i:03d}.png")
        write_labels(lab, PALETTE, root / "labels" / f"doc{i:03d}.png")
    return root / "images", root / "labels"
