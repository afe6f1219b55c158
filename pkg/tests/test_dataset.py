import numpy as np
import pytest

from histseg.dataset import (
    PATCH_SIDE,
    PatchSet,
    build_training_set,
    extract_patch,
    extract_patches,
    project_labels,
)
from histseg.superpixel import SuperpixelMap, slic


def mirror_oracle(i, n):
    """Reflect one index into [0, n) step by step, repeating the edge pixel."""
    while i < 0 or i >= n:
        if i < 0:
            i = -i - 1
        if i >= n:
            i = 2 * n - 1 - i
    return i


def brute_patch(img, x, y):
    h, w = img.shape
    out = np.empty((PATCH_SIDE, PATCH_SIDE))
    for r in range(PATCH_SIDE):
        for c in range(PATCH_SIDE):
            out[r, c] = img[mirror_oracle(y - 14 + r, h), mirror_oracle(x - 14 + c, w)]
    return out


def test_constant_image():
    p = extract_patch(np.full((50, 60), 0.7), (30, 20))
    assert p.values.shape == (28, 28)
    assert (p.values == 0.7).all()


@pytest.mark.parametrize("shape", [(40, 50), (8, 8), (3, 30), (1, 1)])
@pytest.mark.parametrize("where", ["origin", "far", "mid"])
def test_mirror_padding_matches_oracle(shape, where):
    h, w = shape
    img = np.arange(h * w, dtype=float).reshape(h, w) / (h * w)
    x, y = {"origin": (0, 0), "far": (w - 1, h - 1), "mid": (w // 2, h // 2)}[where]
    np.testing.assert_array_equal(extract_patch(img, (x, y)).values, brute_patch(img, x, y))


def test_origin_patch_corner_value():
    img = np.random.default_rng(3).random((30, 30))
    p = extract_patch(img, (0, 0)).values
    assert p[14, 14] == img[0, 0]
    assert p[13, 13] == img[0, 0]


def test_interior_patch_is_raw_window():
    img = np.random.default_rng(4).random((60, 60))
    for x, y in [(14, 14), (45, 46), (30, 20)]:
        np.testing.assert_array_equal(extract_patch(img, (x, y)).values, img[y - 14 : y + 14, x - 14 : x + 14])


def test_patch_outside_image():
    with pytest.raises(ValueError):
        extract_patch(np.zeros((10, 10)), (10, 3))
    with pytest.raises(ValueError):
        extract_patches(np.zeros((10, 10)), np.array([[2, -1]]))


def test_patch_values_in_unit_range():
    img = np.random.default_rng(5).random((20, 33))
    ps = extract_patches(img, np.array([[0, 0], [32, 19], [5, 7]]))
    assert ps.shape == (3, 28, 28) and ps.min() >= 0 and ps.max() <= 1


def test_training_set_one_patch_per_superpixel():
    img = np.random.default_rng(6).random((60, 80))
    sp = slic(img, 30)
    lab = np.random.default_rng(7).integers(0, 5, img.shape)
    ps = build_training_set([img], [lab], [sp], 5)
    assert len(ps) == sp.count
    assert ps.class_histogram.sum() == len(ps)
    for i in range(len(ps)):
        x, y = ps.origins[i]
        assert ps.labels[i] == lab[y, x]
        np.testing.assert_array_equal(ps.values[i], brute_patch(img, x, y))


def test_training_set_empty():
    ps = build_training_set([], [], [], 5)
    assert len(ps) == 0 and ps.class_histogram.tolist() == [0] * 5


def test_training_set_forced_label():
    img = np.random.default_rng(8).random((20, 20))
    ps = build_training_set([img], [np.full((20, 20), 2)], [slic(img, 1)], 5)
    assert len(ps) == 1 and ps[0].label == 2


def test_training_set_dimension_mismatch():
    img = np.zeros((10, 10))
    with pytest.raises(ValueError, match="page7"):
        build_training_set([img], [np.zeros((10, 11), int)], [slic(img, 1)], 3, names=["page7"])


def test_project_labels_single():
    sp = slic(np.random.default_rng(9).random((12, 9)), 1)
    assert (project_labels(sp, [2]) == 2).all()


def test_project_labels_quadrants():
    sp = slic(np.full((100, 100), 0.5), 4)
    out = project_labels(sp, np.array([0, 1, 2, 3]))
    expected = np.empty((100, 100), int)
    for y in range(100):
        for x in range(100):
            expected[y, x] = [0, 1, 2, 3][sp.assignment[y, x]]
    np.testing.assert_array_equal(out, expected)
    assert (out[:50, :50] == 0).all() and (out[50:, 50:] == 3).all()


def test_project_labels_histogram_identity():
    sp = slic(np.random.default_rng(10).random((40, 40)), 25)
    labels = np.random.default_rng(11).integers(0, 3, sp.count)
    out = project_labels(sp, labels)
    for c in range(3):
        assert (out == c).sum() == sp.sizes[labels == c].sum()


def test_project_labels_length_check():
    sp = SuperpixelMap(np.zeros((3, 3), dtype=np.int64))
    with pytest.raises(ValueError):
        project_labels(sp, [0, 1])


def test_patchset_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(12)
    ps = PatchSet(rng.random((7, 28, 28)), rng.integers(0, 4, 7), rng.integers(0, 50, (7, 2)), 4)
    ps.save(tmp_path / "p.hsps")
    raw = (tmp_path / "p.hsps").read_bytes()
    assert raw[:4] == b"HSPS" and len(raw) == 16 + 7 * (784 * 4 + 1)
    back = PatchSet.load(tmp_path / "p.hsps")
    np.testing.assert_array_equal(back.labels, ps.labels)
    np.testing.assert_array_equal(back.values, ps.values.astype(np.float32))
    assert back.num_classes == 4


def test_patchset_dump_rejects_other_files(tmp_path):
    (tmp_path / "x").write_bytes(b"HSEG" + bytes(12))
    with pytest.raises(ValueError):
        PatchSet.load(tmp_path / "x")
