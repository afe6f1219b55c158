"""Acceptance criteria, one test (or group) per criterion.

Run ``pytest tests/test_acceptance.py`` and read the "acceptance criteria"
section at the end of the report for one PASS/FAIL/SKIP line per criterion.
Criterion 5 needs the real St. Gall and Parzival pages; point
``HISTSEG_DATA`` at a directory holding ``<dataset>/{train,test}/{images,labels}``.
"""

import csv
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import ndimage

from histseg import pipeline, synthetic
from histseg.cli import main
from histseg.imageio import load_gray, load_labels
from histseg.metrics import confusion
from histseg.model import RunConfig, load_model
from histseg.nn import Network, NetworkConfig, TrainConfig, _Cache, apply_dropout
from histseg.pipeline import evaluate_pairs, find_pairs, segment_image, train_model
from histseg.superpixel import slic
from histseg.tensor import Rng

criterion = pytest.mark.criterion


# ---------------------------------------------------------------------------
# 1. gradient correctness


def _fd_max_rel_error(net, x, y, mask, h=1e-5):
    _, analytic = net.loss_and_grads(x, y, mask)
    worst = 0.0
    for (_, p), g in zip(net.parameters(), analytic):
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            up = net.loss_and_grads(x, y, mask)[0]
            p[i] = old - h
            down = net.loss_and_grads(x, y, mask)[0]
            p[i] = old
            num = (up - down) / (2 * h)
            denom = max(abs(num), abs(g[i]), 1e-7)
            worst = max(worst, abs(num - g[i]) / denom)
    return worst


@criterion(1, "analytic gradients match central finite differences (rel. err < 1e-4, < 10 s)")
def test_c1_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    x = rng.random((6, 8, 8))
    y = rng.integers(0, 3, 6)
    cases = {
        "plain": (False, None),
        "max pool": (True, None),
        "fixed dropout mask": (False, (rng.random((6, 5)) >= 0.5) * 2.0),
    }
    for name, (pool, mask) in cases.items():
        cfg = NetworkConfig(conv_kernel_counts=(2,), use_max_pool=pool, dense_width=5, num_classes=3, input_side=8)
        net = Network.init(cfg, seed=11)
        for _, p in net.parameters():
            p += rng.normal(scale=0.05, size=p.shape)
        err = _fd_max_rel_error(net, x, y, mask)
        assert err < 1e-4, f"{name}: max relative error {err:.2e}"
    assert time.perf_counter() - t0 < 10.0


# ---------------------------------------------------------------------------
# 2. metrics oracle


def _brute_metrics(pred, truth, n):
    p, t = pred.ravel().tolist(), truth.ravel().tolist()
    total = len(t)
    acc = sum(a == b for a, b in zip(p, t)) / total
    recalls, ius, fw = [], [], 0.0
    for c in range(n):
        tc = sum(1 for b in t if b == c)
        pc = sum(1 for a in p if a == c)
        inter = sum(1 for a, b in zip(p, t) if a == b == c)
        if tc:
            recalls.append(inter / tc)
        if tc + pc - inter:
            ius.append(inter / (tc + pc - inter))
            fw += tc * inter / (tc + pc - inter)
    return {"pixel_acc": acc, "mean_acc": sum(recalls) / len(recalls), "mean_iu": sum(ius) / len(ius), "fw_iu": fw / total}


@criterion(2, "confusion-matrix metrics equal brute force within 1e-12; worked matrix 0.7/0.70833/0.5357/0.5429")
def test_c2_metrics_oracle():
    rng = np.random.default_rng(7)
    for i in range(100):
        n = (2, 3, 5)[i % 3]
        truth = rng.integers(0, n, (16, 16))
        pred = np.where(rng.random((16, 16)) < 0.5, truth, rng.integers(0, n, (16, 16)))
        got = confusion(pred, truth, n).summary()
        want = _brute_metrics(pred, truth, n)
        for k in want:
            assert abs(got[k] - want[k]) <= 1e-12, (i, k)
    from histseg.metrics import ConfusionMatrix

    s = ConfusionMatrix.from_counts([[3, 1], [2, 4]]).summary()
    assert s["pixel_acc"] == pytest.approx(0.7, abs=1e-12)
    assert s["mean_acc"] == pytest.approx(0.70833, abs=5e-6)
    assert s["mean_iu"] == pytest.approx(0.5357, abs=5e-5)
    assert s["fw_iu"] == pytest.approx(0.5429, abs=5e-5)


# ---------------------------------------------------------------------------
# 3. SLIC invariants


def _random_image(seed):
    r = np.random.default_rng(seed)
    img = r.random((128, 128))
    if seed % 2:
        img = ndimage.gaussian_filter(img, 1 + seed % 5)
        img = (img - img.min()) / np.ptp(img)
    return img


@criterion(3, "SLIC gives a 4-connected partition with count in [0.5k, 1.5k]; k=1 gives one superpixel")
@pytest.mark.parametrize("k", [1, 16, 100])
def test_c3_slic_invariants(k):
    for seed in range(20):
        sp = slic(_random_image(seed), k)
        a = sp.assignment
        n = sp.count
        assert a.shape == (128, 128)
        assert np.array_equal(np.unique(a), np.arange(n))
        assert sp.sizes.sum() == 128 * 128
        for i, box in enumerate(ndimage.find_objects(a + 1)):
            assert ndimage.label(a[box] == i)[1] == 1, f"seed {seed}: superpixel {i} is split"
        assert 0.5 * k <= n <= 1.5 * k, f"seed {seed}: {n} superpixels for k={k}"
        if k == 1:
            assert n == 1


# ---------------------------------------------------------------------------
# 4. synthetic end-to-end


@criterion(4, "synthetic documents: held-out pixel acc >= 95%, f.w. IU >= 90%, < 5 min")
def test_c4_synthetic_end_to_end(tmp_path):
    t0 = time.perf_counter()
    train_dirs = synthetic.write_dataset(tmp_path / "train", 8, seed=0)
    test_dirs = synthetic.write_dataset(tmp_path / "test", 4, seed=1000)
    # 256x256 pages are already small, so no further downscaling
    run = RunConfig(
        scale_exp=0,
        network=NetworkConfig(num_classes=3),
        training=TrainConfig(num_batches=2000),
        palette=synthetic.PALETTE,
    )
    net, _, patches = train_model(find_pairs(*train_dirs), run)
    cm = evaluate_pairs(net, find_pairs(*test_dirs), run)
    elapsed = time.perf_counter() - t0
    s = cm.summary()
    print(f"\nsynthetic: {len(patches)} patches, {s}, {elapsed:.0f}s")
    assert s["pixel_acc"] >= 0.95
    assert s["fw_iu"] >= 0.90
    assert elapsed < 300


# ---------------------------------------------------------------------------
# 5. real manuscript reproduction (optional)

DATA = os.environ.get("HISTSEG_DATA")


@criterion(5, "St. Gall pixel acc. 98 +/- 3, Parzival 94 +/- 3 (optional, needs HISTSEG_DATA)")
@pytest.mark.parametrize("dataset,target", [("stgall", 0.98), ("parzival", 0.94)])
def test_c5_manuscript_reproduction(dataset, target):
    root = Path(DATA or "") / dataset
    if not DATA or not (root / "train" / "images").is_dir():
        pytest.skip(f"{dataset} pages not available")
    run = RunConfig()
    net, _, _ = train_model(find_pairs(root / "train" / "images", root / "train" / "labels"), run)
    cm = evaluate_pairs(net, find_pairs(root / "test" / "images", root / "test" / "labels"), run)
    assert abs(cm.pixel_accuracy() - target) <= 0.03


# ---------------------------------------------------------------------------
# 6. architecture shapes


@criterion(6, "default shape chain 28x28x1 -> 26x26x4 -> 100 -> M; max pool gives 13x13x4")
def test_c6_architecture_shapes():
    x = np.random.default_rng(0).random((3, 28, 28))
    for m in (3, 5):
        cfg = NetworkConfig(num_classes=m)
        assert cfg.shape_chain() == [(28, 28, 1), (26, 26, 4), (100,), (m,)]
        net = Network.init(cfg)
        cache = _Cache()
        probs = net.forward(x, cache=cache)
        assert cache.conv_out[0].shape == (3, 4, 26, 26)
        assert cache.flat.shape == (3, 26 * 26 * 4)
        assert cache.hidden.shape == (3, 100)
        assert probs.shape == (3, m)

    net = Network.init(NetworkConfig(use_max_pool=True))
    cache = _Cache()
    net.forward(x, cache=cache)
    assert cache.flat.shape == (3, 13 * 13 * 4)
    assert NetworkConfig(use_max_pool=True).shape_chain()[2] == (13, 13, 4)


# ---------------------------------------------------------------------------
# 7. dropout statistics


@criterion(7, "dropout p=0.5 over 1e5 units: survivors in [0.45, 0.55], mean within 2%")
def test_c7_dropout_statistics():
    act = np.random.default_rng(5).uniform(0.0, 2.0, 10**5)
    out, mask = apply_dropout(act, 0.5, Rng(17))
    survived = (mask > 0).mean()
    assert 0.45 <= survived <= 0.55
    assert abs(out.mean() - act.mean()) <= 0.02 * act.mean()


# ---------------------------------------------------------------------------
# 8. determinism


@criterion(8, "identical train runs give byte-identical models; save/load keeps segmentations")
def test_c8_determinism(tmp_path):
    imgs, labs = synthetic.write_dataset(tmp_path / "d", 2, seed=3, size=128)
    pal = tmp_path / "pal.txt"
    pal.write_text(synthetic.PALETTE.dumps())
    common = ["train", "--images", str(imgs), "--labels", str(labs), "--palette", str(pal), "--no-figures",
              "--scale-exp", "0", "--superpixels", "300", "--batches", "40", "--batch-size", "32", "--seed", "5"]
    assert main([*common, "--model", str(tmp_path / "a.hseg")]) == 0
    assert main([*common, "--model", str(tmp_path / "b.hseg")]) == 0
    assert (tmp_path / "a.hseg").read_bytes() == (tmp_path / "b.hseg").read_bytes()

    run = RunConfig(scale_exp=0, superpixels=300, network=NetworkConfig(num_classes=3),
                    training=TrainConfig(num_batches=40, batch_size=32, seed=5), palette=synthetic.PALETTE)
    net, _, _ = train_model(find_pairs(imgs, labs), run)
    from histseg.model import save_model

    save_model(tmp_path / "c.hseg", net, run)
    loaded, run2 = load_model(tmp_path / "c.hseg")
    for p in find_pairs(imgs, labs):
        img = load_gray(p.image)
        np.testing.assert_array_equal(segment_image(net, img, run), segment_image(loaded, img, run2))

    out1, out2 = tmp_path / "s1.png", tmp_path / "s2.png"
    page = str(find_pairs(imgs, labs)[0].image)
    assert main(["segment", str(tmp_path / "a.hseg"), page, str(out1)]) == 0
    assert main(["segment", str(tmp_path / "b.hseg"), page, str(out2)]) == 0
    np.testing.assert_array_equal(load_labels(out1, synthetic.PALETTE), load_labels(out2, synthetic.PALETTE))


# ---------------------------------------------------------------------------
# 9. sweep harness


@criterion(9, "kernel sweep emits 8 rows; depth-3 layer sweep uses kernels 4, 6, 8")
def test_c9_sweep_harness(tmp_path, monkeypatch):
    train_dirs = synthetic.write_dataset(tmp_path / "train", 2, seed=0, size=64)
    test_dirs = synthetic.write_dataset(tmp_path / "test", 1, seed=9, size=64)
    pal = tmp_path / "pal.txt"
    pal.write_text(synthetic.PALETTE.dumps())
    base = ["--train-images", str(train_dirs[0]), "--train-labels", str(train_dirs[1]),
            "--test-images", str(test_dirs[0]), "--test-labels", str(test_dirs[1]),
            "--palette", str(pal), "--scale-exp", "0", "--superpixels", "30",
            "--batches", "2", "--batch-size", "4", "--no-figures"]

    out = tmp_path / "kernels.csv"
    assert main(["sweep", "kernels", *base, "--output", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 8
    assert [int(r["sweep_value"]) for r in rows] == [1, 2, 4, 6, 8, 10, 12, 14]
    assert list(rows[0]) == ["sweep_value", "pixel_acc", "mean_acc", "mean_iu", "fw_iu"]

    seen = []
    real = pipeline.train_model

    def recording(pairs, run, val_pairs=None):
        seen.append(run.network.conv_kernel_counts)
        return real(pairs, run, val_pairs)

    monkeypatch.setattr(pipeline, "train_model", recording)
    out = tmp_path / "layers.csv"
    assert main(["sweep", "layers", *base, "--values", "3", "--output", str(out)]) == 0
    assert seen == [(4, 6, 8)]
    assert len(list(csv.DictReader(open(out)))) == 1
