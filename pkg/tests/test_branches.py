import math

import numpy as np
import pytest
from PIL import Image

from mdfl import gbdt
from mdfl.branches import (
    IMAGE_DIM,
    TEMPORAL_DIM,
    BranchModel,
    ImageError,
    extract_image_feature,
    extract_temporal_feature,
    load_image,
    predict_branch,
    train_branch,
)
from mdfl.core import TemporalTensor


def _gray(img):
    return [[0.299 * float(img[i, j, 0]) + 0.587 * float(img[i, j, 1]) + 0.114 * float(img[i, j, 2])
             for j in range(img.shape[1])] for i in range(img.shape[0])]


def _brute_gradient_mean(img):
    """Central differences inside, one-sided at the borders."""
    g = _gray(img)
    n, m = len(g), len(g[0])

    def d(v, hi, at):
        if at == 0:
            return v(1) - v(0)
        if at == hi:
            return v(hi) - v(hi - 1)
        return (v(at + 1) - v(at - 1)) / 2

    total = 0.0
    for i in range(n):
        for j in range(m):
            gy = d(lambda k: g[k][j], n - 1, i)
            gx = d(lambda k: g[i][k], m - 1, j)
            total += math.hypot(gx, gy)
    return total / (n * m)


def test_black_image():
    f = extract_image_feature(np.zeros((100, 100, 3), dtype=np.uint8))
    assert f.shape == (IMAGE_DIM,) == (31,)
    assert not f[:6].any() and f[-1] == 0
    for ch in range(3):
        hist = f[6 + 8 * ch:14 + 8 * ch]
        assert hist[0] == 1 and hist.sum() == 1


def test_gray_image():
    f = extract_image_feature(np.full((100, 100, 3), 128, dtype=np.uint8))
    assert f[:3].tolist() == [128] * 3 and not f[3:6].any() and f[-1] == 0
    assert f[6 + 4] == 1


def test_split_image_against_brute_force():
    img = np.zeros((100, 100, 3), dtype=np.uint8)
    img[:, 50:] = 255
    f = extract_image_feature(img)
    assert f[:3].tolist() == [127.5] * 3
    assert f[3:6].tolist() == [127.5] * 3
    gy, gx = np.gradient(img.astype(float) @ np.array([0.299, 0.587, 0.114]))
    assert not gy.any()
    assert set(np.nonzero(gx.any(axis=0))[0].tolist()) == {49, 50}
    assert f[-1] == pytest.approx(_brute_gradient_mean(img), rel=1e-12)


def test_random_image_against_brute_force():
    img = np.random.default_rng(0).integers(0, 256, size=(100, 100, 3), dtype=np.uint8)
    f = extract_image_feature(img)
    assert f[-1] == pytest.approx(_brute_gradient_mean(img), rel=1e-12)
    for ch in range(3):
        assert f[6 + 8 * ch:14 + 8 * ch].sum() == pytest.approx(1, abs=1e-12)
    assert np.isfinite(f).all()


def test_image_errors(tmp_path):
    with pytest.raises(ImageError):
        extract_image_feature(np.zeros((100, 99, 3), dtype=np.uint8))
    with pytest.raises(ImageError):
        extract_image_feature(np.zeros((100, 100, 3), dtype=np.float32))
    (tmp_path / "junk.png").write_bytes(b"not a png")
    with pytest.raises(ImageError):
        load_image(tmp_path / "junk.png")
    Image.new("L", (100, 100)).save(tmp_path / "gray.png")
    with pytest.raises(ImageError):
        load_image(tmp_path / "gray.png")
    Image.new("RGB", (100, 100), (1, 2, 3)).save(tmp_path / "ok.png")
    assert load_image(tmp_path / "ok.png")[0, 0].tolist() == [1, 2, 3]


def test_temporal_examples():
    assert extract_temporal_feature(np.zeros((26, 7, 24))).tolist() == [0.0] * TEMPORAL_DIM
    t = np.zeros((26, 7, 24))
    t[0, 0, 9] = 1
    f = extract_temporal_feature(TemporalTensor(t))
    assert f.shape == (199,)
    assert f[9] == 1 / 26 and f[:168].sum() == pytest.approx(1 / 26)
    assert f[168 + 9] == 1 and f[168:192].sum() == 1
    assert f[192] == 1 and f[192:].sum() == 1


def test_temporal_replicated_weeks():
    week = np.random.default_rng(2).integers(0, 4, size=(7, 24)).astype(float)
    f = extract_temporal_feature(np.broadcast_to(week, (26, 7, 24)).copy())
    np.testing.assert_allclose(f[:168], week.ravel(), rtol=1e-12)
    assert f[168:192].sum() == pytest.approx(1) and f[192:].sum() == pytest.approx(1)


def test_branch_m_separable():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 9, size=450)
    X = rng.random((450, 495)) * 0.5
    X[np.arange(450), y] += 1.0
    model = train_branch("M", X, y, gbdt.GbdtParams(n_rounds=20))
    assert (model.predict_proba(X).argmax(axis=1) == y).mean() >= 0.99
    p = predict_branch(model, X[0])
    assert p.shape == (9,) and abs(p.sum() - 1) < 1e-9


def test_branch_dimension_checks(tmp_path):
    rng = np.random.default_rng(1)
    X, y = rng.random((30, 199)), rng.integers(0, 9, size=30)
    t = train_branch("T", X, y, gbdt.GbdtParams(n_rounds=2))
    with pytest.raises(ValueError):
        t.predict_proba(np.zeros(495))
    with pytest.raises(ValueError):
        train_branch("M", X, y)
    with pytest.raises(ValueError):
        train_branch("Q", X, y)
    with pytest.raises(ValueError):
        BranchModel("I", t.model)
    t.save(tmp_path / "t.json")
    again = BranchModel.load(tmp_path / "t.json")
    assert again.kind == "T" and again.model == t.model
    (tmp_path / "bad.json").write_text('{"format": "mdfl-gbdt"}')
    with pytest.raises(gbdt.ModelFormatError):
        BranchModel.load(tmp_path / "bad.json")


class ConstantBranch:
    def __init__(self, p):
        self.p = np.asarray(p, dtype=float)

    def predict_proba(self, X):
        X = np.asarray(X)
        return self.p if X.ndim == 1 else np.tile(self.p, (X.shape[0], 1))


def test_stub_branch_plugs_into_interface():
    stub = ConstantBranch(np.full(9, 1 / 9))
    assert predict_branch(stub, np.zeros(5)).tolist() == [1 / 9] * 9
