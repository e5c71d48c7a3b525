import math

import numpy as np
import pytest

from jointrecon.metrics import evaluate, psnr, rre, rse
from jointrecon.types import HardSegmentation


@pytest.fixture
def img():
    return np.random.default_rng(0).uniform(0.1, 1.0, (8, 8))


def test_rre_examples(img):
    assert rre(img, img) == 0.0
    assert rre(np.zeros_like(img), img) == 1.0
    assert rre(1.1 * img, img) == pytest.approx(0.1, rel=1e-12)


def test_rre_zero_ground_truth():
    with pytest.raises(ValueError):
        rre(np.ones((2, 2)), np.zeros((2, 2)))


def test_psnr_identical_is_inf(img):
    assert psnr(img, img, "norm") == math.inf
    assert psnr(img, img, "standard") == math.inf


def test_psnr_norm_thirty_db():
    # max 1, N = 4096, ||diff|| = 4.096 gives 10 log10(1 / 0.001)
    gt = np.zeros((64, 64))
    gt[0, 0] = 1.0
    u = gt.copy()
    u[5, 5] = 4.096
    assert psnr(u, gt, "norm") == pytest.approx(30.0, abs=1e-12)


def test_psnr_norm_error_doubling(img):
    noise = np.random.default_rng(1).normal(size=img.shape)
    a = psnr(img + 0.01 * noise, img, "norm")
    b = psnr(img + 0.02 * noise, img, "norm")
    assert a - b == pytest.approx(10 * math.log10(2), abs=1e-12)


def test_psnr_standard_formula(img):
    u = img + 0.05
    expected = 10 * math.log10(img.max() ** 2 * img.size / np.sum((img - u) ** 2))
    assert psnr(u, img) == pytest.approx(expected, rel=1e-12)


def test_psnr_unknown_variant(img):
    with pytest.raises(ValueError):
        psnr(img, img, "other")


def test_lower_rre_means_higher_psnr(img):
    noise = np.random.default_rng(2).normal(size=img.shape)
    pairs = [(rre(img + s * noise, img), psnr(img + s * noise, img)) for s in (0.01, 0.05, 0.2)]
    assert pairs[0][0] < pairs[1][0] < pairs[2][0]
    assert pairs[0][1] > pairs[1][1] > pairs[2][1]


def test_rse_examples():
    a = np.zeros((10, 10), int)
    assert rse(a, a) == 0.0
    assert rse(a, 1 - a) == 1.0
    b = a.copy()
    b.flat[[3, 50, 99]] = 1
    assert rse(b, a) == pytest.approx(0.03)
    assert rse(HardSegmentation(b, 2), HardSegmentation(a, 2)) == pytest.approx(0.03)


def test_rse_relabel_invariance():
    rng = np.random.default_rng(3)
    a = rng.integers(0, 3, (6, 6))
    b = rng.integers(0, 3, (6, 6))
    perm = np.array([2, 0, 1])
    assert rse(perm[a], perm[b]) == rse(a, b)


def test_rse_grid_mismatch():
    with pytest.raises(ValueError):
        rse(np.zeros((2, 2), int), np.zeros((2, 3), int))


def test_evaluate_fields(img):
    seg = (img > 0.5).astype(int)
    rep = evaluate(img, img, seg, seg)
    assert rep.rre == 0 and rep.rse == 0 and rep.psnr_norm == math.inf
