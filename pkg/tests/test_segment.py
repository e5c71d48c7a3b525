import numpy as np
import pytest

from jointrecon.metrics import rse
from jointrecon.segment import (
    bregman_segment,
    fidelity_field,
    segment,
    segmentation_objective,
    threshold,
)
from jointrecon.simulate import PhantomSpec, make_phantom
from jointrecon.types import Grid, JointConfig, LabelRelaxation, validate


@pytest.fixture(scope="module")
def disks():
    u, labels, means = make_phantom(PhantomSpec(kind="disks", grid=Grid(32, 32)))
    noisy = u.values + np.random.default_rng(0).normal(scale=0.2, size=u.values.shape)
    return u.values, labels, np.asarray(means), noisy


def test_fidelity_examples():
    c = np.array([0.0, 1.0])
    g = fidelity_field(np.zeros((2, 2)), c)
    assert np.all(g[..., 0] == 0) and np.all(g[..., 1] == 1)
    g = fidelity_field(np.full((3, 3), 0.7), np.array([0.7, 2.0]))
    assert np.all(g[..., 0] == 0)


def test_fidelity_loop_oracle():
    rng = np.random.default_rng(1)
    u = rng.normal(size=(5, 4))
    c = np.array([-0.5, 0.2, 1.3])
    g = fidelity_field(u, c)
    for i in range(5):
        for k in range(4):
            for j in range(3):
                assert g[i, k, j] == (c[j] - u[i, k]) ** 2


def test_noiseless_two_disks_exact(disks):
    u, labels, c, _ = disks
    v, _ = segment(u, c, 1e-3, 1.0)
    assert validate(v) == []
    assert rse(threshold(v), labels) == 0.0


def test_large_beta_constant_oracle(disks):
    _, _, c, noisy = disks
    v, _ = segment(noisy, c, 1e3, 1.0)
    best = int(np.argmin([np.sum((cj - noisy) ** 2) for cj in c]))
    assert np.allclose(np.asarray(v), np.eye(c.size)[best], atol=1e-6)


def test_equidistant_image_objective_independent_of_start():
    u = np.full((8, 8), 0.5)
    c = np.array([0.0, 1.0])
    g = fidelity_field(u, c)
    starts = [None, np.broadcast_to([1.0, 0.0], (8, 8, 2)), np.broadcast_to([0.2, 0.8], (8, 8, 2))]
    vals = [segmentation_objective(np.asarray(segment(u, c, 1e-4, 1.0, v0=s)[0]), g, 1e-4, 1.0) for s in starts]
    assert max(vals) - min(vals) <= 1e-8


def test_feasible_output(disks):
    _, _, c, noisy = disks
    v, _ = segment(noisy, c, 0.05, 1.0)
    assert validate(v) == []


@pytest.mark.parametrize("perm", [(1, 0), (2, 0, 1), (1, 2, 0)])
def test_swap_equivariance(disks, perm):
    _, _, c, noisy = disks
    c = np.array([0.0, 1.0, 0.45])[: len(perm)]
    perm = list(perm)
    v, rep = segment(noisy, c, 0.05, 1.0)
    w, rep2 = segment(noisy, c[perm], 0.05, 1.0)
    assert np.array_equal(np.asarray(v)[..., perm], np.asarray(w))
    assert rep.records[0].inner_iters_v == rep2.records[0].inner_iters_v


def test_negligible_tv_matches_pointwise_oracle(disks):
    _, _, c, noisy = disks
    v, _ = segment(noisy, c, 1e-8, 1.0)
    g = fidelity_field(noisy, c)
    tied = np.isclose(g[..., 0], g[..., 1], rtol=0, atol=1e-6)
    agree = threshold(v).labels == np.argmin(g, axis=-1)
    assert np.mean(agree[~tied]) >= 0.999


def test_ergodic_energy_descent(disks):
    _, _, c, noisy = disks
    g = fidelity_field(noisy, c)
    total, vals = None, []

    def cb(n, v, w):
        nonlocal total
        total = v.copy() if total is None else total + v
        vals.append(segmentation_objective(total / n, g, 0.05, 1.0))

    segment(noisy, c, 0.05, 1.0, callback=cb)
    assert np.all(np.diff(vals) <= 1e-8)


def test_threshold_rules():
    lab = np.random.default_rng(2).integers(0, 3, (4, 4))
    assert np.array_equal(threshold(LabelRelaxation.one_hot(lab, 3)).labels, lab)
    assert threshold(np.full((2, 2, 2), 0.5)).labels.tolist() == [[0, 0], [0, 0]]
    assert threshold(np.full((2, 2, 3), 1 / 3)).labels.tolist() == [[0, 0], [0, 0]]


@pytest.mark.parametrize("ell", [2, 3, 4])
def test_threshold_argmax_oracle(ell):
    v = np.random.default_rng(ell).dirichlet(np.ones(ell), size=(6, 7))
    assert np.array_equal(threshold(v).labels, np.argmax(v, axis=-1))


def test_threshold_mu():
    v = np.zeros((1, 3, 2))
    v[0, :, 0] = (0.2, 0.3, 0.7)
    v[..., 1] = 1 - v[..., 0]
    assert threshold(v, 0.25).labels.tolist() == [[1, 0, 0]]


def test_bregman_without_coupling_equals_plain(disks):
    _, _, c, noisy = disks
    a, _ = segment(noisy, c, 0.05, 0.0)
    b, rep, st = bregman_segment(noisy, c, 0.05, 0.0, return_state=True)
    assert np.array_equal(np.asarray(a), np.asarray(b))
    assert np.all(st.q == 0)


def test_bregman_q_telescopes(disks):
    _, _, c, noisy = disks
    delta, beta = 1.0, 0.05
    _, rep, st = bregman_segment(noisy, c, beta, delta, JointConfig(max_outer=4), return_state=True)
    K = rep.outer_iters
    assert K >= 2
    np.testing.assert_allclose(st.q, -K * (delta / beta) * fidelity_field(noisy, c), rtol=1e-12)


def test_bregman_rse_nonincreasing():
    u, labels, means = make_phantom(PhantomSpec(kind="disks", grid=Grid(64, 64)))
    noisy = u.values + np.random.default_rng(0).normal(scale=0.1, size=u.values.shape)
    out = []
    for k in (1, 2, 3):
        v, _ = bregman_segment(noisy, means, 0.05, 1.0, JointConfig(max_outer=k, tol_v=1e-300))
        out.append(rse(threshold(v), labels))
    assert out[0] >= out[1] >= out[2]


def test_rejects_nonpositive_beta(disks):
    u, _, c, _ = disks
    with pytest.raises(ValueError):
        segment(u, c, 0.0, 1.0)
