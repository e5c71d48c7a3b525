import math

import numpy as np
import pytest

from jointrecon.operators import ForwardOperator, tv
from jointrecon.recon import bregman_tv_reconstruct, tv_objective, tv_reconstruct
from jointrecon.simulate import MaskSpec, PhantomSpec, make_mask, make_phantom, simulate_kspace
from jointrecon.types import Grid, JointConfig, KSpaceData, StopReason

G = Grid(64, 64)


def problem(rate=0.15, sigma=0.25, kind="disks", grid=G, seed=0):
    u, labels, means = make_phantom(PhantomSpec(kind=kind, grid=grid))
    mask = make_mask(MaskSpec(rate=rate, seed=seed), grid)
    return u, simulate_kspace(u, mask, sigma, seed=seed + 1)


def test_tiny_alpha_full_mask_recovers_image():
    u, data = problem(rate=1.0, sigma=0.0, grid=Grid(32, 32))
    rec, _ = tv_reconstruct(data, 1e-6)
    err = np.linalg.norm(rec.values - u.values) / np.linalg.norm(u.values)
    assert err <= 1e-3


def test_zero_data_gives_zero():
    mask = make_mask(MaskSpec(rate=0.3), Grid(16, 16))
    rec, _ = tv_reconstruct(KSpaceData(mask, np.zeros(mask.m)), 0.5)
    assert np.all(rec.values == 0)


def test_rejects_nonpositive_alpha():
    _, data = problem(grid=Grid(8, 8))
    with pytest.raises(ValueError):
        tv_reconstruct(data, 0.0)
    with pytest.raises(ValueError):
        bregman_tv_reconstruct(data, -1.0)


def test_objective_matches_long_reference_run():
    _, data = problem()
    op = ForwardOperator(data.mask)
    ref, _ = tv_reconstruct(data, 0.2, JointConfig(inner_iters=10000))
    rec, _ = tv_reconstruct(data, 0.2, JointConfig(inner_iters=5000))
    f_ref = tv_objective(op, data.samples, ref.values, 0.2)
    f = tv_objective(op, data.samples, rec.values, 0.2)
    assert abs(f - f_ref) <= 1e-5 * abs(f_ref)


def test_objective_decreases_with_more_iterations():
    _, data = problem(grid=Grid(32, 32))
    op = ForwardOperator(data.mask)
    vals = [
        tv_objective(op, data.samples, tv_reconstruct(data, 0.2, JointConfig(inner_iters=n))[0].values, 0.2)
        for n in (50, 200, 800)
    ]
    assert vals[0] >= vals[1] - 1e-8 and vals[1] >= vals[2] - 1e-8


def test_cg_and_fft_solvers_agree():
    _, data = problem(grid=Grid(16, 16), rate=0.3)
    a, _ = tv_reconstruct(data, 0.1, JointConfig(inner_iters=100))
    b, _ = tv_reconstruct(data, 0.1, JointConfig(inner_iters=100, linear_solver="cg"))
    assert np.max(np.abs(a.values - b.values)) <= 1e-8


def test_first_bregman_step_equals_tv():
    _, data = problem(grid=Grid(32, 32))
    a, _ = tv_reconstruct(data, 1.0)
    b, rep = bregman_tv_reconstruct(data, 1.0, JointConfig(max_outer=1))
    assert np.array_equal(a.values, b.values)
    assert rep.outer_iters == 1


def test_noiseless_runs_to_max_outer():
    _, data = problem(sigma=0.0, grid=Grid(32, 32), rate=0.3)
    _, rep = bregman_tv_reconstruct(data, 1.0, JointConfig(max_outer=8))
    assert rep.stop_reason is StopReason.MAX_ITERS and rep.outer_iters == 8
    res = rep.column("data_residual")
    assert np.all(np.diff(res) <= 1e-8)
    assert res[-1] < 0.1 * res[0]


def test_discrepancy_stop_is_two_sided():
    _, data = problem()
    _, rep = bregman_tv_reconstruct(data, 1.0, JointConfig(max_outer=200))
    res = rep.column("data_residual")
    thr = data.noise_sigma * math.sqrt(data.m)
    assert rep.stop_reason is StopReason.DISCREPANCY
    assert res[-1] <= thr < res[-2]
    assert np.all(np.diff(res) <= 1e-8)


def test_subgradient_inequality():
    _, data = problem(grid=Grid(32, 32), rate=0.3)
    u, rep, st = bregman_tv_reconstruct(data, 1.0, JointConfig(max_outer=3), return_state=True)
    rng = np.random.default_rng(0)
    tv_u = tv(st.u)
    for _ in range(50):
        w = st.u + rng.normal(scale=rng.choice([0.01, 0.1, 1.0]), size=st.u.shape)
        assert tv(w) >= tv_u + np.sum(st.p * (w - st.u)) - 1e-6 * np.linalg.norm(w - st.u) - 1e-9


def test_bregman_distances_nonnegative():
    _, data = problem(grid=Grid(32, 32), rate=0.3)
    _, rep = bregman_tv_reconstruct(data, 1.0, JointConfig(max_outer=6))
    assert np.all(rep.column("bregman_u") >= -1e-8)
