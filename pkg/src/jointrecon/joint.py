"""Joint reconstruction and segmentation by alternating Bregman iterations.

One outer iteration ``k -> k+1``:

1. u-step: minimise ``1/2||Au - f||^2 + alpha (TV(u) - <p^k, u>)
   + delta sum_ij v^k_ij (c_j - u_i)^2``. Because every row of ``v^k`` sums to
   one, the coupling is ``delta ||u - sum_j v_j c_j||^2`` up to a constant, so
   the prox of the smooth part has the uniform coefficient ``1 + 2 tau delta``.
2. ``p^{k+1} = p^k - (A*(Au - f) + 2 delta sum_j v^k_j (u - c_j)) / alpha``,
   which keeps ``p^{k+1}`` a TV subgradient at ``u^{k+1}``.
3. v-step: segmentation of ``u^{k+1}`` with linear term ``delta g - beta q^k``.
4. ``q^{k+1} = q^k - delta g / beta`` with ``g_ij = (c_j - u^{k+1}_i)^2``.

The loop stops once ``||v^{k+1} - v^k|| < tol_v``. With ``epsilon_aug > 0``
both blocks get the extra proximal term ``eps/2 ||. - .^k||^2`` and the
subgradient updates include ``eps`` times the step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import diagnostics as dg
from .operators import ForwardOperator, dft, idft, mirror_index, tv
from .recon import solve_u_subproblem
from .segment import fidelity_field, solve_v_subproblem, subgradient_update_v
from .types import (
    IterationRecord,
    JointConfig,
    KSpaceData,
    LabelRelaxation,
    RealImage,
    RegionMeans,
    SolveReport,
    StopReason,
)

log = logging.getLogger(__name__)


@dataclass
class JointState:
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    q: np.ndarray
    y: np.ndarray
    w: np.ndarray
    c: np.ndarray
    k: int = 0


def subgradient_update_u(state: JointState, u_new, data: KSpaceData, cfg: JointConfig, op=None) -> np.ndarray:
    """Subgradient step for the reconstruction block.

    ``p - (A*(A u_new - f) + 2 delta sum_j v_j (u_new - c_j) + eps (u_new - u)) / alpha``
    with ``v``, ``u``, ``p`` taken from ``state`` (the values before the step).
    """
    grad = dg.grad_E_u(u_new, state.v, data, state.c, cfg.delta, op)
    if cfg.epsilon_aug:
        grad = grad + cfg.epsilon_aug * (np.asarray(u_new) - state.u)
    return state.p - grad / cfg.alpha


def update_region_means(u, v, previous=None):
    """Weighted class means ``sum_i v_ij u_i / sum_i v_ij``.

    Classes with zero total weight keep their ``previous`` value (or ``nan``
    without one). Returns the new means and the indices of empty classes.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    mass = v.sum(axis=(0, 1))
    weighted = np.einsum("ij,ijk->k", u, v)
    empty = np.flatnonzero(mass <= 0)
    c = np.where(mass > 0, weighted / np.where(mass > 0, mass, 1.0), np.nan)
    if previous is not None:
        c[empty] = np.asarray(previous, dtype=float)[empty]
    return RegionMeans(c), [int(j) for j in empty]


def joint_solve(data: KSpaceData, c, cfg: JointConfig = JointConfig(), return_state=False, callback=None):
    """Alternate reconstruction and segmentation Bregman steps.

    Parameters
    ----------
    data : KSpaceData
    c : RegionMeans or array_like
        Fixed class intensities (updated after each iteration only when
        ``cfg.update_means`` is set).
    cfg : JointConfig
    callback : callable, optional
        Called as ``callback(state, record)`` after every outer iteration.

    Returns
    -------
    RealImage, LabelRelaxation, SolveReport
        plus the final :class:`JointState` when ``return_state`` is true.
    """
    op = ForwardOperator(data.mask)
    f = data.samples
    atf = op.adjoint(f)
    c = np.array(c, dtype=float).reshape(-1)
    ell = c.size
    shape = op.shape
    alpha, beta, delta, eps = cfg.alpha, cfg.beta, cfg.delta, cfg.epsilon_aug
    tol = cfg.resolved_tol_v(op.shape[0] * op.shape[1], ell)

    st = JointState(
        u=np.zeros(shape),
        v=np.full(shape + (ell,), 1.0 / ell),
        p=np.zeros(shape),
        q=np.zeros(shape + (ell,)),
        y=np.zeros(shape + (2,)),
        w=np.zeros(shape + (ell, 2)),
        c=c,
    )
    report = SolveReport(max_outer=cfg.max_outer)
    for k in range(cfg.max_outer):
        target = st.v @ st.c
        lin = alpha * st.p + 2.0 * delta * target + eps * st.u
        u_new, y, nu = solve_u_subproblem(op, atf, alpha, 2.0 * delta + eps, lin, st.u, st.y, cfg)
        p_new = subgradient_update_u(st, u_new, data, cfg, op)

        g = fidelity_field(u_new, st.c)
        v_new, w, nv = solve_v_subproblem(delta * g - beta * st.q, beta, st.v, st.w, cfg, eps=eps, v_ref=st.v)
        q_new = subgradient_update_v(st.q, g, delta, beta, eps, v_new, st.v)

        rec = _record(k, st, u_new, v_new, p_new, q_new, data, cfg, op)
        rec.inner_iters_u, rec.inner_iters_v = nu, nv
        report.records.append(rec)
        if len(report.records) > 1 and rec.surrogate > report.records[-2].surrogate + dg.DECREASE_SLACK:
            report.flags.append(f"surrogate increased at k={k}")

        st = JointState(u_new, v_new, p_new, q_new, y, w, st.c, k + 1)
        if cfg.update_means:
            new_c, empty = update_region_means(u_new, v_new, previous=st.c)
            if empty:
                report.flags.append(f"empty classes {empty} at k={k}; means kept")
            st.c = np.asarray(new_c)
        if callback is not None:
            callback(st, rec)
        log.debug("joint k=%d |dv|=%.3g tol=%.3g F=%.8g", k, rec.step_v, tol, rec.surrogate)
        if rec.step_v < tol:
            report.stop_reason = StopReason.TOLERANCE
            break

    out = (RealImage(st.u), LabelRelaxation(st.v), report)
    return out + (st,) if return_state else out


def _record(k, st: JointState, u_new, v_new, p_new, q_new, data, cfg, op) -> IterationRecord:
    alpha, beta, delta = cfg.alpha, cfg.beta, cfg.delta
    du = float(np.linalg.norm(u_new - st.u))
    dv = float(np.linalg.norm(v_new - st.v))
    tv_u, tv_v = tv(u_new), tv(v_new)
    breg_u = tv_u - tv(st.u) - float(np.sum(st.p * (u_new - st.u)))
    breg_v = tv_v - tv(st.v) - float(np.sum(st.q * (v_new - st.v)))
    energy = dg.energy_E(u_new, v_new, data, st.c, delta, op)
    _, wnorm = dg.subgradient_element(
        u_new, v_new, st.u, st.v, p_new, st.p, q_new, st.q, data, st.c, alpha, beta, delta, op
    )
    step = math.hypot(du, dv)
    return IterationRecord(
        k=k,
        data_residual=float(np.linalg.norm(op.forward(u_new) - data.samples)),
        coupling_energy=dg.coupling_energy(u_new, v_new, st.c),
        tv_u=tv_u,
        tv_v=tv_v,
        energy=energy,
        bregman_u=breg_u,
        bregman_v=breg_v,
        surrogate=energy + alpha * breg_u + beta * breg_v,
        step_u=du,
        step_v=dv,
        w_norm=wnorm,
        bound_ratio=wnorm / step if step > 0 else math.nan,
    )


def consistent_data(op: ForwardOperator, f) -> np.ndarray:
    """Project samples onto the range of ``A`` over real images.

    A real image has a Hermitian spectrum, so sampled conjugate pairs must
    carry conjugate values and self-conjugate bins must be real. Pairs are
    averaged; unpaired bins are left unchanged.
    """
    spec = op.zero_filled(f)
    r1, r2 = mirror_index(op.shape)
    mirrored = np.conj(spec[np.ix_(r1, r2)])
    paired = op.selected & op.selected[np.ix_(r1, r2)]
    spec = np.where(paired, 0.5 * (spec + mirrored), spec)
    return spec[op.selected]


def _enforce(op: ForwardOperator, u, fc) -> np.ndarray:
    """Closest real image whose sampled coefficients equal ``fc``."""
    spec = dft(u)
    spec[op.selected] = fc
    r1, r2 = mirror_index(op.shape)
    mirror_sel = op.selected[np.ix_(r1, r2)]
    spec = np.where(mirror_sel & ~op.selected, np.conj(spec[np.ix_(r1, r2)]), spec)
    return idft(spec).real


def constrained_joint_solve(
    data: KSpaceData, c, beta: float, delta: float, cfg: JointConfig = JointConfig(), return_report=False
):
    """Exact data consistency coupled to the segmentation.

    Minimises ``delta sum_ij v_ij (c_j - u_i)^2 + beta TV(v)`` over simplex
    labellings ``v`` and real images ``u`` constrained to ``A u = f``, where
    ``f`` is first projected onto the data a real image can produce (this is
    ``f`` itself for noiseless data). The u-step is the projection of the
    piecewise-constant image ``sum_j v_j c_j`` onto that affine set, so it
    replaces the sampled Fourier coefficients. With ``delta = 0`` the u-step
    has no objective and returns the minimum-norm consistent image, which is
    the zero-filled reconstruction when the mask is conjugate-symmetric.

    With ``return_report`` a :class:`SolveReport` (data residual, coupling
    energy, ``v`` steps) is appended to the returned pair.
    """
    op = ForwardOperator(data.mask)
    c = np.array(c, dtype=float).reshape(-1)
    fc = consistent_data(op, data.samples)
    base = _enforce(op, np.zeros(op.shape), fc)
    v = np.full(op.shape + (c.size,), 1.0 / c.size)
    report = SolveReport(max_outer=cfg.max_outer)
    u = base
    if delta == 0:
        report.max_outer = 0
        out = (RealImage(u), LabelRelaxation(v))
        return out + (report,) if return_report else out
    tol = cfg.resolved_tol_v(base.size, c.size)
    w = np.zeros(op.shape + (c.size, 2))
    for k in range(cfg.max_outer):
        u = _enforce(op, v @ c, fc)
        v_new, w, n = solve_v_subproblem(delta * fidelity_field(u, c), beta, v, w, cfg)
        step = float(np.linalg.norm(v_new - v))
        v = v_new
        report.records.append(
            IterationRecord(
                k=k,
                data_residual=float(np.linalg.norm(op.forward(u) - data.samples)),
                coupling_energy=dg.coupling_energy(u, v, c),
                tv_v=tv(v),
                step_v=step,
                inner_iters_v=n,
            )
        )
        if step < tol:
            report.stop_reason = StopReason.TOLERANCE
            break
    out = (RealImage(u), LabelRelaxation(v))
    return out + (report,) if return_report else out
