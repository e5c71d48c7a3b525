"""TV and Bregman-TV reconstruction from undersampled k-space data.

Both solvers share :func:`solve_u_subproblem`, a primal-dual (Chambolle-Pock)
iteration for

    min_u  1/2 ||A u - f||^2 + quad/2 ||u||^2 - <lin, u> + alpha TV(u)

with step sizes ``sigma = tau = 0.99 / sqrt(8)`` and over-relaxation 1. The TV
weight is carried by the dual-ball radius.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .operators import GRAD_NORM, ForwardOperator, divergence, gradient, project_dual_ball, tv
from .types import (
    IterationRecord,
    JointConfig,
    KSpaceData,
    RealImage,
    SolveReport,
    SolverDivergence,
    StopReason,
)

log = logging.getLogger(__name__)

STEP = 0.99 / GRAD_NORM


@dataclass
class ReconState:
    u: np.ndarray
    p: np.ndarray
    y: np.ndarray
    k: int = 0


def solve_u_subproblem(
    op: ForwardOperator,
    atf: np.ndarray,
    alpha: float,
    quad: float,
    lin: np.ndarray,
    u0: np.ndarray,
    y0: np.ndarray,
    cfg: JointConfig,
    callback: Optional[Callable[[int, np.ndarray, np.ndarray], None]] = None,
):
    """Run the primal-dual iteration for the reconstruction block.

    Parameters
    ----------
    op : ForwardOperator
    atf : ndarray
        ``A* f``, precomputed.
    alpha : float
        TV weight (dual-ball radius).
    quad, lin :
        Extra quadratic coefficient and linear term of the smooth part.
    u0, y0 : ndarray
        Primal and dual starting points (warm start).
    cfg : JointConfig
        Supplies ``inner_iters``, ``inner_tol`` and the linear-solver choice.
    callback : callable, optional
        Called as ``callback(n, u, y)`` after every iteration.

    Returns
    -------
    u, y, iterations
    """
    tau = sigma = STEP
    shift = 1.0 + tau * quad
    u = np.array(u0, dtype=float)
    ubar = u.copy()
    y = np.array(y0, dtype=float)
    const = tau * (atf + lin)
    scale = math.sqrt(u.size)
    n = 0
    for n in range(1, cfg.inner_iters + 1):
        y_old = y
        y = project_dual_ball(y + sigma * gradient(ubar), alpha)
        u_old = u
        rhs = u + tau * divergence(y) + const
        if cfg.linear_solver == "cg":
            u = op.solve_shifted_cg(rhs, shift, tau, x0=u, tol=cfg.cg_tol, maxiter=cfg.cg_max)
        else:
            u = op.solve_shifted(rhs, shift, tau)
        ubar = 2.0 * u - u_old
        if callback is not None:
            callback(n, u, y)
        if cfg.inner_tol > 0:
            res = max(np.linalg.norm(u - u_old) / tau, np.linalg.norm(y - y_old) / sigma) / scale
            if res < cfg.inner_tol:
                break
    if not np.all(np.isfinite(u)):
        raise SolverDivergence(f"reconstruction PDHG produced non-finite values after {n} iterations")
    return u, y, n


def tv_objective(op: ForwardOperator, f, u, alpha) -> float:
    r = op.forward(u) - f
    return 0.5 * float(np.vdot(r, r).real) + alpha * tv(u)


def tv_reconstruct(data: KSpaceData, alpha: float, cfg: JointConfig = JointConfig(), callback=None):
    """Minimise ``1/2 ||A u - f||^2 + alpha TV(u)`` starting from ``u = 0``.

    Returns the reconstruction and a single-record :class:`SolveReport`.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    op = ForwardOperator(data.mask)
    f = data.samples
    zeros = np.zeros(op.shape)
    u, _, n = solve_u_subproblem(
        op, op.adjoint(f), alpha, cfg.epsilon_aug, cfg.epsilon_aug * zeros, zeros, np.zeros(op.shape + (2,)), cfg,
        callback=callback,
    )
    res = float(np.linalg.norm(op.forward(u) - f))
    rec = IterationRecord(
        k=0,
        data_residual=res,
        tv_u=tv(u),
        energy=tv_objective(op, f, u, alpha),
        step_u=float(np.linalg.norm(u)),
        inner_iters_u=n,
    )
    return RealImage(u), SolveReport([rec], StopReason.MAX_ITERS, max_outer=1)


def subgradient_update(op: ForwardOperator, p, u_new, f, alpha, eps=0.0, u_old=None) -> np.ndarray:
    """Bregman subgradient update ``p - (A*(A u - f) + eps (u - u_old)) / alpha``."""
    g = op.adjoint(op.forward(u_new) - f)
    if eps:
        g = g + eps * (u_new - u_old)
    return p - g / alpha


def bregman_tv_reconstruct(data: KSpaceData, alpha: float, cfg: JointConfig = JointConfig(), return_state=False):
    """Bregman-iterated TV reconstruction with discrepancy-principle stopping.

    Each outer step solves ``min 1/2||Au - f||^2 + alpha (TV(u) - <p, u>)``
    (plus ``eps/2 ||u - u^k||^2`` when ``cfg.epsilon_aug > 0``) and then moves
    the subgradient ``p`` by the scaled data residual. Iteration stops at the
    first iterate with ``||f - A u|| <= sigma sqrt(m)``; for noiseless data
    (``sigma = 0``) it runs to ``cfg.max_outer``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    op = ForwardOperator(data.mask)
    f = data.samples
    atf = op.adjoint(f)
    eps = cfg.epsilon_aug
    threshold = data.noise_sigma * math.sqrt(op.m)
    u = np.zeros(op.shape)
    p = np.zeros(op.shape)
    y = np.zeros(op.shape + (2,))
    report = SolveReport(max_outer=cfg.max_outer)
    prev_res = math.inf
    for k in range(cfg.max_outer):
        u_new, y, n = solve_u_subproblem(op, atf, alpha, eps, alpha * p + eps * u, u, y, cfg)
        p_new = subgradient_update(op, p, u_new, f, alpha, eps, u)
        res = float(np.linalg.norm(op.forward(u_new) - f))
        report.records.append(
            IterationRecord(
                k=k,
                data_residual=res,
                tv_u=tv(u_new),
                bregman_u=tv(u_new) - tv(u) - float(np.vdot(p, u_new - u)),
                step_u=float(np.linalg.norm(u_new - u)),
                inner_iters_u=n,
            )
        )
        if res > prev_res + 1e-8:
            report.flags.append(f"residual increased at k={k}: {prev_res:.6g} -> {res:.6g}")
        u, p, prev_res = u_new, p_new, res
        log.debug("bregman k=%d residual=%.6g threshold=%.6g", k, res, threshold)
        if data.noise_sigma > 0 and res <= threshold:
            report.stop_reason = StopReason.DISCREPANCY
            break
    if return_state:
        return RealImage(u), report, ReconState(u, p, y, len(report.records))
    return RealImage(u), report
