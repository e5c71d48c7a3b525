"""Convex multi-class Chan-Vese segmentation with fixed region means.

The labelling ``v`` lives on the probability simplex at every pixel. One
segmentation solve minimises

    <lin, v> + beta TV(v) + eps/2 ||v - v_ref||^2   over simplex-valued v

where ``lin = delta g - beta q`` and ``g_ij = (c_j - u_i)^2``. The primal-dual
iteration projects the dual onto pointwise balls of radius ``beta`` (one ball
across all classes, which is the vector TV) and the primal onto the simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operators import GRAD_NORM, divergence, gradient, project_dual_ball, project_simplex, tv
from .types import (
    HardSegmentation,
    IterationRecord,
    JointConfig,
    LabelRelaxation,
    SolveReport,
    SolverDivergence,
    StopReason,
)

STEP = 0.99 / GRAD_NORM


@dataclass
class SegState:
    v: np.ndarray
    q: np.ndarray
    w: np.ndarray
    g: np.ndarray


def fidelity_field(u, c) -> np.ndarray:
    """Per-pixel, per-class squared distance ``(c_j - u_i)^2``, shape ``(n1, n2, l)``."""
    u = np.asarray(u, dtype=float)
    c = np.asarray(c, dtype=float)
    return (c - u[..., None]) ** 2


def solve_v_subproblem(lin, beta, v0, w0, cfg: JointConfig, eps=0.0, v_ref=None, callback=None):
    """Primal-dual iteration for the segmentation block; returns ``v, w, iterations``."""
    tau = sigma = STEP
    v = np.array(v0, dtype=float)
    vbar = v.copy()
    w = np.array(w0, dtype=float)
    step_lin = tau * np.asarray(lin)
    if eps:
        step_lin = step_lin - tau * eps * v_ref
    scale = math.sqrt(v.size)
    n = 0
    for n in range(1, cfg.inner_iters + 1):
        w_old = w
        w = project_dual_ball(w + sigma * gradient(vbar), beta)
        v_old = v
        x = v + tau * divergence(w) - step_lin
        if eps:
            x /= 1.0 + tau * eps
        v = project_simplex(x)
        vbar = 2.0 * v - v_old
        if callback is not None:
            callback(n, v, w)
        if cfg.inner_tol > 0:
            res = max(np.linalg.norm(v - v_old) / tau, np.linalg.norm(w - w_old) / sigma) / scale
            if res < cfg.inner_tol:
                break
    if not np.all(np.isfinite(v)):
        raise SolverDivergence(f"segmentation PDHG produced non-finite values after {n} iterations")
    return v, w, n


def segmentation_objective(v, g, beta, delta, q=None) -> float:
    """``delta <g, v> - beta <q, v> + beta TV(v)``; the indicator of the simplex is not evaluated."""
    val = delta * float(np.sum(g * v)) + beta * tv(v)
    if q is not None:
        val -= beta * float(np.sum(q * v))
    return val


def segment(
    u,
    c,
    beta: float,
    delta: float,
    q=None,
    cfg: JointConfig = JointConfig(),
    v0=None,
    w0=None,
    return_state=False,
    callback=None,
):
    """Segment ``u`` into ``len(c)`` classes.

    ``q = None`` (or zero) gives the plain relaxed Chan-Vese model; a nonzero
    ``q`` adds the Bregman linear term ``-beta <q, v>``. The iteration starts
    from the uniform labelling and a zero dual unless ``v0``/``w0`` are given.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    u = np.asarray(u, dtype=float)
    c = np.asarray(c, dtype=float)
    g = fidelity_field(u, c)
    ell = c.size
    q = np.zeros_like(g) if q is None else np.asarray(q, dtype=float)
    v = np.full(g.shape, 1.0 / ell) if v0 is None else np.asarray(v0, dtype=float)
    w = np.zeros(g.shape + (2,)) if w0 is None else np.asarray(w0, dtype=float)
    eps = cfg.epsilon_aug
    v_new, w, n = solve_v_subproblem(delta * g - beta * q, beta, v, w, cfg, eps=eps, v_ref=v, callback=callback)
    rec = IterationRecord(
        k=0,
        tv_v=tv(v_new),
        coupling_energy=float(np.sum(g * v_new)),
        energy=segmentation_objective(v_new, g, beta, delta, q),
        step_v=float(np.linalg.norm(v_new - v)),
        inner_iters_v=n,
    )
    out = LabelRelaxation(v_new)
    report = SolveReport([rec], StopReason.MAX_ITERS, max_outer=1)
    if return_state:
        return out, report, SegState(v_new, q, w, g)
    return out, report


def threshold(v, mu: float = 0.5) -> HardSegmentation:
    """Hard labels from a relaxation.

    Two classes: label 0 where ``v_0 >= mu``, else 1. More classes: per-pixel
    argmax, ties to the lowest index.
    """
    v = np.asarray(v)
    ell = v.shape[-1]
    if ell == 2:
        labels = np.where(v[..., 0] >= mu, 0, 1)
    else:
        labels = np.argmax(v, axis=-1)
    return HardSegmentation(labels, ell)


def subgradient_update_v(q, g, delta, beta, eps=0.0, v_new=None, v_old=None) -> np.ndarray:
    """``q - (delta g + eps (v_new - v_old)) / beta``; independent of ``v_new`` when ``eps = 0``."""
    step = delta * g
    if eps:
        step = step + eps * (v_new - v_old)
    return q - step / beta


def bregman_segment(u, c, beta: float, delta: float, cfg: JointConfig = JointConfig(), return_state=False):
    """Bregman-iterated segmentation of a fixed image.

    Runs up to ``cfg.max_outer`` segmentation solves, updating the subgradient
    ``q`` after each one and warm-starting the primal-dual pair. Stops early
    when ``||v^{k+1} - v^k|| < tol_v``.
    """
    u = np.asarray(u, dtype=float)
    c = np.asarray(c, dtype=float)
    g = fidelity_field(u, c)
    v = np.full(g.shape, 1.0 / c.size)
    w = np.zeros(g.shape + (2,))
    q = np.zeros_like(g)
    tol = cfg.resolved_tol_v(u.size, c.size)
    eps = cfg.epsilon_aug
    report = SolveReport(max_outer=cfg.max_outer)
    for k in range(cfg.max_outer):
        v_new, w, n = solve_v_subproblem(delta * g - beta * q, beta, v, w, cfg, eps=eps, v_ref=v)
        q_new = subgradient_update_v(q, g, delta, beta, eps, v_new, v)
        step = float(np.linalg.norm(v_new - v))
        report.records.append(
            IterationRecord(
                k=k,
                tv_v=tv(v_new),
                coupling_energy=float(np.sum(g * v_new)),
                bregman_v=tv(v_new) - tv(v) - float(np.sum(q * (v_new - v))),
                step_v=step,
                inner_iters_v=n,
            )
        )
        v, q = v_new, q_new
        if step < tol:
            report.stop_reason = StopReason.TOLERANCE
            break
    out = LabelRelaxation(v)
    if return_state:
        return out, report, SegState(v, q, w, g)
    return out, report

