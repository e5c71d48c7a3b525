"""Runtime checks of the alternating scheme's convergence estimates.

The joint solver records, per outer iteration, the coupled energy
``E(u, v) = 1/2 ||Au - f||^2 + delta sum_ij v_ij (c_j - u_i)^2``, the two
Bregman distances of the TV terms and the surrogate

    F(z^{k+1}, r^k) = E(z^{k+1}) + alpha D_TV^{p^k}(u^{k+1}, u^k) + beta D_TV^{q^k}(v^{k+1}, v^k).

With exact block solves ``F`` decreases along the iterates and the norm of the
subgradient element ``w^{k+1}`` is bounded by a multiple of the step
``||z^{k+1} - z^k||``. The inner solves here are inexact, so the constants are
reported empirically rather than derived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operators import ForwardOperator, tv
from .types import KSpaceData, SolveReport

DECREASE_SLACK = 1e-6
BREGMAN_SLACK = 1e-8


def _op_for(data: KSpaceData, op=None) -> ForwardOperator:
    return op if op is not None else ForwardOperator(data.mask)


def coupling_energy(u, v, c) -> float:
    u = np.asarray(u, dtype=float)
    return float(np.sum(np.asarray(v) * (np.asarray(c) - u[..., None]) ** 2))


def energy_E(u, v, data: KSpaceData, c, delta: float, op=None) -> float:
    op = _op_for(data, op)
    r = op.forward(np.asarray(u, dtype=float)) - data.samples
    return 0.5 * float(np.vdot(r, r).real) + delta * coupling_energy(u, v, c)


def grad_E_u(u, v, data: KSpaceData, c, delta: float, op=None) -> np.ndarray:
    """``A*(Au - f) + 2 delta sum_j v_j (u - c_j)``."""
    op = _op_for(data, op)
    u = np.asarray(u, dtype=float)
    g = op.adjoint(op.forward(u) - data.samples)
    if delta:
        g = g + 2.0 * delta * np.sum(np.asarray(v) * (u[..., None] - np.asarray(c)), axis=-1)
    return g


def grad_E_v(u, c, delta: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return delta * (np.asarray(c) - u[..., None]) ** 2


def bregman_tv(u, u_ref, p_ref) -> float:
    """``TV(u) - TV(u_ref) - <p_ref, u - u_ref>``; vector TV for fields with a class axis."""
    u = np.asarray(u, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    return tv(u) - tv(u_ref) - float(np.sum(np.asarray(p_ref) * (u - u_ref)))


@dataclass
class DecreaseCheck:
    passed: bool
    worst_margin: float
    rho2_empirical: float
    violations: list[int] = field(default_factory=list)


def check_sufficient_decrease(history, slack: float = DECREASE_SLACK) -> DecreaseCheck:
    """Check ``F(z^{k+1}, r^k) <= F(z^k, r^{k-1}) + slack`` along a run.

    ``history`` is a :class:`SolveReport` or a sequence of surrogate values.
    ``worst_margin`` is the largest increase ``F_{k+1} - F_k`` seen (negative
    when every step decreased). ``rho2_empirical`` is the smallest ratio of
    decrease to squared step, when step norms are available.
    """
    if isinstance(history, SolveReport):
        F = history.column("surrogate")
        steps = np.hypot(history.column("step_u"), history.column("step_v"))
    else:
        F = np.asarray(history, dtype=float)
        steps = None
    if F.size < 2:
        return DecreaseCheck(True, -math.inf, math.nan)
    inc = np.diff(F)
    violations = [int(i) + 1 for i in np.flatnonzero(~(inc <= slack))]
    rho2 = math.nan
    if steps is not None:
        sq = steps[1:] ** 2
        ok = sq > 0
        if np.any(ok):
            rho2 = float(np.min(-inc[ok] / sq[ok]))
    return DecreaseCheck(not violations, float(np.max(inc)), rho2, violations)


def check_subgradient_bound(history: SolveReport) -> list[float]:
    """Recorded ratios ``||w^{k+1}|| / ||z^{k+1} - z^k||``, skipping zero steps."""
    out = []
    for r in history.records:
        step = math.hypot(r.step_u, r.step_v)
        if step > 0 and math.isfinite(r.bound_ratio):
            out.append(r.bound_ratio)
    return out


def subgradient_element(u_new, v_new, u_old, v_old, p_new, p_old, q_new, q_old, data, c, alpha, beta, delta, op=None):
    """Components of ``w^{k+1}`` (u-part, v-part, -du, -dv) and its norm."""
    wu = grad_E_u(u_new, v_new, data, c, delta, op) + alpha * (np.asarray(p_new) - p_old)
    wv = grad_E_v(u_new, c, delta) + beta * (np.asarray(q_new) - q_old)
    du = np.asarray(u_old) - u_new
    dv = np.asarray(v_old) - v_new
    norm = math.sqrt(sum(float(np.sum(x * x)) for x in (wu, wv, du, dv)))
    return (wu, wv, du, dv), norm


def bregman_violations(history: SolveReport, slack: float = BREGMAN_SLACK) -> list[tuple[int, str, float]]:
    out = []
    for r in history.records:
        for name in ("bregman_u", "bregman_v"):
            val = getattr(r, name)
            if math.isfinite(val) and val < -slack:
                out.append((r.k, name, val))
    return out
