"""Linear operators and projections on the pixel grid.

All functions take and return plain ndarrays (any of the value types in
:mod:`jointrecon.types` is accepted wherever an array is expected). Fourier
transforms are unitary, so ``||dft(x)|| = ||x||``.

Gradients are forward differences with a zero difference on the last row and
column; :func:`divergence` is the exact negative adjoint of :func:`gradient`.
Gradient fields carry the two spatial components on a trailing axis, so an
image of shape ``(n1, n2)`` maps to ``(n1, n2, 2)`` and a label field of shape
``(n1, n2, l)`` maps to ``(n1, n2, l, 2)``.
"""

from __future__ import annotations

import math

import numpy as np

from .types import SamplingMask

GRAD_NORM = math.sqrt(8.0)


def dft(img) -> np.ndarray:
    return np.fft.fft2(np.asarray(img), norm="ortho")


def idft(spec) -> np.ndarray:
    return np.fft.ifft2(np.asarray(spec), norm="ortho")


def mirror_index(shape) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays mapping each bin ``k`` to its conjugate bin ``-k``."""
    n1, n2 = shape
    return (-np.arange(n1)) % n1, (-np.arange(n2)) % n2


class ForwardOperator:
    """Undersampled unitary Fourier transform ``A = S F`` acting on real images.

    The adjoint is taken with respect to the real inner product
    ``Re <z1, z2>`` on the data space, which gives ``A* z = Re F^-1 S^T z``.
    For real images ``A*A`` is diagonal in Fourier space with symbol
    ``(M(k) + M(-k)) / 2``, so shifted normal equations are solved exactly by
    one FFT pair.
    """

    def __init__(self, mask: SamplingMask):
        self.mask = mask
        self.selected = np.asarray(mask)
        self.shape = self.selected.shape
        self.m = int(self.selected.sum())
        m = self.selected.astype(float)
        r1, r2 = mirror_index(self.shape)
        self.gram_symbol = 0.5 * (m + m[np.ix_(r1, r2)])

    def forward(self, u) -> np.ndarray:
        u = np.asarray(u)
        if u.shape != self.shape:
            raise ValueError(f"image shape {u.shape} does not match mask shape {self.shape}")
        return dft(u)[self.selected]

    def zero_filled(self, z) -> np.ndarray:
        z = np.asarray(z)
        if z.shape != (self.m,):
            raise ValueError(f"expected {self.m} samples, got shape {z.shape}")
        spec = np.zeros(self.shape, dtype=np.complex128)
        spec[self.selected] = z
        return spec

    def adjoint(self, z) -> np.ndarray:
        return idft(self.zero_filled(z)).real

    def normal(self, u) -> np.ndarray:
        """``A*A u`` via the Fourier symbol."""
        return idft(self.gram_symbol * dft(u)).real

    def solve_shifted(self, rhs, shift: float, scale: float) -> np.ndarray:
        """Solve ``(shift I + scale A*A) x = rhs`` exactly."""
        return idft(dft(rhs) / (shift + scale * self.gram_symbol)).real

    def solve_shifted_cg(self, rhs, shift, scale, x0=None, tol=1e-10, maxiter=50):
        x, _ = conjugate_gradient(
            lambda x: shift * x + scale * self.adjoint(self.forward(x)), rhs, x0=x0, tol=tol, maxiter=maxiter
        )
        return x


def conjugate_gradient(apply, b, x0=None, tol=1e-10, maxiter=50):
    """Matrix-free CG for a symmetric positive definite operator.

    Stops when ``||r|| <= tol * ||b||`` or after ``maxiter`` iterations.
    Returns the solution and the number of iterations used.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply(x) if x0 is not None else b.copy()
    p = r.copy()
    rr = np.vdot(r, r).real
    target = (tol * np.linalg.norm(b)) ** 2
    if rr <= target:
        return x, 0
    for it in range(1, maxiter + 1):
        ap = apply(p)
        step = rr / np.vdot(p, ap).real
        x += step * p
        r -= step * ap
        rr_new = np.vdot(r, r).real
        if rr_new <= target:
            return x, it
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, maxiter


def operator_norm(apply, adjoint, shape, iters=50, seed=0) -> float:
    """Power-iteration estimate of ``||K||`` from ``K*K``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = adjoint(apply(x))
        est = np.linalg.norm(y)
        if est == 0:
            return 0.0
        x = y / est
    return math.sqrt(est)


def gradient(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    g = np.zeros(u.shape + (2,))
    g[:-1, :, ..., 0] = u[1:] - u[:-1]
    g[:, :-1, ..., 1] = u[:, 1:] - u[:, :-1]
    return g


def divergence(y) -> np.ndarray:
    """Negative adjoint of :func:`gradient`: ``<grad u, y> = -<u, div y>``."""
    y = np.asarray(y, dtype=float)
    y1, y2 = y[..., 0], y[..., 1]
    d = np.zeros(y1.shape)
    d[:-1] += y1[:-1]
    d[1:] -= y1[:-1]
    d[:, :-1] += y2[:, :-1]
    d[:, 1:] -= y2[:, :-1]
    return d


def _pointwise_sq(y) -> np.ndarray:
    """Squared Euclidean norm over all non-spatial axes.

    The two gradient components are summed per class first; with more than
    two classes the per-class sums are added in sorted order so that
    permuting classes gives a bit-identical result.
    """
    y = np.asarray(y)
    sq = y[..., 0] ** 2 + y[..., 1] ** 2
    if sq.ndim == 2:
        return sq
    sq = sq.reshape(sq.shape[0], sq.shape[1], -1)
    if sq.shape[-1] == 2:
        return sq[..., 0] + sq[..., 1]
    return np.sort(sq, axis=-1).sum(axis=-1)


def tv(u) -> float:
    """Isotropic total variation; vector-valued for inputs with a class axis."""
    return float(np.sqrt(_pointwise_sq(gradient(u))).sum())


def tv_scalar(u) -> float:
    u = np.asarray(u)
    if u.ndim != 2:
        raise ValueError("tv_scalar expects a 2-D image")
    return tv(u)


def tv_vector(v) -> float:
    v = np.asarray(v)
    if v.ndim != 3:
        raise ValueError("tv_vector expects an (n1, n2, l) field")
    return tv(v)


def project_dual_ball(y, radius: float) -> np.ndarray:
    """Pointwise projection onto ``{|y(x)| <= radius}``, norm taken over all channels."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    y = np.asarray(y, dtype=float)
    norm = np.sqrt(_pointwise_sq(y))
    scale = np.maximum(1.0, norm / radius)
    return y / scale.reshape(scale.shape + (1,) * (y.ndim - 2))


def project_simplex(x) -> np.ndarray:
    """Euclidean projection of each row (last axis) onto the probability simplex.

    Sort-based: with ``s`` sorted descending, ``rho`` is the largest ``k`` with
    ``s_k > (sum_{i<=k} s_i - 1) / k`` and the shift is that average. Rows of
    length two use the equivalent closed form, written symmetrically in the
    two entries.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 2:
        raise ValueError("simplex projection needs at least two entries per row")
    if x.shape[-1] == 2:
        d = x[..., 0] - x[..., 1]
        out = np.empty_like(x)
        out[..., 0] = np.clip(0.5 * (1.0 + d), 0.0, 1.0)
        out[..., 1] = np.clip(0.5 * (1.0 - d), 0.0, 1.0)
        return out
    s = -np.sort(-x, axis=-1)
    css = np.cumsum(s, axis=-1) - 1.0
    k = np.arange(1, x.shape[-1] + 1)
    rho = np.count_nonzero(s * k > css, axis=-1)
    theta = np.take_along_axis(css, (rho - 1)[..., None], axis=-1) / rho[..., None]
    return np.maximum(x - theta, 0.0)
