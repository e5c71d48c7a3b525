"""Procedural phantoms, k-space sampling masks and noisy data simulation.

Every generator is a pure function of its spec (including the seed).
Geometry is given as fractions of the grid: a disk ``(cy, cx, r)`` has its
centre at ``(cy * n1, cx * n2)`` and radius ``r * min(n1, n2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .operators import ForwardOperator, mirror_index
from .types import Grid, HardSegmentation, KSpaceData, RealImage, RegionMeans, SamplingMask

PHANTOM_KINDS = ("bubbles", "disks", "shepp_logan_like", "two_region")
MASK_KINDS = ("uniform_random", "variable_density_random", "spiral")


@dataclass(frozen=True)
class PhantomSpec:
    """Phantom description.

    ``disks`` lists ``(cy, cx, r, value)`` tuples drawn in order over a
    ``background`` (last one wins). The bubble phantom is a pipe cross-section
    of ``liquid`` intensity holding ``n_bubbles`` non-overlapping gas bubbles
    of ``gas`` intensity, with radii in ``[r_min, r_max]``.
    """

    kind: str = "two_region"
    grid: Grid = Grid(64, 64)
    seed: int = 0
    background: float = 0.0
    disks: tuple = ()
    radius: float = 0.25
    value: float = 1.0
    n_bubbles: int = 10
    r_min: float = 0.035
    r_max: float = 0.09
    pipe_radius: float = 0.45
    liquid: float = 1.0
    gas: float = 0.0


@dataclass(frozen=True)
class MaskSpec:
    """Sampling-mask description.

    ``symmetric`` closes the mask under ``k -> -k`` while keeping the sample
    count on target. For spirals, ``turns=None`` picks the arm spacing from
    the rate; ``samples_per_turn`` sets the angular tracing density.
    """

    kind: str = "uniform_random"
    rate: float = 0.15
    seed: int = 0
    symmetric: bool = False
    turns: Optional[float] = None
    samples_per_turn: int = 2048
    density_power: float = 2.0


def _disk(grid: Grid, cy, cx, r):
    n1, n2 = grid.shape
    rows = np.arange(n1)[:, None] + 0.5
    cols = np.arange(n2)[None, :] + 0.5
    rad = r * min(n1, n2)
    return (rows - cy * n1) ** 2 + (cols - cx * n2) ** 2 <= rad**2


def _ellipse(grid: Grid, cy, cx, ry, rx, angle_deg):
    n1, n2 = grid.shape
    y = (np.arange(n1)[:, None] + 0.5) / n1 - cy
    x = (np.arange(n2)[None, :] + 0.5) / n2 - cx
    t = math.radians(angle_deg)
    xr = x * math.cos(t) + y * math.sin(t)
    yr = -x * math.sin(t) + y * math.cos(t)
    return (xr / rx) ** 2 + (yr / ry) ** 2 <= 1.0


# piecewise-constant head-like stack: (cy, cx, ry, rx, angle, value); drawn in order
_HEAD = (
    (0.50, 0.50, 0.46, 0.35, 0.0, 1.0),
    (0.51, 0.50, 0.42, 0.31, 0.0, 0.2),
    (0.50, 0.39, 0.16, 0.06, -18.0, 0.0),
    (0.50, 0.61, 0.21, 0.08, 18.0, 0.0),
    (0.33, 0.50, 0.12, 0.10, 0.0, 0.5),
    (0.70, 0.50, 0.05, 0.05, 0.0, 0.5),
    (0.78, 0.45, 0.03, 0.04, 0.0, 0.5),
    (0.78, 0.56, 0.03, 0.03, 0.0, 0.5),
)


def _bubbles(spec: PhantomSpec) -> np.ndarray:
    g = spec.grid
    img = np.full(g.shape, spec.background, dtype=float)
    if spec.n_bubbles == 0:
        return img
    img[_disk(g, 0.5, 0.5, spec.pipe_radius)] = spec.liquid
    rng = np.random.default_rng(spec.seed)
    placed: list[tuple[float, float, float]] = []
    attempts = 0
    while len(placed) < spec.n_bubbles and attempts < 10000:
        attempts += 1
        r = rng.uniform(spec.r_min, spec.r_max)
        # keep bubbles inside the pipe with a one-radius margin
        reach = spec.pipe_radius - 2.0 * r
        if reach <= 0:
            continue
        ang = rng.uniform(0, 2 * math.pi)
        dist = reach * math.sqrt(rng.uniform())
        cy, cx = 0.5 + dist * math.sin(ang), 0.5 + dist * math.cos(ang)
        if all(math.hypot(cy - y, cx - x) > r + s + 0.02 for y, x, s in placed):
            placed.append((cy, cx, r))
    for cy, cx, r in placed:
        img[_disk(g, cy, cx, r)] = spec.gas
    return img


def make_phantom(spec: PhantomSpec):
    """Return ``(image, labels, means)``.

    Labels index the sorted distinct intensities, so ``means[labels] == image``.
    """
    if spec.kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {spec.kind!r}")
    g = spec.grid
    if spec.kind == "two_region":
        img = np.full(g.shape, spec.background, dtype=float)
        img[_disk(g, 0.5, 0.5, spec.radius)] = spec.value
    elif spec.kind == "disks":
        img = np.full(g.shape, spec.background, dtype=float)
        disks = spec.disks or ((0.35, 0.35, 0.17, 1.0), (0.65, 0.65, 0.2, 1.0))
        for cy, cx, r, val in disks:
            img[_disk(g, cy, cx, r)] = val
    elif spec.kind == "shepp_logan_like":
        img = np.full(g.shape, spec.background, dtype=float)
        for cy, cx, ry, rx, ang, val in _HEAD:
            img[_ellipse(g, cy, cx, ry, rx, ang)] = val
    else:
        img = _bubbles(spec)
    means, labels = np.unique(img, return_inverse=True)
    labels = labels.reshape(g.shape)
    return RealImage(img), HardSegmentation(labels, max(means.size, 1)), RegionMeans(means)


def concentric_circles(grid: Grid = Grid(64, 64)) -> PhantomSpec:
    """Three nested rings on a dark background (four classes)."""
    return PhantomSpec(
        kind="disks",
        grid=grid,
        disks=((0.5, 0.5, 0.45, 1.0), (0.5, 0.5, 0.38, 0.3), (0.5, 0.5, 0.25, 0.65), (0.5, 0.5, 0.12, 0.3)),
    )


def _target_count(rate: float, n: int) -> int:
    if not 0 < rate <= 1:
        raise ValueError(f"sampling rate must lie in (0, 1], got {rate}")
    m = int(round(rate * n))
    if m < 1:
        raise ValueError(f"rate {rate} is too small to include the DC bin on a grid of {n} bins")
    return m


def _pairs(shape):
    """Canonical representatives of conjugate-bin orbits and their sizes."""
    n1, n2 = shape
    flat = np.arange(n1 * n2).reshape(shape)
    r1, r2 = mirror_index(shape)
    mir = flat[np.ix_(r1, r2)].ravel()
    rep = np.minimum(flat.ravel(), mir)
    reps = np.unique(rep)
    sizes = np.where(mir[reps] == reps, 1, 2)
    return reps, mir, sizes


def _centered_radius(shape) -> np.ndarray:
    n1, n2 = shape
    f1 = np.fft.fftfreq(n1)[:, None]
    f2 = np.fft.fftfreq(n2)[None, :]
    return np.sqrt(f1**2 + f2**2)


def _random_mask(spec: MaskSpec, grid: Grid, m: int) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    n = grid.n
    if spec.kind == "variable_density_random":
        rad = _centered_radius(grid.shape).ravel()
        weight = (1.0 + rad / 0.05) ** (-spec.density_power)
    else:
        weight = np.ones(n)
    sel = np.zeros(n, dtype=bool)
    sel[0] = True
    if not spec.symmetric:
        cand = np.arange(1, n)
        w = weight[cand] / weight[cand].sum()
        sel[rng.choice(cand, size=m - 1, replace=False, p=w)] = True
        return sel.reshape(grid.shape)
    reps, mir, sizes = _pairs(grid.shape)
    reps, sizes = reps[1:], sizes[1:]
    order = _weighted_order(rng, weight[reps])
    count = 1
    for idx in order:
        if count >= m:
            break
        if count + sizes[idx] > m and count + 1 <= m:
            # an unpaired self-conjugate bin may still fit; skip pairs that overshoot
            continue
        sel[reps[idx]] = sel[mir[reps[idx]]] = True
        count += sizes[idx]
    return sel.reshape(grid.shape)


def _weighted_order(rng, weight) -> np.ndarray:
    # Efraimidis-Spirakis keys give a weighted random permutation
    keys = rng.uniform(size=weight.size) ** (1.0 / weight)
    return np.argsort(-keys, kind="stable")


def _spiral_mask(spec: MaskSpec, grid: Grid, m: int) -> np.ndarray:
    n1, n2 = grid.shape
    c1, c2 = n1 // 2, n2 // 2
    rmax = math.hypot(n1, n2) / 2.0
    if spec.turns is None:
        # arm spacing so that the traced path covers about m pixels of the disk
        spacing = max(1.0, math.pi * (min(n1, n2) / 2.0) ** 2 / m)
        turns = rmax / spacing
    else:
        turns = float(spec.turns)
        spacing = rmax / turns
    arms = 2 if spec.symmetric else 1
    centered = np.zeros(grid.shape, dtype=bool)
    centered[c1, c2] = True
    count = 1
    total = int(math.ceil(turns * spec.samples_per_turn))
    prev = [(c1, c2)] * arms
    for i in range(1, total + 1):
        theta = 2 * math.pi * i / spec.samples_per_turn
        rad = spacing * theta / (2 * math.pi)
        for a in range(arms):
            th = theta + a * math.pi
            p = (c1 + int(round(rad * math.sin(th))), c2 + int(round(rad * math.cos(th))))
            if not (0 <= p[0] < n1 and 0 <= p[1] < n2):
                continue
            for q in _bridge(prev[a], p):
                if count >= m:
                    break
                if not centered[q]:
                    centered[q] = True
                    count += 1
            prev[a] = p
        if count >= m:
            break
    if count < m:
        raise ValueError(f"spiral with {turns:.3g} turns covers only {count} of {m} requested bins")
    return np.fft.ifftshift(centered)


def _bridge(a, b):
    """8-connected pixel steps from ``a`` (exclusive) to ``b`` (inclusive)."""
    out = []
    y, x = a
    while (y, x) != tuple(b):
        y += int(np.sign(b[0] - y))
        x += int(np.sign(b[1] - x))
        out.append((y, x))
    return out


def make_mask(spec: MaskSpec, grid: Grid) -> SamplingMask:
    """Sampling mask in unshifted FFT layout with the DC bin always selected."""
    if spec.kind not in MASK_KINDS:
        raise ValueError(f"unknown mask kind {spec.kind!r}")
    m = _target_count(spec.rate, grid.n)
    if m == grid.n:
        return SamplingMask(np.ones(grid.shape, dtype=bool))
    if spec.kind == "spiral":
        sel = _spiral_mask(spec, grid, m)
        if spec.symmetric:
            r1, r2 = mirror_index(grid.shape)
            sel = sel | sel[np.ix_(r1, r2)]
    else:
        sel = _random_mask(spec, grid, m)
    return SamplingMask(sel)


def simulate_kspace(u_gt, mask: SamplingMask, sigma: float, seed: int = 0) -> KSpaceData:
    """Sample ``A u_gt`` and add complex Gaussian noise with per-component std ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    op = ForwardOperator(mask)
    clean = op.forward(np.asarray(u_gt, dtype=float))
    if sigma == 0:
        return KSpaceData(mask, clean, 0.0)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=(op.m, 2))
    return KSpaceData(mask, clean + noise[:, 0] + 1j * noise[:, 1], sigma)


def snr_of(data: KSpaceData, clean) -> float:
    """``20 log10(||clean|| / (sigma sqrt(2 m)))`` in dB; ``inf`` for noiseless data."""
    norm = float(np.linalg.norm(np.asarray(clean)))
    if data.noise_sigma == 0:
        return math.inf
    if norm == 0:
        return -math.inf
    return 20.0 * math.log10(norm / (data.noise_sigma * math.sqrt(2 * data.m)))
