"""Shared value types for images, k-space data, segmentations and solver settings.

Arrays are stored row-major: a pixel ``(r, c)`` of an ``n1 x n2`` grid has flat
index ``r * n2 + c``. Per-class data live on a trailing axis, so a label
relaxation has shape ``(n1, n2, n_classes)``.

Constructors check shapes only. Invariants (simplex membership, finiteness,
non-empty masks, ...) are reported by :func:`validate`, which never raises.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

EPS_SIMPLEX = 1e-8


def _frozen(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


class _ArrayBacked:
    """Mixin letting ``np.asarray(obj)`` see the wrapped values."""

    def __array__(self, dtype=None, copy=None):
        a = self._array()
        if dtype is not None:
            a = a.astype(dtype)
        return np.array(a, copy=True) if copy else a

    def _array(self) -> np.ndarray:
        return self.values  # type: ignore[attr-defined]


@dataclass(frozen=True)
class Grid:
    n1: int
    n2: int

    @property
    def n(self) -> int:
        return self.n1 * self.n2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)


@dataclass(frozen=True, eq=False)
class RealImage(_ArrayBacked):
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values, np.float64)
        if v.ndim != 2:
            raise ValueError(f"RealImage expects a 2-D array, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def grid(self) -> Grid:
        return Grid(*self.values.shape)


@dataclass(frozen=True, eq=False)
class ComplexSpectrum(_ArrayBacked):
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values, np.complex128)
        if v.ndim != 2:
            raise ValueError(f"ComplexSpectrum expects a 2-D array, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def grid(self) -> Grid:
        return Grid(*self.values.shape)


@dataclass(frozen=True, eq=False)
class SamplingMask(_ArrayBacked):
    """Boolean selection of k-space bins, in unshifted FFT layout (DC at ``[0, 0]``)."""

    selected: np.ndarray

    def __post_init__(self):
        s = _frozen(self.selected, bool)
        if s.ndim != 2:
            raise ValueError(f"SamplingMask expects a 2-D array, got shape {s.shape}")
        object.__setattr__(self, "selected", s)

    def _array(self):
        return self.selected

    @property
    def grid(self) -> Grid:
        return Grid(*self.selected.shape)

    @property
    def m(self) -> int:
        return int(np.count_nonzero(self.selected))

    @property
    def indices(self) -> np.ndarray:
        """Row-major flat indices of the selected bins, ascending."""
        return np.flatnonzero(self.selected)

    @property
    def rate(self) -> float:
        return self.m / self.selected.size

    def mirrored(self) -> np.ndarray:
        """Selection of the conjugate bins, ``S(-k)``."""
        return np.roll(self.selected[::-1, ::-1], 1, axis=(0, 1))

    @property
    def is_conjugate_symmetric(self) -> bool:
        return bool(np.array_equal(self.selected, self.mirrored()))


@dataclass(frozen=True, eq=False)
class KSpaceData:
    mask: SamplingMask
    samples: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        s = _frozen(self.samples, np.complex128).reshape(-1)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))

    @property
    def grid(self) -> Grid:
        return self.mask.grid

    @property
    def m(self) -> int:
        return self.mask.m


@dataclass(frozen=True, eq=False)
class RegionMeans(_ArrayBacked):
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.float64).reshape(-1))

    @property
    def n_classes(self) -> int:
        return self.values.size

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class LabelRelaxation(_ArrayBacked):
    values: np.ndarray
    eps_simplex: float = EPS_SIMPLEX

    def __post_init__(self):
        v = _frozen(self.values, np.float64)
        if v.ndim != 3:
            raise ValueError(f"LabelRelaxation expects shape (n1, n2, n_classes), got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def grid(self) -> Grid:
        return Grid(*self.values.shape[:2])

    @property
    def n_classes(self) -> int:
        return self.values.shape[2]

    @classmethod
    def uniform(cls, grid: Grid, n_classes: int) -> "LabelRelaxation":
        return cls(np.full(grid.shape + (n_classes,), 1.0 / n_classes))

    @classmethod
    def one_hot(cls, labels, n_classes: int) -> "LabelRelaxation":
        labels = np.asarray(labels)
        return cls(np.eye(n_classes)[labels])


@dataclass(frozen=True, eq=False)
class HardSegmentation(_ArrayBacked):
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        lab = _frozen(self.labels, np.int64)
        if lab.ndim != 2:
            raise ValueError(f"HardSegmentation expects a 2-D array, got shape {lab.shape}")
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "n_classes", int(self.n_classes))

    def _array(self):
        return self.labels

    @property
    def grid(self) -> Grid:
        return Grid(*self.labels.shape)


@dataclass(frozen=True, eq=False)
class DualField(_ArrayBacked):
    """Gradient-shaped dual variable, ``values`` of shape ``(n1, n2, channels)``.

    ``radius`` is the ball radius the field was last projected to, if any.
    """

    values: np.ndarray
    radius: Optional[float] = None

    def __post_init__(self):
        v = _frozen(self.values, np.float64)
        if v.ndim == 4:  # (n1, n2, n_classes, 2) as produced by the vector gradient
            v = _frozen(v.reshape(v.shape[0], v.shape[1], -1), np.float64)
        if v.ndim != 3:
            raise ValueError(f"DualField expects shape (n1, n2, channels), got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def grid(self) -> Grid:
        return Grid(*self.values.shape[:2])

    @property
    def channels(self) -> int:
        return self.values.shape[2]


class StopReason(str, enum.Enum):
    TOLERANCE = "tolerance"
    DISCREPANCY = "discrepancy"
    MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class JointConfig:
    """Parameters of the reconstruction, segmentation and joint solvers.

    ``tol_v=None`` resolves to ``1e-3 * sqrt(n * n_classes)`` at solve time.
    ``inner_tol=0`` runs exactly ``inner_iters`` PDHG iterations per block;
    a positive value also stops once the fixed-point residual drops below it.
    ``linear_solver`` picks how the reconstruction prox inverts
    ``(1 + 2 tau delta) I + tau A*A``: ``"fft"`` (exact diagonalisation) or
    ``"cg"`` (conjugate gradient with ``cg_tol``/``cg_max``).
    """

    alpha: float = 1.0
    beta: float = 1e-3
    delta: float = 1.0
    tol_v: Optional[float] = None
    max_outer: int = 20
    inner_iters: int = 300
    cg_tol: float = 1e-10
    cg_max: int = 50
    epsilon_aug: float = 0.0
    mu: float = 0.5
    inner_tol: float = 0.0
    linear_solver: str = "fft"
    update_means: bool = False

    def resolved_tol_v(self, n: int, n_classes: int) -> float:
        if self.tol_v is not None:
            return self.tol_v
        return 1e-3 * math.sqrt(n * n_classes)

    def replace(self, **changes) -> "JointConfig":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return JointConfig(**kw)


@dataclass
class IterationRecord:
    """Diagnostics for one outer iteration ``k -> k+1``.

    Quantities that do not apply to a solver (e.g. ``tv_v`` for a pure
    reconstruction) are ``nan``.
    """

    k: int
    data_residual: float = math.nan
    coupling_energy: float = math.nan
    tv_u: float = math.nan
    tv_v: float = math.nan
    energy: float = math.nan
    bregman_u: float = math.nan
    bregman_v: float = math.nan
    surrogate: float = math.nan
    step_u: float = math.nan
    step_v: float = math.nan
    w_norm: float = math.nan
    bound_ratio: float = math.nan
    inner_iters_u: int = 0
    inner_iters_v: int = 0


@dataclass
class SolveReport:
    records: list[IterationRecord] = field(default_factory=list)
    stop_reason: StopReason = StopReason.MAX_ITERS
    max_outer: Optional[int] = None
    flags: list[str] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def outer_iters(self) -> int:
        return len(self.records)


def validate(obj) -> list[str]:
    """List the invariants ``obj`` violates; an empty list means valid."""
    v = _VALIDATORS.get(type(obj))
    if v is None:
        return [f"no validator for {type(obj).__name__}"]
    return v(obj)


def _check_grid(g: Grid) -> list[str]:
    out = []
    if g.n1 < 2 or g.n2 < 2:
        out.append(f"grid {g.n1}x{g.n2} smaller than 2x2")
    return out


def _check_finite(name, a) -> list[str]:
    return [] if np.all(np.isfinite(a)) else [f"{name} contains non-finite values"]


def _v_image(x: RealImage):
    return _check_grid(x.grid) + _check_finite("image", x.values)


def _v_spectrum(x: ComplexSpectrum):
    return _check_grid(x.grid) + _check_finite("spectrum", x.values)


def _v_mask(x: SamplingMask):
    out = _check_grid(x.grid)
    if x.m < 1:
        out.append("empty mask: m = 0")
    return out


def _v_kspace(x: KSpaceData):
    out = _v_mask(x.mask)
    if x.samples.size != x.mask.m:
        out.append(f"samples length {x.samples.size} != m = {x.mask.m}")
    out += _check_finite("samples", x.samples)
    if not (x.noise_sigma >= 0):
        out.append(f"negative noise sigma {x.noise_sigma}")
    return out


def _v_means(x: RegionMeans):
    out = []
    if x.values.size < 2:
        out.append("fewer than two region means")
    if np.unique(x.values).size != x.values.size:
        out.append("region means are not pairwise distinct")
    return out + _check_finite("region means", x.values)


def _v_relax(x: LabelRelaxation):
    out = _check_grid(x.grid)
    eps = x.eps_simplex
    if x.n_classes < 2:
        out.append("fewer than two classes")
    if np.any(x.values < -eps):
        out.append(f"negative entries below -{eps:g}")
    dev = np.abs(x.values.sum(axis=-1) - 1.0)
    bad = int(np.count_nonzero(dev > eps))
    if bad:
        out.append(f"row-sum violation at {bad} pixel(s), max |sum - 1| = {dev.max():.3g}")
    return out + _check_finite("relaxation", x.values)


def _v_hard(x: HardSegmentation):
    out = _check_grid(x.grid)
    if np.any(x.labels < 0) or np.any(x.labels >= x.n_classes):
        out.append(f"labels outside [0, {x.n_classes})")
    return out


def _v_dual(x: DualField):
    out = _check_finite("dual field", x.values)
    if x.radius is not None:
        norms = np.sqrt(np.sum(x.values**2, axis=-1))
        if np.any(norms > x.radius + 1e-12):
            out.append(f"pointwise norm {norms.max():.6g} exceeds radius {x.radius:g}")
    return out


def _v_config(x: JointConfig):
    out = []
    for name in ("alpha", "beta", "cg_tol"):
        if not getattr(x, name) > 0:
            out.append(f"{name} must be positive")
    for name in ("delta", "epsilon_aug", "inner_tol"):
        if not getattr(x, name) >= 0:
            out.append(f"{name} must be nonnegative")
    if x.tol_v is not None and not x.tol_v > 0:
        out.append("tol_v must be positive")
    for name in ("max_outer", "inner_iters", "cg_max"):
        if not getattr(x, name) >= 1:
            out.append(f"{name} must be a positive integer")
    if not 0 < x.mu < 1:
        out.append("mu must lie in (0, 1)")
    if x.linear_solver not in ("fft", "cg"):
        out.append(f"unknown linear_solver {x.linear_solver!r}")
    return out


def _v_report(x: SolveReport):
    if x.max_outer is not None and len(x.records) > x.max_outer:
        return [f"{len(x.records)} records exceed max_outer = {x.max_outer}"]
    return []


_VALIDATORS = {
    Grid: _check_grid,
    RealImage: _v_image,
    ComplexSpectrum: _v_spectrum,
    SamplingMask: _v_mask,
    KSpaceData: _v_kspace,
    RegionMeans: _v_means,
    LabelRelaxation: _v_relax,
    HardSegmentation: _v_hard,
    DualField: _v_dual,
    JointConfig: _v_config,
    SolveReport: _v_report,
}


class SolverDivergence(RuntimeError):
    """Raised when an iterative solver produces non-finite values."""
