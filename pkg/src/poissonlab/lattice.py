"""Discretized torus geometry and Fourier conventions.

The box is ``[-L/2, L/2)^d`` sampled at ``x(m) = -L/2 + m*h`` with ``h = L/N``.
Fourier coefficients follow

    f_hat(p) = h^d * sum_m exp(-2*pi*i p.x(m)) f(x(m)),    p = m'/L,

with ``m'`` in ``{-N/2, ..., N/2-1}`` stored in FFT (wrap-around) order, so
index ``j`` along an axis carries ``m' = j`` for ``j < N/2`` and ``m' = j - N``
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft

POSITION = "position"
FOURIER = "fourier"


class RepresentationError(ValueError):
    """A field was passed in the wrong representation."""


class BoxMismatchError(ValueError):
    """Two objects live on different boxes."""


@dataclass(frozen=True)
class BoxSpec:
    """The torus ``[-L/2, L/2)^d`` with ``N`` grid points per side."""

    d: int
    L: float
    N: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ValueError(f"side length must be positive, got {self.L}")
        if self.N <= 0 or self.N % 2:
            raise ValueError(f"N must be a positive even integer, got {self.N}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "N", int(self.N))

    @classmethod
    def from_spacing(cls, d: int, L: float, h: float) -> "BoxSpec":
        n = L / h
        N = int(round(n))
        if abs(n - N) > 1e-9 * max(1.0, n):
            raise ValueError(f"L={L} is not an integer multiple of h={h}")
        return cls(d, L, N)

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def volume(self) -> float:
        return self.L**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N**self.d

    def axis_points(self) -> np.ndarray:
        return -self.L / 2 + np.arange(self.N) * self.h

    def coordinates(self) -> np.ndarray:
        """Grid points, shape ``(d, N, ..., N)``."""
        ax = self.axis_points()
        return np.stack(np.meshgrid(*([ax] * self.d), indexing="ij"))

    def dual_indices(self) -> np.ndarray:
        """Integer dual indices ``m'`` in FFT order, shape ``(d, N, ..., N)``."""
        m = np.fft.fftfreq(self.N, d=1.0 / self.N).round().astype(int)
        return np.stack(np.meshgrid(*([m] * self.d), indexing="ij"))

    def wavenumbers(self) -> np.ndarray:
        """``p = m'/L`` in FFT order, shape ``(d, N, ..., N)``."""
        return self.dual_indices() / self.L

    def contains(self, other: "BoxSpec") -> bool:
        return other.d == self.d and other.L <= self.L * (1 + 1e-12)

    def nested_in(self, other: "BoxSpec") -> bool:
        """True if this grid is a sub-grid of ``other`` (same spacing, smaller box)."""
        if other.d != self.d or other.L < self.L:
            return False
        if not np.isclose(self.h, other.h, rtol=1e-12, atol=0.0):
            return False
        return (other.N - self.N) % 2 == 0

    def embedding_slices(self, other: "BoxSpec") -> tuple[slice, ...]:
        """Index slices of ``other``'s grid occupied by this grid."""
        if not self.nested_in(other):
            raise BoxMismatchError(f"{self} is not nested in {other}")
        off = (other.N - self.N) // 2
        return (slice(off, off + self.N),) * self.d


@dataclass(frozen=True)
class DualIndex:
    """A point ``p = m'/L`` of the truncated dual lattice."""

    m: tuple[int, ...]
    box: BoxSpec

    def __post_init__(self):
        m = tuple(int(v) for v in np.atleast_1d(self.m))
        if len(m) != self.box.d:
            raise ValueError(f"dual index {m} has wrong dimension for d={self.box.d}")
        half = self.box.N // 2
        if any(v < -half or v >= half for v in m):
            raise ValueError(f"dual index {m} outside truncation [-{half}, {half})")
        object.__setattr__(self, "m", m)

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.m, dtype=float) / self.box.L

    def grid_index(self) -> tuple[int, ...]:
        """Position of this mode in FFT-ordered arrays."""
        return tuple(v % self.box.N for v in self.m)


@dataclass(frozen=True, eq=False)
class GridField:
    """Complex samples on a box, in position or Fourier representation."""

    box: BoxSpec
    values: np.ndarray
    representation: str = POSITION

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.size != self.box.size:
            raise ValueError(f"expected {self.box.size} values, got {vals.size}")
        if self.representation not in (POSITION, FOURIER):
            raise ValueError(f"unknown representation {self.representation!r}")
        vals = np.array(vals.reshape(self.box.shape), dtype=complex)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def inner(self, other: "GridField") -> complex:
        """``<self, other>`` with the representation's natural weight."""
        _check_same(self, other)
        if self.representation != other.representation:
            raise RepresentationError("inner product across representations")
        s = np.vdot(self.values, other.values)
        if self.representation == POSITION:
            return complex(self.box.h**self.box.d * s)
        return complex(s / self.box.volume)

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self).real, 0.0)))

    def __add__(self, other):
        _check_same(self, other)
        return GridField(self.box, self.values + other.values, self.representation)

    def __sub__(self, other):
        _check_same(self, other)
        return GridField(self.box, self.values - other.values, self.representation)

    def __mul__(self, c):
        return GridField(self.box, self.values * c, self.representation)

    __rmul__ = __mul__


def _check_same(a: GridField, b: GridField) -> None:
    if a.box != b.box:
        raise BoxMismatchError(f"{a.box} != {b.box}")


def position_field(box: BoxSpec, values) -> GridField:
    return GridField(box, values, POSITION)


def sample(box: BoxSpec, f: Callable[[np.ndarray], np.ndarray]) -> GridField:
    """Evaluate ``f`` on the grid; ``f`` receives coordinates of shape ``(d, ...)``."""
    return GridField(box, f(box.coordinates()), POSITION)


def dispersion(p) -> float | np.ndarray:
    """Kinetic energy ``(2 pi p)^2``; vector components lie along axis 0."""
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        return float((2 * np.pi * p) ** 2)
    out = (2 * np.pi) ** 2 * np.sum(p**2, axis=0)
    return float(out) if np.ndim(out) == 0 else out


def kinetic_multiplier(box: BoxSpec) -> np.ndarray:
    """``nu(p)`` on the dual grid, FFT order."""
    return dispersion(box.wavenumbers())


def _phase(box: BoxSpec) -> np.ndarray:
    # exp(-2 pi i p.x(m)) = (-1)^{sum m'} exp(-2 pi i m'.m / N)
    return (-1.0) ** np.sum(box.dual_indices(), axis=0)


def forward_fourier(f: GridField) -> GridField:
    if f.representation != POSITION:
        raise RepresentationError("forward_fourier expects a position-space field")
    box = f.box
    coeffs = box.h**box.d * _phase(box) * scipy.fft.fftn(f.values)
    return GridField(box, coeffs, FOURIER)


def inverse_fourier(g: GridField) -> GridField:
    if g.representation != FOURIER:
        raise RepresentationError("inverse_fourier expects a Fourier-space field")
    box = g.box
    vals = scipy.fft.ifftn(_phase(box) * g.values) / box.h**box.d
    return GridField(box, vals, POSITION)


def plane_wave(p: DualIndex, box: BoxSpec | None = None) -> GridField:
    """``|Lambda_L|^{-1/2} exp(2 pi i p.x)`` sampled on the grid."""
    box = p.box if box is None else box
    if box != p.box:
        p = DualIndex(p.m, box)
    x = box.coordinates()
    phase = np.tensordot(p.p, x, axes=(0, 0))
    return GridField(box, np.exp(2j * np.pi * phase) / np.sqrt(box.volume), POSITION)


def dual_integral(g, box: BoxSpec) -> complex:
    """Normalized dual-lattice sum ``(1/|Lambda_L|) sum_p g(p)``.

    ``g`` is a callable of the wavenumber array (shape ``(d, ...)``) or an
    array already sampled in FFT order.
    """
    vals = g(box.wavenumbers()) if callable(g) else np.asarray(g)
    if vals.shape != box.shape:
        raise ValueError(f"expected shape {box.shape}, got {vals.shape}")
    return complex(np.sum(vals) / box.volume)


def periodize_point(y, L: float) -> np.ndarray | float:
    """The unique point of ``[-L/2, L/2)^d`` congruent to ``y`` modulo ``L``."""
    y = np.asarray(y, dtype=float)
    x = y - L * np.floor((y + L / 2) / L)
    # floor can round a point just below L/2 onto L/2
    x = np.where(x >= L / 2, x - L, x)
    return float(x) if x.ndim == 0 else x


def japanese(x, axis=0) -> np.ndarray:
    """``<x> = sqrt(1 + |x|^2)`` with components along ``axis``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return np.sqrt(1.0 + x * x)
    return np.sqrt(1.0 + np.sum(x * x, axis=axis))


@dataclass
class RiemannReport:
    riemann_sum: complex
    integral: float
    holds: bool
    cells: int = field(default=0)


class DominationError(ValueError):
    """``sup|f| <= inf g`` failed on a cell."""

    def __init__(self, cell: tuple[int, ...], sup_f: float, inf_g: float):
        super().__init__(f"domination fails on cell {cell}: sup|f|={sup_f:.6g} > inf g={inf_g:.6g}")
        self.cell = cell


def riemann_sum_compare(
    f: Callable[[np.ndarray], np.ndarray],
    g: Callable[[np.ndarray], np.ndarray],
    c: float,
    cells_per_side: int,
    d: int = 1,
    samples_per_cell: int = 9,
    quad_points: int = 24,
) -> RiemannReport:
    """Check ``|sum_j f(xi_j) dx_j| <= int_I g`` on ``I = [-c, c]^d``.

    ``I`` is split into ``cells_per_side^d`` congruent cubes, ``xi_j`` is each
    cell's centre, domination ``sup|f| <= inf g`` is checked on a uniform
    sample of each cell, and the integral of ``g`` uses tensor Gauss-Legendre
    per cell.
    """
    edges = np.linspace(-c, c, cells_per_side + 1)
    width = edges[1] - edges[0]
    t = np.linspace(0.0, 1.0, samples_per_cell)
    gl_x, gl_w = np.polynomial.legendre.leggauss(quad_points)
    gl_x = 0.5 * (gl_x + 1.0)
    gl_w = 0.5 * gl_w

    lhs = 0.0j
    rhs = 0.0
    for cell in np.ndindex(*(cells_per_side,) * d):
        lo = edges[list(cell)]
        pts = np.stack(np.meshgrid(*[lo[k] + width * t for k in range(d)], indexing="ij")).reshape(d, -1)
        sup_f = float(np.max(np.abs(f(pts))))
        inf_g = float(np.min(g(pts)))
        if sup_f > inf_g * (1 + 1e-12) + 1e-300:
            raise DominationError(cell, sup_f, inf_g)
        centre = (lo + width / 2).reshape(d, 1)
        lhs += complex(np.asarray(f(centre)).reshape(-1)[0]) * width**d
        qp = np.stack(np.meshgrid(*[lo[k] + width * gl_x for k in range(d)], indexing="ij")).reshape(d, -1)
        qw = np.prod(np.stack(np.meshgrid(*([gl_w] * d), indexing="ij")).reshape(d, -1), axis=0)
        rhs += float(np.sum(g(qp) * qw)) * width**d
    return RiemannReport(lhs, rhs, abs(lhs) <= rhs * (1 + 1e-12), cells_per_side**d)
