"""Spectral measures of ``H`` at a vector and the functionals they define."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hamiltonian import DENSE_THRESHOLD, HamiltonianHandle, dense_spectrum, solve_shifts
from .lattice import GridField


@dataclass(frozen=True, eq=False)
class DiscreteSpectralMeasure:
    energies: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        E = np.asarray(self.energies, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if E.shape != w.shape or E.ndim != 1:
            raise ValueError("energies and weights must be 1-d arrays of equal length")
        if np.any(w < 0):
            raise ValueError("negative spectral weight")
        order = np.argsort(E, kind="stable")
        E, w = E[order], w[order]
        E.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "energies", E)
        object.__setattr__(self, "weights", w)

    @property
    def mass(self) -> float:
        return float(math.fsum(self.weights))

    def mass_outside(self, lo: float, hi: float) -> float:
        out = (self.energies < lo) | (self.energies > hi)
        return float(math.fsum(self.weights[out]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["E", "w"])
        for e, x in zip(self.energies, self.weights):
            w.writerow([repr(float(e)), repr(float(x))])
        return buf.getvalue()


def spectral_measure(H: HamiltonianHandle, phi: GridField, dense_threshold: int = DENSE_THRESHOLD) -> DiscreteSpectralMeasure:
    """Atoms ``(E_j, |<psi_j, phi>_h|^2)`` from the dense eigendecomposition."""
    eig = dense_spectrum(H, dense_threshold)
    wh = H.box.h**H.box.d
    c = wh * (eig.vectors.T @ phi.flat())
    return DiscreteSpectralMeasure(eig.values, np.abs(c) ** 2)


# Test functions


class NotRepresentable(ValueError):
    """The function is outside the family handled by contour quadrature."""


@dataclass(frozen=True)
class TestFunction:
    """A bounded continuous function on the real line with a name and shape data.

    ``kind`` is one of ``resolvent`` (``(x - z)^{-1}``), ``gaussian``
    (``exp(-(x - c)^2 / (2 s^2))``), ``bump`` (``exp(1 - 1/(1 - ((x - c)/r)^2))``
    on ``|x - c| < r``), ``constant`` or ``zero``.
    """

    __test__ = False  # keep pytest from collecting the class

    name: str
    kind: str
    params: tuple[complex | float, ...] = ()

    @classmethod
    def resolvent(cls, z: complex) -> "TestFunction":
        z = complex(z)
        if z.imag == 0:
            raise ValueError("resolvent kernel needs Im z != 0")
        return cls(f"r[{z.real:g}{z.imag:+g}i]", "resolvent", (z,))

    @classmethod
    def gaussian(cls, center: float, width: float) -> "TestFunction":
        if width <= 0:
            raise ValueError("width must be positive")
        return cls(f"gauss[{center:g},{width:g}]", "gaussian", (float(center), float(width)))

    @classmethod
    def bump(cls, center: float, radius: float) -> "TestFunction":
        if radius <= 0:
            raise ValueError("radius must be positive")
        return cls(f"bump[{center:g},{radius:g}]", "bump", (float(center), float(radius)))

    @classmethod
    def constant(cls) -> "TestFunction":
        return cls("one", "constant")

    @classmethod
    def zero(cls) -> "TestFunction":
        return cls("zero", "zero")

    @property
    def support(self) -> tuple[float, float] | None:
        """Support interval for compactly supported members, else ``None``."""
        if self.kind == "bump":
            c, r = self.params
            return (c - r, c + r)
        if self.kind == "zero":
            return (0.0, 0.0)
        return None

    @property
    def compact(self) -> bool:
        return self.support is not None

    @property
    def sup_norm(self) -> float:
        if self.kind == "resolvent":
            return 1.0 / abs(self.params[0].imag)
        return 0.0 if self.kind == "zero" else 1.0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x)
        if self.kind == "resolvent":
            return 1.0 / (x - self.params[0])
        if self.kind == "gaussian":
            c, s = self.params
            return np.exp(-((x - c) ** 2) / (2 * s * s))
        if self.kind == "bump":
            c, r = self.params
            u = (np.asarray(x, dtype=float) - c) / r
            out = np.zeros_like(u)
            inside = np.abs(u) < 1
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
            return out
        if self.kind == "constant":
            return np.ones_like(x, dtype=float)
        return np.zeros_like(x, dtype=float)


@dataclass(frozen=True)
class TestFunctionFamily:
    __test__ = False

    name: str
    members: tuple[TestFunction, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("empty test-function family")

    @classmethod
    def default(cls) -> "TestFunctionFamily":
        return cls(
            "default",
            (
                TestFunction.resolvent(1j),
                TestFunction.resolvent(1 + 1j),
                TestFunction.resolvent(-1 + 2j),
                TestFunction.gaussian(0.0, 1.0),
                TestFunction.gaussian(2.0, 0.5),
                TestFunction.gaussian(5.0, 2.0),
                TestFunction.bump(0.5, 1.0),
                TestFunction.bump(2.0, 1.5),
                TestFunction.bump(4.0, 2.0),
                TestFunction.constant(),
            ),
        )

    def compact_members(self) -> tuple[TestFunction, ...]:
        return tuple(f for f in self.members if f.compact)

    def window(self) -> tuple[float, float] | None:
        """Smallest interval containing every compact support."""
        sup = [f.support for f in self.compact_members()]
        if not sup:
            return None
        return (min(s[0] for s in sup), max(s[1] for s in sup))


def integrate(mu: DiscreteSpectralMeasure, f: Callable | TestFunction) -> complex:
    """``sum_j f(E_j) w_j``."""
    vals = np.asarray(f(mu.energies))
    return complex(np.sum(vals * mu.weights))


# Matrix-free evaluation of <phi, f(H) phi>


@dataclass(frozen=True)
class QuadratureSpec:
    """Trapezoid rule on the lines ``Im zeta = +-b`` with step ``tau = b * step_ratio``."""

    half_width: float = 1.0
    step_ratio: float = 0.25
    tail_tol: float = 1e-13
    solver_tol: float = 1e-10


@dataclass(frozen=True)
class FunctionValue:
    value: complex
    error_bound: float
    nodes: int


def _spectral_bounds(H: HamiltonianHandle) -> tuple[float, float]:
    return H.inf_W, float(H.nu.max()) + H.sup_W


def apply_function_matrix_free(
    H: HamiltonianHandle, f: TestFunction, phi: GridField, quad: QuadratureSpec | None = None
) -> FunctionValue:
    """``<phi, f(H) phi>_h`` from resolvent elements only.

    Resolvent kernels are a single exact node and the constant is the mass.
    Gaussians use the contour
    ``(1/2 pi i) int [f(t - ib) G(t - ib) - f(t + ib) G(t + ib)] dt``,
    ``G(zeta) = <phi, (zeta - H)^{-1} phi>``, discretized by the trapezoid
    rule. The declared error adds the step-halving difference, the cut-off
    tail and the solver residual contribution.
    """
    quad = QuadratureSpec() if quad is None else quad
    norm2 = phi.norm() ** 2
    if f.kind == "zero":
        return FunctionValue(0j, 0.0, 0)
    if f.kind == "constant":
        return FunctionValue(complex(norm2), 1e-15 * norm2, 0)
    if f.kind == "resolvent":
        z = f.params[0]
        rep = solve_shifts(H, phi, [z], quad.solver_tol)[0]
        err = rep.residual * norm2 / abs(z.imag)
        return FunctionValue(phi.inner(rep.solution), err, 1)
    if f.kind != "gaussian":
        raise NotRepresentable(f"{f.name}: not analytic in a strip around the real axis")

    c, s = f.params
    b = min(quad.half_width, 2 * s)
    tau = b * quad.step_ratio
    # |f(t +- ib)| = exp(((b^2 - (t - c)^2) / (2 s^2)); cut where the integrand bound is below tail_tol
    G_max = norm2 / b
    lead = math.exp(b * b / (2 * s * s)) * G_max / math.pi
    if norm2 == 0:
        return FunctionValue(0j, 0.0, 0)
    T = s * math.sqrt(2 * math.log(max(lead * s / quad.tail_tol, 2.0)))
    lo, hi = _spectral_bounds(H)
    t_lo, t_hi = max(c - T, lo - T), min(c + T, hi + T)
    if t_lo >= t_hi:
        t_lo, t_hi = c - T, c + T
    n_half = int(math.ceil((t_hi - t_lo) / (tau / 2)))
    t = t_lo + (tau / 2) * np.arange(n_half + 1)
    zs = t + 1j * b
    reps = solve_shifts(H, phi, zs, quad.solver_tol)
    g = np.array([phi.inner(r.solution) for r in reps])  # <phi, (H - z)^{-1} phi>
    G_up = -g  # G(t + ib)
    G_dn = -np.conj(g)  # G(t - ib), Hermitian H
    integrand = (f(t - 1j * b) * G_dn - f(t + 1j * b) * G_up) / (2j * math.pi)

    def trap(y, step):
        return step * (np.sum(y) - 0.5 * (y[0] + y[-1]))

    fine = trap(integrand, tau / 2)
    coarse = trap(integrand[::2], tau) if n_half % 2 == 0 else trap(integrand[:-1:2], tau) + tau / 2 * integrand[-1]
    # tail: 2 * int_T^inf lead e^{-u^2/(2 s^2)} du
    tail = 2 * lead * s * math.sqrt(math.pi / 2) * math.erfc(T / (math.sqrt(2) * s))
    res = max(r.residual for r in reps)
    solver = (tau / 2) * np.sum(np.abs(f(t + 1j * b))) * res * norm2 / b / math.pi
    return FunctionValue(complex(fine), float(abs(fine - coarse) + tail + solver), len(t))


# Stieltjes smoothing


@dataclass(frozen=True, eq=False)
class SmoothedDensity:
    energies: np.ndarray
    values: np.ndarray
    eta: float

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.energies)) if hasattr(np, "trapezoid") else float(np.trapz(self.values, self.energies))


def stieltjes_density(H: HamiltonianHandle, phi: GridField, energies, eta: float, tol: float = 1e-10) -> SmoothedDensity:
    """``rho_eta(E) = Im <phi, (H - E - i eta)^{-1} phi> / pi``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    E = np.asarray(energies, dtype=float)
    reps = solve_shifts(H, phi, E + 1j * eta, tol)
    g = np.array([phi.inner(r.solution) for r in reps])
    return SmoothedDensity(E, g.imag / math.pi, float(eta))


def poisson_kernel_density(mu: DiscreteSpectralMeasure, energies, eta: float) -> SmoothedDensity:
    """The same smoothing applied to an atomic measure directly."""
    E = np.asarray(energies, dtype=float)
    vals = (eta / math.pi) * np.sum(mu.weights / ((E[:, None] - mu.energies) ** 2 + eta**2), axis=1)
    return SmoothedDensity(E, vals, float(eta))


def default_eta(mu: DiscreteSpectralMeasure | None = None, fallback: float | None = None) -> float:
    """Four times the mean level spacing when a dense spectrum is known."""
    if mu is not None and mu.energies.size > 1:
        return 4.0 * float(np.mean(np.diff(mu.energies)))
    if fallback is None:
        raise ValueError("no spectrum and no fallback width")
    return fallback


# Vague and weak convergence diagnostics


@dataclass(frozen=True)
class FunctionRow:
    L: float
    f_id: str
    value: complex
    diff_to_next: float | None


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    Ls: tuple[float, ...]
    rows: tuple[FunctionRow, ...]
    median_diffs: dict[str, np.ndarray]
    masses: np.ndarray  # median over realizations, per L
    escaping: np.ndarray  # median mass outside the compact window, per L
    vague_pass: bool
    weak_pass: bool
    notes: tuple[str, ...] = field(default=())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["L", "f_id", "value_re", "value_im", "diff_to_next"])
        for r in self.rows:
            w.writerow([repr(float(r.L)), r.f_id, repr(r.value.real), repr(r.value.imag), "" if r.diff_to_next is None else repr(r.diff_to_next)])
        return buf.getvalue()


def _non_increasing(x: np.ndarray, slack: float) -> bool:
    return bool(np.all(np.diff(x) <= slack * (1 + np.abs(x[:-1]))))


def vague_weak_report(
    measures: Sequence[DiscreteSpectralMeasure] | Sequence[Sequence[DiscreteSpectralMeasure]],
    family: TestFunctionFamily,
    Ls: Sequence[float] | None = None,
    norm_sq: float | Sequence[float] | None = None,
    escape_tol: float = 1e-3,
    slack: float = 1e-12,
    window: tuple[float, float] | None = None,
) -> ConvergenceReport:
    """Trend diagnostics for ``mu_L`` along a ladder of box sizes.

    ``measures`` is one sequence over ``L`` or one such sequence per
    realization. Vague PASS: for every compactly supported member, the
    median successive differences are non-increasing. Weak PASS adds: the
    median mass is non-decreasing and never exceeds ``norm_sq``, and the
    mass outside ``window`` (default: the hull of the compact supports) is
    at most ``escape_tol`` at the largest ``L``. The largest ``L`` acts as the
    reference. These are finite-ladder trends, not a proof of convergence.
    """
    if not family.members:
        raise ValueError("empty test-function family")
    runs = [list(measures)] if isinstance(measures[0], DiscreteSpectralMeasure) else [list(m) for m in measures]
    nL = len(runs[0])
    if nL < 3 or any(len(r) != nL for r in runs):
        raise ValueError("need at least three box sizes, the same for every realization")
    Ls = tuple(float(x) for x in (Ls if Ls is not None else range(1, nL + 1)))
    vals = {f.name: np.array([[integrate(m, f) for m in run] for run in runs]) for f in family.members}
    diffs = {k: np.median(np.abs(np.diff(v, axis=1)), axis=0) for k, v in vals.items()}
    masses = np.median(np.array([[m.mass for m in run] for run in runs]), axis=0)
    window = family.window() if window is None else window
    if window is None:
        escaping = np.zeros(nL)
    else:
        escaping = np.median(np.array([[m.mass_outside(*window) for m in run] for run in runs]), axis=0)

    notes = []
    vague = True
    for f in family.compact_members():
        if not _non_increasing(diffs[f.name], slack):
            vague = False
            notes.append(f"{f.name}: differences increase")
    if not family.compact_members():
        notes.append("no compactly supported members; vague clause vacuous")
    weak = vague
    if not _non_increasing(-masses, slack):
        weak = False
        notes.append("mass decreases along the ladder")
    if norm_sq is not None:
        ns = float(np.median(np.atleast_1d(norm_sq)))
        if np.any(masses > ns * (1 + 1e-10) + 1e-15):
            weak = False
            notes.append("mass exceeds |phi|^2")
    if escaping[-1] > escape_tol:
        weak = False
        notes.append(f"mass {escaping[-1]:.3g} outside {window} at the largest L")

    rows = []
    for f in family.members:
        med = np.median(vals[f.name].real, axis=0) + 1j * np.median(vals[f.name].imag, axis=0)
        for i in range(nL):
            rows.append(FunctionRow(Ls[i], f.name, complex(med[i]), float(diffs[f.name][i]) if i < nL - 1 else None))
    return ConvergenceReport(Ls, tuple(rows), diffs, masses, escaping, vague, weak, tuple(notes))
