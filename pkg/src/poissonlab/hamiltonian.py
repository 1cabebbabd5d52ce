"""Periodic Schrodinger operator ``H = T + lambda V`` on a torus grid."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.linalg

from .krylov import ConvergenceError, lanczos
from .lattice import POSITION, BoxMismatchError, BoxSpec, GridField, kinetic_multiplier
from .potential import PotentialSample

DENSE_THRESHOLD = 4096
BOUND_SLACK = 1e-9


class RealShiftError(ValueError):
    """A resolvent was requested on the real axis."""


class DenseSizeError(ValueError):
    pass


class BoundViolation(AssertionError):
    """``|(H - z)^{-1} phi| > |phi| / |Im z|`` beyond solver slack."""


class BoundAudit:
    """Process-wide tally of the resolvent norm check; every solve reports here."""

    def __init__(self):
        self._lock = threading.Lock()
        self.reset()

    def reset(self) -> None:
        with getattr(self, "_lock", threading.Lock()):
            self.solves = 0
            self.violations = 0
            self.worst_ratio = 0.0

    def record(self, ratio: float) -> None:
        with self._lock:
            self.solves += 1
            self.worst_ratio = max(self.worst_ratio, ratio)
            if ratio > 1.0 + BOUND_SLACK:
                self.violations += 1
                raise BoundViolation(f"|u| |Im z| / |phi| = {ratio!r}")


BOUND_AUDIT = BoundAudit()


class HamiltonianHandle:
    """``H = T + lambda V``; immutable after construction.

    ``V`` is a ``PotentialSample`` or any real ``GridField``.
    """

    def __init__(self, box: BoxSpec, lam: float, V: PotentialSample | GridField | np.ndarray | None = None):
        if lam < 0:
            raise ValueError("coupling must be nonnegative")
        self.box = box
        self.lam = float(lam)
        if V is None:
            v = np.zeros(box.shape)
        elif isinstance(V, PotentialSample):
            if V.box != box:
                raise BoxMismatchError(f"{V.box} != {box}")
            v = V.values
        elif isinstance(V, GridField):
            if V.box != box:
                raise BoxMismatchError(f"{V.box} != {box}")
            if np.max(np.abs(V.values.imag), initial=0.0) > 0:
                raise ValueError("potential must be real")
            v = V.values.real
        else:
            v = np.broadcast_to(np.asarray(V, dtype=float), box.shape)
        self.V = np.array(v, dtype=float)
        self.W = self.lam * self.V
        self.V.setflags(write=False)
        self.W.setflags(write=False)
        self.nu = kinetic_multiplier(box)
        self.nu.setflags(write=False)
        self.inf_W = float(self.W.min())
        self.sup_W = float(self.W.max())

    @property
    def n(self) -> int:
        return self.box.size

    @property
    def norm_estimate(self) -> float:
        return float(self.nu.max() + max(abs(self.inf_W), abs(self.sup_W)))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """``H`` on a flat array in grid order (the phases of the unitary transform cancel)."""
        u = np.asarray(x).reshape(self.box.shape)
        out = scipy.fft.ifftn(self.nu * scipy.fft.fftn(u)) + self.W * u
        return out.reshape(-1)

    def kinetic_matvec(self, x: np.ndarray) -> np.ndarray:
        u = np.asarray(x).reshape(self.box.shape)
        return scipy.fft.ifftn(self.nu * scipy.fft.fftn(u)).reshape(-1)

    def dense_matrix(self) -> np.ndarray:
        """Real symmetric matrix of ``H`` assembled as a Kronecker sum."""
        box = self.box
        nu1 = (2 * np.pi * scipy.fft.fftfreq(box.N, d=box.h)) ** 2
        # the Nyquist mode sits at -N/2; fftfreq agrees
        T1 = np.real(scipy.fft.ifft(nu1[:, None] * scipy.fft.fft(np.eye(box.N), axis=0), axis=0))
        T1 = 0.5 * (T1 + T1.T)
        eye = np.eye(box.N)
        T = np.zeros((box.size, box.size))
        for s in range(box.d):
            term = np.ones((1, 1))
            for t in range(box.d):
                term = np.kron(term, T1 if t == s else eye)
            T += term
        return T + np.diag(self.W.reshape(-1))


def _check_box(H: HamiltonianHandle, psi: GridField) -> None:
    if psi.box != H.box:
        raise BoxMismatchError(f"{psi.box} != {H.box}")
    if psi.representation != POSITION:
        raise ValueError("expected a position-space field")


def apply(H: HamiltonianHandle, psi: GridField) -> GridField:
    _check_box(H, psi)
    return GridField(H.box, H.matvec(psi.flat()), POSITION)


def gradient_multiplier(box: BoxSpec, s: int) -> np.ndarray:
    if not 0 <= s < box.d:
        raise IndexError(f"axis {s} out of range for d={box.d}")
    return 2 * np.pi * box.wavenumbers()[s]


def gradient_apply(psi: GridField, s: int) -> GridField:
    """``p_s psi``, the Fourier multiplier ``2 pi p_s``."""
    if psi.representation != POSITION:
        raise ValueError("expected a position-space field")
    mult = gradient_multiplier(psi.box, s)
    return GridField(psi.box, scipy.fft.ifftn(mult * scipy.fft.fftn(psi.values)), POSITION)


@dataclass(frozen=True, eq=False)
class ResolventQuery:
    z: complex
    phi: GridField
    tol: float = 1e-10
    max_iterations: int | None = None

    def __post_init__(self):
        if complex(self.z).imag == 0:
            raise RealShiftError(f"z = {self.z} is real")


@dataclass(frozen=True, eq=False)
class SolveReport:
    solution: GridField
    residual: float  # relative, ||(H - z)u - phi|| / ||phi||
    iterations: int
    backend: str  # "iterative" | "dense"


@dataclass(frozen=True, eq=False)
class Eigenpairs:
    values: np.ndarray
    vectors: np.ndarray | None  # columns, normalized in <.,.>_h
    box: BoxSpec = field(repr=False, default=None)

    def __iter__(self):
        yield self.values
        yield self.vectors


def _audit(u: np.ndarray, phi_norm: float, z: complex, h_weight: float) -> None:
    if phi_norm == 0:
        return
    un = float(np.linalg.norm(u)) * np.sqrt(h_weight)
    BOUND_AUDIT.record(un * abs(z.imag) / phi_norm)


def _explicit_residual(H: HamiltonianHandle, u: np.ndarray, phi: np.ndarray, z: complex) -> float:
    r = H.matvec(u) - z * u - phi
    nphi = np.linalg.norm(phi)
    return float(np.linalg.norm(r) / nphi) if nphi else float(np.linalg.norm(r))


def _dense_solve(H: HamiltonianHandle, phi: np.ndarray, zs, dense_threshold: int) -> list[np.ndarray]:
    if H.n > dense_threshold:
        raise DenseSizeError(f"{H.n} unknowns exceed the dense threshold {dense_threshold}")
    E, Q = scipy.linalg.eigh(H.dense_matrix())
    c = Q.T @ phi
    return [Q @ (c / (E - z)) for z in zs]


def solve_shifts(
    H: HamiltonianHandle,
    phi: GridField,
    zs,
    tol: float = 1e-10,
    max_iterations: int | None = None,
    dense_threshold: int = DENSE_THRESHOLD,
) -> list[SolveReport]:
    """Solve ``(H - z) u = phi`` for several shifts from one Krylov basis.

    Each solution is checked against an explicit residual. If the iterative
    solver falls short and the problem fits under ``dense_threshold``, the
    dense eigendecomposition takes over.
    """
    _check_box(H, phi)
    zs = [complex(z) for z in zs]
    for z in zs:
        if z.imag == 0:
            raise RealShiftError(f"z = {z} is real")
    b = phi.flat()
    wh = H.box.h**H.box.d
    phi_norm = phi.norm()
    reports: list[SolveReport] = []
    try:
        basis = lanczos(H.matvec, b, zs, tol=0.1 * tol, max_iterations=max_iterations)
        sols = [basis.solution(z) for z in zs]
        iters = basis.size
        backend = "iterative"
        res = [_explicit_residual(H, u, b, z) for u, z in zip(sols, zs)]
        if max(res, default=0.0) > tol:
            raise ConvergenceError("explicit residual above target", max(res), iters)
    except ConvergenceError as err:
        if H.n > dense_threshold:
            raise
        sols = _dense_solve(H, b, zs, dense_threshold)
        iters = getattr(err, "iterations", 0)
        backend = "dense"
        res = [_explicit_residual(H, u, b, z) for u, z in zip(sols, zs)]
        if max(res) > tol:
            raise ConvergenceError(f"dense fallback residual {max(res):.3e} > {tol:.1e}", max(res), iters)
    for u, z, r in zip(sols, zs, res):
        _audit(u, phi_norm, z, wh)
        reports.append(SolveReport(GridField(H.box, u, POSITION), r, iters, backend))
    return reports


def resolvent_solve(H: HamiltonianHandle, q: ResolventQuery, dense_threshold: int = DENSE_THRESHOLD) -> SolveReport:
    return solve_shifts(H, q.phi, [q.z], q.tol, q.max_iterations, dense_threshold)[0]


def resolvent_element(
    H: HamiltonianHandle, z: complex, phi: GridField, tol: float = 1e-10, max_iterations: int | None = None
) -> complex:
    """``<phi, (H - z)^{-1} phi>_h``."""
    rep = resolvent_solve(H, ResolventQuery(z, phi, tol, max_iterations))
    return phi.inner(rep.solution)


def resolvent_elements(
    H: HamiltonianHandle, zs, phi: GridField, tol: float = 1e-10, max_iterations: int | None = None
) -> np.ndarray:
    """``resolvent_element`` for many shifts, sharing one Krylov basis."""
    reps = solve_shifts(H, phi, zs, tol, max_iterations)
    return np.array([phi.inner(r.solution) for r in reps])


def dense_spectrum(
    H: HamiltonianHandle, dense_threshold: int = DENSE_THRESHOLD, vectors: bool = True
) -> Eigenpairs:
    """Full eigendecomposition, ``E`` ascending and ``psi_j`` orthonormal in ``<.,.>_h``."""
    if H.n > dense_threshold:
        raise DenseSizeError(f"{H.n} unknowns exceed the dense threshold {dense_threshold}")
    A = H.dense_matrix()
    if not vectors:
        return Eigenpairs(scipy.linalg.eigvalsh(A, driver="evr"), None, H.box)
    E, Q = scipy.linalg.eigh(A)
    return Eigenpairs(E, Q / np.sqrt(H.box.h**H.box.d), H.box)
