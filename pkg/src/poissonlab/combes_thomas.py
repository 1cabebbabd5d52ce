"""Exponential decay of resolvents: weights, the conjugated operator, and tail bounds.

The weight is ``eta_L(x) = L psi(<x>/L)`` with ``psi`` the integral of a
mollified indicator of ``[-5/16, 5/16]``. Conjugating ``H`` by ``e^{a eta}``
gives the non-Hermitian family

    K(alpha) = T - alpha sum_s (p_s g_s + g_s p_s) + alpha^2 |g|^2 + W,    g = grad eta,

and ``K(ia)`` is what the numerical-range and shifted-resolvent estimates
are about. ``K`` is assembled from this formula, not by conjugating the
discrete ``H``, so those estimates hold exactly on the grid.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.linalg
from scipy.interpolate import CubicHermiteSpline

from .hamiltonian import (
    HamiltonianHandle,
    ResolventQuery,
    gradient_multiplier,
    resolvent_solve,
)
from .lattice import POSITION, BoxMismatchError, BoxSpec, GridField, japanese

PLATEAU = 5 / 16
MOLLIFIER_HALF_WIDTH = 1 / 100


def c_d(d: int) -> float:
    return 1.0 / (8.0 * math.sqrt(d))


class WeightFunction:
    """``psi(r) = int_0^r (m * 1_[-5/16, 5/16])(s) ds`` for the bump ``m``.

    ``m(t)`` is proportional to ``exp(-1/(1 - (t/w)^2))`` on ``|t| < w``. For
    ``r >= 0`` the derivative is ``1 - M(r - 5/16)`` with ``M`` the
    mollifier's distribution function, so ``psi(r) = r - Q(r - 5/16)``
    where ``Q(u) = u M(u) - int_{-w}^u t m(t) dt``. Both integrals are
    tabulated once and interpolated with Hermite cubics.
    """

    def __init__(self, width: float = MOLLIFIER_HALF_WIDTH, nodes: int = 4001):
        if not 0 < width < 1 / 16:
            raise ValueError("mollifier half-width must lie in (0, 1/16)")
        self.width = width
        t = np.linspace(-width, width, nodes)
        gl_x, gl_w = np.polynomial.legendre.leggauss(10)
        a, b = t[:-1], t[1:]
        mid, half = (a + b) / 2, (b - a) / 2
        pts = mid[:, None] + half[:, None] * gl_x
        m = self._bump(pts)
        cdf = np.concatenate([[0.0], np.cumsum((m * gl_w).sum(axis=1) * half)])
        first = np.concatenate([[0.0], np.cumsum((pts * m * gl_w).sum(axis=1) * half)])
        norm = cdf[-1]
        self._mass = CubicHermiteSpline(t, cdf / norm, self._bump(t) / norm)
        self._first = CubicHermiteSpline(t, first / norm, t * self._bump(t) / norm)
        self._first_total = float(first[-1] / norm)  # zero up to rounding, bump is even
        self._norm = norm

    def _bump(self, t):
        u = np.asarray(t, dtype=float) / self.width
        out = np.zeros_like(u)
        inside = np.abs(u) < 1
        out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
        return out

    def mollifier(self, t) -> np.ndarray:
        return self._bump(t) / self._norm

    def _M(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u <= -self.width, 0.0, np.where(u >= self.width, 1.0, self._mass(np.clip(u, -self.width, self.width))))

    def _Q(self, u):
        u = np.asarray(u, dtype=float)
        inner = u * self._M(u) - self._first(np.clip(u, -self.width, self.width))
        return np.where(u <= -self.width, 0.0, np.where(u >= self.width, u - self._first_total, inner))

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("psi is defined on [0, inf)")
        return r - self._Q(r - PLATEAU)

    def derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return 1.0 - self._M(r - PLATEAU)

    @property
    def limit(self) -> float:
        return PLATEAU + self._first_total

    def check_invariants(self, d: int = 1, samples: int = 10_000) -> dict[str, bool]:
        """Pointwise checks of the defining properties on a deterministic sample."""
        s = np.linspace(0.0, max(2.0 * math.sqrt(d), 1.0), samples)
        v = self(s)
        dv = self.derivative(s)
        lin = s <= 0.25
        flat = s >= 3 / 8
        low = s <= 2 * math.sqrt(d)
        return {
            "linear_on_quarter": bool(np.all(np.abs(v[lin] - s[lin]) <= 1e-14)),
            "slope_in_unit_interval": bool(np.all((dv >= 0) & (dv <= 1))),
            "constant_beyond_three_eighths": bool(np.all(v[flat] == v[flat][0]) and np.all(dv[flat] == 0)),
            "below_identity": bool(np.all(v <= s + 1e-15)),
            "lower_linear_bound": bool(np.all(v[low] >= s[low] / (8 * math.sqrt(d)) - 1e-15)),
            "monotone": bool(np.all(np.diff(v) >= -1e-15)),
        }


@dataclass(frozen=True, eq=False)
class EtaField:
    box: BoxSpec
    values: np.ndarray  # real, box.shape
    gradient: np.ndarray  # real, (d, *box.shape)
    psi: WeightFunction = field(repr=False)

    @property
    def field(self) -> GridField:
        return GridField(self.box, self.values, POSITION)

    def gradient_sq(self) -> np.ndarray:
        return np.sum(self.gradient**2, axis=0)

    def check_invariants(self, slack: float = 1e-13) -> dict[str, bool]:
        x = self.box.coordinates()
        jx = japanese(x)
        cd = c_d(self.box.d)
        return {
            "lower_bound": bool(np.all(self.values >= cd * jx - slack)),
            "upper_bound": bool(np.all(self.values <= jx + slack)),
            "gradient_bound": bool(np.all(np.sqrt(self.gradient_sq()) <= 1 + slack)),
        }


def build_eta(box: BoxSpec, psi: WeightFunction | None = None) -> EtaField:
    """``eta_L(x) = L psi(<x>/L)`` on the grid of ``Lambda_L`` and its exact gradient."""
    if box.L < 1:
        raise ValueError(f"L = {box.L} < 1")
    psi = WeightFunction() if psi is None else psi
    x = box.coordinates()
    jx = japanese(x)
    vals = box.L * psi(jx / box.L)
    grad = psi.derivative(jx / box.L) * x / jx
    vals.setflags(write=False)
    grad.setflags(write=False)
    return EtaField(box, vals, grad, psi)


def constant_eta(box: BoxSpec, c: float = 0.0) -> EtaField:
    return EtaField(box, np.full(box.shape, float(c)), np.zeros((box.d, *box.shape)), WeightFunction())


def _symmetrized_gradient(H: HamiltonianHandle, eta: EtaField, u: np.ndarray) -> np.ndarray:
    # sum_s (p_s g_s + g_s p_s) u
    out = np.zeros(H.box.shape, dtype=complex)
    for s in range(H.box.d):
        ps = gradient_multiplier(H.box, s)
        gs = eta.gradient[s]
        out += scipy.fft.ifftn(ps * scipy.fft.fftn(gs * u))
        out += gs * scipy.fft.ifftn(ps * scipy.fft.fftn(u))
    return out


def analytic_family_apply(H: HamiltonianHandle, eta: EtaField, alpha: complex, psi_in: GridField) -> GridField:
    """``K(alpha) psi`` for complex ``alpha``; ``alpha = i a`` gives ``K(ia)``."""
    if eta.box != H.box or psi_in.box != H.box:
        raise BoxMismatchError("operator, weight and vector must share a box")
    u = psi_in.values
    out = H.matvec(u).reshape(H.box.shape)
    if alpha != 0:
        out = out - alpha * _symmetrized_gradient(H, eta, u) + alpha**2 * eta.gradient_sq() * u
    return GridField(H.box, out, POSITION)


def conjugated_apply(H: HamiltonianHandle, eta: EtaField, a: float, psi_in: GridField) -> GridField:
    """``K(ia) psi = T psi - ia (p.g + g.p) psi - a^2 |g|^2 psi + W psi``."""
    return analytic_family_apply(H, eta, 1j * float(a), psi_in)


def conjugate_by_phase(H: HamiltonianHandle, eta: EtaField, alpha: float, psi_in: GridField) -> GridField:
    """``e^{i alpha eta} H e^{-i alpha eta} psi`` computed directly."""
    phase = np.exp(1j * alpha * eta.values)
    v = H.matvec((psi_in.values / phase).reshape(-1)).reshape(H.box.shape)
    return GridField(H.box, phase * v, POSITION)


def conjugated_matrix(H: HamiltonianHandle, eta: EtaField, a: float) -> np.ndarray:
    """Dense ``K(ia)``, complex and non-Hermitian for ``a != 0``."""
    box = H.box
    n = box.size
    eye = np.eye(box.N)
    K = H.dense_matrix().astype(complex)
    if a == 0:
        return K
    S = np.zeros((n, n), dtype=complex)
    for s in range(box.d):
        p1 = 2 * np.pi * scipy.fft.fftfreq(box.N, d=box.h)
        P1 = scipy.fft.ifft(p1[:, None] * scipy.fft.fft(eye, axis=0), axis=0)
        P = np.ones((1, 1))
        for t in range(box.d):
            P = np.kron(P, P1 if t == s else eye)
        g = eta.gradient[s].reshape(-1)
        S += P * g[None, :] + g[:, None] * P
    return K - 1j * a * S - a * a * np.diag(eta.gradient_sq().reshape(-1))


def realized_C_V(H: HamiltonianHandle) -> float:
    """Smallest ``C_V >= 1`` with ``W >= -C_V L`` on the grid."""
    return max(1.0, -H.inf_W / H.box.L)


def admissible_shift(z: complex, L: float, C_V: float) -> float:
    """``a = min{1, |Im z| / (4 sqrt(Re z + 2 + C_V L))}``."""
    z = complex(z)
    if z.imag == 0:
        raise ValueError("z must be off the real axis")
    if C_V < 1:
        raise ValueError(f"C_V = {C_V} < 1")
    base = z.real + 2 + C_V * L
    if base <= 0:
        raise ValueError(f"Re z + 2 + C_V L = {base} <= 0")
    return min(1.0, abs(z.imag) / (4 * math.sqrt(base)))


def shifted_resolvent_bound(z: complex) -> float:
    return max(1.0, 2.0 / abs(complex(z).imag))


@dataclass(frozen=True)
class RangeReport:
    a: float
    inf_W: float
    samples: int
    real_violations: int
    imag_violations: int
    min_real_margin: float
    min_imag_margin: float

    @property
    def ok(self) -> bool:
        return self.real_violations == 0 and self.imag_violations == 0


def numerical_range_probe(
    H: HamiltonianHandle,
    eta: EtaField,
    a: float,
    samples: int,
    rng: np.random.Generator | int | None = 0,
    slack: float = 1e-9,
    vectors: np.ndarray | None = None,
) -> RangeReport:
    """Check ``Re <phi, K(ia) phi> >= -a^2 + inf W`` and ``|Im| <= 2|a| sqrt(Re + a^2 - inf W)``.

    Random complex vectors are normalized in ``<.,.>_h``; ``vectors`` (rows)
    may be supplied instead.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = np.random.default_rng(rng)
    wh = H.box.h**H.box.d
    if vectors is None:
        vectors = rng.normal(size=(samples, H.n)) + 1j * rng.normal(size=(samples, H.n))
    nreal = nimag = 0
    mreal = mimag = np.inf
    for v in vectors[:samples]:
        v = v / (np.linalg.norm(v) * math.sqrt(wh))
        f = GridField(H.box, v, POSITION)
        w = f.inner(conjugated_apply(H, eta, a, f))
        x, y = w.real, w.imag
        scale = 1.0 + abs(x) + abs(y)
        dr = x - (-a * a + H.inf_W)
        di = 2 * abs(a) * math.sqrt(max(x + a * a - H.inf_W, 0.0)) - abs(y)
        mreal, mimag = min(mreal, dr / scale), min(mimag, di / scale)
        nreal += dr < -slack * scale
        nimag += di < -slack * scale
    return RangeReport(a, H.inf_W, samples, nreal, nimag, mreal, mimag)


def check_shifted_resolvent(
    H: HamiltonianHandle, eta: EtaField, z: complex, a: float, phis: np.ndarray, slack: float = 1e-6
) -> tuple[int, float]:
    """Dense solve of ``(K(ia) - z) u = phi`` per row of ``phis``.

    Returns (violations of ``|u| <= max{1, 2/|Im z|} |phi|``, worst ratio).
    """
    K = conjugated_matrix(H, eta, a) - complex(z) * np.eye(H.n)
    lu = scipy.linalg.lu_factor(K)
    bound = shifted_resolvent_bound(z)
    worst = 0.0
    bad = 0
    for phi in np.atleast_2d(phis):
        u = scipy.linalg.lu_solve(lu, phi)
        ratio = np.linalg.norm(u) / (bound * np.linalg.norm(phi))
        worst = max(worst, ratio)
        bad += ratio > 1 + slack
    return bad, float(worst)


@dataclass(frozen=True)
class TailEnvelope:
    """``C0 exp(-c_d a' r)`` with ``a' = |Im z| / (8 sqrt(C_V L))``.

    At ``r = d_O L^{1/2+alpha}`` the exponent is ``-kappa L^alpha``.
    """

    kappa: float
    C0: float
    alpha: float
    rate: float  # c_d a'
    a_prime: float
    d_O: float
    L: float

    @property
    def radius(self) -> float:
        return self.d_O * self.L ** (0.5 + self.alpha)

    @property
    def exponent(self) -> float:
        return -self.kappa * self.L**self.alpha

    @property
    def value(self) -> float:
        return self.C0 * math.exp(self.exponent)

    def at(self, r):
        return self.C0 * np.exp(-self.rate * np.asarray(r, dtype=float))


def predicted_tail_bound(
    z: complex,
    L: float,
    alpha: float,
    C_V: float,
    support_radius: float,
    phi_norm: float,
    d: int = 1,
    d_O: float = 0.5,
) -> TailEnvelope:
    """Envelope for ``|1_{|x| > r} (H - z)^{-1} phi|`` when ``supp phi`` lies in ``|x| <= support_radius``.

    ``C0 = max{1, 2/|Im z|} sup_{supp phi} e^{<x>} |phi|``.
    """
    if not 0 < alpha < 0.5:
        raise ValueError(f"alpha = {alpha} outside (0, 1/2)")
    z = complex(z)
    if z.imag == 0:
        raise ValueError("z must be off the real axis")
    if C_V < 1:
        raise ValueError(f"C_V = {C_V} < 1")
    a_prime = abs(z.imag) / (8 * math.sqrt(C_V * L))
    if a_prime > admissible_shift(z, L, C_V):
        raise ValueError(f"L = {L} too small: the envelope's shift exceeds the admissible one")
    cd = c_d(d)
    C0 = shifted_resolvent_bound(z) * math.exp(math.sqrt(1 + support_radius**2)) * phi_norm
    kappa = cd * abs(z.imag) * d_O / (8 * math.sqrt(C_V))
    return TailEnvelope(kappa, C0, alpha, cd * a_prime, a_prime, d_O, L)


class SupportError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DecayReport:
    radii: np.ndarray
    tails: np.ndarray
    envelope: np.ndarray
    slope: float  # least-squares slope of log(tail) against r, fitted above the noise floor
    predicted_rate: float  # a c_d with the admissible a
    a: float
    C_V: float
    noise_floor: float  # fits use only tails above this level
    fitted_points: int
    params: TailEnvelope
    z: complex
    seed: int | None = None

    @property
    def below_envelope(self) -> bool:
        return bool(np.all(self.tails <= self.envelope))

    def to_csv(self) -> str:
        buf = io.StringIO()
        p = self.params
        meta = (
            f"# z={self.z!r} L={p.L!r} alpha={p.alpha!r} a={self.a!r} c_d={p.rate / p.a_prime!r} "
            f"C_V={self.C_V!r} seed={self.seed}\n"
        )
        buf.write(meta)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "tail_norm", "envelope"])
        for r, t, e in zip(self.radii, self.tails, self.envelope):
            w.writerow([repr(float(r)), repr(float(t)), repr(float(e))])
        return buf.getvalue()


def support_radius(phi: GridField, threshold: float = 1e-14) -> float:
    """Largest Euclidean ``|x|`` on the grid where ``|phi| > threshold``."""
    x = phi.box.coordinates()
    on = np.abs(phi.values) > threshold
    if not np.any(on):
        return 0.0
    if np.any(on & (np.max(np.abs(x), axis=0) >= phi.box.L / 2 - phi.box.h / 2)):
        raise SupportError("phi does not vanish near the boundary of the box")
    return float(np.sqrt(np.sum(x**2, axis=0))[on].max())


def tail_norms(u: GridField, radii) -> np.ndarray:
    """``|1_{|x|_inf > r} u|_h`` for each ``r`` (points with ``|x|_inf = r`` count as inside)."""
    sup = np.max(np.abs(u.box.coordinates()), axis=0)
    w = np.abs(u.values) ** 2 * u.box.h**u.box.d
    order = np.argsort(sup, axis=None)
    s_sorted = sup.reshape(-1)[order]
    cum = np.cumsum(w.reshape(-1)[order][::-1])[::-1]  # mass at index >= k
    cum = np.concatenate([cum, [0.0]])
    idx = np.searchsorted(s_sorted, np.asarray(radii, dtype=float), side="right")
    return np.sqrt(cum[idx])


def measure_tail_decay(
    H: HamiltonianHandle,
    z: complex,
    phi: GridField,
    radii=None,
    alpha: float = 0.25,
    tol: float = 1e-10,
    seed: int | None = None,
) -> DecayReport:
    """Tail norms of one resolvent solve against the exponential envelope."""
    R = support_radius(phi)
    box = H.box
    if radii is None:
        radii = np.arange(math.ceil(R / box.h) * box.h, box.L / 2, box.h)
    radii = np.asarray(radii, dtype=float)
    rep = resolvent_solve(H, ResolventQuery(z, phi, tol))
    t = tail_norms(rep.solution, radii)
    C_V = realized_C_V(H)
    a = admissible_shift(z, box.L, C_V)
    env = predicted_tail_bound(z, box.L, alpha, C_V, R, phi.norm(), box.d)
    # Two floors limit the visible exponential regime: solver error, and the
    # algebraic tail of the pseudo-spectral kernel (the symbol is cut at the
    # band edge). The latter is read off as ten times the tail beyond L/4.
    floor = 100 * max(tol, rep.residual) * phi.norm() / abs(complex(z).imag)
    floor = max(floor, 10 * float(tail_norms(rep.solution, [box.L / 4])[0]))
    use = (t > floor) & (radii >= R)
    if use.sum() >= 2:
        slope = float(np.polyfit(radii[use], np.log(t[use]), 1)[0])
    else:
        slope = float("nan")
    return DecayReport(radii, t, env.at(radii), slope, a * c_d(box.d), a, C_V, floor, int(use.sum()), env, complex(z), seed)
