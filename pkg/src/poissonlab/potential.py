"""Weighted Poisson point fields and the periodized random potential.

Atoms are generated per integer unit cube ``[k, k+1)^d`` from an independent
substream, so the atoms inside any box are the same no matter how large the
master region was. This is what couples the potentials ``V_L`` for different
``L`` along one realization.

Substream algorithm ``splitmix64-chain/pcg64 v1``: starting from
``s = splitmix64(master_seed)``, each cube coordinate ``k_i`` (as a 64-bit
two's-complement integer) is folded in as ``s = splitmix64(s ^ k_i)``; the
result seeds ``numpy.random.PCG64``. Per cube the stream draws the count
``n ~ Poisson(1)``, then ``n*d`` uniform offsets, then ``n`` weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import special, stats

from .lattice import BoxSpec, GridField, japanese, periodize_point, position_field

SUBSTREAM_ALGORITHM = "splitmix64-chain/pcg64 v1"
FIELD_FORMAT_VERSION = "poissonlab-poisson-field 1"

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def cube_seed(master_seed: int, cube: Iterable[int]) -> int:
    s = splitmix64(int(master_seed) & _MASK64)
    for k in cube:
        s = splitmix64(s ^ (int(k) & _MASK64))
    return s


# ---------------------------------------------------------------------------
# weight laws


@dataclass(frozen=True)
class WeightLaw:
    """Distribution of the i.i.d. atom weights.

    ``name`` is one of ``point-mass-one``, ``uniform`` (params ``a``, ``b``),
    ``gaussian`` (``mean``, ``sd``) or ``signed-bernoulli`` (``q`` = P(v=+1)).
    """

    name: str
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        p = dict(self.params)
        if self.name == "point-mass-one":
            need = ()
        elif self.name == "uniform":
            need = ("a", "b")
            if not p.get("a", 0) < p.get("b", 1):
                raise ValueError("uniform law needs a < b")
        elif self.name == "gaussian":
            need = ("mean", "sd")
            if not p.get("sd", 1) > 0:
                raise ValueError("gaussian law needs sd > 0")
        elif self.name == "signed-bernoulli":
            need = ("q",)
            if not 0 <= p.get("q", 0.5) <= 1:
                raise ValueError("signed-bernoulli needs 0 <= q <= 1")
        else:
            raise ValueError(f"unknown weight law {self.name!r}")
        missing = [k for k in need if k not in p]
        if missing:
            raise ValueError(f"weight law {self.name!r} missing parameters {missing}")
        object.__setattr__(self, "params", tuple(sorted((k, float(v)) for k, v in p.items())))

    @classmethod
    def point_mass_one(cls):
        return cls("point-mass-one")

    @classmethod
    def uniform(cls, a: float, b: float):
        return cls("uniform", (("a", a), ("b", b)))

    @classmethod
    def gaussian(cls, mean: float, sd: float):
        return cls("gaussian", (("mean", mean), ("sd", sd)))

    @classmethod
    def signed_bernoulli(cls, q: float):
        return cls("signed-bernoulli", (("q", q),))

    def __getitem__(self, key: str) -> float:
        return dict(self.params)[key]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.name == "point-mass-one":
            return np.ones(n)
        if self.name == "uniform":
            return rng.uniform(self["a"], self["b"], n)
        if self.name == "gaussian":
            return rng.normal(self["mean"], self["sd"], n)
        return np.where(rng.random(n) < self["q"], 1.0, -1.0)

    def moment(self, k: int) -> float:
        """Exact ``E v^k``."""
        if k < 0:
            raise ValueError("moment order must be nonnegative")
        if self.name == "point-mass-one":
            return 1.0
        if self.name == "uniform":
            a, b = self["a"], self["b"]
            return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))
        if self.name == "gaussian":
            mu, sd = self["mean"], self["sd"]
            total = 0.0
            for j in range(0, k + 1, 2):
                total += math.comb(k, j) * mu ** (k - j) * sd**j * _double_factorial(j - 1)
            return total
        q = self["q"]
        return q + (-1) ** k * (1 - q)

    def absolute_moment(self, k: int) -> float:
        """Exact ``E |v|^k``."""
        if self.name in ("point-mass-one", "signed-bernoulli"):
            return 1.0
        if self.name == "uniform":
            a, b = self["a"], self["b"]
            F = lambda t: math.copysign(abs(t) ** (k + 1), t) / (k + 1)
            return (F(b) - F(a)) / (b - a)
        mu, sd = self["mean"], self["sd"]
        if mu == 0:
            return sd**k * 2 ** (k / 2) * special.gamma((k + 1) / 2) / math.sqrt(math.pi)
        return float(stats.norm(mu, sd).expect(lambda x: abs(x) ** k))


def _double_factorial(n: int) -> int:
    return 1 if n <= 0 else n * _double_factorial(n - 2)


def moment(law: WeightLaw, k: int, d: int) -> float:
    """``m_k = E v^k`` for the orders ``1 <= k <= d+1`` the model requires."""
    if not 1 <= k <= d + 1:
        raise ValueError(f"moment order {k} outside 1..{d + 1}")
    return law.moment(k)


# ---------------------------------------------------------------------------
# Poisson fields


@dataclass(frozen=True, eq=False)
class PoissonField:
    """Atoms ``(y, v)`` of one realization inside ``[-L_max/2, L_max/2)^d``.

    ``cubes`` lists the unit cubes that were sampled and ``counts`` their full
    (pre-clipping) atom counts.
    """

    d: int
    L_max: float
    master_seed: int | None
    law: WeightLaw | None
    positions: np.ndarray
    weights: np.ndarray
    cubes: np.ndarray = field(default_factory=lambda: np.zeros((0, 1), dtype=int))
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, self.d)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if pos.shape[0] != w.shape[0]:
            raise ValueError("positions and weights differ in length")
        for a in (pos, w):
            a.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, positions, weights, L_max: float, d: int | None = None) -> "PoissonField":
        """Hand-built field (no generating seed), e.g. for controlled experiments."""
        pos = np.asarray(positions, dtype=float)
        d = d if d is not None else (1 if pos.ndim <= 1 else pos.shape[1])
        pos = pos.reshape(-1, d)
        inside = np.all((pos >= -L_max / 2) & (pos < L_max / 2), axis=1)
        if not np.all(inside):
            raise ValueError("atoms outside the master region")
        return cls(d, float(L_max), None, None, pos, np.asarray(weights, dtype=float).reshape(-1))

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def total_mass(self) -> float:
        return float(np.sum(np.abs(self.weights)))

    def atoms(self) -> list[tuple[tuple[float, ...], float]]:
        return [(tuple(p), float(v)) for p, v in zip(self.positions, self.weights)]

    def mask_in_box(self, L: float) -> np.ndarray:
        return np.all((self.positions >= -L / 2) & (self.positions < L / 2), axis=1)


def _region_cubes(d: int, L: float) -> np.ndarray:
    lo = math.floor(-L / 2)
    hi = math.ceil(L / 2)
    ks = np.arange(lo, hi)
    if ks.size == 0:
        return np.zeros((0, d), dtype=int)
    return np.stack(np.meshgrid(*([ks] * d), indexing="ij")).reshape(d, -1).T


def sample_cube(master_seed: int, cube, law: WeightLaw) -> tuple[np.ndarray, np.ndarray]:
    """All atoms of the unit cube ``[k, k+1)^d`` for this seed."""
    cube = np.asarray(cube, dtype=int)
    rng = np.random.Generator(np.random.PCG64(cube_seed(master_seed, cube)))
    n = int(rng.poisson(1.0))
    pos = cube + rng.random((n, cube.size))
    return pos, law.sample(rng, n)


def sample_poisson(L: float, law: WeightLaw, seed: int, d: int = 1) -> PoissonField:
    """Unit-density weighted Poisson field on ``[-L/2, L/2)^d``."""
    if L < 0:
        raise ValueError("region side length must be nonnegative")
    cubes = _region_cubes(d, L) if L > 0 else np.zeros((0, d), dtype=int)
    pos_parts, w_parts, counts = [], [], []
    for k in cubes:
        pos, w = sample_cube(seed, k, law)
        counts.append(len(w))
        keep = np.all((pos >= -L / 2) & (pos < L / 2), axis=1)
        pos_parts.append(pos[keep])
        w_parts.append(w[keep])
    pos = np.concatenate(pos_parts) if pos_parts else np.zeros((0, d))
    w = np.concatenate(w_parts) if w_parts else np.zeros(0)
    return PoissonField(d, float(L), int(seed), law, pos, w, cubes, np.asarray(counts, dtype=int))


def restrict(fld: PoissonField, L: float) -> PoissonField:
    """Atoms of ``fld`` lying in ``[-L/2, L/2)^d``, order preserved."""
    if L > fld.L_max * (1 + 1e-12):
        raise ValueError(f"box L={L} exceeds master region L_max={fld.L_max}")
    keep = fld.mask_in_box(L)
    cubes = fld.cubes
    counts = fld.counts
    if cubes.shape[0]:
        sel = np.all((cubes + 1 > -L / 2) & (cubes < L / 2), axis=1)
        cubes, counts = cubes[sel], counts[sel]
    return PoissonField(fld.d, float(L), fld.master_seed, fld.law, fld.positions[keep], fld.weights[keep], cubes, counts)


# ---------------------------------------------------------------------------
# profiles


class ProfileDecayError(ValueError):
    """The profile violates ``|B(x)| <= C_B <x>^{-d-1-eps}``."""


def _decay_sample_points(d: int, n: int = 10_000) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(20240321))
    radii = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, n - 1)])
    dirs = rng.normal(size=(d, n))
    dirs /= np.linalg.norm(dirs, axis=0)
    return dirs * radii


@dataclass(frozen=True, eq=False)
class ProfileSpec:
    """Single-site profile ``B`` with decay constants ``C_B`` and ``eps``.

    ``func`` maps coordinates of shape ``(d, ...)`` to values of shape ``(...)``.
    Construction checks the decay bound on 10^4 deterministic points.
    """

    func: Callable[[np.ndarray], np.ndarray]
    d: int
    C_B: float
    eps: float
    name: str = "custom"

    def __post_init__(self):
        if self.C_B <= 0 or self.eps <= 0:
            raise ValueError("C_B and eps must be positive")
        pts = _decay_sample_points(self.d)
        vals = np.abs(self.func(pts))
        bound = self.C_B * japanese(pts) ** (-self.d - 1 - self.eps)
        bad = np.nonzero(vals > bound * (1 + 1e-12))[0]
        if bad.size:
            i = bad[0]
            raise ProfileDecayError(
                f"|B(x)|={vals[i]:.6g} exceeds C_B<x>^(-d-1-eps)={bound[i]:.6g} at x={pts[:, i]}"
            )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.func(x)

    @property
    def decay_power(self) -> float:
        return self.d + 1 + self.eps


def builtin_profile(d: int) -> ProfileSpec:
    """``B(x) = <x>^{-(d+2)}``: ``C_B = 1``, ``eps = 1``."""
    return ProfileSpec(lambda x: japanese(x) ** (-(d + 2)), d, 1.0, 1.0, name="japanese-d+2")


@dataclass(frozen=True, eq=False)
class PotentialSample:
    """Real potential values on a grid and where they came from."""

    field: GridField
    seed: int | None
    profile: str
    n_max: int
    image_tail_bound: float

    @property
    def box(self) -> BoxSpec:
        return self.field.box

    @property
    def values(self) -> np.ndarray:
        return self.field.values.real


def image_tail_bound(profile: ProfileSpec, L: float, n_max: int, terms: int = 100_000) -> float:
    """Per-unit-weight bound on the images ``|n|_inf > n_max`` left out.

    For ``z`` in the box, ``|z - nL| >= (|n|_inf - 1/2) L``, and the shell
    ``|n|_inf = j`` has ``(2j+1)^d - (2j-1)^d`` members.
    """
    d, s = profile.d, profile.decay_power
    j = np.arange(n_max + 1, n_max + 1 + terms, dtype=float)
    shell = (2 * j + 1) ** d - (2 * j - 1) ** d
    total = float(np.sum(shell * (1 + ((j - 0.5) * L) ** 2) ** (-s / 2)))
    # remaining shells: shell <= 2d (3j)^{d-1} and (j - 1/2) L >= jL/2
    J = j[-1] + 1
    tail = 2 * d * 3 ** (d - 1) * (L / 2) ** (-s) * J ** (d - 1 - s) * (1 + J / (s - d))
    return profile.C_B * (total + tail)


def evaluate_potential(
    fld: PoissonField, profile: ProfileSpec, box: BoxSpec, n_max: int = 0, chunk: int = 64
) -> PotentialSample:
    """``V_L(x) = sum_{y in box} v * sum_{|n|_inf <= n_max} B(per_L(x - y) - nL)``.

    ``n_max = 0`` is the plain periodic extension of ``B`` restricted to the
    box; larger values add neighbouring images.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    if box.d != fld.d or box.d != profile.d:
        raise ValueError("dimension mismatch between field, profile and box")
    if box.L > fld.L_max * (1 + 1e-12):
        raise ValueError(f"box L={box.L} exceeds master region L_max={fld.L_max}")
    L, d = box.L, box.d
    keep = fld.mask_in_box(L)
    ys, vs = fld.positions[keep], fld.weights[keep]
    x = box.coordinates().reshape(d, -1)
    shifts = np.stack(np.meshgrid(*([np.arange(-n_max, n_max + 1)] * d), indexing="ij")).reshape(d, -1).T * L
    V = np.zeros(x.shape[1])
    for start in range(0, len(vs), chunk):
        y = ys[start : start + chunk]
        v = vs[start : start + chunk]
        z = periodize_point(x[None, :, :] - y[:, :, None], L)  # (atoms, d, points)
        acc = np.zeros((len(v), x.shape[1]))
        for s in shifts:
            acc += profile(np.moveaxis(z - s[None, :, None], 1, 0))
        V += v @ acc
    tail = image_tail_bound(profile, L, n_max) * float(np.sum(np.abs(vs)))
    return PotentialSample(position_field(box, V.reshape(box.shape)), fld.master_seed, profile.name, n_max, tail)


# ---------------------------------------------------------------------------
# cube masses and growth certificates


def _unit_cube_masses(fld: PoissonField, lo: int, n: int) -> np.ndarray:
    """Total |v| per unit cube ``[k, k+1)^d`` for ``k in lo..lo+n-1`` per axis."""
    idx = np.floor(fld.positions).astype(int) - lo
    ok = np.all((idx >= 0) & (idx < n), axis=1)
    masses = np.zeros((n,) * fld.d)
    np.add.at(masses, tuple(idx[ok].T), np.abs(fld.weights[ok]))
    return masses


def _unit_cube_counts(fld: PoissonField, lo: int, n: int) -> np.ndarray:
    idx = np.floor(fld.positions).astype(int) - lo
    ok = np.all((idx >= 0) & (idx < n), axis=1)
    counts = np.zeros((n,) * fld.d)
    np.add.at(counts, tuple(idx[ok].T), 1.0)
    return counts


def _region_centres(L: float) -> np.ndarray:
    """Integers ``k`` with ``[k-1, k+1] inside [-L/2, L/2)``."""
    lo = math.ceil(-L / 2 + 1)
    hi = math.ceil(L / 2 - 1)  # k + 1 < L/2
    return np.arange(lo, hi)


def _double_cube_sums(unit: np.ndarray, d: int) -> np.ndarray:
    # Q_k = [k-1, k+1]^d is the union of the unit cubes starting at k-1 and k per axis
    out = unit
    for axis in range(d):
        a = np.take(out, np.arange(out.shape[axis] - 1), axis=axis)
        b = np.take(out, np.arange(1, out.shape[axis]), axis=axis)
        out = a + b
    return out


def all_cube_masses(fld: PoissonField, L: float | None = None, counts: bool = False):
    """``(centres, masses)`` for every admissible ``Q_k`` inside ``Lambda_L``.

    ``centres`` has shape ``(d, M, ..., M)``; with ``counts=True`` atom counts
    are returned instead of total variation.
    """
    L = fld.L_max if L is None else L
    ks = _region_centres(L)
    if ks.size == 0:
        return np.zeros((fld.d,) + (0,) * fld.d), np.zeros((0,) * fld.d)
    lo = int(ks[0]) - 1
    n = ks.size + 1
    unit = _unit_cube_counts(fld, lo, n) if counts else _unit_cube_masses(fld, lo, n)
    masses = _double_cube_sums(unit, fld.d)
    centres = np.stack(np.meshgrid(*([ks] * fld.d), indexing="ij"))
    return centres, masses


def cube_mass(fld: PoissonField, k) -> float:
    """``|mu|(Q_k)`` with ``Q_k = {y : |y - k|_inf <= 1}``."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if np.any(k - 1 < -fld.L_max / 2) or np.any(k + 1 >= fld.L_max / 2):
        raise ValueError(f"cube Q_{tuple(k)} leaves the master region")
    inside = np.all(np.abs(fld.positions - k) <= 1, axis=1)
    return float(np.sum(np.abs(fld.weights[inside])))


def estimate_Z(fld: PoissonField, L: float | None = None) -> float:
    """Smallest ``Z`` with ``|mu|(Q_k) <= Z <k>`` for every ``Q_k`` inside ``Lambda_L``."""
    centres, masses = all_cube_masses(fld, L)
    if masses.size == 0:
        return 0.0
    return float(np.max(masses / japanese(centres)))


def verify_linear_bound(V: PotentialSample | GridField) -> float:
    """Smallest ``C`` with ``|V(x)| <= C <x>`` on the grid."""
    fld = V.field if isinstance(V, PotentialSample) else V
    x = fld.box.coordinates()
    return float(np.max(np.abs(fld.values) / japanese(x)))


def window_halfwidth(L: float, alpha: float) -> float:
    """Half-width of ``L^{1/2+alpha} Lambda_{1/2}``."""
    return L ** (0.5 + alpha) / 4


def verify_difference_decay(
    fld: PoissonField,
    profile: ProfileSpec,
    L: float,
    L_prime: float,
    alpha: float,
    h: float,
    n_max: int = 0,
) -> float:
    """``sup |V_L - V_L'|`` over grid points of the window ``L^{1/2+alpha} Lambda_{1/2}``."""
    if not 0 <= alpha < 0.5:
        raise ValueError("alpha must lie in [0, 1/2)")
    if L_prime < L:
        raise ValueError("need L <= L'")
    r = window_halfwidth(L, alpha)
    if r > L / 2:
        raise ValueError(f"window half-width {r:.4g} exceeds the box half-width {L / 2}")
    box = BoxSpec.from_spacing(fld.d, L, h)
    box_p = BoxSpec.from_spacing(fld.d, L_prime, h)
    V = evaluate_potential(fld, profile, box, n_max).values
    Vp = evaluate_potential(fld, profile, box_p, n_max).values
    Vp = Vp[box.embedding_slices(box_p)]
    x = box.coordinates()
    inside = np.all((x >= -r) & (x < r), axis=0)
    if not np.any(inside):
        return 0.0
    return float(np.max(np.abs(V - Vp)[inside]))


# ---------------------------------------------------------------------------
# text serialization


def dump_field(fld: PoissonField) -> str:
    law = "none" if fld.law is None else fld.law.name + "".join(f" {k}={v!r}" for k, v in fld.law.params)
    lines = [
        f"# {FIELD_FORMAT_VERSION}",
        f"seed {fld.master_seed if fld.master_seed is not None else 'none'}",
        f"region {fld.d} {fld.L_max!r}",
        f"law {law}",
        f"substreams {SUBSTREAM_ALGORITHM}",
        f"atoms {len(fld)}",
    ]
    for y, v in zip(fld.positions, fld.weights):
        lines.append(" ".join(f"{c:.17g}" for c in (*y, v)))
    return "\n".join(lines) + "\n"


def load_field(text: str) -> PoissonField:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != f"# {FIELD_FORMAT_VERSION}":
        raise ValueError("not a poissonlab field file")
    header = {}
    body_start = None
    for i, ln in enumerate(lines[1:], start=1):
        key, _, rest = ln.partition(" ")
        header[key] = rest
        if key == "atoms":
            body_start = i + 1
            break
    if body_start is None:
        raise ValueError("missing 'atoms' header line")
    d_str, L_str = header["region"].split()
    d, L = int(d_str), float(L_str)
    seed = None if header["seed"] == "none" else int(header["seed"])
    law = None
    if header["law"] != "none":
        name, *kv = header["law"].split()
        law = WeightLaw(name, tuple((k, float(v)) for k, v in (item.split("=") for item in kv)))
    n = int(header["atoms"])
    rows = np.array([[float(t) for t in ln.split()] for ln in lines[body_start : body_start + n]]).reshape(n, d + 1)
    cubes = _region_cubes(d, L) if seed is not None and law is not None else np.zeros((0, d), dtype=int)
    return PoissonField(d, L, seed, law, rows[:, :d], rows[:, d], cubes, np.zeros(0, dtype=int))
