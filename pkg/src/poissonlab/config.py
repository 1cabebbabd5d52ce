"""Experiment configuration: a typed TOML schema with field-level diagnostics."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .lattice import POSITION, BoxSpec, GridField
from .potential import ProfileSpec, WeightLaw, builtin_profile

SCHEMA_VERSION = 1
EXPERIMENTS = ("cauchy", "truncation", "identity", "measures", "decay", "potential-bounds")


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending field."""


PHI_KINDS = {
    "gaussian": ("center", "width"),
    "bump": ("center", "radius"),
    "box-indicator": ("l",),
    "plane-wave": ("p",),
    "point-mass": (),
}


@dataclass(frozen=True)
class PhiSpec:
    """Named test vector.

    ``gaussian``: ``exp(-|x - c|^2 / (2 w^2))``. ``bump``:
    ``exp(1 - 1/(1 - |x - c|^2/r^2))`` inside the ball. ``box-indicator``:
    ``1`` on ``[-l/2, l/2)^d``. ``plane-wave``: the normalized mode of
    wavenumber ``p`` (``p L`` must be an integer). ``point-mass``: the grid
    delta at the origin with unit norm.
    """

    kind: str
    params: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        if self.kind not in PHI_KINDS:
            raise ConfigError(f"phi.kind: unknown kind {self.kind!r}; expected one of {sorted(PHI_KINDS)}")
        p = dict(self.params)
        for key in PHI_KINDS[self.kind]:
            if key not in p:
                raise ConfigError(f"phi.{key}: missing required field for kind {self.kind!r}")

    def __getitem__(self, key):
        return dict(self.params)[key]

    def _center(self, d: int) -> np.ndarray:
        c = np.atleast_1d(np.asarray(self["center"], dtype=float))
        if c.size == 1 and d > 1:
            c = np.full(d, float(c[0]))
        if c.size != d:
            raise ConfigError(f"phi.center: expected {d} components")
        return c

    def build(self, box: BoxSpec) -> GridField:
        x = box.coordinates()
        d = box.d
        shape = (d,) + (1,) * d
        if self.kind == "gaussian":
            c = self._center(d).reshape(shape)
            w = float(self["width"])
            vals = np.exp(-np.sum((x - c) ** 2, axis=0) / (2 * w * w))
        elif self.kind == "bump":
            c = self._center(d).reshape(shape)
            r = float(self["radius"])
            u2 = np.sum((x - c) ** 2, axis=0) / (r * r)
            vals = np.zeros(box.shape)
            inside = u2 < 1
            vals[inside] = np.exp(1.0 - 1.0 / (1.0 - u2[inside]))
        elif self.kind == "box-indicator":
            half = float(self["l"]) / 2
            vals = np.all((x >= -half) & (x < half), axis=0).astype(float)
        elif self.kind == "plane-wave":
            p = np.atleast_1d(np.asarray(self["p"], dtype=float))
            if p.size != d:
                raise ConfigError(f"phi.p: expected {d} components")
            m = p * box.L
            if np.any(np.abs(m - np.round(m)) > 1e-9) or np.any(np.round(m) < -box.N // 2) or np.any(np.round(m) >= box.N // 2):
                raise ConfigError(f"phi.p: {p.tolist()} is not on the dual grid of L={box.L}")
            vals = np.exp(2j * np.pi * np.tensordot(p, x, axes=(0, 0))) / math.sqrt(box.volume)
        else:
            vals = np.zeros(box.shape)
            vals[(box.N // 2,) * d] = box.h ** (-d / 2)
        return GridField(box, vals, POSITION)

    def support_radius(self) -> float | None:
        """Euclidean radius of a ball around the origin holding the support, if compact."""
        if self.kind == "bump":
            return float(np.linalg.norm(np.atleast_1d(self["center"]))) + float(self["radius"])
        if self.kind == "box-indicator":
            return None  # cube, handled by callers through l
        if self.kind == "point-mass":
            return 0.0
        return None

    def compact_within(self, L: float, d: int) -> bool:
        if self.kind == "bump":
            c = self._center(d)
            return bool(np.all(np.abs(c) + float(self["radius"]) <= L / 2))
        if self.kind == "box-indicator":
            return float(self["l"]) <= L
        return self.kind == "point-mass"

    def norm_sq_full(self, d: int) -> float | None:
        """``|phi|^2`` over all of space, where known in closed form."""
        if self.kind == "gaussian":
            w = float(self["width"])
            return (math.pi * w * w) ** (d / 2)
        if self.kind in ("plane-wave", "point-mass"):
            return 1.0
        if self.kind == "box-indicator":
            return float(self["l"]) ** d
        return None


@dataclass(frozen=True)
class ExperimentConfig:
    d: int
    h: float
    L_ladder: tuple[float, ...]
    lam: float
    z_list: tuple[complex, ...]
    phi: PhiSpec
    law: WeightLaw
    master_seed: int
    realizations: int
    profile: str = "builtin"
    alpha: float = 0.25
    tol: float = 1e-10
    dense_threshold: int = 4096
    n_max: int = 0
    l_ladder: tuple[float, ...] = ()
    energy_window: tuple[float, float] | None = None
    identity_vectors: int = 10
    out: str = "out"
    experiment: str | None = None

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ConfigError(f"d: must be 1, 2 or 3, got {self.d}")
        if not self.h > 0:
            raise ConfigError(f"h: must be positive, got {self.h}")
        if len(self.L_ladder) == 0:
            raise ConfigError("L_ladder: empty")
        if any(b <= a for a, b in zip(self.L_ladder, self.L_ladder[1:])):
            raise ConfigError(f"L_ladder: must be strictly increasing, got {list(self.L_ladder)}")
        for L in self.L_ladder:
            try:
                BoxSpec.from_spacing(self.d, L, self.h)
            except ValueError as err:
                raise ConfigError(f"L_ladder: L={L} incompatible with h={self.h} ({err})") from None
        if self.lam < 0:
            raise ConfigError(f"lambda: must be nonnegative, got {self.lam}")
        if not self.z_list or any(z.imag == 0 for z in self.z_list):
            raise ConfigError("z: need at least one value, all off the real axis")
        if self.realizations < 1:
            raise ConfigError("realizations: must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed: must be an unsigned 64-bit integer")
        if self.profile != "builtin":
            raise ConfigError(f"profile: only 'builtin' is available from a config file, got {self.profile!r}")
        if any(l <= 0 for l in self.l_ladder):
            raise ConfigError("l_ladder: entries must be positive")
        if self.experiment is not None and self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: unknown {self.experiment!r}; expected one of {list(EXPERIMENTS)}")

    @property
    def L_max(self) -> float:
        return self.L_ladder[-1]

    def box(self, L: float) -> BoxSpec:
        return BoxSpec.from_spacing(self.d, L, self.h)

    def profile_spec(self) -> ProfileSpec:
        return builtin_profile(self.d)

    def seeds(self) -> list[int]:
        return [(self.master_seed + r) % 2**64 for r in range(self.realizations)]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, master_seed=int(seed))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "schema": SCHEMA_VERSION,
            "d": self.d,
            "h": self.h,
            "L_ladder": list(self.L_ladder),
            "lambda": self.lam,
            "z": [repr(z) for z in self.z_list],
            "phi": {"kind": self.phi.kind, **{k: v for k, v in self.phi.params}},
            "law": {"name": self.law.name, **{k: v for k, v in self.law.params}},
            "master_seed": self.master_seed,
            "realizations": self.realizations,
            "profile": self.profile,
            "alpha": self.alpha,
            "tol": self.tol,
            "dense_threshold": self.dense_threshold,
            "n_max": self.n_max,
            "l_ladder": list(self.l_ladder),
            "identity_vectors": self.identity_vectors,
            "out": self.out,
        }
        if self.energy_window is not None:
            out["energy_window"] = list(self.energy_window)
        if self.experiment is not None:
            out["experiment"] = self.experiment
        return out


_REQUIRED = ("d", "h", "L_ladder", "lambda", "z", "phi", "law", "master_seed", "realizations")


def _num(raw: dict, key: str, kind=float):
    v = raw[key]
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
        return v
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {v!r}")
    return float(v)


def _num_list(raw: dict, key: str) -> tuple[float, ...]:
    v = raw[key]
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ConfigError(f"{key}: expected a list of numbers, got {v!r}")
    return tuple(float(x) for x in v)


def _complex(key: str, v) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, list) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", ""))
        except ValueError:
            pass
    raise ConfigError(f"{key}: cannot read {v!r} as a complex number (use \"1+1j\" or [re, im])")


def config_from_dict(raw: dict[str, Any]) -> ExperimentConfig:
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required field {missing[0]!r}" + (f" (also {missing[1:]})" if len(missing) > 1 else ""))
    schema = raw.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"schema: version {schema!r} not supported (expected {SCHEMA_VERSION})")
    known = set(_REQUIRED) | {
        "schema", "profile", "alpha", "tol", "dense_threshold", "n_max", "l_ladder",
        "energy_window", "identity_vectors", "out", "experiment",
    }
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown field {unknown[0]!r}")

    zs = raw["z"]
    if not isinstance(zs, list):
        zs = [zs]
    z_list = tuple(_complex(f"z[{i}]", v) for i, v in enumerate(zs))

    phi_raw = raw["phi"]
    if not isinstance(phi_raw, dict) or "kind" not in phi_raw:
        raise ConfigError("phi.kind: missing required field")
    phi = PhiSpec(phi_raw["kind"], tuple(sorted((k, v) for k, v in phi_raw.items() if k != "kind")))

    law_raw = raw["law"]
    if isinstance(law_raw, str):
        law_raw = {"name": law_raw}
    if not isinstance(law_raw, dict) or "name" not in law_raw:
        raise ConfigError("law.name: missing required field")
    try:
        law = WeightLaw(law_raw["name"], tuple((k, v) for k, v in law_raw.items() if k != "name"))
    except ValueError as err:
        raise ConfigError(f"law: {err}") from None

    opt: dict[str, Any] = {}
    if "profile" in raw:
        opt["profile"] = str(raw["profile"])
    for key in ("alpha", "tol"):
        if key in raw:
            opt[key] = _num(raw, key)
    for key in ("dense_threshold", "n_max", "identity_vectors"):
        if key in raw:
            opt[key] = _num(raw, key, int)
    if "l_ladder" in raw:
        opt["l_ladder"] = _num_list(raw, "l_ladder")
    if "energy_window" in raw:
        w = _num_list(raw, "energy_window")
        if len(w) != 2 or not w[0] < w[1]:
            raise ConfigError("energy_window: expected [lo, hi] with lo < hi")
        opt["energy_window"] = w
    if "out" in raw:
        opt["out"] = str(raw["out"])
    if "experiment" in raw:
        opt["experiment"] = str(raw["experiment"])

    return ExperimentConfig(
        d=_num(raw, "d", int),
        h=_num(raw, "h"),
        L_ladder=_num_list(raw, "L_ladder"),
        lam=_num(raw, "lambda"),
        z_list=z_list,
        phi=phi,
        law=law,
        master_seed=_num(raw, "master_seed", int),
        realizations=_num(raw, "realizations", int),
        **opt,
    )


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"{path}: {err}") from None
    return config_from_dict(raw)


def loads_config(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(str(err)) from None
    return config_from_dict(raw)
