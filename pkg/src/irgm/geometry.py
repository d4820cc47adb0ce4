"""Disorder realizations for the three defect pictures.

Every generator is a pure function of ``(params, seed)``. Positions,
orientations and random fields are drawn from three independent child
streams of one ``numpy.random.SeedSequence``, so redrawing a position that
violates the minimum separation never shifts the field draws.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import constants

DEBYE = 1e-21 / constants.c  # C*m
NM = 1e-9
MIN_SEPARATION = 1.0 * NM

# lateral extent of the trap / random-dipole layers, nm
LAYER_HALF_WIDTH_NM = 150.0
TRAP_Z_NM = 50.0
RANDOM_DIPOLE_Z_NM = (30.0, 50.0)
SHELL_RADII_NM = (60.0, 80.0)


class Picture(str, enum.Enum):
    TRAP = "trap"
    RANDOM_DIPOLE = "random_dipole"
    SPHERICAL_SHELL = "spherical_shell"

    @classmethod
    def parse(cls, value: "str | Picture") -> "Picture":
        if isinstance(value, Picture):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"shell": "spherical_shell", "dipole": "random_dipole"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown picture {value!r}; expected one of "
                             f"{[p.value for p in cls]}") from None


@dataclass(frozen=True)
class PhysicalParams:
    """Global model constants, SI units.

    ``delta_e0`` is the per-component standard deviation of the random field.
    ``field_distribution`` selects ``"gaussian"`` (default) or ``"ball"``
    (uniform in a ball with the same per-component standard deviation).
    ``shell_sampling`` selects ``"volume"`` (default) or ``"coordinate"``
    (uniform in r, theta, phi) for the spherical-shell picture.
    """

    p0: float = 48 * DEBYE
    epsilon_r: float = 11.0
    n_defects: int = 30
    delta_e0: float = 1e4
    interaction_scale: float = 1.0
    field_distribution: str = "gaussian"
    shell_sampling: str = "volume"

    def __post_init__(self):
        if not self.p0 > 0:
            raise ValueError("p0 must be positive")
        if not self.epsilon_r >= 1:
            raise ValueError("epsilon_r must be >= 1")
        if int(self.n_defects) != self.n_defects or self.n_defects < 1:
            raise ValueError("n_defects must be a positive integer")
        if not self.delta_e0 >= 0:
            raise ValueError("delta_e0 must be >= 0")
        if not self.interaction_scale >= 0:
            raise ValueError("interaction_scale must be >= 0")
        if self.field_distribution not in ("gaussian", "ball"):
            raise ValueError(f"unknown field_distribution {self.field_distribution!r}")
        if self.shell_sampling not in ("volume", "coordinate"):
            raise ValueError(f"unknown shell_sampling {self.shell_sampling!r}")

    def replace(self, **changes) -> "PhysicalParams":
        return PhysicalParams(**{**asdict(self), **changes})

    def to_json_dict(self) -> dict:
        return {
            "p0_debye": self.p0 / DEBYE,
            "epsilon_r": self.epsilon_r,
            "n_defects": int(self.n_defects),
            "delta_e0_V_per_m": self.delta_e0,
            "interaction_scale": self.interaction_scale,
            "field_distribution": self.field_distribution,
            "shell_sampling": self.shell_sampling,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PhysicalParams":
        defaults = cls()
        return cls(
            p0=float(d["p0_debye"]) * DEBYE if "p0_debye" in d else defaults.p0,
            epsilon_r=float(d.get("epsilon_r", defaults.epsilon_r)),
            n_defects=int(d.get("n_defects", defaults.n_defects)),
            delta_e0=float(d.get("delta_e0_V_per_m", defaults.delta_e0)),
            interaction_scale=float(d.get("interaction_scale", defaults.interaction_scale)),
            field_distribution=d.get("field_distribution", defaults.field_distribution),
            shell_sampling=d.get("shell_sampling", defaults.shell_sampling),
        )


@dataclass(frozen=True)
class DefectSite:
    position: np.ndarray  # m, qubit at the origin
    orientation: np.ndarray  # unit vector
    random_field: np.ndarray  # V/m


@dataclass
class SampleConfig:
    params: PhysicalParams
    picture: Picture
    positions: np.ndarray  # (N, 3) m
    orientations: np.ndarray  # (N, 3)
    random_fields: np.ndarray  # (N, 3) V/m
    seed: int = 0

    def __post_init__(self):
        self.picture = Picture.parse(self.picture)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.orientations = np.asarray(self.orientations, dtype=float).reshape(-1, 3)
        self.random_fields = np.asarray(self.random_fields, dtype=float).reshape(-1, 3)
        n = self.params.n_defects
        if not (len(self.positions) == len(self.orientations) == len(self.random_fields) == n):
            raise ValueError(f"expected {n} defects, got {len(self.positions)}")
        if np.any(np.abs(np.linalg.norm(self.orientations, axis=1) - 1.0) > 1e-12):
            raise ValueError("orientations must be unit vectors")
        if np.any(np.linalg.norm(self.positions, axis=1) == 0.0):
            raise ValueError("no defect may sit at the qubit")

    @property
    def defects(self) -> list[DefectSite]:
        return [DefectSite(p, o, e) for p, o, e in
                zip(self.positions, self.orientations, self.random_fields)]

    @property
    def n(self) -> int:
        return len(self.positions)

    def with_params(self, **changes) -> "SampleConfig":
        """Same defects under modified scalar parameters (not n_defects)."""
        return SampleConfig(self.params.replace(**changes), self.picture, self.positions.copy(),
                            self.orientations.copy(), self.random_fields.copy(), self.seed)

    def to_json_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "picture": self.picture.value,
            "params": self.params.to_json_dict(),
            "defects": [
                {
                    "position_nm": [float(x) for x in p / NM],
                    "orientation": [float(x) for x in o],
                    "random_field_V_per_m": [float(x) for x in e],
                }
                for p, o, e in zip(self.positions, self.orientations, self.random_fields)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=1)

    @classmethod
    def from_json_dict(cls, d: dict) -> "SampleConfig":
        defects = d["defects"]
        params = PhysicalParams.from_json_dict({**d.get("params", {}), "n_defects": len(defects)})
        pos = np.array([x["position_nm"] for x in defects], dtype=float) * NM
        ori = np.array([x["orientation"] for x in defects], dtype=float)
        # tolerate rounding in hand-written files
        norm = np.linalg.norm(ori, axis=1, keepdims=True)
        if np.any(np.abs(norm - 1.0) > 1e-12):
            ori /= norm
        fld = np.array([x["random_field_V_per_m"] for x in defects], dtype=float)
        return cls(params, Picture.parse(d["picture"]), pos, ori, fld, int(d.get("seed", 0)))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "SampleConfig":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def derive_seed(master_seed: int, index: int) -> int:
    """Stable 64-bit seed for item ``index`` of a batch keyed by ``master_seed``."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _streams(seed: int):
    pos, ori, fld = np.random.SeedSequence(int(seed)).spawn(3)
    return np.random.default_rng(pos), np.random.default_rng(ori), np.random.default_rng(fld)


# -- elementary samplers (vectorized, nm for positions) ----------------------

def sample_layer_positions(rng: np.random.Generator, n: int, z_range_nm) -> np.ndarray:
    xy = rng.uniform(-LAYER_HALF_WIDTH_NM, LAYER_HALF_WIDTH_NM, size=(n, 2))
    lo, hi = z_range_nm
    z = np.full(n, lo) if lo == hi else rng.uniform(lo, hi, size=n)
    return np.column_stack([xy, z])


def sample_unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    """Area-uniform directions on the unit sphere."""
    v = rng.standard_normal((n, 3))
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    while np.any(norm == 0.0):  # probability zero, but keep the invariant
        bad = norm[:, 0] == 0.0
        v[bad] = rng.standard_normal((bad.sum(), 3))
        norm = np.linalg.norm(v, axis=1, keepdims=True)
    return v / norm


def sample_shell_positions(rng: np.random.Generator, n: int, radii_nm=SHELL_RADII_NM,
                           mode: str = "volume") -> np.ndarray:
    r1, r2 = radii_nm
    if mode == "volume":
        u = rng.uniform(size=n)
        r = np.cbrt(r1**3 + u * (r2**3 - r1**3))
        return r[:, None] * sample_unit_vectors(rng, n)
    if mode == "coordinate":
        r = rng.uniform(r1, r2, size=n)
        theta = rng.uniform(0.0, np.pi, size=n)
        phi = rng.uniform(0.0, 2 * np.pi, size=n)
        st = np.sin(theta)
        return r[:, None] * np.column_stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])
    raise ValueError(f"unknown shell sampling mode {mode!r}")


def draw_random_fields(params: PhysicalParams, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` random-field vectors (V/m), per-component std ``params.delta_e0``."""
    if params.delta_e0 == 0:
        return np.zeros((n, 3))
    if params.field_distribution == "gaussian":
        return rng.normal(0.0, params.delta_e0, size=(n, 3))
    # uniform ball of radius R has per-component variance R^2 / 5
    radius = np.sqrt(5.0) * params.delta_e0
    r = radius * np.cbrt(rng.uniform(size=n))
    return r[:, None] * sample_unit_vectors(rng, n)


def draw_random_field(params: PhysicalParams, rng: np.random.Generator) -> np.ndarray:
    return draw_random_fields(params, rng, 1)[0]


def _enforce_separation(pos_nm: np.ndarray, redraw, max_rounds: int = 10_000) -> np.ndarray:
    min_sep = MIN_SEPARATION / NM
    for _ in range(max_rounds):
        d = np.linalg.norm(pos_nm[:, None, :] - pos_nm[None, :, :], axis=-1)
        close = np.triu(d < min_sep, k=1)
        if not close.any():
            return pos_nm
        bad = np.unique(np.nonzero(close)[1])
        pos_nm[bad] = redraw(len(bad))
    raise ValueError("could not place defects with the minimum separation; density too high")


def _build(params: PhysicalParams, picture: Picture, seed: int, sample_pos, orient) -> SampleConfig:
    rng_pos, rng_ori, rng_fld = _streams(seed)
    n = params.n_defects
    pos_nm = _enforce_separation(sample_pos(rng_pos, n), lambda k: sample_pos(rng_pos, k))
    ori = orient(rng_ori, n)
    fields = draw_random_fields(params, rng_fld, n)
    return SampleConfig(params, picture, pos_nm * NM, ori, fields, int(seed))


def generate_trap(params: PhysicalParams, seed: int) -> SampleConfig:
    """Defects in a thin layer at z = 50 nm, all dipoles along +z."""
    return _build(
        params, Picture.TRAP, seed,
        lambda rng, n: sample_layer_positions(rng, n, (TRAP_Z_NM, TRAP_Z_NM)),
        lambda rng, n: np.tile([0.0, 0.0, 1.0], (n, 1)),
    )


def generate_random_dipole(params: PhysicalParams, seed: int) -> SampleConfig:
    """Defects in a 30-50 nm layer with isotropic dipole directions."""
    return _build(
        params, Picture.RANDOM_DIPOLE, seed,
        lambda rng, n: sample_layer_positions(rng, n, RANDOM_DIPOLE_Z_NM),
        sample_unit_vectors,
    )


def generate_spherical_shell(params: PhysicalParams, seed: int) -> SampleConfig:
    """Defects in a 60-80 nm shell around the qubit with isotropic dipoles."""
    return _build(
        params, Picture.SPHERICAL_SHELL, seed,
        lambda rng, n: sample_shell_positions(rng, n, mode=params.shell_sampling),
        sample_unit_vectors,
    )


GENERATORS = {
    Picture.TRAP: generate_trap,
    Picture.RANDOM_DIPOLE: generate_random_dipole,
    Picture.SPHERICAL_SHELL: generate_spherical_shell,
}


def generate(picture: "Picture | str", params: PhysicalParams, seed: int) -> SampleConfig:
    return GENERATORS[Picture.parse(picture)](params, seed)
