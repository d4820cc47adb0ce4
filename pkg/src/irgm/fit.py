"""Fit per-qubit frequency-shift curves with a jittered non-interacting trap sample.

For a fixed set of defect positions the model curve is
``df(T) = c * [F_y(T) - F_y(0)]``, linear in ``c``, so the best ``c`` for any
candidate geometry is the closed-form 1-D least-squares scalar. Geometry is
searched by random restarts: every defect is moved within a disk of radius
``jitter_radius`` around its reference position in the x-y plane. The best
restart is then optionally polished by a local least-squares solve that keeps
each offset inside its disk.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .exact import exact_spin_average
from .geometry import NM, PhysicalParams, SampleConfig, generate_trap
from .physics import dipole_field

FIT_Z_NM = 36.0
FIT_DELTA_E0 = 1e5  # V/m


def reference_sample(seed: int = 0, params: PhysicalParams | None = None,
                     z_nm: float = FIT_Z_NM) -> SampleConfig:
    """Trap sample with every defect at height ``z_nm``."""
    if params is None:
        params = PhysicalParams(delta_e0=FIT_DELTA_E0)
    base = generate_trap(params, seed)
    pos = base.positions.copy()
    pos[:, 2] = z_nm * NM
    return SampleConfig(params, base.picture, pos, base.orientations, base.random_fields, base.seed)


@dataclass(frozen=True)
class Target:
    label: str
    temps: np.ndarray  # K
    delta_f: np.ndarray  # Hz

    def __post_init__(self):
        t = np.asarray(self.temps, dtype=float).ravel()
        y = np.asarray(self.delta_f, dtype=float).ravel()
        if t.size == 0:
            raise ValueError(f"target {self.label!r} is empty")
        if t.shape != y.shape:
            raise ValueError(f"target {self.label!r}: temperature and shift lengths differ")
        if np.any(t < 0) or not np.all(np.isfinite(y)):
            raise ValueError(f"target {self.label!r}: invalid values")
        object.__setattr__(self, "temps", t)
        object.__setattr__(self, "delta_f", y)

    def to_csv(self) -> str:
        lines = ["T_K,delta_f_Hz"]
        lines += [f"{float(t)!r},{float(y)!r}" for t, y in zip(self.temps, self.delta_f)]
        return "\n".join(lines) + "\n"

    def save_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, path, label: str | None = None) -> "Target":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "T_K" not in rows[0] or "delta_f_Hz" not in rows[0]:
            raise ValueError(f"{path}: expected columns T_K,delta_f_Hz")
        t = [float(r["T_K"]) for r in rows]
        y = [float(r["delta_f_Hz"]) for r in rows]
        return cls(label or path.stem, t, y)


@dataclass(frozen=True)
class FitSpec:
    reference: SampleConfig
    targets: tuple
    jitter_radius: float = 5 * NM
    restarts: int = 500
    seed: int = 0
    polish: bool = False  # local least-squares refinement of the best restart

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.targets:
            raise ValueError("need at least one target curve")
        if self.jitter_radius < 0:
            raise ValueError("jitter_radius must be >= 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass
class QubitFit:
    label: str
    c: float  # Hz per V/m along y
    offsets: np.ndarray  # (N, 2) m
    sample: SampleConfig
    residual_rms: float  # Hz
    history: np.ndarray = field(repr=False, default=None)  # best-so-far RMS per restart

    def model(self, temps) -> np.ndarray:
        return self.c * response_y(self.sample, temps)

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "c_q_y": float(self.c),
            "residual_rms_Hz": float(self.residual_rms),
            "offsets_nm": (self.offsets / NM).tolist(),
            "positions_nm": (self.sample.positions / NM).tolist(),
        }


@dataclass
class FitResult:
    fits: list

    def to_json_dict(self) -> dict:
        return {"fits": [f.to_json_dict() for f in self.fits]}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


def _thermal_weights(sample: SampleConfig, temps) -> np.ndarray:
    """``(M, N)`` matrix of ``<s_j>(T) - <s_j>(0)`` for the non-interacting model."""
    h = sample.params.p0 * np.einsum("ji,ji->j", sample.orientations, sample.random_fields)
    t = np.asarray(temps, dtype=float)
    return exact_spin_average(h[None, :], t[:, None]) - np.sign(h)[None, :]


def _kernels_y(sample: SampleConfig, positions: np.ndarray) -> np.ndarray:
    """y-component of each defect's field at the origin; positions ``(..., N, 3)``."""
    p = sample.params.p0 * sample.orientations
    return dipole_field(np.broadcast_to(p, positions.shape), -positions,
                        sample.params.epsilon_r)[..., 1]


def response_y(sample: SampleConfig, temps) -> np.ndarray:
    """``F_y(T) - F_y(0)`` in V/m."""
    return _thermal_weights(sample, temps) @ _kernels_y(sample, sample.positions)


def jittered(sample: SampleConfig, offsets: np.ndarray) -> SampleConfig:
    pos = sample.positions.copy()
    pos[:, :2] += offsets
    return SampleConfig(sample.params, sample.picture, pos, sample.orientations,
                        sample.random_fields, sample.seed)


def disk_offsets(rng: np.random.Generator, shape, radius: float) -> np.ndarray:
    """Area-uniform points in a disk, ``shape + (2,)``."""
    r = radius * np.sqrt(rng.uniform(size=shape))
    phi = rng.uniform(0.0, 2 * np.pi, size=shape)
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


def best_scale(g: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares ``c`` minimizing ``|c g - y|`` along the last axis (0 if ``g = 0``)."""
    gg = np.sum(g * g, axis=-1)
    gy = np.sum(g * y, axis=-1)
    return np.divide(gy, gg, out=np.zeros_like(gy, dtype=float), where=gg > 0)


def _rms(x) -> np.ndarray:
    return np.sqrt(np.mean(np.square(x), axis=-1))


def _to_disk(w: np.ndarray, radius: float) -> np.ndarray:
    norm = np.sqrt(1.0 + np.sum(w * w, axis=-1, keepdims=True))
    return radius * w / norm


def _from_disk(o: np.ndarray, radius: float) -> np.ndarray:
    o = np.asarray(o, dtype=float)
    r2 = np.sum(o * o, axis=-1, keepdims=True)
    r2 = np.minimum(r2, (0.999 * radius) ** 2)
    return o / np.sqrt(radius**2 - r2)


def _fit_one(spec: FitSpec, target: Target, index: int) -> QubitFit:
    ref = spec.reference
    n = ref.n
    weights = _thermal_weights(ref, target.temps)  # (M, N), independent of positions
    y = target.delta_f
    scale = float(_rms(y))
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), index]))

    def curves(offsets):
        pos = np.broadcast_to(ref.positions, offsets.shape[:-1] + (3,)).copy()
        pos[..., :2] += offsets
        return _kernels_y(ref, pos) @ weights.T  # (..., M)

    # first restart is the unjittered reference
    offsets = disk_offsets(rng, (spec.restarts, n), spec.jitter_radius)
    offsets[0] = 0.0
    best_off, best_res = None, np.inf
    history = np.empty(spec.restarts)
    for lo in range(0, spec.restarts, 256):
        block = offsets[lo:lo + 256]
        g = curves(block)
        c = best_scale(g, y[None, :])
        res = _rms(c[:, None] * g - y[None, :])
        for k, r in enumerate(res):
            if r < best_res:
                best_res, best_off = float(r), block[k].copy()
            history[lo + k] = best_res

    if spec.polish and scale > 0 and spec.jitter_radius > 0 and best_res > 0:
        yn = y / scale
        radius = spec.jitter_radius

        def resid(w):
            g = curves(_to_disk(w.reshape(n, 2), radius))
            return best_scale(g, yn) * g - yn

        sol = least_squares(resid, _from_disk(best_off, radius).ravel(), method="trf",
                            x_scale=1.0, max_nfev=200 * n)
        cand = _to_disk(sol.x.reshape(n, 2), radius)
        g = curves(cand)
        res = float(_rms(best_scale(g, y) * g - y))
        if res < best_res:
            best_res, best_off = res, cand

    g = curves(best_off)
    c = float(best_scale(g, y))
    return QubitFit(target.label, c, best_off, jittered(ref, best_off), best_res, history)


def fit_curves(spec: FitSpec) -> FitResult:
    """Fit every target independently; see the module docstring."""
    return FitResult([_fit_one(spec, t, i) for i, t in enumerate(spec.targets)])


def synthetic_target(reference: SampleConfig, c: float, temps, seed: int,
                     jitter_radius: float = 5 * NM, label: str = "synthetic"):
    """Target generated from a randomly jittered copy of ``reference``.

    Returns ``(target, offsets)`` so a round trip can compare against the truth.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x66]))
    offsets = disk_offsets(rng, (reference.n,), jitter_radius)
    sample = jittered(reference, offsets)
    return Target(label, temps, c * response_y(sample, temps)), offsets


# conversion-factor ratios reported for six qubits
REFERENCE_RATIOS = (0.105, 0.114, 0.072, 0.077, 0.103, 0.059)
