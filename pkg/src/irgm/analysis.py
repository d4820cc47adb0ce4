"""Post-processing of field curves.

Moving-average smoothing, the slope-partition non-monotonicity test,
conversion of fields to qubit frequency shifts, and the S+/S- and net-moment
diagnostics.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import constants

from .exact import FieldCurve
from .geometry import PhysicalParams, SampleConfig
from .physics import KB, EPS0, PrecomputedSample, check_spins

COMPONENTS = ("x", "y", "z")


def smooth_series(values, window: int = 11) -> np.ndarray:
    """Centered moving average along axis 0.

    Near the ends the window shrinks symmetrically to the widest centered
    window that fits, so point ``m`` averages ``2*min(half, m, M-1-m) + 1`` rows.
    """
    x = np.asarray(values, dtype=float)
    window = int(window)
    if window < 1 or window % 2 == 0:
        raise ValueError(f"smoothing window must be a positive odd integer, got {window}")
    m = len(x)
    if window > m:
        raise ValueError(f"smoothing window {window} exceeds series length {m}")
    idx = np.arange(m)
    half = np.minimum(window // 2, np.minimum(idx, m - 1 - idx))
    csum = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(x, axis=0)])
    width = (2 * half + 1).reshape((-1,) + (1,) * (x.ndim - 1))
    return (csum[idx + half + 1] - csum[idx - half]) / width


def smooth_curve(curve: FieldCurve, window: int = 11) -> FieldCurve:
    return replace(curve, field_smoothed=smooth_series(curve.field, window))


@dataclass(frozen=True)
class ClassifierParams:
    ratio_threshold: float = 0.1
    slope_threshold: float = 5.0
    slope_filter_factor: float = 0.5
    magnitude: str = "sum"  # "sum" of retained slopes, or "count" of them

    def __post_init__(self):
        if not 0 < self.ratio_threshold <= 0.5:
            raise ValueError("ratio_threshold must lie in (0, 0.5]")
        if self.slope_threshold < 0:
            raise ValueError("slope_threshold must be >= 0")
        if self.slope_filter_factor < 0:
            raise ValueError("slope_filter_factor must be >= 0")
        if self.magnitude not in ("sum", "count"):
            raise ValueError(f"unknown magnitude mode {self.magnitude!r}")

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "ClassifierParams":
        return cls(**d)


@dataclass(frozen=True)
class ClassifierVerdict:
    non_monotonic: bool
    avg_slope_s: float
    sum_pos: float
    sum_neg: float
    ratio: float
    params: ClassifierParams = ClassifierParams()

    def to_json_dict(self) -> dict:
        return {
            "non_monotonic": bool(self.non_monotonic),
            "s": float(self.avg_slope_s),
            "sum_pos": float(self.sum_pos),
            "sum_neg": float(self.sum_neg),
            "ratio": float(self.ratio),
            "params": self.params.to_json_dict(),
        }


def classify(series, params: ClassifierParams = ClassifierParams()) -> ClassifierVerdict:
    """Slope-partition test for a non-monotonic series.

    Differences larger than ``slope_filter_factor * s`` in magnitude are kept
    and split by sign; the series is non-monotonic when the minority sign
    carries more than ``ratio_threshold`` of the total and ``s`` exceeds
    ``slope_threshold``.
    """
    f = np.asarray(series, dtype=float).ravel()
    if len(f) < 2:
        raise ValueError("classification needs at least two points")
    if not np.all(np.isfinite(f)):
        raise ValueError("series contains non-finite values")
    diff = np.diff(f)
    s = float(np.mean(np.abs(diff)))
    large = diff[np.abs(diff) > params.slope_filter_factor * s]
    pos, neg = large[large > 0], large[large < 0]
    if params.magnitude == "sum":
        sum_pos, sum_neg = float(pos.sum()), float(-neg.sum())
    else:
        sum_pos, sum_neg = float(len(pos)), float(len(neg))
    total = sum_pos + sum_neg
    ratio = min(sum_pos, sum_neg) / total if total > 0 else 0.0
    flag = ratio > params.ratio_threshold and s > params.slope_threshold
    return ClassifierVerdict(bool(flag), s, sum_pos, sum_neg, ratio, params)


def classify_curve(curve: FieldCurve, params: ClassifierParams = ClassifierParams(),
                   unit_scale: float = 1.0, use_smoothed: bool | None = None) -> list[ClassifierVerdict]:
    """Verdicts for the x, y, z field components, in units of ``unit_scale`` V/m.

    ``use_smoothed=None`` picks the smoothed field when the curve has one.
    """
    if unit_scale <= 0:
        raise ValueError("unit_scale must be positive")
    if use_smoothed is None:
        use_smoothed = curve.field_smoothed is not None
    if use_smoothed and curve.field_smoothed is None:
        raise ValueError("curve has no smoothed field")
    data = curve.field_smoothed if use_smoothed else curve.field
    return [classify(data[:, i] / unit_scale, params) for i in range(3)]


@dataclass(frozen=True)
class ConversionParams:
    g_factor: float = 2.0
    bohr_magneton: float = constants.physical_constants["Bohr magneton"][0]
    planck_h: float = constants.h
    charge_q: float = constants.e
    m_t: float = 1.73e-31  # kg
    omega_orb: float = 2e-3 * constants.e / constants.hbar  # rad/s
    grad_by_dx: float = -0.05e-3 / 1e-9  # T/m
    grad_by_dy: float = 0.18e-3 / 1e-9  # T/m

    def __post_init__(self):
        if self.m_t <= 0 or self.omega_orb <= 0:
            raise ValueError("m_t and omega_orb must be positive")

    @property
    def spring_constant(self) -> float:
        return self.m_t * self.omega_orb**2

    @property
    def hz_per_tesla(self) -> float:
        return self.g_factor * self.bohr_magneton / self.planck_h

    def c_q(self) -> np.ndarray:
        """Hz per (V/m); the applied field is along y, so the z entry is zero."""
        pref = self.hz_per_tesla * self.charge_q / self.spring_constant
        return pref * np.array([self.grad_by_dx, self.grad_by_dy, 0.0])

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "ConversionParams":
        return cls(**d)


def frequency_shift(curve: FieldCurve, conv: ConversionParams = ConversionParams(),
                    use_smoothed: bool = False) -> np.ndarray:
    """``c_q . (F(T) - F(0))`` in hertz at every grid temperature."""
    if curve.f0_ref is None:
        raise ValueError("curve has no T = 0 reference field")
    data = curve.field_smoothed if use_smoothed else curve.field
    if data is None:
        raise ValueError("curve has no smoothed field")
    return (data - curve.f0_ref) @ conv.c_q()


@dataclass(frozen=True)
class MagnitudeEstimate:
    frequency: float  # Hz
    field: float  # V/m
    displacement: float  # m


def magnitude_estimate(params: PhysicalParams = PhysicalParams(),
                       conv: ConversionParams = ConversionParams(), d: float = 50e-9,
                       grad_magnitude: float = 0.1e-3 / 1e-9) -> MagnitudeEstimate:
    """Random-walk estimate of the T = 0 field, dot displacement and frequency shift.

    ``d`` is a typical defect distance (m); ``grad_magnitude`` (T/m) is the
    average ``|grad B|`` used for the frequency.
    """
    if d <= 0:
        raise ValueError("d must be positive")
    n = params.n_defects
    field = np.sqrt(2 * n / 3) * params.p0 / (4 * np.pi * EPS0 * params.epsilon_r * d**3)
    displacement = conv.charge_q * field / conv.spring_constant
    freq = conv.hz_per_tesla * grad_magnitude * displacement
    return MagnitudeEstimate(float(freq), float(field), float(displacement))


@dataclass(frozen=True)
class AlignmentSplit:
    s_plus: tuple
    s_minus: tuple
    t_plus: float | None  # K, mean turn-off temperature of S+
    t_minus: float | None


def alignment_decomposition(pre: PrecomputedSample, ground) -> AlignmentSplit:
    """Split defects by whether their T = 0 field contribution aligns with the total.

    A zero dot product counts as anti-aligned.
    """
    s = check_spins(ground).astype(float)
    contrib = s[:, None] * pre.field_kernels
    total = contrib.sum(axis=0)
    aligned = contrib @ total > 0
    t_j = pre.turn_off_temperatures
    plus = tuple(int(i) for i in np.flatnonzero(aligned))
    minus = tuple(int(i) for i in np.flatnonzero(~aligned))
    t_plus = float(t_j[list(plus)].mean()) if plus else None
    t_minus = float(t_j[list(minus)].mean()) if minus else None
    return AlignmentSplit(plus, minus, t_plus, t_minus)


def net_moment(sample: SampleConfig, s_avg) -> np.ndarray:
    """``sum_j <s_j> p0 p_j`` in C*m."""
    s = np.asarray(s_avg, dtype=float)
    if s.shape != (sample.n,):
        raise ValueError("s_avg length does not match the sample")
    return sample.params.p0 * (s @ sample.orientations)


def kelvin(energy_joule: float) -> float:
    return energy_joule / KB
