"""Interacting random-field dipole defects and the equilibrium field they exert on a qubit."""

__version__ = "0.1.0"

from .geometry import Picture, PhysicalParams, SampleConfig, derive_seed, generate  # noqa: E402
from .physics import precompute, total_energy, qubit_field, energy_scales  # noqa: E402
from .exact import (TemperatureGrid, FieldCurve, exact_curve, enumerate_thermal,  # noqa: E402
                    ground_state_exhaustive)
from .mc import McSchedule, mc_curve, anneal_ground_state  # noqa: E402

__all__ = [
    "Picture", "PhysicalParams", "SampleConfig", "derive_seed", "generate",
    "precompute", "total_energy", "qubit_field", "energy_scales",
    "TemperatureGrid", "FieldCurve", "exact_curve", "enumerate_thermal",
    "ground_state_exhaustive", "McSchedule", "mc_curve", "anneal_ground_state",
]
