"""Two-phase CO2-brine finite-volume simulator with pseudo-coupled geomechanics."""

from .props import (
    FluidProps,
    RelPermParams,
    CapPressureParams,
    corey_relperm,
    capillary_pressure,
)
from .simulator import (
    WellSpec,
    SimConfig,
    SimResult,
    simulate,
    default_injectors,
    storage_coefficients,
    co2_in_place,
)

__all__ = [
    "FluidProps",
    "RelPermParams",
    "CapPressureParams",
    "corey_relperm",
    "capillary_pressure",
    "WellSpec",
    "SimConfig",
    "SimResult",
    "simulate",
    "default_injectors",
    "storage_coefficients",
    "co2_in_place",
]
