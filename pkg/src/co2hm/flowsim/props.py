"""Fluid, relative-permeability and capillary-pressure models.

Constant-property immiscible two-phase CO2-brine stands in for a full
compositional description; phase densities vary linearly with pressure
through the phase compressibilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FluidProps",
    "RelPermParams",
    "CapPressureParams",
    "corey_relperm",
    "capillary_pressure",
]


@dataclass(frozen=True)
class FluidProps:
    """Phase viscosities (Pa s), reference densities (kg/m3), compressibilities (1/Pa)."""

    mu_w: float = 5.0e-4
    mu_g: float = 5.0e-5
    rho_w: float = 1000.0
    rho_g: float = 700.0
    c_w: float = 4.0e-10
    c_g: float = 1.0e-8
    p_ref: float = 20.0e6  # density reference pressure

    def __post_init__(self):
        if min(self.mu_w, self.mu_g, self.rho_w, self.rho_g, self.c_w, self.c_g) <= 0:
            raise ValueError("fluid properties must be positive")


@dataclass(frozen=True)
class RelPermParams:
    """Corey-type relative permeabilities (water exponent 9, CO2 exponent 4)."""

    S_wi: float = 0.22
    S_gr: float = 0.0
    n_w: float = 9.0
    n_g: float = 4.0
    krg_at_Swi: float = 0.95
    krw_endpoint: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.S_wi + self.S_gr < 1.0):
            raise ValueError("S_wi + S_gr must lie in [0, 1)")
        if min(self.n_w, self.n_g) < 1:
            raise ValueError("Corey exponents must be >= 1")
        if not (0 < self.krg_at_Swi <= 1 and 0 < self.krw_endpoint <= 1):
            raise ValueError("endpoints must lie in (0, 1]")


@dataclass(frozen=True)
class CapPressureParams:
    """Brooks-Corey capillary pressure with Leverett J-function scaling.

    P_e_ref is the entry pressure of the reference cell (phi_ref, k_ref in md);
    each cell's entry pressure scales with sqrt((k_ref/phi_ref)/(k/phi)).
    """

    lam: float = 0.55
    P_e_ref: float = 10.0e3
    phi_ref: float = 0.2
    k_ref: float = 20.0
    se_floor: float = 1.0e-3

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("capillary exponent must be positive")
        if self.P_e_ref < 0:
            raise ValueError("entry pressure must be nonnegative")


def corey_relperm(S_w, params: RelPermParams = RelPermParams()):
    """Relative permeabilities (k_rw, k_rg) at water saturation S_w.

    The effective saturation S_e = (S_w - S_wi)/(1 - S_wi - S_gr) is clipped
    to [0, 1], so out-of-range inputs never raise.
    """
    s = np.asarray(S_w, dtype=float)
    denom = 1.0 - params.S_wi - params.S_gr
    se = np.clip((s - params.S_wi) / denom, 0.0, 1.0)
    krw = params.krw_endpoint * se**params.n_w
    krg = params.krg_at_Swi * (1.0 - se) ** params.n_g
    if np.isscalar(S_w):
        return float(krw), float(krg)
    return krw, krg


def capillary_pressure(S_w, phi, k, params: CapPressureParams = CapPressureParams()):
    """Leverett-scaled Brooks-Corey capillary pressure (Pa).

    P_c = P_e_ref sqrt((k_ref/phi_ref)/(k/phi)) S_e^(-lam), with S_e floored
    at params.se_floor. k in the same unit as params.k_ref (md by default).
    """
    s = np.asarray(S_w, dtype=float)
    phi = np.asarray(phi, dtype=float)
    k = np.asarray(k, dtype=float)
    if np.any(phi <= 0) or np.any(k <= 0):
        raise ValueError("phi and k must be positive")
    denom = 1.0 - params.S_wi - params.S_gr
    se = np.clip((s - params.S_wi) / denom, params.se_floor, 1.0)
    pe = params.P_e_ref * np.sqrt((params.k_ref / params.phi_ref) / (k / phi))
    pc = pe * se ** (-params.lam)
    if np.isscalar(S_w) and pc.ndim == 0:
        return float(pc)
    return pc
