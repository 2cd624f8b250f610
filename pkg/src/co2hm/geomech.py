"""Elastic conversions, effective compressibility, and surface-uplift kernel.

The uplift model is one-way: aquifer pressure change drives vertical surface
displacement through a precomputed half-space nucleus-of-strain kernel. The
kernel mixes aquifer compaction properties (uniaxial compaction coefficient)
with the overburden's half-space response so uplift stays sensitive to both
Young's moduli.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geomodel import Geomodel, GridSpec, Region

__all__ = [
    "GRAIN_BULK_MODULUS",
    "bulk_modulus",
    "shear_modulus",
    "biot_coefficient",
    "effective_compressibility",
    "uniaxial_modulus",
    "compaction_coefficient",
    "UpliftKernel",
    "build_uplift_kernel",
    "surface_uplift",
    "region_compressibilities",
]

GRAIN_BULK_MODULUS = 37.0e9  # Pa, quartz


def bulk_modulus(E: float, nu: float) -> float:
    """K = E / (3 (1 - 2 nu)); invalid at the incompressible limit."""
    if np.any(np.asarray(nu) >= 0.5):
        raise ValueError("Poisson's ratio must be < 0.5 (incompressible limit)")
    return E / (3.0 * (1.0 - 2.0 * nu))


def shear_modulus(E: float, nu: float) -> float:
    return E / (2.0 * (1.0 + nu))


def biot_coefficient(K: float, K_g: float = GRAIN_BULK_MODULUS) -> float:
    """b = 1 - K/K_g, requiring 0 <= K <= K_g."""
    if np.any(np.asarray(K) < 0):
        raise ValueError("rock bulk modulus must be nonnegative")
    if np.any(np.asarray(K) > np.asarray(K_g)):
        raise ValueError("rock bulk modulus exceeds grain modulus (negative Biot coefficient)")
    return 1.0 - K / K_g


def effective_compressibility(phi_bar: float, E: float, nu: float, b: float) -> float:
    """Effective rock compressibility for flow-only runs (1/Pa).

    c = (1-2nu)/(phi_bar E) * (b^2 (1+nu)/(1-nu) + 3 (b - phi_bar)(1 - b)).
    Applied as a relative pore-volume compressibility: dphi/dp = c * phi.
    """
    if not (0.0 < phi_bar < 1.0):
        raise ValueError("phi_bar must lie in (0, 1)")
    if E <= 0:
        raise ValueError("Young's modulus must be positive")
    return ((1.0 - 2.0 * nu) / (phi_bar * E)) * (
        b * b * (1.0 + nu) / (1.0 - nu) + 3.0 * (b - phi_bar) * (1.0 - b)
    )


def uniaxial_modulus(E: float, nu: float) -> float:
    """Constrained (uniaxial-strain) modulus K + 4G/3."""
    return bulk_modulus(E, nu) + 4.0 * shear_modulus(E, nu) / 3.0


def compaction_coefficient(E: float, nu: float, K_g: float = GRAIN_BULK_MODULUS) -> float:
    """Uniaxial compaction coefficient c_m = b / (K + 4G/3) (1/Pa)."""
    b = biot_coefficient(bulk_modulus(E, nu), K_g)
    return b / uniaxial_modulus(E, nu)


def region_compressibilities(model: Geomodel, K_g: float = GRAIN_BULK_MODULUS) -> dict[Region, float]:
    """Effective rock compressibility per model region.

    Storage and surrounding share one value built from the mean storage
    porosity; overburden and underburden use their fixed porosities.
    """
    phi_bar_s = model.mean_storage_phi
    meta = model.meta

    def c_of(phi_bar, E, nu):
        b = biot_coefficient(bulk_modulus(E, nu), K_g)
        return effective_compressibility(phi_bar, E, nu, b)

    from .geomodel import NU_BURDEN, NU_STORAGE, OVERBURDEN_PHI, UNDERBURDEN_PHI

    c_s = c_of(phi_bar_s, meta.E_s, NU_STORAGE)
    return {
        Region.STORAGE: c_s,
        Region.SURROUNDING: c_s,
        Region.OVERBURDEN: c_of(OVERBURDEN_PHI, meta.E_o, NU_BURDEN),
        Region.UNDERBURDEN: c_of(UNDERBURDEN_PHI, meta.E_o, NU_BURDEN),
    }


@dataclass(frozen=True)
class UpliftKernel:
    """Linear map from aquifer pressure change (Pa) to surface uplift (m).

    weights[i, j] is the uplift at surface point i per unit pressure increase
    in aquifer cell j. Geometry metadata records the surface points and the
    aquifer cell ids the columns refer to.
    """

    weights: np.ndarray        # (n_points, n_aquifer_cells)
    surface_points: np.ndarray  # (n_points, 2) x,y in m
    cell_ids: np.ndarray        # flat padded ids of the aquifer cells

    @property
    def n_points(self) -> int:
        return self.weights.shape[0]


def nucleus_uplift_weight(c_m, nu_half, volume, depth, r):
    """Surface uplift per unit pressure of a buried nucleus of strain.

    Half-space solution for the vertical surface displacement above a small
    pressurized volume at depth D and lateral offset r:
    w = c_m (1 - nu) / pi * V D / (D^2 + r^2)^(3/2).
    """
    return c_m * (1.0 - nu_half) / np.pi * volume * depth / (depth**2 + r**2) ** 1.5


def build_uplift_kernel(
    grid: GridSpec,
    surface_points: np.ndarray,
    E_s: float,
    E_o: float,
    nu_s: float = 0.165,
    nu_o: float = 0.27,
    K_g: float = GRAIN_BULK_MODULUS,
) -> UpliftKernel:
    """Assemble the nucleus-of-strain kernel over the storage-aquifer cells.

    The compaction coefficient comes from the aquifer elastic properties and
    the half-space Poisson's ratio from the overburden, preserving uplift
    sensitivity to both moduli.
    """
    if grid.depth_top <= 0:
        raise ValueError("aquifer depth must be positive")
    pts = np.atleast_2d(np.asarray(surface_points, dtype=float))
    if pts.shape[1] != 2:
        raise ValueError("surface_points must be (n, 2) x,y coordinates")

    c_m = compaction_coefficient(E_s, nu_s, K_g)
    cell_ids = grid.storage_cell_ids()
    depths = grid.cell_depths()[cell_ids]

    nxr = np.arange(1, grid.nx + 1)
    nyr = np.arange(1, grid.ny + 1)
    nzr = np.arange(1, grid.nz + 1)
    ix, iy, _ = np.meshgrid(nxr, nyr, nzr, indexing="ij")
    # cell-center coordinates with the aquifer interior starting at x=y=0
    cx = ((ix - 1) + 0.5).ravel() * grid.dx
    cy = ((iy - 1) + 0.5).ravel() * grid.dy

    dxp = pts[:, 0][:, None] - cx[None, :]
    dyp = pts[:, 1][:, None] - cy[None, :]
    r2 = dxp**2 + dyp**2
    vol = grid.cell_volume
    weights = (
        c_m * (1.0 - nu_o) / np.pi * vol * depths[None, :]
        / (depths[None, :] ** 2 + r2) ** 1.5
    )
    return UpliftKernel(weights=weights, surface_points=pts, cell_ids=cell_ids)


def surface_uplift(kernel: UpliftKernel, delta_p: np.ndarray) -> np.ndarray:
    """Apply the kernel to pressure changes on the aquifer cells.

    delta_p may be (n_cells,) or (n_times, n_cells); returns uplift in m with
    matching leading shape, positive up.
    """
    dp = np.asarray(delta_p, dtype=float)
    if dp.shape[-1] != kernel.weights.shape[1]:
        raise ValueError(
            f"delta_p last dimension {dp.shape[-1]} does not match the kernel's "
            f"{kernel.weights.shape[1]} aquifer cells"
        )
    return dp @ kernel.weights.T
