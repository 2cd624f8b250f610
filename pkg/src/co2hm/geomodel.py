"""Prior geomodel generation: metaparameters, Gaussian fields, PCA, assembly.

A geomodel realization is indexed by seven scenario-level metaparameters plus
a standard-normal PCA latent vector. The simulation grid is the storage
aquifer (``nx x ny x nz`` cells) padded by a one-cell shell: a lateral ring of
surrounding-region cells (carrying the boundary pore-volume multiplier that
stands in for a far-field region), one overburden layer on top and one
underburden layer at the bottom.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .units import GPA

__all__ = [
    "PRIOR_BOX",
    "PARAM_NAMES",
    "Region",
    "Metaparameters",
    "GridSpec",
    "PcaBasis",
    "sample_prior_metaparameters",
    "sample_gaussian_field",
    "build_pca_basis",
    "generate_pca_realization",
    "assemble_geomodel",
    "Geomodel",
]

# Prior intervals; the anisotropy ratio is parameterized by log10(a_r).
PRIOR_BOX: dict[str, tuple[float, float]] = {
    "mu_logk": (2.0, 5.0),
    "sigma_logk": (1.0, 2.5),
    "log10_ar": (-2.0, 0.0),
    "d": (0.02, 0.04),
    "e": (0.06, 0.08),
    "E_s": (5.0 * GPA, 20.0 * GPA),
    "E_o": (25.0 * GPA, 40.0 * GPA),
}

PARAM_NAMES = tuple(PRIOR_BOX)

NU_STORAGE = 0.165
NU_BURDEN = 0.27
OVERBURDEN_PERM_MD = 0.001
OVERBURDEN_PHI = 0.08
UNDERBURDEN_PERM_MD = 2.3
UNDERBURDEN_PHI = 0.09
PHI_CLAMP = (0.01, 0.45)


class Region(IntEnum):
    STORAGE = 0
    SURROUNDING = 1
    OVERBURDEN = 2
    UNDERBURDEN = 3


@dataclass(frozen=True)
class Metaparameters:
    """The seven uncertain scenario parameters (E moduli in Pa, a_r natural)."""

    mu_logk: float
    sigma_logk: float
    a_r: float
    d: float
    e: float
    E_s: float
    E_o: float

    def to_vector(self) -> np.ndarray:
        """Parameter vector in sampling space (a_r as log10)."""
        return np.array(
            [self.mu_logk, self.sigma_logk, np.log10(self.a_r),
             self.d, self.e, self.E_s, self.E_o]
        )

    @staticmethod
    def from_vector(v: np.ndarray) -> "Metaparameters":
        v = np.asarray(v, dtype=float)
        if v.shape != (7,):
            raise ValueError(f"expected 7 metaparameters, got shape {v.shape}")
        return Metaparameters(
            mu_logk=float(v[0]), sigma_logk=float(v[1]), a_r=float(10.0 ** v[2]),
            d=float(v[3]), e=float(v[4]), E_s=float(v[5]), E_o=float(v[6]),
        )

    def in_prior_box(self) -> bool:
        v = self.to_vector()
        for x, name in zip(v, PARAM_NAMES):
            lo, hi = PRIOR_BOX[name]
            if not (lo <= x <= hi):
                return False
        return True

    def validate(self) -> None:
        v = self.to_vector()
        for x, name in zip(v, PARAM_NAMES):
            lo, hi = PRIOR_BOX[name]
            if not (lo <= x <= hi):
                raise ValueError(
                    f"metaparameter {name}={x:g} outside prior support [{lo:g}, {hi:g}]"
                )


def prior_bounds_vector() -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([PRIOR_BOX[n][0] for n in PARAM_NAMES])
    hi = np.array([PRIOR_BOX[n][1] for n in PARAM_NAMES])
    return lo, hi


def sample_prior_metaparameters(seed) -> Metaparameters:
    """Draw metaparameters uniformly on their prior box (a_r log-uniform)."""
    rng = np.random.default_rng(seed)
    lo, hi = prior_bounds_vector()
    v = lo + (hi - lo) * rng.uniform(size=7)
    return Metaparameters.from_vector(v)


@dataclass(frozen=True)
class GridSpec:
    """Storage-aquifer grid plus implicit one-cell boundary shell.

    nx, ny, nz count the aquifer interior; the simulation grid is
    (nx+2, ny+2, nz+2) with a surrounding ring, an overburden layer (top)
    and an underburden layer (bottom). Grids with burden_layers=False skip
    the two burden layers (used for the coarse proxy, where their near-zero
    permeability makes them hydraulically irrelevant).
    """

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    depth_top: float = 1900.0
    boundary_pv_multiplier: float = 100.0
    burden_layers: bool = True

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 2:
            raise ValueError("cell counts must be >= 2 per axis")
        if min(self.dx, self.dy, self.dz) <= 0:
            raise ValueError("cell dimensions must be positive")
        if self.boundary_pv_multiplier < 1:
            raise ValueError("boundary_pv_multiplier must be >= 1")

    @property
    def z_off(self) -> int:
        """Padded z-index of the first aquifer layer."""
        return 1 if self.burden_layers else 0

    # Padded (simulated) dimensions.
    @property
    def padded_shape(self) -> tuple[int, int, int]:
        return (self.nx + 2, self.ny + 2, self.nz + 2 * self.z_off)

    @property
    def n_cells(self) -> int:
        NX, NY, NZ = self.padded_shape
        return NX * NY * NZ

    @property
    def n_storage(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz

    def cell_index(self, ix, iy, iz):
        """Flat index of padded cell (ix, iy, iz), C-order."""
        NX, NY, NZ = self.padded_shape
        return (ix * NY + iy) * NZ + iz

    def storage_cell_ids(self) -> np.ndarray:
        """Flat padded indices of the aquifer interior, C-order over (ix,iy,iz)."""
        NX, NY, NZ = self.padded_shape
        zo = self.z_off
        ix, iy, iz = np.meshgrid(
            np.arange(1, self.nx + 1),
            np.arange(1, self.ny + 1),
            np.arange(zo, self.nz + zo),
            indexing="ij",
        )
        return ((ix * NY + iy) * NZ + iz).ravel()

    def region_labels(self) -> np.ndarray:
        """Per padded cell region label."""
        NX, NY, NZ = self.padded_shape
        region = np.full((NX, NY, NZ), Region.SURROUNDING, dtype=np.uint8)
        if self.burden_layers:
            region[:, :, 0] = Region.OVERBURDEN
            region[:, :, NZ - 1] = Region.UNDERBURDEN
            region[1:-1, 1:-1, 1:-1] = Region.STORAGE
        else:
            region[1:-1, 1:-1, :] = Region.STORAGE
        return region.ravel()

    def cell_depths(self) -> np.ndarray:
        """Depth (m, positive down) of each padded cell center."""
        NX, NY, NZ = self.padded_shape
        # aquifer layers start at depth_top; the optional burden layers sit
        # directly above/below
        layer_depth = self.depth_top + (np.arange(NZ) - self.z_off + 0.5) * self.dz
        depths = np.broadcast_to(layer_depth, (NX, NY, NZ))
        return np.ascontiguousarray(depths, dtype=float).ravel()

    def pv_multipliers(self) -> np.ndarray:
        """Pore-volume multiplier per padded cell (lateral outer ring only)."""
        NX, NY, NZ = self.padded_shape
        mult = np.ones((NX, NY, NZ))
        mult[0, :, :] = self.boundary_pv_multiplier
        mult[-1, :, :] = self.boundary_pv_multiplier
        mult[:, 0, :] = self.boundary_pv_multiplier
        mult[:, -1, :] = self.boundary_pv_multiplier
        return mult.ravel()

    def surface_xy(self, i: float, j: float) -> tuple[float, float]:
        """Map aquifer-interior fractional cell coordinates to surface meters."""
        return ((i + 0.5) * self.dx, (j + 0.5) * self.dy)


@dataclass(frozen=True)
class PcaBasis:
    """Truncated PCA parameterization of the standard-normal aquifer field."""

    basis: np.ndarray       # (n_s, n_d)
    mean_field: np.ndarray  # (n_s,)

    def __post_init__(self):
        if self.basis.ndim != 2 or self.mean_field.ndim != 1:
            raise ValueError("basis must be 2-D and mean_field 1-D")
        if self.basis.shape[0] != self.mean_field.shape[0]:
            raise ValueError("basis rows must match mean_field length")

    @property
    def n_s(self) -> int:
        return self.basis.shape[0]

    @property
    def n_d(self) -> int:
        return self.basis.shape[1]


def _exp_cov_spectrum(shape, padded, corr_lengths):
    """Circulant-embedding eigenvalues for the exponential covariance."""
    lags = []
    for m in padded:
        k = np.arange(m)
        lags.append(np.minimum(k, m - k).astype(float))
    hx, hy, hz = np.meshgrid(*lags, indexing="ij")
    lx, ly, lz = corr_lengths
    h_eff = np.sqrt((hx / lx) ** 2 + (hy / ly) ** 2 + (hz / lz) ** 2)
    cov = np.exp(-3.0 * h_eff)
    lam = np.fft.fftn(cov).real
    return lam


def sample_gaussian_field(grid: GridSpec, corr_lengths, seed) -> np.ndarray:
    """Draw a stationary standard-normal field on the aquifer interior.

    The covariance is exponential with practical range equal to the given
    correlation lengths, cov(h) = exp(-3 h_eff), where h_eff is the
    anisotropic lag in cell units. Sampling uses circulant embedding
    (exact given a nonnegative embedding spectrum); a dense Cholesky
    fallback covers small grids with indefinite embeddings.

    Returns the field flattened C-order over (ix, iy, iz), length n_storage.
    """
    lx, ly, lz = (float(c) for c in corr_lengths)
    if min(lx, ly, lz) <= 0:
        raise ValueError("correlation lengths must be positive")
    if lx >= grid.nx or ly >= grid.ny or lz >= grid.nz:
        raise ValueError(
            "correlation length must be smaller than the domain extent "
            f"(got ({lx}, {ly}, {lz}) cells on a {grid.nx}x{grid.ny}x{grid.nz} grid)"
        )
    shape = (grid.nx, grid.ny, grid.nz)
    rng = np.random.default_rng(seed)

    for pad in (2, 3, 4):
        padded = tuple(pad * n for n in shape)
        lam = _exp_cov_spectrum(shape, padded, (lx, ly, lz))
        lam_max = lam.max()
        if lam.min() >= -1e-8 * lam_max:
            lam = np.clip(lam, 0.0, None)
            white = rng.standard_normal(padded)
            spec = np.fft.fftn(white) * np.sqrt(lam)
            fld = np.fft.ifftn(spec).real
            return np.ascontiguousarray(fld[: grid.nx, : grid.ny, : grid.nz]).ravel()

    if grid.n_storage < 10_000:
        return _sample_dense_cholesky(grid, (lx, ly, lz), rng)
    raise ValueError(
        "circulant embedding is indefinite for this configuration and the "
        "grid is too large for the dense fallback"
    )


def _sample_dense_cholesky(grid: GridSpec, corr_lengths, rng) -> np.ndarray:
    lx, ly, lz = corr_lengths
    ax = np.arange(grid.nx)[:, None] - np.arange(grid.nx)[None, :]
    ay = np.arange(grid.ny)[:, None] - np.arange(grid.ny)[None, :]
    az = np.arange(grid.nz)[:, None] - np.arange(grid.nz)[None, :]
    ix, iy, iz = np.meshgrid(
        np.arange(grid.nx), np.arange(grid.ny), np.arange(grid.nz), indexing="ij"
    )
    pts = np.column_stack([ix.ravel() / lx, iy.ravel() / ly, iz.ravel() / lz])
    diff = pts[:, None, :] - pts[None, :, :]
    cov = np.exp(-3.0 * np.sqrt((diff**2).sum(axis=2)))
    cov[np.diag_indices_from(cov)] += 1e-10
    chol = np.linalg.cholesky(cov)
    return chol @ rng.standard_normal(grid.n_storage)


def build_pca_basis(realizations: np.ndarray, n_d: int) -> PcaBasis:
    """Build the truncated PCA basis from an (n_s, n_r) realization matrix.

    The basis is scaled so a standard-normal latent vector reproduces the
    sample covariance of the training ensemble restricted to the retained
    subspace (basis @ basis.T equals the truncated sample covariance).
    """
    y = np.asarray(realizations, dtype=float)
    if y.ndim != 2:
        raise ValueError("realizations must be an (n_s, n_r) matrix")
    n_s, n_r = y.shape
    max_rank = min(n_s, n_r - 1)
    if n_d > max_rank:
        raise ValueError(
            f"n_d={n_d} exceeds the maximum admissible rank {max_rank} "
            f"for {n_r} realizations of dimension {n_s}"
        )
    mean_field = y.mean(axis=1)
    centered = y - mean_field[:, None]
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    basis = u[:, :n_d] * (s[:n_d] / np.sqrt(n_r - 1.0))
    return PcaBasis(basis=basis, mean_field=mean_field)


def generate_pca_realization(pca: PcaBasis, xi: np.ndarray) -> np.ndarray:
    """Affine map from the latent vector to the standard-normal field."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (pca.n_d,):
        raise ValueError(f"latent vector must have length {pca.n_d}, got {xi.shape}")
    return pca.basis @ xi + pca.mean_field


@dataclass(frozen=True)
class Geomodel:
    """Per-cell rock properties on the padded simulation grid.

    Permeabilities are in md, moduli in Pa. Arrays are flat, C-order over
    the padded (ix, iy, iz) indexing of the owning grid.
    """

    grid: GridSpec
    meta: Metaparameters
    kx: np.ndarray
    ky: np.ndarray
    kz: np.ndarray
    phi: np.ndarray
    E: np.ndarray
    nu: np.ndarray
    region: np.ndarray

    @property
    def mean_storage_phi(self) -> float:
        return float(self.phi[self.grid.storage_cell_ids()].mean())

    def storage_field(self, values: np.ndarray) -> np.ndarray:
        """Restrict a padded per-cell array to the aquifer interior."""
        return values[self.grid.storage_cell_ids()]


def assemble_geomodel(meta: Metaparameters, y_pca: np.ndarray, grid: GridSpec) -> Geomodel:
    """Map (metaparameters, standard-normal field) to rock properties.

    Storage cells: k = exp(sigma_logk * y + mu_logk) md (kx = ky, kz = a_r kx),
    phi = d ln(k) + e clamped to [0.01, 0.45], E = E_s, nu = 0.165.
    The surrounding ring takes exp(mu_logk) and the mean storage porosity;
    overburden/underburden use fixed Mt. Simon-like constants with E = E_o.
    """
    meta.validate()
    y = np.asarray(y_pca, dtype=float).ravel()
    if y.size != grid.n_storage:
        raise ValueError(
            f"y_pca must cover the {grid.n_storage} storage cells, got {y.size}"
        )
    n = grid.n_cells
    kx = np.empty(n)
    kz = np.empty(n)
    phi = np.empty(n)
    E = np.empty(n)
    nu = np.empty(n)
    region = grid.region_labels()
    sid = grid.storage_cell_ids()

    logk = meta.sigma_logk * y + meta.mu_logk
    k_storage = np.exp(logk)
    phi_storage = np.clip(meta.d * logk + meta.e, *PHI_CLAMP)

    kx[sid] = k_storage
    kz[sid] = meta.a_r * k_storage
    phi[sid] = phi_storage
    E[sid] = meta.E_s
    nu[sid] = NU_STORAGE

    ring = region == Region.SURROUNDING
    kx[ring] = np.exp(meta.mu_logk)
    kz[ring] = meta.a_r * np.exp(meta.mu_logk)
    phi[ring] = phi_storage.mean()
    E[ring] = meta.E_s
    nu[ring] = NU_STORAGE

    over = region == Region.OVERBURDEN
    kx[over] = OVERBURDEN_PERM_MD
    kz[over] = OVERBURDEN_PERM_MD
    phi[over] = OVERBURDEN_PHI
    E[over] = meta.E_o
    nu[over] = NU_BURDEN

    under = region == Region.UNDERBURDEN
    kx[under] = UNDERBURDEN_PERM_MD
    kz[under] = UNDERBURDEN_PERM_MD
    phi[under] = UNDERBURDEN_PHI
    E[under] = meta.E_o
    nu[under] = NU_BURDEN

    return Geomodel(
        grid=grid, meta=meta, kx=kx, ky=kx.copy(), kz=kz,
        phi=phi, E=E, nu=nu, region=region,
    )
