"""Two-fidelity forward models, observation operator, and error metrics.

High fidelity: pseudo-coupled simulation on the fine grid plus the uplift
kernel. Fast model: flow-only simulation on a coarsened grid (effective
compressibilities) with observables interpolated back to the fine
observation locations. The fast-vs-high-fidelity discrepancy at the
observation points is what the model-error covariance is built from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .geomodel import Geomodel, GridSpec, Metaparameters, Region, assemble_geomodel
from .geomech import build_uplift_kernel, surface_uplift
from .flowsim import SimConfig, SimResult, WellSpec, simulate

__all__ = [
    "ObservationLayout",
    "ForwardFields",
    "derive_coarse_grid",
    "restrict_geomodel",
    "map_wells_to_coarse",
    "run_high_fidelity",
    "run_fast_model",
    "observe",
    "field_difference_metrics",
    "surrogate_relative_errors",
    "SurrogateErrors",
    "ensemble_percentiles",
]


@dataclass(frozen=True)
class ObservationLayout:
    """Measurement layout: saturation wells, one pressure well, surface points.

    The measurement vector is ordered (saturation block, pressure block,
    uplift block), each block time-major: for the saturation block the index
    runs (time, well, layer); pressure (time, layer); uplift (time, point).
    """

    sat_wells: tuple[tuple[int, int], ...]
    sat_layers: tuple[int, ...]
    pressure_well: tuple[int, int]
    pressure_layers: tuple[int, ...]
    surface_points: np.ndarray  # (n_pts, 2) aquifer-local x, y in m
    history_times_yr: tuple[float, ...] = (1.0, 2.0, 4.0, 6.0, 9.0)
    prediction_times_yr: tuple[float, ...] = (12.0, 16.0, 20.0, 25.0, 30.0)

    @property
    def n_surface(self) -> int:
        return np.atleast_2d(self.surface_points).shape[0]

    @property
    def n_per_time(self) -> int:
        return (
            len(self.sat_wells) * len(self.sat_layers)
            + len(self.pressure_layers)
            + self.n_surface
        )

    @property
    def n_m(self) -> int:
        return len(self.history_times_yr) * self.n_per_time

    @property
    def all_times_yr(self) -> tuple[float, ...]:
        return tuple(self.history_times_yr) + tuple(self.prediction_times_yr)

    def validate(self, grid: GridSpec) -> None:
        for (i, j) in (*self.sat_wells, self.pressure_well):
            if not (0 <= i < grid.nx and 0 <= j < grid.ny):
                raise ValueError(f"observation well ({i}, {j}) outside the aquifer grid")
        for l in (*self.sat_layers, *self.pressure_layers):
            if not (0 <= l < grid.nz):
                raise ValueError(f"observation layer {l} outside the aquifer grid")
        if self.n_per_time == 0 or not self.history_times_yr:
            raise ValueError("observation layout is empty")

    def block_slices(self) -> dict[str, slice]:
        """Index ranges of the saturation/pressure/uplift blocks in the obs vector."""
        nt = len(self.history_times_yr)
        n_sat = nt * len(self.sat_wells) * len(self.sat_layers)
        n_p = nt * len(self.pressure_layers)
        n_d = nt * self.n_surface
        return {
            "saturation": slice(0, n_sat),
            "pressure": slice(n_sat, n_sat + n_p),
            "uplift": slice(n_sat + n_p, n_sat + n_p + n_d),
        }


def desk_layout(grid: GridSpec, n_surf_per_axis: int = 5) -> ObservationLayout:
    """Default desk-scale layout mirroring the field-scale design.

    Four saturation wells diagonally adjacent to the injectors, one central
    pressure well, all layers observed, and a regular surface sub-grid.
    """
    qi, qj = grid.nx // 4, grid.ny // 4
    sat_wells = (
        (qi + 1, qj + 1),
        (qi + 1, grid.ny - 2 - qj),
        (grid.nx - 2 - qi, grid.ny - 2 - qj),
        (grid.nx - 2 - qi, qj + 1),
    )
    pwell = (grid.nx // 2, grid.ny // 2)
    layers = tuple(range(grid.nz))
    lx, ly = grid.nx * grid.dx, grid.ny * grid.dy
    xs = np.linspace(0.0, lx, n_surf_per_axis)
    ys = np.linspace(0.0, ly, n_surf_per_axis)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return ObservationLayout(
        sat_wells=sat_wells,
        sat_layers=layers,
        pressure_well=pwell,
        pressure_layers=layers,
        surface_points=pts,
    )


@dataclass
class ForwardFields:
    """Forward-model observables at the fine observation locations.

    sat is (n_t, n_sat_wells, n_layers), p is (n_t, n_p_layers), uplift is
    (n_t, n_surface). times_yr are the report times the series cover.
    """

    times_yr: np.ndarray
    sat: np.ndarray
    p: np.ndarray
    uplift: np.ndarray
    fidelity: str
    sim: SimResult | None = None

    @property
    def ok(self) -> bool:
        return self.sim is None or self.sim.converged


def derive_coarse_grid(fine: GridSpec, factors: tuple[int, int, int] = (2, 2, 2)) -> GridSpec:
    """Coarse proxy grid: integer coarsening, burden layers dropped, ring
    pore volume conserved through the boundary multiplier."""
    fx, fy, fz = factors
    if fine.nx % fx or fine.ny % fy or fine.nz % fz:
        raise ValueError(f"fine grid {fine.nx}x{fine.ny}x{fine.nz} not divisible by {factors}")
    ncx, ncy, ncz = fine.nx // fx, fine.ny // fy, fine.nz // fz
    ring_f = ((fine.nx + 2) * (fine.ny + 2) - fine.nx * fine.ny) * fine.nz
    ring_c = ((ncx + 2) * (ncy + 2) - ncx * ncy) * ncz
    vol_f = fine.dx * fine.dy * fine.dz
    vol_c = vol_f * fx * fy * fz
    mult = fine.boundary_pv_multiplier * (ring_f * vol_f) / (ring_c * vol_c)
    return GridSpec(
        nx=ncx, ny=ncy, nz=ncz,
        dx=fine.dx * fx, dy=fine.dy * fy, dz=fine.dz * fz,
        depth_top=fine.depth_top,
        boundary_pv_multiplier=max(mult, 1.0),
        burden_layers=False,
    )


def restrict_geomodel(model: Geomodel, coarse: GridSpec) -> Geomodel:
    """Restrict a fine geomodel to the coarse grid.

    Interior cells: arithmetic average for porosity, per-axis geometric
    average for the directional permeabilities. The constant-property shell
    is rebuilt from the metaparameters.
    """
    fine = model.grid
    fx, fy, fz = fine.nx // coarse.nx, fine.ny // coarse.ny, fine.nz // coarse.nz

    def blocks(values):
        a = values[fine.storage_cell_ids()].reshape(fine.nx, fine.ny, fine.nz)
        return a.reshape(coarse.nx, fx, coarse.ny, fy, coarse.nz, fz)

    phi_c = blocks(model.phi).mean(axis=(1, 3, 5)).ravel()
    k_c = {}
    for name, arr in (("kx", model.kx), ("ky", model.ky), ("kz", model.kz)):
        k_c[name] = np.exp(np.log(blocks(arr)).mean(axis=(1, 3, 5))).ravel()

    meta = model.meta
    n = coarse.n_cells
    kx = np.empty(n)
    ky = np.empty(n)
    kz = np.empty(n)
    phi = np.empty(n)
    E = np.full(n, meta.E_s)
    nu = np.empty(n)
    region = coarse.region_labels()
    sid = coarse.storage_cell_ids()

    kx[sid] = k_c["kx"]
    ky[sid] = k_c["ky"]
    kz[sid] = k_c["kz"]
    phi[sid] = phi_c

    from .geomodel import NU_STORAGE

    ring = region == Region.SURROUNDING
    kx[ring] = np.exp(meta.mu_logk)
    ky[ring] = np.exp(meta.mu_logk)
    kz[ring] = meta.a_r * np.exp(meta.mu_logk)
    phi[ring] = phi_c.mean()
    nu[:] = NU_STORAGE

    return Geomodel(
        grid=coarse, meta=meta, kx=kx, ky=ky, kz=kz, phi=phi, E=E, nu=nu, region=region
    )


def map_wells_to_coarse(wells: list[WellSpec], factors: tuple[int, int, int] = (2, 2, 2)) -> list[WellSpec]:
    fx, fy, fz = factors
    mapped = []
    for w in wells:
        layers = tuple(sorted({l // fz for l in w.layers}))
        mapped.append(
            WellSpec(i=w.i // fx, j=w.j // fy, layers=layers,
                     mass_rate=w.mass_rate, role=w.role, phase=w.phase)
        )
    return mapped


def _interior_series(result: SimResult, grid: GridSpec) -> np.ndarray:
    """(n_t, nx, ny, nz) views of a padded per-report field on the interior."""
    sid = grid.storage_cell_ids()
    return result.S[:, sid].reshape(-1, grid.nx, grid.ny, grid.nz), result.p[:, sid].reshape(
        -1, grid.nx, grid.ny, grid.nz
    )


def _extract_fine(result: SimResult, grid: GridSpec, layout: ObservationLayout):
    S3, p3 = _interior_series(result, grid)
    iw = np.array([w[0] for w in layout.sat_wells])
    jw = np.array([w[1] for w in layout.sat_wells])
    sat = S3[:, iw[:, None], jw[:, None], np.array(layout.sat_layers)[None, :]]
    pi, pj = layout.pressure_well
    p = p3[:, pi, pj, list(layout.pressure_layers)]
    return sat, p


def _cell_centers(grid: GridSpec):
    cx = (np.arange(grid.nx) + 0.5) * grid.dx
    cy = (np.arange(grid.ny) + 0.5) * grid.dy
    cz = (np.arange(grid.nz) + 0.5) * grid.dz
    return cx, cy, cz


def interpolate_coarse_to_points(values3: np.ndarray, coarse: GridSpec, pts: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of coarse interior cell-centered values.

    values3 is (nx, ny, nz) on the coarse interior; pts are aquifer-local
    (x, y, z) coordinates in meters, clamped to the cell-center hull.
    """
    cx, cy, cz = _cell_centers(coarse)
    interp = RegularGridInterpolator((cx, cy, cz), values3, method="linear")
    q = np.column_stack([
        np.clip(pts[:, 0], cx[0], cx[-1]),
        np.clip(pts[:, 1], cy[0], cy[-1]),
        np.clip(pts[:, 2], cz[0], cz[-1]),
    ])
    return interp(q)


def _extract_coarse(result: SimResult, coarse: GridSpec, fine: GridSpec, layout: ObservationLayout):
    S3, p3 = _interior_series(result, coarse)
    n_t = S3.shape[0]

    def fine_pts(wells, layers):
        pts = []
        for (i, j) in wells:
            for l in layers:
                pts.append(((i + 0.5) * fine.dx, (j + 0.5) * fine.dy, (l + 0.5) * fine.dz))
        return np.asarray(pts)

    sat_pts = fine_pts(layout.sat_wells, layout.sat_layers)
    p_pts = fine_pts([layout.pressure_well], layout.pressure_layers)
    sat = np.empty((n_t, len(layout.sat_wells), len(layout.sat_layers)))
    p = np.empty((n_t, len(layout.pressure_layers)))
    for t in range(n_t):
        sat[t] = interpolate_coarse_to_points(S3[t], coarse, sat_pts).reshape(sat.shape[1:])
        p[t] = interpolate_coarse_to_points(p3[t], coarse, p_pts)
    return sat, p


def _uplift_series(result: SimResult, grid: GridSpec, meta: Metaparameters, points: np.ndarray) -> np.ndarray:
    kernel = build_uplift_kernel(grid, points, E_s=meta.E_s, E_o=meta.E_o)
    dp = result.delta_p()[:, kernel.cell_ids]
    return surface_uplift(kernel, dp)


def run_high_fidelity(
    model: Geomodel,
    wells: list[WellSpec],
    layout: ObservationLayout,
    config: SimConfig | None = None,
) -> ForwardFields:
    """Pseudo-coupled fine-grid simulation plus uplift at the layout points."""
    layout.validate(model.grid)
    if config is None:
        config = SimConfig.accurate_profile(report_times_yr=layout.all_times_yr)
    result = simulate(model, wells, config)
    sat, p = _extract_fine(result, model.grid, layout)
    uplift = _uplift_series(result, model.grid, model.meta, np.atleast_2d(layout.surface_points))
    return ForwardFields(
        times_yr=result.report_times_yr, sat=sat, p=p, uplift=uplift,
        fidelity="hifi", sim=result,
    )


def run_fast_model(
    model: Geomodel,
    wells: list[WellSpec],
    layout: ObservationLayout,
    config: SimConfig | None = None,
    factors: tuple[int, int, int] = (2, 2, 2),
) -> ForwardFields:
    """Coarse flow-only proxy; observables interpolated to fine locations."""
    layout.validate(model.grid)
    if config is None:
        config = SimConfig.fast_profile(report_times_yr=layout.all_times_yr)
    coarse = derive_coarse_grid(model.grid, factors)
    model_c = restrict_geomodel(model, coarse)
    wells_c = map_wells_to_coarse(wells, factors)
    result = simulate(model_c, wells_c, config)
    sat, p = _extract_coarse(result, coarse, model.grid, layout)
    uplift = _uplift_series(result, coarse, model.meta, np.atleast_2d(layout.surface_points))
    return ForwardFields(
        times_yr=result.report_times_yr, sat=sat, p=p, uplift=uplift,
        fidelity="fast", sim=result,
    )


def observe(fields: ForwardFields, layout: ObservationLayout) -> np.ndarray:
    """Flatten observables at the history times into the measurement vector.

    Ordering: saturation block, then pressure, then uplift; each block
    time-major. Units: saturation fraction, Pa, m.
    """
    if layout.n_per_time == 0 or not layout.history_times_yr:
        raise ValueError("observation layout is empty")
    times = list(fields.times_yr)
    try:
        t_idx = [times.index(t) for t in layout.history_times_yr]
    except ValueError as err:
        raise ValueError(f"fields do not cover the history times: {err}") from None
    sat = fields.sat[t_idx].reshape(len(t_idx), -1)
    p = fields.p[t_idx].reshape(len(t_idx), -1)
    d = fields.uplift[t_idx].reshape(len(t_idx), -1)
    return np.concatenate([sat.ravel(), p.ravel(), d.ravel()])


def field_difference_metrics(
    approx: SimResult, reference: SimResult, eps: float = 0.01
) -> tuple[float, float]:
    """Storage-aquifer saturation and pressure differences between two runs.

    eps guards the saturation denominator; the pressure denominator is the
    reference pressure range over the storage cells at each report time.
    """
    if approx.p.shape != reference.p.shape:
        raise ValueError("results have mismatched shapes")
    if tuple(approx.report_times_yr) != tuple(reference.report_times_yr):
        raise ValueError("results have mismatched report times")
    grid = reference.grid
    sid = grid.storage_cell_ids()
    S_a, S_r = approx.S[:, sid], reference.S[:, sid]
    p_a, p_r = approx.p[:, sid], reference.p[:, sid]
    eps_S = float(np.mean(np.abs(S_a - S_r) / (S_r + eps)))
    p_range = p_r.max(axis=1) - p_r.min(axis=1)
    denom = np.where(p_range > 0, p_range, 1.0)[:, None]
    eps_p = float(np.mean(np.abs(p_a - p_r) / denom))
    return eps_S, eps_p


@dataclass(frozen=True)
class SurrogateErrors:
    """Per-case relative errors of the fast model against high fidelity."""

    delta_S: np.ndarray
    delta_p: np.ndarray
    delta_d: np.ndarray
    excluded_uplift_points: np.ndarray

    def medians(self) -> tuple[float, float, float]:
        return (
            float(np.median(self.delta_S)),
            float(np.median(self.delta_p)),
            float(np.median(self.delta_d)),
        )


def surrogate_relative_errors(
    S_hat, S_ref, p_hat, p_ref, d_hat, d_ref, eps: float = 0.01
) -> SurrogateErrors:
    """Relative fast-model errors per test case.

    Inputs are (n_cases, n_t, n_cells) for saturation/pressure on the storage
    cells and (n_cases, n_t, n_points) for uplift. Uplift entries whose
    reference displacement is exactly zero are excluded from the average and
    counted per case.
    """
    S_hat, S_ref = np.asarray(S_hat, float), np.asarray(S_ref, float)
    p_hat, p_ref = np.asarray(p_hat, float), np.asarray(p_ref, float)
    d_hat, d_ref = np.asarray(d_hat, float), np.asarray(d_ref, float)
    if S_hat.shape != S_ref.shape or p_hat.shape != p_ref.shape or d_hat.shape != d_ref.shape:
        raise ValueError("mismatched test-case shapes")

    delta_S = np.mean(np.abs(S_hat - S_ref) / (S_ref + eps), axis=(1, 2))
    p_range = p_ref.max(axis=2) - p_ref.min(axis=2)
    denom = np.where(p_range > 0, p_range, 1.0)[:, :, None]
    delta_p = np.mean(np.abs(p_hat - p_ref) / denom, axis=(1, 2))

    ok = d_ref != 0.0
    rel = np.zeros_like(d_ref)
    np.divide(np.abs(d_hat - d_ref), np.abs(d_ref), out=rel, where=ok)
    counts = ok.sum(axis=(1, 2))
    delta_d = np.where(counts > 0, rel.sum(axis=(1, 2)) / np.maximum(counts, 1), np.nan)
    excluded = ok.size // ok.shape[0] - counts
    return SurrogateErrors(
        delta_S=delta_S, delta_p=delta_p, delta_d=delta_d,
        excluded_uplift_points=excluded,
    )


def ensemble_percentiles(
    series: np.ndarray, quantiles=(0.1, 0.25, 0.5, 0.75, 0.9)
) -> np.ndarray:
    """Per-time empirical quantiles with linear interpolation.

    series is (n_members, n_t); returns (n_quantiles, n_t).
    """
    s = np.asarray(series, dtype=float)
    if s.ndim != 2 or s.shape[0] == 0:
        raise ValueError("ensemble must be a nonempty (n_members, n_t) array")
    return np.quantile(s, list(quantiles), axis=0, method="linear")
