"""Fully implicit two-phase simulation driver.

Backward-Euler, two-point flux finite volumes with phase-potential upwinding,
gravity and capillary pressure; no-flow outer boundaries. Newton systems are
solved with block-ILU(0)-preconditioned BiCGStab (scipy sparse LU as a
fallback); time steps halve on failure.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..geomodel import Geomodel, GridSpec, Region
from ..geomech import (
    GRAIN_BULK_MODULUS,
    biot_coefficient,
    bulk_modulus,
    region_compressibilities,
    uniaxial_modulus,
)
from ..units import GRAVITY, MD_TO_M2, SECONDS_PER_DAY, SECONDS_PER_YEAR
from . import kernels
from .props import CapPressureParams, FluidProps, RelPermParams
from .topology import grid_topology

__all__ = [
    "WellSpec",
    "SimConfig",
    "SimResult",
    "simulate",
    "default_injectors",
    "storage_coefficients",
    "co2_in_place",
]


@dataclass(frozen=True)
class WellSpec:
    """Vertical well at aquifer-interior cell (i, j), perforating given layers.

    mass_rate is the constant total rate in kg/s, split across perforated
    layers by transmissibility times total mobility at the start of each step.
    """

    i: int
    j: int
    layers: tuple[int, ...]
    mass_rate: float = 0.0
    role: str = "injector"
    phase: str = "co2"

    def __post_init__(self):
        if self.mass_rate < 0:
            raise ValueError("well rate must be nonnegative")
        if self.role not in ("injector", "monitor"):
            raise ValueError(f"unknown well role {self.role!r}")
        if self.phase not in ("co2", "water"):
            raise ValueError(f"unknown injection phase {self.phase!r}")


def default_injectors(grid: GridSpec, total_rate_mt_per_yr: float = 4.0) -> list[WellSpec]:
    """Four symmetric full-penetration injectors splitting the total rate."""
    qi = grid.nx // 4
    qj = grid.ny // 4
    positions = [
        (qi, qj),
        (qi, grid.ny - 1 - qj),
        (grid.nx - 1 - qi, grid.ny - 1 - qj),
        (grid.nx - 1 - qi, qj),
    ]
    rate = total_rate_mt_per_yr / 4.0 * 1.0e9 / SECONDS_PER_YEAR
    layers = tuple(range(grid.nz))
    return [WellSpec(i=i, j=j, layers=layers, mass_rate=rate) for i, j in positions]


@dataclass(frozen=True)
class SimConfig:
    """Run controls; times in years/days, pressures in Pa."""

    report_times_yr: tuple[float, ...] = (1, 2, 4, 6, 9, 12, 16, 20, 25, 30)
    mode: str = "flow_only"
    dt_init_days: float = 30.0
    dt_growth: float = 2.0
    dt_max_yr: float = 1.0
    dt_min_days: float = 1.0e-3
    max_cuts: int = 10
    newton_max_iter: int = 12
    newton_dp_tol: float = 100.0
    mass_rtol: float = 1.0e-9
    mass_atol: float = 1.0e-9
    ds_max: float = 0.4
    dp_max: float = 5.0e6
    linear_rtol: float = 1.0e-2
    linear_maxiter: int = 300
    anchor_pressure: float = 20.0e6

    @staticmethod
    def fast_profile(mode: str = "flow_only", report_times_yr=(1, 2, 4, 6, 9, 12, 16, 20, 25, 30)) -> "SimConfig":
        """Aggressive stepping for the coarse proxy (error absorbed by C_surr)."""
        return SimConfig(
            report_times_yr=tuple(report_times_yr), mode=mode,
            dt_init_days=90.0, dt_growth=3.0, dt_max_yr=3.0,
        )

    @staticmethod
    def accurate_profile(mode: str = "pseudo_coupled", report_times_yr=(1, 2, 4, 6, 9, 12, 16, 20, 25, 30)) -> "SimConfig":
        """Reference stepping for high-fidelity runs."""
        return SimConfig(
            report_times_yr=tuple(report_times_yr), mode=mode,
            dt_init_days=30.0, dt_growth=2.0, dt_max_yr=0.5,
        )

    def __post_init__(self):
        rt = tuple(float(t) for t in self.report_times_yr)
        if any(b <= a for a, b in zip(rt, rt[1:])) or rt[0] <= 0:
            raise ValueError("report times must be positive and strictly increasing")
        if self.mode not in ("flow_only", "pseudo_coupled"):
            raise ValueError(f"unknown simulation mode {self.mode!r}")


@dataclass
class SimResult:
    """Fields at the report steps plus bookkeeping.

    p and S are (n_report, n_cells) on the padded grid; p_init is the
    hydrostatic initial state. injected_mass and co2_mass are cumulative
    injected and in-place CO2 (kg) at each report step.
    """

    grid: GridSpec
    mode: str
    report_times_yr: np.ndarray
    p: np.ndarray
    S: np.ndarray
    p_init: np.ndarray
    injected_mass: np.ndarray
    co2_mass: np.ndarray
    converged: bool
    newton_iterations: int
    linear_iterations: int
    n_steps: int
    wall_time: float
    failed_at_yr: float | None = None

    def delta_p(self) -> np.ndarray:
        """Pressure change from the initial state, (n_report, n_cells)."""
        return self.p - self.p_init[None, :]


def storage_coefficients(model: Geomodel, mode: str, k_g: float = GRAIN_BULK_MODULUS) -> np.ndarray:
    """Per-cell d(phi)/dp for the requested porosity-update mode.

    flow_only applies the effective rock compressibility per region as a
    relative pore-volume compressibility (dphi/dp = c phi0). pseudo_coupled
    uses the poroelastic update dphi = b deps + (b - phi0)/K_g dp with the
    uniaxial-strain closure deps = b dp / (K + 4G/3).
    """
    if mode == "flow_only":
        c_by_region = region_compressibilities(model, k_g)
        c_cell = np.empty(model.grid.n_cells)
        for reg, c in c_by_region.items():
            c_cell[model.region == reg] = c
        return c_cell * model.phi
    if mode == "pseudo_coupled":
        K = bulk_modulus(model.E, model.nu)
        b = biot_coefficient(K, k_g)
        m_u = uniaxial_modulus(model.E, model.nu)
        return b * b / m_u + (b - model.phi) / k_g
    raise ValueError(f"unknown simulation mode {mode!r}")


def _transmissibilities(model: Geomodel, topo) -> np.ndarray:
    grid = model.grid
    areas = (grid.dy * grid.dz, grid.dx * grid.dz, grid.dx * grid.dy)
    dists = (grid.dx, grid.dy, grid.dz)
    kk = (model.kx * MD_TO_M2, model.ky * MD_TO_M2, model.kz * MD_TO_M2)
    T = np.zeros(topo.n_faces)
    for ax in range(3):
        sel = topo.face_axis == ax
        L = topo.face_L[sel]
        R = topo.face_R[sel]
        half = 2.0 * areas[ax] / dists[ax]
        tl = kk[ax][L] * half
        tr = kk[ax][R] * half
        s = tl + tr
        T[sel] = np.where(s > 0.0, np.divide(tl * tr, s, out=np.zeros_like(s), where=s > 0), 0.0)
    return T


def _face_gdz(grid: GridSpec, topo) -> np.ndarray:
    depths = grid.cell_depths()
    return GRAVITY * (depths[topo.face_L] - depths[topo.face_R])


def hydrostatic_pressure(grid: GridSpec, fluids: FluidProps, anchor: float) -> np.ndarray:
    """Discrete hydrostatic equilibrium anchored at the aquifer mid-layer.

    Built so vertical face potentials vanish exactly under the simulator's
    face-density averaging: p[k+1] - p[k] = g dz (rho(p[k]) + rho(p[k+1]))/2.
    """
    NZ = grid.padded_shape[2]
    anchor_layer = grid.z_off + (grid.nz - 1) // 2
    p_layer = np.empty(NZ)
    p_layer[anchor_layer] = anchor

    def rho(p):
        return fluids.rho_w * (1.0 + fluids.c_w * (p - fluids.p_ref))

    gdz = GRAVITY * grid.dz
    for k in range(anchor_layer + 1, NZ):
        p = p_layer[k - 1] + rho(p_layer[k - 1]) * gdz
        for _ in range(60):
            p_new = p_layer[k - 1] + 0.5 * (rho(p_layer[k - 1]) + rho(p)) * gdz
            if abs(p_new - p) < 1e-10:
                p = p_new
                break
            p = p_new
        p_layer[k] = p
    for k in range(anchor_layer - 1, -1, -1):
        p = p_layer[k + 1] - rho(p_layer[k + 1]) * gdz
        for _ in range(60):
            p_new = p_layer[k + 1] - 0.5 * (rho(p_layer[k + 1]) + rho(p)) * gdz
            if abs(p_new - p) < 1e-10:
                p = p_new
                break
            p = p_new
        p_layer[k] = p

    NX, NY, _ = grid.padded_shape
    return np.ascontiguousarray(np.broadcast_to(p_layer, (NX, NY, NZ))).ravel()


def _well_cells(grid: GridSpec, well: WellSpec) -> np.ndarray:
    if not (0 <= well.i < grid.nx and 0 <= well.j < grid.ny):
        raise ValueError(f"well location ({well.i}, {well.j}) outside the storage aquifer")
    if any(l < 0 or l >= grid.nz for l in well.layers):
        raise ValueError("perforated layer outside the storage aquifer")
    return np.array(
        [grid.cell_index(well.i + 1, well.j + 1, l + grid.z_off) for l in well.layers],
        dtype=np.int64,
    )


def _allocate_sources(model, wells, well_cells, S, relperm, fluids, q_w, q_g):
    """Split each well's rate over its perforations by k dz lambda_t."""
    q_w[:] = 0.0
    q_g[:] = 0.0
    denom = 1.0 - relperm.S_wi - relperm.S_gr
    for well, cells in zip(wells, well_cells):
        if well.role != "injector" or well.mass_rate == 0.0:
            continue
        se = np.clip((1.0 - S[cells] - relperm.S_wi) / denom, 0.0, 1.0)
        krw = relperm.krw_endpoint * se**relperm.n_w
        krg = relperm.krg_at_Swi * (1.0 - se) ** relperm.n_g
        mob = krw / fluids.mu_w + krg / fluids.mu_g
        kh = np.sqrt(model.kx[cells] * model.ky[cells]) * model.grid.dz
        w = kh * mob
        tot = w.sum()
        if tot <= 0.0:
            w = np.ones_like(w)
            tot = w.sum()
        target = q_g if well.phase == "co2" else q_w
        np.add.at(target, cells, well.mass_rate * w / tot)


def co2_in_place(model: Geomodel, p, S, p_init, sr, fluids: FluidProps) -> float:
    """In-place CO2 mass (kg) consistent with the accumulation discretization."""
    pv = model.grid.cell_volume * model.grid.pv_multipliers()
    phi = model.phi + sr * (p - p_init)
    rho_g = fluids.rho_g * (1.0 + fluids.c_g * (p - fluids.p_ref))
    return float((pv * phi * rho_g * S).sum())


def simulate(
    model: Geomodel,
    wells: list[WellSpec],
    config: SimConfig,
    fluids: FluidProps = FluidProps(),
    relperm: RelPermParams = RelPermParams(),
    capillary: CapPressureParams = CapPressureParams(),
    k_g: float = GRAIN_BULK_MODULUS,
    sr: np.ndarray | None = None,
) -> SimResult:
    """Run the two-phase simulation and return fields at the report times.

    sr overrides the per-cell storage coefficient (d phi / d p); by default it
    is derived from config.mode via storage_coefficients().
    """
    grid = model.grid
    topo = grid_topology(grid.padded_shape)
    nc = topo.n_cells
    t_start = time.perf_counter()

    if not any(w.role == "injector" for w in wells):
        raise ValueError("at least one injector is required")
    well_cells = [_well_cells(grid, w) for w in wells]

    if sr is None:
        sr = storage_coefficients(model, config.mode, k_g)
    sr = np.ascontiguousarray(sr, dtype=float)

    face_T = _transmissibilities(model, topo)
    face_gdz = _face_gdz(grid, topo)
    pv = grid.cell_volume * grid.pv_multipliers()
    p_init = hydrostatic_pressure(grid, fluids, config.anchor_pressure)

    with np.errstate(divide="ignore"):
        pe_cap = np.where(
            (model.kx > 0) & (model.phi > 0) & (capillary.P_e_ref > 0),
            capillary.P_e_ref
            * np.sqrt((capillary.k_ref / capillary.phi_ref) / np.where(model.kx > 0, model.kx / model.phi, 1.0)),
            0.0,
        )

    p = p_init.copy()
    S = np.zeros(nc)
    mw_old = np.empty(nc)
    mg_old = np.empty(nc)
    q_w = np.zeros(nc)
    q_g = np.zeros(nc)
    R = np.empty(2 * nc)
    vals = np.empty((topo.nnzb, 4))
    luvals = np.empty_like(vals)
    inv_diag = np.empty((nc, 4))
    colmap = np.full(nc, -1, dtype=np.int32)
    lin_work = np.empty((8, 2 * nc))
    dx = np.empty(2 * nc)
    props = [np.empty(nc) for _ in range(8)]

    total_rate = sum(w.mass_rate for w in wells if w.role == "injector")
    mass_tol = max(config.mass_rtol * total_rate, config.mass_atol)

    report_s = np.asarray(config.report_times_yr, dtype=float) * SECONDS_PER_YEAR
    n_rep = report_s.size
    out_p = np.full((n_rep, nc), np.nan)
    out_S = np.full((n_rep, nc), np.nan)
    out_inj = np.full(n_rep, np.nan)
    out_mass = np.full(n_rep, np.nan)

    fl = fluids
    rp = relperm
    cp = capillary

    def assemble_system(p_, S_, dt_):
        return kernels.assemble(
            p_, S_, mw_old, mg_old, dt_,
            topo.face_L, topo.face_R, face_T, face_gdz,
            topo.blk_LL, topo.blk_LR, topo.blk_RL, topo.blk_RR, topo.diag_pos,
            pv, model.phi, sr, p_init, pe_cap, q_w, q_g,
            fl.mu_w, fl.mu_g, fl.rho_w, fl.rho_g, fl.c_w, fl.c_g, fl.p_ref,
            rp.S_wi, rp.S_gr, rp.n_w, rp.n_g, rp.krg_at_Swi, rp.krw_endpoint,
            cp.lam, cp.se_floor,
            R, vals, *props,
        )

    def linear_solve(lin_rtol):
        status = kernels.bilu0_factor(
            topo.indptr, topo.indices, topo.diag_pos, vals, luvals, inv_diag, colmap
        )
        if status == 0:
            its = kernels.bicgstab(
                topo.indptr, topo.indices, topo.diag_pos, vals, luvals, inv_diag,
                rhs, dx, lin_rtol, config.linear_maxiter, lin_work,
            )
            if its >= 0:
                return its
        # robust fallback for pathological systems
        import scipy.sparse as sp
        import scipy.sparse.linalg as spla

        A = sp.bsr_matrix(
            (vals.reshape(-1, 2, 2), topo.indices, topo.indptr), shape=(2 * nc, 2 * nc)
        ).tocsc()
        dx[:] = spla.splu(A).solve(rhs)
        return config.linear_maxiter

    t = 0.0
    dt_nom = config.dt_init_days * SECONDS_PER_DAY
    dt_min = config.dt_min_days * SECONDS_PER_DAY
    dt_max = config.dt_max_yr * SECONDS_PER_YEAR
    injected = 0.0
    rep_idx = 0
    newton_total = 0
    linear_total = 0
    n_steps = 0
    converged_run = True
    failed_at = None
    rhs = np.empty(2 * nc)

    p_prev = None
    dt_prev = None
    while rep_idx < n_rep:
        target = report_s[rep_idx]
        dt = min(dt_nom, dt_max, target - t)
        if target - t - dt < 0.25 * dt:
            dt = target - t

        kernels.cell_masses(
            p, S, p_init, model.phi, sr, pv,
            fl.rho_w, fl.c_w, fl.rho_g, fl.c_g, fl.p_ref, mw_old, mg_old,
        )
        _allocate_sources(model, wells, well_cells, S, rp, fl, q_w, q_g)

        cuts = 0
        while True:
            if p_prev is not None and dt_prev > 0:
                # linear pressure predictor; saturation is left un-extrapolated
                p_new = np.maximum(p + (p - p_prev) * (dt / dt_prev), 1.0e4)
            else:
                p_new = p.copy()
            S_new = S.copy()
            step_ok = False
            res0 = None
            res_prev = None
            for it in range(config.newton_max_iter):
                sw, sg = assemble_system(p_new, S_new, dt)
                res = sw + sg
                if not np.isfinite(res):
                    break
                if res0 is None:
                    res0 = res
                if res <= mass_tol and (it == 0 or last_dp <= config.newton_dp_tol):
                    step_ok = True
                    break
                if it == config.newton_max_iter - 1 or res > 1e8 * max(res0, 1.0):
                    break
                # Eisenstat-Walker forcing: loose solves early, tightening at
                # the quadratic rate (mass balance is set by mass_tol alone)
                if res_prev is None:
                    lin_rtol = config.linear_rtol
                else:
                    lin_rtol = min(
                        config.linear_rtol, max(1.0e-7, 0.9 * (res / res_prev) ** 2)
                    )
                res_prev = res
                rhs[:] = -R
                linear_total += linear_solve(lin_rtol)
                newton_total += 1
                dpv = kernels.P_SCALE * dx[0::2]
                dsv = dx[1::2]
                max_dp = np.abs(dpv).max()
                max_ds = np.abs(dsv).max()
                alpha = min(1.0, config.ds_max / max(max_ds, 1e-300),
                            config.dp_max / max(max_dp, 1e-300))
                p_new += alpha * dpv
                S_new += alpha * dsv
                last_dp = alpha * max_dp

            if step_ok and S_new.min() > -1e-9 and S_new.max() < 1.0 + 1e-9 and p_new.min() > 0:
                break
            cuts += 1
            if cuts > config.max_cuts or dt / 2.0 < dt_min:
                converged_run = False
                failed_at = t / SECONDS_PER_YEAR
                break
            dt = dt / 2.0

        if not converged_run:
            break

        if cuts > 0 or dt >= dt_nom:
            dt_nom = dt * config.dt_growth
        p_prev = p
        dt_prev = dt
        p, S = p_new, S_new
        injected += q_g.sum() * dt  # cumulative injected CO2
        n_steps += 1
        if dt == target - t or abs((t + dt) - target) < 1.0:
            t = target
            out_p[rep_idx] = p
            out_S[rep_idx] = S
            out_inj[rep_idx] = injected
            out_mass[rep_idx] = co2_in_place(model, p, S, p_init, sr, fl)
            rep_idx += 1
        else:
            t = t + dt

    return SimResult(
        grid=grid,
        mode=config.mode,
        report_times_yr=np.asarray(config.report_times_yr, dtype=float),
        p=out_p,
        S=out_S,
        p_init=p_init,
        injected_mass=out_inj,
        co2_mass=out_mass,
        converged=converged_run,
        newton_iterations=newton_total,
        linear_iterations=linear_total,
        n_steps=n_steps,
        wall_time=time.perf_counter() - t_start,
        failed_at_yr=failed_at,
    )
