"""Figure-level experiments with the caption parameters as defaults."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import analysis, topology
from .dynamics import EmitterSpec, Trajectory, assemble, evolve, single_excited
from .lattice import (
    FiniteLattice,
    LatticeError,
    ModelParams,
    SlabSpec,
    apply_absorbers,
    braid_box,
    build_finite,
    rect_block,
    slab_block,
)


def preset(name: str) -> ModelParams:
    from .config import PRESETS

    return ModelParams.from_dict(PRESETS[name])


# --------------------------------------------------------------------------
# Single emitter on a facet (Figs. 2-4)
# --------------------------------------------------------------------------

def facet_emitter_run(params: ModelParams, geometry=None, g: float = 0.5, t_final: float = 10.0,
                      snapshot_times=None, dt: float = 0.02, n_samples: int = 201,
                      facet: str = "perp-"):
    """One emitter at the Weyl frequency on the centre of ``facet``, initially excited."""
    geometry = slab_block() if geometry is None else geometry
    lattice = build_finite(params, geometry)
    site = lattice.center_site(facet)
    system = assemble(lattice, [EmitterSpec(site, params.eps, g)])
    snaps = [t_final] if snapshot_times is None else list(snapshot_times)
    traj = evolve(system, single_excited(system), t_final, snapshot_times=snaps, dt=dt,
                  n_samples=n_samples)
    return lattice, site, traj


def fermi_arc_imaging(params: ModelParams, g: float = 0.5, t: float = 10.0, n_s: int = 33,
                      dt: float = 0.02, geometry=None):
    """Fig. 2: snapshot at ``t`` mapped onto the slab Bloch modes."""
    geometry = slab_block(n_perp=n_s) if geometry is None else geometry
    lattice, site, traj = facet_emitter_run(params, geometry, g, t, [t], dt)
    bp = analysis.bloch_map(lattice, traj.snapshots[t], SlabSpec(params, n_s, "A"), t)
    return lattice, traj, bp


def tof_series(params: ModelParams, g: float = 0.5, times=(2.0, 4.0, 6.0), dt: float = 0.02,
               geometry=None, pad: int = 1):
    """Fig. 3: 3D momentum distributions and n_perp at the release times."""
    geometry = rect_block(31, 31, 61) if geometry is None else geometry
    lattice, site, traj = facet_emitter_run(params, geometry, g, max(times), times, dt)
    out = []
    for t in times:
        md = analysis.momentum_distribution(lattice, traj.snapshots[t], pad)
        out.append((t, md, analysis.column_integrate(md, "perp")))
    return lattice, traj, out


@dataclass
class FarFieldResult:
    theta: np.ndarray
    phi: np.ndarray
    times: np.ndarray
    patterns: np.ndarray  # (n_times, n_theta, n_phi)
    amplitudes: np.ndarray  # (n_times, n_emitters)


def angular_grid(n_theta: int = 61, n_phi: int = 121):
    theta = np.linspace(-math.pi / 2, math.pi / 2, n_theta)
    phi = np.linspace(0.0, 2 * math.pi, n_phi)
    return theta, phi


def farfield_scenario(params: ModelParams, g: float = 0.2, times=(0.0, 10.0, 20.0, 40.0),
                      geometry=None, wavelength: float = 1.0, dipole=(0.0, 0.0, 1.0),
                      n_theta: int = 61, n_phi: int = 121, dt: float = 0.02, facet: str = "perp-"):
    """Fig. 4: one emitter on every facet site, the central one excited."""
    geometry = slab_block() if geometry is None else geometry
    lattice = build_finite(params, geometry)
    sites = np.nonzero(lattice.facet_mask(facet))[0]
    centre = lattice.center_site(facet)
    system = assemble(lattice, [EmitterSpec(int(s), params.eps, g) for s in sites])
    j0 = int(np.nonzero(sites == centre)[0][0])
    times = np.asarray(times, float)
    positive = times[times > 0]
    amps = []
    if positive.size:
        traj = evolve(system, single_excited(system, j0), float(positive.max()),
                      sample_times=positive, dt=dt, track_energy=False)
        amps_pos = traj.emitter_amplitudes
    initial = np.zeros(len(sites), complex)
    initial[j0] = 1.0
    k = 0
    for t in times:
        if t <= 0:
            amps.append(initial)
        else:
            amps.append(amps_pos[k])
            k += 1
    amps = np.array(amps)
    theta, phi = angular_grid(n_theta, n_phi)
    TH, PH = np.meshgrid(theta, phi, indexing="ij")
    spec = analysis.FarFieldSpec(tuple(dipole), wavelength)
    pos = lattice.positions[sites]
    patterns = np.array([analysis.far_field(a, pos, spec, TH, PH) for a in amps])
    return FarFieldResult(theta, phi, times, patterns, amps)


# --------------------------------------------------------------------------
# Two emitters at a hinge (Figs. 5-6)
# --------------------------------------------------------------------------

def hinge_sites(lattice: FiniteLattice, distance: int, z: int | None = None):
    """Emitter sites ``distance`` rows from the perp-/par+ hinge of a braid box.

    Emitter 1 is on the A-terminated perp- facet, emitter 2 on the B-terminated
    par+ facet; both are (2*distance - 1)/sqrt2 away from the other facet plane.
    """
    geo = lattice.geometry
    if distance < 1:
        raise LatticeError("distance must be >= 1")
    s_max = geo.s_range[1]
    u_min = geo.u_range[0]
    z = geo.z_mid if z is None else z
    e1 = lattice.site_index(s_max - (2 * distance - 1), u_min, z)
    e2 = lattice.site_index(s_max, u_min + 2 * distance - 1, z)
    return e1, e2


def two_emitter_run(params: ModelParams, n_side: int, n_z: int, distance: int, g: float,
                    t_final: float, dt: float = 0.02, n_samples: int = 401,
                    absorbers=(), gamma: float = 1.0, layers: int = 3) -> Trajectory:
    lattice = build_finite(params, braid_box(n_side, n_z))
    if absorbers:
        lattice = apply_absorbers(lattice, absorbers, gamma, layers)
    e1, e2 = hinge_sites(lattice, distance)
    system = assemble(lattice, [EmitterSpec(e1, params.eps, g), EmitterSpec(e2, params.eps, g)])
    return evolve(system, single_excited(system, 0), t_final, dt=dt, n_samples=n_samples,
                  track_energy=False)


CHIRAL_DEFAULTS = dict(n_side=20, n_z=41, t_final=60.0, absorbers=("perp+", "par-"), gamma=1.0, layers=3)


def chiral_channel(params: ModelParams, distance: int, g: float, **kw) -> Trajectory:
    """Fig. 5(d,e): dissipative regime, absorbing facets opposite the hinge."""
    opts = {**CHIRAL_DEFAULTS, **kw}
    return two_emitter_run(params, opts.pop("n_side"), opts.pop("n_z"), distance, g,
                           opts.pop("t_final"), **opts)


def _run_cells(fn, cells, workers: int):
    """Map ``fn`` over ``cells``; results come back in input order whatever ``workers`` is."""
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
        return list(pool.map(fn, cells))


def _concurrence_cell(cell):
    params, d, g, kw = cell
    if g == 0:
        return 0.0
    try:
        return float(chiral_channel(params, int(d), float(g), **kw).concurrence.max())
    except (ArithmeticError, LatticeError, ValueError):
        return math.nan


def concurrence_scan(params: ModelParams, distances, g_list, workers: int = 1, **kw) -> np.ndarray:
    """Fig. 5(f): max_t C(t) on the (distance, g) grid; failed cells are NaN."""
    cells = [(params, d, g, kw) for d in distances for g in g_list]
    vals = _run_cells(_concurrence_cell, cells, workers)
    return np.array(vals, float).reshape(len(distances), len(g_list))


CAVITY_DEFAULTS = dict(n_z=11, t_final=2400.0, dt=0.05, n_samples=2401)


def cavity(params: ModelParams, n_side: int, distance: int, g: float = 0.1, **kw) -> Trajectory:
    """Fig. 6: closed braid box with equal faces, no absorbers."""
    opts = {**CAVITY_DEFAULTS, **kw}
    return two_emitter_run(params, n_side, opts.pop("n_z"), distance, g, opts.pop("t_final"), **opts)


def _j12_cell(cell):
    params, L, d, g, window, kw = cell
    traj = cavity(params, int(L), int(d), g, **kw)
    cmax = float(traj.concurrence.max())
    try:
        est = analysis.extract_j12(traj, window=window)
        return (L, d, float(est.value), float(est.fourier), bool(est.ambiguous), cmax)
    except ValueError:
        return (L, d, math.nan, math.nan, True, cmax)


def j12_scan(params: ModelParams, sizes, distances, g: float = 0.1, window: float = 3.0,
             workers: int = 1, **kw):
    """J12 for every (size, distance) pair; NaN where the trajectory has no exchange maximum."""
    cells = [(params, L, d, g, window, kw) for L in sizes for d in distances if d <= L]
    return _run_cells(_j12_cell, cells, workers)


# --------------------------------------------------------------------------
# Topology presets
# --------------------------------------------------------------------------

def s2_path(t):
    """Fig. S2 path through the phi = 0 phase diagram: m = 3(1 - t) J, J' = t J."""
    t = np.asarray(t, float)
    return 3.0 * (1.0 - t), t


def chern_path(n_path: int = 41, n_kz: int = 21, grid: int = 101, gap_tol: float = 1e-6):
    """Rows (t, m, J', k_z, C_plaquette, C_closed); gapless points are skipped."""
    rows = []
    for t in np.linspace(0.0, 1.0, n_path):
        m, jp = s2_path(t)
        p = ModelParams.simplified(1.0, float(jp), float(m), 0.0)
        for kz in np.linspace(-math.pi, math.pi, n_kz, endpoint=False) + math.pi / n_kz:
            closed_args = (-m - 2 * math.cos(kz) + 2 * math.sqrt(2) * jp,
                           -m - 2 * math.cos(kz) - 2 * math.sqrt(2) * jp)
            if min(abs(a) for a in closed_args) < 1e-9:
                continue
            try:
                c = topology.chern_reduced(p, float(kz), n=grid, gap_tol=gap_tol)
            except topology.GaplessError:
                continue
            rows.append((float(t), float(m), float(jp), float(kz), c,
                         topology.chern_closed_form(float(m), float(jp), float(kz))))
    return rows


def analytic_phase(m: float, jprime: float, J: float = 1.0, tol: float = 1e-9):
    """Phase of the phi = 0 model from |m -+ 2 sqrt2 J'| < 2J; None on a boundary."""
    a, b = abs(m - 2 * math.sqrt(2) * jprime), abs(m + 2 * math.sqrt(2) * jprime)
    if min(abs(a - 2 * J), abs(b - 2 * J)) < tol:
        return None
    # int() matters: np.bool_ + np.bool_ is a logical or
    n = int(a < 2 * J) + int(b < 2 * J)
    if n == 2:
        return "WSM2"
    if n == 1:
        return "WSM1"
    c = topology.chern_closed_form(m, jprime, math.pi / 2, J)
    return "QHI" if c != 0 else "BI"


def phase_diagram(m_values, jp_values, phi: float = 0.0):
    rows = []
    for m in m_values:
        for jp in jp_values:
            p = ModelParams.simplified(1.0, float(jp), float(m), phi)
            try:
                label, c = topology.classify_phase(p)
                rows.append((float(m), float(jp), label.value, -99 if c is None else c))
            except topology.PhaseBoundaryError:
                rows.append((float(m), float(jp), "boundary", -99))
    return rows
