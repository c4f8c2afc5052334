"""``weyl-arc-sim`` command-line entry point."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, scenarios, topology
from .config import COMMANDS, ConfigError, RunConfig, parse_config
from .dynamics import EmitterSpec, IntegrationError, assemble, evolve, single_excited
from .formats import sha256, write_binary, write_columnar
from .lattice import (
    CubicBlock,
    LatticeError,
    SlabSpec,
    apply_absorbers,
    braid_box,
    build_finite,
    rect_block,
    slab_block,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class Outputs:
    def __init__(self, out_dir: Path, meta: dict):
        self.dir = out_dir
        self.meta = meta
        self.files = []

    def columnar(self, name, columns, **meta):
        path = write_columnar(self.dir / name, columns, {**self.meta, **meta})
        self.files.append(path)
        return path

    def binary(self, name, array):
        path = write_binary(self.dir / name, array)
        self.files.append(path)
        return path


# --------------------------------------------------------------------------
# Geometry and emitters from the config
# --------------------------------------------------------------------------

def geometry_from(cfg: RunConfig, default):
    g = cfg.geometry
    builder = g.get("builder")
    if builder is None:
        return default
    if builder == "slab_block":
        return slab_block(g.get("n_par", 63), g.get("n_perp", 33), g.get("n_z", 63), g.get("termination", "A"))
    if builder == "rect_block":
        terms = tuple(g.get("terminations", ["A", None]))
        return rect_block(g.get("n_par", 31), g.get("n_perp", 31), g.get("n_z", 61), terms)
    if builder == "braid_box":
        return braid_box(g.get("n_side", 20), g.get("n_z", 41), g.get("n_side_perp"))
    return CubicBlock(g.get("nx", 2), g.get("ny", 2), g.get("n_z", 1))


def lattice_from(cfg: RunConfig, default_geometry):
    lat = build_finite(cfg.model, geometry_from(cfg, default_geometry))
    facets = cfg.geometry.get("absorber_facets", [])
    if facets:
        lat = apply_absorbers(lat, facets, cfg.geometry.get("absorber_gamma_J", 1.0),
                              cfg.geometry.get("absorber_layers", 1))
    return lat


def emitters_from(cfg: RunConfig, lattice, g_default: float):
    specs = []
    for e in cfg.emitters or [{"facet": "perp-"}]:
        if "site" in e:
            site = int(e["site"])
        elif {"s", "u", "z"} <= set(e):
            site = lattice.site_index(e["s"], e["u"], e["z"])
        else:
            site = lattice.center_site(e.get("facet", "perp-"))
        specs.append(EmitterSpec(site, e.get("omega_J", cfg.model.eps), e.get("g_over_J", g_default),
                                 e.get("gamma0_J", 0.0)))
    return specs


def _trajectory_columns(traj):
    cols = {"t_J": traj.times, "photon_population": traj.photon_population, "norm": traj.norm,
            "energy_J": traj.energy}
    for j in range(traj.emitter_amplitudes.shape[1]):
        cols[f"P{j + 1}"] = traj.emitter_populations[:, j]
    if traj.emitter_amplitudes.shape[1] == 2:
        cols["concurrence"] = traj.concurrence
    return cols


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_bands(cfg, out):
    family = cfg.get("family", "bulk")
    n = cfg.get("n_k", 101)
    if family == "bulk":
        kx = cfg.get("kx", -math.pi / 4)
        ks = np.linspace(-math.pi, math.pi, n)
        KY, KZ = np.meshgrid(ks, ks, indexing="ij")
        k = np.stack([np.full_like(KY, kx), KY, KZ], axis=-1)
        E = topology.band_structure(cfg.model, k).energies
        out.columnar("bands.csv", {"ky": KY.ravel(), "kz": KZ.ravel(), "E_minus": E[..., 0].ravel(),
                                   "E_plus": E[..., 1].ravel()}, family="bulk", kx=repr(float(kx)))
    else:
        spec = SlabSpec(cfg.model, cfg.get("N_s", 33))
        kz = cfg.get("kz", math.pi / 2)
        kp = np.linspace(-math.pi / math.sqrt(2), math.pi / math.sqrt(2), n)
        E = topology.band_structure(spec, np.stack([kp, np.full_like(kp, kz)], axis=-1)).energies
        cols = {"k_par": kp}
        cols.update({f"E{i + 1}": E[:, i] for i in range(E.shape[1])})
        out.columnar("bands.csv", cols, family="slab", kz=repr(float(kz)), edge_band=spec.edge_band + 1)


def cmd_phase_diagram(cfg, out):
    ms = np.linspace(cfg.get("m_min", 0.0), cfg.get("m_max", 4.0), cfg.get("n_m", 21))
    jps = np.linspace(cfg.get("Jprime_min", 0.0), cfg.get("Jprime_max", 1.5), cfg.get("n_Jprime", 21))
    rows = scenarios.phase_diagram(ms, jps, cfg.model.phases[0])
    m, jp, label, c = zip(*rows)
    out.columnar("phase_diagram.csv", {"m": m, "Jprime": jp, "phase": label, "chern": c})


def cmd_fermi_arcs(cfg, out):
    spec = SlabSpec(cfg.model, cfg.get("N_s", 33))
    omega = cfg.get("omega_J", cfg.model.eps)
    arcs = topology.fermi_arcs(spec, omega, cfg.get("n_par", 201), cfg.get("n_kz", 201))
    ids, facet, kp, kz = [], [], [], []
    for i, a in enumerate(arcs):
        ids += [i] * len(a.points)
        facet += [a.facet] * len(a.points)
        kp += list(a.points[:, 0])
        kz += list(a.points[:, 1])
    out.columnar("fermi_arcs.csv", {"arc": ids, "facet": facet, "k_par": kp, "k_z": kz},
                 omega_J=repr(float(omega)))
    if cfg.model.is_type_one:
        nodes = topology.find_weyl_points(cfg.model)
        proj = [n.surface_projection for n in nodes]
        out.columnar("weyl_projections.csv", {"k_par": [p[0] for p in proj], "k_z": [p[1] for p in proj],
                                              "chirality": [n.chirality for n in nodes]})


def cmd_berry_surface(cfg, out):
    spec = SlabSpec(cfg.model, cfg.get("N_s", 33))
    grid, omega = topology.surface_curvature_map(spec, cfg.get("n_par", 201), cfg.get("n_kz", 201))
    out.binary("berry_surface.warc", omega)
    a = np.abs(omega[np.isfinite(omega)])
    med = float(np.median(a))
    out.columnar("berry_surface_summary.csv", {
        "max_abs": [float(a.max())], "median_abs": [med],
        "ratio": [float(a.max() / med) if med > 0 else math.inf],
        "n_degenerate": [int(np.isnan(omega).sum())]})


def cmd_evolve(cfg, out):
    lattice = lattice_from(cfg, slab_block())
    system = assemble(lattice, emitters_from(cfg, lattice, cfg.get("g_over_J", 0.5)))
    t_final = cfg.get("t_final_J", 10.0)
    snaps = cfg.get("snapshot_times_J", [t_final])
    traj = evolve(system, single_excited(system), t_final, snapshot_times=snaps,
                  dt=cfg.get("dt_J", 0.02), n_samples=cfg.get("n_samples", 200))
    out.columnar("trajectory.csv", _trajectory_columns(traj))
    for t, st in sorted(traj.snapshots.items()):
        out.binary(f"snapshot_t{t:g}.warc", st.vector)


def cmd_bloch_map(cfg, out):
    n_s = cfg.get("N_s", 33)
    geometry = geometry_from(cfg, slab_block(n_perp=n_s))
    t = cfg.get("t_J", 10.0)
    lattice, traj, bp = scenarios.fermi_arc_imaging(cfg.model, cfg.get("g_over_J", 0.5), t, n_s,
                                                    cfg.get("dt_J", 0.02), geometry)
    out.binary("bloch_population.warc", bp.population)
    out.binary("bloch_band_summed.warc", bp.band_summed())
    window = cfg.get("window_J", 0.25)
    out.columnar("bloch_summary.csv", {
        "t_J": [t], "total": [bp.total], "photon_population": [traj.snapshots[t].photon_population],
        "resonant_fraction": [bp.weight_fraction(cfg.model.eps, window)], "window_J": [window]})
    out.columnar("bloch_axes.csv", {"k_par": bp.k_par, "k_z": bp.k_z})


def cmd_tof(cfg, out):
    times = cfg.get("times_J", [2.0, 4.0, 6.0])
    geometry = geometry_from(cfg, rect_block(31, 31, 61))
    lattice, traj, series = scenarios.tof_series(cfg.model, cfg.get("g_over_J", 0.5), times,
                                                 cfg.get("dt_J", 0.02), geometry, cfg.get("pad", 1))
    for t, md, n_perp in series:
        out.binary(f"tof_t{t:g}.warc", md.n)
        out.binary(f"tof_nperp_t{t:g}.warc", n_perp)
    md = series[0][1]
    out.columnar("tof_axes_par.csv", {"k_par": md.k_par})
    out.columnar("tof_axes_perp.csv", {"k_perp": md.k_perp})
    out.columnar("tof_axes_z.csv", {"k_z": md.k_z})


def cmd_farfield(cfg, out):
    geometry = geometry_from(cfg, slab_block())
    res = scenarios.farfield_scenario(
        cfg.model, cfg.get("g_over_J", 0.2), cfg.get("times_J", [0.0, 10.0, 20.0, 40.0]), geometry,
        cfg.get("wavelength_a", 1.0), tuple(cfg.get("dipole", [0.0, 0.0, 1.0])),
        cfg.get("n_theta", 61), cfg.get("n_phi", 121), cfg.get("dt_J", 0.02))
    for t, f in zip(res.times, res.patterns):
        out.binary(f"farfield_t{t:g}.warc", f)
    out.columnar("farfield_axes_theta.csv", {"theta": res.theta})
    out.columnar("farfield_axes_phi.csv", {"phi": res.phi})


def _chiral_kw(cfg):
    kw = {}
    g = cfg.geometry
    if "n_side" in g:
        kw["n_side"] = g["n_side"]
    if "n_z" in g:
        kw["n_z"] = g["n_z"]
    if "absorber_facets" in g:
        kw["absorbers"] = tuple(g["absorber_facets"])
    if "absorber_gamma_J" in g:
        kw["gamma"] = g["absorber_gamma_J"]
    if "absorber_layers" in g:
        kw["layers"] = g["absorber_layers"]
    for key, name in (("t_final_J", "t_final"), ("dt_J", "dt"), ("n_samples", "n_samples")):
        if cfg.get(key) is not None:
            kw[name] = cfg.get(key)
    return kw


def cmd_chiral_channel(cfg, out):
    traj = scenarios.chiral_channel(cfg.model, cfg.get("distance", 2), cfg.get("g_over_J", 0.3), **_chiral_kw(cfg))
    out.columnar("chiral_channel.csv", _trajectory_columns(traj), C_max=repr(float(traj.concurrence.max())))


def cmd_concurrence_scan(cfg, out):
    ds = cfg.get("distances", [1, 2, 4])
    gs = cfg.get("g_list", [0.2, 0.3, 0.4])
    cmax = scenarios.concurrence_scan(cfg.model, ds, gs, workers=cfg.get("threads", 1), **_chiral_kw(cfg))
    D, G = np.meshgrid(ds, gs, indexing="ij")
    out.columnar("concurrence_scan.csv", {"distance": D.ravel(), "g_over_J": G.ravel(), "C_max": cmax.ravel()})


def _cavity_kw(cfg):
    kw = {}
    if "n_z" in cfg.geometry:
        kw["n_z"] = cfg.geometry["n_z"]
    for key, name in (("t_final_J", "t_final"), ("dt_J", "dt"), ("n_samples", "n_samples")):
        if cfg.get(key) is not None:
            kw[name] = cfg.get(key)
    return kw


def cmd_cavity(cfg, out):
    n_side = cfg.geometry.get("n_side", 11)
    traj = scenarios.cavity(cfg.model, n_side, cfg.get("distance", 3), cfg.get("g_over_J", 0.1), **_cavity_kw(cfg))
    meta = {"C_max": repr(float(traj.concurrence.max()))}
    try:
        est = analysis.extract_j12(traj, window=cfg.get("window_J", 3.0))
        meta.update(J12=repr(est.value), J12_fourier=repr(est.fourier), ambiguous=int(est.ambiguous))
    except ValueError as exc:
        meta.update(J12="nan", note=str(exc))
    out.columnar("cavity.csv", _trajectory_columns(traj), **meta)


def cmd_j12_scan(cfg, out):
    rows = scenarios.j12_scan(cfg.model, cfg.get("sizes", [11, 21, 31]), cfg.get("distances", [3, 5, 8]),
                              cfg.get("g_over_J", 0.1), cfg.get("window_J", 3.0),
                              workers=cfg.get("threads", 1), **_cavity_kw(cfg))
    L, d, j, jf, amb, cm = zip(*rows) if rows else ((),) * 6
    out.columnar("j12_scan.csv", {"L": L, "distance": d, "J12": j, "J12_fourier": jf,
                                  "ambiguous": [int(a) for a in amb], "C_max": cm})


def cmd_chern(cfg, out):
    rows = scenarios.chern_path(cfg.get("n_path", 41), cfg.get("n_kz", 21), cfg.get("grid", 101))
    t, m, jp, kz, c, cc = zip(*rows)
    out.columnar("chern.csv", {"path": t, "m": m, "Jprime": jp, "k_z": kz, "C_minus": c, "C_closed_form": cc})


def cmd_weyl_points(cfg, out):
    nodes = topology.find_weyl_points(cfg.model, cfg.get("tol", 1e-10), cfg.get("grid", 64))
    out.columnar("weyl_points.csv", {
        "kx": [n.k[0] for n in nodes], "ky": [n.k[1] for n in nodes], "kz": [n.k[2] for n in nodes],
        "chirality": [n.chirality for n in nodes], "frequency_J": [n.frequency for n in nodes]})


HANDLERS = {
    "bands": cmd_bands, "phase-diagram": cmd_phase_diagram, "fermi-arcs": cmd_fermi_arcs,
    "berry-surface": cmd_berry_surface, "evolve": cmd_evolve, "bloch-map": cmd_bloch_map,
    "tof": cmd_tof, "farfield": cmd_farfield, "chiral-channel": cmd_chiral_channel,
    "concurrence-scan": cmd_concurrence_scan, "cavity": cmd_cavity, "j12-scan": cmd_j12_scan,
    "chern": cmd_chern, "weyl-points": cmd_weyl_points,
}
assert set(HANDLERS) == set(COMMANDS)


def _error_record(out_dir: Path | None, kind: str, message, code: int) -> int:
    record = {"status": "error", "kind": kind, "exit_code": code,
              "messages": message if isinstance(message, list) else [str(message)]}
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def run(command: str, cfg: RunConfig, out_dir) -> int:
    out_dir = Path(out_dir)
    if cfg.command != command:
        return _error_record(out_dir, "config", f"config is for {cfg.command!r}, not {command!r}", EXIT_CONFIG)
    t0 = time.perf_counter()
    out = Outputs(out_dir, {"command": command, "config_sha256": cfg.digest()})
    try:
        HANDLERS[command](cfg, out)
        wall = time.perf_counter() - t0
        names = [p.name for p in out.files]
        write_columnar(out_dir / "manifest.csv", {
            "file": names, "sha256": [sha256(p) for p in out.files],
            "bytes": [p.stat().st_size for p in out.files]},
            {"command": command, "config_sha256": cfg.digest(), "wall_time_s": f"{wall:.3f}"})
    except (ConfigError, LatticeError, KeyError, TypeError) as exc:
        msg = exc.errors if isinstance(exc, ConfigError) else str(exc)
        return _error_record(out_dir, "config", msg, EXIT_CONFIG)
    except (ArithmeticError, IntegrationError, np.linalg.LinAlgError) as exc:
        return _error_record(out_dir, "numerical", str(exc), EXIT_NUMERIC)
    except OSError as exc:
        return _error_record(None, "io", str(exc), EXIT_IO)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="weyl-arc-sim", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    args = parser.parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        return _error_record(None, "io", str(exc), EXIT_IO)
    try:
        cfg = parse_config(text, args.override)
    except ConfigError as exc:
        return _error_record(args.out, "config", exc.errors, EXIT_CONFIG)
    if args.threads is not None:
        if args.threads < 1:
            return _error_record(args.out, "config", ["--threads must be >= 1"], EXIT_CONFIG)
        cfg.experiment["threads"] = args.threads
    cfg.experiment.setdefault("threads", os.cpu_count() or 1)
    return run(args.command, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
