"""Reciprocal-space and far-field observables built from dynamical snapshots."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .dynamics import SystemState, Trajectory
from .lattice import SQRT2, FiniteLattice, LatticeError, SlabSpec, slab_bloch
from .topology import ArcPolyline


# --------------------------------------------------------------------------
# Bloch-mode populations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BlochPopulation:
    k_par: np.ndarray  # (N_par,) ascending, inside [-pi/sqrt2, pi/sqrt2)
    k_z: np.ndarray  # (N_z,) ascending, inside [-pi, pi)
    population: np.ndarray  # (N_par, N_z, N_s) |C_nk|^2
    energies: np.ndarray  # (N_par, N_z, N_s)
    time: float | None = None

    @property
    def total(self) -> float:
        return float(self.population.sum())

    def band_summed(self) -> np.ndarray:
        return self.population.sum(axis=-1)

    def weight_fraction(self, omega: float, window: float) -> float:
        """Share of the mapped weight carried by modes with |E - omega| <= window."""
        near = np.abs(self.energies - omega) <= window
        return float(self.population[near].sum() / self.total)

    def resonant_map(self, omega: float, window: float) -> np.ndarray:
        near = np.abs(self.energies - omega) <= window
        return np.where(near, self.population, 0.0).sum(axis=-1)


def slab_rows(lattice: FiniteLattice, spec: SlabSpec):
    """Site indices of every slab row as an (N_s, n_par, n_z) array in slab-basis order."""
    coords = lattice.coords
    n_z = lattice.geometry.n_z
    rows = []
    for u in spec.row_u:
        idx = np.nonzero(coords[:, 1] == u)[0]
        if idx.size == 0:
            raise LatticeError(f"lattice has no row u={u} required by the slab basis")
        rows.append(idx)
    sizes = {r.size for r in rows}
    if len(sizes) != 1 or sizes.pop() % n_z:
        raise LatticeError("rows of unequal length: geometry is not a slab block")
    if np.unique(coords[:, 1]).size != spec.n_s:
        raise LatticeError(f"lattice has {np.unique(coords[:, 1]).size} rows, slab basis {spec.n_s}")
    out = []
    for idx in rows:
        order = np.lexsort((coords[idx, 2], coords[idx, 0]))
        out.append(idx[order].reshape(-1, n_z))
    return np.stack(out)


def _row_transform(amps, rows, s_first):
    """V_n(k) on the DFT-commensurate grid, fft-shifted; shape (N_par, N_z, N_s)."""
    n_rows, n_par, n_z = rows.shape
    kp = 2 * math.pi * np.fft.fftfreq(n_par) / SQRT2
    kz = 2 * math.pi * np.fft.fftfreq(n_z)
    V = np.fft.fft2(amps[rows], axes=(1, 2), norm="ortho")
    # each row starts at its own s offset; restore the e^{-i k r} phase of the first site
    V *= np.exp(-1j * kp[None, :, None] * s_first[:, None, None] / SQRT2)
    V = np.fft.fftshift(V, axes=(1, 2))
    return np.fft.fftshift(kp), np.fft.fftshift(kz), np.moveaxis(V, 0, -1)


def bloch_map(lattice: FiniteLattice, state, spec: SlabSpec, time: float | None = None,
              velocity: float = 1.0) -> BlochPopulation:
    """|C_nk|^2 of a finite-slab snapshot projected on slab Bloch states.

    The k grid is the one on which the row transform is an exact DFT, so the
    map is unitary: the total equals the photonic population of the snapshot.
    """
    if isinstance(state, SystemState):
        amps = state.sites
        time = state.t if time is None else time
    else:
        amps = np.asarray(state)
    if amps.shape != (lattice.n_sites,):
        raise LatticeError("snapshot does not match the lattice")
    rows = slab_rows(lattice, spec)
    s_first = lattice.coords[rows[:, 0, 0], 0].astype(float)
    kp, kz, V = _row_transform(amps, rows, s_first)
    if time is not None:
        span = min(rows.shape[1] * SQRT2, rows.shape[2]) / 2
        if velocity * time > span:
            warnings.warn("snapshot time exceeds the reflection-free window of the block", stacklevel=2)
    KP, KZ = np.meshgrid(kp, kz, indexing="ij")
    E, U = np.linalg.eigh(slab_bloch(spec, KP, KZ))
    C = np.einsum("...ji,...j->...i", np.conj(U), V)
    return BlochPopulation(kp, kz, np.abs(C) ** 2, E, time)


def arc_distance_cells(bp: BlochPopulation, arcs, facet: str | None = None) -> np.ndarray:
    """Distance (in grid cells, per axis scaled) from every map cell to the nearest arc point."""
    pts = [a.points for a in arcs if facet is None or a.facet == facet]
    if not pts:
        return np.full((bp.k_par.size, bp.k_z.size), np.inf)
    pts = np.concatenate([densify(p) for p in pts])
    dkp = bp.k_par[1] - bp.k_par[0]
    dkz = bp.k_z[1] - bp.k_z[0]
    KP, KZ = np.meshgrid(bp.k_par, bp.k_z, indexing="ij")
    a = np.stack([KP.ravel() / dkp, KZ.ravel() / dkz], axis=1)
    b = np.stack([pts[:, 0] / dkp, pts[:, 1] / dkz], axis=1)
    from scipy.spatial import cKDTree

    d, _ = cKDTree(b).query(a)
    return d.reshape(KP.shape)


def densify(points: np.ndarray, step: float = 0.01) -> np.ndarray:
    """Insert points along a polyline so consecutive points are at most ``step`` apart."""
    out = [points[:1]]
    for a, b in zip(points[:-1], points[1:]):
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / step)))
        t = np.linspace(0, 1, n + 1)[1:, None]
        out.append(a + t * (b - a))
    return np.concatenate(out)


def top_fraction_mask(weights: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    """Cells in the top ``fraction`` of the weight ranking."""
    flat = weights.ravel()
    n = max(1, int(round(fraction * flat.size)))
    thresh = np.partition(flat, flat.size - n)[flat.size - n]
    return weights >= thresh


# --------------------------------------------------------------------------
# Time-of-flight
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentumDistribution:
    k_par: np.ndarray
    k_perp: np.ndarray
    k_z: np.ndarray
    n: np.ndarray  # (N_par, N_perp, N_z)

    @property
    def axes(self):
        return {"par": self.k_par, "perp": self.k_perp, "z": self.k_z}


_AXES = ("par", "perp", "z")


def momentum_distribution(lattice: FiniteLattice, state, pad: int = 1) -> MomentumDistribution:
    """n(k) = |sum_r C_r exp(-i k.r)|^2 on the FFT grid of the (s, u, z) embedding.

    The grid covers k_par, k_perp in [-pi*sqrt2, pi*sqrt2) and k_z in [-pi, pi);
    ``pad`` > 1 zero-pads to refine it. Emitter amplitudes are not included.
    """
    amps = state.sites if isinstance(state, SystemState) else np.asarray(state)
    if pad < 1:
        raise ValueError("pad must be >= 1")
    c = lattice.coords
    s0, u0 = c[:, 0].min(), c[:, 1].min()
    shape = (c[:, 0].max() - s0 + 1, c[:, 1].max() - u0 + 1, lattice.geometry.n_z)
    grid = np.zeros(tuple(pad * n for n in shape), dtype=complex)
    grid[c[:, 0] - s0, c[:, 1] - u0, c[:, 2]] = amps
    F = np.fft.fftshift(np.fft.fftn(grid))
    ks = []
    for n, scale in zip(grid.shape, (SQRT2, SQRT2, 1.0)):
        ks.append(np.fft.fftshift(2 * math.pi * np.fft.fftfreq(n) * scale))
    # the choice of real-space origin only changes the phase of F
    return MomentumDistribution(ks[0], ks[1], ks[2], np.abs(F) ** 2)


def momentum_direct(lattice: FiniteLattice, amps, k: np.ndarray) -> np.ndarray:
    """Direct evaluation of n(k) at arbitrary k = (k_par, k_perp, k_z) points."""
    k = np.atleast_2d(np.asarray(k, float))
    r = lattice.positions
    phase = np.exp(-1j * k @ r.T)
    return np.abs(phase @ np.asarray(amps)) ** 2


def column_integrate(md: MomentumDistribution, axis: str = "perp") -> np.ndarray:
    """Periodic trapezoidal integral of n(k) along one axis (full period)."""
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {_AXES}, got {axis!r}")
    i = _AXES.index(axis)
    k = md.axes[axis]
    dk = k[1] - k[0] if k.size > 1 else 2 * math.pi
    return md.n.sum(axis=i) * dk


def surface_resample(k_par: np.ndarray, k_z: np.ndarray, values: np.ndarray,
                     target_par: np.ndarray, target_z: np.ndarray) -> np.ndarray:
    """Periodic linear interpolation of a (k_par, k_z) map onto another grid.

    ``values`` must be periodic in k_par with the surface period pi*sqrt2 and in
    k_z with 2 pi; the source grid must be uniform.
    """
    per = (math.pi * SQRT2, 2 * math.pi)
    coords = []
    for src, tgt, p in zip((k_par, k_z), (target_par, target_z), per):
        d = src[1] - src[0]
        n_period = int(round(p / d))
        coords.append(((tgt - src[0]) / d) % n_period)
    # reduce the source to one period, then wrap
    n_par = int(round(per[0] / (k_par[1] - k_par[0])))
    n_z = int(round(per[1] / (k_z[1] - k_z[0])))
    base = values[:n_par, :n_z]
    P, Z = np.meshgrid(coords[0], coords[1], indexing="ij")
    return ndimage.map_coordinates(base, [P, Z], order=1, mode="grid-wrap")


def tof_surface_map(lattice: FiniteLattice, state, pad: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column-integrated n_perp restricted to one surface period in k_par."""
    md = momentum_distribution(lattice, state, pad)
    n_perp = column_integrate(md, "perp")
    return md.k_par, md.k_z, n_perp


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = np.ravel(a) - np.mean(a)
    b = np.ravel(b) - np.mean(b)
    return float(np.dot(a, b) / math.sqrt(np.dot(a, a) * np.dot(b, b)))


# --------------------------------------------------------------------------
# Far field
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FarFieldSpec:
    dipole: tuple = (0.0, 0.0, 1.0)  # components along (e_par, e_perp, e_z)
    wavelength: float = 1.0

    def __post_init__(self):
        if abs(np.linalg.norm(self.dipole) - 1.0) > 1e-12:
            raise ValueError("dipole orientation must be a unit vector")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be > 0")

    @property
    def k0(self) -> float:
        return 2 * math.pi / self.wavelength


def direction(theta, phi) -> np.ndarray:
    """Unit vector cos(th)cos(ph) e_perp + cos(th)sin(ph) e_par + sin(th) e_z in (par, perp, z)."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    return np.stack([np.cos(theta) * np.sin(phi), np.cos(theta) * np.cos(phi), np.sin(theta)], axis=-1)


def far_field(amplitudes, positions, spec: FarFieldSpec, theta, phi) -> np.ndarray:
    """Form factor f(theta, phi) = [1 - (d.R)^2] |sum_j C_j exp(-i k0 R.r_j)|^2.

    ``positions`` are (N, 3) in (r_par, r_perp, z); theta, phi broadcast together.
    """
    C = np.asarray(amplitudes, dtype=complex)
    r = np.asarray(positions, float)
    R = direction(theta, phi)
    shape = R.shape[:-1]
    R = R.reshape(-1, 3)
    d = np.asarray(spec.dipole, float)
    pol = 1.0 - (R @ d) ** 2
    out = np.empty(R.shape[0])
    chunk = max(1, 2_000_000 // max(1, r.shape[0]))
    for i in range(0, R.shape[0], chunk):
        ph = np.exp(-1j * spec.k0 * (R[i:i + chunk] @ r.T))
        out[i:i + chunk] = np.abs(ph @ C) ** 2
    return np.maximum(pol, 0.0).reshape(shape) * out.reshape(shape)


def separability_ratio(f: np.ndarray, theta: np.ndarray) -> float:
    """Second/first singular value of f/cos^2(theta); 0 for a product pattern."""
    c2 = np.cos(theta)[:, None] ** 2
    keep = c2[:, 0] > 1e-6
    sv = np.linalg.svd(f[keep] / c2[keep], compute_uv=False)
    return float(sv[1] / sv[0]) if sv[0] > 0 else 0.0


# --------------------------------------------------------------------------
# Figures of merit
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class J12Estimate:
    value: float
    fourier: float
    t_max: float
    ambiguous: bool


def _smooth(y: np.ndarray, dt: float, window: float) -> np.ndarray:
    # odd width keeps the filter centred; an even one delays the signal by dt/2
    n = 2 * int(round(window / dt / 2)) + 1
    if n <= 1:
        return y
    return ndimage.uniform_filter1d(y, n, mode="nearest")


def extract_j12(traj_or_times, p2=None, p1=None, window: float = 3.0, tol: float = 0.05,
                prominence: float = 0.3) -> J12Estimate:
    """Exchange frequency from |C_2|^2 (first maximum) and |C_1|^2 - 1/2 (Fourier peak).

    The primary estimate is pi / (2 t_max) with t_max the first maximum of the
    smoothed |C_2|^2 whose prominence exceeds ``prominence`` times its range.
    """
    if isinstance(traj_or_times, Trajectory):
        t = traj_or_times.times
        pops = traj_or_times.emitter_populations
        if pops.shape[1] != 2:
            raise ValueError("J12 extraction needs two emitters")
        p1, p2 = pops[:, 0], pops[:, 1]
    else:
        t = np.asarray(traj_or_times, float)
        p2 = np.asarray(p2, float)
        p1 = 1.0 - p2 if p1 is None else np.asarray(p1, float)
    dt = t[1] - t[0]
    s2 = _smooth(p2, dt, window)
    # exchange maxima stand out from the round-trip ripple by their prominence
    span = float(s2.max() - s2.min())
    peaks, _ = signal.find_peaks(s2, prominence=prominence * span if span > 0 else None)
    if peaks.size == 0 or span == 0:
        raise ValueError("no maximum of |C2|^2 within the horizon")
    i = int(peaks[0])
    # parabolic refinement
    if 0 < i < len(s2) - 1:
        a, b, c = s2[i - 1], s2[i], s2[i + 1]
        den = a - 2 * b + c
        shift = 0.5 * (a - c) / den if den != 0 else 0.0
    else:
        shift = 0.0
    t_max = t[i] + shift * dt - t[0]
    j12 = math.pi / (2 * t_max)

    y = _smooth(p1, dt, window) - 0.5
    y = y - y.mean()
    # untapered: with under two periods in the window a taper biases the peak low
    n_fft = 64 * len(y)
    spec = np.abs(np.fft.rfft(y, n_fft))
    freqs = np.fft.rfftfreq(n_fft, dt) * 2 * math.pi
    spec[0] = 0.0
    jf = freqs[int(np.argmax(spec))] / 2
    ambiguous = abs(jf - j12) > tol * j12
    return J12Estimate(j12, jf, t_max, ambiguous)
