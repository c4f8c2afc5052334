"""Single-excitation dynamics of emitters coupled locally to the finite lattice bath."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .lattice import FiniteLattice, LatticeError


class IntegrationError(ArithmeticError):
    """Raised when the propagated state stops being finite."""


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EmitterSpec:
    site: int
    omega: float = 0.0
    g: float = 0.5
    gamma0: float = 0.0

    def __post_init__(self):
        if self.g < 0:
            raise ValueError("g must be >= 0")
        if self.gamma0 < 0:
            raise ValueError("gamma0 must be >= 0")


@dataclass(frozen=True, eq=False)
class CoupledSystem:
    """Emitter amplitudes come first in the state vector, then the lattice sites."""

    lattice: FiniteLattice
    emitters: tuple
    H: sp.csr_matrix

    @property
    def n_emitters(self) -> int:
        return len(self.emitters)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def is_hermitian(self) -> bool:
        diff = self.H - self.H.getH()
        return diff.nnz == 0 or float(np.abs(diff.data).max()) < 1e-14


def assemble(lattice: FiniteLattice, emitters: Sequence[EmitterSpec]) -> CoupledSystem:
    """Sparse single-excitation Hamiltonian of emitters plus bath."""
    emitters = tuple(emitters)
    sites = [e.site for e in emitters]
    if len(set(sites)) != len(sites):
        raise LatticeError("two emitters on one site")
    n_e, n = len(emitters), lattice.n_sites
    for s in sites:
        if not 0 <= s < n:
            raise LatticeError(f"emitter site {s} outside lattice of {n} sites")
    idx = np.arange(n_e)
    site_idx = n_e + np.asarray(sites, dtype=np.int64)
    g = np.array([e.g for e in emitters], dtype=complex)
    diag = np.array([e.omega - 0.5j * e.gamma0 for e in emitters], dtype=complex)
    coupling = sp.coo_matrix(
        (np.concatenate([g, g, diag]),
         (np.concatenate([idx, site_idx, idx]), np.concatenate([site_idx, idx, idx]))),
        shape=(n_e + n, n_e + n),
    )
    H = (sp.block_diag([sp.csr_matrix((n_e, n_e)), lattice.H], format="csr") + coupling).tocsr()
    H.sum_duplicates()
    H.sort_indices()
    return CoupledSystem(lattice, emitters, H)


@dataclass
class SystemState:
    vector: np.ndarray
    n_emitters: int
    t: float = 0.0

    @property
    def emitters(self) -> np.ndarray:
        return self.vector[: self.n_emitters]

    @property
    def sites(self) -> np.ndarray:
        return self.vector[self.n_emitters:]

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.vector, self.vector).real)

    @property
    def photon_population(self) -> float:
        s = self.sites
        return float(np.vdot(s, s).real)


def single_excited(system: CoupledSystem, j: int = 0) -> SystemState:
    if not 0 <= j < system.n_emitters:
        raise IndexError(f"no emitter {j}")
    v = np.zeros(system.dim, dtype=complex)
    v[j] = 1.0
    return SystemState(v, system.n_emitters)


def vacuum_photon(system: CoupledSystem, site: int) -> SystemState:
    """All emitters in the ground state, one photon on ``site``."""
    v = np.zeros(system.dim, dtype=complex)
    v[system.n_emitters + site] = 1.0
    return SystemState(v, system.n_emitters)


@dataclass
class Trajectory:
    times: np.ndarray
    emitter_amplitudes: np.ndarray  # (T, N_e)
    photon_population: np.ndarray
    norm: np.ndarray
    energy: np.ndarray
    snapshots: dict = field(default_factory=dict)
    dt: float = 0.0

    @property
    def emitter_populations(self) -> np.ndarray:
        return np.abs(self.emitter_amplitudes) ** 2

    @property
    def concurrence(self) -> np.ndarray:
        if self.emitter_amplitudes.shape[1] != 2:
            raise ValueError("concurrence needs exactly two emitters")
        a = self.emitter_amplitudes
        return 2.0 * np.abs(a[:, 0] * np.conj(a[:, 1]))


def _taylor4_step(H: sp.csr_matrix, psi: np.ndarray, h: float) -> np.ndarray:
    # classical RK4 applied to the linear system dpsi/dt = -iH psi
    k = psi
    out = psi.copy()
    for order in range(1, 5):
        k = (-1j * h / order) * (H @ k)
        out += k
    return out


def _expectation(H, psi) -> float:
    return float(np.vdot(psi, H @ psi).real)


def _propagate(system, psi0, t0, checkpoints, dt, on_checkpoint):
    psi = psi0
    t = t0
    for tc in checkpoints:
        span = tc - t
        if span > 0:
            n = max(1, math.ceil(span / dt - 1e-9))
            h = span / n
            # a blow-up is caught by the finiteness check below
            with np.errstate(over="ignore", invalid="ignore"):
                for _ in range(n):
                    psi = _taylor4_step(system.H, psi, h)
            if not np.all(np.isfinite(psi)):
                raise IntegrationError(f"non-finite amplitudes at t={tc:g}; reduce the step (dt={dt:g})")
        t = tc
        on_checkpoint(t, psi)
    return psi


def evolve(system: CoupledSystem, initial: SystemState, t_final: float,
           sample_times=None, snapshot_times=(), dt: float = 0.02,
           n_samples: int = 200, halving_check: bool = False, halving_tol: float = 1e-6,
           track_energy: bool = True) -> Trajectory:
    """Integrate i dpsi/dt = H psi with fixed-step RK4 up to ``t_final``.

    Observables are recorded at ``sample_times`` (default: ``n_samples`` uniform
    points in [t0, t0 + t_final]) and full states at ``snapshot_times``. The
    step is shrunk slightly so that every recorded time is hit exactly.
    """
    if t_final <= 0:
        raise ValueError("t_final must be > 0")
    if abs(initial.norm2 - 1.0) > 1e-9:
        raise ValueError("initial state must be normalized")
    if initial.vector.shape != (system.dim,):
        raise ValueError("state does not match system dimension")
    t0 = initial.t
    if sample_times is None:
        sample_times = t0 + np.linspace(0.0, t_final, n_samples)
    sample_times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(sample_times) <= 0):
        raise ValueError("sample times must be strictly increasing")
    snapshot_times = np.asarray(snapshot_times, dtype=float)
    if np.any(sample_times < t0) or np.any(sample_times > t0 + t_final + 1e-12) or np.any(
            snapshot_times > t0 + t_final + 1e-12):
        raise ValueError("requested times outside the integration window")
    checkpoints = np.union1d(sample_times, snapshot_times)
    sample_set = set(sample_times.tolist())
    snap_set = set(snapshot_times.tolist())
    n_e = system.n_emitters

    rec = {"t": [], "amp": [], "ph": [], "norm": [], "en": []}
    snaps = {}

    def record(t, psi):
        if t in sample_set:
            rec["t"].append(t)
            rec["amp"].append(psi[:n_e].copy())
            rec["ph"].append(float(np.vdot(psi[n_e:], psi[n_e:]).real))
            rec["norm"].append(float(np.vdot(psi, psi).real))
            rec["en"].append(_expectation(system.H, psi) if track_energy else np.nan)
        if t in snap_set:
            snaps[t] = SystemState(psi.copy(), n_e, t)

    _propagate(system, initial.vector.astype(complex), t0, checkpoints, dt, record)
    traj = Trajectory(np.array(rec["t"]), np.array(rec["amp"]).reshape(-1, n_e),
                      np.array(rec["ph"]), np.array(rec["norm"]), np.array(rec["en"]), snaps, dt)
    if halving_check:
        # halve the step actually taken, which checkpoint spacing may already cap below dt
        gaps = np.diff(np.concatenate([[t0], checkpoints]))
        h_used = min(dt, float(gaps[gaps > 0].max()))
        fine = evolve(system, initial, t_final, sample_times, (), h_used / 2, halving_check=False,
                      track_energy=False)
        dev = float(np.max(np.abs(fine.emitter_populations - traj.emitter_populations), initial=0.0))
        dev = max(dev, float(np.max(np.abs(fine.photon_population - traj.photon_population))))
        if dev > halving_tol:
            raise IntegrationError(f"step halving changed populations by {dev:.3g} > {halving_tol:g}")
    return traj


def concurrence(state) -> float:
    """2|C1 C2*| for a two-emitter state (SystemState or amplitude pair)."""
    amps = state.emitters if isinstance(state, SystemState) else np.asarray(state)
    if amps.shape != (2,):
        raise ValueError(f"concurrence needs exactly two emitters, got {amps.shape[0] if amps.ndim else 0}")
    return float(2.0 * abs(amps[0] * np.conj(amps[1])))


@dataclass(frozen=True)
class AngularProfile:
    alpha: np.ndarray  # bin centres
    probability: np.ndarray


def _facet_plane(lattice: FiniteLattice, facet: str):
    """In-plane (horizontal, vertical) coordinates of the sites on a perp/par facet."""
    mask = lattice.facet_mask(facet)
    r_par, r_perp, z = lattice.positions.T
    if facet.startswith("perp"):
        return mask, r_par, z
    if facet.startswith("par"):
        return mask, r_perp, z
    raise LatticeError("angular_profile is defined on perp/par facets")


def angular_profile(lattice: FiniteLattice, state, center_site: int, radius: float = 20.0,
                    width: float = 2.0, n_bins: int = 36, facet: str = "perp-") -> AngularProfile:
    """Photonic probability in an annulus around ``center_site``, binned by polar angle.

    The angle is measured in the facet plane from its horizontal axis towards +z.
    Bins sum to the fraction of the photonic population inside the annulus.
    """
    amps = state.sites if isinstance(state, SystemState) else np.asarray(state)
    mask, h, v = _facet_plane(lattice, facet)
    dh, dv = h - h[center_site], v - v[center_site]
    hf, vf = h[mask], v[mask]
    outer = radius + width / 2
    if (hf.min() > h[center_site] - outer or hf.max() < h[center_site] + outer
            or vf.min() > v[center_site] - outer or vf.max() < v[center_site] + outer):
        raise LatticeError("annulus does not fit inside the facet")
    dist = np.hypot(dh, dv)
    sel = mask & (np.abs(dist - radius) <= width / 2)
    if not np.any(sel):
        raise LatticeError("empty annulus")
    pop = np.abs(amps) ** 2
    total = pop.sum()
    alpha = np.mod(np.arctan2(dv[sel], dh[sel]), 2 * math.pi)
    edges = np.linspace(0.0, 2 * math.pi, n_bins + 1)
    hist, _ = np.histogram(alpha, bins=edges, weights=pop[sel])
    prob = hist / total if total > 0 else hist
    return AngularProfile(0.5 * (edges[1:] + edges[:-1]), prob)


@dataclass(frozen=True)
class Timescales:
    tau: float
    t_round: float

    @property
    def regime(self) -> str:
        if self.tau < self.t_round:
            return "dissipative"
        return "cavity"


def timescales(g: float, path_length: float, J: float = 1.0) -> Timescales:
    """Order-of-magnitude decay time J/g^2 and round-trip time l/J (lattice constant 1)."""
    tau = math.inf if g == 0 else J / g**2
    return Timescales(tau, path_length / J)
