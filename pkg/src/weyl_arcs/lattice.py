"""Weyl bath on the cubic two-sublattice model.

The same bond table feeds three representations: the 2x2 bulk Bloch
Hamiltonian, the N_s x N_s slab Hamiltonian (finite along e_perp), and a
sparse real-space matrix for finite blocks.

Coordinates: sites sit at integer (x, y, z); sublattice A has x + y even.
The rotated in-plane axes are e_par = (x + y)/sqrt(2) and
e_perp = (x - y)/sqrt(2), so a site is also labelled by the integers
s = x + y and u = x - y (s = u mod 2). Lines of constant u (constant s)
contain a single sublattice, which is what makes the facets clean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)

PAULI = np.array(
    [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
)

# (hopping index, displacement) for a^dag_r a_{r+delta} with coefficient -t.
# A -> B nearest neighbours in the layer.
NN_FROM_A = (
    (0, (1, 0, 0)),
    (1, (-1, 0, 0)),
    (2, (0, 1, 0)),
    (3, (0, -1, 0)),
)
# Same-sublattice bonds: vertical and next-nearest neighbours in the layer.
SAME_A = ((4, (0, 0, 1)), (6, (1, 1, 0)), (7, (1, -1, 0)))
SAME_B = ((5, (0, 0, 1)), (8, (1, 1, 0)), (9, (1, -1, 0)))

_TIE_TOL = 1e-12


class LatticeError(ValueError):
    """Invalid lattice construction request."""


@dataclass(frozen=True)
class ModelParams:
    """Hopping amplitudes |t_1..t_10|, their phases, staggered mass and onsite energy.

    Energies are in units of J, the lattice constant is 1.
    """

    amplitudes: tuple[float, ...]
    phases: tuple[float, ...]
    m: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        amps = tuple(float(a) for a in self.amplitudes)
        if len(amps) != 10 or len(self.phases) != 10:
            raise LatticeError("need exactly 10 amplitudes and 10 phases")
        if any(a < 0 for a in amps):
            raise LatticeError("hopping amplitudes must be non-negative")
        phases = tuple(float(p) % TWO_PI for p in self.phases)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "m", float(self.m))
        object.__setattr__(self, "eps", float(self.eps))

    @classmethod
    def simplified(cls, J=1.0, Jprime=0.0, m=0.0, phi=0.0, eps=0.0) -> "ModelParams":
        """The reduced parameter set (J, J', m, phi) used throughout."""
        amps = (J,) * 6 + (Jprime,) * 4
        phases = (phi, math.pi / 2, 0.0, 0.0, 0.0, math.pi, 0.0, math.pi, math.pi, 0.0)
        return cls(amps, phases, m, eps)

    @property
    def hoppings(self) -> np.ndarray:
        """Complex hoppings t_j = |t_j| exp(i phi_j)."""
        return np.array(self.amplitudes) * np.exp(1j * np.array(self.phases))

    @property
    def is_type_one(self) -> bool:
        t, p = self.amplitudes, self.phases

        def antiphase(i, j):
            diff = (p[i] - p[j]) % TWO_PI
            return abs(diff - math.pi) < _TIE_TOL

        return (
            antiphase(4, 5)
            and antiphase(6, 8)
            and antiphase(7, 9)
            and abs(t[4] - t[5]) < _TIE_TOL
            and abs(t[6] - t[8]) < _TIE_TOL
            and abs(t[7] - t[9]) < _TIE_TOL
        )

    def to_dict(self) -> dict:
        out = {"epsilon": self.eps, "m": self.m}
        for i, (a, p) in enumerate(zip(self.amplitudes, self.phases), start=1):
            out[f"t{i}"] = a
            out[f"phi{i}"] = p
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        """Inverse of :meth:`to_dict`; also accepts the reduced J/Jprime/phi keys."""
        if "t1" in data:
            amps = [data[f"t{i}"] for i in range(1, 11)]
            phases = [data.get(f"phi{i}", 0.0) for i in range(1, 11)]
            return cls(amps, phases, data.get("m", 0.0), data.get("epsilon", 0.0))
        phi = data.get("phi", 0.0)
        if "phi_pi_units" in data:
            phi = math.pi * data["phi_pi_units"]
        return cls.simplified(
            data.get("J", 1.0), data.get("Jprime", 0.0), data.get("m", 0.0), phi,
            data.get("epsilon", 0.0),
        )

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


class BlochData(NamedTuple):
    d0: np.ndarray
    d: np.ndarray


# --------------------------------------------------------------------------
# Bulk
# --------------------------------------------------------------------------

def _phase(k, delta):
    return np.exp(1j * (k[..., 0] * delta[0] + k[..., 1] * delta[1] + k[..., 2] * delta[2]))


def _bulk_terms(params: ModelParams, k):
    """S = sum t e^{ik.delta} over A->B bonds, and the diagonal AA, BB entries."""
    t = params.hoppings
    k = np.asarray(k, dtype=float)
    S = sum(t[i] * _phase(k, d) for i, d in NN_FROM_A)
    AA = params.eps - params.m - sum(2 * np.real(t[i] * _phase(k, d)) for i, d in SAME_A)
    BB = params.eps + params.m - sum(2 * np.real(t[i] * _phase(k, d)) for i, d in SAME_B)
    return S, AA, BB


def d_vector(params: ModelParams, k) -> BlochData:
    """Return (d0, d) with H(k) = d0 + d.sigma. ``k`` has shape (..., 3)."""
    S, AA, BB = _bulk_terms(params, k)
    d = np.stack([-S.real, S.imag, 0.5 * (AA - BB)], axis=-1)
    return BlochData(0.5 * (AA + BB), d)


def d_jacobian(params: ModelParams, k) -> np.ndarray:
    """Analytic derivatives, ``out[..., a, mu] = d(d_a)/d(k_mu)``."""
    t = params.hoppings
    k = np.asarray(k, dtype=float)
    out = np.zeros(k.shape[:-1] + (3, 3))
    for i, delta in NN_FROM_A:
        dS = 1j * t[i] * _phase(k, delta)
        for mu in range(3):
            if delta[mu]:
                out[..., 0, mu] -= (dS * delta[mu]).real
                out[..., 1, mu] += (dS * delta[mu]).imag
    for table, sign in ((SAME_A, 1.0), (SAME_B, -1.0)):
        for i, delta in table:
            # d/dk of -2 Re(t e^{ik.delta}) is 2 Im(t e^{ik.delta}) delta
            g = 2 * np.imag(t[i] * _phase(k, delta))
            for mu in range(3):
                if delta[mu]:
                    out[..., 2, mu] += 0.5 * sign * g * delta[mu]
    return out


def bloch_bulk(params: ModelParams, k) -> np.ndarray:
    """2x2 Bloch Hamiltonian d0 + d.sigma, shape (..., 2, 2)."""
    d0, d = d_vector(params, k)
    H = np.einsum("...a,aij->...ij", d.astype(complex), PAULI)
    H[..., 0, 0] += d0
    H[..., 1, 1] += d0
    return H


def bloch_bulk_periodic(params: ModelParams, k) -> np.ndarray:
    """Bloch matrix in the cell-periodic basis (B phase measured from its A partner).

    ``bloch_bulk`` uses site positions in the phases, so H(k + G) = V H(k) V^dag
    with V = diag(1, e^{i G_x}); this form is strictly periodic in k.
    """
    H = bloch_bulk(params, k)
    ph = np.exp(-1j * np.asarray(k, float)[..., 0])
    H[..., 0, 1] *= ph
    H[..., 1, 0] *= np.conj(ph)
    return H


def bloch_bulk_derivative(params: ModelParams, k) -> np.ndarray:
    """dH/dk_mu, shape (..., 3, 2, 2); the identity part d0 is irrelevant for curvature
    but included for completeness via finite sums of the same bond table."""
    jac = d_jacobian(params, k)
    dH = np.einsum("...am,aij->...mij", jac.astype(complex), PAULI)
    t = params.hoppings
    k = np.asarray(k, dtype=float)
    for table in (SAME_A, SAME_B):
        for i, delta in table:
            g = np.imag(t[i] * _phase(k, delta))
            for mu in range(3):
                if delta[mu]:
                    dH[..., mu, 0, 0] += g * delta[mu]
                    dH[..., mu, 1, 1] += g * delta[mu]
    return dH


def bulk_energies(params: ModelParams, k) -> np.ndarray:
    """Closed-form bands d0 -+ |d|, ascending, shape (..., 2)."""
    d0, d = d_vector(params, k)
    r = np.linalg.norm(d, axis=-1)
    return np.stack([d0 - r, d0 + r], axis=-1)


def _fold_interval(x):
    return x - TWO_PI * np.round(x / TWO_PI)


def fold_bulk(k) -> np.ndarray:
    """Map k onto the canonical cell |kx| + |ky| <= pi, |kz| <= pi.

    Boundary ties go to kx >= 0, then ky >= 0, then the larger kx.
    """
    k = np.asarray(k, dtype=float)
    flat = k.reshape(-1, 3)
    out = np.empty_like(flat)
    for n, (kx, ky, kz) in enumerate(flat):
        p = _fold_interval(kx + ky)
        q = _fold_interval(kx - ky)
        ps = [p] if abs(abs(p) - math.pi) > _TIE_TOL else [math.pi, -math.pi]
        qs = [q] if abs(abs(q) - math.pi) > _TIE_TOL else [math.pi, -math.pi]
        cands = [((a + b) / 2, (a - b) / 2) for a in ps for b in qs]
        kx_, ky_ = max(cands, key=lambda c: (c[0] >= -_TIE_TOL, c[1] >= -_TIE_TOL, c[0]))
        z = _fold_interval(kz)
        if abs(z + math.pi) < _TIE_TOL:
            z = math.pi
        out[n] = (kx_, ky_, z)
    return out.reshape(k.shape)


def fold_surface(k_par, k_z):
    """Surface-BZ representative: |k_par| <= pi/sqrt(2), |k_z| <= pi."""
    period = SQRT2 * math.pi
    kp = np.asarray(k_par, dtype=float)
    kp = kp - period * np.round(kp / period)
    return kp, _fold_interval(np.asarray(k_z, dtype=float))


def project_to_surface(k) -> tuple[float, float]:
    """Projection of a bulk k onto the (k_par, k_z) surface BZ."""
    k = np.asarray(k, dtype=float)
    kp, kz = fold_surface((k[..., 0] + k[..., 1]) / SQRT2, k[..., 2])
    return kp, kz


RECIPROCAL = np.array(
    [[math.pi, math.pi, 0.0], [math.pi, -math.pi, 0.0], [0.0, 0.0, TWO_PI]]
)


# --------------------------------------------------------------------------
# Slab (finite along e_perp, periodic along e_par and z)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SlabSpec:
    """Slab of ``n_s`` rows of constant u; both facets share ``termination``.

    Basis order follows the block form: all A rows (ascending u), then all B rows.
    """

    params: ModelParams
    n_s: int
    termination: str = "A"

    def __post_init__(self):
        if self.n_s < 3 or self.n_s % 2 == 0:
            raise LatticeError("N_s must be odd and >= 3")
        if self.termination not in ("A", "B"):
            raise LatticeError("termination must be 'A' or 'B'")

    @property
    def edge_band(self) -> int:
        """0-based index of the edge band, i.e. band (N_s + 1)/2 counting from 1."""
        return (self.n_s - 1) // 2

    @property
    def row_u(self) -> np.ndarray:
        """u coordinate of every basis orbital (first facet at u = 0 or 1)."""
        offset = 0 if self.termination == "A" else 1
        u = np.arange(self.n_s) + offset
        a_rows = u[u % 2 == 0]
        b_rows = u[u % 2 == 1]
        return np.concatenate([a_rows, b_rows])

    @property
    def row_sublattice(self) -> np.ndarray:
        return (self.row_u % 2).astype(np.int8)

    @property
    def spatial_order(self) -> np.ndarray:
        """Permutation sorting the basis by u."""
        return np.argsort(self.row_u, kind="stable")


def _slab_bonds(spec: SlabSpec):
    """(i, j, hopping index, conj flag, delta) for every bond row i -> row j."""
    u = spec.row_u
    index = {int(uu): n for n, uu in enumerate(u)}
    bonds = []
    for i, ui in enumerate(u):
        sub = ui % 2
        tables = [NN_FROM_A, SAME_A] if sub == 0 else [SAME_B]
        for table in tables:
            for h, delta in table:
                du = delta[0] - delta[1]
                j = index.get(int(ui + du))
                if j is None:
                    continue
                bonds.append((i, j, h, delta))
    return bonds


def slab_bloch(spec: SlabSpec, k_par, k_z) -> np.ndarray:
    """Slab Bloch Hamiltonian(s), shape (..., N_s, N_s), broadcasting k_par with k_z."""
    k_par, k_z = np.broadcast_arrays(np.asarray(k_par, float), np.asarray(k_z, float))
    t = spec.params.hoppings
    n = spec.n_s
    H = np.zeros(k_par.shape + (n, n), dtype=complex)
    diag = spec.params.eps + np.where(spec.row_sublattice == 0, -spec.params.m, spec.params.m)
    H[..., np.arange(n), np.arange(n)] = diag
    for i, j, h, delta in _slab_bonds(spec):
        phase = np.exp(1j * (k_par * (delta[0] + delta[1]) / SQRT2 + k_z * delta[2]))
        amp = -t[h] * phase
        H[..., i, j] += amp
        H[..., j, i] += np.conj(amp)
    return H


def slab_bloch_derivative(spec: SlabSpec, k_par, k_z) -> np.ndarray:
    """(dH/dk_par, dH/dk_z), shape (..., 2, N_s, N_s)."""
    k_par, k_z = np.broadcast_arrays(np.asarray(k_par, float), np.asarray(k_z, float))
    t = spec.params.hoppings
    n = spec.n_s
    dH = np.zeros(k_par.shape + (2, n, n), dtype=complex)
    for i, j, h, delta in _slab_bonds(spec):
        dpar = (delta[0] + delta[1]) / SQRT2
        dz = delta[2]
        phase = np.exp(1j * (k_par * dpar + k_z * dz))
        amp = -t[h] * phase
        for mu, c in ((0, dpar), (1, dz)):
            if c:
                dH[..., mu, i, j] += 1j * c * amp
                dH[..., mu, j, i] += np.conj(1j * c * amp)
    return dH


# --------------------------------------------------------------------------
# Finite lattices
# --------------------------------------------------------------------------

FACETS = ("perp-", "perp+", "par-", "par+", "z-", "z+")


@dataclass(frozen=True)
class BoxGeometry:
    """All integer (s, u, z) with s = u (mod 2) inside the given inclusive ranges.

    Facet names: ``perp-`` is the (0 -1 0) facet (smallest u), ``perp+`` the (010),
    ``par-`` the (-1 0 0) facet (smallest s), ``par+`` the (100), ``z-``/``z+``.
    """

    s_range: tuple[int, int]
    u_range: tuple[int, int]
    n_z: int
    kind: str = "box"

    def __post_init__(self):
        (s0, s1), (u0, u1) = self.s_range, self.u_range
        if s1 - s0 < 1 or u1 - u0 < 1 or self.n_z < 1:
            raise LatticeError("geometry extents must be >= 2 in plane and >= 1 along z")

    @property
    def z_mid(self) -> int:
        return (self.n_z - 1) // 2

    def facet_sublattice(self, facet: str) -> str | None:
        coord = {
            "perp-": self.u_range[0], "perp+": self.u_range[1],
            "par-": self.s_range[0], "par+": self.s_range[1],
        }.get(facet)
        if coord is None:
            return None
        return "A" if coord % 2 == 0 else "B"

    def facet_distance(self, coords: np.ndarray, facet: str) -> np.ndarray:
        s, u, z = coords.T
        dist = {
            "perp-": u - self.u_range[0], "perp+": self.u_range[1] - u,
            "par-": s - self.s_range[0], "par+": self.s_range[1] - s,
            "z-": z, "z+": self.n_z - 1 - z,
        }.get(facet)
        if dist is None:
            raise LatticeError(f"unknown facet {facet!r}")
        return dist

    def sites(self) -> np.ndarray:
        """(N, 3) array of (s, u, z), ordered by u, then s, then z."""
        (s0, s1), (u0, u1) = self.s_range, self.u_range
        rows = []
        z = np.arange(self.n_z)
        for u in range(u0, u1 + 1):
            s_vals = np.arange(s0 + ((s0 - u) % 2), s1 + 1, 2)
            if s_vals.size == 0:
                continue
            S, Z = np.meshgrid(s_vals, z, indexing="ij")
            rows.append(np.stack([S.ravel(), np.full(S.size, u), Z.ravel()], axis=1))
        return np.concatenate(rows).astype(np.int64)


@dataclass(frozen=True)
class CubicBlock:
    """Axis-aligned block x in [0, nx), y in [0, ny), z in [0, nz).

    Facets are named ``x-``, ``x+``, ``y-``, ``y+``, ``z-``, ``z+``.
    """

    nx: int
    ny: int
    n_z: int
    kind: str = "cubic_block"

    def __post_init__(self):
        if min(self.nx, self.ny) < 2 or self.n_z < 1:
            raise LatticeError("geometry extents must be >= 2 in plane and >= 1 along z")

    @property
    def s_range(self):
        return (0, self.nx + self.ny - 2)

    @property
    def u_range(self):
        return (-(self.ny - 1), self.nx - 1)

    def sites(self) -> np.ndarray:
        X, Y, Z = np.meshgrid(np.arange(self.nx), np.arange(self.ny), np.arange(self.n_z), indexing="ij")
        coords = np.stack([(X + Y).ravel(), (X - Y).ravel(), Z.ravel()], axis=1)
        order = np.lexsort((coords[:, 2], coords[:, 0], coords[:, 1]))
        return coords[order].astype(np.int64)

    def facet_distance(self, coords: np.ndarray, facet: str) -> np.ndarray:
        s, u, z = coords.T
        x, y = (s + u) // 2, (s - u) // 2
        dist = {
            "x-": x, "x+": self.nx - 1 - x, "y-": y, "y+": self.ny - 1 - y,
            "z-": z, "z+": self.n_z - 1 - z,
        }.get(facet)
        if dist is None:
            raise LatticeError(f"unknown facet {facet!r}")
        return dist


def rect_block(n_par: int, n_perp: int, n_z: int, terminations=("A", None)) -> BoxGeometry:
    """Block with ``n_par`` sites per row, ``n_perp`` rows and ``n_z`` layers.

    ``terminations`` gives the sublattice of the (0 -1 0) and (010) facets; ``None``
    for the second one means "whatever the parity of n_perp gives".
    """
    if min(n_par, n_perp) < 2 or n_z < 1:
        raise LatticeError("extents must be >= 2")
    first, second = terminations
    if first not in ("A", "B"):
        raise LatticeError("first termination must be 'A' or 'B'")
    u0 = 0 if first == "A" else 1
    u1 = u0 + n_perp - 1
    implied = "A" if u1 % 2 == 0 else "B"
    if second is not None and second != implied:
        raise LatticeError(
            f"terminations {first}/{second} impossible with {n_perp} rows "
            f"(an {'odd' if n_perp % 2 else 'even'} perp extent gives {first}/{implied})"
        )
    return BoxGeometry((u0, u0 + 2 * n_par - 1), (u0, u1), n_z, kind="rect_block")


def slab_block(n_par: int = 63, n_perp: int = 33, n_z: int = 63, termination="A") -> BoxGeometry:
    """Finite slab with both perp facets on one sublattice (odd ``n_perp``)."""
    if n_perp % 2 == 0:
        raise LatticeError("slab_block needs an odd number of rows")
    g = rect_block(n_par, n_perp, n_z, (termination, termination))
    return replace(g, kind="slab_block")


def braid_box(n_side: int, n_z: int, n_side_perp: int | None = None) -> BoxGeometry:
    """Box whose perp facets are A-terminated and whose par facets are B-terminated.

    Each perp facet row holds ``n_side`` sites, each par facet column
    ``n_side_perp`` (default: equal faces).
    """
    n_perp = n_side if n_side_perp is None else n_side_perp
    if min(n_side, n_perp) < 2:
        raise LatticeError("extents must be >= 2")
    return BoxGeometry((-1, 2 * n_side - 1), (0, 2 * n_perp), n_z, kind="braid_box")


@dataclass(frozen=True, eq=False)
class FiniteLattice:
    """Site table plus sparse hopping matrix of a finite block."""

    params: ModelParams
    geometry: BoxGeometry
    coords: np.ndarray  # (N, 3) int (s, u, z)
    H: sp.csr_matrix
    absorbers: tuple = field(default=())

    @property
    def n_sites(self) -> int:
        return self.coords.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        s, u, z = self.coords.T
        return np.stack([(s + u) // 2, (s - u) // 2, z], axis=1)

    @property
    def positions(self) -> np.ndarray:
        """Cartesian positions in the rotated frame (r_par, r_perp, z)."""
        s, u, z = self.coords.T.astype(float)
        return np.stack([s / SQRT2, u / SQRT2, z], axis=1)

    @property
    def sublattice(self) -> np.ndarray:
        return (self.coords[:, 0] % 2).astype(np.int8)

    def site_index(self, s: int, u: int, z: int) -> int:
        lookup = self._lookup()
        try:
            return lookup[(int(s), int(u), int(z))]
        except KeyError:
            raise LatticeError(f"no site at (s={s}, u={u}, z={z})") from None

    def _lookup(self):
        cache = self.__dict__.get("_lookup_cache")
        if cache is None:
            cache = {tuple(map(int, c)): n for n, c in enumerate(self.coords)}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache

    def facet_mask(self, facet: str, depth: int = 1) -> np.ndarray:
        """Sites within ``depth`` coordinate steps of a facet plane."""
        return self.facet_distance(facet) < depth

    def facet_distance(self, facet: str) -> np.ndarray:
        """Integer distance of every site from a facet plane (0 on the facet)."""
        return self.geometry.facet_distance(self.coords, facet)

    def center_site(self, facet: str = "perp-") -> int:
        """Central site of a facet; lower-middle one for even extents."""
        mask = self.facet_mask(facet)
        c = self.coords[mask]
        if facet.startswith("perp"):
            line = np.unique(c[:, 0])
        elif facet.startswith("par"):
            line = np.unique(c[:, 1])
        else:
            raise LatticeError("center_site is defined for perp/par facets")
        mid = line[(line.size - 1) // 2]
        zs = np.unique(c[:, 2])
        zmid = zs[(zs.size - 1) // 2]
        if facet.startswith("perp"):
            return self.site_index(mid, c[0, 1], zmid)
        return self.site_index(c[0, 0], mid, zmid)

    @property
    def is_hermitian(self) -> bool:
        diff = self.H - self.H.getH()
        return diff.nnz == 0 or np.abs(diff.data).max() < 1e-14


def _encode(coords, shape):
    s, u, z = coords.T
    return ((s - shape[0]) * shape[3] + (u - shape[1])) * shape[4] + (z - shape[2])


def build_finite(params: ModelParams, geometry: BoxGeometry) -> FiniteLattice:
    """Real-space Hamiltonian of a finite block, open boundaries everywhere."""
    coords = geometry.sites()
    n = coords.shape[0]
    (s0, s1), (u0, u1) = geometry.s_range, geometry.u_range
    # dense integer keys for vectorized neighbour lookup
    nu, nz = u1 - u0 + 3, geometry.n_z + 2
    base = (s0 - 1, u0 - 1, -1)
    shape = base + (nu, nz)
    keys = _encode(coords, shape)
    order = np.argsort(keys)
    sorted_keys = keys[order]
    t = params.hoppings
    sub = coords[:, 0] % 2

    rows, cols, vals = [], [], []
    for n_sub, tables in ((0, (NN_FROM_A, SAME_A)), (1, (SAME_B,))):
        idx = np.nonzero(sub == n_sub)[0]
        for table in tables:
            for h, (dx, dy, dz) in table:
                if t[h] == 0:
                    continue
                tgt = coords[idx] + np.array([dx + dy, dx - dy, dz])
                inside = (
                    (tgt[:, 0] >= s0) & (tgt[:, 0] <= s1)
                    & (tgt[:, 1] >= u0) & (tgt[:, 1] <= u1)
                    & (tgt[:, 2] >= 0) & (tgt[:, 2] < geometry.n_z)
                )
                tk = _encode(tgt[inside], shape)
                pos = np.searchsorted(sorted_keys, tk)
                pos = np.minimum(pos, n - 1)
                found = sorted_keys[pos] == tk
                i = idx[inside][found]
                j = order[pos[found]]
                rows.append(i)
                cols.append(j)
                vals.append(np.full(i.size, -t[h], dtype=complex))
    r = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    v = np.concatenate(vals) if vals else np.zeros(0, complex)
    onsite = params.eps + np.where(sub == 0, -params.m, params.m)
    all_r = np.concatenate([r, c, np.arange(n)])
    all_c = np.concatenate([c, r, np.arange(n)])
    all_v = np.concatenate([v, np.conj(v), onsite.astype(complex)])
    H = sp.coo_matrix((all_v, (all_r, all_c)), shape=(n, n)).tocsr()
    H.sum_duplicates()
    H.sort_indices()
    return FiniteLattice(params, geometry, coords, H)


def apply_absorbers(
    lattice: FiniteLattice, facets: Sequence[str], gamma: float = 1.0, n_layers: int = 1
) -> FiniteLattice:
    """Add -i*gamma_j/2 to the onsite energies of the sites near the selected facets.

    Layer j (0 = outermost) gets gamma*(n_layers - j)/n_layers; where several
    facets overlap the largest rate wins.
    """
    if gamma < 0:
        raise LatticeError("gamma must be >= 0")
    if n_layers < 1:
        raise LatticeError("n_layers must be >= 1")
    facets = tuple(facets)
    if gamma == 0 or not facets:
        return lattice
    rate = np.zeros(lattice.n_sites)
    for f in facets:
        dist = lattice.facet_distance(f)
        inside = dist < n_layers
        layer_rate = gamma * (n_layers - dist[inside]) / n_layers
        rate[inside] = np.maximum(rate[inside], layer_rate)
    H = (lattice.H - sp.diags(0.5j * rate, format="csr")).tocsr()
    H.sort_indices()
    return replace(lattice, H=H, absorbers=lattice.absorbers + ((facets, gamma, n_layers),))
