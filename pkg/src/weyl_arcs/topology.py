"""Bands, Weyl nodes, Berry curvature and Chern numbers of the bulk and slab models."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .lattice import (
    RECIPROCAL,
    SQRT2,
    ModelParams,
    SlabSpec,
    bloch_bulk,
    bloch_bulk_periodic,
    bloch_bulk_derivative,
    d_jacobian,
    d_vector,
    fold_bulk,
    project_to_surface,
    slab_bloch,
    slab_bloch_derivative,
)

DEGENERACY_TOL = 1e-8


class NearDegeneracyError(ArithmeticError):
    """Curvature or velocity requested where the band touches another one."""


class GaplessError(ArithmeticError):
    """Chern number requested for a gapless 2D spectrum."""


class PhaseBoundaryError(ValueError):
    """Parameters sit on (or within tolerance of) a phase boundary."""


class ChargeError(ArithmeticError):
    """Berry flux through the enclosing sphere is not close to an integer."""


# --------------------------------------------------------------------------
# Diagonalization
# --------------------------------------------------------------------------

def gauge_fix(U: np.ndarray) -> np.ndarray:
    """Rotate every column so its largest-magnitude component is real and positive."""
    U = np.array(U, dtype=complex, copy=True)
    idx = np.argmax(np.abs(U), axis=-2)
    pivot = np.take_along_axis(U, idx[..., None, :], axis=-2)
    mag = np.abs(pivot)
    U *= np.conj(pivot) / mag
    # write the pivot exactly so that the fix is idempotent bit for bit
    np.put_along_axis(U, idx[..., None, :], mag.astype(complex), axis=-2)
    return U


@dataclass(frozen=True)
class EigenDecomposition:
    energies: np.ndarray  # (..., N) ascending
    vectors: np.ndarray  # (..., N, N), columns are bands
    gauge: str = "max-component-real"


def eigensystem(H: np.ndarray) -> EigenDecomposition:
    E, U = np.linalg.eigh(H)
    return EigenDecomposition(E, gauge_fix(U))


def _family(family):
    """Hamiltonian and derivative callables for a bulk ``ModelParams`` or a ``SlabSpec``."""
    if isinstance(family, ModelParams):
        return (lambda k: bloch_bulk(family, k)), (lambda k: bloch_bulk_derivative(family, k))
    if isinstance(family, SlabSpec):
        def h(k):
            k = np.asarray(k, float)
            return slab_bloch(family, k[..., 0], k[..., 1])

        def dh(k):
            k = np.asarray(k, float)
            return slab_bloch_derivative(family, k[..., 0], k[..., 1])
        return h, dh
    raise TypeError(f"unsupported Hamiltonian family {type(family).__name__}")


@dataclass(frozen=True)
class BandStructure:
    k: np.ndarray  # (..., dim)
    energies: np.ndarray  # (..., n_bands)

    @property
    def n_bands(self) -> int:
        return self.energies.shape[-1]


def band_structure(family, k) -> BandStructure:
    """Ascending energies of a bulk (k shape (..., 3)) or slab (k shape (..., 2)) family."""
    k = np.asarray(k, dtype=float)
    if k.size == 0:
        raise ValueError("empty k grid")
    h, _ = _family(family)
    return BandStructure(k, np.linalg.eigvalsh(h(k)))


def surface_grid(n_par: int = 201, n_z: int = 201, endpoint: bool = True):
    """Uniform (k_par, k_z) grid over the surface BZ, shape (n_par, n_z, 2)."""
    kp = np.linspace(-math.pi / SQRT2, math.pi / SQRT2, n_par, endpoint=endpoint)
    kz = np.linspace(-math.pi, math.pi, n_z, endpoint=endpoint)
    KP, KZ = np.meshgrid(kp, kz, indexing="ij")
    return np.stack([KP, KZ], axis=-1)


# --------------------------------------------------------------------------
# Berry curvature
# --------------------------------------------------------------------------

def _band_sign(band) -> int:
    if band in ("-", -1, "lower"):
        return -1
    if band in ("+", 1, "upper"):
        return 1
    raise ValueError(f"band must be '+' or '-', got {band!r}")


def berry_curvature_bulk(params: ModelParams, k, band="-", tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Berry curvature vector of the lower or upper bulk band (two-band closed form).

    Omega^pm_{mu nu} = -+ d . (d_mu d x d_nu d) / (2 |d|^3); the vector has
    components (Omega_yz, Omega_zx, Omega_xy).
    """
    sign = _band_sign(band)
    _, d = d_vector(params, k)
    jac = d_jacobian(params, k)
    norm = np.linalg.norm(d, axis=-1)
    if np.any(norm < tol):
        raise NearDegeneracyError("|d(k)| below tolerance: k sits on a Weyl node")
    pairs = ((1, 2), (2, 0), (0, 1))
    out = np.empty(d.shape)
    for c, (mu, nu) in enumerate(pairs):
        cross = np.cross(jac[..., :, mu], jac[..., :, nu])
        out[..., c] = -sign * np.einsum("...a,...a->...", d, cross) / (2 * norm**3)
    return out


def curvature_sum_over_bands(H: np.ndarray, dH: np.ndarray, pairs, tol: float = DEGENERACY_TOL,
                             bands=None, on_degenerate: str = "raise") -> np.ndarray:
    """General multi-band Berry curvature for every band.

    ``dH`` has shape (..., n_dirs, N, N); returns (..., n_pairs, N) with
    Omega^n_{mu nu} = i sum_{n' != n} [<n|dH_mu|n'><n'|dH_nu|n> - (mu <-> nu)] / (E_n - E_n')^2.
    """
    E, U = np.linalg.eigh(H)
    return curvature_from_eigensystem(E, U, dH, pairs, tol, bands, on_degenerate)


def curvature_from_eigensystem(E: np.ndarray, U: np.ndarray, dH: np.ndarray, pairs,
                               tol: float = DEGENERACY_TOL, bands=None,
                               on_degenerate: str = "raise") -> np.ndarray:
    """Sum-over-bands curvature from a given eigensystem; any column phases are allowed."""
    Ud = np.conj(np.swapaxes(U, -1, -2))
    M = Ud[..., None, :, :] @ dH @ U[..., None, :, :]
    gap = E[..., :, None] - E[..., None, :]
    n = E.shape[-1]
    offdiag = ~np.eye(n, dtype=bool)
    close = (np.abs(gap) < tol) & offdiag
    if bands is not None:
        bands = np.atleast_1d(bands)
        close_sel = close[..., bands, :]
    else:
        close_sel = close
    degenerate = close_sel.any(axis=(-1, -2)) if close_sel.ndim > 1 else close_sel.any()
    if np.any(degenerate) and on_degenerate == "raise":
        raise NearDegeneracyError("requested band is degenerate within tolerance")
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(offdiag & ~close, 1.0 / np.where(offdiag & ~close, gap, 1.0) ** 2, 0.0)
    out = []
    for mu, nu in pairs:
        prod = M[..., mu, :, :] * np.swapaxes(M[..., nu, :, :], -1, -2)
        out.append(-2.0 * np.sum(np.imag(prod) * inv, axis=-1))
    res = np.stack(out, axis=-2)
    if bands is not None:
        res = res[..., bands]
    if on_degenerate == "nan" and np.any(degenerate):
        res = np.where(np.asarray(degenerate)[..., None, None] if res.ndim > 1 else degenerate, np.nan, res)
    return res


def berry_curvature_bulk_general(params: ModelParams, k, band="-", tol: float = DEGENERACY_TOL):
    """Same quantity as :func:`berry_curvature_bulk`, by the sum-over-bands route."""
    sign = _band_sign(band)
    H = bloch_bulk(params, k)
    dH = bloch_bulk_derivative(params, k)
    res = curvature_sum_over_bands(H, dH, ((1, 2), (2, 0), (0, 1)), tol=tol)
    return res[..., 0 if sign < 0 else 1]


def _chunked_slab(fn, k_par, k_z, chunk: int = 1024):
    """Apply ``fn(kp_flat, kz_flat)`` in blocks to bound memory on large grids."""
    k_par, k_z = np.broadcast_arrays(np.asarray(k_par, float), np.asarray(k_z, float))
    shape = k_par.shape
    kp, kz = k_par.ravel(), k_z.ravel()
    parts = [fn(kp[i:i + chunk], kz[i:i + chunk]) for i in range(0, max(kp.size, 1), chunk)]
    out = np.concatenate(parts, axis=0)
    return out.reshape(shape + out.shape[1:])


def berry_curvature_surface(spec: SlabSpec, k_par, k_z, band: int | None = None,
                            tol: float = DEGENERACY_TOL, on_degenerate: str = "raise") -> np.ndarray:
    """Omega_{par z} of slab band ``band`` (0-based, default: edge band).

    With ``on_degenerate='nan'`` degenerate points come back as NaN instead of raising.
    """
    n = spec.edge_band if band is None else band

    def block(kp, kz):
        H = slab_bloch(spec, kp, kz)
        dH = slab_bloch_derivative(spec, kp, kz)
        res = curvature_sum_over_bands(H, dH, ((0, 1),), tol=tol, bands=[n], on_degenerate=on_degenerate)
        return res[..., 0, 0]

    return _chunked_slab(block, k_par, k_z)


def all_band_surface_curvature(spec: SlabSpec, k_par, k_z, tol: float = DEGENERACY_TOL):
    """Omega_{par z} for all N_s bands at each k, shape (..., N_s)."""
    def block(kp, kz):
        H = slab_bloch(spec, kp, kz)
        dH = slab_bloch_derivative(spec, kp, kz)
        return curvature_sum_over_bands(H, dH, ((0, 1),), tol=tol, on_degenerate="nan")[..., 0, :]

    return _chunked_slab(block, k_par, k_z)


def plaquette_curvature(hamiltonian, k, band: int, axes=(0, 1), h: float = 1e-4) -> float:
    """Curvature from the Berry phase around a small square centred at ``k``.

    Independent of any gauge choice; used as a finite-difference check of the
    connection curl.
    """
    k = np.asarray(k, dtype=float)
    e1 = np.zeros_like(k)
    e2 = np.zeros_like(k)
    e1[axes[0]] = h / 2
    e2[axes[1]] = h / 2
    corners = [k - e1 - e2, k + e1 - e2, k + e1 + e2, k - e1 + e2]
    vecs = [np.linalg.eigh(hamiltonian(c))[1][:, band] for c in corners]
    prod = 1.0 + 0j
    for a, b in zip(vecs, vecs[1:] + vecs[:1]):
        prod *= np.vdot(a, b)
    return -np.angle(prod) / h**2


# --------------------------------------------------------------------------
# Weyl nodes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WeylNode:
    k: np.ndarray
    chirality: int
    frequency: float
    velocity_matrix: np.ndarray  # M such that |d(k_W + q)|^2 ~ q.M.q

    @property
    def surface_projection(self) -> tuple[float, float]:
        kp, kz = project_to_surface(self.k)
        return float(kp), float(kz)


def _sphere_rule(n_theta: int, n_phi: int):
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phi = (np.arange(n_phi) + 0.5) * 2 * math.pi / n_phi
    C, P = np.meshgrid(x, phi, indexing="ij")
    S = np.sqrt(1 - C**2)
    normals = np.stack([S * np.cos(P), S * np.sin(P), C], axis=-1)
    weights = np.repeat(w[:, None], n_phi, axis=1) * (2 * math.pi / n_phi)
    return normals, weights


def berry_flux(params: ModelParams, center, radius: float = 0.1, band="-",
               n_theta: int = 48, n_phi: int = 96) -> float:
    """Flux of the bulk Berry curvature through a sphere around ``center``."""
    normals, weights = _sphere_rule(n_theta, n_phi)
    pts = np.asarray(center, float) + radius * normals
    omega = berry_curvature_bulk(params, pts, band)
    return float(np.sum(np.einsum("...a,...a->...", omega, normals) * weights) * radius**2)


def weyl_charge(params: ModelParams, node, radius: float = 0.1, **quad) -> int:
    """Chirality of a node: lower-band Berry flux through a small sphere, in units of 2 pi."""
    k = node.k if isinstance(node, WeylNode) else np.asarray(node, float)
    q = berry_flux(params, k, radius, "-", **quad) / (2 * math.pi)
    c = round(q)
    if abs(q - c) >= 0.1 or c == 0:
        raise ChargeError(f"flux/2pi = {q:.4f} is not a unit charge; shrink the radius")
    return int(c)


def _local_minima(a: np.ndarray) -> np.ndarray:
    mask = np.ones(a.shape, dtype=bool)
    for shift in np.ndindex(3, 3, 3):
        off = tuple(s - 1 for s in shift)
        if off == (0, 0, 0):
            continue
        mask &= a <= np.roll(a, off, axis=(0, 1, 2))
    return np.argwhere(mask)


def _refine_root(fun, jac, x0, tol):
    x = np.array(x0, float)
    for _ in range(50):
        f = fun(x)
        if np.linalg.norm(f) < tol * 1e-3:
            break
        try:
            step = np.linalg.solve(jac(x), f)
        except np.linalg.LinAlgError:
            break
        x = x - step
        if np.linalg.norm(step) > 1.0:
            break
    if np.linalg.norm(fun(x)) < tol:
        return x
    res = optimize.least_squares(fun, x0, jac=jac, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if np.linalg.norm(fun(res.x)) < tol:
        return res.x
    return None


def _dedupe_bulk(points, merge: float):
    out = []
    for p in points:
        f = fold_bulk(p)
        if all(_bulk_distance(f, q) > merge for q in out):
            out.append(f)
    return out


def _bulk_distance(a, b) -> float:
    diff = np.asarray(a) - np.asarray(b)
    best = math.inf
    for n1 in (-1, 0, 1):
        for n2 in (-1, 0, 1):
            for n3 in (-1, 0, 1):
                g = n1 * RECIPROCAL[0] + n2 * RECIPROCAL[1] + n3 * RECIPROCAL[2]
                best = min(best, float(np.linalg.norm(diff - g)))
    return best


def find_weyl_points(params: ModelParams, tol: float = 1e-10, grid: int = 64,
                     merge: float = 1e-4, radius: float = 0.05) -> list[WeylNode]:
    """All band touchings |d(k)| = 0 in the canonical BZ, with chiralities.

    Seeds are the local minima of |d| on a ``grid``^3 mesh of [-pi, pi)^3.
    """
    if not params.is_type_one:
        raise ValueError("Weyl-node search requires type-I parameters")
    ks = np.linspace(-math.pi, math.pi, grid, endpoint=False)
    K = np.stack(np.meshgrid(ks, ks, ks, indexing="ij"), axis=-1)
    norm = np.linalg.norm(d_vector(params, K).d, axis=-1)
    seeds = K[tuple(_local_minima(norm).T)]
    fun = lambda k: d_vector(params, k).d
    jac = lambda k: d_jacobian(params, k)
    roots = []
    for s in seeds:
        r = _refine_root(fun, jac, s, tol)
        if r is not None:
            roots.append(r)
    nodes = []
    for k in _dedupe_bulk(roots, merge):
        on_edge = (abs(abs(k[0]) + abs(k[1]) - math.pi) < 10 * tol
                   or abs(abs(k[2]) - math.pi) < 10 * tol)
        if on_edge:
            warnings.warn(f"Weyl node {k} lies on the BZ boundary; folding decides its image",
                          stacklevel=2)
        r = min(radius, 0.25 * _min_separation(k, nodes_k=[n.k for n in nodes]))
        chi = weyl_charge(params, k, radius=r)
        jm = d_jacobian(params, k)
        d0 = float(d_vector(params, k).d0)
        nodes.append(WeylNode(k, chi, d0, jm.T @ jm))
    # radius check against all found nodes, recomputing charges if a later node was close
    ks_all = [n.k for n in nodes]
    fixed = []
    for n in nodes:
        sep = _min_separation(n.k, [q for q in ks_all if q is not n.k])
        if sep < 4 * radius:
            n = WeylNode(n.k, weyl_charge(params, n.k, radius=0.25 * sep), n.frequency, n.velocity_matrix)
        fixed.append(n)
    fixed.sort(key=lambda n: tuple(np.round(n.k, 9)))
    return fixed


def _min_separation(k, nodes_k) -> float:
    if not nodes_k:
        return math.inf
    return min(_bulk_distance(k, q) for q in nodes_k)


# --------------------------------------------------------------------------
# Dimensional reduction
# --------------------------------------------------------------------------

class PhaseLabel(str, enum.Enum):
    BI = "BI"
    QHI = "QHI"
    WSM1 = "WSM1"
    WSM2 = "WSM2"


def _periodic_bulk(params: ModelParams, k):
    return bloch_bulk_periodic(params, k)


def _bz2d_grid(n: int, k_z: float):
    i = np.arange(n) / n
    I, Jg = np.meshgrid(i, i, indexing="ij")
    k = I[..., None] * RECIPROCAL[0] + Jg[..., None] * RECIPROCAL[1]
    k[..., 2] = k_z
    return k


def chern_reduced(params: ModelParams, k_z: float, band="-", n: int = 101,
                  gap_tol: float = 1e-6, return_residual: bool = False):
    """Chern number of the 2D slice at fixed k_z by plaquette (link-variable) integration."""
    sign = _band_sign(band)
    k = _bz2d_grid(n, k_z)
    H = _periodic_bulk(params, k)
    E, U = np.linalg.eigh(H)
    gap = float(np.min(E[..., 1] - E[..., 0]))
    if gap < gap_tol:
        raise GaplessError(f"2D spectrum at k_z={k_z:.6g} is gapless (min gap {gap:.3g})")
    u = U[..., :, 0 if sign < 0 else 1]
    link1 = np.sum(np.conj(u) * np.roll(u, -1, axis=0), axis=-1)
    link2 = np.sum(np.conj(u) * np.roll(u, -1, axis=1), axis=-1)
    plaq = link1 * np.roll(link2, -1, axis=0) * np.conj(np.roll(link1, -1, axis=1)) * np.conj(link2)
    # Berry phase around a positively oriented loop is -(enclosed curvature)
    flux = -np.sum(np.angle(plaq))
    orient = np.sign(np.linalg.det(RECIPROCAL[:2, :2]))
    c = orient * flux / (2 * math.pi)
    value = int(round(c))
    if return_residual:
        return value, abs(c - value)
    return value


@dataclass(frozen=True)
class DiracPoint:
    k: np.ndarray  # (kx, ky)
    winding: int
    velocity: np.ndarray  # d(dx, dy)/d(kx, ky)


def dirac_points_2d(params: ModelParams, grid: int = 128, tol: float = 1e-12) -> list[DiracPoint]:
    """Zeros of (d_x, d_y) in the 2D BZ with winding sign(det d(dx,dy)/d(kx,ky)).

    Ordered by descending k_y so that the phi = 0 model returns [K+, K-].
    """
    def fun(q):
        return d_vector(params, np.array([q[0], q[1], 0.0])).d[:2]

    def jac(q):
        return d_jacobian(params, np.array([q[0], q[1], 0.0]))[:2, :2]

    ks = np.linspace(-math.pi, math.pi, grid, endpoint=False)
    KX, KY = np.meshgrid(ks, ks, indexing="ij")
    k3 = np.stack([KX, KY, np.zeros_like(KX)], axis=-1)
    mag = np.linalg.norm(d_vector(params, k3).d[..., :2], axis=-1)
    mask = np.ones(mag.shape, bool)
    for off in [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)]:
        mask &= mag <= np.roll(mag, off, axis=(0, 1))
    found = []
    for i, j in np.argwhere(mask):
        r = _refine_root(fun, jac, np.array([KX[i, j], KY[i, j]]), 1e-10)
        if r is None:
            continue
        f = fold_bulk([r[0], r[1], 0.0])[:2]
        if all(_bulk_distance([*f, 0], [*q.k, 0]) > 1e-6 for q in found):
            v = jac(f)
            det = np.linalg.det(v)
            if abs(det) < tol:
                raise ArithmeticError("Dirac point with vanishing velocity determinant")
            found.append(DiracPoint(np.asarray(f), int(np.sign(det)), v))
    found.sort(key=lambda p: (-p.k[1], p.k[0]))
    return found


def _dz_harmonic(params: ModelParams, kxy):
    """d_z at fixed (kx, ky) written as a + b cos kz + c sin kz."""
    vals = [d_vector(params, np.array([kxy[0], kxy[1], z])).d[2] for z in (0.0, math.pi / 2, math.pi)]
    a = 0.5 * (vals[0] + vals[2])
    b = 0.5 * (vals[0] - vals[2])
    c = vals[1] - a
    return a, math.hypot(b, c)


def chern_brouwer(params: ModelParams, k_z: float, band="-") -> int:
    """C(k_z) from Dirac-point windings and the sign of d_z there."""
    sign = _band_sign(band)
    total = 0.0
    for dp in dirac_points_2d(params):
        dz = d_vector(params, np.array([dp.k[0], dp.k[1], k_z])).d[2]
        total += dp.winding * np.sign(dz)
    return int(round(-sign * 0.5 * total))


def chern_closed_form(m: float, Jprime: float, k_z: float, J: float = 1.0, Jz: float | None = None) -> int:
    """Lower-band Chern number of the phi = 0 reduced model."""
    Jz = J if Jz is None else Jz
    base = -m - 2 * Jz * math.cos(k_z)
    r = 2 * math.sqrt(2) * Jprime
    return int(round(0.5 * (np.sign(base + r) - np.sign(base - r))))


def classify_phase(params: ModelParams, tol: float = 1e-6) -> tuple[PhaseLabel, int | None]:
    """Phase of the bulk model and, for gapped phases, the Chern number at k_z = pi/2."""
    families = 0
    for dp in dirac_points_2d(params):
        a, amp = _dz_harmonic(params, dp.k)
        if abs(abs(a) - amp) < tol:
            raise PhaseBoundaryError(f"on-boundary: |a|={abs(a):.3g}, amplitude={amp:.3g}")
        if abs(a) < amp:
            families += 1
    if families >= 2:
        return PhaseLabel.WSM2, None
    if families == 1:
        return PhaseLabel.WSM1, None
    c = chern_reduced(params, math.pi / 2)
    return (PhaseLabel.BI if c == 0 else PhaseLabel.QHI), c


# --------------------------------------------------------------------------
# Velocities and arcs
# --------------------------------------------------------------------------

def _energies(family, k):
    h, _ = _family(family)
    return np.linalg.eigvalsh(h(k))


def group_velocity(family, k, band: int, h: float = 1e-3, tol: float = 1e-4) -> np.ndarray:
    """grad_k E_band by central differences, cross-checked against step h/2.

    ``band`` is a 0-based index into the ascending bands.
    """
    k = np.asarray(k, float)
    E0 = _energies(family, k)
    gaps = np.abs(E0 - E0[band])
    gaps[band] = np.inf
    if gaps.min() < DEGENERACY_TOL:
        raise NearDegeneracyError("band degenerate at k")

    def fd(step):
        v = np.empty(k.shape)
        for mu in range(k.size):
            e = np.zeros_like(k)
            e[mu] = step
            v[mu] = (_energies(family, k + e)[band] - _energies(family, k - e)[band]) / (2 * step)
        return v

    v1, v2 = fd(h), fd(h / 2)
    if np.max(np.abs(v1 - v2)) > tol:
        raise NearDegeneracyError("finite-difference velocity not converged (nearby crossing?)")
    return v2


@dataclass(frozen=True)
class ArcPolyline:
    points: np.ndarray  # (M, 2) of (k_par, k_z)
    facet: str  # 'perp-' (0 -1 0) or 'perp+' (010)


def _facet_weights(spec: SlabSpec, k: np.ndarray, band: int):
    H = slab_bloch(spec, k[:, 0], k[:, 1])
    _, U = np.linalg.eigh(H)
    w = np.abs(U[:, :, band]) ** 2
    order = spec.spatial_order
    q = max(1, spec.n_s // 4)
    low = w[:, order[:q]].sum(axis=1)
    high = w[:, order[-q:]].sum(axis=1)
    return low, high


def _band_energy(spec: SlabSpec, k_par, k_z, band: int):
    return _chunked_slab(lambda kp, kz: np.linalg.eigvalsh(slab_bloch(spec, kp, kz))[:, band], k_par, k_z)


def fermi_arcs(spec: SlabSpec, omega: float | None = None, n_par: int = 201, n_z: int = 201,
               band: int | None = None) -> list[ArcPolyline]:
    """Equal-frequency contours of the edge band, split by the facet that hosts them.

    Where the dominant facet changes between two contour vertices, the split
    point is placed at the linear zero of the facet weight difference.
    """
    from skimage.measure import find_contours

    omega = spec.params.eps if omega is None else omega
    band = spec.edge_band if band is None else band
    grid = surface_grid(n_par, n_z)
    E = _band_energy(spec, grid[..., 0], grid[..., 1], band)
    if not (E.min() < omega < E.max()):
        return []
    kp_step = grid[1, 0, 0] - grid[0, 0, 0]
    kz_step = grid[0, 1, 1] - grid[0, 0, 1]
    arcs = []
    for c in find_contours(E - omega, 0.0):
        pts = np.stack([grid[0, 0, 0] + c[:, 0] * kp_step, grid[0, 0, 1] + c[:, 1] * kz_step], axis=1)
        low, high = _facet_weights(spec, pts, band)
        balance = low - high
        tags = np.where(balance >= 0, "perp-", "perp+")
        piece = [pts[0]]
        for i in range(1, len(pts) + 1):
            if i < len(pts) and tags[i] == tags[i - 1]:
                piece.append(pts[i])
                continue
            split = None
            if i < len(pts):
                f = balance[i - 1] / (balance[i - 1] - balance[i])
                split = pts[i - 1] + f * (pts[i] - pts[i - 1])
                piece.append(split)
            if len(piece) >= 2:
                arcs.append(ArcPolyline(np.array(piece), str(tags[i - 1])))
            if i < len(pts):
                piece = [split, pts[i]]
    return arcs


def surface_curvature_map(spec: SlabSpec, n_par: int = 201, n_z: int = 201, band: int | None = None):
    """Edge-band Omega_{par z} on the surface grid (NaN where degenerate)."""
    grid = surface_grid(n_par, n_z)
    omega = berry_curvature_surface(spec, grid[..., 0], grid[..., 1], band, on_degenerate="nan")
    return grid, omega
