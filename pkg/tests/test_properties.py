"""Hypothesis property tests for the invariants of every module."""
import math
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from weyl_arcs.analysis import FarFieldSpec, bloch_map, far_field, momentum_distribution
from weyl_arcs.dynamics import (
    EmitterSpec,
    SystemState,
    assemble,
    concurrence,
    evolve,
    single_excited,
)
from weyl_arcs.lattice import (
    ModelParams,
    SlabSpec,
    apply_absorbers,
    bloch_bulk,
    bloch_bulk_derivative,
    bloch_bulk_periodic,
    bulk_energies,
    build_finite,
    d_vector,
    fold_bulk,
    rect_block,
    slab_block,
)
from weyl_arcs.topology import (
    ChargeError,
    GaplessError,
    NearDegeneracyError,
    berry_curvature_bulk,
    chern_closed_form,
    chern_reduced,
    curvature_from_eigensystem,
    find_weyl_points,
    gauge_fix,
)

PROPS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
FEW = settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.too_slow])

angle = st.floats(0, 2 * math.pi, allow_nan=False)
kvec = st.tuples(*[st.floats(-4.0, 4.0, allow_nan=False)] * 3).map(np.array)


@st.composite
def model_params(draw, type_one=False):
    amps = [draw(st.floats(0.0, 1.5)) for _ in range(10)]
    phases = [draw(angle) for _ in range(10)]
    if type_one:
        amps[5], amps[8], amps[9] = amps[4], amps[6], amps[7]
        phases[5], phases[8], phases[9] = phases[4] + math.pi, phases[6] + math.pi, phases[7] + math.pi
    return ModelParams(tuple(amps), tuple(phases), draw(st.floats(-2, 2)), draw(st.floats(-1, 1)))


simplified = st.builds(lambda jp, m, phi: ModelParams.simplified(1.0, jp, m, phi),
                       st.floats(0.0, 0.6), st.floats(0.0, 2.5), angle)
lattice_g = st.sampled_from([0.1, 0.3, 0.5, 0.8])


# ---------------------------------------------------------------- lattice

@PROPS
@given(model_params(), kvec)
def test_bloch_hermitian_and_two_routes(p, k):
    H = bloch_bulk(p, k)
    np.testing.assert_allclose(H, H.conj().T, atol=1e-12)
    d0, d = d_vector(p, k)
    np.testing.assert_allclose(np.linalg.eigvalsh(H), [d0 - np.linalg.norm(d), d0 + np.linalg.norm(d)], atol=1e-12)
    np.testing.assert_allclose(bulk_energies(p, k), np.linalg.eigvalsh(H), atol=1e-12)


@PROPS
@given(model_params(), kvec, st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2))
def test_bloch_periodicity(p, k, a, b, c):
    G = a * np.array([math.pi, math.pi, 0]) + b * np.array([math.pi, -math.pi, 0]) + c * np.array([0, 0, 2 * math.pi])
    np.testing.assert_allclose(bloch_bulk_periodic(p, k + G), bloch_bulk_periodic(p, k), atol=1e-12)
    V = np.diag([1.0, np.exp(1j * G[0])])
    np.testing.assert_allclose(bloch_bulk(p, k + G), V @ bloch_bulk(p, k) @ V.conj().T, atol=1e-12)


@PROPS
@given(model_params(type_one=True), kvec)
def test_type_one_trace(p, k):
    assert p.is_type_one
    assert np.trace(bloch_bulk(p, k)).real == pytest.approx(2 * p.eps, abs=1e-12)


@PROPS
@given(kvec)
def test_fold_is_idempotent_and_equivalent(k):
    f = fold_bulk(k)
    assert abs(f[0]) + abs(f[1]) <= math.pi + 1e-9 and abs(f[2]) <= math.pi + 1e-9
    np.testing.assert_allclose(fold_bulk(f), f, atol=1e-12)
    p = ModelParams.simplified(1.0, 0.3, 0.4, 0.7)
    np.testing.assert_allclose(bloch_bulk_periodic(p, f), bloch_bulk_periodic(p, k), atol=1e-12)


@PROPS
@given(model_params())
def test_finite_lattice_hermitian(p):
    lat = build_finite(p, rect_block(3, 3, 3))
    assert lat.is_hermitian


# ---------------------------------------------------------------- topology

@PROPS
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_gauge_fix_pivot_real_positive(seed, n):
    rng = np.random.default_rng(seed)
    U = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))[0]
    V = gauge_fix(U)
    piv = V[np.argmax(np.abs(V), axis=0), np.arange(n)]
    assert np.all(piv.imag == 0) and np.all(piv.real > 0)
    np.testing.assert_allclose(np.abs(V), np.abs(U), atol=1e-15)


@PROPS
@given(simplified, kvec, st.integers(0, 2**32 - 1))
def test_curvature_gauge_independent(p, k, seed):
    H = bloch_bulk(p, k)
    E, U = np.linalg.eigh(H)
    assume(E[1] - E[0] > 1e-3)
    phases = np.exp(1j * np.random.default_rng(seed).uniform(0, 2 * math.pi, 2))
    dH = bloch_bulk_derivative(p, k)
    pairs = ((1, 2), (2, 0), (0, 1))
    a = curvature_from_eigensystem(E, U, dH, pairs)
    b = curvature_from_eigensystem(E, U * phases, dH, pairs)
    np.testing.assert_allclose(a, b, atol=1e-9 * max(1.0, np.abs(a).max()))
    np.testing.assert_allclose(a[:, 0], berry_curvature_bulk(p, k, "-"), atol=1e-8 * max(1.0, np.abs(a).max()))


@FEW
@given(simplified)
def test_monopole_neutrality(p):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            nodes = find_weyl_points(p)
        except ChargeError:
            assume(False)
    assert sum(n.chirality for n in nodes) == 0


@FEW
@given(st.floats(0.0, 3.5), st.floats(0.0, 1.2), st.floats(-math.pi, math.pi))
def test_chern_integer_matches_closed_form(m, jp, kz):
    p = ModelParams.simplified(1.0, jp, m, 0.0)
    try:
        c = chern_reduced(p, kz, n=41)
    except (GaplessError, NearDegeneracyError):
        assume(False)
    args = (-m - 2 * math.cos(kz) + 2 * math.sqrt(2) * jp, -m - 2 * math.cos(kz) - 2 * math.sqrt(2) * jp)
    assume(min(abs(x) for x in args) > 0.2)
    assert c == chern_closed_form(m, jp, kz)


# ---------------------------------------------------------------- dynamics

@FEW
@given(st.sampled_from(["I", "II", "III"]), lattice_g, st.integers(0, 10**6))
def test_norm_and_energy_conserved(name, g, seed):
    from weyl_arcs.scenarios import preset

    lat = build_finite(preset(name), rect_block(5, 5, 5))
    site = int(np.random.default_rng(seed).integers(lat.n_sites))
    system = assemble(lat, [EmitterSpec(site, 0.0, g)])
    traj = evolve(system, single_excited(system), 100.0, n_samples=51)
    assert np.abs(traj.norm - 1).max() < 1e-6
    assert np.abs(traj.energy - traj.energy[0]).max() < 1e-6


@FEW
@given(st.floats(0.1, 3.0), st.integers(1, 3), st.floats(0.0, 0.5), lattice_g)
def test_norm_monotone_with_loss(gamma, layers, gamma0, g):
    lat = build_finite(ModelParams.simplified(1.0, 0.25, 0.5), rect_block(6, 6, 6))
    lat = apply_absorbers(lat, ["perp+", "par-"], gamma, layers)
    system = assemble(lat, [EmitterSpec(lat.center_site("perp-"), 0.0, g, gamma0)])
    traj = evolve(system, single_excited(system), 20.0, n_samples=81, track_energy=False)
    assert np.all(np.diff(traj.norm) <= 1e-9)


@FEW
@given(lattice_g, st.sampled_from([(9, 5, 9), (11, 7, 7)]))
def test_mirror_symmetry(g, shape):
    lat = build_finite(ModelParams.simplified(1.0, 0.25, 0.5), slab_block(*shape))
    system = assemble(lat, [EmitterSpec(lat.center_site("perp-"), 0.0, g)])
    traj = evolve(system, single_excited(system), 8.0, snapshot_times=[2.0, 5.0, 8.0], n_samples=5)
    n_z = lat.geometry.n_z
    mirror = np.array([lat.site_index(s, u, n_z - 1 - z) for s, u, z in lat.coords])
    for snap in traj.snapshots.values():
        p = np.abs(snap.sites) ** 2
        assert np.abs(p - p[mirror]).max() < 1e-10


# ---------------------------------------------------------------- analysis

@st.composite
def normalized(draw, n):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n) + 1j * rng.normal(size=n)
    return a / np.linalg.norm(a) * draw(st.floats(0.1, 1.0))


_SLAB = build_finite(ModelParams.simplified(1.0, 0.25, 0.5), slab_block(6, 5, 4))


@PROPS
@given(normalized(_SLAB.n_sites))
def test_bloch_map_unitarity(amps):
    bp = bloch_map(_SLAB, amps, SlabSpec(_SLAB.params, 5))
    assert abs(bp.total - np.vdot(amps, amps).real) < 1e-10


@PROPS
@given(normalized(_SLAB.n_sites), st.integers(1, 2))
def test_tof_plancherel(amps, pad):
    md = momentum_distribution(_SLAB, amps, pad)
    assert abs(md.n.mean() - np.vdot(amps, amps).real) < 1e-8


@PROPS
@given(normalized(6), st.integers(0, 2**32 - 1), st.floats(0.5, 3.0))
def test_far_field_positive_with_dipole_poles(C, seed, wavelength):
    r = np.random.default_rng(seed).normal(size=(6, 3)) * 4
    th = np.linspace(-math.pi / 2, math.pi / 2, 21)[:, None]
    ph = np.linspace(0, 2 * math.pi, 17)[None, :]
    f = far_field(C, r, FarFieldSpec(wavelength=wavelength), th, ph)
    assert f.min() >= 0
    assert np.abs(f[[0, -1]]).max() < 1e-20


@PROPS
@given(st.complex_numbers(max_magnitude=1), st.complex_numbers(max_magnitude=1))
def test_concurrence_bound(a, b):
    assume(abs(a) ** 2 + abs(b) ** 2 <= 1)
    p1, p2 = abs(a) ** 2, abs(b) ** 2
    c = concurrence(np.array([a, b]))
    assert c <= 2 * math.sqrt(p1 * p2) + 1e-15 <= p1 + p2 + 2e-15
    state = SystemState(np.array([a, b, 0.0], complex), 2)
    assert concurrence(state) == c
