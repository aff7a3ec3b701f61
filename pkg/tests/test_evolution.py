from __future__ import annotations

import math
from types import SimpleNamespace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hotspots import evolution as ev
from hotspots import potential as pot
from hotspots import profiles as prof
from hotspots import spectral as sp
from hotspots.errors import DomainEscape, OutOfDomain


def radial_state(spec, profile_fn, t_end, *, extra=(), n_cells=4096, eta=0.05, factor=10.0):
    N = spec.dimension
    profiles = prof.solve_profiles(spec, 2, r_max=1e4)
    modes = (sp.RadialMode(0, 1, profile_fn),) + tuple(extra)
    decomp = sp.decompose(sp.ModeList(N, modes), profiles, 2)
    grid = ev.radial_grid(ev.domain_radius(t_end, factor), n_cells)
    return ev.initialize(decomp, profiles, grid, ev.StepPolicy(eta=eta)), decomp


def heat_exact(r, t):
    # e^{t Delta} exp(-|x|^2) in three dimensions
    s = 1.0 + 4.0 * t
    return s ** -1.5 * np.exp(-r * r / s)


@pytest.fixture(scope="module")
def heat_run():
    state, decomp = radial_state(pot.zero(3), lambda r: np.exp(-r ** 2) / sp.harmonic_constants(3).q_star, 10.0)
    return state, decomp, ev.run(state, 10.0, [1.0, 10.0])


def test_stiffness_annihilates_constants():
    spec = pot.lorentz(3, 0.5)
    U = prof.solve_profile(spec, 0, r_max=1e4)
    op = ev._ModeOperator(ev.radial_grid(30.0, 512), U, 3)
    K1 = op.stiff_times(np.ones(op.M_diag.size))
    assert np.max(np.abs(K1)) <= 1e-12 * np.max(op.K_diag)


def test_constant_gauge_field_is_an_equilibrium():
    spec = pot.lorentz(3, 0.5)
    profiles = prof.solve_profiles(spec, 1, r_max=1e4)
    decomp = SimpleNamespace(dimension=3, modes=(sp.RadialMode(0, 1, profiles[0]),))
    state = ev.initialize(decomp, profiles, ev.radial_grid(40.0, 1024))
    r = state.grid.nodes
    assert_allclose(state.mode(0, 1).w[r < 35], 1.0, rtol=1e-6)
    for _ in range(20):
        state = ev.step(state, 0.05, check_escape=False)
    assert_allclose(state.mode(0, 1).w[r < 20], 1.0, rtol=1e-6)


def test_heat_kernel_oracle(heat_run):
    _, _, res = heat_run
    r = np.linspace(0.0, 15.0, 301)
    for t in (1.0, 10.0):
        snap = res.snapshot_at(t)
        x = np.stack([r, np.zeros_like(r), np.zeros_like(r)], axis=-1)
        assert np.max(np.abs(ev.reconstruct(snap, x) - heat_exact(r, t))) < 1e-4


def test_pairing_is_conserved(heat_run):
    state, decomp, res = heat_run
    assert_allclose(ev.conserved_pairing(state), decomp.pairing, rtol=1e-8)
    # zero potential: the pairing is the mass pi^(3/2)
    for t, p in res.state.ledger:
        assert abs(p / math.pi ** 1.5 - 1.0) < 1e-4


def test_single_step_conservation(heat_run):
    state, _, _ = heat_run
    p0 = ev.conserved_pairing(state)
    p1 = ev.conserved_pairing(ev.step(state, 1e-3))
    assert abs(p1 / p0 - 1.0) < 1e-8


def test_run_records_and_noops(heat_run):
    state, _, res = heat_run
    assert [s.time for s in res.snapshots] == [1.0, 10.0]
    assert [t for t, _ in res.state.ledger] == [0.0, 1.0, 10.0]
    short = ev.run(state, 0.5, [])
    assert short.snapshots == () and short.state.time == 0.5
    same = ev.run(state, 0.0, [0.0])
    assert same.state is state and same.snapshots == ()
    with pytest.raises(ValueError):
        ev.run(short.state, 0.1)


def test_step_size_convergence():
    # CN error drops roughly like eta^2 when the step-control parameter is halved
    errs = []
    for eta in (0.2, 0.1):
        state, _ = radial_state(pot.zero(3), lambda r: np.exp(-r ** 2) / sp.harmonic_constants(3).q_star,
                                2.0, eta=eta, n_cells=8192)
        s = ev.run(state, 2.0).state
        r = np.linspace(0, 6, 61)
        errs.append(np.max(np.abs(ev.radial_part(s, 0, 1, r) * sp.harmonic_constants(3).q_star
                                  - heat_exact(r, 2.0))))
    assert errs[1] < errs[0] / 2.5


def test_hardy_attractor_shape():
    spec = pot.hardy(3, 2.0)
    t = 100.0
    state, decomp = radial_state(spec, lambda r: np.exp(-r ** 2), t, factor=12.0)
    snap = ev.run(state, t).state
    xi = np.linspace(0.5, 3.0, 26)
    u = ev.radial_part(snap, 0, 1, np.sqrt(t) * xi) * sp.harmonic_constants(3).q_star
    A = 1.0
    target = decomp.M_phi * xi ** A * np.exp(-xi ** 2 / 4)
    assert np.max(np.abs(t ** ((3 + A) / 2) * u - target)) < 0.02 * np.max(target)


def test_reconstruct_single_and_odd_modes():
    spec = pot.zero(3)
    k1 = sp.RadialMode(1, 2, lambda r: r * np.exp(-r ** 2))
    state, _ = radial_state(spec, lambda r: np.exp(-r ** 2), 1.0, extra=(k1,), n_cells=1024)
    h = sp.harmonic_constants(3)
    x = np.array([[0.3, 0.4, 0.0], [0.0, 0.0, 0.0]])
    r = np.linalg.norm(x, axis=-1)
    expected = ev.radial_part(state, 0, 1, r) * h.q_star + ev.radial_part(state, 1, 2, r) * h.q_N * x[:, 1] / np.where(r > 0, r, 1)
    assert_allclose(ev.reconstruct(state, x), expected, rtol=1e-13)
    only_odd = ev.EvolutionState(3, state.grid, (state.mode(1, 2),), 0.0, (), state.policy,
                                 state.profiles, state.operators)
    assert ev.reconstruct(only_odd, np.zeros((1, 3)))[0] == 0.0
    with pytest.raises(OutOfDomain):
        ev.reconstruct(state, np.array([[state.R * 2, 0.0, 0.0]]))


def test_domain_escape_is_reported():
    state, _ = radial_state(pot.zero(3), lambda r: np.exp(-r ** 2), 1.0, n_cells=512)
    with pytest.raises(DomainEscape) as info:
        ev.run(state, 200.0)
    assert info.value.fraction > 1e-6


def test_checkpoint_round_trip(tmp_path, heat_run):
    _, _, res = heat_run
    snap = res.snapshots[0]
    path = tmp_path / "state.bin"
    ev.save_checkpoint(snap, path)
    back = ev.load_checkpoint(path, snap.profiles)
    assert back.time == snap.time and back.ledger == snap.ledger
    assert_allclose(back.mode(0, 1).w, snap.mode(0, 1).w, rtol=0, atol=0)
    assert_allclose(ev.conserved_pairing(back), ev.conserved_pairing(snap), rtol=1e-15)


def test_snapshot_csv(tmp_path, heat_run):
    _, _, res = heat_run
    paths = ev.export_snapshot_csv(res.snapshots[-1], tmp_path)
    data = np.loadtxt(paths[0], delimiter=",", skiprows=1)
    assert data.shape[1] == 3 and data[0, 0] == 0.0


def test_grid_is_graded_and_reaches_R():
    g = ev.radial_grid(100.0, 2048)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 100.0
    h = np.diff(g.nodes)
    assert np.all(h > 0) and np.max(h[1:] / h[:-1]) < 1.11
