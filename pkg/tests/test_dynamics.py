import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bosonstar.dynamics import (
    BLOWUP_SENTINEL,
    HartreeState,
    Trajectory,
    apriori_bound_holds,
    energy_order,
    evolve,
    strang_step,
    strang_step_signed,
)
from bosonstar.errors import CollapseSuspected, ParameterError
from bosonstar.spectral import CoulombKernel, Grid3, SpectralField, norm

G = Grid3(16, 8.0)
K = CoulombKernel.exact(G)


def gaussian_state(lam, grid=G, kernel=K, sigma=1.0):
    return HartreeState(SpectralField.gaussian(grid, sigma), 0.0, lam, kernel)


def random_state(seed, lam):
    phi = SpectralField.random_smooth(G, np.random.default_rng(seed), None, True)
    return HartreeState(phi, 0.0, lam, K)


def test_free_step_is_exact_multiplier():
    s = random_state(0, 0.0)
    out = strang_step(s, 0.37)
    expected = np.exp(-0.37j * G.omega) * s.phi.spectrum
    assert np.max(np.abs(out.phi.spectrum - expected)) <= 1e-12
    assert out.t == pytest.approx(0.37)


@pytest.mark.parametrize("dt", [0.0, -1e-3])
def test_nonpositive_step_rejected(dt):
    with pytest.raises(ParameterError):
        strang_step(gaussian_state(1.0), dt)


@pytest.mark.parametrize("lam", [-1.0, 0.5, 3.0])
def test_plane_wave_only_picks_up_phase(lam):
    g = Grid3(8, 2 * np.pi)
    pw = SpectralField.plane_wave(g, (1, 0, 0))
    s = HartreeState(pw, 0.0, lam, CoulombKernel.exact(g))
    for _ in range(10):
        s = strang_step(s, 0.1)
    np.testing.assert_allclose(s.phi.values, np.exp(-1j * np.sqrt(2)) * pw.values, atol=1e-12)


@given(st.integers(0, 2**31), st.floats(-1.2, 2.0), st.floats(1e-4, 0.5))
@settings(max_examples=15)
def test_step_preserves_norm(seed, lam, dt):
    s = random_state(seed, lam)
    assert abs(norm(strang_step(s, dt).phi) - norm(s.phi)) <= 1e-12


@given(st.integers(0, 2**31), st.floats(-1.2, 2.0), st.floats(1e-4, 0.05))
@settings(max_examples=15)
def test_time_reversal(seed, lam, dt):
    s = random_state(seed, lam)
    back = strang_step_signed(strang_step(s, dt), -dt)
    assert np.max(np.abs(back.phi.values - s.phi.values)) <= 1e-10 * np.max(np.abs(s.phi.values))


def test_free_evolution_conserves_everything():
    traj = evolve(gaussian_state(0.0), 2.0, 0.01, sample_every=20)
    assert traj.norm_drift() <= 1e-12
    assert traj.energy_drift() <= 1e-12


def test_evolve_matches_repeated_steps():
    s = gaussian_state(-1.0)
    traj = evolve(s, 0.05, 0.005, sample_every=5)
    ref = s
    for _ in range(10):
        ref = strang_step(ref, 0.005)
    assert np.max(np.abs(traj.final.phi.values - ref.phi.values)) <= 1e-12
    assert traj.times == pytest.approx([0.0, 0.025, 0.05])


def test_energy_error_is_second_order():
    s = gaussian_state(-1.0)
    # dt/8 reference run stands in for the exact final energy
    ref = evolve(s, 0.5, 0.0025 / 8, sample_every=1600).E[-1]
    errs = {dt: abs(evolve(s, 0.5, dt, sample_every=int(round(0.5 / dt))).E[-1] - ref) for dt in (0.01, 0.005, 0.0025)}
    assert 1.8 <= energy_order(errs) <= 2.2


@pytest.mark.parametrize("lam", [-1.0, -0.5, 0.0, 1.0])
def test_apriori_bound_along_orbit(lam):
    traj = evolve(gaussian_state(lam), 0.5, 0.005, sample_every=10)
    assert apriori_bound_holds(traj)


def test_apriori_bound_detects_violation():
    traj = evolve(gaussian_state(-1.0), 0.05, 0.005, sample_every=5)
    bumped = traj.energies[-1]
    traj.energies[-1] = type(bumped)(K=bumped.K * 100, D=bumped.D, E=bumped.E, lam=bumped.lam)
    assert not apriori_bound_holds(traj)


def test_collapse_sentinel(monkeypatch):
    import bosonstar.dynamics as dyn

    monkeypatch.setattr(dyn, "BLOWUP_SENTINEL", 0.5)
    with pytest.raises(CollapseSuspected) as info:
        evolve(gaussian_state(-1.0), 0.02, 0.01, sample_every=1)
    assert info.value.t == pytest.approx(0.01)
    assert BLOWUP_SENTINEL == 1e6


@pytest.mark.parametrize("T,dt,every", [(0.0, 0.1, 1), (1.0, 0.3, 1), (1.0, 0.1, 3), (1.0, -0.1, 1)])
def test_evolve_argument_checks(T, dt, every):
    with pytest.raises(ParameterError):
        evolve(gaussian_state(1.0), T, dt, sample_every=every)


def test_trajectory_times_strictly_increase():
    traj = Trajectory()
    s = gaussian_state(1.0)
    traj.record(s)
    with pytest.raises(ParameterError):
        traj.record(s)


def test_energy_order_recovers_known_power():
    assert energy_order({0.1: 3e-2, 0.05: 7.5e-3, 0.025: 1.875e-3}) == pytest.approx(2.0)


def test_trajectory_exports(tmp_path):
    traj = evolve(gaussian_state(1.0), 0.02, 0.01, sample_every=1)
    traj.to_csv(tmp_path / "t.csv")
    traj.to_json(tmp_path / "t.json")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "norm", "E", "K", "D", "Hhalf"]
    assert len(rows) == 4
    summary = json.loads((tmp_path / "t.json").read_text())
    assert summary["samples"] == 3
    assert {"initial", "final", "energy_drift_rel", "norm_drift"} <= set(summary)
    assert summary["final"]["t"] == pytest.approx(0.02)
