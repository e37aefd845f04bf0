"""Strang-split propagation of the relativistic Hartree equation

    i d/dt phi = (1 - Laplacian)^(1/2) phi + lam (V * |phi|^2) phi

on the periodic grid of :mod:`bosonstar.spectral`.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CollapseSuspected, ParameterError
from .spectral import CoulombKernel, EnergyBreakdown, SpectralField, energy, hartree_potential, norm

#: H^{1/2} norm above which an orbit is treated as collapsing.
BLOWUP_SENTINEL = 1e6


@dataclass(frozen=True)
class HartreeState:
    phi: SpectralField
    t: float
    lam: float
    kernel: CoulombKernel


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    hhalf: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final: HartreeState | None = None

    def record(self, state: HartreeState, keep_field=False):
        if self.times and state.t <= self.times[-1]:
            raise ParameterError("trajectory sample times must increase")
        e = energy(state.phi, state.kernel, state.lam)
        self.times.append(state.t)
        self.norms.append(norm(state.phi))
        self.energies.append(e)
        self.hhalf.append(norm(state.phi, "Hhalf"))
        if keep_field:
            self.snapshots.append(state.phi)
        return e

    @property
    def E(self):
        return np.array([e.E for e in self.energies])

    @property
    def K(self):
        return np.array([e.K for e in self.energies])

    @property
    def D(self):
        return np.array([e.D for e in self.energies])

    def energy_drift(self) -> float:
        """``max_t |E(t) - E(0)| / |E(0)|``."""
        E = self.E
        return float(np.max(np.abs(E - E[0])) / abs(E[0]))

    def norm_drift(self) -> float:
        n = np.array(self.norms)
        return float(np.max(np.abs(n - n[0])))

    def rows(self):
        for t, n, e, hh in zip(self.times, self.norms, self.energies, self.hhalf):
            yield t, n, e.E, e.K, e.D, hh

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "norm", "E", "K", "D", "Hhalf"])
            for row in self.rows():
                w.writerow([f"{v:.17g}" for v in row])

    def summary(self) -> dict:
        first, last = self.energies[0], self.energies[-1]
        return {
            "initial": {"t": self.times[0], "norm": self.norms[0], **first.as_dict(), "Hhalf": self.hhalf[0]},
            "final": {"t": self.times[-1], "norm": self.norms[-1], **last.as_dict(), "Hhalf": self.hhalf[-1]},
            "energy_drift_rel": self.energy_drift(),
            "norm_drift": self.norm_drift(),
            "samples": len(self.times),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def _potential_phase(phi, kernel, lam, tau):
    pot = hartree_potential(phi, kernel, lam)
    return SpectralField(phi.grid, values=np.exp(-1j * tau * pot) * phi.values)


def _kinetic_phase(phi, tau, phase=None):
    if phase is None:
        phase = np.exp(-1j * tau * phi.grid.omega)
    return SpectralField(phi.grid, spectrum=phase * phi.spectrum)


def strang_step(state: HartreeState, dt: float) -> HartreeState:
    """One symmetric step ``P(dt/2) K(dt) P(dt/2)``.

    The potential substep is exact: it does not change ``|phi|``, so the
    frozen potential is the true one for its duration.  Negative ``dt`` is
    rejected; use :func:`strang_step_signed` for time reversal.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    return strang_step_signed(state, dt)


def strang_step_signed(state: HartreeState, dt: float) -> HartreeState:
    phi = _potential_phase(state.phi, state.kernel, state.lam, dt / 2)
    phi = _kinetic_phase(phi, dt)
    phi = _potential_phase(phi, state.kernel, state.lam, dt / 2)
    return replace(state, phi=phi, t=state.t + dt)


def evolve(state: HartreeState, T: float, dt: float, sample_every: int = 1, keep_fields=False) -> Trajectory:
    """Propagate to time ``state.t + T`` recording observables every ``sample_every`` steps.

    Adjacent half-step potential kicks are fused, which is exact because the
    kick leaves the density unchanged.  Raises :class:`CollapseSuspected`
    when the H^{1/2} norm passes :data:`BLOWUP_SENTINEL`.
    """
    if not T > 0:
        raise ParameterError(f"T must be positive, got {T}")
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * T:
        raise ParameterError(f"dt={dt} does not divide T={T}")
    if sample_every < 1 or steps % sample_every:
        raise ParameterError(f"sample_every={sample_every} must divide the step count {steps}")

    traj = Trajectory()
    traj.record(state, keep_fields)
    t0 = state.t
    kernel, lam = state.kernel, state.lam
    phase = np.exp(-1j * dt * state.phi.grid.omega)
    phi = _potential_phase(state.phi, kernel, lam, dt / 2)
    for i in range(1, steps + 1):
        phi = _kinetic_phase(phi, dt, phase)
        if i % sample_every == 0:
            phi = _potential_phase(phi, kernel, lam, dt / 2)
            state = replace(state, phi=phi, t=t0 + i * dt)
            traj.record(state, keep_fields)
            if traj.hhalf[-1] > BLOWUP_SENTINEL:
                raise CollapseSuspected(state.t, traj.hhalf[-1])
            if i < steps:
                phi = _potential_phase(phi, kernel, lam, dt / 2)
        else:
            phi = _potential_phase(phi, kernel, lam, dt)
    traj.final = state
    return traj


def apriori_bound_holds(traj: Trajectory, rtol=1e-6) -> bool:
    """``(1 + min(lam, 0) pi/4) K(t) <= E(0)`` at every sample.

    For attractive couplings above ``-4/pi`` this bounds the H^{1/2} norm by
    the conserved energy; for repulsive couplings it reduces to ``K <= E``.
    """
    lam = traj.energies[0].lam
    E0 = traj.energies[0].E
    return bool(np.all((1 + min(lam, 0.0) * np.pi / 4) * traj.K <= E0 * (1 + rtol)))


def energy_order(runs: dict) -> float:
    """Observed convergence order of the energy error from ``{dt: |E(T) - E(0)|}``.

    Least-squares slope of ``log error`` against ``log dt``.
    """
    dts = np.array(sorted(runs))
    errs = np.array([runs[d] for d in dts])
    return float(np.polyfit(np.log(dts), np.log(errs), 1)[0])


__all__ = [
    "BLOWUP_SENTINEL",
    "EnergyBreakdown",
    "HartreeState",
    "Trajectory",
    "apriori_bound_holds",
    "energy_order",
    "evolve",
    "strang_step",
    "strang_step_signed",
]
