"""Removal of the two regularizations: the interaction length ``eps/N``
and the initial-data smoothing ``exp(-kappa |p| / N)``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fock
from .errors import ParameterError
from .spectral import SpectralField, norm, smooth_kappa

#: relative spectral weight allowed beyond two thirds of the Nyquist wavenumber
H1_TAIL_TOL = 1e-6


def _fit(x, y):
    """Least-squares ``(exponent, constant)`` for ``y ~ constant * x^exponent``."""
    slope, icpt = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(np.exp(icpt))


@dataclass
class CutoffStudy:
    """Discrepancies over a strictly decreasing parameter grid.

    ``exponent``/``constant`` come from the two smallest parameters;
    ``exponent_full`` fits the whole grid and is only a diagnostic.
    """

    parameter: str
    grid: np.ndarray
    discrepancy: np.ndarray
    bound: np.ndarray
    exponent: float
    constant: float
    exponent_full: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.discrepancy = np.asarray(self.discrepancy, dtype=float)
        if np.any(np.diff(self.grid) >= 0):
            raise ParameterError(f"{self.parameter} grid must be strictly decreasing")
        if np.any(self.discrepancy < 0):
            raise ParameterError("discrepancies must be non-negative")

    def bound_holds(self) -> bool:
        return bool(np.all(self.discrepancy <= self.bound))

    def monotone(self, noise: float = 1e-10) -> bool:
        """Discrepancy non-increasing as the parameter shrinks."""
        return bool(np.all(np.diff(self.discrepancy) <= noise))

    def rows(self):
        return list(zip(self.grid, self.discrepancy, self.bound))

    def summary(self) -> dict:
        return {
            "parameter": self.parameter,
            "exponent_two_smallest": self.exponent,
            "constant_two_smallest": self.constant,
            "exponent_full_grid": self.exponent_full,
            "bound_holds": self.bound_holds(),
            "monotone": self.monotone(),
            **self.meta,
        }


def epsilon_compare(modes: fock.ModeSet, c0, lam: float, N: int, eps_list, t: float, rate: float = 0.25) -> CutoffStudy:
    """``||psi_t - psi~_t||`` between the bare and the ``1/(|x| + eps/N)`` dynamics.

    Both start from the same condensate on the same basis.  The reference
    bound is ``C t eps^rate`` with ``C`` fixed at the largest ``eps``.
    """
    eps = np.asarray(eps_list, dtype=float)
    if np.any(eps <= 0):
        raise ParameterError("epsilon values must be positive")
    basis = fock.FockBasis(modes.M, N)
    psi0 = fock.condensate_state(np.asarray(c0, dtype=complex), basis)
    H = fock.build_hamiltonian(basis, modes, lam, N)
    psi_t = fock.propagate(H, psi0, t)
    disc = []
    for e in eps:
        Ht = fock.build_hamiltonian(basis, modes, lam, N, regularization=e)
        disc.append(float(np.linalg.norm(psi_t - fock.propagate(Ht, psi0, t))))
    disc = np.array(disc)
    positive = disc > 0
    if positive.all() and len(eps) >= 2:
        p2, c2 = _fit(eps[-2:], disc[-2:])
        pfull, _ = _fit(eps, disc)
    else:
        p2 = c2 = pfull = float("nan")
    C = disc[0] / (t * eps[0] ** rate) if t > 0 else 0.0
    bound = C * t * eps**rate
    return CutoffStudy("epsilon", eps, disc, bound, p2, c2, pfull, {"C_bound": C, "rate": rate, "t": t, "N": N, "lambda": lam, "dimension": basis.dim})


def spectral_tail(phi: SpectralField, fraction: float = 2 / 3) -> float:
    """Share of ``||phi||_{H^1}^2`` carried by wavenumbers above ``fraction * k_nyquist``."""
    g = phi.grid
    w = (1 + g.ksq) * np.abs(phi.spectrum) ** 2
    total = w.sum()
    return float(w[g.kabs > fraction * g.k_nyquist].sum() / total) if total > 0 else 0.0


@dataclass
class KappaStudy:
    rows: list  # (kappa, N, lhs, rhs, margin)

    @property
    def violations(self) -> int:
        return sum(1 for r in self.rows if r[2] > r[3])

    @property
    def min_margin(self) -> float:
        return min(r[4] for r in self.rows)


def kappa_bound_check(phi: SpectralField, kappa_list, N_list) -> KappaStudy:
    """``N ||phi^kappa - phi|| <= kappa ||phi||_{H^1}`` for every pair.

    Holds mode by mode because ``1 - exp(-x) <= x``; the check is exact up
    to rounding.  Fields with a resolved tail above :data:`H1_TAIL_TOL`
    are rejected.
    """
    tail = spectral_tail(phi)
    if tail > H1_TAIL_TOL:
        raise ParameterError(f"field is not resolved in H^1 (tail weight {tail:.2e})")
    h1 = norm(phi, "H1")
    rows = []
    for kappa in kappa_list:
        for N in N_list:
            lhs = N * norm(smooth_kappa(phi, kappa, N) - phi)
            rhs = kappa * h1
            rows.append((float(kappa), int(N), lhs, rhs, rhs - lhs))
    return KappaStudy(rows)


def smoothed_amplitudes(c, modes: fock.ModeSet, kappa: float, N: int) -> np.ndarray:
    """``c_a exp(-kappa |k_a| / N)`` renormalized to unit length."""
    if kappa < 0:
        raise ParameterError(f"kappa must be >= 0, got {kappa}")
    s = np.asarray(c, dtype=complex) * np.exp(-kappa * np.linalg.norm(modes.momenta, axis=1) / N)
    return s / np.linalg.norm(s)


@dataclass
class AprioriTrace:
    times: np.ndarray
    values: np.ndarray
    flagged: np.ndarray
    growth: float = 1.05

    @property
    def ok(self) -> bool:
        return not self.flagged.any()

    @property
    def envelope(self) -> float:
        return float(self.values.max())

    def rows(self):
        return list(zip(self.times, self.values))


def kinetic_trace(gamma1, modes: fock.ModeSet) -> float:
    """``Tr[(1 + |k|^2)^{1/2} gamma]``."""
    return float(np.sum(modes.eps * np.real(np.diag(gamma1))))


def apriori_trace(samples, basis: fock.FockBasis, modes: fock.ModeSet, dt: float, growth: float = 1.05) -> AprioriTrace:
    """Kinetic trace of the one-particle marginal along a Fock trajectory.

    A sample is flagged when it exceeds ``growth`` times the maximum of all
    earlier samples.
    """
    vals = np.array([kinetic_trace(fock.rdm1(psi, basis), modes) for psi in samples])
    running = np.maximum.accumulate(vals)
    flagged = np.zeros(len(vals), dtype=bool)
    flagged[1:] = vals[1:] > growth * running[:-1]
    return AprioriTrace(np.arange(len(vals)) * dt, vals, flagged, growth)
