"""Minimization of the Chandrasekhar functional and collapse diagnostics.

``gradient_flow`` minimizes ``E(phi) = K(phi) + (lam/2) D(phi)`` over
normalized fields.  ``kato_ratio`` and ``estimate_lambda_crit`` measure
the largest achievable ``D / (2 <|p|>)``, whose reciprocal bounds the
attractive coupling at which the functional stops being bounded below.
``scaling_scan`` follows ``E`` along the dilation family
``phi_mu(x) = mu^{3/2} phi(mu x)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStateError, ParameterError
from .spectral import (
    CoulombKernel,
    EnergyBreakdown,
    SpectralField,
    coulomb_convolve,
    energy,
    interaction,
    kinetic_hom,
    norm,
)

log = logging.getLogger(__name__)

LAMBDA_CRIT = -4 / np.pi


@dataclass
class GroundStateResult:
    phi: SpectralField
    energy: EnergyBreakdown
    mu: float
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)

    def history_rows(self):
        """``(iter, E, residual)`` rows for CSV export."""
        return [h[:3] for h in self.history]


class _Eval:
    """Energy, mean-field action and the pieces needed for exact energy differences."""

    __slots__ = ("phi", "c", "rho", "pot", "kin", "lam", "E", "hphi")

    def __init__(self, phi: SpectralField, kernel: CoulombKernel, lam: float, _parts=None):
        g = phi.grid
        self.phi = phi
        self.lam = lam
        self.c = phi.spectrum
        if _parts is None:
            omega = g.omega
            kin = SpectralField(g, spectrum=omega * self.c).values
            rho = phi.density
            pot = coulomb_convolve(rho, kernel) if lam != 0 else np.zeros_like(rho)
        else:
            kin, rho, pot = _parts
        self.kin, self.rho, self.pot = kin, rho, pot
        K = float(np.sum(np.conj(phi.values) * kin).real * g.cell_volume)
        D = float(np.sum(pot * rho) * g.cell_volume)
        self.E = K + 0.5 * lam * D
        self.hphi = SpectralField(g, values=kin + lam * pot * phi.values)

    def normalized(self) -> "_Eval":
        """Same evaluation for ``phi / ||phi||`` without new transforms."""
        n = float(np.sum(self.c.real**2 + self.c.imag**2))
        s = 1.0 / np.sqrt(n)
        phi = SpectralField(self.phi.grid, spectrum=self.c * s)
        return _Eval(phi, None, self.lam, (self.kin * s, self.rho / n, self.pot / n))

    def step(self, tau: float, kernel: CoulombKernel, lam: float):
        """Take ``normalize(phi - tau H phi)``; return ``(new_eval, E_new - E)``.

        The same point is reached as ``phi + d`` with
        ``d = -tau / (1 - tau mu) (H - mu) phi``.  Energy changes are taken
        on the scale-invariant functional ``K/n + lam D / (2 n^2)``
        (``n = ||phi||^2``) from increments that are accurate relative to
        ``|d|``, so neither the O(1) size of ``E`` nor the 1e-16 slack in the
        normalization limits the comparison.
        """
        g = self.phi.grid
        v = self.phi.values
        mu = self.phi.inner(self.hphi).real
        if tau * mu >= 1:
            return None, np.inf
        d = -(tau / (1.0 - tau * mu)) * (self.hphi.values - mu * v)
        cd = SpectralField(g, values=d).spectrum
        c = self.c
        omega = g.omega
        n = float(np.sum(c.real**2 + c.imag**2))
        dn = float(np.sum((cd * np.conj(2 * c + cd)).real))
        K = float(np.sum(omega * (c.real**2 + c.imag**2)))
        dK = float(np.sum(omega * (cd * np.conj(2 * c + cd)).real))
        raw = SpectralField(g, spectrum=c + cd)
        new = _Eval(raw, kernel, lam)
        dE = (dK * n - K * dn) / (n * (n + dn))
        if lam != 0:
            D = float(np.sum(self.pot * self.rho) * g.cell_volume)
            drho = (d * np.conj(2 * v + d)).real
            dD = float(np.sum(drho * (new.pot + self.pot)) * g.cell_volume)
            dE += 0.5 * lam * (dD * n**2 - D * dn * (2 * n + dn)) / (n**2 * (n + dn) ** 2)
        return new.normalized(), dE


def gradient_flow(
    phi0: SpectralField,
    lam: float,
    kernel: CoulombKernel,
    tau: float = 0.1,
    tol: float = 1e-9,
    max_iter: int = 50_000,
    record_every: int = 0,
) -> GroundStateResult:
    """Normalized explicit gradient flow ``phi <- normalize(phi - tau H[phi] phi)``.

    A step that raises the energy is rejected and ``tau`` halved, so the
    accepted energies never increase.  Energy changes are evaluated as
    ``<d, (.)(a + b)>`` sums rather than differences of totals, which keeps
    the acceptance test meaningful below double-precision resolution of
    ``E`` itself.  Stops when ``|dE| < tol`` and the eigen-residual
    ``||H phi - mu phi|| < 10 tol``.  Exhausting ``max_iter`` (or shrinking
    ``tau`` to nothing) returns an unconverged result instead of raising.

    ``history`` holds ``(iter, E, residual, dE)`` every ``record_every``
    accepted steps.
    """
    if abs(norm(phi0) - 1) > 1e-8:
        raise ParameterError("initial field must be normalized")
    cur = _Eval(phi0.normalized(), kernel, lam)
    history = []
    converged = False
    it = 0
    tau_min = tau * 1e-8
    mu, res = _rayleigh(cur.phi, cur.hphi)
    while it < max_iter:
        it += 1
        new, dE = cur.step(tau, kernel, lam)
        if dE > 0:
            tau *= 0.5
            if tau < tau_min:
                log.info("gradient flow stalled at iteration %d (tau=%.2e)", it, tau)
                break
            continue
        cur = new
        mu, res = _rayleigh(cur.phi, cur.hphi)
        if record_every and it % record_every == 0:
            history.append((it, cur.E, res, dE))
        if -dE < tol and res < 10 * tol:
            converged = True
            break
    if record_every and (not history or history[-1][0] != it):
        history.append((it, cur.E, res, 0.0))
    return GroundStateResult(cur.phi, energy(cur.phi, kernel, lam), mu, res, it, converged, history)


def _rayleigh(phi, hphi):
    mu = phi.inner(hphi).real
    r = hphi.values - mu * phi.values
    res = float(np.sqrt(np.sum(r.real**2 + r.imag**2) * phi.grid.cell_volume))
    return mu, res


def kato_ratio(phi: SpectralField, kernel: CoulombKernel) -> float:
    """``D(phi) / (2 <phi, |p| phi>)`` for normalized ``phi``."""
    kh = kinetic_hom(phi)
    if kh <= 1e-14:
        raise InvalidStateError("ratio undefined: <|p|> vanishes (constant field)")
    return interaction(phi, kernel) / (2 * kh)


def _ratio_and_grad(phi, kernel):
    g = phi.grid
    c = phi.spectrum
    kabs = g.kabs
    Kh = float(np.sum(kabs * (c.real**2 + c.imag**2)))
    rho = phi.density
    pot = coulomb_convolve(rho, kernel)
    D = float(np.sum(pot * rho) * g.cell_volume)
    pphi = SpectralField(g, spectrum=kabs * c).values
    grad = pot * phi.values / Kh - D * pphi / (2 * Kh**2)
    return D / (2 * Kh), grad


def kato_ascent(phi0: SpectralField, kernel: CoulombKernel, iters: int = 300, step: float = 1.0):
    """Projected gradient ascent of :func:`kato_ratio` with backtracking.

    Returns ``(best_ratio, best_field, ratios)``.
    """
    phi = phi0.normalized()
    R, grad = _ratio_and_grad(phi, kernel)
    ratios = [R]
    for _ in range(iters):
        while True:
            trial = SpectralField(phi.grid, values=phi.values + step * grad).normalized()
            R_new, g_new = _ratio_and_grad(trial, kernel)
            if not np.isfinite(R_new):
                raise InvalidStateError("ratio became non-finite during ascent")
            if R_new >= R:
                phi, R, grad = trial, R_new, g_new
                step *= 1.5
                break
            step *= 0.5
            if step < 1e-12:
                return R, phi, ratios
        ratios.append(R)
    return R, phi, ratios


@dataclass
class LambdaCritEstimate:
    lambda_crit: float
    best_ratio: float
    restart_ratios: list
    best_field: SpectralField | None = field(default=None, repr=False)


def estimate_lambda_crit(grid, ascent_iters: int = 300, restarts: int = 5, seed: int = 0, kernel=None):
    """One-sided variational estimate ``-1 / sup kato_ratio`` from random restarts.

    Each restart starts from a random smooth field; a restart whose ratio
    turns non-finite is dropped.
    """
    kernel = kernel if kernel is not None else CoulombKernel.exact(grid)
    rng = np.random.default_rng(seed)
    best, best_phi, ratios = -np.inf, None, []
    for _ in range(restarts):
        phi0 = SpectralField.random_smooth(grid, rng, kcut=grid.k_nyquist / 4, complex_valued=False)
        try:
            R, phi, _ = kato_ascent(phi0, kernel, ascent_iters)
        except InvalidStateError as exc:
            log.warning("ascent restart aborted: %s", exc)
            continue
        ratios.append(R)
        if R > best:
            best, best_phi = R, phi
    if best_phi is None:
        raise InvalidStateError("every ascent restart diverged")
    return LambdaCritEstimate(-1.0 / best, best, ratios, best_phi)


def richardson_in_h(values_by_n: dict, order: float = 1.0) -> float:
    """Extrapolate ``{n: value}`` to ``1/n -> 0`` assuming error ``~ (1/n)^order``.

    Uses the two finest grids.
    """
    ns = sorted(values_by_n)
    if len(ns) < 2:
        return float(values_by_n[ns[-1]])
    n1, n2 = ns[-2], ns[-1]
    r = (n2 / n1) ** order
    return float((r * values_by_n[n2] - values_by_n[n1]) / (r - 1))


def dilate(phi: SpectralField, mu: float):
    """``phi_mu(x) = mu^{3/2} phi(mu x)`` on the same grid.

    ``phi`` is evaluated off-grid by its trigonometric interpolant; for
    ``mu > 1`` points with ``mu x`` outside the box are set to zero so that
    periodic images are not picked up.  Returns ``(phi_mu, alias, lost)``:
    the spectral weight pushed past Nyquist and the mass that left the box.
    """
    if not mu > 0:
        raise ParameterError(f"mu must be positive, got {mu}")
    g = phi.grid
    c = phi.spectrum
    k = g.k
    x = g.x
    x0 = x[0]
    y = mu * x
    inside = (y >= x0) & (y < -x0)
    E = np.exp(1j * np.outer(y - x0, k)) * inside[:, None]
    vals = np.einsum("ai,bj,ck,ijk->abc", E, E, E, c, optimize=True) * (mu**1.5 / g.L**1.5)
    out = SpectralField(g, values=vals)
    p = c.real**2 + c.imag**2
    kk = np.abs(k) * mu
    over = (kk[:, None, None] > g.k_nyquist) | (kk[None, :, None] > g.k_nyquist) | (kk[None, None, :] > g.k_nyquist)
    alias = float(np.sum(p[over]) / np.sum(p))
    lost = abs(1.0 - norm(out) ** 2 / norm(phi) ** 2)
    return out, alias, lost


def center_on_peak(phi: SpectralField) -> SpectralField:
    """Translate by whole cells so the density maximum sits at the origin."""
    peak = np.unravel_index(np.argmax(phi.density), phi.density.shape)
    origin = phi.grid.n // 2
    return phi.translated(tuple(origin - p for p in peak))


@dataclass
class ScanRow:
    lam: float
    mus: list
    energies: list
    rejected: list
    slope: float
    verdict: str


@dataclass
class CollapseScan:
    rows: list
    lambda_crit: float | None

    @property
    def verdicts(self):
        return {r.lam: r.verdict for r in self.rows}

    def monotone(self) -> bool:
        """No stable coupling lies below a collapsing one."""
        decided = sorted((r.lam, r.verdict) for r in self.rows if r.verdict != "inconclusive")
        seen_stable = False
        for _, v in decided:
            if v == "stable":
                seen_stable = True
            elif seen_stable:
                return False
        return True


def scaling_scan(phi: SpectralField, lam: float, mu_list, kernel=None, max_alias=0.01, max_lost=0.1, slope_tol=1e-3) -> ScanRow:
    """Energies ``E(phi_mu)`` along the dilation family and a collapse verdict.

    Dilations are taken about the density peak of ``phi``.  A ``mu`` is
    rejected when more than ``max_alias`` of the spectral weight would pass
    Nyquist or more than ``max_lost`` of the mass leaves the box.
    The verdict comes from a linear fit of ``E`` against ``mu`` over the top
    half of the accepted ``mu`` values: negative slope means collapse,
    positive means stable, ``|slope| < slope_tol`` is inconclusive.
    """
    if abs(lam - LAMBDA_CRIT) < 1e-12:
        raise ParameterError("verdict undefined at the critical coupling")
    kernel = kernel if kernel is not None else CoulombKernel.exact(phi.grid)
    phi = center_on_peak(phi)
    mus, energies, rejected = [], [], []
    for mu in sorted(mu_list):
        phim, alias, lost = dilate(phi, mu)
        if alias > max_alias or lost > max_lost:
            log.info("mu=%g rejected: aliased weight %.3g, mass outside box %.3g", mu, alias, lost)
            rejected.append((mu, max(alias, lost)))
            continue
        mus.append(mu)
        energies.append(energy(phim.normalized(), kernel, lam).E)
    if len(mus) < 2:
        return ScanRow(lam, mus, energies, rejected, float("nan"), "inconclusive")
    half = max(2, (len(mus) + 1) // 2)
    slope = float(np.polyfit(mus[-half:], energies[-half:], 1)[0])
    if abs(slope) < slope_tol:
        verdict = "inconclusive"
    else:
        verdict = "collapse" if slope < 0 else "stable"
    return ScanRow(lam, mus, energies, rejected, slope, verdict)


def collapse_scan(phi: SpectralField, lams, mu_list, kernel=None) -> CollapseScan:
    """Run :func:`scaling_scan` for every coupling and bracket the threshold."""
    rows = [scaling_scan(phi, lam, mu_list, kernel) for lam in sorted(lams)]
    lam_hat = None
    for lo, hi in zip(rows, rows[1:]):
        if lo.verdict == "collapse" and hi.verdict == "stable":
            lam_hat = 0.5 * (lo.lam + hi.lam)
    return CollapseScan(rows, lam_hat)
