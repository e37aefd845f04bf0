"""Numerical probes of relativistic Hardy-type inequalities.

One-particle checks (``<1/|x|> <= (pi/2) <(1 - Laplacian)^{1/2}>``) are done
on radial profiles: the potential term by quadrature on geometric nodes,
the kinetic term through the sine transform of ``r u(r)``, which is the
exact momentum representation of an s-wave.  Two-particle checks
(``|x1 - x2|^{-a}`` against ``S1^alpha S2^beta`` with ``S = (1 - Laplacian)^{1/4}``,
so that both sides scale alike when ``alpha + beta = 2a``) use low-rank
states on a small cubic grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.integrate import dblquad

from .errors import ParameterError

log = logging.getLogger(__name__)

HERBST_CONSTANT = np.pi / 2
#: relative slack allowed on the sharp constant for discretized states
HERBST_SLACK = 0.01


# radial one-particle states


@dataclass(frozen=True)
class RadialQuadrature:
    """Geometric nodes on ``[r_min, R]`` plus a uniform grid for the sine transform."""

    nodes: int = 400
    r_min: float = 1e-4
    R: float = 40.0
    uniform: int = 8192

    @property
    def r(self):
        return np.geomspace(self.r_min, self.R, self.nodes)

    @property
    def weights(self):
        """Trapezoid weights in ``log r`` for integrals ``int f(r) dr``."""
        r = self.r
        dt = np.log(r[1] / r[0])
        w = r * dt
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def refined(self) -> "RadialQuadrature":
        return RadialQuadrature(2 * self.nodes, self.r_min, self.R, 2 * self.uniform)


@dataclass(frozen=True)
class GaussianProfile:
    """``u(r) = sum_i s_i exp(-(r - c_i)^2 / (2 w_i^2))`` (unnormalized)."""

    centers: tuple
    widths: tuple
    signs: tuple

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for c, w, s in zip(self.centers, self.widths, self.signs):
            out += s * np.exp(-((r - c) ** 2) / (2 * w * w))
        return out

    @classmethod
    def random(cls, rng, terms=(3, 6), center_max=4.0, width_range=(0.3, 3.0)):
        k = int(rng.integers(terms[0], terms[1] + 1))
        centers = rng.uniform(0.0, center_max, k)
        widths = np.exp(rng.uniform(np.log(width_range[0]), np.log(width_range[1]), k))
        signs = rng.choice([-1.0, 1.0], k) * rng.uniform(0.2, 1.0, k)
        return cls(tuple(centers), tuple(widths), tuple(signs))


class RadialState:
    """Radial wave function ``phi(x) = u(|x|) / sqrt(4 pi)``.

    ``u`` is any vectorized callable; it is normalized on construction so
    that ``int u^2 r^2 dr = 1``.
    """

    def __init__(self, u, quad: RadialQuadrature | None = None):
        self.u = u
        self.quad = quad or RadialQuadrature()
        self._scale = 1.0
        n2 = self._norm2(self.quad)
        if not n2 > 0:
            raise ParameterError("radial profile has zero norm")
        self._scale = 1.0 / np.sqrt(n2)

    def profile(self, r):
        return self._scale * self.u(r)

    @property
    def nodes(self):
        return self.quad.r

    @property
    def weights(self):
        return self.quad.weights

    def _norm2(self, q):
        r = q.r
        return float(np.sum(q.weights * (self._scale * self.u(r)) ** 2 * r**2))

    def norm2(self, quad=None) -> float:
        return self._norm2(quad or self.quad)

    def inverse_r(self, quad=None) -> float:
        """``<phi, |x|^{-1} phi> / <phi, phi>``."""
        q = quad or self.quad
        r = q.r
        u2 = self.profile(r) ** 2
        # u is treated as constant on (0, r_min)
        head = u2[0] * r[0] ** 2
        return float((np.sum(q.weights * u2 * r) + head / 2) / (np.sum(q.weights * u2 * r**2) + head * r[0] / 3))

    def momentum_weights(self, quad=None):
        """``(k, |F(k)|^2)`` with ``F`` the orthonormal sine transform of ``r u``."""
        q = quad or self.quad
        J = q.uniform
        dr = q.R / J
        r = dr * np.arange(1, J)
        f = r * self.profile(r) * np.sqrt(dr)
        F = sfft.dst(f, type=1, norm="ortho")
        k = np.pi * np.arange(1, J) / q.R
        return k, np.abs(F) ** 2

    def kinetic(self, quad=None, massless=False) -> float:
        """``<(1 - Laplacian)^{1/2}>`` (or ``<|p|>``) per unit norm."""
        k, w = self.momentum_weights(quad)
        symbol = k if massless else np.sqrt(1 + k * k)
        return float(np.sum(symbol * w) / np.sum(w))

    def ratio(self, quad=None, massless=False) -> float:
        return self.inverse_r(quad) / self.kinetic(quad, massless)

    def dilated(self, mu: float) -> "RadialState":
        """``mu^{3/2} u(mu r)``, same quadrature."""
        u = self.u
        return RadialState(lambda r: u(mu * np.asarray(r)), self.quad)


@dataclass
class HerbstReport:
    ratios: np.ndarray
    rejected: int
    bound: float
    seed: int
    quadrature: RadialQuadrature
    profiles: list = field(default_factory=list, repr=False)

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max()) if len(self.ratios) else float("nan")

    @property
    def violations(self) -> int:
        return int(np.sum(self.ratios > self.bound))

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def summary(self) -> dict:
        q = self.quadrature
        return {
            "max_ratio": self.max_ratio,
            "bound": self.bound,
            "violations": self.violations,
            "accepted": len(self.ratios),
            "rejected": self.rejected,
            "seed": self.seed,
            "quadrature": {"nodes": q.nodes, "r_min": q.r_min, "R": q.R, "uniform": q.uniform},
        }


def herbst_check(samples: int, seed: int = 0, quad: RadialQuadrature | None = None, tol: float = 1e-6) -> HerbstReport:
    """Largest ``<1/|x|> / <(1 - Laplacian)^{1/2}>`` over random radial states.

    A sample whose ratio moves by more than ``tol`` (relative) when all
    node counts double is rejected and logged.
    """
    if samples < 1:
        raise ParameterError(f"samples must be >= 1, got {samples}")
    quad = quad or RadialQuadrature()
    fine = quad.refined()
    rng = np.random.default_rng(seed)
    ratios, kept = [], []
    rejected = 0
    for i in range(samples):
        prof = GaussianProfile.random(rng)
        st = RadialState(prof, quad)
        r0 = st.ratio()
        r1 = st.ratio(fine)
        if abs(r1 - r0) > tol * abs(r1):
            rejected += 1
            log.warning("sample %d rejected: ratio %.9g vs %.9g under refinement", i, r0, r1)
            continue
        ratios.append(r0)
        kept.append(prof)
    return HerbstReport(np.array(ratios), rejected, HERBST_CONSTANT * (1 + HERBST_SLACK), seed, quad, kept)


# two-particle mixed powers


@lru_cache(maxsize=None)
def cell_average_factor(a: float) -> float:
    """``A(a)`` with ``mean of |x|^{-a} over [-h/2, h/2]^3 = A(a) h^{-a}``.

    The cube splits into six pyramids over its faces; on each the radial
    integral is explicit and a smooth face integral remains.
    """
    if not 0 <= a < 3:
        raise ParameterError(f"a must lie in [0, 3), got {a}")
    face, _ = dblquad(lambda t, s: (1 + s * s + t * t) ** (-a / 2), 0, 1, 0, 1, epsabs=1e-13, epsrel=1e-12)
    return 24 * 0.5 ** (3 - a) / (3 - a) * face


@dataclass(frozen=True)
class CubeGrid:
    n: int = 16
    L: float = 10.0

    @property
    def h(self):
        return self.L / self.n

    def radius(self):
        x = (np.arange(self.n) - self.n // 2) * self.h
        X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
        return np.sqrt(X * X + Y * Y + Z * Z)

    def ksq(self):
        k = 2 * np.pi * np.fft.fftfreq(self.n, d=self.h)
        KX, KY, KZ = np.meshgrid(k, k, k, indexing="ij")
        return KX * KX + KY * KY + KZ * KZ


def _power_kernel_ft(grid: CubeGrid, a: float):
    """FFT of ``|x|^{-a}`` on the doubled grid used for aperiodic convolution."""
    m = 2 * grid.n
    idx = np.arange(m)
    idx = np.where(idx < grid.n, idx, idx - m) * grid.h
    X, Y, Z = np.meshgrid(idx, idx, idx, indexing="ij")
    r = np.sqrt(X * X + Y * Y + Z * Z)
    K = np.empty_like(r)
    nz = r > 0
    K[nz] = r[nz] ** (-a)
    K[~nz] = cell_average_factor(a) * grid.h ** (-a)
    return sfft.fftn(K)


def _aperiodic_convolve(Kft, f, n):
    m = 2 * n
    out = sfft.ifftn(Kft * sfft.fftn(f, s=(m, m, m)))
    return out[:n, :n, :n]


def _sobolev_gram(fs, grid: CubeGrid, power: float):
    """``G[r, s] = <f_r, (1 - Laplacian)^{power/2} f_s>``."""
    sym = (1 + grid.ksq()) ** (power / 2)
    F = [sfft.fftn(f) for f in fs]
    G = np.empty((len(fs), len(fs)), dtype=complex)
    for i, fi in enumerate(F):
        for j, fj in enumerate(F):
            G[i, j] = np.vdot(fi, sym * fj)
    return G / grid.n**3 * grid.h**3


@dataclass(frozen=True)
class LowRankState:
    """``Phi(x1, x2) = sum_r coef_r f_r(|x1|) g_r(|x2|)`` from radial profiles."""

    coef: tuple
    left: tuple
    right: tuple

    @classmethod
    def random(cls, rng, rank=None, identical=False):
        rank = rank or int(rng.integers(1, 4))
        prof = lambda: GaussianProfile.random(rng, terms=(1, 2), center_max=1.5, width_range=(0.7, 1.5))  # noqa: E731
        left = tuple(prof() for _ in range(rank))
        right = left if identical else tuple(prof() for _ in range(rank))
        coef = tuple(rng.normal(size=rank)) if rank > 1 else (1.0,)
        return cls(coef, left, right)


def mixed_ratio(state: LowRankState, a: float, alpha: float, beta: float, grid: CubeGrid) -> float:
    """``<Phi, |x1 - x2|^{-a} Phi> / <Phi, S1^alpha S2^beta Phi>`` on ``grid``.

    ``S^alpha`` is the Fourier multiplier ``(1 + |k|^2)^{alpha/4}``.
    """
    r = grid.radius()
    fs = [p(r) for p in state.left]
    gs = [p(r) for p in state.right]
    c = np.asarray(state.coef, dtype=float)
    Kft = _power_kernel_ft(grid, a)
    R = len(c)
    num = 0.0
    for i in range(R):
        for j in range(R):
            conv = _aperiodic_convolve(Kft, np.conj(gs[i]) * gs[j], grid.n)
            num += c[i] * c[j] * np.sum(np.conj(fs[i]) * fs[j] * conv).real
    num *= grid.h**6
    den = float(np.real(c @ (_sobolev_gram(fs, grid, alpha / 2) * _sobolev_gram(gs, grid, beta / 2)) @ c))
    return num / den


@dataclass
class MixedReport:
    a: float
    alpha: float
    beta: float
    ratios: np.ndarray
    refined: np.ndarray
    rejected: int
    seed: int

    @property
    def constant(self) -> float:
        """Largest accepted ratio (an empirical lower bound on the optimal constant)."""
        return float(self.ratios.max()) if len(self.ratios) else float("nan")

    @property
    def refined_constant(self) -> float:
        return float(self.refined.max()) if len(self.refined) else float("nan")

    def summary(self) -> dict:
        return {
            "a": self.a,
            "alpha": self.alpha,
            "beta": self.beta,
            "measured_constant": self.constant,
            "measured_constant_refined": self.refined_constant,
            "accepted": len(self.ratios),
            "rejected": self.rejected,
            "seed": self.seed,
        }


def mixed_power_check(a: float, alpha: float, beta: float, samples: int, seed: int = 0, n: int = 16, L: float = 10.0, refine_n: int | None = 24, stability: float = 0.05, identical: bool = False) -> MixedReport:
    """Empirical constant in ``|x1 - x2|^{-a} <= C S1^alpha S2^beta``.

    Each random low-rank state is evaluated on an ``n``-grid and, if
    ``refine_n`` is given, on the finer grid of the same box; samples whose
    ratio moves by more than ``stability`` are rejected.
    """
    if not 0 < a < 3:
        raise ParameterError(f"a must lie in (0, 3), got {a}")
    if alpha <= 0 or beta <= 0:
        raise ParameterError("alpha and beta must both be positive")
    if abs(alpha + beta - 2 * a) > 1e-12:
        raise ParameterError(f"need alpha + beta = 2a, got {alpha} + {beta} vs {2 * a}")
    rng = np.random.default_rng(seed)
    g0 = CubeGrid(n, L)
    g1 = CubeGrid(refine_n, L) if refine_n else None
    ratios, fine = [], []
    rejected = 0
    for i in range(samples):
        st = LowRankState.random(rng, rank=1 if identical else None, identical=identical)
        r0 = mixed_ratio(st, a, alpha, beta, g0)
        if g1 is not None:
            r1 = mixed_ratio(st, a, alpha, beta, g1)
            if abs(r1 - r0) > stability * abs(r1):
                rejected += 1
                log.warning("sample %d rejected: ratio %.6g on n=%d vs %.6g on n=%d", i, r0, n, r1, refine_n)
                continue
            fine.append(r1)
        ratios.append(r0)
    return MixedReport(a, alpha, beta, np.array(ratios), np.array(fine), rejected, seed)
