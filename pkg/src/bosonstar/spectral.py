"""Periodic 3-D pseudospectral representation of one-particle wave functions.

A field lives on an ``n**3`` grid in a box of edge ``L`` with points
``x_j = (j - n/2) h``, so the grid origin sits at index ``n//2`` along each
axis.  The spectrum holds the coefficients of the field in the orthonormal
plane-wave basis ``L**-1.5 * exp(i k.(x - x_0))``; with this normalization
the discrete L2 norm ``sum |phi|^2 h^3`` equals ``sum |c_k|^2``.

Coulomb multipliers are in continuum Fourier units, so that the convolution
``(V * rho)(x) = ifftn(W(k) * fftn(rho))`` approximates the integral
``int V(x - y) rho(y) dy``.  The ``k = 0`` component is always set to zero
(neutralizing background).
"""

from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import special

from .errors import ConfigurationError, InvalidStateError, ParameterError

log = logging.getLogger(__name__)

#: Madelung constant of the simple cubic Wigner lattice.  The periodic
#: Coulomb potential with zero mode removed behaves as
#: ``1/r - MADELUNG/L + 2 pi r^2 / (3 L^3) + O(r^4)`` near a point charge.
MADELUNG = 2.837297479480620

_IMAG_TOL = 1e-12
_IMAG_FAIL = 1e-8


@dataclass(frozen=True)
class Grid3:
    """Cubic periodic grid with ``n`` points per axis and edge length ``L``."""

    n: int
    L: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise ConfigurationError(f"n must be an even integer >= 4, got {self.n}", key="grid.n")
        if not self.L > 0:
            raise ConfigurationError(f"L must be positive, got {self.L}", key="grid.L")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def x(self) -> np.ndarray:
        """1-D coordinates, origin at index ``n // 2``."""
        return (np.arange(self.n) - self.n // 2) * self.h

    @property
    def k(self) -> np.ndarray:
        """1-D momenta in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    def mesh(self):
        return np.meshgrid(self.x, self.x, self.x, indexing="ij")

    @property
    def ksq(self) -> np.ndarray:
        return _ksq(self.n, float(self.L))

    @property
    def kabs(self) -> np.ndarray:
        return _derived(self.n, float(self.L))[0]

    @property
    def omega(self) -> np.ndarray:
        """Relativistic dispersion ``sqrt(1 + |k|^2)``."""
        return _derived(self.n, float(self.L))[1]

    @property
    def k_nyquist(self) -> float:
        return np.pi / self.h


@lru_cache(maxsize=16)
def _derived(n, L):
    ksq = _ksq(n, L)
    kabs, omega = np.sqrt(ksq), np.sqrt(1.0 + ksq)
    kabs.setflags(write=False)
    omega.setflags(write=False)
    return kabs, omega


@lru_cache(maxsize=16)
def _ksq(n, L):
    k = 2 * np.pi * np.fft.fftfreq(n, d=L / n)
    out = k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2
    out.setflags(write=False)
    return out


class SpectralField:
    """Complex wave function on a :class:`Grid3`.

    Either representation may be supplied; the other is computed on first
    access and cached.  Fields are treated as immutable: operations return
    new fields.
    """

    __slots__ = ("grid", "_values", "_spectrum")

    def __init__(self, grid: Grid3, values=None, spectrum=None):
        if (values is None) == (spectrum is None):
            raise ConfigurationError("give exactly one of values or spectrum")
        shape = (grid.n,) * 3
        arr = values if values is not None else spectrum
        arr = np.asarray(arr, dtype=np.complex128)
        if arr.shape != shape:
            raise ConfigurationError(f"array shape {arr.shape} does not match grid {shape}")
        self.grid = grid
        self._values = arr if values is not None else None
        self._spectrum = arr if spectrum is not None else None

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            g = self.grid
            self._values = sfft.ifftn(self._spectrum) * (g.n**3 / g.L**1.5)
        return self._values

    @property
    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            g = self.grid
            self._spectrum = sfft.fftn(self._values) * (g.L**1.5 / g.n**3)
        return self._spectrum

    @property
    def density(self) -> np.ndarray:
        v = self.values
        return v.real**2 + v.imag**2

    def check_finite(self):
        arr = self._values if self._values is not None else self._spectrum
        if not np.all(np.isfinite(arr)):
            raise InvalidStateError("field contains non-finite values")
        return self

    def normalized(self) -> "SpectralField":
        nrm = norm(self)
        if nrm == 0:
            raise InvalidStateError("cannot normalize the zero field")
        if self._spectrum is not None:
            return SpectralField(self.grid, spectrum=self._spectrum / nrm)
        return SpectralField(self.grid, values=self._values / nrm)

    def __mul__(self, scalar):
        return SpectralField(self.grid, values=self.values * scalar)

    __rmul__ = __mul__

    def __add__(self, other):
        _same_grid(self.grid, other.grid)
        return SpectralField(self.grid, values=self.values + other.values)

    def __sub__(self, other):
        _same_grid(self.grid, other.grid)
        return SpectralField(self.grid, values=self.values - other.values)

    def inner(self, other) -> complex:
        """``<self, other>``, antilinear in ``self``."""
        _same_grid(self.grid, other.grid)
        return complex(np.vdot(self.spectrum, other.spectrum))

    def translated(self, shift) -> "SpectralField":
        """Translate by an integer number of grid cells along each axis."""
        return SpectralField(self.grid, values=np.roll(self.values, shift, axis=(0, 1, 2)))

    def __repr__(self):
        return f"SpectralField(n={self.grid.n}, L={self.grid.L}, norm={norm(self):.6g})"

    # constructors

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func(X, Y, Z)`` on the grid."""
        X, Y, Z = grid.mesh()
        return cls(grid, values=func(X, Y, Z))

    @classmethod
    def plane_wave(cls, grid, m):
        """Normalized plane wave with integer wave vector ``m`` (momentum ``2 pi m / L``)."""
        spec = np.zeros((grid.n,) * 3, dtype=np.complex128)
        spec[tuple(int(mi) % grid.n for mi in m)] = 1.0
        return cls(grid, spectrum=spec)

    @classmethod
    def constant(cls, grid):
        return cls.plane_wave(grid, (0, 0, 0))

    @classmethod
    def gaussian(cls, grid, sigma=1.0, center=(0.0, 0.0, 0.0), momentum=(0.0, 0.0, 0.0)):
        """Normalized Gaussian ``(pi sigma^2)^(-3/4) exp(-|x-c|^2 / (2 sigma^2) + i p.x)``.

        The density is ``(pi sigma^2)^(-3/2) exp(-|x-c|^2 / sigma^2)``.
        """
        c = np.asarray(center, dtype=float)
        p = np.asarray(momentum, dtype=float)

        def f(X, Y, Z):
            r2 = (X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2
            phase = p[0] * X + p[1] * Y + p[2] * Z
            return (np.pi * sigma**2) ** -0.75 * np.exp(-r2 / (2 * sigma**2) + 1j * phase)

        return cls.from_function(grid, f).normalized()

    @classmethod
    def random_smooth(cls, grid, rng, kcut=None, complex_valued=True):
        """Random normalized field with a Gaussian spectral envelope of width ``kcut``."""
        if kcut is None:
            kcut = grid.k_nyquist / 3
        shape = (grid.n,) * 3
        spec = rng.standard_normal(shape)
        if complex_valued:
            spec = spec + 1j * rng.standard_normal(shape)
        spec = spec * np.exp(-grid.ksq / (2 * kcut**2))
        return cls(grid, spectrum=spec).normalized()


def _same_grid(a: Grid3, b: Grid3):
    if a != b:
        raise ConfigurationError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True)
class CoulombKernel:
    """Fourier multiplier of the Coulomb potential ``1/|x|`` or of ``1/(|x| + a)``.

    Build with :meth:`exact` or :meth:`regularized`.
    """

    grid: Grid3
    variant: str
    a: float = 0.0
    multiplier: np.ndarray = field(default=None, repr=False, compare=False)

    @classmethod
    def exact(cls, grid: Grid3) -> "CoulombKernel":
        ksq = grid.ksq
        with np.errstate(divide="ignore"):
            mult = np.where(ksq > 0, 4 * np.pi / np.where(ksq > 0, ksq, 1.0), 0.0)
        return cls(grid, "exact", 0.0, mult)

    @classmethod
    def regularized(cls, grid: Grid3, a: float, method: str = "analytic") -> "CoulombKernel":
        """Kernel of ``1/(|x| + a)``.

        ``method="analytic"`` evaluates the continuum transform
        :func:`regularized_coulomb_ft` on the lattice; ``method="sampled"``
        takes the DFT of ``1/(d(x) + a)`` sampled with the minimum-image
        distance ``d``.  The sampled multiplier carries an ``h^3/a`` spike
        that diverges as ``a -> 0``, so it only makes sense for ``a >~ h``.
        """
        if a < 0:
            raise ParameterError(f"regularization length must be >= 0, got {a}")
        if method == "analytic":
            mult = regularized_coulomb_ft(grid.kabs, a)
        elif method == "sampled":
            if a == 0:
                raise ParameterError("sampled kernel needs a > 0")
            idx = np.arange(grid.n)
            d1 = np.minimum(idx, grid.n - idx) * grid.h
            dist = np.sqrt(d1[:, None, None] ** 2 + d1[None, :, None] ** 2 + d1[None, None, :] ** 2)
            mult = (sfft.fftn(1.0 / (dist + a)) * grid.cell_volume).real
        else:
            raise ConfigurationError(f"unknown kernel method {method!r}", key="physics.kernel")
        mult = np.array(mult, dtype=float)
        mult[0, 0, 0] = 0.0
        return cls(grid, "regularized", float(a), mult)

    def __post_init__(self):
        mult = np.asarray(self.multiplier)
        if not np.all(np.isfinite(mult)):
            raise InvalidStateError("kernel multiplier is not finite")
        # W(-k) sits at index (-i) mod n; the real-to-complex convolution
        # below is exact only for an even multiplier.
        flipped = np.roll(mult[::-1, ::-1, ::-1], 1, axis=(0, 1, 2))
        scale = max(np.max(np.abs(mult)), 1e-300)
        asym = np.max(np.abs(mult - flipped)) / scale
        if asym > _IMAG_FAIL:
            raise InvalidStateError(f"kernel multiplier is not even (asymmetry {asym:.2e})")
        if asym > _IMAG_TOL:
            log.warning("kernel multiplier asymmetry %.2e above %.0e", asym, _IMAG_TOL)
        half = np.ascontiguousarray(mult[:, :, : self.grid.n // 2 + 1])
        object.__setattr__(self, "_half", half)


def _aux_f(z):
    # f(z) = int_0^inf sin(t) / (t + z) dt = Ci(z) sin z - (Si(z) - pi/2) cos z
    si, ci = special.sici(z)
    return ci * np.sin(z) - (si - np.pi / 2) * np.cos(z)


def regularized_coulomb_ft(k, a):
    """Continuum Fourier transform of ``1/(|x| + a)`` at ``|k| = k > 0``.

    ``4 pi / k^2 - (4 pi a / k) f(k a)`` with ``f`` the auxiliary sine
    integral; reduces to ``4 pi / k^2`` at ``a = 0``.  Entries with ``k = 0``
    return 0.
    """
    k = np.asarray(k, dtype=float)
    out = np.zeros_like(k)
    pos = k > 0
    kp = k[pos]
    out[pos] = 4 * np.pi / kp**2
    if a > 0:
        out[pos] -= 4 * np.pi * a / kp * _aux_f(kp * a)
    return out


@dataclass(frozen=True)
class EnergyBreakdown:
    """Kinetic ``K``, interaction ``D`` and total ``E = K + lam D / 2``."""

    K: float
    D: float
    E: float
    lam: float

    def as_dict(self):
        return {"K": self.K, "D": self.D, "E": self.E, "lambda": self.lam}


def sobolev_apply(phi: SpectralField, r: float) -> SpectralField:
    """Apply ``(1 - Laplacian)^r``; ``r = 1/4`` is the operator ``S``."""
    if not -2 <= r <= 2:
        raise ParameterError(f"exponent r must lie in [-2, 2], got {r}")
    phi.check_finite()
    if r == 0:
        return SpectralField(phi.grid, spectrum=phi.spectrum.copy())
    return SpectralField(phi.grid, spectrum=(1.0 + phi.grid.ksq) ** r * phi.spectrum)


def coulomb_convolve(rho: np.ndarray, kernel: CoulombKernel) -> np.ndarray:
    """Real field ``V * rho`` for a real density ``rho`` on the kernel's grid.

    Uses real-to-complex transforms, so the result is real by construction;
    the kernel's evenness (checked when it is built) makes this equal to the
    full complex convolution.
    """
    n = kernel.grid.n
    return sfft.irfftn(kernel._half * sfft.rfftn(rho), s=(n, n, n))


def coulomb_convolve_complex(rho: np.ndarray, kernel: CoulombKernel) -> np.ndarray:
    """Full complex-transform convolution with explicit imaginary-residue check.

    Residues above 1e-12 (relative) are logged; above 1e-8 they raise.
    """
    pot = sfft.ifftn(kernel.multiplier * sfft.fftn(rho))
    scale = max(np.max(np.abs(pot.real)), 1e-300)
    resid = np.max(np.abs(pot.imag)) / scale
    if resid > _IMAG_FAIL:
        raise InvalidStateError(f"Coulomb convolution has imaginary residue {resid:.2e}")
    if resid > _IMAG_TOL:
        log.warning("Coulomb convolution imaginary residue %.2e above %.0e", resid, _IMAG_TOL)
    return pot.real


def hartree_potential(phi: SpectralField, kernel: CoulombKernel, lam: float) -> np.ndarray:
    """Mean-field potential ``lam * (V * |phi|^2)`` as a real array."""
    _same_grid(phi.grid, kernel.grid)
    if lam == 0:
        return np.zeros((phi.grid.n,) * 3)
    return lam * coulomb_convolve(phi.density, kernel)


def kinetic(phi: SpectralField) -> float:
    """``<phi, (1 - Laplacian)^(1/2) phi>``."""
    c = phi.spectrum
    return float(np.sum(phi.grid.omega * (c.real**2 + c.imag**2)))


def kinetic_hom(phi: SpectralField) -> float:
    """``<phi, |p| phi>``."""
    c = phi.spectrum
    return float(np.sum(phi.grid.kabs * (c.real**2 + c.imag**2)))


def interaction(phi: SpectralField, kernel: CoulombKernel) -> float:
    """``D = int (V * |phi|^2) |phi|^2``."""
    _same_grid(phi.grid, kernel.grid)
    rho = phi.density
    # D = sum_k W(k) |rho_hat(k)|^2 / L^3 with rho_hat = h^3 fft(rho)
    return float(np.sum(coulomb_convolve(rho, kernel) * rho) * phi.grid.cell_volume)


def energy(phi: SpectralField, kernel: CoulombKernel, lam: float) -> EnergyBreakdown:
    """Chandrasekhar energy ``K + (lam/2) D`` of ``phi``."""
    phi.check_finite()
    if norm(phi) == 0:
        raise InvalidStateError("energy of the zero field is undefined")
    K = kinetic(phi)
    D = interaction(phi, kernel)
    return EnergyBreakdown(K, D, K + 0.5 * lam * D, lam)


def smooth_kappa(phi: SpectralField, kappa: float, N: int) -> SpectralField:
    """Initial-data smoothing ``exp(-kappa |p| / N) phi``."""
    if kappa < 0:
        raise ParameterError(f"kappa must be >= 0, got {kappa}")
    if N < 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    if kappa == 0:
        return SpectralField(phi.grid, spectrum=phi.spectrum.copy())
    return SpectralField(phi.grid, spectrum=np.exp(-kappa * phi.grid.kabs / N) * phi.spectrum)


def norm(phi: SpectralField, kind: str = "L2") -> float:
    """L2, H^{1/2} or H^1 norm, all with the ``(1 + |k|^2)^s`` weight."""
    if phi._spectrum is None and kind == "L2":
        v = phi.values
        return float(np.sqrt(np.sum(v.real**2 + v.imag**2) * phi.grid.cell_volume))
    c = phi.spectrum
    p = c.real**2 + c.imag**2
    if kind == "L2":
        return float(np.sqrt(np.sum(p)))
    if kind == "Hhalf":
        return float(np.sqrt(np.sum(phi.grid.omega * p)))
    if kind == "H1":
        return float(np.sqrt(np.sum((1.0 + phi.grid.ksq) * p)))
    raise ParameterError(f"unknown norm kind {kind!r}")


# serialization

_MAGIC = b"BSFIELD1"
_HEADER = struct.Struct("<8sIdB3x")
_TAGS = {"position": 0, "momentum": 1}


def save_field(path, phi: SpectralField, representation: str = "position"):
    """Write ``phi`` as header + interleaved re/im float64, x index fastest."""
    if representation not in _TAGS:
        raise ParameterError(f"unknown representation {representation!r}")
    arr = phi.values if representation == "position" else phi.spectrum
    flat = np.asarray(arr).ravel(order="F")
    inter = np.empty(2 * flat.size, dtype="<f8")
    inter[0::2] = flat.real
    inter[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, phi.grid.n, float(phi.grid.L), _TAGS[representation]))
        fh.write(inter.tobytes())


def load_field(path) -> SpectralField:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, n, L, tag = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise InvalidStateError(f"{path}: not a field file")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != 2 * n**3:
        raise InvalidStateError(f"{path}: expected {2 * n**3} doubles, found {data.size}")
    arr = (data[0::2] + 1j * data[1::2]).reshape((n, n, n), order="F")
    grid = Grid3(n, L)
    if tag == _TAGS["position"]:
        return SpectralField(grid, values=arr)
    return SpectralField(grid, spectrum=arr)


def write_density_slice(path, phi: SpectralField, axis: int = 2, index=None):
    """CSV of ``|phi|^2`` on the plane ``axis = index`` (default: through the origin)."""
    g = phi.grid
    if index is None:
        index = g.n // 2
    rho = np.take(phi.density, index, axis=axis)
    names = [a for i, a in enumerate("xyz") if i != axis]
    x = g.x
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([names[0], names[1], "density"])
        for i in range(g.n):
            for j in range(g.n):
                w.writerow([f"{x[i]:.17g}", f"{x[j]:.17g}", f"{rho[i, j]:.17g}"])
