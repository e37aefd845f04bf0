"""Exact N-boson dynamics in a truncated plane-wave basis.

The one-particle space is spanned by plane waves ``L^{-3/2} exp(i k_a x)``
for a finite :class:`ModeSet`.  On the symmetric N-particle space (the
:class:`FockBasis` of occupation vectors) the mean-field Hamiltonian reads

    H = sum_a eps_a n_a
        + lam / (2 N L^3) sum_{a,b,q} W(q) a+_{a+q} a+_{b-q} a_b a_a

with ``eps_a = sqrt(1 + |k_a|^2)``.  Scattering terms whose outgoing
momenta leave the mode set are dropped.  The same list of momentum
conserving quadruples drives the mode-space Hartree equation, so the
N-body and mean-field sides share one truncation exactly.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from math import comb, lgamma

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.special import gammaln

from .errors import CapacityError, ConfigurationError, ParameterError, PropagationError
from .spectral import regularized_coulomb_ft

log = logging.getLogger(__name__)

DIMENSION_CAP = 200_000
DENSE_BELOW = 512


# modes


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Finite list of lattice momenta ``2 pi m / L``."""

    ints: np.ndarray
    L: float = 2 * np.pi

    def __post_init__(self):
        ints = np.atleast_2d(np.asarray(self.ints, dtype=np.int64))
        if ints.shape[1] != 3:
            raise ConfigurationError("mode vectors must be integer triples")
        if len({tuple(m) for m in ints}) != len(ints):
            raise ConfigurationError("duplicate modes")
        if not self.L > 0:
            raise ConfigurationError("L must be positive", key="fock.L")
        ints.setflags(write=False)
        object.__setattr__(self, "ints", ints)

    @property
    def M(self) -> int:
        return len(self.ints)

    def __len__(self):
        return self.M

    @cached_property
    def momenta(self) -> np.ndarray:
        return self.ints * (2 * np.pi / self.L)

    @cached_property
    def eps(self) -> np.ndarray:
        return np.sqrt(1.0 + np.sum(self.momenta**2, axis=1))

    @cached_property
    def lookup(self) -> dict:
        return {tuple(int(x) for x in m): i for i, m in enumerate(self.ints)}

    def index(self, m):
        return self.lookup.get(tuple(int(x) for x in m))

    @property
    def symmetric(self) -> bool:
        """Closed under negation and containing ``k = 0``."""
        return (0, 0, 0) in self.lookup and all(tuple(-int(x) for x in m) in self.lookup for m in self.ints)

    def __repr__(self):
        return f"ModeSet(M={self.M}, L={self.L:.6g})"


def build_modes(radius: int, L: float = 2 * np.pi) -> ModeSet:
    """All integer triples with ``|m|^2 <= radius^2``, ordered by ``|m|`` then lexicographically."""
    if radius < 0:
        raise ParameterError(f"radius must be >= 0, got {radius}")
    r = int(np.floor(radius))
    rng = range(-r, r + 1)
    ms = [m for m in itertools.product(rng, rng, rng) if m[0] ** 2 + m[1] ** 2 + m[2] ** 2 <= radius**2]
    ms.sort(key=lambda m: (m[0] ** 2 + m[1] ** 2 + m[2] ** 2, m))
    return ModeSet(np.array(ms, dtype=np.int64), L)


# occupation basis


def _count(r, m):
    """Number of ways to put ``r`` bosons in ``m`` modes."""
    if m == 0:
        return 1 if r == 0 else 0
    return comb(r + m - 1, m - 1)


def fock_dimension(M: int, N: int) -> int:
    return comb(N + M - 1, M - 1)


def _compositions(N, M, memo):
    key = (N, M)
    if key not in memo:
        if M == 1:
            out = np.array([[N]], dtype=np.int64)
        else:
            blocks = []
            for v in range(N, -1, -1):
                tail = _compositions(N - v, M - 1, memo)
                blocks.append(np.column_stack([np.full(len(tail), v, dtype=np.int64), tail]))
            out = np.vstack(blocks)
        memo[key] = out
    return memo[key]


class FockBasis:
    """Occupation vectors with ``sum n_a = N`` in descending lexicographic order.

    ``states[0]`` is ``(N, 0, ..., 0)``.  :meth:`index` inverts the
    enumeration through the combinatorial number system.
    """

    def __init__(self, M: int, N: int, cap: int = DIMENSION_CAP):
        if M < 1:
            raise ParameterError(f"need at least one mode, got M={M}")
        if N < 0:
            raise ParameterError(f"N must be >= 0, got {N}")
        dim = fock_dimension(M, N)
        if dim > cap:
            raise CapacityError(M, N, dim, cap)
        self.M, self.N, self.cap = M, N, cap
        self.states = _compositions(N, M, {}) if M > 1 else np.array([[N]], dtype=np.int64)
        self.states.setflags(write=False)
        # offsets[i, r, v]: states preceding those with n_i = v given r bosons left
        offs = np.zeros((M, N + 1, N + 1), dtype=np.int64)
        for i in range(M):
            rest = M - i - 1
            for r in range(N + 1):
                acc = 0
                for v in range(r, -1, -1):
                    offs[i, r, v] = acc
                    acc += _count(r - v, rest)
        self._offsets = offs
        self._sub = {}

    @property
    def dim(self) -> int:
        return len(self.states)

    def __len__(self):
        return self.dim

    def index(self, occ) -> np.ndarray:
        """Position of occupation vector(s) ``occ`` (shape ``(M,)`` or ``(k, M)``)."""
        occ = np.asarray(occ, dtype=np.int64)
        single = occ.ndim == 1
        occ = np.atleast_2d(occ)
        remaining = self.N - np.concatenate([np.zeros((len(occ), 1), dtype=np.int64), np.cumsum(occ, axis=1)[:, :-1]], axis=1)
        idx = self._offsets[np.arange(self.M)[None, :], remaining, occ].sum(axis=1)
        return int(idx[0]) if single else idx

    def lower(self, k: int = 1) -> "FockBasis":
        """Basis with ``N - k`` particles over the same modes (cached)."""
        if k not in self._sub:
            self._sub[k] = FockBasis(self.M, self.N - k, self.cap)
        return self._sub[k]

    def annihilate(self, a: int):
        """``(src, dst, amp)`` with ``a_a |src> = amp |dst>`` into :meth:`lower`."""
        key = ("ann", a)
        if key not in self._sub:
            n = self.states[:, a]
            src = np.nonzero(n > 0)[0]
            occ = self.states[src].copy()
            occ[:, a] -= 1
            dst = self.lower(1).index(occ)
            self._sub[key] = (src, dst, np.sqrt(n[src].astype(float)))
        return self._sub[key]

    def __repr__(self):
        return f"FockBasis(M={self.M}, N={self.N}, dim={self.dim})"


def enumerate_fock(M: int, N: int, cap: int = DIMENSION_CAP) -> FockBasis:
    return FockBasis(M, N, cap)


# interaction


def coulomb_weight(q, L: float, a: float = 0.0):
    """Pair-interaction matrix element ``W(q) / L^3`` for momenta ``q`` (``W(0) = 0``)."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    return regularized_coulomb_ft(np.linalg.norm(q, axis=1), a) / L**3


@dataclass(frozen=True)
class Quadruples:
    """Momentum-conserving scatterings ``a+_c a+_d a_b a_a`` with weight ``W(k_c - k_a)/L^3``."""

    c: np.ndarray
    d: np.ndarray
    b: np.ndarray
    a: np.ndarray
    w: np.ndarray
    dropped: int

    def __len__(self):
        return len(self.w)

    def pair_matrix(self, M: int) -> np.ndarray:
        """Two-body operator on ordered pairs: ``V[(c, d), (a, b)] = w``."""
        V = np.zeros((M * M, M * M))
        np.add.at(V, (self.c * M + self.d, self.a * M + self.b), self.w)
        return V


_logged_drop = set()


def interaction_quadruples(modes: ModeSet, a: float = 0.0) -> Quadruples:
    """All ``(c, d, b, a)`` with ``k_c + k_d = k_a + k_b`` inside the mode set.

    ``a`` is the regularization length (``0`` for the bare Coulomb kernel).
    Terms whose momentum ``k_a + k_b - k_c`` falls outside the set are
    dropped; their number is reported once per mode set.
    """
    M = modes.M
    ints = modes.ints
    out = []
    dropped = 0
    for ia in range(M):
        for ib in range(M):
            tot = ints[ia] + ints[ib]
            for ic in range(M):
                q = ints[ic] - ints[ia]
                if not q.any():
                    continue
                id_ = modes.index(tot - ints[ic])
                if id_ is None:
                    dropped += 1
                    continue
                out.append((ic, id_, ib, ia, q))
    if not out:
        e = np.zeros(0, dtype=np.int64)
        return Quadruples(e, e, e, e, np.zeros(0), dropped)
    c, d, b, a_, q = zip(*out)
    w = coulomb_weight(np.array(q) * (2 * np.pi / modes.L), modes.L, a)
    key = (modes.M, modes.L)
    if dropped and key not in _logged_drop:
        _logged_drop.add(key)
        log.info("dropped %d scattering terms leaving the %d-mode set", dropped, M)
    keep = w != 0
    arr = lambda x: np.asarray(x, dtype=np.int64)[keep]  # noqa: E731
    return Quadruples(arr(c), arr(d), arr(b), arr(a_), w[keep], dropped)


def _regularization_length(regularization, N):
    if regularization is None or regularization == "none":
        return 0.0
    eps = float(regularization)
    if eps <= 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")
    return eps / N


# Hamiltonian


class SparseHermitian:
    """Hermitian matrix stored as its upper triangle (``col >= row``)."""

    def __init__(self, dim, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if np.any(cols < rows):
            raise ConfigurationError("only entries with col >= row may be stored")
        vals = np.asarray(vals, dtype=np.complex128)
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("non-finite matrix entries")
        self.dim = int(dim)
        self.rows, self.cols, self.vals = rows, cols, vals
        upper = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
        strict = sp.triu(upper, k=1)
        self._full = (upper + strict.conj().T).tocsr()

    @classmethod
    def from_matrix(cls, mat, tol=1e-12):
        """Build from a full matrix, checking Hermiticity."""
        mat = sp.csr_matrix(mat)
        diff = abs(mat - mat.conj().T)
        scale = max(abs(mat).max(), 1e-300)
        if diff.nnz and diff.max() > tol * scale:
            raise ConfigurationError(f"matrix is not Hermitian (defect {diff.max():.2e})")
        up = sp.triu(mat).tocoo()
        return cls(mat.shape[0], up.row, up.col, up.data)

    @property
    def nnz(self) -> int:
        return len(self.vals)

    def matvec(self, v):
        return self._full @ v

    __matmul__ = matvec

    def to_csr(self):
        return self._full

    def to_dense(self):
        return self._full.toarray()

    def expectation(self, psi) -> float:
        return float(np.vdot(psi, self._full @ psi).real)

    def __repr__(self):
        return f"SparseHermitian(dim={self.dim}, nnz={self.nnz})"


def build_hamiltonian(basis: FockBasis, modes: ModeSet, lam: float, N: int | None = None, regularization=None) -> SparseHermitian:
    """Second-quantized ``H_N`` (or its regularized version) on ``basis``.

    ``regularization`` is ``None`` for the bare Coulomb kernel or a number
    ``eps``, in which case the pair potential is ``1/(|x| + eps/N)``.
    """
    N = basis.N if N is None else N
    if basis.M != modes.M:
        raise ConfigurationError(f"basis has {basis.M} modes, mode set has {modes.M}")
    D = basis.dim
    states = basis.states
    diag = states @ modes.eps
    rows, cols, vals = [np.arange(D)], [np.arange(D)], [diag.astype(complex)]
    if lam != 0 and N >= 2:
        quads = interaction_quadruples(modes, _regularization_length(regularization, N))
        pref = lam / (2.0 * N)
        for ic, id_, ib, ia, w in zip(quads.c, quads.d, quads.b, quads.a, quads.w):
            occ = states.copy()
            amp = np.sqrt(occ[:, ia].astype(float))
            occ[:, ia] -= 1
            amp *= np.sqrt(np.clip(occ[:, ib], 0, None).astype(float))
            occ[:, ib] -= 1
            ok = np.nonzero(amp > 0)[0]
            if not len(ok):
                continue
            occ = occ[ok]
            amp = amp[ok]
            occ[:, id_] += 1
            amp *= np.sqrt(occ[:, id_].astype(float))
            occ[:, ic] += 1
            amp *= np.sqrt(occ[:, ic].astype(float))
            rows.append(basis.index(occ))
            cols.append(ok)
            vals.append((pref * w) * amp.astype(complex))
    full = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(D, D)
    ).tocsr()
    full.sum_duplicates()
    return SparseHermitian.from_matrix(full)


# states


def condensate_state(c, basis: FockBasis) -> np.ndarray:
    """Fock amplitudes of ``(sum_a c_a a+_a)^N |0> / sqrt(N!)``."""
    c = np.asarray(c, dtype=np.complex128)
    if c.shape != (basis.M,):
        raise ParameterError(f"need {basis.M} mode amplitudes, got shape {c.shape}")
    if abs(np.linalg.norm(c) - 1) > 1e-12:
        raise ParameterError(f"mode amplitudes must be normalized (norm {np.linalg.norm(c):.15g})")
    n = basis.states
    lognorm = 0.5 * (lgamma(basis.N + 1) - gammaln(n + 1).sum(axis=1))
    amp = np.prod(np.power(c[None, :], n), axis=1)
    return amp * np.exp(lognorm)


def default_amplitudes(modes: ModeSet) -> np.ndarray:
    """Real condensate amplitudes ``c_a ~ exp(-|m_a|^2 / 2)``, normalized."""
    c = np.exp(-0.5 * np.sum(modes.ints.astype(float) ** 2, axis=1)).astype(complex)
    return c / np.linalg.norm(c)


def total_momentum(psi, basis: FockBasis, modes: ModeSet) -> np.ndarray:
    """``sum_a k_a <n_a>``."""
    occ = (np.abs(psi) ** 2) @ basis.states
    return occ @ modes.momenta


# propagation


def _expm_tridiag(alpha, beta, tau):
    """First column of ``exp(-i tau T)`` for the Lanczos tridiagonal ``T``."""
    evals, evecs = sla.eigh_tridiagonal(alpha, beta)
    return evecs @ (np.exp(-1j * tau * evals) * evecs[0].conj())


def lanczos_step(H: SparseHermitian, psi, tau, m_max=40, tol=1e-13):
    """``exp(-i tau H) psi`` in a Krylov space of dimension ``<= m_max``.

    Returns ``(psi_new, converged)``.  A vanishing off-diagonal (invariant
    subspace) ends the recursion with an exact result.
    """
    nrm = np.linalg.norm(psi)
    n = len(psi)
    m_max = min(m_max, n)
    V = np.zeros((m_max, n), dtype=np.complex128)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    V[0] = psi / nrm
    m = m_max
    for j in range(m_max):
        w = H.matvec(V[j])
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j] - (beta[j - 1] * V[j - 1] if j > 0 else 0)
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        b = np.linalg.norm(w)
        if b < 1e-14 * max(abs(alpha[j]), 1.0):
            m = j + 1
            return nrm * (V[:m].T @ _expm_tridiag(alpha[:m], beta[: m - 1], tau)), True
        if j + 1 < m_max:
            beta[j] = b
            V[j + 1] = w / b
        else:
            beta[j] = b
    y = _expm_tridiag(alpha[:m], beta[: m - 1], tau)
    err = beta[m - 1] * abs(y[-1])
    return nrm * (V[:m].T @ y), err < tol


def propagate(H: SparseHermitian, psi0, t: float, dt: float = 0.05, method: str = "auto", m_max: int = 40):
    """``exp(-i t H) psi0``.

    ``method="auto"`` uses a dense eigendecomposition for dimensions below
    512 and Lanczos steps of size ``dt`` otherwise.  A Lanczos step that
    does not converge is retried with half the step; after 20 halvings a
    :class:`PropagationError` is raised.
    """
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise ParameterError("initial vector must be normalized")
    if t == 0:
        return psi0.copy()
    if method == "auto":
        method = "dense" if H.dim < DENSE_BELOW else "lanczos"
    if method == "dense":
        return DenseEvolver(H).evolve(psi0, t)
    if method != "lanczos":
        raise ParameterError(f"unknown propagation method {method!r}")
    return _lanczos_propagate(H, psi0, t, dt, m_max)


def _lanczos_propagate(H, psi, t, dt, m_max):
    direction = np.sign(t)
    remaining = abs(t)
    step = min(abs(dt), remaining)
    halvings = 0
    while remaining > 1e-14 * abs(t):
        tau = min(step, remaining)
        new, ok = lanczos_step(H, psi, direction * tau, m_max)
        if not ok:
            halvings += 1
            if halvings > 20:
                raise PropagationError(f"Lanczos failed to converge at t={abs(t) - remaining:.6g}")
            step *= 0.5
            continue
        psi = new / np.linalg.norm(new)
        remaining -= tau
    return psi


class DenseEvolver:
    """Exact propagator from a dense eigendecomposition."""

    def __init__(self, H: SparseHermitian):
        self.evals, self.evecs = np.linalg.eigh(H.to_dense())

    def evolve(self, psi0, t):
        return self.evecs @ (np.exp(-1j * t * self.evals) * (self.evecs.conj().T @ psi0))


def fock_trajectory(H: SparseHermitian, psi0, T: float, dt: float, method="auto"):
    """States at ``t = 0, dt, ..., T`` as an array of shape ``(steps + 1, dim)``."""
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(T, 1):
        raise ParameterError(f"dt={dt} does not divide T={T}")
    if method == "auto":
        method = "dense" if H.dim < DENSE_BELOW else "lanczos"
    out = np.empty((steps + 1, H.dim), dtype=np.complex128)
    out[0] = psi0
    if method == "dense":
        ev = DenseEvolver(H)
        coef = ev.evecs.conj().T @ psi0
        for i in range(1, steps + 1):
            out[i] = ev.evecs @ (np.exp(-1j * i * dt * ev.evals) * coef)
        return out
    psi = np.asarray(psi0, dtype=np.complex128)
    for i in range(1, steps + 1):
        psi = _lanczos_propagate(H, psi, dt, dt, 40)
        out[i] = psi
    return out


# reduced density matrices


def rdm1(psi, basis: FockBasis) -> np.ndarray:
    """``gamma[a, b] = <a+_b a_a> / N``."""
    if basis.N < 1:
        raise ParameterError("one-particle marginal needs N >= 1")
    B = _annihilated(psi, basis)
    return (B.T @ B.conj()) / basis.N


def _annihilated(psi, basis):
    """Columns ``a_a psi`` in the N-1 particle basis."""
    B = np.zeros((basis.lower(1).dim, basis.M), dtype=np.complex128)
    for a in range(basis.M):
        src, dst, amp = basis.annihilate(a)
        B[dst, a] = amp * psi[src]
    return B


def pair_index(M: int):
    """Unordered pairs ``(a, b)``, ``a <= b``, in row-major order."""
    return [(a, b) for a in range(M) for b in range(a, M)]


def pair_isometry(M: int) -> np.ndarray:
    """``P[p, (a, b)]`` mapping ordered-pair space onto symmetrized pair states."""
    pairs = pair_index(M)
    P = np.zeros((len(pairs), M * M))
    for p, (a, b) in enumerate(pairs):
        if a == b:
            P[p, a * M + a] = 1.0
        else:
            P[p, a * M + b] = P[p, b * M + a] = 1 / np.sqrt(2)
    return P


def rdm2(psi, basis: FockBasis) -> np.ndarray:
    """Two-particle marginal on unordered pairs.

    ``gamma[(ab), (cd)] = w_ab w_cd <a+_c a+_d a_b a_a> / (N (N - 1))`` with
    ``w = sqrt(2)`` for ``a < b`` and ``1`` for ``a = b``; this is the
    ordered-pair matrix sandwiched by :func:`pair_isometry`.
    """
    if basis.N < 2:
        raise ParameterError("two-particle marginal needs N >= 2")
    B = _annihilated(psi, basis)
    lower = basis.lower(1)
    M = basis.M
    pairs = pair_index(M)
    A = np.zeros((lower.lower(1).dim, len(pairs)), dtype=np.complex128)
    for p, (a, b) in enumerate(pairs):
        src, dst, amp = lower.annihilate(b)
        A[dst, p] = amp * B[src, a]
    w = np.array([1.0 if a == b else np.sqrt(2) for a, b in pairs])
    G = (A.T @ A.conj()) / (basis.N * (basis.N - 1))
    return w[:, None] * G * w[None, :]


def rdm(psi, basis: FockBasis, k: int = 1) -> np.ndarray:
    """k-particle marginal (``k`` in ``{1, 2}``), trace one."""
    if k > basis.N:
        raise ParameterError(f"k={k} exceeds particle number N={basis.N}")
    if k == 1:
        return rdm1(psi, basis)
    if k == 2:
        return rdm2(psi, basis)
    raise ParameterError(f"only k = 1, 2 are supported, got {k}")


def ordered_pair_matrix(gamma2: np.ndarray, M: int) -> np.ndarray:
    """Expand an unordered-pair marginal to the ``M^2 x M^2`` ordered-pair kernel."""
    P = pair_isometry(M)
    return P.T @ gamma2 @ P


def trace_distance(gamma, sigma) -> float:
    """``Tr |gamma - sigma|`` for Hermitian matrices of equal shape."""
    gamma = np.asarray(gamma)
    sigma = np.asarray(sigma)
    if gamma.shape != sigma.shape:
        raise ConfigurationError(f"shape mismatch {gamma.shape} vs {sigma.shape}")
    diff = gamma - sigma
    diff = 0.5 * (diff + diff.conj().T)
    return float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


# mode-space Hartree


def mode_energy(c, modes: ModeSet, lam: float, quads: Quadruples) -> float:
    """``sum eps |c|^2 + (lam/2) sum w conj(c_c c_d) c_b c_a``."""
    c = np.asarray(c)
    kin = float(np.sum(modes.eps * np.abs(c) ** 2))
    if lam == 0 or not len(quads):
        return kin
    pot = np.sum(quads.w * np.conj(c[quads.c] * c[quads.d]) * c[quads.b] * c[quads.a])
    return kin + 0.5 * lam * float(pot.real)


def _hartree_rhs(c, eps, lam, quads, M):
    out = eps * c
    if lam != 0 and len(quads):
        terms = quads.w * np.conj(c[quads.d]) * c[quads.b] * c[quads.a]
        acc = np.zeros(M, dtype=np.complex128)
        np.add.at(acc, quads.c, terms)
        out = out + lam * acc
    return -1j * out


@dataclass
class ModeTrajectory:
    times: np.ndarray
    amplitudes: np.ndarray
    energies: np.ndarray = field(repr=False)

    def projector(self, i: int) -> np.ndarray:
        c = self.amplitudes[i]
        return np.outer(c, c.conj())

    def norm_drift(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.amplitudes, axis=1) - 1)))


def mode_hartree_evolve(c0, modes: ModeSet, lam: float, T: float, dt: float, regularization_length: float = 0.0) -> ModeTrajectory:
    """Classical RK4 integration of ``i dc_a/dt = eps_a c_a + lam sum w conj(c_d) c_b c_a'``.

    Uses the same quadruples as :func:`build_hamiltonian`.  Raises
    :class:`ParameterError` if the norm drifts by more than 1e-6.
    """
    c = np.asarray(c0, dtype=np.complex128)
    if abs(np.linalg.norm(c) - 1) > 1e-12:
        raise ParameterError("initial mode amplitudes must be normalized")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(T, 1):
        raise ParameterError(f"dt={dt} must divide T={T}")
    quads = interaction_quadruples(modes, regularization_length)
    eps, M = modes.eps, modes.M
    out = np.empty((steps + 1, M), dtype=np.complex128)
    out[0] = c
    f = lambda y: _hartree_rhs(y, eps, lam, quads, M)  # noqa: E731
    for i in range(1, steps + 1):
        k1 = f(c)
        k2 = f(c + 0.5 * dt * k1)
        k3 = f(c + 0.5 * dt * k2)
        k4 = f(c + dt * k3)
        c = c + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i] = c
    drift = float(np.max(np.abs(np.linalg.norm(out, axis=1) - 1)))
    if drift > 1e-6:
        raise ParameterError(f"Hartree norm drift {drift:.2e} > 1e-6; reduce dt")
    energies = np.array([mode_energy(ci, modes, lam, quads) for ci in out])
    return ModeTrajectory(np.arange(steps + 1) * dt, out, energies)


# mean-field comparison


@dataclass
class ConvergenceTable:
    N: list
    d: list
    slope: float
    t: float
    lam: float

    def rows(self):
        return [(n, self.t, d) for n, d in zip(self.N, self.d)]

    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.d, self.d[1:]))


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def mean_field_convergence(modes: ModeSet, lam: float, c0, t: float, N_list, hartree_dt: float = 1e-3, krylov_dt: float = 0.05) -> ConvergenceTable:
    """``d(N) = Tr |gamma1_{N,t} - |c_t><c_t||`` for each ``N`` and the log-log slope."""
    c0 = np.asarray(c0, dtype=np.complex128)
    if t > 0:
        traj = mode_hartree_evolve(c0, modes, lam, t, hartree_dt)
        ct = traj.amplitudes[-1]
    else:
        ct = c0
    proj = np.outer(ct, ct.conj())
    ds = []
    for N in N_list:
        basis = FockBasis(modes.M, N)
        psi0 = condensate_state(c0, basis)
        H = build_hamiltonian(basis, modes, lam, N)
        psit = propagate(H, psi0, t, dt=krylov_dt)
        ds.append(trace_distance(rdm1(psit, basis), proj))
    positive = [d > 0 for d in ds]
    slope = loglog_slope(N_list, ds) if all(positive) and len(ds) > 1 else float("nan")
    return ConvergenceTable(list(N_list), ds, slope, t, lam)


# hierarchy residuals


def _partial_commutator(V, G, M):
    """``Tr_2 [V, G]`` for ordered-pair matrices."""
    C = (V @ G - G @ V).reshape(M, M, M, M)
    return np.einsum("xzyz->xy", C)


def bbgky_rhs(gamma1, G, h, V, lam, factor):
    """Right side of the k = 1 hierarchy equation in mode space."""
    M = len(h)
    return h[:, None] * gamma1 - gamma1 * h[None, :] + lam * factor * _partial_commutator(V, G, M)


def bbgky_residual(samples, dt: float, modes: ModeSet, lam: float, hierarchy: str = "finite", N: int | None = None, basis: FockBasis | None = None, times=None, regularization_length: float = 0.0):
    """Frobenius residual of the k = 1 hierarchy equation at interior samples.

    ``samples`` is either an array of Fock vectors (``hierarchy="finite"``,
    with ``basis``) or of mode amplitudes from the Hartree equation
    (``hierarchy="infinite"``), spaced ``dt`` apart in time.  The time
    derivative is a central difference, so the residual of an exact
    trajectory is ``O(dt^2)``.
    """
    samples = np.asarray(samples)
    if times is not None:
        gaps = np.diff(np.asarray(times, dtype=float))
        if np.any(np.abs(gaps - dt) > 1e-9 * dt):
            raise ParameterError("hierarchy residual needs uniformly spaced samples")
    M = modes.M
    h = modes.eps
    V = interaction_quadruples(modes, regularization_length).pair_matrix(M)
    g1, G = [], []
    if hierarchy == "finite":
        if basis is None:
            raise ConfigurationError("finite hierarchy needs the Fock basis")
        N = basis.N if N is None else N
        factor = 1.0 - 1.0 / N
        for psi in samples:
            g1.append(rdm1(psi, basis))
            G.append(ordered_pair_matrix(rdm2(psi, basis), M) if N >= 2 else np.zeros((M * M, M * M)))
    elif hierarchy == "infinite":
        factor = 1.0
        for c in samples:
            p = np.outer(c, c.conj())
            g1.append(p)
            G.append(np.kron(p, p))
    else:
        raise ParameterError(f"unknown hierarchy {hierarchy!r}")
    res = []
    for i in range(1, len(samples) - 1):
        lhs = 1j * (g1[i + 1] - g1[i - 1]) / (2 * dt)
        rhs = bbgky_rhs(g1[i], G[i], h, V, lam, factor)
        res.append(np.linalg.norm(lhs - rhs))
    return np.array(res)
