"""Independent reference computations used by the tests.

Nothing here imports the package under test: each oracle rebuilds its
quantities from numpy/scipy primitives.
"""

import numpy as np


class BoxEnergy:
    """Relativistic Hartree energy of real fields on a periodic cube, from raw FFTs."""

    def __init__(self, n, L, lam):
        self.n, self.L, self.lam = n, L, lam
        self.h = L / n
        k1 = 2 * np.pi * np.fft.fftfreq(n, d=self.h)
        ksq = k1[:, None, None] ** 2 + k1[None, :, None] ** 2 + k1[None, None, :] ** 2
        self.omega = np.sqrt(1 + ksq)
        with np.errstate(divide="ignore"):
            self.coulomb = np.where(ksq > 0, 4 * np.pi / ksq, 0.0)
        self.dv = self.h**3

    def parts(self, u):
        """``(E, gradient)`` of ``E(u / ||u||)`` with respect to ``u``."""
        uh = np.fft.fftn(u)
        nrm2 = np.sum(u * u) * self.dv
        wu = np.fft.ifftn(self.omega * uh).real
        rho = u * u
        pot = np.fft.ifftn(self.coulomb * np.fft.fftn(rho)).real
        T = np.sum(u * wu) * self.dv
        D = np.sum(pot * rho) * self.dv
        E = T / nrm2 + 0.5 * self.lam * D / nrm2**2
        g = 2 * wu / nrm2 - 2 * T * u / nrm2**2 + 2 * self.lam * pot * u / nrm2**2 - 2 * self.lam * D * u / nrm2**3
        return E, g

    def energy(self, u):
        return self.parts(u)[0]

    def precondition(self, g):
        return np.fft.ifftn(np.fft.fftn(g) / self.omega).real


def _parabolic_search(f, u, d, E0, s):
    """Minimize ``f(u + s d)`` by successive three-point parabola fits."""
    s1, s2 = s, 2 * s
    f1, f2 = f(u + s1 * d), f(u + s2 * d)
    while f1 > E0 and s1 > 1e-14:
        s2, f2 = s1, f1
        s1 *= 0.5
        f1 = f(u + s1 * d)
    for _ in range(4):
        xs = np.array([0.0, s1, s2])
        ys = np.array([E0, f1, f2])
        a, b, _ = np.polyfit(xs, ys, 2)
        if a <= 0:
            break
        sm = -b / (2 * a)
        if sm <= 0:
            break
        fm = f(u + sm * d)
        pts = sorted([(E0, 0.0), (f1, s1), (f2, s2), (fm, sm)])[:3]
        best = pts[0]
        if best[1] == 0.0:
            break
        others = sorted(p[1] for p in pts[1:])
        s1, f1 = best[1], best[0]
        s2 = max(others + [best[1] * 2])
        f2 = f(u + s2 * d)
        if abs(sm - s1) < 1e-6 * s1:
            break
    return (s1, f1) if f1 < E0 else (0.0, E0)


def ground_state_energy(n, L, lam, u0, tol=1e-13, max_iter=3000):
    """Minimum of the normalized Hartree energy from start ``u0``.

    Preconditioned Polak-Ribiere conjugate gradients with a parabolic line
    search; restarts along steepest descent whenever the direction stops
    descending.
    """
    box = BoxEnergy(n, L, lam)
    u = u0 / np.sqrt(np.sum(u0 * u0) * box.dv)
    E, g = box.parts(u)
    pg = box.precondition(g)
    d = -pg
    s = 1.0
    for _ in range(max_iter):
        if np.sum(d * g) >= 0:
            d = -pg
        s_new, E_new = _parabolic_search(box.energy, u, d, E, s)
        if s_new == 0.0:
            if np.array_equal(d, -pg):
                break
            d = -pg
            continue
        u = u + s_new * d
        u /= np.sqrt(np.sum(u * u) * box.dv)
        s = s_new
        dE = E - E_new
        E_new, g_new = box.parts(u)
        pg_new = box.precondition(g_new)
        beta = max(0.0, np.sum(g_new * (pg_new - pg)) / np.sum(g * pg))
        d = -pg_new + beta * d
        E, g, pg = E_new, g_new, pg_new
        if dE < tol:
            break
    return E, u


# first-quantized many-body oracles


def symmetric_embedding(states, M):
    """Columns: normalized symmetrized tensor-product vectors for each occupation row.

    Built by walking every ordered particle label sequence, so it shares no
    code with the occupation-number machinery.
    """
    import itertools

    states = np.asarray(states)
    N = int(states[0].sum())
    lookup = {tuple(s): i for i, s in enumerate(states)}
    E = np.zeros((M**N, len(states)))
    for flat, seq in enumerate(itertools.product(range(M), repeat=N)):
        occ = tuple(np.bincount(seq, minlength=M))
        E[flat, lookup[occ]] = 1.0
    return E / np.sqrt(E.sum(axis=0))


def first_quantized_hamiltonian(ints, L, N, lam, pair_weight):
    """``sum_i eps(p_i) + (lam/N) sum_{i<j} V_ij`` on ``M^N`` with the pair operator projected to the modes.

    ``pair_weight(q)`` is the matrix element for momentum transfer ``q``
    (a 3-vector in units of ``2 pi / L``).
    """
    ints = np.asarray(ints)
    M = len(ints)
    eps = np.sqrt(1 + (2 * np.pi / L) ** 2 * np.sum(ints**2, axis=1))
    V2 = np.zeros((M, M, M, M))
    for c in range(M):
        for d in range(M):
            for a in range(M):
                for b in range(M):
                    if np.array_equal(ints[c] + ints[d], ints[a] + ints[b]):
                        V2[c, d, a, b] = pair_weight(ints[c] - ints[a])
    V2 = V2.reshape(M * M, M * M)
    dim = M**N
    H = np.zeros((dim, dim))
    eye = np.eye(M)
    for i in range(N):
        ops = [eye] * N
        ops[i] = np.diag(eps)
        H += _kron_all(ops)
    for i in range(N):
        for j in range(i + 1, N):
            H += lam / N * _pair_operator(V2, M, N, i, j)
    return H


def _kron_all(ops):
    out = np.ones((1, 1))
    for op in ops:
        out = np.kron(out, op)
    return out


def _pair_operator(V2, M, N, i, j):
    """``V2`` acting on particles ``i`` and ``j`` of an ``N``-particle tensor space."""
    dim = M**N
    T = V2.reshape(M, M, M, M)
    out = np.zeros((dim, dim))
    basis = np.eye(dim).reshape((dim,) + (M,) * N)
    for col in range(dim):
        v = basis[col]
        w = np.einsum("cdab,...ab->...cd", T, np.moveaxis(v, (i, j), (-2, -1)))
        out[:, col] = np.moveaxis(w, (-2, -1), (i, j)).reshape(dim)
    return out


def partial_traces(Psi, M, N):
    """One- and ordered two-particle marginals of a first-quantized vector."""
    T = Psi.reshape((M,) * N)
    rest = T.reshape(M, -1)
    g1 = rest @ rest.conj().T
    g2 = None
    if N >= 2:
        rest2 = T.reshape(M * M, -1)
        g2 = rest2 @ rest2.conj().T
    return g1, g2
