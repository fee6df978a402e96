"""Independent reference computations used across the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np
from scipy import integrate, sparse

# ---------------------------------------------------------------------------
# Many-body brute force


def _jw_annihilators(L: int):
    """Sparse Jordan-Wigner annihilation operators on the 2^L Fock space.

    Bit i of a basis index is the occupation of site i.
    """
    dim = 1 << L
    states = np.arange(dim)
    ops = []
    for i in range(L):
        src = states[(states >> i) & 1 == 1]
        below = np.array([bin(s & ((1 << i) - 1)).count("1") for s in src])
        signs = np.where(below % 2, -1.0, 1.0)
        ops.append(sparse.csr_matrix((signs, (src ^ (1 << i), src)), shape=(dim, dim)))
    return ops


@dataclass(frozen=True)
class BruteForce:
    """Reduced density matrix eigenvalues grouped by charge sector."""

    L: int
    sector_eigs: dict

    def Z(self, n: float, alpha: float = 0.0) -> complex:
        return complex(sum(np.exp(1j * alpha * Q) * np.sum(lam**n) for Q, lam in self.sector_eigs.items()))

    def Z_Q(self, n: float) -> np.ndarray:
        return np.array([np.sum(self.sector_eigs[Q] ** n) for Q in range(self.L + 1)])

    def S_Q(self) -> np.ndarray:
        out = []
        for Q in range(self.L + 1):
            lam = self.sector_eigs[Q]
            lam = lam[lam > 0]
            out.append(-np.sum(lam * np.log(lam)))
        return np.array(out)

    def S(self) -> float:
        return float(self.S_Q().sum())


def brute_force_rho(C: np.ndarray, clip: float = 1e-15) -> BruteForce:
    """Gaussian state with two-point function C_ij = <c_i^dag c_j>, in Fock space.

    rho is proportional to exp(-sum_ij h_ij c_i^dag c_j) with
    h = ln((1 - C^T) / C^T); the many-body operator is assembled from explicit
    Jordan-Wigner matrices and diagonalized in each particle-number block.
    """
    L = C.shape[0]
    p, U = np.linalg.eigh(C.T)
    p = np.clip(p, clip, 1 - clip)
    h = (U * np.log((1 - p) / p)) @ U.conj().T
    cs = _jw_annihilators(L)
    H = sparse.csr_matrix((1 << L, 1 << L), dtype=complex)
    for i in range(L):
        for j in range(L):
            H = H + h[i, j] * (cs[i].T @ cs[j])
    counts = np.array([bin(s).count("1") for s in range(1 << L)])
    sectors = {}
    for Q in range(L + 1):
        idx = np.flatnonzero(counts == Q)
        sectors[Q] = np.exp(-np.linalg.eigvalsh(H[idx][:, idx].toarray()))
    total = sum(lam.sum() for lam in sectors.values())
    return BruteForce(L, {Q: lam / total for Q, lam in sectors.items()})


def polynomial_charge_distribution(nus, n: float) -> np.ndarray:
    """Z_n(Q): coefficients of prod_l (q_l^n + p_l^n x), by repeated convolution."""
    coeffs = np.array([1.0])
    for nu in nus:
        p, q = 0.5 * (1 + nu), 0.5 * (1 - nu)
        coeffs = np.convolve(coeffs, [q**n, p**n])
    return coeffs


# ---------------------------------------------------------------------------
# High-precision kernels


def mp_jump_kernel(n, a, b, alpha, kind="log", dps=25):
    """Jump kernel straight from its x-integral, with mpmath tanh-sinh quadrature.

    log:   (1/2pi^2) int_a^b ln|(x - b)/(x - a)| de/dx dx
    gamma: (1/pi)    int_a^b Im lnGamma(1/2 + i ln((x - a)/(b - x)) / 2pi) de/dx dx
    with e(x) = ln[((1+x)/2)^n e^{i alpha} + ((1-x)/2)^n].
    """
    with mp.workdps(dps):
        n, a, b, alpha = mp.mpf(n), mp.mpf(a), mp.mpf(b), mp.mpf(alpha)
        ph = mp.expj(alpha)

        def de(x):
            p, q = (1 + x) / 2, (1 - x) / 2
            return n / 2 * (p ** (n - 1) * ph - q ** (n - 1)) / (p**n * ph + q**n)

        if kind == "log":
            def f(x):
                return mp.log(abs((x - b) / (x - a))) * de(x) / (2 * mp.pi**2)
        else:
            def f(x):
                u = mp.log((x - a) / (b - x))
                return mp.im(mp.loggamma(mp.mpf(1) / 2 + 1j * u / (2 * mp.pi))) / mp.pi * de(x)

        pts = [a, b]
        if a < 0 < b:
            pts = [a, mp.mpf(0), b]
        return complex(mp.quad(f, pts))


def digamma_tail_quadrature(x: float) -> float:
    """int_0^inf [cos(z ln x / 2pi) / (2 sinh(z/2)) - e^{-z}/z] dz by mpmath.

    The integrand decays like e^{-z/2}; the range is cut at z = 160 and split
    into unit panels so the oscillation is resolved.
    """
    with mp.workdps(20):
        w = mp.log(x) / (2 * mp.pi)
        f = lambda z: mp.cos(z * w) / (2 * mp.sinh(z / 2)) - mp.exp(-z) / z  # noqa: E731
        return float(mp.quad(f, mp.linspace(0, 160, 161)))


def q_entropy_direct(p: float) -> float:
    """q(p) from its x-integral with plain adaptive quadrature (no rearrangement)."""

    def brace(x):
        val = ((1 + p * x) * math.log(1 + p * x) + (x + p) * math.log(x + p)) / (1 + x)
        return (val - (p * math.log(p) if p > 0 else 0.0)) / x

    val, _ = integrate.quad(brace, 0, 1, limit=400, epsabs=1e-14, epsrel=1e-13)
    return 1 / 8 - p / 24 - val / (2 * math.pi**2)


def entropy_jump_n_derivative(a: float, b: float, h: float = 1e-4) -> float:
    """-d/dn of the log jump kernel at n = 1, alpha = 0, by central differences of mpmath values."""
    fp = mp_jump_kernel(1 + h, a, b, 0.0).real
    fm = mp_jump_kernel(1 - h, a, b, 0.0).real
    fp2 = mp_jump_kernel(1 + 2 * h, a, b, 0.0).real
    fm2 = mp_jump_kernel(1 - 2 * h, a, b, 0.0).real
    return -(8 * (fp - fm) - (fp2 - fm2)) / (12 * h)
