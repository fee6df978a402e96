"""Exact entanglement measures from the spectrum of a correlation matrix.

For a Gaussian fermionic state the reduced density matrix factorizes over
the eigenmodes of C, so with p_l = (1 + nu_l)/2 and q_l = 1 - p_l

    Z_n(alpha) = Tr[rho^n e^{i alpha Q}] = prod_l (p_l^n e^{i alpha} + q_l^n).

Logs are accumulated per factor on the principal branch and never taken of
the full product. Charge resolution is a discrete Fourier transform over a
uniform alpha grid, exact because Z_n(alpha) is a trigonometric polynomial
with frequencies 0..L.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import entr, xlogy

from .symbols import CorrelationSpectrum

__all__ = [
    "AliasingError",
    "EmptySectorError",
    "GenFunSample",
    "ChargeTable",
    "alpha_grid",
    "grid_size",
    "log_gen_fun",
    "gen_fun_exact",
    "renyi_moment",
    "vnee_exact",
    "dzn_dn",
    "dZn_dn_exact",
    "resolve_charge",
    "resolved_moments",
    "resolved_vnee",
    "post_projection_vnee",
    "charge_moments_exact",
]

SECTOR_THRESHOLD = 1e-10
# Cap on alpha-by-mode work arrays, in elements.
_CHUNK = 1 << 21


class AliasingError(ValueError):
    """The alpha grid is too coarse for the charge support 0..L."""


class EmptySectorError(ValueError):
    """A charge sector carries (numerically) zero weight."""


@dataclass(frozen=True)
class GenFunSample:
    """ln Z_n(alpha). ``vanishing`` marks an exact zero (log_Z = -inf)."""

    n: float
    alpha: float
    log_Z: complex

    @property
    def vanishing(self) -> bool:
        return np.isneginf(self.log_Z.real)

    @property
    def Z(self) -> complex:
        return 0j if self.vanishing else complex(np.exp(self.log_Z))


@dataclass(frozen=True)
class ChargeTable:
    """Per-sector weights for Q = 0..L.

    ``kind`` is ``"moment"`` for Z_n(Q) and ``"entropy"`` for S(Q).
    """

    q_values: np.ndarray
    weights: np.ndarray
    n: float = 1.0
    kind: str = "moment"

    @property
    def L(self) -> int:
        return int(self.q_values[-1])

    def __getitem__(self, Q: int):
        return self.weights[int(Q)]

    def total(self):
        return self.weights.sum()


def _nus(spec) -> np.ndarray:
    return spec.nus if isinstance(spec, CorrelationSpectrum) else np.asarray(spec, dtype=float)


def _check_n(n: float):
    if not n > 0:
        raise ValueError(f"Renyi order must be positive, got {n}")


def _chunks(n_alpha: int, L: int):
    step = max(1, _CHUNK // max(L, 1))
    for start in range(0, n_alpha, step):
        yield slice(start, min(start + step, n_alpha))


def _phase(alphas: np.ndarray) -> np.ndarray:
    """e^{i alpha}, exactly -1 at alpha = +-pi so vanishing factors are exact zeros."""
    return np.where(np.abs(alphas) == np.pi, -1.0 + 0j, np.exp(1j * alphas))


def log_gen_fun(spec, n: float, alphas) -> np.ndarray:
    """Vectorized ln Z_n(alpha) over an array of ``alphas``.

    Factors that vanish exactly (alpha = +-pi with nu_l = 0 at n where the
    two powers agree) contribute -inf to the real part.
    """
    _check_n(n)
    nus = _nus(spec)
    alphas = np.asarray(alphas, dtype=float)
    scalar = alphas.ndim == 0
    alphas = np.atleast_1d(alphas)
    p = 0.5 * (1.0 + nus)
    q = 0.5 * (1.0 - nus)
    pn, qn = p**n, q**n
    full = nus == 1.0
    empty = nus == -1.0
    mixed = ~(full | empty)
    pn, qn = pn[mixed], qn[mixed]
    out = np.empty(alphas.shape, dtype=complex)
    for sl in _chunks(alphas.size, pn.size):
        ph = _phase(alphas[sl])
        fac = ph[:, None] * pn[None, :] + qn[None, :]
        with np.errstate(divide="ignore"):
            logs = np.log(fac)
        out[sl] = logs.sum(axis=1)
    # Filled modes contribute exactly i alpha each, empty modes exactly 0.
    out = out + 1j * alphas * np.count_nonzero(full)
    return out[0] if scalar else out


def gen_fun_exact(spec, n: float, alpha: float) -> GenFunSample:
    """ln Z_n(alpha) as a per-eigenvalue sum of principal logs."""
    if abs(alpha) > np.pi:
        raise ValueError(f"alpha must lie in [-pi, pi], got {alpha}")
    return GenFunSample(float(n), float(alpha), complex(log_gen_fun(spec, n, float(alpha))))


def renyi_moment(spec, n: float) -> float:
    """Tr rho^n."""
    return float(np.exp(log_gen_fun(spec, n, 0.0).real))


def vnee_exact(spec) -> float:
    """von Neumann entropy as a sum of binary entropies of the mode occupations."""
    nus = _nus(spec)
    p = 0.5 * (1.0 + nus)
    return float(np.sum(entr(p) + entr(1.0 - p)))


def dzn_dn(spec, alphas) -> np.ndarray:
    """Vectorized d/dn Z_n(alpha) at n = 1.

    Evaluated with the product rule sum_l f_l' prod_{m != l} f_m, so the
    result stays finite when a factor f_m = p_m e^{i alpha} + q_m vanishes:
    one zero factor leaves a single surviving term, two or more give 0.
    """
    nus = _nus(spec)
    alphas = np.asarray(alphas, dtype=float)
    scalar = alphas.ndim == 0
    alphas = np.atleast_1d(alphas)
    p = 0.5 * (1.0 + nus)
    q = 0.5 * (1.0 - nus)
    plp, qlq = xlogy(p, p), xlogy(q, q)
    out = np.empty(alphas.shape, dtype=complex)
    for sl in _chunks(alphas.size, nus.size):
        ph = _phase(alphas[sl])[:, None]
        f = ph * p[None, :] + q[None, :]
        df = ph * plp[None, :] + qlq[None, :]
        zero = f == 0
        nz = zero.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(zero, 0.0, np.log(np.where(zero, 1.0, f)))
            log_rest = logs.sum(axis=1)
            regular = np.exp(log_rest) * np.where(zero, 0.0, df / np.where(zero, 1.0, f)).sum(axis=1)
            single = np.exp(log_rest) * np.where(zero, df, 0.0).sum(axis=1)
        out[sl] = np.where(nz == 0, regular, np.where(nz == 1, single, 0.0))
    return out[0] if scalar else out


def dZn_dn_exact(spec, alpha: float) -> complex:
    """d/dn Z_n(alpha) at n = 1; equals -S at alpha = 0."""
    return complex(dzn_dn(spec, float(alpha)))


def grid_size(L: int) -> int:
    """Smallest power of two >= 2 (L + 1)."""
    return 1 << int(np.ceil(np.log2(2 * (L + 1))))


def alpha_grid(N: int) -> np.ndarray:
    """alpha_j = 2 pi j / N wrapped into (-pi, pi], in FFT order."""
    a = 2 * np.pi * np.arange(N) / N
    return np.where(a > np.pi, a - 2 * np.pi, a)


def resolve_charge(samples, L: int, *, log: bool = False, n: float = 1.0,
                   kind: str = "moment") -> ChargeTable:
    """Fourier inversion of alpha-samples onto charge sectors 0..L.

    Parameters
    ----------
    samples : array of complex
        Values (or logs, with ``log=True``) on :func:`alpha_grid` points.
    L : int
        Subsystem size; sets the charge support.
    log : bool
        Interpret ``samples`` as logarithms. The largest real part is
        factored out before exponentiating so deep tails do not underflow
        the bulk.
    """
    samples = np.asarray(samples, dtype=complex)
    N = samples.size
    if N < 2 * (L + 1):
        raise AliasingError(f"{N} alpha samples cannot resolve charges 0..{L}; need >= {2 * (L + 1)}")
    shift = 0.0
    if log:
        finite = np.isfinite(samples.real)
        shift = float(np.max(samples.real[finite])) if np.any(finite) else 0.0
        with np.errstate(under="ignore"):
            values = np.where(finite, np.exp(samples - shift), 0.0)
    else:
        values = samples
    weights = np.fft.fft(values)[: L + 1] / N
    if shift:
        weights = weights * np.exp(shift)
    return ChargeTable(np.arange(L + 1), weights, float(n), kind)


def _real_table(table: ChargeTable, tol: float) -> ChargeTable:
    imag = float(np.max(np.abs(table.weights.imag), initial=0.0))
    scale = max(1.0, float(np.max(np.abs(table.weights), initial=0.0)))
    if imag > tol * scale:
        raise ArithmeticError(f"charge table should be real; max |imag| = {imag:.3g}")
    return ChargeTable(table.q_values, table.weights.real.copy(), table.n, table.kind)


def resolved_moments(spec, n: float = 1.0) -> ChargeTable:
    """Z_n(Q) for Q = 0..L; real and nonnegative (Tr of positive blocks)."""
    nus = _nus(spec)
    L = nus.size
    N = grid_size(L)
    table = resolve_charge(log_gen_fun(nus, n, alpha_grid(N)), L, log=True, n=n)
    return _real_table(table, 1e-9)


def resolved_vnee(spec) -> ChargeTable:
    """S(Q) = -d/dn Z_n(Q) at n = 1, for Q = 0..L."""
    nus = _nus(spec)
    L = nus.size
    N = grid_size(L)
    table = resolve_charge(-dzn_dn(nus, alpha_grid(N)), L, n=1.0, kind="entropy")
    return _real_table(table, 1e-9)


def post_projection_vnee(z1: ChargeTable, s: ChargeTable, Q: int) -> float:
    """Entropy of the normalized sector-Q block: ln Z_1(Q) + S(Q)/Z_1(Q)."""
    w = float(np.real(z1.weights[int(Q)]))
    if not w > SECTOR_THRESHOLD:
        raise EmptySectorError(f"sector Q={Q} has weight {w:.3g} <= {SECTOR_THRESHOLD:g}")
    return float(np.log(w) + np.real(s.weights[int(Q)]) / w)


def charge_moments_exact(spec) -> tuple[float, float]:
    """Mean and variance of the subsystem charge: Tr C and Tr C(1 - C)."""
    nus = _nus(spec)
    p = 0.5 * (1.0 + nus)
    return float(p.sum()), float(np.sum(p * (1.0 - p)))
