"""Piecewise momentum-space symbols and the correlation matrices they generate.

A symbol is a function on the Brillouin zone (-pi, pi] that is smooth on a
finite set of intervals and zero elsewhere. Its Fourier coefficients fill
the Toeplitz (index difference) and Hankel (index sum) parts of the
subsystem correlation matrix C_mn = <a_m^dagger a_n>.
"""

from __future__ import annotations

import enum
import functools
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import integrate as _integrate

from .scatter import (
    DomainError,
    FermiWindow,
    ScattererModel,
    pair_transmissions,
)

__all__ = [
    "SymbolLabel",
    "Piece",
    "SymbolSpec",
    "CorrelationSpectrum",
    "EigenSolveError",
    "fourier_coefficient",
    "fourier_coefficients",
    "tau_single",
    "hankel_symbol",
    "tau_between",
    "lambda_shifted",
    "symbol_jumps",
    "correlation_from_symbol",
    "build_toeplitz_correlation",
    "build_full_correlation",
    "full_correlation_series",
    "build_between_scatterers",
]

# Absolute tolerance per coefficient and piece.
COEFF_ABS_TOL = 1e-13
HERMITIAN_TOL = 1e-10
SPECTRAL_EXCURSION_TOL = 1e-8


class SymbolLabel(str, enum.Enum):
    TAU_SINGLE = "tau_single"
    HANKEL_H = "hankel_h"
    TAU_TWO_SCATTERER = "tau_two_scatterer"
    LAMBDA_SHIFTED = "lambda_shifted"
    GENERIC = "generic"


@dataclass(frozen=True)
class Piece:
    """A smooth piece of a symbol on ``(a, b)``.

    ``value`` is either a number (constant piece) or a vectorized callable.
    """

    a: float
    b: float
    value: complex | Callable

    @property
    def constant(self) -> bool:
        return not callable(self.value)

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        if self.constant:
            return np.full(k.shape, self.value, dtype=complex if np.iscomplexobj(self.value) else float)
        return self.value(k)


@dataclass(frozen=True)
class SymbolSpec:
    """Piecewise symbol; zero outside the listed pieces.

    Parameters
    ----------
    pieces : tuple of Piece
        Non-overlapping intervals inside [-pi, pi]; empty intervals are
        dropped.
    label : SymbolLabel
    real : bool
        Whether the symbol is real-valued, in which case
        phi_{-l} = conj(phi_l) is used to halve the work.
    key : tuple, optional
        Hashable identity used for coefficient caching. ``None`` disables
        caching.
    """

    pieces: tuple
    label: SymbolLabel = SymbolLabel.GENERIC
    real: bool = True
    key: tuple | None = None

    def __post_init__(self):
        kept = tuple(p for p in self.pieces if p.b > p.a)
        kept = tuple(sorted(kept, key=lambda p: p.a))
        for p in kept:
            if p.a < -np.pi - 1e-15 or p.b > np.pi + 1e-15:
                raise DomainError(f"piece ({p.a}, {p.b}) leaves the Brillouin zone")
        for p, q in zip(kept, kept[1:]):
            if q.a < p.b - 1e-15:
                raise DomainError(f"pieces ({p.a}, {p.b}) and ({q.a}, {q.b}) overlap")
        object.__setattr__(self, "pieces", kept)

    @property
    def breakpoints(self) -> list[float]:
        return sorted({x for p in self.pieces for x in (p.a, p.b)})

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape, dtype=float if self.real else complex)
        for p in self.pieces:
            inside = (k > p.a) & (k < p.b)
            if np.any(inside):
                out[inside] = p(k[inside])
        return out


def _constant_piece_coefficients(a, b, c, ls):
    # (1/2pi) int_a^b c e^{-ilk} dk in closed form.
    ls = np.asarray(ls)
    out = np.empty(ls.shape, dtype=complex)
    zero = ls == 0
    out[zero] = (b - a) / (2 * np.pi)
    lnz = ls[~zero].astype(float)
    out[~zero] = (np.exp(-1j * lnz * b) - np.exp(-1j * lnz * a)) / (-2j * np.pi * lnz)
    return c * out


def _callable_piece_coefficients(piece: Piece, ls, abs_tol):
    lsf = np.asarray(ls, dtype=float)

    def integrand(k):
        return piece.value(np.float64(k)) * np.exp(-1j * lsf * k)

    # Enough panels for ~4 nodes per oscillation at the largest |l|.
    lmax = float(np.max(np.abs(lsf))) if lsf.size else 0.0
    limit = int(max(200, 4 * lmax * (piece.b - piece.a) / np.pi + 200))
    val, err, info = _integrate.quad_vec(
        integrand, piece.a, piece.b, epsabs=abs_tol * 2 * np.pi, epsrel=0.0,
        norm="max", limit=limit, full_output=True,
    )
    if info.status == 1:
        raise RuntimeError(
            f"coefficient quadrature on ({piece.a}, {piece.b}) did not reach "
            f"{abs_tol:g}; estimate {err / (2 * np.pi):.3g}")
    return val / (2 * np.pi)


def fourier_coefficients(sym: SymbolSpec, ls: Sequence[int], abs_tol: float = COEFF_ABS_TOL) -> np.ndarray:
    """(1/2pi) int sym(k) e^{-ilk} dk for every ``l`` in ``ls``.

    Constant pieces are integrated in closed form; smooth pieces with
    vectorized adaptive Gauss-Kronrod, one mesh shared by all ``l``.
    """
    ls = np.asarray(ls, dtype=np.int64)
    total = np.zeros(ls.shape, dtype=complex)
    if ls.size == 0:
        return total
    for p in sym.pieces:
        if p.constant:
            total += _constant_piece_coefficients(p.a, p.b, p.value, ls)
        else:
            total += _callable_piece_coefficients(p, ls, abs_tol)
    return total


def fourier_coefficient(sym: SymbolSpec, l: int) -> complex:
    """Single Fourier coefficient; see :func:`fourier_coefficients`."""
    return complex(fourier_coefficients(sym, [int(l)])[0])


_COEFF_CACHE: "OrderedDict[tuple, np.ndarray]" = OrderedDict()
_COEFF_CACHE_SIZE = 32
_COEFF_LOCK = threading.Lock()


def _toeplitz_column(sym: SymbolSpec, L: int) -> np.ndarray:
    """phi_l for l = 0..L-1 (first column) and l = 0..-(L-1) (first row)."""
    if sym.real:
        col = fourier_coefficients(sym, np.arange(L))
        row = np.conj(col)
        row[0] = col[0] = col[0].real
    else:
        col = fourier_coefficients(sym, np.arange(L))
        row = fourier_coefficients(sym, -np.arange(L))
    return np.stack([col, row])


def toeplitz_coefficients(sym: SymbolSpec, L: int) -> np.ndarray:
    """Stacked (column, row) coefficients of the L x L Toeplitz matrix, cached."""
    if sym.key is None:
        return _toeplitz_column(sym, L)
    # Keyed on the symbol's declared identity: the pieces hold closures whose
    # hashes differ between otherwise identical symbols.
    cache_key = (sym.key, int(L))
    with _COEFF_LOCK:
        hit = _COEFF_CACHE.get(cache_key)
        if hit is not None:
            _COEFF_CACHE.move_to_end(cache_key)
            return hit
    out = _toeplitz_column(sym, L)
    out.setflags(write=False)
    with _COEFF_LOCK:
        _COEFF_CACHE[cache_key] = out
        while len(_COEFF_CACHE) > _COEFF_CACHE_SIZE:
            _COEFF_CACHE.popitem(last=False)
    return out


# ---------------------------------------------------------------------------
# Symbols of the steady state


def tau_single(window: FermiWindow, scatterer: ScattererModel) -> SymbolSpec:
    """Occupation of plane waves right of a single scattering region.

    tau = 1 on (-k_fr, k_-), the window occupation (1 + nu)/2 on (k_-, k_+)
    and 0 elsewhere. A collapsed window gives the equilibrium Fermi sea
    on (-k0, k0).
    """
    km, kp, kfr = window.k_minus, window.k_plus, window.k_fr
    if window.is_equilibrium:
        pieces = (Piece(-kfr, kfr, 1.0),)
    else:
        if window.left_biased:
            occ = lambda k: scatterer.eval(k).t_L2  # noqa: E731
        else:
            occ = lambda k: scatterer.eval(k).r_R2  # noqa: E731
        pieces = (Piece(-kfr, km, 1.0), Piece(km, kp, occ))
    return SymbolSpec(pieces, SymbolLabel.TAU_SINGLE, real=True,
                      key=("tau_single", window, scatterer))


def hankel_symbol(window: FermiWindow, scatterer: ScattererModel) -> SymbolSpec:
    """h(k): r_R(-k) on (-k_fr, 0) and conj(r_R(k)) on (0, k_fr)."""
    kfr = window.k_fr
    pieces = (
        Piece(-kfr, 0.0, lambda k: scatterer.eval(-k).r_R),
        Piece(0.0, kfr, lambda k: np.conj(scatterer.eval(k).r_R)),
    )
    return SymbolSpec(pieces, SymbolLabel.HANKEL_H, real=False,
                      key=("hankel", window, scatterer))


def tau_between(window: FermiWindow, left: ScattererModel, right: ScattererModel) -> SymbolSpec:
    """Occupation between two incoherently coupled scatterers.

    1 on (-k_-, k_-); on (k_-, k_+) the right-movers carry T_I (left bias)
    or 1 - T_I; on (-k_+, -k_-) the left-movers carry 1 - T_II or T_II.
    """
    km, kp = window.k_minus, window.k_plus
    if window.is_equilibrium:
        pieces = (Piece(-km, km, 1.0),)
    else:
        lb = window.left_biased

        def right_movers(k):
            t1, _ = pair_transmissions(left, right, k)
            return t1 if lb else 1.0 - t1

        def left_movers(k):
            _, t2 = pair_transmissions(left, right, -k)
            return 1.0 - t2 if lb else t2

        pieces = (Piece(-kp, -km, left_movers), Piece(-km, km, 1.0), Piece(km, kp, right_movers))
    return SymbolSpec(pieces, SymbolLabel.TAU_TWO_SCATTERER, real=True,
                      key=("tau_between", window, left, right))


def lambda_shifted(tau: SymbolSpec, lam: complex) -> SymbolSpec:
    """Symbol lam - (2 tau - 1), whose Toeplitz determinant is det(lam - (2C - 1)).

    Outside the pieces of ``tau`` the value is lam + 1, so the result is
    expressed as lam + 1 everywhere minus 2 tau on the pieces.
    """
    pieces = []
    edges = [-np.pi] + [x for p in tau.pieces for x in (p.a, p.b)] + [np.pi]
    for lo, hi in zip(edges[0::2], edges[1::2]):
        pieces.append(Piece(lo, hi, lam + 1.0))
    for p in tau.pieces:
        if p.constant:
            pieces.append(Piece(p.a, p.b, lam + 1.0 - 2.0 * p.value))
        else:
            pieces.append(Piece(p.a, p.b, lambda k, p=p: lam + 1.0 - 2.0 * p(k)))
    real = tau.real and np.isrealobj(lam)
    return SymbolSpec(tuple(pieces), SymbolLabel.LAMBDA_SHIFTED, real=real)


def symbol_jumps(sym: SymbolSpec, tol: float = 1e-14) -> list[tuple[float, float, float]]:
    """Jump discontinuities of a real symbol on the circle.

    Breakpoints that coincide modulo 2 pi (such as -pi and pi) are merged
    before the one-sided limits are compared, so a piece that ends where
    another starts with the same value produces no jump.

    Returns
    -------
    list of (k, left_value, right_value)
        Only jumps with ``|right - left| > tol``.
    """
    def wrap(x):
        # Leave in-range points untouched: np.mod would perturb them by an ulp.
        if -np.pi < x <= np.pi:
            return float(x)
        y = np.mod(x + np.pi, 2 * np.pi) - np.pi
        return np.pi if abs(y + np.pi) < 1e-14 else float(y)

    positions = sorted({wrap(x) for x in sym.breakpoints})
    pieces = sym.pieces

    def side_value(x, side):
        # One-sided limit at x (side=-1 from below, +1 from above), with
        # the circle glued at +-pi.
        for p in pieces:
            for shift in (0.0, 2 * np.pi, -2 * np.pi):
                a, b = p.a + shift, p.b + shift
                inside = (a < x <= b + 1e-15) if side < 0 else (a - 1e-15 <= x < b)
                if inside:
                    k = min(max(x - shift, p.a), p.b)
                    return float(np.real(p(np.array(k))))
        return 0.0

    out = []
    for x in positions:
        left, right = side_value(x, -1), side_value(x, +1)
        if abs(right - left) > tol:
            out.append((x, left, right))
    return out


# ---------------------------------------------------------------------------
# Correlation matrices


class EigenSolveError(RuntimeError):
    """Hermitian eigensolver failure; carries a condition-number diagnostic."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number estimate {condition:.3g})")
        self.condition = condition


@dataclass(frozen=True)
class CorrelationSpectrum:
    """Subsystem correlation matrix and the spectrum nu_l of 2C - 1.

    ``nus`` is sorted ascending and clipped to [-1, 1] after the raw
    excursion beyond the interval was checked to be below 1e-8.
    """

    L: int
    C: np.ndarray
    nus: np.ndarray

    @classmethod
    def from_matrix(cls, C: np.ndarray, check: bool = True) -> "CorrelationSpectrum":
        C = np.asarray(C)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError("correlation matrix must be square")
        L = C.shape[0]
        if check and L:
            asym = float(np.max(np.abs(C - C.conj().T)))
            if asym > HERMITIAN_TOL:
                raise ValueError(f"correlation matrix not Hermitian: max |C - C^H| = {asym:.3g}")
        if np.iscomplexobj(C) and float(np.max(np.abs(C.imag), initial=0.0)) < 1e-15:
            C = C.real.copy()
        try:
            evals = sla.eigh(2.0 * C - np.eye(L), eigvals_only=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            with np.errstate(all="ignore"):
                cond = float(np.linalg.cond(C)) if np.all(np.isfinite(C)) else float("inf")
            raise EigenSolveError(f"Hermitian eigensolve failed: {exc}", cond) from exc
        excursion = float(np.max(np.abs(evals), initial=0.0)) - 1.0
        if excursion > SPECTRAL_EXCURSION_TOL:
            raise ValueError(f"spectrum of 2C - 1 leaves [-1, 1] by {excursion:.3g}")
        nus = np.clip(np.sort(evals), -1.0, 1.0)
        C.setflags(write=False)
        nus.setflags(write=False)
        return cls(L=L, C=C, nus=nus)

    @classmethod
    def from_nus(cls, nus: Sequence[float]) -> "CorrelationSpectrum":
        """Diagonal correlation matrix with the given 2C - 1 spectrum."""
        nus = np.sort(np.asarray(nus, dtype=float))
        if np.any(np.abs(nus) > 1 + SPECTRAL_EXCURSION_TOL):
            raise ValueError("nus must lie in [-1, 1]")
        nus = np.clip(nus, -1.0, 1.0)
        return cls(L=nus.size, C=np.diag(0.5 * (1 + nus)), nus=nus)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.C)))


def _toeplitz_matrix(sym: SymbolSpec, L: int) -> np.ndarray:
    col, row = toeplitz_coefficients(sym, L)
    return sla.toeplitz(col, row)


def correlation_from_symbol(sym: SymbolSpec, L: int) -> CorrelationSpectrum:
    """Toeplitz correlation matrix C_mn = phi_{m-n} of an occupation symbol."""
    if L < 1:
        raise DomainError("L must be >= 1")
    return CorrelationSpectrum.from_matrix(_toeplitz_matrix(sym, int(L)))


def build_toeplitz_correlation(window: FermiWindow, scatterer: ScattererModel, L: int) -> CorrelationSpectrum:
    """Correlation matrix far from the scatterer (Hankel part dropped)."""
    return correlation_from_symbol(tau_single(window, scatterer), L)


@functools.lru_cache(maxsize=16)
def _hankel_table(window: FermiWindow, scatterer: ScattererModel, s_lo: int, s_hi: int) -> np.ndarray:
    sym = hankel_symbol(window, scatterer)
    return fourier_coefficients(sym, np.arange(s_lo, s_hi + 1))


def _hankel_block(table: np.ndarray, s_lo: int, L: int, d: int) -> np.ndarray:
    # Entry (i, j) holds the coefficient for s = (d + i) + (d + j).
    first = 2 * d - s_lo
    col = table[first:first + L]
    row = table[first + L - 1:first + 2 * L - 1]
    return sla.hankel(col, row)


def build_full_correlation(window: FermiWindow, scatterer: ScattererModel, L: int, d: int) -> CorrelationSpectrum:
    """Toeplitz plus Hankel correlation matrix for sites d..d+L-1.

    Site indices are absolute: the scatterer sits at the origin and the
    subsystem starts ``d`` sites to its right.
    """
    if d < 1:
        raise DomainError(f"d must be >= 1, got {d}")
    if L < 1:
        raise DomainError("L must be >= 1")
    return next(full_correlation_series(window, scatterer, L, [d]))[1]


def full_correlation_series(window: FermiWindow, scatterer: ScattererModel, L: int,
                            ds: Sequence[int]) -> Iterator[tuple[int, CorrelationSpectrum]]:
    """Yield ``(d, spectrum)`` for several offsets, sharing one coefficient table."""
    ds = [int(d) for d in ds]
    if not ds:
        return
    if min(ds) < 1:
        raise DomainError("every d must be >= 1")
    T = _toeplitz_matrix(tau_single(window, scatterer), L)
    s_lo, s_hi = 2 * min(ds), 2 * max(ds) + 2 * L - 2
    if scatterer.transparent or window.k_fr == 0.0:
        table = np.zeros(s_hi - s_lo + 1, dtype=complex)
    else:
        table = _hankel_table(window, scatterer, s_lo, s_hi)
    for d in ds:
        H = _hankel_block(table, s_lo, L, d)
        yield d, CorrelationSpectrum.from_matrix(T + H)


def build_between_scatterers(window: FermiWindow, left: ScattererModel, right: ScattererModel,
                             L: int) -> CorrelationSpectrum:
    """Toeplitz correlation matrix for a subsystem between two scatterers."""
    return correlation_from_symbol(tau_between(window, left, right), L)
