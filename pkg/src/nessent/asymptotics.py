"""Large-L asymptotics of the charge generating function ln Z_n(alpha).

The subsystem correlation matrix is (asymptotically) Toeplitz with a
piecewise-smooth symbol, so ln Z_n(alpha) = lin * L + log * ln L + const.

* ``lin`` integrates the kernel e_n^(alpha)(1, nu) over the symbol.
* ``log`` is a sum of jump kernels, one per discontinuity of the symbol.
  A jump between the values a < b of nu = 2 tau - 1 contributes

      J_n(a, b, alpha) = (1/2pi^2) int_a^b ln|(x - b)/(x - a)| d/dx e_n(1, x) dx,

  of which Q_n(nu, alpha) = J_n(nu, 1, alpha) is the special case with
  b = 1 and J_n(-1, nu, alpha) = Q_n(-nu, -alpha).
* ``const`` follows from freezing nu at the window centre, which turns the
  symbol into a pure Fisher-Hartwig one; it carries the Gamma-function
  kernels Upsilon_n.

All kernel integrals are computed after substituting
u = ln((x - a)/(b - x)), which maps (a, b) onto the real line and turns
the logarithmic endpoint singularities into exponentially decaying tails.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as _integrate
from scipy import special as _sp

from . import exact as _exact
from .scatter import FermiWindow, ScattererModel, nu_profile, pair_transmissions
from .special import (
    QuadratureSpec,
    Scheme,
    complex_log_gamma,
    euler_gamma,
    integrate,
    kappa0,
    richardson_derivative,
)
from .symbols import SymbolSpec, symbol_jumps, tau_between, tau_single

__all__ = [
    "AsymptoticTerms",
    "ChargeStatistics",
    "GaussianResolution",
    "VneeCoefficients",
    "kernel_e",
    "jump_kernel",
    "q_n_kernel",
    "upsilon_kernel",
    "q1_closed_form",
    "log_gamma_ratio",
    "jump_entropy_q",
    "jump_entropy_upsilon",
    "coefficients",
    "coefficient_derivatives",
    "log_gen_fun_asymptotic",
    "equilibrium_gen_fun",
    "charge_statistics",
    "generalized_mean_charge",
    "gaussian_resolution",
    "sigma_gaussian",
    "equipartition_slope",
    "rounded_mean_charge",
    "vnee_coefficients",
    "vnee_asymptotic",
    "two_scatterer_asymptotics",
    "two_scatterer_vnee",
    "analytic_resolved_moments",
    "analytic_resolved_vnee",
]

# Const-term validity: the frozen-nu approximation degrades like dk^2 ln dk.
CONST_APPROX_DK = 0.3
# Offset used to approach alpha = +-pi from inside when the kernel has a
# near-pole in the interior of its range (alpha = +-pi itself is exact at order 0).
_PI_CLAMP = 1e-6  # moves the kernel by ~2e-7
_KERNEL_ABS = 1e-12
_KERNEL_REL = 1e-10
_TWO_PI2 = 2.0 * np.pi**2
# Sines below this are treated as zero (merged jumps, band edges).
_SINE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Elementary kernels


def kernel_e(n: float, alpha: float, x: float, nu: float) -> complex:
    """e_n^(alpha)(x, nu) = ln[((x+nu)/2)^n e^{i alpha} + ((x-nu)/2)^n].

    Principal branch. A vanishing argument returns ``-inf`` (real part).
    """
    if x < abs(nu):
        raise ValueError(f"kernel_e needs x >= |nu|, got x={x}, nu={nu}")
    a = (0.5 * (x + nu)) ** n
    b = (0.5 * (x - nu)) ** n
    if b == 0.0:
        # ln(a e^{i alpha}) exactly, avoiding round-off in e^{i alpha}.
        return complex(-np.inf if a == 0 else math.log(a), alpha)
    if a == 0.0:
        return complex(math.log(b), 0.0)
    z = a * np.exp(1j * alpha) + b
    if z == 0:
        return complex(-np.inf, 0.0)
    return complex(np.log(z))


def _e_derivative(n: float, alphas: np.ndarray, p: float, order: int) -> np.ndarray:
    """d^order/dalpha^order of e_n^(alpha)(1, 2p - 1) for a scalar occupation p."""
    if p >= 1.0:
        return [1j * alphas, np.full_like(alphas, 1j, dtype=complex), np.zeros_like(alphas, dtype=complex)][order]
    if p <= 0.0:
        return np.zeros_like(alphas, dtype=complex)
    A, B = p**n, (1.0 - p) ** n
    ph = np.exp(1j * alphas)
    D = A * ph + B
    if order == 0:
        with np.errstate(divide="ignore"):
            return np.log(D)
    s = A * ph / D
    return 1j * s if order == 1 else -s * (1.0 - s)


def _closed_full_jump(n: float, alphas: np.ndarray, order: int) -> np.ndarray:
    # J_n(-1, 1, alpha) = (1/12)(1/n - n) - alpha^2/(4 pi^2 n) and derivatives.
    if order == 0:
        return (1.0 / 12.0) * (1.0 / n - n) - alphas**2 / (4 * np.pi**2 * n) + 0j
    if order == 1:
        return -alphas / (2 * np.pi**2 * n) + 0j
    return np.full_like(alphas, -1.0 / (2 * np.pi**2 * n), dtype=complex)


def _u_range(n: float) -> float:
    # The integrand decays like |u| exp(-min(n, 1) |u|) in both tails.
    return min(700.0, 50.0 / min(n, 1.0))


def _u_integral(a: float, b: float, n: float, integrand, abs_tol=_KERNEL_ABS):
    """int over u of integrand(u, p, q, dxdu), with x = x(u) on (a, b)."""
    w = b - a
    U = _u_range(n)

    def g(u):
        sig, sigc = _sp.expit(u), _sp.expit(-u)
        # p = (1 + x)/2 and q = (1 - x)/2 without cancellation at the ends.
        p = 0.5 * (1.0 + a) + 0.5 * w * sig
        q = 0.5 * (1.0 - b) + 0.5 * w * sigc
        return integrand(u, p, q, w * sig * sigc)

    cuts = [-U, U]
    if a < 0.0 < b:
        u0 = math.log(-a / b)
        if -U < u0 < U:
            cuts = [-U, u0, U]
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        val, _err = _integrate.quad_vec(g, lo, hi, epsabs=abs_tol, epsrel=_KERNEL_REL,
                                        norm="max", limit=4000)
        total = total + val
    return total


def _weight(u: float, kind: str) -> float:
    if kind == "log":
        return -u / _TWO_PI2
    # Im ln Gamma(1/2 + i u / 2pi) / pi
    return float(np.imag(_sp.loggamma(0.5 + 1j * u / (2 * np.pi)))) / np.pi


def _diverges(a: float, b: float, alpha: float) -> bool:
    return abs(abs(alpha) - np.pi) < 1e-12 and (a == 0.0 or b == 0.0)


# Buckets by distance from alpha = +-pi: samples near the pole need a much
# finer u-mesh, and quad_vec refines the shared mesh for the worst component.
_PI_BUCKETS = (0.0, 0.02, 0.1, 0.5, np.inf)


def _kernel_nonneg(n, a, b, alphas, order, kind):
    """Kernel for alphas in [0, pi]; the caller handles signs and divergence."""
    out = np.empty(alphas.shape, dtype=complex)
    dist = np.pi - alphas
    groups = []
    for lo, hi in zip(_PI_BUCKETS[:-1], _PI_BUCKETS[1:]):
        sel = np.flatnonzero((dist >= lo) & (dist < hi))
        if sel.size == 0:
            continue
        # The innermost bucket is integrated sample by sample: its components
        # need meshes refined at very different scales.
        groups.extend([sel[i:i + 1] for i in range(sel.size)] if lo == 0.0 else [sel])
    for sel in groups:
        ph = np.exp(1j * alphas[sel])

        def integrand(u, p, q, dx, ph=ph):
            pn, qn = p**n, q**n
            D = pn * ph + qn
            if order == 0:
                val = 0.5 * n * (p ** (n - 1) * ph - q ** (n - 1)) / D
            else:
                sp = ph * 0.5 * n * (p * q) ** (n - 1) / D**2
                val = 1j * sp if order == 1 else -(1.0 - 2.0 * pn * ph / D) * sp
            return _weight(u, kind) * val * dx

        out[sel] = _u_integral(a, b, n, integrand)
    return out


def _kernel_at_pi(n: float, a: float, b: float, kind: str) -> complex:
    """Order-0 kernel at alpha = pi for a < 0 < b, as the limit from inside.

    The x-integrand has a simple pole at x = 0 with residue w(0), so the
    limit is the principal value plus i pi w(0). The principal value pairs
    u0 + t with u0 - t around the pole u0 = ln(-a/b).
    """
    w = b - a
    U = _u_range(n)
    u0 = math.log(-a / b)

    def g(u):
        sig, sigc = _sp.expit(u), _sp.expit(-u)
        p = 0.5 * (1.0 + a) + 0.5 * w * sig
        q = 0.5 * (1.0 - b) + 0.5 * w * sigc
        val = -0.5 * n * (p ** (n - 1) + q ** (n - 1)) / (q**n - p**n)
        return _weight(u, kind) * val * w * sig * sigc

    half = min(1.0, 0.5 * (U - abs(u0)))
    opts = dict(epsabs=_KERNEL_ABS, epsrel=_KERNEL_REL, limit=400)
    total = _integrate.quad(lambda t: g(u0 + t) + g(u0 - t), 0.0, half, **opts)[0]
    total += _integrate.quad(g, -U, u0 - half, **opts)[0]
    total += _integrate.quad(g, u0 + half, U, **opts)[0]
    return complex(total, np.pi * _weight(u0, kind))


@functools.lru_cache(maxsize=4096)
def _jump_kernel_cached(n: float, a: float, b: float, alphas: tuple, order: int, kind: str):
    alphas = np.array(alphas, dtype=float)
    out = np.zeros(alphas.shape, dtype=complex)
    if b <= a:
        return out
    if kind == "log" and a == -1.0 and b == 1.0:
        return _closed_full_jump(n, alphas, order)
    bad = np.array([_diverges(a, b, al) for al in alphas], dtype=bool)
    mag = np.abs(alphas)
    at_pi = np.zeros(alphas.shape, dtype=bool)
    if a < 0.0 < b:
        if order == 0:
            at_pi = mag == np.pi
        mag = np.minimum(mag, np.pi - _PI_CLAMP)
    live = ~bad & ~at_pi
    if np.any(at_pi):
        val = _kernel_at_pi(n, a, b, kind)
        out[at_pi] = np.where(alphas[at_pi] < 0, np.conj(val), val)
    if np.any(live):
        # Real p, q: the kernel at -alpha is the conjugate of the kernel at
        # alpha, up to the sign (-1)^order of the derivative.
        uniq, inv = np.unique(mag[live], return_inverse=True)
        vals = _kernel_nonneg(n, a, b, uniq, order, kind)[inv]
        neg = alphas[live] < 0
        vals = np.where(neg, (-1.0) ** order * np.conj(vals), vals)
        out[live] = vals
    out[bad] = np.inf
    return out


def jump_kernel(n: float, a: float, b: float, alphas, order: int = 0, kind: str = "log") -> np.ndarray:
    """Jump kernel between the symbol values a < b, vectorized over alpha.

    Parameters
    ----------
    n : float
        Renyi order (> 0).
    a, b : float
        nu-values on either side of the jump, ``-1 <= a <= b <= 1``.
    alphas : float or array
    order : {0, 1, 2}
        Number of alpha-derivatives applied to the kernel.
    kind : {"log", "gamma"}
        ``"log"`` gives the ln L coefficient kernel J_n(a, b, alpha);
        ``"gamma"`` the Gamma-function kernel that enters the constant term.

    Returns
    -------
    ndarray of complex
        ``inf`` where the kernel diverges (an endpoint at 0 with
        ``|alpha| = pi``).
    """
    if not n > 0:
        raise ValueError("n must be positive")
    if not -1.0 <= a <= b <= 1.0:
        raise ValueError(f"need -1 <= a <= b <= 1, got a={a}, b={b}")
    arr = np.atleast_1d(np.asarray(alphas, dtype=float))
    res = _jump_kernel_cached(float(n), float(a), float(b), tuple(arr.tolist()), int(order), kind)
    return res[0] if np.ndim(alphas) == 0 else res.copy()


def q_n_kernel(n: float, nu: float, alpha: float) -> complex:
    """Q_n(nu, alpha): ln L weight of a jump from nu up to 1."""
    return complex(jump_kernel(n, nu, 1.0, float(alpha)))


def upsilon_kernel(n: float, nu: float, alpha: float) -> complex:
    """Upsilon_n(nu, alpha): Gamma-function constant-term kernel of a jump to 1."""
    return complex(jump_kernel(n, nu, 1.0, float(alpha), kind="gamma"))


def q1_closed_form(nu, alpha):
    """Q_1(nu, alpha) = ln^2[e^{-i alpha/2}(cos(alpha/2) + i nu sin(alpha/2))] / 4 pi^2."""
    z = np.exp(-0.5j * np.asarray(alpha)) * (np.cos(0.5 * np.asarray(alpha)) + 1j * np.asarray(nu) * np.sin(0.5 * np.asarray(alpha)))
    return np.log(z) ** 2 / (4 * np.pi**2)


def log_gamma_ratio(w):
    """ln[Gamma(1/2 - i w) / Gamma(1/2 + i w)], purely imaginary for real w."""
    w = np.asarray(w, dtype=float)
    out = 1j * (-2.0 * np.imag(complex_log_gamma(0.5 + 1j * w)))
    return out


# ---------------------------------------------------------------------------
# Entropy kernels (n-derivatives at n = 1, alpha = 0)


def _brace_over_x(x, p, with_log_term: bool):
    """Bracketed numerator of the q / upsilon integrands divided by x.

    Each term is rearranged to O(x) before dividing, so nodes near x = 0
    stay accurate.
    """
    x = np.asarray(x, dtype=float)
    t1 = (1.0 + p * x) * np.log1p(p * x) / x
    t2 = np.log(x + p)
    t3 = p * np.log1p(x / p) / x if p > 0 else 0.0
    t4 = -_sp.xlogy(p, p)
    total = t1 + t2 + t3 + t4
    if with_log_term:
        total = total + (1.0 - p) * np.log(x)
    return total / (1.0 + x)


_TS = QuadratureSpec(abs_tol=1e-14, rel_tol=1e-12, scheme=Scheme.TANH_SINH)


@functools.lru_cache(maxsize=1024)
def jump_entropy_q(p: float) -> float:
    """Entropy ln L weight of a jump whose inner value has occupation p.

    q(p) = 1/8 - p/24 - (1/2pi^2) int_0^1 (dx/x){[(1+px)ln(1+px)
    + (x+p)ln(x+p)]/(1+x) - p ln p}; q(1) = 0 and q(0) = 1/6.
    """
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    val = integrate(lambda x: _brace_over_x(x, p, False), 0.0, 1.0, _TS, vectorized=True).value
    return float(0.125 - p / 24.0 - float(np.real(val)) / _TWO_PI2)


def _digamma_tail(x):
    # int_0^inf [cos(z ln x / 2pi) / (2 sinh(z/2)) - e^{-z}/z] dz
    #   = -Re psi(1/2 + i ln x / 2pi)
    return -np.real(_sp.psi(0.5 + 1j * np.log(x) / (2 * np.pi)))


@functools.lru_cache(maxsize=1024)
def jump_entropy_upsilon(p: float) -> float:
    """Entropy constant-term weight paired with :func:`jump_entropy_q`.

    upsilon(p) = kappa0 - (1/2pi^2) int_0^1 (dx/x){[(1+px)ln(1+px)
    + (x+p)ln(x+p) + (1-p)x ln x]/(1+x) - p ln p} T(x), where the inner
    z-integral T(x) is evaluated through its digamma closed form.
    """
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    f = lambda x: _brace_over_x(x, p, True) * _digamma_tail(x)  # noqa: E731
    val = integrate(f, 0.0, 1.0, _TS, vectorized=True).value
    return float(kappa0() - float(np.real(val)) / _TWO_PI2)


@functools.lru_cache(maxsize=1024)
def _jump_entropy_generic(a: float, b: float, kind: str) -> float:
    """-d/dn of the jump kernel at n = 1, alpha = 0, for arbitrary a < b."""
    if b <= a:
        return 0.0

    def integrand(u, p, q, dx):
        # d/dx of the binary entropy H((1 + x)/2) is ln(q/p)/2.
        return _weight(u, kind) * 0.5 * (np.log(q) - np.log(p)) * dx

    return float(np.real(_u_integral(a, b, 1.0, integrand)))


def _jump_entropy(a: float, b: float) -> float:
    if b <= a:
        return 0.0
    if b == 1.0:
        return jump_entropy_q(0.5 * (1.0 + a))
    if a == -1.0:
        return jump_entropy_q(0.5 * (1.0 - b))
    return _jump_entropy_generic(a, b, "log")


# ---------------------------------------------------------------------------
# Coefficient assembly


@dataclass(frozen=True)
class AsymptoticTerms:
    """ln Z_n(alpha) ~ lin * L + log * ln L + const.

    ``meta`` holds ``n``, ``alpha``, ``window`` and a tuple of ``flags``:
    ``const_approx`` (window wider than the frozen-nu regime),
    ``const_unavailable`` (constant term not provided), ``divergent``
    (a kernel diverges at this alpha), ``equilibrium`` (collapsed window).
    """

    lin: complex
    log: complex
    const: complex
    meta: dict = field(default_factory=dict)

    @property
    def flags(self) -> tuple:
        return tuple(self.meta.get("flags", ()))

    def value(self, L: float) -> complex:
        c = 0.0 if "const_unavailable" in self.flags else self.const
        return self.lin * L + self.log * math.log(L) + c


def _lin_from_symbol(sym: SymbolSpec, n: float, alphas: np.ndarray, order: int) -> np.ndarray:
    total = np.zeros(alphas.shape, dtype=complex)
    for piece in sym.pieces:
        if piece.constant:
            total += (piece.b - piece.a) * _e_derivative(n, alphas, float(np.real(piece.value)), order)
        else:
            f = lambda k, piece=piece: _e_derivative(n, alphas, float(piece(np.array(k))), order)  # noqa: E731
            val, _err = _integrate.quad_vec(f, piece.a, piece.b, epsabs=1e-12, epsrel=1e-11,
                                            norm="max", limit=2000)
            total += val
    return total / (2 * np.pi)


def _log_from_jumps(jumps, n: float, alphas: np.ndarray, order: int) -> np.ndarray:
    total = np.zeros(alphas.shape, dtype=complex)
    for _k, left, right in jumps:
        a, b = sorted((2.0 * left - 1.0, 2.0 * right - 1.0))
        total += jump_kernel(n, max(a, -1.0), min(b, 1.0), alphas, order)
    return total


def _sign(order: int) -> float:
    return -1.0 if order == 1 else 1.0


def _equilibrium_terms(k0: float, n: float, alphas: np.ndarray, order: int):
    log = 2.0 * _closed_full_jump(n, alphas, order)
    lin = [1j * alphas * k0 / np.pi, np.full_like(alphas, 1j * k0 / np.pi, dtype=complex),
           np.zeros_like(alphas, dtype=complex)][order]
    const = log * math.log(abs(2.0 * math.sin(k0))) + 2.0 * jump_kernel(n, -1.0, 1.0, alphas, order, kind="gamma")
    return lin, log, const


def _single_terms(window: FermiWindow, scatterer: ScattererModel, n: float, alphas: np.ndarray, order: int):
    flags = set()
    if window.is_equilibrium and abs(math.sin(window.k0)) < _SINE_FLOOR:
        # Empty or filled band: a product state with ln Z = i alpha Q exactly.
        flags.add("equilibrium")
        lin = _lin_from_symbol(tau_single(window, scatterer), n, alphas, order)
        log = np.zeros(alphas.shape, dtype=complex)
        const = np.zeros(alphas.shape, dtype=complex)
    elif window.is_equilibrium:
        flags.add("equilibrium")
        lin, log, const = _equilibrium_terms(window.k0, n, alphas, order)
    else:
        tau = tau_single(window, scatterer)
        lin = _lin_from_symbol(tau, n, alphas, order)
        log = _log_from_jumps(symbol_jumps(tau), n, alphas, order)
        const = _const_single(window, scatterer, n, alphas, order, flags)
        if window.dk > CONST_APPROX_DK:
            flags.add("const_approx")
    bad = ~np.isfinite(log) | ~np.isfinite(const) | ~np.isfinite(lin)
    if "const_unavailable" in flags:
        bad = ~np.isfinite(log) | ~np.isfinite(lin)
    return lin, log, const, flags, bad


def _const_single(window, scatterer, n, alphas, order, flags):
    km, kp, kfr, k0, dk = window.k_minus, window.k_plus, window.k_fr, window.k0, window.dk
    s1 = math.sin(0.5 * (km + kfr))
    s2 = math.sin(0.5 * (kp + kfr))
    sd = math.sin(0.5 * dk)
    num3 = math.sin(kfr) * math.sin(k0)
    if min(abs(s1), abs(s2), abs(sd), abs(num3)) < _SINE_FLOOR:
        # Two jumps merge; the frozen-nu Fisher-Hartwig form does not apply.
        flags.add("const_unavailable")
        return np.full(alphas.shape, np.nan + 0j)
    P1 = math.log(abs(2 * s1 * sd / s2))
    P2 = math.log(abs(2 * s2 * sd / s1))
    P3 = math.log(abs(2 * num3 / sd))
    nu0 = float(np.clip(nu_profile(window, scatterer).nu0, -1.0, 1.0))
    sg = _sign(order)
    out = P1 * jump_kernel(n, nu0, 1.0, alphas, order)
    out = out + P2 * sg * jump_kernel(n, -nu0, 1.0, -alphas, order)
    out = out + P3 * _closed_full_jump(n, alphas, order)
    out = out + jump_kernel(n, nu0, 1.0, alphas, order, kind="gamma")
    out = out + sg * jump_kernel(n, -nu0, 1.0, -alphas, order, kind="gamma")
    out = out + jump_kernel(n, -1.0, 1.0, alphas, order, kind="gamma")
    return out


def _meta(window, n, alpha, flags):
    return {"n": float(n), "alpha": alpha, "window": {"k_fl": window.k_fl, "k_fr": window.k_fr},
            "flags": tuple(sorted(flags))}


def coefficients(window: FermiWindow, scatterer: ScattererModel, n: float, alpha: float) -> AsymptoticTerms:
    """Linear, logarithmic and constant coefficients of ln Z_n(alpha).

    The ln L coefficient sums one jump kernel per discontinuity of the
    occupation symbol, with coinciding breakpoints (modulo 2 pi) merged.
    A collapsed window returns the equilibrium coefficients.
    """
    return coefficient_derivatives(window, scatterer, n, alpha, order=0)


def coefficient_derivatives(window: FermiWindow, scatterer: ScattererModel, n: float, alpha: float,
                            order: int) -> AsymptoticTerms:
    """alpha-derivatives (order 0, 1 or 2) of the three coefficients."""
    if not n > 0:
        raise ValueError("n must be positive")
    if abs(alpha) > np.pi:
        raise ValueError("alpha must lie in [-pi, pi]")
    al = np.array([float(alpha)])
    lin, log, const, flags, bad = _single_terms(window, scatterer, float(n), al, order)
    if bad[0]:
        flags.add("divergent")
    return AsymptoticTerms(complex(lin[0]), complex(log[0]), complex(const[0]),
                           _meta(window, n, float(alpha), flags))


def log_gen_fun_asymptotic(window: FermiWindow, scatterer: ScattererModel, n: float, alphas, L: int):
    """Vectorized analytic ln Z_n(alpha) for one L.

    Returns
    -------
    values : ndarray of complex
    divergent : ndarray of bool
        Points where a kernel diverges (value set to nan there).
    flags : set of str
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    lin, log, const, flags, bad = _single_terms(window, scatterer, float(n), alphas, 0)
    if "const_unavailable" in flags:
        const = np.zeros_like(const)
    with np.errstate(invalid="ignore"):
        vals = lin * L + log * math.log(L) + const
    vals = np.where(bad, np.nan + 0j, vals)
    return vals, bad, flags


def equilibrium_gen_fun(k0: float, n: float, alpha: float, L: int) -> complex:
    """ln Z_n(alpha) of a homogeneous chain filled up to k0."""
    if not 0.0 < k0 < np.pi:
        raise ValueError("k0 must lie in (0, pi)")
    B = 2.0 * complex(_closed_full_jump(n, np.array([alpha]), 0)[0])
    return (1j * alpha * k0 * L / np.pi + B * math.log(abs(2 * L * math.sin(k0)))
            + 2.0 * complex(jump_kernel(n, -1.0, 1.0, alpha, kind="gamma")))


# ---------------------------------------------------------------------------
# Charge statistics


@dataclass(frozen=True)
class ChargeStatistics:
    mean_eq: float
    var_eq: float
    mean_shift: float
    var_shift: float

    @property
    def mean(self) -> float:
        return self.mean_eq + self.mean_shift

    @property
    def var(self) -> float:
        return self.var_eq + self.var_shift


def _quad(f, a, b):
    if a == b:
        return 0.0
    lo, hi = min(a, b), max(a, b)
    val = _integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    return val if b >= a else -val


def charge_statistics(window: FermiWindow, scatterer: ScattererModel, L: int) -> ChargeStatistics:
    """Mean and variance of the subsystem charge: equilibrium part plus bias shift."""
    k0, kfr, kfl, km, kp, dk = window.k0, window.k_fr, window.k_fl, window.k_minus, window.k_plus, window.dk
    g = euler_gamma()
    mean_eq = k0 * L / np.pi
    sin0 = abs(math.sin(k0))
    var_eq = (math.log(2 * L * sin0) + 1 + g) / np.pi**2 if sin0 >= _SINE_FLOOR else 0.0
    if window.is_equilibrium:
        return ChargeStatistics(mean_eq, var_eq, 0.0, 0.0)
    ev = scatterer.eval
    mean_shift = -L / (2 * np.pi) * _quad(lambda k: float(ev(k).r_R2), kfr, kfl)
    lin = _quad(lambda k: float(ev(k).t_L2 * ev(k).r_R2), km, kp) / (2 * np.pi)
    rfr, tfl, at0 = ev(kfr), ev(kfl), ev(k0)
    log_c = -(1.0 - float(rfr.r_R2) ** 2 - float(tfl.t_L2) ** 2) / (2 * np.pi**2)
    if min(abs(math.sin(kfr)), sin0) < _SINE_FLOOR:
        const = 0.0  # not available at a band edge
    else:
        const = (float(at0.r_R2) / np.pi**2 * math.log(abs(math.sin(kfr) / math.sin(k0)))
                 - float(at0.t_L2 * at0.r_R2) / np.pi**2 * (1 + g + math.log(abs(2 * math.sin(0.5 * dk)))))
    return ChargeStatistics(mean_eq, var_eq, mean_shift, lin * L + log_c * math.log(L) + const)


def _g_weight(n, p, q):
    # g_n(x) = n (1 - x^2)^{n-1} / [(1+x)^n + (1-x)^n]^2 in terms of p, q
    return n * (4 * p * q) ** (n - 1) / (2**n * (p**n + q**n)) ** 2


def _g_jump(n: float, a: float, b: float, kind: str) -> float:
    if b <= a:
        return 0.0

    def integrand(u, p, q, dx):
        w = -u if kind == "log" else float(np.imag(_sp.loggamma(0.5 + 1j * u / (2 * np.pi))))
        return w * _g_weight(n, p, q) * dx

    return float(np.real(_u_integral(a, b, n, integrand)))


def generalized_mean_charge(window: FermiWindow, scatterer: ScattererModel, n: float, L: int) -> float:
    """<Q>_n = -i d/dalpha ln Z_n(alpha) at alpha = 0, assembled term by term.

    Uses the weight g_n(x) = n(1 - x^2)^{n-1} / [(1+x)^n + (1-x)^n]^2 against
    the logarithmic and Gamma-function kernels of the window endpoints and
    the window centre.
    """
    if not n > 0:
        raise ValueError("n must be positive")
    k0, kfr, km, kp, dk = window.k0, window.k_fr, window.k_minus, window.k_plus, window.dk
    if window.is_equilibrium:
        return k0 * L / np.pi
    prof = nu_profile(window, scatterer)

    def frac(k):
        p = float(prof.occupation(k))
        return p**n / (p**n + (1 - p) ** n)

    lin = (km + kfr + _quad(frac, km, kp)) * L / (2 * np.pi)
    nm, npl, nu0 = prof.nu_minus, prof.nu_plus, prof.nu0
    log_part = (_g_jump(n, nm, 1.0, "log") - _g_jump(n, -npl, 1.0, "log")) * math.log(L) / np.pi**2
    s1, s2, sd = math.sin(0.5 * (km + kfr)), math.sin(0.5 * (kp + kfr)), math.sin(0.5 * dk)
    if min(abs(s1), abs(s2), abs(sd)) < _SINE_FLOOR:
        return float(lin + log_part)  # constant term not available
    P1 = math.log(abs(2 * s1 * sd / s2))
    P2 = math.log(abs(2 * s2 * sd / s1))
    const = (P1 * _g_jump(n, nu0, 1.0, "log") - P2 * _g_jump(n, -nu0, 1.0, "log")) / np.pi**2
    const += (2.0 / np.pi) * (_g_jump(n, nu0, 1.0, "gamma") - _g_jump(n, -nu0, 1.0, "gamma"))
    return float(lin + log_part + const)


@dataclass(frozen=True)
class GaussianResolution:
    """Gaussian model of the charge-resolved moments at Renyi order n.

    ``dmean_dn`` and ``dvar_dn`` are n-derivatives at the same order n.
    """

    n: float
    L: int
    mean_n: float
    var_n: float
    dmean_dn: float
    dvar_dn: float
    log_Zn: float
    flags: tuple = ()

    @property
    def std(self) -> float:
        return math.sqrt(self.var_n)

    def moment(self, Q):
        """Z_n(Q) in the Gaussian approximation."""
        Q = np.asarray(Q, dtype=float)
        return np.exp(self.log_Zn) / np.sqrt(2 * np.pi * self.var_n) * np.exp(
            -((Q - self.mean_n) ** 2) / (2 * self.var_n))


def _mean_var(window, scatterer, n, L):
    al = np.array([0.0])
    lnL = math.log(L)
    out = []
    for order in (0, 1, 2):
        lin, log, const, flags, _bad = _single_terms(window, scatterer, n, al, order)
        c = 0.0 if "const_unavailable" in flags else const[0]
        out.append(lin[0] * L + log[0] * lnL + c)
    return float(out[0].real), float(out[1].imag), float(-out[2].real), flags


def gaussian_resolution(window: FermiWindow, scatterer: ScattererModel, n: float, L: int,
                        h: float = 1e-4) -> GaussianResolution:
    """Mean, variance and their n-derivatives of the order-n charge distribution.

    Mean and variance are the first two alpha-derivatives of the analytic
    ln Z_n(alpha) at alpha = 0, taken analytically inside the kernels. The
    n-derivatives use Richardson-extrapolated central differences.
    """
    if not n > 0:
        raise ValueError("n must be positive")
    logz, mean, var, flags = _mean_var(window, scatterer, float(n), L)
    if not var > 0:
        raise ArithmeticError(f"non-positive analytic variance {var}")
    h = min(h, 0.5 * n)
    dm = richardson_derivative(lambda m: _mean_var(window, scatterer, m, L)[1], float(n), h, 1, 2)
    dv = richardson_derivative(lambda m: _mean_var(window, scatterer, m, L)[2], float(n), h, 1, 2)
    return GaussianResolution(float(n), int(L), mean, var, float(dm), float(dv), logz,
                              tuple(sorted(flags)))


def sigma_gaussian(res: GaussianResolution, S: float, Q) -> float:
    """Post-measurement entropy of sector Q from the Gaussian model at n = 1."""
    if not res.var_n > 0:
        raise ValueError("variance must be positive")
    sd = res.std
    z = (np.asarray(Q, dtype=float) - res.mean_n) / sd
    dsd = res.dvar_dn / (2 * sd)
    return (S - 0.5 * np.log(2 * np.pi * res.var_n) - res.dmean_dn / res.var_n * (z * sd)
            - 0.5 * z**2 + dsd / sd * (1 - z**2))


def equipartition_slope(window: FermiWindow, scatterer: ScattererModel) -> float:
    """Weighted mean of ln((1 - nu)/(1 + nu)) over the window, weight 1 - nu^2.

    Returns 0 when the weight vanishes (perfect transmission or reflection,
    or no window).
    """
    if window.is_equilibrium:
        return 0.0
    prof = nu_profile(window, scatterer)

    def weight(k):
        p = float(prof.occupation(k))
        return 4 * p * (1 - p)

    def num(k):
        p = float(prof.occupation(k))
        w = 4 * p * (1 - p)
        return 0.0 if w == 0 else w * math.log((1 - p) / p)

    den = _quad(weight, window.k_minus, window.k_plus)
    if den <= 1e-300:
        return 0.0
    return _quad(num, window.k_minus, window.k_plus) / den


def rounded_mean_charge(mean: float) -> int:
    """ceil(floor(2 mean) / 2): the integer sector nearest the mean, halves up."""
    if not math.isfinite(mean):
        raise ValueError("mean must be finite")
    return int(math.ceil(0.5 * math.floor(2 * mean)))


# ---------------------------------------------------------------------------
# von Neumann entropy


@dataclass(frozen=True)
class VneeCoefficients:
    """S ~ c_lin * L + c_log * ln L + c_const."""

    c_lin: float
    c_log: float
    c_const: float
    flags: tuple = ()

    def value(self, L: float) -> float:
        c = 0.0 if not math.isfinite(self.c_const) else self.c_const
        return self.c_lin * L + self.c_log * math.log(L) + c


def _binary_entropy(p: float) -> float:
    return float(_sp.entr(p) + _sp.entr(1.0 - p))


def _entropy_log_from_symbol(sym: SymbolSpec) -> float:
    total = 0.0
    for _k, left, right in symbol_jumps(sym):
        a, b = sorted((2.0 * left - 1.0, 2.0 * right - 1.0))
        total += _jump_entropy(max(a, -1.0), min(b, 1.0))
    return total


def vnee_coefficients(window: FermiWindow, scatterer: ScattererModel) -> VneeCoefficients:
    """Linear, logarithmic and constant coefficients of the entanglement entropy."""
    if window.is_equilibrium:
        k0 = window.k0
        if abs(math.sin(k0)) < _SINE_FLOOR:
            return VneeCoefficients(0.0, 0.0, 0.0, ("equilibrium",))
        c_const = math.log(abs(2 * math.sin(k0))) / 3.0 + 2.0 * jump_entropy_upsilon(0.0)
        return VneeCoefficients(0.0, 1.0 / 3.0, c_const, ("equilibrium",))
    flags = set()
    ev = scatterer.eval
    km, kp, kfr, k0, dk = window.k_minus, window.k_plus, window.k_fr, window.k0, window.dk
    c_lin = _quad(lambda k: _binary_entropy(float(ev(k).t_L2)), km, kp) / (2 * np.pi)
    c_log = _entropy_log_from_symbol(tau_single(window, scatterer))
    sd = math.sin(0.5 * dk)
    if min(abs(math.sin(kfr)), abs(math.sin(k0)), abs(sd)) < _SINE_FLOOR:
        flags.add("const_unavailable")
        c_const = float("nan")
    else:
        at0 = ev(k0)
        t0, r0 = float(at0.t_L2), float(at0.r_R2)
        c_const = (math.log(abs(2 * math.sin(kfr) * sd / math.sin(k0))) * jump_entropy_q(t0)
                   + math.log(abs(2 * math.sin(k0) * sd / math.sin(kfr))) * jump_entropy_q(r0)
                   + math.log(abs(2 * math.sin(kfr) * math.sin(k0) / sd)) / 6.0
                   + jump_entropy_upsilon(t0) + jump_entropy_upsilon(r0) + jump_entropy_upsilon(0.0))
    if dk > CONST_APPROX_DK:
        flags.add("const_approx")
    return VneeCoefficients(float(c_lin), float(c_log), float(c_const), tuple(sorted(flags)))


def vnee_asymptotic(window: FermiWindow, scatterer: ScattererModel, L: int) -> float:
    return vnee_coefficients(window, scatterer).value(L)


# ---------------------------------------------------------------------------
# Two scatterers


def two_scatterer_asymptotics(window: FermiWindow, left: ScattererModel, right: ScattererModel,
                              n: float, alpha: float) -> AsymptoticTerms:
    """lin and log coefficients of ln Z_n(alpha) between two scatterers.

    The constant term is not provided (``const`` is nan and the flag
    ``const_unavailable`` is set).
    """
    if not n > 0:
        raise ValueError("n must be positive")
    al = np.array([float(alpha)])
    sym = tau_between(window, left, right)
    lin = _lin_from_symbol(sym, float(n), al, 0)
    log = _log_from_jumps(symbol_jumps(sym), float(n), al, 0)
    flags = {"const_unavailable"}
    if not (np.isfinite(lin[0]) and np.isfinite(log[0])):
        flags.add("divergent")
    return AsymptoticTerms(complex(lin[0]), complex(log[0]), complex(np.nan, 0.0),
                           _meta(window, n, float(alpha), flags))


def two_scatterer_vnee(window: FermiWindow, left: ScattererModel, right: ScattererModel) -> VneeCoefficients:
    """c_lin and c_log of the entropy between two scatterers; c_const is nan."""
    flags = ("const_unavailable",)
    if window.is_equilibrium:
        return VneeCoefficients(0.0, 1.0 / 3.0, float("nan"), flags)
    km, kp = window.k_minus, window.k_plus

    def h(k):
        t1, t2 = pair_transmissions(left, right, k)
        return _binary_entropy(float(t1)) + _binary_entropy(float(t2))

    c_lin = _quad(h, km, kp) / (2 * np.pi)
    c_log = _entropy_log_from_symbol(tau_between(window, left, right))
    return VneeCoefficients(float(c_lin), float(c_log), float("nan"), flags)


# ---------------------------------------------------------------------------
# Analytic charge resolution


def _patched_log_gen_fun(window, scatterer, n, alphas, L):
    vals, bad, _flags = log_gen_fun_asymptotic(window, scatterer, n, alphas, L)
    if np.any(bad):
        res = gaussian_resolution(window, scatterer, n, L)
        gauss = res.log_Zn + 1j * res.mean_n * alphas - 0.5 * res.var_n * alphas**2
        vals = np.where(bad, gauss, vals)
    return vals, int(np.count_nonzero(bad))


def analytic_resolved_moments(window: FermiWindow, scatterer: ScattererModel, L: int, n: float):
    """Z_n(Q) by Fourier inversion of the analytic generating function.

    Divergent alpha samples are replaced by the Gaussian-model value.

    Returns
    -------
    (ChargeTable, int)
        The table and the number of patched alpha samples.
    """
    N = _exact.grid_size(L)
    alphas = _exact.alpha_grid(N)
    vals, patched = _patched_log_gen_fun(window, scatterer, n, alphas, L)
    table = _exact.resolve_charge(vals, L, log=True, n=n)
    return _exact.ChargeTable(table.q_values, table.weights.real.copy(), n, "moment"), patched


def analytic_resolved_vnee(window: FermiWindow, scatterer: ScattererModel, L: int, h: float = 1e-4):
    """S(Q) from the analytic generating function: -Z_1(alpha) d/dn ln Z_n(alpha).

    The n-derivative is a Richardson-extrapolated central difference.
    """
    N = _exact.grid_size(L)
    alphas = _exact.alpha_grid(N)
    log1, patched = _patched_log_gen_fun(window, scatterer, 1.0, alphas, L)
    dlog = richardson_derivative(lambda m: _patched_log_gen_fun(window, scatterer, m, alphas, L)[0],
                                 1.0, h, 1, 2)
    values = -np.exp(log1) * dlog
    table = _exact.resolve_charge(values, L, n=1.0, kind="entropy")
    return _exact.ChargeTable(table.q_values, table.weights.real.copy(), 1.0, "entropy"), patched
