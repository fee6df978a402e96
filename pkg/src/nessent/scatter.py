"""Scatterer models and the momentum-space distributions they induce.

A scatterer is described by its k-resolved scattering probabilities
(|t_L|^2, |r_R|^2, |t_R|^2, |r_L|^2) and the complex reflection amplitude
r_R(k) that feeds the Hankel part of the correlation matrix. Momenta live in
[0, pi]; models are immutable and evaluate elementwise on arrays.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

__all__ = [
    "DomainError",
    "PerfectReflectionError",
    "FermiWindow",
    "ScatteringProbabilities",
    "ScattererModel",
    "SingleImpurity",
    "Transparent",
    "TableScatterer",
    "CompositeScatterer",
    "NuProfile",
    "single_impurity_probabilities",
    "nu_profile",
    "combine_incoherent",
    "pair_transmissions",
]


class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class PerfectReflectionError(ZeroDivisionError):
    """Incoherent composition of a perfectly reflecting pair.

    The offending momentum is available as ``k``.
    """

    def __init__(self, k: float):
        super().__init__(f"|r_R^I r_L^II| = 1 at k = {k!r}: perfectly reflecting pair")
        self.k = k


@dataclass(frozen=True)
class FermiWindow:
    """Bias window between the two Fermi momenta.

    Parameters
    ----------
    k_fl : float
        Fermi momentum of left-incoming states, in [0, pi].
    k_fr : float
        Fermi momentum of right-incoming states, in [0, pi].
    """

    k_fl: float
    k_fr: float

    def __post_init__(self):
        for name in ("k_fl", "k_fr"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= np.pi:
                raise DomainError(f"{name} must lie in [0, pi], got {v}")
            object.__setattr__(self, name, v)

    @classmethod
    def from_bias(cls, k_fr: float, dk: float) -> "FermiWindow":
        """Window with ``k_fl = k_fr + dk`` (negative ``dk`` flips the bias)."""
        return cls(k_fl=k_fr + dk, k_fr=k_fr)

    @property
    def k_minus(self) -> float:
        return min(self.k_fl, self.k_fr)

    @property
    def k_plus(self) -> float:
        return max(self.k_fl, self.k_fr)

    @property
    def k0(self) -> float:
        return 0.5 * (self.k_fl + self.k_fr)

    @property
    def dk(self) -> float:
        return abs(self.k_fl - self.k_fr)

    @property
    def is_equilibrium(self) -> bool:
        return self.k_fl == self.k_fr

    @property
    def left_biased(self) -> bool:
        """True when left-incoming states fill the window (k_fr < k_fl)."""
        return self.k_fr < self.k_fl

    def swapped(self) -> "FermiWindow":
        return FermiWindow(k_fl=self.k_fr, k_fr=self.k_fl)


@dataclass(frozen=True)
class ScatteringProbabilities:
    """Scattering data at one or more momenta (arrays broadcast like ``k``)."""

    t_L2: np.ndarray
    r_R2: np.ndarray
    t_R2: np.ndarray
    r_L2: np.ndarray
    r_R: np.ndarray  # complex amplitude with |r_R|^2 == r_R2


def _check_momenta(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if np.any(~((k >= 0.0) & (k <= np.pi))):
        bad = k[~((k >= 0.0) & (k <= np.pi))].ravel()[0]
        raise DomainError(f"momentum must lie in [0, pi], got {bad}")
    return k


class ScattererModel(abc.ABC):
    """k-resolved scattering probabilities of a unitary two-terminal scatterer."""

    kind: str = "abstract"

    def eval(self, k) -> ScatteringProbabilities:
        """Probabilities and reflection amplitude at momenta ``k`` in [0, pi]."""
        return self._eval(_check_momenta(k))

    @abc.abstractmethod
    def _eval(self, k: np.ndarray) -> ScatteringProbabilities: ...

    def t_L2(self, k):
        return self.eval(k).t_L2

    def r_R2(self, k):
        return self.eval(k).r_R2

    def r_R(self, k):
        return self.eval(k).r_R

    @property
    def transparent(self) -> bool:
        return False

    def describe(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class Transparent(ScattererModel):
    """No scatterer: perfect transmission at all momenta."""

    kind = "transparent"

    def _eval(self, k):
        one, zero = np.ones_like(k), np.zeros_like(k)
        return ScatteringProbabilities(one, zero, one, zero, zero.astype(complex))

    @property
    def transparent(self) -> bool:
        return True


@dataclass(frozen=True)
class SingleImpurity(ScattererModel):
    """On-site potential eps0 on one site of a chain with hopping t.

    Parameters
    ----------
    eps0_over_t : float
        Impurity strength in units of the hopping amplitude.

    Notes
    -----
    The reflection amplitude follows from matching plane waves across a
    single-site delta potential: r_R(k) = -i g / (sin k + i g), g = eps0/2t.
    Only |r_R|^2 enters most observables; the phase matters for the Hankel
    term alone.
    """

    eps0_over_t: float
    kind = "single_impurity"

    def __post_init__(self):
        if not np.isfinite(self.eps0_over_t):
            raise DomainError("eps0_over_t must be finite")
        object.__setattr__(self, "eps0_over_t", float(self.eps0_over_t))

    def _eval(self, k):
        g = 0.5 * self.eps0_over_t
        if g == 0.0:
            return Transparent()._eval(k)
        s = np.sin(k)
        den = s * s + g * g
        t2 = s * s / den
        r2 = g * g / den
        r = -1j * g / (s + 1j * g)
        return ScatteringProbabilities(t2, r2, t2, r2, r)

    @property
    def transparent(self) -> bool:
        return self.eps0_over_t == 0.0

    def describe(self):
        return {"kind": self.kind, "eps0_over_t": self.eps0_over_t}


@dataclass(frozen=True)
class TableScatterer(ScattererModel):
    """Scatterer sampled on a momentum grid.

    |t|^2 is interpolated with a monotone cubic (PCHIP), clipped to [0, 1],
    and |r|^2 = 1 - |t|^2 is re-imposed afterwards so unitarity holds to
    round-off. The reflection phase, when given, is interpolated linearly;
    otherwise r_R is taken real and nonnegative.

    Parameters
    ----------
    k : sequence of float
        Strictly increasing grid inside [0, pi]; at least two points.
    t2 : sequence of float
        Transmission probabilities on the grid, each in [0, 1].
    phase : sequence of float, optional
        arg r_R(k) on the grid.
    """

    k: tuple
    t2: tuple
    phase: tuple | None = None
    kind = "table"
    _interp: PchipInterpolator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        t2 = np.asarray(self.t2, dtype=float)
        if k.ndim != 1 or k.size < 2 or k.shape != t2.shape:
            raise DomainError("table needs matching 1-D k and t2 columns with >= 2 rows")
        if np.any(np.diff(k) <= 0):
            raise DomainError("table momenta must be strictly increasing")
        if k[0] < 0 or k[-1] > np.pi:
            raise DomainError("table momenta must lie in [0, pi]")
        if np.any((t2 < 0) | (t2 > 1)):
            raise DomainError("table t2 values must lie in [0, 1]")
        object.__setattr__(self, "k", tuple(k))
        object.__setattr__(self, "t2", tuple(t2))
        if self.phase is not None:
            ph = np.asarray(self.phase, dtype=float)
            if ph.shape != k.shape:
                raise DomainError("phase column must match the k grid")
            object.__setattr__(self, "phase", tuple(ph))
        object.__setattr__(self, "_interp", PchipInterpolator(k, t2, extrapolate=False))

    def _eval(self, k):
        lo, hi = self.k[0], self.k[-1]
        if np.any((k < lo) | (k > hi)):
            raise DomainError(f"table covers [{lo}, {hi}] only")
        t2 = np.clip(self._interp(k), 0.0, 1.0)
        r2 = 1.0 - t2
        amp = np.sqrt(r2)
        if self.phase is not None:
            amp = amp * np.exp(1j * np.interp(k, self.k, self.phase))
        else:
            amp = amp.astype(complex)
        return ScatteringProbabilities(t2, r2, t2.copy(), r2.copy(), amp)

    def describe(self):
        return {"kind": self.kind, "n_points": len(self.k),
                "k_range": [self.k[0], self.k[-1]]}


@dataclass(frozen=True)
class CompositeScatterer(ScattererModel):
    """Incoherent series composition of scatterers, listed left to right.

    Phase information between the parts is averaged away, so the combined
    reflection amplitude is reported real and nonnegative.
    """

    parts: tuple
    kind = "composite"

    def __post_init__(self):
        parts = tuple(self.parts)
        if len(parts) < 1 or not all(isinstance(p, ScattererModel) for p in parts):
            raise DomainError("composite needs at least one ScattererModel part")
        object.__setattr__(self, "parts", parts)

    def _eval(self, k):
        acc = self.parts[0]._eval(k)
        for part in self.parts[1:]:
            acc = _compose(acc, part._eval(k), k)
        return acc

    @property
    def transparent(self) -> bool:
        return all(p.transparent for p in self.parts)

    def describe(self):
        return {"kind": self.kind, "parts": [p.describe() for p in self.parts]}


def _denominator(a: ScatteringProbabilities, b: ScatteringProbabilities, k) -> np.ndarray:
    d = 1.0 - a.r_R2 * b.r_L2
    bad = d <= 0.0
    if np.any(bad):
        raise PerfectReflectionError(float(np.broadcast_to(k, d.shape)[bad].ravel()[0]))
    return d


def _compose(a: ScatteringProbabilities, b: ScatteringProbabilities, k) -> ScatteringProbabilities:
    d = _denominator(a, b, k)
    t_L2 = a.t_L2 * b.t_L2 / d
    r_L2 = a.r_L2 + a.t_R2 * a.t_L2 * b.r_L2 / d
    t_R2 = b.t_R2 * a.t_R2 / d
    r_R2 = b.r_R2 + b.t_L2 * b.t_R2 * a.r_R2 / d
    return ScatteringProbabilities(t_L2, r_R2, t_R2, r_L2, np.sqrt(r_R2).astype(complex))


def combine_incoherent(left: ScattererModel, right: ScattererModel) -> CompositeScatterer:
    """Series composition with inter-scatterer phases averaged out.

    Evaluating the result raises :class:`PerfectReflectionError` at any
    momentum where ``|r_R^I r_L^II| = 1``.
    """
    return CompositeScatterer((left, right))


def single_impurity_probabilities(k, eps0_over_t: float) -> dict:
    """Transmission and reflection probabilities of a single-site impurity.

    Parameters
    ----------
    k : float or array
        Momentum in the open interval (0, pi).
    eps0_over_t : float

    Returns
    -------
    dict
        ``t2``, ``r2`` and the complex reflection amplitude ``r``.
    """
    k_arr = np.asarray(k, dtype=float)
    if np.any(~((k_arr > 0.0) & (k_arr < np.pi))):
        raise DomainError(f"k must lie in (0, pi), got {k}")
    p = SingleImpurity(eps0_over_t).eval(k_arr)
    unwrap = (lambda x: x.item()) if k_arr.ndim == 0 else (lambda x: x)
    return {"t2": unwrap(p.t_L2), "r2": unwrap(p.r_R2), "r": unwrap(p.r_R)}


@dataclass(frozen=True)
class NuProfile:
    """Signed transmission imbalance nu(k) on the bias window.

    (1 + nu)/2 is the occupation of the window states: |t_L|^2 when the
    window is filled from the left (k_fr < k_fl), |r_R|^2 otherwise.
    """

    window: FermiWindow
    scatterer: ScattererModel

    @property
    def empty(self) -> bool:
        """No bias window; downstream code reduces to equilibrium."""
        return self.window.is_equilibrium

    def nu(self, k):
        p = self.scatterer.eval(k)
        diff = p.t_L2 - p.r_R2
        out = diff if self.window.left_biased else -diff
        return np.clip(out, -1.0, 1.0)

    def occupation(self, k):
        """(1 + nu(k)) / 2, computed without cancellation."""
        p = self.scatterer.eval(k)
        return p.t_L2 if self.window.left_biased else p.r_R2

    @property
    def nu_minus(self) -> float:
        return float(self.nu(self.window.k_minus))

    @property
    def nu_plus(self) -> float:
        return float(self.nu(self.window.k_plus))

    @property
    def nu0(self) -> float:
        return float(self.nu(self.window.k0))


def nu_profile(window: FermiWindow, scatterer: ScattererModel) -> NuProfile:
    """Build the nu(k) profile; check ``.empty`` for a collapsed window."""
    return NuProfile(window, scatterer)


def pair_transmissions(left: ScattererModel, right: ScattererModel, k):
    """Multiple-reflection-corrected transmissions between two scatterers.

    Returns
    -------
    (T_I, T_II) : tuple of arrays
        ``|t_L^I|^2 / D`` and ``|t_R^II|^2 / D`` with
        ``D = 1 - |r_R^I|^2 |r_L^II|^2``.
    """
    k = _check_momenta(k)
    a, b = left._eval(k), right._eval(k)
    d = _denominator(a, b, k)
    return a.t_L2 / d, b.t_R2 / d

