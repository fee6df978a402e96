"""Experiment definitions behind the command-line runner.

Each experiment splits a validated config into picklable tasks, evaluates
each task into a list of row dicts, and optionally post-processes the full
row list (fits). Rows always carry the parameter tuple that produced them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import asymptotics as asy
from . import exact
from .scatter import FermiWindow
from .symbols import build_between_scatterers, build_toeplitz_correlation, full_correlation_series

__all__ = ["ExperimentSpec", "EXPERIMENTS", "FriedelFit", "friedel_wavenumber", "friedel_fit"]


@dataclass(frozen=True)
class ExperimentSpec:
    """How one experiment turns a config into rows.

    ``tasks(cfg)`` yields argument tuples for ``worker``; ``finalize(cfg, rows)``
    may append derived rows once every task is done.
    """

    summary: str
    tasks: Callable
    worker: Callable
    required: tuple = ()
    defaults: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    finalize: Callable | None = None


def _scatterer(entry):
    from .cli import build_scatterer

    return build_scatterer(entry)


def _label(entry) -> str:
    kind = entry["kind"]
    if kind == "single_impurity":
        return f"single_impurity(eps0_over_t={entry['eps0_over_t']!r})"
    if kind == "composite":
        return "composite(" + ",".join(_label(p) for p in entry["parts"]) + ")"
    if kind == "table":
        return f"table({len(entry['k'])} points)"
    return kind


def _params(entry, window, **extra) -> dict:
    row = {"scatterer": _label(entry)}
    if entry.get("kind") == "single_impurity":
        row["eps0_over_t"] = entry["eps0_over_t"]
    row.update({"k_fl": window[0], "k_fr": window[1], "dk": window[0] - window[1]})
    row.update(extra)
    return row


def _flags(flags) -> str:
    return ";".join(sorted(flags))



# ---------------------------------------------------------------------------
# vnee_scaling


def _vnee_tasks(cfg):
    for entry in cfg.scatterers:
        for window in cfg.windows:
            for L in cfg.L:
                yield (entry, window, L)


def _vnee_worker(entry, window, L):
    win, sc = FermiWindow(*window), _scatterer(entry)
    numeric = exact.vnee_exact(build_toeplitz_correlation(win, sc, L))
    co = asy.vnee_coefficients(win, sc)
    analytic = co.value(L)
    return [_params(entry, window, L=L, numeric=numeric, analytic=analytic,
                    abs_dev=abs(analytic - numeric), c_lin=co.c_lin, c_log=co.c_log,
                    c_const=co.c_const, flags=_flags(co.flags))]


# ---------------------------------------------------------------------------
# coefficient_sweep


def _coeff_tasks(cfg):
    for entry in cfg.scatterers:
        for window in cfg.windows:
            for n in cfg.n:
                yield (entry, window, n, cfg.alpha)


def _coeff_worker(entry, window, n, alphas):
    win, sc = FermiWindow(*window), _scatterer(entry)
    rows = []
    for alpha in alphas:
        t = asy.coefficients(win, sc, n, alpha)
        rows.append(_params(entry, window, n=n, alpha=alpha,
                            lin_re=t.lin.real, lin_im=t.lin.imag,
                            log_re=t.log.real, log_im=t.log.imag,
                            const_re=t.const.real, const_im=t.const.imag,
                            divergent="divergent" in t.flags, flags=_flags(t.flags)))
    return rows


# ---------------------------------------------------------------------------
# resolved_profile


def _per_L_tasks(cfg):
    for entry in cfg.scatterers:
        for window in cfg.windows:
            for L in cfg.L:
                yield (entry, window, L, cfg.n, cfg.options)


def _profile_worker(entry, window, L, ns, options):
    win, sc = FermiWindow(*window), _scatterer(entry)
    spec = build_toeplitz_correlation(win, sc, L)
    half = int(options["q_window"])
    rows = []
    for n in ns:
        num = exact.resolved_moments(spec, n)
        ana, patched = asy.analytic_resolved_moments(win, sc, L, n)
        gauss = asy.gaussian_resolution(win, sc, n, L)
        center = asy.rounded_mean_charge(gauss.mean_n)
        for Q in range(max(0, center - half), min(L, center + half) + 1):
            a, b = float(ana[Q]), float(num[Q])
            rows.append(_params(entry, window, L=L, n=n, quantity="Z_n", Q=Q,
                                rounded_mean=center, analytic=a, numeric=b, abs_dev=abs(a - b),
                                rel_dev=abs(a - b) / abs(b) if b else float("nan"),
                                gaussian=float(gauss.moment(Q)), patched_alphas=patched))
    s_num = exact.resolved_vnee(spec)
    s_ana, patched = asy.analytic_resolved_vnee(win, sc, L)
    gauss = asy.gaussian_resolution(win, sc, 1.0, L)
    center = asy.rounded_mean_charge(gauss.mean_n)
    for Q in range(max(0, center - half), min(L, center + half) + 1):
        a, b = float(s_ana[Q]), float(s_num[Q])
        rows.append(_params(entry, window, L=L, n=1.0, quantity="S", Q=Q, rounded_mean=center,
                            analytic=a, numeric=b, abs_dev=abs(a - b),
                            rel_dev=abs(a - b) / abs(b) if b else float("nan"),
                            gaussian=float("nan"), patched_alphas=patched))
    return rows


# ---------------------------------------------------------------------------
# equipartition


def _equipartition_worker(entry, window, L, _ns, options):
    win, sc = FermiWindow(*window), _scatterer(entry)
    spec = build_toeplitz_correlation(win, sc, L)
    z1, s = exact.resolved_moments(spec, 1.0), exact.resolved_vnee(spec)
    mean, _var = exact.charge_moments_exact(spec)
    center = asy.rounded_mean_charge(mean)
    gauss = asy.gaussian_resolution(win, sc, 1.0, L)
    s_total = exact.vnee_exact(spec)
    slope = asy.equipartition_slope(win, sc)
    half = int(options["q_window"])

    def sigma(Q):
        try:
            return exact.post_projection_vnee(z1, s, Q)
        except exact.EmptySectorError:
            return float("nan")

    rows = []
    for Q in range(max(0, center - half), min(L - 1, center + half) + 1):
        num, num_next = sigma(Q), sigma(Q + 1)
        g, g_next = float(asy.sigma_gaussian(gauss, s_total, Q)), float(asy.sigma_gaussian(gauss, s_total, Q + 1))
        rows.append(_params(entry, window, L=L, Q=Q, rounded_mean=center,
                            numeric=num, analytic=g, abs_dev=abs(g - num),
                            step_numeric=num_next - num, step_analytic=g_next - g, slope=slope))
    return rows


# ---------------------------------------------------------------------------
# genfun_deviation


def _genfun_tasks(cfg):
    for entry in cfg.scatterers:
        for window in cfg.windows:
            for L in cfg.L:
                for n in cfg.n:
                    yield (entry, window, L, n, cfg.alpha)


def _genfun_worker(entry, window, L, n, alphas):
    win, sc = FermiWindow(*window), _scatterer(entry)
    spec = build_toeplitz_correlation(win, sc, L)
    al = np.asarray(alphas, dtype=float)
    num = exact.log_gen_fun(spec, n, al)
    ana, bad, flags = asy.log_gen_fun_asymptotic(win, sc, n, al, L)
    rows = []
    for i, alpha in enumerate(al):
        a, b = complex(ana[i]), complex(num[i])
        rows.append(_params(entry, window, L=L, n=n, alpha=float(alpha),
                            analytic_re=a.real, analytic_im=a.imag,
                            numeric_re=b.real, numeric_im=b.imag,
                            abs_dev=abs(a - b), abs_dev_re=abs(a.real - b.real),
                            divergent=bool(bad[i]), flags=_flags(flags)))
    return rows


# ---------------------------------------------------------------------------
# friedel


@dataclass(frozen=True)
class FriedelFit:
    """Power-law fits of a Friedel-oscillating deviation delta(d).

    delta(d) ~ average(d) + amplitude(d) cos(q d + phi); both envelopes are
    fitted as c d^p on log-log axes.
    """

    wavenumber: float
    average_exponent: float
    average_stderr: float
    amplitude_exponent: float
    amplitude_stderr: float
    n_blocks: int


def friedel_wavenumber(ds, values) -> float:
    """Dominant oscillation wavenumber in (0, pi], from a weighted periodogram.

    The signal is multiplied by d to flatten the decaying envelope and
    detrended before the transform.
    """
    ds = np.asarray(ds, dtype=float)
    y = np.asarray(values, dtype=float) * ds
    y = y - np.polyval(np.polyfit(ds, y, 2), ds)
    qs = np.linspace(0.0, np.pi, 8193)[1:]
    power = np.abs(np.exp(-1j * np.outer(qs, ds)) @ y) ** 2
    i = int(np.argmax(power))
    if 0 < i < qs.size - 1:
        # Parabolic refinement of the peak.
        a, b, c = power[i - 1], power[i], power[i + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom else 0.0
        return float(qs[i] + shift * (qs[1] - qs[0]))
    return float(qs[i])


def friedel_fit(ds, values, fit_min_d: float, periods_per_block: int = 8) -> FriedelFit:
    """Block least-squares envelope extraction followed by log-log fits.

    Within each block of a few oscillation periods, delta is fitted by
    (c0 + c1 x) + (c2 + c3 x) cos(q d) + (c4 + c5 x) sin(q d), x = d - d_c.
    c0 is the period-averaged deviation and hypot(c2, c4) the amplitude at
    the block center d_c. Blocks with d_c >= ``fit_min_d`` enter the fits.
    """
    ds = np.asarray(ds, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(ds)
    ds, values = ds[order], values[order]
    q = friedel_wavenumber(ds, values)
    period = 2 * np.pi / q
    width = max(periods_per_block * period, 6.0 * np.median(np.diff(ds)) if ds.size > 1 else 1.0)
    centers, avg, amp = [], [], []
    start = ds[0]
    while start + width <= ds[-1] + 1e-9:
        sel = (ds >= start) & (ds < start + width)
        if np.count_nonzero(sel) >= 8:
            d = ds[sel]
            dc = 0.5 * (d[0] + d[-1])
            x = d - dc
            c, s = np.cos(q * d), np.sin(q * d)
            A = np.column_stack([np.ones_like(x), x, c, x * c, s, x * s])
            # At q = pi the sine columns are pure round-off; the cutoff drops them.
            coef, *_ = np.linalg.lstsq(A, values[sel], rcond=1e-8)
            centers.append(dc)
            avg.append(coef[0])
            amp.append(math.hypot(coef[2], coef[4]))
        start += width
    centers, avg, amp = map(np.asarray, (centers, avg, amp))
    use = (centers >= fit_min_d) & (np.abs(avg) > 0) & (amp > 0)
    if np.count_nonzero(use) < 3:
        raise ValueError("too few blocks beyond fit_min_d for an envelope fit")
    x = np.log(centers[use])
    fa = stats.linregress(x, np.log(np.abs(avg[use])))
    fb = stats.linregress(x, np.log(amp[use]))
    return FriedelFit(q, float(fa.slope), float(fa.stderr), float(fb.slope), float(fb.stderr),
                      int(np.count_nonzero(use)))


_FRIEDEL_CHUNK = 64


def _friedel_tasks(cfg):
    for entry in cfg.scatterers:
        for window in cfg.windows:
            for L in cfg.L:
                for n in cfg.n:
                    for alpha in cfg.alpha:
                        for i in range(0, len(cfg.d), _FRIEDEL_CHUNK):
                            yield (entry, window, L, n, alpha, cfg.d[i:i + _FRIEDEL_CHUNK])


def _friedel_worker(entry, window, L, n, alpha, ds):
    win, sc = FermiWindow(*window), _scatterer(entry)
    base = complex(exact.log_gen_fun(build_toeplitz_correlation(win, sc, L), n, alpha))
    rows = []
    for d, spec in full_correlation_series(win, sc, L, ds):
        val = complex(exact.log_gen_fun(spec, n, alpha))
        rows.append(_params(entry, window, L=L, n=n, alpha=alpha, row="sample", d=d,
                            log_Z_re=val.real, log_Z_im=val.imag,
                            deviation=val.real - base.real))
    return rows


def _friedel_finalize(cfg, rows):
    groups: dict = {}
    for row in rows:
        key = (row["scatterer"], row["k_fl"], row["k_fr"], row["L"], row["n"], row["alpha"])
        groups.setdefault(key, []).append(row)
    fits = []
    for key, grp in groups.items():
        L = key[3]
        fit_min = cfg.options["fit_min_d"] or 2 * L
        ref = grp[0]
        base = {k: ref[k] for k in ref if k not in ("row", "d", "log_Z_re", "log_Z_im", "deviation")}
        try:
            fit = friedel_fit([r["d"] for r in grp], [r["deviation"] for r in grp], fit_min)
        except ValueError as exc:
            fits.append({**base, "row": "fit", "fit_error": str(exc)})
            continue
        fits.append({**base, "row": "fit", "fit_min_d": fit_min, "n_blocks": fit.n_blocks,
                     "wavenumber": fit.wavenumber, "wavenumber_expected": 2 * ref["k_fr"],
                     "average_exponent": fit.average_exponent, "average_stderr": fit.average_stderr,
                     "amplitude_exponent": fit.amplitude_exponent,
                     "amplitude_stderr": fit.amplitude_stderr})
    return rows + fits


# ---------------------------------------------------------------------------
# two_scatterer


def _two_tasks(cfg):
    for pair in cfg.scatterers:
        for window in cfg.windows:
            for L in cfg.L:
                yield (pair, window, L)


def _two_params(pair, window, **extra):
    row = {"left": _label(pair["left"]), "right": _label(pair["right"]),
           "k_fl": window[0], "k_fr": window[1], "dk": window[0] - window[1]}
    row.update(extra)
    return row


def _two_worker(pair, window, L):
    win = FermiWindow(*window)
    left, right = _scatterer(pair["left"]), _scatterer(pair["right"])
    numeric = exact.vnee_exact(build_between_scatterers(win, left, right, L))
    co = asy.two_scatterer_vnee(win, left, right)
    return [_two_params(pair, window, row="sample", L=L, numeric=numeric,
                        c_lin=co.c_lin, c_log=co.c_log, flags=_flags(co.flags))]


def _two_finalize(cfg, rows):
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["left"], row["right"], row["k_fl"], row["k_fr"]), []).append(row)
    fits = []
    for grp in groups.values():
        ref = grp[0]
        base = {k: ref[k] for k in ("left", "right", "k_fl", "k_fr", "dk")}
        if len(grp) < 3:
            fits.append({**base, "row": "fit", "fit_error": "need at least 3 sizes"})
            continue
        fit = stats.linregress([r["L"] for r in grp], [r["numeric"] for r in grp])
        rel = abs(fit.slope - ref["c_lin"]) / abs(ref["c_lin"]) if ref["c_lin"] else float("nan")
        fits.append({**base, "row": "fit", "fit_c_lin": fit.slope, "fit_c_lin_stderr": fit.stderr,
                     "fit_intercept": fit.intercept, "c_lin": ref["c_lin"], "rel_dev": rel})
    return rows + fits


# ---------------------------------------------------------------------------

EXPERIMENTS = {
    "vnee_scaling": ExperimentSpec(
        "entanglement entropy vs L: exact vs linear+log+const asymptotics",
        _vnee_tasks, _vnee_worker, required=("L",)),
    "coefficient_sweep": ExperimentSpec(
        "lin/log/const coefficients of ln Z_n(alpha) over windows, n and alpha",
        _coeff_tasks, _coeff_worker, defaults={"n": (1.0,), "alpha": (0.0,)}),
    "resolved_profile": ExperimentSpec(
        "charge-resolved Z_n(Q) and S(Q) near the mean: exact, analytic, Gaussian",
        _per_L_tasks, _profile_worker, required=("L",), defaults={"n": (1.0, 2.0)},
        options={"q_window": 10}),
    "equipartition": ExperimentSpec(
        "post-projection entropy sigma(Q) and its step across sectors",
        _per_L_tasks, _equipartition_worker, required=("L",), options={"q_window": 5}),
    "genfun_deviation": ExperimentSpec(
        "analytic vs exact ln Z_n(alpha) over an alpha grid",
        _genfun_tasks, _genfun_worker, required=("L", "alpha"), defaults={"n": (2.0,)}),
    "friedel": ExperimentSpec(
        "Friedel oscillations of ln Z_n(alpha) with distance d, with envelope fits",
        _friedel_tasks, _friedel_worker, required=("L", "d"),
        defaults={"n": (2.0,), "alpha": (0.0,)}, options={"fit_min_d": 0},
        finalize=_friedel_finalize),
    "two_scatterer": ExperimentSpec(
        "entropy between two scatterers with a linear-in-L fit",
        _two_tasks, _two_worker, required=("L",), finalize=_two_finalize),
}
