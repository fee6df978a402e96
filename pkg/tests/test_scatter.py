import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nessent.scatter import (
    CompositeScatterer,
    DomainError,
    FermiWindow,
    PerfectReflectionError,
    SingleImpurity,
    TableScatterer,
    Transparent,
    combine_incoherent,
    nu_profile,
    pair_transmissions,
    single_impurity_probabilities,
)

momenta = st.floats(1e-3, math.pi - 1e-3)
strengths = st.floats(-5.0, 5.0)


def test_window_properties():
    w = FermiWindow(k_fl=2.0, k_fr=1.5)
    assert (w.k_minus, w.k_plus, w.k0, w.dk) == (1.5, 2.0, 1.75, 0.5)
    assert w.left_biased and not w.is_equilibrium
    s = w.swapped()
    assert (s.k_fl, s.k_fr) == (1.5, 2.0) and not s.left_biased
    assert FermiWindow(1.0, 1.0).is_equilibrium


@pytest.mark.parametrize("k_fl, k_fr", [(-0.1, 1.0), (1.0, 3.5), (float("nan"), 1.0)])
def test_window_rejects_momenta_outside_band(k_fl, k_fr):
    with pytest.raises(DomainError):
        FermiWindow(k_fl, k_fr)


@settings(max_examples=100, deadline=None)
@given(momenta, strengths)
def test_single_impurity_unitarity_and_closed_form(k, eps):
    p = SingleImpurity(eps).eval(k)
    g = eps / 2
    assert p.t_L2 + p.r_R2 == pytest.approx(1.0, abs=1e-14)
    assert p.t_L2 == pytest.approx(math.sin(k) ** 2 / (math.sin(k) ** 2 + g * g), abs=1e-14)
    assert abs(p.r_R) ** 2 == pytest.approx(p.r_R2, abs=1e-14)
    assert p.t_R2 == pytest.approx(p.t_L2) and p.r_L2 == pytest.approx(p.r_R2)


def test_single_impurity_probabilities_domain():
    out = single_impurity_probabilities(math.pi / 2, 1.0)
    assert out["t2"] == pytest.approx(0.8) and out["r2"] == pytest.approx(0.2)
    with pytest.raises(DomainError):
        single_impurity_probabilities(0.0, 1.0)
    with pytest.raises(DomainError):
        SingleImpurity(float("inf"))


def test_zero_strength_is_transparent():
    assert SingleImpurity(0.0).transparent
    p = SingleImpurity(0.0).eval(np.linspace(0.1, 3.0, 5))
    np.testing.assert_array_equal(p.t_L2, 1.0)


def test_momenta_outside_band_rejected():
    with pytest.raises(DomainError):
        Transparent().eval(4.0)


def test_table_interpolates_and_keeps_unitarity():
    k = np.linspace(0.1, 3.0, 12)
    sc = TableScatterer(k, 0.5 + 0.4 * np.sin(k))
    np.testing.assert_allclose(sc.eval(k).t_L2, 0.5 + 0.4 * np.sin(k), atol=1e-15)
    mid = np.linspace(0.2, 2.9, 40)
    p = sc.eval(mid)
    np.testing.assert_allclose(p.t_L2 + p.r_R2, 1.0, atol=1e-15)
    assert np.all((p.t_L2 >= 0) & (p.t_L2 <= 1))
    np.testing.assert_array_equal(p.r_R.imag, 0.0)


def test_table_phase_column():
    sc = TableScatterer([0.5, 2.5], [0.5, 0.5], phase=[0.0, 1.0])
    r = sc.eval(1.5).r_R
    assert np.angle(r) == pytest.approx(0.5) and abs(r) ** 2 == pytest.approx(0.5)


@pytest.mark.parametrize("k, t2", [([0.5], [0.5]), ([1.0, 0.5], [0.5, 0.5]),
                                   ([0.5, 4.0], [0.5, 0.5]), ([0.5, 1.0], [0.5, 1.2])])
def test_table_validation(k, t2):
    with pytest.raises(DomainError):
        TableScatterer(k, t2)


def test_table_outside_its_range():
    with pytest.raises(DomainError):
        TableScatterer([1.0, 2.0], [0.5, 0.5]).eval(0.5)


@settings(max_examples=50, deadline=None)
@given(momenta, strengths, strengths)
def test_composite_matches_incoherent_series_formula(k, e1, e2):
    a, b = SingleImpurity(e1).eval(k), SingleImpurity(e2).eval(k)
    p = combine_incoherent(SingleImpurity(e1), SingleImpurity(e2)).eval(k)
    expected = a.t_L2 * b.t_L2 / (1 - a.r_R2 * b.r_L2)
    assert p.t_L2 == pytest.approx(expected, abs=1e-14)
    assert p.t_L2 + p.r_R2 == pytest.approx(1.0, abs=1e-13)
    assert p.t_R2 + p.r_L2 == pytest.approx(1.0, abs=1e-13)


def test_composite_with_transparent_part_is_identity():
    k = np.linspace(0.2, 2.9, 7)
    sc = SingleImpurity(1.3)
    for comp in (CompositeScatterer((sc, Transparent())), CompositeScatterer((Transparent(), sc))):
        np.testing.assert_allclose(comp.eval(k).t_L2, sc.eval(k).t_L2, atol=1e-15)
    assert CompositeScatterer((Transparent(), Transparent())).transparent


def test_composite_needs_models():
    with pytest.raises(DomainError):
        CompositeScatterer(())


def test_perfect_reflection_detected():
    wall = TableScatterer([0.1, 3.0], [0.0, 0.0])
    with pytest.raises(PerfectReflectionError):
        combine_incoherent(wall, wall).eval(1.0)
    with pytest.raises(PerfectReflectionError):
        pair_transmissions(wall, wall, 1.0)


def test_nu_profile_orientation():
    sc = SingleImpurity(1.0)
    left = nu_profile(FermiWindow(2.0, 1.0), sc)
    right = nu_profile(FermiWindow(1.0, 2.0), sc)
    k = np.linspace(1.0, 2.0, 5)
    np.testing.assert_allclose(left.nu(k), -right.nu(k), atol=1e-15)
    np.testing.assert_allclose(left.occupation(k), 0.5 * (1 + left.nu(k)), atol=1e-15)
    assert left.nu0 == pytest.approx(float(left.nu(1.5)))
    assert (left.nu_minus, left.nu_plus) == (pytest.approx(float(left.nu(1.0))), pytest.approx(float(left.nu(2.0))))
    assert nu_profile(FermiWindow(1.0, 1.0), sc).empty


def test_pair_transmissions_reduce_to_single():
    k = np.linspace(0.2, 2.9, 9)
    sc = SingleImpurity(0.8)
    t1, t2 = pair_transmissions(sc, Transparent(), k)
    np.testing.assert_allclose(t1, sc.eval(k).t_L2, atol=1e-15)
    np.testing.assert_allclose(t2, 1.0, atol=1e-15)
