import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from platelab import multiprecision as mpx
from platelab.eigensolve import eigensolve
from platelab.grid_ops import Grid, assemble_bilaplacian
from platelab.specineq import (GAMMA, AuxiliaryProfile, ObservationRegion, build_w, calibrate_growth_bound,
                               derivative_seeds, fit_growth, fourth_difference_defect, g_square_integral,
                               h3_norm, high_precision_basis, masked_gram, minoration_constant,
                               observability_constant, observability_scan, power_iteration_constant,
                               random_search_constant, verify_interpolation, write_observability_csv)


@pytest.fixture(scope="module")
def small_case():
    op = assemble_bilaplacian(Grid.uniform(200), "clamped")
    basis = eigensolve(op, 12)
    region = ObservationRegion.interval(0.0, 0.2)
    return op, basis, region


def test_region_closed_boxes_and_errors():
    g = Grid.uniform(9)  # nodes at 0.1, ..., 0.9
    mask = ObservationRegion.interval(0.2, 0.4).indicator(g)
    assert mask.sum() == 3
    with pytest.raises(ValueError):
        ObservationRegion.interval(0.41, 0.49).indicator(g)
    with pytest.raises(ValueError):
        ObservationRegion.interval(0.5, 0.5)
    big = ObservationRegion.interval(0.0, 0.6)
    assert big.contains(ObservationRegion.interval(0.2, 0.4), g)


def test_full_domain_constant_is_one(small_case):
    _, basis, _ = small_case
    full = ObservationRegion.interval(0.0, 1.0)
    assert observability_constant(basis, full, basis.mus[-1]) == pytest.approx(1.0, rel=1e-10)


def test_monotone_under_region_inclusion(small_case):
    _, basis, region = small_case
    bigger = ObservationRegion.interval(0.0, 0.4)
    for cut in basis.mus[:6]:
        assert observability_constant(basis, bigger, cut) <= observability_constant(basis, region, cut) * (1 + 1e-9)


def test_float_and_multiprecision_agree_on_well_conditioned_spans(small_case):
    op, basis, region = small_case
    mask = region.indicator(basis.grid)
    hp, _ = high_precision_basis(basis, op, mask)
    for cut in basis.mus[:4]:
        a = observability_constant(basis, region, cut)
        b = observability_constant(basis, region, cut, hp=hp)
        assert a == pytest.approx(b, rel=1e-6)


def test_oracles_match_scan(small_case):
    op, basis, region = small_case
    scan = observability_scan(basis, region, op, precision="mp")
    mask = region.indicator(basis.grid)
    hp, g = high_precision_basis(basis, op, mask)
    c_scan = scan.constants[-1]
    assert power_iteration_constant(g, hp.ctx) == pytest.approx(c_scan, rel=1e-10)
    assert random_search_constant(g, n_samples=3000, ctx=hp.ctx) == pytest.approx(c_scan, rel=1e-8)
    # float64 oracles on a well-conditioned leading block
    g3 = masked_gram(basis, mask, 3)
    c3 = observability_constant(basis, region, basis.mus[2])
    assert c3 < 1e4
    assert power_iteration_constant(g3) == pytest.approx(c3, rel=1e-8)
    assert random_search_constant(g3, n_samples=2000) == pytest.approx(c3, rel=1e-6)


def test_scan_monotone_and_precision_reported(small_case):
    op, basis, region = small_case
    scan = observability_scan(basis, region, op)
    assert scan.is_monotone()
    assert scan.precision_digits > 16


def test_fit_growth_recovers_exact_law():
    mus = np.linspace(10, 1e5, 12)
    samples = [(m, 2.0 * math.exp(1.5 * m**0.25)) for m in mus]
    rep = fit_growth(samples)
    assert rep.fit_quarter.b == pytest.approx(1.5, rel=1e-12)
    assert rep.fit_quarter.a == pytest.approx(math.log(2.0), rel=1e-10)
    assert rep.fit_quarter.r2 == pytest.approx(1.0)


def test_fit_growth_drops_infinite_and_needs_samples():
    samples = [(float(m), math.exp(m**0.25)) for m in range(1, 10)] + [(100.0, math.inf)]
    rep = fit_growth(samples)
    assert any("infinite" in n for n in rep.notes)
    with pytest.raises(ValueError):
        fit_growth(samples[:3])


def test_write_observability_csv(tmp_path):
    rep = fit_growth([(float(m), math.exp(m**0.25)) for m in range(1, 10)])
    write_observability_csv(rep, tmp_path / "o.csv", header=["x"])
    text = (tmp_path / "o.csv").read_text()
    assert text.startswith("# x\n")


# ---------------------------------------------------------------- auxiliary profile

def test_profile_ode_and_seeds():
    prof = AuxiliaryProfile()
    s = np.linspace(-3, 3, 25)
    assert np.max(fourth_difference_defect(prof, s)) <= 1e-6
    np.testing.assert_allclose(derivative_seeds(prof), [0, 0, 0, 1], atol=1e-6)
    # closed-form derivatives close the cycle: f'''' = -f
    np.testing.assert_allclose(prof.f(s, 4), -prof.f(s), atol=1e-12)


def test_profile_matches_g_of_gamma_s():
    prof = AuxiliaryProfile()
    s = np.linspace(-5, 5, 1000)
    np.testing.assert_allclose(prof.f(s), AuxiliaryProfile.g(GAMMA * s), atol=1e-12, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(mu=st.floats(1.0, 1e6), s=st.floats(0.0, 1.0))
def test_mode_profile_scaling(mu, s):
    prof = AuxiliaryProfile()
    q = mu**0.25
    assert prof.mode_profile(mu, s, 3) == pytest.approx(prof.f(q * s, 3), rel=1e-12, abs=1e-300)


def test_minoration_constants():
    c = minoration_constant(1.0, 2.0, 1.0)
    assert c > 0
    assert c == pytest.approx(g_square_integral(1.0, 2.0, 1.0), rel=1e-6) or c < g_square_integral(1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        minoration_constant(2.0, 1.0, 1.0)


# ---------------------------------------------------------------- w, H^3, growth bound

def test_build_w_residual_small_and_seed_at_zero(small_case):
    op, basis, _ = small_case
    coeffs = np.zeros(len(basis))
    coeffs[:3] = [1.0, -0.5, 0.25]
    s = np.linspace(0.0, 0.2, 401)
    w = build_w(basis, coeffs, s, op)
    assert w.residual < 1e-3
    # w and its first two s-derivatives vanish at s = 0
    assert np.max(np.abs(w.values[0])) < 1e-14


def test_h3_norm_of_separable_field():
    g = Grid.uniform(200)
    op = assemble_bilaplacian(g, "hinged")
    basis = eigensolve(op, 2)
    coeffs = np.array([1.0, 0.0])
    s = np.linspace(0.0, 1.0, 801)
    w = build_w(basis, coeffs, s)
    val = h3_norm(w, order=0)
    prof = AuxiliaryProfile()
    mu = basis.mus[0]
    l2_s = np.trapezoid(prof.mode_profile(mu, s) ** 2, s)
    assert val == pytest.approx(math.sqrt(l2_s), rel=1e-3)


def test_interpolation_constants_finite(small_case):
    op, basis, region = small_case
    coeffs = np.random.default_rng(0).standard_normal(len(basis))
    res = verify_interpolation(coeffs, basis, region=region, op=op)
    assert np.all(np.isfinite(res.constants)) and np.all(res.constants > 0)
    assert 0 < res.ratio <= 1


def test_growth_calibration_is_self_consistent(small_case):
    _, basis, _ = small_case
    chk = calibrate_growth_bound(basis, calib_mode=4, modes=[4, 5, 6])
    assert chk.holds[0]
    assert chk.required[0] == pytest.approx(chk.constant, rel=1e-10)
