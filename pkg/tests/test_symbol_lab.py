import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import THETA0_IDENTITY, char_floor_lower_bound
from platelab.symbol_lab import (ScanConstraints, SymbolSample, char_floor, crossing_samples,
                                 double_root_samples, estimate_theta0, expansion_residual,
                                 homogeneity_residual, mu_factorization_residual, principal_root, q_hat,
                                 region_scan, root_diagnostics, sphere_samples, write_scan_csv)

EYE1 = np.eye(1)
finite = st.floats(-5.0, 5.0, allow_nan=False)


def test_pure_t_d_sample_has_a_double_root():
    for k in (1, 2):
        d = root_diagnostics(SymbolSample(k, [0.0, 0.0], [0.0, 0.0, 1.0]))
        assert d.m_hat == 0
        assert d.rho_plus == pytest.approx(-1j) and d.rho_minus == pytest.approx(-1j)
        assert d.mu_hat == pytest.approx(-4.0)
        assert d.flags["double_root"] and d.flags["ordering"]


def test_mu_factorization_on_random_points():
    rng = np.random.default_rng(0)
    t = rng.standard_normal(100_000) + 1j * rng.standard_normal(100_000)
    x0 = rng.standard_normal(100_000)
    assert mu_factorization_residual(t, x0).max() <= 1e-12
    assert mu_factorization_residual(np.array([1 + 2j]), np.array([1.0]))[0] == 0.0


@settings(max_examples=200, deadline=None)
@given(k=st.sampled_from([1, 2]), s=finite, x=finite, ts=finite, tx=finite, td=st.floats(0.0, 5.0))
def test_expansion_and_homogeneity(k, s, x, ts, tx, td):
    if math.hypot(s, x, ts, tx, td) < 1e-3:
        return
    sample = SymbolSample(k, [s, x], [ts, tx, td])
    assert expansion_residual(sample) <= 1e-12
    assert homogeneity_residual(sample) <= 1e-12
    diag = root_diagnostics(sample)
    assert diag.flags["ordering"]
    assert diag.h_hat.real >= 0


def test_roots_solve_the_quadratic():
    rng = np.random.default_rng(4)
    for _ in range(50):
        z, t = rng.standard_normal(2), rng.standard_normal(3)
        t[-1] = abs(t[-1])
        for k in (1, 2):
            d = root_diagnostics(SymbolSample(k, z, t))
            for rho in (d.rho_plus, d.rho_minus):
                q = q_hat(k, z[:1], z[None, 1:], np.array([rho]), t[:1], t[None, 1:2], t[2:], EYE1)
                assert abs(q[0]) <= 1e-12 * (1 + abs(rho) ** 2)


def test_real_root_on_the_crossing():
    rng = np.random.default_rng(1)
    for k in (1, 2):
        b = crossing_samples(rng, 1000, 2, k, EYE1)
        _, _, rp, rm, mu, _ = b.roots(k, EYE1)
        assert np.abs(rp.imag).max() <= 1e-12
        assert np.abs(rm.imag + 2 * b.t_d).max() <= 1e-12
        assert np.abs(mu).max() <= 1e-12


def test_double_root_samples_cancel():
    rng = np.random.default_rng(2)
    metric = np.array([[2.5]])
    for k in (1, 2):
        b = double_root_samples(rng, 1000, 2, k, metric, t_d=0.3)
        m = b.roots(k, metric)[0]
        assert np.abs(m).max() <= 1e-14


def test_branch_cut_is_flagged():
    h, cut = principal_root(np.array([-4.0 + 0j, -4.0 + 1e-3j, 4.0]))
    assert h[0] == 2j and cut[0]
    assert not cut[1] and not cut[2]
    # m = -1: sigma = 0, t_sigma = 0, w = i -> r(w) = -1
    d = root_diagnostics(SymbolSample(1, [0.0, 0.0], [0.0, 1.0, 0.5]))
    assert d.m_hat == pytest.approx(-1.0)
    assert d.flags["branch_cut"] == "flagged"
    assert d.ok


def test_sign_of_mu_matches_the_upper_root():
    rng = np.random.default_rng(5)
    b = sphere_samples(rng, 20_000, 2)
    for k in (1, 2):
        _, _, rp, _, mu, _ = b.roots(k, EYE1)
        sel = (np.abs(rp.imag) > 1e-9) & (np.abs(mu) > 1e-9)
        assert np.all(np.sign(rp.imag[sel]) == np.sign(mu[sel]))


def test_negative_t_d_is_rejected():
    with pytest.raises(ValueError, match="t_d"):
        SymbolSample(1, [0.0, 1.0], [0.0, 0.0, -0.1])


def test_invalid_metric():
    with pytest.raises(ValueError):
        SymbolSample(1, [0.0, 1.0], [0.0, 0.0, 1.0], metric=np.array([[-1.0]]))


def test_theta0_is_sin_pi_over_8():
    rng = np.random.default_rng(0)
    for k in (1, 2):
        theta0, _ = estimate_theta0(rng, 20_000, 2, k, EYE1)
        assert theta0 == pytest.approx(THETA0_IDENTITY, abs=1e-6)


def test_char_floor_matches_the_analytic_bound():
    floor, _ = char_floor(np.random.default_rng(0), 20_000, 2, EYE1, sigma_floor=0.1)
    assert floor >= char_floor_lower_bound(0.1) * (1 - 1e-6)
    assert floor == pytest.approx(char_floor_lower_bound(0.1), rel=1e-3)


def test_region_scan_is_clean():
    rep = region_scan(5_000, seed=3)
    assert rep.ok, rep.violations
    assert rep.constants["char_floor"] > 0
    for k in (1, 2):
        assert rep.constants[f"separation_c_k{k}"] > 0
        assert rep.constants[f"C1_k{k}"] > 0


def test_region_scan_reports_injected_precondition_failure():
    rep = region_scan(500, ScanConstraints(inject_negative_td=True), seed=0)
    assert rep.violations["precondition_t_d"] == 2
    assert rep.witnesses["precondition_t_d"]["sample"][-1] < 0
    assert not rep.ok


def test_region_scan_is_deterministic(tmp_path):
    paths = []
    for name in ("a.csv", "b.csv"):
        p = tmp_path / name
        write_scan_csv(region_scan(300, seed=7), p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
