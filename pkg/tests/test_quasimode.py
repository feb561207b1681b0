import numpy as np
import pytest

from platelab.quasimode import (QuadratureError, QuasimodeSetup, axis_gram, bump, conjugated_symbol,
                                default_alphas, direct_norm_sq, limit_integral, quasimode_loss,
                                weighted_norm_sq, write_quasimode_csv)

TAUS = [20.0, 40.0, 80.0, 160.0]


@pytest.fixture(scope="module")
def fit():
    return quasimode_loss(TAUS, QuasimodeSetup())


def test_theta_is_a_double_characteristic_point():
    s = QuasimodeSetup(d=3)
    th = s.theta()
    assert s.symbol(th) == 0
    assert np.all(s.symbol_gradient(th) == 0)


def test_slopes(fit):
    assert fit.slope_p == pytest.approx(3.0, abs=0.1)
    for a, slope in fit.slope_alpha.items():
        assert slope == pytest.approx(sum(a), abs=0.05)


def test_refinement_guard_passes_at_default_resolution(fit):
    assert fit.refinement_change <= 0.01


def test_norm_tends_to_the_limit_integral(fit):
    assert fit.norm_gap < 1e-3


def test_change_of_variables_matches_direct_norm():
    s = QuasimodeSetup()
    tau = 40.0
    grams = [axis_gram(s, j, tau, 256) for j in range(s.n_dim)]
    base = weighted_norm_sq({(0,) * s.n_dim: 1.0}, grams)
    assert base == pytest.approx(direct_norm_sq(s, tau) * tau ** (s.n_dim / 2), rel=1e-10)


def test_conjugated_symbol_has_no_tau_squared_or_cubed_constant():
    # p(tau theta) = 0 and dp(tau theta) = 0 remove the pure tau^4 and tau^3.5 eta terms
    poly = conjugated_symbol(QuasimodeSetup(), 1.0)
    assert abs(poly.get((0, 0, 0), 0.0)) < 1e-12
    for e in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]:
        assert abs(poly.get(e, 0.0)) < 1e-12


def test_default_alphas_avoid_vanishing_theta_powers():
    s = QuasimodeSetup()
    th = s.theta()
    for a in default_alphas(s):
        assert np.prod([th[j] ** a[j] for j in range(s.n_dim)]) != 0


def test_refuses_alpha_with_zero_theta_power():
    with pytest.raises(ValueError, match="theta\\^alpha = 0"):
        quasimode_loss(TAUS, QuasimodeSetup(), alphas=[(1, 0, 0)])


def test_coarse_grid_raises_quadrature_error():
    with pytest.raises(QuadratureError):
        quasimode_loss(TAUS, QuasimodeSetup(), n_points=16)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        quasimode_loss([20.0, 40.0, 80.0], QuasimodeSetup())
    with pytest.raises(ValueError):
        quasimode_loss([20.0, 10.0, 80.0, 160.0], QuasimodeSetup())
    with pytest.raises(ValueError):
        QuasimodeSetup(d=1)
    with pytest.raises(ValueError):
        QuasimodeSetup(hess=(1.0,))


def test_bump_support():
    y = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
    b = bump(y)
    assert b[0] == 0 and b[-1] == 0
    assert b[2] == pytest.approx(np.exp(-1))
    assert limit_integral(QuasimodeSetup()) > 0


def test_csv(fit, tmp_path):
    path = tmp_path / "q.csv"
    write_quasimode_csv(fit, path)
    text = path.read_text()
    assert "slope_P" in text
    rows = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert rows[0].startswith("tau,R_P")
    assert len(rows) == 5
