"""Quasimodes u = exp(i tau w) f(tau^(1/2) z) for P = D_s^4 + Delta^2.

In z = (s, x) in R^N, N = 1 + d, the weight is

    phi(z) = g x_1 + sum_j (hess_j z_j^2 / 2 + cubic_j z_j^3)

so d_s phi(0) = 0 and grad_x phi(0) = g e_1.  The profile is a bump of
half-width L; a wide profile (L = 8 by default) keeps the tau^(m-2) terms
small against tau^(m-1) already at tau ~ 20, since the bump's k-th
derivative scales like L^-k.  With xi_0 = g e_2 the point
theta = (0, xi_0) + i d phi(0) satisfies p(theta) = dp(theta) = 0 for
p(zeta) = zeta_0^4 + (zeta_x . zeta_x)^2, and w(z) = z . theta.

Because P has constant coefficients, exp(-i tau w) D^beta u is the Fourier
multiplier (tau^(1/2) eta + tau theta)^beta applied to f, evaluated at
y = tau^(1/2) z.  After that change of variables the weight becomes
exp(2 G(y) + 2 tau^(-1/2) sum cubic_j y_j^3), a product over axes.  With a
product profile f(y) = prod f_1(y_j) every weighted norm is a finite sum of
products of 1D Gram integrals, which a periodic trapezoid rule with FFT
derivatives resolves to spectral accuracy.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when grid refinement changes a ratio by more than the allowed amount."""


def bump(y: np.ndarray, half_width: float = 1.0) -> np.ndarray:
    """exp(-1 / (1 - (y/L)^2)) on |y| < L, zero outside."""
    t = np.asarray(y, dtype=float) / half_width
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@dataclass
class QuasimodeSetup:
    d: int = 2
    grad: float = 1.0
    hess: tuple | None = None
    cubic: tuple | None = None
    half_width: float = 8.0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("the double characteristic point needs d >= 2")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        n = self.d + 1
        L = self.half_width
        # defaults keep the weight's shape fixed in units of the profile width
        self.hess = tuple([-1.0 / L**2] * n) if self.hess is None else tuple(float(v) for v in self.hess)
        self.cubic = tuple([0.25 / L**3] * n) if self.cubic is None else tuple(float(v) for v in self.cubic)
        if len(self.hess) != n or len(self.cubic) != n:
            raise ValueError(f"hess and cubic need {n} entries")

    @property
    def n_dim(self) -> int:
        return self.d + 1

    def theta(self) -> np.ndarray:
        th = np.zeros(self.n_dim, dtype=complex)
        th[1] = 1j * self.grad
        th[2] = self.grad
        return th

    def symbol(self, zeta: np.ndarray) -> complex:
        zx = zeta[1:]
        return zeta[0] ** 4 + (zx @ zx) ** 2

    def symbol_gradient(self, zeta: np.ndarray) -> np.ndarray:
        zx = zeta[1:]
        out = np.empty(self.n_dim, dtype=complex)
        out[0] = 4 * zeta[0] ** 3
        out[1:] = 4 * (zx @ zx) * zx
        return out


# ---------------------------------------------------------------- polynomials in eta


def _poly_mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            key = tuple(x + y for x, y in zip(ka, kb))
            out[key] = out.get(key, 0) + va * vb
    return out


def _poly_add(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) + v
    return out


def conjugated_symbol(setup: QuasimodeSetup, tau: float) -> dict:
    """Coefficients of p(tau^(1/2) eta + tau theta) as a polynomial in eta."""
    n = setup.n_dim
    th = setup.theta()
    zero = (0,) * n

    def linear(j):
        e = [0] * n
        e[j] = 1
        return {zero: tau * th[j], tuple(e): np.sqrt(tau)}

    ls = [linear(j) for j in range(n)]
    s_part = _poly_mul(_poly_mul(ls[0], ls[0]), _poly_mul(ls[0], ls[0]))
    sq = {}
    for j in range(1, n):
        sq = _poly_add(sq, _poly_mul(ls[j], ls[j]))
    return {k: v for k, v in _poly_add(s_part, _poly_mul(sq, sq)).items() if v != 0}


def monomial_symbol(setup: QuasimodeSetup, alpha: tuple, tau: float) -> dict:
    """Coefficients of (tau^(1/2) eta + tau theta)^alpha."""
    n = setup.n_dim
    th = setup.theta()
    out = {(0,) * n: 1.0 + 0j}
    for j, a in enumerate(alpha):
        e = [0] * n
        e[j] = 1
        lin = {(0,) * n: tau * th[j], tuple(e): np.sqrt(tau)}
        for _ in range(a):
            out = _poly_mul(out, lin)
    return out


# ---------------------------------------------------------------- 1D quadrature


def axis_gram(setup: QuasimodeSetup, axis: int, tau: float, n_points: int, max_order: int = 4) -> np.ndarray:
    """M[a, b] = int exp(2 G_j(y) + 2 c_j y^3 / tau^(1/2)) D^a f conj(D^b f) dy."""
    half = setup.half_width
    y = -half + 2 * half * np.arange(n_points) / n_points
    dy = 2 * half / n_points
    f = bump(y, half)
    eta = 2 * np.pi * np.fft.fftfreq(n_points, d=dy)
    fh = np.fft.fft(f)
    derivs = np.array([np.fft.ifft(eta**a * fh) for a in range(max_order + 1)])
    weight = np.exp(setup.hess[axis] * y**2 + 2 * setup.cubic[axis] * y**3 / np.sqrt(tau))
    return (derivs * weight) @ derivs.conj().T * dy


def weighted_norm_sq(poly: dict, grams: list[np.ndarray]) -> float:
    """|| poly(D) f ||^2 in the weighted L^2 of the product measure."""
    keys = list(poly)
    coef = np.array([poly[k] for k in keys])
    n = len(keys)
    g = np.ones((n, n), dtype=complex)
    for j, m in enumerate(grams):
        idx = np.array([k[j] for k in keys])
        g *= m[np.ix_(idx, idx)]
    val = coef @ g @ coef.conj()
    return float(val.real)


def limit_integral(setup: QuasimodeSetup, n_points: int = 2**10) -> float:
    """int exp(2 G(y)) |f(y)|^2 dy, the tau -> infinity limit of tau^(N/2) |e^(tau phi) u|^2."""
    half = setup.half_width
    y = -half + 2 * half * np.arange(n_points) / n_points
    dy = 2 * half / n_points
    f2 = bump(y, half) ** 2
    return float(np.prod([np.sum(np.exp(h * y**2) * f2) * dy for h in setup.hess]))


def direct_norm_sq(setup: QuasimodeSetup, tau: float, n_points: int = 2**10) -> float:
    """|| exp(tau phi) u_tau ||^2 on the z grid, without the change of variables."""
    half = setup.half_width / np.sqrt(tau)
    z = -half + 2 * half * np.arange(n_points) / n_points
    dz = 2 * half / n_points
    th = setup.theta()
    total = 1.0
    for j in range(setup.n_dim):
        lin = setup.grad * z if j == 1 else 0.0
        phi = lin + 0.5 * setup.hess[j] * z**2 + setup.cubic[j] * z**3
        # |exp(i tau w)| = exp(-tau Im(theta_j) z_j)
        log_mod = tau * (phi - th[j].imag * z)
        total *= np.sum(np.exp(2 * log_mod) * bump(np.sqrt(tau) * z, setup.half_width) ** 2) * dz
    return float(total)


# ---------------------------------------------------------------- loss measurement


@dataclass
class QuasimodeFit:
    taus: np.ndarray
    ratio_p: np.ndarray
    ratio_alpha: dict
    slope_p: float
    slope_alpha: dict
    norm_gap: float
    refinement_change: float
    notes: list[str] = field(default_factory=list)


def _ratios(setup, tau, n_points, alphas):
    grams = [axis_gram(setup, j, tau, n_points) for j in range(setup.n_dim)]
    base = weighted_norm_sq({(0,) * setup.n_dim: 1.0}, grams)
    rp = np.sqrt(weighted_norm_sq(conjugated_symbol(setup, tau), grams) / base)
    ra = {a: np.sqrt(weighted_norm_sq(monomial_symbol(setup, a, tau), grams) / base) for a in alphas}
    return rp, ra


def default_alphas(setup: QuasimodeSetup) -> list[tuple]:
    n = setup.n_dim
    out = []
    for order in (1, 2):
        for a in itertools.product(range(order + 1), repeat=n):
            if sum(a) == order and a[0] == 0 and all(a[j] == 0 for j in range(3, n)):
                out.append(a)
    return out


def quasimode_loss(taus, setup: QuasimodeSetup | None = None, alphas=None,
                   n_points: int = 2**8, refine_tol: float = 0.01) -> QuasimodeFit:
    """Log-log slopes of R_P and R_alpha over the tau list, with a refinement guard."""
    setup = setup or QuasimodeSetup()
    taus = np.asarray(taus, dtype=float)
    if taus.size < 4 or np.any(np.diff(taus) <= 0) or taus[0] <= 0:
        raise ValueError("need at least 4 increasing positive tau values")
    th = setup.theta()
    if abs(setup.symbol(th)) > 1e-12 or np.max(np.abs(setup.symbol_gradient(th))) > 1e-12:
        raise ValueError("theta is not a double characteristic point")
    alphas = default_alphas(setup) if alphas is None else [tuple(a) for a in alphas]
    for a in alphas:
        if len(a) != setup.n_dim:
            raise ValueError(f"multi-index {a} has wrong length")
        if np.prod([th[j] ** a[j] for j in range(setup.n_dim)]) == 0:
            raise ValueError(f"theta^alpha = 0 for alpha = {a}; the ratio has a different rate")

    rps, ras = [], {a: [] for a in alphas}
    worst_change = 0.0
    for tau in taus:
        rp, ra = _ratios(setup, tau, n_points, alphas)
        rp2, ra2 = _ratios(setup, tau, 2 * n_points, alphas)
        change = max([abs(rp2 / rp - 1)] + [abs(ra2[a] / ra[a] - 1) for a in alphas])
        worst_change = max(worst_change, change)
        if change > refine_tol:
            raise QuadratureError(f"refinement changed a ratio by {change:.3g} at tau = {tau}")
        rps.append(rp2)
        for a in alphas:
            ras[a].append(ra2[a])

    logt = np.log(taus)
    rps = np.array(rps)
    slope_p = float(np.polyfit(logt, np.log(rps), 1)[0])
    slope_a = {a: float(np.polyfit(logt, np.log(ras[a]), 1)[0]) for a in alphas}
    limit = limit_integral(setup)
    tau_max = taus[-1]
    gap = abs(direct_norm_sq(setup, tau_max) * tau_max ** (setup.n_dim / 2) / limit - 1)
    fit = QuasimodeFit(taus, rps, {a: np.array(v) for a, v in ras.items()}, slope_p, slope_a,
                       float(gap), float(worst_change))
    fit.notes.append(f"N = {setup.n_dim}, {n_points} and {2 * n_points} points per axis")
    return fit


def write_quasimode_csv(fit: QuasimodeFit, path, header=()) -> None:
    alphas = list(fit.ratio_alpha)
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        for line in fit.notes:
            fh.write(f"# {line}\n")
        names = ["R_alpha_" + "".join(str(v) for v in a) for a in alphas]
        fh.write(",".join(["tau", "R_P"] + names) + "\n")
        for i, tau in enumerate(fit.taus):
            vals = [tau, fit.ratio_p[i]] + [fit.ratio_alpha[a][i] for a in alphas]
            fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")
        fh.write(f"# slope_P {fit.slope_p:.17g}\n")
        for a, n in zip(alphas, names):
            fh.write(f"# slope_{n[2:]} {fit.slope_alpha[a]:.17g}\n")
        fh.write(f"# norm_limit_gap {fit.norm_gap:.17g}\n")
        fh.write(f"# refinement_change {fit.refinement_change:.17g}\n")
