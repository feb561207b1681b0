"""Root algebra of the factor symbols q_k and randomized checks of their positions.

For k = 1, 2 and tangential variables zeta' = (sigma, xi'), a real vector
t = (t_sigma, t_xi', t_d) with t_d >= 0 and an SPD form r on xi',

    m_k   = (-1)^k i (sigma + i t_sigma)^2 + r(xi' + i t_xi')
    h_k   = sqrt(m_k) with Re h_k >= 0
    rho   = -i t_d +/- i h_k           (roots in xi_d of (xi_d + i t_d)^2 + m_k)
    mu_k  = 4 t_d^2 Re m_k - 4 t_d^4 + (Im m_k)^2
    lam   = (|t|^2 + |zeta'|^2)^(1/2)

r is extended complex-bilinearly: r(w) = w^T R w without conjugation.
Everything is vectorized over sample batches; the scan works on the
sphere lam = 1 because all quantities are homogeneous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

BRANCH_TOL = 1e-14


@dataclass
class SymbolSample:
    k: int
    zeta_prime: np.ndarray
    t_hat: np.ndarray
    metric: np.ndarray | None = None

    def __post_init__(self):
        if self.k not in (1, 2):
            raise ValueError("k must be 1 or 2")
        self.zeta_prime = np.asarray(self.zeta_prime, dtype=float).ravel()
        self.t_hat = np.asarray(self.t_hat, dtype=float).ravel()
        if self.zeta_prime.size < 1 or self.t_hat.size != self.zeta_prime.size + 1:
            raise ValueError("need zeta' in R^d and t_hat in R^(d+1)")
        self.metric = _check_metric(self.metric, self.zeta_prime.size - 1)
        if self.t_hat[-1] < 0:
            raise ValueError(f"t_d = {self.t_hat[-1]} must be nonnegative")

    @property
    def lam(self) -> float:
        return float(np.sqrt(self.t_hat @ self.t_hat + self.zeta_prime @ self.zeta_prime))


@dataclass
class RootDiagnostics:
    m_hat: complex
    h_hat: complex
    rho_plus: complex
    rho_minus: complex
    mu_hat: float
    flags: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v for v in self.flags.values() if v is not None and not isinstance(v, str))


def _check_metric(metric, n: int) -> np.ndarray:
    if metric is None:
        return np.eye(n)
    r = np.asarray(metric, dtype=float)
    if r.shape != (n, n):
        raise ValueError(f"metric must be {n}x{n}")
    if not np.allclose(r, r.T):
        raise ValueError("metric must be symmetric")
    if n and np.linalg.eigvalsh(r).min() <= 0:
        raise ValueError("metric must be positive definite")
    return r


def bilinear_form(metric: np.ndarray, w: np.ndarray) -> np.ndarray:
    """r(w) = w^T R w row by row, with no complex conjugation."""
    return np.einsum("ni,ij,nj->n", w, metric, w)


def principal_root(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """sqrt with Re >= 0; on the negative real axis pick +i sqrt|m| and flag it."""
    m = np.asarray(m, dtype=complex)
    h = np.sqrt(m)
    on_cut = (m.real < 0) & (np.abs(m.imag) <= BRANCH_TOL * np.abs(m))
    h = np.where(on_cut, 1j * np.sqrt(np.abs(m)), h)
    return h, on_cut


def symbol_batch(k, sigma, xi, t_sigma, t_xi, t_d, metric):
    """Vectorized (m, h, rho+, rho-, mu, branch flag) for a sample batch.

    ``xi`` and ``t_xi`` have shape (n, d-1); the others are length n.
    """
    sign = -1.0 if k == 1 else 1.0
    a = sigma + 1j * t_sigma
    w = xi + 1j * t_xi
    m = sign * 1j * a * a + bilinear_form(metric, w)
    h, cut = principal_root(m)
    rho_p = -1j * t_d + 1j * h
    rho_m = -1j * t_d - 1j * h
    mu = 4 * t_d**2 * m.real - 4 * t_d**4 + m.imag**2
    return m, h, rho_p, rho_m, mu, cut


def root_diagnostics(sample: SymbolSample, tol: float = 1e-12) -> RootDiagnostics:
    zp, th = sample.zeta_prime, sample.t_hat
    m, h, rp, rm, mu, cut = symbol_batch(
        sample.k, zp[:1], zp[None, 1:], th[:1], th[None, 1:-1], th[-1:], sample.metric)
    m, h, rp, rm, mu, cut = m[0], h[0], rp[0], rm[0], float(mu[0]), bool(cut[0])
    td = float(th[-1])
    lam = sample.lam
    flags = {
        "ordering": bool(rm.imag <= -td <= rp.imag),
        "double_root": _double_root_consistent(m, rp, rm, td, lam, tol),
        "sign_mu": None if td == 0 else _sign_consistent(rp.imag, mu, lam, tol),
        "branch_cut": "flagged" if cut else None,
    }
    return RootDiagnostics(m, h, rp, rm, mu, flags)


def _double_root_consistent(m, rp, rm, td, lam, tol):
    """rho+ = rho- iff m = 0 iff both roots sit at -i t_d, to tolerance."""
    scale = max(lam, np.finfo(float).tiny)
    m_zero = abs(m) <= tol * scale**2
    # roots differ by 2h with |h| = |m|^(1/2), so root tolerances are sqrt(tol)
    roots_equal = abs(rp - rm) <= 2 * np.sqrt(tol) * scale
    at_centre = max(abs(rp + 1j * td), abs(rm + 1j * td)) <= 2 * np.sqrt(tol) * scale
    if m_zero:
        return bool(roots_equal and at_centre)
    return bool(abs(rp - rm) > np.sqrt(tol) * scale)


def _sign_consistent(im_rho_plus, mu, lam, tol):
    """sign(Im rho+) = sign(mu) outside a rounding band around zero."""
    a = np.asarray(im_rho_plus) / lam
    b = np.asarray(mu) / lam**4
    pos_neg = (a > tol) & (b < -tol)
    neg_pos = (a < -tol) & (b > tol)
    out = ~(pos_neg | neg_pos)
    return bool(out) if out.ndim == 0 else out


def mu_factorization_residual(t: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """|lhs - rhs| / scale for 4 x0^2 Re m - 4 x0^4 + (Im m)^2 = 4 (x0^2 + y^2)(x^2 - x0^2)."""
    t = np.asarray(t, dtype=complex)
    x0 = np.asarray(x0, dtype=float)
    m = t * t
    lhs = 4 * x0**2 * m.real - 4 * x0**4 + m.imag**2
    rhs = 4 * (x0**2 + t.imag**2) * (t.real**2 - x0**2)
    scale = (np.abs(t) ** 2 + x0**2) ** 2
    return np.abs(lhs - rhs) / scale


def expansion_residual(sample: SymbolSample) -> float:
    """Coefficientwise gap between (X - rho+)(X - rho-) and (X + i t_d)^2 + m."""
    d = root_diagnostics(sample)
    td = sample.t_hat[-1]
    lhs = np.array([1.0, -(d.rho_plus + d.rho_minus), d.rho_plus * d.rho_minus])
    rhs = np.array([1.0, 2j * td, -td * td + d.m_hat])
    return float(np.max(np.abs(lhs - rhs)) / max(sample.lam**2, 1e-300))


def homogeneity_residual(sample: SymbolSample, scales=(0.5, 2.0, 10.0)) -> float:
    """Worst relative gap of rho(nu x) = nu rho(x) and mu(nu x) = nu^4 mu(x)."""
    base = root_diagnostics(sample)
    lam = sample.lam
    worst = 0.0
    for nu in scales:
        s = SymbolSample(sample.k, nu * sample.zeta_prime, nu * sample.t_hat, sample.metric)
        d = root_diagnostics(s)
        worst = max(worst,
                    abs(d.rho_plus - nu * base.rho_plus) / (nu * lam),
                    abs(d.rho_minus - nu * base.rho_minus) / (nu * lam),
                    abs(d.mu_hat - nu**4 * base.mu_hat) / (nu * lam) ** 4)
    return float(worst)


def q_hat(k, sigma, xi, xi_d, t_sigma, t_xi, t_d, metric):
    m = symbol_batch(k, sigma, xi, t_sigma, t_xi, t_d, metric)[0]
    return (xi_d + 1j * t_d) ** 2 + m


# ---------------------------------------------------------------- sampling


@dataclass
class SampleBatch:
    """Columns sigma, xi (n, d-1), t_sigma, t_xi (n, d-1), t_d."""

    sigma: np.ndarray
    xi: np.ndarray
    t_sigma: np.ndarray
    t_xi: np.ndarray
    t_d: np.ndarray

    @classmethod
    def from_matrix(cls, x: np.ndarray) -> "SampleBatch":
        d1 = (x.shape[1] - 3) // 2
        return cls(x[:, 0], x[:, 1:1 + d1], x[:, 1 + d1], x[:, 2 + d1:2 + 2 * d1], x[:, -1])

    def matrix(self) -> np.ndarray:
        return np.column_stack([self.sigma, self.xi, self.t_sigma, self.t_xi, self.t_d])

    def __len__(self):
        return len(self.sigma)

    @property
    def t_prime(self) -> np.ndarray:
        return np.sqrt(self.t_sigma**2 + np.sum(self.t_xi**2, axis=1))

    @property
    def zeta_norm(self) -> np.ndarray:
        return np.sqrt(self.sigma**2 + np.sum(self.xi**2, axis=1))

    @property
    def t_norm(self) -> np.ndarray:
        return np.sqrt(self.t_prime**2 + self.t_d**2)

    @property
    def lam(self) -> np.ndarray:
        return np.sqrt(self.t_norm**2 + self.zeta_norm**2)

    def normalized(self) -> "SampleBatch":
        x = self.matrix()
        return SampleBatch.from_matrix(x / np.linalg.norm(x, axis=1)[:, None])

    def roots(self, k: int, metric: np.ndarray):
        return symbol_batch(k, self.sigma, self.xi, self.t_sigma, self.t_xi, self.t_d, metric)

    def row(self, i: int) -> list[float]:
        return [float(v) for v in self.matrix()[i]]


def sphere_samples(rng: np.random.Generator, n: int, d: int) -> SampleBatch:
    """Uniform samples of lam = 1 in R^(2d+1) folded onto t_d >= 0."""
    x = rng.standard_normal((n, 2 * d + 1))
    x /= np.linalg.norm(x, axis=1)[:, None]
    x[:, -1] = np.abs(x[:, -1])
    return SampleBatch.from_matrix(x)


def _from_parameters(p: np.ndarray, d: int, td: np.ndarray) -> SampleBatch:
    d1 = d - 1
    return SampleBatch(p[:, 0], p[:, 1:1 + d1], p[:, 1 + d1], p[:, 2 + d1:2 + 2 * d1], td)


def crossing_samples(rng, n, d, k, metric) -> SampleBatch:
    """Samples with t_d = Re h_k, so rho_{k,+} is real; then put on the sphere."""
    p = rng.standard_normal((n, 2 * d))
    base = _from_parameters(p, d, np.zeros(n))
    h = base.roots(k, metric)[1]
    base.t_d = h.real.copy()
    return base.normalized()


def double_root_samples(rng, n, d, k, metric, t_d=None) -> SampleBatch:
    """Samples with m_k = 0.

    Take a = sigma + i t_sigma, a unit direction e and w = omega a e / sqrt(r(e))
    with omega^2 = -(-1)^k i, so r(w) = -(-1)^k i a^2 cancels the first term.
    """
    d1 = d - 1
    if d1 < 1:
        raise ValueError("double roots need d >= 2")
    a = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    e = rng.standard_normal((n, d1))
    e /= np.sqrt(bilinear_form(metric, e))[:, None]
    omega = np.exp(1j * np.pi / 4) if k == 1 else np.exp(-1j * np.pi / 4)
    w = (omega * a)[:, None] * e
    td = np.zeros(n) if t_d is None else np.asarray(t_d, dtype=float) * np.ones(n)
    return SampleBatch(a.real, w.real, a.imag, w.imag, td).normalized()


def _cap_samples(rng, n, d, radius) -> SampleBatch:
    """Samples of lam = 1 with |t| <= radius (radial fraction uniform)."""
    t = rng.standard_normal((n, d + 1))
    t /= np.linalg.norm(t, axis=1)[:, None]
    t[:, -1] = np.abs(t[:, -1])
    r = radius * rng.random(n)
    t *= r[:, None]
    z = rng.standard_normal((n, d))
    z *= (np.sqrt(1 - r * r) / np.linalg.norm(z, axis=1))[:, None]
    return SampleBatch(z[:, 0], z[:, 1:], t[:, 0], t[:, 1:-1], t[:, -1])


# ---------------------------------------------------------------- scan


@dataclass
class ScanConstraints:
    d: int = 2
    metric: np.ndarray | None = None
    c0: float = 0.25
    sigma_floor: float = 0.1
    tol: float = 1e-12
    inject_negative_td: bool = False


@dataclass
class ScanReport:
    n_samples: int
    violations: dict
    witnesses: dict
    constants: dict
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(v == 0 for v in self.violations.values())

    def record(self, name: str, bad: np.ndarray, batch: SampleBatch | None = None, k: int | None = None):
        bad = np.asarray(bad, dtype=bool)
        self.violations[name] = self.violations.get(name, 0) + int(bad.sum())
        if bad.any() and name not in self.witnesses and batch is not None:
            i = int(np.flatnonzero(bad)[0])
            self.witnesses[name] = {"k": k, "sample": batch.row(i)}


def _crossing_objective(p, d, k, metric):
    b = _from_parameters(p[None, :], d, np.zeros(1))
    b.t_d = b.roots(k, metric)[1].real
    return float(b.t_norm[0] / b.lam[0])


def estimate_theta0(rng, n, d, k, metric, n_refine=5) -> tuple[float, list[float]]:
    """min |t| / lam over the set where some root is real, sampled then polished."""
    p = rng.standard_normal((n, 2 * d))
    b = _from_parameters(p, d, np.zeros(n))
    b.t_d = b.roots(k, metric)[1].real
    ratio = b.t_norm / b.lam
    best = float(ratio.min())
    witness = b.normalized().row(int(np.argmin(ratio)))
    for i in np.argsort(ratio)[:n_refine]:
        res = minimize(_crossing_objective, p[i], args=(d, k, metric), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        if res.fun < best:
            best = float(res.fun)
            q = _from_parameters(res.x[None, :], d, np.zeros(1))
            q.t_d = q.roots(k, metric)[1].real
            witness = q.normalized().row(0)
    return best, witness


def char_floor(rng, n, d, metric, sigma_floor=0.1, n_refine=5) -> tuple[float, list[float]]:
    """min of |q_1| + |q_2| over lam = 1 (including xi_d) with |t_sigma| >= sigma_floor."""
    def draw(m):
        x = rng.standard_normal((m, 2 * d + 2))
        x /= np.linalg.norm(x, axis=1)[:, None]
        return x

    x = draw(n)
    keep = np.abs(x[:, 1 + d]) >= sigma_floor
    while keep.sum() < n:
        x = np.vstack([x[keep], draw(n)])
        keep = np.abs(x[:, 1 + d]) >= sigma_floor
    x = x[keep][:n]
    x[:, -1] = np.abs(x[:, -1])

    def value(x):
        x = np.atleast_2d(x)
        d1 = d - 1
        sig, xi, xid = x[:, 0], x[:, 1:1 + d1], x[:, d]
        ts, tx, td = x[:, 1 + d], x[:, 2 + d:2 + d + d1], x[:, -1]
        return (np.abs(q_hat(1, sig, xi, xid, ts, tx, td, metric))
                + np.abs(q_hat(2, sig, xi, xid, ts, tx, td, metric)))

    def objective(y):
        y = y / np.linalg.norm(y)
        y[-1] = abs(y[-1])
        if abs(y[1 + d]) < sigma_floor:
            return 10.0
        return float(value(y)[0])

    vals = value(x)
    best = float(vals.min())
    witness = x[int(np.argmin(vals))].tolist()
    for i in np.argsort(vals)[:n_refine]:
        res = minimize(objective, x[i], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        if res.fun < best:
            y = res.x / np.linalg.norm(res.x)
            y[-1] = abs(y[-1])
            best, witness = float(res.fun), y.tolist()
    return best, witness


def region_scan(n_samples: int, constraints: ScanConstraints | None = None, seed: int = 0) -> ScanReport:
    """Sample the sphere lam = 1 and test every root-position predicate.

    Structured sample sets (real roots, double roots, caps |t| <= theta)
    each get n_samples draws per k so the measure-zero cases are exercised.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    c = constraints or ScanConstraints()
    d, tol = c.d, c.tol
    metric = _check_metric(c.metric, d - 1)
    rng = np.random.default_rng(seed)
    rep = ScanReport(n_samples, {}, {}, {})
    rep.notes.append(f"d = {d}, sample budget {n_samples} per set and per k, seed {seed}")

    for k in (1, 2):
        kk = 3 - k
        # generic samples: ordering, double-root equivalence, sign of mu
        b = sphere_samples(rng, n_samples, d)
        if c.inject_negative_td:
            b.t_d[0] = -abs(b.t_d[0]) - 0.1
        rep.record("precondition_t_d", b.t_d < 0, b, k)
        m, h, rp, rm, mu, cut = b.roots(k, metric)
        rep.record("ordering", ~((rm.imag <= -b.t_d) & (-b.t_d <= rp.imag)), b, k)
        pos = b.t_d > 0
        rep.record("sign_mu", pos & ~_sign_consistent(rp.imag, mu, 1.0, tol), b, k)
        rep.constants[f"branch_cut_hits_k{k}"] = int(cut.sum())
        m_zero = np.abs(m) <= tol
        rep.record("double_root", m_zero & ~(np.abs(rp - rm) <= 2 * np.sqrt(tol)), b, k)
        rep.record("double_root", ~m_zero & (np.abs(rp - rm) <= np.sqrt(tol)), b, k)

        # samples near the crossing: sign of mu on both sides of Re h = t_d
        near = crossing_samples(rng, n_samples, d, k, metric)
        for f in (1 - 1e-6, 1 + 1e-6):
            nb = SampleBatch(near.sigma, near.xi, near.t_sigma, near.t_xi, near.t_d * f)
            _, _, rp2, _, mu2, _ = nb.roots(k, metric)
            rep.record("sign_mu", (nb.t_d > 0) & ~_sign_consistent(rp2.imag, mu2, 1.0, tol * 1e-3), nb, k)

        # real roots: Im rho- = -2 t_d, and the size relations at a real root
        _, _, rp, rm, _, _ = near.roots(k, metric)
        rep.record("real_root", np.abs(rp.imag) > tol, near, k)
        rep.record("real_root", np.abs(rm.imag + 2 * near.t_d) > tol, near, k)
        rep.constants[f"real_root_td_ratio_k{k}"] = float(np.max(near.t_d / (near.t_prime + near.zeta_norm)))
        rep.constants[f"real_root_zeta_ratio_k{k}"] = float(np.max(near.zeta_norm / near.t_norm))
        rep.record("real_root_size", ~np.isfinite(near.zeta_norm / near.t_norm), near, k)

        # double roots: both roots at -i t_d, |zeta'| ~ |t'|, and the other symbol
        tds = np.abs(rng.standard_normal(n_samples)) * rng.random(n_samples) * 4
        dr = double_root_samples(rng, n_samples, d, k, metric, t_d=0.0)
        dr = SampleBatch(dr.sigma, dr.xi, dr.t_sigma, dr.t_xi, tds).normalized()
        m, h, rp, rm, _, _ = dr.roots(k, metric)
        rep.record("double_root", np.abs(m) > tol, dr, k)
        centre = np.maximum(np.abs(rp + 1j * dr.t_d), np.abs(rm + 1j * dr.t_d))
        rep.record("double_root", centre > 2 * np.sqrt(tol), dr, k)
        ratio = dr.zeta_norm / dr.t_prime
        rep.constants[f"double_root_ratio_k{k}"] = float(max(ratio.max(), 1 / ratio.min()))
        rep.record("double_root_size", ~np.isfinite(ratio) | (ratio == 0), dr, k)

        _, _, rpo, rmo, _, _ = dr.roots(kk, metric)
        cone = dr.t_prime <= c.c0 * dr.t_d
        with np.errstate(divide="ignore", invalid="ignore"):
            c1 = -rpo.imag / dr.t_d
        rep.constants[f"comparability_samples_k{k}"] = int(cone.sum())
        rep.constants[f"C1_k{k}"] = float(c1[cone].min()) if cone.any() else float("nan")
        rep.record("comparability", cone & (rpo.imag > 0), dr, k)
        rep.record("comparability", cone & (rmo.imag > rpo.imag), dr, k)
        crossing = dr.t_d > 0
        if np.any(crossing & (rpo.imag >= 0)):
            bad = crossing & (rpo.imag >= 0)
            rep.constants[f"C0_crossing_k{k}"] = float(np.min(dr.t_prime[bad] / dr.t_d[bad]))
        else:
            rep.constants[f"C0_crossing_k{k}"] = float("inf")

        # delta_0: on the cone, double roots force mu = -4 t_d^4
        if cone.any():
            delta0 = float(np.min(4 * dr.t_d[cone] ** 4))
            rep.constants[f"delta0_k{k}"] = delta0
            cb = _cone_samples(rng, n_samples, d, c.c0)
            m, h, rp, rm, mu, _ = cb.roots(k, metric)
            sel = mu >= -0.5 * delta0
            rep.record("mu_simple", sel & (np.abs(rp - rm) <= 2 * np.sqrt(tol)), cb, k)
            if sel.any():
                rep.constants[f"equiv_C_k{k}"] = float(np.max(cb.t_norm[sel] / cb.zeta_norm[sel]))

        # theta_0 and the uniform separation recheck
        theta0, wit = estimate_theta0(rng, n_samples, d, k, metric)
        rep.constants[f"theta0_k{k}"] = theta0
        rep.witnesses[f"theta0_argmin_k{k}"] = {"k": k, "sample": wit}
        cap = _cap_samples(rng, n_samples, d, 0.99 * theta0)
        _, _, rp, rm, _, _ = cap.roots(k, metric)
        sep = np.minimum(rp.imag, -rm.imag)
        rep.constants[f"separation_c_k{k}"] = float(sep.min())
        rep.record("separation", sep <= 0, cap, k)

    floor, wit = char_floor(rng, n_samples, d, metric, c.sigma_floor)
    rep.constants["char_floor"] = floor
    rep.witnesses["char_floor_argmin"] = {"k": None, "sample": wit}
    rep.record("char_floor", np.array([not floor > 0]))
    return rep


def _cone_samples(rng, n, d, c0) -> SampleBatch:
    """Samples of lam = 1 with |t'| <= c0 t_d."""
    td = np.ones(n)
    tp = rng.standard_normal((n, d))
    tp *= (c0 * rng.random(n) / np.linalg.norm(tp, axis=1))[:, None]
    z = rng.standard_normal((n, d)) * rng.exponential(1.0, n)[:, None]
    b = SampleBatch(z[:, 0], z[:, 1:], tp[:, 0], tp[:, 1:], td)
    return b.normalized()


def write_scan_csv(report: ScanReport, path, header=()) -> None:
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        for line in report.notes:
            fh.write(f"# {line}\n")
        fh.write("kind,name,value\n")
        for name in sorted(report.violations):
            fh.write(f"violation,{name},{report.violations[name]}\n")
        for name in sorted(report.constants):
            v = report.constants[name]
            fh.write(f"constant,{name},{v:.17g}\n" if isinstance(v, float) else f"constant,{name},{v}\n")
        for name in sorted(report.witnesses):
            w = report.witnesses[name]
            vals = " ".join(f"{x:.17g}" for x in w["sample"])
            fh.write(f"witness,{name},k={w['k']} {vals}\n")
