"""Observability constants of eigenfunction sums and the auxiliary s-profile.

For the span of the eigenfunctions with mu_j <= mu the ratio
||u||_{L2(Omega)} / ||u||_{L2(O)} is maximised by the smallest eigenvalue
of the masked Gram matrix M_jk = <chi_O phi_j, phi_k>, since the basis is
orthonormal.  In 1D that eigenvalue drops below 1e-100 within a few dozen
modes, so spans are evaluated in multiprecision (see ``multiprecision``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy import integrate, optimize

from . import multiprecision as mpx
from .eigensolve import SpectralBasis
from .grid_ops import DiscreteOperator, Grid

log = logging.getLogger(__name__)

GAMMA = math.sqrt(2.0) / 2.0
SINGULAR_FLOOR = 1e-300
FLOAT_RELIABLE = 1e-11  # float64 Gram eigenvalues below this are not trusted
DEDUP_RTOL = 1e-9


# ---------------------------------------------------------------- regions

@dataclass
class ObservationRegion:
    """Union of closed axis-aligned boxes, each given as ((lo, hi), ...) per axis."""

    boxes: list[tuple[tuple[float, float], ...]]

    def __post_init__(self):
        boxes = []
        for box in self.boxes:
            box = tuple((float(lo), float(hi)) for lo, hi in (box if np.ndim(box) == 2 else [box]))
            if any(hi <= lo for lo, hi in box):
                raise ValueError(f"empty box {box}")
            boxes.append(box)
        if not boxes:
            raise ValueError("observation region needs at least one box")
        self.boxes = boxes

    @classmethod
    def interval(cls, lo: float, hi: float) -> ObservationRegion:
        return cls([((lo, hi),)])

    def indicator(self, grid: Grid) -> np.ndarray:
        x = grid.coordinates()
        tol = 1e-12 * min(grid.h)
        mask = np.zeros(grid.size, dtype=bool)
        for box in self.boxes:
            if len(box) != grid.dim:
                raise ValueError("box dimension does not match grid")
            inside = np.ones(grid.size, dtype=bool)
            for a, (lo, hi) in enumerate(box):
                inside &= (x[:, a] >= lo - tol) & (x[:, a] <= hi + tol)
            mask |= inside
        if not mask.any():
            raise ValueError("observation region covers no grid point")
        return mask

    def contains(self, other: ObservationRegion, grid: Grid) -> bool:
        return bool(np.all(self.indicator(grid) >= other.indicator(grid)))


# ------------------------------------------------------ observability

@dataclass
class GrowthFit:
    a: float
    b: float
    r2: float


@dataclass
class ObservabilityReport:
    samples: list[tuple[float, float]]
    fit_quarter: GrowthFit | None = None
    fit_half: GrowthFit | None = None
    precision_digits: int = 16
    saturated: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def mus(self) -> np.ndarray:
        return np.array([m for m, _ in self.samples])

    @property
    def constants(self) -> np.ndarray:
        return np.array([c for _, c in self.samples])

    def is_monotone(self, rtol: float = 1e-9) -> bool:
        c = self.constants
        return bool(np.all(c[1:] >= c[:-1] * (1 - rtol)))


def _distinct_cuts(mus: np.ndarray) -> list[int]:
    """Span sizes, one per distinct eigenvalue (clusters kept whole)."""
    sizes = []
    for j in range(len(mus)):
        if j + 1 < len(mus) and mus[j + 1] - mus[j] <= DEDUP_RTOL * mus[j]:
            continue
        sizes.append(j + 1)
    return sizes


def _span_size(basis: SpectralBasis, mu_cut: float) -> int:
    mus = basis.mus
    m = int(np.searchsorted(mus, mu_cut * (1 + DEDUP_RTOL), side="right"))
    if m == 0:
        raise ValueError(f"no eigenvalue below mu_cut = {mu_cut}")
    if m == len(mus) and mu_cut > mus[-1] * (1 + DEDUP_RTOL):
        log.warning("mu_cut %.4g exceeds the largest computed eigenvalue %.4g", mu_cut, mus[-1])
    return m


def masked_gram(basis: SpectralBasis, mask: np.ndarray, n_modes: int | None = None) -> np.ndarray:
    phi = basis.vectors[:, :n_modes] if n_modes else basis.vectors
    sub = phi[mask]
    return basis.grid.cell * (sub.T @ sub)


def _c_from_lambda(lam: float) -> float:
    return math.inf if lam <= SINGULAR_FLOOR else lam ** -0.5


def observability_constant(basis: SpectralBasis, region: ObservationRegion, mu_cut: float,
                           hp: mpx.HighPrecisionBasis | None = None) -> float:
    """lambda_min(M_O)^{-1/2} over span{phi_j : mu_j <= mu_cut}.

    With ``hp`` (refined eigenvectors) the Gram matrix is formed and
    diagonalised in multiprecision; otherwise float64 is used.  A
    numerically singular Gram gives +inf.
    """
    m = _span_size(basis, mu_cut)
    mask = region.indicator(basis.grid)
    if hp is not None:
        g = mpx.masked_gram(hp, mask, m)
        lam = mpx.leading_min_eigenvalues(hp.ctx, g, [m])[0]
        lam = float(lam) if lam > 0 else 0.0
    else:
        lam = float(np.linalg.eigvalsh(masked_gram(basis, mask, m))[0])
    return _c_from_lambda(lam)


def high_precision_basis(basis: SpectralBasis, op: DiscreteOperator, mask: np.ndarray,
                         dps: int | None = None, max_dps: int = 1200) -> tuple[mpx.HighPrecisionBasis, object]:
    """Refine ``basis`` until the masked Gram of the full span is resolved.

    Starting precision is a guess (40 + 3 digits per mode); it doubles until
    lambda_min exceeds the precision floor by 25 digits.  Returns the refined
    basis and the multiprecision Gram matrix.
    """
    m = len(basis)
    dps = dps or 40 + 3 * m
    while True:
        hp = mpx.refine_basis(op.matrix, basis.mus, basis.vectors * math.sqrt(basis.grid.cell), dps)
        g = mpx.masked_gram(hp, mask)
        lam = mpx.leading_min_eigenvalues(hp.ctx, g, [m])[0]
        floor = hp.ctx.mpf(10) ** (-(dps - 25))
        if lam.imag == 0 and lam.real > floor:
            return hp, g
        if dps * 2 > max_dps:
            raise RuntimeError(f"observability Gram unresolved at {dps} digits")
        log.info("Gram unresolved at %d digits, doubling", dps)
        dps *= 2


def observability_scan(basis: SpectralBasis, region: ObservationRegion,
                       op: DiscreteOperator | None = None, precision: str = "auto",
                       min_mode: int = 1) -> ObservabilityReport:
    """C_obs for every distinct eigenvalue from mode ``min_mode`` on.

    ``precision``: "float64", "mp" or "auto" (multiprecision when the float64
    Gram of the full span is below the reliable range and ``op`` is narrow
    banded).
    """
    mask = region.indicator(basis.grid)
    sizes = [s for s in _distinct_cuts(basis.mus) if s >= min_mode]
    g64 = masked_gram(basis, mask)
    lam_full = float(np.linalg.eigvalsh(g64)[0])
    use_mp = precision == "mp" or (
        precision == "auto" and lam_full < FLOAT_RELIABLE and op is not None
        and op.bandwidth <= mpx.MAX_MP_BANDWIDTH)
    report = ObservabilityReport([])
    if use_mp:
        if op is None:
            raise ValueError("multiprecision scan needs the operator")
        hp, g = high_precision_basis(basis, op, mask)
        lams = mpx.leading_min_eigenvalues(hp.ctx, g, sizes)
        consts = [float(1 / hp.ctx.sqrt(lam)) for lam in lams]
        report.precision_digits = hp.dps
    else:
        consts = [_c_from_lambda(float(np.linalg.eigvalsh(g64[:s, :s])[0])) for s in sizes]
        lam_min = [c ** -2 if np.isfinite(c) else 0.0 for c in consts]
        if min(lam_min) < FLOAT_RELIABLE:
            report.saturated = True
            report.notes.append("float64 Gram below reliable range; large constants are lower bounds at best")
    report.samples = [(float(basis.mus[s - 1]), c) for s, c in zip(sizes, consts)]
    return report


# ------------------------------------------------------ observability oracles

def power_iteration_constant(gram, ctx=None, iters: int = 500, rtol: float = 1e-14) -> float:
    """Largest eigenvalue of M^{-1} by projected power iteration; returns its square root.

    Works for float arrays or (with ``ctx``) mpmath matrices.
    """
    if ctx is None:
        m = np.asarray(gram)
        chol = np.linalg.cholesky(m)
        x = np.ones(m.shape[0]) / math.sqrt(m.shape[0])
        est = 0.0
        for _ in range(iters):
            y = np.linalg.solve(chol.T, np.linalg.solve(chol, x))
            new = float(x @ y)
            x = y / np.linalg.norm(y)
            if abs(new - est) <= rtol * new:
                break
            est = new
        return math.sqrt(new)
    n = gram.rows
    chol = ctx.cholesky(gram)
    x = ctx.matrix([1] * n) / ctx.sqrt(n)
    est = ctx.zero
    for _ in range(iters):
        y = _mp_chol_solve(ctx, chol, x)
        new = ctx.fdot(x, y)
        x = y / ctx.norm(y)
        if abs(new - est) <= ctx.mpf(rtol) * new:
            break
        est = new
    return float(ctx.sqrt(new))


def _mp_chol_solve(ctx, chol, b):
    n = chol.rows
    y = ctx.matrix(n, 1)
    for i in range(n):
        y[i] = (b[i] - ctx.fdot((chol[i, k], y[k]) for k in range(i))) / chol[i, i]
    x = ctx.matrix(n, 1)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - ctx.fdot((chol[k, i], x[k]) for k in range(i + 1, n))) / chol[i, i]
    return x


def random_search_constant(gram, n_samples: int = 10_000, seed: int = 0, ctx=None) -> float:
    """Supremum of |c|^2 / c^T M c by random two-dimensional Ritz steps.

    Works in coordinates whitened by the Cholesky factor L of M, where the
    ratio is |L^{-T} y|^2 / |y|^2.  Each sample draws a random direction d
    and moves to the best point of span{y, d}.  No eigendecomposition of M
    is used.
    """
    rng = np.random.default_rng(seed)
    if ctx is None:
        m = np.asarray(gram)
        n = m.shape[0]
        chol = np.linalg.cholesky(m)
        apply = lambda y: np.linalg.solve(chol.T, y)  # noqa: E731
        y = rng.standard_normal(n)
        y /= np.linalg.norm(y)
        for _ in range(n_samples):
            d = rng.standard_normal(n)
            q, _ = np.linalg.qr(np.column_stack([y, d]))
            a = np.column_stack([apply(q[:, 0]), apply(q[:, 1])])
            w, v = np.linalg.eigh(a.T @ a)
            y = q @ v[:, -1]
        ly = apply(y)
        return math.sqrt(float(ly @ ly))
    n = gram.rows
    chol = ctx.cholesky(gram)

    def apply(y):
        x = ctx.matrix(n, 1)
        for i in range(n - 1, -1, -1):
            x[i] = (y[i] - ctx.fdot((chol[k, i], x[k]) for k in range(i + 1, n))) / chol[i, i]
        return x

    y = ctx.matrix(rng.standard_normal(n).tolist())
    y = y / ctx.norm(y)
    ly = apply(y)
    for _ in range(n_samples):
        d = ctx.matrix(rng.standard_normal(n).tolist())
        d = d - ctx.fdot(y, d) * y
        d = d / ctx.norm(d)
        ld = apply(d)
        a11, a12, a22 = ctx.fdot(ly, ly), ctx.fdot(ly, ld), ctx.fdot(ld, ld)
        # top eigenvector of [[a11, a12], [a12, a22]]
        theta = ctx.atan2(2 * a12, a11 - a22) / 2
        c, s = ctx.cos(theta), ctx.sin(theta)
        y = c * y + s * d
        ly = c * ly + s * ld
    return float(ctx.sqrt(ctx.fdot(ly, ly)))


# ---------------------------------------------------------------- fits

def _linear_fit(x: np.ndarray, y: np.ndarray) -> GrowthFit:
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-30 else float("nan")
    else:
        r2 = 1.0 - ss_res / ss_tot
    return GrowthFit(float(coef[0]), float(coef[1]), r2)


def fit_growth(samples, min_samples: int = 8) -> ObservabilityReport:
    """Fit log C against mu^{1/4} and mu^{1/2}.  Infinite samples are dropped."""
    samples = sorted((float(m), float(c)) for m, c in samples)
    finite = [(m, c) for m, c in samples if np.isfinite(c) and c > 0]
    mus = np.array([m for m, _ in finite])
    if len(np.unique(mus)) < min_samples:
        raise ValueError(f"need at least {min_samples} finite samples with distinct mu, got {len(np.unique(mus))}")
    logc = np.log([c for _, c in finite])
    rep = ObservabilityReport(samples)
    rep.fit_quarter = _linear_fit(mus ** 0.25, logc)
    rep.fit_half = _linear_fit(mus ** 0.5, logc)
    if len(finite) < len(samples):
        rep.notes.append(f"{len(samples) - len(finite)} infinite samples excluded from the fit")
    return rep


def write_observability_csv(report: ObservabilityReport, path: str | Path, header: list[str] = ()) -> None:
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("mu,mu_quarter,C_obs,logC\n")
        for mu, c in report.samples:
            fh.write(f"{mu:.17g},{mu ** 0.25:.17g},{c:.17g},{math.log(c) if c > 0 else float('nan'):.17g}\n")
        for name, fit in (("quarter", report.fit_quarter), ("half", report.fit_half)):
            if fit is not None:
                fh.write(f"# fit_{name} a={fit.a:.17g} b={fit.b:.17g} r2={fit.r2:.17g}\n")
        fh.write(f"# precision_digits={report.precision_digits} saturated={report.saturated}\n")


# ---------------------------------------------------------------- s-profile

@dataclass(frozen=True)
class AuxiliaryProfile:
    """f(s) = gamma (sin(gs)cosh(gs) - cos(gs)sinh(gs)) with g = gamma = sqrt(2)/2.

    f'''' = -f and (f, f', f'', f''')(0) = (0, 0, 0, 1).
    """

    gamma: float = GAMMA

    def f(self, s, order: int = 0):
        s = np.asarray(s, dtype=float)
        c = self.gamma
        a = c * s
        sn, cs, sh, ch = np.sin(a), np.cos(a), np.sinh(a), np.cosh(a)
        k = order % 4
        sign = -1.0 if (order // 4) % 2 else 1.0
        if k == 0:
            val = c * (sn * ch - cs * sh)
        elif k == 1:
            val = sn * sh
        elif k == 2:
            val = c * (cs * sh + sn * ch)
        else:
            val = cs * ch
        return sign * val

    @staticmethod
    def g(s):
        s = np.asarray(s, dtype=float)
        return 0.5 * (np.exp(-s) * np.cos(s - np.pi / 4) - np.exp(s) * np.cos(s + np.pi / 4))

    def mode_profile(self, mu: float, s, order: int = 0):
        """d^order/ds^order of mu^{-3/4} f(mu^{1/4} s)."""
        q = mu ** 0.25
        return q ** (order - 3) * self.f(q * np.asarray(s, dtype=float), order)


def fourth_difference_defect(profile: AuxiliaryProfile, s: np.ndarray, step: float = 1e-2,
                             dps: int = 40) -> np.ndarray:
    """|f + f| with f from Richardson-extrapolated central differences.

    The difference quotients are evaluated in ``dps``-digit arithmetic; in
    float64 a fourth difference at step 1e-2 loses about 1e-7 to rounding.
    """
    ctx = mpx.make_context(dps)
    c = ctx.mpf(profile.gamma)

    def f(x):
        a = c * x
        return c * (ctx.sin(a) * ctx.cosh(a) - ctx.cos(a) * ctx.sinh(a))

    def d4(x, hh):
        return (f(x - 2 * hh) - 4 * f(x - hh) + 6 * f(x) - 4 * f(x + hh) + f(x + 2 * hh)) / hh**4

    h0 = ctx.mpf(step)
    out = np.empty(len(np.atleast_1d(s)))
    for i, x in enumerate(np.atleast_1d(s)):
        x = ctx.mpf(float(x))
        # error expansion in h^2, h^4: two Richardson levels
        a1, a2, a3 = d4(x, h0), d4(x, h0 / 2), d4(x, h0 / 4)
        b1, b2 = (4 * a2 - a1) / 3, (4 * a3 - a2) / 3
        out[i] = float(abs((16 * b2 - b1) / 15 + f(x)))
    return out


def derivative_seeds(profile: AuxiliaryProfile, step: float = 1e-3) -> np.ndarray:
    """Numerical derivatives of f at 0 of orders 0..3 (central differences, Richardson)."""
    f = profile.f

    def diffs(hh):
        fm2, fm1, f0, fp1, fp2 = (f(k * hh) for k in (-2, -1, 0, 1, 2))
        return np.array([
            f0,
            (fp1 - fm1) / (2 * hh),
            (fp1 - 2 * f0 + fm1) / hh**2,
            (fp2 - 2 * fp1 + 2 * fm1 - fm2) / (2 * hh**3),
        ])

    return (4 * diffs(step / 2) - diffs(step)) / 3


# ---------------------------------------------------------------- minoration

def _window_bound(a: float, t: float) -> float:
    low = GAMMA * math.exp(a * t) - math.exp(-a * t)
    return (math.pi / 2) * 0.25 * low * low if low > 0 else 0.0


def g_square_integral(a: float, b: float, t: float) -> float:
    val, _ = integrate.quad(lambda s: AuxiliaryProfile.g(s) ** 2, a * t, b * t,
                            limit=400, epsabs=0.0, epsrel=1e-12)
    return float(val)


def minoration_constant(a: float, b: float, t0: float, dt: float | None = None) -> float:
    """inf over t >= t0 of the integral of g^2 over (a t, b t).

    For t >= 2 pi / (b - a) the window (a t, b t) contains a stretch of
    length pi/2 where |cos(s + pi/4)| >= gamma, so the integral is at least
    (pi/2)(gamma e^{at} - e^{-at})^2 / 4, which increases in t.  The search
    stops at the first t where that bound exceeds the running minimum; the
    minimum found on the grid is then polished by a bounded local search.
    """
    if not (0 < a < b) or t0 <= 0:
        raise ValueError("need 0 < a < b and t0 > 0")
    t_window = 2 * math.pi / (b - a)
    dt = dt or min(0.05, 0.05 / b)
    ts, vals = [], []
    t = t0
    best = math.inf
    while True:
        v = g_square_integral(a, b, t)
        ts.append(t)
        vals.append(v)
        best = min(best, v)
        if t >= t_window and _window_bound(a, t) >= best:
            break
        t += dt
    k = int(np.argmin(vals))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, len(ts) - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda x: g_square_integral(a, b, x), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-10})
        best = min(best, float(res.fun))
    return best


# ---------------------------------------------------------------- w and H^3 norms

@dataclass
class WField:
    s: np.ndarray
    grid: Grid
    values: np.ndarray  # shape (n_s, *grid.n_interior + 2): includes boundary nodes
    residual: float = float("nan")


def _padded(grid: Grid, v: np.ndarray) -> np.ndarray:
    return np.pad(grid.to_array(v), 1)


def build_w(basis: SpectralBasis, alpha, s_grid: np.ndarray, op: DiscreteOperator | None = None,
            profile: AuxiliaryProfile = AuxiliaryProfile()) -> WField:
    """w(s, x) = sum_j alpha_j mu_j^{-3/4} f(mu_j^{1/4} s) phi_j(x) on s_grid x (closed) grid.

    With ``op`` the discrete residual ||d_s^4 w + B_h w|| / ||B_h w|| over
    interior s-nodes is stored, with d_s^4 the five-point fourth difference.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (len(basis),):
        raise ValueError("alpha must have one coefficient per basis vector")
    s = np.asarray(s_grid, dtype=float)
    grid = basis.grid
    prof = np.column_stack([profile.mode_profile(mu, s) for mu in basis.mus]) * alpha
    flat = prof @ basis.vectors.T  # (n_s, n)
    values = np.stack([_padded(grid, row) for row in flat])
    out = WField(s, grid, values)
    if op is not None and len(s) >= 5:
        ds = s[1] - s[0]
        d4 = (flat[:-4] - 4 * flat[1:-3] + 6 * flat[2:-2] - 4 * flat[3:-1] + flat[4:]) / ds**4
        bw = (op.matrix @ flat[2:-2].T).T
        out.residual = float(np.linalg.norm(d4 + bw) / max(np.linalg.norm(bw), 1e-300))
    return out


def _multi_indices(n_axes: int, order: int):
    for alpha in product(range(order + 1), repeat=n_axes):
        if sum(alpha) <= order:
            yield alpha


def h3_norm(field_: WField, s_range: tuple[float, float] | None = None, order: int = 3) -> float:
    """Discrete H^order norm over s_range x Omega.

    Derivatives by repeated second-order differences (one-sided at the
    edges); integrals by the trapezoid rule on the closed grid.
    """
    vals = field_.values
    spacings = [field_.s[1] - field_.s[0], *field_.grid.h]
    sel = np.ones(len(field_.s), dtype=bool)
    if s_range is not None:
        sel = (field_.s >= s_range[0] - 1e-14) & (field_.s <= s_range[1] + 1e-14)
    total = 0.0
    cache = {(0,) * vals.ndim: vals}
    for alpha in sorted(_multi_indices(vals.ndim, order), key=sum):
        if alpha not in cache:
            ax = next(i for i, k in enumerate(alpha) if k > 0)
            parent = tuple(k - (i == ax) for i, k in enumerate(alpha))
            cache[alpha] = np.gradient(cache[parent], spacings[ax], axis=ax, edge_order=2)
        sq = cache[alpha][sel] ** 2
        s_sub = field_.s[sel]
        for ax in range(vals.ndim - 1, 0, -1):
            sq = integrate.trapezoid(sq, dx=spacings[ax], axis=ax)
        total += float(integrate.trapezoid(sq, s_sub)) if len(s_sub) > 1 else 0.0
    return math.sqrt(total)


def region_norm(grid: Grid, region: ObservationRegion, v: np.ndarray) -> float:
    mask = region.indicator(grid)
    return float(math.sqrt(grid.cell * np.sum(v[mask] ** 2)))


@dataclass
class InterpolationResult:
    lhs: float  # ||w||_{H^3(Y)}
    h3_z: float  # ||w||_{H^3(Z)}
    observation: float  # sum_j ||d_s^j w(0)||_{H^{3-j}(O)}
    residual: float  # ||P w||_{L^2(Z)}, discretization only
    deltas: np.ndarray
    constants: np.ndarray  # smallest C for each delta

    @property
    def ratio(self) -> float:
        return self.lhs / self.h3_z


def verify_interpolation(coeffs, basis: SpectralBasis, s_max: float = 1.0, margin: float = 0.25,
                         region: ObservationRegion | None = None, op: DiscreteOperator | None = None,
                         n_s: int = 401, deltas=None) -> InterpolationResult:
    """Check ||w||_{H^3(Y)} <= C ||w||_{H^3(Z)}^{1-d} (||Pw|| + obs)^d for a sweep of d.

    Y = (margin, s_max - margin) x Omega, Z = (0, s_max) x Omega.  At s = 0
    only the third s-derivative of w survives and equals u, so the
    observation term is ||u||_{L2(O)}.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if not np.any(coeffs):
        raise ValueError("u must be nonzero")
    if not (0 < margin < s_max / 2):
        raise ValueError("need 0 < margin < s_max / 2")
    if region is None:
        raise ValueError("an observation region is required")
    s = np.linspace(0.0, s_max, n_s)
    wf = build_w(basis, coeffs, s, op)
    lhs = h3_norm(wf, (margin, s_max - margin))
    hz = h3_norm(wf)
    u = basis.vectors @ coeffs
    obs = region_norm(basis.grid, region, u)
    res = 0.0 if not np.isfinite(wf.residual) else wf.residual * _bw_norm(wf, op)
    deltas = np.linspace(0.05, 0.95, 19) if deltas is None else np.asarray(deltas)
    rhs = (res + obs)
    consts = lhs / (hz ** (1 - deltas) * rhs ** deltas)
    return InterpolationResult(lhs, hz, obs, res, deltas, consts)


def _bw_norm(wf: WField, op: DiscreteOperator | None) -> float:
    if op is None:
        return 0.0
    flat = wf.values[:, 1:-1] if wf.grid.dim == 1 else wf.values[:, 1:-1, 1:-1]
    flat = flat.reshape(len(wf.s), -1, order="F") if wf.grid.dim == 2 else flat
    bw = (op.matrix @ flat.T).T
    ds = wf.s[1] - wf.s[0]
    return float(math.sqrt(ds * wf.grid.cell) * np.linalg.norm(bw))


def single_mode_h3(basis: SpectralBasis, j: int, s_max: float = 1.0, n_s: int = 801) -> float:
    """||w||_{H^3(Z)} for u = phi_j (0-based j)."""
    coeffs = np.zeros(len(basis))
    coeffs[j] = 1.0
    return h3_norm(build_w(basis, coeffs, np.linspace(0.0, s_max, n_s)))


@dataclass
class GrowthBoundCheck:
    constant: float
    mus: np.ndarray
    norms: np.ndarray
    bounds: np.ndarray
    required: np.ndarray  # smallest C that works for each mode on its own

    @property
    def holds(self) -> np.ndarray:
        return self.norms <= self.bounds


def _solve_growth_constant(norm: float, mu: float) -> float:
    """Smallest C > 0 with C exp(C mu^{1/4}) >= norm."""
    q = mu ** 0.25
    return optimize.brentq(lambda c: math.log(c) + c * q - math.log(norm), 1e-12, 1e3, xtol=1e-14)


def calibrate_growth_bound(basis: SpectralBasis, calib_mode: int = 4, s_max: float = 1.0,
                           n_s: int = 801, modes=None) -> GrowthBoundCheck:
    """Fit C with C exp(C mu^{1/4}) = ||w||_{H^3(Z)} at one mode, then test other modes.

    Modes are 0-based; the default calibrates at the fifth eigenvalue.
    """
    modes = list(range(calib_mode, len(basis)) if modes is None else modes)
    mus = np.array([basis.mus[j] for j in modes])
    norms = np.array([single_mode_h3(basis, j, s_max, n_s) for j in modes])
    n_cal = norms[modes.index(calib_mode)] if calib_mode in modes else single_mode_h3(basis, calib_mode, s_max, n_s)
    const = _solve_growth_constant(n_cal, basis.mus[calib_mode])
    bounds = const * np.exp(const * mus ** 0.25)
    required = np.array([_solve_growth_constant(nv, m) for nv, m in zip(norms, mus)])
    return GrowthBoundCheck(const, mus, norms, bounds, required)
