"""Resolvent of the damped plate generator along the imaginary axis.

The generator acts on U = (u0, u1) as  A U = (-u1, B u0 + alpha u1)  and the
energy space carries |U|_H^2 = <B u0, u0> + |u1|^2.  Writing B = C^T C with
C the (upper) Cholesky factor, conjugation by diag(C, I) turns iσ - A into

    T(σ) = [[iσ I,  C        ],
            [-C^T,  iσ I - α ]]

whose Euclidean operator norm of the inverse is the H-norm of the resolvent.
T(σ)^{-1} is applied through the pencil P(σ) = B - σ² - iσα:
u0 = P^{-1}((iσ - α) f0 - f1), u1 = f0 - iσ u0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid_ops import DiscreteOperator
from .specineq import ObservationRegion

log = logging.getLogger(__name__)

CUTOFF_FACTOR = 0.8
RESONANCE_BACKWARD = 10.0


class ResonanceError(ArithmeticError):
    """The pencil is singular: an undamped mode sits exactly at the frequency."""


@dataclass
class DampingProfile:
    alpha: np.ndarray
    delta: float

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if np.any(self.alpha < 0):
            raise ValueError("damping must be nonnegative")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    @classmethod
    def constant(cls, n: int, value: float) -> DampingProfile:
        return cls(np.full(n, float(value)), float(value))

    @classmethod
    def on_region(cls, op: DiscreteOperator, region: ObservationRegion, value: float) -> DampingProfile:
        """value on the region's grid points, zero elsewhere."""
        if value <= 0:
            raise ValueError("localized damping needs a positive value")
        mask = region.indicator(op.grid)
        return cls(np.where(mask, float(value), 0.0), float(value))


@dataclass
class DampedGenerator:
    op: DiscreteOperator
    damping: DampingProfile
    mu_max: float | None = None  # largest resolved eigenvalue; sets the scan cutoff
    _chol_band: np.ndarray = field(init=False, repr=False)
    _chol: sp.csr_matrix = field(init=False, repr=False)
    cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.damping.alpha.shape != (self.op.n,):
            raise ValueError("damping profile does not match the operator size")
        fac = self.op.cholesky(0.0)
        self._chol_band = fac.cb
        self._chol = fac.upper_sparse()

    @property
    def n(self) -> int:
        return self.op.n

    @property
    def alpha(self) -> np.ndarray:
        return self.damping.alpha

    @property
    def op_norm(self) -> float:
        """|B|_1, the scale of rounding errors in B."""
        if "op_norm" not in self.cache:
            self.cache["op_norm"] = float(abs(self.op.matrix).sum(axis=0).max())
        return self.cache["op_norm"]

    @property
    def sigma_cutoff(self) -> float:
        return math.inf if self.mu_max is None else CUTOFF_FACTOR * math.sqrt(self.mu_max)

    # ---- H metric and raw generator action
    def h_inner(self, u, v) -> complex:
        """<U, V>_H without the common grid weight (it cancels in ratios)."""
        return complex(np.vdot(v[0], self.op @ u[0]) + np.vdot(v[1], u[1]))

    def h_norm(self, u) -> float:
        return math.sqrt(max(self.h_inner(u, u).real, 0.0))

    def apply(self, u):
        """A U = (-u1, B u0 + alpha u1)."""
        return (-u[1], self.op @ u[0] + self.alpha * u[1])

    def transformed_matrix(self, sigma: float) -> sp.csc_matrix:
        """T(σ) as a sparse 2n x 2n matrix."""
        n = self.n
        eye = sp.identity(n, format="csc")
        c = self._chol
        return sp.bmat([[1j * sigma * eye, c], [-c.T, 1j * sigma * eye - sp.diags(self.alpha)]], format="csc")

    def dense_generator(self) -> np.ndarray:
        """Block matrix of A in (u0, u1) coordinates; for small-grid oracles."""
        n = self.n
        b = self.op.matrix.toarray()
        return np.block([[np.zeros((n, n)), -np.eye(n)], [b, np.diag(self.alpha)]])


class TransformedResolvent:
    """Applies T(σ)^{-1} and T(σ)^{-H} through one factorization of the pencil."""

    def __init__(self, gen: DampedGenerator, sigma: float):
        self.gen = gen
        self.sigma = float(sigma)
        pencil = (gen.op.matrix - sigma**2 * sp.identity(gen.n) - 1j * sigma * sp.diags(gen.alpha)).tocsc()
        try:
            self.lu = splu(pencil.astype(complex))
        except RuntimeError as exc:
            raise ResonanceError(f"pencil singular at sigma = {sigma}") from exc
        diag_u = self.lu.U.diagonal()
        if np.min(np.abs(diag_u)) <= 1e-15 * np.max(np.abs(diag_u)) * gen.n:
            raise ResonanceError(f"pencil numerically singular at sigma = {sigma}")
        self._ab = gen._chol_band
        self._u = self._ab.shape[0] - 1

    def _c_solve(self, g):
        return sla.solve_banded((0, self._u), self._ab, g)

    def _c_apply(self, v):
        return self.gen._chol @ v

    def _pencil_solve(self, rhs, conjugate: bool):
        if conjugate:
            return np.conj(self.lu.solve(np.conj(rhs)))
        return self.lu.solve(rhs)

    def _solve(self, g0, g1, alpha_sign: float):
        s = self.sigma
        a = alpha_sign * self.gen.alpha[:, None] if g0.ndim == 2 else alpha_sign * self.gen.alpha
        f0 = self._c_solve(g0)
        u0 = self._pencil_solve((1j * s - a) * f0 - g1, conjugate=alpha_sign < 0)
        u1 = f0 - 1j * s * u0
        return self._c_apply(u0), u1

    def solve(self, g):
        """T(σ)^{-1} g for g of shape (2n,) or (2n, k)."""
        n = self.gen.n
        v0, v1 = self._solve(g[:n], g[n:], 1.0)
        return np.concatenate([v0, v1])

    def solve_adjoint(self, g):
        """T(σ)^{-H} g, using T(σ, α)^H = -T(σ, -α)."""
        n = self.gen.n
        v0, v1 = self._solve(g[:n], g[n:], -1.0)
        return -np.concatenate([v0, v1])


def _largest_singular_value(apply, apply_h, dim: int, block: int = 4, tol: float = 1e-12,
                            max_iter: int = 1000, seed: int = 0) -> float:
    """||X|| by block power iteration on X X^H with Rayleigh-Ritz."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, block)) + 1j * rng.standard_normal((dim, block)))
    prev = 0.0
    for _ in range(max_iter):
        w = apply(apply_h(q))
        h = q.conj().T @ w
        lam = float(np.linalg.eigvalsh(0.5 * (h + h.conj().T))[-1])
        if abs(lam - prev) <= tol * lam:
            break
        prev = lam
        q, _ = np.linalg.qr(w)
    return math.sqrt(lam)


def resolvent_norm(gen: DampedGenerator, sigma: float, *, tol: float = 1e-12, seed: int = 0) -> float:
    """H-operator norm of (iσ - A)^{-1}."""
    if not np.isfinite(sigma):
        raise ValueError("sigma must be finite")
    res = TransformedResolvent(gen, sigma)
    norm = _largest_singular_value(res.solve, res.solve_adjoint, 2 * gen.n, tol=tol, seed=seed)
    _check_resolved(gen, sigma, norm)
    return norm


def rounding_distance(gen: DampedGenerator, sigma: float) -> float:
    """Frequency shift produced by a backward error of RESONANCE_BACKWARD * eps * |B|_1 in B."""
    dmu = RESONANCE_BACKWARD * np.finfo(float).eps * gen.op_norm
    return dmu / max(2 * abs(sigma), math.sqrt(dmu))


def _check_resolved(gen, sigma, norm):
    # closer to the spectrum than rounding in B can resolve: treat as singular
    if not np.isfinite(norm) or 1.0 / norm <= rounding_distance(gen, sigma):
        raise ResonanceError(f"sigma = {sigma} lies on the spectrum to working precision (norm {norm:.3g})")


def block_resolvent_norm(gen: DampedGenerator, sigma: float, *, tol: float = 1e-12, seed: int = 0) -> float:
    """Same norm from a sparse LU of the full transformed block matrix (cross-check route)."""
    try:
        lu = splu(gen.transformed_matrix(sigma))
    except RuntimeError as exc:
        raise ResonanceError(f"block matrix singular at sigma = {sigma}") from exc
    norm = _largest_singular_value(lu.solve, lambda g: lu.solve(g, trans="H"), 2 * gen.n, tol=tol, seed=seed)
    _check_resolved(gen, sigma, norm)
    return norm


def modal_resolvent_norm(mus: np.ndarray, alpha0: float, sigma: float) -> float:
    """Exact norm for constant damping: max over modes of |T_j^{-1}|,
    T_j = [[iσ, sqrt(mu_j)], [-sqrt(mu_j), iσ - alpha0]]."""
    mus = np.asarray(mus, dtype=float)
    r = np.sqrt(mus)
    t = np.zeros((len(mus), 2, 2), dtype=complex)
    t[:, 0, 0] = 1j * sigma
    t[:, 0, 1] = r
    t[:, 1, 0] = -r
    t[:, 1, 1] = 1j * sigma - alpha0
    smin = np.linalg.svd(t, compute_uv=False)[:, -1]
    return float(1.0 / smin.min())


def invertibility_lower_bound(gen: DampedGenerator, z: complex, u) -> float:
    """|(z - A) U|_H / |U|_H for Re z < 0."""
    if z.real >= 0:
        raise ValueError("need Re z < 0")
    u = (np.asarray(u[0], dtype=complex), np.asarray(u[1], dtype=complex))
    nu = gen.h_norm(u)
    if nu == 0:
        raise ValueError("U must be nonzero")
    au = gen.apply(u)
    w = (z * u[0] - au[0], z * u[1] - au[1])
    return gen.h_norm(w) / nu


# ---------------------------------------------------------------- scans and fits

@dataclass
class EnvelopeFit:
    k0: float
    k1: float
    r2: float
    n_points: int


@dataclass
class ResolventScan:
    samples: list[tuple[float, float]]
    fit: EnvelopeFit | None
    sigma_cutoff: float
    peaks: list[tuple[float, float]] = field(default_factory=list)
    hull: list[tuple[float, float]] = field(default_factory=list)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([s for s, _ in self.samples])

    @property
    def norms(self) -> np.ndarray:
        return np.array([v for _, v in self.samples])


def local_peaks(sigmas: np.ndarray, values: np.ndarray) -> list[int]:
    """Indices of samples not smaller than their neighbours (ends included)."""
    idx = []
    n = len(values)
    for i in range(n):
        left = values[i - 1] if i > 0 else -np.inf
        right = values[i + 1] if i < n - 1 else -np.inf
        if values[i] >= left and values[i] >= right:
            idx.append(i)
    return idx


def upper_hull(x: np.ndarray, y: np.ndarray, rtol: float = 1e-9) -> list[int]:
    """Indices of the upper convex hull, collinear points kept."""
    order = np.lexsort((-y, x))
    hull: list[int] = []
    scale = max(1.0, float(np.ptp(y)) if len(y) else 1.0) * max(1.0, float(np.ptp(x)) if len(x) else 1.0)
    for i in order:
        if hull and x[hull[-1]] == x[i]:
            continue
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross > rtol * scale:  # b lies strictly below segment a-i
                hull.pop()
            else:
                break
        hull.append(int(i))
    return hull


def fit_envelope(sigmas, norms, use_hull: bool = True) -> tuple[EnvelopeFit, list[int]]:
    """Least squares of log norm against |σ|^{1/2} on the upper hull of the points.

    Fewer than three hull vertices leave r² undefined (nan): a line through
    two points carries no evidence of fit quality.
    """
    x = np.sqrt(np.abs(np.asarray(sigmas, dtype=float)))
    y = np.log(np.asarray(norms, dtype=float))
    idx = upper_hull(x, y) if use_hull else list(range(len(x)))
    xs, ys = x[idx], y[idx]
    if len(idx) < 2:
        return EnvelopeFit(float(ys[0]) if len(ys) else float("nan"), 0.0, float("nan"), len(idx)), idx
    design = np.column_stack([np.ones_like(xs), xs])
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    if len(idx) < 3:
        return EnvelopeFit(float(coef[0]), float(coef[1]), float("nan"), len(idx)), idx
    resid = ys - design @ coef
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else float("nan")
    return EnvelopeFit(float(coef[0]), float(coef[1]), r2, len(idx)), idx


def resonance_grid(mus: np.ndarray, alpha_scale: float, cutoff: float, points: int = 21,
                   width: float = 2.0) -> np.ndarray:
    """σ samples clustered around each sqrt(mu_j) below the cutoff, plus σ = 0."""
    pts = [np.array([0.0])]
    for mu in mus:
        c = math.sqrt(mu)
        if c > cutoff:
            break
        half = width * max(alpha_scale, 1e-3)
        pts.append(np.clip(c + np.linspace(-half, half, points), 0.0, cutoff))
    return np.unique(np.concatenate(pts))


def scan_and_fit(gen: DampedGenerator, sigma_grid, *, tol: float = 1e-12) -> ResolventScan:
    """Norms on ``sigma_grid`` and the |σ|^{1/2} envelope fit over local peaks."""
    sig = np.asarray(sigma_grid, dtype=float)
    if sig.size == 0:
        raise ValueError("empty sigma grid")
    cutoff = gen.sigma_cutoff
    if np.any(np.abs(sig) > cutoff * (1 + 1e-12)):
        raise ValueError(f"sigma grid exceeds the resolved cutoff {cutoff:.6g}")
    norms = np.array([resolvent_norm(gen, s, tol=tol) for s in sig])
    samples = list(zip(sig.tolist(), norms.tolist()))
    pk = local_peaks(sig, norms)
    peaks = [(float(sig[i]), float(norms[i])) for i in pk]
    fit = None
    hull = []
    if len(pk) >= 2:
        fit, idx = fit_envelope(sig[pk], norms[pk])
        hull = [peaks[i] for i in idx]
    return ResolventScan(samples, fit, cutoff, peaks, hull)


def write_scan_csv(scan: ResolventScan, path: str | Path, header: list[str] = ()) -> None:
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("sigma,sqrt_sigma,norm,lognorm\n")
        for s, v in scan.samples:
            fh.write(f"{s:.17g},{math.sqrt(abs(s)):.17g},{v:.17g},{math.log(v):.17g}\n")
        if scan.fit is not None:
            f = scan.fit
            fh.write(f"# fit K0={f.k0:.17g} K1={f.k1:.17g} r2={f.r2:.17g} hull_points={f.n_points}\n")
        fh.write(f"# sigma_cutoff={scan.sigma_cutoff:.17g}\n")
