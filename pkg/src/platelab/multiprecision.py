"""Multiprecision refinement of eigenpairs of narrow-band operators.

Observability Gram matrices of 1D eigenfunction spans become so ill
conditioned (smallest eigenvalue below 1e-100 at a few dozen modes) that
float64 eigenvectors cannot resolve them.  The routines here lift float64
eigenpairs to arbitrary precision by Rayleigh quotient iteration with a
banded Gaussian elimination, using the stored float matrix entries exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np
import scipy.sparse as sp

MAX_MP_BANDWIDTH = 8


def make_context(dps: int) -> mpmath.MPContext:
    ctx = mpmath.MPContext()
    ctx.dps = int(dps)
    return ctx


class BandedMP:
    """Symmetric banded matrix held as mp rows {col: value}."""

    def __init__(self, matrix: sp.spmatrix, ctx: mpmath.MPContext):
        m = sp.csr_matrix(matrix)
        self.ctx = ctx
        self.n = m.shape[0]
        coo = m.tocoo()
        self.p = int(np.max(np.abs(coo.row - coo.col)))
        if self.p > MAX_MP_BANDWIDTH:
            raise ValueError(f"bandwidth {self.p} too wide for multiprecision elimination")
        self.rows = []
        for i in range(self.n):
            lo, hi = m.indptr[i], m.indptr[i + 1]
            self.rows.append({int(c): ctx.mpf(float(v)) for c, v in zip(m.indices[lo:hi], m.data[lo:hi])})

    def matvec(self, x: list) -> list:
        fdot = self.ctx.fdot
        return [fdot((v, x[c]) for c, v in row.items()) for row in self.rows]

    def solve_shifted(self, sigma, rhs: list) -> list:
        """Solve (A - sigma I) y = rhs by elimination with partial pivoting."""
        ctx, n, p = self.ctx, self.n, self.p
        rows = [dict(r) for r in self.rows]
        for i in range(n):
            rows[i][i] = rows[i].get(i, ctx.zero) - sigma
        b = list(rhs)
        for k in range(n):
            last = min(n, k + p + 1)
            piv = max(range(k, last), key=lambda i: abs(rows[i].get(k, ctx.zero)))
            if piv != k:
                rows[k], rows[piv] = rows[piv], rows[k]
                b[k], b[piv] = b[piv], b[k]
            akk = rows[k].get(k, ctx.zero)
            if akk == 0:
                akk = rows[k][k] = ctx.eps * (1 + abs(sigma))
            for i in range(k + 1, last):
                aik = rows[i].get(k)
                if aik is None or aik == 0:
                    continue
                factor = aik / akk
                ri = rows[i]
                for c, v in rows[k].items():
                    if c > k:
                        ri[c] = ri.get(c, ctx.zero) - factor * v
                del ri[k]
                b[i] -= factor * b[k]
        y = [ctx.zero] * n
        for k in range(n - 1, -1, -1):
            s = b[k] - ctx.fdot((v, y[c]) for c, v in rows[k].items() if c > k)
            y[k] = s / rows[k][k]
        return y


def _normalize(ctx, x):
    nrm = ctx.sqrt(ctx.fdot(x, x))
    return [v / nrm for v in x]


def rayleigh_refine(bmp: BandedMP, mu: float, x: np.ndarray, max_iter: int = 8):
    """Rayleigh quotient iteration from a float64 pair; returns (mu, x, residual)."""
    ctx = bmp.ctx
    target = ctx.mpf(10) ** (-(ctx.dps - 6))
    v = _normalize(ctx, [ctx.mpf(float(t)) for t in x])
    lam = ctx.mpf(float(mu))
    res = ctx.inf
    for _ in range(max_iter):
        y = bmp.solve_shifted(lam, v)
        y = _normalize(ctx, y)
        if ctx.fdot(y, v) < 0:
            y = [-t for t in y]
        v = y
        bv = bmp.matvec(v)
        lam = ctx.fdot(v, bv)
        res = ctx.sqrt(ctx.fdot(*(2 * ([a - lam * b for a, b in zip(bv, v)],)))) / abs(lam)
        if res < target:
            break
    return lam, v, res


@dataclass
class HighPrecisionBasis:
    """Eigenpairs in multiprecision; vectors are Euclidean-unit lists of mpf."""

    ctx: mpmath.MPContext
    mus: list
    vectors: list
    residuals: list

    @property
    def dps(self) -> int:
        return self.ctx.dps

    def max_residual(self) -> float:
        return float(max(self.residuals))


def refine_basis(matrix: sp.spmatrix, mus: np.ndarray, vectors: np.ndarray, dps: int) -> HighPrecisionBasis:
    """Lift float64 eigenpairs (columns of ``vectors``) to ``dps`` digits."""
    ctx = make_context(dps)
    bmp = BandedMP(matrix, ctx)
    out_mu, out_v, out_r = [], [], []
    for j in range(len(mus)):
        lam, v, r = rayleigh_refine(bmp, mus[j], vectors[:, j])
        out_mu.append(lam)
        out_v.append(v)
        out_r.append(r)
    return HighPrecisionBasis(ctx, out_mu, out_v, out_r)


def masked_gram(hp: HighPrecisionBasis, mask: np.ndarray, n_modes: int | None = None) -> mpmath.matrix:
    """Euclidean Gram matrix of the vectors restricted to ``mask``."""
    ctx = hp.ctx
    idx = np.flatnonzero(mask)
    m = len(hp.vectors) if n_modes is None else n_modes
    sub = [[v[i] for i in idx] for v in hp.vectors[:m]]
    g = ctx.matrix(m, m)
    for j in range(m):
        for k in range(j, m):
            g[j, k] = g[k, j] = ctx.fdot(sub[j], sub[k])
    return g


def leading_min_eigenvalues(ctx: mpmath.MPContext, g: mpmath.matrix, sizes: list[int]) -> list:
    """Smallest eigenvalue of each leading principal block of ``g``."""
    out = []
    for m in sizes:
        block = g[0:m, 0:m]
        ev = ctx.eigsy(block, eigvals_only=True)
        out.append(min(ev))
    return out
