"""Lowest eigenpairs of an SPD grid operator by shift-invert subspace iteration."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid_ops import BoundaryCondition, DiscreteOperator, Grid, extended_residual

log = logging.getLogger(__name__)

CLUSTER_RTOL = 1e-10
EXTRA_VECTORS = 8


@dataclass
class EigenPair:
    mu: float
    phi: np.ndarray
    residual: float = 0.0


@dataclass
class SpectralBasis:
    pairs: list[EigenPair]
    grid: Grid
    bc: BoundaryCondition | None
    tol: float
    converged: bool = True
    iterations: int = 0
    clusters: list[tuple[int, ...]] = field(default_factory=list)

    def __len__(self):
        return len(self.pairs)

    @property
    def mus(self) -> np.ndarray:
        return np.array([p.mu for p in self.pairs])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([p.residual for p in self.pairs])

    @property
    def vectors(self) -> np.ndarray:
        """Eigenvectors as columns, unit norm in the discrete L2 product."""
        return np.column_stack([p.phi for p in self.pairs])

    def gram(self) -> np.ndarray:
        phi = self.vectors
        return self.grid.cell * (phi.T @ phi)

    def truncate(self, n_modes: int) -> SpectralBasis:
        keep = [c for c in self.clusters if max(c) < n_modes]
        return SpectralBasis(self.pairs[:n_modes], self.grid, self.bc, self.tol,
                             self.converged, self.iterations, keep)


def _fix_sign(x: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(x)))
    return -x if x[k] < 0 else x


def _find_clusters(mus: np.ndarray, rtol: float = CLUSTER_RTOL) -> list[tuple[int, ...]]:
    clusters, current = [], [0]
    for j in range(1, len(mus)):
        if mus[j] - mus[j - 1] < rtol * mus[j - 1]:
            current.append(j)
        else:
            if len(current) > 1:
                clusters.append(tuple(current))
            current = [j]
    if len(current) > 1:
        clusters.append(tuple(current))
    return clusters


def eigensolve(op: DiscreteOperator, n_modes: int, tol: float = 1e-4, *,
               seed: int = 0, max_iter: int = 300, inner_tol: float = 1e-12,
               block: int | None = None, refine: int = 1) -> SpectralBasis:
    """Lowest ``n_modes`` eigenpairs of ``op``.

    Subspace iteration on B^{-1} (shift 0) with a Rayleigh-Ritz step on the
    inverse each sweep.  Iteration stops once the inverse-operator residuals
    ||B^{-1}x - x/mu|| * mu of the wanted Ritz vectors fall below
    ``inner_tol`` or stop improving.  Reported eigenvalues are Rayleigh
    quotients through ``op.rayleigh_quotient``.  ``tol`` bounds the reported
    direct residuals ||B phi - mu phi|| / (mu ||phi||); failing that, the
    basis is returned with ``converged=False``.  Rounding phi to float64
    alone puts a floor of about eps * |B|_1 / mu under that residual.  ``refine`` sets the number of
    extended-precision refinement sweeps per inner solve.
    """
    n = op.n
    if n_modes < 1 or n_modes > n // 4:
        raise ValueError(f"n_modes must be in [1, n/4] = [1, {n // 4}], got {n_modes}")
    if not (0 < tol <= 1e-4):
        raise ValueError(f"tol must lie in (0, 1e-4], got {tol}")
    p = min(block or n_modes + EXTRA_VECTORS, n)
    fac = op.cholesky(0.0)
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, p)))

    best, stall, rho = np.inf, 0, np.inf
    it = 0
    for it in range(1, max_iter + 1):
        z = fac.solve(q, refine=refine)
        h = q.T @ z
        theta, v = np.linalg.eigh(0.5 * (h + h.T))
        order = np.argsort(theta)[::-1]
        theta, v = theta[order], v[:, order]
        x, zx = q @ v, z @ v
        res = np.linalg.norm(zx[:, :n_modes] - x[:, :n_modes] * theta[:n_modes], axis=0) / theta[:n_modes]
        rho = float(res.max())
        if rho <= inner_tol:
            break
        if rho < 0.5 * best:
            best, stall = rho, 0
        else:
            stall += 1
            if stall >= 5:
                break
        q, _ = np.linalg.qr(zx)

    x = x[:, :n_modes]
    scale = 1.0 / np.sqrt(op.grid.cell)
    mus = np.array([op.rayleigh_quotient(x[:, j]) for j in range(n_modes)])
    pairs = []
    for j in range(n_modes):
        phi = _fix_sign(x[:, j]) * scale
        r = np.linalg.norm(extended_residual(op.matrix, phi, mus[j] * phi)) / (mus[j] * np.linalg.norm(phi))
        pairs.append(EigenPair(float(mus[j]), phi, float(r)))
    converged = all(pr.residual <= tol for pr in pairs)
    if not converged:
        floor = np.finfo(float).eps * float(abs(op.matrix).sum(axis=0).max()) / mus[0]
        log.warning("eigensolve: residual %.3g exceeds tol %.3g after %d sweeps "
                    "(float64 representation floor about %.2g)",
                    max(pr.residual for pr in pairs), tol, it, floor)
    clusters = _find_clusters(mus)
    if clusters:
        log.info("eigensolve: degenerate clusters %s", clusters)
    return SpectralBasis(pairs, op.grid, op.bc, tol, converged, it, clusters)


def unique_continuation_probe(basis: SpectralBasis, laplacian: DiscreteOperator) -> list[float]:
    """Relative defect of each phi_j from being an eigenvector of ``laplacian``."""
    if laplacian.grid != basis.grid:
        raise ValueError("basis and Laplacian live on different grids")
    w = basis.grid.cell
    out = []
    for pair in basis.pairs:
        phi = pair.phi
        aphi = laplacian @ phi
        rq = w * float(aphi @ phi) / (w * float(phi @ phi))
        out.append(float(np.linalg.norm(aphi - rq * phi) / np.linalg.norm(aphi)))
    return out


def write_basis(basis: SpectralBasis, path: str | Path) -> None:
    """Header plus ``index mu residual`` per mode."""
    g = basis.grid
    with open(path, "w") as fh:
        fh.write(f"# lengths {' '.join(repr(v) for v in g.lengths)}\n")
        fh.write(f"# n_interior {' '.join(str(v) for v in g.n_interior)}\n")
        fh.write(f"# bc {basis.bc.value if basis.bc else 'none'}\n")
        fh.write(f"# n_modes {len(basis)}\n")
        fh.write(f"# tol {float(basis.tol)!r}\n")
        for j, pair in enumerate(basis.pairs, start=1):
            fh.write(f"{j} {pair.mu:.17g} {pair.residual:.17g}\n")


def read_basis_table(path: str | Path) -> tuple[dict, np.ndarray]:
    header = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, *vals = line[1:].split()
            header[key] = vals
        elif line.strip():
            rows.append([float(v) for v in line.split()])
    return header, np.array(rows)


def write_eigenvectors_csv(basis: SpectralBasis, path: str | Path) -> None:
    """Node coordinates followed by one column per mode."""
    coords = basis.grid.coordinates()
    names = [f"x{a}" for a in range(coords.shape[1])] + [f"phi{j}" for j in range(1, len(basis) + 1)]
    data = np.hstack([coords, basis.vectors])
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")
