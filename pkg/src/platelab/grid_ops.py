"""Finite-difference bi-Laplace and Laplace operators on intervals and rectangles.

Unknowns are the interior nodes of a uniform grid on (0, L1) x ... in
lexicographic order with the first axis varying fastest.  Boundary values
are zero; the second boundary condition is imposed through the ghost node
outside the boundary:

* clamped: u_{-1} = u_1   (centred difference of the normal derivative is 0)
* hinged:  u_{-1} = -u_1  (the discrete Laplacian vanishes on the boundary)

With this convention the hinged operator is exactly the square of the
Dirichlet 5-point (3-point in 1D) Laplacian, and the clamped operator
differs from that square by 2/h^4 on the diagonal of every node adjacent
to a boundary face.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

MIN_INTERIOR = 5


class BoundaryCondition(str, enum.Enum):
    CLAMPED = "clamped"
    HINGED = "hinged"


class GridError(ValueError):
    pass


class FactorizationError(np.linalg.LinAlgError):
    """Raised when a matrix expected to be SPD fails to factor."""


@dataclass(frozen=True)
class Grid:
    lengths: tuple[float, ...]
    n_interior: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        n_int = tuple(int(v) for v in np.atleast_1d(self.n_interior))
        if len(lengths) not in (1, 2) or len(lengths) != len(n_int):
            raise GridError("grid must be 1D or 2D with one length and one count per axis")
        if any(L <= 0 for L in lengths):
            raise GridError(f"lengths must be positive, got {lengths}")
        if any(n < MIN_INTERIOR for n in n_int):
            raise GridError(f"need at least {MIN_INTERIOR} interior points per axis, got {n_int}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "n_interior", n_int)

    @classmethod
    def uniform(cls, n: int | tuple[int, ...], length: float | tuple[float, ...] = 1.0, dim: int = 1) -> Grid:
        ns = (n,) * dim if np.isscalar(n) else tuple(n)
        ls = (length,) * len(ns) if np.isscalar(length) else tuple(length)
        return cls(ls, ns)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(L / (n + 1) for L, n in zip(self.lengths, self.n_interior))

    @property
    def size(self) -> int:
        return int(np.prod(self.n_interior))

    @property
    def shape(self) -> tuple[int, ...]:
        # array shape for reshaping a flat vector; last index is the fastest (axis 0)
        return tuple(reversed(self.n_interior))

    @property
    def cell(self) -> float:
        """Quadrature weight of one node in the discrete L2 product."""
        return float(np.prod(self.h))

    def axis_nodes(self, axis: int) -> np.ndarray:
        return self.h[axis] * np.arange(1, self.n_interior[axis] + 1)

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (size, dim), in unknown ordering."""
        axes = [self.axis_nodes(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        # flatten with axis 0 fastest
        return np.stack([m.ravel(order="F") for m in mesh], axis=1)

    def to_array(self, v: np.ndarray) -> np.ndarray:
        """Reshape a flat vector to an array indexed [i0, i1, ...]."""
        return np.asarray(v).reshape(self.n_interior, order="F")

    def inner(self, u: np.ndarray, v: np.ndarray) -> float | complex:
        return self.cell * np.vdot(v, u) if np.iscomplexobj(u) or np.iscomplexobj(v) else self.cell * float(u @ v)

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.cell) * np.linalg.norm(u))


@dataclass
class DiscreteOperator:
    """Sparse symmetric matrix with the grid it lives on.

    ``scale`` is the weight h^dim of the discrete L2 product
    <u, v> = scale * sum(u_i v_i).  A bi-Laplacian also keeps its square
    root: matrix = root @ root + diag(boundary_weight) in exact arithmetic.
    """

    matrix: sp.csr_matrix
    grid: Grid
    bc: BoundaryCondition | None = None
    name: str = ""
    root: sp.csr_matrix | None = field(default=None, repr=False, compare=False)
    boundary_weight: np.ndarray | None = field(default=None, repr=False, compare=False)
    _factors: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def scale(self) -> float:
        return self.grid.cell

    @property
    def bandwidth(self) -> int:
        coo = self.matrix.tocoo()
        return int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0

    def __matmul__(self, v):
        return self.matrix @ v

    def rayleigh_quotient(self, u: np.ndarray) -> float:
        """<B u, u> / <u, u>, through |root u|^2 when the square root is known.

        The stored entries of B are products of rounded h^-2 factors, so its
        rows no longer cancel exactly and the lowest eigenvalue moves by about
        eps * |B|.  The root is a single rounded scale times an integer
        stencil, which keeps the factored form accurate to about eps / h^2.
        """
        u = np.asarray(u, dtype=float)
        uu = float(u @ u)
        if self.root is None:
            return float(u @ (self.matrix @ u)) / uu
        ru = self.root @ u
        val = float(ru @ ru)
        if self.boundary_weight is not None:
            val += float(self.boundary_weight @ (u * u))
        return val / uu

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def export_triplets(self, path: str | Path) -> None:
        """Write one ``row col value`` line per stored entry (0-based)."""
        rows, cols, vals = self.triplets()
        with open(path, "w") as fh:
            for r, c, v in zip(rows, cols, vals):
                fh.write(f"{r} {c} {float(v)!r}\n")

    def band_upper(self, shift: float = 0.0) -> np.ndarray:
        """LAPACK upper band storage of ``matrix + shift*I``."""
        u = self.bandwidth
        ab = np.zeros((u + 1, self.n))
        coo = sp.triu(self.matrix).tocoo()
        ab[u + coo.row - coo.col, coo.col] = coo.data
        ab[u] += shift
        return ab

    def cholesky(self, shift: float = 0.0) -> "ShiftedFactor":
        key = float(shift)
        if key not in self._factors:
            self._factors[key] = ShiftedFactor(self, key)
        return self._factors[key]

    def cholesky_factor(self) -> sp.csr_matrix:
        """Sparse upper-triangular C with matrix = C^T C."""
        return self.cholesky(0.0).upper_sparse()


class ShiftedFactor:
    """Banded Cholesky factorization of B + mu I; read-only after construction."""

    def __init__(self, op: DiscreteOperator, mu: float):
        self.op = op
        self.mu = mu
        try:
            self.cb = sla.cholesky_banded(op.band_upper(mu), lower=False)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(
                f"Cholesky breakdown for {op.name or 'operator'} + {mu} I: matrix is not SPD ({exc})"
            ) from exc

    def solve(self, f: np.ndarray, refine: int = 0) -> np.ndarray:
        """Solve (B + mu I) u = f.

        ``refine`` extra sweeps of iterative refinement with residuals
        accumulated in extended precision; each sweep removes most of the
        factorization error in the smooth (low-mode) part of u.
        """
        f = np.asarray(f)
        if np.iscomplexobj(f):
            return self.solve(f.real, refine) + 1j * self.solve(f.imag, refine)
        u = sla.cho_solve_banded((self.cb, False), f)
        for _ in range(refine):
            r = extended_residual(self.op.matrix, u, f, self.mu)
            u = u + sla.cho_solve_banded((self.cb, False), r)
        return u

    def upper_sparse(self) -> sp.csr_matrix:
        u, n = self.cb.shape[0] - 1, self.cb.shape[1]
        diags, offsets = [], []
        for k in range(u + 1):
            diags.append(self.cb[u - k, k:])
            offsets.append(k)
        return sp.diags(diags, offsets, shape=(n, n), format="csr")


def extended_residual(matrix: sp.csr_matrix, u: np.ndarray, f: np.ndarray, shift: float = 0.0) -> np.ndarray:
    """f - (matrix + shift I) u accumulated in long double, rounded to float64."""
    m = matrix.tocsr()
    ld = np.longdouble
    u_ld = np.asarray(u, dtype=ld)
    vec = u_ld.ndim == 1
    if vec:
        u_ld = u_ld[:, None]
    prod = m.data.astype(ld)[:, None] * u_ld[m.indices]
    row = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
    acc = np.zeros((m.shape[0], u_ld.shape[1]), dtype=ld)
    np.add.at(acc, row, prod)
    fl = np.asarray(f, dtype=ld)
    r = (fl if not vec else fl[:, None]) - acc - ld(shift) * u_ld
    r = r.astype(np.float64)
    return r[:, 0] if vec else r


def _check_grid(grid: Grid) -> None:
    if not isinstance(grid, Grid):
        raise GridError("expected a Grid")
    if any(n < MIN_INTERIOR for n in grid.n_interior):
        raise GridError(f"grid too small: {grid.n_interior}")


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    e = np.ones(n)
    return sp.diags([-e[:-1], 2 * e, -e[:-1]], [-1, 0, 1], format="csr") / h**2


def _symmetric_copy(m: sp.spmatrix) -> sp.csr_matrix:
    """Mirror the upper triangle so that m[i, j] == m[j, i] bit for bit."""
    upper = sp.triu(m, k=1)
    out = upper + upper.T + sp.diags(m.diagonal())
    out = out.tocsr()
    out.sort_indices()
    return out


def assemble_dirichlet_laplacian(grid: Grid) -> DiscreteOperator:
    """Positive Dirichlet Laplacian, 3-point (1D) or 5-point (2D)."""
    _check_grid(grid)
    ops = [_second_difference(n, h) for n, h in zip(grid.n_interior, grid.h)]
    if grid.dim == 1:
        a = ops[0]
    else:
        nx, ny = grid.n_interior
        a = sp.kron(sp.identity(ny), ops[0]) + sp.kron(ops[1], sp.identity(nx))
    return DiscreteOperator(_symmetric_copy(a), grid, None, "dirichlet_laplacian")


def _boundary_adjacent_weight(grid: Grid) -> np.ndarray:
    """Sum over boundary faces touched by each node of 2/h_axis^4."""
    w = np.zeros(grid.n_interior)
    for axis, (n, h) in enumerate(zip(grid.n_interior, grid.h)):
        sel = [slice(None)] * grid.dim
        for idx in (0, n - 1):
            sel[axis] = idx
            w[tuple(sel)] += 2.0 / h**4
    return w.ravel(order="F")


def assemble_bilaplacian(grid: Grid, bc: BoundaryCondition | str) -> DiscreteOperator:
    """13-point (5-point in 1D) bi-Laplacian with ghost-node elimination."""
    _check_grid(grid)
    bc = BoundaryCondition(bc)
    a = assemble_dirichlet_laplacian(grid).matrix
    b = a @ a
    weight = None
    if bc is BoundaryCondition.CLAMPED:
        weight = _boundary_adjacent_weight(grid)
        b = b + sp.diags(weight)
    return DiscreteOperator(_symmetric_copy(b), grid, bc, f"bilaplacian_{bc.value}", root=a, boundary_weight=weight)


def solve_shifted(op: DiscreteOperator, mu: float, f: np.ndarray) -> np.ndarray:
    """Solve (B + mu I) u = f by banded Cholesky.

    Raises FactorizationError if B + mu I is not positive definite.
    """
    if mu < 0:
        raise ValueError("shift must be nonnegative")
    f = np.asarray(f)
    if f.shape[0] != op.n:
        raise ValueError(f"right-hand side has length {f.shape[0]}, expected {op.n}")
    return op.cholesky(mu).solve(f)
