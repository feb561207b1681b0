"""Null control of y' + B y = chi_O f by dyadic low-frequency control and free decay.

Everything runs in the coordinates of an orthonormal eigenbasis: y = sum y_j phi_j,
y_j' = -mu_j y_j + <chi_O f, phi_j>.  On a window of length S the control
f(s) = chi_O sum_j exp(-mu_j (t1 - s)) c_j phi_j drives the span
{mu_j <= cut} to zero when Lambda c = -exp(-mu S) y(t0), with the Gramian
Lambda_jk = M_jk * int_0^S exp(-(mu_j + mu_k) r) dr and M the masked Gram
matrix of the basis.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eigensolve import SpectralBasis
from .grid_ops import DiscreteOperator
from .specineq import ObservationRegion, masked_gram

log = logging.getLogger(__name__)

GL_ORDER = 32
COND_LIMIT = 1e14


# ---------------------------------------------------------------- propagation

def heat4_step(y: np.ndarray, dt: float, f_slice: np.ndarray | None = None, *,
               op: DiscreteOperator | None = None, mus: np.ndarray | None = None,
               mask: np.ndarray | None = None) -> np.ndarray:
    """One step of y' + B y = chi_O f.

    Grid form (``op`` given): implicit Euler (I + dt B) y+ = y + dt chi_O f.
    Modal form (``mus`` given): exact decay y_j exp(-mu_j dt) plus dt times the
    projected forcing ``f_slice`` (already in modal coordinates), decayed.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    y = np.asarray(y, dtype=float)
    if op is not None:
        rhs = y.copy()
        if f_slice is not None:
            f = np.asarray(f_slice, dtype=float)
            rhs = rhs + dt * (f if mask is None else np.where(mask, f, 0.0))
        return op.cholesky(1.0 / dt).solve(rhs / dt)
    if mus is None:
        raise ValueError("need either op (grid form) or mus (modal form)")
    decay = np.exp(-np.asarray(mus) * dt)
    out = decay * y
    if f_slice is not None:
        out = out + dt * decay * np.asarray(f_slice, dtype=float)
    return out


# ---------------------------------------------------------------- Gramians

def graded_gauss_legendre(length: float, fastest_rate: float, order: int = GL_ORDER):
    """Nodes r in (0, length) and weights for integrands like exp(-rate r).

    Composite Gauss-Legendre on panels doubling in length from
    1/(4 * fastest_rate), so every exponential in the family is resolved.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    edges = [0.0]
    step = min(length, 0.25 / max(fastest_rate, 1e-300))
    while edges[-1] < length:
        edges.append(min(length, edges[-1] + step if len(edges) == 1 else 2 * edges[-1]))
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (b + a))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def gramian_quadrature(mus: np.ndarray, mass: np.ndarray, length: float, order: int = GL_ORDER) -> np.ndarray:
    """Lambda = int_0^S E(r) M E(r) dr by graded Gauss-Legendre, E(r) = diag(exp(-mu r))."""
    mus = np.asarray(mus, dtype=float)
    r, w = graded_gauss_legendre(length, 2 * mus.max(), order)
    e = np.exp(-np.outer(r, mus))  # (nodes, modes)
    kernel = np.einsum("q,qj,qk->jk", w, e, e)
    return mass * kernel


def gramian_closed_form(mus_rows: np.ndarray, mus_cols: np.ndarray, mass: np.ndarray, length: float) -> np.ndarray:
    """Same integral in closed form: M_jk (1 - exp(-(mu_j + mu_k) S)) / (mu_j + mu_k)."""
    s = np.add.outer(np.asarray(mus_rows, float), np.asarray(mus_cols, float))
    return mass * (-np.expm1(-s * length)) / s


# ---------------------------------------------------------------- problems

@dataclass
class ControlProblem:
    basis: SpectralBasis
    region: ObservationRegion
    T: float
    y0: np.ndarray
    tol: float = 1e-6
    min_stages: int = 3
    max_stages: int = 12

    def __post_init__(self):
        self.y0 = np.asarray(self.y0, dtype=float)
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        if not np.all(np.isfinite(self.y0)):
            raise ValueError("y0 must be finite")
        if self.y0.shape != (len(self.basis),):
            raise ValueError("y0 needs one coefficient per basis mode")


@dataclass
class StageRecord:
    index: int
    mu_cut: float
    n_modes: int
    t_start: float
    t_switch: float
    t_end: float
    state_norm: float  # |y(t_start)|
    cost: float  # L2 norm of the stage control
    worst_cost: float  # sqrt(lambda_max(E Lambda^{-1} E)): cost per unit state norm, worst case
    gramian_cond: float
    flagged: bool


@dataclass
class ControlWindow:
    """Control c on [t0, t1] for modes ``modes`` (indices into the basis)."""

    t0: float
    t1: float
    modes: np.ndarray
    coeffs: np.ndarray

    def modal_amplitude(self, t: float, mus: np.ndarray) -> np.ndarray:
        """Coefficients a_j(t) with f(t) = chi_O sum_j a_j phi_j (zero outside the window)."""
        if t < self.t0 or t > self.t1:
            return np.zeros(len(self.modes))
        return np.exp(-mus[self.modes] * (self.t1 - t)) * self.coeffs


@dataclass
class ControlResult:
    windows: list[ControlWindow]
    stage_log: list[StageRecord]
    cost: float
    terminal_norm: float
    initial_norm: float
    truncated: bool = False
    truncation_bound: float = 0.0
    stage_slope: float = float("nan")
    notes: list[str] = field(default_factory=list)

    @property
    def relative_terminal(self) -> float:
        return self.terminal_norm / self.initial_norm if self.initial_norm > 0 else 0.0

    def f_trajectory(self, basis: SpectralBasis, region: ObservationRegion, times) -> np.ndarray:
        """Control field on the grid at the given times, shape (len(times), n)."""
        mask = region.indicator(basis.grid)
        phi = basis.vectors
        out = np.zeros((len(times), phi.shape[0]))
        for i, t in enumerate(times):
            for w in self.windows:
                if w.t0 <= t <= w.t1:
                    out[i] += phi[:, w.modes] @ w.modal_amplitude(t, basis.mus)
            out[i] *= mask
        return out


@dataclass
class LowModeControl:
    window: ControlWindow
    cost: float
    gramian: np.ndarray
    cond: float
    flagged: bool
    worst_cost: float


def low_mode_control(basis: SpectralBasis, region: ObservationRegion, mu_cut: float,
                     t0: float, t1: float, y_t0: np.ndarray, *, mass: np.ndarray | None = None,
                     order: int = GL_ORDER) -> LowModeControl:
    """Minimal-norm control on [t0, t1] zeroing the modes with mu_j <= mu_cut at t1."""
    if t1 <= t0:
        raise ValueError("need t1 > t0")
    mus = basis.mus
    modes = np.flatnonzero(mus <= mu_cut * (1 + 1e-12))
    if modes.size == 0:
        raise ValueError(f"no mode below {mu_cut}")
    if mass is None:
        mass = masked_gram(basis, region.indicator(basis.grid))
    m = mass[np.ix_(modes, modes)]
    s = t1 - t0
    mu = mus[modes]
    lam = gramian_quadrature(mu, m, s, order)
    decay = np.exp(-mu * s)
    y = np.asarray(y_t0, dtype=float)[modes]
    # Jacobi scaling keeps the rate factors 1/(2 mu_j) out of the conditioning
    d = 1.0 / np.sqrt(np.diag(lam))
    scaled = d[:, None] * lam * d[None, :]
    ev = np.linalg.eigvalsh(scaled)
    cond = float(ev[-1] / ev[0]) if ev[0] > 0 else math.inf
    flagged = not (cond <= COND_LIMIT)
    if flagged:
        log.warning("control Gramian condition %.3g exceeds %.1g: span nearly unobservable", cond, COND_LIMIT)
    chol = np.linalg.cholesky(scaled)

    def lam_solve(b):
        z = np.linalg.solve(chol, d[:, None] * b if b.ndim == 2 else d * b)
        z = np.linalg.solve(chol.T, z)
        return d[:, None] * z if z.ndim == 2 else d * z

    c = lam_solve(-decay * y) if np.any(y) else np.zeros_like(y)
    cost = math.sqrt(max(float(c @ lam @ c), 0.0))
    worst = lam_solve(np.diag(decay)) * decay[None, :]
    worst_cost = math.sqrt(max(float(np.linalg.eigvalsh(0.5 * (worst + worst.T))[-1]), 0.0))
    return LowModeControl(ControlWindow(t0, t1, modes, c), cost, lam, cond, flagged, worst_cost)


def propagate_exact(mus: np.ndarray, mass: np.ndarray, y: np.ndarray, window: ControlWindow,
                    t_from: float, t_to: float) -> np.ndarray:
    """Modal state at t_to from t_from under the window's control (closed-form Duhamel).

    Independent of the quadrature used to synthesise the control.
    """
    y = np.exp(-mus * (t_to - t_from)) * y
    a, b = max(t_from, window.t0), min(t_to, window.t1)
    if b > a:
        # int_a^b exp(-mu_i (t_to - s)) sum_k M_ik exp(-mu_k (t1 - s)) c_k ds
        cols = window.modes
        rate = np.add.outer(mus, mus[cols])
        integral = np.exp(-mus[:, None] * (t_to - b) - mus[cols][None, :] * (window.t1 - b)) \
            * (-np.expm1(-rate * (b - a))) / rate
        y = y + (mass[:, cols] * integral) @ window.coeffs
    return y


def propagate_quadrature(mus: np.ndarray, mass: np.ndarray, y: np.ndarray, window: ControlWindow,
                         t_from: float, t_to: float, order: int = GL_ORDER) -> np.ndarray:
    """As ``propagate_exact`` for a window inside [t_from, t_to], Duhamel term by graded Gauss-Legendre."""
    if not (t_from <= window.t0 and window.t1 <= t_to):
        raise ValueError("window must lie inside the propagation interval")
    cols = window.modes
    s = window.t1 - window.t0
    r, w = graded_gauss_legendre(s, mus.max() + mus[cols].max(), order)
    kernel = np.einsum("q,qi,qk->ik", w, np.exp(-np.outer(r, mus)), np.exp(-np.outer(r, mus[cols])))
    forced = np.exp(-mus * (t_to - window.t1)) * ((mass[:, cols] * kernel) @ window.coeffs)
    return np.exp(-mus * (t_to - t_from)) * y + forced


def lr_synthesize(problem: ControlProblem, *, time_scale: float = 0.5) -> ControlResult:
    """Dyadic stages T_k = time_scale * T * 2^{-k}, cuts mu_k = mu_1 * 2^{4k}.

    Each stage controls its low span on the first half and lets the state
    decay freely on the second.  Stops once at least ``min_stages`` stages
    ran and the modal state is below tol * |y0|, or when stages run out.
    """
    basis = problem.basis
    mus = basis.mus
    mask = problem.region.indicator(basis.grid)
    mass = masked_gram(basis, mask)
    y = problem.y0.copy()
    norm0 = float(np.linalg.norm(y))
    t = 0.0
    windows, log_rows = [], []
    total_sq = 0.0
    truncated = False
    trunc_terms = []
    for k in range(problem.max_stages):
        length = time_scale * problem.T * 2.0**-k
        t_switch, t_end = t + 0.5 * length, t + length
        cut = mus[0] * 2.0 ** (4 * k)
        if cut > mus[-1]:
            truncated = True
            cut = mus[-1]
        ctrl = low_mode_control(basis, problem.region, cut, t, t_switch, y, mass=mass)
        state_norm = float(np.linalg.norm(y))
        y = propagate_quadrature(mus, mass, y, ctrl.window, t, t_end)
        windows.append(ctrl.window)
        total_sq += ctrl.cost**2
        log_rows.append(StageRecord(k, float(cut), int(ctrl.window.modes.size), t, t_switch, t_end,
                                    state_norm, ctrl.cost, ctrl.worst_cost, ctrl.cond, ctrl.flagged))
        # unresolved modes (mu > mu_max) receive at most cost / sqrt(2 mu_max) and then decay
        trunc_terms.append((ctrl.cost / math.sqrt(2 * mus[-1]), t_end))
        t = t_end
        if k + 1 >= problem.min_stages and np.linalg.norm(y) <= problem.tol * norm0:
            break
    # free decay to T
    if t < problem.T:
        y = np.exp(-mus * (problem.T - t)) * y
    bound = sum(c * math.exp(-mus[-1] * (problem.T - te)) for c, te in trunc_terms)
    res = ControlResult(windows, log_rows, math.sqrt(total_sq), float(np.linalg.norm(y)), norm0,
                        truncated, float(bound))
    res.stage_slope = stage_cost_slope(log_rows)
    if res.terminal_norm > problem.tol * norm0:
        res.notes.append("tolerance not met within the resolved spectrum")
    return res


def stage_cost_slope(rows: list[StageRecord]) -> float:
    """Least-squares slope of log(worst-case stage cost) against mu_k^{1/4}."""
    pts = [(r.mu_cut ** 0.25, math.log(r.worst_cost)) for r in rows if r.worst_cost > 0 and np.isfinite(r.worst_cost)]
    x = np.array([p[0] for p in pts])
    if len(pts) < 2 or np.ptp(x) == 0:
        return float("nan")
    y = np.array([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def verify_forward(problem: ControlProblem, result: ControlResult) -> float:
    """|y(T)| by closed-form Duhamel propagation through every window.

    Shares no quadrature with the synthesis, which propagates with the
    graded Gauss-Legendre rule.
    """
    mus = problem.basis.mus
    mass = masked_gram(problem.basis, problem.region.indicator(problem.basis.grid))
    y = problem.y0.copy()
    t = 0.0
    for w in result.windows:
        y = propagate_exact(mus, mass, y, w, t, w.t1)
        t = w.t1
    y = np.exp(-mus * (problem.T - t)) * y
    return float(np.linalg.norm(y))


def trajectory(problem: ControlProblem, result: ControlResult, n_points: int = 201):
    """(t, |y(t)|, |f(t)|_{L2(O)}) on a uniform grid over [0, T]."""
    basis = problem.basis
    mus = basis.mus
    mask = problem.region.indicator(basis.grid)
    mass = masked_gram(basis, mask)
    times = np.linspace(0.0, problem.T, n_points)
    ys, fs = [], []
    y = problem.y0.copy()
    t_prev = 0.0
    for t in times:
        if t > t_prev:
            y = _advance(mus, mass, y, result.windows, t_prev, t)
        ys.append(float(np.linalg.norm(y)))
        a = np.zeros(len(mus))
        for w in result.windows:
            if w.t0 <= t <= w.t1:
                a[w.modes] += w.modal_amplitude(t, mus)
        fs.append(math.sqrt(max(float(a @ mass @ a), 0.0)))
        t_prev = t
    return times, np.array(ys), np.array(fs)


def _advance(mus, mass, y, windows, t_from, t_to):
    """State at t_to given state at t_from, with every window's control applied once."""
    free = np.exp(-mus * (t_to - t_from)) * y
    forced = np.zeros_like(y)
    for w in windows:
        forced += propagate_exact(mus, mass, np.zeros_like(y), w, t_from, t_to)
    return free + forced


def write_trajectory_csv(times, ynorm, fnorm, stages: list[StageRecord], path: str | Path,
                         header: list[str] = ()) -> None:
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("t,y_norm,f_norm\n")
        for t, a, b in zip(times, ynorm, fnorm):
            fh.write(f"{t:.17g},{a:.17g},{b:.17g}\n")
        fh.write("# stage,mu_cut,n_modes,t_start,t_switch,t_end,state_norm,cost,worst_cost,gramian_cond,flagged\n")
        for r in stages:
            fh.write(f"# {r.index},{r.mu_cut:.17g},{r.n_modes},{r.t_start:.17g},{r.t_switch:.17g},"
                     f"{r.t_end:.17g},{r.state_norm:.17g},{r.cost:.17g},{r.worst_cost:.17g},"
                     f"{r.gramian_cond:.17g},{int(r.flagged)}\n")
