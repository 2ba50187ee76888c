"""Discretized lower/upper game values by exact scenario-tree backward
induction, with step-feedback policy extraction.

Information pattern: the lower value lets the minimizer observe the
maximizer's current step (v announced, then u responds), the stepwise
counterpart of non-anticipative strategies responding to the opponent's
control; the upper value mirrors this.  Each stage therefore reduces
max over Q of min over P (lower) or min over P of max over Q (upper),
with ties broken by lowest grid index.

The tree is exact: no state aggregation, complexity (|P| |Q|)^steps,
guarded by a node budget.  Games whose dynamics, running cost, and
terminal functional are lag-structured (see ``VectorOps``) are expanded
level-by-level in numpy; opaque path-based callables fall back to a
per-node loop with a stricter budget.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ci import PathFunctional
from .dynamics import ControlSignal, integrate
from .errors import ConfigurationError, DomainError, ResourceError
from .paths import Grid, Path, TimeDensity

DEFAULT_NODE_BUDGET = 5_000_000
BLACKBOX_NODE_BUDGET = 200_000


@dataclass(frozen=True)
class VectorOps:
    """Lag-structured batched evaluators for the tree engine.

    ``f_eval(tau, reads, u, v)`` receives reads[d] of shape (B, 1, 1, n)
    for each lag d in ``f_lags`` (d = 0.0 is the current state), u of shape
    (1, 1, nP, mP), v of shape (1, nQ, 1, mQ), and returns (B, nQ, nP, n).
    ``chi_eval`` returns (B, nQ, nP) or is None when the running cost is
    identically zero.  ``sigma_eval(reads)`` receives reads[d] of shape
    (B, n) for each d in ``sigma_lags`` (read time T - d) and returns (B,).
    """

    f_lags: tuple[float, ...]
    sigma_lags: tuple[float, ...]
    f_eval: Callable
    sigma_eval: Callable
    chi_eval: Callable | None = None


@dataclass(frozen=True)
class GameSpec:
    """Zero-sum time-delay game over finite control grids."""

    n: int
    h: float
    T: float
    f: Callable  # (tau, stopped Path, u, v) -> R^n
    chi: Callable  # (tau, stopped Path, u, v) -> R
    sigma: PathFunctional
    P_grid: np.ndarray  # (nP, mP)
    Q_grid: np.ndarray  # (nQ, mQ)
    c_f: TimeDensity
    time_discontinuities: tuple[float, ...] = ()
    vector_ops: VectorOps | None = None
    label: str = ""

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P_grid, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q_grid, dtype=float))
        if P.shape[0] == 0 or Q.shape[0] == 0:
            raise ConfigurationError("control grids must be non-empty")
        P.setflags(write=False)
        Q.setflags(write=False)
        object.__setattr__(self, "P_grid", P)
        object.__setattr__(self, "Q_grid", Q)


@dataclass(frozen=True)
class FeedbackPolicy:
    """Per-stage lookup tables extracted from backward induction.

    ``announcer[j]`` maps a level-j node id to the first-moving control's
    grid index; ``responder[j]`` maps (node id, observed announcer index)
    to the replying control's grid index.  For the lower side the announcer
    plays from Q and the responder from P; the upper side mirrors.
    """

    side: str
    announcer: tuple[np.ndarray, ...]
    responder: tuple[np.ndarray, ...]

    def announce(self, stage: int, node: int) -> int:
        return int(self.announcer[stage][node])

    def respond(self, stage: int, node: int, observed: int) -> int:
        return int(self.responder[stage][node, observed])


@dataclass(frozen=True)
class GameValueReport:
    rho_lower: float
    rho_upper: float
    dt: float
    steps: int
    t: float
    total_nodes: int
    leaves: int
    lower_policy: FeedbackPolicy
    upper_policy: FeedbackPolicy
    side: str = "both"

    @property
    def gap(self) -> float:
        return self.rho_upper - self.rho_lower

    def to_json_dict(self) -> dict:
        return {
            "rho_lower": self.rho_lower,
            "rho_upper": self.rho_upper,
            "gap": self.gap,
            "dt": self.dt,
            "steps": self.steps,
            "t": self.t,
            "total_nodes": self.total_nodes,
            "leaves": self.leaves,
            "side": self.side,
        }


def _tree_size(n_branch: int, steps: int) -> int:
    total = 1
    level = 1
    for _ in range(steps):
        level *= n_branch
        total += level
    return total


def _lag_cells(d: float, dt: float, what: str) -> int:
    m = int(round(d / dt))
    if abs(m * dt - d) > 1e-9 or m < 0:
        raise ConfigurationError(
            f"{what} lag {d} is not a non-negative multiple of the tree step {dt}"
        )
    return m


def _forward_vectorized(game: GameSpec, t: float, x: Path, steps: int, dt: float):
    ops = game.vector_ops
    n = game.n
    P, Q = game.P_grid, game.Q_grid
    nP, nQ = P.shape[0], Q.shape[0]
    n_branch = nQ * nP
    U = P.reshape(1, 1, nP, -1)
    V = Q.reshape(1, nQ, 1, -1)

    f_lag_cells = {d: _lag_cells(d, dt, "dynamics") for d in ops.f_lags}
    sigma_lag_cells = {d: _lag_cells(d, dt, "terminal") for d in ops.sigma_lags}
    max_lag = max(f_lag_cells.values(), default=0)
    sigma_levels = {steps - m for m in sigma_lag_cells.values() if steps - m >= 0}

    levels: dict[int, np.ndarray] = {0: np.atleast_1d(x.at(t)).reshape(1, n)}
    acc = np.zeros(1) if ops.chi_eval is not None else None

    def read_array(level_j: int, j_cur: int, B: int):
        arr = levels[level_j]
        reps = n_branch ** (j_cur - level_j)
        if reps == 1:
            return arr.reshape(B, 1, 1, n)
        out = np.broadcast_to(arr[:, None, :], (arr.shape[0], reps, n)).reshape(B, n)
        return out.reshape(B, 1, 1, n)

    for j in range(steps):
        tau = t + j * dt
        B = n_branch ** j
        reads = {}
        for d, m in f_lag_cells.items():
            lvl = j - m
            if lvl >= 0:
                reads[d] = read_array(lvl, j, B)
            else:
                reads[d] = np.atleast_1d(x.at(tau - d)).reshape(1, 1, 1, n)
        F = np.asarray(ops.f_eval(tau, reads, U, V), dtype=float)
        F = np.broadcast_to(F, (B, nQ, nP, n))
        y_next = levels[j].reshape(B, 1, 1, n) + dt * F
        levels[j + 1] = y_next.reshape(B * n_branch, n)
        if acc is not None:
            chi_vals = np.asarray(ops.chi_eval(tau, reads, U, V), dtype=float)
            chi_vals = np.broadcast_to(chi_vals, (B, nQ, nP))
            acc = (acc.reshape(B, 1, 1) + dt * chi_vals).reshape(B * n_branch)
        # free levels no longer read by future lags or by sigma
        for lvl in list(levels):
            if lvl < j + 1 - max_lag and lvl not in sigma_levels and lvl != j + 1:
                del levels[lvl]

    B_leaf = n_branch ** steps
    sigma_reads = {}
    for d, m in sigma_lag_cells.items():
        lvl = steps - m
        if lvl >= 0:
            arr = levels[lvl]
            reps = n_branch ** (steps - lvl)
            if reps == 1:
                sigma_reads[d] = arr
            else:
                sigma_reads[d] = np.broadcast_to(
                    arr[:, None, :], (arr.shape[0], reps, n)
                ).reshape(B_leaf, n)
        else:
            sigma_reads[d] = np.broadcast_to(
                np.atleast_1d(x.at(game.T - d)).reshape(1, n), (B_leaf, n)
            )
    leaf = np.asarray(ops.sigma_eval(sigma_reads), dtype=float)
    leaf = np.broadcast_to(leaf, (B_leaf,)).copy()
    if acc is not None:
        leaf -= acc
    return leaf


def _forward_blackbox(game: GameSpec, t: float, x: Path, steps: int, dt: float):
    """Per-node expansion for opaque path-based (f, chi, sigma)."""
    try:
        tree_grid = Grid(game.h, game.T, dt)
    except DomainError as exc:
        raise ConfigurationError(
            f"tree step {dt} incompatible with (h, T) for path-based dynamics: {exc}"
        ) from exc
    j_t = tree_grid.node_index(t)
    P, Q = game.P_grid, game.Q_grid
    nP, nQ = P.shape[0], Q.shape[0]
    n_branch = nQ * nP
    n = game.n

    hist = np.array([np.atleast_1d(x.at(tt)) for tt in tree_grid.node_times], dtype=float)

    def node_path(traj_row, upto):
        vals = hist.copy()
        vals[j_t : j_t + upto + 1] = traj_row[: upto + 1]
        vals[j_t + upto :] = traj_row[upto]
        return Path(tree_grid, vals)

    traj = np.empty((1, steps + 1, n))
    traj[0, 0] = np.atleast_1d(x.at(t))
    acc = np.zeros(1)
    for j in range(steps):
        tau = t + j * dt
        B = traj.shape[0]
        new_traj = np.empty((B * n_branch, steps + 1, n))
        new_acc = np.empty(B * n_branch)
        for b in range(B):
            ypath = node_path(traj[b], j)
            base = traj[b]
            for qi in range(nQ):
                for pi in range(nP):
                    rate = np.atleast_1d(game.f(tau, ypath, P[pi], Q[qi]))
                    cost = float(game.chi(tau, ypath, P[pi], Q[qi]))
                    child = b * n_branch + qi * nP + pi
                    new_traj[child] = base
                    new_traj[child, j + 1] = base[j] + dt * rate
                    new_acc[child] = acc[b] + dt * cost
        traj = new_traj
        acc = new_acc
    B_leaf = traj.shape[0]
    leaf = np.empty(B_leaf)
    for b in range(B_leaf):
        leaf[b] = game.sigma.eval(game.T, node_path(traj[b], steps)) - acc[b]
    return leaf


def _backward(leaf: np.ndarray, nQ: int, nP: int, steps: int, lower: bool):
    arr = leaf
    announcer = []
    responder = []
    n_branch = nQ * nP
    for j in range(steps - 1, -1, -1):
        B = n_branch ** j
        r = arr.reshape(B, nQ, nP)
        if lower:
            resp = np.argmin(r, axis=2).astype(np.int32)  # u responding to v
            inner = np.min(r, axis=2)
            ann = np.argmax(inner, axis=1).astype(np.int32)
            arr = np.max(inner, axis=1)
        else:
            resp = np.argmax(r, axis=1).astype(np.int32)  # v responding to u
            inner = np.max(r, axis=1)
            ann = np.argmin(inner, axis=1).astype(np.int32)
            arr = np.min(inner, axis=1)
        announcer.append(ann)
        responder.append(resp)
    announcer.reverse()
    responder.reverse()
    policy = FeedbackPolicy(
        side="first" if lower else "second",
        announcer=tuple(announcer),
        responder=tuple(responder),
    )
    return float(arr[0]), policy


def solve_tree(
    game: GameSpec,
    t: float,
    x: Path,
    steps: int,
    budget: int | None = None,
    side: str = "both",
) -> GameValueReport:
    """Backward-induction values over the exact (|P| |Q|)^steps tree."""
    if steps < 1:
        raise ConfigurationError("steps must be >= 1")
    span = game.T - t
    if span <= 0:
        raise DomainError(f"initial time t={t} must lie before T={game.T}")
    dt = span / steps
    nP = game.P_grid.shape[0]
    nQ = game.Q_grid.shape[0]
    n_branch = nQ * nP
    total = _tree_size(n_branch, steps)
    cap = budget if budget is not None else DEFAULT_NODE_BUDGET
    if game.vector_ops is None:
        cap = min(cap, BLACKBOX_NODE_BUDGET)
    if total > cap:
        raise ResourceError(
            f"tree needs {total} nodes but the budget is {cap}; "
            f"raise --budget to at least {total}",
            required=total,
            budget=cap,
        )
    if game.vector_ops is not None:
        leaf = _forward_vectorized(game, t, x, steps, dt)
    else:
        leaf = _forward_blackbox(game, t, x, steps, dt)
    rho_lower, lower_policy = _backward(leaf, nQ, nP, steps, lower=True)
    rho_upper, upper_policy = _backward(leaf, nQ, nP, steps, lower=False)
    return GameValueReport(
        rho_lower=rho_lower,
        rho_upper=rho_upper,
        dt=dt,
        steps=steps,
        t=t,
        total_nodes=total,
        leaves=int(n_branch**steps),
        lower_policy=lower_policy,
        upper_policy=upper_policy,
        side=side,
    )


def lower_value_tree(game, t, x, steps, budget=None) -> GameValueReport:
    return solve_tree(game, t, x, steps, budget, side="lower")


def upper_value_tree(game, t, x, steps, budget=None) -> GameValueReport:
    return solve_tree(game, t, x, steps, budget, side="upper")


def evaluate_cost(game: GameSpec, t: float, x: Path, u: ControlSignal, v: ControlSignal) -> float:
    """sigma(y) - sum of chi dt along the Euler motion driven by (u, v).

    chi is evaluated at cell left endpoints, consistent with the Euler
    dynamics and the measurable-in-time setting.
    """
    y = integrate(game.f, t, x, u, v)
    g = y.grid
    j0 = g.node_index(t)
    total_chi = 0.0
    for j in range(j0, g.n_nodes - 1):
        tau = float(g.node_times[j])
        total_chi += g.dt * float(game.chi(tau, y.stopped(tau), u.at_cell(j), v.at_cell(j)))
    return game.sigma.eval(g.T, y) - total_chi


def replay_policy(
    game: GameSpec,
    t: float,
    x: Path,
    report: GameValueReport,
    opponent_sequence,
    side: str = "lower",
) -> float:
    """Cost when the stored responder policy replies to a fixed opponent
    control-index sequence; mirrors the tree arithmetic exactly."""
    steps = report.steps
    dt = report.dt
    P, Q = game.P_grid, game.Q_grid
    nP = P.shape[0]
    nQ = Q.shape[0]
    n_branch = nQ * nP
    policy = report.lower_policy if side == "lower" else report.upper_policy
    node = 0
    u_seq = []
    v_seq = []
    for j in range(steps):
        if side == "lower":
            qi = int(opponent_sequence[j])
            pi = policy.respond(j, node, qi)
        else:
            pi = int(opponent_sequence[j])
            qi = policy.respond(j, node, pi)
        u_seq.append(P[pi])
        v_seq.append(Q[qi])
        node = node * n_branch + qi * nP + pi

    if game.vector_ops is not None:
        ops = game.vector_ops
        n = game.n
        f_lag_cells = {d: _lag_cells(d, dt, "dynamics") for d in ops.f_lags}
        ys = [np.atleast_1d(x.at(t)).astype(float)]
        acc = 0.0
        for j in range(steps):
            tau = t + j * dt
            reads = {}
            for d, m in f_lag_cells.items():
                if j - m >= 0:
                    reads[d] = ys[j - m].reshape(1, 1, 1, n)
                else:
                    reads[d] = np.atleast_1d(x.at(tau - d)).reshape(1, 1, 1, n)
            U = np.asarray(u_seq[j]).reshape(1, 1, 1, -1)
            V = np.asarray(v_seq[j]).reshape(1, 1, 1, -1)
            F = np.asarray(ops.f_eval(tau, reads, U, V), dtype=float).reshape(n)
            if ops.chi_eval is not None:
                acc += dt * float(np.asarray(ops.chi_eval(tau, reads, U, V)).reshape(()))
            ys.append(ys[j] + dt * F)
        sigma_reads = {}
        for d in ops.sigma_lags:
            m = _lag_cells(d, dt, "terminal")
            if steps - m >= 0:
                sigma_reads[d] = ys[steps - m].reshape(1, n)
            else:
                sigma_reads[d] = np.atleast_1d(x.at(game.T - d)).reshape(1, n)
        return float(np.asarray(game.vector_ops.sigma_eval(sigma_reads)).reshape(())) - acc

    tree_grid = Grid(game.h, game.T, dt)
    u_sig = ControlSignal(tree_grid, t, np.array(u_seq))
    v_sig = ControlSignal(tree_grid, t, np.array(v_seq))
    hist = Path.from_callable(tree_grid, lambda tt: x.at(tt))
    return evaluate_cost(game, t, hist, u_sig, v_sig)


@dataclass(frozen=True)
class RefinementRow:
    steps: int
    dt: float
    rho_lower: float
    rho_upper: float
    gap: float
    wall_time: float
    closed_form: float | None = None
    err_lower: float | None = None
    err_upper: float | None = None

    def to_json_dict(self) -> dict:
        out = {
            "steps": self.steps,
            "dt": self.dt,
            "rho_lower": self.rho_lower,
            "rho_upper": self.rho_upper,
            "gap": self.gap,
        }
        if self.closed_form is not None:
            out.update(
                closed_form=self.closed_form,
                err_lower=self.err_lower,
                err_upper=self.err_upper,
            )
        return out


def refinement_study(
    game: GameSpec,
    t: float,
    x: Path,
    step_list,
    closed_form: PathFunctional | None = None,
    budget: int | None = None,
) -> list[RefinementRow]:
    """Rows of (dt, lower, upper, gap, wall time), plus the registered
    closed-form value and the tree-value errors against it when given."""
    rows = []
    for steps in step_list:
        start = time.perf_counter()
        rep = solve_tree(game, t, x, int(steps), budget)
        wall = time.perf_counter() - start
        cf = err_lo = err_up = None
        if closed_form is not None:
            cf = closed_form.eval(t, x)
            err_lo = abs(rep.rho_lower - cf)
            err_up = abs(rep.rho_upper - cf)
        rows.append(
            RefinementRow(
                steps=int(steps),
                dt=rep.dt,
                rho_lower=rep.rho_lower,
                rho_upper=rep.rho_upper,
                gap=rep.gap,
                wall_time=wall,
                closed_form=cf,
                err_lower=err_lo,
                err_upper=err_up,
            )
        )
    return rows
