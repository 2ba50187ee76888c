"""Problem files: JSON-shaped definitions of games and experiments.

A problem file fixes the dimensions (n, h, T, dt), the dynamics / running
cost / terminal expressions, control boxes with per-axis grid counts, the
declared time discontinuities, the initial history, and optional
experiment defaults.  Parsing validates every referenced lag against the
grid and propagates step() discontinuity times into the declared list.

CLI path dependence is restricted to finitely many discrete lags in the
dynamics and finitely many terminal samples in sigma; arbitrary
functionals remain available through the library API.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import expressions as ex
from .ci import PathFunctional
from .errors import ConfigurationError, ExpressionError
from .games import GameSpec, VectorOps
from .hamiltonians import HamiltonianSpec, game_hamiltonian
from .paths import Grid, Path, TimeDensity


@dataclass(frozen=True)
class ControlBox:
    """Axis-aligned box discretized by per-axis uniform grids."""

    box: tuple[tuple[float, float], ...]
    points: tuple[int, ...]

    def __post_init__(self):
        if len(self.box) != len(self.points):
            raise ConfigurationError("box and points lists must have equal length")
        for (lo, hi), k in zip(self.box, self.points):
            if lo > hi:
                raise ConfigurationError(f"box interval [{lo}, {hi}] is reversed")
            if k < 1:
                raise ConfigurationError("each axis needs at least one grid point")

    def grid(self) -> np.ndarray:
        axes = []
        for (lo, hi), k in zip(self.box, self.points):
            axes.append(np.array([0.5 * (lo + hi)]) if k == 1 else np.linspace(lo, hi, k))
        return np.array(list(itertools.product(*axes)), dtype=float)

    def to_json_dict(self):
        return {"box": [list(b) for b in self.box], "points": list(self.points)}


@dataclass(frozen=True)
class ProblemFile:
    name: str
    n: int
    h: float
    T: float
    dt: float
    dynamics: tuple[str, ...]
    chi: str
    sigma: str
    P: ControlBox
    Q: ControlBox
    discontinuities: tuple[float, ...] = ()
    history: tuple[str, ...] | None = None  # expressions in tau, one per coord
    history_nodes: tuple[tuple[float, ...], ...] | None = None
    start_time: float = 0.0
    phi: str | None = None
    experiments: dict = field(default_factory=dict)
    budget: int | None = None

    def grid(self) -> Grid:
        return Grid(self.h, self.T, self.dt)

    def to_json_dict(self) -> dict:
        out = {
            "name": self.name,
            "n": self.n,
            "h": self.h,
            "T": self.T,
            "dt": self.dt,
            "dynamics": list(self.dynamics),
            "chi": self.chi,
            "sigma": self.sigma,
            "controls": {"P": self.P.to_json_dict(), "Q": self.Q.to_json_dict()},
            "discontinuities": list(self.discontinuities),
            "start_time": self.start_time,
        }
        if self.history is not None:
            out["history"] = {"expr": list(self.history)}
        if self.history_nodes is not None:
            out["history"] = {"nodes": [list(row) for row in self.history_nodes]}
        if self.phi is not None:
            out["phi"] = self.phi
        if self.experiments:
            out["experiments"] = self.experiments
        if self.budget is not None:
            out["budget"] = self.budget
        return out

    def serialize(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def _control_box(raw, which) -> ControlBox:
    if not isinstance(raw, dict) or "box" not in raw:
        raise ConfigurationError(f"controls.{which} must be an object with a 'box' field")
    box = tuple(tuple(float(v) for v in pair) for pair in raw["box"])
    pts = raw.get("points", 3)
    if isinstance(pts, int):
        points = tuple(pts for _ in box)
    else:
        points = tuple(int(k) for k in pts)
    return ControlBox(box=box, points=points)


_KNOWN_FIELDS = {
    "name",
    "n",
    "h",
    "T",
    "dt",
    "dynamics",
    "chi",
    "sigma",
    "controls",
    "discontinuities",
    "history",
    "start_time",
    "phi",
    "experiments",
    "budget",
}


def parse_problem(text: str) -> ProblemFile:
    """Parse and validate a problem file, or raise a located diagnostic."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"problem file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("problem file must be a JSON object")
    unknown = set(raw) - _KNOWN_FIELDS
    if unknown:
        raise ConfigurationError(f"unknown problem fields: {sorted(unknown)}")
    for key in ("n", "h", "T", "dt", "dynamics", "chi", "sigma", "controls"):
        if key not in raw:
            raise ConfigurationError(f"missing required field {key!r}")

    n = int(raw["n"])
    h = float(raw["h"])
    T = float(raw["T"])
    dt = float(raw["dt"])
    grid = Grid(h, T, dt)  # validates divisibility

    dynamics = tuple(str(s) for s in raw["dynamics"])
    if len(dynamics) != n:
        raise ConfigurationError(f"need {n} dynamics expressions, got {len(dynamics)}")
    chi = str(raw["chi"])
    sigma = str(raw["sigma"])

    declared = [float(c) for c in raw.get("discontinuities", [])]
    for c in declared:
        if not (0.0 < c < T):
            raise ConfigurationError(f"declared discontinuity {c} outside (0, T)")

    lags = set()
    step_times = set(declared)
    for i, src in enumerate(dynamics):
        node = ex.parse_expression(src, field=f"dynamics[{i}]")
        ex.validate_context(node, "dynamics", n, field=f"dynamics[{i}]")
        lags |= ex.collect_lags(node)
        step_times |= ex.collect_step_times(node)
    chi_node = ex.parse_expression(chi, field="chi")
    ex.validate_context(chi_node, "dynamics", n, field="chi")
    lags |= ex.collect_lags(chi_node)
    step_times |= ex.collect_step_times(chi_node)

    sigma_node = ex.parse_expression(sigma, field="sigma")
    ex.validate_context(sigma_node, "sigma", n, field="sigma")
    terminal_lags = ex.collect_terminal_lags(sigma_node)

    for d in sorted(lags | terminal_lags):
        cells = round(d / dt)
        if abs(cells * dt - d) > 1e-9:
            raise ConfigurationError(f"lag {d} is not a multiple of dt={dt}")
        if d > h + 1e-9:
            raise ConfigurationError(f"lag {d} exceeds the delay length h={h}")

    step_times = tuple(sorted(c for c in step_times if 0.0 < c < T))

    controls = raw["controls"]
    P = _control_box(controls.get("P"), "P")
    Q = _control_box(controls.get("Q"), "Q")

    history = history_nodes = None
    hist_raw = raw.get("history", {"expr": ["0"] * n})
    if "expr" in hist_raw:
        history = tuple(str(s) for s in hist_raw["expr"])
        if len(history) != n:
            raise ConfigurationError(f"need {n} history expressions, got {len(history)}")
        for i, src in enumerate(history):
            node = ex.parse_expression(src, field=f"history[{i}]")
            ex.validate_context(node, "history", n, field=f"history[{i}]")
    elif "nodes" in hist_raw:
        history_nodes = tuple(tuple(float(v) for v in row) for row in hist_raw["nodes"])
        if len(history_nodes) != grid.n_nodes:
            raise ConfigurationError(
                f"history nodes must cover all {grid.n_nodes} grid nodes"
            )
    else:
        raise ConfigurationError("history must provide 'expr' or 'nodes'")

    start_time = float(raw.get("start_time", 0.0))
    if not (0.0 <= start_time < T):
        raise ConfigurationError(f"start_time {start_time} outside [0, T)")
    start_time = grid.snap(start_time)

    phi = raw.get("phi")
    if phi is not None:
        node = ex.parse_expression(str(phi), field="phi")
        ex.validate_context(node, "phi", n, field="phi")

    budget = raw.get("budget")
    return ProblemFile(
        name=str(raw.get("name", "unnamed")),
        n=n,
        h=h,
        T=T,
        dt=dt,
        dynamics=dynamics,
        chi=chi,
        sigma=sigma,
        P=P,
        Q=Q,
        discontinuities=step_times,
        history=history,
        history_nodes=history_nodes,
        start_time=start_time,
        phi=str(phi) if phi is not None else None,
        experiments=dict(raw.get("experiments", {})),
        budget=int(budget) if budget is not None else None,
    )


# ---------------------------------------------------------------------------
# evaluation environments


class _ScalarDynEnv:
    def __init__(self, tau, path, u, v, n):
        self.tau = tau
        self.path = path
        self.u = np.atleast_1d(u)
        self.v = np.atleast_1d(v)
        self.n = n

    def time(self):
        return self.tau

    def horizon(self):
        raise ExpressionError("T not available in dynamics context")

    def control(self, side, idx):
        arr = self.u if side == "u" else self.v
        return float(arr[idx - 1])

    def state(self, read):
        if read.kind == "current":
            return float(self.path.at(self.tau)[read.index - 1])
        if read.kind == "lag":
            return float(self.path.at(self.tau - read.offset)[read.index - 1])
        raise ExpressionError(f"read kind {read.kind} invalid in dynamics")


class _ScalarSigmaEnv:
    def __init__(self, path, T):
        self.path = path
        self.T = T

    def time(self):
        raise ExpressionError("t not available in sigma context")

    def horizon(self):
        return self.T

    def control(self, side, idx):
        raise ExpressionError("controls not available in sigma context")

    def state(self, read):
        if read.kind == "terminal":
            return float(self.path.at(self.T - read.offset)[read.index - 1])
        raise ExpressionError(f"read kind {read.kind} invalid in sigma")


class _ScalarPhiEnv:
    def __init__(self, t, path):
        self.t = t
        self.path = path

    def time(self):
        return self.t

    def horizon(self):
        return self.path.grid.T

    def control(self, side, idx):
        raise ExpressionError("controls not available in phi context")

    def state(self, read):
        if read.kind == "current":
            return float(self.path.at(self.t)[read.index - 1])
        if read.kind == "lag":
            return float(self.path.at(self.t - read.offset)[read.index - 1])
        if read.kind == "frozen-min":
            return float(self.path.at(min(self.t, read.offset))[read.index - 1])
        raise ExpressionError(f"read kind {read.kind} invalid in phi")


class _VectorDynEnv:
    """reads[d]: (B,1,1,n); u: (1,1,nP,mP); v: (1,nQ,1,mQ)."""

    def __init__(self, tau, reads, u, v):
        self.tau = tau
        self.reads = reads
        self.u = u
        self.v = v

    def time(self):
        return self.tau

    def horizon(self):
        raise ExpressionError("T not available in dynamics context")

    def control(self, side, idx):
        arr = self.u if side == "u" else self.v
        return arr[..., idx - 1]

    def state(self, read):
        d = 0.0 if read.kind == "current" else read.offset
        return self.reads[d][..., read.index - 1]


class _VectorSigmaEnv:
    def __init__(self, reads):
        self.reads = reads

    def time(self):
        raise ExpressionError("t not available in sigma context")

    def horizon(self):
        raise ExpressionError("bare T not available in vector sigma context")

    def control(self, side, idx):
        raise ExpressionError("controls not available in sigma context")

    def state(self, read):
        return self.reads[read.offset][..., read.index - 1]


class _HistoryEnv:
    def __init__(self, tau):
        self.tau = tau

    def time(self):
        return self.tau

    def horizon(self):
        raise ExpressionError("T not available in history context")

    def control(self, side, idx):
        raise ExpressionError("controls not available in history context")

    def state(self, read):
        raise ExpressionError("y-reads not available in history context")


# ---------------------------------------------------------------------------
# builders


def initial_path(problem: ProblemFile) -> Path:
    grid = problem.grid()
    if problem.history_nodes is not None:
        return Path(grid, np.array(problem.history_nodes, dtype=float))
    nodes = []
    exprs = [ex.parse_expression(s, field=f"history[{i}]") for i, s in enumerate(problem.history)]
    for tau in grid.node_times:
        nodes.append([float(ex.evaluate(e, _HistoryEnv(float(tau)))) for e in exprs])
    return Path(grid, np.array(nodes, dtype=float))


def build_game(problem: ProblemFile) -> GameSpec:
    """GameSpec with both path-based callables and vectorized lag ops."""
    n = problem.n
    T = problem.T
    dyn_nodes = [
        ex.parse_expression(s, field=f"dynamics[{i}]") for i, s in enumerate(problem.dynamics)
    ]
    chi_node = ex.parse_expression(problem.chi, field="chi")
    sigma_node = ex.parse_expression(problem.sigma, field="sigma")

    f_lags = {0.0} | set().union(*(ex.collect_lags(d) for d in dyn_nodes), ex.collect_lags(chi_node))
    sigma_lags = ex.collect_terminal_lags(sigma_node) or {0.0}

    def f(tau, path, u, v):
        env = _ScalarDynEnv(tau, path, u, v, n)
        return np.array([ex.evaluate(d, env) for d in dyn_nodes], dtype=float)

    def chi(tau, path, u, v):
        return float(ex.evaluate(chi_node, _ScalarDynEnv(tau, path, u, v, n)))

    def sigma_eval(t, path):
        return float(ex.evaluate(sigma_node, _ScalarSigmaEnv(path, T)))

    def f_vec(tau, reads, u, v):
        env = _VectorDynEnv(tau, reads, u, v)
        coords = [np.asarray(ex.evaluate(d, env), dtype=float) for d in dyn_nodes]
        shape = np.broadcast_shapes(*(c.shape for c in coords)) if coords else ()
        return np.stack([np.broadcast_to(c, shape) for c in coords], axis=-1)

    chi_vec = None
    if not ex.is_zero(chi_node):

        def chi_vec(tau, reads, u, v):
            return np.asarray(ex.evaluate(chi_node, _VectorDynEnv(tau, reads, u, v)), dtype=float)

    def sigma_vec(reads):
        return np.asarray(ex.evaluate(sigma_node, _VectorSigmaEnv(reads)), dtype=float)

    # cell-wise growth density of |f| over the control boxes: conservative
    # constant computed from the expression's structure is out of scope, so
    # follow the sampled-invariant approach with a generous constant.
    grid = problem.grid()
    c_f = TimeDensity.constant(grid, _growth_constant(problem))

    return GameSpec(
        n=n,
        h=problem.h,
        T=T,
        f=f,
        chi=chi,
        sigma=PathFunctional(sigma_eval, label=f"sigma[{problem.name}]"),
        P_grid=problem.P.grid(),
        Q_grid=problem.Q.grid(),
        c_f=c_f,
        time_discontinuities=problem.discontinuities,
        vector_ops=VectorOps(
            f_lags=tuple(sorted(f_lags)),
            sigma_lags=tuple(sorted(sigma_lags)),
            f_eval=f_vec,
            sigma_eval=sigma_vec,
            chi_eval=chi_vec,
        ),
        label=problem.name,
    )


def _growth_constant(problem: ProblemFile) -> float:
    """Crude sampled bound K with ||f|| <= K (1 + sup-norm), used as c_f.

    Samples the dynamics over control-grid corners and random paths of
    moderate size; the factor 1.5 absorbs the sampling slack.  Problems
    needing a sharp density can construct GameSpec directly.
    """
    game_nodes = [ex.parse_expression(s) for s in problem.dynamics]
    grid = problem.grid()
    rng = np.random.default_rng(12345)
    P = problem.P.grid()
    Q = problem.Q.grid()
    worst = 0.0
    for _ in range(8):
        vals = rng.normal(scale=1.0, size=(grid.n_nodes, problem.n)).cumsum(axis=0) * grid.dt
        path = Path(grid, vals)
        for tau in grid.node_times[grid.lag_cells :: max(1, grid.horizon_cells // 4)]:
            tau = float(min(tau, grid.T - 1e-9))
            denom = 1.0 + path.sup_norm(tau)
            for u in P[:: max(1, len(P) // 3)]:
                for v in Q[:: max(1, len(Q) // 3)]:
                    env = _ScalarDynEnv(tau, path, u, v, problem.n)
                    rate = np.array([ex.evaluate(d, env) for d in game_nodes])
                    worst = max(worst, float(np.linalg.norm(rate)) / denom)
    return 1.5 * worst if worst > 0 else 1.0


def build_hamiltonian(problem: ProblemFile, side: str) -> HamiltonianSpec:
    return game_hamiltonian(build_game(problem), side)


def build_phi(problem: ProblemFile) -> PathFunctional | None:
    """The registered closed-form candidate solution, if any."""
    if problem.phi is None:
        return None
    node = ex.parse_expression(problem.phi, field="phi")

    def ev(t, path):
        return float(ex.evaluate(node, _ScalarPhiEnv(t, path)))

    return PathFunctional(ev, label=f"phi[{problem.name}]")
