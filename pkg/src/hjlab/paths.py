"""Piecewise-linear paths on [-h, T] and piecewise-constant time densities.

A ``Grid`` is a uniform partition of [-h, T] whose step divides both the
delay length h and the horizon T, so that 0, T - h, and every declared lag
land exactly on nodes.  A ``Path`` stores one vector per node and evaluates
between nodes by linear interpolation; the sup-norm of a stopped path is
then exact, because the norm of an affine segment is maximized at an
endpoint.  A ``TimeDensity`` is a non-negative cell-wise constant function
on [0, T] with exact integrals.

All objects are immutable after construction and safe to share.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np

from .errors import DomainError

# Absolute slack used when matching a time against a grid node.  Desk-scale
# horizons are O(1), so an absolute tolerance is appropriate.
NODE_ATOL = 1e-9


class Grid:
    """Uniform time grid -h = tau_0 < tau_1 < ... < tau_M = T."""

    __slots__ = ("h", "T", "dt", "lag_cells", "horizon_cells", "n_nodes", "node_times")

    def __init__(self, h: float, T: float, dt: float):
        if T <= 0:
            raise DomainError(f"horizon T must be positive, got {T}")
        if h < 0:
            raise DomainError(f"delay h must be non-negative, got {h}")
        if dt <= 0:
            raise DomainError(f"step dt must be positive, got {dt}")
        lag_cells = int(round(h / dt)) if h > 0 else 0
        horizon_cells = int(round(T / dt))
        if horizon_cells < 1 or abs(horizon_cells * dt - T) > NODE_ATOL:
            raise DomainError(f"dt={dt} does not divide T={T}")
        if abs(lag_cells * dt - h) > NODE_ATOL:
            raise DomainError(f"dt={dt} does not divide h={h}")
        object.__setattr__(self, "h", float(h))
        object.__setattr__(self, "T", float(T))
        object.__setattr__(self, "dt", float(dt))
        object.__setattr__(self, "lag_cells", lag_cells)
        object.__setattr__(self, "horizon_cells", horizon_cells)
        object.__setattr__(self, "n_nodes", lag_cells + horizon_cells + 1)
        times = (np.arange(self.n_nodes) - lag_cells) * float(dt)
        times[0] = -float(h)
        times[lag_cells] = 0.0
        times[-1] = float(T)
        times.setflags(write=False)
        object.__setattr__(self, "node_times", times)

    def __setattr__(self, name, value):
        raise AttributeError("Grid is immutable")

    def __repr__(self):
        return f"Grid(h={self.h}, T={self.T}, dt={self.dt})"

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.h == other.h
            and self.T == other.T
            and self.dt == other.dt
        )

    def __hash__(self):
        return hash((self.h, self.T, self.dt))

    def node_index(self, t: float) -> int:
        """Index of the node equal to ``t``; DomainError if ``t`` is off-node."""
        j = int(round((t + self.h) / self.dt))
        if j < 0 or j >= self.n_nodes or abs(self.node_times[j] - t) > NODE_ATOL:
            raise DomainError(f"time {t} is not a node of {self!r}")
        return j

    def is_node(self, t: float) -> bool:
        j = int(round((t + self.h) / self.dt))
        return 0 <= j < self.n_nodes and abs(self.node_times[j] - t) <= NODE_ATOL

    def snap(self, t: float) -> float:
        """Nearest node time; the CLI layer snaps all user times through this."""
        j = int(round((t + self.h) / self.dt))
        j = min(max(j, 0), self.n_nodes - 1)
        return float(self.node_times[j])

    def cell_index(self, t: float) -> int:
        """Index (counted from -h) of the cell whose left endpoint is <= t."""
        j = int(math.floor((t + self.h) / self.dt + NODE_ATOL))
        return min(max(j, 0), self.n_nodes - 2)

    def refined(self, factor: int) -> "Grid":
        return Grid(self.h, self.T, self.dt / int(factor))


class Path:
    """Continuous piecewise-linear function on [-h, T] with values in R^n."""

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[0] != grid.n_nodes:
            if values.shape[1] == grid.n_nodes:  # accept (n, M+1) transposed input
                values = values.T
            else:
                raise DomainError(
                    f"need {grid.n_nodes} node values, got shape {values.shape}"
                )
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.n = values.shape[1]

    @classmethod
    def constant(cls, grid: Grid, value) -> "Path":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(value, (grid.n_nodes, 1)))

    @classmethod
    def from_callable(cls, grid: Grid, fn, n: int | None = None) -> "Path":
        vals = np.array([np.atleast_1d(fn(t)) for t in grid.node_times], dtype=float)
        if n is not None and vals.shape[1] != n:
            raise DomainError(f"history callable returned dimension {vals.shape[1]}, expected {n}")
        return cls(grid, vals)

    @cached_property
    def _node_norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    @cached_property
    def _prefix_max_norms(self) -> np.ndarray:
        return np.maximum.accumulate(self._node_norms)

    def at(self, tau: float) -> np.ndarray:
        """Value at any tau in [-h, T] by linear interpolation."""
        g = self.grid
        if tau < g.node_times[0] - NODE_ATOL or tau > g.T + NODE_ATOL:
            raise DomainError(f"time {tau} outside [-h, T] = [{-g.h}, {g.T}]")
        pos = (tau + g.h) / g.dt
        j = int(math.floor(pos))
        if j >= g.n_nodes - 1:
            return self.values[-1]
        if j < 0:
            return self.values[0]
        frac = pos - j
        if frac <= 0.0:
            return self.values[j]
        return (1.0 - frac) * self.values[j] + frac * self.values[j + 1]

    def stopped(self, t: float):
        """The path frozen at its time-t value on (t, T].

        At a grid node this materializes a new ``Path``; at an off-node time
        it returns an exact lazy view (see ``StoppedPath``).
        """
        g = self.grid
        if t < -g.h - NODE_ATOL or t > g.T + NODE_ATOL:
            raise DomainError(f"stop time {t} outside [-h, T]")
        if g.is_node(t):
            j = g.node_index(t)
            if j == g.n_nodes - 1:
                return self
            vals = self.values.copy()
            vals[j + 1 :] = self.values[j]
            return Path(g, vals)
        return StoppedPath(self, t)

    def sup_norm(self, upto: float | None = None) -> float:
        """Max Euclidean norm over [-h, upto] (default: the whole segment)."""
        g = self.grid
        if upto is None or upto >= g.T - NODE_ATOL:
            return float(self._prefix_max_norms[-1])
        if upto < -g.h - NODE_ATOL:
            raise DomainError(f"upto={upto} below -h")
        pos = (upto + g.h) / g.dt
        j = int(math.floor(pos + NODE_ATOL))
        j = min(max(j, 0), g.n_nodes - 1)
        best = float(self._prefix_max_norms[j])
        if pos - j > NODE_ATOL:  # off-node: include the interpolated endpoint
            best = max(best, float(np.linalg.norm(self.at(upto))))
        return best

    def with_values(self, values: np.ndarray) -> "Path":
        return Path(self.grid, values)

    def __sub__(self, other: "Path") -> "Path":
        if self.grid != other.grid:
            raise DomainError("paths live on different grids")
        return Path(self.grid, self.values - other.values)

    def __add__(self, other: "Path") -> "Path":
        if self.grid != other.grid:
            raise DomainError("paths live on different grids")
        return Path(self.grid, self.values + other.values)

    def __repr__(self):
        return f"Path(n={self.n}, grid={self.grid!r})"


class StoppedPath(Path):
    """Exact view of ``base`` frozen at an off-node time ``t_stop``.

    Node values agree with the true stopped function at every node;
    ``at`` and ``sup_norm`` are exact for every real argument.  Only the
    in-cell shape of ``values`` around ``t_stop`` differs from the true
    stopped function, which no node-resolution consumer observes.
    """

    def __init__(self, base: Path, t_stop: float):
        g = base.grid
        j = g.cell_index(t_stop)
        frozen = base.at(t_stop)
        vals = base.values.copy()
        vals[j + 1 :] = frozen
        super().__init__(g, vals)
        self._base = base
        self.t_stop = float(t_stop)
        self._frozen = frozen

    def at(self, tau: float) -> np.ndarray:
        if tau >= self.t_stop:
            return self._frozen
        return self._base.at(tau)

    def sup_norm(self, upto: float | None = None) -> float:
        if upto is None:
            upto = self.grid.T
        return self._base.sup_norm(min(upto, self.t_stop))

    def stopped(self, t: float):
        if t >= self.t_stop:
            return self
        return self._base.stopped(t)


class TimeDensity:
    """Non-negative piecewise-constant integrable function on [0, T]."""

    def __init__(self, grid: Grid, cell_values: np.ndarray):
        cell_values = np.asarray(cell_values, dtype=float).ravel()
        if cell_values.shape[0] != grid.horizon_cells:
            raise DomainError(
                f"need {grid.horizon_cells} cell values on [0,T], got {cell_values.shape[0]}"
            )
        if np.any(cell_values < 0):
            raise DomainError("density cell values must be non-negative")
        cell_values = np.ascontiguousarray(cell_values)
        cell_values.setflags(write=False)
        self.grid = grid
        self.cell_values = cell_values

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "TimeDensity":
        return cls(grid, np.full(grid.horizon_cells, float(value)))

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "TimeDensity":
        """Cell values sampled at cell midpoints (user-supplied cell averages)."""
        mids = (np.arange(grid.horizon_cells) + 0.5) * grid.dt
        return cls(grid, np.array([fn(t) for t in mids], dtype=float))

    def value_at(self, t: float) -> float:
        """Cell value at t (cells are left-closed)."""
        if t < -NODE_ATOL or t > self.grid.T + NODE_ATOL:
            raise DomainError(f"time {t} outside [0, T]")
        k = int(math.floor(t / self.grid.dt + NODE_ATOL))
        k = min(max(k, 0), self.grid.horizon_cells - 1)
        return float(self.cell_values[k])

    def l1_norm(self) -> float:
        return float(np.sum(self.cell_values) * self.grid.dt)

    def integrate(self, a: float, b: float) -> float:
        """Exact integral over [a, b], including partial cells at both ends."""
        if a > b + NODE_ATOL:
            raise DomainError(f"integration bounds reversed: a={a} > b={b}")
        a = min(max(a, 0.0), self.grid.T)
        b = min(max(b, 0.0), self.grid.T)
        if b <= a:
            return 0.0
        dt = self.grid.dt
        ka = int(math.floor(a / dt + NODE_ATOL))
        kb = int(math.ceil(b / dt - NODE_ATOL)) - 1
        ka = min(max(ka, 0), self.grid.horizon_cells - 1)
        kb = min(max(kb, 0), self.grid.horizon_cells - 1)
        if ka == kb:
            return float(self.cell_values[ka] * (b - a))
        total = self.cell_values[ka] * ((ka + 1) * dt - a)
        total += self.cell_values[kb] * (b - kb * dt)
        if kb > ka + 1:
            total += np.sum(self.cell_values[ka + 1 : kb]) * dt
        return float(total)

    def __add__(self, other: "TimeDensity") -> "TimeDensity":
        if self.grid != other.grid:
            raise DomainError("densities live on different grids")
        return TimeDensity(self.grid, self.cell_values + other.cell_values)

    def __repr__(self):
        return f"TimeDensity(grid={self.grid!r}, max={self.cell_values.max(initial=0.0)})"


def stopped_path(x: Path, t: float) -> Path:
    """Functional form of ``Path.stopped`` restricted to grid nodes.

    ``t`` must lie in [0, T]; off-horizon times raise DomainError.
    """
    if t < -NODE_ATOL or t > x.grid.T + NODE_ATOL:
        raise DomainError(f"stop time {t} outside [0, T]")
    return x.stopped(t)


def sup_norm(x: Path, upto: float) -> float:
    return x.sup_norm(upto)


def l1_norm(c: TimeDensity) -> float:
    return c.l1_norm()


def integrate_density(c: TimeDensity, a: float, b: float) -> float:
    return c.integrate(a, b)
