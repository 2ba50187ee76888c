"""Retarded dynamics integration and admissible-extension bundles.

Integration is explicit Euler with the derivative frozen per cell: the
dynamics are only measurable in time, so higher-order methods buy nothing,
and Euler keeps delayed reads exact on the grid.  Extension bundles sample
the compact set of absolutely continuous extensions whose derivative obeys
the growth bound ||dy(tau)|| <= c(tau) (1 + ||y(. ^ tau)||_inf); the
discrete bound uses the sup-norm up to the cell's left endpoint, the
conservative direction that keeps the constraint checkable a priori.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IntegrationError
from .paths import Grid, Path, TimeDensity


@dataclass(frozen=True)
class ControlSignal:
    """Cell-wise constant control on [t, T] with values in a compact set."""

    grid: Grid
    t_start: float
    values: np.ndarray  # (cells from t to T, control dimension)

    def __post_init__(self):
        j0 = self.grid.node_index(self.t_start)
        n_cells = self.grid.n_nodes - 1 - j0
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if vals.shape[0] != n_cells:
            raise DomainError(
                f"need {n_cells} control cells on [{self.t_start}, {self.grid.T}], got {vals.shape[0]}"
            )
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: Grid, t_start: float, point) -> "ControlSignal":
        j0 = grid.node_index(t_start)
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return cls(grid, t_start, np.tile(point, (grid.n_nodes - 1 - j0, 1)))

    def at_cell(self, j: int) -> np.ndarray:
        """Control on the cell whose left node has global index j."""
        j0 = self.grid.node_index(self.t_start)
        return self.values[j - j0]


@dataclass(frozen=True)
class ExtensionBundle:
    """Finite sample of Y(t, x; c): admissible right extensions of (t, x)."""

    t: float
    base: Path
    density: TimeDensity
    members: tuple[Path, ...]
    derivatives: tuple[np.ndarray, ...]  # per member: (cells on [t,T], n)
    seed: int | None = None

    def __len__(self):
        return len(self.members)

    def max_bound_violation(self) -> float:
        """Worst excess of ||dy|| over the cell growth bound (<= 0 is clean)."""
        g = self.base.grid
        j0 = g.node_index(self.t)
        worst = -np.inf
        for y, dy in zip(self.members, self.derivatives):
            for c in range(dy.shape[0]):
                tau = g.node_times[j0 + c]
                bound = self.density.value_at(tau) * (1.0 + y.sup_norm(tau))
                worst = max(worst, float(np.linalg.norm(dy[c])) - bound)
        return worst


def integrate(f, t: float, x: Path, u: ControlSignal, v: ControlSignal) -> Path:
    """Euler integration of dy = f(tau, y(. ^ tau), u, v) from (t, x).

    ``f`` is evaluated at each cell's left node on the stopped path; the
    result agrees with ``x`` on [-h, t].
    """
    g = x.grid
    j0 = g.node_index(t)
    vals = x.values.copy()
    for j in range(j0, g.n_nodes - 1):
        frozen = vals.copy()
        frozen[j + 1 :] = vals[j]
        tau = float(g.node_times[j])
        rate = np.atleast_1d(np.asarray(
            f(tau, Path(g, frozen), u.at_cell(j), v.at_cell(j)), dtype=float))
        if not np.all(np.isfinite(rate)):
            raise IntegrationError(
                f"dynamics returned non-finite value {rate} on cell [{tau}, {tau + g.dt}]"
            )
        vals[j + 1] = vals[j] + g.dt * rate
    return Path(g, vals)


def gronwall_bound(x: Path, t: float, c: TimeDensity) -> float:
    """A-priori sup-norm bound for every member of Y(t, x; c).

    Follows the integral-inequality estimate: 1 + sup-norm grows at most by
    the exponential of the remaining mass of c.
    """
    x.grid.node_index(t)
    return (1.0 + x.sup_norm(t)) * float(np.exp(c.integrate(t, x.grid.T))) - 1.0


@dataclass(frozen=True)
class BundleScheme:
    """How random bundle members draw their cell derivatives."""

    kind: str = "ball"  # uniform on the admissible ball, redrawn per cell
    include_extremals: bool = True

    def __post_init__(self):
        if self.kind not in ("ball", "boundary"):
            raise DomainError(f"unknown bundle scheme {self.kind!r}")


def sample_bundle(
    t: float,
    x: Path,
    c: TimeDensity,
    scheme: BundleScheme | None = None,
    count: int = 8,
    seed: int = 0,
) -> ExtensionBundle:
    """Deterministic-in-seed sample of Y(t, x; c).

    Members, in fixed order: the constant extension, saturated rays along
    +e_i then -e_i, then ``count`` random extensions whose cell derivatives
    are drawn uniformly from the admissible ball.  Pure random sampling
    misses the extremal characteristics, hence the deterministic members.
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    scheme = scheme or BundleScheme()
    g = x.grid
    j0 = g.node_index(t)
    n = x.n
    n_cells = g.n_nodes - 1 - j0
    rng = np.random.default_rng(seed)

    stopped = x.stopped(t)
    members = [stopped]
    derivs = [np.zeros((n_cells, n))]

    directions = []
    if scheme.include_extremals:
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            directions.append(e)
        for i in range(n):
            e = np.zeros(n)
            e[i] = -1.0
            directions.append(e)

    def grow(rate_fn):
        vals = stopped.values.copy()
        dy = np.zeros((n_cells, n))
        sup = x.sup_norm(t)
        for cix in range(n_cells):
            j = j0 + cix
            tau = float(g.node_times[j])
            bound = c.value_at(tau) * (1.0 + sup)
            rate = rate_fn(cix, bound)
            dy[cix] = rate
            vals[j + 1] = vals[j] + g.dt * rate
            sup = max(sup, float(np.linalg.norm(vals[j + 1])))
        vals[j0 + n_cells :] = vals[j0 + n_cells]
        return Path(g, vals), dy

    for e in directions:
        y, dy = grow(lambda cix, bound, e=e: bound * e)
        members.append(y)
        derivs.append(dy)

    for _ in range(count):
        cell_dirs = rng.standard_normal((n_cells, n))
        norms = np.linalg.norm(cell_dirs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        cell_dirs /= norms
        if scheme.kind == "ball":
            radii = rng.uniform(0.0, 1.0, n_cells) ** (1.0 / n)
        else:
            radii = np.ones(n_cells)
        y, dy = grow(lambda cix, bound: bound * radii[cix] * cell_dirs[cix])
        members.append(y)
        derivs.append(dy)

    return ExtensionBundle(
        t=float(t),
        base=x,
        density=c,
        members=tuple(members),
        derivatives=tuple(derivs),
        seed=seed,
    )
