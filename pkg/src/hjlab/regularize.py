"""Good-time-set blending and Lipschitz extension over a path dictionary.

``good_set_from_discontinuities`` is the desk-scale surrogate for the
closed full-measure sets on which measurable data restrict continuously:
the user declares the bad times, and the good set is the complement of
small open balls around them.  ``time_regularize`` bridges each gap by a
convex blend of the endpoint evaluations, and ``mcshane_extend`` extends a
function off a finite dictionary of paths while preserving its per-time
Lipschitz modulus under the stopped sup-norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .paths import Path, TimeDensity


@dataclass(frozen=True)
class GoodTimeSet:
    """Disjoint sorted closed intervals covering 0 and T; gaps are open."""

    intervals: tuple[tuple[float, float], ...]
    T: float

    def __post_init__(self):
        if not self.intervals:
            raise ConfigurationError("good set must be non-empty")
        prev = -np.inf
        for a, b in self.intervals:
            if a > b or a < prev:
                raise ConfigurationError(f"intervals not sorted/disjoint near ({a}, {b})")
            prev = b
        if not self.contains(0.0) or not self.contains(self.T):
            raise ConfigurationError("good set must contain 0 and T")

    def contains(self, tau: float) -> bool:
        for a, b in self.intervals:
            if a - 1e-12 <= tau <= b + 1e-12:
                return True
        return False

    @property
    def gaps(self) -> tuple[tuple[float, float], ...]:
        out = []
        for (a0, b0), (a1, b1) in zip(self.intervals[:-1], self.intervals[1:]):
            out.append((b0, a1))
        return tuple(out)

    def gap_containing(self, tau: float) -> tuple[float, float] | None:
        for a, b in self.gaps:
            if a < tau < b:
                return (a, b)
        return None

    def measure_deficit(self) -> float:
        return sum(b - a for a, b in self.gaps)


def good_set_from_discontinuities(times, radius: float, T: float) -> GoodTimeSet:
    """Complement of open radius-balls around the declared times, united
    with {0} and {T}; overlapping balls merge into a single gap."""
    if radius <= 0:
        raise DomainError("radius must be positive")
    times = sorted(float(c) for c in times)
    for c in times:
        if not (0.0 < c < T):
            raise DomainError(f"discontinuity time {c} outside (0, T)")
    gaps = []
    for c in times:
        lo, hi = max(c - radius, 0.0), min(c + radius, T)
        if gaps and lo <= gaps[-1][1]:
            gaps[-1] = (gaps[-1][0], max(gaps[-1][1], hi))
        else:
            gaps.append((lo, hi))
    intervals = []
    cursor = 0.0
    for lo, hi in gaps:
        intervals.append((cursor, lo))
        cursor = hi
    intervals.append((cursor, T))
    return GoodTimeSet(intervals=tuple(intervals), T=float(T))


def time_regularize(f, F: GoodTimeSet):
    """Continuous-in-time surrogate of f: unchanged on the good set, convex
    blend of the endpoint evaluations across each gap (a, b):

        ((b - tau) f(a, y, u, v) + (tau - a) f(b, y(. ^ tau), u, v)) / (b - a)

    The right endpoint sees the path stopped at tau, never future values.
    """

    def fk(tau, y, u, v):
        gap = F.gap_containing(tau)
        if gap is None:
            return f(tau, y, u, v)
        a, b = gap
        fa = np.asarray(f(a, y, u, v), dtype=float)
        fb = np.asarray(f(b, y.stopped(tau), u, v), dtype=float)
        w = (tau - a) / (b - a)
        return (1.0 - w) * fa + w * fb

    return fk


@dataclass(frozen=True)
class PathDictionary:
    """Finite stand-in for a compact set of paths, with its per-time
    Lipschitz density."""

    members: tuple[Path, ...]
    lipschitz: TimeDensity

    def __post_init__(self):
        if not self.members:
            raise ConfigurationError("path dictionary must be non-empty")
        g = self.members[0].grid
        for y in self.members:
            if y.grid != g:
                raise ConfigurationError("dictionary members must share one grid")

    def __len__(self):
        return len(self.members)


def stopped_distance(z: Path, y: Path, tau: float) -> float:
    """||z(.^tau) - y(.^tau)||_inf, exact across grids via the node union."""
    zs = z.stopped(tau)
    ys = y.stopped(tau)
    if z.grid == y.grid:
        return (zs - ys).sup_norm()
    times = np.union1d(z.grid.node_times, y.grid.node_times)
    return max(
        float(np.linalg.norm(np.atleast_1d(zs.at(tt)) - np.atleast_1d(ys.at(tt))))
        for tt in times
    )


def mcshane_extend(f_component, dictionary: PathDictionary, tau: float, y: Path) -> float:
    """max over dictionary members z of f(z) - lam(tau) ||z(.^tau) - y(.^tau)||.

    Coincides with f on members and is lam(tau)-Lipschitz in y under the
    stopped sup-norm.  Raises ConfigurationError naming the offending pair
    if the dictionary itself is not Lipschitz-consistent at tau.
    """
    lam = dictionary.lipschitz.value_at(min(tau, dictionary.lipschitz.grid.T - 1e-12))
    vals = [float(f_component(z)) for z in dictionary.members]
    m = len(vals)
    for i in range(m):
        for j in range(i + 1, m):
            dist = stopped_distance(dictionary.members[i], dictionary.members[j], tau)
            if abs(vals[i] - vals[j]) > lam * dist + 1e-9:
                raise ConfigurationError(
                    f"dictionary not Lipschitz-consistent at tau={tau}: members "
                    f"{i} and {j} differ by {abs(vals[i]-vals[j]):.3g} over distance {dist:.3g}"
                )
    best = -np.inf
    for val, z in zip(vals, dictionary.members):
        best = max(best, val - lam * stopped_distance(z, y, tau))
    return float(best)


def lambda_star(lam: TimeDensity, n: int) -> TimeDensity:
    """(1 + sqrt(n)) inflation of the Lipschitz density used when the
    componentwise extension is reassembled into a vector field."""
    return TimeDensity(lam.grid, (1.0 + np.sqrt(n)) * lam.cell_values)


def c_star(c_f: TimeDensity, lam_star: TimeDensity, x_sup: float) -> TimeDensity:
    """Inflated growth density (c_f + lambda_*) (1 + ||x||) of the
    regularized dynamics."""
    if c_f.grid != lam_star.grid:
        raise ConfigurationError("densities live on different grids")
    return TimeDensity(c_f.grid, (c_f.cell_values + lam_star.cell_values) * (1.0 + x_sup))


def estimate_lipschitz_density(f_component, dictionary_members, grid) -> TimeDensity:
    """Max empirical Lipschitz ratio over dictionary pairs, per cell.

    Estimation (as opposed to a user-declared density) is flagged by the
    caller in reports.
    """
    members = list(dictionary_members)
    vals = np.zeros(grid.horizon_cells)
    for k in range(grid.horizon_cells):
        tau = float(grid.node_times[grid.lag_cells + k])
        worst = 0.0
        stopped = [z.stopped(tau) for z in members]
        fv = [float(f_component(tau, z)) for z in stopped]
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                dist = (stopped[i] - stopped[j]).sup_norm()
                if dist > 1e-12:
                    worst = max(worst, abs(fv[i] - fv[j]) / dist)
        vals[k] = worst
    return TimeDensity(grid, vals)
