"""Hamiltonian evaluators, game-induced max-min forms, and Steklov smoothing.

A Hamiltonian here is an evaluator H(t, path, s) together with its growth
density (the per-time Lipschitz-in-s modulus) and a declared list of times
where time-continuity may fail.  The declared list is the computable
surrogate for the exceptional null sets of the measurability assumptions;
it drives exact window splitting in the Steklov transform and in L1
distances.

Game Hamiltonians are exhaustive max-min / min-max scans over finite
control grids with lowest-index tie-breaking, so every optimizer is
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError
from .minimax import Verdict
from .paths import NODE_ATOL, Path, TimeDensity


@dataclass(frozen=True)
class HamiltonianSpec:
    """Evaluator H(t, x, s) with growth density and time-discontinuity list."""

    eval_fn: Callable[[float, Path, np.ndarray], float]
    growth: TimeDensity
    discontinuity_times: tuple[float, ...] = ()
    label: str = ""

    def eval(self, t: float, x: Path, s: np.ndarray) -> float:
        return float(self.eval_fn(t, x, np.asarray(s, dtype=float)))

    def __call__(self, t, x, s):
        return self.eval(t, x, s)

    def time_breakpoints(self) -> tuple[float, ...]:
        """Interior times where the map t -> H(t, ., .) may kink or jump."""
        return tuple(sorted(set(float(c) for c in self.discontinuity_times)))


def game_hamiltonian(game, side: str) -> HamiltonianSpec:
    """Lower (max over Q of min over P) or upper (min over P of max over Q)
    Hamiltonian of <s, f> - chi over the game's finite control grids.

    At declared discontinuity times the value is 0, mirroring the zero
    branch of the game Hamiltonians on the exceptional null set.  Ties are
    broken by lowest grid index via the scan order.
    """
    if side not in ("lower", "upper"):
        raise ConfigurationError(f"side must be 'lower' or 'upper', got {side!r}")
    P = np.atleast_2d(np.asarray(game.P_grid, dtype=float))
    Q = np.atleast_2d(np.asarray(game.Q_grid, dtype=float))
    if P.shape[0] == 0 or Q.shape[0] == 0:
        raise ConfigurationError("empty control grid")
    bad_times = tuple(sorted(set(float(c) for c in game.time_discontinuities)))
    f, chi = game.f, game.chi
    lower = side == "lower"

    def ev(t: float, x: Path, s: np.ndarray) -> float:
        for c in bad_times:
            if abs(t - c) <= NODE_ATOL:
                return 0.0
        outer_best = None
        outer_grid, inner_grid = (Q, P) if lower else (P, Q)
        for w in outer_grid:
            inner_best = None
            for z in inner_grid:
                u, v = (z, w) if lower else (w, z)
                val = float(np.dot(s, np.atleast_1d(f(t, x, u, v)))) - float(chi(t, x, u, v))
                if inner_best is None or (val < inner_best if lower else val > inner_best):
                    inner_best = val
            if outer_best is None or (inner_best > outer_best if lower else inner_best < outer_best):
                outer_best = inner_best
        return outer_best

    return HamiltonianSpec(
        eval_fn=ev,
        growth=game.c_f,
        discontinuity_times=bad_times,
        label=f"H{'-' if lower else '+'}[{getattr(game, 'label', '')}]",
    )


def isaacs_gap(game, sample) -> float:
    """Max over the sample of H+ - H- (pointwise >= 0 on finite grids)."""
    if not sample:
        raise ConfigurationError("sample must be non-empty")
    hm = game_hamiltonian(game, "lower")
    hp = game_hamiltonian(game, "upper")
    return max(hp.eval(t, x, s) - hm.eval(t, x, s) for (t, x, s) in sample)


@dataclass(frozen=True)
class SmoothedHamiltonian:
    """Steklov time-average of a base Hamiltonian over windows [t-1/k, t+1/k].

    The base is extended by zero outside [0, T] and the path argument is
    stopped at the outer evaluation time, so the result is non-anticipative
    and continuous in t.  Window integrals split at the base's declared
    discontinuity times; within each piece composite midpoint quadrature is
    used, which is exact when the base is piecewise constant in time.
    """

    base: HamiltonianSpec
    k: int
    quad_cells: int = 64

    def __post_init__(self):
        if self.k < 1:
            raise DomainError("Steklov index k must be >= 1")
        if self.quad_cells < 1:
            raise DomainError("quad_cells must be >= 1")

    @property
    def half_width(self) -> float:
        return 1.0 / self.k

    def eval(self, t: float, x: Path, s: np.ndarray) -> float:
        s = np.asarray(s, dtype=float)
        r = self.half_width
        lo, hi = t - r, t + r
        T = x.grid.T
        xs = x.stopped(t) if t < T else x
        cuts = [max(lo, 0.0), min(hi, T)]
        for c in self.base.time_breakpoints():
            if cuts[0] < c < cuts[-1]:
                cuts.append(c)
        cuts = sorted(set(cuts))
        window = hi - lo
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b - a <= 0:
                continue
            m = max(1, int(round(self.quad_cells * (b - a) / window)))
            mids = a + (np.arange(m) + 0.5) * (b - a) / m
            total += (b - a) / m * sum(self.base.eval(tm, xs, s) for tm in mids)
        return (self.k / 2.0) * total

    def __call__(self, t, x, s):
        return self.eval(t, x, s)

    @property
    def growth(self) -> TimeDensity:
        """Constant density: the window-max of the smoothed base growth."""
        g = self.base.growth.grid
        r = self.half_width
        worst = 0.0
        for t in g.node_times[g.lag_cells :]:
            worst = max(worst, (self.k / 2.0) * self.base.growth.integrate(t - r, t + r))
        return TimeDensity.constant(g, worst)

    @property
    def discontinuity_times(self) -> tuple[float, ...]:
        return ()

    def time_breakpoints(self) -> tuple[float, ...]:
        """Kinks of t -> H_k: window edges crossing base breakpoints or 0, T."""
        T = self.base.growth.grid.T
        r = self.half_width
        pts = set()
        for c in list(self.base.time_breakpoints()) + [0.0, T]:
            for p in (c - r, c + r):
                if NODE_ATOL < p < T - NODE_ATOL:
                    pts.add(p)
        return tuple(sorted(pts))


def steklov_smooth(H: HamiltonianSpec, k: int, quad_cells: int = 64) -> SmoothedHamiltonian:
    return SmoothedHamiltonian(base=H, k=int(k), quad_cells=quad_cells)


def window_max_lipschitz(density: TimeDensity, k: int) -> float:
    """max over t of (k/2) * integral of the density over [t-1/k, t+1/k].

    The path-Lipschitz modulus of the smoothed Hamiltonian; sampling at grid
    nodes is exact for cell-wise constant densities when 1/k is a multiple
    of the cell width, and a close upper proxy otherwise.
    """
    g = density.grid
    r = 1.0 / k
    return max(
        (k / 2.0) * density.integrate(t - r, t + r) for t in g.node_times[g.lag_cells :]
    )


def l1_distance(
    H1,
    H2,
    dictionary,
    s: np.ndarray,
    interval: tuple[float, float] | None = None,
    cells_per_piece: int = 8,
) -> float:
    """Max over dictionary paths of the time integral of |H1 - H2|.

    The integration partition merges both Hamiltonians' declared breakpoint
    structures, so piecewise-constant bases and their Steklov transforms
    (piecewise linear) are integrated exactly by composite midpoint rule.
    """
    paths = list(getattr(dictionary, "members", dictionary))
    if not paths:
        raise ConfigurationError("path dictionary must be non-empty")
    s = np.asarray(s, dtype=float)
    T = paths[0].grid.T
    a, b = (0.0, T) if interval is None else interval
    if a > b:
        raise DomainError(f"bad interval [{a}, {b}]")
    cuts = {a, b}
    for H in (H1, H2):
        bp = H.time_breakpoints() if hasattr(H, "time_breakpoints") else ()
        for c in bp:
            if a < c < b:
                cuts.add(float(c))
    cuts = sorted(cuts)
    worst = 0.0
    for y in paths:
        total = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi - lo <= 0:
                continue
            m = cells_per_piece
            mids = lo + (np.arange(m) + 0.5) * (hi - lo) / m
            total += (hi - lo) / m * sum(
                abs(H1.eval(tm, y, s) - H2.eval(tm, y, s)) for tm in mids
            )
        worst = max(worst, total)
    return worst


def check_nonanticipation(H, sample) -> Verdict:
    """Exact test of H(t, x, s) = H(t, x(. ^ t), s) over sample triples.

    Pass requires literal equality; any nonzero gap fails with the worst
    triple as witness.  Stop times are snapped to nodes by the caller.
    """
    worst = 0.0
    witness = None
    count = 0
    for (t, x, s) in sample:
        s = np.asarray(s, dtype=float)
        gap = abs(H.eval(t, x, s) - H.eval(t, x.stopped(t), s))
        count += 1
        if gap > worst:
            worst = gap
            witness = {"tau": float(t), "s": s, "path": x}
    passed = worst == 0.0
    return Verdict(
        passed=passed,
        margin=-float(worst),
        witness=None if passed else witness,
        samples_used={"triples": count},
        note="non-anticipation",
    )
