"""Verification of the upper/lower-solution inequalities over sampled bundles.

A finite bundle can certify a violation exactly but can confirm the
existential inequalities only up to sampling and tolerance, so a passing
verdict means "no violation found at tolerance" while a failing verdict
carries a concrete witness (s, tau, extension path).

Margins are normalized so that ``margin >= -tol`` means pass, for both
sides: the upper check stores min over (s, tau) of phi(t,x) - inf_y(...),
the lower check stores min over (s, tau) of sup_y(...) - phi(t,x).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .dynamics import BundleScheme, ExtensionBundle, sample_bundle
from .errors import ConfigurationError, DomainError
from .paths import Path, TimeDensity


@dataclass(frozen=True)
class Verdict:
    """Pass/fail certificate with a signed margin and an optional witness."""

    passed: bool
    margin: float
    witness: dict[str, Any] | None = None
    samples_used: dict[str, int] = field(default_factory=dict)
    note: str = ""

    def __post_init__(self):
        if not self.passed and self.witness is None:
            raise ConfigurationError("failing verdicts must carry a witness")

    def to_json_dict(self) -> dict:
        out = {
            "passed": bool(self.passed),
            "margin": float(self.margin),
            "samples_used": dict(self.samples_used),
        }
        if self.note:
            out["note"] = self.note
        if self.witness is not None:
            w = {}
            for key, val in self.witness.items():
                if isinstance(val, np.ndarray):
                    w[key] = val.tolist()
                elif isinstance(val, Path):
                    w[key] = {"node_times": val.grid.node_times.tolist(),
                              "values": val.values.tolist()}
                else:
                    w[key] = val
            out["witness"] = w
        return out


def _normalize_s_set(s_set, n):
    out = []
    for s in s_set:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if s.shape != (n,):
            raise ConfigurationError(f"direction {s} has wrong dimension (need {n})")
        out.append(s)
    return out


def default_s_set(n: int, seed: int = 0) -> list[np.ndarray]:
    """Axis vectors, their negatives, zero, and 8 seeded random directions
    scaled to norms cycling through 1/2, 1, 2."""
    out = [np.zeros(n)]
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        out.append(e.copy())
        out.append(-e)
    rng = np.random.default_rng(seed)
    scales = [0.5, 1.0, 2.0]
    for k in range(8):
        d = rng.standard_normal(n)
        nrm = np.linalg.norm(d)
        if nrm == 0:
            d = np.zeros(n)
            d[0] = 1.0
            nrm = 1.0
        out.append(d / nrm * scales[k % 3])
    return out


def default_tolerance(dt: float, s_set, gronwall: float) -> float:
    """First-order discretization envelope: 2 dt (1 + max ||s||) (1 + bound)."""
    smax = max((float(np.linalg.norm(s)) for s in s_set), default=0.0)
    return 2.0 * dt * (1.0 + smax) * (1.0 + gronwall)


def characteristic_sum(y: Path, H, s: np.ndarray, t: float, tau: float) -> float:
    """Sum over cells of [t, tau] of dt (<s, dy> - H(xi, y, s)), left endpoints."""
    g = y.grid
    j0 = g.node_index(t)
    j1 = g.node_index(tau)
    total = 0.0
    for j in range(j0, j1):
        xi = float(g.node_times[j])
        dy = (y.values[j + 1] - y.values[j]) / g.dt
        total += g.dt * (float(np.dot(s, dy)) - H.eval(xi, y, s))
    return total


def check_upper(
    phi,
    H,
    t: float,
    x: Path,
    s_set,
    tau_set,
    bundle: ExtensionBundle,
    tol: float,
) -> Verdict:
    """Property (U): for each (s, tau) some bundle member satisfies
    phi(tau, y) - sum <= phi(t, x) + tol."""
    return _check_one_sided(phi, H, t, x, s_set, tau_set, bundle, tol, upper=True)


def check_lower(
    phi,
    H,
    t: float,
    x: Path,
    s_set,
    tau_set,
    bundle: ExtensionBundle,
    tol: float,
) -> Verdict:
    """Property (L): mirror image, sup over the bundle >= phi(t, x) - tol."""
    return _check_one_sided(phi, H, t, x, s_set, tau_set, bundle, tol, upper=False)


def _check_one_sided(phi, H, t, x, s_set, tau_set, bundle, tol, upper):
    if not s_set or not len(tau_set):
        raise ConfigurationError("s_set and tau_set must be non-empty")
    s_set = _normalize_s_set(s_set, x.n)
    phi_tx = phi.eval(t, x)
    worst_margin = np.inf
    worst = None
    for s in s_set:
        for tau in tau_set:
            if tau <= t or tau > x.grid.T + 1e-12:
                raise DomainError(f"tau={tau} outside (t, T]")
            best_val = None
            best_member = None
            for y in bundle.members:
                val = phi.eval(tau, y) - characteristic_sum(y, H, s, t, tau)
                better = best_val is None or (val < best_val if upper else val > best_val)
                if better:
                    best_val = val
                    best_member = y
            margin = (phi_tx - best_val) if upper else (best_val - phi_tx)
            if margin < worst_margin:
                worst_margin = margin
                worst = (s, tau, best_member)
    passed = worst_margin >= -tol
    witness = None
    if not passed:
        witness = {"s": worst[0], "tau": float(worst[1]), "path": worst[2]}
    return Verdict(
        passed=passed,
        margin=float(worst_margin),
        witness=witness,
        samples_used={
            "members": len(bundle.members),
            "s": len(s_set),
            "tau": len(tau_set),
        },
        note="upper" if upper else "lower",
    )


def chain_check(
    phi,
    H,
    t: float,
    x: Path,
    s: np.ndarray,
    stages: int,
    c_H: TimeDensity,
    tol: float,
    count: int = 8,
    seed: int = 0,
    scheme: BundleScheme | None = None,
) -> Verdict:
    """Multi-step gluing of per-stage minimizing extensions.

    Splits [t, T] into ``stages`` equal pieces (each a whole number of
    cells), greedily selects the (U)-minimizing member stage by stage, and
    requires the glued path to satisfy the (U) inequality at every stage
    node simultaneously.  Stopped segments agree across stages, so the
    concatenation is itself an admissible extension.
    """
    if stages < 1:
        raise ConfigurationError("stages must be >= 1")
    g = x.grid
    s = np.atleast_1d(np.asarray(s, dtype=float))
    j0 = g.node_index(t)
    total_cells = g.n_nodes - 1 - j0
    if total_cells % stages != 0:
        raise ConfigurationError(
            f"{stages} stages do not divide the {total_cells} cells of [t, T]"
        )
    per = total_cells // stages
    phi_tx = phi.eval(t, x)
    current = x
    running_sum = 0.0
    worst_margin = np.inf
    worst = None
    for i in range(stages):
        ti = float(g.node_times[j0 + i * per])
        ti1 = float(g.node_times[j0 + (i + 1) * per])
        stage_bundle = sample_bundle(ti, current, c_H, scheme, count=count, seed=seed + i)
        best_val = None
        best_member = None
        best_seg = None
        for y in stage_bundle.members:
            seg = characteristic_sum(y, H, s, ti, ti1)
            val = phi.eval(ti1, y) - seg
            if best_val is None or val < best_val:
                best_val = val
                best_member = y
                best_seg = seg
        running_sum += best_seg
        current = best_member
        margin = phi_tx - (phi.eval(ti1, current) - running_sum)
        if margin < worst_margin:
            worst_margin = margin
            worst = (s, ti1, current)
    passed = worst_margin >= -tol
    witness = None
    if not passed:
        witness = {"s": worst[0], "tau": float(worst[1]), "path": worst[2]}
    return Verdict(
        passed=passed,
        margin=float(worst_margin),
        witness=witness,
        samples_used={"stages": stages, "members_per_stage": count + 1 + 2 * x.n},
        note="chain",
    )


@dataclass(frozen=True)
class CheckConfig:
    """Shared knobs for classify(): sampling sizes, seeds, tolerance."""

    s_seed: int = 0
    bundle_count: int = 8
    bundle_seed: int = 0
    boundary_samples: int = 16
    tol: float | None = None
    tau_set: tuple[float, ...] | None = None
    s_set: tuple | None = None


def classify(phi, H, sigma, t: float, x: Path, c_H: TimeDensity,
             config: CheckConfig | None = None) -> dict[str, Verdict]:
    """Run (U), (L), and the boundary comparison; minimax iff all three pass."""
    from .dynamics import gronwall_bound

    config = config or CheckConfig()
    g = x.grid
    s_set = list(config.s_set) if config.s_set is not None else default_s_set(x.n, config.s_seed)
    j0 = g.node_index(t)
    tau_set = (
        list(config.tau_set)
        if config.tau_set is not None
        else [float(ti) for ti in g.node_times[j0 + 1 :]]
    )
    tol = config.tol
    if tol is None:
        tol = default_tolerance(g.dt, s_set, gronwall_bound(x, t, c_H))
    bundle = sample_bundle(t, x, c_H, count=config.bundle_count, seed=config.bundle_seed)
    upper = check_upper(phi, H, t, x, s_set, tau_set, bundle, tol)
    lower = check_lower(phi, H, t, x, s_set, tau_set, bundle, tol)

    rng = np.random.default_rng(config.bundle_seed + 1)
    worst_b = -np.inf
    worst_path = None
    for _ in range(config.boundary_samples):
        vals = x.values + rng.normal(scale=0.5, size=x.values.shape).cumsum(axis=0) * g.dt
        z = Path(g, vals)
        gap = abs(phi.eval(g.T, z) - sigma.eval(g.T, z))
        if gap > worst_b:
            worst_b = gap
            worst_path = z
    b_passed = worst_b <= tol
    boundary = Verdict(
        passed=b_passed,
        margin=float(tol - worst_b),
        witness=None if b_passed else {"tau": g.T, "path": worst_path, "s": np.zeros(x.n)},
        samples_used={"paths": config.boundary_samples},
        note="boundary",
    )
    return {"upper": upper, "lower": lower, "boundary": boundary}
