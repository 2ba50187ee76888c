"""Co-invariant derivative estimation, chain-rule and HJ residuals, and the
characteristic flow driven by the quotient drift.

The derivative estimator probes only constant and unit-ramp extensions of
the stopped path.  That identifies the pair (time derivative, gradient)
whenever it exists, but it is an identification, not a differentiability
certificate: the definition quantifies over all absolutely continuous
right extensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, IntegrationError
from .paths import Path


@dataclass(frozen=True)
class PathFunctional:
    """Non-anticipative functional of (t, path); sigma is the t = T case."""

    eval_fn: Callable[[float, Path], float]
    label: str = ""

    def eval(self, t: float, x: Path) -> float:
        return float(self.eval_fn(t, x))

    def __call__(self, t, x):
        return self.eval(t, x)

    def shifted(self, amount: float, interior_only: bool = True) -> "PathFunctional":
        """phi + amount * 1[t < T]; keeps the boundary when interior_only."""
        base = self.eval_fn

        def ev(t, x, _T=None):
            bump = amount if (not interior_only or t < x.grid.T - 1e-12) else 0.0
            return base(t, x) + bump

        return PathFunctional(ev, label=f"{self.label}{amount:+g}*interior")


@dataclass(frozen=True)
class CiGradient:
    dt_phi: float
    grad_phi: np.ndarray
    probe_step: float
    residual_estimate: float

    def __post_init__(self):
        if not np.isfinite(self.dt_phi) or not np.all(np.isfinite(self.grad_phi)):
            raise DomainError("non-finite ci-derivative estimate")


class _ProbeExtension(Path):
    """Stopped path plus a constant-slope ramp on [t, T]; exact at any t.

    ``at`` and ``sup_norm`` are exact for arbitrary real arguments because
    the extension is affine beyond t with norm maximized at endpoints.
    Node values are exact; only the in-cell shape around an off-node t
    differs from the ideal extension, invisible at node resolution.
    """

    def __init__(self, base: Path, t: float, slope: np.ndarray):
        g = base.grid
        stopped = base.stopped(t)
        ramp = np.maximum(0.0, g.node_times - t)[:, None] * np.atleast_1d(slope)[None, :]
        super().__init__(g, np.asarray(stopped.values) + ramp)
        self._stopped = stopped
        self._t = float(t)
        self._slope = np.atleast_1d(np.asarray(slope, dtype=float))
        self._anchor = np.atleast_1d(base.at(t))

    def at(self, tau: float) -> np.ndarray:
        if tau <= self._t:
            return self._stopped.at(tau)
        return self._anchor + (tau - self._t) * self._slope

    def sup_norm(self, upto: float | None = None) -> float:
        g = self.grid
        if upto is None:
            upto = g.T
        if upto <= self._t:
            return self._stopped.sup_norm(upto)
        return max(
            self._stopped.sup_norm(self._t),
            float(np.linalg.norm(self.at(upto))),
        )

    def stopped(self, t: float):
        if t >= self.grid.T:
            return self
        if t <= self._t:
            return self._stopped.stopped(t)
        return Path(self.grid, self.values).stopped(t)


def ci_derivative(phi: PathFunctional, t: float, x: Path, probe_step: float) -> CiGradient:
    """Forward-difference ci-derivatives along constant and unit-ramp probes.

    The time derivative is estimated along the constant extension, the i-th
    gradient component from the ramp with slope e_i, both at horizon
    t + probe_step; a halved probe gives the Richardson-style residual
    estimate.  Affine functionals come out exact regardless of probe size.
    """
    g = x.grid
    if t >= g.T - 1e-15:
        raise DomainError(f"ci_derivative needs t < T, got t={t}")
    if probe_step <= 0:
        raise DomainError("probe_step must be positive")
    delta = min(probe_step, g.T - t)

    def estimates(d: float):
        const = _ProbeExtension(x, t, np.zeros(x.n))
        phi_tx = phi.eval(t, x)
        phi_const = phi.eval(t + d, const)
        dt_est = (phi_const - phi_tx) / d
        grad = np.zeros(x.n)
        for i in range(x.n):
            e = np.zeros(x.n)
            e[i] = 1.0
            ramp = _ProbeExtension(x, t, e)
            grad[i] = (phi.eval(t + d, ramp) - phi_const) / d
        return dt_est, grad

    dt1, grad1 = estimates(delta)
    dt2, grad2 = estimates(delta / 2.0)
    residual = abs(dt1 - dt2) + float(np.max(np.abs(grad1 - grad2), initial=0.0))
    return CiGradient(
        dt_phi=dt2,
        grad_phi=grad2,
        probe_step=delta / 2.0,
        residual_estimate=residual,
    )


def make_fd_grads(phi: PathFunctional, probe_step: float):
    """grads callable backed by ci_derivative at a fixed probe step."""

    def grads(t: float, x: Path) -> CiGradient:
        return ci_derivative(phi, t, x, probe_step)

    return grads


def chain_rule_residual(
    phi: PathFunctional,
    grads,
    t: float,
    x: Path,
    y: Path,
    tau: float,
) -> float:
    """|phi(tau, y) - phi(t, x) - sum over cells of dt (dphi + <grad, dy>)|.

    Derivatives are taken at cell midpoints; dy is the cell slope of the
    piecewise-linear y.  For functionals in the smooth corpus the residual
    is pure discretization error and contracts under grid refinement.
    """
    g = y.grid
    j0 = g.node_index(t)
    j1 = g.node_index(tau)
    if j1 < j0:
        raise DomainError("tau must be >= t")
    total = 0.0
    for j in range(j0, j1):
        mid = float(g.node_times[j]) + g.dt / 2.0
        gr = grads(mid, y)
        dy = (y.values[j + 1] - y.values[j]) / g.dt
        total += g.dt * (gr.dt_phi + float(np.dot(gr.grad_phi, dy)))
    return abs(phi.eval(tau, y) - phi.eval(t, x) - total)


def hj_residual(phi: PathFunctional, grads, H, t: float, x: Path) -> float:
    """Signed residual dphi/dt + H(t, x, grad phi) of the HJ equation."""
    if t >= x.grid.T - 1e-15:
        raise DomainError("hj_residual needs t < T")
    gr = grads(t, x)
    return gr.dt_phi + H.eval(t, x, gr.grad_phi)


@dataclass(frozen=True)
class CharacteristicFlow:
    path: Path
    ledger: np.ndarray  # conservation value per node of [t, T]
    times: np.ndarray

    def max_drift(self) -> float:
        return float(np.max(np.abs(self.ledger - self.ledger[0])))


def characteristic_flow(
    phi: PathFunctional,
    grads,
    H,
    t: float,
    x: Path,
    s: np.ndarray,
    tol_sing: float | None = None,
    growth_slack: float = 1.1,
) -> CharacteristicFlow:
    """Integrate the quotient drift
    (H(tau,y,grad phi) - H(tau,y,s)) / ||grad phi - s||^2 * (grad phi - s),
    selecting drift 0 on the singular branch ||grad phi - s|| < tol_sing.

    Alongside the path, records the conservation ledger
    phi(tau, y) - integral of (<s, dy> - H(xi, y, s)); for a semiclassical
    pair the ledger is constant up to O(dt).  A drift exceeding the growth
    bound of H by more than ``growth_slack`` aborts with IntegrationError,
    which is the symptom of a non-semiclassical phi or bad gradients.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    g = x.grid
    j0 = g.node_index(t)
    if tol_sing is None:
        tol_sing = 1e-8 * (1.0 + float(np.linalg.norm(s)))
    vals = x.stopped(t).values.copy()
    n_nodes_out = g.n_nodes - j0
    ledger = np.zeros(n_nodes_out)
    times = g.node_times[j0:].copy()
    acc = 0.0

    def current_path(j):
        vv = vals.copy()
        vv[j + 1 :] = vals[j]
        return Path(g, vv)

    ledger[0] = phi.eval(t, current_path(j0))
    for j in range(j0, g.n_nodes - 1):
        tau = float(g.node_times[j])
        ypath = current_path(j)
        grad = np.atleast_1d(grads(tau, ypath).grad_phi)
        diff = grad - s
        nrm = float(np.linalg.norm(diff))
        if nrm < tol_sing:
            drift = np.zeros_like(s)
        else:
            dH = H.eval(tau, ypath, grad) - H.eval(tau, ypath, s)
            drift = dH / (nrm * nrm) * diff
        bound = H.growth.value_at(min(tau, g.T - 1e-12)) * (1.0 + ypath.sup_norm(tau))
        if float(np.linalg.norm(drift)) > growth_slack * bound + 1e-12:
            raise IntegrationError(
                f"drift {np.linalg.norm(drift):.3g} exceeds growth bound {bound:.3g} "
                f"by more than {100 * (growth_slack - 1):.0f}% at tau={tau}"
            )
        vals[j + 1] = vals[j] + g.dt * drift
        acc += g.dt * (float(np.dot(s, drift)) - H.eval(tau, ypath, s))
        ledger[j + 1 - j0] = phi.eval(
            float(g.node_times[j + 1]), current_path(j + 1)
        ) - acc
    return CharacteristicFlow(path=Path(g, vals), ledger=ledger, times=times)
