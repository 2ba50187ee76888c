"""Comparison machinery: the quadratic path functional gamma, its gradient
map q, and the exponentially discounted Lyapunov-Krasovskii functional.

gamma measures how far the current value of a difference path sits below
its running sup-norm; both gamma and q vanish identically on the zero
path (the removable singularity is handled by the explicit zero branch,
with no epsilon-regularization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import sample_bundle
from .errors import ConfigurationError, DomainError
from .minimax import Verdict
from .paths import Path, TimeDensity

KAPPA = (3.0 - math.sqrt(5.0)) / 2.0


def gamma(tau: float, w: Path) -> float:
    """(M^2 - r^2)^2 / M^2 + r^2 with M the stopped sup-norm, r = ||w(tau)||;
    0 when M = 0.  Satisfies gamma >= KAPPA * M^2 and feeds the comparison
    functional below."""
    M = w.sup_norm(tau)
    if M <= 0.0:
        return 0.0
    r2 = float(np.dot(w.at(tau), w.at(tau)))
    M2 = M * M
    return (M2 - r2) ** 2 / M2 + r2


def q_gradient(tau: float, w: Path) -> np.ndarray:
    """Spatial ci-gradient of gamma: (2 - 4 (M^2 - r^2)/M^2) w(tau), 0 at M=0."""
    M = w.sup_norm(tau)
    wt = np.atleast_1d(w.at(tau))
    if M <= 0.0:
        return np.zeros_like(wt)
    r2 = float(np.dot(wt, wt))
    M2 = M * M
    return (2.0 - 4.0 * (M2 - r2) / M2) * wt


@dataclass(frozen=True)
class LKParams:
    """epsilon and the path-Lipschitz density entering the discount factor.

    Admissibility requires epsilon <= (1/sqrt(kappa)) exp(-||lambda||_1 / kappa),
    which keeps the discounted factor non-negative on all of [0, T].
    """

    epsilon: float
    lambda_density: TimeDensity

    def __post_init__(self):
        if self.epsilon <= 0:
            raise DomainError("epsilon must be positive")
        if self.epsilon > self.epsilon_max() + 1e-15:
            raise DomainError(
                f"epsilon={self.epsilon} exceeds admissible threshold {self.epsilon_max()}"
            )

    def epsilon_max(self) -> float:
        return math.exp(-self.lambda_density.l1_norm() / KAPPA) / math.sqrt(KAPPA)

    def discount(self, tau: float) -> float:
        """exp(-(1/kappa) * integral_0^tau lambda) - epsilon sqrt(kappa), >= 0."""
        return (
            math.exp(-self.lambda_density.integrate(0.0, tau) / KAPPA)
            - self.epsilon * math.sqrt(KAPPA)
        )


def nu(params: LKParams, tau: float, w: Path) -> float:
    """Lyapunov-Krasovskii value sqrt(eps^4 + gamma)/eps * discount(tau)."""
    e = params.epsilon
    return math.sqrt(e ** 4 + gamma(tau, w)) / e * params.discount(tau)


def nu_time_derivative(params: LKParams, tau: float, w: Path) -> float:
    """Analytic time ci-derivative of nu (non-positive for admissible eps)."""
    e = params.epsilon
    lam = params.lambda_density.value_at(min(tau, params.lambda_density.grid.T - 1e-12))
    return (
        -lam
        * math.sqrt(e ** 4 + gamma(tau, w))
        / (e * KAPPA)
        * math.exp(-params.lambda_density.integrate(0.0, tau) / KAPPA)
    )


def s_eps(params: LKParams, tau: float, w: Path) -> np.ndarray:
    """Spatial ci-gradient of nu: q / (2 eps sqrt(eps^4 + gamma)) * discount."""
    e = params.epsilon
    qv = q_gradient(tau, w)
    denom = 2.0 * e * math.sqrt(e ** 4 + gamma(tau, w))
    return qv / denom * params.discount(tau)


def comparison_check(
    phi1,
    H1,
    phi2,
    H2,
    points,
    tol: float = 1e-9,
    bundle_count: int = 8,
    bundle_seed: int = 0,
    s_probes: int = 5,
) -> Verdict:
    """Experimental comparison harness: phi1 <= phi2 + tol at every point.

    The caller asserts the Hamiltonian ordering H1 <= H2 on the relevant
    characteristic bundle; this is spot-checked by sampling bundle members
    and probe directions, and the evidence is reported alongside the
    verdict rather than certified.
    """
    if not points:
        raise ConfigurationError("points must be non-empty")
    worst_margin = np.inf
    worst_point = None
    for (t, x) in points:
        m = phi2.eval(t, x) - phi1.eval(t, x)
        if m < worst_margin:
            worst_margin = m
            worst_point = (t, x)

    rng = np.random.default_rng(bundle_seed)
    order_violation = -np.inf
    checked = 0
    t0, x0 = points[0]
    bundle = sample_bundle(t0, x0, H1.growth, count=bundle_count, seed=bundle_seed)
    for y in bundle.members:
        g = y.grid
        for _ in range(s_probes):
            s = rng.standard_normal(x0.n)
            j = int(rng.integers(g.lag_cells, g.n_nodes - 1))
            tau = float(g.node_times[j])
            order_violation = max(
                order_violation, H1.eval(tau, y, s) - H2.eval(tau, y, s)
            )
            checked += 1

    passed = worst_margin >= -tol
    witness = None
    if not passed:
        t, x = worst_point
        witness = {"tau": float(t), "path": x, "s": np.zeros(x.n)}
    return Verdict(
        passed=passed,
        margin=float(worst_margin),
        witness=witness,
        samples_used={"points": len(points), "ordering_probes": checked},
        note=f"H-ordering max(H1-H2) over probes = {order_violation:.3e}",
    )
