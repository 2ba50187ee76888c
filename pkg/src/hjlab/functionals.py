"""A small corpus of smooth non-anticipative functionals with known
ci-derivatives, used by the residual and refinement studies and by tests.

Every builder returns a (PathFunctional, grads) pair where grads(t, x)
yields the analytic CiGradient.
"""

from __future__ import annotations

import math

import numpy as np

from .ci import CiGradient, PathFunctional
from .lyapunov import gamma, q_gradient
from .paths import Path


def _grad(dt_phi, grad_phi, n):
    return CiGradient(
        dt_phi=float(dt_phi),
        grad_phi=np.atleast_1d(np.asarray(grad_phi, dtype=float)).reshape(n),
        probe_step=0.0,
        residual_estimate=0.0,
    )


def state_eval(a, b: float = 0.0):
    """phi(t, x) = <a, x(t)> + b with ci-derivatives (0, a)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))

    def ev(t, x):
        return float(np.dot(a, x.at(t))) + b

    def grads(t, x):
        return _grad(0.0, a, a.shape[0])

    return PathFunctional(ev, label="state"), grads


def running_integral(a):
    """phi(t, x) = integral over [-h, t] of <a, x>; derivatives (<a, x(t)>, 0)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))

    def ev(t, x):
        g = x.grid
        j = g.cell_index(t)
        proj = x.values @ a
        # exact trapezoid over whole cells up to node j, then the partial cell
        total = float(np.sum(proj[:j] + proj[1 : j + 1]) * g.dt / 2.0)
        tj = float(g.node_times[j])
        if t > tj + 1e-15:
            total += (float(proj[j]) + float(np.dot(a, x.at(t)))) * (t - tj) / 2.0
        return total

    def grads(t, x):
        return _grad(float(np.dot(a, x.at(t))), np.zeros_like(a), a.shape[0])

    return PathFunctional(ev, label="running-integral"), grads


def terminal_samples(coeffs, read_times):
    """phi(t, x) = sum_j c_j <e_{i_j}, x(min(t, d_j))>: a frozen terminal
    functional with reads at fixed times d_j.

    coeffs: list of (c, component_index); read_times: matching times.
    Time derivative is 0; the gradient collects the coefficients of reads
    still in the future (strictly, read time > t).
    """
    coeffs = [(float(c), int(i)) for (c, i) in coeffs]
    read_times = [float(d) for d in read_times]

    def ev(t, x):
        return sum(c * float(x.at(min(t, d))[i]) for (c, i), d in zip(coeffs, read_times))

    def grads(t, x):
        g = np.zeros(x.n)
        for (c, i), d in zip(coeffs, read_times):
            if t < d - 1e-15:
                g[i] += c
        return _grad(0.0, g, x.n)

    return PathFunctional(ev, label="terminal-samples"), grads


def quadratic_state(A):
    """phi(t, x) = <x(t), A x(t)>; derivatives (0, (A + A^T) x(t))."""
    A = np.atleast_2d(np.asarray(A, dtype=float))

    def ev(t, x):
        v = x.at(t)
        return float(v @ A @ v)

    def grads(t, x):
        v = x.at(t)
        return _grad(0.0, (A + A.T) @ v, x.n)

    return PathFunctional(ev, label="quadratic"), grads


def exp_discounted_state(a, T: float):
    """phi(t, x) = exp(T - t) (1 + <a, x(t)>); semiclassical for
    H(t, x, s) = <s, 1_a>(1 + ...) style state-feedback Hamiltonians."""
    a = np.atleast_1d(np.asarray(a, dtype=float))

    def ev(t, x):
        return math.exp(T - t) * (1.0 + float(np.dot(a, x.at(t))))

    def grads(t, x):
        return _grad(-math.exp(T - t) * (1.0 + float(np.dot(a, x.at(t)))),
                     math.exp(T - t) * a, a.shape[0])

    return PathFunctional(ev, label="exp-state"), grads


def gamma_functional():
    """gamma as a PathFunctional with its analytic ci-derivatives (0, q)."""

    def ev(t, x):
        return gamma(t, x)

    def grads(t, x):
        return _grad(0.0, q_gradient(t, x), x.n)

    return PathFunctional(ev, label="gamma"), grads


def state_plus_clock(a, clock):
    """phi(t, x) = <a, x(t)> + g(t) for a piecewise-linear clock g;
    derivatives (g'(t), a) with g' read from the clock's cell slopes.

    clock: (breakpoints, values) arrays defining g on [0, T].
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    bps, vals = (np.asarray(v, dtype=float) for v in clock)

    def g_of(t):
        return float(np.interp(t, bps, vals))

    def gprime(t):
        j = int(np.searchsorted(bps, t, side="right")) - 1
        j = min(max(j, 0), len(bps) - 2)
        return float((vals[j + 1] - vals[j]) / (bps[j + 1] - bps[j]))

    def ev(t, x):
        return float(np.dot(a, x.at(t))) + g_of(t)

    def grads(t, x):
        return _grad(gprime(t), a, a.shape[0])

    return PathFunctional(ev, label="state+clock"), grads


def smooth_corpus(n: int, T: float, seed: int = 0):
    """Deterministic list of (PathFunctional, grads) pairs for dimension n."""
    rng = np.random.default_rng(seed)
    out = []
    a = rng.standard_normal(n)
    out.append(state_eval(a))
    out.append(running_integral(rng.standard_normal(n)))
    A = rng.standard_normal((n, n)) * 0.5
    out.append(quadratic_state(A))
    out.append(exp_discounted_state(rng.standard_normal(n) * 0.5, T))
    out.append(gamma_functional())
    return out
