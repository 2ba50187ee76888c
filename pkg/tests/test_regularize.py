import numpy as np
import pytest

from hjlab import (
    Grid,
    Path,
    PathDictionary,
    TimeDensity,
    good_set_from_discontinuities,
    mcshane_extend,
    sample_bundle,
    time_regularize,
)
from hjlab.errors import ConfigurationError
from hjlab.regularize import c_star, estimate_lipschitz_density, lambda_star

from conftest import random_path


def _grid():
    return Grid(h=0.5, T=1.0, dt=0.125)


def test_good_set_no_discontinuities():
    F = good_set_from_discontinuities([], radius=0.1, T=1.0)
    assert F.intervals == ((0.0, 1.0),)
    assert F.gaps == ()


def test_good_set_single_ball():
    F = good_set_from_discontinuities([0.5], radius=0.125, T=1.0)
    assert F.intervals == ((0.0, 0.375), (0.625, 1.0))
    assert len(F.gaps) == 1
    assert F.measure_deficit() == pytest.approx(0.25)


def test_good_set_merged_balls():
    F = good_set_from_discontinuities([0.3, 0.35], radius=0.05, T=1.0)
    assert len(F.gaps) == 1
    assert F.gaps[0][0] == pytest.approx(0.25)
    assert F.gaps[0][1] == pytest.approx(0.4)
    assert F.measure_deficit() <= 2 * 0.05 * 2


def test_time_regularize_endpoints_and_midpoint():
    F = good_set_from_discontinuities([0.4], radius=0.2, T=1.0)

    def f(tau, y, u, v):
        return np.array([np.sin(tau) + u])

    fk = time_regularize(f, F)
    g = _grid()
    y = random_path(g, n=1, seed=0)
    for tau in (0.2, 0.6):  # gap endpoints return f exactly
        assert fk(tau, y, 1.0, 0.0)[0] == f(tau, y, 1.0, 0.0)[0]
    mid = fk(0.4, y, 1.0, 0.0)[0]
    expected = 0.5 * (f(0.2, y, 1.0, 0.0)[0] + f(0.6, y.stopped(0.4), 1.0, 0.0)[0])
    assert mid == pytest.approx(expected, abs=1e-15)


def test_time_regularize_step_dynamics():
    # step dynamics 1[tau >= 1/2] u with gap (0.375, 0.625): value at 0.5 is u/2
    F = good_set_from_discontinuities([0.5], radius=0.125, T=1.0)

    def f(tau, y, u, v):
        return np.array([(1.0 if tau >= 0.5 else 0.0) * u])

    fk = time_regularize(f, F)
    y = Path.constant(_grid(), 0.0)
    assert fk(0.5, y, 0.8, 0.0)[0] == pytest.approx(0.4)


def test_time_regularize_identity_on_good_set():
    F = good_set_from_discontinuities([0.5], radius=0.1, T=1.0)

    def f(tau, y, u, v):
        return np.array([np.cos(3 * tau)])

    fk = time_regularize(f, F)
    y = Path.constant(_grid(), 0.0)
    for tau in (0.0, 0.25, 0.39, 0.61, 0.875, 1.0):
        assert fk(tau, y, 0.0, 0.0)[0] == f(tau, y, 0.0, 0.0)[0]


def _dictionary(grid, seed=0, lam=1.0):
    # members generated as 1-Lipschitz-in-sup-norm functionals will be
    # consistent for f(z) = z(tau) reads
    members = tuple(random_path(grid, n=1, seed=s) for s in range(4))
    return PathDictionary(members=members, lipschitz=TimeDensity.constant(grid, lam))


def test_mcshane_reproduces_members():
    g = _grid()
    d = _dictionary(g)
    tau = 0.5
    for z in d.members:
        val = mcshane_extend(lambda zz: float(zz.at(tau)[0]), d, tau, z)
        assert val == pytest.approx(float(z.at(tau)[0]), abs=1e-12)


def test_mcshane_single_member_formula():
    g = _grid()
    z0 = random_path(g, n=1, seed=5)
    d = PathDictionary(members=(z0,), lipschitz=TimeDensity.constant(g, 1.0))
    y = random_path(g, n=1, seed=6)
    tau = 0.25
    val = mcshane_extend(lambda zz: float(zz.at(tau)[0]), d, tau, y)
    dist = (z0.stopped(tau) - y.stopped(tau)).sup_norm()
    assert val == pytest.approx(float(z0.at(tau)[0]) - dist, abs=1e-12)


def test_mcshane_two_member_hand_value():
    g = _grid()
    d = PathDictionary(
        members=(Path.constant(g, 0.0), Path.constant(g, 1.0)),
        lipschitz=TimeDensity.constant(g, 1.0),
    )
    y = Path.constant(g, 0.5)
    val = mcshane_extend(lambda zz: float(zz.at(0.5)[0]), d, 0.5, y)
    assert val == pytest.approx(0.5)


def test_mcshane_lipschitz_in_y():
    g = _grid()
    d = _dictionary(g)
    tau = 0.625
    lam = 1.0
    rng = np.random.default_rng(0)
    for seed in range(50):
        y1 = random_path(g, n=1, seed=100 + seed)
        y2 = random_path(g, n=1, seed=200 + seed)
        e1 = mcshane_extend(lambda zz: float(zz.at(tau)[0]), d, tau, y1)
        e2 = mcshane_extend(lambda zz: float(zz.at(tau)[0]), d, tau, y2)
        dist = (y1.stopped(tau) - y2.stopped(tau)).sup_norm()
        assert abs(e1 - e2) <= lam * dist + 1e-12


def test_mcshane_inconsistent_dictionary_rejected():
    g = _grid()
    d = PathDictionary(
        members=(Path.constant(g, 0.0), Path.constant(g, 0.1)),
        lipschitz=TimeDensity.constant(g, 0.5),
    )
    # f varies 10x faster than the declared modulus allows
    with pytest.raises(ConfigurationError, match="members 0 and 1"):
        mcshane_extend(lambda zz: 10.0 * float(zz.at(0.5)[0]), d, 0.5, Path.constant(g, 0.3))


def test_lambda_star_and_c_star():
    g = _grid()
    lam = TimeDensity.constant(g, 2.0)
    ls = lambda_star(lam, 4)
    assert np.allclose(ls.cell_values, 2.0 * 3.0)  # (1 + sqrt(4)) * 2
    cf = TimeDensity.constant(g, 1.0)
    cs = c_star(cf, ls, x_sup=0.5)
    assert np.allclose(cs.cell_values, (1.0 + 6.0) * 1.5)


def test_regularized_dynamics_growth_bound():
    # the blended dynamics obey the inflated bound c_*(tau)(1 + sup-norm)
    g = _grid()
    lam = TimeDensity.constant(g, 1.0)
    x = random_path(g, n=1, seed=1)

    def f(tau, y, u, v):
        return np.array([(1.0 if tau >= 0.5 else -1.0) * (1.0 + 0.5 * y.sup_norm(tau))])

    F = good_set_from_discontinuities([0.5], radius=0.125, T=1.0)
    fk = time_regularize(f, F)
    cs = c_star(TimeDensity.constant(g, 0.5), lambda_star(lam, 1), x.sup_norm())
    bundle = sample_bundle(0.0, x, TimeDensity.constant(g, 0.5), count=10, seed=2)
    for y in bundle.members:
        for tau in np.linspace(0.0, 1.0 - 1e-9, 9):
            val = np.linalg.norm(fk(float(tau), y, 0.0, 0.0))
            bound = cs.value_at(float(tau)) * (1.0 + y.sup_norm(float(tau)))
            assert val <= bound + 1e-9


def test_estimated_lipschitz_density_flags_ratio():
    g = _grid()
    members = [random_path(g, n=1, seed=s) for s in range(5)]
    est = estimate_lipschitz_density(
        lambda tau, z: 2.0 * float(z.at(tau)[0]), members, g
    )
    assert np.all(est.cell_values <= 2.0 + 1e-9)
    assert np.any(est.cell_values > 1.0)
