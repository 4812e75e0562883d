import numpy as np
import pytest

from qbgk.discrete import fit_inter_discrete, fit_intra_discrete
from qbgk.distributions import (
    MomentumGrid,
    discrete_moments,
    eval_equilibrium,
    moment_sums,
)
from qbgk.equilibrium import MixtureProblem, SpeciesMoments, solve_inter, solve_intra


def _grid_moments(vals, grid, m):
    return SpeciesMoments(*moment_sums(vals, grid, m))


@pytest.mark.parametrize("tau, c", [(1, -2.0), (1, 1.0), (-1, 0.4)])
def test_intra_fit_matches_grid_moments(tau, c):
    m = 1.5
    grid = MomentumGrid(6.0, 12)  # coarse on purpose: continuum coefficients are off
    rng = np.random.default_rng(3)
    base = eval_equilibrium(0.9, (0.2, 0.0, -0.1), c, m, tau, grid).values
    vals = base * (1 + 0.1 * rng.random(grid.shape))
    if tau == 1:
        vals = np.minimum(vals, 0.99)
    target = _grid_moments(vals, grid, m)
    fit = fit_intra_discrete(target, m, tau, grid, solve_intra(m, tau, target))
    got = discrete_moments(eval_equilibrium(fit.a, fit.b, fit.c, m, tau, grid), grid)
    assert got.N == pytest.approx(target.N, rel=1e-13)
    assert got.E == pytest.approx(target.E, rel=1e-13)
    assert np.allclose(got.P, target.P, rtol=0, atol=1e-13 * target.N)


@pytest.mark.parametrize("pair", [(1, 1), (1, -1), (-1, -1)])
def test_inter_fit_matches_grid_constraints(pair):
    t1, t2 = pair
    m1, m2 = 1.0, 2.0
    grid = MomentumGrid(7.0, 12)
    v1 = eval_equilibrium(1.0, (0.3, 0, 0), -0.5 if t1 == 1 else 0.5, m1, t1, grid).values
    v2 = eval_equilibrium(1.4, (-0.2, 0.1, 0), 1.0, m2, t2, grid).values
    mom1, mom2 = _grid_moments(v1, grid, m1), _grid_moments(v2, grid, m2)
    guess = solve_inter(MixtureProblem(m1, m2, t1, t2, mom1, mom2))
    fit = fit_inter_discrete(mom1, mom2, m1, m2, t1, t2, grid, guess)
    g1 = discrete_moments(eval_equilibrium(fit.a, fit.b, fit.c12, m1, t1, grid), grid)
    g2 = discrete_moments(eval_equilibrium(fit.a, fit.b, fit.c21, m2, t2, grid), grid)
    assert g1.N == pytest.approx(mom1.N, rel=1e-13)
    assert g2.N == pytest.approx(mom2.N, rel=1e-13)
    assert g1.E + g2.E == pytest.approx(mom1.E + mom2.E, rel=1e-13)
    assert np.allclose(g1.P + g2.P, mom1.P + mom2.P, rtol=0, atol=1e-13)
    # the grid correction is small compared with the coefficients themselves
    assert fit.a == pytest.approx(guess.a, rel=0.1)
