import numpy as np
import pytest
import sympy as sp

from oracles import nise_grid_search

from nise.errors import ConfigError, UnstableSystemError
from nise.estimators import fit
from nise.montecarlo import (
    SyntheticDGP,
    experiment,
    nise_plim,
    ols_plim,
    simulate,
    simulate_with_disturbances,
)


def _symbolic_ols_plim():
    g, b, f, s, s1, s2, r = sp.symbols("g b f s s1 s2 r", real=True)
    A = sp.Matrix([[1, -g], [-f, 1]])
    Ainv = A.inv()
    load = Ainv * sp.Matrix([[b, 0], [0, s]])
    Su = sp.Matrix([[s1**2, r * s1 * s2], [r * s1 * s2, s2**2]])
    Syy = load * load.T + Ainv * Su * Ainv.T
    # regress y1 on (y2, x); cov(y2, x) = load[1, 0], cov(y1, x) = load[0, 0]
    M = sp.Matrix([[Syy[1, 1], load[1, 0]], [load[1, 0], 1]])
    v = sp.Matrix([Syy[1, 0], load[0, 0]])
    coef = sp.simplify(M.LUsolve(v)[0])
    return sp.lambdify((g, b, f, s, s1, s2, r), coef)


@pytest.mark.parametrize(
    "params",
    [(-1.0, 1.0, 0.5, 1.0, 1.0, 1.0, 0.5), (0.3, -2.0, 0.8, 0.5, 2.0, 0.7, -0.3),
     (-0.5, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0)],
)
def test_ols_plim_matches_symbolic(params):
    g, b, f, s, s1, s2, r = params
    dgp = SyntheticDGP(g, b, f, s, (s1, s2), r)
    assert ols_plim(dgp) == pytest.approx(_symbolic_ols_plim()(*params), rel=1e-10)


def test_reduced_form_satisfies_structure():
    dgp = SyntheticDGP()
    d, u = simulate_with_disturbances(dgp, 500, seed=3)
    y1, y2, x, z = d.Y[:, 0], d.Y[:, 1], d.X[:, 0], d.Z[:, 0]
    np.testing.assert_allclose(y1, dgp.gamma_true * y2 + dgp.beta_true * x + u[:, 0], atol=1e-10)
    np.testing.assert_allclose(y2, dgp.feedback * y1 + dgp.instrument_strength * z + u[:, 1],
                               atol=1e-10)


def test_simulation_is_seeded():
    a = simulate(SyntheticDGP(), 50, [1, 2, 3])
    b = simulate(SyntheticDGP(), 50, [1, 2, 3])
    assert a.Y.tobytes() == b.Y.tobytes()


def test_no_simultaneity_means_ols_unbiased():
    dgp = SyntheticDGP(feedback=0.0, error_corr=0.0)
    assert ols_plim(dgp) == pytest.approx(dgp.gamma_true, abs=1e-12)
    cells = experiment(dgp, [2000], reps=100, seed=4, methods=("ols",))
    assert abs(cells[0].mean_bias) < 0.01


def test_ols_inconsistent_under_simultaneity():
    dgp = SyntheticDGP()
    assert abs(ols_plim(dgp) - dgp.gamma_true) > 0.1


def test_tsls_consistent():
    dgp = SyntheticDGP()
    cells = experiment(dgp, [20000], reps=100, seed=1, methods=("tsls",))
    assert cells[0].median_abs_error < 0.02


def test_nise_consistent_without_error_correlation():
    dgp = SyntheticDGP(error_corr=0.0)
    assert nise_plim(dgp) == pytest.approx(dgp.gamma_true, abs=1e-12)
    cells = experiment(dgp, [20000], reps=100, seed=2, methods=("nise",))
    assert cells[0].median_abs_error < 0.02


def test_nise_converges_to_population_limit():
    dgp = SyntheticDGP()
    plim = nise_plim(dgp)
    draws = [fit(simulate(dgp, 100_000, [9, r]), "nise")["y2"] for r in range(5)]
    assert np.median(draws) == pytest.approx(plim, abs=0.01)


def test_nise_and_ols_limits_coincide_without_feedback():
    dgp = SyntheticDGP(feedback=0.0, error_corr=0.3)
    assert nise_plim(dgp) == pytest.approx(ols_plim(dgp), abs=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_nise_agrees_with_grid_oracle_on_random_instances(seed):
    rng = np.random.default_rng(1000 + seed)
    dgp = SyntheticDGP(
        gamma_true=rng.uniform(-1.5, 1.5),
        beta_true=rng.uniform(0.5, 2),
        feedback=rng.uniform(-0.5, 0.5),
        instrument_strength=rng.uniform(0.5, 2),
        error_corr=rng.uniform(-0.8, 0.8),
    )
    d = simulate(dgp, 200, seed)
    oracle = nise_grid_search(d.Y, d.X)
    out = fit(d, "nise")
    assert out.diagnostics["residual_ss"] == pytest.approx(oracle["rss"], rel=1e-6, abs=1e-12)
    assert out["y2"] == pytest.approx(oracle["gamma"], rel=1e-3, abs=1e-3)


def test_experiment_cells_shape():
    cells = experiment(SyntheticDGP(), [100, 200], reps=100, seed=0)
    assert [(c.n, c.estimator) for c in cells] == [
        (100, "OLS"), (100, "TSLS"), (100, "NISE"), (200, "OLS"), (200, "TSLS"), (200, "NISE")
    ]
    assert all(c.reps == 100 and c.rmse >= abs(c.mean_bias) for c in cells)


def test_experiment_is_reproducible():
    a = experiment(SyntheticDGP(), [100], reps=100, seed=5, methods=("nise",))
    b = experiment(SyntheticDGP(), [100], reps=100, seed=5, methods=("nise",))
    assert a == b


def test_too_few_reps():
    with pytest.raises(ConfigError):
        experiment(SyntheticDGP(), [100], reps=1)


@pytest.mark.parametrize("kwargs", [
    {"instrument_strength": 0.0}, {"error_corr": 1.0}, {"noise_sd": (1.0, 0.0)},
])
def test_invalid_dgp(kwargs):
    with pytest.raises(ConfigError):
        SyntheticDGP(**kwargs)


def test_unstable_dgp():
    with pytest.raises(UnstableSystemError):
        SyntheticDGP(gamma_true=2.0, feedback=0.5)
