"""Статистические проверки на симулированных когортах с известными параметрами."""

import numpy as np
import pytest

from dynpath.commands import _ratio
from dynpath.schemas import Contrast, CovariateLaw, Regime
from dynpath.services.aalen_service import aalen_service
from dynpath.services.bootstrap_service import bootstrap_service
from dynpath.services.effects_service import effects_service
from dynpath.services.mediator_service import mediator_service
from dynpath.services.simulation_service import simulation_service

from conftest import make_params

pytestmark = pytest.mark.slow

CONTRAST = Contrast(a=1, a_star=0)


def estimated_effects(dataset):
    cumcoef = aalen_service.fit_additive(dataset)
    medcoef = mediator_service.fit_marginal(dataset)
    return effects_service.cumulative_effects(cumcoef, medcoef, dataset.schedule, CONTRAST)


def test_parameter_recovery():
    # n = 20 000: при 5000 допуск ±0.012 для ĈHIE около одной стандартной ошибки (DESIGN.md, решение 10);
    # при σ = 0.6 риск μ + βM остаётся положительным
    params = make_params(mu=0.05, alpha=0.10, beta=0.02, lambdas=[1.5], sigma=0.6, t_max=2.0)
    dataset = simulation_service.simulate_cohort(params, 20_000, seed=2024)
    effects = estimated_effects(dataset)
    window = [(0.0, 2.0)]
    assert abs(effects_service.effect_slopes(effects.chde, window)[0] - 0.10) < 0.03
    assert abs(effects_service.effect_slopes(effects.chie, window)[0] - 0.03) < 0.012


def test_closed_form_matches_mediational_g_formula(three_visit_params):
    grid = np.array([0.5, 1.0, 2.0])
    exact = simulation_service.closed_form_effects(three_visit_params, grid)

    def survival(a_direct, a_mediator):
        regime = Regime.intervened(a_direct, a_mediator)
        return simulation_service.mc_survival(three_visit_params, regime, 100_000, seed=77, grid=grid, workers=4)

    both, direct_only, neither = survival(1.0, 1.0), survival(1.0, 0.0), survival(0.0, 0.0)
    assert max(both.clamp_rate, direct_only.clamp_rate, neither.clamp_rate) == 0.0
    sie, sie_se = _ratio(both, direct_only)
    sde, sde_se = _ratio(direct_only, neither)
    assert np.all(np.abs(exact.sie - sie) < 3 * sie_se)
    assert np.all(np.abs(exact.sde - sde) < 3 * sde_se)


def test_measurement_error_round_trip():
    params = make_params(mu=0.5, alpha=0.1, beta=0.1, lambdas=[0.5], sigma=1.0, t_max=2.0)
    dataset = simulation_service.simulate_cohort(params, 20_000, seed=72)
    clean = estimated_effects(dataset).chie(2.0)

    noisy_effects = estimated_effects(simulation_service.add_noise(dataset, 0.72, seed=72))
    corrected = effects_service.correct_measurement_error(noisy_effects, 0.72).chie(2.0)

    assert noisy_effects.chie(2.0) < clean
    assert abs(corrected - clean) / abs(clean) < 0.10


def test_marginal_slopes_consistent_with_structural_model(three_visit_params):
    dataset = simulation_service.simulate_cohort(three_visit_params, 20_000, seed=41)
    truth = mediator_service.gamma_from_structural(three_visit_params.lambdas(), three_visit_params.b_matrix())
    marginal = mediator_service.fit_marginal(dataset)
    se = np.array([visit.treatment_se for visit in marginal.visits])
    assert np.all(np.abs(marginal.gammas() - truth) < 3 * se)

    structural = mediator_service.fit_sequential(dataset)
    np.testing.assert_allclose(structural.lambdas(), three_visit_params.lambdas(), atol=0.1)
    np.testing.assert_allclose(structural.b_matrix(), three_visit_params.b_matrix(), atol=0.1)


def test_bootstrap_coverage(recovery_params):
    truth = simulation_service.closed_form_effects(recovery_params, [1.0]).chte[0]
    covered = 0
    for repetition in range(100):
        dataset = simulation_service.simulate_cohort(recovery_params, 1000, seed=10_000 + repetition)
        bands = bootstrap_service.bootstrap_bands(dataset, CONTRAST, 200, seed=repetition, grid=[1.0], workers=4)
        band = bands.curves["chte"]
        covered += int(band.lower[0] <= truth <= band.upper[0])
    assert 88 <= covered <= 100


def test_covariates_stay_independent_among_survivors():
    laws = [
        CovariateLaw(name="x1", kind="uniform", low=0.0, high=1.0),
        CovariateLaw(name="x2", kind="uniform", low=0.0, high=1.0),
    ]
    params = make_params(mu=0.2, rho=[1.0, 1.0], baseline=laws, t_max=2.0)
    passed = 0
    for repetition in range(100):
        dataset = simulation_service.simulate_cohort(params, 2000, seed=500 + repetition)
        survivors = dataset.followup > 1.0
        assert survivors.mean() <= 0.5
        x = dataset.baseline[survivors]
        correlation = np.corrcoef(x[:, 0], x[:, 1])[0, 1]
        passed += int(abs(correlation) < 3 / np.sqrt(survivors.sum()))
    assert passed >= 95


def test_total_without_mediator_agrees_with_decomposition(recovery_params):
    # без взаимодействий A не меняет закон шума медиатора среди выживших,
    # поэтому модель без медиатора оценивает тот же общий эффект (α + βλ)t
    dataset = simulation_service.simulate_cohort(recovery_params, 20_000, seed=31)
    total = estimated_effects(dataset).chte(2.0)
    without_mediator = aalen_service.total_effect_without_mediator(dataset, CONTRAST)(2.0)
    assert abs(without_mediator - total) < 0.03
    assert abs(without_mediator - 0.26) < 0.05
