import math

import numpy as np
import pytest

from dynpath.errors import ESTIMATION_FAILED, DynPathError
from dynpath.models import (
    CumulativeCoefficients,
    EffectCurves,
    MediatorCoefficients,
    Schedule,
    StepFunction,
    VisitRegression,
)
from dynpath.schemas import Contrast
from dynpath.services.aalen_service import aalen_service
from dynpath.services.effects_service import effects_service
from dynpath.services.mediator_service import mediator_service
from dynpath.services.simulation_service import simulation_service

CONTRAST = Contrast(a=1, a_star=0)


def coefficients(jumps, mediator, treatment=None):
    zeros = np.zeros(len(jumps))
    return CumulativeCoefficients(
        baseline=StepFunction.from_increments(jumps, zeros),
        treatment=StepFunction.from_increments(jumps, zeros if treatment is None else treatment),
        mediator=StepFunction.from_increments(jumps, mediator),
        covariates=(),
        covariate_names=(),
    )


def slopes(*gammas, unavailable=()):
    visits = tuple(
        VisitRegression(index=i, time=float(i), survivors=10, available=False, reason="тест")
        if i in unavailable
        else VisitRegression(index=i, time=float(i), survivors=10, available=True, intercept=0.0, treatment=g)
        for i, g in enumerate(gammas)
    )
    return MediatorCoefficients(visits)


@pytest.fixture
def simulated_effects(three_visit_params):
    dataset = simulation_service.simulate_cohort(three_visit_params, 400, seed=12)
    cumcoef = aalen_service.fit_additive(dataset)
    medcoef = mediator_service.fit_marginal(dataset)
    return dataset, effects_service.cumulative_effects(cumcoef, medcoef, dataset.schedule, CONTRAST)


def test_indirect_effect_hand_example():
    effects = effects_service.cumulative_effects(
        coefficients([0.5, 1.0], [0.01, 0.02]), slopes(2.0), Schedule((0.0,)), CONTRAST
    )
    np.testing.assert_allclose(effects.chie.increments, [0.02, 0.04], atol=1e-15)
    assert effects.chie(1.0) == pytest.approx(0.06, abs=1e-15)


def test_zero_slope_gives_zero_indirect_effect():
    effects = effects_service.cumulative_effects(
        coefficients([0.5, 1.5], [0.3, -0.2]), slopes(0.0, 0.0), Schedule((0.0, 1.0)), CONTRAST
    )
    np.testing.assert_array_equal(effects.chie.values, [0.0, 0.0])


def test_increments_use_slope_of_current_visit():
    effects = effects_service.cumulative_effects(
        coefficients([0.5, 1.5], [0.1, 0.1]), slopes(1.0, 3.0), Schedule((0.0, 1.0)), CONTRAST
    )
    np.testing.assert_allclose(effects.chie.increments, [0.1, 0.3], atol=1e-15)


def test_unavailable_visit_fails_loudly():
    with pytest.raises(DynPathError) as excinfo:
        effects_service.cumulative_effects(
            coefficients([0.5, 1.5], [0.1, 0.1]), slopes(1.0, 3.0, unavailable=(1,)), Schedule((0.0, 1.0)), CONTRAST
        )
    assert excinfo.value.exit_code == ESTIMATION_FAILED


def test_total_is_sum_of_direct_and_indirect(simulated_effects):
    _, effects = simulated_effects
    np.testing.assert_allclose(effects.chte.values, effects.chde.values + effects.chie.values, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(effects.chte.jumps, effects.chie.jumps)


def test_survival_scale_identities(simulated_effects):
    _, effects = simulated_effects
    survival = effects_service.survival_effects(effects)
    np.testing.assert_allclose(survival.ste, survival.sde * survival.sie, rtol=0, atol=1e-12)
    np.testing.assert_allclose(survival.ste, np.exp(-effects.chte.values), rtol=0, atol=1e-12)


def test_survival_direct_effect_example():
    effects = effects_service.cumulative_effects(
        coefficients([2.0], [0.0], treatment=[0.1]), slopes(1.0), Schedule((0.0,)), CONTRAST
    )
    survival = effects_service.survival_effects(effects)
    assert survival.sde[0] == pytest.approx(math.exp(-0.1), abs=1e-12)
    assert survival.sde[0] == pytest.approx(0.904837, abs=1e-6)
    np.testing.assert_array_equal(survival.sie, [1.0])


def test_contrast_antisymmetry(simulated_effects):
    dataset, effects = simulated_effects
    cumcoef = aalen_service.fit_additive(dataset)
    medcoef = mediator_service.fit_marginal(dataset)
    swapped = effects_service.cumulative_effects(cumcoef, medcoef, dataset.schedule, CONTRAST.swapped())
    for name in ("chde", "chie", "chte"):
        np.testing.assert_array_equal(getattr(swapped, name).values, -getattr(effects, name).values)


def test_indirect_effect_invariant_to_mediator_scale(simulated_effects):
    dataset, effects = simulated_effects
    for k in (0.1, 10.0):
        rescaled = dataset.with_mediators(dataset.mediators * k)
        other = effects_service.cumulative_effects(
            aalen_service.fit_additive(rescaled), mediator_service.fit_marginal(rescaled), dataset.schedule, CONTRAST
        )
        np.testing.assert_allclose(other.chie.values, effects.chie.values, rtol=1e-9, atol=1e-12)


def test_measurement_error_example():
    jumps = [1.0]
    effects = EffectCurves(
        chde=StepFunction.from_values(jumps, [0.064]),
        chie=StepFunction.from_values(jumps, [0.036]),
        chte=StepFunction.from_values(jumps, [0.100]),
        contrast=CONTRAST,
    )
    corrected = effects_service.correct_measurement_error(effects, 0.72)
    assert corrected.chie(1.0) == pytest.approx(0.05, abs=1e-12)
    assert corrected.chde(1.0) == pytest.approx(0.05, abs=1e-12)
    assert corrected.kappa == 0.72
    assert effects_service.correct_measurement_error(effects, 1.0) is effects


@pytest.mark.parametrize("kappa", [0.1, 0.5, 0.72, 1.0])
def test_measurement_error_preserves_total(simulated_effects, kappa):
    _, effects = simulated_effects
    corrected = effects_service.correct_measurement_error(effects, kappa)
    np.testing.assert_array_equal(corrected.chte.values, effects.chte.values)
    np.testing.assert_allclose(corrected.chde.values + corrected.chie.values, effects.chte.values, atol=1e-12)
    np.testing.assert_allclose(corrected.chie.values, effects.chie.values / kappa, rtol=1e-15)


def test_measurement_error_rejects_invalid_kappa(simulated_effects):
    _, effects = simulated_effects
    for kappa in (0.0, -0.2, 1.5):
        with pytest.raises(DynPathError):
            effects_service.correct_measurement_error(effects, kappa)


def test_correct_mediator_curve():
    curve = StepFunction.from_increments([1.0, 2.0], [0.036, 0.036])
    corrected = effects_service.correct_mediator_curve(curve, 0.72)
    np.testing.assert_allclose(corrected.values, [0.05, 0.1], atol=1e-12)


def test_effect_slopes():
    curve = StepFunction.from_increments([1.0, 2.0], [0.5, 0.25])
    np.testing.assert_allclose(effects_service.effect_slopes(curve, [(0.0, 2.0), (1.0, 1.5)]), [0.375, 0.0])
    with pytest.raises(DynPathError):
        effects_service.effect_slopes(curve, [(2.0, 1.0)])


def test_curves_on_grid_before_first_jump():
    effects = effects_service.cumulative_effects(
        coefficients([0.5, 1.0], [0.01, 0.02], treatment=[0.1, 0.1]), slopes(2.0), Schedule((0.0,)), CONTRAST
    )
    curves = effects_service.curves_on_grid(effects, [0.0, 0.75, 5.0])
    np.testing.assert_allclose(curves["chde"], [0.0, 0.1, 0.2], atol=1e-15)
    assert curves["sie"][0] == 1.0


def test_effects_table_columns(simulated_effects):
    _, effects = simulated_effects
    plain = effects_service.effects_table(effects)
    assert list(plain.columns) == ["time", "chde", "chie", "chte", "sde", "sie", "ste"]
    table = effects_service.effects_table(effects, effects_service.correct_measurement_error(effects, 0.72))
    assert [c for c in table.columns if c.endswith("_corr")] == [
        "chde_corr", "chie_corr", "chte_corr", "sde_corr", "sie_corr", "ste_corr"
    ]
    np.testing.assert_array_equal(table["chte"], table["chte_corr"])


def test_effects_table_mediator_and_total_columns():
    cumcoef = coefficients([0.5, 1.0], [0.01, 0.02], treatment=[0.1, 0.1])
    effects = effects_service.cumulative_effects(cumcoef, slopes(2.0), Schedule((0.0,)), CONTRAST)
    total = StepFunction.from_increments(np.array([0.25, 1.0]), [0.05, 0.2])
    corrected = effects_service.correct_measurement_error(effects, 0.5)
    table = effects_service.effects_table(effects, corrected, mediator=cumcoef.mediator, total_without_mediator=total)
    np.testing.assert_allclose(table["chte_nomed"], [0.05, 0.25], atol=1e-15)
    np.testing.assert_allclose(table["mediator_coef"], [0.01, 0.03], atol=1e-15)
    np.testing.assert_allclose(table["mediator_coef_corr"], [0.02, 0.06], atol=1e-15)
    assert list(table.columns[7:10]) == ["chte_nomed", "mediator_coef", "mediator_surv"]
    np.testing.assert_allclose(table["mediator_surv"], np.exp([-0.01, -0.03]), rtol=1e-15)
    assert table.columns[-1] == "mediator_coef_corr"
