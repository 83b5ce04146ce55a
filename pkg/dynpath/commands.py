"""Обработчики подкоманд CLI dynpath."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from dynpath.errors import INVALID_INPUT, NOT_FOUND, DynPathError
from dynpath.models import CumulativeCoefficients, MediatorCoefficients, Schedule, StepFunction, VisitRegression
from dynpath.schemas import (
    BootstrapRequest,
    Contrast,
    CurveDocument,
    EffectsRequest,
    FitDocument,
    FitRequest,
    OracleRequest,
    Regime,
    SimulateRequest,
    SimulationParams,
    VisitDocument,
)
from dynpath.services.aalen_service import aalen_service
from dynpath.services.bootstrap_service import bootstrap_service
from dynpath.services.dataset_service import FLOAT_FORMAT, dataset_service
from dynpath.services.effects_service import effects_service
from dynpath.services.mediator_service import mediator_service
from dynpath.services.simulation_service import simulation_service

logger = logging.getLogger(__name__)

ORACLE_GRID_POINTS = 20
UNIT_CONTRAST = Contrast(a=1.0, a_star=0.0)


def simulate(payload: SimulateRequest) -> int:
    params = _params(payload.params, payload.preset)
    dataset = simulation_service.simulate_cohort(
        params, payload.n, payload.seed, payload.regime, workers=payload.workers
    )
    dataset_service.save_dataset(dataset, payload.out)
    logger.info("Когорта записана в %s", payload.out)
    return 0


def fit(payload: FitRequest) -> int:
    dataset = dataset_service.load_directory(payload.data, carry_forward=payload.carry_forward)
    cumcoef = aalen_service.fit_additive(dataset)
    medcoef = mediator_service.fit_marginal(dataset)
    try:
        without_mediator = aalen_service.total_effect_without_mediator(dataset, UNIT_CONTRAST)
    except DynPathError as exc:
        logger.warning("Модель без медиатора не оценена: %s", exc.detail)
        without_mediator = None
    document = fit_to_document(dataset.schedule, cumcoef, medcoef, without_mediator)
    Path(payload.out).write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(
        "Модель оценена: %d моментов событий, пропущено %d", len(cumcoef.event_times), cumcoef.skipped_events
    )
    if cumcoef.skipped_events:
        print(f"skipped_events={cumcoef.skipped_events}", file=sys.stderr)
    return 0


def effects(payload: EffectsRequest) -> int:
    document = _read_fit(payload.fit)
    schedule, cumcoef, medcoef = fit_from_document(document)
    curves = effects_service.cumulative_effects(cumcoef, medcoef, schedule, payload.contrast)
    corrected = None
    if payload.kappa is not None:
        corrected = effects_service.correct_measurement_error(curves, payload.kappa)
    total = None
    if document.treatment_without_mediator is not None:
        stored = document.treatment_without_mediator
        total = StepFunction.from_increments(
            np.asarray(stored.jumps, dtype=float), stored.increments
        ).scaled(payload.contrast.difference)
    table = effects_service.effects_table(
        curves, corrected, mediator=cumcoef.mediator, total_without_mediator=total
    )
    _write_table(table, payload.out)
    return 0


def bootstrap(payload: BootstrapRequest) -> int:
    dataset = dataset_service.load_directory(payload.data, carry_forward=payload.carry_forward)
    bands = bootstrap_service.bootstrap_bands(
        dataset,
        payload.contrast,
        payload.replicates,
        payload.seed,
        grid=payload.grid,
        level=payload.level,
        kappa=payload.kappa,
        workers=payload.workers,
    )
    if bands.failed_replicates:
        print(f"failed_replicates={bands.failed_replicates}", file=sys.stderr)
    _write_table(bootstrap_service.bands_table(bands), payload.out)
    if payload.gamma_out is not None:
        _write_table(bootstrap_service.gamma_table(bands), payload.gamma_out)
    return 0


def oracle(payload: OracleRequest) -> int:
    params = _params(payload.params, payload.preset)
    if payload.grid is not None:
        grid = np.asarray(payload.grid, dtype=float)
    else:
        grid = np.linspace(0.0, params.censoring.t_max, ORACLE_GRID_POINTS + 1)
    exact = simulation_service.closed_form_effects(params, grid)

    a, a_star = params.contrast.a, params.contrast.a_star
    regimes = {
        "aa": Regime.intervened(a, a),
        "a_astar": Regime.intervened(a, a_star),
        "astar_astar": Regime.intervened(a_star, a_star),
    }
    survival = {
        name: simulation_service.mc_survival(params, regime, payload.n_mc, payload.seed, grid, payload.workers)
        for name, regime in regimes.items()
    }
    mc_sie, mc_sie_se = _ratio(survival["aa"], survival["a_astar"])
    mc_sde, mc_sde_se = _ratio(survival["a_astar"], survival["astar_astar"])
    frame = pd.DataFrame(
        {
            "time": grid,
            "chde": exact.chde,
            "chie": exact.chie,
            "chte": exact.chte,
            "sde": exact.sde,
            "sie": exact.sie,
            "ste": exact.ste,
            "mc_sde": mc_sde,
            "mc_sde_se": mc_sde_se,
            "mc_sie": mc_sie,
            "mc_sie_se": mc_sie_se,
        }
    )
    _write_table(frame, payload.out)
    return 0


# --- Сериализация результатов оценивания ---


def fit_to_document(
        schedule: Schedule,
        cumcoef: CumulativeCoefficients,
        medcoef: MediatorCoefficients,
        without_mediator: StepFunction | None = None,
) -> FitDocument:
    return FitDocument(
        schedule=list(schedule.times),
        covariate_names=list(cumcoef.covariate_names),
        event_times=cumcoef.event_times.tolist(),
        increments={name: curve.increments.tolist() for name, curve in cumcoef.named().items()},
        skipped_events=cumcoef.skipped_events,
        mediator=[
            VisitDocument(
                index=v.index,
                time=v.time,
                survivors=v.survivors,
                available=v.available,
                intercept=v.intercept if v.available else None,
                treatment=v.treatment if v.available else None,
                covariates=list(v.covariates),
                residual_variance=v.residual_variance if v.available else None,
                treatment_se=v.treatment_se if v.available else None,
                reason=v.reason,
            )
            for v in medcoef.visits
        ],
        treatment_without_mediator=(
            CurveDocument(jumps=without_mediator.jumps.tolist(), increments=without_mediator.increments.tolist())
            if without_mediator is not None
            else None
        ),
    )


def fit_from_document(document: FitDocument) -> tuple[Schedule, CumulativeCoefficients, MediatorCoefficients]:
    schedule = Schedule(tuple(document.schedule))
    jumps = np.asarray(document.event_times, dtype=float)
    increments = document.increments
    for name in ("baseline", "treatment", "mediator"):
        if name not in increments:
            raise DynPathError(INVALID_INPUT, f"В документе оценки нет кривой {name}")

    def curve(name: str) -> StepFunction:
        return StepFunction.from_increments(jumps, increments[name])

    cumcoef = CumulativeCoefficients(
        baseline=curve("baseline"),
        treatment=curve("treatment"),
        mediator=curve("mediator"),
        covariates=tuple(curve(f"covariate:{name}") for name in document.covariate_names),
        covariate_names=tuple(document.covariate_names),
        skipped_events=document.skipped_events,
    )
    visits = tuple(
        VisitRegression(
            index=v.index,
            time=v.time,
            survivors=v.survivors,
            available=v.available,
            intercept=v.intercept if v.intercept is not None else float("nan"),
            treatment=v.treatment if v.treatment is not None else float("nan"),
            covariates=tuple(v.covariates),
            residual_variance=v.residual_variance if v.residual_variance is not None else float("nan"),
            treatment_se=v.treatment_se if v.treatment_se is not None else float("nan"),
            reason=v.reason,
        )
        for v in document.mediator
    )
    return schedule, cumcoef, MediatorCoefficients(visits, tuple(document.covariate_names))


def _read_fit(path: Path) -> FitDocument:
    path = Path(path)
    if not path.is_file():
        raise DynPathError(NOT_FOUND, f"Файл оценки не найден: {path}")
    try:
        return FitDocument.model_validate_json(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise DynPathError(INVALID_INPUT, f"Некорректный файл оценки {path}: {exc}") from exc


def _params(path: Path | None, preset: str | None) -> SimulationParams:
    if preset == "sprint":
        return simulation_service.sprint_like_params()
    return simulation_service.load_params(path)


def _ratio(numerator, denominator) -> tuple[np.ndarray, np.ndarray]:
    """Отношение двух МК выживаемостей и его стандартная ошибка (дельта-метод)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = numerator.survival / denominator.survival
        relative = np.sqrt(
            (numerator.se / numerator.survival) ** 2 + (denominator.se / denominator.survival) ** 2
        )
    return ratio, ratio * relative


def _write_table(frame: pd.DataFrame, out: Path | None) -> None:
    if out is None:
        frame.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return
    out = Path(out)
    if out.parent and not out.parent.exists():
        raise DynPathError(NOT_FOUND, f"Каталог для вывода не найден: {out.parent}")
    frame.to_csv(out, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
