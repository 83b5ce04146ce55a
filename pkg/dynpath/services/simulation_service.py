"""
Сервис симуляции и Монте-Карло оракула.

Генерирует когорты из структурной модели медиатора и аддитивной модели
рисков в наблюдательном режиме или при раздельном вмешательстве
do(A^D = a_D, A^M = a_M), оценивает медиационную g-формулу прямым
моделированием и считает точные эффекты по известным параметрам.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dynpath.core import STREAM_NOISE, STREAM_SIMULATION, stream
from dynpath.errors import ESTIMATION_FAILED, INVALID_INPUT, NOT_FOUND, DynPathError
from dynpath.models import ClosedFormEffects, Dataset, MonteCarloSurvival, Schedule, SubjectRecord
from dynpath.schemas import (
    CensoringSpec,
    CovariateLaw,
    HazardPaths,
    Regime,
    SimulationParams,
    StructuralModel,
)
from dynpath.services.mediator_service import mediator_service

logger = logging.getLogger(__name__)

MAX_CLAMP_RATE = 0.001
CHUNK_SIZE = 4096


@dataclass(frozen=True, eq=False)
class _Draws:
    """Случайные величины когорты; у каждого субъекта фиксированное число величин."""

    treatment_u: np.ndarray
    baseline: np.ndarray
    noise: np.ndarray
    exposure: np.ndarray
    censoring: np.ndarray


@dataclass(frozen=True, eq=False)
class _Latent:
    treatment: np.ndarray
    baseline: np.ndarray
    mediators: np.ndarray
    event_time: np.ndarray
    censor_time: np.ndarray
    clamp_rate: float


class SimulationService:
    """Сервис для генерации когорт и вычисления эффектов-оракулов."""

    def load_params(self, path: str | Path) -> SimulationParams:
        path = Path(path)
        if not path.is_file():
            raise DynPathError(NOT_FOUND, f"Файл параметров не найден: {path}")
        try:
            return SimulationParams.model_validate_json(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise DynPathError(INVALID_INPUT, f"Некорректные параметры {path}: {exc}") from exc

    def simulate_cohort(
            self,
            params: SimulationParams,
            n: int,
            seed: int,
            regime: Regime | None = None,
            workers: int = 1,
    ) -> Dataset:
        """
        Симуляция когорты.

        На каждом визите tᵢ, достигнутом живым, Mᵢ = λᵢa_M + δᵢ′C + Σ_{k<i} bᵢₖMₖ + εᵢ;
        на интервале [tᵢ, tᵢ₊₁) риск постоянен: μ + α·a_D + β·Mᵢ + ρ′C. Остаточное время
        до события экспоненциальное. Цензурирование в t_max или в независимый
        экспоненциальный момент.

        Аргументы:
            params (SimulationParams): Параметры генеративной модели
            n (int): Число субъектов
            seed (int): Зерно
            regime (Regime | None): Режим; по умолчанию наблюдательный
            workers (int): Число потоков генерации случайных величин

        Возвращает:
            Dataset: Когорта в строгом формате (медиатор на всех визитах ≤ T̃)
        """
        regime = regime or Regime.observational()
        if n < 1:
            raise DynPathError(INVALID_INPUT, "Число субъектов должно быть ≥ 1")
        latent = self._latent(params, n, seed, regime, workers)
        if latent.clamp_rate > MAX_CLAMP_RATE:
            logger.warning(
                "Доля интервалов с отрицательным риском %.4g превышает %.4g: параметры непригодны для оракула",
                latent.clamp_rate,
                MAX_CLAMP_RATE,
            )

        followup = np.minimum(latent.event_time, latent.censor_time)
        event = latent.event_time <= latent.censor_time
        schedule = Schedule(tuple(params.schedule))
        visits = np.searchsorted(schedule.array, followup, side="right")
        subjects = tuple(
            SubjectRecord(
                id=f"s{i}",
                treatment=float(latent.treatment[i]),
                baseline=tuple(float(c) for c in latent.baseline[i]),
                mediators=tuple(float(m) for m in latent.mediators[i, : visits[i]]),
                followup=float(followup[i]),
                event=bool(event[i]),
            )
            for i in range(n)
        )
        dataset = Dataset(schedule, subjects, params.covariate_names)
        logger.info("Симулировано субъектов: %d, событий: %d", n, int(event.sum()))
        return dataset

    def mc_survival(
            self,
            params: SimulationParams,
            regime: Regime,
            n_mc: int,
            seed: int,
            grid,
            workers: int = 1,
    ) -> MonteCarloSurvival:
        """
        Выживаемость под режимом прямым моделированием без цензурирования.

        В наблюдательном режиме это g-формула, а при раздельном вмешательстве это
        медиационная g-формула.

        Выбрасывает:
            DynPathError: n_mc < 100 или доля обрезанных отрицательных рисков > 0.1%
        """
        if n_mc < 100:
            raise DynPathError(INVALID_INPUT, "n_mc должно быть ≥ 100")
        grid = np.asarray(grid, dtype=float).reshape(-1)
        latent = self._latent(params, n_mc, seed, regime, workers)
        if latent.clamp_rate > MAX_CLAMP_RATE:
            raise DynPathError(
                ESTIMATION_FAILED,
                f"Доля интервалов с отрицательным риском {latent.clamp_rate:.4g} больше {MAX_CLAMP_RATE}",
            )
        event_time = np.sort(latent.event_time)
        alive = n_mc - np.searchsorted(event_time, grid, side="right")
        survival = alive / n_mc
        se = np.sqrt(survival * (1.0 - survival) / n_mc)
        return MonteCarloSurvival(grid=grid, survival=survival, se=se, clamp_rate=latent.clamp_rate)

    def closed_form_effects(self, params: SimulationParams, grid) -> ClosedFormEffects:
        """
        Точные эффекты: CHDE(t) = (a−a*)∫α, CHIE(t) = (a−a*)∫β_s γ_{r(s)} ds,
        интегралы кусочно-постоянных функций считаются суммой по интервалам расписания.
        """
        grid = np.asarray(grid, dtype=float).reshape(-1)
        if np.any(grid < 0):
            raise DynPathError(INVALID_INPUT, "Времена сетки должны быть неотрицательными")
        _, alpha, beta, _ = params.hazard_arrays()
        gamma = mediator_service.gamma_from_structural(params.lambdas(), params.b_matrix())
        diff = params.contrast.difference
        exposure = self._interval_exposure(np.asarray(params.schedule, dtype=float), grid)
        chde = diff * (exposure @ alpha)
        chie = diff * (exposure @ (beta * gamma))
        chte = chde + chie
        sde = np.exp(-chde)
        sie = np.exp(-chie)
        return ClosedFormEffects(
            grid=grid, gamma=gamma, chde=chde, chie=chie, chte=chte, sde=sde, sie=sie, ste=sde * sie
        )

    def add_noise(self, dataset: Dataset, kappa: float, seed: int) -> Dataset:
        """
        Добавление ошибки измерения M̃ = M + ε, ε ~ N(0, Var(M)(1−κ)/κ) по каждому визиту.

        Var(M) здесь эмпирическая дисперсия медиатора среди наблюдаемых на визите.

        Выбрасывает:
            DynPathError: κ вне (0, 1) или нулевая дисперсия на каком-то визите
        """
        if not 0 < kappa < 1:
            raise DynPathError(INVALID_INPUT, f"κ должно лежать в (0, 1), получено {kappa}")
        mediators = dataset.mediators
        scales = []
        for i in range(len(dataset.schedule)):
            observed = mediators[:, i][~np.isnan(mediators[:, i])]
            variance = float(np.var(observed, ddof=1)) if observed.size > 1 else 0.0
            if variance <= 0:
                raise DynPathError(INVALID_INPUT, f"Визит {i}: нулевая дисперсия медиатора, шум не определён")
            scales.append(np.sqrt(variance * (1.0 - kappa) / kappa))
        size = len(dataset.schedule)
        noise = np.vstack([stream(seed, STREAM_NOISE, row).standard_normal(size) for row in range(dataset.n)])
        noisy = mediators + noise * np.asarray(scales)
        return dataset.with_mediators(noisy)

    def sprint_like_params(self) -> SimulationParams:
        """
        Параметры, имитирующие основные черты исследования SPRINT.

        21 визит: ежемесячно первые три месяца, затем ежеквартально до 4.5 лет.
        Медиатор: снижение диастолического давления (в единицах 10 мм рт. ст.),
        интенсивное лечение снижает его постепенно; события редки.
        """
        schedule = [0.0, 1 / 12, 2 / 12, 3 / 12] + [0.25 + 0.25 * j for j in range(1, 18)]
        size = len(schedule)
        lambdas = [0.0, 0.3, 0.35] + [0.4] * (size - 3)
        b_rows = [[0.0] * i for i in range(size)]
        for i in range(1, size):
            b_rows[i][i - 1] = 0.5
        return SimulationParams(
            schedule=schedule,
            hazard=HazardPaths(baseline=0.004, treatment=0.004, mediator=0.002, covariates=[0.004, 0.006]),
            structural=StructuralModel(
                lambdas=lambdas,
                deltas=[[0.2, 0.0] for _ in range(size)],
                b=b_rows,
                sigma=0.3,
            ),
            baseline=[
                CovariateLaw(name="age", kind="uniform", low=0.0, high=1.0),
                CovariateLaw(name="ckd", kind="bernoulli", p=0.3),
            ],
            treatment_probability=0.5,
            censoring=CensoringSpec(t_max=4.5, rate=0.05),
        )

    # --- Внутренние шаги симуляции ---

    def _latent(
            self,
            params: SimulationParams,
            n: int,
            seed: int,
            regime: Regime,
            workers: int,
    ) -> _Latent:
        draws = self._draws(params, n, seed, workers)
        times = np.asarray(params.schedule, dtype=float)
        size = times.size
        mu, alpha, beta, rho = params.hazard_arrays()
        lambdas, deltas, b_matrix, sigmas = params.lambdas(), params.deltas(), params.b_matrix(), params.sigmas()

        drawn = (draws.treatment_u < params.treatment_probability).astype(float)
        if regime.kind == "observational":
            a_direct = a_mediator = drawn
        else:
            a_direct = np.full(n, float(regime.a_direct))
            a_mediator = np.full(n, float(regime.a_mediator))

        baseline = draws.baseline
        mediators = np.zeros((n, size))
        for i in range(size):
            mediators[:, i] = (
                lambdas[i] * a_mediator
                + baseline @ deltas[i]
                + mediators[:, :i] @ b_matrix[i, :i]
                + sigmas[i] * draws.noise[:, i]
            )

        event_time = np.full(n, np.inf)
        clamps = 0
        exposures = 0
        for k in range(size):
            alive = np.isinf(event_time)
            if not alive.any():
                break
            hazard = mu[k] + alpha[k] * a_direct + beta[k] * mediators[:, k] + baseline @ rho[k]
            negative = alive & (hazard < 0)
            clamps += int(negative.sum())
            exposures += int(alive.sum())
            hazard = np.maximum(hazard, 0.0)
            end = times[k + 1] if k + 1 < size else np.inf
            with np.errstate(divide="ignore", invalid="ignore"):
                candidate = times[k] + draws.exposure[:, k] / hazard
            hit = alive & (candidate < end)
            event_time[hit] = candidate[hit]

        censor_time = np.full(n, params.censoring.t_max)
        if params.censoring.rate > 0:
            censor_time = np.minimum(censor_time, draws.censoring / params.censoring.rate)
        if clamps:
            logger.debug("Обрезано отрицательных рисков: %d из %d интервалов", clamps, exposures)
        return _Latent(
            treatment=a_direct,
            baseline=baseline,
            mediators=mediators,
            event_time=event_time,
            censor_time=censor_time,
            clamp_rate=clamps / exposures if exposures else 0.0,
        )

    def _draws(self, params: SimulationParams, n: int, seed: int, workers: int) -> _Draws:
        """Случайные величины по потокам (seed, субъект); результат не зависит от числа потоков."""
        size = len(params.schedule)
        laws = params.baseline
        chunks = [range(start, min(start + CHUNK_SIZE, n)) for start in range(0, n, CHUNK_SIZE)]

        def run(chunk: range) -> list[tuple]:
            rows = []
            for i in chunk:
                rng = stream(seed, STREAM_SIMULATION, i)
                u = rng.random()
                covariates = [self._draw_covariate(rng, law) for law in laws]
                rows.append(
                    (u, covariates, rng.standard_normal(size), rng.standard_exponential(size),
                     rng.standard_exponential())
                )
            return rows

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(run, chunks))
        else:
            parts = [run(chunk) for chunk in chunks]
        rows = [row for part in parts for row in part]
        return _Draws(
            treatment_u=np.array([row[0] for row in rows]),
            baseline=np.array([row[1] for row in rows], dtype=float).reshape(n, len(laws)),
            noise=np.vstack([row[2] for row in rows]),
            exposure=np.vstack([row[3] for row in rows]),
            censoring=np.array([row[4] for row in rows]),
        )

    def _draw_covariate(self, rng: np.random.Generator, law: CovariateLaw) -> float:
        if law.kind == "normal":
            return float(rng.normal(law.mean, law.sd))
        if law.kind == "bernoulli":
            return float(rng.random() < law.p)
        return float(rng.uniform(law.low, law.high))

    def _interval_exposure(self, times: np.ndarray, grid: np.ndarray) -> np.ndarray:
        """Матрица длин пересечений [0, t] с интервалами [t_k, t_{k+1}), форма len(grid) × (K+1)."""
        ends = np.append(times[1:], np.inf)
        clipped = np.minimum(grid[:, None], ends[None, :])
        return np.maximum(clipped - times[None, :], 0.0)


# Экземпляр сервиса для использования в приложении
simulation_service = SimulationService()
