"""
Сервис аддитивной модели рисков.

Оценивание кумулятивных коэффициентов методом наименьших квадратов
в каждый момент события: приращение dB(t) = (X′X)⁻¹X′dN(t) по множеству риска.
"""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from dynpath.core import least_squares, mediator_index
from dynpath.errors import ESTIMATION_FAILED, INVALID_INPUT, DynPathError
from dynpath.models import CumulativeCoefficients, Dataset, StepFunction, SubjectRecord
from dynpath.schemas import Contrast

logger = logging.getLogger(__name__)


class AalenService:
    """Сервис для оценивания аддитивной модели Аалена и оценки Нельсона–Аалена."""

    def fit_additive(
            self,
            dataset: Dataset,
            treatment: bool = True,
            mediator: bool = True,
            covariates: bool = True,
            log_level: int = logging.WARNING,
    ) -> CumulativeCoefficients:
        """
        Оценка кумулятивных коэффициентов μ̂₀(t), Â(t), B̂(t), R̂(t).

        Строка дизайна для субъекта в риске в момент t: (1, a, M_{r(t)}, c′).
        Отдельные столбцы можно отключить, например для модели без медиатора
        или модели только со свободным членом.

        Аргументы:
            dataset (Dataset): Когорта
            treatment (bool): Включать ли лечение
            mediator (bool): Включать ли последнее значение медиатора
            covariates (bool): Включать ли базовые ковариаты
            log_level (int): Уровень сообщения о пропущенных моментах

        Возвращает:
            CumulativeCoefficients: Кумулятивные коэффициенты на общих моментах скачков

        Выбрасывает:
            DynPathError: Нет событий или во все моменты событий столбцов больше,
                чем субъектов в риске
        """
        if dataset.n == 0:
            raise DynPathError(INVALID_INPUT, "Пустая когорта")
        event_times = dataset.event_times
        if event_times.size == 0:
            raise DynPathError(ESTIMATION_FAILED, "В данных нет наблюдаемых событий")

        # Субъекты по возрастанию T̃: множество риска в момент t есть хвост массива
        order = np.argsort(dataset.followup, kind="stable")
        followup = dataset.followup[order]
        dN_source = dataset.event[order]
        designs = self._designs(dataset, order, treatment, mediator, covariates)
        columns = designs[0].shape[1]

        visits = mediator_index(dataset.schedule, event_times)
        retained: list[float] = []
        increments: list[np.ndarray] = []
        skipped = 0
        feasible = False
        for t, k in zip(event_times, visits):
            start = int(np.searchsorted(followup, t, side="left"))
            design = designs[k][start:]
            if design.shape[0] >= columns:
                feasible = True
            response = ((followup[start:] == t) & dN_source[start:]).astype(float)
            result = least_squares(design, response)
            if result.rank_deficient:
                skipped += 1
                logger.debug("Момент %.6g пропущен: вырожденный дизайн (%d в риске)", t, design.shape[0])
                continue
            retained.append(float(t))
            increments.append(result.coef)

        if not feasible:
            raise DynPathError(
                ESTIMATION_FAILED,
                f"Оценка невозможна: во все моменты событий в риске меньше {columns} субъектов",
            )
        if skipped:
            logger.log(log_level, "Пропущено моментов событий из-за вырожденного дизайна: %d", skipped)

        jumps = np.asarray(retained)
        table = np.vstack(increments) if increments else np.zeros((0, columns))
        curves = [StepFunction.from_increments(jumps, table[:, j]) for j in range(columns)]
        position = 1
        treatment_curve = mediator_curve = None
        if treatment:
            treatment_curve = curves[position]
            position += 1
        if mediator:
            mediator_curve = curves[position]
            position += 1
        covariate_curves = tuple(curves[position:]) if covariates else ()
        return CumulativeCoefficients(
            baseline=curves[0],
            treatment=treatment_curve,
            mediator=mediator_curve,
            covariates=covariate_curves,
            covariate_names=dataset.covariate_names if covariates else (),
            skipped_events=skipped,
        )

    def total_effect_without_mediator(self, dataset: Dataset, contrast: Contrast) -> StepFunction:
        """CHTE из модели исхода без медиатора: (a − a*)·Â(t)."""
        fit = self.fit_additive(dataset, mediator=False)
        return fit.treatment.scaled(contrast.difference)

    def nelson_aalen(
            self,
            dataset: Dataset,
            subset: Callable[[SubjectRecord], bool] | None = None,
    ) -> StepFunction:
        """
        Оценка Нельсона–Аалена: приращение dN(t)/Y(t) в каждый момент события.

        Выбрасывает:
            DynPathError: Если подмножество пусто
        """
        if subset is None:
            mask = np.ones(dataset.n, dtype=bool)
        else:
            mask = np.array([bool(subset(s)) for s in dataset.subjects], dtype=bool)
        if not mask.any():
            raise DynPathError(INVALID_INPUT, "Пустое подмножество субъектов")
        followup = dataset.followup[mask]
        event = dataset.event[mask]
        times, events = np.unique(followup[event], return_counts=True)
        at_risk = np.array([(followup >= t).sum() for t in times], dtype=float)
        return StepFunction.from_increments(times, events / at_risk)

    def _designs(
            self,
            dataset: Dataset,
            order: np.ndarray,
            treatment: bool,
            mediator: bool,
            covariates: bool,
    ) -> list[np.ndarray]:
        """Матрицы дизайна для каждого индекса визита (меняется только столбец медиатора)."""
        n = dataset.n
        fixed = [np.ones((n, 1))]
        if treatment:
            fixed.append(dataset.treatment[order, None])
        designs = []
        for k in range(len(dataset.schedule)):
            blocks = list(fixed)
            if mediator:
                blocks.append(dataset.mediators[order, k, None])
            if covariates and dataset.p:
                blocks.append(dataset.baseline[order])
            designs.append(np.hstack(blocks))
        return designs


# Экземпляр сервиса для использования в приложении
aalen_service = AalenService()
