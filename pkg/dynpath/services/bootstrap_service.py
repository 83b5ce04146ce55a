"""Сервис бутстрепа: поточечные перцентильные интервалы для кривых эффектов."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from dynpath.core import STREAM_BOOTSTRAP, stream
from dynpath.errors import ESTIMATION_FAILED, INVALID_INPUT, DynPathError
from dynpath.models import Band, BootstrapBands, Dataset
from dynpath.schemas import Contrast
from dynpath.services.aalen_service import aalen_service
from dynpath.services.effects_service import effects_service
from dynpath.services.mediator_service import mediator_service

logger = logging.getLogger(__name__)


class BootstrapService:
    """Сервис для бутстреп-интервалов с ресэмплингом субъектов."""

    def bootstrap_bands(
            self,
            dataset: Dataset,
            contrast: Contrast,
            replicates: int,
            seed: int,
            grid=None,
            level: float = 0.95,
            kappa: float | None = None,
            workers: int = 1,
    ) -> BootstrapBands:
        """
        Перцентильные интервалы по B репликациям.

        Репликация b ресэмплирует n субъектов с возвращением из потока (seed, b),
        заново оценивает обе модели и эффекты и вычисляет кривые на сетке.
        Неудавшиеся репликации считаются и исключаются.

        Аргументы:
            dataset (Dataset): Исходная когорта
            contrast (Contrast): Контраст (a, a*)
            replicates (int): Число репликаций B
            seed (int): Зерно
            grid: Сетка времён; по умолчанию все различные моменты событий
            level (float): Номинальный уровень
            kappa (float | None): Если задано, добавляются скорректированные кривые
            workers (int): Число потоков

        Возвращает:
            BootstrapBands: Точечные оценки и границы интервалов

        Выбрасывает:
            DynPathError: Некорректные аргументы или все репликации неудачны
        """
        if replicates < 1:
            raise DynPathError(INVALID_INPUT, "Число репликаций должно быть ≥ 1")
        if not 0 < level < 1:
            raise DynPathError(INVALID_INPUT, f"Уровень должен лежать в (0, 1), получено {level}")
        if kappa is not None and not 0 < kappa <= 1:
            raise DynPathError(INVALID_INPUT, f"κ должно лежать в (0, 1], получено {kappa}")
        grid = dataset.event_times if grid is None else np.asarray(grid, dtype=float).reshape(-1)
        if grid.size == 0:
            raise DynPathError(INVALID_INPUT, "Пустая сетка времён")
        if np.any(grid < 0) or np.any(grid > dataset.followup.max()):
            raise DynPathError(INVALID_INPUT, "Сетка должна лежать внутри наблюдаемого периода")

        point, point_gamma = self._replicate_curves(dataset, contrast, grid, kappa, logging.WARNING)

        def run(b: int):
            rng = stream(seed, STREAM_BOOTSTRAP, b)
            indices = rng.integers(0, dataset.n, size=dataset.n)
            try:
                return self._replicate_curves(dataset.take(indices), contrast, grid, kappa, logging.DEBUG)
            except DynPathError as exc:
                logger.debug("Репликация %d не удалась: %s", b, exc.detail)
                return None

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, range(replicates)))
        else:
            results = [run(b) for b in range(replicates)]

        successful = [result for result in results if result is not None]
        failed = replicates - len(successful)
        if not successful:
            raise DynPathError(ESTIMATION_FAILED, "Все бутстреп-репликации завершились ошибкой")
        if failed:
            logger.warning("Неудачных бутстреп-репликаций: %d из %d", failed, replicates)

        probabilities = [(1 - level) / 2, (1 + level) / 2]
        curves = {}
        for name, estimate in point.items():
            stacked = np.vstack([curves_b[name] for curves_b, _ in successful])
            lower, upper = np.quantile(stacked, probabilities, axis=0)
            curves[name] = Band(point=estimate, lower=lower, upper=upper)
        gamma_stack = np.vstack([gamma_b for _, gamma_b in successful])
        lower, upper = self._gamma_quantiles(gamma_stack, probabilities)
        return BootstrapBands(
            grid=grid,
            curves=curves,
            replicates=replicates,
            level=level,
            failed_replicates=failed,
            gamma=Band(point=point_gamma, lower=lower, upper=upper),
            visit_times=dataset.schedule.array,
        )

    def bands_table(self, bands: BootstrapBands) -> pd.DataFrame:
        """Таблица: time, затем для каждой кривой столбцы name, name_lower, name_upper."""
        frame = pd.DataFrame({"time": bands.grid})
        for name, band in bands.curves.items():
            frame[name] = band.point
            frame[f"{name}_lower"] = band.lower
            frame[f"{name}_upper"] = band.upper
        return frame

    def gamma_table(self, bands: BootstrapBands) -> pd.DataFrame:
        """Таблица по визитам: visit, time, gamma, gamma_lower, gamma_upper (NaN для недоступных визитов)."""
        if bands.gamma is None or bands.visit_times is None:
            raise DynPathError(INVALID_INPUT, "В результате бутстрепа нет интервалов для γ̂")
        return pd.DataFrame(
            {
                "visit": np.arange(bands.visit_times.size),
                "time": bands.visit_times,
                "gamma": bands.gamma.point,
                "gamma_lower": bands.gamma.lower,
                "gamma_upper": bands.gamma.upper,
            }
        )

    def _replicate_curves(
            self,
            dataset: Dataset,
            contrast: Contrast,
            grid: np.ndarray,
            kappa: float | None,
            log_level: int,
    ) -> tuple[dict[str, np.ndarray], np.ndarray]:
        # WARNING для точечной оценки, DEBUG для репликаций
        cumcoef = aalen_service.fit_additive(dataset, log_level=log_level)
        medcoef = mediator_service.fit_marginal(dataset, log_level=log_level)
        effects = effects_service.cumulative_effects(cumcoef, medcoef, dataset.schedule, contrast)
        curves = effects_service.curves_on_grid(effects, grid)
        curves["mediator_coef"] = np.asarray(cumcoef.mediator(grid), dtype=float)
        if kappa is not None:
            corrected = effects_service.curves_on_grid(
                effects_service.correct_measurement_error(effects, kappa), grid
            )
            curves.update({f"{name}_corr": values for name, values in corrected.items()})
            corrected_mediator = effects_service.correct_mediator_curve(cumcoef.mediator, kappa)
            curves["mediator_coef_corr"] = np.asarray(corrected_mediator(grid), dtype=float)
        return curves, medcoef.gammas()

    def _gamma_quantiles(self, stacked: np.ndarray, probabilities: list[float]) -> tuple[np.ndarray, np.ndarray]:
        """Квантили γ̂ по визитам; визит без единой доступной оценки получает NaN."""
        lower = np.full(stacked.shape[1], np.nan)
        upper = np.full(stacked.shape[1], np.nan)
        for i in range(stacked.shape[1]):
            column = stacked[:, i][np.isfinite(stacked[:, i])]
            if column.size:
                lower[i], upper[i] = np.quantile(column, probabilities)
        return lower, upper


# Экземпляр сервиса для использования в приложении
bootstrap_service = BootstrapService()
