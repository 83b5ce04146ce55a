"""
Сервис эффектов.

Собирает прямой, непрямой и общий эффекты на шкале кумулятивного риска
и на шкале относительной выживаемости, применяет поправку на ошибку
измерения медиатора.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from dynpath.core import mediator_index
from dynpath.errors import INVALID_INPUT, DynPathError
from dynpath.models import (
    CumulativeCoefficients,
    EffectCurves,
    MediatorCoefficients,
    Schedule,
    StepFunction,
    SurvivalCurves,
)
from dynpath.schemas import Contrast

EFFECT_COLUMNS = ("chde", "chie", "chte", "sde", "sie", "ste")


class EffectsService:
    """Сервис для вычисления кривых эффектов."""

    def cumulative_effects(
            self,
            cumcoef: CumulativeCoefficients,
            medcoef: MediatorCoefficients,
            schedule: Schedule,
            contrast: Contrast,
    ) -> EffectCurves:
        """
        ĈHDE(t) = (a−a*)Â(t), ĈHIE(t) = (a−a*)Σ_{s≤t} γ̂_{r(s)}ΔB̂(s), ĈHTE = ĈHDE + ĈHIE.

        Выбрасывает:
            DynPathError: Если нужный индекс регрессии медиатора недоступен
        """
        if cumcoef.treatment is None or cumcoef.mediator is None:
            raise DynPathError(INVALID_INPUT, "Для эффектов нужна модель с лечением и медиатором")
        jumps = cumcoef.mediator.jumps
        diff = contrast.difference
        visits = np.atleast_1d(mediator_index(schedule, jumps)) if jumps.size else np.empty(0, dtype=int)
        gammas = np.array([medcoef.gamma(int(k)) for k in visits], dtype=float)

        chde = cumcoef.treatment.scaled(diff)
        chie = StepFunction.from_increments(jumps, diff * (gammas * cumcoef.mediator.increments))
        chte = StepFunction.from_values(jumps, chde.values + chie.values)
        return EffectCurves(chde=chde, chie=chie, chte=chte, contrast=contrast)

    def survival_effects(self, effects: EffectCurves) -> SurvivalCurves:
        """SDE = exp(−ĈHDE), SIE = exp(−ĈHIE), STE = SDE·SIE на сетке скачков."""
        sde = np.exp(-effects.chde.values)
        sie = np.exp(-effects.chie.values)
        return SurvivalCurves(times=effects.times, sde=sde, sie=sie, ste=sde * sie)

    def correct_measurement_error(self, effects: EffectCurves, kappa: float) -> EffectCurves:
        """
        Поправка на ошибку измерения медиатора с надёжностью κ.

        ĈHIE делится на κ, ĈHTE не меняется, ĈHDE = ĈHTE − ĈHIE/κ.
        Поправка предварительная: она перенесена из линейной модели ошибки измерения.
        """
        if not 0 < kappa <= 1:
            raise DynPathError(INVALID_INPUT, f"κ должно лежать в (0, 1], получено {kappa}")
        if kappa == 1:
            return effects
        jumps = effects.times
        chie = StepFunction(jumps, effects.chie.increments / kappa, effects.chie.values / kappa)
        chde = StepFunction.from_values(jumps, effects.chte.values - chie.values)
        return EffectCurves(
            chde=chde,
            chie=chie,
            chte=effects.chte,
            contrast=effects.contrast,
            scale=effects.scale,
            kappa=kappa,
        )

    def correct_mediator_curve(self, mediator: StepFunction, kappa: float) -> StepFunction:
        """Скорректированный кумулятивный коэффициент медиатора B̂/κ."""
        if not 0 < kappa <= 1:
            raise DynPathError(INVALID_INPUT, f"κ должно лежать в (0, 1], получено {kappa}")
        return mediator.scaled(1.0 / kappa)

    def effect_slopes(self, curve: StepFunction, windows: list[tuple[float, float]]) -> np.ndarray:
        """
        Локальные эффекты на шкале риска как наклоны кумулятивной кривой.

        Для окна [t₁, t₂] возвращает (F(t₂) − F(t₁)) / (t₂ − t₁).
        """
        slopes = []
        for start, end in windows:
            if not end > start >= 0:
                raise DynPathError(INVALID_INPUT, f"Некорректное окно [{start}, {end}]")
            slopes.append((curve(end) - curve(start)) / (end - start))
        return np.asarray(slopes)

    def curves_on_grid(self, effects: EffectCurves, grid) -> dict[str, np.ndarray]:
        """Значения всех шести кривых на произвольной сетке."""
        grid = np.asarray(grid, dtype=float)
        chde = np.asarray(effects.chde(grid), dtype=float)
        chie = np.asarray(effects.chie(grid), dtype=float)
        chte = np.asarray(effects.chte(grid), dtype=float)
        sde = np.exp(-chde)
        sie = np.exp(-chie)
        return {"chde": chde, "chie": chie, "chte": chte, "sde": sde, "sie": sie, "ste": sde * sie}

    def effects_table(
            self,
            effects: EffectCurves,
            corrected: EffectCurves | None = None,
            mediator: StepFunction | None = None,
            total_without_mediator: StepFunction | None = None,
    ) -> pd.DataFrame:
        """
        Таблица для построения графиков: time, chde, chie, chte, sde, sie, ste.

        Аргументы:
            effects (EffectCurves): Оценённые эффекты
            corrected (EffectCurves | None): Эффекты с поправкой; те же столбцы с суффиксом _corr
            mediator (StepFunction | None): B̂(t); столбцы mediator_coef, mediator_surv = exp(−B̂)
                и mediator_coef_corr = B̂/κ при поправке
            total_without_mediator (StepFunction | None): ĈHTE модели без медиатора; столбец chte_nomed

        Возвращает:
            pd.DataFrame: Значения на моментах скачков
        """
        survival = self.survival_effects(effects)
        frame = pd.DataFrame(
            {
                "time": effects.times,
                "chde": effects.chde.values,
                "chie": effects.chie.values,
                "chte": effects.chte.values,
                "sde": survival.sde,
                "sie": survival.sie,
                "ste": survival.ste,
            }
        )
        if total_without_mediator is not None:
            frame["chte_nomed"] = np.asarray(total_without_mediator(effects.times), dtype=float)
        if mediator is not None:
            frame["mediator_coef"] = np.asarray(mediator(effects.times), dtype=float)
            frame["mediator_surv"] = np.exp(-frame["mediator_coef"].to_numpy())
        if corrected is not None:
            corrected_survival = self.survival_effects(corrected)
            frame["chde_corr"] = corrected.chde.values
            frame["chie_corr"] = corrected.chie.values
            frame["chte_corr"] = corrected.chte.values
            frame["sde_corr"] = corrected_survival.sde
            frame["sie_corr"] = corrected_survival.sie
            frame["ste_corr"] = corrected_survival.ste
            if mediator is not None:
                kappa = corrected.kappa if corrected.kappa is not None else 1.0
                frame["mediator_coef_corr"] = np.asarray(
                    self.correct_mediator_curve(mediator, kappa)(effects.times), dtype=float
                )
        return frame


# Экземпляр сервиса для использования в приложении
effects_service = EffectsService()
