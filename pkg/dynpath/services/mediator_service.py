"""
Сервис регрессий медиатора.

Маргинальная модель Mᵢ = m₀ᵢ + γᵢA + θᵢ′C + ηᵢ и структурная модель
Mᵢ = λᵢA + δᵢ′C + Σ_{k<i} bᵢₖMₖ + εᵢ оцениваются обычным МНК среди
выживших к моменту визита tᵢ. Связь между ними: γ = (I − B)⁻¹Λ.
"""

from __future__ import annotations

import logging

import numpy as np
import statsmodels.api as sm
from scipy.linalg import solve_triangular

from dynpath.core import least_squares
from dynpath.errors import INVALID_INPUT, DynPathError
from dynpath.models import (
    Dataset,
    MediatorCoefficients,
    StructuralCoefficients,
    StructuralVisit,
    VisitRegression,
)

logger = logging.getLogger(__name__)


class MediatorService:
    """Сервис для регрессий медиатора по визитам."""

    def fit_marginal(self, dataset: Dataset, log_level: int = logging.WARNING) -> MediatorCoefficients:
        """
        МНК Mᵢ на (1, A, C) среди субъектов с T̃ ≥ tᵢ для каждого визита i.

        Визиты, где выживших не больше p + 2 или дизайн вырожден, помечаются
        недоступными; ошибка возникает только при попытке использовать такой визит.

        Аргументы:
            dataset (Dataset): Когорта
            log_level (int): Уровень сообщения о недоступном визите
        """
        visits = []
        for i, t in enumerate(dataset.schedule.times):
            survivors = np.flatnonzero(dataset.followup >= t)
            design = np.column_stack(
                [np.ones(survivors.size), dataset.treatment[survivors], dataset.baseline[survivors]]
            )
            fit = self._regress(design, dataset.mediators[survivors, i])
            if fit is None:
                reason = self._reason(survivors.size, design.shape[1])
                logger.log(log_level, "Визит %d (t=%.6g): регрессия медиатора недоступна, %s", i, t, reason)
                visits.append(VisitRegression(index=i, time=t, survivors=survivors.size, available=False, reason=reason))
                continue
            coef, variance, se = fit
            visits.append(
                VisitRegression(
                    index=i,
                    time=t,
                    survivors=survivors.size,
                    available=True,
                    intercept=float(coef[0]),
                    treatment=float(coef[1]),
                    covariates=tuple(float(v) for v in coef[2:]),
                    residual_variance=variance,
                    treatment_se=float(se[1]),
                )
            )
        return MediatorCoefficients(tuple(visits), dataset.covariate_names)

    def fit_sequential(self, dataset: Dataset) -> StructuralCoefficients:
        """МНК Mᵢ на (1, A, C, M₀, …, M_{i−1}) среди выживших к tᵢ."""
        visits = []
        p = dataset.p
        for i, t in enumerate(dataset.schedule.times):
            survivors = np.flatnonzero(dataset.followup >= t)
            design = np.column_stack(
                [
                    np.ones(survivors.size),
                    dataset.treatment[survivors],
                    dataset.baseline[survivors],
                    dataset.mediators[survivors, :i],
                ]
            )
            fit = self._regress(design, dataset.mediators[survivors, i])
            if fit is None:
                reason = self._reason(survivors.size, design.shape[1])
                visits.append(StructuralVisit(index=i, survivors=survivors.size, available=False, reason=reason))
                continue
            coef, variance, _ = fit
            visits.append(
                StructuralVisit(
                    index=i,
                    survivors=survivors.size,
                    available=True,
                    intercept=float(coef[0]),
                    treatment=float(coef[1]),
                    covariates=tuple(float(v) for v in coef[2: 2 + p]),
                    past=tuple(float(v) for v in coef[2 + p:]),
                    noise_variance=variance,
                )
            )
        return StructuralCoefficients(tuple(visits), dataset.covariate_names)

    def gamma_from_structural(self, lambdas, b_matrix) -> np.ndarray:
        """
        Маргинальные коэффициенты γ = (I − B)⁻¹Λ прямой подстановкой.

        Аргументы:
            lambdas: Вектор Λ длины K+1
            b_matrix: Строго нижнетреугольная матрица B (K+1) × (K+1)

        Возвращает:
            np.ndarray: Вектор γ

        Выбрасывает:
            DynPathError: При несовпадении размерностей или ненулевой диагонали/верхнем треугольнике
        """
        lambdas = np.asarray(lambdas, dtype=float).reshape(-1)
        b_matrix = np.asarray(b_matrix, dtype=float)
        size = lambdas.size
        if b_matrix.shape != (size, size):
            raise DynPathError(
                INVALID_INPUT,
                f"Размерности не совпадают: Λ длины {size}, B формы {b_matrix.shape}",
            )
        if np.any(np.triu(b_matrix) != 0):
            raise DynPathError(INVALID_INPUT, "Матрица B должна быть строго нижнетреугольной")
        return solve_triangular(np.eye(size) - b_matrix, lambdas, lower=True, unit_diagonal=True)

    def _regress(self, design: np.ndarray, response: np.ndarray):
        rows, cols = design.shape
        if rows <= cols or least_squares(design, response).rank_deficient:
            return None
        # Столбец свободного члена уже в дизайне
        result = sm.OLS(response, design).fit()
        return np.asarray(result.params), float(result.scale), np.asarray(result.bse)

    def _reason(self, survivors: int, columns: int) -> str:
        if survivors <= columns:
            return f"выживших {survivors}, нужно больше {columns}"
        return "вырожденный дизайн (коллинеарность)"


# Экземпляр сервиса для использования в приложении
mediator_service = MediatorService()
