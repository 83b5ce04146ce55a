"""Общие утилиты: индекс визита r(t), множества риска, ступенчатые функции, МНК, потоки случайных чисел."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dynpath.errors import INVALID_INPUT, DynPathError
from dynpath.models import Dataset, Schedule, StepFunction

RANK_TOLERANCE = 1e-10

# Метки независимых потоков случайных чисел
STREAM_SIMULATION = 0
STREAM_NOISE = 1
STREAM_BOOTSTRAP = 2


def mediator_index(schedule: Schedule, t):
    """
    Индекс r(t) = k при t_k ≤ t < t_{k+1} (последний индекс при t ≥ t_K).

    Аргументы:
        schedule (Schedule): Расписание визитов
        t (float | np.ndarray): Время или массив времён

    Возвращает:
        int | np.ndarray: Индекс визита

    Выбрасывает:
        DynPathError: Если t < 0
    """
    if np.any(np.asarray(t) < 0):
        raise DynPathError(INVALID_INPUT, f"Время должно быть неотрицательным, получено {t}")
    idx = np.searchsorted(schedule.array, t, side="right") - 1
    return int(idx) if np.ndim(idx) == 0 else idx


def risk_set(dataset: Dataset, t: float) -> np.ndarray:
    """Индексы субъектов с T̃ ≥ t; субъект остаётся в риске в момент своего события."""
    return np.flatnonzero(dataset.followup >= t)


def eval_step(f: StepFunction, t):
    return f(t)


@dataclass(frozen=True)
class LeastSquaresResult:
    coef: np.ndarray | None
    rank_deficient: bool


def least_squares(design: np.ndarray, response: np.ndarray) -> LeastSquaresResult:
    """
    МНК через SVD с детерминированной проверкой ранга.

    Дизайн считается вырожденным, если отношение наименьшего сингулярного
    числа к наибольшему меньше RANK_TOLERANCE или строк меньше, чем столбцов.
    """
    rows, cols = design.shape
    if rows < cols:
        return LeastSquaresResult(None, True)
    coef, _, _, singular = np.linalg.lstsq(design, response, rcond=None)
    if singular[0] == 0 or singular[-1] / singular[0] < RANK_TOLERANCE:
        return LeastSquaresResult(None, True)
    return LeastSquaresResult(coef, False)


def stream(seed: int, tag: int, counter: int) -> np.random.Generator:
    """Поток случайных чисел, зависящий только от (seed, tag, counter)."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, tag, counter])
