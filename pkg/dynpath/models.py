"""
Модели данных dynpath.

Неизменяемые доменные типы: расписание визитов, записи субъектов, когорта,
ступенчатые функции и результаты оценивания. Все типы создаются один раз
и дальше только читаются, поэтому их можно безопасно делить между потоками.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from dynpath.errors import ESTIMATION_FAILED, INVALID_INPUT, DynPathError
from dynpath.schemas import Contrast


@dataclass(frozen=True)
class Schedule:
    """
    Расписание измерений медиатора t₀=0 < t₁ < … < t_K.

    Атрибуты:
        times (tuple[float, ...]): Времена визитов
    """

    times: tuple[float, ...]

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", times)
        if not times:
            raise DynPathError(INVALID_INPUT, "Расписание не может быть пустым")
        if times[0] != 0.0:
            raise DynPathError(INVALID_INPUT, "Первое время расписания должно быть равно 0")
        if any(not math.isfinite(t) for t in times):
            raise DynPathError(INVALID_INPUT, "Времена расписания должны быть конечными")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DynPathError(INVALID_INPUT, "Времена расписания должны строго возрастать")

    def __len__(self) -> int:
        return len(self.times)

    @cached_property
    def array(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    def visits_until(self, t: float) -> int:
        """Число визитов с временем ≤ t."""
        return int(np.searchsorted(self.array, t, side="right"))


@dataclass(frozen=True)
class SubjectRecord:
    """
    Запись одного субъекта когорты.

    Атрибуты:
        id (str): Идентификатор субъекта
        treatment (float): Значение лечения a
        baseline (tuple[float, ...]): Базовые ковариаты c
        mediators (tuple[float, ...]): Значения медиатора M₀, …, M_{r(T̃)}
        followup (float): Время наблюдения T̃
        event (bool): Наблюдалось ли событие
    """

    id: str
    treatment: float
    baseline: tuple[float, ...]
    mediators: tuple[float, ...]
    followup: float
    event: bool


@dataclass(frozen=True)
class Dataset:
    """
    Когорта субъектов с общим расписанием.

    Атрибуты:
        schedule (Schedule): Общее расписание визитов
        subjects (tuple[SubjectRecord, ...]): Субъекты в порядке таблицы
        covariate_names (tuple[str, ...]): Имена базовых ковариат
        carried_forward (int): Сколько пропусков заполнено методом LOCF
    """

    schedule: Schedule
    subjects: tuple[SubjectRecord, ...]
    covariate_names: tuple[str, ...] = ()
    carried_forward: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        p = len(self.covariate_names)
        seen: set[str] = set()
        for subject in self.subjects:
            if subject.id in seen:
                raise DynPathError(INVALID_INPUT, f"Повторяющийся идентификатор субъекта: {subject.id}")
            seen.add(subject.id)
            if len(subject.baseline) != p:
                raise DynPathError(
                    INVALID_INPUT,
                    f"Субъект {subject.id}: ожидалось {p} ковариат, получено {len(subject.baseline)}",
                )
            if not (subject.followup > 0 and math.isfinite(subject.followup)):
                raise DynPathError(INVALID_INPUT, f"Субъект {subject.id}: время наблюдения должно быть > 0")
            if not math.isfinite(subject.treatment) or not all(math.isfinite(c) for c in subject.baseline):
                raise DynPathError(INVALID_INPUT, f"Субъект {subject.id}: лечение и ковариаты должны быть конечными")
            expected = self.schedule.visits_until(subject.followup)
            if len(subject.mediators) != expected:
                raise DynPathError(
                    INVALID_INPUT,
                    f"Субъект {subject.id}: ожидалось {expected} значений медиатора, "
                    f"получено {len(subject.mediators)}",
                )

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def p(self) -> int:
        return len(self.covariate_names)

    @cached_property
    def treatment(self) -> np.ndarray:
        return np.array([s.treatment for s in self.subjects], dtype=float)

    @cached_property
    def baseline(self) -> np.ndarray:
        return np.array([s.baseline for s in self.subjects], dtype=float).reshape(self.n, self.p)

    @cached_property
    def followup(self) -> np.ndarray:
        return np.array([s.followup for s in self.subjects], dtype=float)

    @cached_property
    def event(self) -> np.ndarray:
        return np.array([s.event for s in self.subjects], dtype=bool)

    @cached_property
    def mediators(self) -> np.ndarray:
        """Матрица n × (K+1); NaN там, где субъект уже не наблюдается."""
        matrix = np.full((self.n, len(self.schedule)), np.nan)
        for row, subject in enumerate(self.subjects):
            matrix[row, : len(subject.mediators)] = subject.mediators
        return matrix

    @cached_property
    def event_times(self) -> np.ndarray:
        """Различные времена наблюдаемых событий по возрастанию."""
        return np.unique(self.followup[self.event])

    def take(self, indices: Sequence[int]) -> Dataset:
        """
        Выборка субъектов по индексам (с повторами, для бутстрепа).

        Идентификаторы получают суффикс позиции, чтобы оставаться уникальными.
        """
        subjects = tuple(
            SubjectRecord(
                id=f"{self.subjects[i].id}@{pos}",
                treatment=self.subjects[i].treatment,
                baseline=self.subjects[i].baseline,
                mediators=self.subjects[i].mediators,
                followup=self.subjects[i].followup,
                event=self.subjects[i].event,
            )
            for pos, i in enumerate(indices)
        )
        return Dataset(self.schedule, subjects, self.covariate_names)

    def with_mediators(self, mediators: np.ndarray) -> Dataset:
        """Та же когорта с заменёнными значениями медиатора (матрица n × (K+1))."""
        subjects = tuple(
            SubjectRecord(
                id=s.id,
                treatment=s.treatment,
                baseline=s.baseline,
                mediators=tuple(float(v) for v in mediators[row, : len(s.mediators)]),
                followup=s.followup,
                event=s.event,
            )
            for row, s in enumerate(self.subjects)
        )
        return Dataset(self.schedule, subjects, self.covariate_names, self.carried_forward)


@dataclass(frozen=True, eq=False)
class StepFunction:
    """
    Непрерывная справа кусочно-постоянная функция.

    Хранит и приращения, и накопленные значения: значение в момент t равно
    сумме приращений в скачках ≤ t, до первого скачка функция равна 0.

    Атрибуты:
        jumps (np.ndarray): Строго возрастающие моменты скачков
        increments (np.ndarray): Приращения в скачках
        values (np.ndarray): Накопленные значения после каждого скачка
    """

    jumps: np.ndarray
    increments: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        jumps = np.asarray(self.jumps, dtype=float).reshape(-1)
        increments = np.asarray(self.increments, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if not (len(jumps) == len(increments) == len(values)):
            raise DynPathError(INVALID_INPUT, "Длины скачков и приращений не совпадают")
        if np.any(np.diff(jumps) <= 0):
            raise DynPathError(INVALID_INPUT, "Моменты скачков должны строго возрастать")
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "increments", increments)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_increments(cls, jumps, increments) -> StepFunction:
        increments = np.asarray(increments, dtype=float)
        return cls(jumps, increments, np.cumsum(increments))

    @classmethod
    def from_values(cls, jumps, values) -> StepFunction:
        values = np.asarray(values, dtype=float)
        return cls(jumps, np.diff(values, prepend=0.0), values)

    @classmethod
    def zero(cls) -> StepFunction:
        return cls(np.empty(0), np.empty(0), np.empty(0))

    def __call__(self, t):
        idx = np.searchsorted(self.jumps, t, side="right")
        padded = np.concatenate(([0.0], self.values))
        result = padded[idx]
        return float(result) if np.ndim(result) == 0 else result

    def scaled(self, factor: float) -> StepFunction:
        return StepFunction(self.jumps, self.increments * factor, self.values * factor)

    def __len__(self) -> int:
        return len(self.jumps)


@dataclass(frozen=True, eq=False)
class CumulativeCoefficients:
    """
    Кумулятивные коэффициенты аддитивной модели рисков.

    Атрибуты:
        baseline (StepFunction): μ̂₀(t)
        treatment (StepFunction | None): Â(t), None если лечение не включено в модель
        mediator (StepFunction | None): B̂(t), None если медиатор не включён
        covariates (tuple[StepFunction, ...]): R̂ⱼ(t) по каждой ковариате
        covariate_names (tuple[str, ...]): Имена ковариат
        skipped_events (int): Пропущенные из-за вырожденности моменты событий
    """

    baseline: StepFunction
    treatment: StepFunction | None
    mediator: StepFunction | None
    covariates: tuple[StepFunction, ...]
    covariate_names: tuple[str, ...]
    skipped_events: int = 0

    @property
    def event_times(self) -> np.ndarray:
        return self.baseline.jumps

    def named(self) -> dict[str, StepFunction]:
        curves = {"baseline": self.baseline}
        if self.treatment is not None:
            curves["treatment"] = self.treatment
        if self.mediator is not None:
            curves["mediator"] = self.mediator
        for name, curve in zip(self.covariate_names, self.covariates):
            curves[f"covariate:{name}"] = curve
        return curves


@dataclass(frozen=True)
class VisitRegression:
    """
    Маргинальная регрессия медиатора на визите i: Mᵢ = m₀ᵢ + γᵢA + θᵢ′C + ηᵢ.

    Атрибуты:
        index (int): Номер визита
        time (float): Время визита tᵢ
        survivors (int): Число выживших к tᵢ
        available (bool): Удалось ли оценить регрессию
        intercept (float): m̂₀ᵢ
        treatment (float): γ̂ᵢ
        covariates (tuple[float, ...]): θ̂ᵢ
        residual_variance (float): Оценка дисперсии остатков
        treatment_se (float): Стандартная ошибка γ̂ᵢ
        reason (str): Причина недоступности
    """

    index: int
    time: float
    survivors: int
    available: bool
    intercept: float = math.nan
    treatment: float = math.nan
    covariates: tuple[float, ...] = ()
    residual_variance: float = math.nan
    treatment_se: float = math.nan
    reason: str = ""


@dataclass(frozen=True)
class MediatorCoefficients:
    visits: tuple[VisitRegression, ...]
    covariate_names: tuple[str, ...] = ()

    def gamma(self, index: int) -> float:
        visit = self.visits[index]
        if not visit.available:
            raise DynPathError(
                ESTIMATION_FAILED,
                f"Регрессия медиатора на визите {index} недоступна: {visit.reason}",
            )
        return visit.treatment

    def gammas(self) -> np.ndarray:
        """γ̂ по всем визитам; NaN для недоступных."""
        return np.array([v.treatment if v.available else np.nan for v in self.visits])


@dataclass(frozen=True)
class StructuralVisit:
    """
    Структурная регрессия на визите i: Mᵢ = λᵢA + δᵢ′C + Σ_{k<i} bᵢₖMₖ + εᵢ.

    Атрибуты:
        index (int): Номер визита
        survivors (int): Число выживших к tᵢ
        available (bool): Удалось ли оценить регрессию
        intercept (float): Свободный член
        treatment (float): λ̂ᵢ
        covariates (tuple[float, ...]): δ̂ᵢ
        past (tuple[float, ...]): b̂ᵢₖ для k < i
        noise_variance (float): σ̂ᵢ²
    """

    index: int
    survivors: int
    available: bool
    intercept: float = math.nan
    treatment: float = math.nan
    covariates: tuple[float, ...] = ()
    past: tuple[float, ...] = ()
    noise_variance: float = math.nan
    reason: str = ""


@dataclass(frozen=True)
class StructuralCoefficients:
    visits: tuple[StructuralVisit, ...]
    covariate_names: tuple[str, ...] = ()

    def lambdas(self) -> np.ndarray:
        return np.array([v.treatment if v.available else np.nan for v in self.visits])

    def b_matrix(self) -> np.ndarray:
        size = len(self.visits)
        matrix = np.zeros((size, size))
        for visit in self.visits:
            if visit.available:
                matrix[visit.index, : visit.index] = visit.past
            else:
                matrix[visit.index, : visit.index] = np.nan
        return matrix


@dataclass(frozen=True, eq=False)
class EffectCurves:
    """
    Кумулятивные эффекты на шкале рисков.

    Атрибуты:
        chde (StepFunction): Прямой эффект
        chie (StepFunction): Непрямой эффект
        chte (StepFunction): Общий эффект, chte = chde + chie
        contrast (Contrast): Сравниваемые значения лечения
        scale (str): Шкала ("hazard")
        kappa (float | None): Надёжность, если применена поправка на ошибку измерения
    """

    chde: StepFunction
    chie: StepFunction
    chte: StepFunction
    contrast: Contrast
    scale: str = "hazard"
    kappa: float | None = None

    @property
    def times(self) -> np.ndarray:
        return self.chte.jumps


@dataclass(frozen=True, eq=False)
class SurvivalCurves:
    """SDE, SIE, STE на сетке скачков кумулятивных кривых."""

    times: np.ndarray
    sde: np.ndarray
    sie: np.ndarray
    ste: np.ndarray


@dataclass(frozen=True, eq=False)
class Band:
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True, eq=False)
class BootstrapBands:
    """
    Поточечные перцентильные бутстреп-интервалы.

    Атрибуты:
        grid (np.ndarray): Сетка времён
        curves (dict[str, Band]): Интервалы по кривым (chde, chie, chte, sde, sie, ste, …)
        replicates (int): Число репликаций B
        level (float): Номинальный уровень
        failed_replicates (int): Репликации, завершившиеся ошибкой
        gamma (Band | None): Интервалы для γ̂ по визитам
        visit_times (np.ndarray | None): Времена визитов для γ̂
    """

    grid: np.ndarray
    curves: dict[str, Band]
    replicates: int
    level: float
    failed_replicates: int
    gamma: Band | None = field(default=None)
    visit_times: np.ndarray | None = field(default=None)


@dataclass(frozen=True, eq=False)
class MonteCarloSurvival:
    """
    Монте-Карло оценка выживаемости под заданным режимом.

    Атрибуты:
        grid (np.ndarray): Сетка времён
        survival (np.ndarray): Доля выживших после каждого момента сетки
        se (np.ndarray): Биномиальные стандартные ошибки
        clamp_rate (float): Доля интервалов с отрицательным риском, обрезанным до 0
    """

    grid: np.ndarray
    survival: np.ndarray
    se: np.ndarray
    clamp_rate: float = 0.0


@dataclass(frozen=True, eq=False)
class ClosedFormEffects:
    """Точные эффекты по известным параметрам на сетке времён."""

    grid: np.ndarray
    gamma: np.ndarray
    chde: np.ndarray
    chie: np.ndarray
    chte: np.ndarray
    sde: np.ndarray
    sie: np.ndarray
    ste: np.ndarray
