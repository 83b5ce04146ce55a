"""Схемы данных dynpath: файлы конфигурации, запросы CLI и сериализованные документы."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _parse_float_list(value):
    if isinstance(value, str):
        parts = [part.strip() for part in value.split(",") if part.strip()]
        try:
            return [float(part) for part in parts]
        except ValueError as exc:
            raise ValueError(f"Ожидался список чисел через запятую: {value!r}") from exc
    return value


def _path_broadcast(value: float | list[float], size: int, name: str) -> np.ndarray:
    if isinstance(value, (int, float)):
        return np.full(size, float(value))
    if len(value) != size:
        raise ValueError(f"{name}: ожидалось {size} значений (по интервалам расписания), получено {len(value)}")
    return np.asarray(value, dtype=float)


class Contrast(BaseModel):
    model_config = ConfigDict(frozen=True)

    a: float = 1.0
    a_star: float = 0.0

    @model_validator(mode="after")
    def _distinct_arms(self) -> Contrast:
        if self.a == self.a_star:
            raise ValueError("Значения a и a* должны различаться")
        return self

    @classmethod
    def parse(cls, text: str) -> Contrast:
        values = _parse_float_list(text)
        if not isinstance(values, list) or len(values) != 2:
            raise ValueError(f"Контраст задаётся как 'a,a*', получено {text!r}")
        return cls(a=values[0], a_star=values[1])

    @property
    def difference(self) -> float:
        return self.a - self.a_star

    def swapped(self) -> Contrast:
        return Contrast(a=self.a_star, a_star=self.a)


class Regime(BaseModel):
    """Режим симуляции: наблюдательный (A = A^M = A^D) или с раздельным вмешательством."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["observational", "intervened"] = "observational"
    a_direct: float | None = None
    a_mediator: float | None = None

    @model_validator(mode="after")
    def _arms_for_intervention(self) -> Regime:
        if self.kind == "intervened" and (self.a_direct is None or self.a_mediator is None):
            raise ValueError("Для вмешательства нужны оба значения a_D и a_M")
        if self.kind == "observational" and (self.a_direct is not None or self.a_mediator is not None):
            raise ValueError("В наблюдательном режиме a_D и a_M не задаются")
        return self

    @classmethod
    def observational(cls) -> Regime:
        return cls()

    @classmethod
    def intervened(cls, a_direct: float, a_mediator: float) -> Regime:
        return cls(kind="intervened", a_direct=a_direct, a_mediator=a_mediator)


class IngestionConfig(BaseModel):
    schedule: list[float] = Field(min_length=1)
    covariates: list[str] = Field(default_factory=list)
    mode: Literal["strict", "carry_forward"] = "strict"

    @field_validator("covariates")
    @classmethod
    def _unique_covariates(cls, value: list[str]) -> list[str]:
        reserved = {"id", "treatment", "followup", "event"}
        if len(set(value)) != len(value):
            raise ValueError("Имена ковариат должны быть уникальными")
        if reserved & set(value):
            raise ValueError(f"Имена ковариат не могут совпадать с {sorted(reserved)}")
        return value


# --- Параметры симуляции ---


class CovariateLaw(BaseModel):
    name: str = Field(min_length=1)
    kind: Literal["normal", "bernoulli", "uniform"] = "normal"
    mean: float = 0.0
    sd: float = Field(default=1.0, ge=0)
    p: float = Field(default=0.5, ge=0, le=1)
    low: float = 0.0
    high: float = 1.0

    @model_validator(mode="after")
    def _uniform_bounds(self) -> CovariateLaw:
        if self.kind == "uniform" and not self.low < self.high:
            raise ValueError(f"{self.name}: для равномерного закона нужно low < high")
        return self


class HazardPaths(BaseModel):
    """Кусочно-постоянные коэффициенты μ_t, α_t, β_t, ρ_t по интервалам расписания."""

    baseline: float | list[float]
    treatment: float | list[float] = 0.0
    mediator: float | list[float] = 0.0
    covariates: list[float | list[float]] = Field(default_factory=list)


class StructuralModel(BaseModel):
    """Структурная модель медиатора: λᵢ, δᵢ, bᵢₖ (k < i), σᵢ."""

    lambdas: list[float] = Field(min_length=1)
    deltas: list[list[float]] | None = None
    b: list[list[float]] = Field(default_factory=list)
    sigma: float | list[float] = 1.0


class CensoringSpec(BaseModel):
    t_max: float = Field(gt=0)
    rate: float = Field(default=0.0, ge=0)


class SimulationParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    schedule: list[float] = Field(min_length=1)
    hazard: HazardPaths
    structural: StructuralModel
    baseline: list[CovariateLaw] = Field(default_factory=list)
    treatment_probability: float = Field(default=0.5, ge=0, le=1)
    censoring: CensoringSpec
    contrast: Contrast = Field(default_factory=Contrast)

    @model_validator(mode="after")
    def _consistent_dimensions(self) -> SimulationParams:
        size = len(self.schedule)
        p = len(self.baseline)
        if self.schedule[0] != 0.0 or any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ValueError("Расписание должно начинаться с 0 и строго возрастать")
        for name in ("baseline", "treatment", "mediator"):
            _path_broadcast(getattr(self.hazard, name), size, f"hazard.{name}")
        if len(self.hazard.covariates) != p:
            raise ValueError(f"hazard.covariates: ожидалось {p} путей (по одному на ковариату)")
        for path in self.hazard.covariates:
            _path_broadcast(path, size, "hazard.covariates")
        if len(self.structural.lambdas) != size:
            raise ValueError(f"structural.lambdas: ожидалось {size} значений")
        if self.structural.deltas is not None:
            if len(self.structural.deltas) != size or any(len(row) != p for row in self.structural.deltas):
                raise ValueError(f"structural.deltas: ожидалась матрица {size} × {p}")
        if self.structural.b:
            if len(self.structural.b) != size or any(len(row) != i for i, row in enumerate(self.structural.b)):
                raise ValueError("structural.b: строка i должна содержать ровно i коэффициентов bᵢₖ, k < i")
        sigmas = _path_broadcast(self.structural.sigma, size, "structural.sigma")
        if np.any(sigmas < 0):
            raise ValueError("structural.sigma: масштабы шума должны быть ≥ 0")
        names = [law.name for law in self.baseline]
        if len(set(names)) != len(names):
            raise ValueError("Имена ковариат должны быть уникальными")
        return self

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(law.name for law in self.baseline)

    def hazard_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Возвращает (μ, α, β, ρ) с формами (K+1,), (K+1,), (K+1,), (K+1, p)."""
        size = len(self.schedule)
        mu = _path_broadcast(self.hazard.baseline, size, "hazard.baseline")
        alpha = _path_broadcast(self.hazard.treatment, size, "hazard.treatment")
        beta = _path_broadcast(self.hazard.mediator, size, "hazard.mediator")
        rho = np.column_stack(
            [_path_broadcast(path, size, "hazard.covariates") for path in self.hazard.covariates]
        ) if self.hazard.covariates else np.zeros((size, 0))
        return mu, alpha, beta, rho

    def lambdas(self) -> np.ndarray:
        return np.asarray(self.structural.lambdas, dtype=float)

    def deltas(self) -> np.ndarray:
        if self.structural.deltas is None:
            return np.zeros((len(self.schedule), len(self.baseline)))
        return np.asarray(self.structural.deltas, dtype=float).reshape(len(self.schedule), len(self.baseline))

    def b_matrix(self) -> np.ndarray:
        size = len(self.schedule)
        matrix = np.zeros((size, size))
        for i, row in enumerate(self.structural.b):
            matrix[i, :i] = row
        return matrix

    def sigmas(self) -> np.ndarray:
        return _path_broadcast(self.structural.sigma, len(self.schedule), "structural.sigma")


# --- Сериализованные результаты ---


class VisitDocument(BaseModel):
    index: int
    time: float
    survivors: int
    available: bool
    intercept: float | None = None
    treatment: float | None = None
    covariates: list[float] = Field(default_factory=list)
    residual_variance: float | None = None
    treatment_se: float | None = None
    reason: str = ""


class CurveDocument(BaseModel):
    jumps: list[float]
    increments: list[float]


class FitDocument(BaseModel):
    """
    Результат `fit`: кумулятивные приращения аддитивной модели и регрессии медиатора.

    `treatment_without_mediator` хранит Â(t) модели без медиатора (контраст 1 против 0),
    если такая модель оценима.
    """

    schedule: list[float]
    covariate_names: list[str] = Field(default_factory=list)
    event_times: list[float]
    increments: dict[str, list[float]]
    skipped_events: int = Field(ge=0)
    mediator: list[VisitDocument]
    treatment_without_mediator: CurveDocument | None = None


# --- Запросы CLI ---


class RunConfig(BaseModel):
    subcommand: str
    workers: int = Field(default=1, ge=1)

    def _require_distinct(self, source: Path | None, target: Path | None) -> None:
        if source is not None and target is not None and Path(source).resolve() == Path(target).resolve():
            raise ValueError("Пути ввода и вывода должны различаться")


class SimulateRequest(RunConfig):
    subcommand: Literal["simulate"] = "simulate"
    params: Path | None = None
    preset: Literal["sprint"] | None = None
    n: int = Field(ge=1)
    seed: int
    out: Path
    regime: Regime = Field(default_factory=Regime)

    @model_validator(mode="after")
    def _one_source(self) -> SimulateRequest:
        if (self.params is None) == (self.preset is None):
            raise ValueError("Укажите ровно одно из --params или --preset")
        self._require_distinct(self.params, self.out)
        return self


class FitRequest(RunConfig):
    subcommand: Literal["fit"] = "fit"
    data: Path
    out: Path
    carry_forward: bool = False

    @model_validator(mode="after")
    def _distinct(self) -> FitRequest:
        self._require_distinct(self.data, self.out)
        return self


class EffectsRequest(RunConfig):
    subcommand: Literal["effects"] = "effects"
    fit: Path
    out: Path | None = None
    contrast: Contrast = Field(default_factory=Contrast)
    kappa: float | None = Field(default=None, gt=0, le=1)

    @model_validator(mode="after")
    def _distinct(self) -> EffectsRequest:
        self._require_distinct(self.fit, self.out)
        return self


class BootstrapRequest(RunConfig):
    subcommand: Literal["bootstrap"] = "bootstrap"
    data: Path
    out: Path | None = None
    gamma_out: Path | None = None
    contrast: Contrast = Field(default_factory=Contrast)
    replicates: int = Field(default=200, ge=1)
    seed: int
    level: float = Field(default=0.95, gt=0, lt=1)
    grid: list[float] | None = None
    kappa: float | None = Field(default=None, gt=0, le=1)
    carry_forward: bool = False

    _parse_grid = field_validator("grid", mode="before")(_parse_float_list)

    @model_validator(mode="after")
    def _distinct(self) -> BootstrapRequest:
        self._require_distinct(self.data, self.out)
        return self


class OracleRequest(RunConfig):
    subcommand: Literal["oracle"] = "oracle"
    params: Path | None = None
    preset: Literal["sprint"] | None = None
    out: Path | None = None
    seed: int
    n_mc: int = Field(default=100_000, ge=100)
    grid: list[float] | None = None

    _parse_grid = field_validator("grid", mode="before")(_parse_float_list)

    @model_validator(mode="after")
    def _one_source(self) -> OracleRequest:
        if (self.params is None) == (self.preset is None):
            raise ValueError("Укажите ровно одно из --params или --preset")
        self._require_distinct(self.params, self.out)
        if self.grid is not None and any(not math.isfinite(t) or t < 0 for t in self.grid):
            raise ValueError("Времена сетки должны быть конечными и неотрицательными")
        return self
