"""
Сервис загрузки и сохранения когорт.

Читает таблицу субъектов и длинную таблицу измерений медиатора,
проверяет их согласованность с расписанием и собирает Dataset.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from dynpath.errors import INVALID_INPUT, NOT_FOUND, DynPathError
from dynpath.models import Dataset, Schedule, SubjectRecord
from dynpath.schemas import IngestionConfig

logger = logging.getLogger(__name__)

SUBJECTS_FILE = "subjects.csv"
MEDIATORS_FILE = "mediators.csv"
CONFIG_FILE = "ingestion.json"
FLOAT_FORMAT = "%.17g"


class DatasetService:
    """Сервис для чтения и записи когорт в табличном формате."""

    def load_config(self, path: str | Path) -> IngestionConfig:
        path = Path(path)
        if not path.is_file():
            raise DynPathError(NOT_FOUND, f"Файл конфигурации не найден: {path}")
        try:
            return IngestionConfig.model_validate_json(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise DynPathError(INVALID_INPUT, f"Некорректная конфигурация {path}: {exc}") from exc

    def load_dataset(self, subjects_table, mediators_table, config: IngestionConfig) -> Dataset:
        """
        Загрузка когорты из двух таблиц.

        Аргументы:
            subjects_table: Путь или текстовый буфер таблицы субъектов
                (id, treatment, followup, event, ковариаты)
            mediators_table: Путь или текстовый буфер таблицы медиатора (id, time, value)
            config (IngestionConfig): Расписание, имена ковариат, режим strict/carry_forward

        Возвращает:
            Dataset: Проверенная когорта

        Выбрасывает:
            DynPathError: Некорректная строка, неизвестный субъект, измерение после
                окончания наблюдения, повтор (id, time), пропуск в строгом режиме
        """
        schedule = Schedule(tuple(config.schedule))
        covariates = list(config.covariates)
        subjects = self._read_table(subjects_table, "субъектов", ["id", "treatment", "followup", "event", *covariates])
        mediators = self._read_table(mediators_table, "медиатора", ["id", "time", "value"])

        treatment = self._numeric(subjects, "treatment", "субъектов")
        followup = self._numeric(subjects, "followup", "субъектов")
        event = self._numeric(subjects, "event", "субъектов")
        baseline = np.column_stack(
            [self._numeric(subjects, name, "субъектов") for name in covariates]
        ) if covariates else np.zeros((len(subjects), 0))

        bad_event = ~np.isin(event, (0.0, 1.0))
        if bad_event.any():
            row = int(np.argmax(bad_event))
            raise DynPathError(INVALID_INPUT, f"Таблица субъектов, строка {row + 2}: event должен быть 0 или 1")
        bad_followup = ~(followup > 0)
        if bad_followup.any():
            row = int(np.argmax(bad_followup))
            raise DynPathError(INVALID_INPUT, f"Таблица субъектов, строка {row + 2}: followup должен быть > 0")

        ids = subjects["id"].tolist()
        duplicated = subjects["id"].duplicated()
        if duplicated.any():
            row = int(np.argmax(duplicated.to_numpy()))
            raise DynPathError(INVALID_INPUT, f"Повторяющийся идентификатор субъекта: {ids[row]}")
        position = {subject_id: row for row, subject_id in enumerate(ids)}

        # --- Таблица медиатора ---
        times = self._numeric(mediators, "time", "медиатора")
        values = self._numeric(mediators, "value", "медиатора")
        rows = mediators["id"].map(position)
        unknown = rows.isna().to_numpy()
        if unknown.any():
            row = int(np.argmax(unknown))
            raise DynPathError(INVALID_INPUT, f"Неизвестный субъект в таблице медиатора: {mediators['id'].iloc[row]}")
        rows = rows.to_numpy(dtype=int)

        visit = np.searchsorted(schedule.array, times, side="left")
        visit_clipped = np.minimum(visit, len(schedule) - 1)
        off_schedule = (visit >= len(schedule)) | (schedule.array[visit_clipped] != times)
        if off_schedule.any():
            row = int(np.argmax(off_schedule))
            raise DynPathError(
                INVALID_INPUT,
                f"Таблица медиатора, строка {row + 2}: время {times[row]} не входит в расписание",
            )
        late = times > followup[rows]
        if late.any():
            row = int(np.argmax(late))
            raise DynPathError(
                INVALID_INPUT,
                f"Субъект {ids[rows[row]]}: измерение медиатора в момент {times[row]} после окончания наблюдения",
            )
        repeated = pd.Series(rows * len(schedule) + visit).duplicated().to_numpy()
        if repeated.any():
            row = int(np.argmax(repeated))
            raise DynPathError(
                INVALID_INPUT,
                f"Субъект {ids[rows[row]]}: повторное измерение медиатора в момент {times[row]}",
            )

        matrix = np.full((len(ids), len(schedule)), np.nan)
        matrix[rows, visit] = values
        expected = np.searchsorted(schedule.array, followup, side="right")

        filled = 0
        records = []
        for row, subject_id in enumerate(ids):
            observed = matrix[row, : expected[row]]
            gaps = np.flatnonzero(np.isnan(observed))
            if gaps.size:
                if config.mode == "strict" or gaps[0] == 0:
                    raise DynPathError(
                        INVALID_INPUT,
                        f"Субъект {subject_id}: missing mediator, нет значения медиатора "
                        f"в момент {schedule.times[gaps[0]]}",
                    )
                observed = pd.Series(observed).ffill().to_numpy()
                filled += int(gaps.size)
            records.append(
                SubjectRecord(
                    id=subject_id,
                    treatment=float(treatment[row]),
                    baseline=tuple(float(c) for c in baseline[row]),
                    mediators=tuple(float(m) for m in observed),
                    followup=float(followup[row]),
                    event=bool(event[row]),
                )
            )

        if filled:
            logger.warning("Заполнено пропусков медиатора методом LOCF: %d", filled)
        dataset = Dataset(schedule, tuple(records), tuple(covariates), carried_forward=filled)
        logger.info("Загружено субъектов: %d, событий: %d", dataset.n, int(dataset.event.sum()))
        return dataset

    def load_directory(self, path: str | Path, carry_forward: bool = False) -> Dataset:
        """Загрузка когорты из каталога с subjects.csv, mediators.csv и ingestion.json."""
        path = Path(path)
        if not path.is_dir():
            raise DynPathError(NOT_FOUND, f"Каталог с данными не найден: {path}")
        config = self.load_config(path / CONFIG_FILE)
        if carry_forward:
            config = config.model_copy(update={"mode": "carry_forward"})
        for name in (SUBJECTS_FILE, MEDIATORS_FILE):
            if not (path / name).is_file():
                raise DynPathError(NOT_FOUND, f"Файл не найден: {path / name}")
        return self.load_dataset(path / SUBJECTS_FILE, path / MEDIATORS_FILE, config)

    def subjects_frame(self, dataset: Dataset) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "id": [s.id for s in dataset.subjects],
                "treatment": dataset.treatment,
                "followup": dataset.followup,
                "event": dataset.event.astype(int),
            }
        )
        for j, name in enumerate(dataset.covariate_names):
            frame[name] = dataset.baseline[:, j]
        return frame

    def mediators_frame(self, dataset: Dataset) -> pd.DataFrame:
        rows = [
            (subject.id, dataset.schedule.times[k], value)
            for subject in dataset.subjects
            for k, value in enumerate(subject.mediators)
        ]
        return pd.DataFrame(rows, columns=["id", "time", "value"])

    def save_dataset(self, dataset: Dataset, out_dir: str | Path) -> None:
        """Запись когорты в формате загрузки (с ingestion.json в строгом режиме)."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.subjects_frame(dataset).to_csv(
            out_dir / SUBJECTS_FILE, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )
        self.mediators_frame(dataset).to_csv(
            out_dir / MEDIATORS_FILE, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )
        config = IngestionConfig(
            schedule=list(dataset.schedule.times), covariates=list(dataset.covariate_names), mode="strict"
        )
        (out_dir / CONFIG_FILE).write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")

    def _read_table(self, source, label: str, required: list[str]) -> pd.DataFrame:
        if isinstance(source, (str, Path)) and not Path(source).is_file():
            raise DynPathError(NOT_FOUND, f"Таблица {label} не найдена: {source}")
        try:
            frame = pd.read_csv(source, dtype={"id": str}, skipinitialspace=True, float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
            raise DynPathError(INVALID_INPUT, f"Не удалось разобрать таблицу {label}: {exc}") from exc
        missing = [column for column in required if column not in frame.columns]
        if missing:
            raise DynPathError(INVALID_INPUT, f"В таблице {label} нет столбцов: {', '.join(missing)}")
        empty_id = frame["id"].isna().to_numpy()
        if empty_id.any():
            row = int(np.argmax(empty_id))
            raise DynPathError(INVALID_INPUT, f"Таблица {label}, строка {row + 2}: пустой id")
        return frame

    def _numeric(self, frame: pd.DataFrame, column: str, label: str) -> np.ndarray:
        values = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.argmax(bad))
            raise DynPathError(
                INVALID_INPUT,
                f"Таблица {label}, строка {row + 2}: некорректное значение в столбце {column}: "
                f"{frame[column].iloc[row]!r}",
            )
        return values


# Экземпляр сервиса для использования в приложении
dataset_service = DatasetService()
