import numpy as np
import pytest

from dynpath.models import Dataset, Schedule, SubjectRecord
from dynpath.schemas import (
    CensoringSpec,
    Contrast,
    CovariateLaw,
    HazardPaths,
    SimulationParams,
    StructuralModel,
)


def make_dataset(rows, schedule=(0.0,), covariate_names=()):
    """
    Когорта из списка словарей: t (время), d (событие), a (лечение),
    c (ковариаты), m (значения медиатора; по умолчанию нули на всех визитах ≤ t).
    """
    subjects = []
    for i, row in enumerate(rows):
        visits = sum(1 for s in schedule if s <= row["t"])
        subjects.append(
            SubjectRecord(
                id=str(row.get("id", i)),
                treatment=float(row.get("a", 0.0)),
                baseline=tuple(float(c) for c in row.get("c", ())),
                mediators=tuple(float(m) for m in row.get("m", [0.0] * visits)),
                followup=float(row["t"]),
                event=bool(row["d"]),
            )
        )
    return Dataset(Schedule(tuple(schedule)), tuple(subjects), tuple(covariate_names))


def make_params(
        schedule=(0.0,),
        mu=0.05,
        alpha=0.0,
        beta=0.0,
        rho=(),
        lambdas=None,
        deltas=None,
        b=None,
        sigma=1.0,
        baseline=(),
        t_max=2.0,
        rate=0.0,
        treatment_probability=0.5,
        contrast=(1.0, 0.0),
):
    size = len(schedule)
    return SimulationParams(
        schedule=list(schedule),
        hazard=HazardPaths(baseline=mu, treatment=alpha, mediator=beta, covariates=list(rho)),
        structural=StructuralModel(
            lambdas=list(lambdas) if lambdas is not None else [0.0] * size,
            deltas=deltas,
            b=b or [],
            sigma=sigma,
        ),
        baseline=list(baseline),
        treatment_probability=treatment_probability,
        censoring=CensoringSpec(t_max=t_max, rate=rate),
        contrast=Contrast(a=contrast[0], a_star=contrast[1]),
    )


@pytest.fixture
def recovery_params():
    """Постоянные коэффициенты: μ=0.05, α=0.10, β=0.02, λ₀=1.5, B=0, цензурирование в t=2."""
    return make_params(mu=0.05, alpha=0.10, beta=0.02, lambdas=[1.5], sigma=0.5, t_max=2.0)


@pytest.fixture
def three_visit_params():
    return make_params(
        schedule=(0.0, 0.5, 1.0),
        mu=0.5,
        alpha=[0.1, 0.2, 0.3],
        beta=[0.1, 0.15, 0.2],
        lambdas=[1.0, 0.5, 0.3],
        b=[[], [0.5], [0.2, 0.3]],
        sigma=0.3,
        baseline=[CovariateLaw(name="x", kind="uniform", low=0.0, high=1.0)],
        rho=[0.1],
        deltas=[[0.2], [0.1], [0.0]],
        t_max=3.0,
    )


@pytest.fixture
def thin_last_visit_dataset():
    """
    43 субъекта с ковариатой c: все события до второго визита (t=1),
    к нему доживают трое, поэтому регрессия медиатора на нём недоступна.
    """
    rng = np.random.default_rng(11)
    rows = [
        {
            "a": i % 2,
            "c": [rng.uniform()],
            "m": [rng.normal() + i % 2],
            "t": 0.05 + 0.02 * i,
            "d": 1,
        }
        for i in range(40)
    ]
    rows += [
        {"a": a, "c": [rng.uniform()], "m": [rng.normal(), rng.normal()], "t": 2.0, "d": 0}
        for a in (0, 1, 0)
    ]
    return make_dataset(rows, schedule=(0.0, 1.0), covariate_names=("c",))
