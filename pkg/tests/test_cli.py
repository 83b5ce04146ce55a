import numpy as np
import pandas as pd
import pytest

from dynpath import commands
from dynpath.main import main
from dynpath.schemas import Contrast, FitDocument
from dynpath.services.aalen_service import aalen_service
from dynpath.services.dataset_service import dataset_service
from dynpath.services.effects_service import effects_service
from dynpath.services.mediator_service import mediator_service
from dynpath.services.simulation_service import simulation_service

PIPELINE_FILES = ("cohort/subjects.csv", "cohort/mediators.csv", "fit.json", "effects.csv", "bands.csv")


@pytest.fixture
def params_file(tmp_path, recovery_params):
    path = tmp_path / "params.json"
    path.write_text(recovery_params.model_dump_json(indent=2))
    return path


def run_pipeline(params, root, workers=1):
    root.mkdir(parents=True, exist_ok=True)
    cohort = root / "cohort"
    assert main(["simulate", "--params", str(params), "--n", "300", "--seed", "1", "--out", str(cohort)]) == 0
    assert main(["fit", "--data", str(cohort), "--out", str(root / "fit.json")]) == 0
    assert main(["effects", "--fit", str(root / "fit.json"), "--kappa", "0.72", "--out", str(root / "effects.csv")]) == 0
    assert main(
        [
            "bootstrap", "--data", str(cohort), "--B", "20", "--seed", "3", "--grid", "0.5,1,1.5",
            "--workers", str(workers), "--out", str(root / "bands.csv"),
        ]
    ) == 0


def test_simulate_is_reproducible(tmp_path, params_file):
    for name in ("a", "b"):
        code = main(["simulate", "--params", str(params_file), "--n", "100", "--seed", "1", "--out", str(tmp_path / name)])
        assert code == 0
    for name in ("subjects.csv", "mediators.csv", "ingestion.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_pipeline_is_byte_identical(tmp_path, params_file):
    run_pipeline(params_file, tmp_path / "first")
    run_pipeline(params_file, tmp_path / "second", workers=4)
    for name in PIPELINE_FILES:
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_effects_with_kappa_keeps_total(tmp_path, params_file):
    run_pipeline(params_file, tmp_path)
    corrected = pd.read_csv(tmp_path / "effects.csv")
    assert {"chie", "chde", "chie_corr", "chde_corr"} <= set(corrected.columns)
    assert corrected["chte"].equals(corrected["chte_corr"])

    assert main(["effects", "--fit", str(tmp_path / "fit.json"), "--out", str(tmp_path / "plain.csv")]) == 0
    plain = pd.read_csv(tmp_path / "plain.csv")
    assert plain["chte"].equals(corrected["chte"])
    assert "chie_corr" not in plain.columns
    assert "mediator_coef_corr" not in plain.columns
    np.testing.assert_allclose(corrected["mediator_coef_corr"], corrected["mediator_coef"] / 0.72, rtol=1e-12)


def test_effects_from_saved_fit_match_in_memory(tmp_path, thin_last_visit_dataset):
    cohort = tmp_path / "cohort"
    dataset_service.save_dataset(thin_last_visit_dataset, cohort)
    assert main(["fit", "--data", str(cohort), "--out", str(tmp_path / "fit.json")]) == 0
    assert main(["effects", "--fit", str(tmp_path / "fit.json"), "--out", str(tmp_path / "effects.csv")]) == 0

    dataset = dataset_service.load_directory(cohort)
    cumcoef = aalen_service.fit_additive(dataset)
    medcoef = mediator_service.fit_marginal(dataset)
    curves = effects_service.cumulative_effects(cumcoef, medcoef, dataset.schedule, Contrast())
    expected = effects_service.effects_table(
        curves,
        mediator=cumcoef.mediator,
        total_without_mediator=aalen_service.total_effect_without_mediator(dataset, Contrast()),
    )
    written = pd.read_csv(tmp_path / "effects.csv", float_precision="round_trip")
    assert list(written.columns) == list(expected.columns)
    np.testing.assert_allclose(written.to_numpy(), expected.to_numpy(), rtol=0, atol=1e-12)

    document = FitDocument.model_validate_json((tmp_path / "fit.json").read_text())
    _, restored, restored_medcoef = commands.fit_from_document(document)
    np.testing.assert_allclose(restored.covariates[0].values, cumcoef.covariates[0].values, rtol=0, atol=1e-12)
    assert [v.available for v in restored_medcoef.visits] == [True, False]
    assert restored_medcoef.visits[1].reason == medcoef.visits[1].reason
    assert restored_medcoef.gamma(0) == medcoef.gamma(0)


def test_sprint_preset_cohort_can_be_fitted(tmp_path):
    cohort = tmp_path / "cohort"
    assert main(["simulate", "--preset", "sprint", "--n", "1000", "--seed", "1", "--out", str(cohort)]) == 0
    assert main(["fit", "--data", str(cohort), "--out", str(tmp_path / "fit.json")]) == 0
    document = FitDocument.model_validate_json((tmp_path / "fit.json").read_text())
    assert document.schedule == simulation_service.sprint_like_params().schedule


def test_bootstrap_writes_gamma_table(tmp_path, params_file):
    run_pipeline(params_file, tmp_path)
    gamma_out = tmp_path / "gamma.csv"
    code = main(
        [
            "bootstrap", "--data", str(tmp_path / "cohort"), "--B", "20", "--seed", "3", "--grid", "0.5,1",
            "--kappa", "0.72", "--out", str(tmp_path / "bands_k.csv"), "--gamma-out", str(gamma_out),
        ]
    )
    assert code == 0
    gamma = pd.read_csv(gamma_out)
    assert list(gamma.columns) == ["visit", "time", "gamma", "gamma_lower", "gamma_upper"]
    assert list(gamma["time"]) == [0.0]
    assert gamma["gamma_lower"][0] <= gamma["gamma_upper"][0]
    document = FitDocument.model_validate_json((tmp_path / "fit.json").read_text())
    assert gamma["gamma"][0] == pytest.approx(document.mediator[0].treatment, rel=1e-12)

    bands = pd.read_csv(tmp_path / "bands_k.csv")
    assert {"mediator_coef", "mediator_coef_lower", "mediator_coef_corr_upper"} <= set(bands.columns)


def test_effects_to_stdout(tmp_path, params_file, capsys):
    run_pipeline(params_file, tmp_path)
    capsys.readouterr()
    assert main(["effects", "--fit", str(tmp_path / "fit.json"), "--contrast", "0,1"]) == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert header == "time,chde,chie,chte,sde,sie,ste,chte_nomed,mediator_coef,mediator_surv"


def test_oracle_table(tmp_path, params_file):
    out = tmp_path / "oracle.csv"
    code = main(["oracle", "--params", str(params_file), "--seed", "5", "--n-mc", "500", "--grid", "0.5,1,2", "--out", str(out)])
    assert code == 0
    table = pd.read_csv(out)
    assert list(table["time"]) == [0.5, 1.0, 2.0]
    assert {"sie", "mc_sie", "mc_sie_se", "sde", "mc_sde", "mc_sde_se"} <= set(table.columns)


def test_fit_missing_directory(tmp_path, capsys):
    missing = tmp_path / "missing"
    code = main(["fit", "--data", str(missing), "--out", str(tmp_path / "fit.json")])
    assert code != 0
    assert str(missing) in capsys.readouterr().err


def test_invalid_kappa(tmp_path, capsys):
    code = main(["effects", "--fit", str(tmp_path / "fit.json"), "--kappa", "1.5"])
    assert code == 2
    assert "kappa" in capsys.readouterr().err


def test_simulate_requires_one_parameter_source(tmp_path, params_file):
    code = main(
        ["simulate", "--params", str(params_file), "--preset", "sprint", "--n", "10", "--seed", "1", "--out", str(tmp_path)]
    )
    assert code == 2


def test_unknown_subcommand():
    assert main(["plot"]) != 0


def test_skipped_events_reported(tmp_path, capsys):
    cohort = tmp_path / "cohort"
    cohort.mkdir()
    (cohort / "subjects.csv").write_text(
        "id,treatment,followup,event\na,1,1,1\nb,1,2,0\nc,0,1.5,1\nd,0,3,1\ne,0,3.5,0\n"
    )
    (cohort / "mediators.csv").write_text("id,time,value\na,0,1\nb,0,2\nc,0,0\nd,0,0.5\ne,0,3\n")
    (cohort / "ingestion.json").write_text('{"schedule": [0.0]}')
    assert main(["fit", "--data", str(cohort), "--out", str(tmp_path / "fit.json")]) == 0
    assert "skipped_events=" in capsys.readouterr().err
