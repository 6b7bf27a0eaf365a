import pandas as pd
import pytest
import yaml

from placeboiv import cli
from placeboiv import data
from placeboiv import errors
from placeboiv import paths
from placeboiv import plans
from placeboiv import rng
from placeboiv import utils
from placeboiv.inference import RandomizationEngine

from .conftest import four_rows
from .conftest import simulated


TINY_PLAN = {
    "name": "tiny",
    "scenario": {"blinded": False, "confounded": True, "psi_null": False, "beta_null": False},
    "design": {"n_points": 6, "iterations": 0},
    "methods": ["iv_placebo", "iv_two_step"],
    "n_permutations": 99,
    "alpha_grid": [0.05, 0.1],
    "n_range": [60, 70],
    "master_seed": 12,
}


@pytest.fixture
def dataset_csv(tmp_path):
    path = tmp_path / "trial.csv"
    data.write_csv(simulated(n=300, seed=2, strength=3.0), path)
    return path


def run(capsys, *argv) -> tuple[int, dict]:
    code = cli.main(["--log-level", "WARNING", *map(str, argv)])
    out = capsys.readouterr().out
    return code, utils.loads(out) if out.strip() else {}


def test_simulate_is_reproducible(tmp_path, capsys):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "simulate", "uniform_unblinded", "--out", first, "--seed", 5)[0] == 0
    assert run(capsys, "simulate", "uniform_unblinded", "--out", second, "--seed", 5)[0] == 0
    assert first.read_bytes() == second.read_bytes()
    assert data.read_csv(first).n == 300

    manifest = utils.loads(paths.sidecar_manifest(first).read_text(encoding="utf-8"))
    assert manifest["master_seed"] == 5
    assert manifest["outputs"] == ["a.csv"]
    assert manifest["command"][:2] == ["placebo-iv", "--log-level"]
    assert manifest["config_digest"] == utils.digest(plans.load_yaml("uniform_unblinded"))


def test_simulate_rejects_constraint_violation(tmp_path, capsys):
    config = tmp_path / "blinded.yaml"
    config.write_text(
        yaml.safe_dump(
            {
                "scenario": {
                    "blinded": True,
                    "confounded": True,
                    "psi_null": False,
                    "beta_null": False,
                },
                "point": {"n": 100, "uniform": 1.0},
            }
        ),
        encoding="utf-8",
    )
    code = cli.main(["simulate", str(config), "--out", str(tmp_path / "x.csv"), "--seed", "1"])
    assert code == errors.EXIT_VALIDATION
    assert "ConstraintViolationError" in capsys.readouterr().err
    assert not (tmp_path / "x.csv").exists()


def test_estimate_by_hand(tmp_path, capsys):
    path = tmp_path / "hand.csv"
    data.write_csv(four_rows(), path)
    code, result = run(capsys, "estimate", path, "--effect", "psi")
    assert code == 0
    assert result["method"] == "iv"
    assert result["estimate"]["value"] == pytest.approx(2.0)
    assert result["itt"]["value"] == pytest.approx(2.0)

    code, result = run(capsys, "estimate", path, "--effect", "beta", "--out", tmp_path / "b.csv")
    assert code == 0
    assert result["method"] == "two_step"
    assert result["estimate"]["value"] == pytest.approx(-2.0)
    assert pd.read_csv(tmp_path / "b.csv")["value"][0] == pytest.approx(-2.0)


def test_estimate_degenerate_instrument(tmp_path, capsys):
    path = tmp_path / "flat.csv"
    data.write_csv(four_rows(q=[1, 1, 1, 1], d=[0, 0, 1, 1]), path)
    assert cli.main(["estimate", str(path)]) == errors.EXIT_DEGENERATE
    assert "DegenerateInstrumentError" in capsys.readouterr().err


def test_missing_dataset(tmp_path, capsys):
    assert cli.main(["estimate", str(tmp_path / "absent.csv")]) == errors.EXIT_IO


def test_randomization_test(dataset_csv, capsys):
    code, result = run(capsys, "test", dataset_csv, "--permutations", 199, "--seed", 3)
    assert code == 0
    expected = RandomizationEngine(199, seed=3).placebo_test(data.read_csv(dataset_csv))
    assert result["test"]["p_two_sided"] == expected.p_two_sided
    assert result["test"]["seed"] == 3

    code, result = run(
        capsys, "test", dataset_csv, "--effect", "beta", "--method", "unadjusted",
        "--permutations", 199, "--seed", 3,
    )
    assert code == 0
    assert result["test"]["statistic"] == "beta_hat_unadjusted"


def test_confidence_interval(dataset_csv, tmp_path, capsys):
    out = tmp_path / "profile.csv"
    code, result = run(
        capsys, "ci", dataset_csv, "--permutations", 199, "--seed", 8, "--alpha", 0.05, "--out", out
    )
    assert code == 0
    interval = result["ci"]
    assert interval["lower"] <= interval["estimate"] <= interval["upper"]
    assert interval["level"] == pytest.approx(0.9)
    assert len(pd.read_csv(out)) == result["grid_points"]
    with pytest.raises(SystemExit):
        cli.main(["ci", str(dataset_csv), "--alpha", "0.6"])


def test_experiment_and_report(tmp_path, capsys):
    plan = tmp_path / "tiny.yaml"
    plan.write_text(yaml.safe_dump(TINY_PLAN), encoding="utf-8")
    results = tmp_path / "results"
    assert cli.main(["experiment", str(plan), "--out-dir", str(results), "--seed", "40"]) == 0

    directory = paths.experiment_dir(results, "tiny")
    manifest = utils.loads(paths.manifest(directory).read_text(encoding="utf-8"))
    assert manifest["master_seed"] == rng.derive_seed(40, 0)
    assert paths.CURVES in manifest["outputs"]
    assert "stratified_cor_qm.csv" in manifest["outputs"]
    assert paths.stratified(directory, "cor_zx").exists()
    curves = pd.read_csv(paths.curves(directory))
    assert set(curves["kind"]) == {"power"}
    assert len(curves) == 2 * 2

    assert cli.main(["report", str(results)]) == 0
    report = pd.read_csv(paths.report(results))
    assert set(report["experiment"]) == {"tiny"}
    assert len(report) == len(curves)
    assert paths.sidecar_manifest(paths.report(results)).exists()


def test_report_without_results(tmp_path, capsys):
    assert cli.main(["report", str(tmp_path)]) == errors.EXIT_IO
    assert "FileNotFoundError" in capsys.readouterr().err


def test_coverage_study(tmp_path, capsys):
    out = tmp_path / "coverage.csv"
    argv = ["study", "coverage", "uniform_unblinded", "--out", str(out)]
    argv += ["--replicates", "3", "--permutations", "99", "--seed", "6"]
    assert cli.main(argv) == 0
    (row,) = pd.read_csv(out).to_dict(orient="records")
    assert row["level"] == 0.9
    assert row["n_replicates"] + row["n_failed"] == 3
    assert paths.sidecar_manifest(out).exists()


def test_dataset_commands_write_manifests(dataset_csv, tmp_path, capsys):
    for command, extra in (
        ("estimate", ["--effect", "beta"]),
        ("test", ["--permutations", 99]),
        ("ci", ["--permutations", 199]),
    ):
        out = tmp_path / f"{command}.csv"
        code, _ = run(capsys, command, dataset_csv, *extra, "--seed", 9, "--out", out)
        assert code == 0
        manifest = utils.loads(paths.sidecar_manifest(out).read_text(encoding="utf-8"))
        assert manifest["outputs"] == [out.name]
        assert manifest["master_seed"] == 9
        assert manifest["command"][-2:] == ["--out", str(out)]


def test_experiment_outputs_do_not_depend_on_workers(tmp_path):
    plan = tmp_path / "tiny.yaml"
    plan.write_text(yaml.safe_dump(TINY_PLAN), encoding="utf-8")
    written = []
    for workers in (1, 8):
        results = tmp_path / f"workers_{workers}"
        argv = ["experiment", str(plan), "--out-dir", str(results), "--seed", "40"]
        assert cli.main(argv + ["--workers", str(workers)]) == 0
        directory = paths.experiment_dir(results, "tiny")
        written.append(
            {
                path.name: path.read_bytes()
                for path in directory.iterdir()
                if path != paths.manifest(directory)
            }
        )
    assert paths.CURVES in written[0]
    assert written[0] == written[1]
