"""
End-to-end tests of the command-line entry point and its exit codes.
"""

import csv
import json
from pathlib import Path

import pytest

from quasarbench.cli import CLAIMS, build_report, load_config, main, pin_certificate
from quasarbench.models import CertificationReport, ConstantsCertificate
from quasarbench.store import ResultStore, config_digest, problem_digest

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

QUADRATIC = {"family": "quadratic", "params": {"A": [[1.0]]}, "dimension": 1, "minimizer": [0.0], "start": [1.0]}


def write_config(tmp_path, name, **fields):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps({"name": name, **fields}))
    return path


def run_digest(store, path):
    return config_digest(pin_certificate(load_config(path), store)[0])


def run_csv(store, path):
    return store.path("runs", f"{run_digest(store, path)}.csv")


def test_certify_quadratic(result_store, tmp_path, capsys):
    path = write_config(
        tmp_path, "certify", claim="certification", problem=QUADRATIC, certify={"grid_points": 2_000, "samples": 1_000}
    )
    assert main(["certify", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "gamma:   1" in out
    assert "class:   F_sc" in out
    assert len(list((result_store.root / "certificates").glob("*.json"))) == 1

    # a second call reuses the stored certificate
    assert main(["certify", "--config", str(path)]) == 0
    assert "gamma:   1" in capsys.readouterr().out


def test_certify_failure_exits_4(result_store, tmp_path, capsys):
    problem = {"family": "sine_bump", "params": {"a": 2.0, "b": 5.0}, "dimension": 1}
    path = write_config(tmp_path, "wavy", problem=problem, certify={"grid_points": 2_000, "samples": 1_000})
    assert main(["certify", "--config", str(path)]) == 4
    assert "witness:" in capsys.readouterr().err


def test_below_threshold_exits_3(result_store, capsys):
    assert main(["run", "--config", str(CONFIG_DIR / "sqc_below_threshold.json")]) == 3
    assert "minimal admissible T = 11" in capsys.readouterr().err
    assert not any((result_store.root / "runs").iterdir())


def test_invalid_config_exits_1(result_store, tmp_path, capsys):
    path = write_config(tmp_path, "bad", problem=QUADRATIC, T=10, seeds=0)
    assert main(["run", "--config", str(path)]) == 1
    assert "invalid configuration" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1


def test_usage_errors_exit_1(result_store):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 1


def test_divergence_exits_2(result_store, tmp_path):
    path = write_config(
        tmp_path, "diverge", problem=QUADRATIC, schedule={"name": "fixed", "overrides": {"alpha": 3.0}}, T=100
    )
    assert main(["run", "--config", str(path)]) == 2


def test_aborted_run_is_recomputed(result_store, tmp_path):
    path = write_config(
        tmp_path, "aborted", problem=QUADRATIC, schedule={"name": "fixed", "overrides": {"alpha": 3.0}}, T_grid=[5, 100]
    )
    assert main(["run", "--config", str(path)]) == 2
    digest = run_digest(result_store, path)
    # the T=5 cell finished before the T=100 cell diverged
    assert result_store.path("runs", f"{digest}.jsonl").exists()
    assert not result_store.has_runs(digest)
    assert main(["run", "--config", str(path)]) == 2
    assert main(["sweep", "--config", str(path)]) == 2


def test_stored_failures_keep_their_exit_code(result_store, tmp_path):
    path = write_config(tmp_path, "replayed", problem=QUADRATIC, T=20)
    assert main(["run", "--config", str(path)]) == 0
    digest = run_digest(result_store, path)
    assert result_store.load_manifest(digest).failures == 0

    result_store.mark_runs_complete(digest, runs=0, failures=1)
    assert main(["run", "--config", str(path)]) == 2
    assert main(["run", "--config", str(path), "--force"]) == 0
    assert result_store.load_manifest(digest).failures == 0


def test_new_certificate_gets_new_runs(result_store, tmp_path):
    path = write_config(tmp_path, "recertified", problem=QUADRATIC, T=20)
    assert main(["run", "--config", str(path)]) == 0
    first = run_digest(result_store, path)

    report = CertificationReport(
        certificate=ConstantsCertificate(gamma=0.5, mu=0.5, L=1.0), worst_point_gamma=[1.0], min_gap=0.0
    )
    result_store.save_certificate(problem_digest(load_config(path).problem), report)
    second = run_digest(result_store, path)
    assert second != first
    assert not result_store.has_runs(second)

    assert main(["run", "--config", str(path)]) == 0
    assert result_store.has_runs(second)
    stored = json.loads(result_store.path("configs", f"{second}.json").read_text())
    assert stored["problem"]["certificate"]["gamma"] == 0.5
    assert stored["problem"]["certificate"]["R"] == 1.0


def test_runs_are_byte_identical(result_store, tmp_path):
    path = write_config(
        tmp_path, "noisy", problem=QUADRATIC,
        oracle={"kind": "stochastic", "sigma": 1.0, "master_seed": 3}, T=50, seeds=4,
    )
    assert main(["run", "--config", str(path)]) == 0
    target = run_csv(result_store, path)
    first = target.read_bytes()
    assert len(first.decode().splitlines()) == 1 + 4 * 51

    assert main(["run", "--config", str(path), "--force"]) == 0
    assert target.read_bytes() == first

    assert main(["run", "--config", str(path), "--force", "--jobs", "2"]) == 0
    assert target.read_bytes() == first


def test_stored_runs_are_not_recomputed(result_store, tmp_path):
    path = write_config(tmp_path, "once", problem=QUADRATIC, T=20)
    assert main(["run", "--config", str(path)]) == 0
    target = run_csv(result_store, path)
    stamp = target.stat().st_mtime_ns
    assert main(["run", "--config", str(path)]) == 0
    assert target.stat().st_mtime_ns == stamp


def test_seed_override_changes_digest(result_store, tmp_path):
    path = write_config(tmp_path, "seeded", problem=QUADRATIC, oracle={"kind": "stochastic", "sigma": 1.0}, T=5)
    assert config_digest(load_config(path, 1)) != config_digest(load_config(path, 2))
    assert load_config(path, 9).oracle.master_seed == 9


def test_sweep_with_bound_fit_and_comparison(result_store, tmp_path, capsys):
    path = write_config(
        tmp_path, "noiseless", claim="sgd-noiseless-rate", problem=QUADRATIC,
        schedule={"name": "qc_constant"}, T_grid=[10, 100, 1_000, 10_000], bound="qc", compare_gower_beta=0.5,
        output_rule={"kind": "last-iterate"},
    )
    assert main(["sweep", "--config", str(path), "--bound", "--fit"]) == 0
    out = capsys.readouterr().out
    assert "-> pass" in out

    digest = run_digest(result_store, path)
    with result_store.path("summaries", f"{digest}.csv").open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert [int(r["T"]) for r in rows] == [10, 100, 1_000, 10_000]
    assert all(r["pass"] == "true" for r in rows)
    assert json.loads(result_store.path("summaries", f"{digest}.fit.json").read_text())["verdict"] == "pass"

    with result_store.path("reports", f"{digest}.comparison.csv").open(newline="") as handle:
        table = {int(r["T"]): r for r in csv.DictReader(handle)}
    # certificate R comes from the start point, sigma = 0
    assert float(table[100]["qc_bound"]) == pytest.approx(0.04)

    assert main(["fit", "--config", str(path)]) == 0
    assert main(["report"]) == 0
    report = result_store.path("reports", "report.md").read_text()
    assert "| noiseless |" in report
    assert "| pass |" in report


def test_sweep_bound_needs_config_entry(result_store, tmp_path):
    path = write_config(tmp_path, "nobound", problem=QUADRATIC, T_grid=[10, 20])
    assert main(["sweep", "--config", str(path), "--bound"]) == 1


def test_fit_without_summary_exits_1(result_store, tmp_path):
    path = write_config(tmp_path, "nosummary", problem=QUADRATIC, T_grid=[10, 20])
    assert main(["fit", "--config", str(path)]) == 1


def test_empty_report_marks_every_claim_not_run(result_store):
    text = build_report(ResultStore())
    for claim, _ in CLAIMS:
        assert f"## {claim}" in text
    assert text.count("| - | - | not run | - |") == len(CLAIMS)


def test_report_command_writes_file(result_store, capsys):
    assert main(["report"]) == 0
    assert "report.md" in capsys.readouterr().out
    assert result_store.path("reports", "report.md").exists()


def test_shipped_configs_validate():
    paths = sorted(CONFIG_DIR.glob("*.json"))
    assert paths
    claims = {claim for claim, _ in CLAIMS}
    for path in paths:
        config = load_config(path)
        assert config.claim is None or config.claim in claims
