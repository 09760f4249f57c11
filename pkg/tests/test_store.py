"""
Tests for the result store: digests, CSV formatting and round trips.
"""

import csv

import pytest

from quasarbench.models import (
    CertificationReport,
    ConstantsCertificate,
    ExperimentConfig,
    ExponentReport,
    RateFit,
    RunRecord,
    SummaryRow,
    SweepSummary,
)
from quasarbench.store import (
    RUN_COLUMNS,
    SUMMARY_COLUMNS,
    config_digest,
    format_value,
    load_fit,
    problem_digest,
)


def _config(**overrides):
    data = {
        "name": "store test",
        "claim": "sgd-average-subopt",
        "problem": {"family": "quadratic", "params": {"A": [[1.0]]}, "dimension": 1, "start": [1.0]},
        "oracle": {"kind": "stochastic", "sigma": 1.0, "master_seed": 5},
        "T": 3,
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


def _record(run_index=0, T=3):
    return RunRecord(
        config_digest="abc",
        run_index=run_index,
        seed=123 + run_index,
        T=T,
        t=list(range(T + 1)),
        f_gap=[0.5, 0.1, 0.01, 0.001][: T + 1],
        grad_norm=[1.0, 0.4, 0.1, 0.04][: T + 1],
        dist_sq=[1.0, 0.2, 0.02, 0.002][: T + 1],
        avg_subopt=0.037,
    )


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert float(format_value(1.0 / 3.0)) == 1.0 / 3.0
    assert format_value(None) == ""
    assert format_value(True) == "true"
    assert format_value(False) == "false"
    assert format_value(7) == "7"


def test_config_digest_tracks_numerics_only():
    base = config_digest(_config())
    assert base == config_digest(_config())
    assert len(base) == 64
    assert base == config_digest(_config(name="renamed", claim=None))
    assert base != config_digest(_config(oracle={"kind": "stochastic", "sigma": 1.0, "master_seed": 6}))
    assert base != config_digest(_config(T=4))


def test_problem_digest_ignores_start_and_certificate():
    a = _config().problem
    b = _config(
        problem={
            "family": "quadratic",
            "params": {"A": [[1.0]]},
            "dimension": 1,
            "start": [3.0],
            "certificate": {"gamma": 1.0, "L": 1.0},
        }
    ).problem
    assert problem_digest(a) == problem_digest(b)
    c = _config(problem={"family": "quadratic", "params": {"A": [[2.0]]}, "dimension": 1}).problem
    assert problem_digest(a) != problem_digest(c)


def test_append_and_load_records(result_store):
    appender = result_store.run_appender("abc")
    result_store.append_record(appender, _record(1))
    result_store.append_record(appender, _record(0))
    # appended rows alone do not make a finished run set
    assert not result_store.has_runs("abc")
    result_store.mark_runs_complete("abc", runs=2, failures=1)
    assert result_store.has_runs("abc")
    assert result_store.load_manifest("abc").failures == 1

    with result_store.path("runs", "abc.csv").open(newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == RUN_COLUMNS
    assert len(rows) == 1 + 2 * 4
    assert rows[1] == ["abc", "124", "0", "0.5", "1", "1"]

    loaded = result_store.load_records("abc")
    assert [r.run_index for r in loaded] == [0, 1]
    assert loaded[0].avg_subopt == 0.037
    assert loaded[0].f_gap == []

    result_store.clear_runs("abc")
    assert not result_store.has_runs("abc")
    assert result_store.load_manifest("abc") is None
    assert result_store.load_records("abc") == []


def test_summary_round_trip(result_store):
    summary = SweepSummary(
        statistic="avg-subopt",
        rows=[
            SummaryRow(config_digest="abc", T=10, statistic="avg-subopt", mean=0.1, ci95=0.01, seeds=30, bound=0.44, passed=True),
            SummaryRow(config_digest="abc", T=100, statistic="avg-subopt", mean=1.0 / 3.0, ci95=0.0, seeds=30),
        ],
    )
    path = result_store.write_summary("abc", summary)
    assert path.read_text().splitlines()[0] == ",".join(SUMMARY_COLUMNS)
    assert result_store.read_summary("abc") == summary

    # rewriting replaces rather than appends
    result_store.write_summary("abc", summary)
    assert result_store.read_summary("abc") == summary


def test_fit_round_trip(result_store):
    fit = RateFit(slope=-0.5, intercept=0.1, r_squared=0.99, T_min=10, T_max=1e4, n_points=4)
    report = ExponentReport(fit=fit, predicted=-0.5, tolerance=0.15, verdict="pass")
    result_store.write_fit("abc", report)
    stored = result_store.read_fit("abc")
    assert stored["verdict"] == "pass"
    assert load_fit(stored) == fit
    assert result_store.read_fit("missing") is None
    assert load_fit({}) is None


def test_certificate_and_config_round_trip(result_store):
    report = CertificationReport(
        certificate=ConstantsCertificate(gamma=0.5, G=1.05, provenance="grid-certified"),
        worst_point_gamma=[1.0001],
        min_gap=0.0,
        function_class="nonsmooth-qc",
    )
    result_store.save_certificate("key", report)
    assert result_store.load_certificate("key") == report
    assert result_store.load_certificate("other") is None

    config = _config()
    result_store.save_config(config_digest(config), config)
    assert result_store.list_configs() == {config_digest(config): config}


def test_comparison_table(result_store):
    path = result_store.write_comparison("abc", [(1, 40.0, None), (100, 0.44, 0.158)])
    lines = path.read_text().splitlines()
    assert lines == ["T,qc_bound,constant_step_bound", "1,40,", "100,0.44,0.158"]


def test_store_uses_result_dir_from_environment(result_store, tmp_path):
    assert result_store.root == tmp_path / "results"
    for name in ("configs", "runs", "summaries", "certificates", "reports"):
        assert (tmp_path / "results" / name).is_dir()


@pytest.mark.parametrize("value", [0.1, 1e-300, 123456789.123456789, 2.0**-1074])
def test_float_cells_round_trip(value):
    assert float(format_value(value)) == value
