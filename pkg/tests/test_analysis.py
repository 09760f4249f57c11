"""
Tests for summaries, bound verdicts, rate fits, sweeps and complexity estimates.
"""

import random

import pytest
from pydantic import ValidationError

from quasarbench.analysis import (
    BOUND_NAMES,
    SweepResult,
    bound_check,
    bound_for,
    compare_bounds,
    empirical_complexity,
    exponent_report,
    half_width,
    predicted_exponent,
    rate_fit,
    regime_threshold,
    run_sweep,
    summarize,
    sweep_horizons,
    z_value,
)
from quasarbench.errors import BudgetExhausted, ConfigurationError, DomainError, RegimeError
from quasarbench.models import ConstantsCertificate, ExperimentConfig, OutputRule, RunRecord, SummaryRow, SweepSummary
from quasarbench.schedules import fixed_schedule, qc_bound
from quasarbench.solvers import sgd_run


def _summary(points, statistic="avg-subopt", seeds=30, ci=0.0):
    rows = [SummaryRow(T=T, statistic=statistic, mean=mean, ci95=ci, seeds=seeds) for T, mean in points]
    return SweepSummary(statistic=statistic, rows=rows)


def _quadratic_config(**overrides):
    data = {
        "name": "noiseless quadratic",
        "problem": {"family": "quadratic", "params": {"A": [[1.0]]}, "dimension": 1, "start": [1.0]},
        "oracle": {"kind": "deterministic"},
        "schedule": {"name": "qc_constant"},
        "T_grid": [10, 100, 1_000, 10_000],
        "seeds": 1,
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


def test_z_value_and_half_width():
    assert z_value() == pytest.approx(1.959964, abs=1e-6)
    assert half_width([1.0]) == 0.0
    assert half_width([1.0, 1.0, 1.0]) == 0.0
    assert half_width([0.0, 2.0]) == pytest.approx(1.959964, rel=1e-6)


@pytest.mark.parametrize("exponent", [-0.5, -1.0, 0.0])
def test_rate_fit_exact_power_laws(exponent):
    fit = rate_fit([(T, 3.0 * T**exponent) for T in (10, 100, 1_000, 10_000)])
    assert fit.slope == pytest.approx(exponent, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.T_min == 10 and fit.T_max == 10_000
    assert fit.n_points == 4


def test_rate_fit_rejects_bad_points():
    with pytest.raises(DomainError):
        rate_fit([(10, 1.0), (100, 0.0)])
    with pytest.raises(DomainError):
        rate_fit([(10, 1.0), (10, 0.5)])
    with pytest.raises(DomainError):
        rate_fit([(10, 1.0)])


def test_bound_check_examples():
    bound = bound_for("qc", ConstantsCertificate(gamma=1.0, L=1.0, R=1.0), 1.0)
    passed = bound_check(_summary([(100, 0.30)], ci=0.02), bound)
    assert passed.rows[0].bound == pytest.approx(0.44)
    assert passed.rows[0].passed
    assert passed.verdict

    failed = bound_check(_summary([(100, 0.50)], ci=0.02), bound)
    assert failed.rows[0].passed is False
    assert failed.verdict is False


def test_bound_check_is_monotone_in_the_bound():
    summary = _summary([(100, 0.30), (1_000, 0.10)], ci=0.02)
    cert = ConstantsCertificate(gamma=1.0, L=1.0, R=1.0)
    previous = None
    for slack in (0.25, 0.5, 1.0, 2.0, 4.0):
        verdict = bound_check(summary, bound_for("qc", cert, 1.0, slack=slack)).verdict
        assert previous is not True or verdict
        previous = verdict


def test_bound_check_rejects_statistic_mismatch():
    bound = bound_for("gower_distance", ConstantsCertificate(gamma=1.0, mu=1.0, L=1.0, R=1.0), 1.0)
    with pytest.raises(ConfigurationError):
        bound_check(_summary([(200, 0.05)]), bound)


def test_bound_evaluators():
    cert = ConstantsCertificate(gamma=1.0, mu=1.0, L=1.0, G=1.0, R=1.0)
    assert bound_for("sqc", cert, 1.0)(100) == pytest.approx(0.0291, abs=1e-4)
    assert bound_for("gower_distance", cert, 1.0)(200) == pytest.approx(0.0561, abs=1e-4)
    assert bound_for("gower_constant_step", cert, 1.0, beta=0.5)(100) == pytest.approx(0.158, abs=1e-3)
    assert bound_for("nonsmooth", cert, 0.0)(100) == pytest.approx(0.1)
    assert bound_for("nonsmooth", cert, 1.0)(100) == pytest.approx(0.2)
    assert bound_for("nonsmooth_harmonic_distance", cert, 0.0, slack=1.1)(10) == pytest.approx(0.11)
    assert bound_for("epsilon", cert, 0.0, slack=1.1, epsilon=0.1)(1) == pytest.approx(0.11)
    assert bound_for("sqc", cert, 1.0).statistic == "output-subopt"
    assert set(BOUND_NAMES) >= {"qc", "sqc", "nonsmooth"}
    with pytest.raises(ConfigurationError):
        bound_for("unknown", cert, 1.0)
    with pytest.raises(ConfigurationError):
        bound_for("gower_constant_step", cert, 1.0)
    with pytest.raises(ConfigurationError):
        bound_for("qc", ConstantsCertificate(gamma=0.5, G=1.0, R=1.0), 1.0)


def test_compare_bounds_at_unit_constants():
    table = compare_bounds([1, 100], 1.0, 1.0, 20.0, 1.0, 0.5)
    assert table[0] == (1, qc_bound(1, 1.0, 1.0, 20.0, 1.0), None)
    T, qc, other = compare_bounds([100], 1.0, 1.0, 1.0, 1.0, 0.5)[0]
    assert (T, qc) == (100, pytest.approx(0.44))
    assert other == pytest.approx(0.158, abs=1e-3)


def test_summarize_is_order_independent():
    records = [RunRecord(T=10, run_index=i, avg_subopt=0.1 * (i + 1)) for i in range(5)]
    shuffled = records[:]
    random.Random(4).shuffle(shuffled)
    a = summarize({10: records}, "avg-subopt", "abc")
    b = summarize({10: shuffled}, "avg-subopt", "abc")
    assert a == b
    assert a.rows[0].mean == pytest.approx(0.3)
    assert a.rows[0].seeds == 5
    assert a.rows[0].config_digest == "abc"


def test_predicted_exponents():
    assert predicted_exponent("qc_constant", 1.0) == (-0.5, 0.15)
    assert predicted_exponent("qc_constant", 0.0) == (-1.0, 0.15)
    assert predicted_exponent("sqc_log", 1.0) == (-1.0, 0.2)
    assert predicted_exponent("nonsmooth_harmonic", 0.0)[0] == -1.0
    with pytest.raises(ConfigurationError):
        predicted_exponent("fixed", 0.0)


def test_regime_thresholds(unit_cert):
    assert regime_threshold("qc_constant", unit_cert, 1.0) == pytest.approx(1.0)
    assert regime_threshold("qc_constant", unit_cert, 0.0) is None
    assert regime_threshold("sqc_log", unit_cert, 1.0) == 11


def test_exponent_report_verdicts():
    exact = _summary([(T, T**-0.5) for T in (100, 1_000, 10_000, 100_000)])
    assert exponent_report(exact, "qc_constant", 1.0).verdict == "pass"
    assert exponent_report(exact, "qc_constant", 0.0).verdict == "fail"

    short = _summary([(T, T**-0.5) for T in (100, 1_000, 10_000)])
    assert exponent_report(short, "qc_constant", 1.0).verdict == "inconclusive"

    narrow = _summary([(T, T**-0.5) for T in (100, 200, 400, 800)])
    assert exponent_report(narrow, "qc_constant", 1.0).verdict == "inconclusive"

    early = exponent_report(exact, "qc_constant", 1.0, regime_T=1_000)
    assert early.verdict == "inconclusive"
    assert "regime" in early.reason


def test_noiseless_sweep_rate_and_bound():
    config = _quadratic_config()
    cert = ConstantsCertificate(gamma=1.0, mu=1.0, L=1.0, R=1.0)
    result = run_sweep(config, cert)
    assert sorted(result.records) == [10, 100, 1_000, 10_000]
    assert not result.failures
    summary = summarize(result.records, "avg-subopt")
    checked = bound_check(summary, bound_for("qc", cert, 0.0), min_seeds=1)
    assert checked.verdict
    report = exponent_report(summary, "qc_constant", 0.0)
    assert report.verdict == "pass"
    assert -1.15 <= report.fit.slope <= -0.85


def test_sweep_result_validates_failures():
    result = SweepResult(failures=[(10, 0, "stage one ended early")])
    assert result.model_dump() == {"records": {}, "failures": [(10, 0, "stage one ended early")]}
    with pytest.raises(ValidationError):
        SweepResult(failures=[("ten", 0, "stage one ended early")])


def test_parallel_sweep_matches_serial():
    config = _quadratic_config(
        oracle={"kind": "stochastic", "sigma": 1.0, "master_seed": 11}, T_grid=[10, 50], seeds=3
    )
    cert = ConstantsCertificate(gamma=1.0, mu=1.0, L=1.0, R=1.0)
    serial = run_sweep(config, cert, "d", jobs=1)
    parallel = run_sweep(config, cert, "d", jobs=2)
    for T in (10, 50):
        a = [r.model_dump(exclude={"wall_time"}) for r in serial.records[T]]
        b = [r.model_dump(exclude={"wall_time"}) for r in parallel.records[T]]
        assert a == b


def test_sweep_surfaces_regime_errors_before_running(unit_cert):
    config = _quadratic_config(
        oracle={"kind": "stochastic", "sigma": 1.0}, schedule={"name": "sqc_log"}, T_grid=[10, 100]
    )
    seen = []
    with pytest.raises(RegimeError) as info:
        run_sweep(config, unit_cert, on_record=seen.append)
    assert info.value.minimal_T == 11
    assert seen == []


def test_sweep_horizons():
    assert sweep_horizons(_quadratic_config()) == [10, 100, 1_000, 10_000]
    assert sweep_horizons(_quadratic_config(T_grid=None, T=7)) == [7]
    assert sweep_horizons(_quadratic_config(mode="two-phase-det", epsilon=0.1)) == [None]
    with pytest.raises(ConfigurationError):
        sweep_horizons(_quadratic_config(mode="two-phase-det"))
    with pytest.raises(ConfigurationError):
        sweep_horizons(_quadratic_config(T_grid=None))


def _halving_runner(half_square, exact_oracle):
    def run(T, run_index):
        return sgd_run(half_square, exact_oracle, fixed_schedule(0.5, T), T, OutputRule(kind="last-iterate"), run_index, [1.0])

    return run


def test_empirical_complexity(half_square, exact_oracle):
    run = _halving_runner(half_square, exact_oracle)
    assert empirical_complexity(run, "subopt", 0.25, seeds=1).T == 1
    assert empirical_complexity(run, "subopt", 0.5, seeds=1).T == 1
    estimate = empirical_complexity(run, "subopt", 0.01, seeds=2)
    assert estimate.T == 4
    assert estimate.confident
    assert empirical_complexity(run, "subopt", 0.001, seeds=1).T >= estimate.T


def test_empirical_complexity_budget(half_square, exact_oracle):
    run = _halving_runner(half_square, exact_oracle)
    with pytest.raises(BudgetExhausted) as info:
        empirical_complexity(run, "subopt", 1e-12, seeds=1, cap=2)
    assert info.value.cap == 2
    with pytest.raises(ConfigurationError):
        empirical_complexity(run, "other", 0.1, seeds=1)


def test_nonsmooth_bounds_need_a_certified_G():
    cert = ConstantsCertificate(gamma=0.5, mu=0.3, R=1.0)
    assert cert.G is None
    for name in ("nonsmooth", "nonsmooth_harmonic_distance"):
        with pytest.raises(ConfigurationError, match="certified G"):
            bound_for(name, cert, 0.5)
    certified = cert.model_copy(update={"G": 1.0})
    assert bound_for("nonsmooth", certified, 0.5)(100) == pytest.approx(1.5 / (0.5 * 10))
