from dataclasses import replace

import numpy as np
import pytest

from django_autostop.bo.bench import (
    NO_TIMING,
    VALIDATION_PROXY,
    AggregateRow,
    BoundGapSummary,
    MetricsRow,
    aggregate,
    bound_gap_series,
    dumps_csv,
    rtc,
    ryc,
    score_record,
)
from django_autostop.bo.exception import BadTimes, NotAvailable, RecordFormatError
from django_autostop.bo.records import RunRecord, RunRow, RunSummary


def make_record(tests, stop=None, seconds=1.0, r_bars=None, regrets=None, criterion="conv_10", seed=0):
    rows = []
    for index, test in enumerate(tests):
        t = index + 1
        rows.append(
            RunRow(
                t=t,
                candidate=None,
                y=test,
                incumbent_value=test,
                incumbent_test=test,
                r_bar=r_bars[index] if r_bars else None,
                beta_t=None,
                stop_statistic=None,
                stop_threshold=None,
                stopped=t == stop,
                eval_seconds=seconds,
                cum_seconds=seconds * t,
                true_regret=regrets[index] if regrets else None,
            )
        )
    summary = RunSummary(
        task="task",
        criterion=criterion,
        criterion_config={},
        proposer="gpbo_ei",
        seed=seed,
        max_iters=len(rows),
        iterations=len(rows),
        stop_iteration=stop,
    )
    return RunRecord(summary=summary, rows=rows)


def metrics(criterion="conv_10", task="task", seed=0, ryc_value=0.0, rtc_value=0.0):
    return MetricsRow(f"{criterion}__seed{seed}", task, criterion, seed, None, 0, 0, 0, 0, ryc_value, rtc_value)


class TestMetrics:
    @pytest.mark.parametrize("y_T,y_es,expected", [(0.3, 0.3, 0.0), (0.4, 0.5, -0.2), (1.0, 0.5, 0.5)])
    def test_ryc(self, y_T, y_es, expected):
        assert ryc(y_T, y_es) == pytest.approx(expected)

    def test_ryc_degenerate(self):
        assert ryc(0.0, 0.0) == 0.0

    @pytest.mark.parametrize("t_T,t_es,expected", [(200, 200, 0.0), (200, 150, 0.25), (10, 0, 1.0)])
    def test_rtc(self, t_T, t_es, expected):
        assert rtc(t_T, t_es) == pytest.approx(expected)

    @pytest.mark.parametrize("t_T,t_es", [(100, 101), (0, 0), (-1, -2)])
    def test_rtc_bad_times(self, t_T, t_es):
        with pytest.raises(BadTimes):
            rtc(t_T, t_es)

    def test_ranges_and_sign(self):
        rng = np.random.default_rng(0)
        for y_T, y_es in rng.uniform(0, 10, size=(10_000, 2)):
            value = ryc(y_T, y_es)
            assert -1 <= value <= 1
            assert np.sign(value) == -np.sign(ryc(y_es, y_T))
        for t_T, fraction in rng.uniform(0.1, 10, size=(10_000, 2)):
            t_es = t_T * min(fraction / 10, 1.0)
            assert 0 <= rtc(t_T, t_es) <= 1

    def test_rtc_monotone(self):
        values = [rtc(100.0, t_es) for t_es in np.linspace(0, 100, 51)]
        assert all(later <= earlier for earlier, later in zip(values, values[1:]))


class TestScoreRecord:
    def test_hand_computed(self):
        row = score_record(make_record([0.5, 0.4, 0.4, 0.3], stop=2), run_id="run")
        assert row.y_T == 0.3
        assert row.y_es == 0.4
        assert row.ryc == pytest.approx(-0.25)
        assert row.rtc == pytest.approx(0.5)
        assert row.stop_iteration == 2
        assert row.flags == ""

    def test_never_stopped(self):
        row = score_record(make_record([0.5, 0.4, 0.3]))
        assert row.ryc == 0.0
        assert row.rtc == 0.0
        assert row.stop_iteration is None

    def test_budget(self):
        row = score_record(make_record([0.5, 0.4, 0.4, 0.3], stop=2), budget=3)
        assert row.ryc == 0.0
        assert row.rtc == pytest.approx(1 / 3)

    def test_stop_after_budget_is_ignored(self):
        row = score_record(make_record([0.5, 0.4, 0.4, 0.3], stop=4), budget=3)
        assert row.stop_iteration is None
        assert row.rtc == 0.0

    def test_budget_exceeds_record(self):
        with pytest.raises(RecordFormatError):
            score_record(make_record([0.5, 0.4]), budget=3)

    def test_validation_proxy(self):
        record = make_record([0.5, 0.4, 0.3], stop=2)
        record.rows[:] = [
            RunRow(**{**row.as_dict(), "incumbent_test": None, "incumbent_value": row.y + 1}) for row in record.rows
        ]
        row = score_record(record)
        assert row.flags == VALIDATION_PROXY
        assert row.y_T == pytest.approx(1.3)
        assert row.y_es == pytest.approx(1.4)

    def test_without_timing(self):
        row = score_record(make_record([0.5, 0.4, 0.3], stop=2, seconds=0.0))
        assert row.rtc == 0.0
        assert NO_TIMING in row.flags

    def test_config_hash(self):
        record = make_record([0.5, 0.4, 0.3], stop=2)
        record.summary.config_hash = "abc"
        assert score_record(record).config_hash == "abc"


class TestBoundGap:
    def test_tight_bound(self):
        gap = bound_gap_series(make_record([0.3, 0.2], r_bars=[0.1, 0.2], regrets=[0.1, 0.2]))
        assert [point.diff for point in gap.points] == [0.0, 0.0]
        assert gap.negatives == 0

    def test_negative_count(self):
        rng = np.random.default_rng(1)
        r_bars, regrets = rng.uniform(0, 1, 40), rng.uniform(0, 1, 40)
        gap = bound_gap_series(make_record([0.1] * 40, r_bars=list(r_bars), regrets=list(regrets)))
        expected = 0
        for r_bar, regret in zip(r_bars, regrets):
            if r_bar - regret < 0:
                expected += 1
        assert gap.negatives == expected

    def test_constant_quantiles(self):
        gap = bound_gap_series(make_record([0.1] * 5, r_bars=[0.7] * 5, regrets=[0.2] * 5))
        assert all(value == pytest.approx(0.5) for value in gap.quantiles.values())

    def test_rows_without_bound_are_skipped(self):
        gap = bound_gap_series(make_record([0.1] * 3, r_bars=[None, 0.5, 0.4], regrets=[0.1, 0.1, 0.1]))
        assert [point.t for point in gap.points] == [2, 3]

    def test_requires_true_regret(self):
        with pytest.raises(NotAvailable):
            bound_gap_series(make_record([0.1, 0.2], r_bars=[0.3, 0.2]))

    def test_config_hash(self):
        record = make_record([0.3, 0.2], r_bars=[0.1, 0.2], regrets=[0.1, 0.2])
        record.summary.config_hash = "abc"
        gap = bound_gap_series(record)
        assert gap.config_hash == "abc"
        assert {point.config_hash for point in gap.points} == {"abc"}
        assert BoundGapSummary.from_gap(gap).config_hash == "abc"


class TestAggregate:
    def test_single_row(self):
        (report,) = aggregate([metrics(ryc_value=0.3, rtc_value=0.6)])
        assert (report.ryc_mean, report.ryc_std, report.rtc_mean, report.rtc_std) == (0.3, 0.0, 0.6, 0.0)
        assert report.positive_ryc == 1

    def test_sample_standard_deviation(self):
        (report,) = aggregate([metrics(seed=0, ryc_value=0.1), metrics(seed=1, ryc_value=-0.1)])
        assert report.ryc_mean == 0.0
        assert report.ryc_std == pytest.approx(0.1414213562373095)
        assert report.positive_ryc == 1
        assert report.runs == 2

    def test_groups_and_order_independence(self):
        rows = [
            metrics("conv_10", "a", 0, 0.2),
            metrics("regret_cv", "a", 0, -0.1),
            metrics("conv_10", "a", 1, 0.4),
            metrics("conv_10", "b", 0, 0.0),
        ]
        report = aggregate(rows)
        assert [(row.criterion, row.task, row.runs) for row in report] == [
            ("conv_10", "a", 2),
            ("conv_10", "b", 1),
            ("regret_cv", "a", 1),
        ]
        assert aggregate(rows[::-1]) == report
        assert aggregate(rows, keys=("task", "criterion")) == report

    def test_config_hashes(self):
        rows = [replace(metrics(seed=0), config_hash="b"), replace(metrics(seed=1), config_hash="a"), metrics(seed=2)]
        (report,) = aggregate(rows)
        assert report.config_hash == "a;b"


class TestCsv:
    def test_header_and_precision(self):
        text = dumps_csv([metrics(ryc_value=0.1)], MetricsRow)
        header, line = text.splitlines()
        assert header.split(",")[:4] == ["run_id", "task", "criterion", "seed"]
        assert "0.10000000000000001" in line.split(",")

    def test_empty_values(self):
        text = dumps_csv([metrics()], MetricsRow)
        assert text.splitlines()[1].split(",")[4] == ""

    def test_aggregate_columns(self):
        header = dumps_csv([], AggregateRow).strip()
        assert header == "criterion,task,runs,ryc_mean,ryc_std,rtc_mean,rtc_std,positive_ryc,config_hash"
