from __future__ import annotations

import numpy as np
import pytest

from screening_thresholds.errors import ParameterError, UnknownClassError
from screening_thresholds.estimation import estimate_rule
from screening_thresholds.evaluation import (
    alarm_summary,
    apply_thresholds,
    contingency,
    evaluate,
    standardized_alarms,
)
from screening_thresholds.models import LabeledSample, ProportionalRule, ThresholdSet


def _thresholds(raw: list[float] | None = None) -> ThresholdSet:
    return ThresholdSet(
        labels=["a", "b"],
        alpha=0.1,
        levels=[0.9, 0.9],
        standardized=[1.0, 1.0],
        raw=raw,
    )


def _screening(y: list[bool] | None = None) -> LabeledSample:
    return LabeledSample.from_records([0.5, 1.5, 2.5, 1.5], ["a", "a", "b", "b"], y=y)


def _learning(seed: int = 0) -> LabeledSample:
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.standard_normal(40), 3 + 2 * rng.standard_normal(460)])
    return LabeledSample.from_records(x, ["a"] * 40 + ["b"] * 460)


class TestApplyThresholds:
    def test_strict_inequality(self):
        flags = apply_thresholds(_screening(), _thresholds([1.0, 2.0]))
        assert flags.tolist() == [False, True, True, False]
        tie = LabeledSample.from_records([1.0], ["a"], labels=["a", "b"])
        assert apply_thresholds(tie, _thresholds([1.0, 2.0])).tolist() == [False]

    def test_label_order_may_differ(self):
        screening = LabeledSample.from_records([1.5, 1.5], ["b", "a"], labels=["b", "a"])
        flags = apply_thresholds(screening, _thresholds([1.0, 2.0]))
        assert flags.tolist() == [False, True]

    def test_needs_raw_thresholds(self):
        with pytest.raises(ParameterError):
            apply_thresholds(_screening(), _thresholds())

    def test_unknown_class(self):
        screening = LabeledSample.from_records([1.0, 2.0], ["a", "c"])
        with pytest.raises(UnknownClassError) as exc:
            apply_thresholds(screening, _thresholds([1.0, 2.0]))
        assert exc.value.labels == ["c"]

    def test_declared_but_absent_class_is_ignored(self):
        screening = LabeledSample.from_records([1.5], ["a"], labels=["a", "c"])
        assert apply_thresholds(screening, _thresholds([1.0, 2.0])).tolist() == [True]


class TestStandardizedAlarms:
    def test_agrees_with_raw_scale(self):
        rule = estimate_rule(_learning(), ProportionalRule(), alpha=0.1)
        rng = np.random.default_rng(1)
        x = np.concatenate([rng.normal(0, 1.5, 300), rng.normal(3, 3, 700)])
        screening = LabeledSample.from_records(x, ["a"] * 300 + ["b"] * 700)
        flags = apply_thresholds(screening, rule)
        assert np.array_equal(flags, standardized_alarms(screening, rule))

    def test_agrees_with_raw_scale_on_random_datasets(self):
        rng = np.random.default_rng(12)
        disagreements = 0
        for _ in range(200):
            k = int(rng.integers(2, 4))
            labels = [f"c{i}" for i in range(k)]
            mu = rng.uniform(-50, 50, size=k)
            sd = rng.uniform(0.1, 20, size=k)
            n = rng.integers(5, 150, size=k)
            codes = np.repeat(np.arange(k), n)
            x = mu[codes] + sd[codes] * rng.standard_normal(codes.size)
            learning = LabeledSample(x=x, codes=codes, labels=tuple(labels))
            rule = estimate_rule(learning, ProportionalRule(), alpha=0.3)
            screen_codes = rng.integers(0, k, size=300)
            screen_x = mu[screen_codes] + 1.5 * sd[screen_codes] * rng.standard_normal(300)
            screening = LabeledSample(x=screen_x, codes=screen_codes, labels=tuple(labels))
            flags = apply_thresholds(screening, rule)
            disagreements += int(np.sum(flags != standardized_alarms(screening, rule)))
        assert disagreements == 0

    def test_class_without_moments_always_alarms(self):
        learning = LabeledSample.from_records([1.0, 2.0, 4.0, 3.0], ["a"] * 4, labels=["a", "b"])
        rule = estimate_rule(learning, ProportionalRule(), alpha=0.1)
        screening = LabeledSample.from_records([-50.0, 1.0], ["b", "a"], labels=["a", "b"])
        assert standardized_alarms(screening, rule).tolist() == [True, False]
        assert apply_thresholds(screening, rule).tolist() == [True, False]


class TestContingency:
    def test_counts_and_rates(self):
        screening = _screening(y=[True, False, True, True])
        ts = _thresholds([1.0, 2.0])
        report = contingency(apply_thresholds(screening, ts), screening, ts)
        a, b = report.classes
        assert (a.tp, a.fn, a.fp, a.tn) == (0, 1, 1, 0)
        assert (a.tpr, a.tnr) == (0.0, 0.0)
        assert (b.tp, b.fn, b.fp, b.tn) == (1, 1, 0, 0)
        assert b.tpr == 0.5
        assert b.tnr is None
        overall = report.overall
        assert (overall.tp, overall.fn, overall.fp, overall.tn) == (1, 2, 1, 0)
        assert overall.tpr == pytest.approx(1 / 3)
        assert overall.alarm_rate == 0.5
        assert report.rule == "custom"

    def test_needs_ground_truth(self):
        ts = _thresholds([1.0, 2.0])
        with pytest.raises(ParameterError):
            contingency(np.zeros(4, dtype=bool), _screening(), ts)

    def test_flag_length_mismatch(self):
        ts = _thresholds([1.0, 2.0])
        with pytest.raises(ParameterError):
            contingency(np.zeros(3, dtype=bool), _screening(y=[True] * 4), ts)


class TestAlarmSummary:
    def test_rates_without_truth(self):
        ts = _thresholds([1.0, 2.0])
        report = alarm_summary(apply_thresholds(_screening(), ts), _screening(), ts, rule="x")
        assert [c.alarm_rate for c in report.classes] == [0.5, 0.5]
        assert report.overall.alarms == 2
        assert report.overall.tp is None
        assert report.rule == "x"


class TestEvaluate:
    def test_uses_rule_name(self):
        rule = estimate_rule(_learning(), ProportionalRule(), alpha=0.1)
        screening = LabeledSample.from_records([-5.0, 10.0], ["a", "b"], y=[False, True])
        report = evaluate(screening, rule)
        assert report.rule == "proportional"
        assert report.overall.tp == 1
        assert report.overall.tn == 1

    def test_without_truth(self):
        report = evaluate(_screening(), _thresholds([1.0, 2.0]))
        assert report.overall.tpr is None
        assert report.overall.alarms == 2
