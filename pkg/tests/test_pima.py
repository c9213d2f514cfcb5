"""Reproduction checks on the Pima Indians diabetes data (Kaggle ``diabetes.csv``).

Skipped unless ``PIMA_CSV`` points at the file. The slow resampling checks additionally need
``PIMA_SLOW`` to be set.
"""

from __future__ import annotations

import os

import numpy as np
import pytest

from screening_thresholds.data_io import read_sample
from screening_thresholds.estimation import estimate_optimal_design, estimate_rule
from screening_thresholds.evaluation import evaluate
from screening_thresholds.models import (
    AlternativeSpec,
    ConstantRule,
    OptimalRule,
    ProportionalRule,
)
from screening_thresholds.resampling import bootstrap_thresholds, smoothed_screening_sim

PIMA_CSV = os.environ.get("PIMA_CSV")

pytestmark = pytest.mark.skipif(not PIMA_CSV, reason="PIMA_CSV not set")
slow = pytest.mark.skipif(not os.environ.get("PIMA_SLOW"), reason="PIMA_SLOW not set")

ALTERNATIVE = AlternativeSpec(delta=[1.0, 4.0], sigma=[1.0, 1.0], beta_k=[0.01, 0.02])


@pytest.fixture(scope="module")
def sample():
    return read_sample(
        PIMA_CSV,
        x_column="Glucose",
        z_column="BMI",
        y_column="Outcome",
        dichotomize_q=0.9,
        drop_nonpositive=["Glucose", "BMI"],
    )


@pytest.fixture(scope="module")
def proportional(sample):
    return estimate_rule(sample, ProportionalRule(), alpha=0.1)


@pytest.fixture(scope="module")
def design(sample):
    rule = OptimalRule(alternative=ALTERNATIVE, c_star=[1.674, 1.946])
    return estimate_optimal_design(sample, rule, alpha=0.1)


class TestSummary:
    def test_class_sizes(self, sample):
        assert sample.n == 752
        assert sample.labels == ("high", "low")
        assert sample.counts().tolist() == [76, 676]

    def test_class_moments(self, sample):
        for code, mean, sd in ((0, 135, 31), (1, 121, 30)):
            x = sample.x[sample.codes == code]
            assert x.mean() == pytest.approx(mean, abs=0.5)
            assert x.std(ddof=1) == pytest.approx(sd, abs=0.5)


class TestProportionalRule:
    def test_thresholds(self, proportional):
        ts = proportional.thresholds
        assert ts.standardized == pytest.approx([-1.108, 2.462], abs=1e-3)
        assert ts.subprobability == pytest.approx([0.011, 0.889], abs=1e-3)
        assert [round(t) for t in ts.raw] == pytest.approx([100, 195], abs=1)

    def test_alarm_rates(self, sample, proportional):
        report = evaluate(sample, proportional)
        high, low = report.classes
        assert high.alarm_rate == pytest.approx(0.855, abs=2e-3)
        assert low.alarm_rate == pytest.approx(0.012, abs=2e-3)
        assert report.overall.alarm_rate == pytest.approx(0.097, abs=2e-3)
        assert high.tpr == pytest.approx(0.979, abs=2e-3)
        assert (high.tp, high.fn, high.fp, high.tn) == (47, 1, 18, 10)

    def test_constant_rule(self, sample):
        report = evaluate(sample, estimate_rule(sample, ConstantRule(), alpha=0.1))
        high, low = report.classes
        assert high.alarm_rate == pytest.approx(0.092, abs=2e-3)
        assert low.alarm_rate == pytest.approx(0.102, abs=2e-3)
        assert report.overall.alarm_rate == pytest.approx(0.101, abs=2e-3)
        assert (high.tp, high.fn, high.fp, high.tn) == (7, 41, 0, 28)


class TestOptimalDesign:
    def test_bounds(self, design):
        assert design.lp.upper.tolist() == pytest.approx([0.093, 0.8511], abs=1e-3)

    def test_both_solvers(self, design):
        assert design.g_greedy == pytest.approx([0.0489, 0.851], abs=5e-4)
        assert design.g_simplex == pytest.approx([0.0489, 0.851], abs=5e-4)

    def test_raw_thresholds(self, design):
        assert design.rule.thresholds.raw == pytest.approx([128, 179], abs=1)

    def test_proportional_power(self, design):
        power = {p.rule: p for p in design.power}
        assert power["proportional"].marginal == pytest.approx(0.981, abs=5e-3)

    def test_condition_report_emitted(self, design):
        assert [c.rule for c in design.checks] == ["optimal", "proportional"]
        assert all(c.checks for c in design.checks)


@slow
class TestResampling:
    def test_bootstrap_standard_errors(self, sample):
        report = bootstrap_thresholds(sample, ProportionalRule(), b=5000, seed=1, workers=4)
        assert report.se == pytest.approx([0.032, 0.083], rel=0.2)

    def test_screening_simulation(self, sample):
        report = smoothed_screening_sim(
            sample, ProportionalRule(), n_screen=10_000, b=5000, seed=1, workers=4
        )
        assert report.marginal_rate == pytest.approx(0.09715, abs=5e-3)
        assert np.asarray(report.class_rates) == pytest.approx([0.85187, 0.01329], abs=5e-3)

    def test_screening_simulation_optimal_rule(self, sample):
        rule = OptimalRule(alternative=ALTERNATIVE, c_star=[1.674, 1.946])
        report = smoothed_screening_sim(
            sample, rule, alpha=0.1, n_screen=10_000, b=5000, seed=1, workers=4
        )
        assert np.asarray(report.class_rates) == pytest.approx([0.5639, 0.0566], abs=5e-3)
        assert report.marginal_rate == pytest.approx(0.1073, abs=5e-3)
