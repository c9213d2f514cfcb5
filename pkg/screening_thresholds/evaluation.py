from __future__ import annotations

import logging

import numpy as np

from screening_thresholds.errors import ParameterError, UnknownClassError
from screening_thresholds.estimation import residualize
from screening_thresholds.models import (
    ClassEvaluation,
    EstimatedRule,
    EvaluationReport,
    LabeledSample,
    StandardizationModel,
    ThresholdSet,
    rule_name,
)

logger = logging.getLogger(__name__)


def _thresholds(rule: EstimatedRule | ThresholdSet) -> ThresholdSet:
    return rule.thresholds if isinstance(rule, EstimatedRule) else rule


def _align(screening: LabeledSample, labels: list[str]) -> np.ndarray:
    """Position of each screening label in `labels` (-1 for labels with no records)."""
    lookup = {label: i for i, label in enumerate(labels)}
    present = screening.counts() > 0
    missing = [
        label
        for code, label in enumerate(screening.labels)
        if present[code] and label not in lookup
    ]
    if missing:
        raise UnknownClassError(missing, hint="the rule was estimated without these classes")
    return np.array([lookup.get(label, -1) for label in screening.labels], dtype=np.intp)


def apply_thresholds(
    screening: LabeledSample, rule: EstimatedRule | ThresholdSet
) -> np.ndarray:
    """Alarm flags x > t(z) on the measurement scale; ties do not alarm."""
    ts = _thresholds(rule)
    if ts.raw is None:
        raise ParameterError(
            "threshold set has no raw-scale thresholds",
            hint="estimate the rule on a learning sample first",
        )
    position = _align(screening, ts.labels)
    raw = np.asarray(ts.raw, dtype=float)
    return screening.x > raw[position[screening.codes]]


def _remap(
    screening: LabeledSample, model: StandardizationModel, position: np.ndarray
) -> LabeledSample:
    codes = position[screening.codes]
    return LabeledSample(x=screening.x, codes=codes, labels=tuple(model.labels))


def standardized_alarms(screening: LabeledSample, rule: EstimatedRule) -> np.ndarray:
    """Alarm flags (x - mu(z)) / sigma(z) > c(z) using the rule's own standardization."""
    position = _align(screening, rule.std_model.labels)
    remapped = _remap(screening, rule.std_model, position)
    residuals = residualize(remapped, rule.std_model)
    c = np.asarray(rule.thresholds.standardized, dtype=float)
    # classes without fitted moments alarm unconditionally
    return np.isnan(residuals) | (residuals > c[remapped.codes])


def _rate(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def _summary(label: str, flags: np.ndarray, y: np.ndarray | None) -> ClassEvaluation:
    n = int(flags.size)
    alarms = int(flags.sum())
    fields: dict = {"label": label, "n": n, "alarms": alarms, "alarm_rate": _rate(alarms, n)}
    if y is not None:
        tp = int(np.sum(flags & y))
        fn = int(np.sum(~flags & y))
        fp = int(np.sum(flags & ~y))
        tn = int(np.sum(~flags & ~y))
        fields.update(tp=tp, fn=fn, fp=fp, tn=tn, tpr=_rate(tp, tp + fn), tnr=_rate(tn, fp + tn))
    return ClassEvaluation(**fields)


def _report(
    flags: np.ndarray,
    sample: LabeledSample,
    y: np.ndarray | None,
    thresholds: ThresholdSet,
    rule: str,
) -> EvaluationReport:
    flags = np.asarray(flags, dtype=bool)
    if flags.shape != sample.x.shape:
        raise ParameterError(f"{flags.size} alarm flags for {sample.n} records")
    classes = []
    for code, label in enumerate(sample.labels):
        mask = sample.codes == code
        classes.append(_summary(label, flags[mask], None if y is None else y[mask]))
    overall = _summary("overall", flags, y)
    return EvaluationReport(rule=rule, thresholds=thresholds, classes=classes, overall=overall)


def contingency(
    flags: np.ndarray,
    sample: LabeledSample,
    thresholds: ThresholdSet,
    rule: str = "custom",
) -> EvaluationReport:
    """Per-class 2x2 tables of alarms against ground truth; the overall row pools the counts."""
    if sample.y is None:
        raise ParameterError(
            "the screening sample has no ground truth column",
            hint="pass --y-column, or evaluate alarm rates only",
        )
    return _report(flags, sample, sample.y, thresholds, rule)


def alarm_summary(
    flags: np.ndarray,
    sample: LabeledSample,
    thresholds: ThresholdSet,
    rule: str = "custom",
) -> EvaluationReport:
    """Alarm counts and rates per class without ground truth."""
    return _report(flags, sample, None, thresholds, rule)


def evaluate(screening: LabeledSample, rule: EstimatedRule | ThresholdSet) -> EvaluationReport:
    flags = apply_thresholds(screening, rule)
    name = rule_name(rule.rule) if isinstance(rule, EstimatedRule) else "custom"
    ts = _thresholds(rule)
    logger.info("%d alarm(s) among %d screening record(s)", int(flags.sum()), screening.n)
    if screening.y is None:
        return alarm_summary(flags, screening, ts, name)
    return contingency(flags, screening, ts, name)
