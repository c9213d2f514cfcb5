"""Closed-form threshold rules.

Every rule maps a class distribution p, a level alpha and a quantile function of the
standardized observations to one threshold per class. All of them belong to the family

    c(z_k) = qf(g_k / p_k)   (p_k > 0),    c(z_k) = qf(0)   (p_k = 0)

for a p-subprobability vector g with sum(g) >= 1 - alpha. Quantile functions are plain callables
on arrays; `qf(0)` must return the lower support endpoint (the sample minimum for an empirical
quantile function, `-inf` for `scipy.stats.norm.ppf`).
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from screening_thresholds.errors import (
    AdmissibilityError,
    InvariantViolationError,
    ParameterError,
)
from screening_thresholds.models import ClassDistribution, SubProbabilityVector, ThresholdSet

QuantileFunction = Callable[[ArrayLike], np.ndarray]
CdfFunction = Callable[[ArrayLike], np.ndarray]


@dataclass
class AdmissibilityDiagnostic:
    labels: list[str]
    probs: list[float]
    alpha: float
    gamma: float
    margins: list[float] = field(default_factory=list)

    @property
    def offending(self) -> list[str]:
        return [
            label
            for label, p, m in zip(self.labels, self.probs, self.margins, strict=True)
            if p > 0 and m >= 1
        ]

    @property
    def admissible(self) -> bool:
        return not self.offending

    def __str__(self) -> str:
        parts = ", ".join(
            f"{label}={m:.4g}" for label, m in zip(self.labels, self.margins, strict=True)
        )
        return f"quantile arguments (gamma={self.gamma:g}, alpha={self.alpha:g}): {parts}"


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha!r}")


def _check_gamma(gamma: float) -> None:
    if not 0 < gamma <= 1:
        raise ParameterError(f"gamma must lie in (0, 1], got {gamma!r}")


def _gamma_levels(p: np.ndarray, alpha: float, gamma: float) -> np.ndarray:
    weights = p**gamma
    return (1 - alpha) * weights / np.sum(p ** (gamma + 1))


def check_admissibility(
    dist: ClassDistribution, alpha: float, gamma: float = 1.0
) -> AdmissibilityDiagnostic:
    """Report whether the gamma-proportional rule is defined for `dist` at level `alpha`.

    The margin of class k is its quantile argument (1 - alpha) p_k^gamma / sum_j p_j^(gamma+1);
    the rule is defined iff every margin of a class with p_k > 0 is strictly below 1.
    """
    _check_alpha(alpha)
    _check_gamma(gamma)
    margins = _gamma_levels(dist.p, alpha, gamma)
    return AdmissibilityDiagnostic(
        labels=list(dist.labels),
        probs=list(dist.probs),
        alpha=alpha,
        gamma=gamma,
        margins=margins.tolist(),
    )


def _require_admissible(diag: AdmissibilityDiagnostic) -> None:
    if diag.admissible:
        return
    offending = diag.offending
    raise AdmissibilityError(
        f"class distribution is not admissible for the rule; offending class(es): "
        f"{', '.join(offending)} ({diag})",
        labels=offending,
        margins=diag.margins,
        hint="use a smaller gamma, the modified rule, or fuse the majority classes",
    )


def _threshold_set(
    dist: ClassDistribution, alpha: float, levels: np.ndarray, qf: QuantileFunction
) -> ThresholdSet:
    standardized = np.asarray(qf(levels), dtype=float)
    return ThresholdSet(
        labels=list(dist.labels),
        alpha=alpha,
        levels=levels.tolist(),
        standardized=standardized.tolist(),
        subprobability=(levels * dist.p).tolist(),
    )


def gamma_proportional_thresholds(
    dist: ClassDistribution, gamma: float, alpha: float, qf: QuantileFunction
) -> ThresholdSet:
    diag = check_admissibility(dist, alpha, gamma)
    _require_admissible(diag)
    return _threshold_set(dist, alpha, np.asarray(diag.margins), qf)


def proportional_thresholds(
    dist: ClassDistribution, alpha: float, qf: QuantileFunction
) -> ThresholdSet:
    """c(z_k) = qf((1 - alpha) p_k / sum_j p_j^2); rare classes get lower thresholds."""
    return gamma_proportional_thresholds(dist, 1.0, alpha, qf)


def modified_thresholds(
    dist: ClassDistribution,
    k0: int,
    p_min: float,
    alpha: float,
    qf: QuantileFunction,
    p_max: float | None = None,
) -> ThresholdSet:
    """Proportional rule on dichotomized weights.

    The k0 rarest classes are scored `p_min`, the others `p_max`. Without an explicit `p_max` it is
    derived as p_min * (p_1 + ... + p_k0) / (p_2 + ... + p_k0), which needs k0 >= 2. Classes are
    ranked by probability internally (ties keep input order) and results come back in input order.
    """
    _check_alpha(alpha)
    p = dist.p
    k = dist.k
    if not 1 <= k0 <= k - 1:
        raise ParameterError(f"k0 must lie in 1..{k - 1}, got {k0!r}")
    if np.any(p <= 0):
        raise AdmissibilityError(
            "the modified rule needs every class probability to be positive",
            labels=[dist.labels[i] for i in np.flatnonzero(p <= 0)],
        )
    order = np.argsort(p, kind="stable")
    ps = p[order]
    if ps[0] > alpha:
        raise AdmissibilityError(
            f"the rarest class has probability {ps[0]:.4g} > alpha = {alpha:g}",
            labels=[dist.labels[order[0]]],
            hint="keep the rarest class and fuse the rest instead (--fuse-minority)",
        )
    if p_min < alpha:
        raise ParameterError(f"p_min must be at least alpha = {alpha:g}, got {p_min!r}")

    head = math.fsum(ps[:k0])
    tail = math.fsum(ps[1:k0])
    if p_max is None:
        if tail == 0:
            raise ParameterError(
                "p_max cannot be derived for k0 = 1",
                hint="pass an explicit p_max",
            )
        p_max = p_min * head / tail
        if p_max >= 1:
            raise AdmissibilityError(
                f"derived p_max = {p_max:.6g} is not below 1 for these class probabilities",
                hint="pass an explicit p_max",
            )
    if not p_min < p_max < 1:
        raise ParameterError(f"need p_min < p_max < 1, got p_min={p_min!r}, p_max={p_max!r}")
    if p_min / p_max < tail / head - 1e-12:
        raise AdmissibilityError(
            f"p_min / p_max = {p_min / p_max:.6g} is below "
            f"(p_2 + ... + p_k0) / (p_1 + ... + p_k0) = {tail / head:.6g}",
        )

    scores = np.where(np.arange(k) < k0, p_min, p_max)
    sorted_levels = (1 - alpha) * scores / np.sum(ps * scores)
    levels = np.empty(k)
    levels[order] = sorted_levels
    if np.any(levels >= 1):
        bad = [dist.labels[i] for i in np.flatnonzero(levels >= 1)]
        raise AdmissibilityError(
            f"modified rule undefined for class(es) {', '.join(bad)}",
            labels=bad,
            margins=levels.tolist(),
        )
    return _threshold_set(dist, alpha, levels, qf)


def _as_subprobability(g: SubProbabilityVector | Sequence[float], k: int) -> np.ndarray:
    values = g.values if isinstance(g, SubProbabilityVector) else np.asarray(g, dtype=float)
    if values.shape != (k,):
        raise InvariantViolationError(f"subprobability vector needs {k} entries")
    return values


def thresholds_from_subprobability(
    g: SubProbabilityVector | Sequence[float],
    dist: ClassDistribution,
    qf: QuantileFunction,
    alpha: float | None = None,
) -> ThresholdSet:
    """Thresholds c(z_k) = qf(g_k / p_k) of a p-subprobability vector.

    Without `alpha` the implied level 1 - sum(g) is recorded.
    """
    p = dist.p
    values = _as_subprobability(g, dist.k)
    positive = p > 0
    if np.any(values < 0):
        raise InvariantViolationError("subprobabilities must be nonnegative")
    bad = positive & (values >= p)
    if np.any(bad):
        labels = [dist.labels[i] for i in np.flatnonzero(bad)]
        raise InvariantViolationError(f"g_k must stay below p_k for class(es) {', '.join(labels)}")
    if np.any(~positive & (values != 0)):
        raise InvariantViolationError("g_k must be 0 for classes with p_k = 0")
    total = math.fsum(values)
    if alpha is None:
        alpha = 1.0 - total
        if not 0 < alpha <= 1:
            raise InvariantViolationError(f"subprobabilities sum to {total!r}, leaving no level")
    else:
        _check_alpha(alpha)
        if total < 1 - alpha - 1e-12:
            raise InvariantViolationError(
                f"subprobabilities sum to {total:.6g} < 1 - alpha = {1 - alpha:.6g}"
            )
    levels = np.divide(values, p, out=np.zeros_like(values), where=positive)
    ts = _threshold_set(dist, alpha, levels, qf)
    return ts.model_copy(update={"subprobability": values.tolist()})


def constant_thresholds(
    dist: ClassDistribution, alpha: float, qf: QuantileFunction
) -> ThresholdSet:
    """The classical rule: qf(1 - alpha) for every class with p_k > 0."""
    _check_alpha(alpha)
    return thresholds_from_subprobability((1 - alpha) * dist.p, dist, qf, alpha)


def false_alarm_rate(ts: ThresholdSet, dist: ClassDistribution, cdf: CdfFunction) -> float:
    """sum_k p_k (1 - cdf(c(z_k)))."""
    if ts.labels != dist.labels:
        raise ParameterError("threshold set and class distribution list different classes")
    c = np.asarray(ts.standardized, dtype=float)
    return float(np.sum(dist.p * (1 - np.asarray(cdf(c), dtype=float))))


def fuse_minority(
    dist: ClassDistribution, alpha: float, rest_label: str = "rest"
) -> tuple[ClassDistribution, dict[str, str]]:
    """Keep the rarest class and merge all others when every class is at least as likely as alpha.

    Returns the two-class distribution and the label mapping to relabel samples with.
    """
    _check_alpha(alpha)
    if dist.k < 2:
        raise ParameterError("need at least two classes to fuse")
    p = dist.p
    minority = int(np.argmin(p))
    if p[minority] < alpha:
        raise ParameterError(
            f"rarest class has probability {p[minority]:.4g} < alpha = {alpha:g}",
            hint="use modified_thresholds instead",
        )
    keep = dist.labels[minority]
    if rest_label == keep:
        raise ParameterError(f"rest label {rest_label!r} collides with the kept class")
    mapping = {
        label: (keep if i == minority else rest_label) for i, label in enumerate(dist.labels)
    }
    fused = ClassDistribution(labels=[keep, rest_label], probs=[p[minority], 1.0 - p[minority]])
    return fused, mapping
