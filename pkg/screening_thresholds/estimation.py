from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike

from screening_thresholds.design import (
    build_lp,
    lp_objective,
    predicted_power,
    solve_minority_greedy,
    solve_simplex,
    verify_theorem1,
)
from screening_thresholds.errors import (
    AdmissibilityError,
    DegenerateScaleError,
    InsufficientDataError,
    ParameterError,
)
from screening_thresholds.models import (
    ClassDistribution,
    ConstantRule,
    EstimatedRule,
    GammaRule,
    LabeledSample,
    ModifiedRule,
    OptimalDesignReport,
    OptimalRule,
    ProportionalRule,
    RuleSpec,
    StandardizationModel,
    SubprobabilityRule,
    ThresholdSet,
    rule_name,
)
from screening_thresholds.rules import (
    CdfFunction,
    QuantileFunction,
    constant_thresholds,
    gamma_proportional_thresholds,
    modified_thresholds,
    proportional_thresholds,
    thresholds_from_subprobability,
)

logger = logging.getLogger(__name__)

Mode = Literal["marginal", "conditional"]


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Right-continuous e.c.d.f. of a sample and its left-continuous generalized inverse."""

    values: np.ndarray
    _grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        values = np.sort(np.asarray(self.values, dtype=float))
        if values.ndim != 1 or values.size == 0:
            raise ParameterError("an empirical distribution needs at least one value")
        object.__setattr__(self, "values", values)
        # i/n computed the same way in cdf() and quantile()
        object.__setattr__(self, "_grid", np.arange(1, values.size + 1) / values.size)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def cdf(self, u: ArrayLike) -> np.ndarray:
        counts = np.searchsorted(self.values, np.asarray(u, dtype=float), side="right")
        return np.where(counts == 0, 0.0, self._grid[np.maximum(counts - 1, 0)])

    def quantile(self, q: ArrayLike) -> np.ndarray:
        """inf{u : cdf(u) >= q}; q = 0 gives the sample minimum."""
        idx = np.searchsorted(self._grid, np.asarray(q, dtype=float), side="left")
        return self.values[np.minimum(idx, self.n - 1)]


def empirical_quantile(ed: EmpiricalDistribution, q: float) -> float:
    """Order statistic of rank ceil(q * n) (1-based)."""
    if not 0 < q <= 1:
        raise ParameterError(f"quantile level must lie in (0, 1], got {q!r}")
    return float(ed.quantile(q))


def relative_frequencies(sample: LabeledSample) -> ClassDistribution:
    """Class shares over the declared label set; declared-but-unseen classes get 0."""
    counts = sample.counts()
    return ClassDistribution(labels=list(sample.labels), probs=(counts / sample.n).tolist())


def _truncate(x: np.ndarray, tau: float) -> np.ndarray:
    return np.where(np.abs(x) <= tau, x, 0.0)


def _moments(xt: np.ndarray, label: str | None) -> tuple[float, float]:
    mu = float(np.mean(xt))
    sigma = math.sqrt(float(np.mean((xt - mu) ** 2)))
    if sigma <= 1e-12 * max(1.0, float(np.max(np.abs(xt)))):
        where = f" in class {label!r}" if label is not None else ""
        raise DegenerateScaleError(
            f"estimated scale is zero{where}",
            label=label,
            hint="check the truncation constant tau or drop constant classes",
        )
    return mu, sigma


def standardize(
    sample: LabeledSample, mode: Mode = "conditional", tau: float = math.inf
) -> tuple[np.ndarray, StandardizationModel]:
    """Residuals (x - mu) / sigma from moments of the truncated values x * 1(|x| <= tau).

    Moments are ML estimates (divide by the count). In conditional mode every observed class gets
    its own location and scale; declared classes without observations get None entries.
    """
    if not tau > 0:
        raise ParameterError(f"tau must be positive, got {tau!r}")
    if mode not in ("marginal", "conditional"):
        raise ParameterError(f"unknown standardization mode {mode!r}")
    xt = _truncate(sample.x, tau)
    k = sample.k
    if mode == "marginal":
        mu, sigma = _moments(xt, None)
        mus: list[float | None] = [mu] * k
        sigmas: list[float | None] = [sigma] * k
    else:
        counts = sample.counts()
        mus, sigmas = [], []
        for code, label in enumerate(sample.labels):
            if counts[code] == 0:
                mus.append(None)
                sigmas.append(None)
                continue
            if counts[code] < 2:
                raise InsufficientDataError(
                    f"class {label!r} has {counts[code]} observation(s); at least 2 are needed",
                    label=label,
                    hint="use marginal standardization or merge sparse classes",
                )
            mu, sigma = _moments(xt[sample.codes == code], label)
            mus.append(mu)
            sigmas.append(sigma)

    model = StandardizationModel(
        mode=mode, tau=tau, labels=list(sample.labels), mu=mus, sigma=sigmas
    )
    return residualize(sample, model), model


def residualize(sample: LabeledSample, model: StandardizationModel) -> np.ndarray:
    """Apply a fitted model to (possibly new) records. Unfitted classes yield NaN."""
    mu = np.array([np.nan if m is None else m for m in model.mu])
    sigma = np.array([np.nan if s is None else s for s in model.sigma])
    return (sample.x - mu[sample.codes]) / sigma[sample.codes]


def _raw_threshold(mu: float, sigma: float, c: float) -> float:
    """mu + sigma * c, moved to the float boundary of {x : fl((x - mu) / sigma) > c}."""
    t = mu + sigma * c
    if not math.isfinite(t):
        return t
    for _ in range(64):
        if (t - mu) / sigma > c:
            t = math.nextafter(t, -math.inf)
            continue
        up = math.nextafter(t, math.inf)
        if (up - mu) / sigma <= c:
            t = up
            continue
        break
    return t


def raw_thresholds(standardized: Sequence[float], model: StandardizationModel) -> list[float]:
    """Back-transform to the measurement scale.

    Classes the model never saw get -inf, so every screening record of such a class alarms.
    """
    raw = []
    for m, s, c in zip(model.mu, model.sigma, standardized, strict=True):
        if m is None:
            raw.append(-math.inf)
        elif not math.isfinite(c):
            raw.append(c)
        else:
            raw.append(_raw_threshold(m, s, c))
    return raw


def thresholds_for_rule(
    rule: RuleSpec,
    dist: ClassDistribution,
    alpha: float,
    qf: QuantileFunction,
    cdf: CdfFunction,
) -> ThresholdSet:
    """Dispatch a rule specification to the matching threshold construction."""
    match rule:
        case ProportionalRule():
            return proportional_thresholds(dist, alpha, qf)
        case GammaRule(gamma=gamma):
            return gamma_proportional_thresholds(dist, gamma, alpha, qf)
        case ModifiedRule(k0=k0, p_min=p_min, p_max=p_max):
            return modified_thresholds(dist, k0, p_min, alpha, qf, p_max=p_max)
        case ConstantRule():
            return constant_thresholds(dist, alpha, qf)
        case SubprobabilityRule(g=g):
            ts = thresholds_from_subprobability(g, dist, qf)
            if ts.alpha > alpha + 1e-9:
                logger.warning(
                    "subprobability vector implies level %.6g above alpha = %g", ts.alpha, alpha
                )
            return ts
        case OptimalRule(alternative=alt, c_star=c_star, solver=solver):
            inst = build_lp(dist, alpha, alt, cdf, qf=qf, c_star=c_star)
            g = solve_minority_greedy(inst) if solver == "greedy" else solve_simplex(inst)
            return thresholds_from_subprobability(g, dist, qf, alpha)
    raise ParameterError(f"unsupported rule specification {rule!r}")


@dataclass(frozen=True, eq=False)
class _Fit:
    dist: ClassDistribution
    residuals: np.ndarray
    model: StandardizationModel
    ed: EmpiricalDistribution


def _fit(sample: LabeledSample, mode: Mode, tau: float) -> _Fit:
    dist = relative_frequencies(sample)
    residuals, model = standardize(sample, mode, tau)
    return _Fit(dist, residuals, model, EmpiricalDistribution(residuals))


def _estimated(rule: RuleSpec, sample: LabeledSample, fit: _Fit, ts: ThresholdSet) -> EstimatedRule:
    ts = ts.model_copy(update={"raw": raw_thresholds(ts.standardized, fit.model)})
    return EstimatedRule(
        rule=rule, n=sample.n, dist_hat=fit.dist, thresholds=ts, std_model=fit.model
    )


def estimate_rule(
    sample: LabeledSample,
    rule: RuleSpec,
    mode: Mode = "conditional",
    tau: float = math.inf,
    alpha: float = 0.1,
) -> EstimatedRule:
    """Plug-in thresholds: standardize, pool the residuals, apply `rule` with their e.c.d.f."""
    fit = _fit(sample, mode, tau)
    ts = thresholds_for_rule(rule, fit.dist, alpha, fit.ed.quantile, fit.ed.cdf)
    logger.debug("estimated %s thresholds from %d records", rule_name(rule), sample.n)
    return _estimated(rule, sample, fit, ts)


def estimate_optimal_design(
    sample: LabeledSample,
    rule: OptimalRule,
    mode: Mode = "conditional",
    tau: float = math.inf,
    alpha: float = 0.1,
) -> OptimalDesignReport:
    """Solve the minority-power LP with both solvers and compare against the proportional rule."""
    fit = _fit(sample, mode, tau)
    qf, cdf = fit.ed.quantile, fit.ed.cdf
    alt = rule.alternative
    inst = build_lp(fit.dist, alpha, alt, cdf, qf=qf, c_star=rule.c_star)
    g_greedy = solve_minority_greedy(inst)
    g_simplex = solve_simplex(inst)
    obj_greedy = lp_objective(inst, g_greedy)
    obj_simplex = lp_objective(inst, g_simplex)
    if abs(obj_greedy - obj_simplex) > 1e-9:
        logger.warning(
            "greedy and simplex objectives differ: %.12g vs %.12g", obj_greedy, obj_simplex
        )
    chosen = g_greedy if rule.solver == "greedy" else g_simplex
    optimal = _estimated(
        rule, sample, fit, thresholds_from_subprobability(chosen, fit.dist, qf, alpha)
    )

    reference_rule: RuleSpec = ProportionalRule()
    try:
        reference_ts = proportional_thresholds(fit.dist, alpha, qf)
    except AdmissibilityError as e:
        logger.warning("proportional reference unavailable (%s); using the constant rule", e)
        reference_rule = ConstantRule()
        reference_ts = constant_thresholds(fit.dist, alpha, qf)
    reference = _estimated(reference_rule, sample, fit, reference_ts)

    checks = []
    power = []
    for est in (optimal, reference):
        name = rule_name(est.rule)
        checks.append(
            verify_theorem1(
                est.thresholds, alt, fit.dist, alpha, cdf, qf=qf, c_star=inst.c_star, rule=name
            )
        )
        power.append(predicted_power(est.thresholds, alt, fit.dist, cdf, rule=name))

    return OptimalDesignReport(
        lp=inst,
        g_greedy=g_greedy.g,
        g_simplex=g_simplex.g,
        objective_greedy=obj_greedy,
        objective_simplex=obj_simplex,
        rule=optimal,
        reference=reference,
        checks=checks,
        power=power,
    )


def dichotomize_top_quantile(
    values: ArrayLike, q: float, high_label: str = "high", low_label: str = "low"
) -> list[str]:
    """Label a value `high_label` iff it is strictly above the empirical q-quantile."""
    if not 0 < q < 1:
        raise ParameterError(f"dichotomization quantile must lie in (0, 1), got {q!r}")
    values = np.asarray(values, dtype=float)
    cut = empirical_quantile(EmpiricalDistribution(values), q)
    high = values > cut
    if values.min() == values.max():
        logger.warning("covariate is constant; every record is labelled %r", low_label)
    logger.info(
        "Dichotomized at %.6g: %d %s, %d %s",
        cut,
        high.sum(),
        high_label,
        (~high).sum(),
        low_label,
    )
    return [high_label if h else low_label for h in high]


def cusum_transform(series: ArrayLike, h: int) -> np.ndarray:
    """Scaled sums h^(-1/2) * (xi_{t-h+1} + ... + xi_t) over disjoint windows t = h, 2h, ..."""
    series = np.asarray(series, dtype=float)
    if h < 1:
        raise ParameterError(f"window length must be at least 1, got {h!r}")
    if h > series.size:
        raise ParameterError(f"window length {h} exceeds the series length {series.size}")
    m = series.size // h
    return series[: m * h].reshape(m, h).sum(axis=1) / math.sqrt(h)


def cusum_sample(sample: LabeledSample, h: int) -> LabeledSample:
    """Window statistics paired with the class (and ground truth) of each window's last record."""
    x = cusum_transform(sample.x, h)
    last = np.arange(h - 1, x.size * h, h)
    logger.info("CUSUM windows of length %d: %d -> %d records", h, sample.n, x.size)
    return LabeledSample(
        x=x,
        codes=sample.codes[last],
        labels=sample.labels,
        y=None if sample.y is None else sample.y[last],
    )
