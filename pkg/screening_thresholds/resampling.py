from __future__ import annotations

import logging
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Generic, Literal, TypeVar

import numpy as np

from screening_thresholds.errors import (
    AdmissibilityError,
    DegenerateScaleError,
    InfeasibleError,
    InsufficientDataError,
    InvariantViolationError,
    ParameterError,
    ResamplingError,
)
from screening_thresholds.estimation import Mode, estimate_rule
from screening_thresholds.models import (
    BootstrapReport,
    LabeledSample,
    RuleSpec,
    ScreeningSimReport,
)

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 100

# data-dependent failures of a single resample; the replicate is redrawn from a fresh stream
_REJECTABLE = (
    AdmissibilityError,
    DegenerateScaleError,
    InsufficientDataError,
    InfeasibleError,
    InvariantViolationError,
)

T = TypeVar("T")


def replicate_rng(seed: int, index: int, attempt: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by (seed, replicate index, attempt)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index, attempt])))


@dataclass
class _Replicate(Generic[T]):
    index: int
    value: T | None
    rejected: int


def _draw(fn: Callable[[np.random.Generator], T], seed: int, index: int) -> _Replicate[T]:
    for attempt in range(MAX_ATTEMPTS):
        try:
            return _Replicate(index, fn(replicate_rng(seed, index, attempt)), attempt)
        except _REJECTABLE as e:
            logger.debug("replicate %d attempt %d rejected: %s", index, attempt, e)
    return _Replicate(index, None, MAX_ATTEMPTS)


def _run_replicates(
    fn: Callable[[np.random.Generator], T], b: int, seed: int, workers: int
) -> tuple[list[T], int]:
    def draw_one(index: int) -> _Replicate[T]:
        return _draw(fn, seed, index)

    if workers > 1 and b > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(draw_one, range(b)))
    else:
        results = [draw_one(i) for i in range(b)]

    rejected = sum(r.rejected for r in results)
    exhausted = [r.index for r in results if r.value is None]
    if exhausted or rejected > b:
        raise ResamplingError(
            f"{rejected} of {b + rejected} bootstrap draws were rejected "
            f"({len(exhausted)} replicate(s) never succeeded)",
            hint="the learning sample is too small or too unbalanced for this rule",
        )
    if rejected:
        logger.warning("%d bootstrap draw(s) rejected and redrawn", rejected)
    return [r.value for r in results], rejected


def _resample(sample: LabeledSample, rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.integers(0, sample.n, size=size)


def bootstrap_thresholds(
    sample: LabeledSample,
    rule: RuleSpec,
    mode: Mode = "conditional",
    tau: float = math.inf,
    alpha: float = 0.1,
    b: int = 1000,
    seed: int = 0,
    ci: float = 0.95,
    keep_replicates: bool = False,
    workers: int = 1,
) -> BootstrapReport:
    """Nonparametric bootstrap of the standardized thresholds.

    Every replicate draws n records with replacement and reruns the full estimation pipeline
    (frequencies, moments in the same mode, pooled residual quantiles). Results depend only on
    `seed`, never on `workers`.
    """
    if b < 2:
        raise ParameterError(f"need at least 2 bootstrap replicates, got {b!r}")
    if not 0 < ci < 1:
        raise ParameterError(f"interval level must lie in (0, 1), got {ci!r}")
    base = estimate_rule(sample, rule, mode, tau, alpha)

    def replicate(rng: np.random.Generator) -> np.ndarray:
        resampled = sample.take(_resample(sample, rng, sample.n))
        est = estimate_rule(resampled, rule, mode, tau, alpha)
        return np.asarray(est.thresholds.standardized, dtype=float)

    logger.info("Running %d bootstrap replicates (seed %d)...", b, seed)
    values, rejected = _run_replicates(replicate, b, seed, workers)
    reps = np.vstack(values)
    lower, upper = np.quantile(reps, [(1 - ci) / 2, (1 + ci) / 2], axis=0)
    return BootstrapReport(
        labels=list(sample.labels),
        n=sample.n,
        b=b,
        seed=seed,
        ci_level=ci,
        estimate=base.thresholds.standardized,
        se=np.std(reps, axis=0, ddof=1).tolist(),
        ci_lower=lower.tolist(),
        ci_upper=upper.tolist(),
        rejected=rejected,
        replicates=reps.tolist() if keep_replicates else None,
    )


def screen_population(
    x: np.ndarray, codes: np.ndarray, raw: np.ndarray, k: int
) -> tuple[float, np.ndarray, np.ndarray]:
    """Alarm fractions of x > raw[code]: (marginal rate, per-class rates, per-class counts).

    Classes without records get a NaN rate.
    """
    alarms = x > raw[codes]
    counts = np.bincount(codes, minlength=k)
    hits = np.bincount(codes, weights=alarms.astype(float), minlength=k)
    rates = np.divide(hits, counts, out=np.full(k, np.nan), where=counts > 0)
    return float(alarms.sum() / x.size), rates, counts


def smoothing_scales(sample: LabeledSample, smoothing: Literal["class", "pooled"]) -> np.ndarray:
    """Standard deviation used for the smoothing noise of each class."""
    pooled = float(np.std(sample.x))
    if smoothing == "pooled":
        return np.full(sample.k, pooled)
    scales = np.full(sample.k, pooled)
    for code in range(sample.k):
        values = sample.x[sample.codes == code]
        if values.size >= 2:
            scales[code] = float(np.std(values))
    return scales


def smoothed_screening_sim(
    sample: LabeledSample,
    rule: RuleSpec,
    mode: Mode = "conditional",
    tau: float = math.inf,
    alpha: float = 0.1,
    n_screen: int = 10_000,
    b: int = 1000,
    bw_factor: float = 1.59,
    seed: int = 0,
    smoothing: Literal["class", "pooled"] | None = None,
    workers: int = 1,
) -> ScreeningSimReport:
    """Alarm rates of bootstrap-estimated thresholds on smoothed-bootstrap screening populations.

    Per replicate: learn raw thresholds on a size-n bootstrap sample, draw n_screen records from
    the original data with Gaussian noise of sd bw_factor * s * n_screen^(-1/5) added to x, and
    count alarms. Rates are averaged over the replicates.
    """
    if n_screen < 1:
        raise ParameterError(f"screening population size must be positive, got {n_screen!r}")
    if b < 1:
        raise ParameterError(f"need at least one replicate, got {b!r}")
    if bw_factor < 0:
        raise ParameterError(f"bandwidth factor must be nonnegative, got {bw_factor!r}")
    if smoothing is None:
        smoothing = "class" if mode == "conditional" else "pooled"
    estimate_rule(sample, rule, mode, tau, alpha)
    bandwidth = bw_factor * smoothing_scales(sample, smoothing) * n_screen ** (-0.2)
    k = sample.k

    def replicate(rng: np.random.Generator) -> tuple[float, np.ndarray, np.ndarray]:
        learning = sample.take(_resample(sample, rng, sample.n))
        raw = np.asarray(estimate_rule(learning, rule, mode, tau, alpha).thresholds.raw)
        idx = _resample(sample, rng, n_screen)
        codes = sample.codes[idx]
        x = sample.x[idx] + bandwidth[codes] * rng.standard_normal(n_screen)
        return screen_population(x, codes, raw, k)

    logger.info(
        "Simulating %d screening populations of %d records (seed %d)...", b, n_screen, seed
    )
    results, rejected = _run_replicates(replicate, b, seed, workers)
    marginal = np.array([r[0] for r in results])
    rates = np.vstack([r[1] for r in results])
    empty = np.vstack([r[2] == 0 for r in results]).sum(axis=0)
    for label, count in zip(sample.labels, empty, strict=True):
        if count:
            logger.warning("class %r absent from %d screening population(s)", label, count)

    class_rates: list[float | None] = []
    for column in rates.T:
        observed = column[~np.isnan(column)]
        class_rates.append(float(observed.mean()) if observed.size else None)

    return ScreeningSimReport(
        labels=list(sample.labels),
        b=b,
        n_screen=n_screen,
        bw_factor=bw_factor,
        smoothing=smoothing,
        bandwidth=bandwidth.tolist(),
        seed=seed,
        marginal_rate=float(marginal.mean()),
        class_rates=class_rates,
        empty_class_replicates=empty.astype(int).tolist(),
        rejected=rejected,
    )
