"""Level-alpha threshold designs with per-class power budgets.

A design is a p-subprobability vector g with sum(g) >= 1 - alpha and g_k <= b_k, where
b_k = p_k * cdf(c*(z_k)) is the largest mass class k may keep below its threshold while still
detecting the alternative with probability 1 - beta_k. Among those, the minority class gets the
smallest g (i.e. the lowest threshold and the highest power).
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import Literal

import numpy as np

from screening_thresholds.errors import InfeasibleError, ParameterError
from screening_thresholds.models import (
    AlternativeSpec,
    ClassDistribution,
    ConditionCheck,
    LpInstance,
    PowerReport,
    SubProbabilityVector,
    Theorem1Report,
    ThresholdSet,
)
from screening_thresholds.rules import CdfFunction, QuantileFunction, false_alarm_rate

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-12
STRICT_CAP = 1e-12
_PIVOT_TOL = 1e-10
_PHASE1_TOL = 1e-10


def c_opt_star(
    alt: AlternativeSpec, budgets: Sequence[float] | np.ndarray, qf: QuantileFunction
) -> np.ndarray:
    """Largest thresholds keeping power 1 - budget: delta + sigma * qf(budget)."""
    budgets = np.asarray(budgets, dtype=float)
    if budgets.shape != (len(alt.delta),):
        raise ParameterError(f"need {len(alt.delta)} budgets, got {budgets.size}")
    if np.any((budgets <= 0) | (budgets >= 1)):
        raise ParameterError("type II budgets must lie in (0, 1)")
    delta = np.asarray(alt.delta, dtype=float)
    sigma = np.asarray(alt.sigma, dtype=float)
    return delta + sigma * np.asarray(qf(budgets), dtype=float)


def _check_alternative(alt: AlternativeSpec, dist: ClassDistribution) -> None:
    if len(alt.delta) != dist.k:
        raise ParameterError(
            f"alternative describes {len(alt.delta)} classes, distribution has {dist.k}"
        )
    if any(s <= 0 for s in alt.sigma):
        raise ParameterError("alternative scales must be positive")


def _resolve_c_star(
    alt: AlternativeSpec,
    k: int,
    qf: QuantileFunction | None,
    c_star: Sequence[float] | None,
) -> np.ndarray:
    if c_star is not None:
        values = np.asarray(c_star, dtype=float)
        if values.shape != (k,):
            raise ParameterError(f"c_star needs {k} entries, got {values.size}")
        return values
    if qf is None:
        raise ParameterError("either a quantile function or fixed c_star values are needed")
    return c_opt_star(alt, alt.budgets(k), qf)


def build_lp(
    dist: ClassDistribution,
    alpha: float,
    alt: AlternativeSpec,
    cdf: CdfFunction,
    qf: QuantileFunction | None = None,
    c_star: Sequence[float] | None = None,
) -> LpInstance:
    """Minority-power LP: min g_{k*} s.t. -1'g <= alpha - 1, g <= p * cdf(c*), g >= 0.

    c* is taken from `c_star` when given, otherwise computed from the alternative with `qf`.
    """
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
    _check_alternative(alt, dist)
    if alt.is_null:
        raise ParameterError(
            "the alternative coincides with the null model (delta = 0, sigma = 1)",
            hint="give a shift or a scale change for at least one class",
        )
    k = dist.k
    p = dist.p
    cs = _resolve_c_star(alt, k, qf, c_star)
    upper = p * np.asarray(cdf(cs), dtype=float)
    capped = (p > 0) & (upper >= p)
    if np.any(capped):
        logger.debug("capping %d upper bound(s) just below p_k", int(capped.sum()))
        upper = np.where(capped, p * (1 - STRICT_CAP), upper)
    minority = int(np.argmin(p))
    a = np.vstack([-np.ones(k), np.eye(k)])
    return LpInstance(
        labels=list(dist.labels),
        alpha=alpha,
        a=a.tolist(),
        b=[alpha - 1.0, *upper.tolist()],
        d=np.eye(k)[minority].tolist(),
        minority=minority,
        c_star=cs.tolist(),
    )


def _feasibility_gap(inst: LpInstance) -> float:
    return (1.0 - inst.alpha) - math.fsum(inst.upper)


def _infeasible(inst: LpInstance, gap: float) -> InfeasibleError:
    return InfeasibleError(
        f"upper bounds sum to {math.fsum(inst.upper):.6g}, short of 1 - alpha = "
        f"{1 - inst.alpha:.6g} by {gap:.3g}",
        gap=gap,
        hint="relax the type II budgets or raise alpha",
    )


def _finish(inst: LpInstance, g: np.ndarray) -> SubProbabilityVector:
    g = np.clip(g, 0.0, inst.upper)
    return SubProbabilityVector(labels=list(inst.labels), g=g.tolist())


def lp_objective(inst: LpInstance, g: SubProbabilityVector) -> float:
    return float(np.dot(inst.d, g.values))


def solve_minority_greedy(inst: LpInstance) -> SubProbabilityVector:
    """Closed-form optimum: every other class sits at its bound, the minority takes the rest."""
    gap = _feasibility_gap(inst)
    if gap > FEASIBILITY_TOL:
        raise _infeasible(inst, gap)
    upper = inst.upper
    k_star = inst.minority
    others = math.fsum(np.delete(upper, k_star))
    g = upper.copy()
    g[k_star] = min(upper[k_star], max(0.0, (1.0 - inst.alpha) - others))
    return _finish(inst, g)


def _pivot(t: np.ndarray, row: int, col: int) -> None:
    t[row] /= t[row, col]
    for r in range(t.shape[0]):
        if r != row and t[r, col] != 0.0:
            t[r] -= t[r, col] * t[row]


def _iterate(t: np.ndarray, basis: list[int], ncols: int) -> None:
    # Bland's rule: lowest entering index, ties in the ratio test broken by lowest basic index.
    for _ in range(50 * (t.shape[0] + ncols)):
        entering = np.flatnonzero(t[-1, :ncols] < -_PIVOT_TOL)
        if entering.size == 0:
            return
        col = int(entering[0])
        column = t[:-1, col]
        rows = np.flatnonzero(column > _PIVOT_TOL)
        if rows.size == 0:
            raise AssertionError("LP is unbounded")
        ratios = t[rows, -1] / column[rows]
        ties = rows[ratios <= ratios.min() + 1e-12]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(t, row, col)
        basis[row] = col
    raise AssertionError("simplex did not terminate")


def _two_phase(
    cost: np.ndarray, a_ub: np.ndarray, b_ub: np.ndarray
) -> tuple[np.ndarray | None, float]:
    """min cost'x s.t. a_ub x <= b_ub, x >= 0.

    Returns (x, phase I residual); x is None when the constraints are infeasible.
    """
    m, n = a_ub.shape
    a = a_ub.astype(float)
    b = b_ub.astype(float)
    sign = np.where(b < 0, -1.0, 1.0)
    a *= sign[:, None]
    b *= sign
    artificial_rows = np.flatnonzero(sign < 0)
    n_art = artificial_rows.size
    width = n + m + n_art

    t = np.zeros((m + 1, width + 1))
    t[:m, :n] = a
    t[:m, n : n + m] = np.diag(sign)
    t[:m, -1] = b
    basis = [n + i for i in range(m)]
    for j, i in enumerate(artificial_rows):
        t[i, n + m + j] = 1.0
        basis[i] = n + m + j

    # phase I: minimize the sum of artificials
    t[-1, n + m : width] = 1.0
    for i in artificial_rows:
        t[-1] -= t[i]
    _iterate(t, basis, width)
    residual = -t[-1, -1]
    if residual > _PHASE1_TOL:
        return None, residual

    keep = list(range(m))
    for r in range(m):
        if basis[r] < n + m:
            continue
        candidates = np.flatnonzero(np.abs(t[r, : n + m]) > _PIVOT_TOL)
        if candidates.size:
            _pivot(t, r, int(candidates[0]))
            basis[r] = int(candidates[0])
        else:
            keep.remove(r)
    t = np.vstack([t[keep][:, list(range(n + m)) + [width]], np.zeros(n + m + 1)])
    basis = [basis[r] for r in keep]

    # phase II
    full_cost = np.concatenate([cost, np.zeros(m)])
    t[-1, : n + m] = full_cost
    for r, col in enumerate(basis):
        if full_cost[col] != 0.0:
            t[-1] -= full_cost[col] * t[r]
    _iterate(t, basis, n + m)

    x = np.zeros(n + m)
    for r, col in enumerate(basis):
        x[col] = t[r, -1]
    return x[:n], residual


def solve_simplex(
    inst: LpInstance, objective: Literal["minority", "feasibility"] = "minority"
) -> SubProbabilityVector:
    """Dense two-phase simplex on the instance.

    `objective="feasibility"` drops the objective and returns the first feasible vertex.
    """
    k = len(inst.labels)
    cost = np.asarray(inst.d, dtype=float) if objective == "minority" else np.zeros(k)
    x, residual = _two_phase(cost, np.asarray(inst.a, dtype=float), np.asarray(inst.b, dtype=float))
    if x is None:
        gap = _feasibility_gap(inst)
        logger.debug("phase I residual %.3g", residual)
        raise _infeasible(inst, max(gap, residual))
    return _finish(inst, x)


def predicted_power(
    ts: ThresholdSet,
    alt: AlternativeSpec,
    dist: ClassDistribution,
    cdf: CdfFunction,
    rule: str = "custom",
) -> PowerReport:
    """Detection power of `ts` when U = delta(z) + sigma(z) * U0 and U0 has distribution `cdf`."""
    _check_alternative(alt, dist)
    c = np.asarray(ts.standardized, dtype=float)
    delta = np.asarray(alt.delta, dtype=float)
    sigma = np.asarray(alt.sigma, dtype=float)
    conditional = 1.0 - np.asarray(cdf((c - delta) / sigma), dtype=float)
    return PowerReport(
        rule=rule,
        labels=list(dist.labels),
        marginal=float(np.sum(dist.p * conditional)),
        conditional=conditional.tolist(),
    )


def _le(lhs: float, rhs: float) -> bool:
    return lhs <= rhs + 1e-12 * max(1.0, abs(rhs)) if math.isfinite(rhs) else lhs <= rhs


def verify_theorem1(
    ts: ThresholdSet,
    alt: AlternativeSpec,
    dist: ClassDistribution,
    alpha: float,
    cdf: CdfFunction,
    qf: QuantileFunction | None = None,
    c_star: Sequence[float] | None = None,
    rule: str = "custom",
) -> Theorem1Report:
    """Check the sufficient conditions for a level-alpha rule with the requested power.

    Conditions reported:
      level               false-alarm rate sum p_k (1 - cdf(c_k)) <= alpha
      marginal_power      c_k <= c*(z_k; beta) for every class
      conditional_power   c_k <= c*(z_k; beta_k) for every class
      budget              sum p_k beta_k <= beta
      subprobability_bound  g_k <= b_k = p_k cdf(c*(z_k; beta_k))
    Failures are reported, never raised.
    """
    _check_alternative(alt, dist)
    k = dist.k
    p = dist.p
    c = np.asarray(ts.standardized, dtype=float)
    checks: list[ConditionCheck] = []

    rate = false_alarm_rate(ts, dist, cdf)
    checks.append(
        ConditionCheck(condition="level", lhs=rate, rhs=alpha, passed=rate <= alpha + 1e-9)
    )

    cs = _resolve_c_star(alt, k, qf, c_star)
    if alt.beta_k is None:
        condition = "marginal_power"
    else:
        condition = "conditional_power"
        if alt.beta is not None and qf is not None:
            marginal_cs = c_opt_star(alt, np.full(k, alt.beta), qf)
            for label, ck, mk in zip(dist.labels, c, marginal_cs, strict=True):
                checks.append(
                    ConditionCheck(
                        condition="marginal_power",
                        label=label,
                        lhs=float(ck),
                        rhs=float(mk),
                        passed=_le(float(ck), float(mk)),
                    )
                )
    for label, ck, sk in zip(dist.labels, c, cs, strict=True):
        checks.append(
            ConditionCheck(
                condition=condition,
                label=label,
                lhs=float(ck),
                rhs=float(sk),
                passed=_le(float(ck), float(sk)),
            )
        )

    if alt.beta is not None and alt.beta_k is not None:
        weighted = float(np.dot(p, alt.beta_k))
        checks.append(
            ConditionCheck(
                condition="budget", lhs=weighted, rhs=alt.beta, passed=_le(weighted, alt.beta)
            )
        )

    if ts.subprobability is not None:
        bounds = p * np.asarray(cdf(cs), dtype=float)
        for label, gk, bk in zip(dist.labels, ts.subprobability, bounds, strict=True):
            checks.append(
                ConditionCheck(
                    condition="subprobability_bound",
                    label=label,
                    lhs=float(gk),
                    rhs=float(bk),
                    passed=_le(float(gk), float(bk)),
                )
            )

    report = Theorem1Report(rule=rule, checks=checks)
    for failure in report.failures():
        where = f" for class {failure.label!r}" if failure.label is not None else ""
        logger.warning(
            "%s: condition %s fails%s (%.6g > %.6g)",
            rule,
            failure.condition,
            where,
            failure.lhs,
            failure.rhs,
        )
    return report
