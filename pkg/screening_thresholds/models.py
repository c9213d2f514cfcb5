from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from screening_thresholds.errors import IngestError, UnknownClassError

PROB_TOL = 1e-12


class ClassDistribution(BaseModel):
    labels: list[str]
    probs: list[float]

    @model_validator(mode="after")
    def _check(self) -> ClassDistribution:
        if not self.labels:
            raise ValueError("a class distribution needs at least one class")
        if len(self.labels) != len(self.probs):
            raise ValueError(f"{len(self.labels)} labels but {len(self.probs)} probabilities")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("class labels must be distinct")
        if any(not math.isfinite(p) or p < 0 for p in self.probs):
            raise ValueError("class probabilities must be finite and nonnegative")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"class probabilities sum to {total!r}, not 1")
        return self

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownClassError([label]) from None


class SubProbabilityVector(BaseModel):
    labels: list[str]
    g: list[float]

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.g, dtype=float)


class ThresholdSet(BaseModel):
    labels: list[str]
    alpha: float = Field(gt=0, le=1)
    # quantile arguments q_k handed to the quantile function
    levels: list[float]
    standardized: list[float]
    raw: list[float] | None = None
    subprobability: list[float] | None = None

    @model_validator(mode="after")
    def _check(self) -> ThresholdSet:
        k = len(self.labels)
        for name in ("levels", "standardized", "raw", "subprobability"):
            values = getattr(self, name)
            if values is not None and len(values) != k:
                raise ValueError(f"{name} has {len(values)} entries, expected {k}")
        return self


class AlternativeSpec(BaseModel):
    """Shift/scale alternative U ~ delta(z) + sigma(z) * U0 with type II budgets."""

    delta: list[float]
    sigma: list[float]
    beta: float | None = Field(default=None, gt=0, lt=1)
    beta_k: list[float] | None = None

    @model_validator(mode="after")
    def _check(self) -> AlternativeSpec:
        if len(self.delta) != len(self.sigma):
            raise ValueError("delta and sigma must have one entry per class")
        if any(s <= 0 for s in self.sigma):
            raise ValueError("sigma must be positive for every class")
        if self.beta is None and self.beta_k is None:
            raise ValueError("give a marginal beta, per-class beta_k, or both")
        if self.beta_k is not None:
            if len(self.beta_k) != len(self.delta):
                raise ValueError("beta_k must have one entry per class")
            if any(not 0 < b < 1 for b in self.beta_k):
                raise ValueError("every beta_k must lie in (0, 1)")
        return self

    @property
    def is_null(self) -> bool:
        return all(d == 0 for d in self.delta) and all(s == 1 for s in self.sigma)

    def budgets(self, k: int) -> np.ndarray:
        """Per-class type II budgets; falls back to the marginal beta for every class."""
        if self.beta_k is not None:
            return np.asarray(self.beta_k, dtype=float)
        return np.full(k, self.beta, dtype=float)


class LpInstance(BaseModel):
    labels: list[str]
    alpha: float
    a: list[list[float]]
    b: list[float]
    d: list[float]
    minority: int
    c_star: list[float]

    @model_validator(mode="after")
    def _check(self) -> LpInstance:
        k = len(self.labels)
        a = np.asarray(self.a, dtype=float)
        if a.shape != (k + 1, k) or len(self.b) != k + 1 or len(self.d) != k:
            raise ValueError("LP instance shapes do not match the number of classes")
        if not np.array_equal(a[0], -np.ones(k)) or not np.array_equal(a[1:], np.eye(k)):
            raise ValueError("constraint matrix must stack -1^T over the identity")
        return self

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.b[1:], dtype=float)


class ConditionCheck(BaseModel):
    condition: str
    label: str | None = None
    lhs: float
    rhs: float
    passed: bool


class Theorem1Report(BaseModel):
    rule: str
    checks: list[ConditionCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[ConditionCheck]:
        return [c for c in self.checks if not c.passed]


class PowerReport(BaseModel):
    rule: str
    labels: list[str]
    marginal: float
    conditional: list[float]


class StandardizationModel(BaseModel):
    """Location/scale per class. Entries are None for declared classes never observed."""

    mode: Literal["marginal", "conditional"]
    tau: float = Field(default=math.inf, gt=0)
    labels: list[str]
    mu: list[float | None]
    sigma: list[float | None]

    @model_validator(mode="after")
    def _check(self) -> StandardizationModel:
        if not len(self.labels) == len(self.mu) == len(self.sigma):
            raise ValueError("mu and sigma need one entry per class")
        for label, m, s in zip(self.labels, self.mu, self.sigma, strict=True):
            if (m is None) != (s is None):
                raise ValueError(f"class {label!r} has only one of mu/sigma")
            if s is not None and not s > 0:
                raise ValueError(f"class {label!r} has nonpositive scale {s!r}")
        return self


# Rule specifications


class ProportionalRule(BaseModel):
    kind: Literal["proportional"] = "proportional"


class GammaRule(BaseModel):
    kind: Literal["gamma"] = "gamma"
    gamma: float = Field(gt=0, le=1)


class ModifiedRule(BaseModel):
    kind: Literal["modified"] = "modified"
    k0: int = Field(ge=1)
    p_min: float = Field(gt=0, lt=1)
    p_max: float | None = Field(default=None, gt=0, lt=1)


class SubprobabilityRule(BaseModel):
    kind: Literal["subprob"] = "subprob"
    g: list[float]


class ConstantRule(BaseModel):
    kind: Literal["constant"] = "constant"


class OptimalRule(BaseModel):
    kind: Literal["optimal"] = "optimal"
    alternative: AlternativeSpec
    # fixed c*_opt values; estimated from the residual quantile function when absent
    c_star: list[float] | None = None
    solver: Literal["greedy", "simplex"] = "greedy"


RuleSpec = Annotated[
    ProportionalRule | GammaRule | ModifiedRule | SubprobabilityRule | ConstantRule | OptimalRule,
    Field(discriminator="kind"),
]


def rule_name(rule: BaseModel) -> str:
    return getattr(rule, "kind", type(rule).__name__)


# Results


class EstimatedRule(BaseModel):
    kind: Literal["estimated_rule"] = "estimated_rule"
    rule: RuleSpec
    n: int = Field(ge=1)
    dist_hat: ClassDistribution
    thresholds: ThresholdSet
    std_model: StandardizationModel

    @model_validator(mode="after")
    def _check(self) -> EstimatedRule:
        if self.thresholds.raw is None:
            raise ValueError("an estimated rule carries raw-scale thresholds")
        if not self.dist_hat.labels == self.thresholds.labels == self.std_model.labels:
            raise ValueError("label order differs between distribution, thresholds and model")
        for m, s, c, t in zip(
            self.std_model.mu,
            self.std_model.sigma,
            self.thresholds.standardized,
            self.thresholds.raw,
            strict=True,
        ):
            if m is None or not math.isfinite(c):
                continue
            expected = m + s * c
            # reports are emitted at 6 significant digits
            if abs(t - expected) > 1e-5 * (abs(m) + abs(s * c) + 1.0):
                raise ValueError(f"raw threshold {t!r} is not mu + sigma * c = {expected!r}")
        return self


class OptimalDesignReport(BaseModel):
    kind: Literal["optimal_design"] = "optimal_design"
    lp: LpInstance
    g_greedy: list[float]
    g_simplex: list[float]
    objective_greedy: float
    objective_simplex: float
    rule: EstimatedRule
    reference: EstimatedRule
    checks: list[Theorem1Report]
    power: list[PowerReport]


class ClassEvaluation(BaseModel):
    label: str
    n: int = Field(ge=0)
    alarms: int = Field(ge=0)
    alarm_rate: float | None = Field(default=None, ge=0, le=1)
    tp: int | None = Field(default=None, ge=0)
    fn: int | None = Field(default=None, ge=0)
    fp: int | None = Field(default=None, ge=0)
    tn: int | None = Field(default=None, ge=0)
    # None when the denominator is zero
    tpr: float | None = Field(default=None, ge=0, le=1)
    tnr: float | None = Field(default=None, ge=0, le=1)

    @model_validator(mode="after")
    def _check(self) -> ClassEvaluation:
        if self.alarms > self.n:
            raise ValueError("more alarms than records")
        counts = (self.tp, self.fn, self.fp, self.tn)
        if any(c is not None for c in counts):
            if any(c is None for c in counts):
                raise ValueError("contingency counts must be all present or all absent")
            if sum(counts) != self.n:
                raise ValueError("contingency counts do not add up to the class size")
            if self.tp + self.fp != self.alarms:
                raise ValueError("TP + FP must equal the number of alarms")
        return self


class EvaluationReport(BaseModel):
    kind: Literal["evaluation"] = "evaluation"
    rule: str
    thresholds: ThresholdSet
    classes: list[ClassEvaluation]
    overall: ClassEvaluation

    @model_validator(mode="after")
    def _check(self) -> EvaluationReport:
        if sum(c.n for c in self.classes) != self.overall.n:
            raise ValueError("class sizes do not add up to the overall size")
        if sum(c.alarms for c in self.classes) != self.overall.alarms:
            raise ValueError("class alarms do not add up to the overall alarms")
        return self


class BootstrapReport(BaseModel):
    kind: Literal["bootstrap"] = "bootstrap"
    labels: list[str]
    n: int
    b: int = Field(ge=2)
    seed: int = Field(ge=0)
    ci_level: float = Field(gt=0, lt=1)
    estimate: list[float]
    se: list[float]
    ci_lower: list[float]
    ci_upper: list[float]
    rejected: int = Field(ge=0)
    replicates: list[list[float]] | None = None

    @model_validator(mode="after")
    def _check(self) -> BootstrapReport:
        if any(s < 0 for s in self.se):
            raise ValueError("standard errors must be nonnegative")
        if any(lo > hi for lo, hi in zip(self.ci_lower, self.ci_upper, strict=True)):
            raise ValueError("percentile interval endpoints are out of order")
        if self.replicates is not None and len(self.replicates) != self.b:
            raise ValueError("retained replicate matrix must have B rows")
        return self


class ScreeningSimReport(BaseModel):
    kind: Literal["simulation"] = "simulation"
    labels: list[str]
    b: int = Field(ge=1)
    n_screen: int = Field(ge=1)
    bw_factor: float = Field(ge=0)
    smoothing: Literal["class", "pooled"]
    bandwidth: list[float]
    seed: int = Field(ge=0)
    marginal_rate: float = Field(ge=0, le=1)
    class_rates: list[float | None]
    empty_class_replicates: list[int]
    rejected: int = Field(ge=0)

    @model_validator(mode="after")
    def _check(self) -> ScreeningSimReport:
        if any(r is not None and not 0 <= r <= 1 for r in self.class_rates):
            raise ValueError("class alarm rates must lie in [0, 1]")
        return self


class BootstrapConfig(BaseModel):
    b: int = Field(default=1000, ge=2)
    seed: int = Field(default=0, ge=0)
    ci: float = Field(default=0.95, gt=0, lt=1)
    keep_replicates: bool = False


class SimulateConfig(BaseModel):
    n_screen: int = Field(default=10_000, ge=1)
    b: int = Field(default=1000, ge=1)
    bw_factor: float = Field(default=1.59, ge=0)
    seed: int = Field(default=0, ge=0)
    # defaults to "class" in conditional mode and "pooled" in marginal mode
    smoothing: Literal["class", "pooled"] | None = None


class RunConfig(BaseModel):
    input: str | None = None
    screening: str | None = None
    x_column: str = "x"
    z_column: str = "z"
    y_column: str | None = None
    dichotomize_q: float | None = Field(default=None, gt=0, lt=1)
    high_label: str = "high"
    low_label: str = "low"
    drop_nonpositive: list[str] = Field(default_factory=list)
    delimiter: str = ","
    labels: list[str] | None = None
    cusum_window: int | None = Field(default=None, ge=1)
    fuse_minority: bool = False
    rule: RuleSpec = Field(default_factory=ProportionalRule)
    alpha: float = Field(default=0.1, gt=0, lt=1)
    mode: Literal["marginal", "conditional"] = "conditional"
    tau: float = Field(default=math.inf, gt=0)
    bootstrap: BootstrapConfig = Field(default_factory=BootstrapConfig)
    simulate: SimulateConfig = Field(default_factory=SimulateConfig)
    workers: int = Field(default=4, ge=1)
    output_format: Literal["json", "csv"] = "json"


ReportResult = Annotated[
    EstimatedRule | OptimalDesignReport | EvaluationReport | BootstrapReport | ScreeningSimReport,
    Field(discriminator="kind"),
]


class Report(BaseModel):
    schema_version: Literal["1"] = "1"
    command: str
    config: RunConfig
    result: ReportResult


# Learning / screening data


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """Measurements x with class codes into `labels` and optional ground truth y."""

    x: np.ndarray
    codes: np.ndarray
    labels: tuple[str, ...]
    y: np.ndarray | None = None

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        codes = np.asarray(self.codes, dtype=np.intp)
        if x.ndim != 1 or x.size == 0:
            raise IngestError("a labeled sample needs at least one measurement")
        if codes.shape != x.shape:
            raise IngestError("class codes and measurements differ in length")
        if not np.all(np.isfinite(x)):
            raise IngestError("measurements must be finite")
        if codes.min() < 0 or codes.max() >= len(self.labels):
            raise IngestError("class code outside the declared label set")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.y is not None:
            y = np.asarray(self.y, dtype=bool)
            if y.shape != x.shape:
                raise IngestError("ground truth and measurements differ in length")
            object.__setattr__(self, "y", y)

    @classmethod
    def from_records(
        cls,
        x,
        z,
        y=None,
        labels: list[str] | tuple[str, ...] | None = None,
    ) -> LabeledSample:
        z = [str(v) for v in z]
        if labels is None:
            labels = sorted(set(z))
        lookup = {label: i for i, label in enumerate(labels)}
        unknown = sorted({v for v in z if v not in lookup})
        if unknown:
            raise UnknownClassError(unknown, hint="add them to the declared label set")
        codes = np.fromiter((lookup[v] for v in z), dtype=np.intp, count=len(z))
        return cls(x=np.asarray(x, dtype=float), codes=codes, labels=tuple(labels), y=y)

    @property
    def n(self) -> int:
        return int(self.x.size)

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def z(self) -> list[str]:
        return [self.labels[c] for c in self.codes]

    def counts(self) -> np.ndarray:
        return np.bincount(self.codes, minlength=self.k)

    def take(self, index: np.ndarray) -> LabeledSample:
        return LabeledSample(
            x=self.x[index],
            codes=self.codes[index],
            labels=self.labels,
            y=None if self.y is None else self.y[index],
        )

    def relabel(self, mapping: dict[str, str], labels: list[str]) -> LabeledSample:
        return LabeledSample.from_records(
            self.x, [mapping[z] for z in self.z], y=self.y, labels=labels
        )
