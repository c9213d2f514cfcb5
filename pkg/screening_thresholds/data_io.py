from __future__ import annotations

import json
import logging
import math
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import yaml

from screening_thresholds.errors import IngestError
from screening_thresholds.estimation import dichotomize_top_quantile
from screening_thresholds.models import (
    BootstrapReport,
    EstimatedRule,
    EvaluationReport,
    LabeledSample,
    OptimalDesignReport,
    Report,
    RunConfig,
    ScreeningSimReport,
)

logger = logging.getLogger(__name__)

_TRUE = frozenset({"1", "true", "t", "yes", "y"})
_FALSE = frozenset({"0", "false", "f", "no", "n"})


# Ingestion


def _line_numbers(mask: pd.Series) -> list[int]:
    # header is line 1
    return [int(i) + 2 for i in mask[mask].index]


def _require_columns(frame: pd.DataFrame, columns: Sequence[str], path: Path) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise IngestError(
            f"{path}: missing column(s) {', '.join(map(repr, missing))}; "
            f"found {', '.join(map(repr, frame.columns))}",
        )


def _numeric(frame: pd.DataFrame, column: str, path: Path) -> pd.Series:
    values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
    bad = values.isna() | ~np.isfinite(values.fillna(0.0))
    if bad.any():
        lines = _line_numbers(bad)
        shown = ", ".join(map(str, lines[:10])) + (" ..." if len(lines) > 10 else "")
        raise IngestError(
            f"{path}: column {column!r} is not numeric on line(s) {shown}", lines=lines
        )
    return values.astype(float)


def _truth(frame: pd.DataFrame, column: str, path: Path) -> np.ndarray:
    text = frame[column].str.strip().str.lower()
    bad = ~text.isin(_TRUE | _FALSE)
    if bad.any():
        lines = _line_numbers(bad)
        raise IngestError(
            f"{path}: column {column!r} is not a 0/1 indicator on line(s) "
            f"{', '.join(map(str, lines[:10]))}",
            lines=lines,
        )
    return text.isin(_TRUE).to_numpy()


def read_sample(
    path: str | Path,
    x_column: str = "x",
    z_column: str = "z",
    y_column: str | None = None,
    dichotomize_q: float | None = None,
    high_label: str = "high",
    low_label: str = "low",
    drop_nonpositive: Sequence[str] = (),
    delimiter: str = ",",
    labels: Sequence[str] | None = None,
) -> LabeledSample:
    """Read a delimited file with a header into a labeled sample.

    Rows with a nonpositive value in any `drop_nonpositive` column are dropped first. A numeric
    class column is split at its empirical `dichotomize_q` quantile when that is given.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise IngestError(f"{path}: file is empty") from None
    except pd.errors.ParserError as e:
        raise IngestError(f"{path}: cannot parse delimited text: {e}") from None
    except UnicodeDecodeError as e:
        raise IngestError(
            f"{path}: not UTF-8 text (byte {e.start}: {e.reason})",
            hint="re-save the file as UTF-8",
        ) from None

    wanted = [x_column, z_column, *drop_nonpositive]
    if y_column is not None:
        wanted.append(y_column)
    _require_columns(frame, wanted, path)
    total = len(frame)

    for column in drop_nonpositive:
        frame = frame[_numeric(frame, column, path) > 0]
    dropped = total - len(frame)
    if frame.empty:
        raise IngestError(f"{path}: no records left ({total} read, {dropped} dropped)")

    x = _numeric(frame, x_column, path).to_numpy()
    if dichotomize_q is not None:
        z = dichotomize_top_quantile(
            _numeric(frame, z_column, path).to_numpy(), dichotomize_q, high_label, low_label
        )
        if labels is None:
            labels = [high_label, low_label]
    else:
        z_text = frame[z_column].str.strip()
        blank = z_text == ""
        if blank.any():
            lines = _line_numbers(blank)
            raise IngestError(f"{path}: empty class label on line(s) {lines[:10]}", lines=lines)
        z = z_text.tolist()
    y = _truth(frame, y_column, path) if y_column is not None else None

    logger.info("Read %d record(s) from %s (%d dropped)", len(frame), path, dropped)
    return LabeledSample.from_records(x, z, y=y, labels=labels)


def sample_from_config(config: RunConfig, path: str | None = None) -> LabeledSample:
    source = path if path is not None else config.input
    if source is None:
        raise IngestError("no input file given", hint="pass --input or set `input` in the config")
    return read_sample(
        source,
        x_column=config.x_column,
        z_column=config.z_column,
        y_column=config.y_column,
        dichotomize_q=config.dichotomize_q,
        high_label=config.high_label,
        low_label=config.low_label,
        drop_nonpositive=config.drop_nonpositive,
        delimiter=config.delimiter,
        labels=config.labels,
    )


# Configuration


def config_from_yaml(text: str) -> RunConfig:
    data = yaml.safe_load(text) or {}
    return RunConfig.model_validate(data)


# Reports


# class probabilities must keep summing to 1 when re-parsed, and the run configuration is echoed
# as given
_FULL_PRECISION = frozenset({"probs", "config"})


def _non_finite(value: float) -> str:
    if math.isnan(value):
        return "NaN"
    return "Infinity" if value > 0 else "-Infinity"


def _encode(obj: Any, exact: bool = False) -> Any:
    """Round finite floats to 6 significant digits and spell out non-finite ones as strings."""
    if isinstance(obj, dict):
        return {k: _encode(v, exact or k in _FULL_PRECISION) for k, v in obj.items()}
    if isinstance(obj, list | tuple):
        return [_encode(item, exact) for item in obj]
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return _non_finite(obj)
        return obj if exact else float(f"{obj:.6g}")
    return obj


def report_to_json(report: Report) -> str:
    """Strict JSON; pydantic reads the "Infinity" / "-Infinity" strings back as floats."""
    return json.dumps(_encode(report.model_dump()), indent=2, ensure_ascii=False, allow_nan=False)


def report_from_json(text: str) -> Report:
    return Report.model_validate(json.loads(text))


def _frame(report: Report) -> pd.DataFrame:
    result = report.result
    match result:
        case EstimatedRule(dist_hat=dist, thresholds=ts, std_model=model):
            return pd.DataFrame(
                {
                    "label": dist.labels,
                    "probability": dist.probs,
                    "level": ts.levels,
                    "standardized": ts.standardized,
                    "raw": ts.raw,
                    "mu": model.mu,
                    "sigma": model.sigma,
                }
            )
        case OptimalDesignReport():
            return pd.DataFrame(
                {
                    "label": result.lp.labels,
                    "probability": result.rule.dist_hat.probs,
                    "upper_bound": result.lp.b[1:],
                    "c_star": result.lp.c_star,
                    "g_greedy": result.g_greedy,
                    "g_simplex": result.g_simplex,
                    "standardized": result.rule.thresholds.standardized,
                    "raw": result.rule.thresholds.raw,
                    "reference_standardized": result.reference.thresholds.standardized,
                    "reference_raw": result.reference.thresholds.raw,
                    "power": result.power[0].conditional,
                    "reference_power": result.power[1].conditional,
                }
            )
        case EvaluationReport():
            rows = [c.model_dump() for c in [*result.classes, result.overall]]
            return pd.DataFrame(rows)
        case BootstrapReport():
            return pd.DataFrame(
                {
                    "label": result.labels,
                    "estimate": result.estimate,
                    "se": result.se,
                    "ci_lower": result.ci_lower,
                    "ci_upper": result.ci_upper,
                }
            )
        case ScreeningSimReport():
            frame = pd.DataFrame(
                {
                    "label": result.labels,
                    "alarm_rate": result.class_rates,
                    "bandwidth": result.bandwidth,
                    "empty_replicates": result.empty_class_replicates,
                }
            )
            marginal = pd.DataFrame([{"label": "marginal", "alarm_rate": result.marginal_rate}])
            return pd.concat([frame, marginal], ignore_index=True)
    raise TypeError(f"no tabular form for {type(result).__name__}")


def report_to_csv(report: Report) -> str:
    return _frame(report).to_csv(index=False, float_format="%.6g")
