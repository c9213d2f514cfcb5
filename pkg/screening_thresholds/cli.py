from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any

import yaml
from pydantic import ValidationError

from screening_thresholds.data_io import (
    config_from_yaml,
    read_sample,
    report_to_csv,
    report_to_json,
    sample_from_config,
)
from screening_thresholds.errors import ParameterError, ScreeningError
from screening_thresholds.estimation import (
    cusum_sample,
    estimate_optimal_design,
    estimate_rule,
    relative_frequencies,
)
from screening_thresholds.evaluation import evaluate
from screening_thresholds.models import LabeledSample, OptimalRule, Report, RunConfig
from screening_thresholds.resampling import bootstrap_thresholds, smoothed_screening_sim
from screening_thresholds.rules import fuse_minority


class _LevelAwareFormatter(logging.Formatter):
    """Plain message for INFO (progress); "LEVEL: message" for WARNING and above."""

    def format(self, record: logging.LogRecord) -> str:
        if record.levelno >= logging.WARNING:
            return f"{record.levelname}: {record.getMessage()}"
        return record.getMessage()


_handler = logging.StreamHandler(sys.stderr)
_handler.setFormatter(_LevelAwareFormatter())
_package_logger = logging.getLogger("screening_thresholds")
_package_logger.addHandler(_handler)
_package_logger.setLevel(logging.INFO)
_package_logger.propagate = False

logger = logging.getLogger(__name__)

_RULE_KINDS = ("proportional", "gamma", "modified", "subprob", "constant", "optimal")


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParameterError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _parse_rule(text: str) -> dict[str, Any]:
    """`kind[:params]` -> rule mapping, e.g. `gamma:0.5` or `modified:k0=2,p_min=0.05`."""
    kind, _, params = text.partition(":")
    kind = kind.strip()
    if kind not in _RULE_KINDS:
        raise ParameterError(
            f"unknown rule {kind!r}", hint=f"choose one of: {', '.join(_RULE_KINDS)}"
        )
    rule: dict[str, Any] = {"kind": kind}
    if kind == "gamma":
        values = _floats(params, "gamma")
        if len(values) != 1:
            raise ParameterError(f"gamma rule needs exactly one exponent, got {params!r}")
        rule["gamma"] = values[0]
    elif kind == "subprob":
        rule["g"] = _floats(params, "subprob")
    elif kind == "modified":
        for item in filter(None, (p.strip() for p in params.split(","))):
            key, sep, value = item.partition("=")
            if not sep or key not in ("k0", "p_min", "p_max"):
                raise ParameterError(f"modified rule: cannot parse {item!r}")
            rule[key] = value
    elif params:
        raise ParameterError(f"rule {kind!r} takes no parameters")
    return rule


def _optimal_overrides(args: argparse.Namespace, rule: dict[str, Any]) -> dict[str, Any]:
    alternative = dict(rule.get("alternative") or {})
    for flag in ("delta", "sigma", "beta_k"):
        value = getattr(args, flag, None)
        if value is not None:
            alternative[flag] = _floats(value, f"--{flag.replace('_', '-')}")
    if getattr(args, "beta", None) is not None:
        alternative["beta"] = args.beta
    rule = {**rule, "alternative": alternative}
    if getattr(args, "c_star", None) is not None:
        rule["c_star"] = _floats(args.c_star, "--c-star")
    if getattr(args, "solver", None) is not None:
        rule["solver"] = args.solver
    return rule


_CONFIG_FLAGS = {
    "input": "input",
    "screening": "screening",
    "x_column": "x_column",
    "z_column": "z_column",
    "y_column": "y_column",
    "dichotomize": "dichotomize_q",
    "high_label": "high_label",
    "low_label": "low_label",
    "delimiter": "delimiter",
    "cusum_window": "cusum_window",
    "fuse_minority": "fuse_minority",
    "alpha": "alpha",
    "mode": "mode",
    "tau": "tau",
    "workers": "workers",
    "fmt": "output_format",
}

_SECTION_FLAGS = {
    "bootstrap": {
        "replicates": "b",
        "seed": "seed",
        "ci": "ci",
        "keep_replicates": "keep_replicates",
    },
    "simulate": {
        "replicates": "b",
        "seed": "seed",
        "n_screen": "n_screen",
        "bw_factor": "bw_factor",
        "smoothing": "smoothing",
    },
}


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    """YAML file values overridden by every flag given on the command line."""
    data: dict[str, Any] = {}
    if args.config is not None:
        data = config_from_yaml(args.config.read_text(encoding="utf-8")).model_dump()

    for flag, key in _CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = str(value) if isinstance(value, Path) else value
    if args.drop_nonpositive:
        data["drop_nonpositive"] = args.drop_nonpositive
    if args.labels is not None:
        data["labels"] = [v.strip() for v in args.labels.split(",") if v.strip()]

    section = _SECTION_FLAGS.get(args.command)
    if section is not None:
        values = dict(data.get(args.command) or {})
        for flag, key in section.items():
            value = getattr(args, flag, None)
            if value is not None:
                values[key] = value
        data[args.command] = values

    rule = _parse_rule(args.rule) if args.rule is not None else data.get("rule")
    if rule is None and args.command == "optimal":
        rule = {"kind": "optimal"}
    if rule is not None and rule.get("kind") == "optimal":
        rule = _optimal_overrides(args, rule)
    if rule is not None:
        data["rule"] = rule
    return RunConfig.model_validate(data)


def _learning_sample(config: RunConfig) -> tuple[LabeledSample, dict[str, str] | None]:
    """The configured learning sample and, with `fuse_minority`, the label mapping applied to it."""
    sample = sample_from_config(config)
    if config.cusum_window is not None:
        sample = cusum_sample(sample, config.cusum_window)
    if not config.fuse_minority:
        return sample, None
    fused, mapping = fuse_minority(relative_frequencies(sample), config.alpha)
    logger.info(
        "Fused %d class(es) into %r, keeping %r", sample.k - 1, fused.labels[1], fused.labels[0]
    )
    return sample.relabel(mapping, fused.labels), mapping


def _emit(args: argparse.Namespace, config: RunConfig, result) -> None:
    report = Report(command=args.command, config=config, result=result)
    text = report_to_json(report) if config.output_format == "json" else report_to_csv(report)
    if args.output is None:
        print(text)
        return
    args.output.write_text(text + "\n", encoding="utf-8")
    logger.info("Wrote %s", args.output)


def _cmd_thresholds(args: argparse.Namespace) -> None:
    """Estimate per-class thresholds from a learning sample."""
    config = _resolve_config(args)
    sample, _ = _learning_sample(config)
    result = estimate_rule(sample, config.rule, config.mode, config.tau, config.alpha)
    _emit(args, config, result)


def _cmd_optimal(args: argparse.Namespace) -> None:
    """Solve the minority-power design and check it against the proportional rule."""
    config = _resolve_config(args)
    if not isinstance(config.rule, OptimalRule):
        raise ParameterError(
            f"the optimal command needs an optimal rule, got {config.rule.kind!r}",
            hint="use --rule optimal with --delta/--sigma/--beta or --beta-k",
        )
    sample, _ = _learning_sample(config)
    result = estimate_optimal_design(sample, config.rule, config.mode, config.tau, config.alpha)
    _emit(args, config, result)


def _cmd_evaluate(args: argparse.Namespace) -> None:
    """Apply estimated thresholds to a screening sample (the learning sample by default)."""
    config = _resolve_config(args)
    sample, mapping = _learning_sample(config)
    est = estimate_rule(sample, config.rule, config.mode, config.tau, config.alpha)
    if config.screening is None:
        logger.info("Evaluating on the learning sample")
        screening = sample
    else:
        screening = read_sample(
            config.screening,
            x_column=config.x_column,
            z_column=config.z_column,
            y_column=config.y_column,
            dichotomize_q=config.dichotomize_q,
            high_label=config.high_label,
            low_label=config.low_label,
            drop_nonpositive=config.drop_nonpositive,
            delimiter=config.delimiter,
            labels=list(mapping) if mapping is not None else est.dist_hat.labels,
        )
        if config.cusum_window is not None:
            screening = cusum_sample(screening, config.cusum_window)
        if mapping is not None:
            screening = screening.relabel(mapping, est.dist_hat.labels)
    _emit(args, config, evaluate(screening, est))


def _cmd_bootstrap(args: argparse.Namespace) -> None:
    """Bootstrap standard errors and percentile intervals of the standardized thresholds."""
    config = _resolve_config(args)
    sample, _ = _learning_sample(config)
    boot = config.bootstrap
    result = bootstrap_thresholds(
        sample,
        config.rule,
        config.mode,
        config.tau,
        config.alpha,
        b=boot.b,
        seed=boot.seed,
        ci=boot.ci,
        keep_replicates=boot.keep_replicates,
        workers=config.workers,
    )
    _emit(args, config, result)


def _cmd_simulate(args: argparse.Namespace) -> None:
    """Smoothed-bootstrap screening simulation of alarm rates."""
    config = _resolve_config(args)
    sample, _ = _learning_sample(config)
    sim = config.simulate
    result = smoothed_screening_sim(
        sample,
        config.rule,
        config.mode,
        config.tau,
        config.alpha,
        n_screen=sim.n_screen,
        b=sim.b,
        bw_factor=sim.bw_factor,
        seed=sim.seed,
        smoothing=sim.smoothing,
        workers=config.workers,
    )
    _emit(args, config, result)


def _add_quiet_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--quiet",
        "-q",
        action="store_true",
        help="Suppress informational progress messages (errors are still printed)",
    )


def _add_common_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config", "-c", type=Path, metavar="FILE", help="YAML run configuration"
    )
    parser.add_argument("--input", "-i", type=Path, metavar="FILE", help="Learning sample")
    parser.add_argument("--x-column", dest="x_column", help="Measurement column (default: x)")
    parser.add_argument("--z-column", dest="z_column", help="Class column (default: z)")
    parser.add_argument("--y-column", dest="y_column", help="Optional 0/1 ground truth column")
    parser.add_argument(
        "--dichotomize",
        type=float,
        metavar="Q",
        help="Treat the class column as numeric and split it at its empirical Q-quantile",
    )
    parser.add_argument("--high-label", dest="high_label", help="Label above the split")
    parser.add_argument("--low-label", dest="low_label", help="Label at or below the split")
    parser.add_argument(
        "--drop-nonpositive",
        action="append",
        dest="drop_nonpositive",
        metavar="COLUMN",
        help="Drop rows whose COLUMN is not positive (repeatable)",
    )
    parser.add_argument("--delimiter", help="Field delimiter (default: ,)")
    parser.add_argument(
        "--labels", metavar="A,B,...", help="Declared class labels, in report order"
    )
    parser.add_argument(
        "--cusum-window",
        type=int,
        dest="cusum_window",
        metavar="H",
        help="Replace measurements by scaled sums over disjoint windows of H records",
    )
    parser.add_argument(
        "--fuse-minority",
        action="store_true",
        default=None,
        dest="fuse_minority",
        help="Keep the rarest class and merge all others into one class before estimating",
    )
    parser.add_argument(
        "--rule",
        "-r",
        help=(
            "proportional | gamma:G | modified:k0=K,p_min=P[,p_max=Q] | subprob:G1,G2,... | "
            "constant | optimal (default: proportional)"
        ),
    )
    parser.add_argument("--alpha", "-a", type=float, help="Type I error level (default: 0.1)")
    parser.add_argument(
        "--mode",
        choices=["marginal", "conditional"],
        help="Standardization mode (default: conditional)",
    )
    parser.add_argument(
        "--tau", type=float, help="Truncation constant for the moments (default: inf)"
    )
    parser.add_argument("--delta", metavar="D1,D2,...", help="Alternative shift per class")
    parser.add_argument("--sigma", metavar="S1,S2,...", help="Alternative scale per class")
    parser.add_argument("--beta", type=float, help="Marginal type II budget")
    parser.add_argument(
        "--beta-k", dest="beta_k", metavar="B1,B2,...", help="Per-class type II budgets"
    )
    parser.add_argument(
        "--c-star",
        dest="c_star",
        metavar="C1,C2,...",
        help="Fixed power thresholds instead of estimating them",
    )
    parser.add_argument(
        "--solver", choices=["greedy", "simplex"], help="LP solver (default: greedy)"
    )
    parser.add_argument(
        "--format",
        "-f",
        choices=["json", "csv"],
        dest="fmt",
        help="Output format (default: json)",
    )
    parser.add_argument(
        "--output", "-o", type=Path, metavar="FILE", help="Write the report to FILE"
    )
    _add_quiet_arg(parser)


def _add_workers_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--workers",
        type=int,
        metavar="N",
        help="Number of parallel workers for replicates (default: 4)",
    )


def _add_seed_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--replicates", "-B", type=int, metavar="B", help="Number of replicates (default: 1000)"
    )
    parser.add_argument("--seed", type=int, help="Random seed (default: 0)")
    _add_workers_arg(parser)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="screening-thresholds",
        description="Per-class alarm thresholds for screening heterogeneous populations",
    )
    parser.set_defaults(quiet=False)
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    thresholds_p = subparsers.add_parser(
        "thresholds", help="Estimate per-class thresholds from a learning sample."
    )
    _add_common_args(thresholds_p)
    thresholds_p.set_defaults(func=_cmd_thresholds)

    optimal_p = subparsers.add_parser(
        "optimal", help="Solve the minority-power threshold design."
    )
    _add_common_args(optimal_p)
    optimal_p.set_defaults(func=_cmd_optimal)

    evaluate_p = subparsers.add_parser(
        "evaluate", help="Alarm rates and contingency tables on a screening sample."
    )
    _add_common_args(evaluate_p)
    evaluate_p.add_argument(
        "--screening",
        "-s",
        type=Path,
        metavar="FILE",
        help="Screening sample (default: the learning sample)",
    )
    evaluate_p.set_defaults(func=_cmd_evaluate)

    bootstrap_p = subparsers.add_parser(
        "bootstrap", help="Bootstrap standard errors of the standardized thresholds."
    )
    _add_common_args(bootstrap_p)
    _add_seed_args(bootstrap_p)
    bootstrap_p.add_argument(
        "--ci", type=float, help="Percentile interval level (default: 0.95)"
    )
    bootstrap_p.add_argument(
        "--keep-replicates",
        action="store_true",
        default=None,
        dest="keep_replicates",
        help="Include the replicate matrix in the report",
    )
    bootstrap_p.set_defaults(func=_cmd_bootstrap)

    simulate_p = subparsers.add_parser(
        "simulate", help="Smoothed-bootstrap screening simulation of alarm rates."
    )
    _add_common_args(simulate_p)
    _add_seed_args(simulate_p)
    simulate_p.add_argument(
        "--n-screen",
        "-N",
        type=int,
        dest="n_screen",
        help="Screening population size (default: 10000)",
    )
    simulate_p.add_argument(
        "--bw-factor",
        type=float,
        dest="bw_factor",
        help="Smoothing bandwidth factor (default: 1.59)",
    )
    simulate_p.add_argument(
        "--smoothing",
        choices=["class", "pooled"],
        help="Per-class or pooled standard deviation for the smoothing noise",
    )
    simulate_p.set_defaults(func=_cmd_simulate)

    return parser


def main() -> None:
    parser = _build_parser()
    if len(sys.argv) == 1:
        parser.print_help()
        sys.exit(0)
    args = parser.parse_args()
    if args.quiet:
        logging.getLogger("screening_thresholds").setLevel(logging.WARNING)
    try:
        args.func(args)
    except ScreeningError as e:
        print(f"Error: {type(e).__name__}: {e}", file=sys.stderr)
        if e.hint:
            print(e.hint, file=sys.stderr)
        sys.exit(e.exit_code)
    except (ValidationError, yaml.YAMLError, UnicodeDecodeError) as e:
        print(f"Error: {type(e).__name__}: {e}", file=sys.stderr)
        sys.exit(2)
    except OSError as e:
        print(f"Error: {type(e).__name__}: {e}", file=sys.stderr)
        sys.exit(4)
