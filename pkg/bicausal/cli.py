#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
"""Command line front end.

Exit codes: 0 on success, 1 when the input or the flags are invalid (any ``ValueError``,
or an unreadable file), 2 when a computation fails (any ``RuntimeError``: solver or
quadrature non-convergence, a failed bound). Errors are printed to stderr as
``error: <prefix>: ...``.
"""
import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

from bicausal.adapted import aw_value
from bicausal.bounds import SUITES, BoundViolationError
from bicausal.consistency_checker import check_run_config_consistency
from bicausal.context import DISTANCES, SMOOTH_DISTANCES, Context
from bicausal.logger import logger as bicausal_logger
from bicausal.measures import (
    clip,
    dump_measure,
    load_measure,
    standard_example,
    standard_example_base,
)
from bicausal.sequences import RATE_NS
from bicausal.smoothing import (
    DEFAULT_RADIUS_MULT,
    GAUSSIAN,
    NOISE_KINDS,
    SmoothingScheme,
    standard_example_smooth_aw,
)
from bicausal.transport import wasserstein_p

logger = bicausal_logger.getChild("cli")

FORMATS = ("json", "csv")


class UsageError(ValueError):
    """Raised when the command line cannot be parsed."""


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Everything a cli run depends on; built from flags only."""

    command: str
    kind: Optional[str] = None
    """Distance kind (``dist``, ``smooth-dist``) or example name (``example``)."""
    inputs: Tuple[str, ...] = ()
    p: Optional[float] = None
    q: Optional[float] = None
    sigma: Optional[float] = None
    R: Optional[float] = None
    delta: Optional[Tuple[float, ...]] = None
    eps: Optional[float] = None
    t: Optional[int] = None
    threads: Optional[int] = None
    grid_step: Optional[float] = None
    radius_mult: Optional[float] = None
    noise: str = GAUSSIAN
    seed: int = 0
    suite: Optional[str] = None
    count: Optional[int] = None
    ns: Optional[Tuple[int, ...]] = None
    out: Optional[str] = None
    fmt: str = "json"
    future: bool = False

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        values: Dict[str, Any] = {}
        for field in dataclasses.fields(cls):
            value = getattr(args, field.name, None)
            if value is None:
                continue
            if isinstance(value, list):
                value = tuple(value)
            values[field.name] = value
        return cls(**values)

    @property
    def scheme(self) -> SmoothingScheme:
        return SmoothingScheme(
            grid_step=self.grid_step,
            radius_mult=self.radius_mult or DEFAULT_RADIUS_MULT,
        )


class Output(NamedTuple):
    payload: Dict[str, Any]
    """What ``--format json`` writes."""
    rows: List[Dict[str, Any]]
    """What ``--format csv`` writes, one dict per line."""
    failure: Optional[Exception] = None
    """Raised after the output is written."""


def _load_inputs(config: RunConfig, n: int) -> List[Any]:
    return [load_measure(path) for path in config.inputs[:n]]


def cmd_dist(config: RunConfig, ctx: Context) -> Output:
    mu, nu = _load_inputs(config, 2)
    p = config.p or 1.0
    value = ctx.distance(config.kind, mu, nu, p)
    payload = {"distance": config.kind, "p": p, "value": value}
    return Output(payload, [payload])


def cmd_smooth_dist(config: RunConfig, ctx: Context) -> Output:
    mu, nu = _load_inputs(config, 2)
    p, sigma = config.p or 1.0, config.sigma or 1.0
    value, budget = ctx.smooth_distance(config.kind, mu, nu, p, sigma, config.noise)
    payload = {
        "distance": config.kind,
        "p": p,
        "sigma": sigma,
        "noise": config.noise,
        "grid_step": ctx.scheme.step_for(sigma),
        "radius_mult": ctx.scheme.radius_mult,
        "value": value,
        "budget": budget,
    }
    return Output(payload, [payload])


def cmd_modulus(config: RunConfig, ctx: Context) -> Output:
    (mu,) = _load_inputs(config, 1)
    curve = ctx.modulus(
        mu,
        config.t or 1,
        config.p or 1.0,
        config.delta or (0.25, 0.5, 1.0),
        future=config.future,
    )
    payload = curve.to_dict()
    return Output(payload, payload["samples"])


def cmd_h_iter(config: RunConfig, ctx: Context) -> Output:
    (mu,) = _load_inputs(config, 1)
    p, sigma = config.p or 1.0, config.sigma or 1.0
    h = ctx.h_iteration(mu, p, sigma)
    payload = {"p": p, "sigma": sigma, "h": h, "sum": math.fsum(h)}
    return Output(payload, [{"t": t, "h": value} for t, value in enumerate(h)])


def cmd_clip(config: RunConfig, ctx: Context) -> Output:  # noqa: U100
    (mu,) = _load_inputs(config, 1)
    payload = dump_measure(clip(mu, config.R or 1.0))
    rows = [
        {
            **{f"x{i}": x for i, x in enumerate(sum(atom["path"], []))},
            "weight": atom["weight"],
        }
        for atom in payload["atoms"]
    ]
    return Output(payload, rows)


def _report_row(report: Dict[str, Any]) -> Dict[str, Any]:
    keys = ("bound_id", "verdict", "lhs", "rhs", "slack", "budget", "budget_dominated")
    return {key: report[key] for key in keys}


def cmd_bounds(config: RunConfig, ctx: Context) -> Output:
    result = ctx.run_suite(config.suite or "core", count=config.count, fail_fast=False)
    payload = result.to_dict()
    failure = BoundViolationError(result.failures[0]) if result.failures else None
    return Output(payload, [_report_row(r) for r in payload["reports"]], failure)


def cmd_rates(config: RunConfig, ctx: Context) -> Output:
    mu = _load_inputs(config, 1)[0] if config.inputs else None
    seeds = None
    if config.count is not None:
        seeds = range(config.seed, config.seed + config.count)
    # the rate grid is coarser than the default one unless a step is given
    extra = {"scheme": config.scheme} if config.grid_step is not None else {}
    fit = ctx.rates(
        mu,
        config.p or 1.0,
        config.q or math.inf,
        config.sigma or 0.5,
        config.ns or RATE_NS,
        seeds,
        noise=config.noise,
        **extra,
    )
    payload = fit.to_dict()
    rows = [{"n": n, "value": v} for n, v in zip(fit.ns, fit.values)]
    return Output(payload, rows)


def cmd_example(config: RunConfig, ctx: Context) -> Output:
    eps, p = config.eps or 0.0, config.p or 1.0
    base, mu_eps = standard_example_base(), standard_example(eps)
    payload: Dict[str, Any] = {
        "example": config.kind,
        "eps": eps,
        "p": p,
        "w": wasserstein_p(base, mu_eps, p)[0],
        "aw": aw_value(base, mu_eps, p, threads=ctx.threads),
    }
    if config.sigma is not None:
        payload["sigma"] = config.sigma
        payload["value"] = standard_example_smooth_aw(eps, config.sigma, p)
    else:
        payload["value"] = payload["aw"]
    return Output(payload, [payload])


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--threads", type=int, help="worker cap (default: all cores)")
    parser.add_argument("--out", help="write the result here instead of stdout")
    parser.add_argument("--format", dest="fmt", choices=FORMATS, default="json")


def _add_smoothing(parser: argparse.ArgumentParser, *, sigma: Optional[float] = 1.0):
    parser.add_argument("--sigma", type=float, default=sigma)
    parser.add_argument("--noise", choices=NOISE_KINDS, default=GAUSSIAN)
    parser.add_argument("--grid-step", type=float, help="default: sigma / 16")
    parser.add_argument("--radius-mult", type=float, default=DEFAULT_RADIUS_MULT)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="bicausal",
        description="Adapted optimal transport between discrete path measures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    dist = sub.add_parser("dist", help="W_p, AW_p, AV or TV between two measures")
    dist.add_argument("kind", choices=DISTANCES)
    dist.add_argument("inputs", nargs=2, metavar="MEASURE")
    dist.add_argument("--p", type=float, default=1.0)
    _add_common(dist)
    dist.set_defaults(func=cmd_dist)

    smooth = sub.add_parser("smooth-dist", help="smoothed W_p or AW_p")
    smooth.add_argument("kind", choices=SMOOTH_DISTANCES)
    smooth.add_argument("inputs", nargs=2, metavar="MEASURE")
    smooth.add_argument("--p", type=float, default=1.0)
    _add_smoothing(smooth)
    _add_common(smooth)
    smooth.set_defaults(func=cmd_smooth_dist)

    modulus = sub.add_parser("modulus", help="modulus of continuity of the kernels")
    modulus.add_argument("inputs", nargs=1, metavar="MEASURE")
    modulus.add_argument("--t", type=int, default=1)
    modulus.add_argument("--p", type=float, default=1.0)
    modulus.add_argument(
        "--delta",
        type=float,
        action="append",
        help="repeatable; default: 0.25 0.5 1",
    )
    modulus.add_argument(
        "--future",
        action="store_true",
        help="use full-future kernels (the extended modulus)",
    )
    _add_common(modulus)
    modulus.set_defaults(func=cmd_modulus)

    h_iter = sub.add_parser("h-iter", help="the h^t iteration of the bandwidth bound")
    h_iter.add_argument("inputs", nargs=1, metavar="MEASURE")
    h_iter.add_argument("--p", type=float, default=1.0)
    h_iter.add_argument("--sigma", type=float, default=1.0)
    _add_common(h_iter)
    h_iter.set_defaults(func=cmd_h_iter)

    clip_ = sub.add_parser("clip", help="project every X_t onto the ball of radius R")
    clip_.add_argument("inputs", nargs=1, metavar="MEASURE")
    clip_.add_argument("--R", type=float, required=True)
    _add_common(clip_)
    clip_.set_defaults(func=cmd_clip)

    bounds = sub.add_parser("bounds", help="numerical bound suites")
    bounds_sub = bounds.add_subparsers(dest="action", required=True)
    bounds_run = bounds_sub.add_parser("run")
    bounds_run.add_argument("--suite", choices=SUITES, default="core")
    bounds_run.add_argument("--seed", type=int, default=0)
    bounds_run.add_argument("--count", type=int, help="instances per check")
    _add_common(bounds_run)
    bounds_run.set_defaults(func=cmd_bounds)

    rates = sub.add_parser("rates", help="empirical convergence rates")
    rates_sub = rates.add_subparsers(dest="action", required=True)
    rates_run = rates_sub.add_parser("run")
    rates_run.add_argument("inputs", nargs="*", metavar="MEASURE")
    rates_run.add_argument("--p", type=float, default=1.0)
    rates_run.add_argument(
        "--q",
        type=float,
        help="highest finite moment of the measure",
    )
    _add_smoothing(rates_run, sigma=0.5)
    rates_run.add_argument("--n", dest="ns", type=int, action="append")
    rates_run.add_argument("--seed", type=int, default=0)
    rates_run.add_argument("--count", type=int, help="number of seeds (default 20)")
    _add_common(rates_run)
    rates_run.set_defaults(func=cmd_rates)

    example = sub.add_parser("example", help="closed-form examples")
    example.add_argument("kind", choices=("standard",))
    example.add_argument("--eps", type=float, required=True)
    example.add_argument("--sigma", type=float)
    example.add_argument("--p", type=float, default=1.0)
    _add_common(example)
    example.set_defaults(func=cmd_example)
    return parser


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"usage: {self.prog}: {message}")


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.16e}"
    if value is None:
        return ""
    return str(value)


def render(output: Output, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(output.payload, sort_keys=True, indent=2) + "\n"
    buffer = io.StringIO()
    columns: List[str] = []
    for row in output.rows:
        columns += [key for key in row if key not in columns]
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in output.rows:
        writer.writerow([_cell(row.get(column)) for column in columns])
    return buffer.getvalue()


def run(config: RunConfig, func: Callable[[RunConfig, Context], Output]) -> Output:
    """Validate ``config``, dispatch it and write the result."""
    check_run_config_consistency(config)
    ctx = Context(
        threads=config.threads,
        scheme=config.scheme,
        seed=config.seed,
        noise=config.noise,
    )
    output = func(config, ctx)
    text = render(output, config.fmt)
    if config.out:
        Path(config.out).write_text(text)
        logger.info(f"wrote {config.command} output to {config.out}")
    else:
        sys.stdout.write(text)
    if output.failure is not None:
        raise output.failure
    return output


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        run(RunConfig.from_args(args), args.func)
    except (ValueError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    except RuntimeError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
