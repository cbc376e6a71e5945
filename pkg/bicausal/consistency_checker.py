#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
import math
from numbers import Number
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, NamedTuple, Tuple

from bicausal.logger import logger as bicausal_logger
from bicausal.state import WEIGHT_TOL

if TYPE_CHECKING:  # pragma: no cover
    from bicausal.cli import RunConfig
    from bicausal.state import PathMeasure

logger = bicausal_logger.getChild("consistency_checker")


class InconsistentInputError(ValueError):
    """Raised when a measure payload or a run configuration cannot be used as given."""


class Results(NamedTuple):
    """Consistency checkers return type."""

    errors: Iterable[str]
    warnings: Iterable[str]


def _report(errors: List[str], warnings: List[str], what: str):
    if errors:
        err_fmt = "\n".join(errors)
        raise InconsistentInputError(
            f"Inconsistent {what}. The following errors were found:\n{err_fmt}",
        )
    if warnings:
        err_fmt = "\n".join(warnings)
        logger.warning(
            f"This {what} is suspicious. Double check, and ignore this warning if "
            f"you're sure. The following warnings were found: {err_fmt}",
        )


def check_measure_consistency(payload: Any, *, name: str = "measure"):
    """Validate a decoded JSON measure payload before a PathMeasure is built from it.

    The payload must look like ``{"d": int, "T": int, "atoms": [{"path": ..., "weight":
    ...}, ...]}``. Every error message starts with a stable prefix
    (``malformed-json:``, ``dimension-mismatch:``, ``non-finite:``,
    ``non-positive-weight:``, ``weight-sum:``) so that scripts can tell them apart.
    """
    errors: List[str] = []
    warnings: List[str] = []

    for check in (
        check_measure_fields,
        check_measure_shapes,
        check_measure_weights,
    ):
        results = check(payload=payload, name=name)
        errors.extend(results.errors)
        warnings.extend(results.warnings)

    _report(errors, warnings, name)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_real(value: Any) -> bool:
    return isinstance(value, Number) and not isinstance(value, bool)


def _well_formed_atoms(payload: Any) -> List[Tuple[int, Dict[str, Any]]]:
    if not isinstance(payload, dict) or not isinstance(payload.get("atoms"), list):
        return []
    return [
        (i, atom)
        for i, atom in enumerate(payload["atoms"])
        if isinstance(atom, dict) and "path" in atom and "weight" in atom
    ]


def check_measure_fields(
    *,
    payload: Any,
    name: str,
    **_kwargs,  # noqa: U101
) -> Results:
    """Check that the top-level fields and the per-atom fields are present."""
    errors = []
    warnings = []

    if not isinstance(payload, dict):
        errors.append(
            f"malformed-json: {name}: expected an object at the top level, got "
            f"{type(payload).__name__}",
        )
        return Results(errors, warnings)

    for field in ("d", "T"):
        if field not in payload:
            errors.append(f"malformed-json: {name}: missing field {field!r}")
        elif not _is_int(payload[field]) or payload[field] < 1:
            errors.append(
                f"malformed-json: {name}: field {field!r} must be a positive integer, "
                f"got {payload[field]!r}",
            )
    atoms = payload.get("atoms")
    if atoms is None:
        errors.append(f"malformed-json: {name}: missing field 'atoms'")
    elif not isinstance(atoms, list) or not atoms:
        errors.append(f"malformed-json: {name}: 'atoms' must be a non-empty list")
    else:
        for i, atom in enumerate(atoms):
            if not isinstance(atom, dict):
                errors.append(f"malformed-json: {name}: atoms[{i}] is not an object")
                continue
            for field in ("path", "weight"):
                if field not in atom:
                    errors.append(
                        f"malformed-json: {name}: missing field 'atoms[{i}].{field}'",
                    )
    extra = set(payload) - {"d", "T", "atoms"}
    if extra:
        warnings.append(f"{name}: ignoring unknown fields {sorted(extra)}")
    return Results(errors, warnings)


def check_measure_shapes(
    *,
    payload: Any,
    name: str,
    **_kwargs,  # noqa: U101
) -> Results:
    """Check that every path is a T x d matrix of finite reals."""
    errors = []
    warnings = []
    if not isinstance(payload, dict):
        return Results(errors, warnings)
    d, T = payload.get("d"), payload.get("T")  # noqa: N806
    if not (_is_int(d) and _is_int(T)):
        return Results(errors, warnings)

    seen: Dict[Tuple[float, ...], int] = {}
    for i, atom in _well_formed_atoms(payload):
        path = atom["path"]
        rows_ok = isinstance(path, list) and len(path) == T
        if rows_ok and all(isinstance(row, list) and len(row) == d for row in path):
            flat = [value for row in path for value in row]
            if not all(_is_real(value) for value in flat):
                errors.append(
                    f"malformed-json: {name}: atoms[{i}].path holds non-numeric "
                    f"entries",
                )
            elif not all(math.isfinite(value) for value in flat):
                errors.append(f"non-finite: {name}: atoms[{i}].path is not finite")
            else:
                key = tuple(float(v) + 0.0 for v in flat)
                if key in seen:
                    warnings.append(
                        f"{name}: atoms[{seen[key]}] and atoms[{i}] share a path; "
                        f"their weights will be merged",
                    )
                else:
                    seen[key] = i
        else:
            shape = _shape_of(path)
            errors.append(
                f"dimension-mismatch: {name}: atoms[{i}].path has shape {shape}, "
                f"expected (T={T}, d={d})",
            )
    return Results(errors, warnings)


def _shape_of(path: Any) -> Tuple[Any, ...]:
    if not isinstance(path, list):
        return ()
    widths = {len(row) if isinstance(row, list) else None for row in path}
    if len(widths) == 1:
        return (len(path), widths.pop())
    return (len(path), "ragged")


def check_measure_weights(
    *,
    payload: Any,
    name: str,
    **_kwargs,  # noqa: U101
) -> Results:
    """Check that weights are positive reals summing to 1 within WEIGHT_TOL."""
    errors = []
    warnings = []
    atoms = _well_formed_atoms(payload)
    if not atoms:
        return Results(errors, warnings)

    total = 0.0
    for i, atom in atoms:
        weight = atom["weight"]
        if not _is_real(weight):
            errors.append(
                f"malformed-json: {name}: atoms[{i}].weight must be a number, "
                f"got {weight!r}",
            )
        elif not math.isfinite(weight):
            errors.append(f"non-finite: {name}: atoms[{i}].weight is not finite")
        elif weight <= 0:
            errors.append(
                f"non-positive-weight: {name}: atoms[{i}].weight is {weight!r}",
            )
        else:
            total += weight

    if not errors and abs(total - 1.0) > WEIGHT_TOL:
        errors.append(
            f"weight-sum: {name}: weights sum to {total!r}; deficit "
            f"{1.0 - total:+.3e} exceeds tolerance {WEIGHT_TOL}",
        )
    return Results(errors, warnings)


def check_compatible(mu: "PathMeasure", nu: "PathMeasure"):
    """Raise if two measures do not live on the same path space."""
    if (mu.T, mu.d) != (nu.T, nu.d):
        raise InconsistentInputError(
            f"dimension-mismatch: measures live on different path spaces: "
            f"(T={mu.T}, d={mu.d}) vs (T={nu.T}, d={nu.d})",
        )


def check_run_config_consistency(config: "RunConfig"):
    """Validate the numeric parameters of a cli run before dispatch."""
    errors: List[str] = []
    warnings: List[str] = []

    for check in (
        check_positive_parameters,
        check_grid_parameters,
    ):
        results = check(config=config)
        errors.extend(results.errors)
        warnings.extend(results.warnings)

    _report(errors, warnings, "run configuration")


def check_positive_parameters(
    *,
    config: "RunConfig",
    **_kwargs,  # noqa: U101
) -> Results:
    errors = []
    warnings = []
    if config.p is not None and not config.p >= 1:
        errors.append(f"invalid-parameter: --p must be >= 1, got {config.p}")
    if config.q is not None and config.p is not None and not config.q > config.p:
        errors.append(f"invalid-parameter: --q must exceed --p, got {config.q}")
    for flag in ("sigma", "R", "delta", "eps"):
        value = getattr(config, flag)
        values = value if isinstance(value, (list, tuple)) else (value,)
        for v in values:
            if v is not None and not v > 0:
                errors.append(f"invalid-parameter: --{flag} must be positive, got {v}")
    if config.t is not None and config.t < 1:
        errors.append(f"invalid-parameter: --t must be >= 1, got {config.t}")
    if config.count is not None and config.count < 1:
        errors.append(f"invalid-parameter: --count must be >= 1, got {config.count}")
    if config.ns is not None and min(config.ns) < 1:
        errors.append(f"invalid-parameter: --n must be >= 1, got {min(config.ns)}")
    if config.threads is not None and config.threads < 1:
        errors.append(
            f"invalid-parameter: --threads must be >= 1, got {config.threads}",
        )
    return Results(errors, warnings)


def check_grid_parameters(
    *,
    config: "RunConfig",
    **_kwargs,  # noqa: U101
) -> Results:
    errors = []
    warnings = []
    if config.grid_step is not None and not config.grid_step > 0:
        errors.append(
            f"invalid-parameter: --grid-step must be positive, got {config.grid_step}",
        )
    if config.radius_mult is not None:
        if not config.radius_mult > 0:
            errors.append(
                f"invalid-parameter: --radius-mult must be positive, "
                f"got {config.radius_mult}",
            )
        elif config.radius_mult < 3:
            warnings.append(
                f"--radius-mult {config.radius_mult} < 3 makes truncation dominate "
                f"the smoothing budget",
            )
    if (
        config.grid_step is not None
        and config.sigma is not None
        and config.sigma > 0
        and config.grid_step > config.sigma
    ):
        warnings.append(
            f"--grid-step {config.grid_step} is coarser than --sigma {config.sigma}",
        )
    return Results(errors, warnings)
