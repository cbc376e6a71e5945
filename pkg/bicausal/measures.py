#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
"""Operations on path measures: disintegration, moments, tails, TV, clipping, sampling."""
import json
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, NamedTuple, Union

import numpy as np

from bicausal.consistency_checker import check_compatible, check_measure_consistency
from bicausal.logger import logger as bicausal_logger
from bicausal.state import DisintegrationTree, PathMeasure

if TYPE_CHECKING:  # pragma: no cover
    from bicausal.state import _Node

    PathLike = Union[str, Path]

logger = bicausal_logger.getChild("measures")

# points this close outside the clipping ball count as on it
_CLIP_RTOL = 1e-12


class MalformedMeasureError(ValueError):
    """Raised when a measure file cannot be decoded as JSON."""


class Quantized(NamedTuple):
    """Output of :func:`quantize`."""

    measure: PathMeasure
    budget: float
    """Transport cost sum_i w_i |x_i - q(x_i)|^p, in the p-th power."""


def disintegrate(mu: PathMeasure) -> DisintegrationTree:
    """Build the tree of conditional kernels of ``mu``."""
    return DisintegrationTree.from_measure(mu)


def flatten(tree: DisintegrationTree) -> PathMeasure:
    """Push the conditional weights of ``tree`` down to its leaves."""
    paths: List[np.ndarray] = []
    weights: List[float] = []

    def walk(node: "_Node", weight: float):
        if node.is_leaf:
            paths.append(np.array(node.prefix, dtype=float))
            weights.append(weight)
            return
        for cond, child in zip(node.cond_weights, node.children):
            walk(child, weight * float(cond))

    walk(tree.root, 1.0)
    return PathMeasure(paths=np.array(paths), weights=np.array(weights))


def _norms(mu: PathMeasure) -> np.ndarray:
    return np.linalg.norm(mu.flat_paths, axis=1)


def moment_p(mu: PathMeasure, p: float) -> float:
    """Integral of |x|^p, with |.| the Euclidean norm on R^{dT}."""
    return float(np.dot(mu.weights, _norms(mu) ** p))


def tail_p(mu: PathMeasure, p: float, R: float) -> float:  # noqa: N803
    """Integral of |x|^p over {|x| >= R}."""
    if R < 0:
        raise ValueError(f"tail radius must be nonnegative, got {R}")
    norms = _norms(mu)
    outside = norms >= R
    return float(np.dot(mu.weights[outside], norms[outside] ** p))


def tv_distance(mu: PathMeasure, nu: PathMeasure) -> float:
    """Total variation norm sum |mu({x}) - nu({x})|, matching paths exactly."""
    check_compatible(mu, nu)
    flat = np.concatenate([mu.flat_paths, nu.flat_paths])
    _, inverse = np.unique(flat, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    signed = np.concatenate([mu.weights, -nu.weights])
    diff = np.bincount(inverse, weights=signed)
    return float(np.abs(diff).sum())


def clip(mu: PathMeasure, R: float) -> PathMeasure:  # noqa: N803
    """Project every time coordinate of every atom onto the closed ball of radius R.

    Atoms that collide after the projection are merged.
    """
    if R <= 0:
        raise ValueError(f"clipping radius must be positive, got {R}")
    norms = np.linalg.norm(mu.paths, axis=2, keepdims=True)
    inside = norms <= R * (1 + _CLIP_RTOL)
    scale = np.where(inside, 1.0, R / np.where(inside, 1.0, norms))
    return PathMeasure(paths=mu.paths * scale, weights=mu.weights)


def sample_empirical(mu: PathMeasure, n: int, seed: int) -> PathMeasure:
    """The empirical measure of ``n`` i.i.d. draws from ``mu``."""
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(n, mu.weights)
    drawn = counts > 0
    return PathMeasure(paths=mu.paths[drawn], weights=counts[drawn] / n)


def quantize(mu: PathMeasure, grid_step: float, p: float = 1.0) -> Quantized:
    """Round every coordinate to the nearest multiple of ``grid_step``."""
    if grid_step <= 0:
        raise ValueError(f"grid_step must be positive, got {grid_step}")
    rounded = np.floor(mu.paths / grid_step + 0.5) * grid_step
    moved = np.linalg.norm((mu.paths - rounded).reshape(mu.n_atoms, -1), axis=1)
    budget = float(np.dot(mu.weights, moved**p))
    return Quantized(PathMeasure(paths=rounded, weights=mu.weights), budget)


def standard_example(eps: float) -> PathMeasure:
    """mu_eps = 1/2 delta_(eps, 1) + 1/2 delta_(-eps, -1) on (R^1)^2."""
    return PathMeasure(paths=[[eps, 1.0], [-eps, -1.0]], weights=[0.5, 0.5])


def standard_example_base() -> PathMeasure:
    """mu = 1/2 delta_(0, 1) + 1/2 delta_(0, -1); the eps = 0 member of the family."""
    return standard_example(0.0)


def dump_measure(mu: PathMeasure) -> Dict[str, Any]:
    """The JSON-ready form of ``mu``; atoms are emitted in canonical order."""
    return {
        "d": mu.d,
        "T": mu.T,
        "atoms": [
            {"path": path.tolist(), "weight": weight} for path, weight in mu.atoms()
        ],
    }


def parse_measure(text: str, *, name: str = "measure") -> PathMeasure:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedMeasureError(
            f"malformed-json: {name}: {e.msg} at line {e.lineno} column {e.colno}",
        ) from e
    check_measure_consistency(payload, name=name)
    return PathMeasure.from_atoms(
        (atom["path"], atom["weight"]) for atom in payload["atoms"]
    )


def load_measure(path: "PathLike") -> PathMeasure:
    """Read a measure file; see :func:`check_measure_consistency` for the format."""
    path = Path(path)
    logger.debug(f"loading measure from {path}")
    return parse_measure(path.read_text(), name=str(path))


def save_measure(mu: PathMeasure, path: "PathLike"):
    Path(path).write_text(json.dumps(dump_measure(mu), indent=2) + "\n")
