#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
"""Exact discrete optimal transport.

Unconstrained problems go through the network simplex of POT (``ot.emd``); the
budget-constrained maximization behind the modulus of continuity has one side
constraint too many for a pure flow solver and is handed to HiGHS via
``scipy.optimize.linprog``.
"""
from typing import TYPE_CHECKING, Tuple, Union

import numpy as np
import ot
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from bicausal.logger import logger as bicausal_logger
from bicausal.state import WEIGHT_TOL, CostMatrix, PathMeasure, TransportPlan

if TYPE_CHECKING:  # pragma: no cover
    WeightedPoints = Union[PathMeasure, Tuple[np.ndarray, np.ndarray]]

logger = bicausal_logger.getChild("transport")

EMD_MAX_ITER = 1_000_000


class TransportSolverError(RuntimeError):
    """Raised when an LP or network simplex solve does not reach optimality."""


class InfeasibleBudgetError(TransportSolverError):
    """Raised when no coupling of the given marginals fits within the cost budget."""


def as_weighted_points(mu: "WeightedPoints") -> Tuple[np.ndarray, np.ndarray]:
    """Normalize a PathMeasure or a (points, weights) pair to 2-d points and weights."""
    if isinstance(mu, PathMeasure):
        return mu.flat_paths, mu.weights
    points, weights = mu
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if points.shape[0] != weights.shape[0]:
        raise ValueError(
            f"dimension-mismatch: {points.shape[0]} points but {weights.shape[0]} "
            f"weights",
        )
    return points.reshape(points.shape[0], -1), weights


def ground_cost(x: np.ndarray, y: np.ndarray, p: float) -> np.ndarray:
    """|x_i - y_j|^p with the Euclidean norm, from exact coordinate differences."""
    return cdist(x, y, metric="euclidean") ** p


def solve_ot(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> TransportPlan:
    """Minimize <pi, cost> over couplings of ``a`` and ``b``."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if a.shape[0] == 1 or b.shape[0] == 1:
        # one side is a point mass: the only coupling is the product
        plan = np.outer(a, b)
    else:
        plan, log = ot.emd(a, b, cost, numItermax=EMD_MAX_ITER, log=True)
        if log.get("warning") is not None:
            raise TransportSolverError(
                f"network simplex did not converge on a {a.shape[0]}x{b.shape[0]} "
                f"problem: {log['warning']} (result_code={log.get('result_code')}, "
                f"numItermax={EMD_MAX_ITER})",
            )
    return TransportPlan(matrix=plan, objective=float(np.sum(plan * cost)))


def wasserstein_p(
    mu: "WeightedPoints",
    nu: "WeightedPoints",
    p: float,
) -> Tuple[float, TransportPlan]:
    """W_p with Euclidean ground cost, and an optimal vertex plan."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    x, a = as_weighted_points(mu)
    y, b = as_weighted_points(nu)
    if x.shape[1] != y.shape[1]:
        raise ValueError(
            f"dimension-mismatch: points live in R^{x.shape[1]} and R^{y.shape[1]}",
        )
    plan = solve_ot(a, b, ground_cost(x, y, p))
    return max(plan.objective, 0.0) ** (1 / p), plan


def wasserstein_1d(mu: "WeightedPoints", nu: "WeightedPoints", p: float) -> float:
    """W_p on the real line through the monotone (quantile) coupling."""
    x, a = as_weighted_points(mu)
    y, b = as_weighted_points(nu)
    if x.shape[1] != 1 or y.shape[1] != 1:
        raise ValueError(
            f"wasserstein_1d needs points on the real line, got R^{x.shape[1]} and "
            f"R^{y.shape[1]}",
        )
    cost = ot.wasserstein_1d(x[:, 0], y[:, 0], a, b, p=p)
    return max(float(cost), 0.0) ** (1 / p)


def constrained_max_ot(
    left: np.ndarray,
    right: np.ndarray,
    gain: CostMatrix,
    cost: CostMatrix,
    budget: float,
) -> Tuple[float, TransportPlan]:
    """Maximize <pi, gain> over couplings of ``left`` and ``right`` with <pi, cost> <= budget.

    :arg left: the weights of the left marginal.
    :arg right: the weights of the right marginal.
    :arg gain: the matrix whose integral is maximized.
    :arg cost: the matrix whose integral is constrained.
    :arg budget: the upper bound on the integral of ``cost``; closed constraint.

    The returned plan records in ``binding`` whether the budget is tight at the optimum.
    """
    a = np.asarray(left, dtype=float)
    b = np.asarray(right, dtype=float)
    n, m = a.shape[0], b.shape[0]
    if gain.entries.shape != (n, m) or cost.entries.shape != (n, m):
        raise ValueError(
            f"dimension-mismatch: gain {gain.entries.shape} and cost "
            f"{cost.entries.shape} must be {(n, m)}",
        )
    if budget < 0:
        raise ValueError(f"budget must be nonnegative, got {budget}")

    a_eq = sparse.vstack(
        [
            sparse.kron(sparse.eye(n), np.ones((1, m))),
            sparse.kron(np.ones((1, n)), sparse.eye(m)),
        ],
        format="csr",
    )
    b_eq = np.concatenate([a, b])
    res = linprog(
        -gain.entries.ravel(),
        A_ub=cost.entries.reshape(1, -1),
        b_ub=[budget],
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs-ds",
    )
    if res.status == 2:
        floor = solve_ot(a, b, cost.entries).objective
        raise InfeasibleBudgetError(
            f"no coupling fits the budget {budget!r}; the cheapest coupling costs "
            f"{floor!r}",
        )
    if res.status != 0:
        raise TransportSolverError(
            f"linprog stopped with status {res.status} after {res.nit} iterations: "
            f"{res.message}",
        )

    matrix = np.clip(res.x.reshape(n, m), 0.0, None)
    slack = float(res.ineqlin.residual[0])
    binding = slack <= WEIGHT_TOL * max(1.0, budget)
    logger.debug(
        f"constrained max-ot {n}x{m}: value={-res.fun!r} slack={slack!r} "
        f"iterations={res.nit}",
    )
    plan = TransportPlan(matrix=matrix, objective=float(-res.fun), binding=binding)
    return plan.objective, plan
