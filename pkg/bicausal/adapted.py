#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
"""Adapted (bicausal) transport by backward induction over pairs of prefix nodes.

The value function V_t(a, b) of two prefixes a, b at depth t is the optimal cost of
transporting the remaining paths. It satisfies V_T = 0 and

    V_t(a, b) = OT(kernel(a), kernel(b); stage(x, y) + V_{t+1}(a.x, b.y))

where ``stage`` is |x - y|^p for AW_p. For AV, pairs whose prefixes differ are
absorbed with value 1 and the stage value is 1 when the next steps differ.

Pairs at depth t are enumerated top-down as products of the children of the pairs
reachable at depth t - 1, then solved bottom-up, one level at a time, with the node
pairs of a level distributed over a thread pool.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from typing import (
    TYPE_CHECKING,
    Callable,
    Dict,
    List,
    NamedTuple,
    Optional,
    Tuple,
)

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from bicausal.consistency_checker import check_compatible
from bicausal.logger import logger as bicausal_logger
from bicausal.measures import disintegrate
from bicausal.state import Coupling, PathMeasure, TransportPlan
from bicausal.transport import TransportSolverError, ground_cost, solve_ot

if TYPE_CHECKING:  # pragma: no cover
    from bicausal.state import DisintegrationTree, _Node

    PairKey = Tuple[int, int]
    StageCost = Callable[["_Node", "_Node", Optional[np.ndarray]], np.ndarray]

logger = bicausal_logger.getChild("adapted")

ORACLE_PAIR_CAP = 400
"""Largest number of path pairs the flat bicausal LP accepts."""

BICAUSAL_TOL = 1e-7


class OracleSizeError(ValueError):
    """Raised when an instance is too large for the flat bicausal LP."""


class ValueTable:
    """DPP values V_t per depth t, keyed by (left node index, right node index).

    Depth T is never stored: V_T is identically 0.
    """

    def __init__(self, T: int):  # noqa: N803
        self.T = T
        self._values: List[Dict["PairKey", float]] = [{} for _ in range(T)]
        self._plans: List[Dict["PairKey", TransportPlan]] = [{} for _ in range(T)]
        self.absorbed: List[Dict["PairKey", float]] = [{} for _ in range(T + 1)]
        """Pairs whose value is fixed without solving (AV prefix mismatch)."""

    def value(self, t: int, key: "PairKey") -> float:
        if t == self.T:
            return self.absorbed[t].get(key, 0.0)
        if key in self.absorbed[t]:
            return self.absorbed[t][key]
        return self._values[t][key]

    def plan(self, t: int, key: "PairKey") -> Optional[TransportPlan]:
        return self._plans[t].get(key)

    def store(self, t: int, key: "PairKey", plan: TransportPlan, keep_plan: bool):
        self._values[t][key] = plan.objective
        if keep_plan:
            self._plans[t][key] = plan

    def values(self, t: int) -> Dict["PairKey", float]:
        """All values at depth t, absorbed pairs included, in sorted key order."""
        merged = dict(self._values[t]) if t < self.T else {}
        merged.update(self.absorbed[t])
        return dict(sorted(merged.items()))

    def __len__(self):
        return sum(len(level) for level in self._values)


def _aw_stage(p: float) -> "StageCost":
    def stage(a: "_Node", b: "_Node", v_next: Optional[np.ndarray]) -> np.ndarray:
        cost = ground_cost(a.values, b.values, p)
        return cost if v_next is None else cost + v_next

    return stage


def _av_stage(a: "_Node", b: "_Node", v_next: Optional[np.ndarray]) -> np.ndarray:
    differ = np.any(a.values[:, None, :] != b.values[None, :, :], axis=2)
    cont = np.zeros(differ.shape) if v_next is None else v_next
    return np.where(differ, 1.0, cont)


class _Backward:
    """One backward induction between two disintegration trees."""

    def __init__(
        self,
        left: "DisintegrationTree",
        right: "DisintegrationTree",
        stage: "StageCost",
        *,
        absorb_mismatch: bool = False,
        threads: Optional[int] = None,
        keep_plans: bool = True,
    ):
        self.left = left
        self.right = right
        self.stage = stage
        self.absorb_mismatch = absorb_mismatch
        self.threads = threads or os.cpu_count() or 1
        self.keep_plans = keep_plans
        self.table = ValueTable(left.T)

    def _reachable(self) -> List[List["PairKey"]]:
        left_levels, right_levels = self.left.levels, self.right.levels
        levels: List[List["PairKey"]] = [[(0, 0)]]
        for t in range(self.left.T - 1):
            nxt = set()
            for i, j in levels[t]:
                a, b = left_levels[t][i], right_levels[t][j]
                for k, ca in enumerate(a.children):
                    for ll, cb in enumerate(b.children):
                        key = (ca.index, cb.index)
                        if self.absorb_mismatch and np.any(
                            a.values[k] != b.values[ll],
                        ):
                            self.table.absorbed[t + 1][key] = 1.0
                        else:
                            nxt.add(key)
            levels.append(sorted(nxt))
        return levels

    def _solve_pair(self, t: int, key: "PairKey") -> TransportPlan:
        a = self.left.levels[t][key[0]]
        b = self.right.levels[t][key[1]]
        v_next = None
        if t + 1 < self.left.T:
            v_next = np.array(
                [
                    [self.table.value(t + 1, (ca.index, cb.index)) for cb in b.children]
                    for ca in a.children
                ],
            )
        cost = self.stage(a, b, v_next)
        return solve_ot(a.cond_weights, b.cond_weights, cost)

    def run(self) -> ValueTable:
        levels = self._reachable()
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            for t in reversed(range(self.left.T)):
                keys = levels[t]
                logger.debug(f"depth {t}: solving {len(keys)} node pairs")
                if len(keys) > 1 and self.threads > 1:
                    plans = list(pool.map(lambda k: self._solve_pair(t, k), keys))
                else:
                    plans = [self._solve_pair(t, k) for k in keys]
                for key, plan in zip(keys, plans):
                    self.table.store(t, key, plan, self.keep_plans)
        return self.table

    def coupling(self, mu: PathMeasure, nu: PathMeasure) -> Coupling:
        """Compose the stage plans top-down into a coupling of the two measures."""
        masses: Dict["PairKey", float] = {(0, 0): 1.0}
        for t in range(self.left.T):
            nxt: Dict["PairKey", float] = {}
            for (i, j), mass in sorted(masses.items()):
                a, b = self.left.levels[t][i], self.right.levels[t][j]
                plan = self.table.plan(t, (i, j))
                if plan is None:
                    # absorbed pair: any bicausal completion will do, take the product
                    matrix = np.outer(a.cond_weights, b.cond_weights)
                else:
                    matrix = plan.matrix
                for k, ll in zip(*np.nonzero(matrix > 0)):
                    key = (a.children[k].index, b.children[ll].index)
                    nxt[key] = nxt.get(key, 0.0) + mass * float(matrix[k, ll])
            masses = nxt

        leaves_l, leaves_r = self.left.levels[-1], self.right.levels[-1]
        pairs = [(leaves_l[i].leaf_index, leaves_r[j].leaf_index) for i, j in masses]
        return Coupling(
            left=mu,
            right=nu,
            pairs=np.array(pairs, dtype=np.int64).reshape(-1, 2),
            weights=np.array(list(masses.values())),
        )


def _check_order(p: float):
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")


def aw_value(
    mu: PathMeasure,
    nu: PathMeasure,
    p: float,
    *,
    threads: Optional[int] = None,
) -> float:
    """AW_p(mu, nu) without building the optimal coupling."""
    check_compatible(mu, nu)
    _check_order(p)
    backward = _Backward(
        disintegrate(mu),
        disintegrate(nu),
        _aw_stage(p),
        threads=threads,
        keep_plans=False,
    )
    table = backward.run()
    return max(table.value(0, (0, 0)), 0.0) ** (1 / p)


def aw_p(
    mu: PathMeasure,
    nu: PathMeasure,
    p: float,
    *,
    threads: Optional[int] = None,
) -> Tuple[float, Coupling]:
    """The adapted Wasserstein distance and an optimal bicausal coupling.

    The cost is sum_t |x_t - y_t|^p; the coupling is composed from the stage plans.
    """
    check_compatible(mu, nu)
    _check_order(p)
    backward = _Backward(
        disintegrate(mu),
        disintegrate(nu),
        _aw_stage(p),
        threads=threads,
    )
    table = backward.run()
    value = max(table.value(0, (0, 0)), 0.0) ** (1 / p)
    return value, backward.coupling(mu, nu)


def av(mu: PathMeasure, nu: PathMeasure, *, threads: Optional[int] = None) -> float:
    """Adapted total variation: the least mass of {x != y} under a bicausal coupling.

    Once two prefixes disagree no bicausal continuation can make the paths equal, so
    such pairs are absorbed with value 1.
    """
    check_compatible(mu, nu)
    backward = _Backward(
        disintegrate(mu),
        disintegrate(nu),
        _av_stage,
        absorb_mismatch=True,
        threads=threads,
        keep_plans=False,
    )
    table = backward.run()
    return float(min(max(table.value(0, (0, 0)), 0.0), 1.0))


def adapted_cost_matrix(mu: PathMeasure, nu: PathMeasure, p: float) -> np.ndarray:
    """sum_t |x_t - y_t|^p for every pair of atoms."""
    diff = mu.paths[:, None, :, :] - nu.paths[None, :, :, :]
    return (np.linalg.norm(diff, axis=3) ** p).sum(axis=2)


def mismatch_cost_matrix(mu: PathMeasure, nu: PathMeasure) -> np.ndarray:
    """1 where the paths differ, 0 where they coincide."""
    diff = mu.flat_paths[:, None, :] != nu.flat_paths[None, :, :]
    return np.any(diff, axis=2).astype(float)


class BicausalityReport(NamedTuple):
    worst_violation: float
    """Largest gap between the two conditional probabilities compared."""
    t: Optional[int]
    direction: Optional[str]
    """'left' when the right prefix anticipates the left future, 'right' for the converse."""
    prefix: Optional[Tuple[List[List[float]], List[List[float]]]]
    """The (left, right) prefix pair where the worst violation happens."""


def _prefix_ids(paths: np.ndarray, t: int) -> np.ndarray:
    flat = paths[:, :t, :].reshape(paths.shape[0], -1)
    _, inverse = np.unique(flat, axis=0, return_inverse=True)
    return inverse.reshape(-1)


def _causality_gap(
    src: PathMeasure,
    dst: PathMeasure,
    src_idx: np.ndarray,
    dst_idx: np.ndarray,
    weights: np.ndarray,
    t: int,
) -> Tuple[float, int, int]:
    """Worst |pi(Y_{1:t}=v | X=x) - pi(Y_{1:t}=v | X_{1:t}=x_{1:t})|.

    Returns the gap with the source atom and the destination atom realizing it.
    """
    src_prefix = _prefix_ids(src.paths, t)
    dst_prefix = _prefix_ids(dst.paths, t)
    n_src_prefix = int(src_prefix.max()) + 1
    n_dst_prefix = int(dst_prefix.max()) + 1

    joint_full = np.zeros((src.n_atoms, n_dst_prefix))
    np.add.at(joint_full, (src_idx, dst_prefix[dst_idx]), weights)
    joint_prefix = np.zeros((n_src_prefix, n_dst_prefix))
    np.add.at(joint_prefix, (src_prefix[src_idx], dst_prefix[dst_idx]), weights)
    src_prefix_mass = np.bincount(src_prefix, weights=src.weights)

    cond_full = joint_full / src.weights[:, None]
    cond_prefix = joint_prefix[src_prefix] / src_prefix_mass[src_prefix][:, None]
    gap = np.abs(cond_full - cond_prefix)
    i, v = np.unravel_index(int(np.argmax(gap)), gap.shape)
    witness = int(np.flatnonzero(dst_prefix == v)[0])
    return float(gap[i, v]), int(i), witness


def verify_bicausal(
    pi: Coupling,
    tol: float = BICAUSAL_TOL,
) -> Tuple[bool, BicausalityReport]:
    """Check both causality constraints of a coupling, for every t < T.

    For each t the conditional law of the other side's prefix given a full path must
    equal its conditional law given the path's own prefix, in both directions.
    """
    mu, nu = pi.left, pi.right
    left_idx, right_idx = pi.pairs[:, 0], pi.pairs[:, 1]
    worst = BicausalityReport(0.0, None, None, None)
    for t in range(1, mu.T):
        for direction, (src, dst, s_idx, d_idx) in (
            ("left", (mu, nu, left_idx, right_idx)),
            ("right", (nu, mu, right_idx, left_idx)),
        ):
            gap, i, j = _causality_gap(src, dst, s_idx, d_idx, pi.weights, t)
            if gap > worst.worst_violation:
                src_prefix = src.paths[i, :t].tolist()
                dst_prefix = dst.paths[j, :t].tolist()
                prefix = (
                    (src_prefix, dst_prefix)
                    if direction == "left"
                    else (dst_prefix, src_prefix)
                )
                worst = BicausalityReport(gap, t, direction, prefix)
    ok = worst.worst_violation <= tol
    if not ok:
        logger.info(
            f"coupling is not bicausal: violation {worst.worst_violation:.3e} at "
            f"t={worst.t} ({worst.direction}) prefix={worst.prefix}",
        )
    return ok, worst


def _causality_rows(
    src: PathMeasure,
    dst: PathMeasure,
    t: int,
    transpose: bool,
) -> sparse.csr_matrix:
    """Linear equalities mu(x_{1:t}) pi(x, B) - mu(x) pi(x_{1:t}, B) = 0.

    One row per source atom x and destination prefix B at depth t; variables are
    pi flattened row-major over (left atom, right atom).
    """
    src_prefix = _prefix_ids(src.paths, t)
    dst_prefix = _prefix_ids(dst.paths, t)
    prefix_mass = np.bincount(src_prefix, weights=src.weights)
    n_src, n_dst = src.n_atoms, dst.n_atoms
    n_dst_prefix = int(dst_prefix.max()) + 1

    rows, cols, vals = [], [], []
    for x in range(n_src):
        group = np.flatnonzero(src_prefix == src_prefix[x])
        for v in range(n_dst_prefix):
            row = x * n_dst_prefix + v
            members = np.flatnonzero(dst_prefix == v)
            for y in members:
                for x2 in group:
                    coeff = -src.weights[x]
                    if x2 == x:
                        coeff += prefix_mass[src_prefix[x]]
                    rows.append(row)
                    cols.append(
                        (y * n_src + x2) if transpose else (x2 * n_dst + y),
                    )
                    vals.append(coeff)
    shape = (n_src * n_dst_prefix, n_src * n_dst)
    return sparse.csr_matrix((vals, (rows, cols)), shape=shape)


def bicausal_lp_oracle(
    mu: PathMeasure,
    nu: PathMeasure,
    cost: np.ndarray,
    *,
    cap: int = ORACLE_PAIR_CAP,
) -> float:
    """Minimize <pi, cost> over bicausal couplings with a single flat LP.

    ``cost`` has shape (mu.n_atoms, nu.n_atoms). The optimum is returned as is, so
    for the adapted cost it is AW_p^p, not AW_p. Meant as a test oracle only.
    """
    check_compatible(mu, nu)
    n, m = mu.n_atoms, nu.n_atoms
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (n, m):
        raise ValueError(
            f"dimension-mismatch: cost has shape {cost.shape}, not {(n, m)}",
        )
    if n * m > cap:
        raise OracleSizeError(
            f"oracle-size: {n}x{m} = {n * m} path pairs exceed the cap of {cap}",
        )

    blocks = [
        sparse.kron(sparse.eye(n), np.ones((1, m))),
        sparse.kron(np.ones((1, n)), sparse.eye(m)),
    ]
    for t in range(1, mu.T):
        blocks.append(_causality_rows(mu, nu, t, transpose=False))
        blocks.append(_causality_rows(nu, mu, t, transpose=True))
    a_eq = sparse.vstack(blocks, format="csr")
    b_eq = np.zeros(a_eq.shape[0])
    b_eq[:n] = mu.weights
    b_eq[n : n + m] = nu.weights

    res = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs-ds",
    )
    if res.status != 0:
        raise TransportSolverError(
            f"bicausal oracle LP stopped with status {res.status} after {res.nit} "
            f"iterations: {res.message}",
        )
    return float(res.fun)
