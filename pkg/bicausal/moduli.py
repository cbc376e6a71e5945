#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
"""Moduli of continuity of the kernels of a path measure.

omega^{t,p}(delta) is the largest average kernel distance reachable by recoupling the
law of X_{1:t} with itself at ground cost at most delta^p; see
:func:`bicausal.transport.constrained_max_ot`.
"""
import dataclasses
import functools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from bicausal.logger import logger as bicausal_logger
from bicausal.measures import disintegrate
from bicausal.state import CostMatrix, DisintegrationTree, PathMeasure, _DCBase
from bicausal.transport import constrained_max_ot, ground_cost, solve_ot

logger = bicausal_logger.getChild("moduli")


class TimeIndexError(ValueError):
    """Raised when a time index is outside 1..T-1."""


@functools.lru_cache(maxsize=128)
def _tree(mu: PathMeasure) -> DisintegrationTree:
    return disintegrate(mu)


def _check_time(mu: PathMeasure, t: int):
    if not 1 <= t <= mu.T - 1:
        raise TimeIndexError(
            f"time index t={t} is outside 1..{mu.T - 1} for a measure with T={mu.T}",
        )


@functools.lru_cache(maxsize=256)
def _kernel_gain(
    tree: DisintegrationTree,
    t: int,
    p: float,
    future: bool,
    threads: int,
) -> np.ndarray:
    """W_p(kernel_i, kernel_j)^p between the kernels of all prefixes at depth t.

    With ``future`` the kernels are the conditional laws of the whole remaining path.
    """
    nodes = tree.nodes_at(t)
    if future:
        kernels = [tree.future_law(node) for node in nodes]
    else:
        kernels = [(node.values, node.cond_weights) for node in nodes]

    pairs = [(i, j) for i in range(len(nodes)) for j in range(i + 1, len(nodes))]

    def gain(pair: Tuple[int, int]) -> float:
        (x, a), (y, b) = kernels[pair[0]], kernels[pair[1]]
        return max(solve_ot(a, b, ground_cost(x, y, p)).objective, 0.0)

    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(gain, pairs))
    else:
        values = [gain(pair) for pair in pairs]

    out = np.zeros((len(nodes), len(nodes)))
    for (i, j), value in zip(pairs, values):
        out[i, j] = out[j, i] = value
    out.setflags(write=False)
    return out


def kernel_wasserstein_matrix(
    mu: PathMeasure,
    t: int,
    p: float,
    *,
    future: bool = False,
    threads: Optional[int] = None,
) -> np.ndarray:
    """Matrix of W_p^p distances between the kernels of the prefixes at depth t.

    Cached per (measure, t, p, future).
    """
    _check_time(mu, t)
    return _kernel_gain(_tree(mu), t, float(p), future, threads or os.cpu_count() or 1)


@dataclasses.dataclass(frozen=True)
class ModulusSample:
    delta: float
    value: float
    budget_active: bool
    """Whether the optimal recoupling spends its whole budget."""


def _modulus(
    mu: PathMeasure,
    t: int,
    p: float,
    delta: float,
    future: bool,
    threads: Optional[int],
) -> ModulusSample:
    _check_time(mu, t)
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    points, masses = _tree(mu).prefix_marginal(t)
    if len(masses) == 1 or delta == 0:
        return ModulusSample(delta, 0.0, False)
    gain = kernel_wasserstein_matrix(mu, t, p, future=future, threads=threads)
    cost = ground_cost(points, points, p)
    value, plan = constrained_max_ot(
        masses,
        masses,
        CostMatrix(gain),
        CostMatrix(cost),
        delta**p,
    )
    return ModulusSample(delta, max(value, 0.0) ** (1 / p), plan.binding)


def modulus_omega(
    mu: PathMeasure,
    t: int,
    p: float,
    delta: float,
    *,
    threads: Optional[int] = None,
) -> float:
    """omega^{t,p}_mu(delta), with the budget constraint taken closed."""
    return _modulus(mu, t, p, delta, False, threads).value


def extended_modulus_omega_bar(
    mu: PathMeasure,
    t: int,
    p: float,
    delta: float,
    *,
    threads: Optional[int] = None,
) -> float:
    """The modulus with full-future kernels in place of one-step kernels."""
    return _modulus(mu, t, p, delta, True, threads).value


def g_recursion(
    mu: PathMeasure,
    t: int,
    p: float,
    delta: float,
    *,
    threads: Optional[int] = None,
) -> List[float]:
    """g^s = omega^s(delta + g^t + ... + g^{s-1}) for s = t..T-1."""
    _check_time(mu, t)
    g: List[float] = []
    for s in range(t, mu.T):
        g.append(modulus_omega(mu, s, p, delta + sum(g), threads=threads))
    return g


def h_iteration(
    mu: PathMeasure,
    p: float,
    sigma: float,
    *,
    threads: Optional[int] = None,
) -> List[float]:
    """h^0 = sigma and h^t = omega^t(h^0 + ... + h^{t-1}) for t = 1..T-1."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    h = [float(sigma)]
    for t in range(1, mu.T):
        h.append(modulus_omega(mu, t, p, sum(h), threads=threads))
    return h


def holder_constant(
    mu: PathMeasure,
    p: float,
    alpha: float,
    *,
    threads: Optional[int] = None,
) -> float:
    """The least L with W_p(kernel(x), kernel(y)) <= L |x - y|^alpha for all prefixes.

    Returns ``math.inf`` when two prefixes coincide but their kernels differ, and 0
    when no depth has two distinct prefixes.
    """
    best = 0.0
    for t in range(1, mu.T):
        points, _ = _tree(mu).prefix_marginal(t)
        if points.shape[0] < 2:
            continue
        gain = kernel_wasserstein_matrix(mu, t, p, threads=threads) ** (1 / p)
        dist = ground_cost(points, points, 1.0) ** alpha
        off = ~np.eye(points.shape[0], dtype=bool)
        if np.any((dist[off] == 0) & (gain[off] > 0)):
            return math.inf
        ratios = np.divide(
            gain[off],
            dist[off],
            out=np.zeros(off.sum()),
            where=dist[off] > 0,
        )
        best = max(best, float(ratios.max()))
    return best


@dataclasses.dataclass(frozen=True)
class ModulusCurve(_DCBase):
    """Samples of omega^{t,p}_mu (or of its full-future variant) on a delta grid."""

    t: int
    p: float
    samples: Tuple[ModulusSample, ...]
    """Sorted by delta."""
    measure: PathMeasure
    future: bool = False

    @property
    def deltas(self) -> np.ndarray:
        return np.array([s.delta for s in self.samples])

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.samples])

    def is_monotone(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.diff(self.values) >= -tol))

    def scaling_violations(
        self,
        ks: Iterable[float] = (0.5, 2.0, 5.0),
        tol: float = 1e-9,
    ) -> List[Tuple[float, float, float, float]]:
        """Sampled pairs breaking omega(k delta) <= max(k, 1) omega(delta).

        Only pairs where k * delta is itself (up to rounding) a sampled delta are
        checked. Returns (k, delta, omega(k delta), max(k, 1) omega(delta)) tuples.
        """
        by_delta = {round(s.delta, 12): s.value for s in self.samples}
        out = []
        for sample in self.samples:
            for k in ks:
                scaled = by_delta.get(round(k * sample.delta, 12))
                if scaled is None:
                    continue
                bound = max(k, 1.0) * sample.value
                if scaled > bound + tol:
                    out.append((k, sample.delta, scaled, bound))
        return out

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "p": self.p,
            "future": self.future,
            "samples": [dataclasses.asdict(s) for s in self.samples],
        }


def modulus_curve(
    mu: PathMeasure,
    t: int,
    p: float,
    deltas: Sequence[float],
    *,
    future: bool = False,
    threads: Optional[int] = None,
) -> ModulusCurve:
    samples = tuple(
        _modulus(mu, t, p, float(delta), future, threads) for delta in sorted(deltas)
    )
    for sample in samples:
        if sample.budget_active:
            logger.debug(f"t={t} delta={sample.delta!r}: budget constraint is binding")
    return ModulusCurve(t=t, p=p, samples=samples, measure=mu, future=future)


def compactness_diagnostic(
    measures: Sequence[PathMeasure],
    t: int,
    p: float,
    deltas: Sequence[float],
    *,
    threads: Optional[int] = None,
) -> List[Tuple[float, float]]:
    """sup over ``measures`` of omega^{t,p}(delta), for each delta in decreasing order.

    A family whose sup does not decay as delta shrinks is not uniformly
    equicontinuous, hence not relatively compact for the adapted topology.
    """
    out = []
    for delta in sorted(deltas, reverse=True):
        sup = max(modulus_omega(mu, t, p, delta, threads=threads) for mu in measures)
        out.append((float(delta), sup))
    return out
