#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
"""Seeded instance generators for the bounds harness.

Random instances have at most 6 atoms, T <= 3, d <= 2 and coordinates in [-2, 2];
weights are drawn from a symmetric Dirichlet. Every generator takes a
``numpy.random.Generator`` so that a (seed, index) pair replays any instance.
"""
import math
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from bicausal.logger import logger as bicausal_logger
from bicausal.measures import sample_empirical, standard_example
from bicausal.state import PathMeasure

logger = bicausal_logger.getChild("sequences")

MAX_ATOMS = 6
COORD_RANGE = 2.0
DEFAULT_NS = (4, 8, 16, 32, 64, 128, 256)
RATE_NS = (32, 64, 128, 256, 512, 1024, 2048)
REGIMES = ("slow", "fast", "fixed")
FIXED_SIGMA = 0.5


def instance_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """The generator of instance ``index`` of ``stream`` in the suite seeded with ``seed``.

    Each check of a suite draws from its own stream, so adding a check never shifts the
    instances of another.
    """
    return np.random.default_rng([seed, stream, index])


def random_measure(
    rng: np.random.Generator,
    n_atoms: Optional[int] = None,
    T: int = 2,  # noqa: N803
    d: int = 1,
    *,
    lattice: Optional[float] = 0.5,
) -> PathMeasure:
    """A random measure whose atoms share prefixes.

    Each time step draws its values from a small pool, so that prefixes collide and
    kernels are nontrivial. With ``lattice`` the coordinates are snapped to it.
    """
    n_atoms = n_atoms or int(rng.integers(1, MAX_ATOMS + 1))
    paths = np.empty((n_atoms, T, d))
    for t in range(T):
        pool_size = int(rng.integers(1, n_atoms + 1))
        pool = rng.uniform(-COORD_RANGE, COORD_RANGE, size=(pool_size, d))
        paths[:, t, :] = pool[rng.integers(0, pool_size, size=n_atoms)]
    if lattice:
        paths = np.round(paths / lattice) * lattice
    weights = rng.dirichlet(np.ones(n_atoms))
    return PathMeasure(paths=paths, weights=weights)


def random_pair(
    rng: np.random.Generator,
    max_atoms: int = MAX_ATOMS,
    T: int = 2,  # noqa: N803
    d: int = 1,
    **kwargs,
) -> Tuple[PathMeasure, PathMeasure]:
    mu = random_measure(rng, int(rng.integers(1, max_atoms + 1)), T, d, **kwargs)
    nu = random_measure(rng, int(rng.integers(1, max_atoms + 1)), T, d, **kwargs)
    return mu, nu


def random_triple(
    rng: np.random.Generator,
    max_atoms: int = 4,
    T: int = 2,  # noqa: N803
    d: int = 1,
) -> Tuple[PathMeasure, PathMeasure, PathMeasure]:
    return tuple(  # type: ignore
        random_measure(rng, int(rng.integers(1, max_atoms + 1)), T, d)
        for _ in range(3)
    )


def heavy_tailed_measure(
    rng: np.random.Generator,
    n_atoms: Optional[int] = None,
    T: int = 2,  # noqa: N803
    d: int = 1,
) -> PathMeasure:
    """Atoms from a Student t law with 2 degrees of freedom: a few far away paths."""
    n_atoms = n_atoms or int(rng.integers(2, MAX_ATOMS + 1))
    paths = rng.standard_t(2.0, size=(n_atoms, T, d))
    weights = rng.dirichlet(np.ones(n_atoms))
    return PathMeasure(paths=paths, weights=weights)


def lipschitz_kernel_measure(
    rng: np.random.Generator,
    n_prefixes: Optional[int] = None,
    L: float = 1.0,  # noqa: N803
) -> PathMeasure:
    """T = 2, d = 1: kernels are translates x_2 = L x_1 +/- 1/2 of one law.

    W_p between the kernels at x and y is then exactly L |x - y|, so the measure is
    Holder with alpha = 1 and constant L.
    """
    n_prefixes = n_prefixes or int(rng.integers(2, 4))
    grid = np.arange(-4, 5) * 0.25
    firsts = np.sort(rng.choice(grid, size=n_prefixes, replace=False))
    prefix_weights = rng.dirichlet(np.ones(n_prefixes))
    paths, weights = [], []
    for x1, w in zip(firsts, prefix_weights):
        for offset in (-0.5, 0.5):
            paths.append([x1, L * x1 + offset])
            weights.append(w / 2)
    return PathMeasure(paths=np.array(paths), weights=np.array(weights))


def rate_base_measure() -> PathMeasure:
    """The default discrete measure of the rate experiment: 8 atoms, d = 1, T = 2."""
    paths = [
        [x1, x1 / 2 + offset]
        for x1 in (-1.0, 1.0)
        for offset in (-1.5, -0.5, 0.5, 1.5)
    ]
    return PathMeasure(paths=np.array(paths), weights=np.full(8, 1 / 8))


def empirical_stream(
    mu: PathMeasure,
    ns: Sequence[int],
    seeds: Sequence[int],
) -> Iterator[Tuple[int, int, PathMeasure]]:
    """(n, seed, empirical measure) for every n and seed, n-major."""
    for n in ns:
        for seed in seeds:
            yield n, seed, sample_empirical(mu, n, seed)


def regime_parameters(regime: str, n: int) -> Tuple[float, float]:
    """(eps_n, sigma_n) of a topology regime."""
    if regime == "slow":
        return 1 / n, 1 / math.sqrt(n)
    if regime == "fast":
        return 1 / math.sqrt(n), 1 / n
    if regime == "fixed":
        return 1 / n, FIXED_SIGMA
    raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")


def standard_example_sequence(
    regime: str,
    ns: Sequence[int] = DEFAULT_NS,
) -> Iterator[Tuple[int, float, float, PathMeasure]]:
    """(n, eps_n, sigma_n, mu_{eps_n}) along a topology regime."""
    for n in ns:
        eps, sigma = regime_parameters(regime, n)
        logger.debug(f"{regime} regime: n={n} eps={eps!r} sigma={sigma!r}")
        yield n, eps, sigma, standard_example(eps)


def _rate_denominator(
    d: int,
    T: int,  # noqa: N803
    p: float,
    q: float,
    alpha: float,
) -> float:
    if not q > p:
        raise ValueError(f"q must exceed p, got p={p}, q={q}")
    return (d * T + 2) * (1 - p / q) + 2 * p * alpha ** (T - 1)


def fast_rate_sigma(
    n: int,
    d: int,
    T: int,  # noqa: N803
    p: float,
    q: float,
    alpha: float = 1.0,
) -> float:
    """The bandwidth sigma_n balancing the smoothing bias against the sampling error."""
    return n ** (-(1 - p / q) / _rate_denominator(d, T, p, q, alpha))


def fast_rate_beta(
    d: int,
    T: int,  # noqa: N803
    p: float,
    q: float,
    alpha: float = 1.0,
) -> float:
    """Exponent of n^-beta bounding E AW_p(mu, smoothed empirical measure)^p at sigma_n."""
    return p * alpha ** (T - 1) * (1 - p / q) / _rate_denominator(d, T, p, q, alpha)


def slow_rate_exponent(p: float, q: float = math.inf) -> float:
    """Exponent of n^-r bounding E AW^(sigma)_p(mu, mu_n)^p at a fixed sigma."""
    if math.isinf(q):
        return 0.5
    return (q - p) / (2 * q)
