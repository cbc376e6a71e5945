import math

import numpy as np
import pytest

from bicausal.measures import disintegrate
from bicausal.sequences import (
    COORD_RANGE,
    MAX_ATOMS,
    empirical_stream,
    fast_rate_beta,
    fast_rate_sigma,
    heavy_tailed_measure,
    instance_rng,
    lipschitz_kernel_measure,
    random_measure,
    random_triple,
    rate_base_measure,
    regime_parameters,
    slow_rate_exponent,
    standard_example_sequence,
)


def test_instance_rng_is_reproducible():
    first = instance_rng(3, 7).uniform(size=4)
    assert np.array_equal(first, instance_rng(3, 7).uniform(size=4))
    assert not np.array_equal(first, instance_rng(3, 8).uniform(size=4))
    assert not np.array_equal(first, instance_rng(3, 7, stream=1).uniform(size=4))


@pytest.mark.parametrize("index", range(20))
def test_random_measure(index):
    mu = random_measure(instance_rng(1, index), T=3, d=2)
    assert 1 <= mu.n_atoms <= MAX_ATOMS
    assert mu.T == 3
    assert mu.d == 2
    assert np.all(np.abs(mu.paths) <= COORD_RANGE)
    # snapped to the default lattice
    assert np.allclose(mu.paths * 2, np.round(mu.paths * 2))


def test_random_measure_off_lattice():
    mu = random_measure(instance_rng(1, 0), 5, lattice=None)
    assert mu.n_atoms <= 5
    assert mu.weights.sum() == pytest.approx(1.0)


def test_random_triple():
    triple = random_triple(instance_rng(2, 0), T=3)
    assert len(triple) == 3
    assert all(m.T == 3 for m in triple)


def test_heavy_tailed_measure():
    mu = heavy_tailed_measure(instance_rng(2, 1), 6, T=2, d=2)
    assert mu.n_atoms == 6
    assert mu.dim == 4


def test_lipschitz_kernel_measure():
    mu = lipschitz_kernel_measure(instance_rng(2, 2), 3, L=2.0)
    assert mu.n_atoms == 6
    assert mu.T == 2
    for x1, x2 in mu.paths[:, :, 0]:
        assert abs(x2 - 2.0 * x1) == pytest.approx(0.5)


def test_rate_base_measure():
    mu = rate_base_measure()
    assert mu.n_atoms == 8
    assert mu.weights.tolist() == [1 / 8] * 8
    assert len(disintegrate(mu).nodes_at(1)) == 2


def test_empirical_stream_is_n_major():
    mu = rate_base_measure()
    rows = list(empirical_stream(mu, (4, 8), (0, 1, 2)))
    assert [(n, seed) for n, seed, _ in rows] == [
        (4, 0),
        (4, 1),
        (4, 2),
        (8, 0),
        (8, 1),
        (8, 2),
    ]
    assert all(m.n_atoms <= n for n, _, m in rows)


@pytest.mark.parametrize(
    "regime, eps, sigma",
    (("slow", 1 / 16, 1 / 4), ("fast", 1 / 4, 1 / 16), ("fixed", 1 / 16, 0.5)),
)
def test_regime_parameters(regime, eps, sigma):
    assert regime_parameters(regime, 16) == pytest.approx((eps, sigma))


def test_unknown_regime():
    with pytest.raises(ValueError, match="unknown regime"):
        regime_parameters("sideways", 4)


def test_standard_example_sequence():
    rows = list(standard_example_sequence("slow", (4, 16)))
    assert [row[0] for row in rows] == [4, 16]
    n, eps, sigma, mu = rows[1]
    assert mu.paths[1, 0, 0] == pytest.approx(eps)


def test_rates():
    # d = 1, T = 2, p = 1 and no finite moment beyond the first
    assert fast_rate_beta(1, 2, 1.0, math.inf) == pytest.approx(1 / 6)
    assert fast_rate_sigma(64, 1, 2, 1.0, math.inf) == pytest.approx(64 ** (-1 / 6))
    assert fast_rate_beta(1, 2, 1.0, 2.0) == pytest.approx(0.5 / 4)


def test_slow_rate_exponent():
    assert slow_rate_exponent(1.0) == 0.5
    assert slow_rate_exponent(1.0, 4.0) == pytest.approx(3 / 8)


def test_rate_needs_a_higher_moment():
    with pytest.raises(ValueError):
        fast_rate_beta(1, 2, 2.0, 2.0)
