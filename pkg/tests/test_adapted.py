import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicausal.adapted import (
    OracleSizeError,
    adapted_cost_matrix,
    av,
    aw_p,
    aw_value,
    bicausal_lp_oracle,
    mismatch_cost_matrix,
    verify_bicausal,
)
from bicausal.consistency_checker import InconsistentInputError
from bicausal.measures import standard_example, standard_example_base, tv_distance
from bicausal.sequences import instance_rng, random_pair
from bicausal.state import Coupling, PathMeasure
from bicausal.transport import wasserstein_p
from tests.helpers import measure, random_pairs


@pytest.mark.parametrize("eps", (0.01, 0.1, 0.5, 1.0))
@pytest.mark.parametrize("p", (1.0, 2.0))
def test_standard_example_stays_away(eps, p):
    expected = (eps**p + 2 ** (p - 1)) ** (1 / p)
    value = aw_value(standard_example_base(), standard_example(eps), p, threads=1)
    assert value == pytest.approx(expected, rel=1e-9)


def test_standard_example_coupling():
    mu, nu = standard_example_base(), standard_example(0.5)
    value, pi = aw_p(mu, nu, 1, threads=1)
    assert value == pytest.approx(1.5)
    assert pi.adapted_cost(1) == pytest.approx(1.5)
    ok, report = verify_bicausal(pi)
    assert ok
    assert report.worst_violation <= 1e-9


def test_identical_measures():
    mu = measure(([0, 1, 2], 0.25), ([0, 1, 3], 0.25), ([1, 2, 2], 0.5))
    assert aw_value(mu, mu, 1, threads=1) == pytest.approx(0.0, abs=1e-12)
    assert av(mu, mu, threads=1) == pytest.approx(0.0, abs=1e-12)


def test_av_of_distinct_first_steps():
    assert av(standard_example_base(), standard_example(0.5), threads=1) == 1.0


def test_av_partial_overlap():
    mu = measure(([0, 1], 0.5), ([0, -1], 0.5))
    nu = measure(([0, 1], 0.75), ([0, -1], 0.25))
    # the first steps agree, the kernels differ by TV 1/2, i.e. mass 1/4 moves
    assert av(mu, nu, threads=1) == pytest.approx(0.25)


def test_threads_do_not_change_the_result():
    ((mu, nu),) = random_pairs(5, 1, T=3, d=2, max_atoms=6)
    assert aw_value(mu, nu, 1, threads=1) == aw_value(mu, nu, 1, threads=4)


@pytest.mark.parametrize("p", (1.0, 2.0))
def test_recursion_agrees_with_flat_lp(p):
    for i, (mu, nu) in enumerate(random_pairs(17, 100, T=2 + (p == 2.0), max_atoms=4)):
        exact = bicausal_lp_oracle(mu, nu, adapted_cost_matrix(mu, nu, p))
        value = aw_value(mu, nu, p, threads=1) ** p
        assert value == pytest.approx(exact, rel=1e-7, abs=1e-9), f"instance {i}"


def test_adapted_variation_agrees_with_flat_lp():
    for i, (mu, nu) in enumerate(random_pairs(23, 100, T=3, max_atoms=4)):
        exact = bicausal_lp_oracle(mu, nu, mismatch_cost_matrix(mu, nu))
        assert av(mu, nu, threads=1) == pytest.approx(exact, rel=1e-7, abs=1e-9), (
            f"instance {i}"
        )


def test_returned_couplings_are_bicausal():
    for mu, nu in random_pairs(29, 20, T=3, d=2):
        value, pi = aw_p(mu, nu, 2, threads=1)
        assert pi.adapted_cost(2) == pytest.approx(value**2, rel=1e-7, abs=1e-9)
        assert verify_bicausal(pi)[0]


def test_tv_sandwich():
    for mu, nu in random_pairs(31, 200, T=3, max_atoms=5):
        tv, adapted = tv_distance(mu, nu), av(mu, nu, threads=1)
        assert tv / 2 <= adapted + 1e-12
        assert adapted <= (2**mu.T - 1) / 2 * tv + 1e-12


def test_weak_distance_is_smaller():
    for mu, nu in random_pairs(37, 30, T=3):
        for p in (1.0, 2.0):
            assert wasserstein_p(mu, nu, p)[0] <= aw_value(mu, nu, p) + 1e-9


def test_anticipative_coupling_is_flagged():
    mu = standard_example_base()
    nu = measure(([1, 1], 0.5), ([-1, -1], 0.5))
    # pairs (0, -1) with (-1, -1) and (0, 1) with (1, 1): Y_1 reveals X_2
    pi = Coupling(left=mu, right=nu, pairs=[[0, 0], [1, 1]], weights=[0.5, 0.5])
    ok, report = verify_bicausal(pi)
    assert not ok
    assert report.worst_violation == pytest.approx(0.5)
    assert report.t == 1
    assert report.direction == "left"


def test_product_coupling_is_bicausal():
    for mu, nu in random_pairs(41, 10, T=3):
        assert verify_bicausal(Coupling.product(mu, nu))[0]


def test_oracle_size_cap():
    mu = standard_example(0.5)
    with pytest.raises(OracleSizeError, match="oracle-size:"):
        bicausal_lp_oracle(mu, mu, adapted_cost_matrix(mu, mu, 1), cap=3)


def test_oracle_cost_shape():
    mu = standard_example(0.5)
    with pytest.raises(ValueError, match="dimension-mismatch"):
        bicausal_lp_oracle(mu, mu, np.zeros((2, 3)))


def test_cost_matrices():
    mu, nu = standard_example_base(), standard_example(0.5)
    assert adapted_cost_matrix(mu, nu, 1).tolist() == [[0.5, 2.5], [2.5, 0.5]]
    assert mismatch_cost_matrix(mu, mu).tolist() == [[0.0, 1.0], [1.0, 0.0]]


def test_incompatible_measures():
    with pytest.raises(InconsistentInputError, match="dimension-mismatch:"):
        aw_value(PathMeasure.dirac([0.0, 1.0]), PathMeasure.dirac([0.0]), 1)


def test_order_below_one():
    mu = standard_example(0.5)
    with pytest.raises(ValueError):
        aw_value(mu, mu, 0.5)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    T=st.integers(min_value=1, max_value=3),
    d=st.integers(min_value=1, max_value=2),
    p=st.sampled_from((1.0, 2.0)),
)
def test_shifting_both_measures_keeps_the_distance(seed, T, d, p):  # noqa: N803
    rng = instance_rng(seed, 0)
    mu, nu = random_pair(rng, 4, T, d)
    shift = rng.uniform(-3, 3, size=(T, d))
    moved_mu = PathMeasure(paths=mu.paths + shift, weights=mu.weights)
    moved_nu = PathMeasure(paths=nu.paths + shift, weights=nu.weights)
    assert aw_value(moved_mu, moved_nu, p, threads=1) == pytest.approx(
        aw_value(mu, nu, p, threads=1),
        rel=1e-7,
        abs=1e-9,
    )
