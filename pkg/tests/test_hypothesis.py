"""Metric axioms and modulus properties over seeded random measures."""
from hypothesis import given, settings
from hypothesis import strategies as st

from bicausal.adapted import av, aw_value
from bicausal.bounds import check_holder_modulus, check_lipschitz_sigma
from bicausal.measures import tv_distance
from bicausal.moduli import extended_modulus_omega_bar, g_recursion, modulus_omega
from bicausal.sequences import (
    instance_rng,
    lipschitz_kernel_measure,
    random_measure,
    random_pair,
    random_triple,
)
from bicausal.transport import wasserstein_p

TOL = 1e-7

_seeds = st.integers(min_value=0, max_value=2**32 - 1)
_orders = st.sampled_from((1.0, 2.0))


def _close_enough(small: float, large: float) -> bool:
    return small <= large * (1 + TOL) + TOL


@st.composite
def pairs(draw, T=None, d=None):  # noqa: N803
    rng = instance_rng(draw(_seeds), 0)
    T = T or draw(st.integers(min_value=1, max_value=3))  # noqa: N806
    d = d or draw(st.integers(min_value=1, max_value=2))
    return random_pair(rng, 4, T, d)


@st.composite
def triples(draw):
    rng = instance_rng(draw(_seeds), 1)
    return random_triple(rng, T=draw(st.integers(min_value=1, max_value=3)))


@settings(max_examples=25, deadline=None)
@given(pair=pairs(), p=_orders)
def test_symmetry(pair, p):
    mu, nu = pair
    forward, backward = aw_value(mu, nu, p, threads=1), aw_value(nu, mu, p, threads=1)
    assert abs(forward - backward) <= TOL * max(1.0, forward)
    assert abs(av(mu, nu, threads=1) - av(nu, mu, threads=1)) <= TOL
    assert abs(tv_distance(mu, nu) - tv_distance(nu, mu)) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(pair=pairs(), p=_orders)
def test_zero_diagonal(pair, p):
    mu, _ = pair
    assert aw_value(mu, mu, p, threads=1) ** p <= TOL
    assert av(mu, mu, threads=1) <= TOL
    assert tv_distance(mu, mu) == 0.0


@settings(max_examples=25, deadline=None)
@given(triple=triples(), p=_orders)
def test_adapted_triangle_inequality(triple, p):
    mu, nu, eta = triple
    direct = aw_value(mu, eta, p, threads=1)
    detour = aw_value(mu, nu, p, threads=1) + aw_value(nu, eta, p, threads=1)
    assert _close_enough(direct, detour)


@settings(max_examples=25, deadline=None)
@given(pair=pairs(), p=_orders)
def test_weak_symmetry(pair, p):
    mu, nu = pair
    forward, backward = wasserstein_p(mu, nu, p)[0], wasserstein_p(nu, mu, p)[0]
    assert abs(forward - backward) <= TOL * max(1.0, forward)


@settings(max_examples=25, deadline=None)
@given(triple=triples(), p=_orders)
def test_weak_triangle_inequality(triple, p):
    mu, nu, eta = triple
    direct = wasserstein_p(mu, eta, p)[0]
    detour = wasserstein_p(mu, nu, p)[0] + wasserstein_p(nu, eta, p)[0]
    assert _close_enough(direct, detour)


@settings(max_examples=25, deadline=None)
@given(triple=triples())
def test_variation_triangle_inequality(triple):
    mu, nu, eta = triple
    direct = tv_distance(mu, eta)
    assert direct <= tv_distance(mu, nu) + tv_distance(nu, eta) + 1e-12


@settings(max_examples=25, deadline=None)
@given(pair=pairs(), p=_orders)
def test_weak_below_adapted(pair, p):
    mu, nu = pair
    assert _close_enough(wasserstein_p(mu, nu, p)[0], aw_value(mu, nu, p, threads=1))


@settings(max_examples=25, deadline=None)
@given(pair=pairs())
def test_variation_ranges(pair):
    mu, nu = pair
    assert 0.0 <= tv_distance(mu, nu) <= 2.0 + TOL
    assert -TOL <= av(mu, nu, threads=1) <= 1.0 + TOL


@settings(max_examples=20, deadline=None)
@given(seed=_seeds, p=_orders, delta=st.sampled_from((0.125, 0.25, 0.5)))
def test_modulus_is_monotone_and_sublinear(seed, p, delta):
    mu = random_measure(instance_rng(seed, 2), T=2)
    small = modulus_omega(mu, 1, p, delta, threads=1)
    large = modulus_omega(mu, 1, p, 2 * delta, threads=1)
    assert _close_enough(small, large)
    assert _close_enough(large, 2 * small)


@settings(max_examples=15, deadline=None)
@given(seed=_seeds, p=_orders, delta=st.sampled_from((0.25, 1.0)))
def test_modulus_chain(seed, p, delta):
    mu = random_measure(instance_rng(seed, 3), T=3)
    omega = modulus_omega(mu, 1, p, delta, threads=1)
    omega_bar = extended_modulus_omega_bar(mu, 1, p, delta, threads=1)
    assert _close_enough(omega, omega_bar)
    assert _close_enough(omega_bar, sum(g_recursion(mu, 1, p, delta, threads=1)))


@settings(max_examples=15, deadline=None)
@given(pair=pairs(T=1, d=1), p=_orders)
def test_smoothed_distance_is_lipschitz_in_sigma(pair, p):
    mu, nu = pair
    assert check_lipschitz_sigma(mu, nu, p, threads=1).passed


@settings(max_examples=15, deadline=None)
@given(
    seed=_seeds,
    L=st.floats(min_value=0.5, max_value=2.0),
    p=_orders,
)
def test_holder_modulus(seed, L, p):  # noqa: N803
    mu = lipschitz_kernel_measure(instance_rng(seed, 4), L=L)
    assert check_holder_modulus(mu, p, threads=1).passed
