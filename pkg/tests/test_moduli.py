import numpy as np
import pytest

from bicausal.measures import standard_example
from bicausal.moduli import (
    TimeIndexError,
    compactness_diagnostic,
    extended_modulus_omega_bar,
    g_recursion,
    h_iteration,
    holder_constant,
    kernel_wasserstein_matrix,
    modulus_curve,
    modulus_omega,
)
from bicausal.sequences import instance_rng, lipschitz_kernel_measure, random_measure
from bicausal.state import PathMeasure
from bicausal.transport import wasserstein_p
from tests.helpers import measure


@pytest.mark.parametrize("eps", (0.1, 0.25, 0.5, 1.0, 2.0))
@pytest.mark.parametrize("delta", (0.05, 0.2, 0.5, 1.0, 4.0))
@pytest.mark.parametrize("p", (1.0, 2.0))
def test_standard_example_modulus(eps, delta, p):
    value = modulus_omega(standard_example(eps), 1, p, delta, threads=1)
    assert value == pytest.approx(min(delta / eps, 2.0), abs=1e-9)


def test_single_prefix_has_no_modulus():
    mu = measure(([0, 1], 0.5), ([0, -1], 0.5))
    assert modulus_omega(mu, 1, 1, 10.0) == 0.0
    assert h_iteration(mu, 1, 0.5) == [0.5, 0.0]


def test_zero_delta():
    assert modulus_omega(standard_example(0.5), 1, 1, 0.0) == 0.0


def test_negative_delta():
    with pytest.raises(ValueError):
        modulus_omega(standard_example(0.5), 1, 1, -1.0)


@pytest.mark.parametrize("t", (0, 2, 5))
def test_time_index(t):
    with pytest.raises(TimeIndexError):
        modulus_omega(standard_example(0.5), t, 1, 0.5)


def test_kernel_matrix():
    gain = kernel_wasserstein_matrix(standard_example(0.5), 1, 2)
    assert gain.tolist() == [[0.0, 4.0], [4.0, 0.0]]


def test_h_iteration():
    assert h_iteration(standard_example(0.5), 1, 0.25) == pytest.approx([0.25, 0.5])
    assert h_iteration(standard_example(0.1), 1, 0.25) == pytest.approx([0.25, 2.0])
    with pytest.raises(ValueError):
        h_iteration(standard_example(0.5), 1, 0.0)


def test_g_recursion():
    mu = standard_example(0.5)
    assert g_recursion(mu, 1, 1, 0.25) == pytest.approx([0.5])


def test_g_recursion_feeds_forward():
    # X_1 uniform on {0, 1}; X_2 = X_1; X_3 = +-1 after X_2 = 0, +-3 after X_2 = 1
    mu = measure(
        ([0, 0, 1], 0.25),
        ([0, 0, -1], 0.25),
        ([1, 1, 3], 0.25),
        ([1, 1, -3], 0.25),
    )
    delta = 0.5
    g = g_recursion(mu, 1, 1, delta)
    assert len(g) == 2
    assert g[0] == pytest.approx(modulus_omega(mu, 1, 1, delta))
    assert g[1] == pytest.approx(modulus_omega(mu, 2, 1, delta + g[0]))


@pytest.mark.parametrize("index", range(20))
@pytest.mark.parametrize("p", (1.0, 2.0))
def test_modulus_chain(index, p):
    rng = instance_rng(43, index)
    mu = random_measure(rng, T=3)
    for t in (1, 2):
        for delta in (0.25, 1.0):
            omega = modulus_omega(mu, t, p, delta, threads=1)
            omega_bar = extended_modulus_omega_bar(mu, t, p, delta, threads=1)
            g = g_recursion(mu, t, p, delta, threads=1)
            assert omega <= omega_bar * (1 + 1e-7) + 1e-9
            assert omega_bar <= sum(g) * (1 + 1e-7) + 1e-9


@pytest.mark.parametrize("L", (0.5, 1.0, 2.0))
@pytest.mark.parametrize("p", (1.0, 2.0))
def test_holder_constant_of_translated_kernels(L, p):  # noqa: N803
    mu = lipschitz_kernel_measure(instance_rng(47, int(4 * L)), L=L)
    assert holder_constant(mu, p, 1.0) == pytest.approx(L, rel=1e-9)


def test_holder_constant_without_two_prefixes():
    assert holder_constant(PathMeasure.dirac([0.0, 1.0]), 1, 1) == 0.0


def test_modulus_curve():
    curve = modulus_curve(standard_example(0.5), 1, 1, (1.0, 0.25, 0.125, 0.5, 2.0))
    assert curve.deltas.tolist() == [0.125, 0.25, 0.5, 1.0, 2.0]
    assert curve.values.tolist() == pytest.approx([0.25, 0.5, 1.0, 2.0, 2.0])
    assert curve.is_monotone()
    assert curve.scaling_violations() == []
    # below saturation the whole budget is spent
    assert curve.samples[0].budget_active
    assert not curve.samples[-1].budget_active

    payload = curve.to_dict()
    assert set(payload) == {"t", "p", "future", "samples"}
    assert payload["samples"][0] == {
        "delta": 0.125,
        "value": pytest.approx(0.25),
        "budget_active": True,
    }


def test_future_modulus_dominates():
    rng = instance_rng(53, 0)
    mu = random_measure(rng, 5, T=3)
    plain = modulus_curve(mu, 1, 1, (0.25, 0.5, 1.0))
    future = modulus_curve(mu, 1, 1, (0.25, 0.5, 1.0), future=True)
    assert future.future
    assert np.all(future.values >= plain.values - 1e-9)


def test_compactness_diagnostic():
    family = [standard_example(1 / n) for n in (4, 8, 16, 32, 64)]
    sups = compactness_diagnostic(family, 1, 1, (0.125, 0.5, 0.25))
    assert [delta for delta, _ in sups] == [0.5, 0.25, 0.125]
    # the family is not equicontinuous: the sup does not decay
    assert [sup for _, sup in sups] == pytest.approx([2.0, 2.0, 2.0])


_SCALING_GRID = (0.1, 0.2, 0.25, 0.5, 1.0, 1.25, 2.5)


def _scaled_pairs(k):
    grid = {round(delta, 12) for delta in _SCALING_GRID}
    return [delta for delta in _SCALING_GRID if round(k * delta, 12) in grid]


@pytest.mark.parametrize("index", range(10))
@pytest.mark.parametrize("p", (1.0, 2.0))
def test_modulus_scaling(index, p):
    for k in (0.5, 2.0, 5.0):
        assert _scaled_pairs(k), k
    mu = random_measure(instance_rng(59, index), 5, T=2)
    curve = modulus_curve(mu, 1, p, _SCALING_GRID, threads=1)
    assert curve.is_monotone(tol=1e-7)
    assert curve.scaling_violations(tol=1e-7) == []


def _two_prefix_modulus(a, b, wa, wb, gain, delta, p):
    """Best vertex of {s in [0, min(wa, wb)]: 2 s |a - b|^p <= delta^p}.

    The recouplings of two prefixes with themselves move mass s each way; the gain
    2 s W_p^p(kernels) is linear in s, so the optimum sits at a vertex.
    """
    cost = abs(a - b) ** p
    vertices = [0.0, min(wa, wb), delta**p / (2 * cost)]
    feasible = [s for s in vertices if 0 <= s <= min(wa, wb)]
    return max(2 * s * gain for s in feasible) ** (1 / p)


@pytest.mark.parametrize("delta", (0.1, 0.5, 1.0, 1.5, 3.0))
@pytest.mark.parametrize("p", (1.0, 2.0))
def test_modulus_agrees_with_vertex_enumeration(delta, p):
    # kernel after 0 is uniform on {0, 1}, after 1.5 it is the point mass at 2
    mu = measure(([0.0, 0.0], 0.15), ([0.0, 1.0], 0.15), ([1.5, 2.0], 0.7))
    kernel_gap, _ = wasserstein_p(
        (np.array([[0.0], [1.0]]), np.array([0.5, 0.5])),
        (np.array([[2.0]]), np.array([1.0])),
        p,
    )
    expected = _two_prefix_modulus(0.0, 1.5, 0.3, 0.7, kernel_gap**p, delta, p)
    assert modulus_omega(mu, 1, p, delta, threads=1) == pytest.approx(
        expected,
        rel=1e-7,
        abs=1e-9,
    )
