import numpy as np
import pytest

from bicausal.measures import standard_example, standard_example_base
from bicausal.state import (
    CostMatrix,
    Coupling,
    DisintegrationTree,
    MeasureValidationError,
    PathMeasure,
    TransportPlan,
)
from tests.helpers import measure


def test_duplicates_are_merged():
    mu = PathMeasure(paths=[[0, 1], [0, 1], [1, 2]], weights=[0.25, 0.25, 0.5])
    assert mu.n_atoms == 2
    assert mu.weights.tolist() == [0.5, 0.5]


def test_negative_zero_is_zero():
    mu = PathMeasure(paths=[[0.0], [-0.0]], weights=[0.5, 0.5])
    assert mu.n_atoms == 1
    assert mu.weights.tolist() == [1.0]


def test_atoms_are_sorted():
    mu = PathMeasure(paths=[[1, 0], [0, 5]], weights=[0.3, 0.7])
    assert mu.paths[:, :, 0].tolist() == [[0, 5], [1, 0]]
    assert mu.weights.tolist() == [0.7, 0.3]


def test_two_dimensional_paths_are_scalar():
    mu = PathMeasure(paths=[[0, 1, 2]], weights=[1])
    assert (mu.n_atoms, mu.T, mu.d, mu.dim) == (1, 3, 1, 3)
    assert mu.flat_paths.tolist() == [[0, 1, 2]]


def test_vector_valued_paths():
    mu = measure(([[0, 1], [2, 3]], 1.0))
    assert (mu.T, mu.d, mu.dim) == (2, 2, 4)
    assert mu.flat_paths.tolist() == [[0, 1, 2, 3]]


def test_arrays_are_readonly():
    mu = standard_example(0.5)
    with pytest.raises(ValueError):
        mu.paths[0, 0, 0] = 3
    with pytest.raises(ValueError):
        mu.weights[0] = 3


@pytest.mark.parametrize(
    "paths, weights, prefix",
    (
        ([[0, 1], [1, 1]], [0.5, 0.4], "weight-sum:"),
        ([[0, 1], [1, 1]], [1.5, -0.5], "non-positive-weight:"),
        ([[0, 1], [1, 1]], [1.0, 0.0], "non-positive-weight:"),
        ([[0, np.nan], [1, 1]], [0.5, 0.5], "non-finite:"),
        ([[0, np.inf], [1, 1]], [0.5, 0.5], "non-finite:"),
        ([[0, 1], [1, 1]], [1.0], "dimension-mismatch:"),
        ([], [], "dimension-mismatch:"),
    ),
)
def test_validation(paths, weights, prefix):
    with pytest.raises(MeasureValidationError, match=prefix):
        PathMeasure(paths=paths, weights=weights)


def test_weight_sum_tolerance():
    mu = PathMeasure(paths=[[0], [1]], weights=[0.5, 0.5 + 1e-12])
    assert mu.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_dirac():
    mu = PathMeasure.dirac([[1.0], [2.0]])
    assert mu.n_atoms == 1
    assert mu.paths.tolist() == [[[1.0], [2.0]]]


def test_isclose():
    assert standard_example(0.5).isclose(standard_example(0.5))
    assert not standard_example(0.5).isclose(standard_example(0.25))
    assert not standard_example(0.5).isclose(PathMeasure.dirac([0.5, 1.0]))


def test_copy_and_replace():
    mu = standard_example(0.5)
    copy = mu.copy()
    assert copy is not mu
    assert copy.isclose(mu)

    heavier = mu.replace(weights=[0.25, 0.75])
    assert heavier.weights.tolist() == [0.25, 0.75]
    assert mu.weights.tolist() == [0.5, 0.5]


def test_replace_revalidates():
    with pytest.raises(MeasureValidationError, match="weight-sum:"):
        standard_example(0.5).replace(weights=[0.5, 0.6])


def test_disintegration_of_the_base_example():
    tree = DisintegrationTree.from_measure(standard_example_base())
    assert [len(level) for level in tree.levels] == [1, 1, 2]
    assert tree.n_nodes == 4

    (first,) = tree.nodes_at(1)
    assert first.prefix == ((0.0,),)
    assert first.mass == pytest.approx(1.0)
    assert first.values[:, 0].tolist() == [-1.0, 1.0]
    assert first.cond_weights.tolist() == [0.5, 0.5]
    assert all(leaf.is_leaf for leaf in tree.nodes_at(2))
    assert sorted(leaf.leaf_index for leaf in tree.nodes_at(2)) == [0, 1]


def test_prefix_marginal():
    tree = DisintegrationTree.from_measure(standard_example(0.5))
    points, masses = tree.prefix_marginal(1)
    assert points[:, 0].tolist() == [-0.5, 0.5]
    assert masses.tolist() == [0.5, 0.5]

    points, masses = tree.prefix_marginal(2)
    assert points.shape == (2, 2)


def test_future_law():
    mu = measure(([0, 1, 2], 0.25), ([0, 1, 3], 0.25), ([0, 2, 2], 0.5))
    tree = DisintegrationTree.from_measure(mu)
    (first,) = tree.nodes_at(1)
    points, weights = tree.future_law(first)
    assert points.tolist() == [[1, 2], [1, 3], [2, 2]]
    assert weights.tolist() == [0.25, 0.25, 0.5]

    points, weights = tree.future_law(tree.nodes_at(2)[0])
    assert points.tolist() == [[2], [3]]
    assert weights.tolist() == [0.5, 0.5]


@pytest.mark.parametrize(
    "entries, prefix",
    (
        ([[0, -1]], "negative-cost:"),
        ([[0, np.nan]], "non-finite:"),
        ([0, 1], "dimension-mismatch:"),
    ),
)
def test_cost_matrix_validation(entries, prefix):
    with pytest.raises(MeasureValidationError, match=prefix):
        CostMatrix(entries)


def test_cost_matrix_equality():
    assert CostMatrix([[0, 1]]) == CostMatrix(np.array([[0.0, 1.0]]))
    assert CostMatrix([[0, 1]]) != CostMatrix([[1, 0]])
    assert (CostMatrix([[0, 1]]).rows, CostMatrix([[0, 1]]).cols) == (1, 2)


def test_transport_plan():
    plan = TransportPlan(matrix=np.array([[0.5, 0.0], [0.0, 0.5]]), objective=0.0)
    assert plan.entries() == [(0, 0, 0.5), (1, 1, 0.5)]
    assert plan.has_marginals(np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    assert not plan.has_marginals(np.array([1.0, 0.0]), np.array([0.5, 0.5]))


def test_product_coupling():
    mu, nu = standard_example_base(), standard_example(0.5)
    pi = Coupling.product(mu, nu)
    assert pi.as_matrix().tolist() == [[0.25, 0.25], [0.25, 0.25]]
    assert pi.mismatch_mass() == pytest.approx(1.0)


def test_coupling_costs():
    mu = PathMeasure.dirac([0.0, 0.0])
    nu = PathMeasure.dirac([1.0, 2.0])
    pi = Coupling.product(mu, nu)
    assert pi.adapted_cost(1) == pytest.approx(3.0)
    assert pi.adapted_cost(2) == pytest.approx(5.0)
    assert pi.mismatch_mass() == 1.0

    same = Coupling.product(mu, mu)
    assert same.adapted_cost(1) == 0.0
    assert same.mismatch_mass() == 0.0


def test_coupling_from_matrix():
    mu = standard_example(0.5)
    pi = Coupling.from_matrix(mu, mu, np.diag([0.5, 0.5]))
    assert pi.pairs.tolist() == [[0, 0], [1, 1]]
    assert pi.to_dict() == {"pairs": [[0, 0], [1, 1]], "weights": [0.5, 0.5]}


def test_coupling_marginal_mismatch():
    mu = standard_example(0.5)
    with pytest.raises(MeasureValidationError, match="marginal-mismatch:"):
        Coupling(left=mu, right=mu, pairs=[[0, 0], [0, 1]], weights=[0.5, 0.5])


def test_coupling_index_out_of_range():
    mu = standard_example(0.5)
    with pytest.raises(MeasureValidationError, match="dimension-mismatch:"):
        Coupling(left=mu, right=mu, pairs=[[0, 0], [1, 2]], weights=[0.5, 0.5])


def test_coupling_weight_sum():
    mu = standard_example(0.5)
    with pytest.raises(MeasureValidationError, match="weight-sum:"):
        Coupling(left=mu, right=mu, pairs=[[0, 0], [1, 1]], weights=[0.5, 0.4])
