#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
"""Immutable data model: path measures, their disintegrations, couplings and plans."""
import copy
import dataclasses
from typing import (
    TYPE_CHECKING,
    Any,
    Dict,
    Iterable,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from bicausal.logger import logger as bicausal_logger

if TYPE_CHECKING:  # pragma: no cover
    try:
        from typing import Self  # type: ignore
    except ImportError:
        from typing_extensions import Self

    ArrayLike = Union[np.ndarray, Sequence[Any]]

logger = bicausal_logger.getChild("state")

WEIGHT_TOL = 1e-9
"""Repo-wide tolerance on probability weights and marginals."""

# plan entries below this are solver noise, not mass
_MASS_EPS = 1e-15


class MeasureValidationError(ValueError):
    """Raised when a measure, coupling or cost matrix violates its construction invariants."""


@dataclasses.dataclass(frozen=True)
class _DCBase:
    def replace(self, *args, **kwargs):
        """Produce a deep copy of this class, with some arguments replaced with new ones."""
        return dataclasses.replace(self.copy(), *args, **kwargs)

    def copy(self) -> "Self":
        """Produce a deep copy of this object."""
        return copy.deepcopy(self)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class PathMeasure(_DCBase):
    """A finitely supported probability measure on (R^d)^T.

    Atoms are stored as an array of shape (n, T, d); duplicated paths are merged on
    construction by summing their weights, and atoms are kept in lexicographic order
    of their (time-major) flattened paths. That order makes atoms sharing a prefix
    contiguous, which the disintegration relies on.

    A two-dimensional ``paths`` array of shape (n, T) is read as d=1.
    """

    paths: "ArrayLike"
    """Atom paths, shape (n, T, d)."""
    weights: "ArrayLike"
    """Strictly positive weights summing to 1 within WEIGHT_TOL."""

    def __post_init__(self):
        paths = np.array(self.paths, dtype=float)
        if paths.ndim == 2:
            paths = paths[:, :, None]
        if paths.ndim != 3 or paths.shape[0] == 0 or 0 in paths.shape[1:]:
            raise MeasureValidationError(
                f"dimension-mismatch: expected paths of shape (n, T, d) with n, T, d "
                f"positive; got {paths.shape}",
            )
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if weights.shape[0] != paths.shape[0]:
            raise MeasureValidationError(
                f"dimension-mismatch: {paths.shape[0]} paths but "
                f"{weights.shape[0]} weights",
            )
        if not (np.all(np.isfinite(paths)) and np.all(np.isfinite(weights))):
            raise MeasureValidationError("non-finite: paths and weights must be finite")
        if np.any(weights <= 0):
            raise MeasureValidationError(
                f"non-positive-weight: atoms {np.flatnonzero(weights <= 0).tolist()} "
                f"have weights <= 0",
            )
        total = float(weights.sum())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise MeasureValidationError(
                f"weight-sum: weights sum to {total!r} "
                f"(deficit {1.0 - total:+.3e}, tolerance {WEIGHT_TOL})",
            )

        n, T, d = paths.shape
        # + 0.0 folds -0.0 onto 0.0 so that equal paths compare equal bitwise
        flat = paths.reshape(n, T * d) + 0.0
        unique, inverse = np.unique(flat, axis=0, return_inverse=True)
        merged = np.bincount(
            inverse.reshape(-1),
            weights=weights,
            minlength=unique.shape[0],
        )
        if unique.shape[0] < n:
            logger.debug(f"merged {n - unique.shape[0]} duplicated atoms")

        # bypass frozen dataclass
        object.__setattr__(self, "paths", _readonly(unique.reshape(-1, T, d)))
        object.__setattr__(self, "weights", _readonly(merged / merged.sum()))

    @classmethod
    def from_atoms(
        cls,
        atoms: Iterable[Tuple["ArrayLike", float]],
    ) -> "PathMeasure":
        """Build a measure from (path, weight) pairs; each path is a T x d matrix."""
        paths, weights = zip(*atoms)
        return cls(paths=np.array(paths, dtype=float), weights=np.array(weights))

    @classmethod
    def dirac(cls, path: "ArrayLike") -> "PathMeasure":
        """The point mass at ``path``."""
        return cls(paths=np.array([path], dtype=float), weights=np.ones(1))

    @property
    def n_atoms(self) -> int:
        return self.paths.shape[0]

    @property
    def T(self) -> int:  # noqa: N802
        return self.paths.shape[1]

    @property
    def d(self) -> int:
        return self.paths.shape[2]

    @property
    def dim(self) -> int:
        """Dimension of the flattened path space, d * T."""
        return self.T * self.d

    @property
    def flat_paths(self) -> np.ndarray:
        """Atom paths as points of R^{dT}, time-major."""
        return self.paths.reshape(self.n_atoms, self.dim)

    def atoms(self) -> Iterator[Tuple[np.ndarray, float]]:
        for path, weight in zip(self.paths, self.weights):
            yield path, float(weight)

    def isclose(self, other: "PathMeasure", atol: float = WEIGHT_TOL) -> bool:
        """Same support (exact paths) and weights within ``atol``."""
        return (
            self.paths.shape == other.paths.shape
            and bool(np.array_equal(self.paths, other.paths))
            and bool(np.allclose(self.weights, other.weights, rtol=0, atol=atol))
        )

    def __repr__(self):
        return f"PathMeasure(n_atoms={self.n_atoms}, T={self.T}, d={self.d})"


@dataclasses.dataclass(frozen=True, eq=False)
class _Node:
    """One prefix x_{1:t} of a disintegration tree."""

    prefix: Tuple[Tuple[float, ...], ...]
    """The path prefix, one d-tuple per elapsed time step."""
    mass: float
    """Marginal mass of the prefix."""
    depth: int
    index: int
    """Position of the node among the nodes at its depth (lexicographic)."""
    values: np.ndarray
    """Next-step values x_{t+1} of the children, shape (k, d)."""
    cond_weights: np.ndarray
    """Conditional kernel weights of the children; they sum to 1."""
    children: Tuple["_Node", ...]
    leaf_index: Optional[int] = None
    """For leaves: the index of the atom in the source measure."""

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def __repr__(self):
        return f"<_Node depth={self.depth} index={self.index} prefix={self.prefix}>"


@dataclasses.dataclass(frozen=True, eq=False)
class DisintegrationTree(_DCBase):
    """A trie of conditional kernels mu_{x_{1:t}} built from a PathMeasure.

    Prefixes are grouped by exact floating point equality.
    """

    root: _Node
    T: int  # noqa: N815
    d: int
    levels: Tuple[Tuple[_Node, ...], ...] = ()
    """Nodes per depth 0..T, each tuple in lexicographic prefix order."""

    def __post_init__(self):
        levels: List[List[_Node]] = [[] for _ in range(self.T + 1)]
        stack = [self.root]
        while stack:
            node = stack.pop()
            levels[node.depth].append(node)
            stack.extend(node.children)
        for level in levels:
            level.sort(key=lambda n: n.index)
        # bypass frozen dataclass
        object.__setattr__(self, "levels", tuple(tuple(level) for level in levels))

    @classmethod
    def from_measure(cls, mu: PathMeasure) -> "DisintegrationTree":
        counters = [0] * (mu.T + 1)
        root = _build_node(mu.paths, mu.weights, 0, mu.n_atoms, 0, (), counters)
        return cls(root=root, T=mu.T, d=mu.d)

    def nodes_at(self, t: int) -> Tuple[_Node, ...]:
        return self.levels[t]

    def prefix_marginal(self, t: int) -> Tuple[np.ndarray, np.ndarray]:
        """The law of X_{1:t}: prefix points of shape (k, t * d) and their masses."""
        nodes = self.levels[t]
        points = np.array([np.ravel(node.prefix) for node in nodes], dtype=float)
        masses = np.array([node.mass for node in nodes], dtype=float)
        return points.reshape(len(nodes), t * self.d), masses

    def future_law(self, node: _Node) -> Tuple[np.ndarray, np.ndarray]:
        """The conditional law of X_{t+1:T} given the prefix at ``node``.

        Returns points of shape (m, (T - t) * d) and weights summing to 1.
        """
        points: List[np.ndarray] = []
        weights: List[float] = []

        def walk(current: _Node, suffix: Tuple[np.ndarray, ...], weight: float):
            if current.is_leaf:
                points.append(np.concatenate(suffix) if suffix else np.empty(0))
                weights.append(weight)
                return
            for value, cond, child in zip(
                current.values,
                current.cond_weights,
                current.children,
            ):
                walk(child, suffix + (value,), weight * cond)

        walk(node, (), 1.0)
        return np.array(points, dtype=float), np.array(weights, dtype=float)

    @property
    def n_nodes(self) -> int:
        return sum(len(level) for level in self.levels)


def _build_node(
    paths: np.ndarray,
    weights: np.ndarray,
    lo: int,
    hi: int,
    depth: int,
    prefix: Tuple[Tuple[float, ...], ...],
    counters: List[int],
) -> _Node:
    index = counters[depth]
    counters[depth] += 1
    mass = float(weights[lo:hi].sum())
    T = paths.shape[1]  # noqa: N806
    if depth == T:
        return _Node(
            prefix=prefix,
            mass=mass,
            depth=depth,
            index=index,
            values=_readonly(np.empty((0, paths.shape[2]))),
            cond_weights=_readonly(np.empty(0)),
            children=(),
            leaf_index=lo,
        )

    # atoms are sorted, so equal prefixes form contiguous runs
    starts = [lo]
    for i in range(lo + 1, hi):
        if not np.array_equal(paths[i, depth], paths[starts[-1], depth]):
            starts.append(i)
    bounds = list(zip(starts, starts[1:] + [hi]))

    children = tuple(
        _build_node(
            paths,
            weights,
            start,
            stop,
            depth + 1,
            prefix + (tuple(float(v) for v in paths[start, depth]),),
            counters,
        )
        for start, stop in bounds
    )
    values = np.array([paths[start, depth] for start, _ in bounds], dtype=float)
    cond = np.array([child.mass for child in children]) / mass
    return _Node(
        prefix=prefix,
        mass=mass,
        depth=depth,
        index=index,
        values=_readonly(values),
        cond_weights=_readonly(cond),
        children=children,
    )


@dataclasses.dataclass(frozen=True)
class CostMatrix(_DCBase):
    """Nonnegative finite ground costs c_ij between left and right atoms."""

    entries: "ArrayLike"

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2:
            raise MeasureValidationError(
                f"dimension-mismatch: cost matrix must be 2-dimensional, got shape "
                f"{entries.shape}",
            )
        if not np.all(np.isfinite(entries)):
            raise MeasureValidationError("non-finite: cost entries must be finite")
        if np.any(entries < 0):
            raise MeasureValidationError("negative-cost: cost entries must be >= 0")
        # bypass frozen dataclass
        object.__setattr__(self, "entries", _readonly(entries))

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    def __eq__(self, other):
        return isinstance(other, CostMatrix) and np.array_equal(
            self.entries,
            other.entries,
        )


@dataclasses.dataclass(frozen=True, eq=False)
class TransportPlan(_DCBase):
    """A coupling of two weight vectors, stored densely."""

    matrix: np.ndarray
    """Plan masses, shape (rows, cols)."""
    objective: float
    """Value of the optimized linear functional at this plan."""
    binding: bool = False
    """Whether the side (budget) constraint, if any, is tight at the optimum."""

    def entries(self) -> List[Tuple[int, int, float]]:
        """The (i, j, mass) triples with positive mass, row-major."""
        rows, cols = np.nonzero(self.matrix > _MASS_EPS)
        return [
            (int(i), int(j), float(self.matrix[i, j])) for i, j in zip(rows, cols)
        ]

    def marginals(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.matrix.sum(axis=1), self.matrix.sum(axis=0)

    def has_marginals(
        self,
        left: np.ndarray,
        right: np.ndarray,
        atol: float = WEIGHT_TOL,
    ) -> bool:
        row, col = self.marginals()
        return bool(
            np.allclose(row, left, rtol=0, atol=atol)
            and np.allclose(col, right, rtol=0, atol=atol),
        )


@dataclasses.dataclass(frozen=True, eq=False)
class Coupling(_DCBase):
    """Weighted joint atoms (i, j) pairing left path i with right path j."""

    left: PathMeasure
    right: PathMeasure
    pairs: "ArrayLike"
    """Integer array of shape (m, 2): (left atom index, right atom index)."""
    weights: "ArrayLike"

    def __post_init__(self):
        pairs = np.array(self.pairs, dtype=np.int64).reshape(-1, 2)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if weights.shape[0] != pairs.shape[0]:
            raise MeasureValidationError(
                f"dimension-mismatch: {pairs.shape[0]} pairs but "
                f"{weights.shape[0]} weights",
            )
        if np.any(weights < -WEIGHT_TOL):
            raise MeasureValidationError("non-positive-weight: negative coupling mass")
        if pairs.size and (
            pairs.min() < 0
            or pairs[:, 0].max() >= self.left.n_atoms
            or pairs[:, 1].max() >= self.right.n_atoms
        ):
            raise MeasureValidationError("dimension-mismatch: atom index out of range")

        keep = weights > _MASS_EPS
        pairs, weights = pairs[keep], weights[keep]
        unique, inverse = np.unique(pairs, axis=0, return_inverse=True)
        merged = np.bincount(inverse.reshape(-1), weights=weights)

        total = float(merged.sum())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise MeasureValidationError(
                f"weight-sum: coupling weights sum to {total!r} "
                f"(deficit {1.0 - total:+.3e})",
            )
        left_marginal = np.bincount(
            unique[:, 0],
            weights=merged,
            minlength=self.left.n_atoms,
        )
        right_marginal = np.bincount(
            unique[:, 1],
            weights=merged,
            minlength=self.right.n_atoms,
        )
        for side, marginal, measure in (
            ("left", left_marginal, self.left),
            ("right", right_marginal, self.right),
        ):
            gap = float(np.max(np.abs(marginal - measure.weights)))
            if gap > WEIGHT_TOL:
                raise MeasureValidationError(
                    f"marginal-mismatch: {side} marginal off by {gap:.3e}",
                )

        # bypass frozen dataclass
        object.__setattr__(self, "pairs", _readonly(unique))
        object.__setattr__(self, "weights", _readonly(merged))

    @classmethod
    def product(cls, left: PathMeasure, right: PathMeasure) -> "Coupling":
        """The independent coupling left (x) right."""
        i, j = np.meshgrid(
            np.arange(left.n_atoms),
            np.arange(right.n_atoms),
            indexing="ij",
        )
        weights = np.outer(left.weights, right.weights)
        return cls(
            left=left,
            right=right,
            pairs=np.stack([i.ravel(), j.ravel()], axis=1),
            weights=weights.ravel(),
        )

    @classmethod
    def from_matrix(
        cls,
        left: PathMeasure,
        right: PathMeasure,
        matrix: np.ndarray,
    ) -> "Coupling":
        rows, cols = np.nonzero(matrix > _MASS_EPS)
        return cls(
            left=left,
            right=right,
            pairs=np.stack([rows, cols], axis=1),
            weights=matrix[rows, cols],
        )

    def as_matrix(self) -> np.ndarray:
        out = np.zeros((self.left.n_atoms, self.right.n_atoms))
        out[self.pairs[:, 0], self.pairs[:, 1]] = self.weights
        return out

    def adapted_cost(self, p: float) -> float:
        """Integral of sum_t |x_t - y_t|^p under the coupling."""
        x = self.left.paths[self.pairs[:, 0]]
        y = self.right.paths[self.pairs[:, 1]]
        stage = np.linalg.norm(x - y, axis=2) ** p
        return float(np.dot(self.weights, stage.sum(axis=1)))

    def mismatch_mass(self) -> float:
        """Mass of {x != y}."""
        x = self.left.flat_paths[self.pairs[:, 0]]
        y = self.right.flat_paths[self.pairs[:, 1]]
        differ = np.any(x != y, axis=1)
        return float(self.weights[differ].sum())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pairs": self.pairs.tolist(),
            "weights": self.weights.tolist(),
        }
