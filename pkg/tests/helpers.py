import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from bicausal.cli import main
from bicausal.measures import dump_measure
from bicausal.sequences import instance_rng, random_pair
from bicausal.state import PathMeasure

if TYPE_CHECKING:  # pragma: no cover
    PathLike = Union[str, Path]

logger = logging.getLogger()


def measure(*atoms: Tuple[Sequence, float]) -> PathMeasure:
    """Shorthand for PathMeasure.from_atoms; each path is a list of per-step values.

    Scalars per step are read as d = 1.
    """
    return PathMeasure.from_atoms(
        (np.array(path, dtype=float).reshape(len(path), -1), weight)
        for path, weight in atoms
    )


def write_measure(
    root: "PathLike",
    mu: PathMeasure,
    name: str = "mu.json",
) -> Path:
    path = Path(root) / name
    path.write_text(json.dumps(dump_measure(mu)))
    return path


def write_payload(root: "PathLike", payload, name: str = "bad.json") -> Path:
    path = Path(root) / name
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload))
    return path


def random_pairs(
    seed: int,
    count: int,
    T: int = 2,  # noqa: N803
    d: int = 1,
    max_atoms: int = 4,
) -> Iterator[Tuple[PathMeasure, PathMeasure]]:
    for i in range(count):
        yield random_pair(instance_rng(seed, i), max_atoms, T, d)


def run_cli(
    argv: List[str],
    capsys,
    out: Optional[Path] = None,
) -> Tuple[int, str, str]:
    """Run the command line; returns (exit code, stdout or --out content, stderr)."""
    code = main(argv)
    captured = capsys.readouterr()
    stdout = out.read_text() if out is not None and out.exists() else captured.out
    return code, stdout, captured.err
