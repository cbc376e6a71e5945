#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
import math
from typing import TYPE_CHECKING, Any, List, Optional, Sequence, Tuple, Union

from bicausal.adapted import av, aw_value
from bicausal.bounds import (
    CHECKS,
    RATE_SEEDS,
    BoundReport,
    RateFit,
    SuiteResult,
    TrendReport,
    run_rate_experiment,
    run_suite,
    run_topology_experiment,
)
from bicausal.consistency_checker import check_compatible
from bicausal.logger import logger as bicausal_logger
from bicausal.measures import tv_distance
from bicausal.moduli import ModulusCurve, h_iteration, modulus_curve
from bicausal.sequences import DEFAULT_NS, RATE_NS
from bicausal.smoothing import (
    GAUSSIAN,
    NOISE_KINDS,
    NoiseModel,
    SmoothingScheme,
    smooth_aw,
    smooth_w,
)
from bicausal.transport import wasserstein_p

if TYPE_CHECKING:  # pragma: no cover
    from bicausal.state import PathMeasure

logger = bicausal_logger.getChild("context")

DISTANCES = ("w", "aw", "av", "tv")
SMOOTH_DISTANCES = ("w", "aw")


class UnknownDistanceError(ValueError):
    """Raised when a distance kind is not one the context can compute."""


class Context:
    """Solver settings shared by a batch of computations, plus what they produced."""

    def __init__(
        self,
        threads: Optional[int] = None,
        scheme: SmoothingScheme = SmoothingScheme(),
        seed: int = 0,
        noise: str = GAUSSIAN,
    ):
        """Represents one configured session of the solver.

        Everything the session computes that is not a plain return value is stored on the
        Context, so that it can be inspected (or serialized) afterwards:
        - ``reports``: every :class:`BoundReport` produced by :meth:`check` and
          :meth:`run_suite`, in order
        - ``suite_history``: the :class:`SuiteResult` of each suite run
        - ``rate_history``: the :class:`RateFit` of each rate experiment
        - ``trend_history``: the :class:`TrendReport` of each topology experiment

        >>> from bicausal import Context, standard_example, standard_example_base
        >>> ctx = Context(threads=1)
        >>> ctx.distance("aw", standard_example_base(), standard_example(0.5))  # 1.5

        :arg threads: worker cap handed to every library call; None means all cores.
        :arg scheme: the smoothing grid used by :meth:`smooth_distance`.
        :arg seed: the seed :meth:`run_suite` and :meth:`rates` default to.
        :arg noise: the default noise kind, ``gaussian`` or ``uniform``.
        """
        if noise not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {noise!r}")
        if threads is not None and threads < 1:
            raise ValueError(f"threads must be positive, got {threads}")
        self.threads = threads
        self.scheme = scheme
        self.seed = seed
        self.noise = noise

        self.reports: List[BoundReport] = []
        self.suite_history: List[SuiteResult] = []
        self.rate_history: List[RateFit] = []
        self.trend_history: List[TrendReport] = []

    def cleanup(self):
        """Forget every recorded report and experiment."""
        self.reports = []
        self.suite_history = []
        self.rate_history = []
        self.trend_history = []

    def distance(
        self,
        kind: str,
        mu: "PathMeasure",
        nu: "PathMeasure",
        p: float = 1.0,
    ) -> float:
        """One of ``w``, ``aw``, ``av`` and ``tv``; ``p`` is ignored by the last two."""
        check_compatible(mu, nu)
        if kind == "w":
            return wasserstein_p(mu, nu, p)[0]
        if kind == "aw":
            return aw_value(mu, nu, p, threads=self.threads)
        if kind == "av":
            return av(mu, nu, threads=self.threads)
        if kind == "tv":
            return tv_distance(mu, nu)
        raise UnknownDistanceError(
            f"unknown distance {kind!r}; expected one of {DISTANCES}",
        )

    def noise_model(
        self,
        mu: "PathMeasure",
        sigma: float,
        noise: Optional[str] = None,
    ) -> NoiseModel:
        return NoiseModel(kind=noise or self.noise, dimension=mu.dim, sigma=sigma)

    def smooth_distance(
        self,
        kind: str,
        mu: "PathMeasure",
        nu: "PathMeasure",
        p: float = 1.0,
        sigma: float = 0.5,
        noise: Optional[str] = None,
    ) -> Tuple[float, float]:
        """The smoothed ``w`` or ``aw`` distance on this context's grid, and its budget."""
        model = self.noise_model(mu, sigma, noise)
        if kind == "w":
            return smooth_w(mu, nu, model, p, self.scheme, threads=self.threads)
        if kind == "aw":
            return smooth_aw(mu, nu, model, p, self.scheme, threads=self.threads)
        raise UnknownDistanceError(
            f"unknown smoothed distance {kind!r}; expected one of {SMOOTH_DISTANCES}",
        )

    def modulus(
        self,
        mu: "PathMeasure",
        t: int,
        p: float,
        deltas: Sequence[float],
        *,
        future: bool = False,
    ) -> ModulusCurve:
        return modulus_curve(mu, t, p, deltas, future=future, threads=self.threads)

    def h_iteration(self, mu: "PathMeasure", p: float, sigma: float) -> List[float]:
        return h_iteration(mu, p, sigma, threads=self.threads)

    def check(self, name: str, *args, **kwargs) -> Tuple[BoundReport, ...]:
        """Run one check by name (``awtv`` or ``check_awtv``) and record its reports."""
        func = CHECKS.get(name) or CHECKS.get(f"check_{name}")
        if func is None:
            raise ValueError(f"unknown check {name!r}; known checks: {sorted(CHECKS)}")
        out: Union[BoundReport, Tuple[BoundReport, ...]] = func(
            *args,
            threads=self.threads,
            **kwargs,
        )
        reports = out if isinstance(out, tuple) else (out,)
        self.reports.extend(reports)
        return reports

    def run_suite(
        self,
        name: str,
        seed: Optional[int] = None,
        *,
        count: Optional[int] = None,
        fail_fast: bool = True,
    ) -> SuiteResult:
        result = run_suite(
            name,
            self.seed if seed is None else seed,
            count=count,
            threads=self.threads,
            fail_fast=fail_fast,
        )
        self.suite_history.append(result)
        self.reports.extend(result.reports)
        return result

    def rates(
        self,
        mu: Optional["PathMeasure"] = None,
        p: float = 1.0,
        q: float = math.inf,
        sigma: float = 0.5,
        ns: Sequence[int] = RATE_NS,
        seeds: Optional[Sequence[int]] = None,
        **kwargs: Any,
    ) -> RateFit:
        """The rate experiment; seeds default to ``seed .. seed + 19``."""
        if seeds is None:
            seeds = range(self.seed, self.seed + RATE_SEEDS)
        fit = run_rate_experiment(
            mu,
            p,
            q,
            sigma,
            ns,
            seeds,
            threads=self.threads,
            **kwargs,
        )
        self.rate_history.append(fit)
        return fit

    def topology(
        self,
        regime: str,
        ns: Sequence[int] = DEFAULT_NS,
        p: float = 1.0,
    ) -> TrendReport:
        trend = run_topology_experiment(regime, ns, p, threads=self.threads)
        self.trend_history.append(trend)
        self.reports.extend(trend.reports)
        return trend
