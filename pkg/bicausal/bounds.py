#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
"""Numerical checks of the inequalities between AW_p, W_p, TV and their smoothed forms.

Every check returns :class:`BoundReport` objects. A report passes when
``lhs <= rhs + budget + VERDICT_TOL``; ``budget`` collects the approximation error of
quantized smoothing and of LP tolerances and is never folded into ``rhs``.

Suites draw their instances from :mod:`bicausal.sequences` and run them in a thread
pool; reports come back in instance order, so a suite is reproducible from its seed.
"""
import dataclasses
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
    TypeVar,
)

import numpy as np
import yaml
from scipy import stats
from scipy.spatial.distance import pdist

from bicausal.adapted import av, aw_value
from bicausal.logger import logger as bicausal_logger
from bicausal.measures import (
    clip,
    dump_measure,
    parse_measure,
    standard_example_base,
    tail_p,
    tv_distance,
)
from bicausal.moduli import (
    extended_modulus_omega_bar,
    g_recursion,
    h_iteration,
    holder_constant,
    modulus_omega,
)
from bicausal.sequences import (
    DEFAULT_NS,
    RATE_NS,
    REGIMES,
    empirical_stream,
    fast_rate_beta,
    heavy_tailed_measure,
    instance_rng,
    lipschitz_kernel_measure,
    random_measure,
    random_pair,
    rate_base_measure,
    slow_rate_exponent,
    standard_example_sequence,
)
from bicausal.smoothing import (
    GAUSSIAN,
    UNIFORM,
    NoiseModel,
    SmoothingScheme,
    convolve_quantized,
    fatou_lower_bound,
    smooth_aw,
    smooth_tv,
    smooth_w,
    smoothed_moment_p,
    smoothed_tail_p,
    standard_example_bandwidth_bound,
    standard_example_smooth_aw,
)
from bicausal.state import PathMeasure, _DCBase
from bicausal.transport import wasserstein_p

logger = bicausal_logger.getChild("bounds")

_T = TypeVar("_T")
_R = TypeVar("_R")

VERDICT_TOL = 1e-9
LP_TOL = 1e-7
"""Relative tolerance granted when two LP optima are compared with each other."""

SUITES = ("core", "smoothing", "topology", "rates")
DEFAULT_SUITE_SIZE = 50
RATE_SEEDS = 20
FIXTURES_DIR = Path(__file__).parent / "fixtures"

# grids used by the default suites; all steps are fractions of sigma
SMOOTH_AW_SCHEME = SmoothingScheme(radius_mult=3.0, grid_divisor=2)
BANDWIDTH_SCHEME = SmoothingScheme(radius_mult=4.0, grid_divisor=8)
TV_SCHEME = SmoothingScheme(radius_mult=4.0, grid_divisor=32)
RATE_SCHEME = SmoothingScheme(radius_mult=3.0, grid_divisor=2)


class BoundViolationError(RuntimeError):
    """Raised when a report of a suite fails; the message is the serialized report."""

    def __init__(self, report: "BoundReport"):
        self.report = report
        super().__init__(
            f"bound-violation: {json.dumps(report.to_dict(), sort_keys=True)}",
        )


def _jsonable(value: Any) -> Any:
    if isinstance(value, PathMeasure):
        return _jsonable(dump_measure(value))
    if isinstance(value, SmoothingScheme):
        return dataclasses.asdict(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # JSON has no infinities
        return value if math.isfinite(value) else str(value)
    return value


@dataclasses.dataclass(frozen=True)
class BoundReport(_DCBase):
    """One evaluated inequality ``lhs <= rhs``."""

    bound_id: str
    instance: Dict[str, Any]
    """JSON-ready inputs of the check; :func:`replay` re-runs them."""
    lhs: float
    rhs: float
    budget: float = 0.0
    """Accumulated approximation budget, in the units of ``lhs``."""
    notes: Dict[str, Any] = dataclasses.field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.budget + VERDICT_TOL

    @property
    def budget_dominated(self) -> bool:
        """A pass that leans on the budget for more than half of the slack."""
        return self.passed and self.budget > 0 and self.budget > self.slack / 2

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bound_id": self.bound_id,
            "instance": self.instance,
            "lhs": _jsonable(self.lhs),
            "rhs": _jsonable(self.rhs),
            "slack": _jsonable(self.slack),
            "budget": _jsonable(self.budget),
            "verdict": "pass" if self.passed else "fail",
            "budget_dominated": self.budget_dominated,
            "notes": _jsonable(self.notes),
        }


def _report(
    bound_id: str,
    instance: Dict[str, Any],
    lhs: float,
    rhs: float,
    budget: float = 0.0,
    **notes,
) -> BoundReport:
    report = BoundReport(
        bound_id=bound_id,
        instance=instance,
        lhs=float(lhs),
        rhs=float(rhs),
        budget=float(budget),
        notes=notes,
    )
    if not report.passed:
        logger.warning(
            f"{bound_id} fails: lhs={report.lhs!r} rhs={report.rhs!r} "
            f"budget={report.budget!r}",
        )
    else:
        logger.debug(f"{bound_id}: lhs={report.lhs!r} rhs={report.rhs!r}")
    return report


def _instance(check: str, **params) -> Dict[str, Any]:
    return {"check": check, **_jsonable(params)}


def _power_budget(value: float, budget: float, p: float) -> float:
    """Room needed on value^p when the true value may be as low as value - budget."""
    return value**p - max(value - budget, 0.0) ** p


def _noise(kind: str, mu: PathMeasure, sigma: float) -> NoiseModel:
    return NoiseModel(kind=kind, dimension=mu.dim, sigma=sigma)


def _support_radius(mu: PathMeasure, nu: PathMeasure) -> float:
    points = np.concatenate([mu.flat_paths, nu.flat_paths])
    return float(np.linalg.norm(points, axis=1).max())


def _diameter(mu: PathMeasure, nu: PathMeasure) -> float:
    points = np.concatenate([mu.flat_paths, nu.flat_paths])
    if points.shape[0] < 2:
        return 0.0
    return float(pdist(points).max())


def _awtv_factor(p: float, T: int) -> float:  # noqa: N803
    return 6 ** (p - 1) * T * 2**T


def check_awtv(
    mu: PathMeasure,
    nu: PathMeasure,
    p: float = 1.0,
    R: Optional[float] = None,  # noqa: N803
    *,
    threads: Optional[int] = None,
) -> BoundReport:
    """AW_p^p <= 6^{p-1} T 2^T (R^p TV + tails beyond R of mu and nu).

    ``R`` defaults to the radius of the union of the supports.
    """
    R = _support_radius(mu, nu) if R is None else R  # noqa: N806
    lhs = aw_value(mu, nu, p, threads=threads) ** p
    tv = tv_distance(mu, nu)
    tails = tail_p(mu, p, R) + tail_p(nu, p, R)
    rhs = _awtv_factor(p, mu.T) * (R**p * tv + tails)
    instance = _instance("check_awtv", mu=mu, nu=nu, p=p, R=R)
    return _report("awtv", instance, lhs, rhs, tv=tv, tails=tails)


def check_awsigma_w1(
    mu: PathMeasure,
    nu: PathMeasure,
    p: float = 1.0,
    R: Optional[float] = None,  # noqa: N803
    sigma: float = 0.5,
    noise: str = GAUSSIAN,
    scheme: SmoothingScheme = SMOOTH_AW_SCHEME,
    *,
    threads: Optional[int] = None,
) -> BoundReport:
    """The smoothed adapted distance against W_1 / sigma.

    lhs is the p-th power of the smoothed AW_p computed on the grid, with the grid
    budget converted to p-th power units; the smoothed tails on the right are exact
    for Gaussian noise and upper bounds for compactly supported noise.
    """
    R = _support_radius(mu, nu) if R is None else R  # noqa: N806
    model = _noise(noise, mu, sigma)
    value, budget = smooth_aw(mu, nu, model, p, scheme, threads=threads)
    w1, _ = wasserstein_p(mu, nu, 1.0)
    tails = smoothed_tail_p(mu, model, p, R) + smoothed_tail_p(nu, model, p, R)
    rhs = _awtv_factor(p, mu.T) * (R**p * model.grad_l1 * w1 / sigma + tails)
    instance = _instance(
        "check_awsigma_w1",
        mu=mu,
        nu=nu,
        p=p,
        R=R,
        sigma=sigma,
        noise=noise,
        scheme=scheme,
    )
    return _report(
        "awsigma-w1",
        instance,
        value**p,
        rhs,
        _power_budget(value, budget, p),
        smooth_aw=value,
        w1=w1,
        smoothed_tails=tails,
    )


def check_moment_variant(
    mu: PathMeasure,
    nu: PathMeasure,
    p: float = 1.0,
    q: float = 2.0,
    sigma: float = 0.5,
    noise: str = GAUSSIAN,
    scheme: SmoothingScheme = SMOOTH_AW_SCHEME,
    *,
    sigma0: Optional[float] = None,
    threads: Optional[int] = None,
) -> Tuple[BoundReport, ...]:
    """Every moment form of the smoothed-AW bound that applies to the instance.

    - ``moment-q`` (q > p): the tails are traded for the q-th moment of the smoothed
      measures.
    - ``moment-bounded`` (compactly supported noise): the smoothed supports are bounded
      by diam(supp mu u supp nu) + sigma diam(supp xi).
    - ``moment-gaussian`` (Gaussian noise, q > p): W_1 is replaced by the smoothed
      W_1 at sigma0 < sigma, sigma0 defaulting to sigma / sqrt(2).
    """
    model = _noise(noise, mu, sigma)
    T = mu.T  # noqa: N806
    factor = 6 ** (p - 1) * T
    grad = model.grad_l1
    value, budget = smooth_aw(mu, nu, model, p, scheme, threads=threads)
    lhs = value**p
    lhs_budget = _power_budget(value, budget, p)
    w1, _ = wasserstein_p(mu, nu, 1.0)
    instance = _instance(
        "check_moment_variant",
        mu=mu,
        nu=nu,
        p=p,
        q=q,
        sigma=sigma,
        noise=noise,
        scheme=scheme,
        sigma0=sigma0,
    )

    reports = []
    if q > p:
        r = p / q
        moments = smoothed_moment_p(mu, model, q) + smoothed_moment_p(nu, model, q)
        rhs = factor * 2 ** (T + 1) * moments**r * (grad * w1 / sigma) ** (1 - r)
        reports.append(
            _report("moment-q", instance, lhs, rhs, lhs_budget, moment_q=moments),
        )
    if math.isfinite(model.support_radius):
        diam = _diameter(mu, nu) + sigma * 2 * model.support_radius
        rhs = factor * 2 ** (T + 2) * diam**p / sigma * grad * w1
        reports.append(
            _report("moment-bounded", instance, lhs, rhs, lhs_budget, diameter=diam),
        )
    if noise == GAUSSIAN and q > p:
        r = p / q
        s0 = sigma / math.sqrt(2) if sigma0 is None else sigma0
        if not 0 < s0 < sigma:
            raise ValueError(f"sigma0 must lie in (0, sigma), got {s0}")
        w_s0, w_budget = smooth_w(
            mu,
            nu,
            model.replace(sigma=s0),
            1.0,
            scheme,
            threads=threads,
        )
        moments = smoothed_moment_p(mu, model, q) + smoothed_moment_p(nu, model, q)
        gap = math.sqrt(sigma**2 - s0**2)

        def rhs_at(w: float) -> float:
            return factor * 2 ** (T + 1) * grad ** (1 - r) * moments**r * (w / gap) ** (
                1 - r
            )

        rhs = rhs_at(w_s0)
        # the smoothed W_1 is only known up to its budget, and rhs grows with it
        rhs_budget = rhs_at(w_s0 + w_budget) - rhs
        reports.append(
            _report(
                "moment-gaussian",
                instance,
                lhs,
                rhs,
                lhs_budget + rhs_budget,
                smooth_w1=w_s0,
                sigma0=s0,
            ),
        )
    if not reports:
        raise ValueError(
            f"no moment variant applies to {noise} noise with p={p}, q={q}",
        )
    return tuple(reports)


def _holder_h(
    L: float,  # noqa: N803
    alpha: float,
    sigma: float,
    T: int,  # noqa: N803
) -> List[float]:
    h = [sigma]
    for _ in range(1, T):
        h.append(L * sum(h) ** alpha)
    return h


def check_bandwidth(
    mu: PathMeasure,
    p: float = 1.0,
    sigma: float = 0.25,
    noise: str = GAUSSIAN,
    scheme: SmoothingScheme = BANDWIDTH_SCHEME,
    *,
    L: Optional[float] = None,  # noqa: N803
    alpha: float = 1.0,
    threads: Optional[int] = None,
) -> BoundReport:
    """AW_p(mu, mu * xi_sigma) <= T (1 v M_p(xi)^{1/p}) sum_t h^t(sigma).

    With a Holder constant ``L`` the notes also carry the bound obtained by replacing
    every modulus with L delta^alpha.
    """
    model = _noise(noise, mu, sigma)
    approx = convolve_quantized(
        mu,
        model,
        scheme.step_for(sigma),
        scheme.radius_mult,
        p=p,
        cell_cap=scheme.cell_cap,
        threads=threads,
    )
    value = aw_value(mu, approx.approx, p, threads=threads)
    scale = mu.T * max(1.0, model.moment(p) ** (1 / p))
    h = h_iteration(mu, p, sigma, threads=threads)
    notes: Dict[str, Any] = {"h": h}
    if L is not None:
        notes["holder_rhs"] = scale * sum(_holder_h(L, alpha, sigma, mu.T))
    instance = _instance(
        "check_bandwidth",
        mu=mu,
        p=p,
        sigma=sigma,
        noise=noise,
        scheme=scheme,
        L=L,
        alpha=alpha,
    )
    return _report(
        "bandwidth",
        instance,
        value,
        scale * sum(h),
        approx.budget_aw,
        **notes,
    )


def check_main_bound(
    mu: PathMeasure,
    nu: PathMeasure,
    p: float = 1.0,
    R: Optional[float] = None,  # noqa: N803
    sigma: float = 0.5,
    noise: str = GAUSSIAN,
    *,
    alpha: Optional[float] = None,
    threads: Optional[int] = None,
) -> BoundReport:
    """AW_p^p against W_1 through an auxiliary smoothing at scale ``sigma``.

    The right-hand side is the four-term bound: the W_1 / sigma term, the smoothed
    tails, and the bandwidth terms of mu and nu. Two ratios are recorded in the notes
    for the suite summary. ``constant_ratio`` is lhs over R^p W_1 / sigma +
    (max sum h)^p + tails. ``power_law_ratio`` (when ``alpha`` is given) is AW_p
    over W_1^{alpha^{T-1} / (p alpha^{T-1} + 1)}. Neither is asserted.
    """
    R = _support_radius(mu, nu) if R is None else R  # noqa: N806
    T = mu.T  # noqa: N806
    model = _noise(noise, mu, sigma)
    aw = aw_value(mu, nu, p, threads=threads)
    lhs = aw**p
    w1, _ = wasserstein_p(mu, nu, 1.0)
    h_mu = h_iteration(mu, p, sigma, threads=threads)
    h_nu = h_iteration(nu, p, sigma, threads=threads)

    big = 18 ** (p - 1) * T * 2**T
    w_term = big * R**p * model.grad_l1 * w1 / sigma
    tail_term = big * (
        smoothed_tail_p(mu, model, p, R) + smoothed_tail_p(nu, model, p, R)
    )
    small = 3 ** (p - 1) * T**p * max(1.0, model.moment(p))
    h_term = small * (sum(h_mu) ** p + sum(h_nu) ** p)
    rhs = w_term + tail_term + h_term

    notes: Dict[str, Any] = {
        "w_term": w_term,
        "tail_term": tail_term,
        "bandwidth_term": h_term,
        "w1": w1,
    }
    scale = (
        R**p * w1 / sigma
        + max(sum(h_mu), sum(h_nu)) ** p
        + tail_p(mu, p, R)
        + tail_p(nu, p, R)
    )
    notes["constant_ratio"] = lhs / scale if scale > 0 else None
    if alpha is not None and w1 > 0:
        exponent = alpha ** (T - 1) / (p * alpha ** (T - 1) + 1)
        notes["power_law_ratio"] = aw / w1**exponent

    instance = _instance(
        "check_main_bound",
        mu=mu,
        nu=nu,
        p=p,
        R=R,
        sigma=sigma,
        noise=noise,
        alpha=alpha,
    )
    return _report("main-bound", instance, lhs, rhs, **notes)


def check_tv_sandwich(
    mu: PathMeasure,
    nu: PathMeasure,
    *,
    threads: Optional[int] = None,
) -> Tuple[BoundReport, BoundReport]:
    """TV / 2 <= AV and AV <= (2^T - 1) / 2 TV."""
    tv = tv_distance(mu, nu)
    adapted = av(mu, nu, threads=threads)
    instance = _instance("check_tv_sandwich", mu=mu, nu=nu)
    return (
        _report("tv-av-lower", instance, tv / 2, adapted, tv=tv, av=adapted),
        _report(
            "tv-av-upper",
            instance,
            adapted,
            (2**mu.T - 1) / 2 * tv,
            tv=tv,
            av=adapted,
        ),
    )


def check_tv_smoothing(
    mu: PathMeasure,
    nu: PathMeasure,
    sigma: float = 0.5,
    noise: str = GAUSSIAN,
    scheme: SmoothingScheme = TV_SCHEME,
    *,
    threads: Optional[int] = None,
) -> BoundReport:
    """TV(mu * xi_sigma, nu * xi_sigma) <= ||grad f||_1 W_1(mu, nu) / sigma."""
    model = _noise(noise, mu, sigma)
    value, budget = smooth_tv(mu, nu, model, scheme, threads=threads)
    w1, _ = wasserstein_p(mu, nu, 1.0)
    instance = _instance(
        "check_tv_smoothing",
        mu=mu,
        nu=nu,
        sigma=sigma,
        noise=noise,
        scheme=scheme,
    )
    return _report(
        "tv-smoothing",
        instance,
        value,
        model.grad_l1 * w1 / sigma,
        budget,
        w1=w1,
    )


def check_clip_bound(
    mu: PathMeasure,
    p: float = 1.0,
    R: float = 1.0,  # noqa: N803
    *,
    threads: Optional[int] = None,
) -> BoundReport:
    """AW_p(mu, clip(mu, R))^p <= 2^p T^2 (tail of mu beyond R)."""
    lhs = aw_value(mu, clip(mu, R), p, threads=threads) ** p
    rhs = 2**p * mu.T**2 * tail_p(mu, p, R)
    instance = _instance("check_clip_bound", mu=mu, p=p, R=R)
    return _report("clip", instance, lhs, rhs)


def check_w_vs_aw(
    mu: PathMeasure,
    nu: PathMeasure,
    p: float = 1.0,
    *,
    threads: Optional[int] = None,
) -> BoundReport:
    """W_p <= C AW_p, C = 1 for p <= 2 and T^{1/2 - 1/p} above."""
    constant = 1.0 if p <= 2 else mu.T ** (0.5 - 1 / p)
    w, _ = wasserstein_p(mu, nu, p)
    aw = aw_value(mu, nu, p, threads=threads)
    instance = _instance("check_w_vs_aw", mu=mu, nu=nu, p=p)
    return _report("w-le-aw", instance, w, constant * aw, constant=constant)


def check_lipschitz_sigma(
    mu: PathMeasure,
    nu: PathMeasure,
    p: float = 1.0,
    sigma1: float = 0.25,
    sigma2: float = 0.5,
    noise: str = GAUSSIAN,
    scheme: SmoothingScheme = SmoothingScheme(),
    *,
    threads: Optional[int] = None,
) -> BoundReport:
    """|W_p^(sigma1) - W_p^(sigma2)| <= 2 |sigma1 - sigma2| M_p(xi)^{1/p}."""
    first = _noise(noise, mu, sigma1)
    v1, b1 = smooth_w(mu, nu, first, p, scheme, threads=threads)
    v2, b2 = smooth_w(mu, nu, first.replace(sigma=sigma2), p, scheme, threads=threads)
    rhs = 2 * abs(sigma1 - sigma2) * first.moment(p) ** (1 / p)
    instance = _instance(
        "check_lipschitz_sigma",
        mu=mu,
        nu=nu,
        p=p,
        sigma1=sigma1,
        sigma2=sigma2,
        noise=noise,
        scheme=scheme,
    )
    return _report(
        "w-sigma-lipschitz",
        instance,
        abs(v1 - v2),
        rhs,
        b1 + b2,
        values=[v1, v2],
    )


def check_holder_modulus(
    mu: PathMeasure,
    p: float = 1.0,
    alpha: float = 1.0,
    deltas: Sequence[float] = (0.125, 0.25, 0.5, 1.0),
    *,
    threads: Optional[int] = None,
) -> BoundReport:
    """omega^t(delta) <= L delta^alpha, with L the Holder constant read off mu.

    Reports the (t, delta) pair closest to violating the bound.
    """
    L = holder_constant(mu, p, alpha, threads=threads)  # noqa: N806
    instance = _instance(
        "check_holder_modulus",
        mu=mu,
        p=p,
        alpha=alpha,
        deltas=list(deltas),
    )
    worst: Optional[Tuple[float, float, int, float]] = None
    for t in range(1, mu.T):
        for delta in deltas:
            omega = modulus_omega(mu, t, p, delta, threads=threads)
            bound = L * delta**alpha if L > 0 else 0.0
            if worst is None or omega - bound > worst[0] - worst[1]:
                worst = (omega, bound, t, delta)
    if worst is None:
        return _report("holder-modulus", instance, 0.0, 0.0, holder_constant=L)
    omega, bound, t, delta = worst
    return _report(
        "holder-modulus",
        instance,
        omega,
        bound,
        LP_TOL * max(1.0, omega),
        holder_constant=L,
        t=t,
        delta=delta,
    )


def check_modulus_chain(
    mu: PathMeasure,
    t: int = 1,
    p: float = 1.0,
    delta: float = 0.5,
    *,
    threads: Optional[int] = None,
) -> Tuple[BoundReport, BoundReport]:
    """omega^t(delta) <= omega_bar^t(delta) <= sum_s g^s(delta)."""
    omega = modulus_omega(mu, t, p, delta, threads=threads)
    omega_bar = extended_modulus_omega_bar(mu, t, p, delta, threads=threads)
    g = g_recursion(mu, t, p, delta, threads=threads)
    instance = _instance("check_modulus_chain", mu=mu, t=t, p=p, delta=delta)
    return (
        _report(
            "modulus-extended",
            instance,
            omega,
            omega_bar,
            LP_TOL * max(1.0, omega_bar),
        ),
        _report(
            "modulus-g-chain",
            instance,
            omega_bar,
            sum(g),
            LP_TOL * max(1.0, sum(g)),
            g=g,
        ),
    )


CHECKS: Dict[str, Callable[..., Any]] = {
    func.__name__: func
    for func in (
        check_awtv,
        check_awsigma_w1,
        check_moment_variant,
        check_bandwidth,
        check_main_bound,
        check_tv_sandwich,
        check_tv_smoothing,
        check_clip_bound,
        check_w_vs_aw,
        check_lipschitz_sigma,
        check_holder_modulus,
        check_modulus_chain,
    )
}


def replay(
    instance: Dict[str, Any],
    *,
    threads: Optional[int] = None,
) -> Tuple[BoundReport, ...]:
    """Re-run the check an ``instance`` (as found in a serialized report) describes."""
    params = dict(instance)
    name = params.pop("check", None)
    if name not in CHECKS:
        raise ValueError(f"cannot replay {name!r}; known checks: {sorted(CHECKS)}")
    for key, value in params.items():
        if isinstance(value, dict) and "atoms" in value:
            params[key] = parse_measure(json.dumps(value), name=key)
    if params.get("scheme") is not None:
        params["scheme"] = SmoothingScheme(**params["scheme"])
    out = CHECKS[name](**params, threads=threads)
    return out if isinstance(out, tuple) else (out,)


@dataclasses.dataclass(frozen=True)
class RateFit(_DCBase):
    """Ordinary least squares fit of log(value) against log(n)."""

    ns: Tuple[int, ...]
    values: Tuple[float, ...]
    slope: float
    intercept: float
    residual: float
    """Root mean square of the log-log residuals."""
    predicted_slope: Optional[float] = None

    @classmethod
    def fit(
        cls,
        ns: Sequence[int],
        values: Sequence[float],
        predicted_slope: Optional[float] = None,
    ) -> "RateFit":
        x = np.log(np.asarray(ns, dtype=float))
        y = np.asarray(values, dtype=float)
        if x.shape[0] < 2 or x.shape != y.shape:
            raise ValueError(
                f"need at least two (n, value) pairs, got {len(ns)} ns and "
                f"{len(values)} values",
            )
        if np.any(y <= 0):
            raise ValueError(f"a log-log fit needs positive values, got {list(y)}")
        y = np.log(y)
        result = stats.linregress(x, y)
        residuals = y - (result.intercept + result.slope * x)
        return cls(
            ns=tuple(int(n) for n in ns),
            values=tuple(float(v) for v in values),
            slope=float(result.slope),
            intercept=float(result.intercept),
            residual=float(np.sqrt(np.mean(residuals**2))),
            predicted_slope=predicted_slope,
        )

    def to_dict(self) -> Dict[str, Any]:
        return _jsonable(dataclasses.asdict(self))


def _map(
    func: Callable[[_T], _R],
    items: Iterable[_T],
    threads: Optional[int],
) -> List[_R]:
    """``map`` over a thread pool; results keep the order of ``items``."""
    items = list(items)
    workers = threads or os.cpu_count() or 1
    if workers == 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def run_rate_experiment(
    mu: Optional[PathMeasure] = None,
    p: float = 1.0,
    q: float = math.inf,
    sigma: float = 0.5,
    ns: Sequence[int] = RATE_NS,
    seeds: Iterable[int] = range(RATE_SEEDS),
    *,
    noise: str = GAUSSIAN,
    scheme: SmoothingScheme = RATE_SCHEME,
    threads: Optional[int] = None,
) -> RateFit:
    """Seed-averaged AW^(sigma)_p(mu, mu_n)^p along ``ns``, and its log-log slope.

    ``mu`` defaults to :func:`bicausal.sequences.rate_base_measure`; ``q`` is the
    highest finite moment of mu and only sets the predicted slope.
    """
    mu = rate_base_measure() if mu is None else mu
    model = _noise(noise, mu, sigma)
    step = scheme.step_for(sigma)
    seeds = list(seeds)

    def smooth(m: PathMeasure) -> PathMeasure:
        return convolve_quantized(
            m,
            model,
            step,
            scheme.radius_mult,
            p=p,
            cell_cap=scheme.cell_cap,
            threads=1,
        ).approx

    target = smooth(mu)

    def distance(job: Tuple[int, int, PathMeasure]) -> float:
        return aw_value(target, smooth(job[2]), p, threads=1) ** p

    values = _map(distance, empirical_stream(mu, ns, seeds), threads)
    means = [
        float(np.mean(values[i * len(seeds) : (i + 1) * len(seeds)]))
        for i in range(len(ns))
    ]
    fit = RateFit.fit(ns, means, predicted_slope=-slow_rate_exponent(p, q))
    logger.info(
        f"rate experiment: slope {fit.slope:.3f} (predicted {fit.predicted_slope:.3f}) "
        f"over n in {list(ns)} with {len(seeds)} seeds",
    )
    return fit


def load_thresholds(path: Optional[Path] = None) -> Dict[str, Dict[str, Any]]:
    """The trend thresholds stored in ``fixtures/topology.yaml``."""
    path = path or FIXTURES_DIR / "topology.yaml"
    with open(path) as f:
        return yaml.safe_load(f)


def _kendall_tau(ns: Sequence[int], values: Sequence[float]) -> Optional[float]:
    tau = stats.kendalltau(ns, values)[0]
    return None if tau is None or math.isnan(tau) else float(tau)


@dataclasses.dataclass(frozen=True)
class TrendReport(_DCBase):
    """Series of distances along one topology regime, with their gate reports."""

    regime: str
    p: float
    ns: Tuple[int, ...]
    eps: Tuple[float, ...]
    sigmas: Tuple[float, ...]
    series: Dict[str, Tuple[float, ...]]
    reports: Tuple[BoundReport, ...]

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports)

    def final_over_initial(self, name: str) -> Optional[float]:
        values = self.series[name]
        return values[-1] / values[0] if values[0] else None

    def kendall_tau(self, name: str) -> Optional[float]:
        return _kendall_tau(self.ns, self.series[name])

    def to_dict(self) -> Dict[str, Any]:
        return _jsonable(
            {
                "regime": self.regime,
                "p": self.p,
                "ns": self.ns,
                "eps": self.eps,
                "sigmas": self.sigmas,
                "series": self.series,
                "trends": {
                    name: {
                        "final_over_initial": self.final_over_initial(name),
                        "kendall_tau": self.kendall_tau(name),
                    }
                    for name in self.series
                },
                "reports": [report.to_dict() for report in self.reports],
            },
        )


def run_topology_experiment(
    regime: str,
    ns: Sequence[int] = DEFAULT_NS,
    p: float = 1.0,
    *,
    thresholds: Optional[Dict[str, Dict[str, Any]]] = None,
    threads: Optional[int] = None,
) -> TrendReport:
    """Evaluate the standard example along the eps_n, sigma_n sequence of ``regime``.

    ``slow``: the smoothed distance to mu must lose a fixed factor over the grid.
    ``fast``: mu_n and its smoothing merge while AW_p(mu, mu_n) and the smoothed
    distance to mu stay away from zero.
    ``fixed``: the smoothed distance stays within a constant of W_1(mu, mu_n).
    """
    limits = (thresholds or load_thresholds())[regime]
    rows = list(standard_example_sequence(regime, ns))
    eps = tuple(row[1] for row in rows)
    sigmas = tuple(row[2] for row in rows)
    base = standard_example_base()
    instance = _instance("run_topology_experiment", regime=regime, p=p, ns=list(ns))

    smooth = tuple(standard_example_smooth_aw(e, s, p) for e, s in zip(eps, sigmas))
    series: Dict[str, Tuple[float, ...]] = {"smooth_aw": smooth}
    reports = []
    if regime == "slow":
        series["w1_over_sigma"] = tuple(e / s for e, s in zip(eps, sigmas))
        reports.append(
            _report(
                "topology-slow-decay",
                instance,
                smooth[-1] / smooth[0],
                limits["max_final_over_initial"],
                kendall_tau=_kendall_tau(ns, smooth),
            ),
        )
    elif regime == "fast":
        series["bandwidth"] = tuple(
            standard_example_bandwidth_bound(e, s, p) for e, s in zip(eps, sigmas)
        )
        series["aw"] = tuple(aw_value(base, row[3], p, threads=threads) for row in rows)
        series["modulus"] = tuple(
            modulus_omega(row[3], 1, p, row[2], threads=threads) for row in rows
        )
        floor = fatou_lower_bound(math.inf, p)
        reports += [
            _report(
                "topology-fast-bandwidth",
                instance,
                series["bandwidth"][-1],
                limits["max_final_bandwidth"],
                kendall_tau=_kendall_tau(ns, series["bandwidth"]),
            ),
            _report(
                "topology-fast-adapted",
                instance,
                floor - limits["adapted_margin"],
                min(series["aw"]),
            ),
            _report(
                "topology-fast-smooth",
                instance,
                limits["min_smooth_aw_fraction"] * floor,
                min(smooth),
            ),
        ]
    elif regime == "fixed":
        series["w1"] = tuple(wasserstein_p(base, row[3], 1.0)[0] for row in rows)
        series["ratio"] = tuple(s**p / w for s, w in zip(smooth, series["w1"]))
        reports.append(
            _report(
                "topology-fixed-ratio",
                instance,
                max(series["ratio"]),
                limits["max_ratio"] * 2 ** (p - 1),
            ),
        )
    else:
        raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")

    return TrendReport(
        regime=regime,
        p=p,
        ns=tuple(ns),
        eps=eps,
        sigmas=sigmas,
        series=series,
        reports=tuple(reports),
    )


# per-instance jobs of the randomized suites; each draws from its own stream


def _choice(rng: np.random.Generator, options: Sequence[Any]) -> Any:
    return options[int(rng.integers(len(options)))]


def _awtv_job(rng: np.random.Generator) -> Tuple[BoundReport, ...]:
    mu, nu = random_pair(rng, T=_choice(rng, (2, 3)), d=_choice(rng, (1, 2)))
    p, R = _choice(rng, (1.0, 2.0)), _choice(rng, (1.0, 2.0, 3.0))  # noqa: N806
    return (check_awtv(mu, nu, p, R, threads=1),)


def _tv_sandwich_job(rng: np.random.Generator) -> Tuple[BoundReport, ...]:
    mu, nu = random_pair(rng, T=_choice(rng, (2, 3)), d=_choice(rng, (1, 2)))
    return check_tv_sandwich(mu, nu, threads=1)


def _w_vs_aw_job(rng: np.random.Generator) -> Tuple[BoundReport, ...]:
    mu, nu = random_pair(rng, T=_choice(rng, (2, 3)), d=_choice(rng, (1, 2)))
    return (check_w_vs_aw(mu, nu, _choice(rng, (1.0, 2.0, 3.0)), threads=1),)


def _main_bound_job(rng: np.random.Generator) -> Tuple[BoundReport, ...]:
    p, sigma = _choice(rng, (1.0, 2.0)), _choice(rng, (0.25, 0.5, 1.0))
    if rng.random() < 0.5:
        mu, nu = random_pair(rng, T=_choice(rng, (2, 3)))
        return (check_main_bound(mu, nu, p, None, sigma, threads=1),)
    L = float(rng.uniform(0.5, 2.0))  # noqa: N806
    mu = lipschitz_kernel_measure(rng, L=L)
    nu = lipschitz_kernel_measure(rng, L=L)
    return (check_main_bound(mu, nu, p, None, sigma, alpha=1.0, threads=1),)


def _clip_job(rng: np.random.Generator) -> Tuple[BoundReport, ...]:
    mu = heavy_tailed_measure(rng, T=_choice(rng, (2, 3)), d=_choice(rng, (1, 2)))
    p, R = _choice(rng, (1.0, 2.0)), _choice(rng, (0.5, 1.0, 2.0))  # noqa: N806
    return (check_clip_bound(mu, p, R, threads=1),)


def _modulus_chain_job(rng: np.random.Generator) -> Tuple[BoundReport, ...]:
    mu = random_measure(rng, T=3)
    t, p = _choice(rng, (1, 2)), _choice(rng, (1.0, 2.0))
    return check_modulus_chain(mu, t, p, _choice(rng, (0.25, 0.5, 1.0)), threads=1)


def _holder_job(rng: np.random.Generator) -> Tuple[BoundReport, ...]:
    mu = lipschitz_kernel_measure(rng, L=float(rng.uniform(0.5, 2.0)))
    return (check_holder_modulus(mu, _choice(rng, (1.0, 2.0)), threads=1),)


def _awsigma_job(rng: np.random.Generator) -> Tuple[BoundReport, ...]:
    mu, nu = random_pair(rng)
    p, noise = _choice(rng, (1.0, 2.0)), _choice(rng, (GAUSSIAN, UNIFORM))
    return (check_awsigma_w1(mu, nu, p, None, 0.5, noise, threads=1),)


def _moment_job(rng: np.random.Generator) -> Tuple[BoundReport, ...]:
    mu, nu = random_pair(rng)
    p, noise = _choice(rng, (1.0, 2.0)), _choice(rng, (GAUSSIAN, UNIFORM))
    return check_moment_variant(mu, nu, p, 2 * p, 0.5, noise, threads=1)


def _bandwidth_job(rng: np.random.Generator) -> Tuple[BoundReport, ...]:
    p, noise = _choice(rng, (1.0, 2.0)), _choice(rng, (GAUSSIAN, UNIFORM))
    if rng.random() < 0.5:
        return (check_bandwidth(random_measure(rng), p, 0.25, noise, threads=1),)
    L = float(rng.uniform(0.5, 2.0))  # noqa: N806
    mu = lipschitz_kernel_measure(rng, L=L)
    return (check_bandwidth(mu, p, 0.25, noise, L=L, threads=1),)


def _tv_smoothing_job(rng: np.random.Generator) -> Tuple[BoundReport, ...]:
    mu, nu = random_pair(rng)
    noise = _choice(rng, (GAUSSIAN, UNIFORM))
    return (check_tv_smoothing(mu, nu, 0.5, noise, threads=1),)


def _lipschitz_sigma_job(rng: np.random.Generator) -> Tuple[BoundReport, ...]:
    mu, nu = random_pair(rng, T=1)
    return (check_lipschitz_sigma(mu, nu, _choice(rng, (1.0, 2.0)), threads=1),)


Job = Callable[[np.random.Generator], Tuple[BoundReport, ...]]

SUITE_JOBS: Dict[str, Tuple[Job, ...]] = {
    "core": (
        _awtv_job,
        _tv_sandwich_job,
        _w_vs_aw_job,
        _main_bound_job,
        _clip_job,
        _modulus_chain_job,
        _holder_job,
    ),
    "smoothing": (
        _awsigma_job,
        _moment_job,
        _bandwidth_job,
        _tv_smoothing_job,
        _lipschitz_sigma_job,
    ),
}


def summarize(reports: Sequence[BoundReport]) -> Dict[str, Dict[str, Any]]:
    """Per bound id: counts, budget-dominated passes and the largest observed ratios.

    ``max_ratio`` is the largest lhs / rhs; every numeric note whose name ends in
    ``_ratio`` is also reduced to its maximum, which is how existential constants
    are reported.
    """
    groups: Dict[str, List[BoundReport]] = {}
    for report in reports:
        groups.setdefault(report.bound_id, []).append(report)

    summary = {}
    for bound_id in sorted(groups):
        group = groups[bound_id]
        ratios = [r.lhs / r.rhs for r in group if 0 < r.rhs < math.inf]
        entry: Dict[str, Any] = {
            "count": len(group),
            "passed": sum(r.passed for r in group),
            "failed": sum(not r.passed for r in group),
            "budget_dominated": sum(r.budget_dominated for r in group),
            "max_ratio": max(ratios) if ratios else None,
        }
        keys = sorted({key for r in group for key in r.notes if key.endswith("_ratio")})
        for key in keys:
            values = [
                r.notes[key]
                for r in group
                if isinstance(r.notes.get(key), (int, float))
                and math.isfinite(r.notes[key])
            ]
            entry[f"max_{key}"] = max(values) if values else None
        summary[bound_id] = entry
    return summary


@dataclasses.dataclass(frozen=True)
class SuiteResult(_DCBase):
    suite: str
    seed: int
    reports: Tuple[BoundReport, ...]
    summary: Dict[str, Dict[str, Any]]

    @property
    def failures(self) -> Tuple[BoundReport, ...]:
        return tuple(r for r in self.reports if not r.passed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "summary": _jsonable(self.summary),
            "reports": [r.to_dict() for r in self.reports],
        }


def run_suite(
    name: str,
    seed: int = 0,
    *,
    count: Optional[int] = None,
    threads: Optional[int] = None,
    fail_fast: bool = True,
) -> SuiteResult:
    """Run a default suite.

    :arg name: one of ``core``, ``smoothing``, ``topology`` and ``rates``.
    :arg seed: the suite seed; instance i of check k uses ``instance_rng(seed, i, k)``.
    :arg count: instances per check (seeds for ``rates``; ignored by ``topology``).
    :arg threads: instances run in parallel on this many workers.
    :arg fail_fast: raise :class:`BoundViolationError` on the first failed report.
    """
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")
    logger.info(f"running suite {name} with seed {seed}")

    if name in SUITE_JOBS:
        size = DEFAULT_SUITE_SIZE if count is None else count
        jobs = [
            partial(job, instance_rng(seed, i, stream))
            for stream, job in enumerate(SUITE_JOBS[name])
            for i in range(size)
        ]
        batches = _map(lambda job: job(), jobs, threads)
        reports = [report for batch in batches for report in batch]
    elif name == "topology":
        reports = [
            report
            for regime in REGIMES
            for report in run_topology_experiment(regime, threads=threads).reports
        ]
    else:
        size = RATE_SEEDS if count is None else count
        seeds = range(seed, seed + size)
        fit = run_rate_experiment(seeds=seeds, threads=threads)
        reports = [
            _report(
                "rate-slope",
                _instance("run_rate_experiment", seeds=list(seeds)),
                fit.slope,
                load_thresholds()["rates"]["max_slope"],
                fit=fit.to_dict(),
                fast_rate_beta=fast_rate_beta(1, 2, 1.0, math.inf),
            ),
        ]

    result = SuiteResult(
        suite=name,
        seed=seed,
        reports=tuple(reports),
        summary=summarize(reports),
    )
    for bound_id, entry in result.summary.items():
        if entry["budget_dominated"]:
            logger.warning(
                f"{bound_id}: {entry['budget_dominated']} of {entry['count']} passes "
                f"are budget-dominated",
            )
    logger.info(
        f"suite {name}: {len(reports)} reports, {len(result.failures)} failures",
    )
    if fail_fast and result.failures:
        raise BoundViolationError(result.failures[0])
    return result
