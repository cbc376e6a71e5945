#!/usr/bin/env python3
# Copyright 2024 The bicausal authors.
# See LICENSE file for licensing details.
"""Smoothing of path measures by additive noise, on an absolute quantization grid.

The convolution mu * xi_sigma is approximated by a discrete measure on the grid
``grid_step * Z^N`` (N = dT): each atom spreads its weight over the grid cells of a
box around it, cell masses being exact products of one-dimensional CDF differences.
The grid is shared by every atom of every measure, so smoothed measures group their
prefixes exactly and can be compared cell by cell.
"""
import dataclasses
import functools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
from scipy import integrate, special, stats

from bicausal.adapted import aw_value
from bicausal.consistency_checker import check_compatible
from bicausal.logger import logger as bicausal_logger
from bicausal.measures import tv_distance
from bicausal.state import PathMeasure, _DCBase
from bicausal.transport import wasserstein_1d, wasserstein_p

logger = bicausal_logger.getChild("smoothing")

GAUSSIAN = "gaussian"
UNIFORM = "uniform"
NOISE_KINDS = (GAUSSIAN, UNIFORM)

DEFAULT_RADIUS_MULT = 6.0
DEFAULT_GRID_DIVISOR = 16
"""Default grid step is sigma / DEFAULT_GRID_DIVISOR, a power-of-two fraction of sigma."""
DEFAULT_CELL_CAP = 10**6

QUAD_TOL = 1e-6


class GridCapExceededError(ValueError):
    """Raised when a smoothing grid would hold more cells than allowed."""


class QuadratureError(RuntimeError):
    """Raised when an adaptive quadrature does not converge."""


def quad(func, a: float, b: float, *, what: str, **kwargs) -> float:
    """``scipy.integrate.quad`` that raises instead of warning."""
    out = integrate.quad(func, a, b, full_output=1, limit=200, **kwargs)
    value, abserr = out[0], out[1]
    if len(out) > 3:
        raise QuadratureError(
            f"quadrature of {what} over [{a}, {b}] did not converge: {out[3]} "
            f"(value {value!r}, residual estimate {abserr:.3e})",
        )
    if abserr > QUAD_TOL * max(1.0, abs(value)):
        raise QuadratureError(
            f"quadrature of {what} over [{a}, {b}] left a residual estimate of "
            f"{abserr:.3e} on a value of {value!r}",
        )
    return float(value)


def gaussian_grad_l1(N: int) -> float:  # noqa: N803
    """||grad f||_{L^1} of the standard Gaussian density on R^N, i.e. E|Z|."""
    if N < 1:
        raise ValueError(f"dimension must be positive, got {N}")
    log_ratio = special.gammaln((N + 1) / 2) - special.gammaln(N / 2)
    return math.sqrt(2.0) * math.exp(log_ratio)


def gaussian_moment(N: int, p: float) -> float:  # noqa: N803
    """E|Z|^p for Z standard Gaussian on R^N."""
    return math.exp(
        (p / 2) * math.log(2.0) + special.gammaln((N + p) / 2) - special.gammaln(N / 2),
    )


def gaussian_tail_moment(N: int, p: float, radius: float) -> float:  # noqa: N803
    """E[|Z|^p; |Z| > radius] for Z standard Gaussian on R^N."""
    return gaussian_moment(N, p) * float(special.gammaincc((N + p) / 2, radius**2 / 2))


# the one-dimensional bump c * exp(-1 / (1 - u^2)) on (-1, 1)
def _bump(u: float) -> float:
    if abs(u) >= 1.0:
        return 0.0
    return math.exp(-1.0 / (1.0 - u * u))


@functools.lru_cache(maxsize=None)
def _bump_mass() -> float:
    return quad(_bump, -1.0, 1.0, what="bump normalization")


@functools.lru_cache(maxsize=4096)
def _bump_cdf(u: float) -> float:
    if u <= -1.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    if u > 0:
        return 1.0 - _bump_cdf(-u)
    return quad(_bump, -1.0, u, what="bump cdf") / _bump_mass()


@functools.lru_cache(maxsize=None)
def _bump_moment(p: float) -> float:
    half = quad(lambda u: u**p * _bump(u), 0.0, 1.0, what="bump moment")
    return 2 * half / _bump_mass()


@dataclasses.dataclass(frozen=True)
class NoiseModel(_DCBase):
    """The smoothing noise xi, scaled by sigma.

    ``gaussian`` is the standard Gaussian on R^N. ``uniform`` is the compactly
    supported stand-in for a uniform law on the unit ball: a product of N smooth
    one-dimensional bumps on [-1/sqrt(N), 1/sqrt(N)], so it lives in the unit ball,
    has a C^1 density with integrable gradient, and its Fourier transform (an entire
    function) vanishes only on a null set.
    """

    kind: str
    dimension: int
    """N = d * T."""
    sigma: float

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(
                f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}",
            )
        if self.dimension < 1:
            raise ValueError(f"noise dimension must be positive, got {self.dimension}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def grad_l1(self) -> float:
        """||grad f||_{L^1} of the unit-scale density (an upper bound for ``uniform``).

        For ``uniform`` the coordinate-wise bound sum_i ||d_i f||_1 = N^{3/2} * 2g(0)
        is used; it is exact when N = 1.
        """
        if self.kind == GAUSSIAN:
            return gaussian_grad_l1(self.dimension)
        return self.dimension**1.5 * 2 * math.exp(-1.0) / _bump_mass()

    def moment(self, p: float) -> float:
        """M_p of the unit-scale noise (an upper bound for ``uniform`` when N > 1)."""
        if self.kind == GAUSSIAN:
            return gaussian_moment(self.dimension, p)
        if self.dimension == 1:
            return _bump_moment(p)
        m2 = _bump_moment(2.0)
        # |X| <= 1 almost surely; Jensen below p = 2
        return m2 ** (p / 2) if p <= 2 else m2

    @property
    def support_radius(self) -> float:
        """Radius of the support of the unit-scale noise, infinite for ``gaussian``."""
        return math.inf if self.kind == GAUSSIAN else 1.0

    def coordinate_half_width(self, radius_mult: float) -> float:
        """Half width of the per-coordinate box the noise is spread on."""
        if self.kind == GAUSSIAN:
            return radius_mult * self.sigma
        return self.sigma / math.sqrt(self.dimension)

    def coordinate_cdf(self, z: np.ndarray) -> np.ndarray:
        """CDF of one coordinate of xi_sigma."""
        if self.kind == GAUSSIAN:
            return special.ndtr(np.asarray(z) / self.sigma)
        scaled = np.asarray(z) * math.sqrt(self.dimension) / self.sigma
        return np.array([_bump_cdf(float(u)) for u in np.ravel(scaled)]).reshape(
            np.shape(scaled),
        )

    def truncated_mass(self, radius_mult: float) -> float:
        """Mass outside the per-coordinate box."""
        if self.kind == UNIFORM:
            return 0.0
        inside = 1.0 - 2.0 * special.ndtr(-radius_mult)
        return float(-math.expm1(self.dimension * math.log(inside)))


@dataclasses.dataclass(frozen=True)
class SmoothingScheme(_DCBase):
    """Discretization parameters of the smoothing grid."""

    grid_step: Optional[float] = None
    """Absolute grid step; None means sigma / grid_divisor."""
    radius_mult: float = DEFAULT_RADIUS_MULT
    """Gaussian noise is truncated to a box of half width radius_mult * sigma."""
    cell_cap: int = DEFAULT_CELL_CAP
    grid_divisor: int = DEFAULT_GRID_DIVISOR

    def __post_init__(self):
        if self.grid_step is not None and not self.grid_step > 0:
            raise ValueError(f"grid_step must be positive, got {self.grid_step}")
        if not self.radius_mult > 0:
            raise ValueError(f"radius_mult must be positive, got {self.radius_mult}")
        if self.grid_divisor < 1:
            raise ValueError(f"grid_divisor must be positive, got {self.grid_divisor}")

    def step_for(self, sigma: float) -> float:
        if self.grid_step is not None:
            return self.grid_step
        return sigma / self.grid_divisor


@dataclasses.dataclass(frozen=True, eq=False)
class SmoothedApprox(_DCBase):
    """A quantized convolution of ``base`` with ``noise``, with its error budgets."""

    base: PathMeasure
    noise: NoiseModel
    approx: PathMeasure
    p: float
    grid_step: float
    truncated_mass: float
    """Mass lost to truncation, before renormalization."""
    budget_p: float
    """Upper bound on W_p(approx, base * xi_sigma)."""
    budget_aw: float
    """Practical, uncertified charge for AW_p(approx, base * xi_sigma).

    Rounding is charged per time step, but per-coordinate rounding is not a bicausal
    coupling, so this is not a proven upper bound on the adapted distance.
    """

    @property
    def tv_budget(self) -> float:
        """Slack of TV against the exact smoothed measure, for one side of a comparison.

        Cell averaging loses at most grid_step * sqrt(N) / 2 * ||grad f_sigma||_1 and
        renormalizing the truncated measure at most 2 * truncated_mass.
        """
        n = self.noise.dimension
        cell = self.grid_step * math.sqrt(n) / 2 * self.noise.grad_l1 / self.noise.sigma
        return cell + 2 * self.truncated_mass


def _quantization_budget(
    noise: NoiseModel,
    h: float,
    radius_mult: float,
    p: float,
    T: int,  # noqa: N803
    d: int,
) -> Tuple[float, float]:
    """(W_p budget, AW_p charge) of a quantized convolution, in distance units.

    The W_p budget is a certified upper bound. The AW_p charge counts the rounding
    once per time step; it is a practical estimate only, as rounding each coordinate
    to its cell need not be a bicausal coupling.
    """
    n = noise.dimension
    m = noise.truncated_mass(radius_mult)
    rounding_w = (h * math.sqrt(n) / 2) ** p
    rounding_aw = T * (h * math.sqrt(d) / 2) ** p
    truncation = 0.0
    if m > 0:
        far = noise.sigma**p * gaussian_tail_moment(n, p, radius_mult)
        reach = ((radius_mult * noise.sigma + h) * math.sqrt(n)) ** p
        truncation = 2 ** (p - 1) * (far + m * reach)
    # sum_t a_t^p <= T^{1 - p/2} |a|^p for p <= 2
    aw_factor = T ** max(0.0, 1 - p / 2)
    w_budget = ((1 - m) * rounding_w + truncation) ** (1 / p)
    aw_budget = ((1 - m) * rounding_aw + aw_factor * truncation) ** (1 / p)
    return w_budget, aw_budget


def _atom_cells(
    x: np.ndarray,
    noise: NoiseModel,
    h: float,
    half: float,
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Per-coordinate grid indices and masses of the noise shifted to ``x``."""
    indices, masses = [], []
    for xc in x:
        lo, hi = xc - half, xc + half
        k = np.arange(math.floor(lo / h + 0.5), math.floor(hi / h + 0.5) + 1)
        left = np.maximum((k - 0.5) * h, lo)
        right = np.minimum((k + 0.5) * h, hi)
        mass = noise.coordinate_cdf(right - xc) - noise.coordinate_cdf(left - xc)
        indices.append(k)
        masses.append(np.clip(mass, 0.0, None))
    return indices, masses


def _product_cells(
    indices: List[np.ndarray],
    masses: List[np.ndarray],
    h: float,
) -> Tuple[np.ndarray, np.ndarray]:
    grids = np.meshgrid(*indices, indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1).astype(float) * h
    weights = functools.reduce(np.multiply.outer, masses).ravel()
    return points, weights


def convolve_quantized(
    mu: PathMeasure,
    noise: NoiseModel,
    grid_step: Optional[float] = None,
    radius_mult: float = DEFAULT_RADIUS_MULT,
    *,
    p: float = 1.0,
    cell_cap: int = DEFAULT_CELL_CAP,
    threads: Optional[int] = None,
) -> SmoothedApprox:
    """Approximate mu * xi_sigma on the grid ``grid_step * Z^N``.

    :arg mu: the measure to smooth.
    :arg noise: the noise model; its dimension must be mu.d * mu.T.
    :arg grid_step: absolute grid step. Defaults to sigma / 16.
    :arg radius_mult: Gaussian noise is truncated to the box of half width
        radius_mult * sigma around each atom (ignored for compactly supported noise).
    :arg p: the order the budgets are expressed for.
    :arg cell_cap: refuse grids with more cells than this, summed over atoms.
    :arg threads: workers used to spread the atoms; results are merged in atom order.
    """
    if noise.dimension != mu.dim:
        raise ValueError(
            f"dimension-mismatch: noise lives in R^{noise.dimension}, the measure in "
            f"R^{mu.dim}",
        )
    h = grid_step if grid_step is not None else noise.sigma / DEFAULT_GRID_DIVISOR
    if not h > 0:
        raise ValueError(f"grid_step must be positive, got {h}")
    half = noise.coordinate_half_width(radius_mult)

    per_coordinate = math.floor(2 * half / h) + 2
    cells = mu.n_atoms * per_coordinate**mu.dim
    if cells > cell_cap:
        raise GridCapExceededError(
            f"grid-cap: smoothing {mu.n_atoms} atoms in R^{mu.dim} with step {h!r} and "
            f"half width {half!r} needs up to {cells} cells, over the cap of "
            f"{cell_cap}; raise grid_step to at least "
            f"{2 * half / ((cell_cap / mu.n_atoms) ** (1 / mu.dim) - 2):.3g} or "
            f"lower radius_mult",
        )

    def spread(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _product_cells(*_atom_cells(x, noise, h, half), h)

    workers = threads or os.cpu_count() or 1
    atoms = list(mu.flat_paths)
    if workers > 1 and len(atoms) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            spreads = list(pool.map(spread, atoms))
    else:
        spreads = [spread(x) for x in atoms]

    points = np.concatenate([s[0] for s in spreads])
    weights = np.concatenate([w * s[1] for w, s in zip(mu.weights, spreads)])
    kept = float(weights.sum())
    positive = weights > 0
    approx = PathMeasure(
        paths=points[positive].reshape(-1, mu.T, mu.d),
        weights=weights[positive] / kept,
    )
    truncated = max(0.0, 1.0 - kept)
    w_budget, aw_budget = _quantization_budget(noise, h, radius_mult, p, mu.T, mu.d)
    logger.debug(
        f"smoothed {mu.n_atoms} atoms into {approx.n_atoms} cells "
        f"(step {h!r}, truncated mass {truncated:.3e}, W budget {w_budget:.3e})",
    )
    return SmoothedApprox(
        base=mu,
        noise=noise,
        approx=approx,
        p=p,
        grid_step=h,
        truncated_mass=truncated,
        budget_p=w_budget,
        budget_aw=aw_budget,
    )


def _noise_for(mu: PathMeasure, noise: NoiseModel) -> NoiseModel:
    if noise.dimension != mu.dim:
        return noise.replace(dimension=mu.dim)
    return noise


def smooth_pair(
    mu: PathMeasure,
    nu: PathMeasure,
    noise: NoiseModel,
    p: float,
    scheme: SmoothingScheme = SmoothingScheme(),
    *,
    threads: Optional[int] = None,
) -> Tuple[SmoothedApprox, SmoothedApprox]:
    """Smooth two measures on one shared grid."""
    check_compatible(mu, nu)
    noise = _noise_for(mu, noise)
    h = scheme.step_for(noise.sigma)
    return tuple(  # type: ignore
        convolve_quantized(
            m,
            noise,
            h,
            scheme.radius_mult,
            p=p,
            cell_cap=scheme.cell_cap,
            threads=threads,
        )
        for m in (mu, nu)
    )


def smooth_w(
    mu: PathMeasure,
    nu: PathMeasure,
    noise: NoiseModel,
    p: float,
    scheme: SmoothingScheme = SmoothingScheme(),
    *,
    threads: Optional[int] = None,
) -> Tuple[float, float]:
    """W_p between the smoothed measures, and the budget bounding the error."""
    left, right = smooth_pair(mu, nu, noise, p, scheme, threads=threads)
    if mu.dim == 1:
        value = wasserstein_1d(left.approx, right.approx, p)
    else:
        value, _ = wasserstein_p(left.approx, right.approx, p)
    return value, left.budget_p + right.budget_p


def smooth_aw(
    mu: PathMeasure,
    nu: PathMeasure,
    noise: NoiseModel,
    p: float,
    scheme: SmoothingScheme = SmoothingScheme(),
    *,
    threads: Optional[int] = None,
) -> Tuple[float, float]:
    """AW_p between the smoothed measures, and the practical per-stage grid charge.

    The charge is not a certified bound on the adapted error; see
    :attr:`SmoothedApprox.budget_aw`.
    """
    left, right = smooth_pair(mu, nu, noise, p, scheme, threads=threads)
    value = aw_value(left.approx, right.approx, p, threads=threads)
    return value, left.budget_aw + right.budget_aw


def smooth_tv(
    mu: PathMeasure,
    nu: PathMeasure,
    noise: NoiseModel,
    scheme: SmoothingScheme = SmoothingScheme(),
    *,
    threads: Optional[int] = None,
) -> Tuple[float, float]:
    """TV between the smoothed measures on their shared grid, and its budget."""
    left, right = smooth_pair(mu, nu, noise, 1.0, scheme, threads=threads)
    return tv_distance(left.approx, right.approx), left.tv_budget + right.tv_budget


def smoothed_tail_p(
    mu: PathMeasure,
    noise: NoiseModel,
    p: float,
    R: float,  # noqa: N803
) -> float:
    """Integral of |x|^p over {|x| >= R} under mu * xi_sigma.

    Exact for Gaussian noise, through the noncentral chi-square law of |x + sigma Z|^2.
    For compactly supported noise the bound sum_i w_i (|x_i| + sigma)^p over the
    atoms that can reach {|x| >= R} is returned.
    """
    noise = _noise_for(mu, noise)
    sigma, n = noise.sigma, noise.dimension
    norms = np.linalg.norm(mu.flat_paths, axis=1)
    if noise.kind == UNIFORM:
        reach = norms + sigma * noise.support_radius
        return float(np.dot(mu.weights[reach >= R], reach[reach >= R] ** p))

    total = 0.0
    for weight, norm in zip(mu.weights, norms):
        total += weight * sigma**p * _scaled_tail(n, p, (norm / sigma) ** 2, R / sigma)
    return float(total)


def _scaled_tail(n: int, p: float, nc: float, radius: float) -> float:
    """E[S^{p/2}; S >= radius^2] for S noncentral chi-square(n, nc)."""
    if nc == 0:
        if radius == 0:
            return gaussian_moment(n, p)
        return gaussian_tail_moment(n, p, radius)
    law = stats.ncx2(n, nc)
    lo = radius**2
    # the law is negligible beyond its mean plus 40 standard deviations
    hi = max(lo, n + nc + 40 * math.sqrt(2 * (n + 2 * nc))) + 1.0
    if lo >= hi:
        return 0.0
    return quad(
        lambda s: s ** (p / 2) * law.pdf(s),
        lo,
        hi,
        what="noncentral chi-square tail",
        points=[n + nc] if lo < n + nc < hi else None,
    )


def smoothed_moment_p(mu: PathMeasure, noise: NoiseModel, p: float) -> float:
    """M_p(mu * xi_sigma); exact for Gaussian noise, an upper bound otherwise."""
    return smoothed_tail_p(mu, noise, p, 0.0)


def modulus_standard_example(eps: float, delta: float, p: float = 1.0) -> float:
    """min(delta / eps, 2): the modulus of continuity of mu_eps, whatever p."""
    if delta <= 0 or eps == 0:
        # eps = 0 leaves a single prefix, whose modulus vanishes
        return 0.0
    return min(delta / eps, 2.0)


def _mixture_cdf(x: np.ndarray, means, weights, sigma: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)[..., None]
    z = (x - np.asarray(means)) / sigma
    return np.sum(np.asarray(weights) * special.ndtr(z), axis=-1)


def _mixture_quantiles(u: np.ndarray, means, weights, sigma: float) -> np.ndarray:
    """Vectorized bisection of a Gaussian mixture CDF."""
    lo = np.full_like(u, min(means) - 40 * sigma)
    hi = np.full_like(u, max(means) + 40 * sigma)
    for _ in range(100):
        mid = (lo + hi) / 2
        below = _mixture_cdf(mid, means, weights, sigma) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return (lo + hi) / 2


# trapezoid nodes in the Gaussian scale u = Phi(z): the quantile integrand is smooth
# in z, and the even nodes form the halved grid
_Z_GRID = np.linspace(-8.0, 8.0, 4097)
_U_GRID = special.ndtr(_Z_GRID)
_Z_WEIGHTS = np.exp(-(_Z_GRID**2) / 2)
_Z_WEIGHTS[[0, -1]] /= 2
_Z_WEIGHTS_HALVED = _Z_WEIGHTS[::2]


def _quantile_mean(values: np.ndarray) -> Tuple[float, float]:
    """The trapezoid mean of ``values`` on the z grid, and its halved-grid residual."""
    fine = float(np.dot(_Z_WEIGHTS, values) / _Z_WEIGHTS.sum())
    coarse = float(np.dot(_Z_WEIGHTS_HALVED, values[::2]) / _Z_WEIGHTS_HALVED.sum())
    return fine, abs(fine - coarse)


def mixture_wasserstein_p(
    left: Tuple[Tuple[float, ...], Tuple[float, ...]],
    right: Tuple[Tuple[float, ...], Tuple[float, ...]],
    sigma: float,
    p: float,
) -> float:
    """W_p^p between two 1-d Gaussian mixtures with common scale ``sigma``.

    ``left`` and ``right`` are (means, weights). For p = 1 the CDF gap is integrated
    adaptively; otherwise the quantile integral is taken with the trapezoid rule in
    the Gaussian scale, and halving the grid estimates the residual.
    """
    (lm, lw), (rm, rw) = left, right
    if p == 1:
        lo = min(min(lm), min(rm)) - 12 * sigma
        hi = max(max(lm), max(rm)) + 12 * sigma
        return quad(
            lambda x: float(
                abs(_mixture_cdf(x, lm, lw, sigma) - _mixture_cdf(x, rm, rw, sigma)),
            ),
            lo,
            hi,
            what="mixture CDF gap",
            points=sorted(set(lm) | set(rm)),
        )
    qa = _mixture_quantiles(_U_GRID, lm, lw, sigma)
    qb = _mixture_quantiles(_U_GRID, rm, rw, sigma)
    value, residual = _quantile_mean(np.abs(qa - qb) ** p)
    if residual > QUAD_TOL * max(1.0, value):
        raise QuadratureError(
            f"quantile integral of W_{p}^{p} left a residual estimate of "
            f"{residual:.3e} on a value of {value!r}",
        )
    return value


def standard_example_smooth_aw(eps: float, sigma: float, p: float = 1.0) -> float:
    """AW_p between the Gaussian smoothings of mu and mu_eps, by quadrature.

    The kernel of the smoothed mu does not depend on the first coordinate, so the
    optimal first-step coupling only has to match the first marginals:

        AW^p = W_p^p(N(0, s^2), (N(eps, s^2) + N(-eps, s^2)) / 2)
               + int W_p^p(K, c(y) N(1, s^2) + (1 - c(y)) N(-1, s^2)) dnu_1(y)

    with K = (N(1, s^2) + N(-1, s^2)) / 2, c(y) = expit(2 y eps / s^2) and nu_1 the
    first marginal of the smoothed mu_eps.
    """
    if eps < 0 or sigma <= 0:
        raise ValueError(f"need eps >= 0 and sigma > 0, got eps={eps}, sigma={sigma}")
    if eps == 0:
        return 0.0

    first = mixture_wasserstein_p(
        ((0.0,), (1.0,)),
        ((eps, -eps), (0.5, 0.5)),
        sigma,
        p,
    )

    def weight_on_up(y: float) -> float:
        return float(special.expit(2 * y * eps / sigma**2))

    def kernel_gap(y: float) -> float:
        c = weight_on_up(y)
        if p == 1:
            # the two mixtures share their components: W_1 = 2 |c - 1/2|
            return 2 * abs(c - 0.5)
        return mixture_wasserstein_p(
            ((1.0, -1.0), (0.5, 0.5)),
            ((1.0, -1.0), (c, 1 - c)),
            sigma,
            p,
        )

    def density(y: float) -> float:
        return 0.5 * (stats.norm.pdf(y, eps, sigma) + stats.norm.pdf(y, -eps, sigma))

    lo, hi = -eps - 12 * sigma, eps + 12 * sigma
    second = quad(
        lambda y: kernel_gap(y) * density(y),
        lo,
        hi,
        what="smoothed kernel gap",
        points=[-eps, 0.0, eps],
    )
    return (first + second) ** (1 / p)


def standard_example_bandwidth_bound(eps: float, sigma: float, p: float = 1.0) -> float:
    """Upper bound on AW_p(mu_eps, its Gaussian smoothing).

    Evaluates the cost of the coupling that sends each atom of mu_eps to its own
    Gaussian component at the first step and to the smoothed kernel at the second.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    m_p = gaussian_moment(1, p)
    # E|sigma Z - 2|^p: the far component of the smoothed kernel
    far = quad(
        lambda z: abs(sigma * z - 2.0) ** p * stats.norm.pdf(z),
        -40.0,
        40.0,
        what="far component moment",
        points=[2.0 / sigma] if 2.0 / sigma < 40 else None,
    )

    def second_stage(z: float) -> float:
        # atom (eps, 1) observed at y = eps + sigma z
        c = float(special.expit(2 * (eps + sigma * z) * eps / sigma**2))
        return (c * sigma**p * m_p + (1 - c) * far) * stats.norm.pdf(z)

    second = quad(second_stage, -40.0, 40.0, what="bandwidth second stage")
    return (sigma**p * m_p + second) ** (1 / p)


def fatou_lower_bound(ratio: float, p: float = 1.0) -> float:
    """Limit of the smoothed kernel gap as sigma -> 0 with eps / sigma = ``ratio``.

    This is the limit of the second term of :func:`standard_example_smooth_aw`,
    (2^p int |expit(2 u ratio) - 1/2| d(N(ratio, 1) + N(-ratio, 1))/2 (u))^{1/p}, and
    equals (2^{p - 1})^{1/p} when ``ratio`` is infinite.
    """
    if math.isinf(ratio):
        return (2 ** (p - 1)) ** (1 / p)
    if ratio <= 0:
        return 0.0

    def integrand(u: float) -> float:
        gap = abs(float(special.expit(2 * u * ratio)) - 0.5)
        density = 0.5 * (stats.norm.pdf(u, ratio, 1.0) + stats.norm.pdf(u, -ratio, 1.0))
        return gap * density

    value = quad(
        integrand,
        -ratio - 12,
        ratio + 12,
        what="fatou integrand",
        points=[0.0],
    )
    return (2**p * value) ** (1 / p)
