"""Quadrature rules, the adaptive integration oracle, and aperture grids.

Three layers live here.  Chebyshev-Gauss rules evaluate the closed-form
correlation sums.  An adaptive Gauss-Kronrod integrator acts as the
brute-force oracle every closed form is checked against.  Cell-centered
aperture grids with quadrature weights carry the discretized detector /
current / noise fields used by the operator pipelines.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .geometry import PlanarAperture

# Gauss-Kronrod 7-15 pair on [-1, 1].  Odd-indexed Kronrod nodes are the
# embedded Gauss nodes.
_KRONROD_NODES = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0, 0.207784955007898, 0.405845151377397,
    0.586087235467691, 0.741531185599394, 0.864864423359769,
    0.949107912342759, 0.991455371120813,
])
_KRONROD_WEIGHTS = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728, 0.204432940075298,
    0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529,
])
_GAUSS_WEIGHTS = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469, 0.381830050505119, 0.279705391489277,
    0.129484966168870,
])


class NonConvergenceError(RuntimeError):
    "Raised when the adaptive oracle exhausts its panel budget."


@dataclass(frozen=True)
class ChebyshevRule:
    """First-kind Chebyshev-Gauss nodes cos((2j-1) pi / (2n)), j = 1..n.

    The companion weight pi/n together with the sqrt(1 - psi^2) factor turns
    the rule into an open quadrature for plain (unweighted) integrals.
    """

    order: int
    nodes: np.ndarray

    @property
    def sqrt_weights(self) -> np.ndarray:
        "sqrt(1 - psi_j^2) factors applied when integrating unweighted f."
        return np.sqrt(1.0 - self.nodes**2)


def chebyshev_nodes(n: int) -> ChebyshevRule:
    "Build the order-n Chebyshev-Gauss rule."
    if n < 1:
        raise ValueError(f"quadrature order must be >= 1, got {n}")
    j = np.arange(1, n + 1)
    nodes = np.cos((2 * j - 1) * math.pi / (2 * n))
    nodes.setflags(write=False)
    return ChebyshevRule(order=n, nodes=nodes)


def cg_integrate_1d(f, half_width: float, rule: ChebyshevRule) -> complex:
    """Integrate f over [-half_width, half_width] with the Chebyshev rule.

    Evaluates (pi a / n) * sum_j sqrt(1 - psi_j^2) f(a psi_j).  The integrand
    must be vectorized over a numpy array of abscissae.
    """
    x = half_width * rule.nodes
    vals = np.asarray(f(x))
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand returned non-finite values")
    s = np.sum(rule.sqrt_weights * vals)
    return complex(math.pi * half_width / rule.order * s)


def cg_integrate_2d(f, half_x: float, half_z: float, rule: ChebyshevRule) -> complex:
    """Tensor-product Chebyshev rule over [-half_x, half_x] x [-half_z, half_z].

    f(x, z) must broadcast over a (n, 1) x-column and (1, n) z-row.
    """
    n = rule.order
    x = (half_x * rule.nodes)[:, None]
    z = (half_z * rule.nodes)[None, :]
    vals = np.asarray(f(x, z))
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand returned non-finite values")
    w = rule.sqrt_weights
    s = np.sum(w[:, None] * w[None, :] * vals)
    return complex((math.pi**2 * half_x * half_z) / n**2 * s)


def _gk_panel(f, a: float, b: float):
    "One Gauss-Kronrod 7-15 panel: returns (kronrod_value, error_estimate)."
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = mid + half * _KRONROD_NODES
    vals = np.asarray(f(x))
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"integrand returned non-finite values on [{a}, {b}]")
    k = half * np.sum(_KRONROD_WEIGHTS * vals)
    g = half * np.sum(_GAUSS_WEIGHTS * vals[1::2])
    return complex(k), abs(k - g)


def adaptive_integrate_1d(
    f,
    a: float,
    b: float,
    rel_tol: float = 1e-8,
    abs_floor: float = 1e-14,
    max_panels: int = 4096,
) -> complex:
    """Adaptive Gauss-Kronrod integration of a (complex) vectorized integrand.

    Panels are bisected worst-error first until the summed error estimate
    drops below max(rel_tol * |integral|, abs_floor).
    """
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    val, err = _gk_panel(f, a, b)
    # heap entries: (-error, tiebreak, a, b, value)
    heap = [(-err, 0, a, b, val)]
    total_val, total_err = val, err
    count = 1
    tiebreak = 1
    while total_err > max(rel_tol * abs(total_val), abs_floor):
        if count >= max_panels:
            raise NonConvergenceError(
                f"adaptive integration did not converge within {max_panels} panels "
                f"(error estimate {total_err:.3e}, value {abs(total_val):.3e})"
            )
        neg_err, _, pa, pb, pval = heapq.heappop(heap)
        mid = 0.5 * (pa + pb)
        lval, lerr = _gk_panel(f, pa, mid)
        rval, rerr = _gk_panel(f, mid, pb)
        total_val += lval + rval - pval
        total_err += lerr + rerr + neg_err  # neg_err == -old_err
        heapq.heappush(heap, (-lerr, tiebreak, pa, mid, lval))
        heapq.heappush(heap, (-rerr, tiebreak + 1, mid, pb, rval))
        tiebreak += 2
        count += 1
    return total_val


def adaptive_integrate_2d(
    f,
    bounds,
    rel_tol: float = 1e-8,
    abs_floor: float = 1e-14,
) -> complex:
    """Nested adaptive integration of f(x, z) over a rectangle.

    bounds is ((x_lo, x_hi), (z_lo, z_hi)).  The inner x-integral runs at a
    tightened tolerance so its error does not dominate the outer estimate.
    f must be vectorized in x for scalar z.
    """
    (x_lo, x_hi), (z_lo, z_hi) = bounds
    inner_tol = rel_tol / 10.0

    def outer(zs):
        zs = np.atleast_1d(zs)
        out = np.empty(zs.shape, dtype=complex)
        for i, z in enumerate(zs):
            out[i] = adaptive_integrate_1d(
                lambda x: f(x, z), x_lo, x_hi, inner_tol, abs_floor
            )
        return out

    return adaptive_integrate_1d(outer, z_lo, z_hi, rel_tol, abs_floor)


@dataclass(frozen=True)
class ApertureGrid:
    "Discretized aperture: sample points (N, 3) with quadrature weights (N,)."

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("points and weights must have matching lengths")
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class SampledField:
    "Complex field values sampled on an aperture grid, one value per point."

    grid: ApertureGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.size,):
            raise ValueError(
                f"field has {self.values.shape} values for a grid of size {self.grid.size}"
            )
        self.values.setflags(write=False)

    def scaled(self, factor: complex) -> "SampledField":
        return SampledField(self.grid, np.asarray(factor * self.values))

    def plus(self, other: "SampledField", factor: complex = 1.0) -> "SampledField":
        _require_same_grid(self, other)
        return SampledField(self.grid, self.values + factor * other.values)


def uniform_grid(a: PlanarAperture, n_x: int, n_z: int) -> ApertureGrid:
    "Cell-centered n_x by n_z grid on the aperture; weights sum to its area."
    if n_x < 1 or n_z < 1:
        raise ValueError("grid resolutions must be >= 1")
    xs = (np.arange(n_x) + 0.5) / n_x * a.length_x - a.length_x / 2.0
    zs = (np.arange(n_z) + 0.5) / n_z * a.length_z - a.length_z / 2.0
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    pts = np.column_stack([gx.ravel(), np.zeros(n_x * n_z), gz.ravel()])
    w = np.full(n_x * n_z, a.area / (n_x * n_z))
    return ApertureGrid(points=pts, weights=w)


def _require_same_grid(u: SampledField, v: SampledField):
    if u.grid is v.grid:
        return
    if u.grid.points.shape == v.grid.points.shape and np.array_equal(
        u.grid.points, v.grid.points
    ):
        return
    raise ValueError("fields are sampled on different grids")


def inner_product(u: SampledField, v: SampledField) -> complex:
    "Discrete <u, v> = sum_i w_i conj(u_i) v_i, approximating int u* v."
    _require_same_grid(u, v)
    return complex(np.sum(u.grid.weights * np.conj(u.values) * v.values))


def integrate_product(u: SampledField, v: SampledField) -> complex:
    "Plain (unconjugated) discrete integral sum_i w_i u_i v_i."
    _require_same_grid(u, v)
    return complex(np.sum(u.grid.weights * u.values * v.values))


def norm_squared(u: SampledField) -> float:
    return inner_product(u, u).real


def sample_noise_field(grid: ApertureGrid, sigma2: float, seed: int) -> SampledField:
    """Draw one realization of the white aperture noise field.

    Per-point variance is sigma2 / weight_i, the discrete stand-in for the
    Dirac-delta covariance: with it, Var(<V, N>) = sigma2 * <V, V> holds
    exactly on the grid.
    """
    if not sigma2 > 0.0:
        raise ValueError("sigma2 must be positive")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(sigma2 / (2.0 * grid.weights))
    vals = scale * (rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size))
    return SampledField(grid=grid, values=vals)


def sample_noise_batch(
    grid: ApertureGrid, sigma2: float, seed: int, draws: int
) -> np.ndarray:
    "Matrix of noise realizations, shape (draws, N); rows follow sample_noise_field."
    if not sigma2 > 0.0:
        raise ValueError("sigma2 must be positive")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(sigma2 / (2.0 * grid.weights))
    return scale * (
        rng.standard_normal((draws, grid.size))
        + 1j * rng.standard_normal((draws, grid.size))
    )
