"""Line-of-sight channel kernel and the (g1, g2, rho) sufficient statistics.

Every capacity formula downstream consumes only the per-user channel gains
g_k = int |G_k|^2 and the complex correlation factor
rho = int G_1* G_2 / sqrt(g1 g2).  This module provides the closed forms for
planar, linear, and discrete apertures, plus grid/oracle routes to the same
quantities for cross-checking.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    APERTURE_NORMAL,
    DiscreteAperture,
    LinearAperture,
    PlanarAperture,
    UserPlacement,
    Wavelength,
    element_centers,
    user_position,
)
from .numerics import (
    ApertureGrid,
    ChebyshevRule,
    SampledField,
    adaptive_integrate_2d,
    chebyshev_nodes,
)

log = logging.getLogger(__name__)

# Correlation estimates are normalized so that Cauchy-Schwarz pins |rho| at
# or below 1 up to float rounding; overshoot up to this slack is clamped with
# a warning, anything beyond signals a broken quadrature configuration.
RHO_CLAMP_SLACK = 1e-6

PLANAR_GAIN_BOUND = 0.5
"Energy-conservation ceiling for any planar aperture."


class CorrelationOverflowError(ValueError):
    "Quadrature produced |rho| too far above 1; raise the rule order."


@dataclass(frozen=True)
class ChannelPair:
    "Sufficient statistics of a two-user channel: gains and correlation."

    g1: float
    g2: float
    rho: complex

    def __post_init__(self):
        if not (self.g1 > 0.0 and self.g2 > 0.0):
            raise ValueError("channel gains must be positive")
        if abs(self.rho) > 1.0 + 1e-12:
            raise ValueError(f"|rho| = {abs(self.rho)} exceeds 1")

    @property
    def rho_bar(self) -> float:
        "Spatial separability 1 - |rho|^2, in [0, 1]."
        return max(0.0, 1.0 - abs(self.rho) ** 2)


def kernel_Q(wl: Wavelength, p: UserPlacement, x, z):
    """Aperture-plane channel kernel at (x, 0, z) for the given user.

    Q(x, z) = sqrt(r Psi) exp(-j k0 sqrt(D)) / (sqrt(4 pi) D^(3/4)) with
    D = x^2 + z^2 - 2 r (Phi x + Theta z) + r^2.  Vectorized over x, z.
    """
    r = p.range_m
    D = x**2 + z**2 - 2.0 * r * (p.cos_x * x + p.cos_z * z) + r**2
    if np.any(D <= 0.0):
        raise ValueError("evaluation point coincides with the user position")
    return (
        math.sqrt(r * p.cos_front)
        * np.exp(-1j * wl.k0 * np.sqrt(D))
        / (math.sqrt(4.0 * math.pi) * D**0.75)
    )


def kernel_at_points(wl: Wavelength, p: UserPlacement, points: np.ndarray) -> np.ndarray:
    """General-position kernel G(r) for points of shape (N, 3).

    Same quantity as kernel_Q but valid off the y = 0 plane; the
    projected-aperture factor uses the fixed normal e = (0, 1, 0).
    """
    s = user_position(p)
    diff = s[None, :] - points
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist <= 0.0):
        raise ValueError("evaluation point coincides with the user position")
    proj = np.abs(diff @ APERTURE_NORMAL) / dist
    return np.exp(-1j * wl.k0 * dist) / (math.sqrt(4.0 * math.pi) * dist) * np.sqrt(proj)


def sample_kernel(wl: Wavelength, p: UserPlacement, grid: ApertureGrid) -> SampledField:
    "Channel response G_k sampled on an aperture grid."
    return SampledField(grid=grid, values=kernel_at_points(wl, p, grid.points))


def gain_planar(a: PlanarAperture, p: UserPlacement) -> float:
    """Closed-form channel gain for a planar aperture.

    (1/4 pi) times the four arctan terms over {L_x/2r +- Phi} x {L_z/2r +- Theta};
    always below the 1/2 energy-conservation bound.
    """
    r, psi = p.range_m, p.cos_front
    total = 0.0
    for x in (a.length_x / (2.0 * r) + p.cos_x, a.length_x / (2.0 * r) - p.cos_x):
        for z in (a.length_z / (2.0 * r) + p.cos_z, a.length_z / (2.0 * r) - p.cos_z):
            arg = (x * z / psi) / math.sqrt(psi**2 + x**2 + z**2)
            if not math.isfinite(arg):
                raise ValueError("gain formula produced a non-finite arctan argument")
            total += math.atan(arg)
    gain = total / (4.0 * math.pi)
    if not 0.0 < gain < PLANAR_GAIN_BOUND:
        raise ValueError(f"gain {gain} escaped the (0, 1/2) energy bound")
    return gain


def gain_linear(a: LinearAperture, p: UserPlacement) -> float:
    "Closed-form channel gain for a thin linear aperture along z."
    if not a.is_thin:
        log.warning(
            "linear-aperture gain assumes length_x << length_z; got %.3g x %.3g",
            a.length_x,
            a.length_z,
        )
    r, lz = p.range_m, a.length_z
    th = p.cos_z
    rho_geom = (lz - 2.0 * r * th) / math.sqrt(lz**2 - 4.0 * r * th * lz + 4.0 * r**2)
    rho_geom += (lz + 2.0 * r * th) / math.sqrt(lz**2 + 4.0 * r * th * lz + 4.0 * r**2)
    return a.length_x * math.sin(p.phi) * rho_geom / (4.0 * math.pi * r * math.sin(p.theta))


def gain_spda(a: DiscreteAperture, p: UserPlacement, wl: Wavelength) -> float:
    "Exact discrete-array gain: element_area * sum over elements of |Q|^2."
    pts = element_centers(a)
    q = kernel_Q(wl, p, pts[:, 0], pts[:, 2])
    return float(a.element_area * np.sum(np.abs(q) ** 2))


def clamp_correlation(rho: complex, where: str, slack: float = RHO_CLAMP_SLACK) -> complex:
    "Clamp |rho| in (1, 1+slack] to exactly 1; reject anything beyond."
    mag = abs(rho)
    if mag <= 1.0:
        return rho
    if mag <= 1.0 + slack:
        log.warning(
            "%s produced |rho| = %.8f > 1 (quadrature overshoot); clamping to 1",
            where,
            mag,
        )
        return rho / mag
    raise CorrelationOverflowError(
        f"{where} produced |rho| = {mag:.6f}, beyond the clamp slack {slack}; "
        "increase the quadrature order"
    )


def correlation_planar(
    a: PlanarAperture,
    p1: UserPlacement,
    p2: UserPlacement,
    wl: Wavelength,
    rule: ChebyshevRule | int = 20,
) -> complex:
    """Channel correlation factor for a planar aperture via the Chebyshev rule.

    The cross integral int Q_1* Q_2 and the two gain integrals are all
    approximated with the same tensor-product rule before forming
    rho = cross / sqrt(g1 g2), so the leading quadrature error cancels and
    Cauchy-Schwarz keeps |rho| <= 1 at any order.
    """
    if isinstance(rule, int):
        rule = chebyshev_nodes(rule)
    x = (a.length_x / 2.0 * rule.nodes)[:, None]
    z = (a.length_z / 2.0 * rule.nodes)[None, :]
    w = rule.sqrt_weights
    weights = w[:, None] * w[None, :]
    q1 = kernel_Q(wl, p1, x, z)
    q2 = kernel_Q(wl, p2, x, z)
    cross = np.sum(weights * np.conj(q1) * q2)
    g1 = np.sum(weights * np.abs(q1) ** 2)
    g2 = np.sum(weights * np.abs(q2) ** 2)
    return clamp_correlation(complex(cross / math.sqrt(g1 * g2)), "correlation_planar")


def correlation_spda(
    a: DiscreteAperture, p1: UserPlacement, p2: UserPlacement, wl: Wavelength
) -> complex:
    """Correlation factor for a discrete array (exact finite sum).

    Normalized by the discrete-array gains so Cauchy-Schwarz pins |rho| <= 1
    up to float rounding.
    """
    pts = element_centers(a)
    q1 = kernel_Q(wl, p1, pts[:, 0], pts[:, 2])
    q2 = kernel_Q(wl, p2, pts[:, 0], pts[:, 2])
    g1 = a.element_area * np.sum(np.abs(q1) ** 2)
    g2 = a.element_area * np.sum(np.abs(q2) ** 2)
    cross = a.element_area * np.sum(np.conj(q1) * q2)
    return clamp_correlation(complex(cross / math.sqrt(g1 * g2)), "correlation_spda")


def channel_pair_planar(
    a: PlanarAperture,
    p1: UserPlacement,
    p2: UserPlacement,
    wl: Wavelength,
    rule: ChebyshevRule | int = 20,
) -> ChannelPair:
    return ChannelPair(
        g1=gain_planar(a, p1),
        g2=gain_planar(a, p2),
        rho=correlation_planar(a, p1, p2, wl, rule),
    )


def channel_pair_spda(
    a: DiscreteAperture, p1: UserPlacement, p2: UserPlacement, wl: Wavelength
) -> ChannelPair:
    return ChannelPair(
        g1=gain_spda(a, p1, wl),
        g2=gain_spda(a, p2, wl),
        rho=correlation_spda(a, p1, p2, wl),
    )


def _aperture_bounds(a: PlanarAperture):
    return (
        (-a.length_x / 2.0, a.length_x / 2.0),
        (-a.length_z / 2.0, a.length_z / 2.0),
    )


def gain_planar_oracle(
    a: PlanarAperture, p: UserPlacement, wl: Wavelength, rel_tol: float = 1e-8
) -> float:
    "Brute-force channel gain: adaptive integration of |Q|^2 over the aperture."

    def integrand(x, z):
        return np.abs(kernel_Q(wl, p, x, z)) ** 2

    return adaptive_integrate_2d(integrand, _aperture_bounds(a), rel_tol).real


def correlation_planar_oracle(
    a: PlanarAperture,
    p1: UserPlacement,
    p2: UserPlacement,
    wl: Wavelength,
    rel_tol: float = 1e-8,
) -> complex:
    "Brute-force correlation factor via adaptive integration; not clamped."

    def integrand(x, z):
        return np.conj(kernel_Q(wl, p1, x, z)) * kernel_Q(wl, p2, x, z)

    cross = adaptive_integrate_2d(integrand, _aperture_bounds(a), rel_tol)
    g1 = gain_planar_oracle(a, p1, wl, rel_tol)
    g2 = gain_planar_oracle(a, p2, wl, rel_tol)
    return cross / math.sqrt(g1 * g2)


def transmit_snr(
    rx_area: float, current_mag2: float, sigma2: float, k0: float, eta: float
) -> float:
    "Uplink transmit SNR: A_u^2 |J|^2 k0^2 eta^2 / (4 pi sigma^2)."
    if min(rx_area, current_mag2, sigma2) <= 0.0:
        raise ValueError("transmit_snr arguments must be positive")
    return rx_area**2 * current_mag2 * k0**2 * eta**2 / (4.0 * math.pi * sigma2)


def downlink_snr_coefficient(rx_area: float, sigma2: float, k0: float, eta: float) -> float:
    """Per-unit-power downlink SNR coefficient c_k = A_u k0^2 eta^2 / (4 pi sigma^2).

    The downlink SNR at allocated power x is c_k * x.
    """
    if min(rx_area, sigma2) <= 0.0:
        raise ValueError("downlink_snr_coefficient arguments must be positive")
    return rx_area * k0**2 * eta**2 / (4.0 * math.pi * sigma2)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)
