"""Downlink capacity through uplink-downlink duality.

The downlink problem is solved in its dual-uplink form: split the sum power
across the two dual users (closed-form KKT split), map the split to source
currents (forward transform), or recover the dual split from given currents
(reverse transform).  ZF precoding with two-channel water-filling and the
convex-hull capacity region are built on the same statistics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelPair
from .numerics import (
    SampledField,
    inner_product,
    integrate_product,
    norm_squared,
)
from .regions import RegionPolygon, convex_hull
from .uplink import region_ul, sum_capacity_ul

RHO_BAR_FLOOR = 1e-12
"Below this separability the KKT threshold is undefined (coincident users)."


class DpcOrder(enum.Enum):
    "Encoding order: which user's interference is pre-canceled first."

    USER2_FIRST = "2->1"
    USER1_FIRST = "1->2"


@dataclass(frozen=True)
class DualLink:
    """Two-user downlink scene reduced to what the duality formulas consume.

    snr_per_power holds the per-unit-power SNR coefficients
    c_k = A_u,k k0^2 eta^2 / (4 pi sigma_k^2); the downlink SNR of user k at
    allocated power x is c_k * x.
    """

    ch: ChannelPair
    snr_per_power: tuple[float, float]
    power: float

    def __post_init__(self):
        if not self.power > 0.0:
            raise ValueError("power budget must be positive")
        if min(self.snr_per_power) <= 0.0:
            raise ValueError("SNR coefficients must be positive")

    def snr_at(self, k: int, x: float) -> float:
        return self.snr_per_power[k] * x


@dataclass(frozen=True)
class DualPowerSplit:
    "Optimal dual-uplink power split with the KKT threshold diagnostics."

    p1: float
    p2: float
    budget: float
    xi: float
    branch: str

    @property
    def total(self) -> float:
        return self.p1 + self.p2


@dataclass(frozen=True)
class DownlinkRates:
    r1: float
    r2: float
    scheme: str

    @property
    def total(self) -> float:
        return self.r1 + self.r2


def su_capacity_dl(gamma_bar_dl: float, g: float) -> float:
    "Single-user downlink capacity log2(1 + gamma_bar * g); same form as uplink."
    if gamma_bar_dl < 0.0:
        raise ValueError("downlink SNR must be nonnegative")
    return math.log2(1.0 + gamma_bar_dl * g)


def mrt_current(h: SampledField, power: float) -> SampledField:
    "Source current aligned with the conjugate channel, carrying the given power."
    if power < 0.0:
        raise ValueError("power must be nonnegative")
    hh = norm_squared(h)
    if hh <= 0.0:
        raise ValueError("cannot build an MRT current from a zero field")
    return SampledField(h.grid, math.sqrt(power / hh) * np.conj(h.values))


def kkt_threshold(link: DualLink) -> float:
    """Threshold xi deciding the dual power split.

    Equal to (c1 g1 - c2 g2) / (c1 c2 g1 g2 rho_bar); undefined for
    rho_bar ~ 0, handled by the caller's coincident-user branch.
    """
    c1, c2 = link.snr_per_power
    g1, g2 = link.ch.g1, link.ch.g2
    rb = link.ch.rho_bar
    return (c1 * g1 - c2 * g2) / (c1 * c2 * g1 * g2 * rb)


def dual_power_allocation(link: DualLink) -> DualPowerSplit:
    """Closed-form KKT power split of the dual uplink problem.

    The unconstrained stationary point is P1 = (P + xi)/2, which meets the
    corner branches continuously at xi = +-P.  For coincident users (rho_bar
    below RHO_BAR_FLOOR) superposing both streams brings no gain and all
    power goes to the stronger single-user channel.
    """
    p = link.power
    if link.ch.rho_bar < RHO_BAR_FLOOR:
        c1g1 = link.snr_at(0, p) * link.ch.g1
        c2g2 = link.snr_at(1, p) * link.ch.g2
        if c1g1 >= c2g2:
            return DualPowerSplit(p1=p, p2=0.0, budget=p, xi=math.inf, branch="coincident-1")
        return DualPowerSplit(p1=0.0, p2=p, budget=p, xi=-math.inf, branch="coincident-2")
    xi = kkt_threshold(link)
    if xi >= p:
        return DualPowerSplit(p1=p, p2=0.0, budget=p, xi=xi, branch="all-to-1")
    if xi <= -p:
        return DualPowerSplit(p1=0.0, p2=p, budget=p, xi=xi, branch="all-to-2")
    return DualPowerSplit(
        p1=(p + xi) / 2.0, p2=(p - xi) / 2.0, budget=p, xi=xi, branch="interior"
    )


def dual_objective(link: DualLink, p1: float, p2: float) -> float:
    "Dual-uplink sum rate at an arbitrary feasible split."
    return sum_capacity_ul(link.snr_at(0, p1), link.snr_at(1, p2), link.ch)


def dpc_rates(link: DualLink, p1: float, p2: float, order: DpcOrder) -> DownlinkRates:
    """Per-user downlink rates under dirty-paper coding at a given split.

    Mirrors the dual uplink SIC rates with the opposite order: encoding
    2->1 downlink achieves the dual 1->2 uplink rates.
    """
    if p1 < 0.0 or p2 < 0.0:
        raise ValueError("allocated powers must be nonnegative")
    e1 = link.snr_at(0, p1) * link.ch.g1
    e2 = link.snr_at(1, p2) * link.ch.g2
    r2abs = abs(link.ch.rho) ** 2
    if order is DpcOrder.USER2_FIRST:
        r1 = math.log2(1.0 + e1 * (1.0 - e2 * r2abs / (1.0 + e2)))
        r2 = math.log2(1.0 + e2)
        return DownlinkRates(r1=r1, r2=r2, scheme="dpc-2->1")
    r1 = math.log2(1.0 + e1)
    r2 = math.log2(1.0 + e2 * (1.0 - e1 * r2abs / (1.0 + e1)))
    return DownlinkRates(r1=r1, r2=r2, scheme="dpc-1->2")


def sum_capacity_dl(link: DualLink) -> float:
    """Piecewise downlink sum capacity at the optimal dual power split.

    Single-user branches when the KKT threshold leaves the budget interval,
    otherwise the interior value with e_k = snr_k(P_k*) g_k.
    """
    split = dual_power_allocation(link)
    p = link.power
    if split.branch in ("all-to-1", "coincident-1"):
        return math.log2(1.0 + link.snr_at(0, p) * link.ch.g1)
    if split.branch in ("all-to-2", "coincident-2"):
        return math.log2(1.0 + link.snr_at(1, p) * link.ch.g2)
    e1 = link.snr_at(0, split.p1) * link.ch.g1
    e2 = link.snr_at(1, split.p2) * link.ch.g2
    return math.log2(1.0 + e1 + e2 + e1 * e2 * link.ch.rho_bar)


def water_fill_two(c1: float, c2: float, power: float) -> tuple[float, float]:
    """Closed-form water-filling over two parallel channels.

    Maximizes log2(1 + c1 P1) + log2(1 + c2 P2) under P1 + P2 = power.
    Degenerate channels (c_k = 0) receive power only if the other is also
    degenerate.
    """
    if power < 0.0:
        raise ValueError("power must be nonnegative")
    if c1 <= 0.0 and c2 <= 0.0:
        return power / 2.0, power / 2.0
    if c1 <= 0.0:
        return 0.0, power
    if c2 <= 0.0:
        return power, 0.0
    level = (power + 1.0 / c1 + 1.0 / c2) / 2.0
    if level >= max(1.0 / c1, 1.0 / c2):
        return level - 1.0 / c1, level - 1.0 / c2
    return (power, 0.0) if c1 >= c2 else (0.0, power)


def zf_precoding_dl(link: DualLink) -> DownlinkRates:
    """Zero-forcing precoding with water-filled powers.

    Effective per-unit-power gains are c_k g_k (1 - |rho|^2); at |rho| = 1 the
    projection annihilates both channels and the rates are zero.
    """
    rb = link.ch.rho_bar
    c1 = link.snr_per_power[0] * link.ch.g1 * rb
    c2 = link.snr_per_power[1] * link.ch.g2 * rb
    p1, p2 = water_fill_two(c1, c2, link.power)
    return DownlinkRates(
        r1=math.log2(1.0 + c1 * p1), r2=math.log2(1.0 + c2 * p2), scheme="zf"
    )


@dataclass(frozen=True)
class SourceCurrents:
    """Capacity-achieving currents as coefficients in span{H1hat*, H2hat*}.

    Keeping the span coefficients (rather than point samples) means the
    power-conservation identity holds to rounding on any grid; fields are
    materialized on demand.
    """

    h1hat: SampledField
    h2hat: SampledField
    coeff1: tuple[complex, complex]
    coeff2: tuple[complex, complex]
    p1: float
    p2: float

    def field1(self) -> SampledField:
        a, b = self.coeff1
        vals = a * np.conj(self.h1hat.values) + b * np.conj(self.h2hat.values)
        return SampledField(self.h1hat.grid, vals)

    def field2(self) -> SampledField:
        a, b = self.coeff2
        vals = a * np.conj(self.h1hat.values) + b * np.conj(self.h2hat.values)
        return SampledField(self.h1hat.grid, vals)

    def total_power(self) -> float:
        return norm_squared(self.field1()) + norm_squared(self.field2())


def currents_from_dual(
    p1: float,
    p2: float,
    h1hat: SampledField,
    h2hat: SampledField,
    order: DpcOrder = DpcOrder.USER2_FIRST,
) -> SourceCurrents:
    """Forward duality transform: dual power split to downlink source currents.

    For the 2->1 encoding order, the user-1 current is the normalized
    projection of H1hat* away from a P2-weighted share of H2hat*, and the
    user-2 current is a rescaled conjugate-matched beam.  Total current power
    equals p1 + p2 (checked by tests to grid rounding).
    """
    if p1 < 0.0 or p2 < 0.0:
        raise ValueError("allocated powers must be nonnegative")
    if order is DpcOrder.USER1_FIRST:
        swapped = currents_from_dual(p2, p1, h2hat, h1hat, DpcOrder.USER2_FIRST)
        return SourceCurrents(
            h1hat=h1hat,
            h2hat=h2hat,
            coeff1=(swapped.coeff2[1], swapped.coeff2[0]),
            coeff2=(swapped.coeff1[1], swapped.coeff1[0]),
            p1=p1,
            p2=p2,
        )
    h1 = norm_squared(h1hat)
    h2 = norm_squared(h2hat)
    if h1 <= 0.0 or h2 <= 0.0:
        raise ValueError("channel fields must have positive norm")
    q = inner_product(h1hat, h2hat)  # int H1hat* H2hat

    # J1 = sqrt(p1) (H1hat* - c H2hat*) / sqrt(d)
    c = p2 * q / (1.0 + p2 * h2)
    d = h1 - p2 * abs(q) ** 2 / (1.0 + p2 * h2)
    if p1 > 0.0:
        coeff1 = (math.sqrt(p1) / math.sqrt(d), -math.sqrt(p1) / math.sqrt(d) * c)
    else:
        coeff1 = (0.0 + 0.0j, 0.0 + 0.0j)

    # |int H2hat J1|^2 through the span coefficients; note
    # int H2hat conj(H1hat) equals q itself, not its conjugate.
    cross = coeff1[0] * q + coeff1[1] * h2
    x = abs(cross) ** 2

    # J2 = sqrt(p2) H2hat* sqrt(1 + x) / sqrt(h2)
    coeff2 = (0.0 + 0.0j, math.sqrt(p2) * math.sqrt(1.0 + x) / math.sqrt(h2))
    return SourceCurrents(
        h1hat=h1hat, h2hat=h2hat, coeff1=coeff1, coeff2=coeff2, p1=p1, p2=p2
    )


def rates_from_currents(
    currents: SourceCurrents, order: DpcOrder = DpcOrder.USER2_FIRST
) -> DownlinkRates:
    "Downlink DPC rates evaluated directly from current/channel integrals."
    j1 = currents.field1()
    j2 = currents.field2()
    h1hat, h2hat = currents.h1hat, currents.h2hat
    if order is DpcOrder.USER1_FIRST:
        h1hat, h2hat = h2hat, h1hat
        j1, j2 = j2, j1
    s1 = abs(integrate_product(h1hat, j1)) ** 2
    x21 = abs(integrate_product(h2hat, j1)) ** 2
    s2 = abs(integrate_product(h2hat, j2)) ** 2
    r_first = math.log2(1.0 + s1)
    r_second = math.log2(1.0 + s2 / (1.0 + x21))
    if order is DpcOrder.USER1_FIRST:
        return DownlinkRates(r1=r_second, r2=r_first, scheme="dpc-1->2")
    return DownlinkRates(r1=r_first, r2=r_second, scheme="dpc-2->1")


def dual_from_currents(
    j1: SampledField,
    j2: SampledField,
    h1hat: SampledField,
    h2hat: SampledField,
) -> DualPowerSplit:
    """Reverse duality transform: currents to the dual-uplink power split.

    The recovered (P1, P2) achieve the downlink rates in the dual uplink and
    never exceed the total current power (Cauchy-Schwarz).
    """
    h1 = norm_squared(h1hat)
    h2 = norm_squared(h2hat)
    if h2 <= 0.0 or h1 <= 0.0:
        raise ValueError("channel fields must have positive norm")
    q = inner_product(h1hat, h2hat)
    c21 = abs(integrate_product(h2hat, j1)) ** 2
    p2 = abs(integrate_product(h2hat, j2)) ** 2 / (h2 * (1.0 + c21))
    denom = h1 - p2 * abs(q) ** 2 / (1.0 + p2 * h2)
    p1 = abs(integrate_product(h1hat, j1)) ** 2 / denom
    budget = norm_squared(j1) + norm_squared(j2)
    return DualPowerSplit(p1=p1, p2=p2, budget=budget, xi=math.nan, branch="from-currents")


def region_dl(link: DualLink, n_splits: int = 201) -> RegionPolygon:
    """Downlink capacity region: convex hull of the dual-uplink pentagons.

    Sweeps n_splits evenly spaced power splits (P1, P - P1); each split
    contributes its dual pentagon's vertices, processed in split order before
    hulling so the output is deterministic.
    """
    if n_splits < 2:
        raise ValueError("need at least 2 power splits")
    pts = []
    for i in range(n_splits):
        p1 = link.power * i / (n_splits - 1)
        p2 = link.power - p1
        pentagon = region_ul(link.snr_at(0, p1), link.snr_at(1, p2), link.ch)
        pts.extend(pentagon.vertices)
    return RegionPolygon(vertices=tuple(convex_hull(pts)))


def dual_region(link: DualLink, p1: float, p2: float) -> RegionPolygon:
    "Dual-uplink pentagon for one explicit power split."
    return region_ul(link.snr_at(0, p1), link.snr_at(1, p2), link.ch)
