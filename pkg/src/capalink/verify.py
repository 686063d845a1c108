"""Reusable machine checks behind the `verify` CLI and the acceptance tests.

Each check returns measured deviations (not booleans) so callers can report
against their own tolerances.
"""

from __future__ import annotations

import math

import numpy as np

from . import channel, scenario
from .channel import ChannelPair
from .downlink import (
    DpcOrder,
    DualLink,
    currents_from_dual,
    dpc_rates,
    dual_from_currents,
    dual_power_allocation,
    rates_from_currents,
)
from .geometry import PlanarAperture
from .numerics import inner_product, norm_squared, sample_noise_batch, uniform_grid
from .uplink import MuRoot, mrc_detector, simulate_table1, whitening_build


def _planar_or_raise(scene) -> PlanarAperture:
    if not isinstance(scene.aperture, PlanarAperture):
        raise scenario.SceneError("this check needs a planar aperture")
    return scene.aperture


def grid_fields(scene, resolution=None):
    "Channel responses of both users sampled on a uniform aperture grid."
    ap = _planar_or_raise(scene)
    nx, nz = resolution or scene.grid_resolution
    grid = uniform_grid(ap, nx, nz)
    return tuple(channel.sample_kernel(scene.wavelength, u, grid) for u in scene.users)


def whitening_covariance_check(
    scene, seed: int = 0, draws: int = 100_000, resolution=(4, 4)
) -> float:
    """Monte-Carlo covariance of the whitened interference-plus-noise field.

    Draws Z = sqrt(snr1) G1 s1 + N (unit noise intensity), whitens it, and
    compares the empirical covariance against the white target diag(1/w).
    Returns the worst entry deviation in standard-error units.
    """
    g1_field = grid_fields(scene, resolution)[0]
    grid = g1_field.grid
    snr1 = scene.ul_snr_linear[0]
    w_op = whitening_build(g1_field, snr1)
    mu1 = w_op.mu1

    rng = np.random.default_rng(seed)
    noise = sample_noise_batch(grid, 1.0, seed + 1, draws)
    s1 = (rng.standard_normal(draws) + 1j * rng.standard_normal(draws)) / math.sqrt(2.0)
    z = math.sqrt(snr1) * np.outer(s1, g1_field.values) + noise
    # vectorized whitening of all draws at once
    proj = z @ (grid.weights * np.conj(g1_field.values))
    z_w = z + mu1 * np.outer(proj, g1_field.values)

    emp = (z_w.conj().T @ z_w) / draws
    target = np.diag(1.0 / grid.weights)
    diag = np.sqrt(np.diag(target))
    se = np.outer(diag, diag) / math.sqrt(draws)
    return float(np.max(np.abs(emp - target) / se))


def projected_noise_variance_check(
    scene, seed: int = 0, draws: int = 100_000, sigma2: float = 1.0, resolution=(4, 4)
) -> float:
    """Relative error of Var(<V, N>) against sigma2 for a unit-norm detector."""
    g1_field = grid_fields(scene, resolution)[0]
    detector = mrc_detector(g1_field)
    if abs(inner_product(detector, detector) - 1.0) > 1e-12:
        raise RuntimeError("detector failed to normalize on this grid")
    noise = sample_noise_batch(g1_field.grid, sigma2, seed, draws)
    proj = noise @ (g1_field.grid.weights * np.conj(detector.values))
    var = float(np.mean(np.abs(proj) ** 2))
    return abs(var - sigma2) / sigma2


def run_table1(scene, resolution=None, seed: int = 0):
    "Scene-level entry to the discretized SIC pipeline (order 2->1)."
    g1_field, g2_field = grid_fields(scene, resolution)
    s1, s2 = scene.ul_snr_linear
    return simulate_table1(
        g1_field, g2_field, s1, s2, seed=seed, wavelength=scene.wavelength.lam
    )


def whitening_root_invariance(scene, resolution=(60, 60)) -> float:
    "Relative gap of the pipeline SNR for user 2 across both mu roots."
    g1_field, g2_field = grid_fields(scene, resolution)
    s1, s2 = scene.ul_snr_linear
    a = simulate_table1(g1_field, g2_field, s1, s2, root=MuRoot.VANISHING)
    b = simulate_table1(g1_field, g2_field, s1, s2, root=MuRoot.ALTERNATE)
    return abs(a.gamma2 - b.gamma2) / a.gamma2


def table1_closed_form_gap(scene, resolution=None) -> dict:
    """Discretized SIC pipeline vs the closed-form post-whitening SNR.

    The closed form uses the arctan gains and the adaptive-oracle correlation,
    so the gap measures pure grid error of the operator pipeline.
    """
    ap = _planar_or_raise(scene)
    g1_field, g2_field = grid_fields(scene, resolution)
    s1, s2 = scene.ul_snr_linear
    res = simulate_table1(
        g1_field, g2_field, s1, s2, wavelength=scene.wavelength.lam
    )
    g1 = channel.gain_planar(ap, scene.users[0])
    g2 = channel.gain_planar(ap, scene.users[1])
    rho = channel.correlation_planar_oracle(
        ap, scene.users[0], scene.users[1], scene.wavelength
    )
    r2 = min(abs(rho), 1.0) ** 2
    gamma2_closed = s2 * g2 * (1.0 - s1 * g1 * r2 / (1.0 + s1 * g1))
    gamma1_closed = s1 * g1
    return {
        "gamma1_pipeline": res.gamma1,
        "gamma2_pipeline": res.gamma2,
        "gamma1_closed": gamma1_closed,
        "gamma2_closed": gamma2_closed,
        "gamma1_gap": abs(res.gamma1 - gamma1_closed) / gamma1_closed,
        "gamma2_gap": abs(res.gamma2 - gamma2_closed) / gamma2_closed,
        "residual_projection": res.residual_projection,
    }


def duality_round_trip(scene, seed: int = 0, resolution=(48, 48)) -> dict:
    """Forward/backward duality transform on grid-sampled channels.

    Runs at the scene's optimal dual split: builds the capacity-achieving
    currents, checks their total power, re-derives the dual split from the
    currents, and compares the rates from current integrals against the
    closed forms evaluated with the same grid statistics.
    """
    g1_field, g2_field = grid_fields(scene, resolution)
    c1 = scene.snr_coefficient(0)
    c2 = scene.snr_coefficient(1)
    h1hat = g1_field.scaled(math.sqrt(c1))
    h2hat = g2_field.scaled(math.sqrt(c2))

    g1g = norm_squared(g1_field)
    g2g = norm_squared(g2_field)
    rho_g = inner_product(g1_field, g2_field) / math.sqrt(g1g * g2g)
    if abs(rho_g) > 1.0:
        rho_g /= abs(rho_g)
    link = DualLink(
        ch=ChannelPair(g1=g1g, g2=g2g, rho=rho_g),
        snr_per_power=(c1, c2),
        power=scene.downlink_power,
    )
    split = dual_power_allocation(link)
    # exercise an interior point as well when the KKT split is a corner
    p1, p2 = split.p1, split.p2
    if p1 == 0.0 or p2 == 0.0:
        rng = np.random.default_rng(seed)
        frac = rng.uniform(0.2, 0.8)
        p1, p2 = frac * link.power, (1.0 - frac) * link.power

    currents = currents_from_dual(p1, p2, h1hat, h2hat)
    total = currents.total_power()
    sum_power_gap = abs(total - (p1 + p2)) / (p1 + p2)

    recovered = dual_from_currents(
        currents.field1(), currents.field2(), h1hat, h2hat
    )
    power_gap = max(
        abs(recovered.p1 - p1) / max(p1, 1e-300),
        abs(recovered.p2 - p2) / max(p2, 1e-300),
    )

    from_currents = rates_from_currents(currents, DpcOrder.USER2_FIRST)
    closed = dpc_rates(link, p1, p2, DpcOrder.USER2_FIRST)
    rate_gap = max(
        abs(from_currents.r1 - closed.r1) / max(closed.r1, 1e-12),
        abs(from_currents.r2 - closed.r2) / max(closed.r2, 1e-12),
    )
    return {
        "power_gap": power_gap,
        "sum_power_gap": sum_power_gap,
        "rate_gap": rate_gap,
        "split": (p1, p2),
    }
