"""Mutual-coupling matrix model for discrete arrays.

Coupling distorts the element-domain channel vector as h -> C h with
C = (z_a + z_t) (Z + z_t I)^(-1), where Z is the mutual impedance matrix.
The diagonal of Z is set to zero: self-impedance is absorbed into z_a, which
keeps (Z + z_t I) well conditioned at the default 50-ohm termination.  The
distorted vectors feed the same (g, rho) statistics and capacity formulas as
the uncoupled channel.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelPair, clamp_correlation, kernel_Q
from .geometry import DiscreteAperture, UserPlacement, Wavelength, element_centers

log = logging.getLogger(__name__)

CONDITION_REPORT_THRESHOLD = 1e8


@dataclass(frozen=True)
class CouplingModel:
    "Impedance parameters of the coupling matrix."

    z_antenna: float = 50.0
    z_termination: float = 50.0
    impedance_scale: float = 0.1

    def __post_init__(self):
        if self.z_termination <= 0.0:
            raise ValueError("termination impedance must be positive")


def mutual_impedance(
    a: DiscreteAperture, wl: Wavelength, model: CouplingModel
) -> np.ndarray:
    "Mutual impedance matrix scale * exp(-j k0 d_ij) / d_ij^2, zero diagonal."
    pts = element_centers(a)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(dist, 1.0)  # placeholder; diagonal overwritten below
    z = model.impedance_scale * np.exp(-1j * wl.k0 * dist) / dist**2
    np.fill_diagonal(z, 0.0)
    return z


def coupling_matrix(
    a: DiscreteAperture, wl: Wavelength, model: CouplingModel | None = None
) -> np.ndarray:
    "Dense coupling matrix C = (z_a + z_t) (Z + z_t I)^(-1)."
    model = model or CouplingModel()
    z = mutual_impedance(a, wl, model)
    system = z + model.z_termination * np.eye(a.count)
    cond = np.linalg.cond(system)
    if not np.isfinite(cond):
        raise np.linalg.LinAlgError(
            f"coupling system matrix is singular (condition estimate {cond})"
        )
    if cond > CONDITION_REPORT_THRESHOLD:
        log.warning("coupling system is ill conditioned: cond = %.3e", cond)
    return (model.z_antenna + model.z_termination) * np.linalg.inv(system)


def element_channel(a: DiscreteAperture, p: UserPlacement, wl: Wavelength) -> np.ndarray:
    "Uncoupled element-domain channel vector sqrt(A_s) Q(element centers)."
    pts = element_centers(a)
    return math.sqrt(a.element_area) * kernel_Q(wl, p, pts[:, 0], pts[:, 2])


def coupled_channel(
    a: DiscreteAperture, p: UserPlacement, c_matrix: np.ndarray, wl: Wavelength
) -> np.ndarray:
    "Channel vector after mutual coupling, C @ h_uncoupled."
    h = element_channel(a, p, wl)
    if c_matrix.shape != (h.size, h.size):
        raise ValueError(
            f"coupling matrix shape {c_matrix.shape} does not match {h.size} elements"
        )
    return c_matrix @ h


def pair_from_vectors(h1: np.ndarray, h2: np.ndarray) -> ChannelPair:
    "Gains and correlation of two element-domain channel vectors."
    g1 = float(np.vdot(h1, h1).real)
    g2 = float(np.vdot(h2, h2).real)
    if g1 <= 0.0 or g2 <= 0.0:
        raise ValueError("channel vectors must have positive norm")
    rho = complex(np.vdot(h1, h2)) / math.sqrt(g1 * g2)
    return ChannelPair(g1=g1, g2=g2, rho=clamp_correlation(rho, "pair_from_vectors", 1e-9))


def coupled_pair(
    a: DiscreteAperture,
    p1: UserPlacement,
    p2: UserPlacement,
    wl: Wavelength,
    model: CouplingModel | None = None,
) -> ChannelPair:
    "Channel statistics of the mutually coupled discrete array."
    c = coupling_matrix(a, wl, model)
    return pair_from_vectors(
        coupled_channel(a, p1, c, wl), coupled_channel(a, p2, c, wl)
    )
