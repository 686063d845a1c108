"""Scene assembly: geometry, budgets, and defaults bound into one object.

A Scene is the validated unit of work for the CLI and the verification
suites.  Defaults reproduce the reference simulation setup: a 0.5 m x 0.5 m
planar aperture at 2.4 GHz-band wavelength 0.125 m serving two co-directional
users at 10 m and 20 m with 30/40 dB uplink transmit SNRs and a 50 dB
downlink sum SNR.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import channel, coupling
from .channel import ChannelPair, db_to_linear, downlink_snr_coefficient
from .coupling import CouplingModel
from .downlink import DualLink
from .geometry import (
    DiscreteAperture,
    LinearAperture,
    PlanarAperture,
    UserPlacement,
    Wavelength,
)
from .numerics import chebyshev_nodes

DEFAULT_QUADRATURE_ORDER = 20
SWEEP_QUADRATURE_ORDER = 1000
"Order for asymptotic sweeps; plain scenes with area <= 100 m^2 use 20."

LARGE_APERTURE_AREA = 100.0

DEFAULT_GRID = (200, 200)


class SceneError(ValueError):
    "A scene failed validation."


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    message: str


@dataclass(frozen=True)
class Scene:
    wavelength: Wavelength
    aperture: PlanarAperture | LinearAperture | DiscreteAperture
    users: tuple[UserPlacement, ...]
    ul_snr_db: tuple[float, ...]
    dl_sum_snr_db: float | None = None
    dl_power: float | None = None
    quadrature_order: int = DEFAULT_QUADRATURE_ORDER
    grid_resolution: tuple[int, int] = DEFAULT_GRID

    def __post_init__(self):
        if len(self.users) not in (1, 2):
            raise SceneError(f"scene needs 1 or 2 users, got {len(self.users)}")
        if len(self.ul_snr_db) != len(self.users):
            raise SceneError("one uplink SNR per user is required")
        if self.quadrature_order < 1:
            raise SceneError("quadrature order must be >= 1")

    @property
    def is_two_user(self) -> bool:
        return len(self.users) == 2

    @property
    def ul_snr_linear(self) -> tuple[float, ...]:
        return tuple(db_to_linear(db) for db in self.ul_snr_db)

    def snr_coefficient(self, k: int) -> float:
        "Downlink SNR per unit allocated power for user k."
        u = self.users[k]
        return downlink_snr_coefficient(
            u.rx_area, u.noise_intensity, self.wavelength.k0, self.wavelength.eta
        )

    @property
    def downlink_power(self) -> float:
        """Sum power budget of the downlink.

        Either given directly, or derived from the sum-SNR constraint through
        the per-unit-power SNR map (which requires both users to share the
        same map).
        """
        if self.dl_power is not None:
            return self.dl_power
        if self.dl_sum_snr_db is None:
            raise SceneError("scene has no downlink budget (dl_sum_snr_db or dl_power)")
        coeffs = [self.snr_coefficient(k) for k in range(len(self.users))]
        if max(coeffs) - min(coeffs) > 1e-9 * max(coeffs):
            raise SceneError(
                "users have different SNR-per-power maps; the sum-SNR budget is "
                "ambiguous, specify dl_power instead"
            )
        return db_to_linear(self.dl_sum_snr_db) / coeffs[0]


def scene_defaults() -> Scene:
    "The reference two-user planar-aperture scene."
    wl = Wavelength(0.125)
    a_u = wl.isotropic_rx_area
    return Scene(
        wavelength=wl,
        aperture=PlanarAperture(0.5, 0.5),
        users=(
            UserPlacement(10.0, math.pi / 6, math.pi / 3, a_u, 1.0),
            UserPlacement(20.0, math.pi / 6, math.pi / 3, a_u, 1.0),
        ),
        ul_snr_db=(30.0, 40.0),
        dl_sum_snr_db=50.0,
    )


def validate(scene: Scene) -> list[Finding]:
    "Structured findings; errors make the scene unusable, warnings do not."
    findings: list[Finding] = []
    ap = scene.aperture
    area = ap.area if not isinstance(ap, DiscreteAperture) else ap.count * ap.element_area
    for i, u in enumerate(scene.users, start=1):
        if u.rx_area * 10.0 > area:
            findings.append(
                Finding(
                    "warning",
                    f"user {i} rx_area {u.rx_area:.3g} is not small against the "
                    f"aperture area {area:.3g}; the sub-wavelength-user model "
                    "degrades",
                )
            )
        if u.rx_area > scene.wavelength.lam**2:
            findings.append(
                Finding(
                    "warning",
                    f"user {i} rx_area {u.rx_area:.3g} exceeds lambda^2; not a "
                    "sub-wavelength antenna",
                )
            )
    if isinstance(ap, LinearAperture) and not ap.is_thin:
        findings.append(
            Finding("warning", "linear aperture is not thin (length_x > length_z/10)")
        )
    if scene.is_two_user:
        try:
            # coincidence screening only; a coarse rule is enough
            ch = channel_pair(scene, order=min(scene.quadrature_order, 20))
        except channel.CorrelationOverflowError as exc:
            findings.append(Finding("error", str(exc)))
        else:
            if ch.rho_bar < 1e-9:
                findings.append(
                    Finding(
                        "warning",
                        "users are spatially coincident (rho_bar ~ 0); superposition "
                        "coding brings no gain over the stronger user",
                    )
                )
    if not isinstance(ap, DiscreteAperture):
        nx, nz = scene.grid_resolution
        span_x = ap.length_x
        span_z = ap.length_z
        quarter = scene.wavelength.lam / 4.0
        if span_x / nx > quarter or span_z / nz > quarter:
            findings.append(
                Finding(
                    "warning",
                    "grid resolution is below 4 points per wavelength; operator "
                    "pipelines may under-resolve the kernel phase",
                )
            )
    return findings


def channel_pair(
    scene: Scene,
    order: int | None = None,
    coupling_model: CouplingModel | None = None,
) -> ChannelPair:
    "Sufficient statistics (g1, g2, rho) for the scene's aperture variant."
    if not scene.is_two_user:
        raise SceneError("channel_pair needs a two-user scene")
    p1, p2 = scene.users
    wl = scene.wavelength
    ap = scene.aperture
    if isinstance(ap, DiscreteAperture):
        if coupling_model is not None:
            return coupling.coupled_pair(ap, p1, p2, wl, coupling_model)
        return channel.channel_pair_spda(ap, p1, p2, wl)
    if coupling_model is not None:
        raise SceneError("mutual coupling is modeled for discrete apertures only")
    n = order if order is not None else scene.quadrature_order
    if isinstance(ap, LinearAperture):
        return channel.ChannelPair(
            g1=channel.gain_linear(ap, p1),
            g2=channel.gain_linear(ap, p2),
            rho=_linear_correlation(ap, p1, p2, wl, n),
        )
    return channel.channel_pair_planar(ap, p1, p2, wl, n)


def _linear_correlation(a, p1, p2, wl, n):
    # 1-D Chebyshev rule along the strip; normalizing the cross sum by the
    # same-rule gain sums cancels the length_x factor and the leading
    # quadrature error, and keeps |rho| <= 1.
    rule = chebyshev_nodes(n)
    z = a.length_z / 2.0 * rule.nodes
    w = rule.sqrt_weights
    q1 = channel.kernel_Q(wl, p1, 0.0, z)
    q2 = channel.kernel_Q(wl, p2, 0.0, z)
    cross = np.sum(w * np.conj(q1) * q2)
    g1 = np.sum(w * np.abs(q1) ** 2)
    g2 = np.sum(w * np.abs(q2) ** 2)
    return channel.clamp_correlation(
        complex(cross / math.sqrt(g1 * g2)), "correlation_linear"
    )


def single_user_gain(scene: Scene, k: int = 0) -> float:
    u = scene.users[k]
    ap = scene.aperture
    if isinstance(ap, DiscreteAperture):
        return channel.gain_spda(ap, u, scene.wavelength)
    if isinstance(ap, LinearAperture):
        return channel.gain_linear(ap, u)
    return channel.gain_planar(ap, u)


def dual_link(
    scene: Scene,
    ch: ChannelPair | None = None,
    coupling_model: CouplingModel | None = None,
) -> DualLink:
    "Downlink scene in dual-uplink form."
    if ch is None:
        ch = channel_pair(scene, coupling_model=coupling_model)
    return DualLink(
        ch=ch,
        snr_per_power=(scene.snr_coefficient(0), scene.snr_coefficient(1)),
        power=scene.downlink_power,
    )


def auto_quadrature_order(scene: Scene) -> int:
    "Default order 20 for desk-scale apertures, 1000 for asymptotic sizes."
    ap = scene.aperture
    area = ap.count * ap.element_area if isinstance(ap, DiscreteAperture) else ap.area
    return DEFAULT_QUADRATURE_ORDER if area <= LARGE_APERTURE_AREA else SWEEP_QUADRATURE_ORDER


# Config file schema.  Unknown keys anywhere are errors so that typos in
# parameter studies fail loudly.

_SCENE_KEYS = {
    "wavelength",
    "aperture",
    "users",
    "downlink_sum_snr_db",
    "downlink_power",
    "quadrature_order",
    "grid",
}
_APERTURE_KEYS = {
    "planar": {"type", "length_x", "length_z"},
    "linear": {"type", "length_x", "length_z"},
    "spda": {"type", "elements_x", "elements_z", "spacing", "element_area", "occupation"},
}
_USER_KEYS = {"range", "theta_deg", "phi_deg", "rx_area", "noise", "snr_db"}


def _check_keys(obj: dict, allowed: set, context: str):
    unknown = set(obj) - allowed
    if unknown:
        raise SceneError(f"unknown {context} keys: {sorted(unknown)}")


def scene_from_dict(cfg: dict) -> Scene:
    "Build a validated Scene from a parsed config mapping."
    _check_keys(cfg, _SCENE_KEYS, "scene")
    try:
        wl = Wavelength(float(cfg["wavelength"]))
        ap_cfg = dict(cfg["aperture"])
        kind = ap_cfg.get("type")
        if kind not in _APERTURE_KEYS:
            raise SceneError(f"aperture type must be one of {sorted(_APERTURE_KEYS)}")
        _check_keys(ap_cfg, _APERTURE_KEYS[kind], f"{kind} aperture")
        if kind == "planar":
            ap = PlanarAperture(float(ap_cfg["length_x"]), float(ap_cfg["length_z"]))
        elif kind == "linear":
            ap = LinearAperture(float(ap_cfg["length_x"]), float(ap_cfg["length_z"]))
        else:
            spacing = float(ap_cfg["spacing"])
            if "element_area" in ap_cfg and "occupation" in ap_cfg:
                raise SceneError("give element_area or occupation, not both")
            if "occupation" in ap_cfg:
                element_area = float(ap_cfg["occupation"]) * spacing**2
            else:
                element_area = float(ap_cfg["element_area"])
            ap = DiscreteAperture(
                int(ap_cfg["elements_x"]),
                int(ap_cfg["elements_z"]),
                spacing,
                element_area,
            )
        users = []
        snrs = []
        for u_cfg in cfg["users"]:
            u_cfg = dict(u_cfg)
            _check_keys(u_cfg, _USER_KEYS, "user")
            users.append(
                UserPlacement(
                    range_m=float(u_cfg["range"]),
                    theta=math.radians(float(u_cfg["theta_deg"])),
                    phi=math.radians(float(u_cfg["phi_deg"])),
                    rx_area=float(u_cfg.get("rx_area", wl.isotropic_rx_area)),
                    noise_intensity=float(u_cfg.get("noise", 1.0)),
                )
            )
            snrs.append(float(u_cfg.get("snr_db", 30.0)))
        grid = cfg.get("grid", list(DEFAULT_GRID))
        return Scene(
            wavelength=wl,
            aperture=ap,
            users=tuple(users),
            ul_snr_db=tuple(snrs),
            dl_sum_snr_db=(
                float(cfg["downlink_sum_snr_db"])
                if "downlink_sum_snr_db" in cfg
                else None
            ),
            dl_power=float(cfg["downlink_power"]) if "downlink_power" in cfg else None,
            quadrature_order=int(cfg.get("quadrature_order", DEFAULT_QUADRATURE_ORDER)),
            grid_resolution=(int(grid[0]), int(grid[1])),
        )
    except SceneError:
        raise
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise SceneError(f"malformed scene config: {exc}") from exc


def load_scene(path: str) -> Scene:
    with open(path, encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))


def scene_to_dict(scene: Scene) -> dict:
    "Round-trippable config mapping, including derived quantities omitted."
    ap = scene.aperture
    if isinstance(ap, PlanarAperture):
        ap_cfg = {"type": "planar", "length_x": ap.length_x, "length_z": ap.length_z}
    elif isinstance(ap, LinearAperture):
        ap_cfg = {"type": "linear", "length_x": ap.length_x, "length_z": ap.length_z}
    else:
        ap_cfg = {
            "type": "spda",
            "elements_x": ap.elements_x,
            "elements_z": ap.elements_z,
            "spacing": ap.spacing,
            "element_area": ap.element_area,
        }
    cfg = {
        "wavelength": scene.wavelength.lam,
        "aperture": ap_cfg,
        "users": [
            {
                "range": u.range_m,
                "theta_deg": math.degrees(u.theta),
                "phi_deg": math.degrees(u.phi),
                "rx_area": u.rx_area,
                "noise": u.noise_intensity,
                "snr_db": snr,
            }
            for u, snr in zip(scene.users, scene.ul_snr_db)
        ],
        "quadrature_order": scene.quadrature_order,
        "grid": list(scene.grid_resolution),
    }
    if scene.dl_sum_snr_db is not None:
        cfg["downlink_sum_snr_db"] = scene.dl_sum_snr_db
    if scene.dl_power is not None:
        cfg["downlink_power"] = scene.dl_power
    return cfg


def with_aperture(scene: Scene, aperture) -> Scene:
    return replace(scene, aperture=aperture)
