"""Environmental torques: gravity gradient, aerodynamic drag and a smooth disturbance bump."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from .attitude import cross, matvec, rotation_o_to_b, transpose

if TYPE_CHECKING:
    from .dynamics import SpacecraftParams

FRAMES = ("body", "orbit")


@dataclass(frozen=True)
class AeroParams:
    """Constant-area drag model with a body-fixed centre of pressure."""

    area: float = 500.0
    cp_offset: np.ndarray = field(default_factory=lambda: np.array([-9.70, 1.71, 1.74]))
    density: float = 2e-11
    drag_coeff: float = 2.2
    wind_speed: float = 7.7e3
    corotation_factor: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "cp_offset", np.asarray(self.cp_offset, dtype=float))
        if self.area <= 0 or self.drag_coeff <= 0 or self.wind_speed <= 0:
            raise ValueError("aero area, drag coefficient and wind speed must be positive")
        if self.density < 0:
            raise ValueError("atmospheric density must be non-negative")
        if not 0.0 <= self.corotation_factor <= 1.0:
            raise ValueError("corotation_factor must lie in [0, 1]")

    @classmethod
    def for_orbit(cls, orbit_rate: float, mu: float = 3.986004418e14, **kwargs) -> "AeroParams":
        """Aero parameters with the wind speed of a circular orbit of rate ``orbit_rate``."""
        radius = (mu / orbit_rate**2) ** (1.0 / 3.0)
        return cls(wind_speed=orbit_rate * radius, **kwargs)


@dataclass(frozen=True)
class DisturbanceSpec:
    """Peak vector ``v_d`` of the sixth-power bump active on ``[t0, tf]``."""

    v_d: np.ndarray
    t0: float = 0.0
    tf: float = 6000.0
    frame: str = "body"

    def __post_init__(self):
        object.__setattr__(self, "v_d", np.asarray(self.v_d, dtype=float))
        if not self.tf > self.t0:
            raise ValueError("disturbance window requires tf > t0")
        if self.frame not in FRAMES:
            raise ValueError(f"disturbance frame must be one of {FRAMES}")


@dataclass(frozen=True)
class TorqueModel:
    params: "SpacecraftParams"
    aero: Optional[AeroParams] = None
    disturbance: Optional[DisturbanceSpec] = None
    gravity_gradient: bool = True
    aerodynamic: bool = True
    use_disturbance: bool = True

    def without_disturbance(self) -> "TorqueModel":
        return dataclasses.replace(self, use_disturbance=False)

    def with_params(self, params: "SpacecraftParams") -> "TorqueModel":
        return dataclasses.replace(self, params=params)


def _dcm(sigma, rotation):
    return rotation_o_to_b(sigma) if rotation is None else rotation


def gravity_gradient_torque(sigma, params: "SpacecraftParams", rotation=None) -> np.ndarray:
    """Circular-orbit gravity-gradient torque ``3 n^2 nadir x (J nadir)`` in the body frame.

    ``rotation`` optionally supplies the already computed DCM of ``sigma``.
    """
    nadir = _dcm(sigma, rotation)[..., :, 2]
    n = params.orbit_rate
    return 3.0 * n * n * cross(nadir, matvec(params.inertia, nadir))


def aerodynamic_torque(sigma, aero: AeroParams, rotation=None) -> np.ndarray:
    """Drag torque about the mass centre, body frame.

    The relative wind blows along ``-x`` of the orbit frame; attitude enters
    only through rotating it into the body frame.
    """
    speed = aero.wind_speed * aero.corotation_factor
    wind_body = _dcm(sigma, rotation)[..., :, 0] * (-speed)
    force = 0.5 * aero.density * aero.drag_coeff * aero.area * speed * wind_body
    return cross(aero.cp_offset, force)


def disturbance_profile(t, t0: float, tf: float) -> np.ndarray:
    """Scalar bump ``(2s)^6 (2s - 2)^6``, ``s = (t - t0)/(tf - t0)``; zero outside the window."""
    t = np.asarray(t, dtype=float)
    x = 2.0 * (t - t0) / (tf - t0)
    p = x**6 * (x - 2.0) ** 6
    return np.where((t >= t0) & (t <= tf), p, 0.0)


def disturbance_torque(t, spec: DisturbanceSpec) -> np.ndarray:
    """Disturbance vector in ``spec.frame`` at time ``t``."""
    p = disturbance_profile(t, spec.t0, spec.tf)
    return spec.v_d * p[..., None]


def _modelled_body(sigma, model: TorqueModel, rotation=None) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if rotation is None:
        rotation = rotation_o_to_b(sigma)
    tau = np.zeros(np.broadcast_shapes(sigma.shape, np.shape(model.params.inertia)[:-1]))
    if model.gravity_gradient:
        tau = tau + gravity_gradient_torque(sigma, model.params, rotation)
    if model.aerodynamic and model.aero is not None:
        tau = tau + aerodynamic_torque(sigma, model.aero, rotation)
    return tau


def environmental_torque_body(sigma, t, model: TorqueModel, rotation=None) -> np.ndarray:
    """Sum of the enabled torque contributions, body frame."""
    if rotation is None:
        rotation = rotation_o_to_b(sigma)
    tau = _modelled_body(sigma, model, rotation)
    spec = model.disturbance
    if model.use_disturbance and spec is not None:
        dist = disturbance_torque(t, spec)
        if spec.frame == "orbit":
            dist = matvec(rotation, dist)
        tau = tau + dist
    return tau


def environmental_torque_orbit(sigma, t, model: TorqueModel) -> np.ndarray:
    """``environmental_torque_body`` expressed in the orbit frame."""
    R = rotation_o_to_b(sigma)
    return matvec(transpose(R), environmental_torque_body(sigma, t, model, R))


def planning_torque_orbit(sigma, model: TorqueModel) -> np.ndarray:
    """Gravity-gradient plus aerodynamic torque in the orbit frame (no disturbance)."""
    R = rotation_o_to_b(sigma)
    return matvec(transpose(R), _modelled_body(sigma, model, R))
