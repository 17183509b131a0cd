"""Rigid station + CMG equations of motion, momentum bookkeeping and frame transforms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .attitude import (
    cross,
    kinematic_matrix,
    matvec,
    rotation_o_to_b,
    transpose,
)
from .environment import TorqueModel, environmental_torque_body, environmental_torque_orbit

#: Inertia matrix of the reference station, kg m^2.
STATION_INERTIA = np.array(
    [
        [24180443.0, 3780010.0, 3896127.0],
        [3780010.0, 37607882.0, -1171169.0],
        [3896127.0, -1171169.0, 51562389.0],
    ]
)
ORBIT_RATE = 1.1461e-3
H_MAX = 19524.0
HDOT_MAX = 271.16
MU_EARTH = 3.986004418e14


@dataclass(frozen=True)
class SpacecraftParams:
    """Mass properties, orbit rate and CMG capability.

    ``inertia`` may carry leading batch dimensions, ``(..., 3, 3)``.
    """

    inertia: np.ndarray = field(default_factory=lambda: STATION_INERTIA.copy())
    orbit_rate: float = ORBIT_RATE
    h_max: float = H_MAX
    hdot_max: float = HDOT_MAX
    mu: float = MU_EARTH
    inertia_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float)
        if J.shape[-2:] != (3, 3):
            raise ValueError(f"inertia must be 3x3, got shape {J.shape}")
        if not np.allclose(J, np.swapaxes(J, -1, -2), rtol=1e-12, atol=0.0):
            raise ValueError("inertia must be symmetric")
        if np.any(np.linalg.eigvalsh(J) <= 0.0):
            raise ValueError("inertia must be positive definite")
        if self.orbit_rate <= 0 or self.h_max <= 0 or self.hdot_max <= 0:
            raise ValueError("orbit rate and CMG limits must be positive")
        object.__setattr__(self, "inertia", J)
        object.__setattr__(self, "inertia_inv", np.linalg.inv(J))

    @property
    def omega_orbit_o(self) -> np.ndarray:
        """Orbit-frame angular velocity expressed in the orbit frame."""
        return np.array([0.0, -self.orbit_rate, 0.0])


@dataclass
class StationState:
    """Plant state: attitude wrt LVLH, inertial body rate, CMG momentum (body frame)."""

    sigma: np.ndarray
    omega: np.ndarray
    h_cmg: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        self.h_cmg = np.asarray(self.h_cmg, dtype=float)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.sigma, self.omega, self.h_cmg], axis=-1)

    @classmethod
    def from_vector(cls, y, t: float = 0.0) -> "StationState":
        y = np.asarray(y, dtype=float)
        return cls(y[..., 0:3], y[..., 3:6], y[..., 6:9], t)


@dataclass(frozen=True)
class MomentumView:
    H_body: np.ndarray
    H_orbit: np.ndarray
    H_inertial: np.ndarray
    h_station: np.ndarray


def orbit_rate_body(sigma, n: float) -> np.ndarray:
    """Angular velocity of the orbit frame in body components, ``R (0, -n, 0)``."""
    return rotation_o_to_b(sigma)[..., :, 1] * (-n)


def orbit_to_inertial(t, n: float, t0: float = 0.0) -> np.ndarray:
    """Rotation taking orbit-frame components at ``t`` to the inertial frame.

    The inertial frame is the orbit frame frozen at ``t0``; the orbit frame
    turns about the shared y axis by ``-n (t - t0)``.
    """
    theta = -n * (np.asarray(t, dtype=float) - t0)
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 2] = s
    out[..., 1, 1] = 1.0
    out[..., 2, 0] = -s
    out[..., 2, 2] = c
    return out


def plant_rhs(t, y, u, model: TorqueModel, params: SpacecraftParams) -> np.ndarray:
    """Array form of :func:`state_derivative` on stacked ``y = [sigma, omega, h_c]``."""
    sigma, omega, h = y[..., 0:3], y[..., 3:6], y[..., 6:9]
    R = rotation_o_to_b(sigma)
    tau = environmental_torque_body(sigma, t, model, R)
    w_rel = omega + R[..., :, 1] * params.orbit_rate
    sigma_dot = matvec(kinematic_matrix(sigma), w_rel)
    Jw = matvec(params.inertia, omega)
    omega_dot = matvec(params.inertia_inv, tau - u - cross(omega, Jw))
    h_dot = u - cross(omega, h)
    return np.concatenate([sigma_dot, omega_dot, h_dot], axis=-1)


def state_derivative(
    state: StationState, u, model: TorqueModel, params: SpacecraftParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Kinematics, rigid-body dynamics and CMG momentum rate for control torque ``u``."""
    d = plant_rhs(state.t, state.to_vector(), np.asarray(u, dtype=float), model, params)
    return d[..., 0:3], d[..., 3:6], d[..., 6:9]


def total_momentum(state: StationState, params: SpacecraftParams, t0: float = 0.0) -> MomentumView:
    """Total angular momentum ``h_c + J w`` in body, orbit and inertial frames."""
    h_s = matvec(params.inertia, state.omega)
    H_b = state.h_cmg + h_s
    H_o = matvec(transpose(rotation_o_to_b(state.sigma)), H_b)
    H_i = matvec(orbit_to_inertial(state.t, params.orbit_rate, t0), H_o)
    return MomentumView(H_body=H_b, H_orbit=H_o, H_inertial=H_i, h_station=h_s)


def inertial_momentum_history(t, sigma, omega, h_cmg, params: SpacecraftParams, t0: float = 0.0):
    """Total momentum in the inertial frame for a sampled trajectory, shape ``(N, 3)``."""
    H_b = h_cmg + matvec(params.inertia, omega)
    H_o = matvec(transpose(rotation_o_to_b(sigma)), H_b)
    return matvec(orbit_to_inertial(t, params.orbit_rate, t0), H_o)


def momentum_increment_residual(log, model: TorqueModel) -> float:
    """Largest departure of ``H_i(t) - H_i(t0)`` from the integrated inertial torque.

    ``log`` needs ``t``, ``sigma``, ``omega`` and ``h_cmg`` arrays sampled on a
    uniform grid; the torque integral uses cumulative Simpson quadrature.
    """
    t = np.asarray(log.t, dtype=float)
    if t.size < 10:
        raise ValueError(f"log too sparse for quadrature: {t.size} samples (need >= 10)")
    params = model.params
    t0 = float(t[0])
    H_i = inertial_momentum_history(t, log.sigma, log.omega, log.h_cmg, params, t0)
    tau_i = matvec(
        orbit_to_inertial(t, params.orbit_rate, t0),
        environmental_torque_orbit(log.sigma, t, model),
    )
    integral = cumulative_simpson(tau_i, x=t, axis=0, initial=0.0)
    resid = H_i - H_i[0] - integral
    return float(np.max(np.linalg.norm(resid, axis=-1)))
