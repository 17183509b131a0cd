"""Feedback-linearising attitude tracker and CMG command limiting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .attitude import (
    cross,
    dot,
    kinematic_matrix,
    kinematic_matrix_inverse,
    kinematic_matrix_rate,
    matvec,
    rotation_o_to_b,
)
from .dynamics import SpacecraftParams, orbit_rate_body
from .environment import TorqueModel, environmental_torque_body


@dataclass(frozen=True)
class TrackerGains:
    """Per-axis PD gains from bandwidth and damping: ``k_p = -w_n^2``, ``k_d = -2 w_n zeta``."""

    omega_n: float = 0.01
    zeta: float = 0.707

    def __post_init__(self):
        if self.omega_n <= 0 or self.zeta <= 0:
            raise ValueError("omega_n and zeta must be positive")

    @property
    def k_p(self) -> float:
        return -self.omega_n**2

    @property
    def k_d(self) -> float:
        return -2.0 * self.omega_n * self.zeta

    def poles(self) -> np.ndarray:
        """Closed-loop poles of each error channel, roots of ``s^2 - k_d s - k_p``."""
        return np.roots([1.0, -self.k_d, -self.k_p])


@dataclass(frozen=True)
class CmgLimits:
    h_max: float = 19524.0
    hdot_max: float = 271.16

    def __post_init__(self):
        if self.h_max <= 0 or self.hdot_max <= 0:
            raise ValueError("CMG limits must be positive")

    @classmethod
    def from_params(cls, params: SpacecraftParams) -> "CmgLimits":
        return cls(h_max=params.h_max, hdot_max=params.hdot_max)


class LimitedCommand(NamedTuple):
    u: np.ndarray
    rate_clamped: np.ndarray
    envelope_clamped: np.ndarray


def feedback(d_sigma, d_sigma_dot, gains: TrackerGains) -> np.ndarray:
    """Decoupled PD law on the tracking error to the adjusted reference."""
    return gains.k_p * np.asarray(d_sigma) + gains.k_d * np.asarray(d_sigma_dot)


def transformed_control(sigma_ddot_ref, dv) -> np.ndarray:
    """Feedforward reference acceleration plus feedback."""
    return np.asarray(sigma_ddot_ref) + np.asarray(dv)


def mrp_rate(sigma, omega, n: float) -> np.ndarray:
    """MRP rate of the body relative to the orbit frame."""
    return matvec(kinematic_matrix(sigma), omega - orbit_rate_body(sigma, n))


def command_torque_array(sigma, omega, t, v, model: TorqueModel, params) -> np.ndarray:
    """CMG torque that makes the MRP acceleration equal ``v`` under the given model.

    ``params`` needs ``inertia`` and ``orbit_rate``; all array arguments
    broadcast over leading batch dimensions.
    """
    R = rotation_o_to_b(sigma)
    w_o = R[..., :, 1] * (-params.orbit_rate)
    w_rel = omega - w_o
    T = kinematic_matrix(sigma)
    T_dot = kinematic_matrix_rate(sigma, matvec(T, w_rel))
    # dR/dt w_o^o = -(w_rel x R) w_o^o = -w_rel x w_o
    R_dot_wo = -cross(w_rel, w_o)
    inner = -matvec(T_dot, w_rel) + matvec(T, R_dot_wo) + v
    tau = environmental_torque_body(sigma, t, model, R)
    J = params.inertia
    return tau - cross(omega, matvec(J, omega)) - matvec(J, matvec(kinematic_matrix_inverse(sigma), inner))


def command_torque(state, v, model: TorqueModel, params: SpacecraftParams) -> np.ndarray:
    return command_torque_array(state.sigma, state.omega, state.t, np.asarray(v, dtype=float), model, params)


def mrp_acceleration(sigma, omega, t, u, model: TorqueModel, params) -> np.ndarray:
    """Forward map from CMG torque to MRP acceleration (inverse of :func:`command_torque_array`)."""
    n = params.orbit_rate
    w_o = orbit_rate_body(sigma, n)
    w_rel = omega - w_o
    T = kinematic_matrix(sigma)
    T_dot = kinematic_matrix_rate(sigma, matvec(T, w_rel))
    tau = environmental_torque_body(sigma, t, model)
    J = params.inertia
    omega_dot = matvec(params.inertia_inv, tau - cross(omega, matvec(J, omega)) - u)
    return matvec(T_dot, w_rel) + matvec(T, omega_dot + cross(w_rel, w_o))


def limit_command_array(u_cmd, omega, h, h_max, hdot_max, dt: float = 0.0) -> LimitedCommand:
    """Apply the CMG rate limit, then the momentum envelope.

    The momentum rate ``dh = u - w x h`` is scaled to ``hdot_max`` when it
    exceeds it.  At the envelope only inward motion is allowed: with ``dt = 0``
    the outward radial component is removed once ``|h| >= h_max``.  With a
    zero-order-hold period ``dt > 0`` the radial rate is instead reduced so
    that ``|h + dh dt|`` does not exceed ``h_max`` (but never below zero),
    which also limits creep past the envelope from tangential motion held
    over the period.
    """
    u_cmd = np.asarray(u_cmd, dtype=float)
    wxh = cross(omega, h)
    hd = u_cmd - wxh
    h_max = np.asarray(h_max, dtype=float)
    hdot_max = np.asarray(hdot_max, dtype=float)

    rate = np.linalg.norm(hd, axis=-1)
    rate_clamped = rate > hdot_max
    scale = np.where(rate_clamped, hdot_max / np.where(rate > 0, rate, 1.0), 1.0)
    hd = hd * scale[..., None]

    hn = np.linalg.norm(h, axis=-1)
    h_hat = h / np.where(hn > 0, hn, 1.0)[..., None]
    radial = dot(h_hat, hd)
    if dt > 0.0:
        tang = hd - radial[..., None] * h_hat
        predicted = np.linalg.norm(h + hd * dt, axis=-1)
        envelope = (predicted > h_max * (1.0 + 1e-12)) & (hn > 0)
        t2 = dot(tang, tang) * dt * dt
        allowed = (np.sqrt(np.maximum(h_max**2 - t2, 0.0)) - hn) / dt
        # never push inward harder than commanded, so the rate norm cannot grow
        new_radial = np.minimum(radial, np.maximum(allowed, 0.0))
        hd = np.where(envelope[..., None], tang + new_radial[..., None] * h_hat, hd)
        rate = np.linalg.norm(hd, axis=-1)
        over = rate > hdot_max
        hd = hd * np.where(over, hdot_max / np.where(rate > 0, rate, 1.0), 1.0)[..., None]
    else:
        envelope = (hn >= h_max) & (radial > 0)
        hd = np.where(envelope[..., None], hd - radial[..., None] * h_hat, hd)
    return LimitedCommand(hd + wxh, rate_clamped, envelope)


def limit_command(u_cmd, state, limits: CmgLimits, dt: float = 0.0) -> LimitedCommand:
    return limit_command_array(u_cmd, state.omega, state.h_cmg, limits.h_max, limits.hdot_max, dt)
