"""On-line adjustment of the reference attitude from the total-momentum error.

The linearised total-momentum error obeys

    d(dH)/dt = -[w_o x] dH + C d_sigma

in the orbit frame, with ``C`` the attitude sensitivity of the modelled
environmental torque along the nominal.  The adjustment law
``d_sigma = -k_a C^T R dH`` drives ``dH`` to zero; ``R = I`` is the plain
Lyapunov design (LTAC) and a coupled ``R`` mixing the x and z components is the
redesigned controller (RTAC).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .attitude import matmul, matvec, rotation_o_to_b, skew, transpose
from .dynamics import SpacecraftParams
from .environment import TorqueModel, planning_torque_orbit
from .nominal import NominalSample, NominalTrajectory


@dataclass(frozen=True)
class AdjustGains:
    k_a: float = 5e-8
    k_r1: float = 1.6
    k_r2: float = 1.6
    sigma_cap: float = 0.05
    b4_transpose_compat: bool = False

    def __post_init__(self):
        if self.k_a <= 0:
            raise ValueError("k_a must be positive")
        if self.k_r1 < 0 or self.k_r2 < 0:
            raise ValueError("coupling gains must be non-negative")
        if self.sigma_cap <= 0:
            raise ValueError("sigma_cap must be positive")

    @property
    def is_ltac(self) -> bool:
        return self.k_r1 == 0.0 and self.k_r2 == 0.0


class AdjustmentState(NamedTuple):
    delta_sigma: np.ndarray
    delta_sigma_dot: np.ndarray
    delta_sigma_ddot: np.ndarray
    delta_H_orbit: np.ndarray


def reference_momentum(nominal: NominalSample, inertia) -> np.ndarray:
    """Nominal total momentum in the orbit frame, ``R~^T (h~_c + J w~)``, for inertia ``J``.

    Equals the stored ``H_orbit`` when ``J`` is the planning inertia.  With a
    different (identified) inertia it keeps ``dH = R^T dh_c`` under exact
    attitude tracking.
    """
    H_b = nominal.h_cmg + matvec(inertia, nominal.omega)
    return matvec(transpose(rotation_o_to_b(nominal.sigma)), H_b)


def momentum_error(state, nominal: NominalSample, params: SpacecraftParams) -> np.ndarray:
    """Orbit-frame total-momentum error ``R^T (h_c + J w) - R~^T (h~_c + J w~)``."""
    H_b = state.h_cmg + matvec(params.inertia, state.omega)
    return matvec(transpose(rotation_o_to_b(state.sigma)), H_b) - reference_momentum(nominal, params.inertia)


def sensitivity_matrix(sigma, t, model: TorqueModel, fd_step: float = 1e-6) -> np.ndarray:
    """Jacobian of the orbit-frame gravity-gradient + aero torque w.r.t. the MRPs.

    Central differences with step ``fd_step``; broadcasts over leading
    dimensions of ``sigma``.  ``t`` is accepted for interface symmetry; both
    modelled torques are time-invariant in the orbit frame.
    """
    sigma = np.asarray(sigma, dtype=float)
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    cols = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = fd_step
        plus = planning_torque_orbit(sigma + e, model)
        minus = planning_torque_orbit(sigma - e, model)
        cols.append((plus - minus) / (2.0 * fd_step))
    return np.stack(cols, axis=-1)


def _second_difference(x: np.ndarray, dt: float) -> np.ndarray:
    out = np.empty_like(x)
    out[1:-1] = (x[2:] - 2.0 * x[1:-1] + x[:-2]) / dt**2
    out[0] = (2.0 * x[0] - 5.0 * x[1] + 4.0 * x[2] - x[3]) / dt**2
    out[-1] = (2.0 * x[-1] - 5.0 * x[-2] + 4.0 * x[-3] - x[-4]) / dt**2
    return out


def _quintic_hermite(p0, v0, a0, p1, v1, a1, h, s):
    """Value, first and second derivative of the quintic Hermite segment at ``s`` in [0, 1]."""
    s2, s3, s4, s5 = s * s, s**3, s**4, s**5
    h00 = 1 - 10 * s3 + 15 * s4 - 6 * s5
    h10 = s - 6 * s3 + 8 * s4 - 3 * s5
    h20 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5
    h01 = 10 * s3 - 15 * s4 + 6 * s5
    h11 = -4 * s3 + 7 * s4 - 3 * s5
    h21 = 0.5 * s3 - s4 + 0.5 * s5
    d00 = -30 * s2 + 60 * s3 - 30 * s4
    d10 = 1 - 18 * s2 + 32 * s3 - 15 * s4
    d20 = s - 4.5 * s2 + 6 * s3 - 2.5 * s4
    d11 = -12 * s2 + 28 * s3 - 15 * s4
    d21 = 1.5 * s2 - 4 * s3 + 2.5 * s4
    e00 = -60 * s + 180 * s2 - 120 * s3
    e10 = -36 * s + 96 * s2 - 60 * s3
    e20 = 1 - 9 * s + 18 * s2 - 10 * s3
    e11 = -24 * s + 84 * s2 - 60 * s3
    e21 = 3 * s - 12 * s2 + 10 * s3
    val = h00 * p0 + h10 * h * v0 + h20 * h * h * a0 + h01 * p1 + h11 * h * v1 + h21 * h * h * a1
    der = (d00 * p0 + d10 * h * v0 + d20 * h * h * a0 - d00 * p1 + d11 * h * v1 + d21 * h * h * a1) / h
    acc = (e00 * p0 + e10 * h * v0 + e20 * h * h * a0 - e00 * p1 + e11 * h * v1 + e21 * h * h * a1) / (h * h)
    return val, der, acc


@dataclass(frozen=True)
class SensitivitySeries:
    """``C``, ``dC/dt`` and ``d2C/dt2`` on the nominal time grid."""

    t: np.ndarray
    C: np.ndarray
    C_dot: np.ndarray
    C_ddot: np.ndarray

    @property
    def step(self) -> float:
        return (self.t[-1] - self.t[0]) / (self.t.size - 1)

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Grid values at nodes; quintic Hermite in between (derivatives stay consistent)."""
        t0, h = float(self.t[0]), self.step
        x = (t - t0) / h
        if x < -1e-9 or x > self.t.size - 1 + 1e-9:
            raise ValueError(f"t={t} outside sensitivity series span")
        i = int(round(x))
        if abs(x - i) < 1e-9:
            return self.C[i], self.C_dot[i], self.C_ddot[i]
        i = min(int(np.floor(x)), self.t.size - 2)
        s = x - i
        return _quintic_hermite(
            self.C[i], self.C_dot[i], self.C_ddot[i],
            self.C[i + 1], self.C_dot[i + 1], self.C_ddot[i + 1], h, s,
        )

    def to_csv(self, path) -> None:
        names = [f"{m}{r}{c}" for m in ("C", "Cd", "Cdd") for r in (1, 2, 3) for c in (1, 2, 3)]
        data = np.column_stack(
            [self.t, self.C.reshape(-1, 9), self.C_dot.reshape(-1, 9), self.C_ddot.reshape(-1, 9)]
        )
        np.savetxt(path, data, delimiter=",", header=",".join(["t"] + names), comments="", fmt="%.17g")


def sensitivity_series(
    traj: NominalTrajectory, model: TorqueModel, fd_step: float = 1e-6
) -> SensitivitySeries:
    """Sensitivity matrix along the nominal with central time differences (one-sided at the ends)."""
    C = sensitivity_matrix(traj.sigma, traj.t, model, fd_step)
    dt = traj.step
    C_dot = np.gradient(C, dt, axis=0, edge_order=2)
    return SensitivitySeries(t=traj.t.copy(), C=C, C_dot=C_dot, C_ddot=_second_difference(C, dt))


def coupling_matrix(gains: AdjustGains) -> np.ndarray:
    """``[[1, 0, -k_r1], [0, 1, 0], [k_r2, 0, 1]]``; the identity for LTAC."""
    return np.array([[1.0, 0.0, -gains.k_r1], [0.0, 1.0, 0.0], [gains.k_r2, 0.0, 1.0]])


def raw_adjustment(delta_H, C, gains: AdjustGains) -> np.ndarray:
    """Uncapped ``-k_a C^T R dH``."""
    R = coupling_matrix(gains)
    return -gains.k_a * matvec(transpose(C), matvec(R, delta_H))


def adjustment(delta_H, C, gains: AdjustGains) -> np.ndarray:
    """Attitude adjustment, clipped per component to ``gains.sigma_cap``."""
    return np.clip(raw_adjustment(delta_H, C, gains), -gains.sigma_cap, gains.sigma_cap)


def adjustment_rates(delta_H, delta_sigma, C, C_dot, C_ddot, gains: AdjustGains, n: float):
    """First and second time derivatives of the adjustment.

    Differentiates the adjustment law along the linearised momentum-error
    dynamics.  With ``gains.b4_transpose_compat`` the last term of the
    ``delta_sigma`` coefficient in the second derivative uses ``(dC/dt)^T``
    instead of ``dC/dt``.
    """
    R = coupling_matrix(gains)
    W = skew(np.array([0.0, -n, 0.0]))
    Ct, Cdt, Cddt = transpose(C), transpose(C_dot), transpose(C_ddot)
    CtR, CdtR = matmul(Ct, R), matmul(Cdt, R)
    B1 = CdtR - matmul(CtR, W)
    B2 = matmul(CtR, C)
    B3 = matmul(Cddt, R) - 2.0 * matmul(CdtR, W) + matmul(CtR, W @ W)
    last = Cdt if gains.b4_transpose_compat else C_dot
    B4 = 2.0 * matmul(CdtR, C) - matmul(matmul(CtR, W), C) + matmul(CtR, last)
    k = gains.k_a
    d1 = -k * (matvec(B1, delta_H) + matvec(B2, delta_sigma))
    d2 = -k * (matvec(B3, delta_H) + matvec(B4, delta_sigma) + matvec(B2, d1))
    return d1, d2


def adjustment_state(delta_H, C, C_dot, C_ddot, gains: AdjustGains, n: float) -> AdjustmentState:
    """Capped adjustment with its rates; rates of capped components are zero."""
    raw = raw_adjustment(delta_H, C, gains)
    capped = np.abs(raw) > gains.sigma_cap
    d0 = np.clip(raw, -gains.sigma_cap, gains.sigma_cap)
    d1, d2 = adjustment_rates(delta_H, d0, C, C_dot, C_ddot, gains, n)
    d1 = np.where(capped, 0.0, d1)
    d2 = np.where(capped, 0.0, d2)
    return AdjustmentState(d0, d1, d2, np.asarray(delta_H, dtype=float))


def adjusted_reference(nominal: NominalSample, adj: AdjustmentState):
    """Nominal attitude, rate and acceleration plus the adjustment."""
    return (
        nominal.sigma + adj.delta_sigma,
        nominal.sigma_dot + adj.delta_sigma_dot,
        nominal.sigma_ddot + adj.delta_sigma_ddot,
    )


def lyapunov_value(delta_H) -> np.ndarray:
    delta_H = np.asarray(delta_H, dtype=float)
    return 0.5 * np.einsum("...i,...i->...", delta_H, delta_H)
