"""Nominal (planned) maneuver trajectories.

The generator builds a polynomial attitude profile that meets the boundary
attitude and rate exactly with zero endpoint acceleration, inverts the
kinematics and dynamics for the required control, and integrates the CMG
momentum from its initial value.  The base polynomial is the quintic fixed by
the six endpoint conditions; optional interior "shape" terms
``64 s^3 (1 - s)^3 s^k`` leave every endpoint condition untouched and can be
tuned by :func:`optimize_shape` to keep the CMG momentum inside its envelope.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import cumulative_simpson, solve_ivp
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.optimize import least_squares

from .attitude import (
    check_mrp,
    cross,
    kinematic_matrix,
    kinematic_matrix_inverse,
    kinematic_matrix_rate,
    matvec,
    rotation_o_to_b,
    transpose,
)
from .dynamics import SpacecraftParams, orbit_rate_body, orbit_to_inertial
from .environment import TorqueModel, environmental_torque_body, environmental_torque_orbit

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "t",
    "s1", "s2", "s3",
    "ds1", "ds2", "ds3",
    "dds1", "dds2", "dds3",
    "w1", "w2", "w3",
    "hc1", "hc2", "hc3",
    "Ho1", "Ho2", "Ho3",
)
_FIELDS = ("sigma", "sigma_dot", "sigma_ddot", "omega", "h_cmg", "H_orbit")


class NominalLimitError(ValueError):
    """The generated nominal violates the CMG momentum or momentum-rate limit."""

    def __init__(self, report: "NominalReport"):
        self.report = report
        super().__init__(report.summary())


class NominalFormatError(ValueError):
    """Malformed trajectory file."""


@dataclass(frozen=True)
class BoundaryConditions:
    sigma0: np.ndarray
    sigmaf: np.ndarray
    omega0: np.ndarray
    omegaf: np.ndarray
    hc0: np.ndarray
    hcf: np.ndarray
    t0: float = 0.0
    tf: float = 6000.0

    def __post_init__(self):
        for name in ("sigma0", "sigmaf", "omega0", "omegaf", "hc0", "hcf"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, v)
        check_mrp(self.sigma0)
        check_mrp(self.sigmaf)
        if not self.tf > self.t0:
            raise ValueError("boundary conditions require tf > t0")

    @classmethod
    def reference_maneuver(cls) -> "BoundaryConditions":
        """The -90 deg station maneuver used throughout the examples (6000 s)."""
        return cls(
            sigma0=np.array([0.01352, -0.04144, 0.05742]),
            sigmaf=np.array([-0.03636, -0.02063, -0.41360]),
            omega0=np.array([-0.2541e-3, -1.1145e-3, 0.0826e-3]),
            omegaf=np.array([1.1353e-3, 0.0030e-3, -0.1571e-3]),
            hc0=np.array([-672.5, -237.3, -5276.8]),
            hcf=np.array([-12.2, -4822.6, -183.0]),
            t0=0.0,
            tf=6000.0,
        )


class NominalSample(NamedTuple):
    sigma: np.ndarray
    sigma_dot: np.ndarray
    sigma_ddot: np.ndarray
    omega: np.ndarray
    h_cmg: np.ndarray
    H_orbit: np.ndarray


@dataclass(frozen=True)
class NominalTrajectory:
    """Uniformly sampled reference trajectory.

    ``u`` (required control torque) and ``poly`` (coefficients in normalised
    time ``s = (t - t0)/(tf - t0)``) are present only for generated
    trajectories.
    """

    t: np.ndarray
    sigma: np.ndarray
    sigma_dot: np.ndarray
    sigma_ddot: np.ndarray
    omega: np.ndarray
    h_cmg: np.ndarray
    H_orbit: np.ndarray
    u: Optional[np.ndarray] = field(default=None, compare=False)
    poly: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("trajectory needs at least two samples")
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise ValueError("trajectory time must be strictly increasing")
        if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(dt[0])):
            raise ValueError("trajectory time grid must be uniform")
        object.__setattr__(self, "t", t)
        for name in _FIELDS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (t.size, 3):
                raise ValueError(f"{name} must have shape ({t.size}, 3), got {arr.shape}")
            object.__setattr__(self, name, arr)

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def tf(self) -> float:
        return float(self.t[-1])

    @property
    def step(self) -> float:
        return (self.tf - self.t0) / (self.t.size - 1)

    def __len__(self) -> int:
        return self.t.size

    @cached_property
    def _splines(self):
        t = self.t
        return (
            CubicHermiteSpline(t, self.sigma, self.sigma_dot, axis=0),
            CubicHermiteSpline(t, self.sigma_dot, self.sigma_ddot, axis=0),
            CubicSpline(t, self.sigma_ddot, axis=0),
            CubicSpline(t, self.omega, axis=0),
            CubicSpline(t, self.h_cmg, axis=0),
            CubicSpline(t, self.H_orbit, axis=0),
        )

    def grid_index(self, t: float) -> Optional[int]:
        """Index of ``t`` on the grid, or ``None`` when ``t`` falls between samples."""
        x = (t - self.t0) / self.step
        i = int(round(x))
        if abs(x - i) < 1e-9 and 0 <= i < self.t.size:
            return i
        return None

    def sample(self, t: float) -> NominalSample:
        """Reference values at ``t``: exact on grid points, cubic Hermite between."""
        if not (self.t0 - 1e-9 <= t <= self.tf + 1e-9):
            raise ValueError(f"t={t} outside nominal span [{self.t0}, {self.tf}]")
        i = self.grid_index(t)
        if i is not None:
            return NominalSample(*(getattr(self, name)[i] for name in _FIELDS))
        return NominalSample(*(s(t) for s in self._splines))

    def with_fields(self, **changes) -> "NominalTrajectory":
        data = {name: getattr(self, name) for name in ("t",) + _FIELDS + ("u", "poly")}
        data.update(changes)
        return NominalTrajectory(**data)


def sample(traj: NominalTrajectory, t: float) -> NominalSample:
    return traj.sample(t)


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------


def _quintic_coefficients(bounds: BoundaryConditions, params: SpacecraftParams) -> np.ndarray:
    """Quintic coefficients in normalised time, shape ``(6, 3)``."""
    span = bounds.tf - bounds.t0
    n = params.orbit_rate
    ds0 = matvec(kinematic_matrix(bounds.sigma0), bounds.omega0 - orbit_rate_body(bounds.sigma0, n))
    dsf = matvec(kinematic_matrix(bounds.sigmaf), bounds.omegaf - orbit_rate_body(bounds.sigmaf, n))
    A = np.array(
        [
            [1, 0, 0, 0, 0, 0],
            [0, 1, 0, 0, 0, 0],
            [0, 0, 2, 0, 0, 0],
            [1, 1, 1, 1, 1, 1],
            [0, 1, 2, 3, 4, 5],
            [0, 0, 2, 6, 12, 20],
        ],
        dtype=float,
    )
    rhs = np.vstack([bounds.sigma0, ds0 * span, np.zeros(3), bounds.sigmaf, dsf * span, np.zeros(3)])
    return np.linalg.solve(A, rhs)


def shape_basis(k: int) -> np.ndarray:
    """Coefficients of ``64 s^3 (1 - s)^3 s^k`` (unit peak for k = 0)."""
    b = 64.0 * P.polymul(P.polypow([0.0, 1.0], 3), P.polypow([1.0, -1.0], 3))
    return P.polymul(b, [0.0] * k + [1.0])


def polynomial_coefficients(bounds: BoundaryConditions, params: SpacecraftParams, shape=None) -> np.ndarray:
    """Attitude polynomial in normalised time, shape ``(degree + 1, 3)``."""
    coeffs = _quintic_coefficients(bounds, params)
    if shape is None:
        return coeffs
    shape = np.atleast_2d(np.asarray(shape, dtype=float))
    if shape.size == 0:
        return coeffs
    if shape.shape[-1] != 3:
        raise ValueError("shape coefficients must have shape (K, 3)")
    out = np.zeros((7 + shape.shape[0], 3))
    out[:6] = coeffs
    for k, c in enumerate(shape):
        b = shape_basis(k)
        out[: b.size] += b[:, None] * c[None, :]
    return out


def _poly_eval(coeffs: np.ndarray, s, span: float, order: int) -> np.ndarray:
    c = coeffs
    for _ in range(order):
        c = P.polyder(c, axis=0)
    return np.moveaxis(P.polyval(s, c), 0, -1) / span**order


def kinematic_profile(sigma, sigma_dot, sigma_ddot, t, params: SpacecraftParams, model: TorqueModel):
    """Body rate, its derivative and the control torque that realise an attitude profile.

    Returns ``(omega, omega_dot, u)`` with ``u = tau_e - w x (J w) - J w_dot``.
    """
    n = params.orbit_rate
    w_o = orbit_rate_body(sigma, n)
    T_inv = kinematic_matrix_inverse(sigma)
    w_rel = matvec(T_inv, sigma_dot)
    omega = w_rel + w_o
    T_dot = kinematic_matrix_rate(sigma, sigma_dot)
    omega_dot = matvec(T_inv, sigma_ddot - matvec(T_dot, w_rel)) - cross(w_rel, w_o)
    tau = environmental_torque_body(sigma, t, model)
    u = tau - cross(omega, matvec(params.inertia, omega)) - matvec(params.inertia, omega_dot)
    return omega, omega_dot, u


def generate_nominal(
    bounds: BoundaryConditions,
    params: SpacecraftParams,
    model: TorqueModel,
    step: float = 1.0,
    shape=None,
    check: bool = True,
    hdot_threshold: float = 0.8,
) -> NominalTrajectory:
    """Dynamically consistent polynomial nominal.

    Parameters
    ----------
    shape : array_like, optional
        ``(K, 3)`` interior shape coefficients; ``None`` gives the pure quintic.
    check : bool
        Raise :class:`NominalLimitError` when ``|h_c|`` exceeds ``h_max`` or
        ``|dh_c/dt|`` exceeds ``hdot_threshold * hdot_max``.
    """
    span = bounds.tf - bounds.t0
    n_steps = span / step
    if step <= 0 or abs(n_steps - round(n_steps)) > 1e-9 * max(1.0, n_steps):
        raise ValueError(f"step {step} must divide the span {span}")
    n_steps = int(round(n_steps))
    coeffs = polynomial_coefficients(bounds, params, shape)
    t = bounds.t0 + span * np.arange(n_steps + 1) / n_steps
    s = (t - bounds.t0) / span
    sig = _poly_eval(coeffs, s, span, 0)
    sig_d = _poly_eval(coeffs, s, span, 1)
    sig_dd = _poly_eval(coeffs, s, span, 2)
    sig[0], sig[-1] = bounds.sigma0, bounds.sigmaf
    sig_dd[0] = sig_dd[-1] = 0.0
    omega, _, u = kinematic_profile(sig, sig_d, sig_dd, t, params, model)
    omega[0], omega[-1] = bounds.omega0, bounds.omegaf

    def profile_at(tt):
        ss = np.array([(tt - bounds.t0) / span])
        w, _, uu = kinematic_profile(
            _poly_eval(coeffs, ss, span, 0),
            _poly_eval(coeffs, ss, span, 1),
            _poly_eval(coeffs, ss, span, 2),
            np.array([tt]),
            params,
            model,
        )
        return w[0], uu[0]

    def cmg_rhs(tt, h):
        w, uu = profile_at(tt)
        return uu - cross(w, h)

    sol = solve_ivp(
        cmg_rhs, (bounds.t0, bounds.tf), bounds.hc0, method="DOP853",
        t_eval=t, rtol=1e-12, atol=1e-8,
    )
    if not sol.success:
        raise RuntimeError(f"CMG momentum integration failed: {sol.message}")
    h = sol.y.T
    h[0] = bounds.hc0
    H_o = matvec(transpose(rotation_o_to_b(sig)), h + matvec(params.inertia, omega))
    traj = NominalTrajectory(
        t=t, sigma=sig, sigma_dot=sig_d, sigma_ddot=sig_dd, omega=omega,
        h_cmg=h, H_orbit=H_o, u=u, poly=coeffs,
    )
    if check:
        report = validate(traj, params, threshold=hdot_threshold)
        if not report.passed:
            raise NominalLimitError(report)
    return traj


# ---------------------------------------------------------------------------
# Shape optimisation
# ---------------------------------------------------------------------------


def momentum_by_quadrature(
    bounds: BoundaryConditions,
    params: SpacecraftParams,
    model: TorqueModel,
    shape=None,
    step: float = 10.0,
):
    """CMG momentum along a polynomial profile from inertial momentum balance.

    The inertial total momentum changes only by the integrated environmental
    torque, so ``h_c = R R_oi^T (H_i(t0) + int tau_i) - J w`` needs a
    quadrature instead of an ODE solve.  Returns ``(t, h_c, u, omega)``.
    """
    span = bounds.tf - bounds.t0
    m = int(round(span / step))
    t = bounds.t0 + span * np.arange(m + 1) / m
    s = (t - bounds.t0) / span
    coeffs = polynomial_coefficients(bounds, params, shape)
    sig = _poly_eval(coeffs, s, span, 0)
    sig_d = _poly_eval(coeffs, s, span, 1)
    sig_dd = _poly_eval(coeffs, s, span, 2)
    omega, _, u = kinematic_profile(sig, sig_d, sig_dd, t, params, model)
    R = rotation_o_to_b(sig)
    R_oi = orbit_to_inertial(t, params.orbit_rate, bounds.t0)
    tau_i = matvec(R_oi, environmental_torque_orbit(sig, t, model))
    H_i0 = matvec(R[0].T, bounds.hc0 + params.inertia @ omega[0])
    H_i = H_i0 + cumulative_simpson(tau_i, x=t, axis=0, initial=0.0)
    H_b = matvec(R, matvec(transpose(R_oi), H_i))
    return t, H_b - matvec(params.inertia, omega), u, omega


@dataclass
class ShapeFit:
    shape: np.ndarray
    cost: float
    peak_momentum: float
    terminal_error: float
    starts: int


def optimize_shape(
    bounds: BoundaryConditions,
    params: SpacecraftParams,
    model: TorqueModel,
    terms: int = 4,
    starts: int = 8,
    seed: int = 0,
    envelope_fraction: float = 0.7,
    hdot_threshold: float = 0.8,
    start_scale: float = 1.0,
    initial=None,
    step: float = 10.0,
    terminal_weight: float = 1.0,
    torque_weight: float = 0.0,
    torque_ramp: float = 0.0,
    max_nfev: Optional[int] = None,
) -> ShapeFit:
    """Tune interior shape coefficients by multi-start nonlinear least squares.

    Residuals: terminal CMG momentum error against ``bounds.hcf`` (per kN m s,
    times ``terminal_weight``), excess of ``|h_c|`` over
    ``envelope_fraction * h_max``, excess of ``|dh_c/dt|`` over
    ``hdot_threshold * hdot_max``, the RMS control torque (N m, times
    ``torque_weight`` and the time ramp ``((t - t0) / (tf - t0))**torque_ramp``)
    and a small coefficient penalty.  A positive ramp favours nominals that
    finish their momentum exchange early.
    """
    cap = envelope_fraction * params.h_max
    rate_cap = hdot_threshold * params.hdot_max

    def residuals(x):
        shape = x.reshape(terms, 3)
        t, h, u, omega = momentum_by_quadrature(bounds, params, model, shape, step)
        h_norm = np.linalg.norm(h, axis=1)
        hdot_norm = np.linalg.norm(u - cross(omega, h), axis=1)
        ramp = ((t[::3] - bounds.t0) / (bounds.tf - bounds.t0)) ** torque_ramp
        u_rms = (u[::3] * ramp[:, None]).ravel() / np.sqrt(ramp.size)
        return np.concatenate(
            [
                terminal_weight * (h[-1] - bounds.hcf) / 1e3,
                torque_weight * u_rms,
                3.0 * np.maximum(h_norm[::3] - cap, 0.0) / 1e3,
                np.maximum(hdot_norm[::3] - rate_cap, 0.0) / 10.0,
                1e-2 * x,
            ]
        )

    rng = np.random.default_rng(seed)
    guesses = [np.zeros(3 * terms) if initial is None else np.asarray(initial, float).ravel()]
    guesses += [rng.normal(scale=start_scale, size=3 * terms) for _ in range(max(starts - 1, 0))]
    best = None
    for x0 in guesses:
        fit = least_squares(residuals, x0, max_nfev=max_nfev or 400 * terms)
        if best is None or fit.cost < best.cost:
            best = fit
    shape = best.x.reshape(terms, 3)
    _, h, _, _ = momentum_by_quadrature(bounds, params, model, shape, step)
    return ShapeFit(
        shape=shape,
        cost=float(best.cost),
        peak_momentum=float(np.max(np.linalg.norm(h, axis=1))),
        terminal_error=float(np.linalg.norm(h[-1] - bounds.hcf)),
        starts=len(guesses),
    )


# ---------------------------------------------------------------------------
# Validation and file I/O
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NominalReport:
    max_h: float
    t_max_h: float
    max_hdot: float
    t_max_hdot: float
    h_limit: float
    hdot_limit: float

    @property
    def h_ok(self) -> bool:
        return self.max_h <= self.h_limit

    @property
    def hdot_ok(self) -> bool:
        return self.max_hdot <= self.hdot_limit

    @property
    def passed(self) -> bool:
        return self.h_ok and self.hdot_ok

    def summary(self) -> str:
        def mark(ok):
            return "ok" if ok else "VIOLATED"

        return (
            f"max |h_c| = {self.max_h:.2f} Nms at t = {self.t_max_h:.1f} s "
            f"(limit {self.h_limit:.2f}, {mark(self.h_ok)}); "
            f"max |dh_c/dt| = {self.max_hdot:.3f} Nm at t = {self.t_max_hdot:.1f} s "
            f"(limit {self.hdot_limit:.3f}, {mark(self.hdot_ok)})"
        )


def validate(traj: NominalTrajectory, params: SpacecraftParams, threshold: float = 0.8) -> NominalReport:
    """Peak CMG momentum and momentum rate against ``h_max`` and ``threshold * hdot_max``."""
    h_norm = np.linalg.norm(traj.h_cmg, axis=1)
    if traj.u is not None:
        hdot = traj.u - cross(traj.omega, traj.h_cmg)
    else:
        hdot = np.gradient(traj.h_cmg, traj.t, axis=0, edge_order=2)
    hdot_norm = np.linalg.norm(hdot, axis=1)
    i, j = int(np.argmax(h_norm)), int(np.argmax(hdot_norm))
    return NominalReport(
        max_h=float(h_norm[i]),
        t_max_h=float(traj.t[i]),
        max_hdot=float(hdot_norm[j]),
        t_max_hdot=float(traj.t[j]),
        h_limit=params.h_max,
        hdot_limit=threshold * params.hdot_max,
    )


def export_csv(traj: NominalTrajectory, path) -> None:
    data = np.column_stack([traj.t] + [getattr(traj, name) for name in _FIELDS])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in data:
            writer.writerow([repr(float(x)) for x in row])


def import_csv(path) -> NominalTrajectory:
    """Read a trajectory file; schema problems raise :class:`NominalFormatError`."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise NominalFormatError(f"{path}: empty file") from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise NominalFormatError(f"{path}: line 1: missing column(s) {', '.join(missing)}")
        unknown = [c for c in header if c not in CSV_COLUMNS]
        if unknown:
            raise NominalFormatError(f"{path}: line 1: unknown column(s) {', '.join(unknown)}")
        if len(set(header)) != len(header):
            raise NominalFormatError(f"{path}: line 1: duplicate column names")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise NominalFormatError(
                    f"{path}: line {lineno}: expected {len(header)} fields, got {len(raw)}"
                )
            vals = []
            for col, cell in zip(header, raw):
                try:
                    v = float(cell)
                except ValueError:
                    raise NominalFormatError(
                        f"{path}: line {lineno}, column '{col}': not a number: {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise NominalFormatError(f"{path}: line {lineno}, column '{col}': non-finite value")
                vals.append(v)
            rows.append((lineno, vals))
    if len(rows) < 2:
        raise NominalFormatError(f"{path}: need at least two data rows")
    data = np.array([v for _, v in rows])
    cols = {name: data[:, header.index(name)] for name in CSV_COLUMNS}
    t = cols["t"]
    dt = np.diff(t)
    bad = np.flatnonzero(dt <= 0)
    if bad.size:
        raise NominalFormatError(
            f"{path}: line {rows[bad[0] + 1][0]}, column 't': time not strictly increasing"
        )
    step = (t[-1] - t[0]) / (t.size - 1)
    bad = np.flatnonzero(np.abs(dt - step) > 1e-9 * max(1.0, step))
    if bad.size:
        raise NominalFormatError(
            f"{path}: line {rows[bad[0] + 1][0]}, column 't': non-uniform time step"
        )

    def vec(prefix):
        return np.column_stack([cols[f"{prefix}{k}"] for k in (1, 2, 3)])

    return NominalTrajectory(
        t=t, sigma=vec("s"), sigma_dot=vec("ds"), sigma_ddot=vec("dds"),
        omega=vec("w"), h_cmg=vec("hc"), H_orbit=vec("Ho"),
    )
