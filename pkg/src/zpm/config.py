"""INI configuration: defaults, ``section.key=value`` overrides and object builders."""

from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .attitude import mrp_from_principal
from .dynamics import SpacecraftParams
from .environment import AeroParams, DisturbanceSpec, TorqueModel
from .experiments import ErrorSpec
from .guidance_adjust import AdjustGains
from .integrate import IntegratorSettings
from .nominal import BoundaryConditions, NominalTrajectory, generate_nominal, import_csv
from .simulation import InitialError, Scenario
from .tracking import CmgLimits, TrackerGains


class ConfigError(ValueError):
    pass


# Interior shape of the default nominal; see ``nominal.optimize_shape``.
DEFAULT_SHAPE = """
    0.61678586, 0.2072163, 0.16305496,
    -0.87556644, -1.41533769, -2.26231722,
    2.70921013, 1.17255679, 5.71977769,
    -2.46123486, -0.73490013, -4.40583377"""

DEFAULTS = f"""
# All quantities in SI units; vectors and matrices are comma-separated, row-major.

[spacecraft]
inertia = 24180443, 3780010, 3896127,
          3780010, 37607882, -1171169,
          3896127, -1171169, 51562389
orbit_rate = 1.1461e-3
h_max = 19524
hdot_max = 271.16
mu = 3.986004418e14

[aero]
area = 500
cp_offset = -9.70, 1.71, 1.74
density = 2e-11
drag_coeff = 2.2
# empty: circular-orbit speed from orbit_rate and mu
wind_speed =
corotation_factor = 1.0

[maneuver]
t0 = 0
tf = 6000
sigma0 = 0.01352, -0.04144, 0.05742
sigmaf = -0.03636, -0.02063, -0.41360
omega0 = -0.2541e-3, -1.1145e-3, 0.0826e-3
omegaf = 1.1353e-3, 0.0030e-3, -0.1571e-3
hc0 = -672.5, -237.3, -5276.8
hcf = -12.2, -4822.6, -183.0

[nominal]
step = 1.0
# (K, 3) interior shape coefficients, flattened; empty for the pure quintic
shape = {DEFAULT_SHAPE}
hdot_threshold = 0.8
# optional CSV to import instead of generating
file =

[truth]
inertia_scale = 1.0
gravity_gradient = true
aerodynamic = true
# empty: no disturbance torque
disturbance_vd =
disturbance_frame = body

[controller]
# truth: the tracker knows the actual inertia; nominal: it uses the planning inertia
inertia = truth

[adjust]
k_a = 5e-8
k_r1 = 1.6
k_r2 = 1.6
sigma_cap = 0.05
b4_transpose_compat = false

[tracker]
omega_n = 0.01
zeta = 0.707

[simulation]
mode = rtac
# 0 evaluates the control law continuously inside the integrator
dt_ctrl = 1.0
zoh_midpoint = true
log_step = 1.0
rtol = 1e-6
atol = 1e-9
fd_step = 1e-6

[initial_error]
attitude_axis = 1, 0, 0
attitude_angle_deg = 0
omega = 0, 0, 0
h_cmg = 0, 0, 0

[montecarlo]
attitude_angle_deg = 5.0
omega_frac = 0.05
hc_mag = 1000
# empty: nominal inertia; otherwise lo, hi
inertia_scale_range =
inertia_mode = principal
disturbance_vd =
samples = 100
seed = 0
chunk = 50
"""


def load(path: Optional[str] = None, overrides: Iterable[str] = ()) -> configparser.ConfigParser:
    """Defaults, then the file at ``path``, then ``section.key=value`` overrides."""
    cfg = configparser.ConfigParser(inline_comment_prefixes=None)
    cfg.read_string(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            extra = configparser.ConfigParser()
            extra.read(p)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in extra.sections():
            if not cfg.has_section(section):
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, value in extra.items(section):
                if not cfg.has_option(section, key):
                    raise ConfigError(f"{path}: unknown key {section}.{key}")
                cfg.set(section, key, value)
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        if not cfg.has_option(section, option):
            raise ConfigError(f"unknown config key {section}.{option}")
        cfg.set(section, option, value.strip())
    return cfg


def floats(cfg, section: str, key: str, size: Optional[int] = None) -> Optional[np.ndarray]:
    raw = cfg.get(section, key).strip()
    if not raw:
        return None
    try:
        arr = np.array([float(x) for x in raw.replace("\n", " ").split(",") if x.strip()])
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc
    if size is not None and arr.size != size:
        raise ConfigError(f"{section}.{key}: expected {size} values, got {arr.size}")
    return arr


def _get(cfg, section, key, kind=float):
    try:
        if kind is bool:
            return cfg.getboolean(section, key)
        return kind(cfg.get(section, key))
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc


def spacecraft(cfg) -> SpacecraftParams:
    return SpacecraftParams(
        inertia=floats(cfg, "spacecraft", "inertia", 9).reshape(3, 3),
        orbit_rate=_get(cfg, "spacecraft", "orbit_rate"),
        h_max=_get(cfg, "spacecraft", "h_max"),
        hdot_max=_get(cfg, "spacecraft", "hdot_max"),
        mu=_get(cfg, "spacecraft", "mu"),
    )


def aero(cfg, params: SpacecraftParams) -> AeroParams:
    kw = dict(
        area=_get(cfg, "aero", "area"),
        cp_offset=floats(cfg, "aero", "cp_offset", 3),
        density=_get(cfg, "aero", "density"),
        drag_coeff=_get(cfg, "aero", "drag_coeff"),
        corotation_factor=_get(cfg, "aero", "corotation_factor"),
    )
    if cfg.get("aero", "wind_speed").strip():
        return AeroParams(wind_speed=_get(cfg, "aero", "wind_speed"), **kw)
    return AeroParams.for_orbit(params.orbit_rate, params.mu, **kw)


def bounds(cfg) -> BoundaryConditions:
    return BoundaryConditions(
        sigma0=floats(cfg, "maneuver", "sigma0", 3),
        sigmaf=floats(cfg, "maneuver", "sigmaf", 3),
        omega0=floats(cfg, "maneuver", "omega0", 3),
        omegaf=floats(cfg, "maneuver", "omegaf", 3),
        hc0=floats(cfg, "maneuver", "hc0", 3),
        hcf=floats(cfg, "maneuver", "hcf", 3),
        t0=_get(cfg, "maneuver", "t0"),
        tf=_get(cfg, "maneuver", "tf"),
    )


def planning_model(cfg) -> TorqueModel:
    params = spacecraft(cfg)
    return TorqueModel(params, aero(cfg, params))


def shape(cfg) -> Optional[np.ndarray]:
    s = floats(cfg, "nominal", "shape")
    if s is None:
        return None
    if s.size % 3:
        raise ConfigError("nominal.shape needs a multiple of 3 values")
    return s.reshape(-1, 3)


def nominal(cfg, check: bool = True) -> NominalTrajectory:
    """Import ``nominal.file`` when set, otherwise generate from the maneuver bounds."""
    path = cfg.get("nominal", "file").strip()
    if path:
        return import_csv(path)
    model = planning_model(cfg)
    return generate_nominal(
        bounds(cfg), model.params, model,
        step=_get(cfg, "nominal", "step"), shape=shape(cfg), check=check,
        hdot_threshold=_get(cfg, "nominal", "hdot_threshold"),
    )


def scenario(cfg, nominal_traj: NominalTrajectory, mode: Optional[str] = None) -> Scenario:
    planning = planning_model(cfg)
    params = planning.params
    scale = _get(cfg, "truth", "inertia_scale")
    truth_params = dataclasses.replace(params, inertia=params.inertia * scale)
    vd = floats(cfg, "truth", "disturbance_vd", 3)
    dist = None
    if vd is not None:
        dist = DisturbanceSpec(
            v_d=vd, t0=nominal_traj.t0, tf=nominal_traj.tf, frame=cfg.get("truth", "disturbance_frame")
        )
    truth = TorqueModel(
        truth_params, planning.aero, dist,
        gravity_gradient=_get(cfg, "truth", "gravity_gradient", bool),
        aerodynamic=_get(cfg, "truth", "aerodynamic", bool),
    )
    which = cfg.get("controller", "inertia").strip()
    if which not in ("truth", "nominal"):
        raise ConfigError("controller.inertia must be 'truth' or 'nominal'")
    controller = planning.with_params(truth_params if which == "truth" else params)
    axis = floats(cfg, "initial_error", "attitude_axis", 3)
    angle = np.radians(_get(cfg, "initial_error", "attitude_angle_deg"))
    err = InitialError(
        sigma=mrp_from_principal(axis / np.linalg.norm(axis), angle),
        omega=floats(cfg, "initial_error", "omega", 3),
        h_cmg=floats(cfg, "initial_error", "h_cmg", 3),
    )
    return Scenario(
        nominal=nominal_traj,
        truth=truth,
        controller=controller,
        planning=planning,
        mode=mode or cfg.get("simulation", "mode"),
        adjust=AdjustGains(
            k_a=_get(cfg, "adjust", "k_a"), k_r1=_get(cfg, "adjust", "k_r1"),
            k_r2=_get(cfg, "adjust", "k_r2"), sigma_cap=_get(cfg, "adjust", "sigma_cap"),
            b4_transpose_compat=_get(cfg, "adjust", "b4_transpose_compat", bool),
        ),
        tracker=TrackerGains(_get(cfg, "tracker", "omega_n"), _get(cfg, "tracker", "zeta")),
        limits=CmgLimits.from_params(params),
        initial_error=err,
        integrator=IntegratorSettings(rtol=_get(cfg, "simulation", "rtol"), atol=_get(cfg, "simulation", "atol")),
        dt_ctrl=_get(cfg, "simulation", "dt_ctrl"),
        zoh_midpoint=_get(cfg, "simulation", "zoh_midpoint", bool),
        log_step=_get(cfg, "simulation", "log_step"),
        fd_step=_get(cfg, "simulation", "fd_step"),
    )


def error_spec(cfg) -> ErrorSpec:
    rng = floats(cfg, "montecarlo", "inertia_scale_range", 2)
    return ErrorSpec(
        attitude_angle_deg=_get(cfg, "montecarlo", "attitude_angle_deg"),
        omega_frac=_get(cfg, "montecarlo", "omega_frac"),
        hc_mag=_get(cfg, "montecarlo", "hc_mag"),
        inertia_scale_range=None if rng is None else (float(rng[0]), float(rng[1])),
        inertia_mode=cfg.get("montecarlo", "inertia_mode").strip(),
        v_d=floats(cfg, "montecarlo", "disturbance_vd", 3),
    )


def dump(cfg, path) -> None:
    with open(path, "w") as fh:
        cfg.write(fh)
