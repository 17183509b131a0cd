"""Monte-Carlo robustness campaigns, statistics and plot files.

Each sample draws its initial errors (and inertia scaling) from a generator
seeded by ``(master_seed, sample_index)`` only, so draws do not depend on
execution order, on batch size or on the guidance mode.  Every requested mode
runs on the same draw (paired comparison).
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .attitude import mrp_from_principal
from .dynamics import SpacecraftParams
from .environment import DisturbanceSpec
from .simulation import (
    MODES,
    InitialError,
    Scenario,
    SimLog,
    TerminalErrors,
    run_batch,
    terminal_metrics,
)

log = logging.getLogger(__name__)

METRICS = TerminalErrors._fields
INERTIA_MODES = ("principal", "global")


class CampaignError(RuntimeError):
    """More than the tolerated fraction of runs failed; ``result`` holds what completed."""

    def __init__(self, message: str, result: "CampaignResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class ErrorSpec:
    """Magnitudes of the random initial errors and model perturbations.

    Attributes
    ----------
    attitude_angle_deg : float
        Principal angle of the attitude error about a random axis.
    omega_frac : float
        Rate error magnitude as a fraction of the orbit rate.
    hc_mag : float
        CMG momentum error magnitude, N m s.
    inertia_scale_range : (float, float) or None
        Uniform range of the inertia scale factors.  ``None`` keeps the
        nominal inertia.
    inertia_mode : {"principal", "global"}
        ``principal`` scales each principal moment independently (principal
        axes unchanged); ``global`` scales the whole matrix by one factor.
    v_d : array_like or None
        Peak of the disturbance torque added to the truth model.
    """

    attitude_angle_deg: float = 5.0
    omega_frac: float = 0.05
    hc_mag: float = 1000.0
    inertia_scale_range: Optional[tuple[float, float]] = None
    inertia_mode: str = "principal"
    v_d: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.attitude_angle_deg < 0 or self.omega_frac < 0 or self.hc_mag < 0:
            raise ValueError("error magnitudes must be non-negative")
        if self.inertia_scale_range is not None:
            lo, hi = (float(x) for x in self.inertia_scale_range)
            if not 0 < lo <= hi:
                raise ValueError("inertia_scale_range needs 0 < lo <= hi")
            object.__setattr__(self, "inertia_scale_range", (lo, hi))
        if self.inertia_mode not in INERTIA_MODES:
            raise ValueError(f"inertia_mode must be one of {INERTIA_MODES}")
        if self.v_d is not None:
            v = np.asarray(self.v_d, dtype=float)
            if v.shape != (3,):
                raise ValueError("v_d must be a 3-vector")
            object.__setattr__(self, "v_d", v)

    @classmethod
    def initial_state(cls) -> "ErrorSpec":
        """Random initial errors only: 5 deg, 0.05 n, 1000 N m s."""
        return cls(5.0, 0.05, 1000.0)

    @classmethod
    def disturbance(cls) -> "ErrorSpec":
        """Initial errors plus an unmodelled disturbance with peak (1.5, 1.5, 1.5) N m."""
        return cls(5.0, 0.05, 1000.0, v_d=np.full(3, 1.5))

    @classmethod
    def inertia_uncertainty(cls) -> "ErrorSpec":
        """3 deg, 0.03 n, 800 N m s, principal moments 95-105 %, disturbance 1.5 N m."""
        return cls(3.0, 0.03, 800.0, inertia_scale_range=(0.95, 1.05), v_d=np.full(3, 1.5))


class ErrorDraw(NamedTuple):
    """Concrete perturbations of one Monte-Carlo sample."""

    index: int
    attitude_axis: np.ndarray
    omega_dir: np.ndarray
    hc_dir: np.ndarray
    inertia_scale: np.ndarray
    initial_error: InitialError

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.attitude_axis, self.omega_dir, self.hc_dir, self.inertia_scale):
            h.update(np.ascontiguousarray(a, dtype=float).tobytes())
        return h.hexdigest()[:16]


def _unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def sample_errors(spec: ErrorSpec, sample_index: int, master_seed: int, orbit_rate: float) -> ErrorDraw:
    """Draw the perturbations of sample ``sample_index``.

    Directions are normalised standard normals.  All variates are always
    drawn in the same order, so changing one magnitude leaves the other
    draws untouched.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(master_seed), int(sample_index)]))
    axis = _unit(rng)
    w_dir = _unit(rng)
    h_dir = _unit(rng)
    u = rng.random(3)
    if spec.inertia_scale_range is None:
        scale = np.ones(3)
    else:
        lo, hi = spec.inertia_scale_range
        scale = lo + (hi - lo) * u
        if spec.inertia_mode == "global":
            scale = np.full(3, scale[0])
    err = InitialError(
        sigma=mrp_from_principal(axis, np.radians(spec.attitude_angle_deg)),
        omega=spec.omega_frac * orbit_rate * w_dir,
        h_cmg=spec.hc_mag * h_dir,
    )
    return ErrorDraw(int(sample_index), axis, w_dir, h_dir, scale, err)


def scaled_inertia(J: np.ndarray, scale, mode: str = "principal") -> np.ndarray:
    """Scale the principal moments of ``J`` (ascending order) by ``scale``."""
    scale = np.asarray(scale, dtype=float)
    if mode == "global":
        return J * float(scale.reshape(-1)[0])
    vals, vecs = np.linalg.eigh(J)
    out = (vecs * (vals * scale)) @ vecs.T
    return 0.5 * (out + out.T)


def perturbed_scenario(base: Scenario, spec: ErrorSpec, draw: ErrorDraw, mode: str) -> Scenario:
    """Scenario of one sample and mode.

    The truth inertia is perturbed and the controller is given the same
    inertia (assumed identified on-line); planning keeps the nominal model.
    """
    truth, ctrl = base.truth, base.controller
    if spec.inertia_scale_range is not None:
        J = scaled_inertia(base.truth.params.inertia, draw.inertia_scale, spec.inertia_mode)
        p = dataclasses.replace(truth.params, inertia=J)
        truth = truth.with_params(p)
        ctrl = ctrl.with_params(p)
    if spec.v_d is not None:
        prev = truth.disturbance
        dist = DisturbanceSpec(
            v_d=spec.v_d,
            t0=base.nominal.t0 if prev is None else prev.t0,
            tf=base.nominal.tf if prev is None else prev.tf,
            frame="body" if prev is None else prev.frame,
        )
        truth = dataclasses.replace(truth, disturbance=dist, use_disturbance=True)
    return dataclasses.replace(
        base, truth=truth, controller=ctrl, mode=mode, initial_error=draw.initial_error
    )


@dataclass
class CampaignResult:
    """Per-sample terminal errors for each mode plus their aggregates.

    ``samples[mode]`` has shape ``(n_samples, 4)`` in :data:`METRICS` order;
    failed runs are NaN and excluded from the aggregates.
    """

    modes: tuple[str, ...]
    master_seed: int
    n_samples: int
    samples: dict[str, np.ndarray]
    ok: dict[str, np.ndarray]
    digests: list[str]
    max_hc: dict[str, np.ndarray] = field(default_factory=dict)
    logs: dict[tuple[int, str], SimLog] = field(default_factory=dict, repr=False)

    def aggregates(self) -> dict[str, dict[str, tuple[float, float]]]:
        out = {}
        for mode in self.modes:
            data = self.samples[mode][self.ok[mode]]
            out[mode] = {}
            for j, name in enumerate(METRICS):
                col = data[:, j]
                out[mode][name] = (
                    (float(np.mean(col)), float(np.max(col))) if col.size else (float("nan"), float("nan"))
                )
        return out

    def average(self, mode: str, metric: str = "hc_err_mag") -> float:
        return self.aggregates()[mode][metric][0]

    @property
    def failure_fraction(self) -> float:
        total = sum(v.size for v in self.ok.values())
        failed = sum(int(np.sum(~v)) for v in self.ok.values())
        return failed / total if total else 0.0


def run_campaign(
    base: Scenario,
    spec: ErrorSpec,
    n_samples: int,
    modes: Sequence[str] = MODES,
    master_seed: int = 0,
    chunk: int = 50,
    keep_logs: Sequence[int] = (),
    max_failure_fraction: float = 0.10,
) -> CampaignResult:
    """Run every mode on every sampled error set.

    Runs are grouped into batches of ``chunk`` samples (all modes of a sample
    in the same batch); results do not depend on ``chunk``.  Logs of the
    sample indices in ``keep_logs`` are retained for plotting.

    Raises
    ------
    CampaignError
        If more than ``max_failure_fraction`` of the runs fail.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    modes = tuple(modes)
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}")
    base = base.with_series()
    n = base.truth.params.orbit_rate
    draws = [sample_errors(spec, i, master_seed, n) for i in range(n_samples)]
    samples = {m: np.full((n_samples, len(METRICS)), np.nan) for m in modes}
    ok = {m: np.zeros(n_samples, dtype=bool) for m in modes}
    max_hc = {m: np.full(n_samples, np.nan) for m in modes}
    kept: dict[tuple[int, str], SimLog] = {}
    keep = set(int(i) for i in keep_logs)

    for start in range(0, n_samples, max(1, chunk)):
        idx = range(start, min(n_samples, start + max(1, chunk)))
        jobs = [(i, m) for i in idx for m in modes]
        if not jobs:
            continue
        scenarios = [perturbed_scenario(base, spec, draws[i], m) for i, m in jobs]
        logs = run_batch(scenarios)
        for sc, (i, m), lg in zip(scenarios, jobs, logs):
            ok[m][i] = lg.ok
            if lg.ok:
                samples[m][i] = terminal_metrics(lg, base.nominal, sc.truth.params.inertia)
                max_hc[m][i] = float(np.max(lg.h_norm))
            if i in keep:
                kept[(i, m)] = lg
        log.info("campaign: %d/%d samples done", idx.stop, n_samples)

    result = CampaignResult(
        modes=modes, master_seed=int(master_seed), n_samples=n_samples, samples=samples,
        ok=ok, digests=[d.digest() for d in draws], max_hc=max_hc, logs=kept,
    )
    if result.failure_fraction > max_failure_fraction:
        raise CampaignError(
            f"{result.failure_fraction:.1%} of runs failed (limit {max_failure_fraction:.0%})", result
        )
    return result


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

STATS_HEADER = ["mode", "metric", "avg", "max"]
SAMPLES_HEADER = ["sample", "mode", "ok", *METRICS, "max_hc_norm", "draw"]


def write_stats(result: CampaignResult, path) -> None:
    agg = result.aggregates()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STATS_HEADER)
        for mode in result.modes:
            for name in METRICS:
                avg, mx = agg[mode][name]
                w.writerow([mode, name, repr(avg), repr(mx)])


def write_samples(result: CampaignResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLES_HEADER)
        for i in range(result.n_samples):
            for mode in result.modes:
                row = result.samples[mode][i]
                w.writerow(
                    [i, mode, int(result.ok[mode][i]), *(repr(float(x)) for x in row),
                     repr(float(result.max_hc[mode][i])) if mode in result.max_hc else "nan",
                     result.digests[i]]
                )


def read_samples(path, master_seed: int = 0) -> CampaignResult:
    """Rebuild a result (without logs) from a per-sample CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    modes: list[str] = []
    for r in rows:
        if r["mode"] not in modes:
            modes.append(r["mode"])
    n = 1 + max((int(r["sample"]) for r in rows), default=-1)
    samples = {m: np.full((n, len(METRICS)), np.nan) for m in modes}
    ok = {m: np.zeros(n, dtype=bool) for m in modes}
    max_hc = {m: np.full(n, np.nan) for m in modes}
    digests = [""] * n
    for r in rows:
        i, m = int(r["sample"]), r["mode"]
        samples[m][i] = [float(r[k]) for k in METRICS]
        ok[m][i] = r["ok"] == "1"
        max_hc[m][i] = float(r["max_hc_norm"])
        digests[i] = r["draw"]
    return CampaignResult(tuple(modes), master_seed, n, samples, ok, digests, max_hc)


def read_stats(path) -> dict[str, dict[str, tuple[float, float]]]:
    out: dict[str, dict[str, tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.setdefault(r["mode"], {})[r["metric"]] = (float(r["avg"]), float(r["max"]))
    return out


def load_report(path, rtol: float = 1e-12) -> CampaignResult:
    """Read a report directory and check ``stats.csv`` against ``samples.csv``.

    Raises
    ------
    ValueError
        If the stored aggregates differ from those recomputed from the samples.
    """
    out = Path(path)
    result = read_samples(out / "samples.csv")
    stored = read_stats(out / "stats.csv")
    for mode, metrics in result.aggregates().items():
        for name, pair in metrics.items():
            ref = stored.get(mode, {}).get(name)
            if ref is None or not np.allclose(pair, ref, rtol=rtol, atol=0.0, equal_nan=True):
                raise ValueError(f"{out}: stats for {mode}/{name} do not match the samples")
    return result


def report(result: CampaignResult, path) -> list[Path]:
    """Write ``stats.csv``, ``samples.csv`` and plots of any retained logs into ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "stats.csv", out / "samples.csv"]
    write_stats(result, files[0])
    write_samples(result, files[1])
    by_sample: dict[int, dict[str, SimLog]] = {}
    for (i, m), lg in result.logs.items():
        by_sample.setdefault(i, {})[m] = lg
    for i, logs in sorted(by_sample.items()):
        for m, lg in logs.items():
            p = out / f"sample{i:03d}_{m}.csv"
            lg.to_csv(p)
            files.append(p)
        p = out / f"sample{i:03d}_compare.svg"
        plot_comparison(logs, p)
        files.append(p)
    return files


def table_row(term: TerminalErrors) -> list[str]:
    """Terminal errors in table order: attitude (deg), rate, CMG momentum, total momentum."""
    return [f"{term.attitude_principal_deg:.4e}", f"{term.omega_err_mag:.4e}",
            f"{term.hc_err_mag:.4e}", f"{term.H_err_mag:.4e}"]


# ---------------------------------------------------------------------------
# Plots
# ---------------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_log(simlog: SimLog, path, h_max: Optional[float] = None) -> None:
    """Attitude components, CMG momentum magnitude and momentum-error magnitude vs time."""
    plt = _pyplot()
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    for i in range(3):
        axes[0].plot(simlog.t, simlog.sigma[:, i], label=f"sigma{i + 1}")
    axes[0].set_ylabel("MRP")
    axes[0].legend(loc="best")
    axes[1].plot(simlog.t, simlog.h_norm)
    if h_max is not None:
        axes[1].axhline(h_max, color="k", ls="--", lw=0.8)
    axes[1].set_ylabel("|h_c| (N m s)")
    axes[2].plot(simlog.t, np.linalg.norm(simlog.delta_H, axis=1))
    axes[2].set_ylabel("|dH| (N m s)")
    axes[2].set_xlabel("t (s)")
    fig.suptitle(simlog.mode)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_comparison(logs: dict[str, SimLog], path) -> None:
    """Overlay of several modes on the same scenario."""
    plt = _pyplot()
    fig, axes = plt.subplots(5, 1, figsize=(7, 12), sharex=True)
    for mode, lg in logs.items():
        for i in range(3):
            axes[i].plot(lg.t, lg.sigma[:, i], label=mode)
        axes[3].plot(lg.t, lg.h_norm, label=mode)
        axes[4].plot(lg.t, np.linalg.norm(lg.delta_H, axis=1), label=mode)
    for i in range(3):
        axes[i].set_ylabel(f"sigma{i + 1}")
    axes[3].set_ylabel("|h_c| (N m s)")
    axes[4].set_ylabel("|dH| (N m s)")
    axes[4].set_xlabel("t (s)")
    axes[0].legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
