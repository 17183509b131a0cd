"""Acceptance suite: one test per criterion, reported as PASS/FAIL lines at the end of the run.

The campaign criteria run 100-sample Monte-Carlo sets and take several
minutes on one core.
"""

import dataclasses

import numpy as np
import pytest
import sympy as sp
from scipy.integrate import solve_ivp

from zpm import config
from zpm.attitude import kinematic_matrix, kinematic_matrix_inverse, skew
from zpm.dynamics import SpacecraftParams
from zpm.environment import DisturbanceSpec, TorqueModel
from zpm.experiments import ErrorSpec, report, run_campaign, sample_errors
from zpm.guidance_adjust import (
    AdjustGains,
    adjustment_rates,
    lyapunov_value,
    raw_adjustment,
    sensitivity_matrix,
)
from zpm.simulation import (
    InitialError,
    cmg_error_inertial,
    conservation_residual,
    run_batch,
    terminal_metrics,
)
from zpm.tracking import command_torque_array, mrp_acceleration

from conftest import random_mrps

SAMPLES = 100
SEED = 0
DH0 = np.array([4500.0, 0.0, 0.0])


def criterion(number, title):
    return pytest.mark.criterion(number, title)


def detail(record_property, text):
    record_property("detail", text)


@pytest.fixture(scope="module")
def ref(nominal, cfg):
    return config.scenario(cfg, nominal).with_series()


@pytest.fixture(scope="module")
def table2(ref):
    """Traditional, LTAC and RTAC runs from a (4500, 0, 0) N m s CMG momentum error."""
    sc = dataclasses.replace(ref, initial_error=InitialError(h_cmg=DH0))
    scs = [sc.with_mode(m) for m in ("traditional", "ltac", "rtac")]
    return scs, run_batch(scs)


@pytest.fixture(scope="module")
def random_directions(ref):
    rng = np.random.default_rng(2024)
    dirs = rng.standard_normal((10, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    scs = [dataclasses.replace(ref, mode="traditional", initial_error=InitialError(h_cmg=4500.0 * d)) for d in dirs]
    return scs, run_batch(scs)


@pytest.fixture(scope="module")
def exact(ref):
    sc = ref.with_mode("traditional")
    return sc, run_batch([sc])[0]


@pytest.fixture(scope="module")
def inertia_110(ref):
    p = dataclasses.replace(ref.truth.params, inertia=1.10 * ref.truth.params.inertia)
    scs = [dataclasses.replace(ref, truth=ref.truth.with_params(p), controller=ref.controller.with_params(p), mode=m)
           for m in ("traditional", "ltac", "rtac")]
    return scs, run_batch(scs)


@pytest.fixture(scope="module")
def saturation(ref):
    dist = DisturbanceSpec(v_d=np.full(3, 4.0), t0=ref.nominal.t0, tf=ref.nominal.tf)
    truth = dataclasses.replace(ref.truth, disturbance=dist)
    scs = [dataclasses.replace(ref, truth=truth, mode=m) for m in ("traditional", "ltac", "rtac")]
    return scs, run_batch(scs)


@criterion(1, "inertial momentum balance <= 1 N m s on every closed-loop run")
def test_c01_conservation(table2, random_directions, exact, inertia_110, saturation, record_property):
    worst = 0.0
    count = 0
    for scs, logs in (table2, random_directions, ([exact[0]], [exact[1]]), inertia_110, saturation):
        for sc, lg in zip(scs, logs):
            assert lg.ok, lg.error
            worst = max(worst, conservation_residual(lg, sc.truth))
            count += 1
    detail(record_property, f"max residual {worst:.3e} N m s over {count} runs")
    assert worst <= 1.0


@criterion(2, "traditional tracking keeps the inertial CMG momentum error at 4500 +/- 1 %")
def test_c02_inertial_invariance(table2, random_directions, nominal, params, record_property):
    lo, hi = np.inf, -np.inf
    runs = [table2[1][0]] + list(random_directions[1])
    for lg in runs:
        err = np.linalg.norm(cmg_error_inertial(lg, nominal, params.orbit_rate), axis=1)
        lo, hi = min(lo, err.min()), max(hi, err.max())
    detail(record_property, f"range [{lo:.2f}, {hi:.2f}] N m s over {len(runs)} directions")
    assert 4455.0 <= lo and hi <= 4545.0


@criterion(3, "terminal |dh_c|: rtac <= 45, ltac <= 450, traditional 4500 +/- 1 %, strictly ordered")
def test_c03_table2(table2, nominal, record_property):
    scs, logs = table2
    hc = [terminal_metrics(lg, nominal, sc.truth.params.inertia).hc_err_mag for sc, lg in zip(scs, logs)]
    detail(record_property, f"traditional {hc[0]:.2f}, ltac {hc[1]:.3f}, rtac {hc[2]:.3f} N m s")
    assert abs(hc[0] - 4500.0) <= 45.0
    assert hc[1] <= 450.0 and hc[2] <= 45.0
    assert hc[2] < hc[1] < hc[0]


@criterion(4, "LTAC Lyapunov function nonincreasing on the linearised momentum-error system")
def test_c04_ltac_lyapunov(series, params, record_property):
    gains = AdjustGains(k_r1=0.0, k_r2=0.0, sigma_cap=np.inf)
    W = skew(np.array([0.0, -params.orbit_rate, 0.0]))

    def rhs(t, dH):
        C = series.at(t)[0]
        return -W @ dH + C @ raw_adjustment(dH, C, gains)

    t_log = series.t
    sol = solve_ivp(rhs, (t_log[0], t_log[-1]), DH0, method="DOP853", t_eval=t_log, rtol=1e-11, atol=1e-9)
    assert sol.success
    V = lyapunov_value(sol.y.T)
    increase = np.max((V[1:] - V[:-1]) / V[:-1])
    ident = 0.0
    for k in range(0, t_log.size, 10):
        C = series.C[k]
        dH = sol.y[:, k]
        vdot = dH @ (-W @ dH + C @ raw_adjustment(dH, C, gains))
        expect = -gains.k_a * np.sum((C.T @ dH) ** 2)
        ident = max(ident, abs(vdot - expect) / abs(expect))
    detail(record_property, f"max relative step increase {increase:.2e}; V(tf)/V(t0) = {V[-1] / V[0]:.3e}; "
                            f"V-dot identity error {ident:.1e}")
    assert increase <= 1e-6
    assert ident <= 1e-9


@criterion(5, "feedback linearisation round trip and T^-1 T = I")
def test_c05_feedback_linearisation(model, params, record_property):
    rng = np.random.default_rng(5)
    n = 1000
    s = random_mrps(rng, n, 1.0)
    w = rng.normal(size=(n, 3)) * 5e-3
    v = rng.normal(size=(n, 3)) * 1e-5
    t = rng.uniform(0.0, 6000.0, n)
    u = command_torque_array(s, w, t, v, model, params)
    rt = np.max(np.linalg.norm(mrp_acceleration(s, w, t, u, model, params) - v, axis=1) / np.linalg.norm(v, axis=1))
    s2 = random_mrps(rng, n, 1.0)
    tt = np.max(np.abs(kinematic_matrix_inverse(s2) @ kinematic_matrix(s2) - np.eye(3)))
    detail(record_property, f"round-trip {rt:.1e} relative; T^-1 T {tt:.1e}")
    assert rt <= 1e-9 and tt <= 1e-12


@criterion(6, "exact traditional run: attitude error <= 1e-3 deg, rate error <= 1e-7 rad/s")
def test_c06_tracker_accuracy(exact, nominal, record_property):
    sc, lg = exact
    term = terminal_metrics(lg, nominal, sc.truth.params.inertia)
    detail(record_property, f"attitude {term.attitude_principal_deg:.3e} deg, rate {term.omega_err_mag:.3e} rad/s")
    assert term.attitude_principal_deg <= 1e-3 and term.omega_err_mag <= 1e-7


@criterion(7, "adjustment rates match time differentiation of the adjustment law (1e-3)")
def test_c07_chain_rule(series, params, record_property):
    n = params.orbit_rate
    W = skew(np.array([0.0, -n, 0.0]))
    gains = AdjustGains(sigma_cap=np.inf)
    compat = dataclasses.replace(gains, b4_transpose_compat=True)

    def rhs(t, dH):
        C = series.at(t)[0]
        return -W @ dH + C @ raw_adjustment(dH, C, gains)

    sol = solve_ivp(rhs, (0.0, 6000.0), DH0, method="DOP853", dense_output=True, rtol=1e-12, atol=1e-10)

    def d_sigma(t):
        return raw_adjustment(sol.sol(t), series.at(t)[0], gains)

    h = 0.5
    err = {False: 0.0, True: 0.0}
    for t in np.linspace(200.0, 5800.0, 29):
        fd1 = (d_sigma(t + h) - d_sigma(t - h)) / (2 * h)
        fd2 = (d_sigma(t + h) - 2 * d_sigma(t) + d_sigma(t - h)) / h**2
        C, Cd, Cdd = series.at(t)
        for g in (gains, compat):
            d1, d2 = adjustment_rates(sol.sol(t), d_sigma(t), C, Cd, Cdd, g, n)
            e = max(np.linalg.norm(d1 - fd1) / np.linalg.norm(fd1), np.linalg.norm(d2 - fd2) / np.linalg.norm(fd2))
            err[g.b4_transpose_compat] = max(err[g.b4_transpose_compat], e)
    detail(record_property, f"derived form {err[False]:.2e}; printed-transpose form {err[True]:.2e}")
    assert err[False] <= 1e-3


def _campaign_line(result):
    return ", ".join(f"{m} {result.average(m):.1f}" for m in result.modes)


@pytest.fixture(scope="module")
def disturbance_campaign(ref):
    return run_campaign(ref, ErrorSpec.disturbance(), SAMPLES, master_seed=SEED)


@criterion(8, "disturbance campaign: average terminal |dh_c| rtac < ltac < traditional, rtac <= 5 %")
def test_c08_disturbance_campaign(disturbance_campaign, record_property):
    r = disturbance_campaign
    t, l, a = (r.average(m) for m in ("traditional", "ltac", "rtac"))
    detail(record_property, f"{_campaign_line(r)} N m s (rtac/traditional {a / t:.1%}); "
                            f"failed runs {r.failure_fraction:.0%}")
    assert a < l < t and a <= 0.05 * t


@criterion(9, "inertia campaign ordering and 1.10 J case rtac <= 5 % of traditional")
def test_c09_inertia(ref, inertia_110, nominal, record_property):
    r = run_campaign(ref, ErrorSpec.inertia_uncertainty(), SAMPLES, master_seed=SEED)
    t, l, a = (r.average(m) for m in ("traditional", "ltac", "rtac"))
    scs, logs = inertia_110
    hc = [terminal_metrics(lg, nominal, sc.truth.params.inertia).hc_err_mag for sc, lg in zip(scs, logs)]
    detail(record_property, f"campaign {_campaign_line(r)} N m s; 1.10 J: traditional {hc[0]:.1f}, "
                            f"ltac {hc[1]:.1f}, rtac {hc[2]:.1f} ({hc[2] / hc[0]:.1%})")
    assert a < l < t
    assert hc[2] <= 0.05 * hc[0]


@criterion(10, "v_d = 4 N m: traditional peak |h_c| above rtac's; envelope clamps only at h_max")
def test_c10_saturation(saturation, table2, ref, record_property):
    scs, logs = saturation
    peaks = [float(lg.h_norm.max()) for lg in logs]
    h_max = ref.limits.h_max
    stray = [lg.mode for lg in list(logs) + list(table2[1])
             if lg.envelope_clamp_epochs > 0 and lg.h_norm.max() < h_max * (1 - 1e-3)]
    detail(record_property, f"peak |h_c| traditional {peaks[0]:.0f}, ltac {peaks[1]:.0f}, rtac {peaks[2]:.0f} "
                            f"(h_max {h_max:.0f}); clamp epochs "
                            + "/".join(str(lg.envelope_clamp_epochs) for lg in logs))
    assert not stray
    assert peaks[0] > peaks[2]


@criterion(11, "repeated campaigns give bit-identical stats; draws paired across modes")
def test_c11_determinism(ref, tmp_path, record_property):
    spec = ErrorSpec.disturbance()
    a = run_campaign(ref, spec, 12, master_seed=7, chunk=12)
    b = run_campaign(ref, spec, 12, master_seed=7, chunk=5)
    report(a, tmp_path / "a")
    report(b, tmp_path / "b")
    same = (tmp_path / "a" / "stats.csv").read_bytes() == (tmp_path / "b" / "stats.csv").read_bytes()
    same_samples = (tmp_path / "a" / "samples.csv").read_bytes() == (tmp_path / "b" / "samples.csv").read_bytes()
    paired = a.digests == [sample_errors(spec, i, 7, ref.truth.params.orbit_rate).digest() for i in range(12)]
    detail(record_property, f"stats identical {same}, samples identical {same_samples}, draws paired {paired}")
    assert same and same_samples and paired


def _gg_jacobian_symbolic(J, n):
    s = sp.symbols("s1:4")
    sv = sp.Matrix(s)
    X = sp.Matrix([[0, -s[2], s[1]], [s[2], 0, -s[0]], [-s[1], s[0], 0]])
    ss = (sv.T * sv)[0]
    R = sp.eye(3) + (8 * X * X - 4 * (1 - ss) * X) / (1 + ss) ** 2
    nadir = R[:, 2]
    Jm = sp.Matrix(J)
    tau_b = 3 * n**2 * nadir.cross(Jm * nadir)
    tau_o = R.T * tau_b
    jac = tau_o.jacobian(sv).subs({x: 0 for x in s})
    return np.array(jac.evalf(), dtype=float)


@criterion(12, "finite-difference C matches the analytic gravity-gradient Jacobian; second-order convergence")
def test_c12_sensitivity(aero, model, record_property):
    n = 1.1461e-3
    J = np.diag([2.4e7, 3.8e7, 5.2e7])
    p = SpacecraftParams(inertia=J, orbit_rate=n)
    gg = TorqueModel(p, aero, aerodynamic=False)
    exact = _gg_jacobian_symbolic(J, n)
    closed = 12 * n**2 * np.diag([J[2, 2] - J[1, 1], J[2, 2] - J[0, 0], 0.0])
    fd = sensitivity_matrix(np.zeros(3), 0.0, gg)
    rel = np.abs(fd - exact).max() / np.abs(exact).max()
    sigma = np.array([0.03, -0.2, 0.1])
    c1 = sensitivity_matrix(sigma, 0.0, model, 4e-3)
    c2 = sensitivity_matrix(sigma, 0.0, model, 2e-3)
    limit = (4 * c2 - c1) / 3
    e1 = np.abs(sensitivity_matrix(sigma, 0.0, model, 2e-2) - limit).max()
    e2 = np.abs(sensitivity_matrix(sigma, 0.0, model, 1e-2) - limit).max()
    detail(record_property, f"relative error {rel:.1e}; Richardson ratio {e1 / e2:.3f}")
    assert np.allclose(exact, closed, rtol=1e-12, atol=1e-12 * np.abs(closed).max())
    assert rel <= 1e-6
    assert 3.8 <= e1 / e2 <= 4.2
