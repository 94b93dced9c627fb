import math

import numpy as np
import pytest

from switched_ioss.conditions import certify, eval_estimator_conditions
from switched_ioss.envelope import (
    build_estimation_envelope,
    build_ioss_envelope,
    check_estimator_bounds,
    check_estimator_iss,
    check_ioss_inequality,
    check_lyapunov_chain,
    check_psi_bounds,
    estimator_iss_constants,
    psi2_bar_formula,
    psi2_curve,
    running_max,
    slack_report,
    xi_curve,
)
from switched_ioss.errors import InfeasibleCertificateError, InfeasibleParametersError
from switched_ioss.inputs import UniformPiecewiseInput, ZeroInput
from switched_ioss.signals import SwitchingSignal, generate_signal
from switched_ioss.sim import co_simulate, integrate_estimator, integrate_switched

LN2 = math.log(2.0)


@pytest.fixture(scope="module")
def env(example_family, example_cert):
    return build_ioss_envelope(example_family, example_cert)


@pytest.fixture(scope="module")
def est_env(example_family, example_cert, example_params, env):
    return build_estimation_envelope(example_family, example_cert, example_params, base=env)


@pytest.fixture(scope="module")
def run(example_family, example_cert, example_params):
    sig = generate_signal(example_family, example_cert, horizon=15.0, seed=7, resolution=0.01)
    inp = UniformPiecewiseInput(-0.5, 0.5, seed=5)
    traj = co_simulate(example_family, example_cert, example_params, sig, inp, [0.6, -0.4], z0=2.0, h=0.01)
    return sig, traj


def test_ioss_constants(env):
    assert env.c1 == pytest.approx(15.17)
    assert env.c2 == pytest.approx(0.6973, abs=5e-4)
    assert not env.degenerate
    expected = psi2_bar_formula(15.17, env.c2, 3.5, 3.5, 0.73)
    assert env.psi2_bar == pytest.approx(expected)
    assert env.beta(1.0, 0.0) == pytest.approx(math.exp(15.17))
    assert env.chi1(0.5) == pytest.approx(0.5 * env.psi2_bar)
    assert not env.has_estimation


def test_psi2_bar_limit_for_long_dwell():
    assert psi2_bar_formula(1.0, 100.0, 1.0, 2.0, 0.5) == pytest.approx(math.e / 0.5, rel=1e-9)


def test_degenerate_envelope_without_unstable_modes(scalar_family):
    cert = certify(scalar_family)
    env = build_ioss_envelope(scalar_family, cert)
    assert env.degenerate
    assert env.c1 == pytest.approx(3.5)
    assert env.c2 == pytest.approx(0.25)
    assert env.psi2_bar == pytest.approx(math.exp(3.5) / math.expm1(0.25) / 2.0)


def test_envelope_needs_a_feasible_certificate(example_family):
    with pytest.raises(InfeasibleCertificateError):
        build_ioss_envelope(example_family, certify(example_family, margin=1.0))


def test_estimation_constants(est_env, example_params):
    assert est_env.c1_tilde == pytest.approx(0.48 * 4.0)
    assert est_env.c2_tilde == pytest.approx(0.0277, abs=5e-4)
    assert est_env.c_ratio == pytest.approx(math.exp(22.5))
    assert est_env.c_alternative == pytest.approx(math.exp(3.75 * (12.0 / 7.0 + 4.0)))
    assert est_env.c_alternative < est_env.c_ratio
    b = math.exp(1.92) * (1.0 + 1.0 / math.expm1(est_env.c2_tilde * 3.5))
    assert est_env.b == pytest.approx(b)
    assert est_env.b_tilde == pytest.approx(b)
    d = est_env.to_dict()
    assert d["log_c_ratio"] == pytest.approx(22.5)
    assert d["alpha_upper"] == "max(r, (r ** 2.0))"


def test_rejected_parameters(example_family, example_cert):
    bad = eval_estimator_conditions(example_family, example_cert, 3.5, 0.75, 3.0, 4.2)
    with pytest.raises(InfeasibleParametersError):
        build_estimation_envelope(example_family, example_cert, bad)


def test_common_lyapunov_function_has_no_comparison_term(two_mode_family):
    cert = certify(two_mode_family)
    params = eval_estimator_conditions(two_mode_family, cert, 1.5, 0.6, 1.5, 1.5)
    assert params.accepted, [str(v) for v in params.violations]
    env = build_estimation_envelope(two_mode_family, cert, params)
    assert env.b_tilde == 0.0
    r = np.array([0.0, 0.5, 2.0])
    assert np.allclose(env.chi_bar(r), np.sqrt(2.0 * r), atol=1e-8)


def test_chi_bar_needs_estimation_constants(env):
    with pytest.raises(InfeasibleParametersError):
        env.chi_bar(1.0)


# --- exact signal weights -----------------------------------------------------


def test_xi_curve(example_family):
    sig = SwitchingSignal(((0.0, 1), (3.5, 2), (7.5, 1)), horizon=10.0)
    xi = xi_curve(sig, example_family, np.array([0.0, 3.5, 5.0, 10.0]))
    assert xi[0] == 0.0
    assert xi[1] == pytest.approx(-3.5 * 3.5 + LN2)
    assert xi[2] == pytest.approx(-3.5 * 3.5 + 0.73 * 1.5 + LN2)
    assert xi[3] == pytest.approx(-3.5 * 6.0 + 0.73 * 4.0 + 2 * LN2)


def test_psi2_single_stable_mode(example_family):
    times = np.array([0.0, 2.0, 10.0])
    psi2 = psi2_curve(SwitchingSignal.constant(1, 10.0), example_family, times)
    assert np.allclose(psi2, -np.expm1(-3.5 * times) / 3.5)


def test_psi2_comparison_factor_on_completed_activations(example_family):
    sig = SwitchingSignal(((0.0, 1), (3.5, 2)), horizon=10.0)
    times = np.array([1.0, 5.0])
    default = psi2_curve(sig, example_family, times)
    printed = psi2_curve(sig, example_family, times, as_printed=True)
    assert default[0] == pytest.approx(printed[0])
    assert default[1] > printed[1]


def test_psi_bounds_on_generated_signals(example_family, example_cert, env):
    times = np.linspace(0.0, 50.0, 2001)
    for seed in range(100):
        sig = generate_signal(example_family, example_cert, horizon=50.0, seed=seed)
        report = check_psi_bounds(sig, example_family, env, times)
        assert report.passed, (seed, report.psi1.to_dict(), report.psi2.to_dict())


# --- inequalities along runs --------------------------------------------------


def test_slack_report_and_running_max():
    rep = slack_report("demo", np.array([0.0, 1.0, 2.0]), np.array([1.0, 3.0, 0.0]), np.array([2.0, 2.5, 1.0]))
    assert rep.min_slack == pytest.approx(-0.5)
    assert rep.argmin_time == 1.0
    assert not rep.passed
    assert rep.to_dict()["nodes"] == 3
    assert list(running_max([1.0, 0.5, 2.0, 1.0])) == [1.0, 1.0, 2.0, 2.0]


def test_zero_run_meets_the_envelope_with_equality(example_family, example_cert, env):
    sig = generate_signal(example_family, example_cert, horizon=10.0, seed=1, resolution=0.01)
    traj = integrate_switched(example_family, sig, ZeroInput(), [0.0, 0.0], h=0.01)
    report = check_ioss_inequality(traj, example_family, env)
    assert report.passed
    assert report.min_slack == 0.0


def test_ioss_and_iss_on_a_random_run(example_family, env, run):
    _, traj = run
    ioss = check_ioss_inequality(traj, example_family, env)
    iss = check_ioss_inequality(traj, example_family, env, include_outputs=False)
    assert ioss.name == "ioss" and iss.name == "iss"
    assert ioss.passed
    assert ioss.min_slack >= iss.min_slack


def test_asymptotic_stability_without_input(two_mode_family):
    cert = certify(two_mode_family)
    env = build_ioss_envelope(two_mode_family, cert)
    sig = generate_signal(two_mode_family, cert, horizon=15.0, seed=2, resolution=0.01)
    assert sig.switch_count > 0
    traj = integrate_switched(two_mode_family, sig, ZeroInput(), [0.8], h=0.01)
    assert check_ioss_inequality(traj, two_mode_family, env, include_outputs=False).passed
    assert traj.state_norm()[-1] < traj.state_norm()[0]


def test_lyapunov_chain(example_family, run):
    sig, traj = run
    report = check_lyapunov_chain(traj, sig, example_family)
    assert report.name == "lyapunov_chain"
    assert report.passed, report.to_dict()


def test_estimator_bounds_on_a_random_run(est_env, run):
    _, traj = run
    report = check_estimator_bounds(traj, est_env)
    assert set(report.checks) == {"A", "B", "C"}
    assert report.passed, report.to_dict()


def test_estimator_bounds_skip_ratio_when_w_starts_higher(example_family, example_cert, example_params, est_env):
    sig = SwitchingSignal.constant(1, 2.0)
    traj = co_simulate(
        example_family, example_cert, example_params, sig, ZeroInput(), [0.0, 0.0], z0=1.0, w0=3.0, h=0.01
    )
    report = check_estimator_bounds(traj, est_env)
    assert report.skipped == ("C",)
    assert report.passed


def test_ratio_bound_with_identical_estimators(example_family, example_cert, example_params, est_env):
    # w and z share the stable phase while the signal stays on a stable mode
    sig = SwitchingSignal.constant(1, 3.0)
    traj = co_simulate(example_family, example_cert, example_params, sig, ZeroInput(), [0.0, 0.0], z0=2.0, h=0.001)
    assert np.allclose(traj.w, traj.z)
    assert np.allclose(traj.z, 2.0 * np.exp(-3.0 * traj.times), rtol=1e-6)
    assert check_estimator_bounds(traj, est_env).checks["C"].passed


def test_estimator_bounds_need_estimation_constants(env, run):
    with pytest.raises(InfeasibleParametersError):
        check_estimator_bounds(run[1], env)


def test_estimator_iss_constants(example_params):
    c_bar, c_bar1, psi = estimator_iss_constants(example_params)
    assert c_bar == pytest.approx(0.8125)
    assert c_bar1 == pytest.approx(3.0 * 3.0 + 0.75 * 4.2)
    assert psi > math.exp(c_bar1) / 0.75
    assert psi == pytest.approx(psi2_bar_formula(c_bar1, c_bar, 3.0, 3.0, 0.75))


def test_estimator_iss_without_forcing(example_family, example_params):
    n = 30_001
    v, y = np.zeros((n, 1)), np.zeros((n, 1))
    z = integrate_estimator(example_params, example_family, v, y, z0=1.0, h=0.001)
    times = np.arange(n) * 0.001
    report = check_estimator_iss(times, z, v, y, example_params, example_family.lyapunov)
    assert report.passed, report.to_dict()
    # the decay bound is met with equality at the end of every period
    k = 7200
    assert z[k] == pytest.approx(math.exp(-0.8125 * 7.2), rel=1e-8)


def test_estimator_iss_from_zero(example_family, example_params):
    n = 1501
    times = np.arange(n) * 0.01
    v = UniformPiecewiseInput(-0.5, 0.5, seed=3).sample(times, 1)
    y = np.zeros((n, 1))
    z = integrate_estimator(example_params, example_family, v, y, z0=0.0, h=0.01)
    assert check_estimator_iss(times, z, v, y, example_params, example_family.lyapunov).passed


def test_estimator_iss_on_a_random_run(example_family, example_params, run):
    _, traj = run
    report = check_estimator_iss(traj.times, traj.z, traj.inputs, traj.outputs, example_params, example_family.lyapunov)
    assert report.passed
