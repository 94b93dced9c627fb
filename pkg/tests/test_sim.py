import math

import numpy as np
import pytest

from switched_ioss.errors import (
    DivergenceError,
    EmptyTrajectoryError,
    SignalError,
    SimulationError,
    SwitchMisalignmentError,
)
from switched_ioss.inputs import ExpressionInput, UniformPiecewiseInput, ZeroInput, parse_input_spec
from switched_ioss.loader import load_family_text
from switched_ioss.signals import SwitchingSignal, generate_signal
from switched_ioss.sim import (
    co_simulate,
    gamma_bar,
    integrate_estimator,
    integrate_reference_estimator,
    integrate_switched,
    rk4_solve,
    time_grid,
    zeta_schedule,
    zeta_schedule_many,
)

from conftest import SCALAR_FAMILY


def _decay(_t, x):
    return -2.0 * x


def test_rk4_linear_decay():
    xs = rk4_solve(_decay, [1.0], 0.001, 1000)
    assert xs.shape == (1001, 1)
    assert xs[-1, 0] == pytest.approx(math.exp(-2.0), abs=1e-6)


def test_rk4_is_fourth_order():
    exact = math.exp(-2.0)
    coarse = abs(rk4_solve(_decay, [1.0], 0.1, 10)[-1, 0] - exact)
    fine = abs(rk4_solve(_decay, [1.0], 0.05, 20)[-1, 0] - exact)
    assert 12.0 <= coarse / fine <= 20.0


def test_time_grid():
    assert np.allclose(time_grid(0.25, 1.0), [0.0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(EmptyTrajectoryError):
        time_grid(0.1, 0.0)
    with pytest.raises(SwitchMisalignmentError):
        time_grid(0.3, 1.0)
    with pytest.raises(SimulationError):
        time_grid(0.0, 1.0)


def test_scalar_plant_matches_closed_form(scalar_family):
    sig = SwitchingSignal.constant(1, 1.0)
    traj = integrate_switched(scalar_family, sig, ZeroInput(), [1.0], h=0.001)
    assert traj.states[-1, 0] == pytest.approx(math.exp(-1.0), abs=1e-9)
    assert np.allclose(traj.outputs[:, 0], traj.states[:, 0])
    assert traj.inputs.shape == (1001, 0)
    assert traj.horizon == pytest.approx(1.0)


def test_origin_is_an_equilibrium(example_family, example_cert):
    sig = generate_signal(example_family, example_cert, horizon=15.0, seed=3, resolution=0.01)
    traj = integrate_switched(example_family, sig, ZeroInput(), [0.0, 0.0], h=0.01)
    assert np.all(traj.states == 0.0)
    assert np.all(traj.outputs == 0.0)


def test_random_runs_stay_bounded(example_family, example_cert):
    rng = np.random.default_rng(2024)
    for seed in range(5):
        sig = generate_signal(example_family, example_cert, horizon=15.0, seed=seed, resolution=0.01)
        x0 = rng.uniform(-1.0, 1.0, size=2)
        traj = integrate_switched(example_family, sig, UniformPiecewiseInput(-0.5, 0.5, seed=seed), x0, h=0.01)
        assert np.all(np.isfinite(traj.states))
        assert traj.state_norm().max() < 100.0
        assert np.all(np.abs(traj.inputs) <= 0.5)


def test_sigma_channel_follows_the_signal(example_family):
    sig = SwitchingSignal(((0.0, 1), (3.5, 2), (7.5, 1)), horizon=9.0)
    traj = integrate_switched(example_family, sig, ZeroInput(), [0.5, -0.5], h=0.5)
    assert list(traj.sigma) == [1] * 7 + [2] * 8 + [1] * 4


def test_state_is_continuous_across_switches(example_family):
    sig = SwitchingSignal(((0.0, 1), (3.5, 3)), horizon=5.0)
    traj = integrate_switched(example_family, sig, ZeroInput(), [1.0, -1.0], h=0.001)
    steps = np.linalg.norm(np.diff(traj.states, axis=0), axis=1)
    assert steps.max() < 0.01


def test_misaligned_switch(example_family):
    sig = SwitchingSignal(((0.0, 1), (3.5004, 2)), horizon=6.0)
    with pytest.raises(SwitchMisalignmentError):
        integrate_switched(example_family, sig, ZeroInput(), [0.1, 0.1], h=0.001)


def test_wrong_initial_state_size(example_family):
    with pytest.raises(SimulationError):
        integrate_switched(example_family, SwitchingSignal.constant(1, 1.0), ZeroInput(), [0.1], h=0.1)


def test_divergence_is_reported():
    family = load_family_text(SCALAR_FAMILY.replace("f = [-x1]", "f = [5*x1]"))
    with pytest.raises(DivergenceError):
        integrate_switched(family, SwitchingSignal.constant(1, 10.0), ZeroInput(), [1.0], h=0.01)


def test_expression_input_drives_the_plant(example_family):
    inp = parse_input_spec("expr:0.5*sin(t)")
    traj = integrate_switched(example_family, SwitchingSignal.constant(1, 2.0), inp, [0.0, 0.0], h=0.01)
    assert np.allclose(traj.inputs[:, 0], 0.5 * np.sin(traj.times))
    assert traj.states[-1, 1] > 0.0


# --- inputs -------------------------------------------------------------------


def test_uniform_input_holds_over_its_period():
    inp = UniformPiecewiseInput(-0.5, 0.5, period=1.0, seed=4)
    times = np.arange(9) * 0.25
    v = inp.sample(times, 2)
    assert v.shape == (9, 2)
    assert np.all(v[0] == v[3]) and np.all(v[4] == v[7])
    assert not np.all(v[3] == v[4])
    assert np.array_equal(v, inp.sample(times, 2))


def test_parse_input_spec():
    assert isinstance(parse_input_spec("zero"), ZeroInput)
    u = parse_input_spec("uniform:-0.5,0.5,0.25", seed=9)
    assert (u.lo, u.hi, u.period, u.seed) == (-0.5, 0.5, 0.25, 9)
    assert parse_input_spec("uniform:-1,1").period is None
    assert isinstance(parse_input_spec("expr:[sin(t), cos(t)]"), ExpressionInput)
    for bad in ("noise:1", "uniform:a,b", "uniform:1", "uniform:1,0"):
        with pytest.raises(SignalError):
            parse_input_spec(bad)
    with pytest.raises(SignalError):
        ExpressionInput.parse("sin(t)").sample(np.zeros(3), 2)


# --- estimators ---------------------------------------------------------------


@pytest.mark.parametrize(
    "t, mode",
    [(0.0, 0), (1.0, 0), (3.0, 0), (3.1, 1), (7.2, 1), (7.3, 0), (10.2, 0), (10.3, 1), (14.4, 1)],
)
def test_zeta_schedule(t, mode):
    assert zeta_schedule(3.0, 4.2, t) == mode


def test_zeta_schedule_vectorised_agrees():
    ts = np.linspace(0.0, 30.0, 3001)
    many = zeta_schedule_many(3.0, 4.2, ts)
    assert list(many) == [zeta_schedule(3.0, 4.2, t) for t in ts]


def test_gamma_bar(example_family):
    v = np.array([[0.5], [0.0]])
    y = np.array([[1.0], [0.0]])
    assert np.allclose(gamma_bar(example_family.lyapunov, v, y), [2 * 0.25 + 2 * 1.0, 0.0])


def _zeros(n):
    return np.zeros((n, 1)), np.zeros((n, 1))


def test_estimator_decays_in_the_stable_phase(example_family, example_params):
    v, y = _zeros(1001)
    z = integrate_estimator(example_params, example_family, v, y, z0=1.0, h=0.001)
    assert z[-1] == pytest.approx(math.exp(-3.0), abs=1e-6)


def test_estimator_grows_in_the_unstable_phase(example_family, example_params):
    v, y = _zeros(5001)
    z = integrate_estimator(example_params, example_family, v, y, z0=1.0, h=0.001)
    assert z[-1] == pytest.approx(math.exp(-9.0 + 1.5), rel=1e-6)
    assert z[3000] < z[-1]


def test_estimator_from_zero_stays_zero(example_family, example_params):
    v, y = _zeros(101)
    assert np.all(integrate_estimator(example_params, example_family, v, y, z0=0.0, h=0.1) == 0.0)
    with pytest.raises(SimulationError):
        integrate_estimator(example_params, example_family, v, y, z0=-1.0, h=0.1)
    with pytest.raises(SimulationError):
        integrate_estimator(example_params, example_family, v, y[:-1], z0=1.0, h=0.1)


def test_estimator_settles_at_forcing_over_rate(example_family, example_params):
    # constant forcing 2 * 0.5**2 = 0.5 over the stable phase
    v = np.full((3001, 1), 0.5)
    y = np.zeros((3001, 1))
    z = integrate_estimator(example_params, example_family, v, y, z0=0.0, h=0.001)
    steady = 0.5 / 3.0
    assert z[-1] == pytest.approx(steady * (1 - math.exp(-9.0)), rel=1e-6)


@pytest.mark.parametrize("mode, rate", [(1, -3.0), (2, 0.75)])
def test_reference_estimator_single_mode(example_family, example_cert, example_params, mode, rate):
    sig = SwitchingSignal.constant(mode, 2.0)
    v, y = _zeros(2001)
    w, upsilon = integrate_reference_estimator(
        example_family, example_cert, example_params, sig, v, y, w0=2.0, h=0.001
    )
    assert w[-1] == pytest.approx(2.0 * math.exp(rate * 2.0), rel=1e-6)
    assert set(upsilon) == {0 if mode == 1 else 1}


def test_reference_estimator_from_zero(example_family, example_cert, example_params):
    sig = SwitchingSignal(((0.0, 1), (1.0, 2)), horizon=2.0)
    v, y = _zeros(21)
    w, upsilon = integrate_reference_estimator(
        example_family, example_cert, example_params, sig, v, y, w0=0.0, h=0.1
    )
    assert np.all(w == 0.0)
    assert list(upsilon) == [0] * 10 + [1] * 11


def test_co_simulation_channels(example_family, example_cert, example_params):
    sig = generate_signal(example_family, example_cert, horizon=15.0, seed=7, resolution=0.01)
    inp = UniformPiecewiseInput(-0.5, 0.5, seed=1)
    traj = co_simulate(example_family, example_cert, example_params, sig, inp, [0.4, -0.9], z0=2.0, h=0.01)
    assert traj.z[0] == traj.w[0] == 2.0
    assert np.all(traj.z >= 0.0) and np.all(traj.w >= 0.0)
    assert traj.zeta[0] == 0
    stable = np.isin(traj.sigma, example_family.stable)
    assert np.array_equal(traj.upsilon == 0, stable)
    frame = traj.to_frame()
    assert list(frame.columns) == ["t", "x1", "x2", "y1", "v1", "sigma", "z", "w", "zeta", "upsilon"]
    assert len(frame) == 1501


def test_plain_run_frame_has_empty_estimator_columns(scalar_family):
    traj = integrate_switched(scalar_family, SwitchingSignal.constant(1, 1.0), ZeroInput(), [1.0], h=0.5)
    frame = traj.to_frame()
    assert list(frame.columns) == ["t", "x1", "y1", "sigma", "z", "w", "zeta", "upsilon"]
    assert frame["z"].isna().all()


@pytest.mark.parametrize("dwell", [3.5, 4.0])
def test_unstable_mode_from_the_unit_corner(example_family, dwell):
    # x1 >= 1 keeps sat(x1) = 1, so x2 = 1 + t and x1 = -10 - 2t + 11 exp(t/4)
    traj = integrate_switched(example_family, SwitchingSignal.constant(2, dwell), ZeroInput(), [1.0, 1.0], h=0.001)
    x1 = -10.0 - 2.0 * dwell + 11.0 * math.exp(dwell / 4.0)
    assert traj.states[-1, 0] == pytest.approx(x1, rel=1e-8)
    assert traj.states[-1, 1] == pytest.approx(1.0 + dwell, rel=1e-8)
    assert traj.state_norm()[-1] > 10.0
