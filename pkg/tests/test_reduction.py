import math

import numpy as np
import pytest

import agestruct as ag
from agestruct.errors import ParameterError, TrajectoryRangeError
from agestruct.reduction import StateVector


# --- state vector ------------------------------------------------------------


def test_state_vector_clamps_tiny_negatives():
    s = StateVector(p=-5e-10, moments=(-1e-12, 0.5))
    assert s.p == 0.0
    assert s.moments[0] == 0.0 and s.moments[1] == 0.5


def test_state_vector_rejects_real_negatives():
    with pytest.raises(ParameterError, match="negativity slack"):
        StateVector(p=-1e-6, moments=(0.0,))
    with pytest.raises(ParameterError, match="negativity slack"):
        StateVector(p=1.0, moments=(-2e-9,))


def test_state_vector_array_round_trip():
    s = StateVector(p=1.25, moments=(0.5, 0.125))
    again = StateVector.from_array(s.as_array())
    assert again.p == s.p and again.moments == s.moments


# --- right-hand side ---------------------------------------------------------


def test_rhs_vanishes_at_equilibrium(ref1, ref2):
    for fx in (ref1, ref2):
        eq = ag.equilibrium(fx.params, fx.feedback)
        state = StateVector(p=eq.p_star, moments=eq.moments_star)
        deriv = ag.rhs(state, fx.params, fx.feedback)
        assert np.max(np.abs(deriv.as_array())) <= 1e-13


def test_birth_rate_closed_form(ref2):
    state = StateVector(p=1.0, moments=(0.75, 0.375))
    # r0 * phi(1) * (b1*m1 + b2*m2) = (16/3)(1/2)(0.5*0.75 + 0.5*0.375)
    assert math.isclose(ag.birth_rate(state, ref2.params, ref2.feedback), 1.5, rel_tol=1e-14)


def test_rhs_moment_count_mismatch(ref2):
    with pytest.raises(ParameterError):
        ag.rhs(StateVector(p=1.0, moments=(0.75,)), ref2.params, ref2.feedback)


# --- integration -------------------------------------------------------------


def test_stationary_start_stays_put(ref1):
    start = ag.density_moments(ref1.p0, ref1.params.rho, ref1.params.n)
    traj = ag.integrate(start, ref1.params, ref1.feedback, t_end=60.0)
    assert np.max(np.abs(traj.states[:, 0] - 1.0)) <= 1e-9
    assert np.max(np.abs(traj.birth_rates - 1.5)) <= 1e-9
    # with p == 1 the feedback mortality integral is just t
    assert math.isclose(traj.psi_integral_at(37.5), 37.5, rel_tol=1e-9)


def test_linear_mode_exponential_growth(linear_fixture):
    fx = linear_fixture
    start = ag.density_moments(fx.p0, fx.params.rho, fx.params.n)
    exact = 0.75 * math.e  # growth rate r0*b0 - rho - mu0 = 1
    for kwargs in ({"method": "rk45", "rtol": 1e-8, "atol": 1e-10}, {"method": "rk4", "h": 1e-3}):
        traj = ag.integrate(start, fx.params, fx.feedback, t_end=1.0, **kwargs)
        rel = abs(traj.states[-1, 1] - exact) / exact
        assert rel <= 1e-8
        assert np.all(traj.psi_integral == 0.0)  # feedback off


def test_rk4_is_fourth_order(linear_fixture):
    fx = linear_fixture
    start = ag.density_moments(fx.p0, fx.params.rho, fx.params.n)
    exact = 0.75 * math.e
    errs = []
    for h in (0.05, 0.025):
        traj = ag.integrate(start, fx.params, fx.feedback, t_end=1.0, method="rk4", h=h)
        errs.append(abs(traj.states[-1, 1] - exact))
    assert 12.0 <= errs[0] / errs[1] <= 20.0


def test_trajectory_sampling_and_dense_output(ref1):
    start = StateVector(p=1.2, moments=(0.8,))
    traj = ag.integrate(start, ref1.params, ref1.feedback, t_end=5.0, n_samples=301)
    assert traj.times.size == 301
    assert traj.times[0] == 0.0 and traj.times[-1] == 5.0
    assert np.all(np.diff(traj.times) > 0)
    # dense output agrees with the recorded samples at the sample times
    mid = traj.times[137]
    np.testing.assert_allclose(traj.state_at(mid), traj.states[137], rtol=1e-12, atol=1e-14)
    # between samples it should track a tighter reference solution
    t_probe = 0.5 * (traj.times[40] + traj.times[41])
    fine = ag.integrate(
        start, ref1.params, ref1.feedback, t_end=5.0, rtol=1e-12, atol=1e-14,
        sample_times=np.array([t_probe]),
    )
    np.testing.assert_allclose(traj.state_at(t_probe), fine.states[-1], rtol=1e-6)


def test_explicit_sample_times(ref1):
    start = StateVector(p=1.2, moments=(0.8,))
    pts = np.array([0.0, 0.5, 1.5, 3.0])
    traj = ag.integrate(start, ref1.params, ref1.feedback, t_end=3.0, sample_times=pts)
    np.testing.assert_array_equal(traj.times, pts)
    assert traj.birth_rates.shape == pts.shape


def test_trajectory_range_checks(ref1):
    start = StateVector(p=1.0, moments=(0.75,))
    traj = ag.integrate(start, ref1.params, ref1.feedback, t_end=2.0)
    with pytest.raises(TrajectoryRangeError):
        traj.state_at(2.5)
    with pytest.raises(TrajectoryRangeError):
        traj.psi_integral_at(-0.5)


def test_integrate_validates_arguments(ref1):
    start = StateVector(p=1.0, moments=(0.75,))
    with pytest.raises(ParameterError):
        ag.integrate(start, ref1.params, ref1.feedback, t_end=-1.0)
    with pytest.raises(ParameterError):
        ag.integrate(start, ref1.params, ref1.feedback, t_end=1.0, method="euler")
    with pytest.raises(ParameterError):
        ag.integrate(start, ref1.params, ref1.feedback, t_end=1.0, method="rk4")  # h missing
    with pytest.raises(ParameterError):
        ag.integrate(start, ref1.params, ref1.feedback, t_end=1.0, n_samples=1)


def test_birth_rates_consistent_with_states(ref2):
    start = StateVector(p=1.3, moments=(0.9, 0.4))
    traj = ag.integrate(start, ref2.params, ref2.feedback, t_end=4.0)
    recompute = [
        ag.birth_rate(StateVector(p=row[0], moments=tuple(row[1:])), ref2.params, ref2.feedback)
        for row in traj.states
    ]
    np.testing.assert_allclose(traj.birth_rates, recompute, rtol=1e-12, atol=1e-14)
    assert np.all(traj.birth_rates >= 0)
    assert np.all(np.diff(traj.psi_integral) >= 0)
