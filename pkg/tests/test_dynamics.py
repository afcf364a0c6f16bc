"""Attitude propagation against conservation laws and closed-form solutions."""

import numpy as np
import pytest

from deployid.actuators import (
    ActuationVector,
    default_thruster_bank,
    default_wheel_modules,
    pwm_signal,
    thruster_torque,
    wheel_reaction_torque,
    wheel_step,
)
from deployid.dynamics import (
    BatchSimulator,
    SimConfig,
    SpacecraftState,
    Trajectory,
    TrajectorySet,
    euler_rhs,
    generate_dataset,
    initial_state,
    rk4_step,
    simulate_sequence,
)
from deployid.errors import DivergenceError, DomainError, ValidationError
from deployid.inertia import InertialParams
from deployid.seeding import derive_rng


def params_from_diag(ix, iy, iz, label="body", mass=1000.0):
    return InertialParams(total_mass=mass, cm=np.zeros(3),
                          inertia=np.diag([ix, iy, iz]).astype(float), label=label)


def zero_torque(_t):
    return np.zeros(3)


# --- euler_rhs ---

def test_rhs_equilibrium_is_zero():
    params = params_from_diag(100.0, 200.0, 300.0)
    state = initial_state(0)
    assert np.allclose(euler_rhs(params, state, np.zeros(3)), 0.0)


def test_rhs_spherical_inertia_has_no_gyroscopic_term():
    params = params_from_diag(50.0, 50.0, 50.0)
    rng = np.random.default_rng(2)
    for _ in range(5):
        state = SpacecraftState(omega=rng.normal(scale=0.2, size=3))
        assert np.allclose(euler_rhs(params, state, np.zeros(3)), 0.0, atol=1e-15)


def test_rhs_asymmetric_componentwise():
    # Ix wx' = (Iy - Iz) wy wz with I = diag(1,2,3), w = (0, 0.1, 0.1):
    # wx' = (2 - 3) * 0.01 / 1 = -0.01, the other components zero
    params = params_from_diag(1.0, 2.0, 3.0, mass=1.0)
    state = SpacecraftState(omega=np.array([0.0, 0.1, 0.1]))
    rates = euler_rhs(params, state, np.zeros(3))
    assert rates == pytest.approx([-0.01, 0.0, 0.0], abs=1e-15)


def test_rhs_includes_wheel_momentum_in_gyroscopic_term():
    from deployid.actuators import WheelState

    params = params_from_diag(100.0, 120.0, 140.0)
    wheels = default_wheel_modules()
    state = SpacecraftState(omega=np.array([0.02, -0.01, 0.03]),
                            wheels=(WheelState(speed=5.0), WheelState(speed=-2.0),
                                    WheelState(speed=1.0)))
    torque = np.array([0.5, -0.2, 0.1])
    reaction = np.array([0.03, 0.02, -0.01])
    got = euler_rhs(params, state, torque, wheels, reaction)
    l_total = params.inertia @ state.omega + np.array([5.0, -2.0, 1.0])  # J = 1 each
    expected = np.linalg.solve(params.inertia,
                               torque + reaction - np.cross(state.omega, l_total))
    assert np.allclose(got, expected, atol=1e-15)


def test_rhs_singular_inertia_rejected():
    params = InertialParams(total_mass=1.0, cm=np.zeros(3),
                            inertia=np.diag([1.0, 1.0, 0.0]))
    state = initial_state(0)
    with pytest.raises(DomainError):
        euler_rhs(params, state, np.zeros(3))


# --- rk4_step ---

def test_rk4_spherical_zero_torque_is_exact():
    params = params_from_diag(50.0, 50.0, 50.0)
    state = SpacecraftState(omega=np.array([0.1, -0.2, 0.05]))
    stepped = rk4_step(params, state, zero_torque, 0.01)
    assert np.array_equal(stepped.omega, state.omega)
    assert stepped.time == pytest.approx(0.01)


def test_rk4_torque_free_conservation():
    # ||I w|| and kinetic energy are invariants of free rotation
    params = params_from_diag(8000.0, 12000.0, 18000.0)
    state = SpacecraftState(omega=np.array([0.05, -0.03, 0.04]))
    tensor = params.inertia
    h0 = np.linalg.norm(tensor @ state.omega)
    e0 = 0.5 * state.omega @ tensor @ state.omega
    for _ in range(10_000):
        state = rk4_step(params, state, zero_torque, 0.01)
    h1 = np.linalg.norm(tensor @ state.omega)
    e1 = 0.5 * state.omega @ tensor @ state.omega
    assert abs(h1 - h0) / h0 < 1e-8
    assert abs(e1 - e0) / e0 < 1e-8


def test_rk4_single_axis_spinup_is_linear():
    params = params_from_diag(400.0, 500.0, 600.0)
    state = initial_state(0)
    torque = np.array([0.0, 0.0, 12.0])
    for _ in range(1000):
        state = rk4_step(params, state, lambda _t: torque, 0.01)
    assert state.omega[2] == pytest.approx(12.0 * 10.0 / 600.0, rel=1e-12)
    assert np.allclose(state.omega[:2], 0.0, atol=1e-15)


def axisymmetric_analytic(i_t, i_z, m_z, w_perp, w_z0, t):
    """Constant axial torque on an axisymmetric body: exact rate solution."""
    lam = (i_z - i_t) / i_t
    phase = lam * (w_z0 * t + m_z * t * t / (2.0 * i_z))
    c = w_perp * np.exp(1j * phase)
    return np.array([c.real, c.imag, w_z0 + m_z / i_z * t])


def integrate_axisymmetric(dt, i_t=2.0, i_z=1.0, m_z=0.2, w_perp=0.2, w_z0=0.3,
                           horizon=10.0):
    params = params_from_diag(i_t, i_t, i_z, mass=10.0)
    state = SpacecraftState(omega=np.array([w_perp, 0.0, w_z0]))
    torque = np.array([0.0, 0.0, m_z])
    for _ in range(int(round(horizon / dt))):
        state = rk4_step(params, state, lambda _t: torque, dt)
    return state.omega, axisymmetric_analytic(i_t, i_z, m_z, w_perp, w_z0, horizon)


def test_rk4_fourth_order_convergence():
    got_c, exact = integrate_axisymmetric(0.02)
    err_coarse = np.linalg.norm(got_c - exact)
    got_f, _ = integrate_axisymmetric(0.01)
    err_fine = np.linalg.norm(got_f - exact)
    assert err_coarse / err_fine >= 12.0


def test_rk4_divergence_detected():
    params = params_from_diag(10.0, 10.0, 10.0)
    state = initial_state(0)
    with pytest.raises(DivergenceError):
        rk4_step(params, state, lambda _t: np.array([np.nan, 0.0, 0.0]), 0.01)


# --- kernel vs scalar reference ---

def python_slot_reference(params, bank, wheels, cfg, action):
    """One slot from rest using only the scalar module operations."""
    state = initial_state(len(wheels))
    wheel_states = list(state.wheels)
    filt = np.zeros(bank.n_thrusters)
    alpha = cfg.dt / (bank.filter_time_constant + cfg.dt)
    samples = []
    abs_power = 0.0
    for s in range(cfg.slot_steps):
        t_local = s * cfg.dt
        raw = np.array([float(pwm_signal(d, t_local, bank.pwm_period))
                        for d in action.thruster_duty])
        level = filt.copy()
        filt += alpha * (raw - filt)
        m_t = thruster_torque(bank, level)
        l0 = sum((m.rotor_inertia * ws.speed * m.axis
                  for m, ws in zip(wheels, wheel_states)), np.zeros(3))
        react = np.zeros(3)
        new_states = []
        for m, ws, frac in zip(wheels, wheel_states, action.wheel_voltage_fraction):
            volts = frac * m.supply_voltage
            abs_power += abs(volts * ws.current) * cfg.dt
            ns = wheel_step(m, ws, volts, cfg.dt)
            react += wheel_reaction_torque(m, ws, ns, cfg.dt)
            new_states.append(ns)
        l1 = sum((m.rotor_inertia * ws.speed * m.axis
                  for m, ws in zip(wheels, new_states)), np.zeros(3))
        t0 = state.time

        def momentum(t, t0=t0, l0=l0, l1=l1):
            return l0 + (l1 - l0) * ((t - t0) / cfg.dt)

        state = rk4_step(params, state, lambda _t: m_t + react, cfg.dt,
                         wheel_momentum_fn=momentum)
        wheel_states = new_states
        samples.append(state.omega)
    return np.array(samples), abs_power


def test_batch_kernel_matches_scalar_reference():
    params = params_from_diag(9000.0, 11000.0, 14000.0)
    bank = default_thruster_bank()
    wheels = default_wheel_modules()
    cfg = SimConfig(dt=0.01, slot_duration=2.0, sensor_noise_std=0.0,
                    actuation_noise_std=0.0)
    action = ActuationVector(np.array([0.6, 0.3, 0.15, 0.0, 0.45, 0.0]),
                             np.array([0.8, -0.5, 0.25]))
    expected, expected_power = python_slot_reference(params, bank, wheels, cfg, action)
    batch = BatchSimulator([params], bank, wheels, cfg)
    batch.reset()
    result = batch.run_slot(action, [np.random.default_rng(0)])
    scale = np.abs(expected).max()
    assert np.allclose(result.measured[0], expected, atol=1e-12 * max(scale, 1e-9))
    assert result.c_rw[0] == pytest.approx(expected_power, rel=1e-12)
    assert result.c_gt == pytest.approx(action.thruster_duty.sum() * cfg.slot_duration)


def test_wheel_only_momentum_conservation():
    params = params_from_diag(500.0, 800.0, 1100.0)
    wheels = default_wheel_modules()
    cfg = SimConfig(dt=0.01, slot_duration=5.0, sensor_noise_std=0.0,
                    actuation_noise_std=0.0)
    batch = BatchSimulator([params], wheel_modules=wheels, sim=cfg)
    batch.reset(SpacecraftState(omega=np.array([0.05, -0.04, 0.03]),
                                wheels=initial_state(3).wheels))
    action = ActuationVector(np.zeros(6), np.array([0.8, -0.5, 0.3]))

    def total_momentum():
        l = params.inertia @ batch.omega[0]
        for w, module in enumerate(wheels):
            l = l + module.rotor_inertia * batch.wheel_speeds[0, w] * module.axis
        return np.linalg.norm(l)  # body-frame components rotate; the norm is invariant

    h_start = total_momentum()
    rng = [np.random.default_rng(0)]
    worst = 0.0
    for _ in range(20):
        batch.run_slot(action, rng)
        worst = max(worst, abs(total_momentum() - h_start) / h_start)
    assert worst < 1e-6


# --- simulate_sequence ---

def quiet_config(**overrides):
    base = dict(dt=0.01, slot_duration=1.0, sensor_noise_std=0.0,
                actuation_noise_std=0.0)
    base.update(overrides)
    return SimConfig(**base)


def test_null_sequence_zero_noise_is_identically_zero():
    params = params_from_diag(9000.0, 11000.0, 14000.0)
    cfg = quiet_config()
    seq = [ActuationVector.null(6, 3)] * 4
    traj = simulate_sequence(params, initial_state(), seq, cfg,
                             np.random.default_rng(0))
    assert len(traj) == 4 * cfg.slot_steps + 1
    assert traj.times[-1] == pytest.approx(4.0)
    assert np.array_equal(traj.omega, np.zeros_like(traj.omega))
    assert not traj.terminated


def test_same_seed_reproduces_bitwise():
    params = params_from_diag(9000.0, 11000.0, 14000.0)
    cfg = SimConfig(dt=0.01, slot_duration=1.0, sensor_noise_std=1e-4,
                    actuation_noise_std=0.05)
    seq = [ActuationVector(np.array([0.5, 0, 0, 0, 0.2, 0]), np.array([0.5, 0, -0.3]))] * 3
    a = simulate_sequence(params, initial_state(), seq, cfg, np.random.default_rng(42))
    b = simulate_sequence(params, initial_state(), seq, cfg, np.random.default_rng(42))
    assert np.array_equal(a.omega, b.omega)
    assert np.array_equal(a.times, b.times)


def test_distinct_inertia_tensors_separate():
    cfg = quiet_config()
    seq = [ActuationVector(np.array([0.4, 0.0, 0.6, 0, 0, 0]), np.zeros(3))] * 3
    a = simulate_sequence(params_from_diag(8000, 12000, 15000), initial_state(),
                          seq, cfg, np.random.default_rng(0))
    b = simulate_sequence(params_from_diag(8000, 12000, 11000), initial_state(),
                          seq, cfg, np.random.default_rng(0))
    assert np.abs(a.omega - b.omega).max() > 1e-6


def test_rate_limit_terminates_with_flag():
    params = params_from_diag(100.0, 100.0, 100.0, mass=10.0)
    cfg = SimConfig(dt=0.01, slot_duration=5.0, sensor_noise_std=0.0,
                    actuation_noise_std=0.0, omega_limit=0.5)
    seq = [ActuationVector(np.array([1.0, 0, 0, 0, 0, 0]), np.zeros(3))] * 2
    traj = simulate_sequence(params, initial_state(), seq, cfg,
                             np.random.default_rng(0))
    assert traj.terminated
    assert len(traj) < 2 * cfg.slot_steps + 1
    assert np.linalg.norm(traj.omega[-1]) > 0.5


def test_sensor_noise_statistics():
    params = params_from_diag(9000.0, 11000.0, 14000.0)
    std = 1e-3
    cfg = SimConfig(dt=0.01, slot_duration=5.0, sensor_noise_std=std,
                    actuation_noise_std=0.0)
    seq = [ActuationVector.null(6, 3)] * 4
    traj = simulate_sequence(params, initial_state(), seq, cfg,
                             np.random.default_rng(7))
    noise = traj.omega.ravel()  # true rates are identically zero
    n = noise.size
    assert abs(noise.mean()) < 4.0 * std / np.sqrt(n)
    assert abs(noise.std(ddof=1) - std) < 4.0 * std / np.sqrt(2.0 * n)


def test_empty_sequence_rejected():
    params = params_from_diag(100.0, 100.0, 100.0)
    with pytest.raises(ValidationError):
        simulate_sequence(params, initial_state(), [], quiet_config(),
                          np.random.default_rng(0))


# --- generate_dataset ---

def three_configs():
    return [params_from_diag(8000, 12000, 15000, "full-stack"),
            params_from_diag(8000, 12000, 12500, "one-deployed"),
            params_from_diag(8000, 12000, 10500, "carrier-only")]


def test_dataset_counting_and_labels():
    cfg = SimConfig(dt=0.01, slot_duration=1.0, sensor_noise_std=1e-4,
                    actuation_noise_std=0.02)
    seq = [ActuationVector(np.array([0.4, 0, 0.2, 0, 0, 0]), np.zeros(3))] * 2
    data = generate_dataset(three_configs(), seq, replicates=5, sim=cfg, master_seed=11)
    assert len(data) == 15
    assert data.labels() == ["full-stack"] * 5 + ["one-deployed"] * 5 + ["carrier-only"] * 5
    assert [tr.replicate for tr in data] == list(range(5)) * 3


def test_dataset_zero_noise_replicates_identical():
    cfg = quiet_config()
    seq = [ActuationVector(np.array([0.4, 0, 0.2, 0, 0, 0]), np.zeros(3))] * 2
    data = generate_dataset(three_configs()[:2], seq, replicates=2, sim=cfg,
                            master_seed=3)
    assert np.array_equal(data.trajectories[0].omega, data.trajectories[1].omega)
    assert np.array_equal(data.trajectories[2].omega, data.trajectories[3].omega)
    assert not np.array_equal(data.trajectories[0].omega, data.trajectories[2].omega)


def test_dataset_matches_per_simulation_reference():
    # the batched run must equal one-at-a-time simulation with derived streams
    cfg = SimConfig(dt=0.01, slot_duration=1.0, sensor_noise_std=2e-4,
                    actuation_noise_std=0.05)
    seq = [ActuationVector(np.array([0.5, 0, 0.3, 0, 0, 0.2]), np.array([0.4, 0, -0.6]))] * 3
    configs = three_configs()
    data = generate_dataset(configs, seq, replicates=2, sim=cfg, master_seed=99)
    idx = 0
    for i, params in enumerate(configs):
        for j in range(2):
            solo = simulate_sequence(params, initial_state(), seq, cfg,
                                     derive_rng(99, i, j), replicate_index=j)
            assert np.array_equal(data.trajectories[idx].omega, solo.omega)
            idx += 1


def test_dataset_replicate_offset_gives_fresh_streams():
    cfg = SimConfig(dt=0.01, slot_duration=1.0, sensor_noise_std=2e-4,
                    actuation_noise_std=0.0)
    seq = [ActuationVector(np.array([0.5, 0, 0, 0, 0, 0]), np.zeros(3))] * 2
    train = generate_dataset(three_configs()[:2], seq, 3, cfg, master_seed=5)
    held = generate_dataset(three_configs()[:2], seq, 3, cfg, master_seed=5,
                            replicate_offset=3)
    assert [tr.replicate for tr in held] == [3, 4, 5, 3, 4, 5]
    assert not np.array_equal(train.trajectories[0].omega, held.trajectories[0].omega)


# --- config and trajectory plumbing ---

def test_sim_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(dt=0.0)
    with pytest.raises(ValidationError):
        SimConfig(dt=0.03, slot_duration=1.0)  # not a multiple
    with pytest.raises(ValidationError):
        SimConfig(omega_limit=0.0)
    with pytest.raises(ValidationError):
        SimConfig(sensor_noise_std=-1.0)


def test_noise_scaling_helper():
    cfg = SimConfig(sensor_noise_std=2e-4, actuation_noise_std=0.02)
    scaled = cfg.with_noise_scale(sensor=2.0, actuation=0.5)
    assert scaled.sensor_noise_std == pytest.approx(4e-4)
    assert scaled.actuation_noise_std == pytest.approx(0.01)
    assert scaled.dt == cfg.dt and scaled.slot_duration == cfg.slot_duration


def test_trajectory_timestamp_validation():
    with pytest.raises(ValidationError):
        Trajectory(times=np.array([0.0, 0.2, 0.25]), omega=np.zeros((3, 3)))
    with pytest.raises(ValidationError):
        Trajectory(times=np.array([0.0, 0.0]), omega=np.zeros((2, 3)))


def test_csv_round_trip_and_determinism(tmp_path):
    cfg = SimConfig(dt=0.01, slot_duration=1.0, sensor_noise_std=1e-4,
                    actuation_noise_std=0.02)
    seq = [ActuationVector(np.array([0.4, 0, 0.2, 0, 0, 0]), np.array([0.3, 0, 0]))] * 2
    data = generate_dataset(three_configs(), seq, replicates=2, sim=cfg, master_seed=8)
    path = tmp_path / "data.csv"
    data.to_csv(path)
    back = TrajectorySet.from_csv(path)
    assert len(back) == len(data)
    for a, b in zip(data, back):
        assert np.array_equal(a.omega, b.omega)
        assert np.array_equal(a.times, b.times)
        assert (a.label, a.replicate, a.terminated) == (b.label, b.replicate, b.terminated)
    again = tmp_path / "again.csv"
    back.to_csv(again)
    assert path.read_bytes() == again.read_bytes()


def test_csv_header_mismatch_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValidationError):
        TrajectorySet.from_csv(path)
