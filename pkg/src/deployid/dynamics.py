"""Rigid-body attitude propagation under slot-wise actuation sequences.

The spacecraft bus follows the body-frame momentum balance

    I w' = M_ext + M_react - w x (I w + L_wheels)

where M_react is the torque the wheels exert on the bus and L_wheels is the
momentum they store.  Each actuation slot holds one command vector constant;
within a slot the thruster chain (PWM, valve filter, torque matrix) and the
wheel motors are sampled every ``dt`` and the bus is advanced by classical
RK4.  Measured angular rates carry additive Gaussian sensor noise.

A compiled batch kernel steps many simulations (one per candidate inertia
configuration and replicate) through a slot at once; the scalar operations
in this module define the reference semantics the kernel must reproduce.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numba
import numpy as np

from .actuators import (
    ActuationVector,
    ReactionWheelModule,
    ThrusterBank,
    WheelState,
    default_thruster_bank,
    default_wheel_modules,
    perturb_action,
)
from .errors import DivergenceError, DomainError, ValidationError
from .inertia import InertialParams
from .seeding import derive_rng


@dataclass(frozen=True)
class SpacecraftState:
    """Bus angular rate, wheel states, and simulation clock."""

    omega: np.ndarray
    wheels: tuple[WheelState, ...] = ()
    time: float = 0.0

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        if om.shape != (3,):
            raise ValidationError(f"omega must be a 3-vector, got shape {om.shape}")
        if not np.all(np.isfinite(om)) or not np.isfinite(self.time):
            raise ValidationError("spacecraft state must be finite")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "wheels", tuple(self.wheels))


def initial_state(n_wheels: int = 3) -> SpacecraftState:
    """Detumbled post-separation baseline: zero rates, wheels at rest."""
    return SpacecraftState(omega=np.zeros(3),
                           wheels=tuple(WheelState() for _ in range(n_wheels)))


@dataclass(frozen=True)
class SimConfig:
    """Integrator step, slot length, noise levels, and safety limit."""

    dt: float = 0.01
    slot_duration: float = 5.0
    sensor_noise_std: float = 2e-4
    actuation_noise_std: float = 0.02
    omega_limit: float = 0.5
    disturbance_torque_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        if self.slot_duration <= 0.0:
            raise ValidationError(f"slot_duration must be > 0, got {self.slot_duration}")
        steps = self.slot_duration / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValidationError(
                f"slot_duration {self.slot_duration} is not a multiple of dt {self.dt}")
        if self.omega_limit <= 0.0:
            raise ValidationError(f"omega_limit must be > 0, got {self.omega_limit}")
        for name in ("sensor_noise_std", "actuation_noise_std", "disturbance_torque_std"):
            if getattr(self, name) < 0.0:
                raise ValidationError(f"{name} must be >= 0")

    @property
    def slot_steps(self) -> int:
        return int(round(self.slot_duration / self.dt))

    def with_noise_scale(self, sensor: float = 1.0, actuation: float = 1.0) -> "SimConfig":
        """Copy with noise levels scaled (robustness sweeps)."""
        return SimConfig(dt=self.dt, slot_duration=self.slot_duration,
                         sensor_noise_std=self.sensor_noise_std * sensor,
                         actuation_noise_std=self.actuation_noise_std * actuation,
                         omega_limit=self.omega_limit,
                         disturbance_torque_std=self.disturbance_torque_std,
                         seed=self.seed)


@dataclass(frozen=True)
class Trajectory:
    """Measured angular-rate time series of one simulation run."""

    times: np.ndarray
    omega: np.ndarray
    label: str = ""
    replicate: int = 0
    terminated: bool = False

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        om = np.asarray(self.omega, dtype=float)
        if om.ndim != 2 or om.shape[1] != 3 or om.shape[0] != t.shape[0]:
            raise ValidationError(
                f"trajectory shapes inconsistent: times {t.shape}, omega {om.shape}")
        if t.shape[0] >= 2:
            gaps = np.diff(t)
            if np.any(gaps <= 0.0) or abs(gaps.max() - gaps.min()) > 1e-9:
                raise ValidationError("timestamps must increase with uniform spacing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "omega", om)

    def __len__(self) -> int:
        return self.times.shape[0]


@dataclass
class TrajectorySet:
    """Labelled trajectories plus the CSV interchange format."""

    trajectories: list[Trajectory] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def labels(self) -> list[str]:
        return [tr.label for tr in self.trajectories]

    def to_csv_text(self) -> str:
        out = io.StringIO()
        out.write("t,wx,wy,wz,label,replicate,terminated\n")
        for tr in self.trajectories:
            flag = int(tr.terminated)
            for t, w in zip(tr.times, tr.omega):
                out.write(f"{float(t)!r},{float(w[0])!r},{float(w[1])!r},"
                          f"{float(w[2])!r},{tr.label},{tr.replicate},{flag}\n")
        return out.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def from_csv(cls, path) -> "TrajectorySet":
        groups: dict[tuple[str, int], dict] = {}
        order: list[tuple[str, int]] = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["t", "wx", "wy", "wz", "label", "replicate", "terminated"]:
                raise ValidationError(f"unrecognized trajectory CSV header: {header}")
            for row in reader:
                key = (row[4], int(row[5]))
                if key not in groups:
                    groups[key] = {"t": [], "w": [], "term": row[6] == "1"}
                    order.append(key)
                groups[key]["t"].append(float(row[0]))
                groups[key]["w"].append([float(row[1]), float(row[2]), float(row[3])])
        trajectories = [
            Trajectory(times=np.array(groups[key]["t"]),
                       omega=np.array(groups[key]["w"]),
                       label=key[0], replicate=key[1],
                       terminated=groups[key]["term"])
            for key in order
        ]
        return cls(trajectories)


def euler_rhs(inertia: InertialParams, state: SpacecraftState, external_torque,
              wheel_modules=(), wheel_torque_sum=None) -> np.ndarray:
    """Angular acceleration of the bus at the given state.

    ``wheel_torque_sum`` is the reaction torque the wheels exert on the bus
    (already sign-flipped from the wheel momentum rate); wheel momentum for
    the gyroscopic term comes from ``state.wheels`` and ``wheel_modules``.
    """
    if inertia.is_singular():
        raise DomainError("inertia tensor is singular; cannot form angular acceleration")
    torque = np.asarray(external_torque, dtype=float).copy()
    if wheel_torque_sum is not None:
        torque += np.asarray(wheel_torque_sum, dtype=float)
    momentum = inertia.inertia @ state.omega
    for module, ws in zip(wheel_modules, state.wheels):
        momentum = momentum + module.rotor_inertia * ws.speed * module.axis
    return np.linalg.solve(inertia.inertia, torque - np.cross(state.omega, momentum))


def rk4_step(inertia: InertialParams, state: SpacecraftState, torque_fn, dt: float,
             wheel_modules=(), wheel_momentum_fn=None) -> SpacecraftState:
    """One classical RK4 update of the bus rate.

    ``torque_fn(t)`` supplies the total applied torque; ``wheel_momentum_fn(t)``,
    when given, supplies the stored wheel momentum for the gyroscopic term
    (wheel states themselves advance in their own integrator).
    """
    if dt <= 0.0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    if inertia.is_singular():
        raise DomainError("inertia tensor is singular; cannot integrate")
    tensor = inertia.inertia

    if wheel_momentum_fn is None:
        fixed = np.zeros(3)
        for module, ws in zip(wheel_modules, state.wheels):
            fixed = fixed + module.rotor_inertia * ws.speed * module.axis

        def wheel_momentum_fn(_t, _fixed=fixed):
            return _fixed

    def rhs(om, t):
        h = tensor @ om + wheel_momentum_fn(t)
        return np.linalg.solve(tensor, torque_fn(t) - np.cross(om, h))

    t0 = state.time
    om0 = state.omega
    k1 = rhs(om0, t0)
    k2 = rhs(om0 + 0.5 * dt * k1, t0 + 0.5 * dt)
    k3 = rhs(om0 + 0.5 * dt * k2, t0 + 0.5 * dt)
    k4 = rhs(om0 + dt * k3, t0 + dt)
    om = om0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(om)):
        raise DivergenceError(f"non-finite angular rate after step at t = {t0}")
    return SpacecraftState(omega=om, wheels=state.wheels, time=t0 + dt)


@numba.njit(cache=True, inline="always")
def _omega_dot(ine, inv, ox, oy, oz, tx, ty, tz, lx, ly, lz):
    hx = ine[0, 0] * ox + ine[0, 1] * oy + ine[0, 2] * oz + lx
    hy = ine[1, 0] * ox + ine[1, 1] * oy + ine[1, 2] * oz + ly
    hz = ine[2, 0] * ox + ine[2, 1] * oy + ine[2, 2] * oz + lz
    mx = tx - (oy * hz - oz * hy)
    my = ty - (oz * hx - ox * hz)
    mz = tz - (ox * hy - oy * hx)
    return (inv[0, 0] * mx + inv[0, 1] * my + inv[0, 2] * mz,
            inv[1, 0] * mx + inv[1, 1] * my + inv[1, 2] * mz,
            inv[2, 0] * mx + inv[2, 1] * my + inv[2, 2] * mz)


@numba.njit(cache=True, inline="always")
def _wheel_rk4(speed, cur, volts, j, b, km, r, ell, dt):
    k1w = (km * cur - b * speed) / j
    k1i = (volts - km * speed - r * cur) / ell
    w2 = speed + 0.5 * dt * k1w
    i2 = cur + 0.5 * dt * k1i
    k2w = (km * i2 - b * w2) / j
    k2i = (volts - km * w2 - r * i2) / ell
    w3 = speed + 0.5 * dt * k2w
    i3 = cur + 0.5 * dt * k2i
    k3w = (km * i3 - b * w3) / j
    k3i = (volts - km * w3 - r * i3) / ell
    w4 = speed + dt * k3w
    i4 = cur + dt * k3i
    k4w = (km * i4 - b * w4) / j
    k4i = (volts - km * w4 - r * i4) / ell
    return (speed + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
            cur + dt / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i))


@numba.njit(cache=True)
def _slot_kernel(omega, wheel_speed, wheel_current, filt,
                 inertia, inertia_inv, duties, volts, torque_matrix,
                 wheel_axis, wheel_j, wheel_b, wheel_k, wheel_r, wheel_l,
                 pwm_period, alpha, dt, sensor_noise, disturbance,
                 omega_limit, measured, abs_power, terminated, term_step):
    n_sims = omega.shape[0]
    slot_steps = measured.shape[1]
    n_thrusters = duties.shape[1]
    n_wheels = wheel_speed.shape[1]
    limit2 = omega_limit * omega_limit
    for k in range(n_sims):
        if terminated[k] != 0:
            term_step[k] = 0
            continue
        ox = omega[k, 0]
        oy = omega[k, 1]
        oz = omega[k, 2]
        done = slot_steps
        for s in range(slot_steps):
            # thruster chain: the level applied during this step is the filter
            # state before it absorbs the current PWM sample
            phase = ((s * dt) % pwm_period) / pwm_period
            mtx = 0.0
            mty = 0.0
            mtz = 0.0
            for n in range(n_thrusters):
                raw = 1.0 if phase < duties[k, n] else 0.0
                level = filt[k, n]
                filt[k, n] = level + alpha * (raw - level)
                mtx += torque_matrix[0, n] * level
                mty += torque_matrix[1, n] * level
                mtz += torque_matrix[2, n] * level
            # wheels advance first; their realized momentum change fixes the
            # reaction torque applied to the bus over this step
            l0x = 0.0
            l0y = 0.0
            l0z = 0.0
            l1x = 0.0
            l1y = 0.0
            l1z = 0.0
            for w in range(n_wheels):
                sp = wheel_speed[k, w]
                cu = wheel_current[k, w]
                v = volts[k, w]
                abs_power[k] += abs(v * cu) * dt
                jw = wheel_j[w]
                l0x += jw * sp * wheel_axis[w, 0]
                l0y += jw * sp * wheel_axis[w, 1]
                l0z += jw * sp * wheel_axis[w, 2]
                nsp, ncu = _wheel_rk4(sp, cu, v, jw, wheel_b[w], wheel_k[w],
                                      wheel_r[w], wheel_l[w], dt)
                wheel_speed[k, w] = nsp
                wheel_current[k, w] = ncu
                l1x += jw * nsp * wheel_axis[w, 0]
                l1y += jw * nsp * wheel_axis[w, 1]
                l1z += jw * nsp * wheel_axis[w, 2]
            tx = mtx - (l1x - l0x) / dt + disturbance[k, s, 0]
            ty = mty - (l1y - l0y) / dt + disturbance[k, s, 1]
            tz = mtz - (l1z - l0z) / dt + disturbance[k, s, 2]
            # bus RK4; wheel momentum is linearly interpolated across stages
            ine = inertia[k]
            inv = inertia_inv[k]
            lmx = 0.5 * (l0x + l1x)
            lmy = 0.5 * (l0y + l1y)
            lmz = 0.5 * (l0z + l1z)
            k1x, k1y, k1z = _omega_dot(ine, inv, ox, oy, oz, tx, ty, tz, l0x, l0y, l0z)
            a2x = ox + 0.5 * dt * k1x
            a2y = oy + 0.5 * dt * k1y
            a2z = oz + 0.5 * dt * k1z
            k2x, k2y, k2z = _omega_dot(ine, inv, a2x, a2y, a2z, tx, ty, tz, lmx, lmy, lmz)
            a3x = ox + 0.5 * dt * k2x
            a3y = oy + 0.5 * dt * k2y
            a3z = oz + 0.5 * dt * k2z
            k3x, k3y, k3z = _omega_dot(ine, inv, a3x, a3y, a3z, tx, ty, tz, lmx, lmy, lmz)
            a4x = ox + dt * k3x
            a4y = oy + dt * k3y
            a4z = oz + dt * k3z
            k4x, k4y, k4z = _omega_dot(ine, inv, a4x, a4y, a4z, tx, ty, tz, l1x, l1y, l1z)
            ox = ox + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            oy = oy + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            oz = oz + dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
            measured[k, s, 0] = ox + sensor_noise[k, s, 0]
            measured[k, s, 1] = oy + sensor_noise[k, s, 1]
            measured[k, s, 2] = oz + sensor_noise[k, s, 2]
            if ox * ox + oy * oy + oz * oz > limit2:
                terminated[k] = 1
                done = s + 1
                break
        omega[k, 0] = ox
        omega[k, 1] = oy
        omega[k, 2] = oz
        term_step[k] = done


@dataclass
class SlotResult:
    """Outcome of one slot across a simulation batch."""

    measured: np.ndarray      # (n_sims, slot_steps, 3); rows past n_valid are stale
    n_valid: np.ndarray       # (n_sims,) samples produced this slot
    newly_terminated: np.ndarray  # (n_sims,) bool
    c_gt: float               # commanded thruster duty-time of the slot
    c_rw: np.ndarray          # (n_sims,) electrical energy this slot


class BatchSimulator:
    """Concurrent simulations of several inertia configurations, one slot at a time.

    All simulations share the actuator suite and the command stream; each has
    its own inertia tensor, noise stream, and state.  The per-slot kernel
    reproduces the scalar reference semantics of this module's operations.
    """

    def __init__(self, params_per_sim: list[InertialParams],
                 bank: ThrusterBank | None = None,
                 wheel_modules: list[ReactionWheelModule] | None = None,
                 sim: SimConfig | None = None):
        if not params_per_sim:
            raise DomainError("simulation batch requires at least one configuration")
        self.params = list(params_per_sim)
        self.bank = bank if bank is not None else default_thruster_bank()
        self.wheel_modules = list(wheel_modules) if wheel_modules is not None \
            else default_wheel_modules()
        self.sim = sim if sim is not None else SimConfig()
        for p in self.params:
            if p.is_singular():
                raise DomainError(f"configuration {p.label!r} has a singular inertia tensor")
        n = len(self.params)
        self._inertia = np.stack([p.inertia for p in self.params])
        self._inertia_inv = np.stack([np.linalg.inv(p.inertia) for p in self.params])
        self._axes = np.stack([m.axis for m in self.wheel_modules]) \
            if self.wheel_modules else np.zeros((0, 3))
        self._wj = np.array([m.rotor_inertia for m in self.wheel_modules])
        self._wb = np.array([m.friction for m in self.wheel_modules])
        self._wk = np.array([m.motor_constant for m in self.wheel_modules])
        self._wr = np.array([m.resistance for m in self.wheel_modules])
        self._wl = np.array([m.inductance for m in self.wheel_modules])
        self._vs = np.array([m.supply_voltage for m in self.wheel_modules])
        self._omega = np.zeros((n, 3))
        self._wheel_speed = np.zeros((n, len(self.wheel_modules)))
        self._wheel_current = np.zeros_like(self._wheel_speed)
        self._filter = np.zeros((n, self.bank.n_thrusters))
        self._terminated = np.zeros(n, dtype=np.uint8)
        self.time = 0.0

    @property
    def n_sims(self) -> int:
        return len(self.params)

    @property
    def omega(self) -> np.ndarray:
        return self._omega.copy()

    @property
    def wheel_speeds(self) -> np.ndarray:
        return self._wheel_speed.copy()

    @property
    def wheel_currents(self) -> np.ndarray:
        return self._wheel_current.copy()

    @property
    def terminated(self) -> np.ndarray:
        return self._terminated.astype(bool)

    def reset(self, initial: SpacecraftState | None = None) -> None:
        """Return every simulation to a common initial state."""
        if initial is None:
            self._omega[:] = 0.0
            self._wheel_speed[:] = 0.0
            self._wheel_current[:] = 0.0
            self.time = 0.0
        else:
            if len(initial.wheels) != len(self.wheel_modules):
                raise ValidationError(
                    f"initial state has {len(initial.wheels)} wheels, "
                    f"suite has {len(self.wheel_modules)}")
            self._omega[:] = initial.omega
            self._wheel_speed[:] = [ws.speed for ws in initial.wheels]
            self._wheel_current[:] = [ws.current for ws in initial.wheels]
            self.time = initial.time
        self._filter[:] = 0.0
        self._terminated[:] = 0

    def measure(self, rngs) -> np.ndarray:
        """One noisy rate measurement per simulation at the current instant."""
        out = self._omega.copy()
        std = self.sim.sensor_noise_std
        if std > 0.0:
            for k, rng in enumerate(rngs):
                out[k] += std * rng.standard_normal(3)
        return out

    def run_slot(self, action: ActuationVector, rngs) -> SlotResult:
        """Apply one commanded action for a full slot on every live simulation.

        Each simulation perturbs the command with its own actuation noise and
        draws its own sensor-noise block; draws happen in simulation order so
        results are independent of any internal execution order.
        """
        if len(rngs) != self.n_sims:
            raise ValidationError(f"expected {self.n_sims} rng streams, got {len(rngs)}")
        cfg = self.sim
        steps = cfg.slot_steps
        n = self.n_sims
        n_th = self.bank.n_thrusters
        n_wh = len(self.wheel_modules)
        duties = np.empty((n, n_th))
        volts = np.empty((n, n_wh))
        sensor = np.zeros((n, steps, 3))
        disturbance = np.zeros((n, steps, 3))
        for k, rng in enumerate(rngs):
            noisy = perturb_action(action, cfg.actuation_noise_std, rng)
            if noisy.thruster_duty.shape[0] != n_th or \
                    noisy.wheel_voltage_fraction.shape[0] != n_wh:
                raise ValidationError("action size does not match the actuator suite")
            duties[k] = noisy.thruster_duty
            volts[k] = noisy.wheel_voltage_fraction * self._vs
            if cfg.sensor_noise_std > 0.0:
                sensor[k] = cfg.sensor_noise_std * rng.standard_normal((steps, 3))
            if cfg.disturbance_torque_std > 0.0:
                disturbance[k] = cfg.disturbance_torque_std * rng.standard_normal((steps, 3))
        measured = np.zeros((n, steps, 3))
        abs_power = np.zeros(n)
        term_step = np.zeros(n, dtype=np.int64)
        was_terminated = self._terminated.astype(bool)
        _slot_kernel(self._omega, self._wheel_speed, self._wheel_current,
                     self._filter, self._inertia, self._inertia_inv,
                     duties, volts, self.bank.torque_matrix,
                     self._axes, self._wj, self._wb, self._wk, self._wr, self._wl,
                     self.bank.pwm_period,
                     cfg.dt / (self.bank.filter_time_constant + cfg.dt),
                     cfg.dt, sensor, disturbance, cfg.omega_limit,
                     measured, abs_power, self._terminated, term_step)
        if not np.all(np.isfinite(self._omega)):
            raise DivergenceError(f"non-finite angular rate in slot ending {self.time}")
        self.time += cfg.slot_duration
        c_gt = float(np.sum(action.thruster_duty)) * cfg.slot_duration
        return SlotResult(measured=measured, n_valid=term_step,
                          newly_terminated=self._terminated.astype(bool) & ~was_terminated,
                          c_gt=c_gt, c_rw=abs_power)


def simulate_sequence(inertia: InertialParams, initial: SpacecraftState,
                      sequence, sim: SimConfig, rng_stream,
                      bank: ThrusterBank | None = None,
                      wheel_modules: list[ReactionWheelModule] | None = None,
                      label: str | None = None,
                      replicate_index: int = 0) -> Trajectory:
    """Run one noisy simulation through an ordered actuation sequence.

    Returns the measured-rate trajectory, flagged if the rate limit cut the
    run short.  Identical inputs and generator state reproduce the result
    bit for bit.
    """
    if not sequence:
        raise ValidationError("actuation sequence must be non-empty")
    batch = BatchSimulator([inertia], bank=bank, wheel_modules=wheel_modules, sim=sim)
    batch.reset(initial)
    times = [initial.time]
    samples = [batch.measure([rng_stream])[0]]
    terminated = False
    for action in sequence:
        result = batch.run_slot(action, [rng_stream])
        valid = int(result.n_valid[0])
        base = len(times) - 1
        for s in range(valid):
            times.append(initial.time + (base + s + 1) * sim.dt)
            samples.append(result.measured[0, s])
        if batch.terminated[0]:
            terminated = True
            break
    return Trajectory(times=np.array(times), omega=np.array(samples),
                      label=inertia.label if label is None else label,
                      replicate=replicate_index, terminated=terminated)


def generate_dataset(configs: list[InertialParams], sequence, replicates: int,
                     sim: SimConfig, master_seed: int,
                     bank: ThrusterBank | None = None,
                     wheel_modules: list[ReactionWheelModule] | None = None,
                     replicate_offset: int = 0) -> TrajectorySet:
    """Labelled noisy simulations: every configuration under one shared sequence.

    Replicate streams derive from (master_seed, config index, replicate
    index), so any single trajectory can be regenerated in isolation.
    ``replicate_offset`` shifts the replicate indices (held-out sets).
    """
    if replicates < 1:
        raise ValidationError(f"replicates must be >= 1, got {replicates}")
    if not configs:
        raise DomainError("at least one configuration required")
    if not sequence:
        raise ValidationError("actuation sequence must be non-empty")
    params_per_sim = []
    rngs = []
    meta = []
    for i, params in enumerate(configs):
        for j in range(replicate_offset, replicate_offset + replicates):
            params_per_sim.append(params)
            rngs.append(derive_rng(master_seed, i, j))
            meta.append((params.label, j))
    batch = BatchSimulator(params_per_sim, bank=bank, wheel_modules=wheel_modules, sim=sim)
    batch.reset()
    n = batch.n_sims
    times = [[0.0] for _ in range(n)]
    samples = [[m] for m in batch.measure(rngs)]
    for action in sequence:
        if np.all(batch.terminated):
            break
        result = batch.run_slot(action, rngs)
        for k in range(n):
            base = len(times[k]) - 1
            for s in range(int(result.n_valid[k])):
                times[k].append((base + s + 1) * sim.dt)
                samples[k].append(result.measured[k, s])
    flags = batch.terminated
    trajectories = [
        Trajectory(times=np.array(times[k]), omega=np.array(samples[k]),
                   label=meta[k][0], replicate=meta[k][1], terminated=bool(flags[k]))
        for k in range(n)
    ]
    return TrajectorySet(trajectories)
