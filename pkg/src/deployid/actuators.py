"""Cold-gas thruster bank and DC-motor reaction wheels.

Thrusters: a commanded duty cycle per nozzle is turned into an on/off pulse
train by PWM, smoothed by a first-order valve filter, and mapped to a body
torque through the bank's torque matrix.  Wheels: a commanded voltage drives
a two-state (speed, current) DC-motor model; the torque exerted on the bus
is the negated rate of change of the wheel's stored momentum.

The slot cost accounting feeds the reward: thruster cost is proportional to
commanded duty-time (propellant at constant mass flow), wheel cost is the
electrical energy drawn.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Default actuator sizing for a ~10 t bus.  The bank torque scale and motor
# parameters are configuration inputs; these values are the shipped defaults.
DEFAULT_MAX_THRUST_TORQUE = 50.0  # N*m per thruster at full duty
DEFAULT_PWM_PERIOD = 0.1          # s, 10 integrator samples per period
DEFAULT_FILTER_TIME_CONSTANT = 0.02  # s, fast relative to the PWM period
DEFAULT_ROTOR_INERTIA = 1.0       # kg*m^2
DEFAULT_FRICTION = 1e-3           # N*m*s
DEFAULT_MOTOR_CONSTANT = 0.5      # N*m/A and V*s
DEFAULT_RESISTANCE = 4.0          # ohm
DEFAULT_INDUCTANCE = 0.05         # H
DEFAULT_SUPPLY_VOLTAGE = 12.0     # V


@dataclass(frozen=True)
class ThrusterBank:
    """Fixed-geometry thruster cluster with PWM and valve-filter parameters.

    ``torque_matrix`` columns are per-thruster torque vectors at full duty.
    """

    torque_matrix: np.ndarray
    pwm_period: float = DEFAULT_PWM_PERIOD
    filter_time_constant: float = DEFAULT_FILTER_TIME_CONSTANT

    def __post_init__(self):
        mat = np.asarray(self.torque_matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != 3:
            raise ValidationError(f"torque_matrix must be 3xN, got shape {mat.shape}")
        if mat.shape[1] < 6:
            raise ValidationError(f"at least 6 thrusters required, got {mat.shape[1]}")
        if not np.all(np.isfinite(mat)):
            raise ValidationError("torque_matrix contains non-finite entries")
        if np.linalg.matrix_rank(mat) < 3:
            raise ValidationError("torque_matrix must have rank 3 (all axes controllable)")
        if self.pwm_period <= 0.0:
            raise ValidationError(f"pwm_period must be > 0, got {self.pwm_period}")
        if self.filter_time_constant < 0.0:
            raise ValidationError(
                f"filter_time_constant must be >= 0, got {self.filter_time_constant}")
        object.__setattr__(self, "torque_matrix", mat)

    @property
    def n_thrusters(self) -> int:
        return self.torque_matrix.shape[1]


@dataclass(frozen=True)
class ReactionWheelModule:
    """One motor-driven flywheel on a fixed body-frame axis."""

    rotor_inertia: float = DEFAULT_ROTOR_INERTIA
    friction: float = DEFAULT_FRICTION
    motor_constant: float = DEFAULT_MOTOR_CONSTANT
    resistance: float = DEFAULT_RESISTANCE
    inductance: float = DEFAULT_INDUCTANCE
    supply_voltage: float = DEFAULT_SUPPLY_VOLTAGE
    axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        for name in ("rotor_inertia", "friction", "motor_constant",
                     "resistance", "inductance", "supply_voltage"):
            if getattr(self, name) <= 0.0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")
        ax = np.asarray(self.axis, dtype=float)
        if ax.shape != (3,):
            raise ValidationError(f"axis must be a 3-vector, got shape {ax.shape}")
        if abs(np.linalg.norm(ax) - 1.0) > 1e-12:
            raise ValidationError("axis must be a unit vector")
        object.__setattr__(self, "axis", ax)

    def system_matrix(self) -> np.ndarray:
        """Continuous-time state matrix of the (speed, current) model."""
        j, b, k = self.rotor_inertia, self.friction, self.motor_constant
        r, ell = self.resistance, self.inductance
        return np.array([[-b / j, k / j], [-k / ell, -r / ell]])


@dataclass(frozen=True)
class WheelState:
    """Instantaneous wheel speed (rad/s) and motor current (A)."""

    speed: float = 0.0
    current: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.speed) and np.isfinite(self.current)):
            raise ValidationError("wheel state must be finite")


@dataclass(frozen=True)
class ActuationVector:
    """Commanded duties and wheel voltage fractions for one slot.

    Inputs are clamped into bounds on construction: duties to [0, 1],
    voltage fractions to [-1, 1].  The all-zeros vector is the null action.
    """

    thruster_duty: np.ndarray
    wheel_voltage_fraction: np.ndarray

    def __post_init__(self):
        duty = np.clip(np.nan_to_num(np.asarray(self.thruster_duty, dtype=float)), 0.0, 1.0)
        frac = np.clip(np.nan_to_num(np.asarray(self.wheel_voltage_fraction, dtype=float)),
                       -1.0, 1.0)
        if duty.ndim != 1 or frac.ndim != 1:
            raise ValidationError("actuation components must be 1-D")
        object.__setattr__(self, "thruster_duty", duty)
        object.__setattr__(self, "wheel_voltage_fraction", frac)

    @classmethod
    def null(cls, n_thrusters: int, n_wheels: int) -> "ActuationVector":
        return cls(np.zeros(n_thrusters), np.zeros(n_wheels))

    @classmethod
    def from_flat(cls, raw, n_thrusters: int) -> "ActuationVector":
        """Split a flat command vector (duties first, then wheel fractions)."""
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 1 or raw.size < n_thrusters:
            raise ValidationError(
                f"flat action must hold at least {n_thrusters} entries, got {raw.shape}")
        return cls(raw[:n_thrusters], raw[n_thrusters:])

    def is_null(self) -> bool:
        return not (np.any(self.thruster_duty) or np.any(self.wheel_voltage_fraction))


def pwm_signal(duty: float, time, period: float):
    """On/off pulse value(s) at the given time(s) for a duty fraction.

    Returns 1 while the phase fraction mod(time, period)/period is below
    the duty, else 0; vectorizes over ``time``.
    """
    if period <= 0.0:
        raise ValidationError(f"period must be > 0, got {period}")
    if not 0.0 <= duty <= 1.0:
        raise ValidationError(f"duty must lie in [0, 1], got {duty}")
    phase = np.mod(time, period) / period
    return (phase < duty).astype(np.int64)


def filtered_valve_response(raw, time_constant: float, dt: float) -> np.ndarray:
    """First-order low-pass of a sampled on/off valve command.

    Discrete update y[k+1] = y[k] + dt/(tc+dt) * (raw[k] - y[k]) from y[0] = 0,
    so the output lags the input by one sample and stays within [0, 1].
    """
    if dt <= 0.0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    if time_constant < 0.0:
        raise ValidationError(f"time_constant must be >= 0, got {time_constant}")
    raw = np.asarray(raw, dtype=float)
    alpha = dt / (time_constant + dt)
    out = np.empty(raw.shape[0])
    y = 0.0
    for k in range(raw.shape[0]):
        out[k] = y
        y += alpha * (raw[k] - y)
    return out


def thruster_torque(bank: ThrusterBank, filtered_duties) -> np.ndarray:
    """Body torque produced by the bank at the given filtered duty levels."""
    duties = np.asarray(filtered_duties, dtype=float)
    if duties.shape != (bank.n_thrusters,):
        raise ValidationError(
            f"expected {bank.n_thrusters} duty levels, got shape {duties.shape}")
    return bank.torque_matrix @ duties


def _wheel_rhs(module: ReactionWheelModule, speed: float, current: float,
               volts: float) -> tuple[float, float]:
    j, b, k = module.rotor_inertia, module.friction, module.motor_constant
    r, ell = module.resistance, module.inductance
    return ((k * current - b * speed) / j,
            (volts - k * speed - r * current) / ell)


def wheel_step(module: ReactionWheelModule, state: WheelState,
               applied_voltage: float, dt: float) -> WheelState:
    """Advance the motor model by one RK4 step under a constant voltage."""
    if dt <= 0.0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    if abs(applied_voltage) > module.supply_voltage * (1.0 + 1e-12):
        raise ValidationError(
            f"|voltage| {abs(applied_voltage)} exceeds supply {module.supply_voltage}")
    w, i = state.speed, state.current
    k1w, k1i = _wheel_rhs(module, w, i, applied_voltage)
    k2w, k2i = _wheel_rhs(module, w + 0.5 * dt * k1w, i + 0.5 * dt * k1i, applied_voltage)
    k3w, k3i = _wheel_rhs(module, w + 0.5 * dt * k2w, i + 0.5 * dt * k2i, applied_voltage)
    k4w, k4i = _wheel_rhs(module, w + dt * k3w, i + dt * k3i, applied_voltage)
    return WheelState(
        speed=w + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
        current=i + dt / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i),
    )


def wheel_reaction_torque(module: ReactionWheelModule, state_before: WheelState,
                          state_after: WheelState, dt: float) -> np.ndarray:
    """Torque on the bus from one wheel step, as the discrete momentum rate.

    Using the realized speed change (rather than the instantaneous motor
    torque) keeps bus + wheel momentum bookkeeping exact across integrators.
    """
    if dt <= 0.0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    rate = module.rotor_inertia * (state_after.speed - state_before.speed) / dt
    return -module.axis * rate


def slot_costs(action: ActuationVector, wheel_traces, slot_duration: float,
               dt: float) -> tuple[float, float]:
    """Resource costs of one slot: (thruster duty-time, wheel electrical energy).

    ``wheel_traces`` holds one (volts, amps) pair of sampled arrays per wheel.
    """
    if slot_duration <= 0.0:
        raise ValidationError(f"slot_duration must be > 0, got {slot_duration}")
    c_gt = float(np.sum(action.thruster_duty)) * slot_duration
    c_rw = 0.0
    for volts, amps in wheel_traces:
        c_rw += float(np.sum(np.abs(np.asarray(volts) * np.asarray(amps)))) * dt
    return c_gt, c_rw


def perturb_action(action: ActuationVector, noise_std: float,
                   rng: np.random.Generator) -> ActuationVector:
    """Multiplicative actuation noise, re-clamped into bounds.

    Models slot-to-slot variation in delivered actuator performance; zero
    std returns the action unchanged (no generator draws).
    """
    if noise_std < 0.0:
        raise ValidationError(f"noise_std must be >= 0, got {noise_std}")
    if noise_std == 0.0:
        return action
    duty = action.thruster_duty * (1.0 + noise_std * rng.standard_normal(
        action.thruster_duty.shape))
    frac = action.wheel_voltage_fraction * (1.0 + noise_std * rng.standard_normal(
        action.wheel_voltage_fraction.shape))
    return ActuationVector(duty, frac)


def default_thruster_bank(max_torque: float = DEFAULT_MAX_THRUST_TORQUE,
                          pwm_period: float = DEFAULT_PWM_PERIOD,
                          filter_time_constant: float = DEFAULT_FILTER_TIME_CONSTANT,
                          ) -> ThrusterBank:
    """Six-thruster bank: an opposing pair per body axis."""
    if max_torque <= 0.0:
        raise ValidationError(f"max_torque must be > 0, got {max_torque}")
    matrix = max_torque * np.array([
        [1.0, 0.0, 0.0, -1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0, -1.0],
    ])
    return ThrusterBank(matrix, pwm_period, filter_time_constant)


def default_wheel_modules(**overrides) -> list[ReactionWheelModule]:
    """Three orthogonal wheels, one per body axis, sharing motor parameters."""
    axes = np.eye(3)
    return [ReactionWheelModule(axis=axes[i], **overrides) for i in range(3)]
