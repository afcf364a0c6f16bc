"""Scenario configuration: one YAML file fully determines a run.

Keys carry explicit units (``slot_duration_s``, ``max_thrust_torque_nm``) so
every default that matters to reproduction is visible in the file rather
than buried in code.  Parsing resolves the file into constructed domain
objects; serializing writes back the resolved values, so a parse round trip
is the identity on the in-memory form.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from ..actuators import (ActuationVector, ReactionWheelModule, ThrusterBank,
                         default_thruster_bank, default_wheel_modules)
from ..dynamics import SimConfig
from ..errors import NotFoundError, ValidationError
from ..inertia import BodySpec, InertialParams, box_inertia, compose
from ..rl import EnvSpec, PPOHyperParams, RewardWeights, WEIGHT_PRESETS


@dataclass(frozen=True)
class ConfigurationSpec:
    """One candidate deployment state: a labelled subset of the body stack."""

    label: str
    body_labels: tuple[str, ...]

    def __post_init__(self):
        if not self.label:
            raise ValidationError("configuration label must be non-empty")
        if not self.body_labels:
            raise ValidationError(
                f"configuration {self.label!r} references no bodies")


@dataclass(frozen=True)
class RobustnessSweepSpec:
    """Noise-scaling sweep applied to a fixed extracted sequence."""

    noise_axis: str = "sensor"
    multipliers: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0)
    eval_runs: int = 10

    def __post_init__(self):
        if self.noise_axis not in ("sensor", "actuation"):
            raise ValidationError(
                f"noise_axis must be 'sensor' or 'actuation', got {self.noise_axis!r}")
        mults = tuple(float(m) for m in self.multipliers)
        if not mults:
            raise ValidationError("multipliers must be non-empty")
        if any(m < 0.0 for m in mults):
            raise ValidationError("multipliers must be >= 0")
        if list(mults) != sorted(mults):
            raise ValidationError(f"multipliers must ascend, got {list(mults)}")
        object.__setattr__(self, "multipliers", mults)
        if self.eval_runs < 10:
            raise ValidationError(
                f"eval_runs must be >= 10 for usable statistics, got {self.eval_runs}")


@dataclass
class ScenarioConfig:
    """Everything one experiment needs: stack, actuators, noise, learner."""

    name: str
    bodies: list[BodySpec]
    configurations: list[ConfigurationSpec]
    seed: int = 0
    bank: ThrusterBank = field(default_factory=default_thruster_bank)
    wheel_modules: list[ReactionWheelModule] = field(
        default_factory=default_wheel_modules)
    sim: SimConfig = field(default_factory=SimConfig)
    gamma: float = 1.0
    n_init: int = 5
    tsc_stride: int = 50
    replicates: int = 5
    heldout_replicates: int = 10
    reward: RewardWeights = WEIGHT_PRESETS["speed"]
    n_slots: int = 6
    replicates_per_config: int = 2
    total_steps: int = 10240
    fit_stride: int = 50
    fit_max_iter: int = 2
    fit_barycenter_iter: int = 3
    hyper: PPOHyperParams = field(default_factory=PPOHyperParams)
    sequence: list[ActuationVector] | None = None
    sweep: RobustnessSweepSpec = field(default_factory=RobustnessSweepSpec)

    def __post_init__(self):
        if len(self.configurations) < 2:
            raise ValidationError("need at least two candidate configurations")
        known = {b.label for b in self.bodies}
        if len(known) != len(self.bodies):
            raise ValidationError("body labels must be unique")
        for cfg in self.configurations:
            missing = [l for l in cfg.body_labels if l not in known]
            if missing:
                raise ValidationError(
                    f"configuration {cfg.label!r} references unknown bodies {missing}")
        labels = [c.label for c in self.configurations]
        if len(set(labels)) != len(labels):
            raise ValidationError("configuration labels must be unique")
        if self.sequence is not None:
            for i, action in enumerate(self.sequence):
                if action.thruster_duty.shape[0] != self.bank.n_thrusters or \
                        action.wheel_voltage_fraction.shape[0] != len(self.wheel_modules):
                    raise ValidationError(
                        f"sequence entry {i} does not match the actuator suite")

    # -- derived objects -------------------------------------------------

    def body_map(self) -> dict[str, BodySpec]:
        return {b.label: b for b in self.bodies}

    def candidate_params(self) -> list[InertialParams]:
        by_label = self.body_map()
        return [compose([by_label[l] for l in cfg.body_labels], label=cfg.label)
                for cfg in self.configurations]

    def env_spec(self, reward: RewardWeights | None = None) -> EnvSpec:
        return EnvSpec(configs=tuple(self.candidate_params()),
                       n_slots=self.n_slots,
                       replicates_per_config=self.replicates_per_config,
                       reward_weights=reward if reward is not None else self.reward,
                       sim=self.sim, bank=self.bank,
                       wheel_modules=tuple(self.wheel_modules),
                       gamma=self.gamma, fit_stride=self.fit_stride,
                       fit_max_iter=self.fit_max_iter,
                       fit_barycenter_iter=self.fit_barycenter_iter)

    def default_sequence(self) -> list[ActuationVector]:
        """The configured excitation sequence, or a spin-coast ladder.

        The fallback spins the stack up about the last body axis, coasts so
        the spin settles at a level set by that axis' moment, kicks the
        first transverse axis, half reverses the spin to a second level and
        coasts out.  Constant coast levels survive the time warping the
        similarity measure allows, where torque ramps alone do not; ramps
        differing only in slope align onto each other at no cost.
        """
        if self.sequence is not None:
            return list(self.sequence)
        n_th = self.bank.n_thrusters
        n_wh = len(self.wheel_modules)
        rows = np.zeros((self.n_slots, n_th + n_wh))
        # opposing-pair banks order thrusters +axes then -axes
        spin_up = min(2, n_th - 1)
        spin_down = spin_up + n_th // 2 if n_th >= 6 else spin_up
        rows[0, spin_up] = 0.9
        if self.n_slots >= 3:
            rows[2, 0] = 0.9
        if self.n_slots >= 4 and spin_down != spin_up:
            rows[3, spin_down] = 0.45
        return [ActuationVector.from_flat(row, n_th) for row in rows]

    def smoke(self) -> "ScenarioConfig":
        """Shrunken budgets for CI-scale runs; same structure and seeds."""
        return replace_config(
            self,
            replicates=min(self.replicates, 3),
            heldout_replicates=min(self.heldout_replicates, 10),
            n_init=1,
            total_steps=min(self.total_steps, 2 * 256),
            hyper=PPOHyperParams(
                n_steps=min(self.hyper.n_steps, 256),
                batch_size=min(self.hyper.batch_size, 64),
                learning_rate=self.hyper.learning_rate,
                gamma=self.hyper.gamma, gae_lambda=self.hyper.gae_lambda,
                clip_range=self.hyper.clip_range, ent_coef=self.hyper.ent_coef,
                vf_coef=self.hyper.vf_coef,
                max_grad_norm=self.hyper.max_grad_norm,
                n_epochs=min(self.hyper.n_epochs, 4)),
            sweep=RobustnessSweepSpec(
                noise_axis=self.sweep.noise_axis,
                multipliers=(0.0, 1.0, 2.0),
                eval_runs=10))


def replace_config(config: ScenarioConfig, **overrides) -> ScenarioConfig:
    """Field-level copy; dataclasses.replace plus validation."""
    kwargs = {f.name: getattr(config, f.name) for f in fields(ScenarioConfig)}
    kwargs.update(overrides)
    return ScenarioConfig(**kwargs)


# -- serialization ---------------------------------------------------------

def _matrix(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (3, 3):
        raise ValidationError(f"{name} must be a 3x3 matrix, got shape {arr.shape}")
    return arr


def _body_to_dict(body: BodySpec) -> dict:
    out = {
        "label": body.label,
        "mass_kg": float(body.mass),
        "position_m": [float(x) for x in body.position],
        "inertia_cm_kg_m2": [[float(x) for x in row] for row in body.inertia_cm],
    }
    if body.rotation is not None:
        out["rotation"] = [[float(x) for x in row] for row in body.rotation]
    return out


def _body_from_dict(raw: dict) -> BodySpec:
    label = raw.get("label", "")
    mass = float(raw["mass_kg"])
    position = raw.get("position_m", [0.0, 0.0, 0.0])
    if "inertia_cm_kg_m2" in raw and "box_dims_m" in raw:
        raise ValidationError(
            f"body {label!r}: give either inertia_cm_kg_m2 or box_dims_m, not both")
    if "inertia_cm_kg_m2" in raw:
        inertia = _matrix(raw["inertia_cm_kg_m2"], f"body {label!r} inertia")
    elif "box_dims_m" in raw:
        inertia = box_inertia(mass, raw["box_dims_m"])
    else:
        raise ValidationError(
            f"body {label!r}: needs inertia_cm_kg_m2 or box_dims_m")
    rotation = None
    if raw.get("rotation") is not None:
        rotation = _matrix(raw["rotation"], f"body {label!r} rotation")
    return BodySpec(mass=mass, position=position, inertia_cm=inertia,
                    label=label, rotation=rotation)


def _reward_from(raw) -> RewardWeights:
    if isinstance(raw, str):
        if raw not in WEIGHT_PRESETS:
            raise ValidationError(
                f"unknown reward preset {raw!r}; expected one of "
                f"{sorted(WEIGHT_PRESETS)}")
        return WEIGHT_PRESETS[raw]
    return RewardWeights(
        time_weight=float(raw.get("time_weight", 1.0)),
        thruster_weight=float(raw.get("thruster_weight", 0.01)),
        wheel_weight=float(raw.get("wheel_weight", 0.01)),
        f1_weight=float(raw.get("f1_weight", 10.0)))


def _sequence_from(raw, bank: ThrusterBank) -> list[ActuationVector] | None:
    if raw is None:
        return None
    out = []
    for i, entry in enumerate(raw):
        try:
            duty = np.asarray(entry["thruster_duty"], dtype=float)
            volts = np.asarray(entry["wheel_voltage_fraction"], dtype=float)
        except KeyError as missing:
            raise ValidationError(f"sequence entry {i} lacks key {missing}") from None
        out.append(ActuationVector.from_flat(np.concatenate([duty, volts]),
                                             bank.n_thrusters))
    return out


def config_from_dict(raw: dict) -> ScenarioConfig:
    try:
        bodies = [_body_from_dict(b) for b in raw["bodies"]]
        configurations = [
            ConfigurationSpec(label=c["label"],
                              body_labels=tuple(c["bodies"]))
            for c in raw["configurations"]]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed scenario file: {exc}") from exc

    act = raw.get("actuators", {})
    bank = default_thruster_bank(
        max_torque=float(act.get("max_thrust_torque_nm", 50.0)),
        pwm_period=float(act.get("pwm_period_s", 0.1)),
        filter_time_constant=float(act.get("filter_time_constant_s", 0.02)))
    wheels_raw = act.get("wheels", {})
    wheel_modules = default_wheel_modules(
        rotor_inertia=float(wheels_raw.get("rotor_inertia_kg_m2", 1.0)),
        friction=float(wheels_raw.get("friction_nms", 1e-3)),
        motor_constant=float(wheels_raw.get("motor_constant", 0.5)),
        resistance=float(wheels_raw.get("resistance_ohm", 4.0)),
        inductance=float(wheels_raw.get("inductance_h", 0.05)),
        supply_voltage=float(wheels_raw.get("supply_voltage_v", 12.0)))

    sim_raw = raw.get("sim", {})
    sim = SimConfig(
        dt=float(sim_raw.get("dt_s", 0.01)),
        slot_duration=float(sim_raw.get("slot_duration_s", 5.0)),
        sensor_noise_std=float(sim_raw.get("sensor_noise_std_rad_s", 2e-4)),
        actuation_noise_std=float(sim_raw.get("actuation_noise_std_frac", 0.02)),
        omega_limit=float(sim_raw.get("omega_limit_rad_s", 0.5)),
        disturbance_torque_std=float(sim_raw.get("disturbance_torque_std_nm", 0.0)))

    tsc_raw = raw.get("tsc", {})
    rl_raw = raw.get("rl", {})
    hyper_raw = dict(rl_raw.get("hyper", {}))
    int_fields = {"n_steps", "batch_size", "n_epochs"}
    known_fields = {f.name for f in fields(PPOHyperParams)}
    unknown = set(hyper_raw) - known_fields
    if unknown:
        raise ValidationError(f"unknown hyperparameter keys {sorted(unknown)}")
    # plain YAML floats like 3e-4 parse as strings; coerce field by field
    hyper = PPOHyperParams(**{
        k: (int(v) if k in int_fields else float(v))
        for k, v in hyper_raw.items()})

    sweep_raw = raw.get("robustness", {})
    sweep = RobustnessSweepSpec(
        noise_axis=sweep_raw.get("noise_axis", "sensor"),
        multipliers=tuple(sweep_raw.get("multipliers",
                                        (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0))),
        eval_runs=int(sweep_raw.get("eval_runs", 10)))

    return ScenarioConfig(
        name=str(raw.get("name", "scenario")),
        bodies=bodies,
        configurations=configurations,
        seed=int(raw.get("seed", 0)),
        bank=bank,
        wheel_modules=wheel_modules,
        sim=sim,
        gamma=float(tsc_raw.get("gamma", 1.0)),
        n_init=int(tsc_raw.get("n_init", 5)),
        tsc_stride=int(tsc_raw.get("stride", 50)),
        replicates=int(tsc_raw.get("replicates", 5)),
        heldout_replicates=int(tsc_raw.get("heldout_replicates", 10)),
        reward=_reward_from(raw.get("reward", "speed")),
        n_slots=int(rl_raw.get("n_slots", 6)),
        replicates_per_config=int(rl_raw.get("replicates_per_config", 2)),
        total_steps=int(rl_raw.get("total_steps", 10240)),
        fit_stride=int(rl_raw.get("fit_stride", 50)),
        fit_max_iter=int(rl_raw.get("fit_max_iter", 2)),
        fit_barycenter_iter=int(rl_raw.get("fit_barycenter_iter", 3)),
        hyper=hyper,
        sequence=_sequence_from(raw.get("sequence"), bank),
        sweep=sweep)


def config_to_dict(config: ScenarioConfig) -> dict:
    wheel = config.wheel_modules[0]
    hp = config.hyper
    out = {
        "name": config.name,
        "seed": config.seed,
        "bodies": [_body_to_dict(b) for b in config.bodies],
        "configurations": [{"label": c.label, "bodies": list(c.body_labels)}
                           for c in config.configurations],
        "actuators": {
            "max_thrust_torque_nm": float(np.max(np.abs(config.bank.torque_matrix))),
            "pwm_period_s": float(config.bank.pwm_period),
            "filter_time_constant_s": float(config.bank.filter_time_constant),
            "wheels": {
                "rotor_inertia_kg_m2": float(wheel.rotor_inertia),
                "friction_nms": float(wheel.friction),
                "motor_constant": float(wheel.motor_constant),
                "resistance_ohm": float(wheel.resistance),
                "inductance_h": float(wheel.inductance),
                "supply_voltage_v": float(wheel.supply_voltage),
            },
        },
        "sim": {
            "dt_s": float(config.sim.dt),
            "slot_duration_s": float(config.sim.slot_duration),
            "sensor_noise_std_rad_s": float(config.sim.sensor_noise_std),
            "actuation_noise_std_frac": float(config.sim.actuation_noise_std),
            "omega_limit_rad_s": float(config.sim.omega_limit),
            "disturbance_torque_std_nm": float(config.sim.disturbance_torque_std),
        },
        "tsc": {
            "gamma": float(config.gamma),
            "n_init": int(config.n_init),
            "stride": int(config.tsc_stride),
            "replicates": int(config.replicates),
            "heldout_replicates": int(config.heldout_replicates),
        },
        "reward": {
            "time_weight": float(config.reward.time_weight),
            "thruster_weight": float(config.reward.thruster_weight),
            "wheel_weight": float(config.reward.wheel_weight),
            "f1_weight": float(config.reward.f1_weight),
        },
        "rl": {
            "n_slots": int(config.n_slots),
            "replicates_per_config": int(config.replicates_per_config),
            "total_steps": int(config.total_steps),
            "fit_stride": int(config.fit_stride),
            "fit_max_iter": int(config.fit_max_iter),
            "fit_barycenter_iter": int(config.fit_barycenter_iter),
            "hyper": {f.name: getattr(hp, f.name) for f in fields(hp)},
        },
        "robustness": {
            "noise_axis": config.sweep.noise_axis,
            "multipliers": [float(m) for m in config.sweep.multipliers],
            "eval_runs": int(config.sweep.eval_runs),
        },
    }
    if config.sequence is not None:
        out["sequence"] = [
            {"thruster_duty": [float(x) for x in a.thruster_duty],
             "wheel_voltage_fraction": [float(x) for x in a.wheel_voltage_fraction]}
            for a in config.sequence]
    return out


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValidationError(f"config file {path} is not a mapping")
    return config_from_dict(raw)


def save_config(config: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=True,
                       default_flow_style=False)
