"""Closed-loop scenario engine.

The plant (electrical states only) is integrated with fixed-step RK4 while
speed and position are imposed by an external speed profile.  Stator and
rotor currents are regulated by plain PI loops in the rotor frame, using
the true position; the EKF runs shadow-mode on the same measurements and
never closes a loop.  An optional high-frequency component is added to the
rotor-current set-point to exercise standstill observability.

Everything a run needs lives in an immutable :class:`Scenario`; a run is
deterministic given the scenario and its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ekf import (
    DEFAULT_P0_DIAG,
    DEFAULT_Q_DIAG,
    DEFAULT_R_DIAG,
    EkfConfig,
    EkfState,
    ekf_step,
)
from .machine import (
    Inputs,
    MachineParams,
    MachineState,
    default_wrsm,
    inv_park,
    park,
)
from .observability import (
    DEFAULT_EPS_DET,
    DEFAULT_EPS_MARGIN,
    delta_y_closed_form,
    sample_at,
)

HF_MODES = ("always-off", "fixed-window", "speed-triggered")


class SimulationDiverged(RuntimeError):
    """Raised when a plant current exceeds the scenario safety bound."""


@dataclass(frozen=True)
class SpeedProfile:
    """Piecewise constant-acceleration speed profile, continuous in speed.

    ``segments`` is a sequence of (duration [s], acceleration [rad/s^2])
    starting from zero speed at t = 0; after the last segment the final
    speed holds forever.  Position is the exact integral.
    """

    segments: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        for duration, _ in self.segments:
            if duration < 0.0:
                raise ValueError("segment durations must be non-negative")

    @classmethod
    def hold_ramp_hold(cls, hold_time=1.5, acceleration=500.0, ramp_time=1.0) -> "SpeedProfile":
        """Standstill, then a constant-acceleration ramp, then constant speed."""
        return cls(((hold_time, 0.0), (ramp_time, acceleration)))

    def speed_at(self, t: float) -> float:
        if t < 0.0:
            raise ValueError("profile time must be non-negative")
        w = 0.0
        for duration, accel in self.segments:
            if t <= duration:
                return w + accel * t
            w += accel * duration
            t -= duration
        return w

    def position_at(self, t: float) -> float:
        if t < 0.0:
            raise ValueError("profile time must be non-negative")
        w = 0.0
        pos = 0.0
        for duration, accel in self.segments:
            if t <= duration:
                return pos + w * t + 0.5 * accel * t * t
            pos += w * duration + 0.5 * accel * duration * duration
            w += accel * duration
            t -= duration
        return pos + w * t

    def state_at(self, t: float) -> tuple[float, float]:
        """(position, speed) in one walk; used by the integrator hot loop."""
        w = 0.0
        pos = 0.0
        for duration, accel in self.segments:
            if t <= duration:
                return pos + w * t + 0.5 * accel * t * t, w + accel * t
            pos += w * duration + 0.5 * accel * duration * duration
            w += accel * duration
            t -= duration
        return pos + w * t, w


@dataclass
class PiController:
    """PI regulator with output clamping; the integral freezes on saturation."""

    kp: float
    ki: float
    out_min: float = -math.inf
    out_max: float = math.inf
    integral: float = 0.0

    def step(self, error: float, dt: float) -> float:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        trial = self.kp * error + self.ki * self.integral
        if self.out_min <= trial <= self.out_max:
            self.integral += error * dt
        out = self.kp * error + self.ki * self.integral
        return min(max(out, self.out_min), self.out_max)

    def reset(self):
        self.integral = 0.0


def pi_step(ctrl: PiController, error: float, dt: float) -> float:
    return ctrl.step(error, dt)


@dataclass(frozen=True)
class HfInjection:
    """High-frequency component added to the rotor-current set-point.

    The signal is ``amplitude * sin(2*pi*frequency*t)`` in absolute time.
    ``fixed-window`` activates on the half-open interval [start, end);
    ``speed-triggered`` activates while the estimated speed magnitude is
    below ``speed_threshold``.
    """

    mode: str = "fixed-window"
    amplitude: float = 0.5        # [A]
    frequency: float = 1000.0     # [Hz]
    window: tuple[float, float] = (1.0, 1.5)
    speed_threshold: float = 50.0  # [rad/s]

    def __post_init__(self):
        if self.mode not in HF_MODES:
            raise ValueError(f"unknown HF mode {self.mode!r}, expected one of {HF_MODES}")
        if self.window[1] < self.window[0]:
            raise ValueError("HF window end must not precede its start")

    def active(self, t: float, omega_hat: float = 0.0) -> bool:
        if self.mode == "always-off":
            return False
        if self.mode == "fixed-window":
            return self.window[0] <= t < self.window[1]
        return abs(omega_hat) < self.speed_threshold

    def setpoint(self, t: float, base: float, omega_hat: float = 0.0) -> float:
        if self.active(t, omega_hat):
            return base + self.amplitude * math.sin(2.0 * math.pi * self.frequency * t)
        return base


def hf_setpoint(hf: HfInjection, t: float, base: float, omega_hat: float = 0.0) -> float:
    return hf.setpoint(t, base, omega_hat)


@dataclass(frozen=True)
class ControllerGains:
    """PI gains per current loop plus output voltage limits."""

    kp_d: float
    ki_d: float
    kp_q: float
    ki_q: float
    kp_f: float
    ki_f: float
    v_limit_stator: float = math.inf
    v_limit_field: float = math.inf

    @classmethod
    def from_time_constants(
        cls,
        params: MachineParams,
        tau_stator: float = 1e-3,
        tau_field: float = 1e-3,
        v_limit_stator: float = math.inf,
        v_limit_field: float = math.inf,
    ) -> "ControllerGains":
        """Pole-placement gains kp = L/tau, ki = R/tau per loop.

        A 1 ms loop passes a 1 kHz injected set-point at roughly 0.16
        amplitude; faster field loops need time constants well above the
        control period or the sampled loop goes unstable.
        """
        return cls(
            kp_d=params.ld / tau_stator,
            ki_d=params.rs / tau_stator,
            kp_q=params.lq / tau_stator,
            ki_q=params.rs / tau_stator,
            kp_f=params.lf / tau_field,
            ki_f=params.rf / tau_field,
            v_limit_stator=v_limit_stator,
            v_limit_field=v_limit_field,
        )


@dataclass(frozen=True)
class Scenario:
    """Immutable description of one closed-loop run."""

    params: MachineParams = field(default_factory=default_wrsm)
    i_d_ref: float = 4.0
    i_q_ref: float = 15.0
    i_f_ref: float = 4.0
    profile: SpeedProfile = field(default_factory=SpeedProfile.hold_ramp_hold)
    hf: HfInjection = field(default_factory=HfInjection)
    gains: ControllerGains | None = None   # None: derive from params
    plant_step: float = 1e-5
    control_step: float = 1e-4
    duration: float = 3.0
    ekf_q_diag: tuple = DEFAULT_Q_DIAG
    ekf_r_diag: tuple = DEFAULT_R_DIAG
    ekf_p0_diag: tuple = DEFAULT_P0_DIAG
    theta0_error: float = 0.5      # [rad] initial position estimate offset
    omega0_hat: float = 0.0        # [rad/s] initial speed estimate
    noise_std: tuple = (0.0, 0.0, 0.0)   # per-channel measurement noise [A]
    seed: int = 0
    current_limit: float = 1e4     # [A] divergence guard
    eps_det: float = DEFAULT_EPS_DET
    eps_margin: float = DEFAULT_EPS_MARGIN

    def __post_init__(self):
        if self.duration < 0.0:
            raise ValueError("duration must be non-negative")
        if self.plant_step <= 0.0 or self.control_step <= 0.0:
            raise ValueError("integration steps must be positive")
        if self.plant_step > self.control_step:
            raise ValueError("plant step must not exceed the control step")
        n_sub = self.control_step / self.plant_step
        if abs(n_sub - round(n_sub)) > 1e-9:
            raise ValueError("control step must be an integer multiple of the plant step")

    @property
    def n_substeps(self) -> int:
        return int(round(self.control_step / self.plant_step))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.control_step))

    def controller_gains(self) -> ControllerGains:
        return self.gains if self.gains is not None else ControllerGains.from_time_constants(self.params)

    def ekf_config(self) -> EkfConfig:
        theta0 = self.profile.position_at(0.0)
        i_f0 = 0.0 if self.params.kind.has_rotor_winding else self.params.fixed_field_current()
        x0 = MachineState(0.0, 0.0, i_f0, self.omega0_hat, theta0 + self.theta0_error)
        return EkfConfig(
            q=np.diag(self.ekf_q_diag).astype(float),
            r=np.diag(self.ekf_r_diag).astype(float),
            ts=self.control_step,
            p0=np.diag(self.ekf_p0_diag).astype(float),
            x0=x0,
        )


COLUMNS = (
    "t", "theta", "omega", "i_alpha", "i_beta", "i_f",
    "v_alpha", "v_beta", "v_f", "theta_hat", "omega_hat",
    "delta_y", "D", "N", "psi_od", "psi_oq", "theta_o",
    "margin", "approx26_factor",
)


@dataclass
class TimeSeriesLog:
    """Fixed-schema run log; one row per completed control step."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != len(COLUMNS):
            raise ValueError(f"log data must have {len(COLUMNS)} columns")

    def __len__(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, COLUMNS.index(name)]

    def to_csv(self, path):
        np.savetxt(
            path, self.data, fmt="%.17g", delimiter=",",
            header=",".join(COLUMNS), comments="", newline="\n",
        )

    @classmethod
    def empty(cls) -> "TimeSeriesLog":
        return cls(np.empty((0, len(COLUMNS))))


def _integrate_currents(params, profile, t0, h, n_sub, ia, ib, i_f, va, vb, vf):
    """RK4 over one control period, speed/position imposed by the profile.

    Plain-float arithmetic with a closed-form symmetric solve; this is the
    hot loop, kept free of array allocation.  Must agree with
    ``machine.current_derivative`` (cross-checked in the tests).
    """
    l0 = params.l0
    l2 = params.l2
    mf = params.mf
    lf = params.lf
    rs = params.rs
    rf = params.rf
    wound = params.kind.has_rotor_winding
    state_at = profile.state_at

    def rhs(t, x0, x1, x2):
        th, w = state_at(t)
        cos_t = math.cos(th)
        sin_t = math.sin(th)
        cos2 = cos_t * cos_t - sin_t * sin_t
        sin2 = 2.0 * sin_t * cos_t
        a11 = l0 + l2 * cos2
        a12 = l2 * sin2
        a13 = mf * cos_t
        a22 = l0 - l2 * cos2
        a23 = mf * sin_t
        d11 = -2.0 * l2 * sin2
        d12 = 2.0 * l2 * cos2
        d13 = -mf * sin_t
        d22 = 2.0 * l2 * sin2
        d23 = mf * cos_t
        r1 = va - rs * x0 - w * (d11 * x0 + d12 * x1 + d13 * x2)
        r2 = vb - rs * x1 - w * (d12 * x0 + d22 * x1 + d23 * x2)
        if wound:
            r3 = vf - rf * x2 - w * (d13 * x0 + d23 * x1)
            m11 = a22 * lf - a23 * a23
            m12 = a12 * lf - a23 * a13
            m13 = a12 * a23 - a22 * a13
            m22 = a11 * lf - a13 * a13
            m23 = a11 * a23 - a12 * a13
            m33 = a11 * a22 - a12 * a12
            det = a11 * m11 - a12 * m12 + a13 * m13
            return (
                (r1 * m11 - r2 * m12 + r3 * m13) / det,
                (-r1 * m12 + r2 * m22 - r3 * m23) / det,
                (r1 * m13 - r2 * m23 + r3 * m33) / det,
            )
        det = a11 * a22 - a12 * a12
        return (
            (r1 * a22 - r2 * a12) / det,
            (r2 * a11 - r1 * a12) / det,
            0.0,
        )

    half = 0.5 * h
    sixth = h / 6.0
    for k in range(n_sub):
        t = t0 + k * h
        k1a, k1b, k1f = rhs(t, ia, ib, i_f)
        k2a, k2b, k2f = rhs(t + half, ia + half * k1a, ib + half * k1b, i_f + half * k1f)
        k3a, k3b, k3f = rhs(t + half, ia + half * k2a, ib + half * k2b, i_f + half * k2f)
        k4a, k4b, k4f = rhs(t + h, ia + h * k3a, ib + h * k3b, i_f + h * k3f)
        ia += sixth * (k1a + 2.0 * (k2a + k3a) + k4a)
        ib += sixth * (k1b + 2.0 * (k2b + k3b) + k4b)
        i_f += sixth * (k1f + 2.0 * (k2f + k3f) + k4f)
    return ia, ib, i_f


def run_scenario(scenario: Scenario) -> TimeSeriesLog:
    """Run the closed loop and return the per-control-step log.

    Raises :class:`SimulationDiverged` if any current leaves the safety
    bound.  Identical scenario and seed reproduce the log bit-exactly.
    """
    par = scenario.params
    profile = scenario.profile
    gains = scenario.controller_gains()
    ts = scenario.control_step
    n_steps = scenario.n_steps
    n_sub = scenario.n_substeps
    wound = par.kind.has_rotor_winding

    pi_d = PiController(gains.kp_d, gains.ki_d, -gains.v_limit_stator, gains.v_limit_stator)
    pi_q = PiController(gains.kp_q, gains.ki_q, -gains.v_limit_stator, gains.v_limit_stator)
    pi_f = PiController(gains.kp_f, gains.ki_f, -gains.v_limit_field, gains.v_limit_field)

    cfg = scenario.ekf_config()
    ekf = EkfState.from_config(cfg)

    noise_std = np.asarray(scenario.noise_std, dtype=float)
    noisy = bool(np.any(noise_std > 0.0))
    rng = np.random.default_rng(scenario.seed)

    ia, ib = 0.0, 0.0
    i_f = 0.0 if wound else par.fixed_field_current()
    limit = scenario.current_limit

    data = np.empty((n_steps, len(COLUMNS)))
    for k in range(n_steps):
        t = k * ts
        theta, _ = profile.state_at(t)
        i_d, i_q = inv_park(theta, ia, ib)
        if_ref = scenario.hf.setpoint(t, scenario.i_f_ref, omega_hat=ekf.x_hat.omega)
        v_d = pi_d.step(scenario.i_d_ref - i_d, ts)
        v_q = pi_q.step(scenario.i_q_ref - i_q, ts)
        v_f = pi_f.step(if_ref - i_f, ts) if wound else 0.0
        va, vb = park(theta, v_d, v_q)

        ia, ib, i_f = _integrate_currents(
            par, profile, t, scenario.plant_step, n_sub, ia, ib, i_f, va, vb, v_f
        )
        if abs(ia) > limit or abs(ib) > limit or abs(i_f) > limit:
            raise SimulationDiverged(
                f"current exceeded {limit:g} A at t = {t + ts:.6f} s "
                f"(i_alpha={ia:.3g}, i_beta={ib:.3g}, i_f={i_f:.3g})"
            )

        t1 = (k + 1) * ts
        theta1, omega1 = profile.state_at(t1)
        y = np.array([ia, ib, i_f])
        if noisy:
            y = y + rng.normal(0.0, 1.0, 3) * noise_std
        ekf = ekf_step(par, ekf, np.array([va, vb, v_f]), y, cfg)

        true_state = MachineState(ia, ib, i_f, omega1, theta1)
        sample = sample_at(par, true_state, Inputs(va, vb, v_f))
        rep = delta_y_closed_form(par, sample, scenario.eps_det, scenario.eps_margin)

        row = data[k]
        row[0] = t1
        row[1] = theta1
        row[2] = omega1
        row[3] = ia
        row[4] = ib
        row[5] = i_f
        row[6] = va
        row[7] = vb
        row[8] = v_f
        row[9] = ekf.x_hat.theta
        row[10] = ekf.x_hat.omega
        row[11] = rep.delta_y
        row[12] = rep.D
        row[13] = rep.N
        row[14] = rep.psi_od
        row[15] = rep.psi_oq
        row[16] = rep.theta_o
        row[17] = rep.margin
        row[18] = rep.approx_factor

    return TimeSeriesLog(data)
