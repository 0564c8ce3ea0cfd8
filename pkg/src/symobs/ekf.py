"""Discrete-time extended Kalman filter over the five-state machine model.

The recursion linearizes at the current estimate, predicts the state with
the explicit-Euler step ``x + Ts*f``, and corrects with the measured
currents.  The covariance steps use the positive-semidefinite-preserving
companions of the textbook first-order formulas:

* prediction: ``P <- (I + Ts*A) P (I + Ts*A)^T + Q``, which equals
  ``P + Ts*(AP + PA^T) + Q`` plus the quadratic term ``Ts^2 A P A^T``;
* correction: the Joseph form ``(I-KC) P (I-KC)^T + K R K^T``, which is
  algebraically identical to ``P - KCP`` at the optimal gain.

The quadratic completion matters here: after a long weakly-observable
stretch the position variance is large, and when informative measurements
suddenly return (position-coupled Jacobian entries jump), the truncated
first-order propagation turns P indefinite in a single step and the
filter destroys itself.  The congruence forms cost the same and keep P
positive semidefinite; P is additionally re-symmetrized every step.

The filter's internal model is always the free-mechanical five-state one.
When the plant is driven by an external speed profile this is a deliberate
model mismatch: the estimator has no way to know the external drive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .machine import (
    Inputs,
    MachineParams,
    MachineState,
    current_derivative,
    equivalent_resistance,
    inductance_matrix,
    inductance_matrix_d1,
    inductance_matrix_d2,
    state_derivative,
)

N_STATES = 5
N_MEAS = 3

DEFAULT_Q_DIAG = (1.0, 1.0, 1.0, 200.0, 5.0)
DEFAULT_R_DIAG = (1.0, 1.0, 1.0)
DEFAULT_P0_DIAG = (1.0, 1.0, 1.0, 10.0, 1.0)
DEFAULT_TS = 1e-4

# h(x) = currents: constant output Jacobian
C_MATRIX = np.hstack([np.eye(N_MEAS), np.zeros((N_MEAS, N_STATES - N_MEAS))])


def _check_symmetric_psd(m, name, strict=False):
    m = np.asarray(m, dtype=float)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(m, m.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    eig_min = float(np.linalg.eigvalsh(m)[0])
    if strict and eig_min <= 0.0:
        raise ValueError(f"{name} must be positive definite (min eigenvalue {eig_min:g})")
    if not strict and eig_min < -1e-9:
        raise ValueError(f"{name} must be positive semi-definite (min eigenvalue {eig_min:g})")
    return m


@dataclass(frozen=True)
class EkfConfig:
    """Tuning matrices, sampling period and initial condition.

    ``ts`` may be zero only for formula-faithfulness checks; real use
    requires a positive sampling period.
    """

    q: np.ndarray
    r: np.ndarray
    ts: float
    p0: np.ndarray
    x0: MachineState

    def __post_init__(self):
        object.__setattr__(self, "q", _check_symmetric_psd(self.q, "Q"))
        object.__setattr__(self, "r", _check_symmetric_psd(self.r, "R", strict=True))
        object.__setattr__(self, "p0", _check_symmetric_psd(self.p0, "P0"))
        if self.q.shape != (N_STATES, N_STATES) or self.p0.shape != (N_STATES, N_STATES):
            raise ValueError("Q and P0 must be 5x5")
        if self.r.shape != (N_MEAS, N_MEAS):
            raise ValueError("R must be 3x3")
        if self.ts < 0.0:
            raise ValueError("sampling period ts must be non-negative")


def default_config(x0: MachineState | None = None, ts: float = DEFAULT_TS) -> EkfConfig:
    return EkfConfig(
        q=np.diag(DEFAULT_Q_DIAG),
        r=np.diag(DEFAULT_R_DIAG),
        ts=ts,
        p0=np.diag(DEFAULT_P0_DIAG),
        x0=x0 if x0 is not None else MachineState(),
    )


@dataclass
class EkfState:
    """Current estimate and covariance; treated as a value, never mutated."""

    x_hat: MachineState
    p: np.ndarray

    @classmethod
    def from_config(cls, cfg: EkfConfig) -> "EkfState":
        return cls(x_hat=cfg.x0, p=cfg.p0.copy())


def linearize(params: MachineParams, x_hat: MachineState, u) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians (A, C) of the free-mechanical model at (x_hat, u).

    A is d f/d x for the five-state model; C is the constant [I3 | 0]
    since the outputs are the three currents.
    """
    inputs = u if isinstance(u, Inputs) else Inputs(float(u[0]), float(u[1]), float(u[2]))
    theta, omega = x_hat.theta, x_hat.omega
    cur = x_hat.currents()
    lmat = inductance_matrix(params, theta)
    l1 = inductance_matrix_d1(params, theta)
    l2 = inductance_matrix_d2(params, theta)
    di = current_derivative(params, x_hat, inputs)

    a = np.zeros((N_STATES, N_STATES))
    if params.kind.has_rotor_winding:
        req = equivalent_resistance(params, theta, omega)
        a[:3, :3] = -np.linalg.solve(lmat, req)
        a[:3, 3] = -np.linalg.solve(lmat, l1 @ cur)
        a[:3, 4] = -np.linalg.solve(lmat, l1 @ di + (l2 @ cur) * omega)
    else:
        ls = lmat[:2, :2]
        ls_inv = np.linalg.inv(ls)
        # stator block: resistance plus motional coupling, including the
        # (pinned but state-perturbable) rotor-current column
        a[:2, :2] = -ls_inv @ (np.diag([params.rs, params.rs]) + omega * l1[:2, :2])
        a[:2, 2] = -ls_inv @ (omega * l1[:2, 2])
        a[:2, 3] = -ls_inv @ (l1 @ cur)[:2]
        a[:2, 4] = -ls_inv @ (l1[:2, :2] @ di[:2] + (l2 @ cur)[:2] * omega)

    m = params.mech
    p = params.pole_pairs
    a[3, :3] = (1.5 * p * p / m.j) * (l1 @ cur)
    a[3, 3] = -m.fv / m.j
    a[3, 4] = (0.75 * p * p / m.j) * (cur @ l2 @ cur)
    a[4, 3] = 1.0
    return a, C_MATRIX.copy()


def ekf_predict(params: MachineParams, ekf: EkfState, u, cfg: EkfConfig) -> EkfState:
    """Explicit-Euler state prediction with PSD-preserving covariance step."""
    inputs = u if isinstance(u, Inputs) else Inputs(float(u[0]), float(u[1]), float(u[2]))
    a, _ = linearize(params, ekf.x_hat, inputs)
    f = state_derivative(params, ekf.x_hat, inputs, mode="free-mechanical")
    x = ekf.x_hat.as_array() + cfg.ts * f
    m = np.eye(N_STATES) + cfg.ts * a
    p = m @ ekf.p @ m.T + cfg.q
    p = 0.5 * (p + p.T)
    return EkfState(x_hat=MachineState.from_array(x), p=p)


def kalman_update(x, p, y, c, r):
    """Generic linear measurement update; returns (x, P, K).

    Uses the Joseph covariance form (equal to ``P - KCP`` at the optimal
    gain, but stays positive semidefinite under rounding).  Raises
    ``numpy.linalg.LinAlgError`` if the innovation covariance is
    numerically singular.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    s = c @ p @ c.T + r
    try:
        k = np.linalg.solve(s, c @ p).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"innovation covariance is numerically singular: {exc}"
        ) from exc
    x_new = x + k @ (np.asarray(y, dtype=float) - c @ x)
    ikc = np.eye(p.shape[0]) - k @ c
    p_new = ikc @ p @ ikc.T + k @ r @ k.T
    p_new = 0.5 * (p_new + p_new.T)
    return x_new, p_new, k


def ekf_update(ekf: EkfState, y, cfg: EkfConfig) -> EkfState:
    """Measurement update with y = measured currents."""
    x, p, _ = kalman_update(ekf.x_hat.as_array(), ekf.p, y, C_MATRIX, cfg.r)
    return EkfState(x_hat=MachineState.from_array(x), p=p)


def ekf_step(params: MachineParams, ekf: EkfState, u, y, cfg: EkfConfig) -> EkfState:
    """One full recursion: linearize, predict, gain, innovate."""
    return ekf_update(ekf_predict(params, ekf, u, cfg), y, cfg)
