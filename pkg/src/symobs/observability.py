"""Local observability analysis of rotor speed and position.

The measured currents and their first time derivative are the only
information a sensorless drive has.  This module evaluates, in closed form
and numerically, whether that information pins down speed and position:

* ``observability_submatrix`` builds the Jacobian block of the current
  derivative with respect to (omega, theta); two independent rows mean the
  mechanical states are locally distinguishable.
* ``delta_y_closed_form`` evaluates the determinant of the stator rows of
  that block as ``delta_y = D*omega + N`` together with the flux-like
  vector (psi_od, psi_oq) whose rotation rate relative to the rotor decides
  the condition ``omega != d(theta_o)/dt``.

At standstill with constant currents ``delta_y`` is exactly zero: speed
and position cannot be told apart.  Making the rotor current wiggle (high
frequency injection) moves ``theta_o`` and restores the condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .machine import (
    Inputs,
    MachineParams,
    MachineState,
    current_derivative,
    inductance_matrix,
    inductance_matrix_d1,
    inductance_matrix_d2,
    inv_park,
    park,
)

DEFAULT_EPS_DET = 1e-9        # |delta_y| below this counts as singular
DEFAULT_EPS_MARGIN = 1.0      # [rad/s] margin below this counts as unobservable
DEFAULT_RANK_TOL = 1e-10      # relative singular-value cutoff
DEGENERATE_FLUX = 1e-12       # [Wb] both vector components below this -> undefined phase


@dataclass(frozen=True)
class ObservabilitySample:
    """Operating point: machine state plus the current time derivatives.

    ``d_currents`` is d/dt (i_alpha, i_beta, i_f).  The dq views include
    the frame-rotation terms, so they are true time derivatives of the
    dq currents, not just rotated vectors.
    """

    state: MachineState
    d_currents: tuple[float, float, float]

    @property
    def currents_dq(self) -> tuple[float, float]:
        return self.state.currents_dq()

    @property
    def d_currents_dq(self) -> tuple[float, float]:
        rot_d, rot_q = inv_park(self.state.theta, self.d_currents[0], self.d_currents[1])
        i_d, i_q = self.currents_dq
        w = self.state.omega
        return rot_d + w * i_q, rot_q - w * i_d

    @classmethod
    def from_dq(cls, theta, omega, i_d, i_q, i_f, di_d=0.0, di_q=0.0, di_f=0.0):
        """Build a sample from dq-frame currents and their time derivatives."""
        ia, ib = park(theta, i_d, i_q)
        pa, pb = park(theta, di_d, di_q)
        return cls(
            state=MachineState(ia, ib, i_f, omega, theta),
            d_currents=(pa - omega * ib, pb + omega * ia, di_f),
        )


def sample_at(params: MachineParams, state: MachineState, inputs: Inputs) -> ObservabilitySample:
    """Sample with current derivatives supplied by the machine model."""
    di = current_derivative(params, state, inputs)
    return ObservabilitySample(state, (di[0], di[1], di[2]))


@dataclass(frozen=True)
class ObservabilityReport:
    """Closed-form observability quantities at one operating point.

    ``delta_y = D*omega + N`` exactly; ``margin = omega - theta_o_rate`` is
    the distance from the singular condition.  ``approx_factor`` is the
    ratio relating the two: ``delta_y = D*(omega - approx_factor*theta_o_rate)``.
    It equals 1 for machines without a rotor winding.
    """

    D: float
    N: float
    delta_y: float
    psi_od: float
    psi_oq: float
    theta_o: float
    theta_o_rate: float
    margin: float
    approx_factor: float
    degenerate: bool
    observable: bool
    reason: str

    def as_dict(self) -> dict:
        return {
            "D": self.D,
            "N": self.N,
            "delta_y": self.delta_y,
            "psi_od": self.psi_od,
            "psi_oq": self.psi_oq,
            "theta_o": self.theta_o,
            "theta_o_rate": self.theta_o_rate,
            "margin": self.margin,
            "approx_factor": self.approx_factor,
            "degenerate": self.degenerate,
            "observable": self.observable,
            "reason": self.reason,
        }


def effective_saliency(params: MachineParams) -> tuple[float, float]:
    """(transient saliency, transient d inductance) seen by the stator.

    Machines without a rotor winding have no rotor-circuit reaction, so the
    transient values collapse to the static ones.
    """
    if params.kind.has_rotor_winding:
        return params.l_sal_transient, params.ld_transient
    return params.l_sal, params.ld


def _field_flux_terms(params: MachineParams, i_f: float, di_f: float) -> tuple[float, float]:
    """Rotor contribution (mf*i_f, mf*di_f/dt) with the PM/SyRM pinning applied."""
    if params.kind.has_rotor_winding:
        return params.mf * i_f, params.mf * di_f
    return params.kind.psi_r, 0.0


def observability_vector(
    params: MachineParams, i_d: float, i_q: float, i_f: float = 0.0
) -> tuple[float, float, float]:
    """Flux-like vector (psi_od, psi_oq) and its phase in the rotor frame.

    The d component is the active (torque-producing) flux.  For machines
    without a rotor winding ``i_f`` is ignored and the magnet flux is used.
    """
    mf_if, _ = _field_flux_terms(params, i_f, 0.0)
    l_sal_t, _ = effective_saliency(params)
    psi_od = params.l_sal * i_d + mf_if
    psi_oq = l_sal_t * i_q
    if abs(psi_od) < DEGENERATE_FLUX and abs(psi_oq) < DEGENERATE_FLUX:
        return psi_od, psi_oq, 0.0
    return psi_od, psi_oq, math.atan2(psi_oq, psi_od)


def delta_y_closed_form(
    params: MachineParams,
    sample: ObservabilitySample,
    eps_det: float = DEFAULT_EPS_DET,
    eps_margin: float = DEFAULT_EPS_MARGIN,
) -> ObservabilityReport:
    """Closed-form determinant split and the rotation-rate condition."""
    i_d, i_q = sample.currents_dq
    di_d, di_q = sample.d_currents_dq
    mf_if, mf_dif = _field_flux_terms(params, sample.state.i_f, sample.d_currents[2])
    l_sal = params.l_sal
    l_sal_t, ld_t = effective_saliency(params)
    omega = sample.state.omega

    psi_od = l_sal * i_d + mf_if
    psi_oq = l_sal_t * i_q
    dpsi_od = l_sal * di_d + mf_dif
    dpsi_oq = l_sal_t * di_q

    denom = ld_t * params.lq
    d_core = psi_od ** 2 + l_sal_t * l_sal * i_q ** 2
    D = d_core / denom
    N = (l_sal_t / denom) * (dpsi_od * i_q - psi_od * di_q)
    delta_y = D * omega + N

    mag2 = psi_od ** 2 + psi_oq ** 2
    degenerate = abs(psi_od) < DEGENERATE_FLUX and abs(psi_oq) < DEGENERATE_FLUX
    if degenerate:
        theta_o = 0.0
        theta_o_rate = 0.0
        approx_factor = 1.0
    else:
        theta_o = math.atan2(psi_oq, psi_od)
        theta_o_rate = (psi_od * dpsi_oq - psi_oq * dpsi_od) / mag2
        approx_factor = mag2 / d_core if d_core != 0.0 else math.inf

    margin = omega - theta_o_rate
    observable = (not degenerate) and abs(margin) > eps_margin
    if degenerate:
        reason = "degenerate-vector"
    elif observable:
        reason = "ok"
    else:
        reason = "margin-below-threshold"
    return ObservabilityReport(
        D=D,
        N=N,
        delta_y=delta_y,
        psi_od=psi_od,
        psi_oq=psi_oq,
        theta_o=theta_o,
        theta_o_rate=theta_o_rate,
        margin=margin,
        approx_factor=approx_factor,
        degenerate=degenerate,
        observable=observable,
        reason=reason,
    )


def observability_condition(
    params: MachineParams,
    sample: ObservabilitySample,
    eps_margin: float = DEFAULT_EPS_MARGIN,
) -> tuple[float, bool]:
    """Margin omega - d(theta_o)/dt and the observable flag."""
    report = delta_y_closed_form(params, sample, eps_margin=eps_margin)
    return report.margin, report.observable


def observability_submatrix(params: MachineParams, sample: ObservabilitySample) -> np.ndarray:
    """3x2 Jacobian block of the current derivative w.r.t. (omega, theta).

    Columns are [d(di/dt)/d omega, d(di/dt)/d theta] evaluated with the
    supplied current derivatives.  The rotor-current row is zero for
    machines without a rotor winding.
    """
    state = sample.state
    cur = state.currents()
    d_cur = np.asarray(sample.d_currents)
    lmat = inductance_matrix(params, state.theta)
    l1 = inductance_matrix_d1(params, state.theta)
    l2 = inductance_matrix_d2(params, state.theta)
    out = np.zeros((3, 2))
    if params.kind.has_rotor_winding:
        out[:, 0] = -np.linalg.solve(lmat, l1 @ cur)
        out[:, 1] = -np.linalg.solve(lmat, l1 @ d_cur + (l2 @ cur) * state.omega)
    else:
        ls = lmat[:2, :2]
        out[:2, 0] = -np.linalg.solve(ls, (l1 @ cur)[:2])
        out[:2, 1] = -np.linalg.solve(
            ls, l1[:2, :2] @ d_cur[:2] + (l2 @ cur)[:2] * state.omega
        )
    return out


def delta_y_numeric(params: MachineParams, sample: ObservabilitySample) -> float:
    """Determinant of the stator rows of the (omega, theta) Jacobian block."""
    m = observability_submatrix(params, sample)
    return m[0, 0] * m[1, 1] - m[1, 0] * m[0, 1]


def numeric_rank(matrix, tolerance: float = DEFAULT_RANK_TOL) -> int:
    """Rank as the number of singular values above tolerance * largest."""
    matrix = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix entries must be finite")
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tolerance * sv[0]))
