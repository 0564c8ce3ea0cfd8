"""Synchronous machine model in the stationary alpha-beta frame.

One electrical model covers the whole synchronous family: the salient
wound-rotor machine is the general case, and the non-salient WRSM, the
interior/surface PM machines and the reluctance machine are obtained by
pinning the rotor current and/or zeroing the saliency.  All angles and
speeds are electrical, and the two-phase quantities use the
amplitude-invariant convention (hence the 3/2 in the torque).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

KIND_TAGS = ("wrsm-salient", "wrsm-nonsalient", "ipmsm", "spmsm", "syrm")
_PM_TAGS = ("ipmsm", "spmsm")
_WOUND_TAGS = ("wrsm-salient", "wrsm-nonsalient")
_NONSALIENT_TAGS = ("wrsm-nonsalient", "spmsm")


@dataclass(frozen=True)
class MachineKind:
    """Rotor construction tag, plus the magnet flux for PM machines.

    ``psi_r`` [Wb] is only meaningful for ``ipmsm``/``spmsm``; the
    reluctance machine has zero rotor flux by construction.
    """

    tag: str
    psi_r: float = 0.0

    def __post_init__(self):
        if self.tag not in KIND_TAGS:
            raise ValueError(f"unknown machine kind {self.tag!r}, expected one of {KIND_TAGS}")
        if self.tag not in _PM_TAGS and self.psi_r != 0.0:
            raise ValueError(f"psi_r applies to PM machines only, not {self.tag!r}")

    @property
    def has_rotor_winding(self) -> bool:
        return self.tag in _WOUND_TAGS

    @property
    def is_salient(self) -> bool:
        return self.tag not in _NONSALIENT_TAGS


WRSM_SALIENT = MachineKind("wrsm-salient")
WRSM_NONSALIENT = MachineKind("wrsm-nonsalient")
SYRM = MachineKind("syrm")


def ipmsm(psi_r: float) -> MachineKind:
    return MachineKind("ipmsm", psi_r)


def spmsm(psi_r: float) -> MachineKind:
    return MachineKind("spmsm", psi_r)


@dataclass(frozen=True)
class MechanicalParams:
    """Rotor plus load mechanics: inertia, viscous friction, load torque."""

    j: float = 0.01     # [kg m^2]
    fv: float = 0.001   # [N m s]
    tl: float = 0.0     # [N m]

    def __post_init__(self):
        if self.j <= 0.0:
            raise ValueError("inertia j must be positive")
        if self.fv < 0.0:
            raise ValueError("viscous friction fv must be non-negative")


@dataclass(frozen=True)
class MachineParams:
    """Electrical constants of a synchronous machine.

    Inductances are the dq-frame values; the position-dependent alpha-beta
    matrix is built from them.  ``mf`` is the peak stator-rotor mutual
    inductance and must satisfy ``mf^2 < ld*lf`` so the inductance matrix
    stays positive definite at every rotor position.
    """

    pole_pairs: int
    rs: float   # stator resistance [ohm]
    rf: float   # rotor winding resistance [ohm]
    ld: float   # d-axis inductance [H]
    lq: float   # q-axis inductance [H]
    lf: float   # rotor winding self-inductance [H]
    mf: float   # peak stator-rotor mutual inductance [H]
    kind: MachineKind = WRSM_SALIENT
    mech: MechanicalParams = field(default_factory=MechanicalParams)

    def __post_init__(self):
        if self.pole_pairs < 1 or int(self.pole_pairs) != self.pole_pairs:
            raise ValueError("pole_pairs must be a positive integer")
        if self.ld <= 0.0 or self.lq <= 0.0 or self.lf <= 0.0:
            raise ValueError("inductances ld, lq, lf must be positive")
        if self.rs < 0.0 or self.rf < 0.0:
            raise ValueError("resistances must be non-negative")
        if self.mf < 0.0:
            raise ValueError("mutual inductance mf must be non-negative")
        if self.mf ** 2 >= self.ld * self.lf:
            raise ValueError(
                f"mf^2 = {self.mf ** 2:g} must stay below ld*lf = {self.ld * self.lf:g} "
                "(inductance matrix would lose positive definiteness)"
            )
        if not self.kind.is_salient and self.ld != self.lq:
            raise ValueError(f"{self.kind.tag} requires ld == lq (no saliency)")
        if self.kind.tag in _PM_TAGS and self.mf <= 0.0:
            raise ValueError("PM kinds need mf > 0 to define the equivalent rotor current")

    # dq-to-alpha-beta matrix coefficients
    @property
    def l0(self) -> float:
        return 0.5 * (self.ld + self.lq)

    @property
    def l2(self) -> float:
        return 0.5 * (self.ld - self.lq)

    @property
    def l_sal(self) -> float:
        """Saliency inductance ld - lq."""
        return self.ld - self.lq

    @property
    def l_sal_transient(self) -> float:
        """Saliency seen through the shorted rotor winding: ld - lq - mf^2/lf."""
        return self.l_sal - self.mf ** 2 / self.lf

    @property
    def ld_transient(self) -> float:
        """d-axis transient inductance ld - mf^2/lf."""
        return self.ld - self.mf ** 2 / self.lf

    def fixed_field_current(self) -> float:
        """Constant equivalent rotor current for kinds without a rotor winding."""
        if self.kind.has_rotor_winding:
            raise ValueError("rotor current is a free state for wound-rotor machines")
        if self.kind.tag == "syrm":
            return 0.0
        return self.kind.psi_r / self.mf


def default_wrsm(mech: MechanicalParams | None = None) -> MachineParams:
    """Salient WRSM parameter set used by the bundled scenarios.

    The mutual inductance defaults to 0.02 H, which keeps the inductance
    matrix positive definite (mf^2 = 4e-4 < ld*lf = 6.8e-4) with a positive
    d-axis transient inductance.
    """
    return MachineParams(
        pole_pairs=2,
        rs=0.01,
        rf=6.5,
        ld=0.8e-3,
        lq=0.7e-3,
        lf=0.85,
        mf=0.02,
        kind=WRSM_SALIENT,
        mech=mech if mech is not None else MechanicalParams(),
    )


@dataclass(frozen=True)
class MachineState:
    """Full state [i_alpha, i_beta, i_f, omega, theta].

    ``theta`` is kept unwrapped; use :attr:`theta_wrapped` at presentation
    boundaries.
    """

    i_alpha: float = 0.0
    i_beta: float = 0.0
    i_f: float = 0.0
    omega: float = 0.0
    theta: float = 0.0

    @property
    def theta_wrapped(self) -> float:
        return self.theta % TWO_PI

    def currents(self) -> np.ndarray:
        return np.array([self.i_alpha, self.i_beta, self.i_f])

    def currents_dq(self) -> tuple[float, float]:
        return inv_park(self.theta, self.i_alpha, self.i_beta)

    def as_array(self) -> np.ndarray:
        return np.array([self.i_alpha, self.i_beta, self.i_f, self.omega, self.theta])

    @classmethod
    def from_array(cls, x) -> "MachineState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]), float(x[4]))


def initial_state(params: MachineParams, theta: float = 0.0, omega: float = 0.0) -> MachineState:
    """Rest state with the rotor current pinned for kinds without a winding."""
    i_f = 0.0 if params.kind.has_rotor_winding else params.fixed_field_current()
    return MachineState(0.0, 0.0, i_f, omega, theta)


@dataclass(frozen=True)
class Inputs:
    """Terminal voltages [V]; ``v_f`` is ignored for machines without a rotor winding."""

    v_alpha: float = 0.0
    v_beta: float = 0.0
    v_f: float = 0.0


def park(theta: float, d: float, q: float) -> tuple[float, float]:
    """Rotate a dq-frame vector into the stationary alpha-beta frame."""
    c, s = math.cos(theta), math.sin(theta)
    return d * c - q * s, d * s + q * c


def inv_park(theta: float, alpha: float, beta: float) -> tuple[float, float]:
    """Rotate an alpha-beta vector into the dq frame at rotor angle theta."""
    c, s = math.cos(theta), math.sin(theta)
    return alpha * c + beta * s, -alpha * s + beta * c


def inductance_matrix(params: MachineParams, theta: float) -> np.ndarray:
    """Position-dependent 3x3 inductance matrix (symmetric positive definite)."""
    c, s = math.cos(theta), math.sin(theta)
    c2, s2 = math.cos(2.0 * theta), math.sin(2.0 * theta)
    l0, l2, mf = params.l0, params.l2, params.mf
    return np.array([
        [l0 + l2 * c2, l2 * s2, mf * c],
        [l2 * s2, l0 - l2 * c2, mf * s],
        [mf * c, mf * s, params.lf],
    ])


def inductance_matrix_d1(params: MachineParams, theta: float) -> np.ndarray:
    """First derivative of the inductance matrix with respect to position."""
    c, s = math.cos(theta), math.sin(theta)
    c2, s2 = math.cos(2.0 * theta), math.sin(2.0 * theta)
    l2, mf = params.l2, params.mf
    return np.array([
        [-2.0 * l2 * s2, 2.0 * l2 * c2, -mf * s],
        [2.0 * l2 * c2, 2.0 * l2 * s2, mf * c],
        [-mf * s, mf * c, 0.0],
    ])


def inductance_matrix_d2(params: MachineParams, theta: float) -> np.ndarray:
    """Second derivative of the inductance matrix with respect to position."""
    c, s = math.cos(theta), math.sin(theta)
    c2, s2 = math.cos(2.0 * theta), math.sin(2.0 * theta)
    l2, mf = params.l2, params.mf
    return np.array([
        [-4.0 * l2 * c2, -4.0 * l2 * s2, -mf * c],
        [-4.0 * l2 * s2, 4.0 * l2 * c2, -mf * s],
        [-mf * c, -mf * s, 0.0],
    ])


def resistance_matrix(params: MachineParams) -> np.ndarray:
    return np.diag([params.rs, params.rs, params.rf])


def equivalent_resistance(params: MachineParams, theta: float, omega: float) -> np.ndarray:
    """Resistance matrix augmented with the motional (speed) term."""
    return resistance_matrix(params) + inductance_matrix_d1(params, theta) * omega


def electromagnetic_torque(params: MachineParams, state: MachineState) -> float:
    """Torque from the quadratic form of the currents on the inductance slope."""
    cur = state.currents()
    quad = cur @ inductance_matrix_d1(params, state.theta) @ cur
    return 0.75 * params.pole_pairs * quad


def current_derivative(params: MachineParams, state: MachineState, inputs: Inputs) -> np.ndarray:
    """Time derivative of [i_alpha, i_beta, i_f].

    For machines without a rotor winding the rotor current is pinned
    (derivative zero) and only the stator block is solved; ``v_f`` is
    forced to zero for those kinds.
    """
    cur = state.currents()
    volt = np.array([inputs.v_alpha, inputs.v_beta, inputs.v_f])
    req = equivalent_resistance(params, state.theta, state.omega)
    lmat = inductance_matrix(params, state.theta)
    if params.kind.has_rotor_winding:
        return np.linalg.solve(lmat, volt - req @ cur)
    volt[2] = 0.0
    rhs = (volt - req @ cur)[:2]
    di_s = np.linalg.solve(lmat[:2, :2], rhs)
    return np.array([di_s[0], di_s[1], 0.0])


def state_derivative(
    params: MachineParams,
    state: MachineState,
    inputs: Inputs,
    mode: str = "free-mechanical",
    imposed_accel: float = 0.0,
) -> np.ndarray:
    """Full state derivative [di_alpha, di_beta, di_f, domega, dtheta].

    In ``imposed-speed`` mode the speed derivative comes from the external
    drive (``imposed_accel``) and the mechanical balance is bypassed; in
    ``free-mechanical`` mode it follows from torque, friction and load.
    """
    di = current_derivative(params, state, inputs)
    if mode == "free-mechanical":
        m = params.mech
        torque = electromagnetic_torque(params, state)
        domega = -(m.fv / m.j) * state.omega + (params.pole_pairs / m.j) * (torque - m.tl)
    elif mode == "imposed-speed":
        domega = imposed_accel
    else:
        raise ValueError(f"unknown mode {mode!r}, expected 'free-mechanical' or 'imposed-speed'")
    return np.array([di[0], di[1], di[2], domega, state.omega])


def magnetic_energy(params: MachineParams, state: MachineState) -> float:
    """Stored magnetic energy 0.5 * i^T L i [J]."""
    cur = state.currents()
    return 0.5 * cur @ inductance_matrix(params, state.theta) @ cur
