"""Reduced Lagrangians and Euler-Poincare right-hand sides.

Two systems live on SE(3): the underwater vehicle (gravity direction
``Gamma`` in R^3) and the heavy top on a movable base (``a = (Gamma, h)`` in
R^4, ``h`` the base height).  Both share the block kinetic metric
``[[J, D], [D^T, M]]``.  Optional extra advected parameters are ``theta``
(direction of the desired velocity seen from the body) and the drift pair
``(Delta_i, delta_i)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from epshape.algebra import (
    AlgebraVector,
    MomentumCovector,
    advect_rate_r3,
    advect_rate_r4,
    as_mat,
    as_vec,
    cross,
)
from epshape.errors import MissingField, SingularInertia

UNIT_TOL = 1e-9


class SystemId(enum.Enum):
    UnderwaterVehicle = "UnderwaterVehicle"
    HeavyTopMovableBase = "HeavyTopMovableBase"


class PotentialId(enum.Enum):
    UWV = "uwv"
    HTMB = "htmb"


@dataclass(frozen=True)
class InertiaParams:
    """Kinetic metric blocks plus gravity data.

    ``m_total`` is the heavy top's m_bar = M_base + m and is ignored by the
    underwater vehicle.
    """

    j_block: np.ndarray
    d_block: np.ndarray
    m_block: np.ndarray
    m_body: float
    m_total: float
    g: float
    l: float
    chi: np.ndarray
    metric: np.ndarray = field(init=False, repr=False, compare=False)
    metric_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        j = as_mat(self.j_block, "J")
        d = as_mat(self.d_block, "D")
        m = as_mat(self.m_block, "M")
        chi = as_vec(self.chi, name="chi")
        if abs(np.linalg.norm(chi) - 1.0) > UNIT_TOL:
            raise ValueError(f"chi must be a unit vector (norm {np.linalg.norm(chi):.12g})")
        if self.m_body < 0:
            raise ValueError("m_body must be nonnegative")
        for name in ("m_body", "m_total", "g", "l"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        metric = np.block([[j, d], [d.T, m]])
        if np.max(np.abs(metric - metric.T)) > 1e-12 * max(1.0, np.max(np.abs(metric))):
            raise SingularInertia("kinetic metric [[J, D], [D^T, M]] is not symmetric")
        try:
            chol = np.linalg.cholesky(metric)
        except np.linalg.LinAlgError as exc:
            raise SingularInertia("kinetic metric is not positive definite") from exc
        chol_inv = np.linalg.inv(chol)
        metric_inv = chol_inv.T @ chol_inv
        for name, val in (("j_block", j), ("d_block", d), ("m_block", m), ("chi", chi)):
            object.__setattr__(self, name, val)
        for name in ("m_body", "m_total", "g", "l"):
            object.__setattr__(self, name, float(getattr(self, name)))
        metric.setflags(write=False)
        metric_inv.setflags(write=False)
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "metric_inv", metric_inv)

    @property
    def mgl(self) -> float:
        return self.m_body * self.g * self.l

    @classmethod
    def desk_defaults(cls, **overrides) -> InertiaParams:
        """Desk-scale parameters used by the shipped scenarios (not physical data)."""
        kw = dict(
            j_block=np.diag([3.0, 2.0, 1.0]),
            d_block=np.zeros((3, 3)),
            m_block=np.diag([1.2, 1.5, 2.0]),
            m_body=1.0,
            m_total=3.0,
            g=9.81,
            l=1.0 / 9.81,
            chi=[0.0, 0.0, 1.0],
        )
        kw.update(overrides)
        return cls(**kw)


@dataclass(frozen=True)
class ReducedState:
    """Body velocity plus whichever advected parameters the active model uses.

    ``a_r3`` is Gamma for the vehicle, ``a_r4`` is (Gamma, h) for the heavy
    top, ``theta`` the desired-heading direction and ``deltas`` the pair
    ((Delta_1, delta_1), (Delta_2, delta_2)).
    """

    xi: AlgebraVector
    a_r3: np.ndarray | None = None
    a_r4: np.ndarray | None = None
    theta: np.ndarray | None = None
    deltas: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if self.a_r3 is not None:
            object.__setattr__(self, "a_r3", as_vec(self.a_r3, 3, "a_r3"))
        if self.a_r4 is not None:
            object.__setattr__(self, "a_r4", as_vec(self.a_r4, 4, "a_r4"))
        if self.theta is not None:
            object.__setattr__(self, "theta", as_vec(self.theta, 3, "theta"))
        if self.deltas is not None:
            d1, d2 = self.deltas
            object.__setattr__(self, "deltas", (as_vec(d1, 4, "Delta1"), as_vec(d2, 4, "Delta2")))

    @property
    def gamma(self) -> np.ndarray:
        """Gravity direction, whichever representation carries it."""
        if self.a_r3 is not None:
            return self.a_r3
        if self.a_r4 is not None:
            return self.a_r4[:3]
        raise MissingField("state carries no gravity direction")

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                raise MissingField(f"state is missing field '{name}'")


def legendre(p: InertiaParams, xi: AlgebraVector) -> MomentumCovector:
    """Impulses Pi = J Omega + D v, P = D^T Omega + M v."""
    return MomentumCovector.from_array(p.metric @ xi.to_array())


def legendre_inverse(p: InertiaParams, m: MomentumCovector) -> AlgebraVector:
    out = p.metric_inv @ m.to_array()
    if not np.all(np.isfinite(out)):
        raise SingularInertia("inverse Legendre transform produced non-finite velocity")
    return AlgebraVector.from_array(out)


def kinetic_energy(p: InertiaParams, xi: AlgebraVector) -> float:
    x = xi.to_array()
    return 0.5 * float(x @ p.metric @ x)


def _momentum_core(p: InertiaParams, state: ReducedState):
    xi = state.xi
    mu = legendre(p, xi)
    pi_dot = cross(mu.pi, xi.omega) + cross(mu.p, xi.vel)
    p_dot = cross(mu.p, xi.omega)
    return xi, pi_dot, p_dot


def ep_rhs_uwv(p: InertiaParams, state: ReducedState) -> tuple[MomentumCovector, np.ndarray]:
    """Rates (dPi, dP), dGamma of the uncontrolled underwater vehicle."""
    state.require("a_r3")
    gamma = state.a_r3
    xi, pi_dot, p_dot = _momentum_core(p, state)
    pi_dot = pi_dot - p.mgl * cross(p.chi, gamma)
    return MomentumCovector(pi_dot, p_dot), advect_rate_r3(xi, gamma)


def ep_rhs_htmb(p: InertiaParams, state: ReducedState) -> tuple[MomentumCovector, np.ndarray]:
    """Rates (dPi, dP), d(Gamma, h) of the heavy top on a movable base."""
    state.require("a_r4")
    gamma = state.a_r4[:3]
    xi, pi_dot, p_dot = _momentum_core(p, state)
    pi_dot = pi_dot - p.mgl * cross(p.chi, gamma)
    p_dot = p_dot - p.m_total * p.g * gamma
    return MomentumCovector(pi_dot, p_dot), advect_rate_r4(xi, state.a_r4)


def advect_extras_rhs(state: ReducedState) -> dict[str, np.ndarray]:
    """Rates of the extra advected parameters that are present on ``state``.

    Keys are ``"theta"``, ``"delta1"`` and ``"delta2"``.
    """
    if state.theta is None and state.deltas is None:
        raise MissingField("state carries neither theta nor deltas")
    out = {}
    if state.theta is not None:
        out["theta"] = advect_rate_r3(state.xi, state.theta)
    if state.deltas is not None:
        out["delta1"] = advect_rate_r4(state.xi, state.deltas[0])
        out["delta2"] = advect_rate_r4(state.xi, state.deltas[1])
    return out


def potential(p: InertiaParams, state: ReducedState, which: PotentialId) -> float:
    which = PotentialId(which)
    if which is PotentialId.UWV:
        state.require("a_r3")
        return p.mgl * float(p.chi @ state.a_r3)
    state.require("a_r4")
    a = state.a_r4
    return p.mgl * float(p.chi @ a[:3]) + p.m_total * p.g * float(a[3])


def potential_gradient(p: InertiaParams, which: PotentialId) -> np.ndarray:
    """Gradient of the (linear) reduced potential: mgl chi, or (mgl chi, m_bar g)."""
    if PotentialId(which) is PotentialId.UWV:
        return p.mgl * p.chi
    return np.append(p.mgl * p.chi, p.m_total * p.g)


def energy(p: InertiaParams, state: ReducedState, which: PotentialId, shaped: float = 0.0) -> float:
    """Kinetic plus reduced potential energy, plus an optional shaped term."""
    return kinetic_energy(p, state.xi) + potential(p, state, which) + shaped


# ---------------------------------------------------------------------------
# flat state vectors (momenta are the integrated variables)


@dataclass(frozen=True)
class Layout:
    """Column layout of the flat vector (Pi, P, Gamma or (Gamma, h), [Theta], [Delta_1, Delta_2])."""

    gamma_dim: int = 3
    theta: bool = False
    deltas: bool = False

    def __post_init__(self):
        if self.gamma_dim not in (3, 4):
            raise ValueError("gamma_dim must be 3 or 4")

    @classmethod
    def of(cls, state: ReducedState) -> Layout:
        if state.a_r3 is not None and state.a_r4 is not None:
            raise ValueError("state carries both a_r3 and a_r4")
        if state.a_r3 is None and state.a_r4 is None:
            raise MissingField("state carries no advected gravity parameter")
        return cls(3 if state.a_r3 is not None else 4, state.theta is not None, state.deltas is not None)

    @property
    def dim(self) -> int:
        return 6 + self.gamma_dim + 3 * self.theta + 8 * self.deltas

    def slices(self) -> dict[str, slice]:
        out = {"pi": slice(0, 3), "p": slice(3, 6), "a": slice(6, 6 + self.gamma_dim)}
        k = 6 + self.gamma_dim
        if self.theta:
            out["theta"] = slice(k, k + 3)
            k += 3
        if self.deltas:
            out["delta1"] = slice(k, k + 4)
            out["delta2"] = slice(k + 4, k + 8)
        return out

    def names(self) -> list[str]:
        cols = ["Pi_x", "Pi_y", "Pi_z", "P_x", "P_y", "P_z", "Gamma_x", "Gamma_y", "Gamma_z"]
        if self.gamma_dim == 4:
            cols.append("h")
        if self.theta:
            cols += ["Theta_x", "Theta_y", "Theta_z"]
        if self.deltas:
            cols += ["Delta1_x", "Delta1_y", "Delta1_z", "delta_1"]
            cols += ["Delta2_x", "Delta2_y", "Delta2_z", "delta_2"]
        return cols

    def pack(self, p: InertiaParams, state: ReducedState) -> np.ndarray:
        if Layout.of(state) != self:
            raise MissingField(f"state fields do not match layout {self}")
        parts = [legendre(p, state.xi).to_array(), state.a_r3 if self.gamma_dim == 3 else state.a_r4]
        if self.theta:
            parts.append(state.theta)
        if self.deltas:
            parts.extend(state.deltas)
        return np.concatenate(parts)

    def unpack(self, p: InertiaParams, y: np.ndarray) -> ReducedState:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,):
            raise ValueError(f"expected vector of length {self.dim}, got {y.shape}")
        s = self.slices()
        xi = legendre_inverse(p, MomentumCovector(y[s["pi"]], y[s["p"]]))
        return ReducedState(
            xi,
            a_r3=y[s["a"]] if self.gamma_dim == 3 else None,
            a_r4=y[s["a"]] if self.gamma_dim == 4 else None,
            theta=y[s["theta"]] if self.theta else None,
            deltas=(y[s["delta1"]], y[s["delta2"]]) if self.deltas else None,
        )

    def assemble(self, mu_dot: MomentumCovector, a_dot, extras: dict | None = None) -> np.ndarray:
        out = np.empty(self.dim)
        s = self.slices()
        out[s["pi"]] = mu_dot.pi
        out[s["p"]] = mu_dot.p
        out[s["a"]] = a_dot
        for key in ("theta", "delta1", "delta2"):
            if key in s:
                out[s[key]] = extras[key]
        return out


def uncontrolled_rhs(p: InertiaParams, system: SystemId, layout: Layout):
    """Flat-vector right-hand side ``f(y)`` of the uncontrolled system."""
    system = SystemId(system)
    ep = ep_rhs_uwv if system is SystemId.UnderwaterVehicle else ep_rhs_htmb

    def rhs(y):
        state = layout.unpack(p, y)
        mu_dot, a_dot = ep(p, state)
        extras = advect_extras_rhs(state) if (layout.theta or layout.deltas) else None
        return layout.assemble(mu_dot, a_dot, extras)

    return rhs
