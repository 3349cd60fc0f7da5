"""Potential-shaping feedback laws and matching checks.

Three laws are provided:

* ``u_htmb_shaping``: a force on the heavy top's base cancelling gravity,
  which drops the height from the dynamics (matching to a smaller
  representation).
* ``u_uwv_steady``: vehicle torque stabilizing a desired steady motion,
  obtained from the shaped potential ``shaped_potential_steady``.
* ``u_uwv_drift``: torque plus force that additionally penalizes drift
  transverse to the desired direction (``shaped_potential_drift``).

Every law accepts ``flip``, a set of term names whose sign is reversed.  It
exists only to let tests and ``epshape verify`` prove that the matching
checks detect a wrong sign.
"""

from __future__ import annotations

import enum
import functools
import warnings
from dataclasses import dataclass, field

import numpy as np

from epshape import poisson
from epshape.algebra import (
    AlgebraVector,
    MomentumCovector,
    SE3_R3,
    SE3_R3_R3,
    SE3_R3_R4R4,
    as_vec,
    check_rotation,
    cross,
)
from epshape.errors import MissingField, ZeroDesiredVelocity
from epshape.systems import (
    InertiaParams,
    Layout,
    PotentialId,
    ReducedState,
    SystemId,
    advect_extras_rhs,
    ep_rhs_htmb,
    ep_rhs_uwv,
    kinetic_energy,
    legendre,
    potential,
    potential_gradient,
)

E3 = np.array([0.0, 0.0, 1.0])


class ControllerId(enum.Enum):
    NONE = "None"
    HTMB_SHAPING = "HtmbShaping"
    UWV_STEADY = "UwvSteady"
    UWV_DRIFT = "UwvDrift"


TERMS = {
    ControllerId.HTMB_SHAPING: ("base",),
    ControllerId.UWV_STEADY: ("gravity", "heading"),
    ControllerId.UWV_DRIFT: ("gravity", "heading", "drift"),
}


@dataclass(frozen=True)
class Gains:
    alpha: float = 0.0
    beta: float = 0.0
    k_matrix: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        k = np.array(self.k_matrix, dtype=float)
        if k.shape != (2, 2) or not np.all(np.isfinite(k)):
            raise ValueError("k_matrix must be a finite 2x2 matrix")
        if abs(k[0, 1] - k[1, 0]) > 1e-12 * max(1.0, np.max(np.abs(k))):
            raise ValueError("k_matrix must be symmetric")
        k.setflags(write=False)
        object.__setattr__(self, "k_matrix", k)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    def require_positive_k(self) -> None:
        k = self.k_matrix
        if not (k[0, 0] > 0 and np.linalg.det(k) > 0):
            raise ValueError("drift gain matrix must be positive definite")


@dataclass(frozen=True)
class DesiredMotion:
    """Desired orientation ``r_d`` and desired body velocity ``v_d``."""

    r_d: np.ndarray
    v_d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r_d", check_rotation(self.r_d, "r_d"))
        v = as_vec(self.v_d, name="v_d")
        if np.linalg.norm(v) == 0.0:
            raise ZeroDesiredVelocity("desired velocity must be nonzero")
        object.__setattr__(self, "v_d", v)

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.v_d))

    @property
    def gamma_e(self) -> np.ndarray:
        """Gravity direction at the desired attitude, -R_d^T e3."""
        return -self.r_d.T @ E3


@dataclass(frozen=True)
class ControlOutput:
    u_rot: np.ndarray
    u_lin: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u_rot", as_vec(self.u_rot, name="u_rot"))
        object.__setattr__(self, "u_lin", as_vec(self.u_lin, name="u_lin"))

    def as_covector(self) -> MomentumCovector:
        return MomentumCovector(self.u_rot, self.u_lin)


def frame_from_desired(d: DesiredMotion):
    """Right-handed spatial frame (w1, w2, w3) with w3 along R_d v_d, and Q = [w1 w2 w3]^T.

    w1 is Gram-Schmidt applied to the coordinate axis least aligned with w3.
    """
    if np.linalg.norm(d.v_d) == 0.0:
        raise ZeroDesiredVelocity("desired velocity must be nonzero")
    w3 = d.r_d @ d.v_d / d.speed
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(w3)))] = 1.0
    w1 = axis - (axis @ w3) * w3
    w1 /= np.linalg.norm(w1)
    w2 = cross(w3, w1)
    q = np.vstack([w1, w2, w3])
    return w1, w2, w3, q


def _sign(term: str, flip) -> float:
    return -1.0 if term in flip else 1.0


def _heading_vector(p: InertiaParams, g: Gains, d: DesiredMotion) -> np.ndarray:
    # ||v_d|| (M - alpha I) v_d
    return d.speed * ((p.m_block - g.alpha * np.eye(3)) @ d.v_d)


def _gravity_torque(p, g, d, gamma):
    return p.mgl * cross(p.chi + g.beta * d.gamma_e, gamma)


def u_htmb_shaping(p: InertiaParams, gamma, flip=frozenset()) -> ControlOutput:
    """Base force m_bar g Gamma; no torque on the top."""
    return ControlOutput(np.zeros(3), _sign("base", flip) * p.m_total * p.g * np.asarray(gamma, float))


def u_uwv_steady(p: InertiaParams, g: Gains, d: DesiredMotion, gamma, theta, flip=frozenset()) -> ControlOutput:
    u_rot = _sign("gravity", flip) * _gravity_torque(p, g, d, gamma) + _sign("heading", flip) * cross(
        theta, _heading_vector(p, g, d)
    )
    return ControlOutput(u_rot, np.zeros(3))


def u_uwv_drift(p: InertiaParams, g: Gains, d: DesiredMotion, gamma, d1, d2, flip=frozenset()) -> ControlOutput:
    d1 = np.asarray(d1, float)
    d2 = np.asarray(d2, float)
    theta = cross(d1[:3], d2[:3])
    u_rot = _sign("gravity", flip) * _gravity_torque(p, g, d, gamma) + _sign("heading", flip) * cross(
        theta, _heading_vector(p, g, d)
    )
    delta = np.array([d1[3], d2[3]])
    u_lin = -_sign("drift", flip) * (np.column_stack([d1[:3], d2[:3]]) @ (g.k_matrix @ delta))
    return ControlOutput(u_rot, u_lin)


def shaped_potential_steady(p: InertiaParams, g: Gains, d: DesiredMotion, gamma, theta) -> float:
    gamma = np.asarray(gamma, float)
    return float(-p.mgl * (p.chi + g.beta * d.gamma_e) @ gamma + _heading_vector(p, g, d) @ np.asarray(theta, float))


def shaped_gradient_steady(p: InertiaParams, g: Gains, d: DesiredMotion, gamma=None, theta=None):
    """(dU~/dGamma, dU~/dTheta); both are constant."""
    return -p.mgl * (p.chi + g.beta * d.gamma_e), _heading_vector(p, g, d)


def shaped_potential_drift(p: InertiaParams, g: Gains, d: DesiredMotion, gamma, d1, d2) -> float:
    gamma, d1, d2 = (np.asarray(x, float) for x in (gamma, d1, d2))
    delta = np.array([d1[3], d2[3]])
    c = (p.m_block - g.alpha * np.eye(3)) @ d.v_d
    return float(
        -p.mgl * (p.chi + g.beta * d.gamma_e) @ gamma
        + d.speed * d1[:3] @ cross(d2[:3], c)
        + 0.5 * delta @ g.k_matrix @ delta
    )


def shaped_gradient_drift(p: InertiaParams, g: Gains, d: DesiredMotion, gamma, d1, d2):
    """(dU~/dGamma, dU~/dDelta_1 in R^4, dU~/dDelta_2 in R^4)."""
    d1 = np.asarray(d1, float)
    d2 = np.asarray(d2, float)
    c = _heading_vector(p, g, d)
    kd = g.k_matrix @ np.array([d1[3], d2[3]])
    g1 = np.append(cross(d2[:3], c), kd[0])
    g2 = np.append(cross(c, d1[:3]), kd[1])
    return -p.mgl * (p.chi + g.beta * d.gamma_e), g1, g2


def stability_warnings(p: InertiaParams, g: Gains) -> list[str]:
    """Check alpha l I - M > 0 and l beta > 0 (sufficient for stability of the steady motion)."""
    out = []
    eig = np.linalg.eigvalsh(g.alpha * p.l * np.eye(3) - 0.5 * (p.m_block + p.m_block.T))
    if eig.min() <= 0.0:
        out.append(f"stability condition violated: alpha*l*I - M is not positive definite (min eig {eig.min():.4g})")
    if p.l * g.beta <= 0.0:
        out.append(f"stability condition violated: l*beta = {p.l * g.beta:.4g} is not positive")
    return out


# ---------------------------------------------------------------------------
# closed loop


@dataclass(frozen=True)
class ClosedLoop:
    """A system, an optional controller and its data, as a flat-vector ODE.

    The flat vector layout is :class:`Layout`; momenta (Pi, P) are the
    integrated variables.
    """

    params: InertiaParams
    system: SystemId = SystemId.UnderwaterVehicle
    controller: ControllerId = ControllerId.NONE
    gains: Gains = field(default_factory=Gains)
    desired: DesiredMotion | None = None
    flip: frozenset = frozenset()
    track_theta: bool = False

    def __post_init__(self):
        object.__setattr__(self, "system", SystemId(self.system))
        object.__setattr__(self, "controller", ControllerId(self.controller))
        object.__setattr__(self, "flip", frozenset(self.flip))
        c = self.controller
        if c is ControllerId.HTMB_SHAPING and self.system is not SystemId.HeavyTopMovableBase:
            raise ValueError("HtmbShaping applies to the heavy top on a movable base only")
        if c in (ControllerId.UWV_STEADY, ControllerId.UWV_DRIFT):
            if self.system is not SystemId.UnderwaterVehicle:
                raise ValueError(f"{c.value} applies to the underwater vehicle only")
            if self.desired is None:
                raise MissingField(f"{c.value} needs a desired motion")
        if c is ControllerId.UWV_DRIFT:
            self.gains.require_positive_k()
        unknown = self.flip - set(TERMS.get(c, ()))
        if unknown:
            raise ValueError(f"unknown control terms {sorted(unknown)} for {c.value}")

    @property
    def layout(self) -> Layout:
        gdim = 4 if self.system is SystemId.HeavyTopMovableBase else 3
        theta = self.controller is ControllerId.UWV_STEADY or self.track_theta
        return Layout(gdim, theta, self.controller is ControllerId.UWV_DRIFT)

    @property
    def potential_id(self) -> PotentialId:
        return PotentialId.HTMB if self.system is SystemId.HeavyTopMovableBase else PotentialId.UWV

    @property
    def bracket_id(self) -> str:
        """Phase space on which the closed loop is Lie-Poisson."""
        if self.system is SystemId.HeavyTopMovableBase:
            return "se3_r4"
        return {
            ControllerId.NONE: "se3_r3",
            ControllerId.UWV_STEADY: "se3_r3_r3",
            ControllerId.UWV_DRIFT: "drift",
        }[self.controller]

    # -- evaluation ------------------------------------------------------

    def control(self, state: ReducedState) -> ControlOutput:
        c, p = self.controller, self.params
        if c is ControllerId.NONE:
            return ControlOutput(np.zeros(3), np.zeros(3))
        if c is ControllerId.HTMB_SHAPING:
            state.require("a_r4")
            return u_htmb_shaping(p, state.a_r4[:3], self.flip)
        if c is ControllerId.UWV_STEADY:
            state.require("a_r3", "theta")
            return u_uwv_steady(p, self.gains, self.desired, state.a_r3, state.theta, self.flip)
        state.require("a_r3", "deltas")
        return u_uwv_drift(p, self.gains, self.desired, state.a_r3, *state.deltas, self.flip)

    def rates(self, state: ReducedState):
        """Closed-loop (momentum rate, gravity-parameter rate, extras rates)."""
        ep = ep_rhs_htmb if self.system is SystemId.HeavyTopMovableBase else ep_rhs_uwv
        mu_dot, a_dot = ep(self.params, state)
        mu_dot = mu_dot + self.control(state).as_covector()
        extras = advect_extras_rhs(state) if (state.theta is not None or state.deltas is not None) else {}
        return mu_dot, a_dot, extras

    def rhs_reference(self, y) -> np.ndarray:
        """Closed-loop vector field assembled from the structured pieces."""
        layout = self.layout
        return layout.assemble(*self.rates(layout.unpack(self.params, y)))

    def rhs(self, y) -> np.ndarray:
        """Same field as :meth:`rhs_reference`, on raw arrays (used by the integrator)."""
        return self._compiled(np.asarray(y, dtype=float))

    @functools.cached_property
    def _compiled(self):
        # Scalar arithmetic: at this size numpy call overhead dominates.
        p, layout, c = self.params, self.layout, self.controller
        s = layout.slices()
        minv = p.metric_inv
        htmb = self.system is SystemId.HeavyTopMovableBase
        n = layout.dim
        it = s["theta"].start if "theta" in s else None
        i1 = s["delta1"].start if "delta1" in s else None
        i2 = s["delta2"].start if "delta2" in s else None
        # total gravity torque is k_grav x Gamma once the control's gravity term is added
        k_grav = -p.mgl * p.chi
        heading = np.zeros(3)
        lin_force = -p.m_total * p.g if htmb else 0.0
        if c in (ControllerId.UWV_STEADY, ControllerId.UWV_DRIFT):
            g, d = self.gains, self.desired
            k_grav = k_grav + _sign("gravity", self.flip) * p.mgl * (p.chi + g.beta * d.gamma_e)
            heading = _sign("heading", self.flip) * _heading_vector(p, g, d)
        if c is ControllerId.HTMB_SHAPING:
            lin_force += _sign("base", self.flip) * p.m_total * p.g
        kx, ky, kz = k_grav.tolist()
        hx, hy, hz = heading.tolist()
        (k11, k12), (k21, k22) = (_sign("drift", self.flip) * self.gains.k_matrix).tolist()
        steady, drift = c is ControllerId.UWV_STEADY, c is ControllerId.UWV_DRIFT

        def rhs(y):
            z = y.tolist()
            ox, oy, oz, vx, vy, vz = (minv @ y[:6]).tolist()
            px, py, pz, qx, qy, qz, gx, gy, gz = z[:9]
            out = [0.0] * n
            # Pi x Omega + P x v + k_grav x Gamma
            tx = py * oz - pz * oy + qy * vz - qz * vy + ky * gz - kz * gy
            ty = pz * ox - px * oz + qz * vx - qx * vz + kz * gx - kx * gz
            tz = px * oy - py * ox + qx * vy - qy * vx + kx * gy - ky * gx
            fx = qy * oz - qz * oy + lin_force * gx
            fy = qz * ox - qx * oz + lin_force * gy
            fz = qx * oy - qy * ox + lin_force * gz
            if steady:
                ax, ay, az = z[it : it + 3]
            elif drift:
                d1, d2 = z[i1 : i1 + 4], z[i2 : i2 + 4]
                ax = d1[1] * d2[2] - d1[2] * d2[1]
                ay = d1[2] * d2[0] - d1[0] * d2[2]
                az = d1[0] * d2[1] - d1[1] * d2[0]
                e1 = k11 * d1[3] + k12 * d2[3]
                e2 = k21 * d1[3] + k22 * d2[3]
                fx -= e1 * d1[0] + e2 * d2[0]
                fy -= e1 * d1[1] + e2 * d2[1]
                fz -= e1 * d1[2] + e2 * d2[2]
            if steady or drift:
                tx += ay * hz - az * hy
                ty += az * hx - ax * hz
                tz += ax * hy - ay * hx
            out[0:9] = (
                tx, ty, tz, fx, fy, fz,
                gy * oz - gz * oy, gz * ox - gx * oz, gx * oy - gy * ox,
            )
            if htmb:
                out[9] = gx * vx + gy * vy + gz * vz
            if it is not None:
                ux, uy, uz = z[it : it + 3]
                out[it : it + 3] = (uy * oz - uz * oy, uz * ox - ux * oz, ux * oy - uy * ox)
            for i in (i1, i2) if i1 is not None else ():
                ux, uy, uz = z[i : i + 3]
                out[i : i + 4] = (
                    uy * oz - uz * oy, uz * ox - ux * oz, ux * oy - uy * ox,
                    ux * vx + uy * vy + uz * vz,
                )
            return np.array(out)

        return rhs

    def shaped_potential(self, state: ReducedState) -> float:
        c, p = self.controller, self.params
        if c is ControllerId.UWV_STEADY:
            return shaped_potential_steady(p, self.gains, self.desired, state.a_r3, state.theta)
        if c is ControllerId.UWV_DRIFT:
            return shaped_potential_drift(p, self.gains, self.desired, state.a_r3, *state.deltas)
        if c is ControllerId.HTMB_SHAPING:
            # U~(Gamma) = U(Gamma, 0): the height term is cancelled
            return -p.m_total * p.g * float(state.a_r4[3])
        return 0.0

    def energy(self, state: ReducedState) -> float:
        """Energy of the controlled Lagrangian: kinetic + U + U~."""
        return kinetic_energy(self.params, state.xi) + potential(self.params, state, self.potential_id) + self.shaped_potential(state)

    def energy_flat(self, y) -> float:
        return self.energy(self.layout.unpack(self.params, y))

    def energy_batch(self, ys) -> np.ndarray:
        """Closed-loop energy of each row of ``ys`` (vectorized :meth:`energy_flat`)."""
        p, c = self.params, self.controller
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        s = self.layout.slices()
        mu = ys[:, :6]
        out = 0.5 * np.einsum("ki,ij,kj->k", mu, p.metric_inv, mu)
        a = ys[:, s["a"]]
        grad = potential_gradient(p, self.potential_id)
        if c is ControllerId.HTMB_SHAPING:
            grad = np.append(grad[:3], 0.0)
        out += a @ grad
        if c in (ControllerId.UWV_STEADY, ControllerId.UWV_DRIFT):
            g, d = self.gains, self.desired
            out -= p.mgl * (a @ (p.chi + g.beta * d.gamma_e))
        if c is ControllerId.UWV_STEADY:
            out += ys[:, s["theta"]] @ _heading_vector(p, self.gains, self.desired)
        elif c is ControllerId.UWV_DRIFT:
            d1, d2 = ys[:, s["delta1"]], ys[:, s["delta2"]]
            heading = _heading_vector(p, self.gains, self.desired)
            out += np.einsum("ki,ki->k", d1[:, :3], cross(d2[:, :3], heading))
            delta = np.column_stack([d1[:, 3], d2[:, 3]])
            out += 0.5 * np.einsum("ki,ij,kj->k", delta, self.gains.k_matrix, delta)
        return out

    def hamiltonian_gradient(self, y) -> np.ndarray:
        """Flat gradient of the closed-loop Hamiltonian in the layout's coordinates."""
        p, layout = self.params, self.layout
        state = layout.unpack(p, y)
        s = layout.slices()
        grad = np.zeros(layout.dim)
        grad[s["pi"]] = state.xi.omega
        grad[s["p"]] = state.xi.vel
        grad[s["a"]] = potential_gradient(p, self.potential_id)
        c = self.controller
        if c is ControllerId.HTMB_SHAPING:
            grad[s["a"]][3] = 0.0
        elif c is ControllerId.UWV_STEADY:
            dg, dth = shaped_gradient_steady(p, self.gains, self.desired)
            grad[s["a"]] += dg
            grad[s["theta"]] = dth
        elif c is ControllerId.UWV_DRIFT:
            dg, g1, g2 = shaped_gradient_drift(p, self.gains, self.desired, state.a_r3, *state.deltas)
            grad[s["a"]] += dg
            grad[s["delta1"]] = g1
            grad[s["delta2"]] = g2
        return grad

    def casimirs(self, y) -> dict[str, float]:
        return {k: float(v) for k, v in self.casimirs_batch(np.asarray(y, dtype=float)).items()}

    def casimirs_batch(self, ys) -> dict[str, np.ndarray]:
        """Casimirs of the closed loop's bracket; works on one vector or rows of vectors."""
        ys = np.asarray(ys, dtype=float)
        bid = self.bracket_id
        if self.controller is ControllerId.HTMB_SHAPING:
            # h decouples, so (Pi, P, Gamma) carries the se3_r3 invariants too
            out = poisson.casimir_values(bid, ys)
            out.update(poisson.casimir_values("se3_r3", ys[..., :9]))
            return out
        if self.track_theta and bid in ("se3_r3", "drift"):
            ys = np.delete(ys, self.layout.slices()["theta"], axis=-1)
        return poisson.casimir_values(bid, ys)

    # -- equilibria ------------------------------------------------------

    def equilibrium_state(self) -> ReducedState:
        """The desired steady motion zeta_e built from the desired motion."""
        if self.system is not SystemId.UnderwaterVehicle or self.desired is None:
            raise MissingField("an equilibrium is defined only for the vehicle with a desired motion")
        d = self.desired
        xi = AlgebraVector(np.zeros(3), d.v_d)
        theta = d.v_d / d.speed if self.layout.theta else None
        deltas = None
        if self.layout.deltas:
            w1, w2, _, _ = frame_from_desired(d)
            deltas = (np.append(d.r_d.T @ w1, 0.0), np.append(d.r_d.T @ w2, 0.0))
        return ReducedState(xi, a_r3=d.gamma_e, theta=theta, deltas=deltas)

    def equilibrium(self) -> np.ndarray:
        return self.layout.pack(self.params, self.equilibrium_state())


# ---------------------------------------------------------------------------
# matching checks


def _sup(*pairs) -> float:
    return max(float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) for a, b in pairs)


def matching_residual_theorem2(loop: ClosedLoop, state: ReducedState) -> float:
    """Sup-norm gap between the controlled rates and the EP rates of l~ = l - U~.

    The right-hand route evaluates ad*_xi mu + K(dl~/da, a) + M(dl~/db, b)
    through the generic descriptor, independently of the concrete laws.
    """
    c, p = loop.controller, loop.params
    if c not in (ControllerId.UWV_STEADY, ControllerId.UWV_DRIFT):
        raise ValueError("matching with additional variables applies to the steady-motion and drift controllers")
    mu_dot, a_dot, extras = loop.rates(state)

    xi, mu, gamma = state.xi, legendre(p, state.xi), state.a_r3
    dU = potential_gradient(p, PotentialId.UWV)
    if c is ControllerId.UWV_STEADY:
        dg, dth = shaped_gradient_steady(p, loop.gains, loop.desired)
        desc = SE3_R3_R3
        rate = desc.ep_momentum_rate(xi, mu, -(dU + dg), gamma, -dth, state.theta)
        b_rates = [(extras["theta"], desc.advect_y(xi, state.theta))]
    else:
        dg, g1, g2 = shaped_gradient_drift(p, loop.gains, loop.desired, gamma, *state.deltas)
        desc = SE3_R3_R4R4
        rate = desc.ep_momentum_rate(xi, mu, -(dU + dg), gamma, (-g1, -g2), state.deltas)
        r1, r2 = desc.advect_y(xi, state.deltas)
        b_rates = [(extras["delta1"], r1), (extras["delta2"], r2)]
    return _sup(
        (mu_dot.pi, rate.pi),
        (mu_dot.p, rate.p),
        (a_dot, desc.advect_x(xi, gamma)),
        *b_rates,
    )


def matching_residual_theorem1(state: ReducedState, p: InertiaParams, flip=frozenset()) -> float:
    """Gap between the shaped heavy top on (Pi, P, Gamma) and EP with U~(Gamma) = mgl chi.Gamma."""
    state.require("a_r4")
    loop = ClosedLoop(p, SystemId.HeavyTopMovableBase, ControllerId.HTMB_SHAPING, flip=flip)
    mu_dot, a_dot, _ = loop.rates(state)
    gamma = state.a_r4[:3]
    xi, mu = state.xi, legendre(p, state.xi)
    rate = SE3_R3.ep_momentum_rate(xi, mu, -p.mgl * p.chi, gamma)
    return _sup((mu_dot.pi, rate.pi), (mu_dot.p, rate.p), (a_dot[:3], SE3_R3.advect_x(xi, gamma)))


def warn_if_unstable_gains(p: InertiaParams, g: Gains) -> list[str]:
    msgs = stability_warnings(p, g)
    for m in msgs:
        warnings.warn(m, stacklevel=2)
    return msgs
