"""Closed-form Lie-algebraic machinery for SE(3) = SO(3) x| R^3.

Vectors in R^3 and R^4 are plain ``numpy`` arrays of shape ``(3,)`` and
``(4,)``.  An R^4 element ``(w, s)`` stores the spatial part in ``[:3]`` and
the scalar part in ``[3]``.  Duals are identified with primal spaces through
the dot product; the distinct wrapper types below only exist so that an
angular velocity is never passed where an impulse is expected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from epshape.errors import InvalidRotation, NonFiniteState, NotSkew

SKEW_TOL = 1e-9
ROTATION_TOL = 1e-9
SMALL_ANGLE = 1e-8


def as_vec(a, n: int = 3, name: str = "vector") -> np.ndarray:
    """Return ``a`` as a read-only finite float array of length ``n``."""
    arr = np.array(a, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have {n} components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteState(f"{name} has non-finite components: {arr}")
    arr.setflags(write=False)
    return arr


def cross(a, b) -> np.ndarray:
    """Cross product over the last axis; cheaper than ``np.cross`` for tiny inputs."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def as_mat(m, name: str = "matrix") -> np.ndarray:
    arr = np.array(m, dtype=float)
    if arr.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteState(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AlgebraVector:
    """Element (Omega, v) of se(3): body angular and linear velocity."""

    omega: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", as_vec(self.omega, name="omega"))
        object.__setattr__(self, "vel", as_vec(self.vel, name="vel"))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.omega, self.vel])

    @classmethod
    def from_array(cls, a) -> AlgebraVector:
        a = np.asarray(a, dtype=float)
        return cls(a[:3], a[3:6])


@dataclass(frozen=True)
class MomentumCovector:
    """Element (Pi, P) of se(3)*: angular and linear impulse."""

    pi: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pi", as_vec(self.pi, name="pi"))
        object.__setattr__(self, "p", as_vec(self.p, name="p"))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.pi, self.p])

    @classmethod
    def from_array(cls, a) -> MomentumCovector:
        a = np.asarray(a, dtype=float)
        return cls(a[:3], a[3:6])

    def __add__(self, other: MomentumCovector) -> MomentumCovector:
        return MomentumCovector(self.pi + other.pi, self.p + other.p)

    def __neg__(self) -> MomentumCovector:
        return MomentumCovector(-self.pi, -self.p)


def pairing(m: MomentumCovector, x: AlgebraVector) -> float:
    """Dual pairing <(Pi, P), (Omega, v)> = Pi.Omega + P.v."""
    return float(m.pi @ x.omega + m.p @ x.vel)


def hat(a) -> np.ndarray:
    """Skew matrix with ``hat(a) @ b == cross(a, b)``."""
    a1, a2, a3 = as_vec(a)
    return np.array([[0.0, -a3, a2], [a3, 0.0, -a1], [-a2, a1, 0.0]])


def vee(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError("vee expects a 3x3 matrix")
    if np.max(np.abs(m + m.T)) > SKEW_TOL:
        raise NotSkew(f"matrix is not skew-symmetric (residual {np.max(np.abs(m + m.T)):.3g})")
    return as_vec([m[2, 1], m[0, 2], m[1, 0]])


def ad(x: AlgebraVector, y: AlgebraVector) -> AlgebraVector:
    """Commutator [(Omega, v), (eta, w)] = (Omega x eta, Omega x w - eta x v)."""
    return AlgebraVector(
        cross(x.omega, y.omega),
        cross(x.omega, y.vel) - cross(y.omega, x.vel),
    )


def coad(x: AlgebraVector, m: MomentumCovector) -> MomentumCovector:
    """Coadjoint operator ad*_(Omega, v)(mu, alpha) = (mu x Omega - v x alpha, alpha x Omega).

    Satisfies ``<coad(x, m), y> == <m, ad(x, y)>``.
    """
    return MomentumCovector(
        cross(m.pi, x.omega) - diamond(x.vel, m.p),
        cross(m.p, x.omega),
    )


def diamond(v, alpha) -> np.ndarray:
    """Momentum map J(v, alpha) = v x alpha of the rotation action on R^3."""
    return cross(v, alpha)


def momentum_K_r3(y, gamma) -> MomentumCovector:
    """Momentum map of the R^3 representation (R, x) . y = R y."""
    return MomentumCovector(cross(y, gamma), np.zeros(3))


def momentum_K_r4(y, a) -> MomentumCovector:
    """Momentum map of the homogeneous R^4 representation s . y = s y.

    For ``y = (y_, y4)`` and ``a = (Gamma, h)`` returns ``(y_ x Gamma, y4 Gamma)``.
    """
    y = as_vec(y, 4, "y")
    a = as_vec(a, 4, "a")
    return MomentumCovector(cross(y[:3], a[:3]), y[3] * a[:3])


def momentum_M_drift(y, z, d1, d2) -> MomentumCovector:
    """Momentum map of two copies of the R^4 representation."""
    return momentum_K_r4(y, d1) + momentum_K_r4(z, d2)


def advect_rate_r3(x: AlgebraVector, gamma) -> np.ndarray:
    """Advection rate Gamma x Omega of an R^3 parameter."""
    return cross(gamma, x.omega)


def advect_rate_r4(x: AlgebraVector, a) -> np.ndarray:
    """Advection rate (Gamma x Omega, Gamma . v) of an R^4 parameter."""
    a = np.asarray(a, dtype=float)
    out = np.empty(4)
    out[:3] = cross(a[:3], x.omega)
    out[3] = a[:3] @ x.vel
    return out


def infinitesimal_r3(x: AlgebraVector, y) -> np.ndarray:
    """Infinitesimal action Omega x y on the R^3 representation space."""
    return cross(x.omega, y)


def infinitesimal_r4(x: AlgebraVector, y) -> np.ndarray:
    """Infinitesimal action (Omega x y_ + y4 v, 0) on the R^4 representation space."""
    y = np.asarray(y, dtype=float)
    out = np.zeros(4)
    out[:3] = cross(x.omega, y[:3]) + y[3] * x.vel
    return out


# ---------------------------------------------------------------------------
# group level


def rotation_residual(r) -> float:
    r = np.asarray(r, dtype=float)
    return float(np.linalg.norm(r.T @ r - np.eye(3)))


def check_rotation(r, name: str = "rotation") -> np.ndarray:
    r = as_mat(r, name)
    if rotation_residual(r) > ROTATION_TOL or np.linalg.det(r) <= 0.0:
        raise InvalidRotation(
            f"{name} is not in SO(3) (|R^T R - I| = {rotation_residual(r):.3g}, det = {np.linalg.det(r):.6g})"
        )
    return r


@dataclass(frozen=True)
class SE3Element:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        object.__setattr__(self, "translation", as_vec(self.translation, name="translation"))

    @classmethod
    def identity(cls) -> SE3Element:
        return cls(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form [[R, x], [0, 1]]."""
        s = np.eye(4)
        s[:3, :3] = self.rotation
        s[:3, 3] = self.translation
        return s


def se3_compose(s1: SE3Element, s2: SE3Element) -> SE3Element:
    return SE3Element(s1.rotation @ s2.rotation, s1.rotation @ s2.translation + s1.translation)


def se3_inverse(s: SE3Element) -> SE3Element:
    rt = s.rotation.T
    return SE3Element(rt, -rt @ s.translation)


def sigma_star(s: SE3Element, a) -> np.ndarray:
    """Dual representation on (R^4)*: (s^T)^{-1} a."""
    a = as_vec(a, 4, "a")
    # (s^T)^{-1} = [[R, 0], [-x^T R, 1]]
    r, x = s.rotation, s.translation
    out = np.empty(4)
    out[:3] = r @ a[:3]
    out[3] = a[3] - x @ (r @ a[:3])
    return out


def exp_so3(omega) -> np.ndarray:
    """Rodrigues formula; second-order Taylor coefficients below ``SMALL_ANGLE``."""
    w = as_vec(omega, name="omega")
    theta = float(np.linalg.norm(w))
    k = hat(w)
    if theta < SMALL_ANGLE:
        a, b = 1.0 - theta**2 / 6.0, 0.5 - theta**2 / 24.0
    else:
        a, b = np.sin(theta) / theta, (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * k + b * (k @ k)


# ---------------------------------------------------------------------------
# generic semidirect-product descriptor


@dataclass(frozen=True)
class SemidirectDescriptor:
    """Function slots describing a semidirect product G x| V with representations.

    ``momentum_x`` / ``momentum_y`` are the momentum maps of the advected
    parameter representations (K and M), ``advect_x`` / ``advect_y`` their
    advection rates.  Only SE(3) instantiations are shipped.
    """

    dim_g: int
    dim_v: int
    dim_x: int
    dim_y: int
    ad: Callable
    coad: Callable
    momentum_x: Callable
    advect_x: Callable
    momentum_y: Callable | None = None
    advect_y: Callable | None = None

    def ep_momentum_rate(self, xi, mu, dl_da, a, dl_db=None, b=None) -> MomentumCovector:
        """Euler-Poincare rate ad*_xi mu + K(dl/da, a) [+ M(dl/db, b)]."""
        rate = self.coad(xi, mu) + self.momentum_x(dl_da, a)
        if dl_db is not None:
            if self.momentum_y is None:
                raise ValueError("descriptor has no Y representation")
            rate = rate + self.momentum_y(dl_db, b)
        return rate


def _drift_momentum(y_pair, b_pair):
    (y, z), (d1, d2) = y_pair, b_pair
    return momentum_M_drift(y, z, d1, d2)


def _drift_advect(x, b_pair):
    return tuple(advect_rate_r4(x, d) for d in b_pair)


SE3_R3 = SemidirectDescriptor(3, 3, 3, 0, ad, coad, momentum_K_r3, advect_rate_r3)
SE3_R4 = SemidirectDescriptor(3, 3, 4, 0, ad, coad, momentum_K_r4, advect_rate_r4)
SE3_R3_R3 = SemidirectDescriptor(
    3, 3, 3, 3, ad, coad, momentum_K_r3, advect_rate_r3, momentum_K_r3, advect_rate_r3
)
SE3_R3_R4R4 = SemidirectDescriptor(
    3, 3, 3, 8, ad, coad, momentum_K_r3, advect_rate_r3, _drift_momentum, _drift_advect
)
