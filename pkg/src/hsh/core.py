"""Geometric primitives, the elastic collision rule and phase-space checks.

Phase points of order ``j`` are flat arrays of length ``6*j`` laid out as
``(x_1, v_1, x_2, v_2, ...)``.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import GRAZE_RTOL, TOUCH_RTOL
from .errors import InvalidInputError, OverlapError

DIM = 3
UNIT_TOL = 1e-9


def _vec3(a, name):
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.shape != (DIM,):
        raise InvalidInputError(f"{name} must be a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite components")
    return a


@dataclass(frozen=True)
class ParticleState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))

    def as_phase(self):
        return np.concatenate([self.position, self.velocity])


@dataclass(frozen=True, eq=False)
class Configuration:
    """N hard spheres of diameter ``epsilon``.

    Positions and velocities are stored as read-only ``(N, 3)`` arrays.
    Unless ``allow_overlap`` is set, every pair must be at least one diameter
    apart (up to a relative slack of ``1e-9``, enough to absorb the rounding
    of a sphere created exactly at contact).
    """

    x: np.ndarray
    v: np.ndarray
    epsilon: float = 1.0
    allow_overlap: bool = False

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1, DIM)
        v = np.array(self.v, dtype=float).reshape(-1, DIM)
        if x.shape != v.shape:
            raise InvalidInputError("positions and velocities differ in shape")
        if x.shape[0] < 1:
            raise InvalidInputError("a configuration needs at least one particle")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise InvalidInputError("non-finite particle state")
        eps = float(self.epsilon)
        if not eps > 0:
            raise InvalidInputError("epsilon must be positive")
        x.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "epsilon", eps)
        if not self.allow_overlap and len(x) > 1:
            g = min_gap(self)
            if g < -TOUCH_RTOL * eps:
                raise OverlapError(f"spheres overlap (min gap {g:.3e})")

    @classmethod
    def from_particles(cls, particles, epsilon=1.0, allow_overlap=False):
        x = [p.position for p in particles]
        v = [p.velocity for p in particles]
        return cls(x, v, epsilon, allow_overlap)

    @classmethod
    def from_phase(cls, point, epsilon=1.0, allow_overlap=False):
        z = np.asarray(point, dtype=float).reshape(-1, 2 * DIM)
        return cls(z[:, :DIM], z[:, DIM:], epsilon, allow_overlap)

    @property
    def N(self):
        return self.x.shape[0]

    @property
    def particles(self):
        return [ParticleState(a, b) for a, b in zip(self.x, self.v)]

    def phase(self):
        return np.concatenate([self.x, self.v], axis=1).reshape(-1)

    def reversed(self):
        """Same positions, negated velocities."""
        return Configuration(self.x, -self.v, self.epsilon, self.allow_overlap)

    def subset(self, idx):
        idx = list(idx)
        return Configuration(self.x[idx], self.v[idx], self.epsilon, self.allow_overlap)

    def with_arrays(self, x, v):
        return Configuration(x, v, self.epsilon, self.allow_overlap)

    def momentum(self):
        return self.v.sum(axis=0)

    def energy(self):
        return 0.5 * float(np.sum(self.v * self.v))

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "particles": [{"x": list(map(float, a)), "v": list(map(float, b))} for a, b in zip(self.x, self.v)],
        }

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return (
            self.epsilon == other.epsilon
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.v, other.v)
        )

    def __repr__(self):
        return f"Configuration(N={self.N}, epsilon={self.epsilon})"


@dataclass(frozen=True)
class ContactGeometry:
    pair: tuple
    omega: np.ndarray = field(repr=False)
    approach_rate: float


def _check_unit(omega):
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1.0) > UNIT_TOL:
        raise InvalidInputError(f"omega is not a unit vector (|omega| = {np.linalg.norm(omega)!r})")
    return omega


def scatter(v_i, v_k, omega):
    """Elastic reflection of the pair ``(v_i, v_k)`` along ``omega``."""
    omega = _check_unit(omega)
    v_i = np.asarray(v_i, dtype=float)
    v_k = np.asarray(v_k, dtype=float)
    w = omega * np.dot(omega, v_i - v_k)
    return v_i - w, v_k + w


def collision_kernel(omega, V):
    """``omega . V``; its sign selects the positive or negative part."""
    return float(np.dot(omega, V))


def is_grazing(omega, V):
    V = np.asarray(V, dtype=float)
    return abs(np.dot(omega, V)) < GRAZE_RTOL * (1.0 + np.linalg.norm(V))


def contact_geometry(x_i, x_k, v_i, v_k, pair=(0, 1)):
    d = np.asarray(x_i, float) - np.asarray(x_k, float)
    omega = d / np.linalg.norm(d)
    return ContactGeometry(tuple(pair), omega, collision_kernel(omega, np.asarray(v_i) - np.asarray(v_k)))


def contact_time(a, b, epsilon, allow_overlap=False):
    """First time ``s >= 0`` at which two freely moving spheres touch while approaching.

    ``a`` and ``b`` are :class:`ParticleState` (or ``(x, v)`` pairs).  Returns
    ``None`` when the pair never meets.  The smaller root of
    ``|dx + dv s|^2 = eps^2`` is taken in the cancellation-free form
    ``c / (-b + sqrt(b^2 - |dv|^2 c))``.
    """
    xa, va = (a.position, a.velocity) if isinstance(a, ParticleState) else map(np.asarray, a)
    xb, vb = (b.position, b.velocity) if isinstance(b, ParticleState) else map(np.asarray, b)
    dx = np.asarray(xa, float) - np.asarray(xb, float)
    dv = np.asarray(va, float) - np.asarray(vb, float)
    eps2 = epsilon * epsilon
    c = float(dx @ dx) - eps2
    if c < -TOUCH_RTOL * eps2:
        if not allow_overlap:
            raise OverlapError("contact_time called on overlapping spheres")
        return None
    bb = float(dx @ dv)
    if bb >= 0.0:
        return None
    disc = bb * bb - float(dv @ dv) * c
    if disc <= 0.0:
        return None
    s = c / (np.sqrt(disc) - bb)
    return max(s, 0.0)


def min_gap(config):
    """Smallest ``|x_i - x_k| - eps`` over all pairs."""
    x = config.x
    if len(x) < 2:
        return np.inf
    i, k = np.triu_indices(len(x), 1)
    d = np.linalg.norm(x[i] - x[k], axis=1)
    return float(d.min() - config.epsilon)


def phase_to_arrays(point):
    z = np.asarray(point, dtype=float).reshape(-1, 2 * DIM)
    return z[:, :DIM].copy(), z[:, DIM:].copy()


def arrays_to_phase(x, v):
    return np.concatenate([np.asarray(x, float), np.asarray(v, float)], axis=1).reshape(-1)


def random_unit(rng, size=None):
    g = rng.standard_normal((1 if size is None else size, DIM))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g[0] if size is None else g
