"""Dirac combs, empirical marginals and bounded test observables.

Weights are kept as exact fractions and turned into floats only when a comb
is paired with an observable.
"""

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import Configuration
from .errors import InvalidInputError
from .trees import falling


@dataclass(frozen=True, eq=False)
class DiracComb:
    order: int
    points: np.ndarray
    weights: tuple

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 6 * self.order)
        w = tuple(Fraction(x) for x in self.weights)
        if len(w) != len(pts):
            raise InvalidInputError("one weight per atom required")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.weights)

    def total(self):
        return sum(self.weights, Fraction(0))

    def float_weights(self):
        return np.array([float(w) for w in self.weights])

    def integrate(self, phi):
        return integrate(self, phi)

    def cluster(self, tol=1e-8):
        """Merge atoms closer than ``tol`` (max-norm), summing weights; drop zero weights."""
        reps, acc = [], []
        for p, w in zip(self.points, self.weights):
            for idx, q in enumerate(reps):
                if np.max(np.abs(p - q)) <= tol:
                    acc[idx] += w
                    break
            else:
                reps.append(p)
                acc.append(w)
        keep = [i for i, w in enumerate(acc) if w != 0]
        return DiracComb(self.order, np.array([reps[i] for i in keep]).reshape(-1, 6 * self.order),
                         tuple(acc[i] for i in keep))

    def integrate_out_last(self):
        """Marginal of order ``order - 1``, merging exactly coincident atoms."""
        if self.order < 2:
            raise InvalidInputError("cannot reduce an order-1 comb")
        out = {}
        for p, w in zip(self.points[:, : 6 * (self.order - 1)], self.weights):
            key = tuple(p.tolist())
            out[key] = out.get(key, Fraction(0)) + w
        keys = sorted(out)
        return DiracComb(self.order - 1, np.array(keys), tuple(out[k] for k in keys))

    def canonical(self):
        """Atoms sorted lexicographically with exactly equal points merged."""
        out = {}
        for p, w in zip(self.points, self.weights):
            key = tuple(p.tolist())
            out[key] = out.get(key, Fraction(0)) + w
        keys = sorted(k for k in out if out[k] != 0)
        return DiracComb(self.order, np.array(keys).reshape(-1, 6 * self.order), tuple(out[k] for k in keys))

    def to_dict(self):
        return {
            "order": self.order,
            "atoms": [
                {"point": p.tolist(), "weight_num": w.numerator, "weight_den": w.denominator}
                for p, w in zip(self.points, self.weights)
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        atoms = d["atoms"]
        pts = [a["point"] for a in atoms]
        w = [Fraction(a["weight_num"], a["weight_den"]) for a in atoms]
        return cls(int(d["order"]), np.array(pts, dtype=float).reshape(-1, 6 * int(d["order"])), tuple(w))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _phase_rows(config):
    return np.concatenate([config.x, config.v], axis=1)


def empirical_measure(config):
    z = _phase_rows(config)
    return DiracComb(1, z, (Fraction(1, config.N),) * config.N)


def marginal(config, j):
    """Comb with one atom per ordered j-tuple of distinct particles."""
    N = config.N
    if not 1 <= j <= N:
        raise InvalidInputError(f"order j={j} outside 1..{N}")
    z = _phase_rows(config)
    idx = list(itertools.permutations(range(N), j))
    pts = z[np.array(idx)].reshape(len(idx), 6 * j)
    return DiracComb(j, pts, (Fraction(1, falling(N, j)),) * len(idx))


def tensor_power(comb, j):
    """``comb`` tensorized ``j`` times (order-1 combs only)."""
    if comb.order != 1:
        raise InvalidInputError("tensor powers are taken of order-1 combs")
    K = len(comb)
    idx = list(itertools.product(range(K), repeat=j))
    pts = comb.points[np.array(idx)].reshape(len(idx), 6 * j)
    w = tuple(math.prod((comb.weights[i] for i in tup), start=Fraction(1)) for tup in idx)
    return DiracComb(j, pts, w)


def integrate(comb, phi):
    if getattr(phi, "order", comb.order) not in (None, comb.order):
        raise InvalidInputError(f"observable of order {phi.order} paired with comb of order {comb.order}")
    if len(comb) == 0:
        return 0.0
    vals = np.asarray(phi(comb.points), dtype=float)
    return math.fsum(float(w) * float(f) for w, f in zip(comb.weights, vals))


def tensor_identity_residual(config, j, phi):
    """Gap between the marginal of order ``j`` and the rescaled tensor power of the empirical measure."""
    lhs = integrate(marginal(config, j), phi)
    N = config.N
    scale = Fraction(N**j, falling(N, j))
    rhs_comb = tensor_power(empirical_measure(config), j)
    rhs = math.fsum(float(scale * w) * float(f) for w, f in zip(rhs_comb.weights, phi(rhs_comb.points)))
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def _rows(z, order):
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = z.reshape(-1, order, 6)
    return z, single


def _finish(val, single):
    return float(val[0]) if single else val


@dataclass(frozen=True, eq=False)
class Observable:
    """Bounded continuous test function on order-``order`` phase space.

    Evaluation accepts a single flat point or a stack of them.
    """

    kind: str
    order: int
    params: dict = field(default_factory=dict)

    KINDS = ("gaussian-packet", "polynomial-cutoff", "coordinate-window", "constant")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidInputError(f"unknown observable kind {self.kind!r}")
        if self.order < 1:
            raise InvalidInputError("observable order must be positive")

    def __call__(self, z):
        z, single = _rows(z, self.order)
        p = self.params
        if self.kind == "constant":
            val = np.full(len(z), float(p.get("value", 1.0)))
        elif self.kind == "gaussian-packet":
            c = np.asarray(p["center"], dtype=float).reshape(self.order, 6)
            wx, wv = float(p.get("width_x", 0.1)), float(p.get("width_v", 0.1))
            d = z - c
            q = np.sum(d[..., :3] ** 2, axis=(1, 2)) / wx**2 + np.sum(d[..., 3:] ** 2, axis=(1, 2)) / wv**2
            val = float(p.get("amplitude", 1.0)) * np.exp(-0.5 * q)
        elif self.kind == "polynomial-cutoff":
            c = np.asarray(p["center"], dtype=float).reshape(self.order, 6)
            R = float(p["radius"])
            r2 = np.sum((z - c) ** 2, axis=(1, 2)) / R**2
            val = np.clip(1.0 - r2, 0.0, None) ** int(p.get("power", 2))
        else:
            slot, coord = int(p["slot"]), int(p["coord"])
            lo, hi, ramp = float(p["lo"]), float(p["hi"]), float(p.get("ramp", 0.1))
            u = z[:, slot, coord]
            val = np.clip(np.minimum(u - lo + ramp, hi + ramp - u) / ramp, 0.0, 1.0)
        return _finish(val, single)

    def to_dict(self):
        return {"kind": self.kind, "order": self.order, "params": _jsonable(self.params)}


@dataclass(frozen=True, eq=False)
class HoleMasked:
    """``phi`` times a continuous cutoff vanishing when two slots are within ``epsilon/2``.

    Distinct hard spheres are never that close, so the mask only removes
    contractions (repeated atoms) of tensor powers.
    """

    base: object
    epsilon: float

    @property
    def order(self):
        return self.base.order

    def __call__(self, z):
        zz, single = _rows(z, self.order)
        mask = np.ones(len(zz))
        h = 0.5 * self.epsilon
        for a, b in itertools.combinations(range(self.order), 2):
            d = np.linalg.norm(zz[:, a, :3] - zz[:, b, :3], axis=1)
            mask *= np.clip((d - h) / h, 0.0, 1.0)
        val = np.asarray(self.base(zz.reshape(len(zz), -1)), dtype=float) * mask
        return _finish(val, single)

    def to_dict(self):
        return {"kind": "hole-masked", "epsilon": self.epsilon, "base": self.base.to_dict()}


@dataclass(frozen=True, eq=False)
class Permuted:
    """``phi`` with its particle slots permuted: ``z -> phi(z[perm])``."""

    base: object
    perm: tuple

    @property
    def order(self):
        return self.base.order

    def __call__(self, z):
        zz, single = _rows(z, self.order)
        val = np.asarray(self.base(zz[:, list(self.perm)].reshape(len(zz), -1)), dtype=float)
        return _finish(val, single)

    def to_dict(self):
        return {"kind": "permuted", "perm": list(self.perm), "base": self.base.to_dict()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def observable_from_dict(d):
    kind = d["kind"]
    if kind == "hole-masked":
        return HoleMasked(observable_from_dict(d["base"]), float(d["epsilon"]))
    if kind == "permuted":
        return Permuted(observable_from_dict(d["base"]), tuple(d["perm"]))
    return Observable(kind, int(d["order"]), dict(d.get("params", {})))


def gaussian(center, width_x=0.1, width_v=0.1, amplitude=1.0):
    center = np.asarray(center, dtype=float).reshape(-1)
    if center.size % 6:
        raise InvalidInputError("center must have 6*j components")
    return Observable("gaussian-packet", center.size // 6,
                      {"center": center.tolist(), "width_x": width_x, "width_v": width_v, "amplitude": amplitude})


def constant(order, value=1.0):
    return Observable("constant", order, {"value": value})


def gaussian_family(centers, width_x=0.1, width_v=0.1):
    return [gaussian(c, width_x, width_v) for c in centers]


def config_from_comb(comb, epsilon):
    """Read the particle states of an order-1 comb with equal weights back as a configuration."""
    if comb.order != 1:
        raise InvalidInputError("need an order-1 comb")
    if len(set(comb.weights)) > 1:
        raise InvalidInputError("atoms carry unequal weights; not an empirical measure")
    return Configuration(comb.points[:, :3], comb.points[:, 3:], epsilon)
