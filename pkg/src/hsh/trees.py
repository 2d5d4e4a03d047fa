"""Collision trees, sign vectors and node variables.

A tree of type ``(j, n)`` is the list of progenitors ``k_1..k_n`` with
``1 <= k_r <= j + r - 1``: at the r-th creation particle ``j + r`` is attached
to particle ``k_r``.  Labels are one-based throughout this module, matching
the tree literal ``"j=2;k=1,2,1,3,2;s=++-+-"``.
"""

import itertools
import math
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True, order=True)
class Tree:
    j: int
    progenitors: tuple = ()

    def __post_init__(self):
        ks = tuple(int(k) for k in self.progenitors)
        object.__setattr__(self, "progenitors", ks)
        if self.j < 1:
            raise InvalidInputError("a tree needs at least one root")
        for r, k in enumerate(ks, start=1):
            if not 1 <= k <= self.j + r - 1:
                raise InvalidInputError(f"progenitor k_{r}={k} outside 1..{self.j + r - 1}")

    @property
    def n(self):
        return len(self.progenitors)

    def zero_based(self):
        return np.array([k - 1 for k in self.progenitors], dtype=np.int64)

    def literal(self, signs=None):
        out = f"j={self.j};k={','.join(map(str, self.progenitors))}"
        if signs is not None:
            out += f";s={SignVector.coerce(signs).literal()}"
        return out

    def __str__(self):
        return self.literal()


@dataclass(frozen=True, order=True)
class SignVector:
    signs: tuple = ()

    def __post_init__(self):
        s = tuple(int(x) for x in self.signs)
        if any(x not in (1, -1) for x in s):
            raise InvalidInputError(f"signs must be +1 or -1, got {s}")
        object.__setattr__(self, "signs", s)

    @classmethod
    def coerce(cls, value):
        if isinstance(value, SignVector):
            return value
        if isinstance(value, str):
            return cls.parse(value)
        return cls(tuple(value))

    @classmethod
    def parse(cls, text):
        table = {"+": 1, "-": -1, "−": -1}
        try:
            return cls(tuple(table[c] for c in text.strip()))
        except KeyError as exc:
            raise InvalidInputError(f"bad sign character in {text!r}") from exc

    @property
    def n(self):
        return len(self.signs)

    def product(self):
        return math.prod(self.signs)

    def literal(self):
        return "".join("+" if s > 0 else "-" for s in self.signs)

    def __str__(self):
        return self.literal()

    def __len__(self):
        return len(self.signs)

    def __iter__(self):
        return iter(self.signs)


@dataclass(frozen=True)
class NodeVariables:
    """Creation times (decreasing), unit impact vectors and created velocities."""

    times: np.ndarray
    omegas: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        om = np.asarray(self.omegas, dtype=float).reshape(-1, 3)
        vel = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
        if not (len(t) == len(om) == len(vel)):
            raise InvalidInputError("node arrays differ in length")
        if np.any(np.diff(t) >= 0):
            raise InvalidInputError("creation times must be strictly decreasing")
        if len(om) and np.max(np.abs(np.linalg.norm(om, axis=1) - 1.0)) > 1e-9:
            raise InvalidInputError("impact vectors must be unit vectors")
        for a in (t, om, vel):
            a.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "velocities", vel)

    @property
    def n(self):
        return len(self.times)

    def check_window(self, t):
        if self.n and not (0.0 < self.times[-1] and self.times[0] < t):
            raise InvalidInputError(f"creation times must lie in (0, {t})")


def enumerate_trees(j, n):
    """All trees of type ``(j, n)`` in lexicographic order."""
    if j < 1 or n < 0:
        raise InvalidInputError("need j >= 1 and n >= 0")
    ranges = [range(1, j + r) for r in range(1, n + 1)]
    return [Tree(j, ks) for ks in itertools.product(*ranges)]


def tree_count(j, n):
    return math.prod(range(j, j + n))


def falling(r, n):
    """``r (r-1) ... (r-n+1)``; zero once the product passes through zero."""
    return math.prod(range(r - n + 1, r + 1)) if n <= r else 0


def alpha(r, n, epsilon):
    return falling(r, n) * epsilon ** (2 * n)


def marginal_weight(N, j):
    """Exact weight ``1/(N (N-1) ... (N-j+1))`` of one ordered injection."""
    return Fraction(1, falling(N, j))


def enumerate_signs(n):
    return [SignVector(s) for s in itertools.product((1, -1), repeat=n)]


_LITERAL = re.compile(r"^\s*j\s*=\s*(\d+)\s*;\s*k\s*=\s*([\d,\s]*?)\s*(?:;\s*s\s*=\s*([+\-−]*)\s*)?$")


def parse_tree_literal(text):
    """``"j=2;k=1,2,1,3,2;s=++-+-"`` -> ``(Tree, SignVector or None)``."""
    m = _LITERAL.match(text)
    if not m:
        raise InvalidInputError(f"malformed tree literal {text!r}")
    ks = tuple(int(a) for a in m.group(2).split(",") if a.strip())
    tree = Tree(int(m.group(1)), ks)
    signs = None
    if m.group(3) is not None:
        signs = SignVector.parse(m.group(3))
        if signs.n != tree.n:
            raise InvalidInputError("sign vector length differs from node count")
    return tree, signs


def format_tree_literal(tree, signs=None):
    return tree.literal(signs)
