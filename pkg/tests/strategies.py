"""Hypothesis strategies for small hard-sphere systems."""

import numpy as np
from hypothesis import strategies as st

from hsh.core import Configuration

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


@st.composite
def unit_vectors(draw):
    v = draw(vec3)
    n = np.linalg.norm(v)
    if n < 1e-3:
        return np.array([1.0, 0.0, 0.0])
    return v / n


@st.composite
def lattice_configs(draw, n_min=2, n_max=4, eps=1.0, planar=False, converging=False):
    """Particles jittered around lattice sites 2.5 eps apart: never overlapping."""
    N = draw(st.integers(n_min, n_max))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    sites = np.array([[i % 2, (i // 2) % 2, i // 4] for i in range(N)], dtype=float) * 2.5 * eps
    x = sites + rng.uniform(-0.3, 0.3, (N, 3)) * eps
    v = rng.normal(0.0, 1.0, (N, 3))
    if converging:
        v = 0.8 * (x.mean(axis=0) - x) + 0.4 * v
    if planar:
        x[:, 2] = 0.0
        v[:, 2] = 0.0
    return Configuration(x, v, eps)
