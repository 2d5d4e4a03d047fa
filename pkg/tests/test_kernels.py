import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsh import _kernels as K

needs_numba = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


def same(a, b):
    for p, q in zip(a, b):
        p, q = np.asarray(p, float), np.asarray(q, float)
        assert p.shape == q.shape
        fin = np.isfinite(p)
        assert np.array_equal(fin, np.isfinite(q))
        assert np.allclose(p[fin], q[fin], rtol=1e-12, atol=1e-12)


@needs_numba
@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1), st.integers(1, 7))
def test_pair_scan_backends_agree(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 3 * n, (n, 3))
    v = rng.normal(size=(n, 3))
    a = K.next_pair_event_numpy(x, v, 0.7)
    b = K.next_pair_event_numba(x, v, 0.7)
    assert (a[1], a[2], a[5], a[6]) == (b[1], b[2], b[5], b[6])
    same(a, b)


@needs_numba
@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(1, (0,)), (1, (0, 0)), (1, (0, 1)), (2, (1, 0, 2))]))
def test_ebf_backends_agree(seed, tree):
    j, ks = tree
    n = len(ks)
    rng = np.random.default_rng(seed)
    pts = rng.normal(0, 1.0, (64, j + n, 6))
    pts[:, :, :3] *= 3.0
    ks = np.array(ks, dtype=np.int64)
    signs = rng.choice([-1, 1], n).astype(np.int64)
    a = K.ebf_forward_numpy(pts, ks, signs, j, 0.5, 1.0, 0.0)
    b = K.ebf_forward_numba(pts, ks, signs, j, 0.5, 1.0, 0.0)
    assert np.array_equal(a[1], b[1])
    ok = a[1] == K.EBF_OK
    assert np.allclose(a[0][ok], b[0][ok], rtol=1e-12, atol=1e-12)
    assert np.allclose(a[2][ok], b[2][ok], rtol=1e-12, atol=1e-12)


def test_head_on_pair_scan():
    x = np.array([[0.0, 0, 0], [3, 0, 0]])
    v = np.array([[1.0, 0, 0], [-1, 0, 0]])
    t1, i, k = K.next_pair_event(x, v, 1.0)[:3]
    assert (t1, i, k) == (1.0, 0, 1)


def test_single_particle_has_no_event():
    t1, i, k = K.next_pair_event(np.zeros((1, 3)), np.ones((1, 3)), 1.0)[:3]
    assert t1 == np.inf and (i, k) == (-1, -1)


@pytest.mark.parametrize("flag,expect", [("0", "numpy"), ("off", "numpy"), ("1", "numba" if K.HAVE_NUMBA else "numpy")])
def test_env_switch(flag, expect):
    env = dict(os.environ, HSH_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "from hsh._kernels import backend; print(backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expect
