"""Independent reference computations used as test oracles.

Nothing here calls the event-driven machinery of the package: contacts are
found by scanning a dense time grid and refined by bisection.
"""

import numpy as np


def _gaps(x, v, eps, s):
    # s: (K,) times -> (K, P) gaps over pairs
    i, k = np.triu_indices(len(x), 1)
    dx = (x[i] - x[k])[None] + s[:, None, None] * (v[i] - v[k])[None]
    return np.linalg.norm(dx, axis=2) - eps, i, k


def dense_contact(xa, va, xb, vb, eps, horizon, step):
    """First time the two spheres come within eps, or None."""
    x = np.array([xa, xb], float)
    v = np.array([va, vb], float)
    ev = dense_events(x, v, eps, horizon, step, max_events=1)
    return ev[0][0] if ev else None


def dense_events(x, v, eps, horizon, step, max_events=10, block=200_000):
    """Event list ``[(time, i, k), ...]`` from dense stepping plus bisection."""
    x = np.array(x, float)
    v = np.array(v, float)
    t_now = 0.0
    events = []
    last = None
    while t_now < horizon and len(events) < max_events:
        hit = None
        start = 0
        while hit is None and t_now + start * step < horizon:
            s = (start + np.arange(1, block + 1)) * step
            s = s[t_now + s <= horizon]
            if not len(s):
                break
            g, i, k = _gaps(x, v, eps, s)
            if last is not None:
                # the pair that just collided starts at contact and separates
                g[s < 10 * step, last] = np.inf
            bad = np.argwhere(g < 0)
            if len(bad):
                row = bad[:, 0].min()
                cols = bad[bad[:, 0] == row, 1]
                lo = s[row - 1] if row > 0 else start * step
                hit = (lo, s[row], cols)
            start += block
        if hit is None:
            break
        lo, hi, cols = hit
        p = cols[0]
        ii, kk = np.triu_indices(len(x), 1)
        a, b = ii[p], kk[p]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            d = np.linalg.norm(x[a] - x[b] + mid * (v[a] - v[b])) - eps
            lo, hi = (mid, hi) if d > 0 else (lo, mid)
        tc = 0.5 * (lo + hi)
        x = x + v * tc
        om = (x[a] - x[b]) / np.linalg.norm(x[a] - x[b])
        w = om * (om @ (v[a] - v[b]))
        v[a] -= w
        v[b] += w
        t_now += tc
        events.append((t_now, int(a), int(b)))
        last = p
    return events


def brute_integral(points, weights, fn):
    return sum(float(w) * float(fn(p)) for p, w in zip(points, weights))
