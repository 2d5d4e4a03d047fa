"""Hot inner loops: pair-contact scans and the batched Enskog forward flow.

Every kernel exists twice, as a plain numpy implementation and as a numba
``@njit`` loop.  The public names at the bottom of the module point at the
jitted versions unless numba is missing or ``HSH_NUMBA=0`` is set in the
environment.  Both paths are kept importable so tests and the benchmark can
compare them directly.
"""

import os
from functools import lru_cache

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and os.environ.get("HSH_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

# status codes of the batched forward Enskog flow
EBF_OK = 0
EBF_NO_PREIMAGE = 1
EBF_COINCIDENT = 2  # awaited pair already touching at the previous creation time
EBF_UNDEFINED = 3  # coincident creation where the created slot was itself a progenitor
EBF_SEPARATED = 4  # excluded by a minimum time separation between creations
EBF_BOUNDARY = 5  # grazing contact, contact at the horizon, or touching at time zero

# relative tolerances shared with the event-driven dynamics
TOUCH_RTOL = 1e-9
GRAZE_RTOL = 1e-10
TIME_RTOL = 1e-11


# ---------------------------------------------------------------------------
# next pair event
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _pairs(n):
    i, k = np.triu_indices(n, 1)
    return i, k


def next_pair_event_numpy(x, v, eps):
    """Earliest and second-earliest predicted contact among all pairs.

    Returns ``(t1, i1, k1, sqrt_disc1, t2, i2, k2, min_c, t_graze)`` where
    ``min_c`` is the smallest ``|x_i - x_k|**2 - eps**2`` (negative means
    overlap) and ``t_graze`` the earliest closest approach of a pair passing
    within grazing tolerance of tangency.  Missing events are reported as
    ``inf`` with indices ``-1``.
    """
    n = x.shape[0]
    if n < 2:
        return np.inf, -1, -1, 0.0, np.inf, -1, -1, np.inf, np.inf
    ii, kk = _pairs(n)
    dx = x[ii] - x[kk]
    dv = v[ii] - v[kk]
    c = np.einsum("ij,ij->i", dx, dx) - eps * eps
    bb = np.einsum("ij,ij->i", dx, dv)
    vv = np.einsum("ij,ij->i", dv, dv)
    disc = bb * bb - vv * c
    gtol = GRAZE_RTOL * eps * (1.0 + np.sqrt(vv))
    tang = (bb < 0.0) & (c > 0.0) & (np.abs(disc) <= gtol * gtol)
    t_graze = float(np.min(-bb[tang] / vv[tang])) if tang.any() else np.inf
    ok = (bb < 0.0) & (disc > 0.0)
    sd = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(ok, c / (sd - bb), np.inf)
    s = np.where(ok & (s < 0.0), 0.0, s)
    min_c = float(c.min())
    p1 = int(np.argmin(s))
    t1 = float(s[p1])
    if not np.isfinite(t1):
        return np.inf, -1, -1, 0.0, np.inf, -1, -1, min_c, t_graze
    s[p1] = np.inf
    p2 = int(np.argmin(s))
    t2 = float(s[p2])
    if np.isfinite(t2):
        i2, k2 = int(ii[p2]), int(kk[p2])
    else:
        i2, k2 = -1, -1
    return t1, int(ii[p1]), int(kk[p1]), float(sd[p1]), t2, i2, k2, min_c, t_graze


def _next_pair_event_loop(x, v, eps):
    n = x.shape[0]
    eps2 = eps * eps
    best = np.inf
    bi = -1
    bk = -1
    bsd = 0.0
    second = np.inf
    si = -1
    sk = -1
    min_c = np.inf
    t_graze = np.inf
    for i in range(n):
        for k in range(i + 1, n):
            d0 = x[i, 0] - x[k, 0]
            d1 = x[i, 1] - x[k, 1]
            d2 = x[i, 2] - x[k, 2]
            u0 = v[i, 0] - v[k, 0]
            u1 = v[i, 1] - v[k, 1]
            u2 = v[i, 2] - v[k, 2]
            c = d0 * d0 + d1 * d1 + d2 * d2 - eps2
            if c < min_c:
                min_c = c
            bb = d0 * u0 + d1 * u1 + d2 * u2
            if bb >= 0.0:
                continue
            vv = u0 * u0 + u1 * u1 + u2 * u2
            disc = bb * bb - vv * c
            gtol = GRAZE_RTOL * eps * (1.0 + np.sqrt(vv))
            if c > 0.0 and abs(disc) <= gtol * gtol and -bb / vv < t_graze:
                t_graze = -bb / vv
            if disc <= 0.0:
                continue
            sd = np.sqrt(disc)
            s = c / (sd - bb)
            if s < 0.0:
                s = 0.0
            if s < best:
                second = best
                si = bi
                sk = bk
                best = s
                bi = i
                bk = k
                bsd = sd
            elif s < second:
                second = s
                si = i
                sk = k
    return best, bi, bk, bsd, second, si, sk, min_c, t_graze


# ---------------------------------------------------------------------------
# batched forward Enskog flow (inverse of the Enskog backward flow)
# ---------------------------------------------------------------------------

def ebf_forward_numpy(pts, ks, signs, j, eps, t, eta):
    """Run the forward free flow with creations for a batch of time-zero states.

    ``pts`` has shape ``(P, j+n, 6)``.  ``ks`` holds zero-based progenitors
    ``k_1..k_n`` and ``signs`` the values +1/-1.  Creations are processed from
    the last one (slot ``j+n-1``) to the first.  Returns ``(endpoints,
    status, times, omegas, vcreated)`` with shapes ``(P, j, 6)``, ``(P,)``,
    ``(P, n)``, ``(P, n, 3)`` and ``(P, n, 3)``.
    """
    P, M, _ = pts.shape
    n = M - j
    x = pts[:, :, :3].copy()
    v = pts[:, :, 3:].copy()
    status = np.zeros(P, dtype=np.int64)
    times = np.zeros((P, n))
    omegas = np.zeros((P, n, 3))
    vcreated = np.zeros((P, n, 3))
    tcur = np.zeros(P)
    eps2 = eps * eps
    tol_c = TOUCH_RTOL * eps2
    tol_t = TIME_RTOL * (1.0 + t)
    for m in range(n, 0, -1):
        a = j + m - 1
        b = ks[m - 1]
        live = status == EBF_OK
        if not live.any():
            break
        dx = x[:, a] - x[:, b]
        dv = v[:, a] - v[:, b]
        c = np.einsum("ij,ij->i", dx, dx) - eps2
        bb = np.einsum("ij,ij->i", dx, dv)
        vv = np.einsum("ij,ij->i", dv, dv)
        speed = np.sqrt(vv)
        gtol = GRAZE_RTOL * eps * (1.0 + speed)
        touching = np.abs(c) <= tol_c
        # touching now
        sep_touch = live & touching & (bb > gtol)
        status[sep_touch] = EBF_NO_PREIMAGE
        enter_touch = live & touching & (bb <= gtol)
        if m == n:
            status[enter_touch] = EBF_BOUNDARY
        else:
            chain = ks[m] == a
            if chain:
                status[enter_touch] = EBF_UNDEFINED
            elif eta > 0.0:
                status[enter_touch] = EBF_SEPARATED
            else:
                status[enter_touch] = EBF_COINCIDENT
        status[live & (c < -tol_c)] = EBF_NO_PREIMAGE
        outside = live & (c > tol_c)
        status[outside & (bb >= 0.0)] = EBF_NO_PREIMAGE
        disc = bb * bb - vv * c
        cand = outside & (bb < 0.0)
        graze = cand & (np.sqrt(np.abs(disc)) <= gtol)
        status[graze] = EBF_BOUNDARY
        status[cand & ~graze & (disc <= 0.0)] = EBF_NO_PREIMAGE
        cand = cand & ~graze & (disc > 0.0)
        sd = np.sqrt(np.where(cand, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(cand, c / (sd - bb), 0.0)
        tnew = tcur + s
        status[cand & (np.abs(tnew - t) <= tol_t)] = EBF_BOUNDARY
        status[cand & (tnew > t + tol_t)] = EBF_NO_PREIMAGE
        if eta > 0.0 and m < n:
            status[cand & (s < eta) & (status == EBF_OK)] = EBF_SEPARATED
        go = status == EBF_OK
        s = np.where(go, s, 0.0)
        x = x + v * s[:, None, None]
        tcur = np.where(go, tnew, tcur)
        w = x[:, a] - x[:, b]
        nrm = np.sqrt(np.einsum("ij,ij->i", w, w))
        nrm = np.where(nrm > 0.0, nrm, 1.0)
        om = w / nrm[:, None]
        if signs[m - 1] > 0:
            q = np.einsum("ij,ij->i", om, v[:, a] - v[:, b])
            q = np.where(go, q, 0.0)
            v[:, a] = v[:, a] - om * q[:, None]
            v[:, b] = v[:, b] + om * q[:, None]
        times[:, m - 1] = tcur
        omegas[:, m - 1] = om
        vcreated[:, m - 1] = v[:, a]
    rest = np.where(status == EBF_OK, t - tcur, 0.0)
    xe = x[:, :j] + v[:, :j] * rest[:, None, None]
    ends = np.concatenate([xe, v[:, :j]], axis=2)
    return ends, status, times, omegas, vcreated


def _ebf_forward_loop(pts, ks, signs, j, eps, t, eta):
    P = pts.shape[0]
    M = pts.shape[1]
    n = M - j
    ends = np.zeros((P, j, 6))
    status = np.zeros(P, dtype=np.int64)
    times = np.zeros((P, n))
    omegas = np.zeros((P, n, 3))
    vcreated = np.zeros((P, n, 3))
    eps2 = eps * eps
    tol_c = TOUCH_RTOL * eps2
    tol_t = TIME_RTOL * (1.0 + t)
    x = np.empty((M, 3))
    v = np.empty((M, 3))
    for p in range(P):
        for q in range(M):
            for d in range(3):
                x[q, d] = pts[p, q, d]
                v[q, d] = pts[p, q, 3 + d]
        tcur = 0.0
        st = EBF_OK
        for m in range(n, 0, -1):
            a = j + m - 1
            b = ks[m - 1]
            d0 = x[a, 0] - x[b, 0]
            d1 = x[a, 1] - x[b, 1]
            d2 = x[a, 2] - x[b, 2]
            u0 = v[a, 0] - v[b, 0]
            u1 = v[a, 1] - v[b, 1]
            u2 = v[a, 2] - v[b, 2]
            c = d0 * d0 + d1 * d1 + d2 * d2 - eps2
            bb = d0 * u0 + d1 * u1 + d2 * u2
            vv = u0 * u0 + u1 * u1 + u2 * u2
            gtol = GRAZE_RTOL * eps * (1.0 + np.sqrt(vv))
            s = 0.0
            if abs(c) <= tol_c:
                if bb > gtol:
                    st = EBF_NO_PREIMAGE
                elif m == n:
                    st = EBF_BOUNDARY
                elif ks[m] == a:
                    st = EBF_UNDEFINED
                elif eta > 0.0:
                    st = EBF_SEPARATED
                else:
                    st = EBF_COINCIDENT
                break
            if c < 0.0 or bb >= 0.0:
                st = EBF_NO_PREIMAGE
                break
            disc = bb * bb - vv * c
            if np.sqrt(abs(disc)) <= gtol:
                st = EBF_BOUNDARY
                break
            if disc <= 0.0:
                st = EBF_NO_PREIMAGE
                break
            s = c / (np.sqrt(disc) - bb)
            tnew = tcur + s
            if abs(tnew - t) <= tol_t:
                st = EBF_BOUNDARY
                break
            if tnew > t + tol_t:
                st = EBF_NO_PREIMAGE
                break
            if eta > 0.0 and m < n and s < eta:
                st = EBF_SEPARATED
                break
            for q in range(M):
                for d in range(3):
                    x[q, d] += v[q, d] * s
            tcur = tnew
            w0 = x[a, 0] - x[b, 0]
            w1 = x[a, 1] - x[b, 1]
            w2 = x[a, 2] - x[b, 2]
            nrm = np.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
            w0 /= nrm
            w1 /= nrm
            w2 /= nrm
            if signs[m - 1] > 0:
                g = w0 * (v[a, 0] - v[b, 0]) + w1 * (v[a, 1] - v[b, 1]) + w2 * (v[a, 2] - v[b, 2])
                v[a, 0] -= w0 * g
                v[a, 1] -= w1 * g
                v[a, 2] -= w2 * g
                v[b, 0] += w0 * g
                v[b, 1] += w1 * g
                v[b, 2] += w2 * g
            times[p, m - 1] = tcur
            omegas[p, m - 1, 0] = w0
            omegas[p, m - 1, 1] = w1
            omegas[p, m - 1, 2] = w2
            for d in range(3):
                vcreated[p, m - 1, d] = v[a, d]
        status[p] = st
        if st == EBF_OK:
            rest = t - tcur
            for q in range(j):
                for d in range(3):
                    ends[p, q, d] = x[q, d] + v[q, d] * rest
                    ends[p, q, 3 + d] = v[q, d]
    return ends, status, times, omegas, vcreated


if HAVE_NUMBA:
    next_pair_event_numba = numba.njit(cache=True)(_next_pair_event_loop)
    ebf_forward_numba = numba.njit(cache=True)(_ebf_forward_loop)
else:  # pragma: no cover
    next_pair_event_numba = None
    ebf_forward_numba = None


if NUMBA_ENABLED:
    _next_impl = next_pair_event_numba
    _ebf_impl = ebf_forward_numba
else:
    _next_impl = next_pair_event_numpy
    _ebf_impl = ebf_forward_numpy


def next_pair_event(x, v, eps):
    return _next_impl(np.ascontiguousarray(x, dtype=np.float64), np.ascontiguousarray(v, dtype=np.float64), float(eps))


def ebf_forward(pts, ks, signs, j, eps, t, eta=0.0):
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    ks = np.ascontiguousarray(ks, dtype=np.int64)
    signs = np.ascontiguousarray(signs, dtype=np.int64)
    return _ebf_impl(pts, ks, signs, int(j), float(eps), float(t), float(eta))


def backend():
    return "numba" if NUMBA_ENABLED else "numpy"
