"""Backward flows with particle creations and the branching forward flow.

Conventions: a tree of type ``(j, n)`` acts on ``j + n`` particles stored in
slots ``0..j+n-1``; the r-th creation (time ``t_r``, ``t_1 > ... > t_n``)
places slot ``j + r - 1`` at distance ``eps`` from slot ``k_r - 1`` along
``omega_r``.  The kernel factor of the creation is
``B_r = omega_r . (v_created - v_progenitor)`` evaluated just above ``t_r``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import DIM
from .dynamics import PathologyReport, collide, predict, run_flow
from .errors import (
    DegenerateSampleError,
    InvalidInputError,
    NoPreimageError,
    PathologyError,
    RunawayError,
)
from .trees import NodeVariables, SignVector

MAX_BRANCHES = 100_000


@dataclass
class BackwardFlowResult:
    """Outcome of a backward flow with creations.

    ``segments[r]`` is ``(t_hi, t_lo, x, v)``: the ``j + r`` particle state at
    the upper end ``t_hi`` of the r-th free/interacting stretch.  ``terminal``
    is the flat phase point at time zero, or ``None`` when a creation
    violated the exclusion constraint (the flow stops there).
    """

    segments: list
    terminal: np.ndarray
    constraint_satisfied: bool
    kernel_factors: list
    recollisions: list = field(default_factory=list)
    sign_consistent: bool = True

    @property
    def valid(self):
        return self.constraint_satisfied and self.sign_consistent and self.terminal is not None


def _prepare(tree, signs, roots, nodes, t):
    signs = SignVector.coerce(signs)
    if signs.n != tree.n or nodes.n != tree.n:
        raise InvalidInputError("tree, signs and nodes must share n")
    nodes.check_window(t)
    roots = np.asarray(roots, dtype=float).reshape(tree.j, 6)
    return signs, roots[:, :3].copy(), roots[:, 3:].copy()


def _backward_segment(x, v, eps, t_hi, dt, interacting, recollisions):
    if not interacting:
        return x - v * dt, v
    xb, vb, events, _, _ = run_flow(x, -v, eps, dt, strict=True, keep_snapshots=False)
    for e in events:
        recollisions.append({"time": t_hi - e.time, "pair": e.pair})
    return xb, -vb


def _backward(tree, signs, roots, nodes, t, eps, interacting):
    signs, x, v = _prepare(tree, signs, roots, nodes, t)
    segments, factors, recoll = [], [], []
    constraint, consistent = True, True
    t_hi = float(t)
    for r in range(tree.n + 1):
        t_lo = float(nodes.times[r]) if r < tree.n else 0.0
        segments.append((t_hi, t_lo, x.copy(), v.copy()))
        x, v = _backward_segment(x, v, eps, t_hi, t_hi - t_lo, interacting, recoll)
        t_hi = t_lo
        if r == tree.n:
            break
        k = tree.progenitors[r] - 1
        om = nodes.omegas[r]
        pos = x[k] + eps * om
        vel = nodes.velocities[r].copy()
        if interacting:
            others = np.delete(x, k, axis=0)
            if len(others) and np.min(np.linalg.norm(others - pos, axis=1)) <= eps:
                constraint = False
                return BackwardFlowResult(segments, None, False, factors, recoll, consistent)
        B = float(om @ (vel - v[k]))
        factors.append(B)
        if np.sign(B) != signs.signs[r]:
            consistent = False
        x = np.vstack([x, pos])
        v = np.vstack([v, vel])
        if B >= 0.0:
            w = om * B
            v[-1] -= w
            v[k] += w
    terminal = np.concatenate([x, v], axis=1).reshape(-1)
    return BackwardFlowResult(segments, terminal, constraint, factors, recoll, consistent)


def ibf(tree, signs, roots, nodes, t, epsilon):
    """Interacting backward flow from time ``t`` down to zero.

    Between creations the particles follow hard-sphere dynamics run backward.
    A creation whose sphere overlaps a particle other than its progenitor
    stops the flow with ``constraint_satisfied=False``.
    """
    return _backward(tree, signs, roots, nodes, t, epsilon, interacting=True)


def ebf(tree, signs, roots, nodes, t, epsilon):
    """Enskog backward flow: free transport between creations, overlaps allowed."""
    return _backward(tree, signs, roots, nodes, t, epsilon, interacting=False)


def ebf_invert(tree, signs, terminal, t, epsilon):
    """Unique preimage ``(nodes, roots)`` of a time-zero state under the Enskog backward flow."""
    signs = SignVector.coerce(signs)
    pts = np.asarray(terminal, dtype=float).reshape(1, tree.j + tree.n, 6)
    ends, status, times, omegas, vcre = _kernels.ebf_forward(pts, tree.zero_based(), signs.signs, tree.j, epsilon, t)
    if status[0] != _kernels.EBF_OK:
        raise NoPreimageError(f"terminal state has no preimage (status {int(status[0])})")
    return NodeVariables(times[0], omegas[0], vcre[0]), ends[0].reshape(-1)


# ---------------------------------------------------------------------------
# interacting forward flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BranchOutcome:
    endpoint: np.ndarray
    choice_path: tuple
    creation_times: tuple
    sign_consistent: bool = True

    def path_string(self):
        return ",".join(self.choice_path)

    def to_dict(self, tree=None, signs=None):
        out = {
            "choice_path": self.path_string(),
            "creation_times": list(self.creation_times),
            "endpoint": self.endpoint.tolist(),
        }
        if tree is not None:
            out["tree"] = tree.literal(signs)
        return out


def iff_branches(tree, signs, start, t, epsilon, max_branches=MAX_BRANCHES, pruned=None):
    """All decision paths of the interacting forward flow from a time-zero state.

    Depth first, creation before recollision.  Returns a list of
    :class:`BranchOutcome`; an empty list means the state is outside the
    image set of ``(tree, signs)``.  Paths dropped because the awaited
    contact never happens before ``t`` are appended to ``pruned`` (a list)
    when one is given.
    """
    signs = SignVector.coerce(signs)
    j, n = tree.j, tree.n
    z = np.asarray(start, dtype=float).reshape(j + n, 6)
    ks = [k - 1 for k in tree.progenitors]
    out = []
    report = PathologyReport()
    # stack entries: x, v, alive slot labels, awaited m, t_now, path, creation times
    stack = [(z[:, :3].copy(), z[:, 3:].copy(), list(range(j + n)), n, 0.0, (), (None,) * n)]
    while stack:
        x, v, alive, m, t_now, path, ctimes = stack.pop()
        while True:
            nxt = predict(x, v, epsilon, t_now, t, report, alive, strict=True)
            if nxt is None:
                if m == 0:
                    x = x + v * (t - t_now)
                    end = np.concatenate([x[:j], v[:j]], axis=1).reshape(-1)
                    out.append(BranchOutcome(end, path, ctimes))
                    if len(out) > max_branches:
                        raise RunawayError("branch count exceeded")
                elif pruned is not None:
                    pruned.append({"path": ",".join(path), "awaiting": [j + m, ks[m - 1] + 1],
                                   "reason": "awaited contact absent before t"})
                break
            dt, a, b = nxt
            x = x + v * dt
            t_now += dt
            pair = {alive[a], alive[b]}
            if m > 0 and pair == {j + m - 1, ks[m - 1]}:
                ia = alive.index(j + m - 1)
                ib = alive.index(ks[m - 1])
                # recollision branch, resumed later
                xr, vr = x.copy(), v.copy()
                collide(xr, vr, ia, ib)
                stack.append((xr, vr, list(alive), m, t_now, path + ("R",), ctimes))
                # creation branch, continued now
                v = v.copy()
                sgn = signs.signs[m - 1]
                if sgn > 0:
                    collide(x, v, ia, ib)
                x = np.delete(x, ia, axis=0)
                v = np.delete(v, ia, axis=0)
                alive = alive[:ia] + alive[ia + 1:]
                ctimes = ctimes[: m - 1] + (t_now,) + ctimes[m:]
                path = path + ("C+" if sgn > 0 else "C-",)
                m -= 1
            else:
                v = v.copy()
                collide(x, v, a, b)
        if len(stack) > max_branches:
            raise RunawayError("branch stack exceeded")
    return out


# ---------------------------------------------------------------------------
# Jacobian of the interacting backward flow map
# ---------------------------------------------------------------------------

def tangent_frame(omega):
    """Two unit vectors completing ``omega`` to an orthonormal frame."""
    omega = np.asarray(omega, dtype=float)
    e = np.zeros(DIM)
    e[int(np.argmin(np.abs(omega)))] = 1.0
    e1 = e - omega * (omega @ e)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(omega, e1)
    return e1, e2


def _ibf_signature(res):
    return tuple(tuple(sorted(r["pair"])) for r in res.recollisions), res.constraint_satisfied, res.sign_consistent


def ibf_jacobian(tree, signs, roots, nodes, t, epsilon, fd_step=1e-6):
    """Central-difference Jacobian determinant of ``(roots, t_r, omega_r, v_r) -> zeta(0)``.

    Impact vectors are charted as ``normalize(omega + a e1 + b e2)``, whose
    surface element equals one at ``a = b = 0``.  Returns
    ``(|det|, eps^{2n} prod |B|)``.
    """
    signs = SignVector.coerce(signs)
    roots = np.asarray(roots, dtype=float).reshape(-1)
    j, n = tree.j, tree.n
    frames = [tangent_frame(om) for om in nodes.omegas]
    base_params = np.concatenate([roots, nodes.times, np.zeros(2 * n), nodes.velocities.reshape(-1)])

    def unpack(p):
        r = p[: 6 * j]
        ts = p[6 * j: 6 * j + n]
        ab = p[6 * j + n: 6 * j + 3 * n].reshape(n, 2)
        vel = p[6 * j + 3 * n:].reshape(n, 3)
        oms = []
        for (e1, e2), om, (a, b) in zip(frames, nodes.omegas, ab):
            u = om + a * e1 + b * e2
            oms.append(u / np.linalg.norm(u))
        return r, NodeVariables(ts, np.array(oms).reshape(n, 3), vel)

    def evaluate(p):
        r, nv = unpack(p)
        return ibf(tree, signs, r, nv, t, epsilon)

    base = evaluate(base_params)
    if not base.constraint_satisfied:
        raise DegenerateSampleError("base point violates the exclusion constraint")
    sig = _ibf_signature(base)
    dim = len(base_params)
    J = np.empty((6 * (j + n), dim))
    for col in range(dim):
        cols = []
        for h in (fd_step, -fd_step):
            p = base_params.copy()
            p[col] += h
            try:
                res = evaluate(p)
            except (PathologyError, InvalidInputError) as exc:
                raise DegenerateSampleError(f"stencil hit {exc}") from exc
            if _ibf_signature(res) != sig:
                raise DegenerateSampleError("finite-difference step changed the collision sequence")
            cols.append(res.terminal)
        J[:, col] = (cols[0] - cols[1]) / (2 * fd_step)
    det = abs(np.linalg.det(J))
    expected = epsilon ** (2 * n) * float(np.prod(np.abs(base.kernel_factors))) if n else 1.0
    return det, expected


def ibf_jacobian_residual(tree, signs, roots, nodes, t, epsilon, fd_step=1e-6):
    det, expected = ibf_jacobian(tree, signs, roots, nodes, t, epsilon, fd_step)
    return abs(det - expected) / expected


def node_variables_from_log(events, t, picks):
    """Node data read off a forward collision log.

    ``picks`` lists ``(event_index, created_slot, progenitor_slot)`` in node
    order ``r = 1..n``; ``omega`` points from progenitor to created particle
    and the created velocity is the post-collisional one.
    """
    times, oms, vel = [], [], []
    for idx, a, b in picks:
        e = events[idx]
        om = e.omega if e.pair[0] == a else -e.omega
        va = e.velocities_after[0] if e.pair[0] == a else e.velocities_after[1]
        times.append(e.time)
        oms.append(om)
        vel.append(va)
    return NodeVariables(times, oms, vel)



def random_ibf_point(tree, t, epsilon, rng, *, spread=3.0, min_factor=1e-3, tries=1000):
    """Random ``(roots, nodes)`` for ``tree`` whose interacting backward flow is clean.

    Roots are spread far enough apart not to overlap; creation data are
    Gaussian velocities, uniform directions and sorted uniform times.
    Points where a creation violates the exclusion constraint or a kernel
    factor is smaller than ``min_factor`` are redrawn.
    """
    j, n = tree.j, tree.n
    for _ in range(tries):
        x = rng.normal(0.0, spread * epsilon, (j, 3))
        if j > 1 and min(np.linalg.norm(x[a] - x[b]) for a in range(j) for b in range(a)) <= 1.2 * epsilon:
            continue
        roots = np.concatenate([x, rng.normal(0.0, 1.0, (j, 3))], axis=1)
        times = -np.sort(-rng.uniform(0.05 * t, 0.95 * t, n))
        if n > 1 and np.min(-np.diff(times)) < 0.02 * t:
            continue
        om = rng.normal(size=(n, 3))
        om /= np.linalg.norm(om, axis=1, keepdims=True)
        nodes = NodeVariables(times, om, rng.normal(0.0, 1.0, (n, 3)))
        try:
            res = ibf(tree, (1,) * n, roots, nodes, t, epsilon)
        except PathologyError:
            continue
        if not res.constraint_satisfied or (n and min(abs(b) for b in res.kernel_factors) < min_factor):
            continue
        return roots.reshape(-1), nodes
    raise DegenerateSampleError("could not draw a clean backward-flow sample")
