"""Event-driven hard-sphere flow, forward and backward in time.

The engine recomputes all pair contacts after each collision (N is small
here) and detects the configurations excluded from the good set: grazing
contacts, two collisions at the same instant, and collisions tied with the
end of the horizon.
"""

import csv
import io
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import GRAZE_RTOL, TIME_RTOL, TOUCH_RTOL
from .core import Configuration, min_gap
from .errors import InvalidInputError, OverlapError, PathologyError, RunawayError

MAX_EVENTS = 10_000

TOLERANCES = {
    "simultaneity_rtol": TIME_RTOL,
    "grazing_rtol": GRAZE_RTOL,
    "overlap_rtol": TOUCH_RTOL,
}


@dataclass(frozen=True)
class CollisionEvent:
    time: float
    pair: tuple
    omega: np.ndarray = field(repr=False)
    velocities_before: tuple = field(repr=False)
    velocities_after: tuple = field(repr=False)

    def to_dict(self):
        return {
            "time": self.time,
            "pair": list(self.pair),
            "omega": self.omega.tolist(),
            "velocities_before": [u.tolist() for u in self.velocities_before],
            "velocities_after": [u.tolist() for u in self.velocities_after],
        }


@dataclass
class PathologyReport:
    grazing: list = field(default_factory=list)
    simultaneous: list = field(default_factory=list)
    near_triple: list = field(default_factory=list)
    horizon: list = field(default_factory=list)
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCES))

    def is_empty(self):
        return not (self.grazing or self.simultaneous or self.near_triple or self.horizon)

    def extend(self, other, tag=None):
        for name in ("grazing", "simultaneous", "near_triple", "horizon"):
            for item in getattr(other, name):
                item = dict(item)
                if tag is not None:
                    item["subset"] = list(tag)
                getattr(self, name).append(item)

    def to_dict(self):
        return {
            "grazing": self.grazing,
            "simultaneous": self.simultaneous,
            "near_triple": self.near_triple,
            "horizon": self.horizon,
            "tolerances": self.tolerances,
        }

    def summary(self):
        return ", ".join(
            f"{len(getattr(self, k))} {k}" for k in ("grazing", "simultaneous", "near_triple", "horizon") if getattr(self, k)
        ) or "clean"


@dataclass(frozen=True)
class TrajectoryLog:
    """Piecewise-free trajectory and its ordered collision events.

    ``direction`` is +1 for forward runs and -1 for backward runs; event
    times are always the elapsed time since ``initial`` in the run's own
    direction, and velocities are physical (forward-time) velocities.
    """

    initial: Configuration
    horizon: float
    events: tuple
    direction: int = 1
    snapshots: tuple = field(default=(), repr=False)

    def state_at(self, s):
        """Positions and velocities after an elapsed time ``s`` (``0 <= s <= horizon``)."""
        if not -1e-15 <= s <= self.horizon * (1 + 1e-15) + 1e-15:
            raise InvalidInputError(f"time {s} outside [0, {self.horizon}]")
        t0, x, v = 0.0, self.initial.x, self.initial.v * self.direction
        for ts, xs, vs in self.snapshots:
            if ts > s:
                break
            t0, x, v = ts, xs, vs
        xs = x + v * (s - t0)
        return xs, v * self.direction

    def sample(self, times):
        return [self.state_at(s) for s in times]

    def to_csv(self, grid_points=11):
        times = sorted(set(np.linspace(0.0, self.horizon, grid_points).tolist()) | {e.time for e in self.events})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "particle", "x1", "x2", "x3", "v1", "v2", "v3"])
        for s in times:
            x, v = self.state_at(s)
            for p in range(len(x)):
                w.writerow([repr(float(s)), p + 1, *map(repr, map(float, x[p])), *map(repr, map(float, v[p]))])
        return buf.getvalue()

    def events_json(self):
        return json.dumps([e.to_dict() for e in self.events], indent=1)


def collision_count(log):
    return len(log.events)


def _issue_check(x, v, eps, t_now, ev, remaining, report, pair_labels):
    """Classify the pathologies attached to the next predicted event ``ev``."""
    t1, i1, k1, sd, t2, i2, k2, _, _ = ev
    tol = TIME_RTOL * (1.0 + abs(t_now + t1))
    found = False
    if abs(t1 - remaining) <= tol:
        report.horizon.append({"time": t_now + t1, "pair": [pair_labels[i1], pair_labels[k1]]})
        found = True
    if i2 >= 0 and t2 - t1 <= tol and t2 <= remaining + tol:
        item = {"time": t_now + t1, "pairs": [[pair_labels[i1], pair_labels[k1]], [pair_labels[i2], pair_labels[k2]]]}
        if {i1, k1} & {i2, k2}:
            report.near_triple.append(item)
        else:
            report.simultaneous.append(item)
        found = True
    dv = v[i1] - v[k1]
    if sd / eps < GRAZE_RTOL * (1.0 + float(np.sqrt(dv @ dv))):
        report.grazing.append({"time": t_now + t1, "pair": [pair_labels[i1], pair_labels[k1]], "rate": -sd / eps})
        found = True
    return found


def predict(x, v, eps, t_now, t_end, report, labels=None, strict=True):
    """Next collision strictly inside ``[t_now, t_end)``.

    Returns ``(dt, i, k)`` or ``None`` if the particles move freely up to
    ``t_end``.  Pathologies are appended to ``report`` and, with ``strict``,
    raise :class:`PathologyError`.
    """
    labels = range(len(x)) if labels is None else labels
    ev = _kernels.next_pair_event(x, v, eps)
    t1, i1, k1 = ev[0], ev[1], ev[2]
    if ev[7] < -TOUCH_RTOL * eps * eps:
        raise OverlapError(f"overlap detected at t={t_now}")
    remaining = t_end - t_now
    if ev[8] <= min(t1, remaining):
        report.grazing.append({"time": t_now + ev[8], "pair": None, "tangent_miss": True})
        if strict:
            raise PathologyError(f"grazing passage near t={t_now + ev[8]:.6g}", report)
    if i1 < 0 or t1 > remaining + TIME_RTOL * (1.0 + abs(t_end)):
        return None
    if _issue_check(x, v, eps, t_now, ev, remaining, report, labels) and strict:
        raise PathologyError(f"pathological event near t={t_now + t1:.6g}: {report.summary()}", report)
    if t1 > remaining:
        return None
    return t1, i1, k1


def collide(x, v, i, k):
    """Elastic collision of the touching pair ``(i, k)`` in place; returns ``omega``."""
    d = x[i] - x[k]
    omega = d / np.sqrt(d @ d)
    w = omega * (omega @ (v[i] - v[k]))
    v[i] -= w
    v[k] += w
    return omega


def run_flow(x, v, eps, duration, *, strict=True, max_events=MAX_EVENTS, labels=None, keep_snapshots=True):
    """Advance ``(x, v)`` (copied) by ``duration`` under hard-sphere dynamics.

    Returns ``(x, v, events, snapshots, report)``.  With ``strict`` a
    pathology raises :class:`PathologyError`; otherwise it is recorded and the
    earliest event is processed as usual.
    """
    x = np.array(x, dtype=float)
    v = np.array(v, dtype=float)
    labels = list(range(len(x))) if labels is None else list(labels)
    report = PathologyReport()
    events = []
    snaps = []
    t_now = 0.0
    last_pair = None
    while True:
        nxt = predict(x, v, eps, t_now, duration, report, labels, strict)
        if nxt is None:
            x += v * (duration - t_now)
            break
        t1, i1, k1 = nxt
        if t1 == 0.0 and last_pair == (i1, k1):
            report.near_triple.append({"time": t_now, "pairs": [[labels[i1], labels[k1]]], "zero_advance": True})
            if strict:
                raise PathologyError("zero-advance repeated collision", report)
        x += v * t1
        t_now += t1
        before = (v[i1].copy(), v[k1].copy())
        omega = collide(x, v, i1, k1)
        events.append(CollisionEvent(t_now, (labels[i1], labels[k1]), omega, before, (v[i1].copy(), v[k1].copy())))
        if keep_snapshots:
            snaps.append((t_now, x.copy(), v.copy()))
        last_pair = (i1, k1)
        if len(events) > max_events:
            raise RunawayError(f"more than {max_events} collisions")
    return x, v, events, snaps, report


def _check_time(t):
    if not (np.isfinite(t) and t >= 0):
        raise InvalidInputError(f"time must be finite and non-negative, got {t}")


def flow(config, t, *, strict=True, max_events=MAX_EVENTS):
    """Forward flow returning ``(final, log, report)``."""
    _check_time(t)
    x, v, events, snaps, report = run_flow(config.x, config.v, config.epsilon, t, strict=strict, max_events=max_events)
    final = Configuration(x, v, config.epsilon, allow_overlap=True)
    log = TrajectoryLog(config, float(t), tuple(events), 1, tuple(snaps))
    return final, log, report


def evolve(config, t, *, max_events=MAX_EVENTS):
    """``T_N(t) config`` with its event log; raises on any pathology."""
    final, log, _ = flow(config, t, strict=True, max_events=max_events)
    return final, log


def evolve_backward(config, t, *, max_events=MAX_EVENTS):
    """``T_N(-t) config``, computed as velocity reversal around a forward run."""
    _check_time(t)
    rev = Configuration(config.x, -config.v, config.epsilon, allow_overlap=True)
    x, v, events, snaps, _ = run_flow(rev.x, rev.v, config.epsilon, t, strict=True, max_events=max_events)
    final = Configuration(x, -v, config.epsilon, allow_overlap=True)
    phys = tuple(
        CollisionEvent(e.time, e.pair, e.omega, (-e.velocities_after[0], -e.velocities_after[1]),
                       (-e.velocities_before[0], -e.velocities_before[1]))
        for e in events
    )
    snaps = tuple((ts, xs, -vs) for ts, xs, vs in snaps)
    return final, TrajectoryLog(config, float(t), phys, -1, snaps)


def default_max_subset(N):
    return N if N <= 6 else 3


def classify(config, t, max_subset=None):
    """Pathology report for ``config`` and all its sub-configurations.

    Membership of the good set requires every subsystem to be good as well,
    so every subset of at least two particles (up to ``max_subset`` particles)
    is run separately.
    """
    N = config.N
    if max_subset is None:
        max_subset = default_max_subset(N)
    report = PathologyReport()
    sizes = sorted({N} | set(range(2, min(max_subset, N) + 1)), reverse=True)
    for size in sizes:
        for idx in itertools.combinations(range(N), size):
            _, _, _, _, sub = run_flow(config.x[list(idx)], config.v[list(idx)], config.epsilon, t,
                                       strict=False, labels=idx, keep_snapshots=False)
            report.extend(sub, tag=idx if size < N else None)
    return report


def sampled_min_gap(log, samples=100):
    eps = log.initial.epsilon
    worst = np.inf
    for s in np.linspace(0.0, log.horizon, samples):
        x, v = log.state_at(s)
        worst = min(worst, min_gap(Configuration(x, v, eps, allow_overlap=True)))
    return worst
