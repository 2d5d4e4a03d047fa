"""The hard-sphere BBGKY series for Dirac initial data.

For an empirical initial measure the time-integrated series collapses to a
finite sum: every (tree, sign vector, ordered injection) term contributes
one row per branch of the interacting forward flow started from the
injected particles.  Rows carry exact rational weights so that ledgers can
be compared and audited without rounding.
"""

import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import Configuration
from .dynamics import evolve, run_flow
from .empirical import DiracComb, config_from_comb, integrate, marginal
from .errors import (
    AuditError,
    InvalidInputError,
    OverlapError,
    PathologyError,
    SamplerMismatchError,
)
from .flows import iff_branches
from .scenarios import Scenario, interval_scenarios, verify_partition
from .trees import enumerate_signs, enumerate_trees, falling

__all__ = [
    "LedgerRow",
    "TermLedger",
    "Scenario",
    "bbgky_rhs",
    "lhs_value",
    "verify_theorem",
    "compose_semigroup",
    "cancellation_audit",
    "corollary_mc",
    "verification_report",
]

MATCH_TOL = 1e-8
LEDGER_CAP = 2000


@dataclass(frozen=True, eq=False)
class LedgerRow:
    n: int
    tree: object
    signs: object
    injection: tuple
    branch: int
    path: str
    sign: int
    weight: Fraction
    value: float
    endpoint: np.ndarray = field(repr=False)

    def term(self):
        return {"tree": self.tree.literal(self.signs), "injection": list(self.injection), "branch": self.branch}

    def to_dict(self):
        out = self.term()
        out.update({
            "n": self.n,
            "path": self.path,
            "sign": self.sign,
            "weight": str(self.weight),
            "value": self.value,
            "endpoint": self.endpoint.tolist(),
        })
        return out


@dataclass
class TermLedger:
    j: int
    N: int
    rows: list = field(default_factory=list)

    def total(self):
        return math.fsum(r.sign * float(r.weight) * r.value for r in self.rows)

    def subtotals(self):
        out = {}
        for r in self.rows:
            out.setdefault(r.n, []).append(r.sign * float(r.weight) * r.value)
        return {n: math.fsum(v) for n, v in sorted(out.items())}

    def count(self, n=None):
        return len(self.rows) if n is None else sum(1 for r in self.rows if r.n == n)

    def signed_weight(self):
        return sum((r.sign * r.weight for r in self.rows), Fraction(0))

    def select(self, tree=None, signs=None, injection=None, n=None):
        out = []
        for r in self.rows:
            if tree is not None and r.tree != tree:
                continue
            if signs is not None and r.signs != signs:
                continue
            if injection is not None and r.injection != tuple(injection):
                continue
            if n is not None and r.n != n:
                continue
            out.append(r)
        return out

    def comb(self, tol=MATCH_TOL):
        """Signed endpoint comb of the ledger, atoms within ``tol`` merged."""
        if not self.rows:
            return DiracComb(self.j, np.zeros((0, 6 * self.j)), ())
        pts = np.array([r.endpoint for r in self.rows])
        w = tuple(r.sign * r.weight for r in self.rows)
        return DiracComb(self.j, pts, w).cluster(tol)

    def to_dict(self, cap=LEDGER_CAP):
        rows = [r.to_dict() for r in self.rows]
        out = {"j": self.j, "N": self.N, "row_count": len(rows), "subtotals": {str(k): v for k, v in self.subtotals().items()}}
        if cap is not None and len(rows) > cap:
            out["rows"] = rows[:cap]
            out["elided"] = len(rows) - cap
        else:
            out["rows"] = rows
        return out


def _term_weight(N, j, n):
    # 1/(N)_{j+n} from the marginal normalization times (N-j)_n from the series prefactor
    return Fraction(falling(N - j, n), falling(N, j + n))


def _scenario_parts(scenario):
    if isinstance(scenario, Scenario):
        return scenario.config, float(scenario.horizon)
    cfg, t = scenario
    return cfg, float(t)


def _moving_subsets(cfg, t):
    """Label subsets (as frozensets) whose own dynamics has a collision before ``t``."""
    out = set()
    N = cfg.N
    for size in range(2, N + 1):
        for idx in itertools.combinations(range(N), size):
            _, _, ev, _, _ = run_flow(cfg.x[list(idx)], cfg.v[list(idx)], cfg.epsilon, t, strict=False,
                                      keep_snapshots=False)
            if ev:
                out.add(frozenset(idx))
    return out


def bbgky_rhs(scenario, j, phi, n_max=None, *, t=None):
    """Right side of the series paired with ``phi``; returns ``(value, ledger)``.

    ``scenario`` is a :class:`Scenario` or a ``(Configuration, t)`` pair.
    ``n_max`` defaults to ``N - j``, beyond which every term vanishes.
    """
    cfg, horizon = _scenario_parts(scenario)
    t = horizon if t is None else float(t)
    N, eps = cfg.N, cfg.epsilon
    if not 1 <= j <= N:
        raise InvalidInputError(f"j={j} outside 1..{N}")
    n_max = N - j if n_max is None else int(n_max)
    if not 0 <= n_max <= N - j:
        raise InvalidInputError(f"n_max={n_max} must lie in 0..{N - j}")
    z = np.concatenate([cfg.x, cfg.v], axis=1)
    ledger = TermLedger(j, N)
    # an injection whose particles never collide among themselves admits no creation
    moving = _moving_subsets(cfg, t) if n_max > 0 and t > 0 else set()
    for n in range(n_max + 1):
        weight = _term_weight(N, j, n)
        for tree in enumerate_trees(j, n):
            for signs in enumerate_signs(n):
                sgn = signs.product()
                for inj in itertools.permutations(range(N), j + n):
                    if n > 0 and frozenset(inj) not in moving:
                        continue
                    try:
                        branches = iff_branches(tree, signs, z[list(inj)], t, eps)
                    except PathologyError as exc:
                        term = {"tree": tree.literal(signs), "injection": [i + 1 for i in inj]}
                        raise PathologyError(f"pathology in term {term}: {exc}", exc.report, term) from exc
                    for b, br in enumerate(branches):
                        ledger.rows.append(LedgerRow(n, tree, signs, tuple(i + 1 for i in inj), b,
                                                     br.path_string(), sgn, weight, float(phi(br.endpoint)),
                                                     br.endpoint))
    return ledger.total(), ledger


def lhs_value(scenario, j, phi, *, t=None):
    """``phi`` paired with the order-``j`` marginal of the evolved configuration."""
    cfg, horizon = _scenario_parts(scenario)
    t = horizon if t is None else float(t)
    final, _ = evolve(cfg, t)
    return integrate(marginal(final, j), phi)


def verify_theorem(scenario, j, phi, n_max=None):
    """Absolute gap between the series and the directly evolved marginal."""
    rhs, _ = bbgky_rhs(scenario, j, phi, n_max)
    return abs(rhs - lhs_value(scenario, j, phi))


def compose_semigroup(scenario, j, phi, *, return_details=False):
    """Chain the series over the partition intervals and compare with direct evolution.

    On each interval but the last the order-one ledger is summed into a comb;
    after cancellations it must consist of ``N`` atoms of weight ``1/N``,
    which are read back as the configuration starting the next interval.
    The last interval evaluates the order-``j`` series against ``phi``.
    """
    if scenario.partition is None:
        raise InvalidInputError("scenario has no partition")
    verify_partition(scenario, scenario.partition)
    cfg, eps = scenario.config, scenario.epsilon
    bps = scenario.partition
    details = []
    for i in range(len(bps) - 1):
        dt = bps[i + 1] - bps[i]
        if i == len(bps) - 2:
            rhs, ledger = bbgky_rhs((cfg, dt), j, phi)
            details.append({"interval": [bps[i], bps[i + 1]], "rows": ledger.count(), "value": rhs})
            break
        _, ledger = bbgky_rhs((cfg, dt), 1, _unit_observable)
        comb = ledger.comb()
        if len(comb) != cfg.N or any(w != Fraction(1, cfg.N) for w in comb.weights):
            raise AuditError(f"interval {i}: series comb is not an empirical measure ({len(comb)} atoms)")
        details.append({"interval": [bps[i], bps[i + 1]], "rows": ledger.count(), "atoms": len(comb)})
        cfg = config_from_comb(comb, eps)
    residual = abs(rhs - lhs_value(scenario, j, phi))
    return (residual, details) if return_details else residual


def _unit_observable(z):
    z = np.asarray(z)
    return 1.0 if z.ndim == 1 else np.ones(len(z))


def interval_residuals(scenario, j, phi):
    """``verify_theorem`` on each partition interval started from the simulated state."""
    return [verify_theorem(s, j, phi) for s in interval_scenarios(scenario)]


# ---------------------------------------------------------------------------
# cancellation audit
# ---------------------------------------------------------------------------

def _close(a, b, tol):
    return float(np.max(np.abs(a - b))) <= tol


def cancellation_audit(ledger, lhs_comb, tol=MATCH_TOL):
    """Pair each negative row with a positive row at the same endpoint.

    Candidates with the same tree and injection are preferred, then the
    same order ``n``, then any.  Surviving positive rows must sit on atoms
    of ``lhs_comb`` and reproduce its weights.  Raises :class:`AuditError`
    with the report attached when something is left over.
    """
    rows = ledger.rows
    pos = [i for i, r in enumerate(rows) if r.sign > 0]
    neg = [i for i, r in enumerate(rows) if r.sign < 0]
    used = set()
    pairs, unmatched = [], []
    for i in neg:
        r = rows[i]
        cands = [p for p in pos if p not in used and rows[p].weight == r.weight and _close(rows[p].endpoint, r.endpoint, tol)]
        if not cands:
            unmatched.append(r.to_dict())
            continue

        def rank(p, r=r):
            q = rows[p]
            return (0 if (q.tree, q.injection) == (r.tree, r.injection) else 1 if q.n == r.n else 2, p)

        p = min(cands, key=rank)
        used.add(p)
        q = rows[p]
        kind = "free-flow" if q.n == 0 else ("virtual-branch" if q.n >= 2 and q.tree == r.tree else "cross-term")
        pairs.append({"positive": q.term(), "negative": r.term(), "kind": kind, "endpoint": q.endpoint.tolist()})
    survivors = [p for p in pos if p not in used]
    real = []
    atom_weight = [Fraction(0)] * len(lhs_comb)
    for p in survivors:
        q = rows[p]
        for a, pt in enumerate(lhs_comb.points):
            if _close(pt, q.endpoint, tol):
                atom_weight[a] += q.weight
                real.append({"row": q.term(), "atom": a})
                break
        else:
            unmatched.append(q.to_dict())
    bad_atoms = [a for a, w in enumerate(atom_weight) if w != lhs_comb.weights[a]]
    report = {
        "pairs": pairs,
        "virtual_pairs": [p for p in pairs if p["kind"] == "virtual-branch"],
        "real": real,
        "unmatched": unmatched,
        "atom_weight_mismatch": bad_atoms,
        "clean": not unmatched and not bad_atoms,
    }
    if not report["clean"]:
        first = unmatched[0] if unmatched else {"atom": bad_atoms[0]}
        raise AuditError(f"cancellation audit failed at {first}", report)
    return report


# ---------------------------------------------------------------------------
# Monte Carlo over random initial data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianSampler:
    """Independent Gaussian positions and velocities, overlaps rejected."""

    N: int
    epsilon: float = 1.0
    position_scale: float = 1.5
    velocity_scale: float = 1.0

    def draw(self, rng):
        x = rng.normal(0.0, self.position_scale, (self.N, 3))
        v = rng.normal(0.0, self.velocity_scale, (self.N, 3))
        return x, v

    def to_dict(self):
        return {"kind": "gaussian", "N": self.N, "epsilon": self.epsilon,
                "position_scale": self.position_scale, "velocity_scale": self.velocity_scale}


def _mc_chunk(args):
    sampler, j, phi, t, n_max, count, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    lhs, rhs = [], []
    rejected = 0
    drawn = 0
    while len(lhs) < count:
        drawn += 1
        if drawn > 4 * count + 100 and rejected > 0.5 * drawn:
            break
        x, v = sampler.draw(rng)
        try:
            cfg = Configuration(x, v, sampler.epsilon)
            scen = (cfg, t)
            r, _ = bbgky_rhs(scen, j, phi, n_max)
            l = lhs_value(scen, j, phi)
        except (OverlapError, PathologyError):
            rejected += 1
            continue
        lhs.append(l)
        rhs.append(r)
    return lhs, rhs, rejected, drawn


def _workers():
    try:
        return max(1, int(os.environ.get("HSH_WORKERS", "1")))
    except ValueError:
        return 1


def corollary_mc(sampler, j, phi, t, n_max=None, samples=10_000, seed=0, chunks=8):
    """Paired Monte Carlo estimate of both sides of the series identity.

    Each accepted sample contributes ``(lhs, rhs)``; the difference
    estimator uses the paired samples so that common fluctuations cancel.
    """
    if n_max is None:
        n_max = sampler.N - j
    seqs = np.random.SeedSequence(seed).spawn(chunks)
    sizes = [samples // chunks + (1 if c < samples % chunks else 0) for c in range(chunks)]
    jobs = [(sampler, j, phi, t, n_max, s, q) for s, q in zip(sizes, seqs)]
    workers = min(_workers(), chunks)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_mc_chunk, jobs))
    else:
        parts = [_mc_chunk(a) for a in jobs]
    lhs = np.concatenate([np.array(p[0], dtype=float) for p in parts])
    rhs = np.concatenate([np.array(p[1], dtype=float) for p in parts])
    rejected = sum(p[2] for p in parts)
    drawn = sum(p[3] for p in parts)
    if drawn == 0 or rejected / drawn > 0.5:
        raise SamplerMismatchError(f"rejection rate {rejected}/{drawn} exceeds 50%")
    m = len(lhs)
    d = lhs - rhs

    def se(a):
        return float(np.std(a, ddof=1) / math.sqrt(len(a))) if len(a) > 1 else 0.0

    diff_mean = float(np.mean(d))
    diff_se = se(d)
    return {
        "samples": m,
        "rejected": rejected,
        "lhs_mean": float(np.mean(lhs)),
        "rhs_mean": float(np.mean(rhs)),
        "lhs_se": se(lhs),
        "rhs_se": se(rhs),
        "diff_mean": diff_mean,
        "diff_se": diff_se,
        "agree": abs(diff_mean) <= 3.0 * diff_se + 1e-12,
        "sampler": sampler.to_dict(),
    }


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def verification_report(scenario, j, phi, n_max=None, *, tolerance=1e-9, audit=True, cap=LEDGER_CAP):
    rhs, ledger = bbgky_rhs(scenario, j, phi, n_max)
    lhs = lhs_value(scenario, j, phi)
    residual = abs(rhs - lhs)
    out = {
        "scenario_hash": scenario.digest(),
        "j": j,
        "n_max": scenario.N - j if n_max is None else n_max,
        "lhs": lhs,
        "rhs": rhs,
        "residual": residual,
        "tolerance": tolerance * max(1.0, abs(lhs)),
        "pass": residual <= tolerance * max(1.0, abs(lhs)),
        "subtotals": {str(k): v for k, v in ledger.subtotals().items()},
        "ledger": ledger.to_dict(cap),
    }
    if audit:
        final, _ = evolve(scenario.config, scenario.horizon)
        try:
            out["audit"] = cancellation_audit(ledger, marginal(final, j))
        except AuditError as exc:
            out["audit"] = exc.report
            out["pass"] = False
    return out


def dumps(obj):
    return json.dumps(obj, indent=1, sort_keys=True, default=str)
