"""The Enskog series for empirical initial data and its regularizations.

Atoms of the tensor power of the empirical measure are assigned to the
particles of the Enskog backward flow, with repetitions allowed.  Each
assignment is pushed through the forward Enskog flow (the inverse of the
backward map), which decides membership in the image set and returns the
endpoint.  Repeated atoms can land exactly on the border of the image set;
what such a term is worth depends on how the Dirac masses are regularized.

With ``lambda^{-1} = N eps^2`` every assignment carries the weight
``lambda^{-n} eps^{-2n} N^{-(1+n)} = 1/N``.
"""

import itertools
import math
import re
import zlib
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from . import _kernels
from ._kernels import (
    EBF_BOUNDARY,
    EBF_COINCIDENT,
    EBF_NO_PREIMAGE,
    EBF_OK,
    EBF_SEPARATED,
    EBF_UNDEFINED,
)
from .core import Configuration
from .empirical import DiracComb, integrate
from .errors import (
    AmbiguityError,
    InvalidDemoError,
    InvalidInputError,
    UndefinedEndpointError,
    VarianceError,
)
from .scenarios import Scenario
from .trees import Tree, enumerate_signs, enumerate_trees, SignVector

SMEAR_POINTS = 2048
RICHARDSON = (1.0, 0.5, 0.25)


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegularizationPolicy:
    """How to value assignments on the border of the Enskog image set.

    ``none`` refuses them, ``symmetric`` mollifies every atom with an
    isotropic Gaussian of width ``param`` and extrapolates to zero width,
    ``time-sep`` drops creations closer in time than ``param`` and checks
    that halving it changes nothing.
    """

    kind: str = "none"
    param: float = None

    KINDS = ("none", "symmetric", "time-sep")
    DEFAULTS = {"symmetric": 1e-4, "time-sep": 1e-3}

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidInputError(f"unknown policy {self.kind!r}")
        if self.kind == "none":
            object.__setattr__(self, "param", None)
            return
        p = self.DEFAULTS[self.kind] if self.param is None else float(self.param)
        if not (p > 0 and math.isfinite(p)):
            raise InvalidInputError(f"policy parameter must be positive, got {p}")
        object.__setattr__(self, "param", p)

    @classmethod
    def parse(cls, text):
        """``none``, ``symmetric:1e-4`` or ``time-sep:1e-3``."""
        if isinstance(text, RegularizationPolicy):
            return text
        m = re.fullmatch(r"\s*(none|symmetric|time-sep)\s*(?::\s*([^\s]+))?\s*", str(text))
        if not m:
            raise InvalidInputError(f"malformed policy {text!r}")
        try:
            param = float(m.group(2)) if m.group(2) is not None else None
        except ValueError as exc:
            raise InvalidInputError(f"malformed policy parameter in {text!r}") from exc
        return cls(m.group(1), param)

    def __str__(self):
        return self.kind if self.param is None else f"{self.kind}:{self.param:g}"

    def to_dict(self):
        out = {"kind": self.kind, "param": self.param}
        if self.kind == "symmetric":
            out["mollifier"] = "isotropic gaussian in x and v, scrambled sobol quadrature"
            out["points"] = SMEAR_POINTS
            out["widths"] = [self.param * r for r in RICHARDSON]
        if self.kind == "time-sep":
            out["etas"] = [self.param, 0.5 * self.param]
        return out


# ---------------------------------------------------------------------------
# term values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssignmentValue:
    assignment: tuple
    pattern: tuple
    status: str
    value: float

    def to_dict(self):
        return {"assignment": list(self.assignment), "pattern": [list(p) for p in self.pattern],
                "status": self.status, "value": self.value}


@dataclass(frozen=True)
class EnskogTermValue:
    """Sum over atom assignments of one (tree, signs) term.

    ``pattern`` lists, for every contributing or boundary assignment, the
    groups of slots fed by the same atom.  ``parts`` holds the per-assignment
    detail for assignments that are admitted, on the border, or undefined.
    """

    tree: Tree
    signs: SignVector
    pattern: tuple
    value: float
    boundary_flag: bool
    policy: str = "none"
    parts: tuple = field(default=(), repr=False)
    counts: dict = field(default_factory=dict)
    stable: bool = True

    def to_dict(self):
        return {
            "tree": self.tree.literal(self.signs),
            "value": self.value,
            "boundary": self.boundary_flag,
            "policy": self.policy,
            "counts": dict(self.counts),
            "stable": self.stable,
            "parts": [p.to_dict() for p in self.parts],
        }


def contraction_pattern(assignment):
    """Groups (one-based slots) of slots sharing an atom, singletons omitted."""
    groups = {}
    for slot, a in enumerate(assignment, start=1):
        groups.setdefault(a, []).append(slot)
    return tuple(tuple(g) for g in groups.values() if len(g) > 1)


def _scenario_parts(scenario):
    if isinstance(scenario, Scenario):
        return scenario.config, float(scenario.horizon)
    cfg, t = scenario
    return cfg, float(t)


def _atoms(cfg):
    return np.concatenate([cfg.x, cfg.v], axis=1)


def _phi_rows(phi, ends):
    vals = np.asarray(phi(ends.reshape(len(ends), -1)), dtype=float)
    return vals.reshape(len(ends))


def _term_seed(seed, tree, signs, assignment):
    key = f"{tree.literal(signs)}|{','.join(map(str, assignment))}".encode()
    return np.random.SeedSequence([int(seed), zlib.crc32(key)])


def _slot_perms(assignment):
    groups = {}
    for slot, a in enumerate(assignment):
        groups.setdefault(a, []).append(slot)
    per_group = [list(itertools.permutations(g)) for g in groups.values()]
    base = [g for g in groups.values()]
    out = []
    for combo in itertools.product(*per_group):
        perm = list(range(len(assignment)))
        for src, dst in zip(base, combo):
            for s, d in zip(src, dst):
                perm[s] = d
        out.append(perm)
    return out


def _smeared(tree, signs, atoms, assignment, t, eps, phi, delta, seed, points=SMEAR_POINTS):
    """Richardson-extrapolated value of one assignment with mollified atoms.

    The same scrambled Sobol normals are reused at every width, and the
    perturbations are symmetrized over slots fed by the same atom.
    Returns ``(value, values_at_widths)`` (value not yet multiplied by the
    sign and weight).
    """
    m = len(assignment)
    perms = _slot_perms(assignment)
    # keep the total work per assignment roughly fixed when there are many slot permutations
    points = max(64, 1 << int(math.log2(max(points // len(perms), 1))))
    sob = qmc.Sobol(6 * m, scramble=True, seed=np.random.default_rng(seed))
    g = ndtri(np.clip(sob.random(points), 1e-12, 1 - 1e-12)).reshape(points, m, 6)
    g = np.concatenate([g[:, perm, :] for perm in perms])
    base = atoms[list(assignment)][None]
    vals = []
    for r in RICHARDSON:
        ends, status, _, _, _ = _kernels.ebf_forward(base + (delta * r) * g, tree.zero_based(), np.array(signs.signs),
                                                     tree.j, eps, t)
        ok = status == EBF_OK
        acc = float(np.sum(_phi_rows(phi, ends[ok]))) if ok.any() else 0.0
        vals.append(acc / len(g))
    v1, v2, v4 = vals
    return (8.0 * v4 - 6.0 * v2 + v1) / 3.0, vals


def enskog_term(tree, signs, scenario, phi, policy="none", *, assignments=None, on_undefined="raise", seed=0):
    """Value of the ``(tree, signs)`` term of the Enskog series paired with ``phi``.

    ``assignments`` restricts the sum to the given zero-based atom tuples
    (default: all of ``{0..N-1}^{1+n}``).  Assignments whose endpoint is
    undefined raise :class:`UndefinedEndpointError` unless ``on_undefined``
    is ``"exclude"``, in which case they are counted and skipped.
    """
    policy = RegularizationPolicy.parse(policy)
    signs = SignVector.coerce(signs)
    if tree.j != 1:
        raise InvalidInputError("the Enskog series is evaluated for j=1")
    if signs.n != tree.n:
        raise InvalidInputError("tree and signs differ in n")
    cfg, t = _scenario_parts(scenario)
    N, eps, n = cfg.N, cfg.epsilon, tree.n
    atoms = _atoms(cfg)
    weight = Fraction(1, N)
    sgn = signs.product()
    if assignments is None:
        assignments = list(itertools.product(range(N), repeat=1 + n))
    else:
        assignments = [tuple(int(a) for a in asg) for asg in assignments]
    counts = {"admitted": 0, "boundary": 0, "undefined": 0, "separated": 0, "contractions_admitted": 0}
    if not assignments:
        return EnskogTermValue(tree, signs, (), 0.0, False, str(policy), (), counts)
    A = np.array(assignments, dtype=np.int64)
    pts = atoms[A]
    etas = [0.0]
    if policy.kind == "time-sep":
        etas = [policy.param, 0.5 * policy.param]
    runs = [_kernels.ebf_forward(pts, tree.zero_based(), np.array(signs.signs), 1, eps, t, eta) for eta in etas]
    ends, status = runs[-1][0], runs[-1][1]
    stable = all(np.array_equal(r[1], status) for r in runs)
    parts, terms = [], []
    boundary = False
    for idx, asg in enumerate(assignments):
        st = int(status[idx])
        pat = contraction_pattern(asg)
        if st == EBF_NO_PREIMAGE:
            continue
        if st == EBF_UNDEFINED:
            counts["undefined"] += 1
            term = {"tree": tree.literal(signs), "assignment": [a + 1 for a in asg]}
            if on_undefined == "raise":
                raise UndefinedEndpointError(f"endpoint undefined for term {term}", term)
            parts.append(AssignmentValue(asg, pat, "undefined", 0.0))
            continue
        if st == EBF_SEPARATED:
            counts["separated"] += 1
            continue
        if st == EBF_OK:
            val = float(_phi_rows(phi, ends[idx:idx + 1])[0])
            counts["admitted"] += 1
            if pat:
                counts["contractions_admitted"] += 1
            terms.append(sgn * float(weight) * val)
            parts.append(AssignmentValue(asg, pat, "admitted", sgn * float(weight) * val))
            continue
        # on the border of the image set
        boundary = True
        counts["boundary"] += 1
        term = {"tree": tree.literal(signs), "assignment": [a + 1 for a in asg], "pattern": [list(p) for p in pat]}
        if policy.kind != "symmetric":
            raise AmbiguityError(f"assignment on the border of the image set: {term}", term)
        raw, _ = _smeared(tree, signs, atoms, asg, t, eps, phi, policy.param, _term_seed(seed, tree, signs, asg))
        terms.append(sgn * float(weight) * raw)
        parts.append(AssignmentValue(asg, pat, "boundary", sgn * float(weight) * raw))
    pattern = tuple(p.pattern for p in parts if p.pattern)
    return EnskogTermValue(tree, signs, pattern, math.fsum(terms), boundary, str(policy), tuple(parts), counts, stable)


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------

@dataclass
class SeriesResult:
    policy: str
    per_order: list
    partial_sums: list
    absolute: list
    terms: list = field(repr=False)
    counts: dict = field(default_factory=dict)
    stable: bool = True

    @property
    def value(self):
        return self.partial_sums[-1]

    def to_dict(self, with_terms=False):
        out = {
            "policy": self.policy,
            "per_order": self.per_order,
            "partial_sums": self.partial_sums,
            "absolute": self.absolute,
            "counts": self.counts,
            "stable": self.stable,
            "value": self.value,
        }
        if with_terms:
            out["terms"] = [t.to_dict() for t in self.terms if t.parts]
        return out


def enskog_series(scenario, phi, policy="none", n_max=2, *, seed=0):
    """All terms up to order ``n_max``; undefined endpoints are excluded and counted."""
    policy = RegularizationPolicy.parse(policy)
    per_order, absolute, terms = [], [], []
    counts = {"admitted": 0, "boundary": 0, "undefined": 0, "separated": 0, "contractions_admitted": 0}
    stable = True
    for n in range(n_max + 1):
        vals = []
        for tree in enumerate_trees(1, n):
            for signs in enumerate_signs(n):
                tv = enskog_term(tree, signs, scenario, phi, policy, on_undefined="exclude", seed=seed)
                terms.append(tv)
                vals.append(tv.value)
                stable = stable and tv.stable
                for k, c in tv.counts.items():
                    counts[k] += c
        per_order.append(math.fsum(vals))
        absolute.append(math.fsum(abs(p.value) for tv in terms[len(terms) - len(vals):] for p in tv.parts))
    partial = list(itertools.accumulate(per_order))
    return SeriesResult(str(policy), per_order, partial, absolute, terms, counts, stable)


def free_value(scenario, phi):
    """``phi`` paired with the empirical measure of the interacting flow at the horizon."""
    from .dynamics import evolve
    from .empirical import empirical_measure

    cfg, t = _scenario_parts(scenario)
    final, _ = evolve(cfg, t)
    return integrate(empirical_measure(final), phi)


def renormalized_series(scenario, phi, eta=1e-3, n_max=3):
    """Partial sums of the time-separated series and the check against the true dynamics."""
    cfg, t = _scenario_parts(scenario)
    res = enskog_series(scenario, phi, RegularizationPolicy("time-sep", eta), n_max)
    target = free_value(scenario, phi)
    first = _first_collision_time(cfg, t)
    return {
        "eta": eta,
        "partial_sums": res.partial_sums,
        "per_order": res.per_order,
        "target": target,
        "residual": abs(res.value - target),
        "contractions_admitted": res.counts["contractions_admitted"],
        "separated": res.counts["separated"],
        "undefined": res.counts["undefined"],
        "stable": res.stable,
        "degenerate": first is not None and eta >= first,
    }


def _first_collision_time(cfg, t):
    from .dynamics import run_flow

    _, _, ev, _, _ = run_flow(cfg.x, cfg.v, cfg.epsilon, t, strict=False, keep_snapshots=False)
    return ev[0].time if ev else None


def _alternating_families(terms, rtol=1e-6, floor=1e-9):
    """Pairs of terms with equal size and opposite sign.

    Terms smaller than ``floor`` times the largest term are ignored.
    """
    out = []
    scale = max((abs(t.value) for t in terms), default=0.0)
    vals = [(t.tree.literal(t.signs), t.tree.n, t.value) for t in terms if abs(t.value) > floor * scale]
    for (a, na, va), (b, nb, vb) in itertools.combinations(vals, 2):
        if abs(va + vb) <= rtol * max(abs(va), abs(vb)):
            out.append({"terms": [a, b], "orders": [na, nb], "value": va})
    return out


def divergence_trace(scenario, phi, policy="symmetric:1e-4", n_max=4, *, seed=0, floor=1e-6):
    """Per-order sums, alternating families and Cesaro means of the regularized series."""
    res = enskog_series(scenario, phi, policy, n_max, seed=seed)
    target = free_value(scenario, phi)
    cesaro = [float(np.mean(res.partial_sums[: k + 1])) for k in range(len(res.partial_sums))]
    higher = res.absolute[1:]
    signs = [math.copysign(1.0, v) for v in res.per_order[1:] if v != 0.0]
    star = {}
    for tv in res.terms:
        n = tv.tree.n
        if n and tv.tree.progenitors == (1,) * n and tv.signs.signs == (1,) + (-1,) * (n - 1):
            star[n] = tv.value
    return {
        "policy": str(RegularizationPolicy.parse(policy)),
        "per_order": res.per_order,
        "partial_sums": res.partial_sums,
        "absolute": res.absolute,
        "alternating": _alternating_families(res.terms),
        "alternates": len(signs) >= 2 and all(a != b for a, b in zip(signs, signs[1:])),
        "star_family": star,
        "not_absolutely_convergent": bool(higher) and min(higher) > floor,
        "cesaro": cesaro,
        "cesaro_gap": abs(cesaro[-1] - target),
        "target": target,
        "counts": res.counts,
    }


def ambiguity_report(scenario, phi, n_max=2, policies=("none", "symmetric:1e-4", "time-sep:1e-3"), *, seed=0):
    target = free_value(scenario, phi)
    out = {"target": target, "n_max": n_max, "policies": {}}
    for p in policies:
        pol = RegularizationPolicy.parse(p)
        try:
            res = enskog_series(scenario, phi, pol, n_max, seed=seed)
        except (AmbiguityError, UndefinedEndpointError) as exc:
            out["policies"][str(pol)] = {"error": type(exc).__name__, "message": str(exc), "term": exc.term}
            continue
        d = res.to_dict()
        d["definition"] = pol.to_dict()
        d["alternating"] = _alternating_families(res.terms)
        out["policies"][str(pol)] = d
    return out


def contraction_term(scenario, phi, policy="symmetric:1e-4", signs=(1, -1), *, seed=0):
    """The simultaneous-creation term: tree ``(1,1)`` on assignments ``(a, b, b)``, ``a != b``."""
    cfg, _ = _scenario_parts(scenario)
    asg = [(a, b, b) for a in range(cfg.N) for b in range(cfg.N) if a != b]
    return enskog_term(Tree(1, (1, 1)), signs, scenario, phi, policy, assignments=asg, seed=seed)


# ---------------------------------------------------------------------------
# singular solutions
# ---------------------------------------------------------------------------

def singular_solution_demo(config, t, phi=None, n_max=3):
    """Series for two overlapping particles, the second one at rest.

    Every awaited pair starts inside the exclusion sphere, so no term of
    order ``n >= 1`` has an admitted assignment and the series reduces to
    free transport.  Returns ``(comb, report)``.
    """
    if config.N != 2:
        raise InvalidDemoError("the demo needs exactly two particles")
    d = float(np.linalg.norm(config.x[0] - config.x[1]))
    if not d < config.epsilon:
        raise InvalidDemoError("the two particles must overlap")
    if np.any(config.v[1] != 0.0):
        raise InvalidDemoError("the second particle must be at rest")
    if not (t >= 0 and math.isfinite(t)):
        raise InvalidDemoError("time must be finite and non-negative")
    atoms = _atoms(config)
    memberships = {}
    for n in range(1, n_max + 1):
        admitted = 0
        A = np.array(list(itertools.product(range(2), repeat=1 + n)), dtype=np.int64)
        for tree in enumerate_trees(1, n):
            for signs in enumerate_signs(n):
                _, status, _, _, _ = _kernels.ebf_forward(atoms[A], tree.zero_based(), np.array(signs.signs), 1,
                                                          config.epsilon, t)
                admitted += int(np.sum(status != EBF_NO_PREIMAGE))
        memberships[n] = admitted
    pts = np.concatenate([config.x + config.v * t, config.v], axis=1)
    comb = DiracComb(1, pts, (Fraction(1, 2), Fraction(1, 2)))
    report = {"memberships": memberships, "all_vanish": all(v == 0 for v in memberships.values())}
    if phi is not None:
        report["value"] = integrate(comb, phi)
    return comb, report


# ---------------------------------------------------------------------------
# factorization for smooth data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianDensity:
    """Normalized Gaussian one-particle density on position-velocity space."""

    position_scale: float = 1.0
    velocity_scale: float = 1.0

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        sx, sv = self.position_scale, self.velocity_scale
        q = np.sum(z[..., :3] ** 2, axis=-1) / sx**2 + np.sum(z[..., 3:] ** 2, axis=-1) / sv**2
        return np.exp(-0.5 * q) / ((2 * np.pi) ** 3 * sx**3 * sv**3)

    def velocity_density(self, v):
        sv = self.velocity_scale
        return np.exp(-0.5 * np.sum(v**2, axis=-1) / sv**2) / ((2 * np.pi) ** 1.5 * sv**3)

    def sample(self, rng, size):
        x = rng.normal(0, self.position_scale, (size, 3))
        v = rng.normal(0, self.velocity_scale, (size, 3))
        return np.concatenate([x, v], axis=1)


def ebf_backward_batch(tree, roots, times, omegas, vels, t, eps):
    """Vectorized Enskog backward flow.

    ``roots`` is ``(P, j, 6)``, node arrays are ``(P, n)``, ``(P, n, 3)``,
    ``(P, n, 3)`` with decreasing times.  Returns ``(terminal (P, j+n, 6),
    B (P, n))``.
    """
    x = roots[..., :3].copy()
    v = roots[..., 3:].copy()
    t_hi = np.full(len(roots), float(t))
    B = np.empty(times.shape)
    for r, k in enumerate(tree.zero_based()):
        dt = t_hi - times[:, r]
        x = x - v * dt[:, None, None]
        om = omegas[:, r]
        pos = x[:, k] + eps * om
        vel = vels[:, r].copy()
        b = np.einsum("ij,ij->i", om, vel - v[:, k])
        B[:, r] = b
        hit = b >= 0.0
        w = om * np.where(hit, b, 0.0)[:, None]
        vel = vel - w
        v[:, k] = v[:, k] + w
        x = np.concatenate([x, pos[:, None]], axis=1)
        v = np.concatenate([v, vel[:, None]], axis=1)
        t_hi = times[:, r]
    x = x - v * t_hi[:, None, None]
    return np.concatenate([x, v], axis=2), B


def _series_order_mc(g0, probe, j, n, t, eps, lam_inv, samples, rng):
    """MC estimate (mean, se) of the order-``n`` term of ``g_j`` at ``probe``."""
    zz = np.asarray(probe, float).reshape(j, 6)
    if n == 0:
        back = zz.copy()
        back[:, :3] -= zz[:, 3:] * t
        return float(np.prod(g0(back))), 0.0
    roots = np.broadcast_to(zz[None], (samples, j, 6))
    if t == 0:
        return 0.0, 0.0
    total = np.zeros(samples)
    for tree in enumerate_trees(j, n):
        times = -np.sort(-rng.uniform(0.0, t, (samples, n)), axis=1)
        om = rng.normal(size=(samples, n, 3))
        om /= np.linalg.norm(om, axis=2, keepdims=True)
        vel = rng.normal(0.0, g0.velocity_scale, (samples, n, 3))
        term, B = ebf_backward_batch(tree, roots, times, om, vel, t, eps)
        dens = np.prod(g0(term), axis=1)
        jac = np.prod(B, axis=1)
        # uniform ordered times, uniform directions, gaussian velocities
        vol = t**n / math.factorial(n) * (4 * np.pi) ** n / np.prod(g0.velocity_density(vel), axis=1)
        total += lam_inv**n * jac * dens * vol
    return float(np.mean(total)), float(np.std(total, ddof=1) / math.sqrt(samples))


def ebf_factorization_check(g0=None, j=2, t=0.5, n_max=2, mc_samples=100_000, seed=0, *, probes=10,
                            epsilon=0.5, lam_inv=1.0, sigmas=3.0):
    """Compare ``g_2`` with ``g_1 (x) g_1`` order by order at random probe points.

    At each order ``n`` the two-particle series term is compared with the sum
    of products of one-particle terms of orders ``n1 + n2 = n``; every
    estimate uses its own seeded stream and the standard error of the
    difference follows from the delta method.
    """
    if j != 2:
        raise InvalidInputError("the factorization check compares j=2 with products of j=1")
    if not 0 <= n_max <= 2:
        raise InvalidInputError("n_max must lie in 0..2")
    g0 = g0 or GaussianDensity()
    root = np.random.SeedSequence(seed)
    probe_rng = np.random.default_rng(root.spawn(1)[0])
    rows = []
    for p in range(probes):
        z = g0.sample(probe_rng, 2) * 0.5
        streams = iter(np.random.SeedSequence([seed, p]).spawn(3 * (n_max + 1)))
        g1a = [_series_order_mc(g0, z[0], 1, n, t, epsilon, lam_inv, mc_samples, np.random.default_rng(next(streams)))
               for n in range(n_max + 1)]
        g1b = [_series_order_mc(g0, z[1], 1, n, t, epsilon, lam_inv, mc_samples, np.random.default_rng(next(streams)))
               for n in range(n_max + 1)]
        g2 = [_series_order_mc(g0, z, 2, n, t, epsilon, lam_inv, mc_samples, np.random.default_rng(next(streams)))
              for n in range(n_max + 1)]
        resid, var = 0.0, 0.0
        for n in range(n_max + 1):
            prod = 0.0
            for n1 in range(n + 1):
                (a, sa), (b, sb) = g1a[n1], g1b[n - n1]
                prod += a * b
                var += (b * sa) ** 2 + (a * sb) ** 2
            resid += g2[n][0] - prod
            var += g2[n][1] ** 2
        g2_total = sum(m for m, _ in g2)
        se = math.sqrt(var)
        if g2_total != 0 and se / abs(g2_total) > 1.0:
            raise VarianceError(f"relative standard error {se / abs(g2_total):.2f} at probe {p}; increase samples")
        rows.append({"probe": z.tolist(), "g2": g2_total, "residual": resid, "se": se,
                     "ok": abs(resid) <= sigmas * se + 1e-12})
    return {
        "t": t,
        "n_max": n_max,
        "samples": mc_samples,
        "max_residual": max(abs(r["residual"]) for r in rows),
        "max_z": max((abs(r["residual"]) / r["se"] if r["se"] > 0 else 0.0) for r in rows),
        "all_ok": all(r["ok"] for r in rows),
        "probes": rows,
    }


def configuration_from_pair(x1, v1, x2, epsilon=1.0):
    """Overlapping pair in the demo layout (second particle at rest)."""
    return Configuration([x1, x2], [v1, [0.0, 0.0, 0.0]], epsilon, allow_overlap=True)
