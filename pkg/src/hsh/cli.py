"""Command line entry point: ``hsh <command> [options]``.

Every run is described by a RunConfig (built from the flags or read with
``--config``), validated against a versioned JSON schema, and leaves a JSON
report in ``--out`` that embeds the resolved configuration.

Exit codes: 0 success, 2 verification failure, 3 pathology, 4 config error.
"""

import argparse
import csv
import datetime
import io
import json
import math
import os
import sys
import zlib

import jsonschema
import numpy as np

from . import __version__, _kernels
from .dynamics import evolve
from .empirical import gaussian_family, marginal, observable_from_dict
from .errors import (
    AmbiguityError,
    AuditError,
    ConfigError,
    DegenerateSampleError,
    HSHError,
    InvalidInputError,
    OverlapError,
    PartitionError,
    PathologyError,
    SearchExhaustedError,
    UndefinedEndpointError,
)
from .scenarios import (
    FOUR_COLLISIONS,
    Scenario,
    build_partition,
    build_two_sphere,
    free_scenario,
    golden_three_sphere,
    search_collision_sequence,
)

SCHEMA_VERSION = 1
COMMANDS = ("simulate", "verify", "enskog", "search", "partition", "jacobian")

EXIT_OK, EXIT_FAIL, EXIT_PATHOLOGY, EXIT_CONFIG = 0, 2, 3, 4

DEFAULT_TOLERANCES = {
    "verify": 1e-9,
    "compose": 1e-8,
    "jacobian_n1": 1e-5,
    "jacobian_n2": 1e-4,
    "enskog_half": 1e-3,
    "renormalized": 1e-9,
}

BUILTIN_SCENARIOS = ("two-sphere", "two-sphere+spectator", "free", "golden")

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "command", "scenario"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "command": {"enum": list(COMMANDS)},
        "scenario": {
            "oneOf": [
                {"type": "string", "minLength": 1},
                {"type": "object", "required": ["particles", "horizon"]},
                {"type": "object", "required": ["builtin"],
                 "properties": {"builtin": {"enum": list(BUILTIN_SCENARIOS)}, "params": {"type": "object"}}},
            ]
        },
        "j": {"type": "integer", "minimum": 1},
        "n_max": {"type": ["integer", "null"], "minimum": 0},
        "observables": {"type": "array", "items": {"type": "object", "required": ["kind"]}},
        "policy": {"type": "string", "pattern": r"^(none|symmetric(:[^:\s]+)?|time-sep(:[^:\s]+)?)$"},
        "out": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
        "target": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                              "minItems": 2, "maxItems": 2}},
        "budget": {"type": "integer", "minimum": 1},
        "samples": {"type": "integer", "minimum": 1},
        "inject_fault": {"enum": [None, "sign"]},
    },
}


def substream(seed, name):
    """Named child stream of the run seed."""
    return np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])


def _substream_int(seed, name):
    return int(substream(seed, name).generate_state(1)[0])


def validate_config(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("run configuration must be a JSON object")
    if "schema_version" in cfg and cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"schema version {cfg['schema_version']!r} is not supported (expected {SCHEMA_VERSION})")
    try:
        jsonschema.validate(cfg, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid run configuration: {exc.message}") from exc
    unknown = set(cfg.get("tolerances", {})) - set(DEFAULT_TOLERANCES)
    if unknown:
        raise ConfigError(f"unknown tolerance keys {sorted(unknown)}")
    return cfg


def load_scenario(spec):
    if isinstance(spec, dict):
        if "builtin" in spec:
            return _builtin(spec["builtin"], spec.get("params", {}))
        return Scenario.from_dict(spec)
    if spec in BUILTIN_SCENARIOS:
        return _builtin(spec, {})
    try:
        return Scenario.load(spec)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {spec!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario {spec!r} is not valid JSON: {exc}") from exc


def _builtin(name, params):
    if name == "golden":
        return golden_three_sphere()
    if name == "free":
        return free_scenario(**params)
    if name == "two-sphere":
        return build_two_sphere(**{"impact_parameter": 0.3, **params})
    return build_two_sphere(**{"impact_parameter": 0.3, **params, "spectator": True})


def _observables(cfg, scenario, j):
    if cfg.get("observables"):
        phis = [observable_from_dict(d) for d in cfg["observables"]]
        if any(p.order != j for p in phis):
            raise ConfigError(f"observables must have order j={j}")
        return phis
    final, _ = evolve(scenario.config, scenario.horizon)
    atoms = marginal(final, j).points
    picks = [atoms[i % len(atoms)] + 0.05 * (i // len(atoms)) for i in range(5)]
    return gaussian_family(picks, width_x=0.5, width_v=0.5)


def _tolerances(cfg):
    return {**DEFAULT_TOLERANCES, **cfg.get("tolerances", {})}


def _dump(obj):
    return json.dumps(obj, indent=1, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    return str(o)


def _write(out, name, text):
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _report(cfg, scenario, body):
    rep = {
        "config": cfg,
        "version": __version__,
        "backend": _kernels.backend(),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if scenario is not None:
        rep["scenario_hash"] = scenario.digest()
        rep["scenario"] = scenario.to_dict()
    rep.update(body)
    return rep


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg):
    scen = load_scenario(cfg["scenario"])
    final, log = evolve(scen.config, scen.horizon)
    _write(cfg["out"], "trajectory.csv", log.to_csv())
    _write(cfg["out"], "events.json", log.events_json() + "\n")
    body = {"events": len(log.events), "pairs": [[p + 1 for p in e.pair] for e in log.events],
            "final": final.to_dict()}
    return EXIT_OK, _report(cfg, scen, body)


def _inject_sign_fault(ledger):
    """Test mode: flip the sign of the first negative row so the audit must fail."""
    from dataclasses import replace

    for i, r in enumerate(ledger.rows):
        if r.sign < 0:
            ledger.rows[i] = replace(r, sign=1)
            return {"row": r.term()}
    return None


def cmd_verify(cfg):
    from .hierarchy import bbgky_rhs, cancellation_audit, compose_semigroup, lhs_value

    scen = load_scenario(cfg["scenario"]).check()
    j = cfg.get("j", 1)
    n_max = cfg.get("n_max")
    tol = _tolerances(cfg)
    phis = _observables(cfg, scen, j)
    final, _ = evolve(scen.config, scen.horizon)
    lhs_comb = marginal(final, j)
    results, ok = [], True
    audit = None
    fault = None
    for k, phi in enumerate(phis):
        rhs, ledger = bbgky_rhs(scen, j, phi, n_max)
        if k == 0 and cfg.get("inject_fault") == "sign":
            fault = _inject_sign_fault(ledger)
            rhs = ledger.total()
        lhs = lhs_value(scen, j, phi)
        res = abs(rhs - lhs)
        passed = res <= tol["verify"] * max(1.0, abs(lhs))
        ok &= passed
        results.append({"observable": phi.to_dict(), "lhs": lhs, "rhs": rhs, "residual": res, "pass": passed,
                        "subtotals": {str(a): b for a, b in ledger.subtotals().items()},
                        "rows": ledger.count()})
        if k == 0:
            try:
                audit = cancellation_audit(ledger, lhs_comb)
            except AuditError as exc:
                audit = exc.report
                ok = False
    body = {"j": j, "n_max": n_max, "results": results, "audit": audit, "tolerances": tol}
    if fault is not None:
        body["injected_fault"] = fault
    if scen.partition is not None and len(scen.partition) > 2:
        comp = []
        for phi in phis:
            r = compose_semigroup(scen, j, phi)
            comp.append({"residual": r, "pass": r <= tol["compose"]})
            ok &= r <= tol["compose"]
        body["composition"] = comp
    body["pass"] = ok
    return (EXIT_OK if ok else EXIT_FAIL), _report(cfg, scen, body)


def cmd_enskog(cfg):
    from .enskog import (
        RegularizationPolicy,
        ambiguity_report,
        contraction_term,
        divergence_trace,
        free_value,
        renormalized_series,
    )

    scen = load_scenario(cfg["scenario"]).check()
    if scen.N != 2:
        raise ConfigError("the Enskog study runs on two-particle scenarios")
    tol = _tolerances(cfg)
    policy = RegularizationPolicy.parse(cfg.get("policy", "symmetric"))
    n_max = cfg.get("n_max")
    n_max = 2 if n_max is None else n_max
    seed = _substream_int(cfg.get("seed", 0), "mollifier")
    final, _ = evolve(scen.config, scen.horizon)
    phi = _observables(cfg, scen, 1)[0]
    target = free_value(scen, phi)
    body = {"target": target, "policy": policy.to_dict()}
    ok = True
    half = contraction_term(scen, phi, "symmetric", seed=seed).value
    body["half_check"] = {"value": half, "expected": -0.5 * target,
                          "pass": abs(half + 0.5 * target) <= tol["enskog_half"] * abs(0.5 * target)}
    ok &= body["half_check"]["pass"]
    try:
        contraction_term(scen, phi, "none")
        body["none_policy"] = {"error": None}
    except AmbiguityError as exc:
        body["none_policy"] = {"error": "AmbiguityError", "term": exc.term}
    ren = renormalized_series(scen, phi, n_max=max(n_max, 1))
    ren["pass"] = ren["residual"] <= tol["renormalized"] and ren["contractions_admitted"] == 0
    ok &= ren["pass"]
    body["renormalized"] = ren
    body["ambiguity"] = ambiguity_report(scen, phi, n_max, seed=seed)
    status = EXIT_OK
    try:
        trace = divergence_trace(scen, phi, policy, n_max, seed=seed)
        body["divergence"] = trace
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "order_sum", "partial_sum", "absolute", "cesaro"])
        for n in range(len(trace["per_order"])):
            w.writerow([n, repr(trace["per_order"][n]), repr(trace["partial_sums"][n]),
                        repr(trace["absolute"][n]), repr(trace["cesaro"][n])])
        _write(cfg["out"], "partial_sums.csv", buf.getvalue())
    except (AmbiguityError, UndefinedEndpointError) as exc:
        body["divergence"] = {"error": type(exc).__name__, "message": str(exc), "term": exc.term}
        status = EXIT_PATHOLOGY
    body["pass"] = ok
    if status == EXIT_OK and not ok:
        status = EXIT_FAIL
    return status, _report(cfg, scen, body)


def _parse_target(text):
    pairs = []
    for item in text.split(","):
        a, _, b = item.strip().partition("-")
        try:
            pairs.append([int(a), int(b)])
        except ValueError as exc:
            raise ConfigError(f"bad target pair {item!r}; use e.g. 2-3,1-2") from exc
    return pairs


def cmd_search(cfg):
    target = [tuple(p) for p in cfg.get("target", [list(p) for p in FOUR_COLLISIONS])]
    seed = _substream_int(cfg.get("seed", 0), "search")
    try:
        scen = search_collision_sequence(target, seed=seed, budget=cfg.get("budget", 200_000))
    except SearchExhaustedError as exc:
        return EXIT_FAIL, _report(cfg, None, {"found": False, "message": str(exc)})
    _write(cfg["out"], "scenario.json", scen.to_json() + "\n")
    _, log = evolve(scen.config, scen.horizon)
    return EXIT_OK, _report(cfg, scen, {"found": True, "pairs": [[p + 1 for p in e.pair] for e in log.events]})


def cmd_partition(cfg):
    from .scenarios import verify_partition

    scen = load_scenario(cfg["scenario"]).check()
    try:
        bps = build_partition(scen)
    except PartitionError as exc:
        return EXIT_FAIL, _report(cfg, scen, {"partition": None, "message": str(exc)})
    scen = scen.with_partition(bps)
    _write(cfg["out"], "scenario.json", scen.to_json() + "\n")
    return EXIT_OK, _report(cfg, scen, {"partition": list(bps), "intervals": verify_partition(scen, bps)})


def cmd_jacobian(cfg):
    from .flows import ibf_jacobian_residual, random_ibf_point
    from .trees import enumerate_trees

    scen = load_scenario(cfg["scenario"])
    tol = _tolerances(cfg)
    rng = np.random.default_rng(substream(cfg.get("seed", 0), "jacobian"))
    samples = cfg.get("samples", 20)
    t, eps = scen.horizon, scen.epsilon
    out, ok = {}, True
    for n in (1, 2):
        trees = enumerate_trees(1, n)
        vals, skipped = [], 0
        while len(vals) < samples:
            tree = trees[len(vals) % len(trees)]
            roots, nodes = random_ibf_point(tree, t, eps, rng)
            try:
                vals.append(ibf_jacobian_residual(tree, (1,) * n, roots, nodes, t, eps))
            except DegenerateSampleError:
                skipped += 1
        limit = tol[f"jacobian_n{n}"]
        out[str(n)] = {"max_residual": max(vals), "samples": len(vals), "resampled": skipped,
                       "pass": max(vals) <= limit}
        ok &= max(vals) <= limit
    return (EXIT_OK if ok else EXIT_FAIL), _report(cfg, scen, {"jacobian": out, "pass": ok})


HANDLERS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "enskog": cmd_enskog,
    "search": cmd_search,
    "partition": cmd_partition,
    "jacobian": cmd_jacobian,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="hsh", description="Hard-sphere series verification tools.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="RunConfig JSON file; flags given on the command line override it")
    p.add_argument("--scenario", help="scenario JSON path or one of: " + ", ".join(BUILTIN_SCENARIOS))
    p.add_argument("--j", type=int)
    p.add_argument("--n-max", type=int, dest="n_max")
    p.add_argument("--policy")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--tol-override", action="append", default=[], metavar="KEY=VAL")
    p.add_argument("--target", help="collision sequence for search, e.g. 2-3,1-2,2-3,1-2")
    p.add_argument("--budget", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--inject-fault", choices=["sign"], dest="inject_fault", help=argparse.SUPPRESS)
    return p


def config_from_args(args):
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("run configuration must be a JSON object")
        if "schema_version" not in cfg:
            raise ConfigError("config file lacks schema_version")
    cfg.setdefault("schema_version", SCHEMA_VERSION)
    cfg["command"] = args.command
    for key in ("scenario", "j", "n_max", "policy", "seed", "out", "budget", "samples", "inject_fault"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.target:
        cfg["target"] = _parse_target(args.target)
    tols = dict(cfg.get("tolerances", {}))
    for item in args.tol_override:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"tolerance override {item!r} is not KEY=VAL")
        try:
            tols[key.strip()] = float(val)
        except ValueError as exc:
            raise ConfigError(f"tolerance override {item!r} has a non-numeric value") from exc
    if tols:
        cfg["tolerances"] = tols
    cfg.setdefault("scenario", "two-sphere")
    cfg.setdefault("out", "hsh-out")
    cfg.setdefault("seed", 0)
    return validate_config(cfg)


def run(cfg):
    """Execute a validated RunConfig; returns ``(exit_code, report)``."""
    return HANDLERS[cfg["command"]](cfg)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    out = args.out or "hsh-out"
    try:
        cfg = config_from_args(args)
        out = cfg["out"]
        code, report = run(cfg)
    except (ConfigError, InvalidInputError, FileNotFoundError) as exc:
        print(f"hsh: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PathologyError, OverlapError, UndefinedEndpointError, AmbiguityError) as exc:
        rep = {"error": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "report", None) is not None:
            rep["pathology"] = exc.report.to_dict()
        if getattr(exc, "term", None) is not None:
            rep["term"] = exc.term
        _write(out, "report.json", _dump(rep))
        print(f"hsh: pathology: {exc}", file=sys.stderr)
        return EXIT_PATHOLOGY
    except HSHError as exc:
        _write(out, "report.json", _dump({"error": type(exc).__name__, "message": str(exc)}))
        print(f"hsh: {exc}", file=sys.stderr)
        return EXIT_FAIL
    path = _write(out, "report.json", _dump(report))
    verdict = "ok" if code == EXIT_OK else "FAILED"
    print(f"hsh {cfg['command']}: {verdict} ({path})")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
