import json

import numpy as np
import pytest

from hsh.dynamics import evolve
from hsh.empirical import constant, gaussian, integrate, empirical_measure
from hsh.enskog import (
    GaussianDensity,
    RegularizationPolicy,
    ambiguity_report,
    configuration_from_pair,
    contraction_pattern,
    contraction_term,
    divergence_trace,
    ebf_factorization_check,
    enskog_series,
    enskog_term,
    free_value,
    renormalized_series,
    singular_solution_demo,
)
from hsh.errors import AmbiguityError, InvalidDemoError, InvalidInputError, UndefinedEndpointError
from hsh.hierarchy import bbgky_rhs
from hsh.scenarios import free_scenario
from hsh.trees import SignVector, Tree


def at_endpoint(scen, width=0.1, slot=0):
    final, _ = evolve(scen.config, scen.horizon)
    return gaussian(np.concatenate([final.x[slot], final.v[slot]]), width, width)


@pytest.fixture(scope="module")
def trace(two_sphere):
    return divergence_trace(two_sphere, at_endpoint(two_sphere), "symmetric:1e-4", 4)


@pytest.mark.parametrize("text,kind,param", [
    ("none", "none", None), ("symmetric", "symmetric", 1e-4), ("symmetric:1e-3", "symmetric", 1e-3),
    ("time-sep:0.01", "time-sep", 0.01), ("time-sep", "time-sep", 1e-3),
])
def test_policy_parse(text, kind, param):
    p = RegularizationPolicy.parse(text)
    assert (p.kind, p.param) == (kind, param)
    assert RegularizationPolicy.parse(str(p)) == p


@pytest.mark.parametrize("text", ["smooth", "symmetric:-1", "time-sep:0", "symmetric:abc"])
def test_policy_parse_errors(text):
    with pytest.raises(InvalidInputError):
        RegularizationPolicy.parse(text)


def test_policy_report_records_mollifier():
    d = RegularizationPolicy.parse("symmetric:1e-4").to_dict()
    assert "gaussian" in d["mollifier"] and d["widths"] == [1e-4, 5e-5, 2.5e-5]


def test_contraction_pattern():
    assert contraction_pattern((0, 1, 1)) == ((2, 3),)
    assert contraction_pattern((0, 1, 2)) == ()
    assert contraction_pattern((1, 1, 1)) == ((1, 2, 3),)


@pytest.mark.parametrize("sign", [1, -1])
def test_first_order_matches_bbgky(two_sphere, sign):
    phi = at_endpoint(two_sphere, 0.5)
    tv = enskog_term(Tree(1, (1,)), (sign,), two_sphere, phi, "none")
    _, ledger = bbgky_rhs(two_sphere, 1, phi)
    rows = [r for r in ledger.rows if r.n == 1 and r.signs == SignVector((sign,))]
    assert tv.value == pytest.approx(sum(r.sign * float(r.weight) * r.value for r in rows), abs=1e-14)
    assert not tv.boundary_flag and tv.counts["admitted"] == 2


def test_contraction_half(two_sphere):
    phi = at_endpoint(two_sphere)
    mu = free_value(two_sphere, phi)
    tv = contraction_term(two_sphere, phi, "symmetric:1e-4")
    assert tv.boundary_flag and tv.pattern
    assert abs(tv.value + 0.5 * mu) <= 1e-3 * abs(0.5 * mu)


def test_contraction_refused_without_policy(two_sphere):
    with pytest.raises(AmbiguityError) as exc:
        contraction_term(two_sphere, at_endpoint(two_sphere), "none")
    assert exc.value.term["tree"] == "j=1;k=1,1;s=+-"
    assert exc.value.term["pattern"] == [[2, 3]]


def test_smearing_is_reproducible(two_sphere):
    phi = at_endpoint(two_sphere)
    a = contraction_term(two_sphere, phi, "symmetric:1e-4", seed=4).value
    b = contraction_term(two_sphere, phi, "symmetric:1e-4", seed=4).value
    assert a == b


def test_undefined_endpoint(two_sphere):
    with pytest.raises(UndefinedEndpointError) as exc:
        enskog_term(Tree(1, (1, 2)), (1, 1), two_sphere, constant(1), "symmetric", assignments=[(0, 1, 0)])
    assert exc.value.term["assignment"] == [1, 2, 1]
    tv = enskog_term(Tree(1, (1, 2)), (1, 1), two_sphere, constant(1), "symmetric", on_undefined="exclude")
    assert tv.counts["undefined"] == 2 and tv.value == 0.0


def test_policy_difference_is_half(two_sphere):
    phi = at_endpoint(two_sphere)
    mu = free_value(two_sphere, phi)
    sym = enskog_series(two_sphere, phi, "symmetric:1e-4", 2).value
    sep = enskog_series(two_sphere, phi, "time-sep:1e-3", 2).value
    assert abs(abs(sym - sep) - 0.5 * mu) <= 1e-3 * 0.5 * mu


def test_policy_difference_general_observable(two_sphere):
    # for observables that also see the free-transport endpoints the gap is
    # half the difference between the interacting and free empirical measures
    phi = gaussian(np.zeros(6), 3.0, 3.0)
    cfg, t = two_sphere.config, two_sphere.horizon
    free = empirical_measure(cfg.with_arrays(cfg.x + cfg.v * t, cfg.v))
    sym = enskog_series(two_sphere, phi, "symmetric:1e-4", 2).value
    sep = enskog_series(two_sphere, phi, "time-sep:1e-3", 2).value
    expect = 0.5 * (free_value(two_sphere, phi) - integrate(free, phi))
    assert sep - sym == pytest.approx(expect, rel=1e-3)


def test_renormalized_series(two_sphere):
    phi = at_endpoint(two_sphere, 0.5)
    r = renormalized_series(two_sphere, phi, 1e-3, 3)
    assert r["residual"] <= 1e-9 and r["contractions_admitted"] == 0
    assert r["stable"] and not r["degenerate"]
    assert all(abs(v) == 0.0 for v in r["per_order"][2:])


def test_renormalized_free_flow():
    s = free_scenario()
    r = renormalized_series(s, constant(1), 1e-3, 2)
    assert r["per_order"][1:] == [0.0, 0.0] and r["residual"] == 0.0


def test_renormalized_degenerate_eta(two_sphere):
    r = renormalized_series(two_sphere, at_endpoint(two_sphere, 0.5), eta=2.0, n_max=1)
    assert r["degenerate"]


def test_series_agrees_with_bbgky_term_by_term(two_sphere):
    phi = at_endpoint(two_sphere, 0.5)
    res = enskog_series(two_sphere, phi, "time-sep:1e-3", 1)
    _, ledger = bbgky_rhs(two_sphere, 1, phi)
    sub = ledger.subtotals()
    assert res.per_order[0] == pytest.approx(sub[0], abs=1e-14)
    assert res.per_order[1] == pytest.approx(sub[1], abs=1e-14)


def test_divergence_alternates(trace):
    assert trace["alternates"]
    assert trace["not_absolutely_convergent"]
    assert np.sign(trace["per_order"][1:]).tolist() == [1, -1, 1, -1]
    star = trace["star_family"]
    assert star[1] == pytest.approx(0.5, abs=1e-9)
    assert star[2] == pytest.approx(-0.25, abs=1e-6)


def test_divergence_free_term_only(two_sphere):
    tr = divergence_trace(two_sphere, at_endpoint(two_sphere), "symmetric", 0)
    assert len(tr["per_order"]) == 1 and tr["partial_sums"] == tr["per_order"]


def test_cesaro_mean_at_order_four(trace):
    assert trace["cesaro_gap"] <= 1e-2


def test_ambiguity_report(two_sphere):
    rep = ambiguity_report(two_sphere, at_endpoint(two_sphere), 2)
    pol = rep["policies"]
    assert pol["none"]["error"] == "AmbiguityError"
    assert pol["symmetric:0.0001"]["counts"]["boundary"] > 0
    assert pol["time-sep:0.001"]["counts"]["contractions_admitted"] == 0
    json.dumps(rep)


def test_singular_demo():
    cfg = configuration_from_pair([0, 0, 0], [1, 0, 0], [0.5, 0, 0])
    comb, rep = singular_solution_demo(cfg, 1.0, constant(1))
    assert rep["all_vanish"] and set(rep["memberships"]) == {1, 2, 3}
    assert np.array_equal(comb.points, [[1, 0, 0, 1, 0, 0], [0.5, 0, 0, 0, 0, 0]])
    assert rep["value"] == 1.0


def test_singular_demo_trivial_cases():
    cfg = configuration_from_pair([0, 0, 0], [1, 0, 0], [0.5, 0, 0])
    comb, _ = singular_solution_demo(cfg, 0.0)
    assert np.array_equal(comb.points, np.concatenate([cfg.x, cfg.v], axis=1))
    still = configuration_from_pair([0, 0, 0], [0, 0, 0], [0.5, 0, 0])
    comb, rep = singular_solution_demo(still, 2.0)
    assert np.array_equal(comb.points[:, :3], still.x) and rep["all_vanish"]


@pytest.mark.parametrize("args", [
    ([0, 0, 0], [1, 0, 0], [1.5, 0, 0]),
])
def test_singular_demo_rejects(args):
    with pytest.raises(InvalidDemoError):
        singular_solution_demo(configuration_from_pair(*args), 1.0)
    moving = configuration_from_pair([0, 0, 0], [1, 0, 0], [0.5, 0, 0]).with_arrays(
        np.array([[0, 0, 0], [0.5, 0, 0]], float), np.array([[1, 0, 0], [0, 1, 0]], float))
    with pytest.raises(InvalidDemoError):
        singular_solution_demo(moving, 1.0)


def test_factorization_trivial_cases():
    r0 = ebf_factorization_check(t=0.0, n_max=2, mc_samples=1000, probes=3)
    assert r0["max_residual"] == 0.0
    r1 = ebf_factorization_check(t=0.5, n_max=0, mc_samples=1000, probes=3)
    assert r1["max_residual"] <= 1e-12


def test_factorization_small_run():
    r = ebf_factorization_check(t=0.5, n_max=2, mc_samples=20_000, probes=3, seed=1)
    assert r["all_ok"]


def test_factorization_variance_blowup():
    from hsh.errors import VarianceError

    with pytest.raises(VarianceError):
        ebf_factorization_check(t=3.0, n_max=2, mc_samples=50, probes=2, lam_inv=50.0)


def test_gaussian_density_normalized():
    g = GaussianDensity(1.0, 1.0)
    rng = np.random.default_rng(0)
    z = rng.uniform(-6, 6, (400_000, 6))
    assert np.mean(g(z)) * 12.0**6 == pytest.approx(1.0, rel=0.05)
