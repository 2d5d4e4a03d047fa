import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsh.core import scatter
from hsh.dynamics import evolve, evolve_backward
from hsh.errors import DegenerateSampleError, NoPreimageError
from hsh.flows import (
    ebf,
    ebf_invert,
    ibf,
    ibf_jacobian_residual,
    iff_branches,
    node_variables_from_log,
    random_ibf_point,
    tangent_frame,
)
from hsh.trees import NodeVariables, Tree, enumerate_trees

# endpoints of the two (1,2)/(+,+) branches on the golden scenario, frozen from
# a direct simulation of its initial data (the real one is z_1(t))
GOLDEN_REAL = [0.6614143075429497, 1.1199069230028533, 0.0, -0.421525477454908, 0.2952029611544805, 0.0]
GOLDEN_VIRTUAL = [0.44909829248409583, -0.7085565147567316, 0.0, -0.6417093066237152, -0.5053923404349874, 0.0]


def flat(cfg):
    return np.concatenate([cfg.x, cfg.v], axis=1).reshape(-1)


def signed_point(tree, t, eps, rng):
    """Random clean ibf input together with the sign vector its kernel factors select."""
    roots, nodes = random_ibf_point(tree, t, eps, rng)
    res = ibf(tree, (1,) * tree.n, roots, nodes, t, eps)
    return roots, nodes, tuple(int(np.sign(b)) for b in res.kernel_factors)


def test_ibf_without_creations_is_backward_flow(two_sphere):
    final, _ = evolve(two_sphere.config, two_sphere.horizon)
    res = ibf(Tree(2), (), flat(final), NodeVariables([], np.zeros((0, 3)), np.zeros((0, 3))),
              two_sphere.horizon, 1.0)
    back, _ = evolve_backward(final, two_sphere.horizon)
    assert np.allclose(res.terminal, flat(back), atol=1e-12)
    assert len(res.recollisions) == 1


def test_single_negative_creation_is_free():
    root = np.array([0.0, 0, 0, 1, 0, 0])
    t, t1 = 2.0, 1.2
    om = np.array([0.0, 1, 0])
    vc = np.array([0.0, -1, 0])  # B = om . (vc - v1) = -1
    nodes = NodeVariables([t1], [om], [vc])
    res = ibf(Tree(1, (1,)), (-1,), root, nodes, t, 1.0)
    assert res.kernel_factors == [-1.0] and res.sign_consistent and not res.recollisions
    z = res.terminal.reshape(2, 6)
    assert np.allclose(z[0], [-2, 0, 0, 1, 0, 0])
    x1_at_t1 = root[:3] - root[3:] * (t - t1)
    assert np.allclose(z[1, :3], x1_at_t1 + om - vc * t1)
    assert np.allclose(z[1, 3:], vc)


def test_golden_backward_picture(golden):
    """Nodes read off the forward log rebuild the initial data with two recollisions."""
    t = golden.horizon
    final, log = evolve(golden.config, t)
    tree = Tree(1, (1, 2))
    # creation of slot 1 from slot 0 at the last event, slot 2 from slot 1 at the third
    nodes = node_variables_from_log(log.events, t, [(3, 1, 0), (2, 2, 1)])
    res = ibf(tree, (1, 1), flat(final)[:6], nodes, t, 1.0)
    assert res.valid
    assert len(res.recollisions) == 2
    assert np.allclose(res.terminal, flat(golden.config), atol=1e-8)


def test_ebf_matches_ibf_without_recollisions():
    rng = np.random.default_rng(3)
    checked = 0
    for tree in enumerate_trees(1, 2) + enumerate_trees(2, 1):
        for _ in range(5):
            roots, nodes, signs = signed_point(tree, 1.0, 1.0, rng)
            a = ibf(tree, signs, roots, nodes, 1.0, 1.0)
            if a.recollisions:
                continue
            b = ebf(tree, signs, roots, nodes, 1.0, 1.0)
            assert np.allclose(a.terminal, b.terminal, atol=1e-12)
            checked += 1
    assert checked >= 10


def test_overlapping_creation():
    roots = np.array([0.0, 0, 0, 0, 0, 0, 1.5, 0, 0, 0, 0, 0])
    nodes = NodeVariables([0.5], [[1.0, 0, 0]], [[0.0, 1, 0]])
    a = ibf(Tree(2, (1,)), (1,), roots, nodes, 1.0, 1.0)
    assert not a.constraint_satisfied and a.terminal is None
    b = ebf(Tree(2, (1,)), (1,), roots, nodes, 1.0, 1.0)
    assert b.terminal is not None
    z = b.terminal.reshape(3, 6)
    assert np.linalg.norm(z[2, :3] - z[1, :3]) < 1.0


def test_iff_two_sphere_positive(two_sphere):
    final, _ = evolve(two_sphere.config, two_sphere.horizon)
    br = iff_branches(Tree(1, (1,)), (1,), flat(two_sphere.config), two_sphere.horizon, 1.0)
    assert len(br) == 1 and br[0].path_string() == "C+"
    assert np.allclose(br[0].endpoint, flat(final)[:6], atol=1e-12)


def test_iff_two_sphere_negative(two_sphere):
    cfg, t = two_sphere.config, two_sphere.horizon
    br = iff_branches(Tree(1, (1,)), (-1,), flat(cfg), t, 1.0)
    assert len(br) == 1 and br[0].path_string() == "C-"
    assert np.allclose(br[0].endpoint, np.concatenate([cfg.x[0] + cfg.v[0] * t, cfg.v[0]]), atol=1e-12)


def test_iff_golden_non_invertible(golden):
    br = iff_branches(Tree(1, (1, 2)), (1, 1), flat(golden.config), golden.horizon, 1.0)
    assert len(br) == 2
    paths = {b.path_string(): b.endpoint for b in br}
    assert set(paths) == {"C+,C+", "R,C+,C+"}
    assert np.allclose(paths["R,C+,C+"], GOLDEN_REAL, atol=1e-10)
    assert np.allclose(paths["C+,C+"], GOLDEN_VIRTUAL, atol=1e-10)
    assert np.max(np.abs(paths["C+,C+"] - paths["R,C+,C+"])) > 1e-6
    assert all(b.choice_path.count("C+") == 2 for b in br)


def test_iff_outside_image_is_empty():
    z = np.array([0.0, 0, 0, -1, 0, 0, 3, 0, 0, 1, 0, 0])
    assert iff_branches(Tree(1, (1,)), (1,), z, 2.0, 1.0) == []


def test_tangent_frame_orthonormal():
    rng = np.random.default_rng(0)
    for om in rng.normal(size=(20, 3)):
        om /= np.linalg.norm(om)
        e1, e2 = tangent_frame(om)
        M = np.array([om, e1, e2])
        assert np.allclose(M @ M.T, np.eye(3), atol=1e-14)


def test_jacobian_without_creations():
    rng = np.random.default_rng(1)
    roots = np.concatenate([[0.0, 0, 0], rng.normal(size=3), [3.0, 0.5, 0], rng.normal(size=3)])
    empty = NodeVariables([], np.zeros((0, 3)), np.zeros((0, 3)))
    assert ibf_jacobian_residual(Tree(2), (), roots, empty, 1.0, 1.0) <= 1e-5


@pytest.mark.parametrize("n,tol", [(1, 1e-5), (2, 1e-4)])
def test_jacobian_identity(n, tol):
    rng = np.random.default_rng(10 + n)
    done = 0
    while done < 20:
        tree = enumerate_trees(1, n)[done % n]
        roots, nodes, signs = signed_point(tree, 1.0, 1.0, rng)
        try:
            r = ibf_jacobian_residual(tree, signs, roots, nodes, 1.0, 1.0)
        except DegenerateSampleError:
            continue
        assert r <= tol
        done += 1


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.sampled_from([Tree(1, ()), Tree(1, (1,)), Tree(1, (1, 1)), Tree(1, (1, 2)),
                                                    Tree(2, (1,)), Tree(2, (2, 3))]))
def test_ebf_round_trip(seed, tree):
    rng = np.random.default_rng(seed)
    n, t = tree.n, 1.5
    roots = rng.normal(0, 2, 6 * tree.j)
    times = -np.sort(-rng.uniform(0.05, 1.45, n))
    om = rng.normal(size=(n, 3))
    om /= np.linalg.norm(om, axis=1, keepdims=True)
    nodes = NodeVariables(times, om, rng.normal(size=(n, 3)))
    first = ebf(tree, (1,) * n, roots, nodes, t, 0.8)
    signs = tuple(int(np.sign(b)) for b in first.kernel_factors)
    res = ebf(tree, signs, roots, nodes, t, 0.8)
    inv_nodes, inv_roots = ebf_invert(tree, signs, res.terminal, t, 0.8)
    assert np.allclose(inv_roots, roots, atol=1e-9)
    assert np.allclose(inv_nodes.times, nodes.times, atol=1e-9)
    again = ebf(tree, signs, inv_roots, inv_nodes, t, 0.8)
    assert np.max(np.abs(again.terminal - res.terminal)) <= 1e-9


def test_ebf_invert_without_creations():
    z = np.array([1.0, 2, 3, 0.5, 0, -1])
    _, roots = ebf_invert(Tree(1), (), z, 2.0, 1.0)
    assert np.allclose(roots, [2, 2, 1, 0.5, 0, -1])


def test_ebf_invert_no_preimage():
    z = np.array([0.0, 0, 0, -1, 0, 0, 3, 0, 0, 1, 0, 0])
    with pytest.raises(NoPreimageError):
        ebf_invert(Tree(1, (1,)), (1,), z, 2.0, 1.0)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.sampled_from([Tree(1, (1,)), Tree(1, (1, 1)), Tree(1, (1, 2)), Tree(2, (1,))]))
def test_ibf_iff_consistency(seed, tree):
    rng = np.random.default_rng(seed)
    roots, nodes, signs = signed_point(tree, 1.0, 1.0, rng)
    res = ibf(tree, signs, roots, nodes, 1.0, 1.0)
    br = iff_branches(tree, signs, res.terminal, 1.0, 1.0)
    hits = [b for b in br if np.max(np.abs(b.endpoint - roots)) <= 1e-8]
    assert hits
    assert any(np.allclose(b.creation_times, nodes.times, atol=1e-9, rtol=0) for b in hits)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.sampled_from([Tree(1, (1, 2)), Tree(2, (1, 3)), Tree(1, (1, 1, 2))]))
def test_particle_count_and_creation_geometry(seed, tree):
    rng = np.random.default_rng(seed)
    roots, nodes, signs = signed_point(tree, 1.0, 0.7, rng)
    res = ibf(tree, signs, roots, nodes, 1.0, 0.7)
    for r, (_, _, x, _) in enumerate(res.segments):
        assert len(x) == tree.j + r
    for r, k in enumerate(tree.progenitors):
        x = res.segments[r + 1][2]
        assert abs(np.linalg.norm(x[-1] - x[k - 1]) - 0.7) <= 1e-14


def test_positive_creation_scatters_backward():
    root = np.array([0.0, 0, 0, 0, 0, 0])
    om = np.array([1.0, 0, 0])
    vc = np.array([1.0, 0, 0])  # B = +1: pre-collisional pair in backward time
    res = ibf(Tree(1, (1,)), (1,), root, NodeVariables([0.5], [om], [vc]), 1.0, 1.0)
    z = res.terminal.reshape(2, 6)
    a, b = scatter(np.zeros(3), vc, om)
    assert np.allclose(z[0, 3:], a) and np.allclose(z[1, 3:], b)


def test_iff_records_pruned_paths(golden):
    pruned = []
    br = iff_branches(Tree(1, (1, 2)), (1, 1), flat(golden.config), golden.horizon, 1.0, pruned=pruned)
    assert len(br) == 2
    assert all(p["reason"] == "awaited contact absent before t" for p in pruned)
    z = np.array([0.0, 0, 0, -1, 0, 0, 3, 0, 0, 1, 0, 0])
    miss = []
    assert iff_branches(Tree(1, (1,)), (1,), z, 2.0, 1.0, pruned=miss) == []
    assert miss == [{"path": "", "awaiting": [2, 1], "reason": "awaited contact absent before t"}]
