import cmath
import math

import numpy as np
import pytest

from irsplan.channel import (
    ArrayGeometry,
    build_channels,
    explicit_path_snr,
    steering_vector,
    upa_response,
)
from irsplan.routing import hop_gains
from irsplan.snr import DeploymentPlan, all_passive_path_snr, direct_snr, hybrid_path_snr, path_gain_sq

from instances import make_scenario, random_chain


def test_steering_zero_frequency():
    np.testing.assert_array_equal(steering_vector(0.0, 4), np.ones(4))


def test_steering_unit_frequency():
    np.testing.assert_allclose(steering_vector(1.0, 2), [1, -1], atol=1e-15)


def test_steering_termwise():
    v = steering_vector(0.37, 8)
    expect = [cmath.exp(-1j * math.pi * k * 0.37) for k in range(8)]
    np.testing.assert_allclose(v, expect, rtol=0, atol=1e-15)


def test_steering_rejects_empty():
    with pytest.raises(ValueError):
        steering_vector(0.1, 0)


def test_upa_broadside_is_all_ones():
    v = upa_response(math.pi / 2, math.pi / 2, ArrayGeometry("upa", 3, 2), 0.5)
    np.testing.assert_allclose(v, np.ones(6), atol=1e-15)


def test_upa_two_by_two_expansion():
    az, el, s = 0.7, 1.1, 0.5
    fx = 2 * s * math.cos(az) * math.sin(el)
    fz = 2 * s * math.cos(el)
    a, b = cmath.exp(-1j * math.pi * fx), cmath.exp(-1j * math.pi * fz)
    expect = [1, b, a, a * b]
    np.testing.assert_allclose(upa_response(az, el, ArrayGeometry("upa", 2, 2), s), expect, atol=1e-15)


def test_upa_unit_modulus():
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = upa_response(rng.uniform(-math.pi, math.pi), rng.uniform(0, math.pi),
                         ArrayGeometry("upa", int(rng.integers(1, 30)), int(rng.integers(1, 12))), 0.5)
        np.testing.assert_allclose(np.abs(v), 1.0, atol=1e-12)


def _relay_scenario(m=10, n=10):
    return make_scenario(1, 3, 0, (5, 5, 6), {1: (15, 5, 4)}, [(0, 1)], [(1, 2), (0, 2)],
                         radio={"m": m, "n": n})


def test_scalar_hop_magnitude():
    sc = _relay_scenario(m=1, n=1)
    h = build_channels(sc, DeploymentPlan({1: 1}, {}), (0, 1, sc.user_vertex(2)))
    assert h[0].shape == (1, 1)
    d = math.dist(sc.positions[0], sc.positions[1])
    assert abs(h[0][0, 0]) == pytest.approx(math.sqrt(path_gain_sq(d, sc.radio)), rel=1e-12)


def test_hops_are_rank_one():
    sc = _relay_scenario()
    path = (0, 1, sc.user_vertex(2))
    h = build_channels(sc, DeploymentPlan({1: 3}, {}), path)
    for hop, edge in zip(h, zip(path, path[1:])):
        s = np.linalg.svd(hop, compute_uv=False)
        kappa = math.sqrt(path_gain_sq(sc.los_graph.edges[edge], sc.radio))
        assert s[0] == pytest.approx(kappa * math.sqrt(hop.shape[0] * hop.shape[1]), rel=1e-10)
        assert np.all(s[1:] <= 1e-10 * s[0])


def test_bs_to_user_per_antenna_magnitude():
    sc = _relay_scenario()
    (h,) = build_channels(sc, DeploymentPlan.empty(), (0, sc.user_vertex(2)))
    kappa = math.sqrt(path_gain_sq(sc.los_graph.edges[(0, sc.user_vertex(2))], sc.radio))
    np.testing.assert_allclose(np.abs(h), kappa, rtol=1e-12)


def test_direct_path_snr():
    sc = _relay_scenario()
    u = sc.user_vertex(2)
    assert explicit_path_snr(sc, DeploymentPlan.empty(), (0, u)) == pytest.approx(direct_snr(sc, 2), rel=1e-9)


def test_two_hop_passive_and_hybrid_agree_with_closed_forms():
    sc = _relay_scenario()
    path = (0, 1, sc.user_vertex(2))
    g = hop_gains(sc, path)
    passive = explicit_path_snr(sc, DeploymentPlan({1: 4}, {}), path)
    assert passive == pytest.approx(all_passive_path_snr(sc.radio, g, [4]), rel=1e-6)
    hybrid = explicit_path_snr(sc, DeploymentPlan({}, {1: 4}), path)
    assert hybrid == pytest.approx(hybrid_path_snr(sc.radio, g, [4], 1), rel=1e-6)


def test_random_chains_agree_with_closed_forms():
    rng = np.random.default_rng(11)
    for _ in range(40):
        ch = random_chain(rng)
        sc, path = ch.scenario, ch.path
        g = hop_gains(sc, path)
        tiles = [ch.tiles[v] for v in path[1:-1]]
        expect = all_passive_path_snr(sc.radio, g, tiles)
        assert explicit_path_snr(sc, ch.passive_plan(), path) == pytest.approx(expect, rel=1e-6)
        expect = hybrid_path_snr(sc.radio, g, tiles, path.index(ch.airs))
        assert explicit_path_snr(sc, ch.hybrid_plan(), path) == pytest.approx(expect, rel=1e-6)


def test_aligned_phases_beat_random_phases():
    rng = np.random.default_rng(5)
    ch = random_chain(rng, hops=3, max_tiles=2)
    sc, path = ch.scenario, ch.path
    plan = ch.passive_plan()
    aligned = explicit_path_snr(sc, plan, path)
    n = sc.radio.elements_per_tile_dim
    for _ in range(1000):
        phases = {v: rng.uniform(0, 2 * math.pi, size=plan.tiles[v] * n * n) for v in path[1:-1]}
        assert explicit_path_snr(sc, plan, path, phases=phases) <= aligned


def test_rejects_two_active_irs():
    rng = np.random.default_rng(2)
    ch = random_chain(rng, hops=3)
    with pytest.raises(ValueError, match="active"):
        explicit_path_snr(ch.scenario, DeploymentPlan({}, ch.tiles), ch.path)


def test_rejects_missing_edge_and_empty_path():
    sc = _relay_scenario()
    with pytest.raises(ValueError):
        explicit_path_snr(sc, DeploymentPlan.empty(), (0,))
    with pytest.raises(ValueError, match="no LoS edge"):
        explicit_path_snr(sc, DeploymentPlan({1: 1}, {}), (0, 1, sc.user_vertex(0)))


def test_rejects_zero_tile_intermediate():
    sc = _relay_scenario()
    with pytest.raises(ValueError, match="no tiles"):
        build_channels(sc, DeploymentPlan.empty(), (0, 1, sc.user_vertex(2)))
