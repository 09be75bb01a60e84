import math

import numpy as np
import pytest

from irsplan.routing import (
    NegativeCycleError,
    Router,
    best_all_passive,
    best_hybrid,
    brute_force_best_path,
    cell_snrs,
    hop_gains,
    overall_snr,
    shortest_paths,
    weighted_view,
    worst_cell_snr,
)
from irsplan.scenario import scenario_from_dict
from irsplan.snr import (
    DeploymentPlan,
    PathKind,
    all_passive_path_snr,
    direct_snr,
    hybrid_path_snr,
    hybrid_snr_from_weights,
)

from instances import make_scenario, random_routing_instance, scenario_doc


def _chain_scenario():
    # BS -> relay 1 -> cell 2, both hops exactly 10 m via overrides
    doc = scenario_doc(1, 3, 0, (5, 5, 3), {1: (15, 5, 3)}, [(0, 1)], [(1, 2)])
    doc["candidates"][0]["pos"] = [10, 5, 3]
    doc["bs"]["pos"] = [0, 5, 3]
    doc["dmax_overrides"] = [[1, 2, 10.0]]
    return scenario_from_dict(doc)


def test_direct_edge_excluded_in_passive_view():
    sc = make_scenario(1, 1, 0, (5, 5, 3), {}, [], [])
    view = weighted_view(sc, DeploymentPlan.empty())
    assert view.mode == "all_passive"
    assert not shortest_paths(view, 0)[sc.user_vertex(0)].reachable


def test_chain_weights():
    sc = _chain_scenario()
    view = weighted_view(sc, DeploymentPlan({1: 1}, {}))
    u = sc.user_vertex(2)
    assert view.weight(0, 1) == pytest.approx(math.log(10 ** 6.3), rel=1e-12)
    assert view.weight(0, 1) == pytest.approx(14.51, abs=5e-3)
    assert view.weight(1, u) == pytest.approx(math.log(10 ** 6.3 / 1e4), rel=1e-12)
    assert view.weight(1, u) == pytest.approx(5.30, abs=5e-3)
    res = shortest_paths(view, 0)[u]
    assert res.path == (0, 1, u)
    assert res.weight == pytest.approx(19.81, abs=1e-2)
    assert res.weight == pytest.approx(view.weight(0, 1) + view.weight(1, u), abs=1e-9)


def test_chain_all_passive_snr():
    sc = _chain_scenario()
    sol = best_all_passive(sc, DeploymentPlan({1: 1}, {}), 2)
    assert sol.snr_linear == pytest.approx(1e10 * 10 ** -8.6, rel=1e-9)
    assert sol.snr_linear == pytest.approx(25.0, rel=1e-2)
    assert sol.snr_db == pytest.approx(14.0, abs=0.01)
    g = hop_gains(sc, sol.path)
    assert sol.snr_linear == pytest.approx(all_passive_path_snr(sc.radio, g, [1]), rel=1e-9)


def test_diamond_prefers_larger_relay():
    doc = scenario_doc(2, 2, 0, (5, 5, 3), {1: (15, 5, 3), 2: (5, 15, 3)}, [(0, 1), (0, 2)], [(1, 3), (2, 3)])
    doc["dmax_overrides"] = [[1, 3, 10.0], [2, 3, 10.0]]
    sc = scenario_from_dict(doc)
    for big, small in ((1, 2), (2, 1)):
        sol = best_all_passive(sc, DeploymentPlan({big: 5, small: 2}, {}), 3)
        assert sol.path[1] == big


def test_no_hybrid_without_active():
    sc = _chain_scenario()
    assert best_hybrid(sc, DeploymentPlan({1: 1}, {}), 2) is None


def test_single_airs_matches_closed_form():
    sc = _chain_scenario()
    plan = DeploymentPlan({}, {1: 3})
    sol = best_hybrid(sc, plan, 2)
    assert sol.kind is PathKind.HYBRID and sol.airs_vertex == 1
    g = hop_gains(sc, sol.path)
    assert sol.snr_linear == pytest.approx(hybrid_path_snr(sc.radio, g, [3], 1), rel=1e-9)


def test_no_deployment_and_no_direct_is_unreachable():
    sc = _chain_scenario()
    sol = overall_snr(sc, DeploymentPlan.empty(), 2)
    assert sol.kind is PathKind.UNREACHABLE and sol.snr_linear is None
    assert best_all_passive(sc, DeploymentPlan.empty(), 2) is None


def test_direct_only_cell():
    sc = _chain_scenario()
    sol = overall_snr(sc, DeploymentPlan.empty(), 0)
    assert sol.kind is PathKind.DIRECT
    assert sol.snr_linear == direct_snr(sc, 0)


def test_brute_force_single_edge_and_parallel_relays():
    sc = make_scenario(1, 1, 0, (5, 5, 3), {}, [], [])
    assert brute_force_best_path(sc, DeploymentPlan.empty(), 0).path == (0, 1)
    doc = scenario_doc(2, 2, 0, (5, 5, 3), {1: (15, 5, 3), 2: (5, 15, 3)}, [(0, 1), (0, 2)], [(1, 3), (2, 3)])
    sc = scenario_from_dict(doc)
    best = brute_force_best_path(sc, DeploymentPlan({1: 1, 2: 4}, {}), 3)
    assert best.path[1] == 2


def test_brute_force_vertex_guard():
    doc = scenario_doc(4, 4, 0, (5, 5, 3), {c: ((c % 4) * 10 + 5, (c // 4) * 10 + 5, 3) for c in range(1, 16)},
                       [], [])
    sc = scenario_from_dict(doc)
    with pytest.raises(ValueError, match="vertices"):
        brute_force_best_path(sc, DeploymentPlan.empty(), 0)


def test_negative_cycle_reported():
    # two large passive surfaces 2 m apart with mutual LoS amplify each other
    doc = scenario_doc(1, 3, 0, (5, 5, 3), {1: (19, 5, 3), 2: (21, 5, 3)}, [(0, 1), (1, 2)], [(2, 2)])
    sc = scenario_from_dict(doc)
    with pytest.raises(NegativeCycleError):
        overall_snr(sc, DeploymentPlan({1: 9, 2: 9}, {}), 2)


def test_random_instances_match_brute_force():
    rng = np.random.default_rng(21)
    for _ in range(150):
        sc, plan = random_routing_instance(rng)
        assert len(sc.los_graph.vertices) <= 8
        for j in range(sc.num_cells):
            fast, slow = overall_snr(sc, plan, j), brute_force_best_path(sc, plan, j)
            assert fast.kind is slow.kind
            if slow.snr_linear is None:
                assert fast.snr_linear is None
            else:
                assert fast.snr_linear == pytest.approx(slow.snr_linear, rel=1e-9)


def test_weight_snr_duality_and_subpath_composition():
    rng = np.random.default_rng(8)
    checked = 0
    while checked < 60:
        sc, plan = random_routing_instance(rng)
        router = Router(sc, plan)
        for j in range(sc.num_cells):
            pas = router.passive_route(j)
            if pas is not None:
                g = hop_gains(sc, pas.path)
                tiles = [plan.tiles[v] for v in pas.path[1:-1]]
                assert sc.radio.c0 * math.exp(-pas.lam) == pytest.approx(all_passive_path_snr(sc.radio, g, tiles),
                                                                         rel=1e-9)
                checked += 1
            hyb = router.hybrid_route(j)
            if hyb is not None:
                snr = hybrid_snr_from_weights(hyb.lam_to_airs, hyb.lam_from_airs, plan.active[hyb.airs], sc.radio)
                assert snr == pytest.approx(hyb.snr, rel=1e-9)
                path = hyb.path
                if len(set(path)) == len(path):
                    g = hop_gains(sc, path)
                    tiles = [plan.tiles[v] for v in path[1:-1]]
                    assert hybrid_path_snr(sc.radio, g, tiles, path.index(hyb.airs)) == pytest.approx(hyb.snr,
                                                                                                   rel=1e-9)


def test_adding_a_passive_irs_never_hurts():
    rng = np.random.default_rng(13)
    done = 0
    while done < 60:
        sc, plan = random_routing_instance(rng)
        free = sorted(sc.candidate_cells - set(plan.deployed))
        if not free:
            continue
        bigger = DeploymentPlan({**plan.passive, free[0]: int(rng.integers(1, 10))}, plan.active)
        try:
            after = Router(sc, bigger).all_cells()
        except NegativeCycleError:
            continue
        for old, new in zip(Router(sc, plan).all_cells(), after):
            if old.snr_linear is not None:
                assert new.snr_linear >= old.snr_linear * (1 - 1e-12)
        done += 1


def test_passive_argmax_independent_of_bs_power():
    rng = np.random.default_rng(17)
    for _ in range(40):
        sc, plan = random_routing_instance(rng)
        doc_loud = scenario_doc(2, 2, 0, sc.positions[0], {c: sc.positions[c] for c in sc.candidate_cells},
                                [sorted(p) for p in sc.los_node_pairs], sorted(sc.los_user_pairs),
                                cell_size=20.0, radio={"p0_dbm": 40.0})
        loud = scenario_from_dict(doc_loud)
        for j in range(sc.num_cells):
            a, b = best_all_passive(sc, plan, j), best_all_passive(loud, plan, j)
            assert (a is None) == (b is None)
            if a is not None:
                assert a.path == b.path
                assert b.snr_linear == pytest.approx(10 * a.snr_linear, rel=1e-9)


def test_distance_only_snrs_match_router():
    rng = np.random.default_rng(29)
    for _ in range(300):
        sc, plan = random_routing_instance(rng)
        fast = cell_snrs(sc, plan)
        for j, sol in enumerate(Router(sc, plan).all_cells()):
            if sol.snr_linear is None:
                assert fast[j] == 0
            else:
                assert fast[j] == pytest.approx(sol.snr_linear, rel=1e-12)
        worst = worst_cell_snr(sc, plan)
        assert (worst is None) == (fast.min() == 0)


def test_distance_only_negative_cycle():
    doc = scenario_doc(1, 3, 0, (5, 5, 3), {1: (19, 5, 3), 2: (21, 5, 3)}, [(0, 1), (1, 2)], [(2, 2)])
    with pytest.raises(NegativeCycleError):
        cell_snrs(scenario_from_dict(doc), DeploymentPlan({1: 9, 2: 9}, {}))
