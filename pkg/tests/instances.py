"""Random instance generators shared by the test modules.

Every generator takes a ``numpy.random.Generator`` so campaigns are reproducible
from a single seed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from irsplan.routing import NegativeCycleError, all_cell_snrs
from irsplan.scenario import BS_NODE, Scenario, scenario_from_dict
from irsplan.snr import DeploymentPlan
from irsplan.units import to_db, to_linear

RADIO = {
    "p0_dbm": 30.0, "pa_dbm": -5.0, "noise_dbm": -60.0, "m": 10, "n": 10,
    "beta0_db": -43.0, "alpha": 2.0, "wavelength_m": 0.087,
}
COSTS = {"cp0": 5, "ca0": 12, "cp": 1, "ca": 3}


def scenario_doc(rows, cols, bs_cell, bs_pos, candidates, los_nodes, los_users, *,
                 max_tiles=9, cell_size=10.0, user_height=0.0, radio=None, costs=None) -> dict:
    """Scenario document with the default radio and cost parameters."""
    return {
        "grid": {"rows": rows, "cols": cols, "cell_size_m": cell_size, "user_height_m": user_height},
        "bs": {"cell": bs_cell, "pos": list(bs_pos)},
        "candidates": [{"id": c, "cell": c, "pos": list(p)} for c, p in sorted(candidates.items())],
        "los_nodes": [list(p) for p in los_nodes],
        "los_users": [list(p) for p in los_users],
        "radio": dict(RADIO, **(radio or {})),
        "costs": dict(COSTS, **(costs or {})),
        "max_tiles": max_tiles,
    }


def make_scenario(*args, **kwargs) -> Scenario:
    return scenario_from_dict(scenario_doc(*args, **kwargs))


def _point_in_cell(rng, cell, cols, size, zlo=1.0, zhi=10.0, margin=0.5):
    r, c = divmod(cell, cols)
    return (float(rng.uniform(c * size + margin, (c + 1) * size - margin)),
            float(rng.uniform(r * size + margin, (r + 1) * size - margin)),
            float(rng.uniform(zlo, zhi)))


# ---------------------------------------------------------------------------
# single chains for the explicit-channel check
# ---------------------------------------------------------------------------

@dataclass
class Chain:
    scenario: Scenario
    path: tuple[int, ...]
    tiles: dict[int, int]
    airs: int  # IRS that becomes active in the hybrid variant

    def passive_plan(self) -> DeploymentPlan:
        return DeploymentPlan(passive=dict(self.tiles), active={})

    def hybrid_plan(self) -> DeploymentPlan:
        passive = {v: t for v, t in self.tiles.items() if v != self.airs}
        return DeploymentPlan(passive=passive, active={self.airs: self.tiles[self.airs]})


def random_chain(rng, hops=None, dmin=5.0, dmax=30.0, max_tiles=9) -> Chain:
    """BS -> IRS ... IRS -> user cell with every hop between ``dmin`` and ``dmax`` meters."""
    rows, cols, size = 4, 6, 10.0
    hops = int(rng.integers(2, 5)) if hops is None else hops
    while True:
        cells = [0] + [int(c) for c in rng.permutation(np.arange(1, rows * cols))[:hops - 1]]
        pos = {cell: _point_in_cell(rng, cell, cols, size) for cell in cells}
        bs_cell, irs = cells[0], cells[1:]
        if not all(dmin <= math.dist(pos[a], pos[b]) <= dmax for a, b in zip(cells, cells[1:])):
            continue
        user_cell = int(rng.integers(rows * cols))
        if user_cell == bs_cell:
            continue
        candidates = {c: pos[c] for c in irs}
        nodes = [BS_NODE] + irs
        sc = make_scenario(rows, cols, bs_cell, pos[bs_cell], candidates,
                           list(zip(nodes, nodes[1:])), [(irs[-1], user_cell)], max_tiles=max_tiles)
        last = sc.los_graph.edges[(irs[-1], sc.user_vertex(user_cell))]
        if not dmin <= last <= dmax:
            continue
        tiles = {c: int(rng.integers(1, max_tiles + 1)) for c in irs}
        return Chain(sc, tuple(nodes) + (sc.user_vertex(user_cell),), tiles, int(rng.choice(irs)))


# ---------------------------------------------------------------------------
# small graphs for routing
# ---------------------------------------------------------------------------

def random_small_scenario(rng, rows=2, cols=2, n_candidates=None, max_tiles=9, cell_size=20.0,
                          p_node=0.6, p_user=0.5) -> Scenario:
    """BS plus up to ``rows*cols - 1`` candidates with random LoS on a small grid."""
    J = rows * cols
    bs_cell = 0  # candidate ids equal their cells and id 0 is the BS
    others = [c for c in range(J) if c != bs_cell]
    k = int(rng.integers(1, len(others) + 1)) if n_candidates is None else n_candidates
    cand_cells = sorted(int(c) for c in rng.choice(others, size=k, replace=False))
    candidates = {c: _point_in_cell(rng, c, cols, cell_size) for c in cand_cells}
    nodes = [BS_NODE] + cand_cells
    los_nodes = [pair for pair in itertools.combinations(nodes, 2) if rng.random() < p_node]
    los_users = [(i, j) for i in nodes for j in range(J) if rng.random() < p_user]
    return make_scenario(rows, cols, bs_cell, _point_in_cell(rng, bs_cell, cols, cell_size), candidates,
                         los_nodes, los_users, max_tiles=max_tiles, cell_size=cell_size)


def random_plan(rng, scenario: Scenario) -> DeploymentPlan:
    passive, active = {}, {}
    for c in sorted(scenario.candidate_cells):
        role = rng.integers(3)
        t = int(rng.integers(1, scenario.max_tiles + 1))
        if role == 1:
            passive[c] = t
        elif role == 2:
            active[c] = t
    return DeploymentPlan(passive=passive, active=active)


def random_routing_instance(rng) -> tuple[Scenario, DeploymentPlan]:
    """Graph with at most 8 vertices and a plan free of negative cycles."""
    while True:
        sc = random_small_scenario(rng)
        plan = random_plan(rng, sc)
        try:
            all_cell_snrs(sc, plan)
        except NegativeCycleError:
            continue
        return sc, plan


# ---------------------------------------------------------------------------
# tile and deployment instances
# ---------------------------------------------------------------------------

def worst_snr(scenario: Scenario, plan: DeploymentPlan) -> float | None:
    snrs = [s.snr_linear for s in all_cell_snrs(scenario, plan)]
    return None if any(s is None for s in snrs) else min(snrs)


@dataclass
class TileInstance:
    scenario: Scenario
    passive: tuple[int, ...]
    active: tuple[int, ...]
    gamma0: float


def random_tile_instance(rng, max_locations=3, tmax_range=(2, 4)) -> TileInstance:
    """Locations with |P|+|A| <= ``max_locations`` and a target strictly between the T=1 and T^max floors."""
    while True:
        tmax = int(rng.integers(tmax_range[0], tmax_range[1] + 1))
        sc = random_small_scenario(rng, rows=2, cols=3, n_candidates=int(rng.integers(1, max_locations + 1)),
                                   max_tiles=tmax, cell_size=15.0, p_node=0.7, p_user=0.45)
        cands = sorted(sc.candidate_cells)
        roles = rng.integers(2, size=len(cands))
        passive = tuple(c for c, r in zip(cands, roles) if r == 0)
        active = tuple(c for c, r in zip(cands, roles) if r == 1)
        try:
            lo = worst_snr(sc, DeploymentPlan.uniform(passive, active, 1))
            hi = worst_snr(sc, DeploymentPlan.uniform(passive, active, tmax))
        except NegativeCycleError:
            continue
        if lo is None or hi is None or to_db(hi) - to_db(lo) < 0.5:
            continue
        gamma0 = to_linear(float(rng.uniform(to_db(lo) + 0.01, to_db(hi) - 0.01)))
        return TileInstance(sc, passive, active, gamma0)


@dataclass
class DeployInstance:
    scenario: Scenario
    gamma0: float


def random_deploy_instance(rng, max_candidates=4, tmax_range=(2, 3)) -> DeployInstance:
    """Up to ``max_candidates`` candidates with a target some location pair can meet."""
    from irsplan.deploy import location_pairs

    while True:
        tmax = int(rng.integers(tmax_range[0], tmax_range[1] + 1))
        sc = random_small_scenario(rng, rows=2, cols=3, n_candidates=int(rng.integers(2, max_candidates + 1)),
                                   max_tiles=tmax, cell_size=15.0, p_node=0.7, p_user=0.4)
        best = None
        try:
            for p, a in location_pairs(sorted(sc.candidate_cells)):
                w = worst_snr(sc, DeploymentPlan.uniform(p, a, tmax))
                if w is not None and (best is None or w > best):
                    best = w
        except NegativeCycleError:
            continue
        if best is None:
            continue
        gamma0 = to_linear(to_db(best) - float(rng.uniform(0.0, 15.0)))
        return DeployInstance(sc, gamma0)
