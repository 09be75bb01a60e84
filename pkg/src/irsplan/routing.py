"""Shortest-path beam routing over the LoS graph.

Edge weights are natural-log path losses, so minimizing the weight sum of a
(sub-)path maximizes its end-to-end gain. Edges that cannot belong to a valid
path under a given view are left out of that view entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Mapping

import numpy as np

from .scenario import BS_NODE, LosGraph, Scenario, ScenarioError
from .snr import (
    DeploymentPlan,
    PathKind,
    PathSolution,
    all_passive_path_snr,
    direct_snr,
    hybrid_path_snr,
    hybrid_snr_from_weights,
    inv_gain_log,
    path_gain_sq,
    safe_exp,
)
from .snr import EXP_CLAMP


class NegativeCycleError(ScenarioError):
    """A negative-weight cycle is reachable: passive loops would give unbounded SNR."""


@lru_cache(maxsize=64)
def _base_weights(scenario: Scenario) -> Mapping[tuple[int, int], float]:
    radio = scenario.radio
    return {edge: inv_gain_log(d, radio) for edge, d in scenario.los_graph.edges.items()}


@dataclass(frozen=True)
class WeightedView:
    graph: LosGraph
    plan: DeploymentPlan
    airs: int | None  # designated active IRS; None selects the all-passive view
    edges: tuple[tuple[int, int, float], ...]

    @property
    def mode(self) -> str:
        return "all_passive" if self.airs is None else "hybrid"

    def weight(self, u: int, v: int) -> float | None:
        for a, b, w in self.edges:
            if (a, b) == (u, v):
                return w
        return None


def weighted_view(scenario: Scenario, plan: DeploymentPlan, airs: int | None = None) -> WeightedView:
    if airs is not None and airs not in plan.active:
        raise ValueError(f"cell {airs} is not an active IRS of the plan")
    graph = scenario.los_graph
    base = _base_weights(scenario)
    n_log4 = 4.0 * math.log(scenario.radio.elements_per_tile_dim)
    tiles = plan.tiles
    edges = []
    for (u, v), w0 in base.items():
        if u == BS_NODE:
            if airs is None and graph.is_user(v):
                continue  # the direct link is accounted for separately
            edges.append((u, v, w0))
        elif u in plan.passive or u == airs:
            edges.append((u, v, w0 - n_log4 - 2.0 * math.log(tiles[u])))
    return WeightedView(graph, plan, airs, tuple(edges))


@dataclass(frozen=True)
class ShortestPathResult:
    target: int
    weight: float  # math.inf when unreachable
    path: tuple[int, ...]

    @property
    def reachable(self) -> bool:
        return math.isfinite(self.weight)


def shortest_paths(view: WeightedView, source: int) -> dict[int, ShortestPathResult]:
    """Bellman-Ford from ``source``; every vertex of the graph gets an entry."""
    vertices = view.graph.vertices
    dist = {source: 0.0}
    pred: dict[int, int] = {}
    for _ in range(len(vertices) - 1):
        changed = False
        for u, v, w in view.edges:
            du = dist.get(u)
            if du is not None and du + w < dist.get(v, math.inf):
                dist[v] = du + w
                pred[v] = u
                changed = True
        if not changed:
            break
    else:
        for u, v, w in view.edges:
            du = dist.get(u)
            if du is not None and du + w < dist.get(v, math.inf):
                raise NegativeCycleError(
                    "los_graph", f"negative-weight cycle reachable from vertex {source} ({view.mode} view)")
    out = {}
    for v in vertices:
        if v not in dist:
            out[v] = ShortestPathResult(v, math.inf, ())
            continue
        path = [v]
        while path[-1] != source:
            path.append(pred[path[-1]])
        out[v] = ShortestPathResult(v, dist[v], tuple(reversed(path)))
    return out


@dataclass(frozen=True)
class HybridRoute:
    airs: int
    lam_to_airs: float
    lam_from_airs: float
    path: tuple[int, ...]
    snr: float


@dataclass(frozen=True)
class PassiveRoute:
    lam: float
    path: tuple[int, ...]
    snr: float


class Router:
    """Per-plan routing state; shortest-path trees are computed lazily and cached."""

    def __init__(self, scenario: Scenario, plan: DeploymentPlan):
        self.scenario = scenario
        self.plan = plan
        self._trees: dict[tuple[int | None, int], dict[int, ShortestPathResult]] = {}

    def tree(self, source: int, airs: int | None = None) -> dict[int, ShortestPathResult]:
        key = (airs, source)
        if key not in self._trees:
            self._trees[key] = shortest_paths(weighted_view(self.scenario, self.plan, airs), source)
        return self._trees[key]

    def hybrid_route(self, cell: int) -> HybridRoute | None:
        target = self.scenario.user_vertex(cell)
        best = None
        for a in sorted(self.plan.active):
            first = self.tree(BS_NODE, a)[a]
            second = self.tree(a, a)[target]
            if not (first.reachable and second.reachable):
                continue
            snr = hybrid_snr_from_weights(first.weight, second.weight, self.plan.active[a], self.scenario.radio)
            if best is None or snr > best.snr:
                best = HybridRoute(a, first.weight, second.weight, first.path + second.path[1:], snr)
        return best

    def passive_route(self, cell: int) -> PassiveRoute | None:
        res = self.tree(BS_NODE)[self.scenario.user_vertex(cell)]
        if not res.reachable:
            return None
        return PassiveRoute(res.weight, res.path, self.scenario.radio.c0 * safe_exp(-res.weight))

    def best_hybrid(self, cell: int) -> PathSolution | None:
        route = self.hybrid_route(cell)
        if route is None:
            return None
        return PathSolution(cell, PathKind.HYBRID, route.path, route.airs, route.snr)

    def best_all_passive(self, cell: int) -> PathSolution | None:
        route = self.passive_route(cell)
        if route is None:
            return None
        return PathSolution(cell, PathKind.ALL_PASSIVE, route.path, None, route.snr)

    def overall(self, cell: int) -> PathSolution:
        options = []
        hyb = self.best_hybrid(cell)
        if hyb is not None:
            options.append(hyb)
        pas = self.best_all_passive(cell)
        if pas is not None:
            options.append(pas)
        d = direct_snr(self.scenario, cell)
        if d is not None:
            options.append(PathSolution(cell, PathKind.DIRECT, (BS_NODE, self.scenario.user_vertex(cell)), None, d))
        if not options:
            return PathSolution(cell, PathKind.UNREACHABLE)
        # max() keeps the first maximum: hybrid, then all-passive, then direct
        return max(options, key=lambda s: s.snr_linear)

    def all_cells(self) -> list[PathSolution]:
        return [self.overall(j) for j in range(self.scenario.num_cells)]


def best_hybrid(scenario: Scenario, plan: DeploymentPlan, cell: int) -> PathSolution | None:
    return Router(scenario, plan).best_hybrid(cell)


def best_all_passive(scenario: Scenario, plan: DeploymentPlan, cell: int) -> PathSolution | None:
    return Router(scenario, plan).best_all_passive(cell)


def overall_snr(scenario: Scenario, plan: DeploymentPlan, cell: int) -> PathSolution:
    return Router(scenario, plan).overall(cell)


def all_cell_snrs(scenario: Scenario, plan: DeploymentPlan) -> list[PathSolution]:
    return Router(scenario, plan).all_cells()


# ---------------------------------------------------------------------------
# Exhaustive oracle
# ---------------------------------------------------------------------------

BRUTE_FORCE_MAX_VERTICES = 12


def simple_paths(graph: LosGraph, source: int, target: int, allowed: frozenset[int]) -> Iterator[tuple[int, ...]]:
    """All simple paths source -> target whose intermediate vertices lie in ``allowed``."""
    path = [source]
    on_path = {source}

    def walk(u: int):
        for v, _ in graph.out_edges.get(u, ()):
            if v == target:
                yield tuple(path) + (v,)
            elif v in allowed and v not in on_path:
                path.append(v)
                on_path.add(v)
                yield from walk(v)
                path.pop()
                on_path.discard(v)

    yield from walk(source)


def hop_gains(scenario: Scenario, path: tuple[int, ...]) -> list[float]:
    """Squared gain of every hop along a graph path."""
    edges = scenario.los_graph.edges
    return [path_gain_sq(edges[(u, v)], scenario.radio) for u, v in zip(path, path[1:])]


def brute_force_best_path(scenario: Scenario, plan: DeploymentPlan, cell: int) -> PathSolution:
    """Best path for ``cell`` by enumerating every admissible path and evaluating closed forms."""
    graph = scenario.los_graph
    if len(graph.vertices) > BRUTE_FORCE_MAX_VERTICES:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX_VERTICES} vertices, graph has {len(graph.vertices)}")
    radio = scenario.radio
    tiles = plan.tiles
    target = scenario.user_vertex(cell)
    passive = frozenset(plan.passive)
    best: dict[PathKind, PathSolution] = {}

    def offer(sol: PathSolution):
        cur = best.get(sol.kind)
        if cur is None or sol.snr_linear > cur.snr_linear:
            best[sol.kind] = sol

    for a in sorted(plan.active):
        heads = list(simple_paths(graph, BS_NODE, a, passive))
        tails = list(simple_paths(graph, a, target, passive))
        for head in heads:
            for tail in tails:
                full = head + tail[1:]
                snr = hybrid_path_snr(radio, hop_gains(scenario, full), [tiles[v] for v in full[1:-1]], len(head) - 1)
                offer(PathSolution(cell, PathKind.HYBRID, full, a, snr))
    for full in simple_paths(graph, BS_NODE, target, passive):
        if len(full) > 2:
            snr = all_passive_path_snr(radio, hop_gains(scenario, full), [tiles[v] for v in full[1:-1]])
            offer(PathSolution(cell, PathKind.ALL_PASSIVE, full, None, snr))
    d = direct_snr(scenario, cell)
    if d is not None:
        offer(PathSolution(cell, PathKind.DIRECT, (BS_NODE, target), None, d))
    ranked = [best[k] for k in (PathKind.HYBRID, PathKind.ALL_PASSIVE, PathKind.DIRECT) if k in best]
    if not ranked:
        return PathSolution(cell, PathKind.UNREACHABLE)
    return max(ranked, key=lambda s: s.snr_linear)


# ---------------------------------------------------------------------------
# distance-only routing for feasibility checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _EdgeArrays:
    tail: np.ndarray
    head: np.ndarray  # non-decreasing, so edges of one head are contiguous
    base: np.ndarray
    bs_to_user: np.ndarray
    direct: np.ndarray  # per cell, 0 where the BS has no LoS


@lru_cache(maxsize=64)
def _edge_arrays(scenario: Scenario) -> _EdgeArrays:
    base = _base_weights(scenario)
    graph = scenario.los_graph
    order = sorted(base, key=lambda e: (e[1], e[0]))
    tail = np.array([u for u, _ in order], dtype=np.intp)
    head = np.array([v for _, v in order], dtype=np.intp)
    w = np.array([base[e] for e in order], dtype=float)
    direct = np.array([direct_snr(scenario, j) or 0.0 for j in range(scenario.num_cells)])
    bs_user = np.array([u == BS_NODE and graph.is_user(v) for u, v in order], dtype=bool)
    return _EdgeArrays(tail, head, w, bs_user, direct)


def _distances(n_vertices: int, source: int, tail, head, w, mode: str) -> np.ndarray:
    """Bellman-Ford distances from ``source`` (inf where unreachable)."""
    dist = np.full(n_vertices, math.inf)
    dist[source] = 0.0
    if tail.size == 0:
        return dist
    starts = np.flatnonzero(np.r_[True, head[1:] != head[:-1]])
    heads = head[starts]
    for _ in range(n_vertices):
        best = np.minimum.reduceat(dist[tail] + w, starts)
        improved = best < dist[heads]
        if not improved.any():
            return dist
        dist[heads[improved]] = best[improved]
    raise NegativeCycleError("los_graph", f"negative-weight cycle reachable from vertex {source} ({mode} view)")


def cell_snrs(scenario: Scenario, plan: DeploymentPlan) -> np.ndarray:
    """Best SNR of every cell over all path kinds, 0 where no path exists.

    Same values as :meth:`Router.overall` without building the paths.
    """
    arrays = _edge_arrays(scenario)
    radio = scenario.radio
    J = scenario.num_cells
    nv = 2 * J
    log_tiles = np.zeros(nv)
    for v, t in plan.tiles.items():
        log_tiles[v] = math.log(t)
    passive = np.zeros(nv, dtype=bool)
    passive[np.array(sorted(plan.passive), dtype=np.intp)] = True
    relay = 4.0 * math.log(radio.elements_per_tile_dim) + 2.0 * log_tiles
    w = arrays.base - relay[arrays.tail] * (arrays.tail != BS_NODE)
    users = np.arange(J, 2 * J)
    best = arrays.direct.copy()

    from_bs = arrays.tail == BS_NODE
    keep = (from_bs & ~arrays.bs_to_user) | passive[arrays.tail]
    lam = _distances(nv, BS_NODE, arrays.tail[keep], arrays.head[keep], w[keep], "all_passive")[users]
    reach = np.isfinite(lam)
    best[reach] = np.maximum(best[reach], radio.c0 * np.exp(np.clip(-lam[reach], -EXP_CLAMP, EXP_CLAMP)))

    if plan.active:
        n2 = radio.elements_per_tile_dim ** 2
        for a in sorted(plan.active):
            keep = from_bs | passive[arrays.tail] | (arrays.tail == a)
            t, h, ww = arrays.tail[keep], arrays.head[keep], w[keep]
            lam1 = _distances(nv, BS_NODE, t, h, ww, "hybrid")[a]
            if not math.isfinite(lam1):
                continue
            lam2 = _distances(nv, a, t, h, ww, "hybrid")[users]
            ok = np.isfinite(lam2)
            terms = np.stack([np.full(ok.sum(), lam1 - math.log(radio.c0 * n2 * plan.active[a])),
                              lam2[ok] - math.log(radio.ca),
                              lam1 + lam2[ok] - math.log(radio.c0 * radio.ca)])
            top = terms.max(axis=0)
            lse = top + np.log(np.exp(terms - top).sum(axis=0))
            snr = np.zeros(J)
            snr[ok] = np.exp(np.clip(-lse, -EXP_CLAMP, EXP_CLAMP))
            best = np.maximum(best, snr)
    return best


def worst_cell_snr(scenario: Scenario, plan: DeploymentPlan) -> float | None:
    """Smallest best-path SNR over all cells, ``None`` if some cell has no path."""
    low = float(cell_snrs(scenario, plan).min())
    return low if low > 0 else None
