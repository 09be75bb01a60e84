"""PIRS/AIRS location search by partial enumeration with exact pruning.

Location pairs (P, A) are visited cheapest-first by the cost they would have
with one tile per surface. A pair is skipped when that bound already reaches the
incumbent cost, or when it misses the SNR target even with every surface at the
maximum tile count. A second bound sums per-surface tile floors, each taken with
the other surfaces at the maximum. The surviving pairs get their tile counts from
``tiles.sequential_refine`` (or are costed directly for the equal-tile benchmarks).
"""

from __future__ import annotations

import enum
import itertools
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from .barrier import SolverOptions
from .routing import Router, worst_cell_snr
from .scenario import Scenario
from .snr import CostBreakdown, DeploymentPlan, PathSolution, meets_target, min_cost, total_cost
from .tiles import brute_force_tiles, sequential_refine

ORACLE_MAX_CANDIDATES = 6
ORACLE_BUDGET = 10 ** 7


class Benchmark(str, enum.Enum):
    NONE = "none"  # joint PIRS/AIRS placement with optimized tiles
    ALL_PIRS_OPTIMIZED = "all_pirs_optimized"  # benchmark 1
    ALL_PIRS_EQUAL = "all_pirs_equal"  # benchmark 2
    JOINT_EQUAL = "joint_equal"  # benchmark 3

    @classmethod
    def from_number(cls, k: int | None) -> "Benchmark":
        table = {None: cls.NONE, 0: cls.NONE, 1: cls.ALL_PIRS_OPTIMIZED, 2: cls.ALL_PIRS_EQUAL, 3: cls.JOINT_EQUAL}
        if k not in table:
            raise ValueError(f"benchmark must be 1, 2 or 3, got {k!r}")
        return table[k]

    @property
    def allows_active(self) -> bool:
        return self in (Benchmark.NONE, Benchmark.JOINT_EQUAL)

    @property
    def equal_tiles(self) -> bool:
        return self in (Benchmark.ALL_PIRS_EQUAL, Benchmark.JOINT_EQUAL)


@dataclass(frozen=True)
class SearchConfig:
    gamma0: float  # linear
    benchmark: Benchmark = Benchmark.NONE
    equal_tiles_passive: int = 4
    equal_tiles_active: int = 1
    parallel_workers: int = 1
    budget: int | None = None  # max tile subproblems solved
    solver: SolverOptions = SolverOptions()
    record_pruned: bool = False

    def __post_init__(self):
        object.__setattr__(self, "benchmark", Benchmark(self.benchmark))
        if self.equal_tiles_passive < 1 or self.equal_tiles_active < 1:
            raise ValueError("equal tile counts must be >= 1")
        if self.parallel_workers < 1:
            raise ValueError("parallel_workers must be >= 1")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be >= 0")


@dataclass(frozen=True)
class PrunedPair:
    passive: tuple[int, ...]
    active: tuple[int, ...]
    reason: str  # "infeasible" or "bound"
    incumbent: int | Fraction | None


@dataclass
class SolveReport:
    plan: DeploymentPlan | None
    cost: CostBreakdown | None
    per_cell: list[PathSolution]
    total_pairs: int
    examined: int = 0
    pruned_infeasible: int = 0
    pruned_bound: int = 0
    wall_time: float = 0.0
    budget_exhausted: bool = False
    incumbent_trace: list = field(default_factory=list)
    pruned: list[PrunedPair] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.plan is not None

    @property
    def pruned_fraction(self) -> float:
        return (self.pruned_infeasible + self.pruned_bound) / self.total_pairs if self.total_pairs else 0.0


class FloorCache:
    """Worst cell SNR of each (P, A, tiles) configuration.

    The value does not depend on the SNR target or on costs, so one cache can be
    shared by every run over the same scenario geometry and radio parameters.
    """

    def __init__(self):
        self._floors: dict = {}
        self._geometry: dict[int, tuple] = {}  # id -> (scenario kept alive, key)

    def __len__(self):
        return len(self._floors)

    def _geometry_key(self, scenario: Scenario) -> tuple:
        entry = self._geometry.get(id(scenario))
        if entry is None or entry[0] is not scenario:
            key = (scenario.cells, tuple(scenario.positions.items()), scenario.los_node_pairs,
                   scenario.los_user_pairs, tuple(scenario.dmax_overrides.items()),
                   scenario.user_height, scenario.radio)
            entry = self._geometry[id(scenario)] = (scenario, key)
        return entry[1]

    def floor(self, scenario: Scenario, plan: DeploymentPlan) -> float | None:
        key = (self._geometry_key(scenario), plan)
        if key not in self._floors:
            self._floors[key] = worst_cell_snr(scenario, plan)
        return self._floors[key]

    def meets(self, scenario: Scenario, plan: DeploymentPlan, gamma0: float) -> bool:
        return meets_target(self.floor(scenario, plan), gamma0)


def location_pairs(candidates, allow_active: bool = True) -> Iterator[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Every disjoint (P, A) pair of candidate subsets."""
    cells = sorted(candidates)
    roles = (0, 1, 2) if allow_active else (0, 1)
    for assign in itertools.product(roles, repeat=len(cells)):
        yield (tuple(c for c, r in zip(cells, assign) if r == 1),
               tuple(c for c, r in zip(cells, assign) if r == 2))


def _pair_plan(scenario: Scenario, config: SearchConfig, passive, active) -> DeploymentPlan:
    """Tiles at which a pair is screened: T^max, or the fixed counts of an equal-tile benchmark."""
    if config.benchmark.equal_tiles:
        return DeploymentPlan.uniform(passive, active, config.equal_tiles_passive, config.equal_tiles_active)
    return DeploymentPlan.uniform(passive, active, scenario.max_tiles)


def _lower_bound(scenario: Scenario, config: SearchConfig, passive, active):
    costs = scenario.costs
    if config.benchmark.equal_tiles:
        return total_cost(_pair_plan(scenario, config, passive, active), costs).total
    return min_cost(len(passive), len(active), costs)


def ordered_pairs(scenario: Scenario, config: SearchConfig) -> list:
    """(bound, P, A) triples in visiting order: bound, then |A|, |P|, then cell ids."""
    pairs = [(_lower_bound(scenario, config, p, a), p, a)
             for p, a in location_pairs(scenario.candidate_cells, config.benchmark.allows_active)]
    pairs.sort(key=lambda t: (t[0], len(t[2]), len(t[1]), t[1], t[2]))
    return pairs


def _check_config(scenario: Scenario, config: SearchConfig):
    if config.benchmark.equal_tiles and max(config.equal_tiles_passive, config.equal_tiles_active) > scenario.max_tiles:
        raise ValueError(f"equal tile counts exceed max_tiles={scenario.max_tiles}")


def _smallest_tiles(lo: int, hi: int, ok) -> int:
    """Smallest k in [lo, hi] with ``ok(k)``, given ``ok`` monotone and ``ok(hi)``."""
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def tile_floor_bound(scenario: Scenario, passive, active, gamma0: float, cache: FloorCache):
    """Cost lower bound from per-surface tile floors.

    Since every SNR is non-decreasing in every tile count, a surface needs at
    least the tiles that work with all other surfaces at the maximum. Assumes
    the all-maximum plan meets the target.
    """
    tmax = scenario.max_tiles
    full = DeploymentPlan.uniform(passive, active, tmax)
    tiles = {}
    for v in full.deployed:
        def ok(t, v=v):
            return cache.meets(scenario, full.with_tiles({**full.tiles, v: t}), gamma0)
        tiles[v] = _smallest_tiles(1, tmax, ok)
    return total_cost(full.with_tiles(tiles), scenario.costs).total


def _solve_pair(scenario: Scenario, config: SearchConfig, passive, active) -> DeploymentPlan | None:
    """Tile counts for a pair already known to be feasible at its screening tiles."""
    if config.benchmark.equal_tiles:
        return _pair_plan(scenario, config, passive, active)
    one = DeploymentPlan.uniform(passive, active, 1)
    if meets_target(worst_cell_snr(scenario, one), config.gamma0):
        return one  # the bound itself is attained
    sol = sequential_refine(scenario, passive, active, config.gamma0, config.solver)
    return None if sol is None else sol.plan


_WORKER: dict = {}


def _worker_init(scenario, config):
    _WORKER["scenario"] = scenario
    _WORKER["config"] = config


def _worker_solve(pair):
    plan = _solve_pair(_WORKER["scenario"], _WORKER["config"], *pair)
    return None if plan is None else plan.to_dict()


def _finish(scenario: Scenario, config: SearchConfig, report: SolveReport, best: DeploymentPlan | None, t0: float):
    report.plan = best
    if best is not None:
        report.cost = total_cost(best, scenario.costs)
        report.per_cell = Router(scenario, best).all_cells()
        short = [s.cell for s in report.per_cell if not meets_target(s.snr_linear, config.gamma0)]
        if short:
            raise RuntimeError(f"selected plan misses the target in cells {short}")
    report.wall_time = time.perf_counter() - t0
    return report


def optimize_deployment(scenario: Scenario, config: SearchConfig, cache: FloorCache | None = None) -> SolveReport:
    """Cheapest plan meeting ``config.gamma0`` in every cell, by pruned enumeration of location pairs."""
    _check_config(scenario, config)
    t0 = time.perf_counter()
    cache = cache if cache is not None else FloorCache()
    pairs = ordered_pairs(scenario, config)
    report = SolveReport(None, None, [], len(pairs))
    best: DeploymentPlan | None = None
    best_cost = None

    def prune(p, a, reason):
        if config.record_pruned:
            report.pruned.append(PrunedPair(p, a, reason, best_cost))

    pool = None
    if config.parallel_workers > 1 and "fork" in multiprocessing.get_all_start_methods():
        ctx = multiprocessing.get_context("fork")
        pool = ProcessPoolExecutor(config.parallel_workers, mp_context=ctx,
                                   initializer=_worker_init, initargs=(scenario, config))
    batch_size = 4 * config.parallel_workers if pool else 1
    try:
        k = 0
        while k < len(pairs):
            batch = []
            while k < len(pairs) and len(batch) < batch_size:
                bound, p, a = pairs[k]
                if best_cost is not None and bound >= best_cost:
                    # pairs are sorted by bound, so every remaining pair is dominated
                    report.pruned_bound += len(pairs) - k
                    if config.record_pruned:
                        for _, p2, a2 in pairs[k:]:
                            prune(p2, a2, "bound")
                    k = len(pairs)
                    break
                k += 1
                if not cache.meets(scenario, _pair_plan(scenario, config, p, a), config.gamma0):
                    report.pruned_infeasible += 1
                    prune(p, a, "infeasible")
                    continue
                if (best_cost is not None and not config.benchmark.equal_tiles
                        and tile_floor_bound(scenario, p, a, config.gamma0, cache) >= best_cost):
                    report.pruned_bound += 1
                    prune(p, a, "bound")
                    continue
                if config.budget is not None and report.examined + len(batch) >= config.budget:
                    report.budget_exhausted = True
                    k = len(pairs)
                    break
                batch.append((p, a))
            if not batch:
                continue
            if pool:
                plans = [None if d is None else DeploymentPlan.from_dict(d)
                         for d in pool.map(_worker_solve, batch)]
            else:
                plans = [_solve_pair(scenario, config, p, a) for p, a in batch]
            report.examined += len(batch)
            for plan in plans:
                if plan is None:
                    continue
                cost = total_cost(plan, scenario.costs).total
                if best_cost is None or cost < best_cost:
                    best, best_cost = plan, cost
                    report.incumbent_trace.append(cost)
    finally:
        if pool:
            pool.shutdown()
    return _finish(scenario, config, report, best, t0)


def full_enumeration(scenario: Scenario, config: SearchConfig, budget: int = ORACLE_BUDGET) -> SolveReport:
    """Exhaustive reference: every location pair, tiles by exhaustive enumeration, no pruning."""
    _check_config(scenario, config)
    n = len(scenario.candidate_cells)
    if n > ORACLE_MAX_CANDIDATES:
        raise ValueError(f"full enumeration limited to {ORACLE_MAX_CANDIDATES} candidates, scenario has {n}")
    if scenario.max_tiles ** n > budget:
        raise ValueError(f"{scenario.max_tiles}^{n} tile combinations exceed the budget of {budget}")
    t0 = time.perf_counter()
    pairs = ordered_pairs(scenario, config)
    report = SolveReport(None, None, [], len(pairs))
    best, best_cost = None, None
    for _, p, a in pairs:
        report.examined += 1
        if config.benchmark.equal_tiles:
            plan = _pair_plan(scenario, config, p, a)
            if not meets_target(worst_cell_snr(scenario, plan), config.gamma0):
                continue
        else:
            sol = brute_force_tiles(scenario, p, a, config.gamma0, budget=budget)
            if sol is None:
                continue
            plan = sol.plan
        cost = total_cost(plan, scenario.costs).total
        if best_cost is None or cost < best_cost:
            best, best_cost = plan, cost
            report.incumbent_trace.append(cost)
    return _finish(scenario, config, report, best, t0)
