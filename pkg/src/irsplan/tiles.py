"""Tile-count optimization for fixed PIRS/AIRS locations.

``sequential_refine`` freezes one path per cell at minimum tiles, solves the
resulting convex relaxation in log-tile variables, rounds up, and then removes
tiles cell by cell while re-optimizing the cells not yet refined.
``brute_force_tiles`` is the exhaustive reference.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .barrier import LseConstraint, SolverOptions, solve_barrier
from .routing import Router, worst_cell_snr
from .scenario import BS_NODE, Scenario
from .snr import (
    SNR_RTOL,
    CostBreakdown,
    DeploymentPlan,
    PathKind,
    direct_snr,
    inv_gain_log,
    meets_target,
    safe_exp,
    total_cost,
)

log = logging.getLogger(__name__)

BRUTE_FORCE_BUDGET = 10 ** 7


@dataclass(frozen=True)
class FrozenCell:
    """One cell's path, fixed at the freezing tile counts, and its SNR as a function of tiles.

    ``terms`` encode ``1/snr = sum_k exp(log_coeff_k - sum_i mult_ki * ln T_i)``.
    """

    cell: int
    kind: PathKind
    path: tuple[int, ...] = ()
    airs: int | None = None
    direct_snr: float | None = None
    terms: tuple[tuple[float, Mapping[int, int]], ...] = ()
    constants: Mapping[str, float] = field(default_factory=dict)

    def snr(self, tiles: Mapping[int, float]) -> float | None:
        if self.kind is PathKind.UNREACHABLE:
            return None
        if self.kind is PathKind.DIRECT:
            return self.direct_snr
        inv = sum(safe_exp(lc - sum(k * math.log(tiles[v]) for v, k in mult.items())) for lc, mult in self.terms)
        return 1.0 / inv


@dataclass(frozen=True)
class FrozenPathSet:
    cells: tuple[FrozenCell, ...]
    passive: frozenset[int]
    active: frozenset[int]
    max_tiles: int

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(sorted(self.passive | self.active))

    def satisfied(self, tiles: Mapping[int, float], gamma0: float) -> bool:
        return all(meets_target(fc.snr(tiles), gamma0) for fc in self.cells)


def _log_terms_hybrid(scenario: Scenario, path: tuple[int, ...], airs: int):
    radio = scenario.radio
    edges = scenario.los_graph.edges
    ln_n4 = 4.0 * math.log(radio.elements_per_tile_dim)
    mids = path[1:-1]
    l = mids.index(airs) + 1
    hop = [inv_gain_log(edges[(u, v)], radio) for u, v in zip(path, path[1:])]
    lam1 = hop[0] + sum(hop[m] - ln_n4 for m in range(1, l))
    lam2 = sum(hop[m] - ln_n4 for m in range(l, len(mids) + 1))
    ln_c0bar = lam1 - math.log(radio.c0)
    ln_cabar = lam2 - math.log(radio.ca)
    before = Counter({airs: 1})
    for v in mids[: l - 1]:
        before[v] += 2
    after = Counter()
    for v in mids[l - 1:]:
        after[v] += 2
    every = Counter()
    for v in mids:
        every[v] += 2
    terms = (
        (ln_c0bar - 2.0 * math.log(radio.elements_per_tile_dim), dict(before)),
        (ln_cabar, dict(after)),
        (ln_c0bar + ln_cabar, dict(every)),
    )
    return terms, {"c0_bar": math.exp(ln_c0bar), "ca_bar": math.exp(ln_cabar)}


def _log_terms_passive(scenario: Scenario, path: tuple[int, ...]):
    radio = scenario.radio
    edges = scenario.los_graph.edges
    ln_n4 = 4.0 * math.log(radio.elements_per_tile_dim)
    hop = [inv_gain_log(edges[(u, v)], radio) for u, v in zip(path, path[1:])]
    lam = hop[0] + sum(h - ln_n4 for h in hop[1:])
    ln_c0t = lam - math.log(radio.c0)
    mult = Counter()
    for v in path[1:-1]:
        mult[v] += 2
    return ((ln_c0t, dict(mult)),), {"c0_tilde": math.exp(ln_c0t)}


def freeze_paths(scenario: Scenario, passive: Iterable[int], active: Iterable[int],
                 tiles: int = 1) -> FrozenPathSet:
    """Pick one path per cell by comparing the three transmission types at uniform ``tiles``.

    Hybrid wins ties against both other types; all-passive must strictly beat direct.
    """
    passive, active = frozenset(passive), frozenset(active)
    router = Router(scenario, DeploymentPlan.uniform(passive, active, tiles))
    cells = []
    for j in range(scenario.num_cells):
        d = direct_snr(scenario, j)
        hyb = router.hybrid_route(j)
        pas = router.passive_route(j)
        ninf = -math.inf
        h_snr = hyb.snr if hyb else ninf
        p_snr = pas.snr if pas else ninf
        d_snr = d if d is not None else ninf
        if hyb is not None and h_snr >= max(d_snr, p_snr):
            terms, consts = _log_terms_hybrid(scenario, hyb.path, hyb.airs)
            cells.append(FrozenCell(j, PathKind.HYBRID, hyb.path, hyb.airs, None, terms, consts))
        elif pas is not None and p_snr > max(d_snr, h_snr):
            terms, consts = _log_terms_passive(scenario, pas.path)
            cells.append(FrozenCell(j, PathKind.ALL_PASSIVE, pas.path, None, None, terms, consts))
        elif d is not None:
            cells.append(FrozenCell(j, PathKind.DIRECT, (BS_NODE, scenario.user_vertex(j)), None, d))
        else:
            cells.append(FrozenCell(j, PathKind.UNREACHABLE))
    return FrozenPathSet(tuple(cells), passive, active, scenario.max_tiles)


@dataclass
class RelaxedSolution:
    x: dict[int, float]  # log tile count per deployed cell (free and pinned)
    objective: float  # continuous hardware cost
    kkt_residual: float
    iterations: int
    max_tiles: int
    objective_trace: list[float] = field(default_factory=list)
    free: tuple[int, ...] = ()


def relaxation_constraints(frozen: FrozenPathSet, gamma0: float, free: tuple[int, ...],
                           pinned: Mapping[int, float]) -> list[LseConstraint] | None:
    """Constraints of the relaxed problem over ``free``; ``None`` if a constant one already fails."""
    slack = math.log1p(-SNR_RTOL)
    index = {v: k for k, v in enumerate(free)}
    out = []
    for fc in frozen.cells:
        if gamma0 <= 0:
            if fc.kind is PathKind.UNREACHABLE:
                return None
            continue
        if fc.kind is PathKind.UNREACHABLE:
            return None
        if fc.kind is PathKind.DIRECT:
            if not meets_target(fc.direct_snr, gamma0):
                return None
            continue
        b = np.empty(len(fc.terms))
        A = np.zeros((len(fc.terms), len(free)))
        for k, (lc, mult) in enumerate(fc.terms):
            b[k] = lc - sum(m * pinned[v] for v, m in mult.items() if v not in index)
            for v, m in mult.items():
                if v in index:
                    A[k, index[v]] = m
        con = LseConstraint(b, A, math.log(gamma0) + slack)
        if not A.any():
            if con.value(np.zeros(len(free))) > 0:
                return None
            continue
        out.append(con)
    return out


def solve_relaxation(frozen: FrozenPathSet, costs, gamma0: float,
                     fixed: Mapping[int, float] | None = None,
                     bounds: Mapping[int, tuple[float, float]] | None = None,
                     options: SolverOptions = SolverOptions()) -> RelaxedSolution | None:
    """Minimize continuous hardware cost over log tile counts; ``None`` when infeasible."""
    fixed = dict(fixed or {})
    bounds = dict(bounds or {})
    upper = math.log(frozen.max_tiles)
    pinned = dict(fixed)
    free = []
    lo, hi = [], []
    for v in frozen.variables:
        if v in fixed:
            continue
        a, b = bounds.get(v, (0.0, upper))
        if b - a <= 1e-12:
            pinned[v] = a
            continue
        free.append(v)
        lo.append(a)
        hi.append(b)
    free = tuple(free)
    cons = relaxation_constraints(frozen, gamma0, free, pinned)
    if cons is None:
        return None
    price = {v: float(costs.per_tile_active if v in frozen.active else costs.per_tile_passive)
             for v in frozen.variables}
    c = np.array([price[v] for v in free])
    res = solve_barrier(c, cons, np.array(lo), np.array(hi), options)
    if res is None:
        return None
    x = dict(pinned)
    x.update(zip(free, map(float, res.x)))
    objective = sum(price[v] * math.exp(x[v]) for v in frozen.variables)
    return RelaxedSolution(x, objective, res.kkt_residual, res.iterations, frozen.max_tiles,
                           res.objective_trace, free)


def reconstruct_tiles(solution: RelaxedSolution) -> dict[int, int]:
    """Round relaxed tile counts up to integers within [1, max_tiles].

    Values within 1e-7 of an integer snap to it so solver noise does not add a tile.
    """
    out = {}
    for v, xv in solution.x.items():
        t = math.exp(xv)
        r = round(t)
        t_int = r if abs(t - r) <= 1e-7 * max(1.0, t) else math.ceil(t)
        out[v] = min(max(int(t_int), 1), solution.max_tiles)
    return out


def _round_up(solution: RelaxedSolution, frozen: FrozenPathSet, gamma0: float) -> dict[int, int]:
    tiles = reconstruct_tiles(solution)
    if not frozen.satisfied(tiles, gamma0):
        tiles = {v: min(max(math.ceil(math.exp(x)), 1), solution.max_tiles) for v, x in solution.x.items()}
    return tiles


def plan_meets(scenario: Scenario, plan: DeploymentPlan, gamma0: float) -> bool:
    """True iff every cell's best path meets the target."""
    return meets_target(worst_cell_snr(scenario, plan), gamma0)


def _smallest_feasible(lo: int, hi: int, ok) -> int | None:
    """Smallest k in [lo, hi] with ``ok(k)``, for ``ok`` monotone in k."""
    if not ok(hi):
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def polish_tiles(scenario: Scenario, plan: DeploymentPlan, gamma0: float) -> DeploymentPlan:
    """Local search on a feasible plan under full path selection.

    Each round applies the most cost-reducing move that keeps every cell at
    the target, where a move removes tiles from one IRS and may add tiles to
    one other IRS. Recovers savings hidden by paths frozen at minimum tiles.
    Every SNR is non-decreasing in every tile count, which bounds the search.
    """
    costs = scenario.costs
    tmax = scenario.max_tiles
    unit = {**{p: costs.per_tile_passive for p in plan.passive}, **{a: costs.per_tile_active for a in plan.active}}
    tiles = dict(plan.tiles)

    seen: dict[tuple, bool] = {}

    def meets(t):
        key = tuple(sorted(t.items()))
        if key not in seen:
            seen[key] = plan_meets(scenario, plan.with_tiles(t), gamma0)
        return seen[key]

    while True:
        best = None  # (saving, i, a, j, b)
        for i in sorted(tiles):
            for a in range(1, tiles[i]):
                if not meets({**{k: tmax for k in tiles}, i: tiles[i] - a}):
                    break  # removing more from i cannot work either
                cut = {**tiles, i: tiles[i] - a}
                if meets(cut):
                    move = (unit[i] * a, i, a, None, 0)
                else:
                    move = None
                    for j in sorted(tiles):
                        if j == i or tiles[j] == tmax or unit[j] >= unit[i] * a:
                            continue
                        b = _smallest_feasible(1, tmax - tiles[j], lambda b: meets({**cut, j: tiles[j] + b}))
                        if b is not None and unit[i] * a - unit[j] * b > 0:
                            cand = (unit[i] * a - unit[j] * b, i, a, j, b)
                            if move is None or cand[0] > move[0]:
                                move = cand
                if move is not None and (best is None or move[0] > best[0]):
                    best = move
        if best is None:
            return plan.with_tiles(tiles)
        _, i, a, j, b = best
        tiles[i] -= a
        if j is not None:
            tiles[j] += b


def check_feasibility(scenario: Scenario, passive: Iterable[int], active: Iterable[int], gamma0: float) -> bool:
    return plan_meets(scenario, DeploymentPlan.uniform(passive, active, scenario.max_tiles), gamma0)


@dataclass
class TileSolution:
    plan: DeploymentPlan
    cost: CostBreakdown
    frozen: FrozenPathSet | None = None
    relaxed: RelaxedSolution | None = None
    cost_trace: list = field(default_factory=list)
    refrozen_at_max: bool = False
    max_tiles_fallback: bool = False
    relaxations: int = 0
    refined_cost: CostBreakdown | None = None  # before the local search, if one ran

    @property
    def tiles(self) -> dict[int, int]:
        return self.plan.tiles


def sequential_refine(scenario: Scenario, passive: Iterable[int], active: Iterable[int], gamma0: float,
                      options: SolverOptions = SolverOptions(), polish: bool = True) -> TileSolution | None:
    """Tile counts for fixed locations by relaxation, round-up and sequential tile removal.

    With ``polish`` the result is then improved by :func:`polish_tiles`.
    Returns ``None`` when even the maximum tile counts miss the target.
    """
    sol = _sequential_refine(scenario, passive, active, gamma0, options)
    if sol is None or not polish or not sol.plan.deployed:
        return sol
    plan = polish_tiles(scenario, sol.plan, gamma0)
    cost = total_cost(plan, scenario.costs)
    if cost.total < sol.cost.total:
        sol.cost_trace.append(cost.total)
        sol.refined_cost, sol.plan, sol.cost = sol.cost, plan, cost
    return sol


def _sequential_refine(scenario, passive, active, gamma0, options) -> TileSolution | None:
    passive, active = frozenset(passive), frozenset(active)
    costs = scenario.costs
    tmax_plan = DeploymentPlan.uniform(passive, active, scenario.max_tiles)
    if not plan_meets(scenario, tmax_plan, gamma0):
        return None
    if not passive and not active:
        return TileSolution(tmax_plan, total_cost(tmax_plan, costs))

    frozen = freeze_paths(scenario, passive, active)
    relaxed = solve_relaxation(frozen, costs, gamma0, options=options)
    solves = 1
    refrozen = False
    if relaxed is None:
        # freezing at minimum tiles shrank the feasible set too far
        frozen = freeze_paths(scenario, passive, active, tiles=scenario.max_tiles)
        relaxed = solve_relaxation(frozen, costs, gamma0, options=options)
        solves += 1
        refrozen = True
        if relaxed is None:
            return TileSolution(tmax_plan, total_cost(tmax_plan, costs), frozen, None,
                                [total_cost(tmax_plan, costs).total], True, True, solves)

    tiles = _round_up(relaxed, frozen, gamma0)
    delta = {v: max(0.0, tiles[v] - math.exp(relaxed.x[v])) for v in frozen.variables}
    best = total_cost(tmax_plan.with_tiles(tiles), costs)
    trace = [best.total]

    refined: list[int] = []
    variables = frozen.variables
    while len(refined) < len(variables):
        s = max((v for v in variables if v not in refined), key=lambda v: (delta[v], -v))
        base = tiles[s]
        t = 1
        while t <= base - 1:
            pinned = {v: math.log(tiles[v]) for v in refined}
            pinned[s] = math.log(base - t)
            trial = solve_relaxation(frozen, costs, gamma0, fixed=pinned, options=options)
            solves += 1
            if trial is None:
                break
            trial_tiles = _round_up(trial, frozen, gamma0)
            trial_cost = total_cost(tmax_plan.with_tiles(trial_tiles), costs)
            if trial_cost.total < best.total:
                tiles, best = trial_tiles, trial_cost
                delta = {v: max(0.0, trial_tiles[v] - math.exp(trial.x[v])) for v in variables}
                trace.append(best.total)
                t += 1
            else:
                break
        refined.append(s)

    plan = tmax_plan.with_tiles(tiles)
    if not plan_meets(scenario, plan, gamma0):
        log.warning("refined tiles %s miss the target under full path selection; using max tiles", tiles)
        return TileSolution(tmax_plan, total_cost(tmax_plan, costs), frozen, relaxed, trace, refrozen, True, solves)
    return TileSolution(plan, best, frozen, relaxed, trace, refrozen, False, solves)


def brute_force_tiles(scenario: Scenario, passive: Iterable[int], active: Iterable[int], gamma0: float,
                      budget: int = BRUTE_FORCE_BUDGET) -> TileSolution | None:
    """Cheapest integer tile assignment by enumerating every combination."""
    passive, active = frozenset(passive), frozenset(active)
    variables = sorted(passive | active)
    tmax = scenario.max_tiles
    if tmax ** len(variables) > budget:
        raise ValueError(f"{tmax}^{len(variables)} tile combinations exceed the budget of {budget}")
    shell = DeploymentPlan.uniform(passive, active, 1)
    best = None
    for combo in itertools.product(range(1, tmax + 1), repeat=len(variables)):
        plan = shell.with_tiles(dict(zip(variables, combo)))
        cost = total_cost(plan, scenario.costs)
        if best is not None and cost.total >= best.cost.total:
            continue
        if plan_meets(scenario, plan, gamma0):
            best = TileSolution(plan, cost)
    return best
