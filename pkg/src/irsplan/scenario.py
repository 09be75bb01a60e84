"""Region model: cells, BS and candidate IRS nodes, LoS indicators, radio and cost parameters.

Node ids coincide with cell ids for candidate IRS locations; the BS is always node 0.
The worst-case user location of cell ``j`` is the virtual vertex ``J + j``.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np

from .units import dbm_to_watts, to_linear

BS_NODE = 0


class ScenarioError(ValueError):
    """Invalid scenario document or inconsistent scenario data."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _exact(value: Any, path: str) -> int | Fraction:
    if isinstance(value, bool) or not isinstance(value, (int, float, str, Fraction)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    try:
        frac = Fraction(str(value))
    except ValueError as exc:
        raise ScenarioError(path, f"not a number: {value!r}") from exc
    return frac.numerator if frac.denominator == 1 else frac


@dataclass(frozen=True)
class RadioParams:
    tx_power_watts: float
    amp_power_per_element_watts: float
    noise_power_watts: float
    bs_antennas: int
    elements_per_tile_dim: int
    ref_path_gain: float
    pathloss_exponent: float
    wavelength: float
    element_spacing: float | None = None  # defaults to half a wavelength

    def __post_init__(self):
        if self.element_spacing is None:
            object.__setattr__(self, "element_spacing", self.wavelength / 2.0)
        checks = [
            ("tx_power_watts", self.tx_power_watts > 0),
            ("amp_power_per_element_watts", self.amp_power_per_element_watts > 0),
            ("noise_power_watts", self.noise_power_watts > 0),
            ("bs_antennas", int(self.bs_antennas) == self.bs_antennas and self.bs_antennas >= 1),
            ("elements_per_tile_dim",
             int(self.elements_per_tile_dim) == self.elements_per_tile_dim and self.elements_per_tile_dim >= 1),
            ("ref_path_gain", 0 < self.ref_path_gain <= 1),
            ("pathloss_exponent", self.pathloss_exponent >= 0),
            ("wavelength", self.wavelength > 0),
            ("element_spacing", self.element_spacing > 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ScenarioError(f"radio.{name}", f"invalid value {getattr(self, name)!r}")
        for name, value in (("c0", self.c0), ("ca", self.ca)):
            if not (math.isfinite(value) and value > 0):
                raise ScenarioError(f"radio.{name}", "derived constant is not finite and positive")

    @property
    def c0(self) -> float:
        """Transmit SNR scale P0*M/sigma^2."""
        return self.tx_power_watts * self.bs_antennas / self.noise_power_watts

    @property
    def ca(self) -> float:
        """Amplification SNR scale P_A/sigma^2."""
        return self.amp_power_per_element_watts / self.noise_power_watts

    @classmethod
    def from_db(cls, *, p0_dbm, pa_dbm, noise_dbm, m, n, beta0_db, alpha, wavelength_m,
                spacing_m=None) -> "RadioParams":
        return cls(
            tx_power_watts=dbm_to_watts(p0_dbm),
            amp_power_per_element_watts=dbm_to_watts(pa_dbm),
            noise_power_watts=dbm_to_watts(noise_dbm),
            bs_antennas=int(m),
            elements_per_tile_dim=int(n),
            ref_path_gain=to_linear(beta0_db),
            pathloss_exponent=float(alpha),
            wavelength=float(wavelength_m),
            element_spacing=None if spacing_m is None else float(spacing_m),
        )


@dataclass(frozen=True)
class CostModel:
    cell_use_passive: int | Fraction
    cell_use_active: int | Fraction
    per_tile_passive: int | Fraction
    per_tile_active: int | Fraction

    def __post_init__(self):
        for name in ("cell_use_passive", "cell_use_active", "per_tile_passive", "per_tile_active"):
            value = _exact(getattr(self, name), f"costs.{name}")
            if value < 0:
                raise ScenarioError(f"costs.{name}", "must be non-negative")
            object.__setattr__(self, name, value)
        if self.per_tile_active <= self.per_tile_passive or self.cell_use_active <= self.cell_use_passive:
            warnings.warn("active IRS costs do not exceed passive IRS costs", stacklevel=3)


@dataclass(frozen=True)
class Cell:
    id: int
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def centroid(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    @property
    def corners(self) -> tuple[tuple[float, float], ...]:
        return ((self.x0, self.y0), (self.x1, self.y0), (self.x0, self.y1), (self.x1, self.y1))

    def contains(self, x: float, y: float, tol: float = 1e-9) -> bool:
        return self.x0 - tol <= x <= self.x1 + tol and self.y0 - tol <= y <= self.y1 + tol


@dataclass(frozen=True)
class LosGraph:
    """Directed LoS graph over BS/candidate nodes and virtual user vertices.

    ``edges`` maps ``(u, v)`` to the link distance in meters; for node-to-user
    edges the distance is the worst-case distance to the cell.
    """

    num_cells: int
    nodes: tuple[int, ...]
    edges: Mapping[tuple[int, int], float]
    out_edges: Mapping[int, tuple[tuple[int, float], ...]]

    @property
    def vertices(self) -> tuple[int, ...]:
        return self.nodes + tuple(self.num_cells + j for j in range(self.num_cells))

    def user_vertex(self, cell: int) -> int:
        return self.num_cells + cell

    def is_user(self, v: int) -> bool:
        return v >= self.num_cells


@dataclass(frozen=True, eq=False)
class Scenario:
    cells: tuple[Cell, ...]
    bs_cell: int
    positions: Mapping[int, tuple[float, float, float]]
    los_node_pairs: frozenset[frozenset[int]]
    los_user_pairs: frozenset[tuple[int, int]]
    radio: RadioParams
    costs: CostModel
    max_tiles: int
    dmax_overrides: Mapping[tuple[int, int], float] = field(default_factory=dict)
    user_height: float = 0.0

    def __post_init__(self):
        J = len(self.cells)
        if J < 1:
            raise ScenarioError("grid", "region has no cells")
        for k, cell in enumerate(self.cells):
            if cell.id != k:
                raise ScenarioError(f"cells[{k}]", "cell ids must be 0..J-1 in order")
        if not 0 <= self.bs_cell < J:
            raise ScenarioError("bs.cell", f"cell {self.bs_cell} outside 0..{J - 1}")
        if BS_NODE not in self.positions:
            raise ScenarioError("bs.pos", "BS position missing")
        positions = {}
        for node, pos in self.positions.items():
            where = "bs" if node == BS_NODE else f"candidates[id={node}]"
            pos = tuple(float(c) for c in pos)
            if len(pos) != 3 or not all(math.isfinite(c) for c in pos):
                raise ScenarioError(f"{where}.pos", "expected three finite coordinates")
            home = self.bs_cell if node == BS_NODE else node
            if node != BS_NODE:
                if not 0 <= node < J:
                    raise ScenarioError(f"{where}.cell", f"cell {node} outside 0..{J - 1}")
                if node == self.bs_cell:
                    raise ScenarioError(f"{where}.cell", "candidate shares the BS cell")
            if not self.cells[home].contains(pos[0], pos[1]):
                raise ScenarioError(f"{where}.pos", f"position {pos} lies outside cell {home}")
            positions[node] = pos
        object.__setattr__(self, "positions", MappingProxyType(dict(sorted(positions.items()))))

        nodes = set(positions)
        pairs = set()
        for pair in self.los_node_pairs:
            pair = frozenset(pair)
            if len(pair) != 2:
                raise ScenarioError("los_nodes", f"self-pair or malformed pair {sorted(pair)}")
            for node in pair:
                if node not in nodes:
                    raise ScenarioError("los_nodes", f"node {node} is not declared")
            a, b = sorted(pair)
            if np.allclose(positions[a], positions[b]):
                raise ScenarioError("los_nodes", f"nodes {a} and {b} are co-located")
            pairs.add(pair)
        object.__setattr__(self, "los_node_pairs", frozenset(pairs))

        users = set()
        for node, cell in self.los_user_pairs:
            if node not in nodes:
                raise ScenarioError("los_users", f"node {node} is not declared")
            if not 0 <= cell < J:
                raise ScenarioError("los_users", f"cell {cell} outside 0..{J - 1}")
            users.add((node, cell))
        # local coverage inside a node's own cell always holds
        users.add((BS_NODE, self.bs_cell))
        users.update((i, i) for i in nodes if i != BS_NODE)
        object.__setattr__(self, "los_user_pairs", frozenset(users))

        overrides = {}
        for (node, cell), meters in self.dmax_overrides.items():
            if node not in nodes or not 0 <= cell < J:
                raise ScenarioError("dmax_overrides", f"unknown pair ({node}, {cell})")
            if not (math.isfinite(meters) and meters > 0):
                raise ScenarioError("dmax_overrides", f"distance for ({node}, {cell}) must be positive")
            overrides[(node, cell)] = float(meters)
        object.__setattr__(self, "dmax_overrides", MappingProxyType(overrides))

        if int(self.max_tiles) != self.max_tiles or self.max_tiles < 1:
            raise ScenarioError("max_tiles", "must be an integer >= 1")
        object.__setattr__(self, "max_tiles", int(self.max_tiles))

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def candidate_cells(self) -> frozenset[int]:
        return frozenset(n for n in self.positions if n != BS_NODE)

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(sorted(self.positions))

    def user_vertex(self, cell: int) -> int:
        return self.num_cells + cell

    def user_position(self, node: int, cell: int) -> tuple[float, float, float]:
        """Worst-case user location in ``cell`` seen from ``node`` (farthest corner)."""
        px, py, pz = self.positions[node]
        h = self.user_height
        corner = max(self.cells[cell].corners,
                     key=lambda c: (c[0] - px) ** 2 + (c[1] - py) ** 2 + (h - pz) ** 2)
        return (corner[0], corner[1], h)

    @cached_property
    def los_graph(self) -> LosGraph:
        return build_los_graph(self)

    def with_costs(self, costs: CostModel) -> "Scenario":
        from dataclasses import replace

        return replace(self, costs=costs)


def distance(a, b) -> float:
    return float(math.dist(a, b))


def worst_case_distance(scenario: Scenario, node: int, cell: int) -> float:
    if (node, cell) not in scenario.los_user_pairs:
        raise ValueError(f"node {node} has no LoS coverage of cell {cell}")
    override = scenario.dmax_overrides.get((node, cell))
    if override is not None:
        return override
    return distance(scenario.positions[node], scenario.user_position(node, cell))


def build_los_graph(scenario: Scenario) -> LosGraph:
    J = scenario.num_cells
    edges: dict[tuple[int, int], float] = {}
    for pair in sorted(scenario.los_node_pairs, key=sorted):
        a, b = sorted(pair)
        d = distance(scenario.positions[a], scenario.positions[b])
        # downlink: nothing ever enters the BS
        if b != BS_NODE:
            edges[(a, b)] = d
        if a != BS_NODE:
            edges[(b, a)] = d
    for node, cell in sorted(scenario.los_user_pairs):
        edges[(node, J + cell)] = worst_case_distance(scenario, node, cell)
    edges = dict(sorted(edges.items()))
    out: dict[int, list[tuple[int, float]]] = {}
    for (u, v), d in edges.items():
        out.setdefault(u, []).append((v, d))
    return LosGraph(
        num_cells=J,
        nodes=scenario.nodes,
        edges=MappingProxyType(edges),
        out_edges=MappingProxyType({u: tuple(vs) for u, vs in out.items()}),
    )


# ---------------------------------------------------------------------------
# Document I/O
# ---------------------------------------------------------------------------

def _get(doc: Mapping, key: str, path: str, kind=None):
    if not isinstance(doc, Mapping) or key not in doc:
        raise ScenarioError(f"{path}{key}", "missing required field")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise ScenarioError(f"{path}{key}", f"expected {kind.__name__ if isinstance(kind, type) else kind}")
    return value


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    return float(value)


def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ScenarioError(path, f"expected an integer, got {value!r}")
    return value


def _pos(value, path: str) -> tuple[float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ScenarioError(path, "expected [x, y, z]")
    return tuple(_num(v, f"{path}[{k}]") for k, v in enumerate(value))


def grid_cells(rows: int, cols: int, size: float) -> tuple[Cell, ...]:
    """Row-major axis-aligned cells: cell ``r*cols + c`` spans ``[c*size, (c+1)*size] x [r*size, (r+1)*size]``."""
    return tuple(
        Cell(r * cols + c, c * size, r * size, (c + 1) * size, (r + 1) * size)
        for r, c in itertools.product(range(rows), range(cols))
    )


def scenario_from_dict(doc: Mapping) -> Scenario:
    if not isinstance(doc, Mapping):
        raise ScenarioError("$", "document must be a JSON object")
    grid = _get(doc, "grid", "", Mapping)
    rows = _int(_get(grid, "rows", "grid."), "grid.rows")
    cols = _int(_get(grid, "cols", "grid."), "grid.cols")
    size = _num(_get(grid, "cell_size_m", "grid."), "grid.cell_size_m")
    if rows < 1 or cols < 1 or size <= 0:
        raise ScenarioError("grid", "rows, cols and cell_size_m must be positive")
    user_height = _num(grid.get("user_height_m", 0.0), "grid.user_height_m")
    cells = grid_cells(rows, cols, size)

    bs = _get(doc, "bs", "", Mapping)
    bs_cell = _int(_get(bs, "cell", "bs."), "bs.cell")
    positions = {BS_NODE: _pos(_get(bs, "pos", "bs."), "bs.pos")}

    candidates = doc.get("candidates", [])
    if not isinstance(candidates, list):
        raise ScenarioError("candidates", "expected a list")
    seen_cells: dict[int, int] = {}
    for k, cand in enumerate(candidates):
        path = f"candidates[{k}]"
        if not isinstance(cand, Mapping):
            raise ScenarioError(path, "expected an object")
        cid = _int(_get(cand, "id", f"{path}."), f"{path}.id")
        cell = _int(_get(cand, "cell", f"{path}."), f"{path}.cell")
        if cid == BS_NODE:
            raise ScenarioError(f"{path}.id", "id 0 is reserved for the BS")
        if cid != cell:
            raise ScenarioError(f"{path}.id", f"candidate id {cid} must equal its cell {cell}")
        if cell in seen_cells:
            raise ScenarioError(f"{path}.cell", f"cell {cell} already holds candidate {seen_cells[cell]}")
        seen_cells[cell] = k
        positions[cid] = _pos(_get(cand, "pos", f"{path}."), f"{path}.pos")

    def pair_list(key: str, width: int) -> list[list]:
        items = doc.get(key, [])
        if not isinstance(items, list):
            raise ScenarioError(key, "expected a list")
        out = []
        for k, item in enumerate(items):
            if not isinstance(item, (list, tuple)) or len(item) != width:
                raise ScenarioError(f"{key}[{k}]", f"expected a list of length {width}")
            out.append(list(item))
        return out

    node_pairs = []
    for k, (a, b) in enumerate(pair_list("los_nodes", 2)):
        a, b = _int(a, f"los_nodes[{k}][0]"), _int(b, f"los_nodes[{k}][1]")
        for node in (a, b):
            if node not in positions:
                raise ScenarioError(f"los_nodes[{k}]", f"node {node} is not declared")
        if a == b:
            raise ScenarioError(f"los_nodes[{k}]", "self-pair")
        node_pairs.append(frozenset((a, b)))
    user_pairs = []
    for k, (i, j) in enumerate(pair_list("los_users", 2)):
        i, j = _int(i, f"los_users[{k}][0]"), _int(j, f"los_users[{k}][1]")
        if i not in positions:
            raise ScenarioError(f"los_users[{k}]", f"node {i} is not declared")
        user_pairs.append((i, j))
    overrides = {}
    for k, (i, j, meters) in enumerate(pair_list("dmax_overrides", 3)):
        overrides[(_int(i, f"dmax_overrides[{k}][0]"), _int(j, f"dmax_overrides[{k}][1]"))] = _num(
            meters, f"dmax_overrides[{k}][2]")

    radio_doc = _get(doc, "radio", "", Mapping)
    radio_keys = ("p0_dbm", "pa_dbm", "noise_dbm", "m", "n", "beta0_db", "alpha", "wavelength_m")
    radio_args = {key: _num(_get(radio_doc, key, "radio."), f"radio.{key}") for key in radio_keys}
    for key in ("m", "n"):
        radio_args[key] = _int(radio_args[key], f"radio.{key}")
    if "spacing_m" in radio_doc:
        radio_args["spacing_m"] = _num(radio_doc["spacing_m"], "radio.spacing_m")
    radio = RadioParams.from_db(**radio_args)

    cost_doc = _get(doc, "costs", "", Mapping)
    costs = CostModel(*(_exact(_get(cost_doc, key, "costs."), f"costs.{key}") for key in ("cp0", "ca0", "cp", "ca")))

    return Scenario(
        cells=cells,
        bs_cell=bs_cell,
        positions=positions,
        los_node_pairs=frozenset(node_pairs),
        los_user_pairs=frozenset(user_pairs),
        radio=radio,
        costs=costs,
        max_tiles=_int(_get(doc, "max_tiles", ""), "max_tiles"),
        dmax_overrides=overrides,
        user_height=user_height,
    )


def load_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON: {exc}") from exc
    return scenario_from_dict(doc)


def load_scenario_file(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())
