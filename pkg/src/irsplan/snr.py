"""Closed-form SNR and cost arithmetic.

All SNR values are linear. ``None`` stands for "no LoS path" and compares below
every real SNR.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .scenario import BS_NODE, CostModel, RadioParams, Scenario, worst_case_distance
from .units import to_db

# Relative slack used whenever an SNR is compared against a target, so that the
# same plan is judged identically whichever (numerically equivalent) route computed it.
SNR_RTOL = 1e-9

EXP_CLAMP = 700.0


def safe_exp(x: float) -> float:
    return math.exp(min(max(x, -EXP_CLAMP), EXP_CLAMP))


def meets_target(snr: float | None, gamma0: float) -> bool:
    if snr is None:
        return False
    return snr >= gamma0 * (1.0 - SNR_RTOL)


def _logsumexp(values: Sequence[float]) -> float:
    top = max(values)
    return top + math.log(sum(math.exp(v - top) for v in values))


class PathKind(str, enum.Enum):
    DIRECT = "direct"
    HYBRID = "hybrid"
    ALL_PASSIVE = "all_passive"
    UNREACHABLE = "unreachable"

    def __str__(self):
        return self.value


def _tile_map(tiles: Mapping, what: str) -> Mapping[int, int]:
    out = {}
    for cell, t in tiles.items():
        if isinstance(t, bool) or int(t) != t or t < 1:
            raise ValueError(f"{what} cell {cell}: tile count must be a positive integer, got {t!r}")
        out[int(cell)] = int(t)
    return MappingProxyType(dict(sorted(out.items())))


@dataclass(frozen=True)
class DeploymentPlan:
    """Passive and active IRS cells, each mapped to its tile count."""

    passive: Mapping[int, int]
    active: Mapping[int, int]

    def __post_init__(self):
        object.__setattr__(self, "passive", _tile_map(self.passive, "passive"))
        object.__setattr__(self, "active", _tile_map(self.active, "active"))
        both = set(self.passive) & set(self.active)
        if both:
            raise ValueError(f"cells {sorted(both)} are both passive and active")

    def __hash__(self):
        return hash((tuple(self.passive.items()), tuple(self.active.items())))

    @classmethod
    def empty(cls) -> "DeploymentPlan":
        return cls({}, {})

    @classmethod
    def uniform(cls, passive: Iterable[int], active: Iterable[int], tiles: int = 1,
                active_tiles: int | None = None) -> "DeploymentPlan":
        at = tiles if active_tiles is None else active_tiles
        return cls({p: tiles for p in passive}, {a: at for a in active})

    @property
    def passive_cells(self) -> frozenset[int]:
        return frozenset(self.passive)

    @property
    def active_cells(self) -> frozenset[int]:
        return frozenset(self.active)

    @property
    def deployed(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.passive) | set(self.active)))

    @property
    def tiles(self) -> dict[int, int]:
        return {**self.passive, **self.active}

    def is_active(self, cell: int) -> bool:
        return cell in self.active

    def with_tiles(self, tiles: Mapping[int, int]) -> "DeploymentPlan":
        return DeploymentPlan({p: tiles[p] for p in self.passive}, {a: tiles[a] for a in self.active})

    def check_against(self, scenario: Scenario) -> None:
        extra = set(self.deployed) - scenario.candidate_cells
        if extra:
            raise ValueError(f"cells {sorted(extra)} hold no candidate IRS location")
        too_big = [c for c, t in self.tiles.items() if t > scenario.max_tiles]
        if too_big:
            raise ValueError(f"cells {too_big} exceed max_tiles={scenario.max_tiles}")

    def to_dict(self) -> dict:
        return {"passive": {str(k): v for k, v in self.passive.items()},
                "active": {str(k): v for k, v in self.active.items()}}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DeploymentPlan":
        if not isinstance(doc, Mapping) or set(doc) - {"passive", "active"}:
            raise ValueError("plan must be an object with 'passive' and/or 'active' keys")
        parts = []
        for key in ("passive", "active"):
            part = doc.get(key, {})
            if not isinstance(part, Mapping):
                raise ValueError(f"plan.{key} must map cell id -> tile count")
            try:
                parts.append({int(k): v for k, v in part.items()})
            except ValueError as exc:
                raise ValueError(f"plan.{key}: cell ids must be integers") from exc
        return cls(*parts)


@dataclass(frozen=True)
class PathSolution:
    cell: int
    kind: PathKind
    path: tuple[int, ...] = ()
    airs_vertex: int | None = None
    snr_linear: float | None = None

    @property
    def snr_db(self) -> float | None:
        return None if self.snr_linear is None else to_db(self.snr_linear)

    @property
    def reachable(self) -> bool:
        return self.snr_linear is not None


@dataclass(frozen=True)
class CostBreakdown:
    total: int | Fraction
    cell_use: int | Fraction
    hardware: int | Fraction


def path_gain_sq(distance: float, radio: RadioParams) -> float:
    """Squared LoS path gain beta0 / d^alpha."""
    if not distance > 0:
        raise ValueError(f"distance must be positive, got {distance!r}")
    return radio.ref_path_gain / distance ** radio.pathloss_exponent


def inv_gain_log(distance: float, radio: RadioParams) -> float:
    """ln(1/kappa^2), the natural-log path loss of one hop."""
    if not distance > 0:
        raise ValueError(f"distance must be positive, got {distance!r}")
    return radio.pathloss_exponent * math.log(distance) - math.log(radio.ref_path_gain)


def total_cost(plan: DeploymentPlan, costs: CostModel) -> CostBreakdown:
    cell_use = costs.cell_use_passive * len(plan.passive) + costs.cell_use_active * len(plan.active)
    hardware = costs.per_tile_passive * sum(plan.passive.values()) + costs.per_tile_active * sum(plan.active.values())
    return CostBreakdown(cell_use + hardware, cell_use, hardware)


def min_cost(n_passive: int, n_active: int, costs: CostModel) -> int | Fraction:
    """Cost of a location pair with every IRS at one tile; a lower bound for the pair."""
    return ((costs.cell_use_passive + costs.per_tile_passive) * n_passive
            + (costs.cell_use_active + costs.per_tile_active) * n_active)


def direct_snr(scenario: Scenario, cell: int) -> float | None:
    if (BS_NODE, cell) not in scenario.los_user_pairs:
        return None
    return scenario.radio.c0 * path_gain_sq(worst_case_distance(scenario, BS_NODE, cell), scenario.radio)


def _hop_term(radio: RadioParams, gain_sq: float, tiles: int) -> float:
    # ln( kappa^-2 / (N^4 T^2) )
    n = radio.elements_per_tile_dim
    return -math.log(gain_sq) - 4.0 * math.log(n) - 2.0 * math.log(tiles)


def _check_lengths(hop_gains_sq: Sequence[float], tiles_on_path: Sequence[int]) -> int:
    L = len(tiles_on_path)
    if L < 1:
        raise ValueError("a reflected path needs at least one IRS")
    if len(hop_gains_sq) != L + 1:
        raise ValueError(f"expected {L + 1} hop gains for {L} IRSs, got {len(hop_gains_sq)}")
    if any(t < 1 for t in tiles_on_path):
        raise ValueError("every IRS on the path needs at least one tile")
    if any(g <= 0 for g in hop_gains_sq):
        raise ValueError("hop gains must be positive")
    return L


def all_passive_path_snr(radio: RadioParams, hop_gains_sq: Sequence[float], tiles_on_path: Sequence[int]) -> float:
    L = _check_lengths(hop_gains_sq, tiles_on_path)
    log_inv = -math.log(hop_gains_sq[0]) - math.log(radio.c0)
    for m in range(1, L + 1):
        log_inv += _hop_term(radio, hop_gains_sq[m], tiles_on_path[m - 1])
    return safe_exp(-log_inv)


def hybrid_snr_from_weights(lam_to_airs: float, lam_from_airs: float, airs_tiles: int, radio: RadioParams) -> float:
    """Compose the SNR of a path through one active IRS from its two log-weight sums."""
    n = radio.elements_per_tile_dim
    c0, ca = radio.c0, radio.ca
    terms = [
        lam_to_airs - math.log(c0 * n * n * airs_tiles),
        lam_from_airs - math.log(ca),
        lam_to_airs + lam_from_airs - math.log(c0 * ca),
    ]
    return safe_exp(-_logsumexp(terms))


def hybrid_path_snr(radio: RadioParams, hop_gains_sq: Sequence[float], tiles_on_path: Sequence[int],
                    airs_position: int) -> float:
    """SNR of a path whose ``airs_position``-th IRS (1-based) is active and all others passive."""
    L = _check_lengths(hop_gains_sq, tiles_on_path)
    if not 1 <= airs_position <= L:
        raise ValueError(f"airs_position must be in 1..{L}, got {airs_position}")
    lam1 = -math.log(hop_gains_sq[0])
    for m in range(1, airs_position):
        lam1 += _hop_term(radio, hop_gains_sq[m], tiles_on_path[m - 1])
    lam2 = sum(_hop_term(radio, hop_gains_sq[m], tiles_on_path[m - 1]) for m in range(airs_position, L + 1))
    return hybrid_snr_from_weights(lam1, lam2, tiles_on_path[airs_position - 1], radio)


def tradeoff_ratio(L: int, l: int, d0: float, T0: float, cost_ratio: float, radio: RadioParams) -> float:
    """SNR ratio between an equally spaced chain with its l-th PIRS swapped for an AIRS and the all-PIRS chain.

    The AIRS carries ``T0 * cost_ratio`` tiles so the hardware cost is unchanged.
    """
    if not 1 <= l <= L:
        raise ValueError(f"l must be in 1..{L}")
    n = radio.elements_per_tile_dim
    n0 = n * n * T0
    kappa0 = math.sqrt(radio.ref_path_gain) / d0 ** (radio.pathloss_exponent / 2.0)
    c0, ca, c = radio.c0, radio.ca, cost_ratio
    num = ca * c * c * n0 * n0
    den = ca * c * n0 * (kappa0 * n0) ** (2 * (L + 1 - l)) + c0 * (kappa0 * n0) ** (2 * l) + n0 * n0
    return num / den
