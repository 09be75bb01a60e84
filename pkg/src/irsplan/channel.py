"""Explicit LoS channel matrices and beamformed SNR along one path.

This is the verification counterpart of the closed forms in ``snr``: it builds
every hop as a rank-one array-response outer product from 3D geometry, applies
MRT at the BS, per-element phase alignment at each IRS and (optionally) one
active IRS with its amplification noise, then measures signal and noise power.
Meant for oracle-scale use only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .scenario import BS_NODE, Scenario, worst_case_distance
from .snr import DeploymentPlan, path_gain_sq


def steering_vector(spatial_freq: float, length: int) -> np.ndarray:
    if length < 1:
        raise ValueError("steering vector length must be >= 1")
    return np.exp(-1j * np.pi * spatial_freq * np.arange(length))


@dataclass(frozen=True)
class ArrayGeometry:
    kind: str  # "ula" (BS) or "upa" (IRS)
    nx: int
    nz: int = 1

    def __post_init__(self):
        if self.kind not in ("ula", "upa"):
            raise ValueError(f"unknown array kind {self.kind!r}")
        if self.nx < 1 or self.nz < 1:
            raise ValueError("array dimensions must be >= 1")
        if self.kind == "ula" and self.nz != 1:
            raise ValueError("a linear array has nz = 1")

    @property
    def size(self) -> int:
        return self.nx * self.nz


def upa_response(azimuth: float, elevation: float, geometry: ArrayGeometry,
                 spacing_over_wavelength: float) -> np.ndarray:
    """Planar array response in the x-z plane: x-axis steering vector kron z-axis steering vector."""
    s = 2.0 * spacing_over_wavelength
    return np.kron(
        steering_vector(s * math.cos(azimuth) * math.sin(elevation), geometry.nx),
        steering_vector(s * math.cos(elevation), geometry.nz),
    )


def ula_response(axis_cosine: float, length: int, spacing_over_wavelength: float) -> np.ndarray:
    """Linear array along the x axis; ``axis_cosine`` is the cosine to that axis."""
    return steering_vector(2.0 * spacing_over_wavelength * axis_cosine, length)


def direction_angles(src, dst) -> tuple[float, float]:
    """Azimuth and elevation of the direction src -> dst (elevation measured from +z)."""
    v = np.asarray(dst, float) - np.asarray(src, float)
    r = float(np.linalg.norm(v))
    if r == 0:
        raise ValueError("coincident points have no direction")
    return math.atan2(v[1], v[0]), math.acos(max(-1.0, min(1.0, v[2] / r)))


class _PathGeometry:
    def __init__(self, scenario: Scenario, plan: DeploymentPlan, path: Sequence[int]):
        if len(path) < 2:
            raise ValueError("a path needs at least a source and a target")
        graph = scenario.los_graph
        if path[0] != BS_NODE or not graph.is_user(path[-1]):
            raise ValueError("a path runs from the BS (vertex 0) to a user vertex")
        tiles = plan.tiles
        for v in path[1:-1]:
            if graph.is_user(v) or v == BS_NODE:
                raise ValueError(f"vertex {v} cannot be an intermediate reflector")
            if v not in tiles:
                raise ValueError(f"intermediate vertex {v} has no tiles deployed")
        for u, v in zip(path, path[1:]):
            if (u, v) not in graph.edges:
                raise ValueError(f"no LoS edge ({u}, {v})")
        self.scenario = scenario
        self.path = tuple(path)
        self.cell = path[-1] - scenario.num_cells
        radio = scenario.radio
        self.spacing = radio.element_spacing / radio.wavelength
        n = radio.elements_per_tile_dim
        self.geom = {v: ArrayGeometry("upa", tiles[v] * n, n) for v in path[1:-1]}

    def position(self, v: int, seen_from: int | None = None):
        if v >= self.scenario.num_cells:
            return self.scenario.user_position(seen_from, self.cell)
        return self.scenario.positions[v]

    def hop_distance(self, u: int, v: int) -> float:
        if v >= self.scenario.num_cells:
            return worst_case_distance(self.scenario, u, self.cell)
        return float(math.dist(self.scenario.positions[u], self.scenario.positions[v]))

    def tx_response(self, u: int, v: int) -> np.ndarray:
        """Transmit array response of node u towards v."""
        src, dst = self.position(u), self.position(v, seen_from=u)
        if u == BS_NODE:
            diff = np.asarray(dst, float) - np.asarray(src, float)
            m = self.scenario.radio.bs_antennas
            return ula_response(diff[0] / np.linalg.norm(diff), m, self.spacing)
        az, el = direction_angles(src, dst)
        return upa_response(az, el, self.geom[u], self.spacing)

    def rx_response(self, u: int, v: int) -> np.ndarray:
        """Receive array response of v for a signal arriving from u."""
        if v >= self.scenario.num_cells:
            return np.ones(1, dtype=complex)
        az, el = direction_angles(self.position(v), self.position(u))
        return upa_response(az, el, self.geom[v], self.spacing)


def build_channels(scenario: Scenario, plan: DeploymentPlan, path: Sequence[int]) -> list[np.ndarray]:
    """Per-hop channel matrices (rows: receive elements, cols: transmit elements)."""
    geo = _PathGeometry(scenario, plan, path)
    lam = scenario.radio.wavelength
    out = []
    for u, v in zip(geo.path, geo.path[1:]):
        d = geo.hop_distance(u, v)
        kappa = math.sqrt(path_gain_sq(d, scenario.radio))
        phase = np.exp(-2j * np.pi * d / lam)
        out.append(phase * kappa * np.outer(geo.rx_response(u, v), geo.tx_response(u, v).conj()))
    return out


def explicit_path_snr(scenario: Scenario, plan: DeploymentPlan, path: Sequence[int],
                      airs_index: int | None = None,
                      phases: Mapping[int, np.ndarray] | None = None) -> float:
    """Received SNR along ``path`` computed from explicit channel matrices.

    ``phases`` optionally overrides the aligned reflection phases of chosen IRSs.
    """
    geo = _PathGeometry(scenario, plan, path)
    radio = scenario.radio
    mids = geo.path[1:-1]
    active = [v for v in mids if v in plan.active]
    if airs_index is None:
        if len(active) > 1:
            raise ValueError(f"path crosses {len(active)} active IRSs; at most one is allowed")
        airs_index = active[0] if active else None
    else:
        if airs_index not in mids:
            raise ValueError(f"active IRS {airs_index} is not an intermediate vertex of the path")
        if any(v != airs_index for v in active):
            raise ValueError("path crosses more than one active IRS")
    if len(set(mids)) != len(mids):
        raise ValueError("path revisits an IRS")

    chans = build_channels(scenario, plan, path)
    sigma2 = radio.noise_power_watts
    n = radio.elements_per_tile_dim

    bs_tx = geo.tx_response(BS_NODE, geo.path[1])
    w = math.sqrt(radio.tx_power_watts) * bs_tx / np.linalg.norm(bs_tx)

    coeffs = {}
    for m, v in enumerate(mids, start=1):
        if phases is not None and v in phases:
            theta = np.asarray(phases[v], float)
        else:
            rx = geo.rx_response(geo.path[m - 1], v)
            tx = geo.tx_response(v, geo.path[m + 1])
            theta = np.angle(rx.conj() * tx)
        coeffs[v] = np.exp(1j * theta)

    if airs_index is not None:
        l = mids.index(airs_index) + 1
        incident = abs(np.vdot(bs_tx, w)) ** 2 * path_gain_sq(geo.hop_distance(BS_NODE, geo.path[1]), radio)
        for m in range(1, l):
            u, v = geo.path[m], geo.path[m + 1]
            incident *= path_gain_sq(geo.hop_distance(u, v), radio) * (n * n * plan.tiles[u]) ** 2
        eta2 = radio.amp_power_per_element_watts / (incident + sigma2)
        coeffs[airs_index] = coeffs[airs_index] * math.sqrt(eta2)

    x = chans[0] @ w
    for m, v in enumerate(mids, start=1):
        x = chans[m] @ (coeffs[v] * x)
    signal = float(abs(x[0]) ** 2)

    noise = sigma2
    if airs_index is not None:
        # downstream row map from the active IRS output to the receiver
        row = chans[-1][0]
        for m in range(len(mids), l, -1):
            row = (row * coeffs[mids[m - 1]]) @ chans[m - 1]
        noise += sigma2 * float(np.sum(np.abs(row * coeffs[airs_index]) ** 2))
    return signal / noise
