"""Network geometry: cluster-head grids, sensor placement, neighbor structure."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NetworkTopology",
    "as_position",
    "build_grid_network",
    "deployment_center",
    "distance",
    "dump_topology_csv",
    "true_range_difference",
]


def as_position(point) -> np.ndarray:
    """Coerce a 2-coordinate point to a float array, rejecting non-finite input."""
    arr = np.asarray(point, dtype=float).reshape(-1)
    if arr.shape != (2,):
        raise ValueError(f"expected 2 coordinates, got shape {np.shape(point)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coordinates must be finite")
    return arr


def distance(a, b) -> float:
    """Euclidean distance between two points."""
    return float(np.linalg.norm(as_position(a) - as_position(b)))


def true_range_difference(source, node_i, node_j) -> float:
    """Noise-free range difference ||source - node_i|| - ||source - node_j||.

    Antisymmetric in (node_i, node_j); magnitude never exceeds the distance
    between the two nodes.
    """
    src = as_position(source)
    d_i = float(np.linalg.norm(src - as_position(node_i)))
    d_j = float(np.linalg.norm(src - as_position(node_j)))
    return d_i - d_j


@dataclass(frozen=True)
class NetworkTopology:
    """Immutable cluster-head / sensor layout with head adjacency.

    heads: (N, 2) cluster-head positions.
    sensors: (N, M, 2) sensor positions; row l belongs to head l.
    adjacency: (N, N) boolean, symmetric, zero diagonal.

    Neighborhoods consumed by the estimators are self-inclusive:
    N_k = {k} plus the heads adjacent to k.
    """

    heads: np.ndarray
    sensors: np.ndarray
    adjacency: np.ndarray

    def __post_init__(self):
        if self.heads.ndim != 2 or self.heads.shape[1] != 2:
            raise ValueError("heads must have shape (N, 2)")
        if self.sensors.ndim != 3 or self.sensors.shape[2] != 2:
            raise ValueError("sensors must have shape (N, M, 2)")
        if self.sensors.shape[0] != self.heads.shape[0]:
            raise ValueError("sensors and heads disagree on head count")
        n = self.heads.shape[0]
        if self.adjacency.shape != (n, n):
            raise ValueError("adjacency must be (N, N)")
        if self.adjacency.diagonal().any():
            raise ValueError("adjacency diagonal must be zero")
        if not np.array_equal(self.adjacency, self.adjacency.T):
            raise ValueError("adjacency must be symmetric")

    @property
    def n_heads(self) -> int:
        return self.heads.shape[0]

    @property
    def sensors_per_head(self) -> int:
        return self.sensors.shape[1]

    @property
    def n_measurements(self) -> int:
        """One range difference per sensor, referenced to its own head."""
        return self.n_heads * self.sensors_per_head

    def neighborhood(self, k: int) -> np.ndarray:
        """Sorted indices of head k's self-inclusive neighborhood."""
        mask = self.adjacency[k].copy()
        mask[k] = True
        return np.flatnonzero(mask)

    @property
    def degrees(self) -> np.ndarray:
        """Self-inclusive neighborhood size of every head."""
        return self.adjacency.sum(axis=1).astype(int) + 1

    def measurement_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """(head_idx, sensor_idx) arrays in canonical head-major order."""
        head_idx = np.repeat(np.arange(self.n_heads), self.sensors_per_head)
        sensor_idx = np.tile(np.arange(self.sensors_per_head), self.n_heads)
        return head_idx, sensor_idx


def build_grid_network(
    n_heads: int,
    spacing: float = 50.0,
    sensors_per_head: int = 10,
    placement_radius: float = 10.0,
    neighbor_radius: float = 55.0,
    seed=None,
) -> NetworkTopology:
    """Place cluster heads on a square grid and scatter sensors around them.

    Heads sit on a sqrt(N) x sqrt(N) grid with the given spacing, head l at
    (spacing * (l // side), spacing * (l % side)). Each head gets
    sensors_per_head sensors drawn uniformly over a disk of
    placement_radius around it. Two heads are adjacent when their distance
    is at most neighbor_radius.

    Args:
        n_heads: perfect square number of cluster heads.
        spacing: grid pitch in meters.
        sensors_per_head: sensors attached to each head.
        placement_radius: disk radius for sensor placement, meters.
        neighbor_radius: adjacency cutoff distance, meters.
        seed: anything accepted by numpy.random.default_rng.

    Returns:
        NetworkTopology; the same seed always yields the same topology.
    """
    side = math.isqrt(n_heads)
    if side * side != n_heads or n_heads < 1:
        raise ValueError(f"n_heads must be a perfect square, got {n_heads}")
    if sensors_per_head < 1:
        raise ValueError("sensors_per_head must be positive")
    if spacing <= 0 or placement_radius <= 0 or neighbor_radius <= 0:
        raise ValueError("spacing and radii must be positive")

    rng = np.random.default_rng(seed)
    idx = np.arange(n_heads)
    heads = spacing * np.column_stack((idx // side, idx % side)).astype(float)

    # uniform over the disk: radius scales with sqrt of a uniform draw
    radii = placement_radius * np.sqrt(rng.random((n_heads, sensors_per_head)))
    angles = 2.0 * np.pi * rng.random((n_heads, sensors_per_head))
    offsets = np.stack((radii * np.cos(angles), radii * np.sin(angles)), axis=-1)
    sensors = heads[:, None, :] + offsets

    gaps = np.linalg.norm(heads[:, None, :] - heads[None, :, :], axis=-1)
    adjacency = (gaps <= neighbor_radius) & ~np.eye(n_heads, dtype=bool)

    return NetworkTopology(heads=heads, sensors=sensors, adjacency=adjacency)


def deployment_center(topology: NetworkTopology) -> np.ndarray:
    """Center of the deployment area: midpoint of the head bounding box."""
    lo = topology.heads.min(axis=0)
    hi = topology.heads.max(axis=0)
    return 0.5 * (lo + hi)


def dump_topology_csv(topology: NetworkTopology, path) -> None:
    """Write the layout as rows of kind,head_id,sensor_id,x1,x2."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kind", "head_id", "sensor_id", "x1", "x2"])
        for l in range(topology.n_heads):
            x1, x2 = topology.heads[l]
            writer.writerow(["head", l, "", f"{x1:.9g}", f"{x2:.9g}"])
        for l in range(topology.n_heads):
            for m in range(topology.sensors_per_head):
                x1, x2 = topology.sensors[l, m]
                writer.writerow(["sensor", l, m, f"{x1:.9g}", f"{x2:.9g}"])
