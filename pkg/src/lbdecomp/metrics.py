"""Decomposition quality metrics and the predicted step-time model.

Edge cut counts lattice links crossing part boundaries; load imbalance is
max part load over mean part load.  The step-time prediction is a
bulk-synchronous max over parts of compute plus alpha-beta communication
cost.  "Imbalance reduction" is defined on the excess over 1.0, so 100%
means a perfectly balanced result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lbdecomp.errors import PartitionError
from lbdecomp.partition import LatticeGraph, Partition

METRICS_CSV_HEADER = [
    "variant",
    "nparts",
    "seed",
    "edge_cut",
    "load_imbalance",
    "max_comm_volume",
    "max_partners",
    "predicted_step_time_s",
]


@dataclass(frozen=True)
class CommModel:
    """Alpha-beta cost: seconds per message plus seconds per byte."""

    alpha: float = 0.0
    beta: float = 0.0
    bytes_per_link: int = 8

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")


@dataclass
class DecompositionMetrics:
    edge_cut: int
    part_loads: np.ndarray
    load_imbalance: float
    comm_volume: np.ndarray
    comm_partners: np.ndarray
    predicted_step_time: float
    has_empty_parts: bool = False


def _cut_pairs(graph: LatticeGraph, assignment: np.ndarray):
    src = np.repeat(np.arange(graph.n, dtype=np.int64), np.diff(graph.xadj))
    ps, pd = assignment[src], assignment[graph.adjncy]
    cut = ps != pd
    return ps[cut], pd[cut]


def edge_cut(graph: LatticeGraph, partition: Partition) -> int:
    """Undirected links whose endpoints lie in different parts."""
    assignment = partition.assignment
    if (assignment < 0).any() or (assignment >= partition.nparts).any():
        raise PartitionError("part id out of range")
    ps, _ = _cut_pairs(graph, assignment)
    return int(len(ps)) // 2


def load_imbalance(partition: Partition,
                   weights: np.ndarray) -> tuple[float, bool]:
    """(max part load / mean part load, empty-part flag)."""
    if partition.nparts == 0:
        raise PartitionError("nparts must be positive")
    loads = np.bincount(partition.assignment,
                        weights=np.asarray(weights, dtype=np.float64),
                        minlength=partition.nparts)
    sizes = np.bincount(partition.assignment, minlength=partition.nparts)
    return float(loads.max() / loads.mean()), bool((sizes == 0).any())


def comm_profile(graph: LatticeGraph,
                 partition: Partition) -> tuple[np.ndarray, np.ndarray]:
    """Per part: cut links incident to it, and distinct neighbour parts."""
    ps, pd = _cut_pairs(graph, partition.assignment)
    k = partition.nparts
    volume = np.bincount(ps, minlength=k)
    pairs = np.unique(ps * k + pd)
    partners = np.bincount((pairs // k).astype(np.int64), minlength=k)
    return volume.astype(np.int64), partners.astype(np.int64)


def predicted_step_time(
    part_cost_loads: np.ndarray,
    comm_volume: np.ndarray,
    comm_partners: np.ndarray,
    comm: CommModel,
    per_site_time: float,
) -> float:
    """Bulk-synchronous model: max over parts of compute + communication.

    ``part_cost_loads`` are per-part sums of site cost / 10 (so one bulk
    site costs one ``per_site_time``).
    """
    compute = per_site_time * np.asarray(part_cost_loads, dtype=np.float64)
    comms = (
        np.asarray(comm_partners, dtype=np.float64) * comm.alpha
        + np.asarray(comm_volume, dtype=np.float64) * comm.bytes_per_link * comm.beta
    )
    return float((compute + comms).max())


def simulate_timeline(
    graph: LatticeGraph,
    partition: Partition,
    site_costs: np.ndarray,
    comm: CommModel,
    per_site_time: float,
) -> float:
    """Predicted step time for a partition under the fitted cost model."""
    loads = np.bincount(partition.assignment,
                        weights=np.asarray(site_costs, dtype=np.float64) / 10.0,
                        minlength=partition.nparts)
    volume, partners = comm_profile(graph, partition)
    return predicted_step_time(loads, volume, partners, comm, per_site_time)


def imbalance_reduction(baseline: float, improved: float) -> float:
    """Percent reduction of the imbalance excess (imbalance - 1)."""
    if baseline < 1.0 or improved < 1.0:
        raise ValueError("imbalance values must be >= 1.0")
    if baseline == 1.0:
        return 0.0
    return 100.0 * ((baseline - 1.0) - (improved - 1.0)) / (baseline - 1.0)


def compute_metrics(
    graph: LatticeGraph,
    partition: Partition,
    site_costs: np.ndarray,
    comm: CommModel,
    per_site_time: float = 1e-7,
) -> DecompositionMetrics:
    """Full metric set for one partition under the fitted cost model."""
    cut = edge_cut(graph, partition)
    costs = np.asarray(site_costs, dtype=np.float64)
    loads = np.bincount(partition.assignment, weights=costs,
                        minlength=partition.nparts)
    sizes = np.bincount(partition.assignment, minlength=partition.nparts)
    volume, partners = comm_profile(graph, partition)
    step_time = predicted_step_time(loads / 10.0, volume, partners, comm,
                                    per_site_time)
    return DecompositionMetrics(
        edge_cut=cut,
        part_loads=loads,
        load_imbalance=float(loads.max() / loads.mean()),
        comm_volume=volume,
        comm_partners=partners,
        predicted_step_time=step_time,
        has_empty_parts=bool((sizes == 0).any()),
    )
