"""Decomposition metrics against brute-force oracles and hand evaluations."""

import numpy as np
import pytest

from lbdecomp.errors import PartitionError
from lbdecomp.metrics import (
    CommModel,
    comm_profile,
    compute_metrics,
    edge_cut,
    imbalance_reduction,
    load_imbalance,
    predicted_step_time,
    simulate_timeline,
)
from lbdecomp.partition import LatticeGraph, Partition, PartitionConfig


def make_partition(assignment, nparts):
    return Partition(
        assignment=np.asarray(assignment, dtype=np.int64),
        nparts=nparts,
        config=PartitionConfig(nparts=nparts),
    )


def random_graph(n, p, seed):
    rng = np.random.default_rng(seed)
    edges = [
        (u, v)
        for u in range(n)
        for v in range(u + 1, n)
        if rng.random() < p
    ]
    return LatticeGraph.from_edges(n, edges), edges


def test_edge_cut_matches_double_loop_oracle():
    graph, edges = random_graph(50, 0.15, seed=11)
    rng = np.random.default_rng(12)
    assignment = rng.integers(0, 4, size=50)
    expected = sum(1 for u, v in edges if assignment[u] != assignment[v])
    assert edge_cut(graph, make_partition(assignment, 4)) == expected


def test_edge_cut_rejects_out_of_range_parts():
    graph, _ = random_graph(10, 0.3, seed=1)
    p = make_partition([0] * 9 + [5], 4)
    with pytest.raises(PartitionError):
        edge_cut(graph, p)


def test_load_imbalance_hand_values():
    p = make_partition([0] * 4 + [1] * 4 + [2] * 4, 3)
    w = np.array([10, 10, 10, 10, 10, 10, 10, 10, 12, 12, 12, 12])
    ratio, empty = load_imbalance(p, w)
    assert ratio == pytest.approx(48 / ((40 + 40 + 48) / 3))
    assert ratio == pytest.approx(1.125)
    assert not empty


def test_load_imbalance_flags_empty_parts():
    p = make_partition([0, 0], 2)
    ratio, empty = load_imbalance(p, np.array([5, 5]))
    assert ratio == pytest.approx(2.0)
    assert empty


def test_comm_profile_ring_of_four_parts():
    # 8-cycle split into 4 arcs of 2: each part borders exactly 2 others
    edges = [(i, (i + 1) % 8) for i in range(8)]
    graph = LatticeGraph.from_edges(8, edges)
    p = make_partition([0, 0, 1, 1, 2, 2, 3, 3], 4)
    volume, partners = comm_profile(graph, p)
    assert volume.tolist() == [2, 2, 2, 2]
    assert partners.tolist() == [2, 2, 2, 2]


def test_comm_profile_single_part_is_silent():
    graph, _ = random_graph(6, 0.5, seed=2)
    volume, partners = comm_profile(graph, make_partition([0] * 6, 1))
    assert volume.tolist() == [0]
    assert partners.tolist() == [0]


def test_predicted_step_time_hand_evaluations():
    comm = CommModel(alpha=1e-6, beta=1e-9)
    # part 0: 100 sites, 3 partners, 50 links
    # part 1: 120 sites, 1 partner, 10 links
    t = predicted_step_time(
        np.array([100.0, 120.0]),
        np.array([50, 10]),
        np.array([3, 1]),
        comm,
        per_site_time=1e-7,
    )
    t0 = 100 * 1e-7 + 3 * 1e-6 + 50 * 8 * 1e-9
    t1 = 120 * 1e-7 + 1 * 1e-6 + 10 * 8 * 1e-9
    assert t == pytest.approx(max(t0, t1))
    assert t == pytest.approx(t0)


def test_simulate_timeline_two_sites():
    graph = LatticeGraph.from_edges(2, [(0, 1)])
    p = make_partition([0, 1], 2)
    t = simulate_timeline(
        graph, p, np.array([10.0, 10.0]),
        CommModel(alpha=1e-6, beta=1e-9), per_site_time=1e-7,
    )
    assert t == pytest.approx(1e-7 + 1e-6 + 8e-9)


def test_simulate_timeline_compute_only():
    edges = [(0, 1), (1, 2), (2, 3)]
    graph = LatticeGraph.from_edges(4, edges)
    p = make_partition([0, 0, 1, 1], 2)
    costs = np.array([10.0, 20.0, 10.0, 10.0])
    t = simulate_timeline(graph, p, costs, CommModel(), per_site_time=1e-7)
    assert t == pytest.approx(3e-7)  # part 0 carries 30/10 site equivalents


def test_predicted_step_time_monotone_in_comm_costs():
    loads = np.array([100.0, 90.0])
    vol = np.array([40, 60])
    partners = np.array([2, 3])
    base = predicted_step_time(loads, vol, partners, CommModel(), 1e-7)
    slower = predicted_step_time(
        loads, vol, partners, CommModel(alpha=1e-5, beta=1e-8), 1e-7
    )
    assert slower > base


def test_imbalance_reduction_values():
    assert imbalance_reduction(1.40, 1.06) == pytest.approx(85.0)
    assert imbalance_reduction(1.20, 1.10) == pytest.approx(50.0)
    assert imbalance_reduction(1.0, 1.0) == 0.0
    assert imbalance_reduction(1.25, 1.25) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        imbalance_reduction(0.9, 1.0)
    with pytest.raises(ValueError):
        imbalance_reduction(1.2, 0.99)


def test_compute_metrics_is_consistent():
    graph, _ = random_graph(30, 0.2, seed=5)
    rng = np.random.default_rng(6)
    assignment = rng.integers(0, 3, size=30)
    p = make_partition(assignment, 3)
    costs = rng.uniform(10, 40, size=30)
    comm = CommModel(alpha=1e-6, beta=1e-9)
    m = compute_metrics(graph, p, costs, comm, per_site_time=1e-7)
    assert m.edge_cut == edge_cut(graph, p)
    assert m.part_loads.sum() == pytest.approx(costs.sum())
    ratio, empty = load_imbalance(p, costs)
    assert m.load_imbalance == pytest.approx(ratio)
    assert m.has_empty_parts == empty
    assert m.predicted_step_time == pytest.approx(
        simulate_timeline(graph, p, costs, comm, 1e-7)
    )
