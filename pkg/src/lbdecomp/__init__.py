"""Cost-weighted domain decomposition toolkit for sparse lattice-Boltzmann
geometries.

Subpackages cover synthetic geometry generation and classification,
Morton-order sorting, per-site-type cost calibration, multilevel weighted
k-way partitioning, a serial D3Q19 LBGK kernel for validation and
micro-benchmarks, and decomposition quality metrics.
"""

from lbdecomp.geometry import (
    Geometry,
    SiteType,
    generate_bifurcation,
    generate_cylinder,
    load_geometry,
    save_geometry,
)
from lbdecomp.partition import (
    LatticeGraph,
    Partition,
    PartitionConfig,
    PartitionVariant,
    build_graph,
    partition_geom_kway,
    partition_kway,
)
from lbdecomp.weights import FittedCosts, WeightTable, assign_weights, fit_costs, round_costs

__all__ = [
    "Geometry",
    "SiteType",
    "generate_cylinder",
    "generate_bifurcation",
    "save_geometry",
    "load_geometry",
    "LatticeGraph",
    "Partition",
    "PartitionConfig",
    "PartitionVariant",
    "build_graph",
    "partition_kway",
    "partition_geom_kway",
    "FittedCosts",
    "WeightTable",
    "fit_costs",
    "round_costs",
    "assign_weights",
]

__version__ = "0.1.0"
