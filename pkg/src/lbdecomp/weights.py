"""Per-site-type cost fitting and integer partitioning weights.

Costs are fitted by ordinary least squares from runtime observations
(runtime ~ sum over types of count * cost), normalized so bulk = 10, and
rounded to power-of-two integer weights with bulk = 4 for the
partitioner.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from lbdecomp.errors import SchemaError, UnderdeterminedFitError
from lbdecomp.geometry import Geometry, SiteType

BULK_COST_NORM = 10.0
DEFAULT_WEIGHT_BASE = 4

_TYPE_ORDER = [
    SiteType.BULK,
    SiteType.WALL,
    SiteType.INOUTLET,
    SiteType.WALL_INOUTLET,
]
_TYPE_NAMES = {
    SiteType.BULK: "bulk",
    SiteType.WALL: "wall",
    SiteType.INOUTLET: "inout",
    SiteType.WALL_INOUTLET: "wallinout",
}
_NAME_TYPES = {v: k for k, v in _TYPE_NAMES.items()}

OBSERVATION_HEADER = ["bulk", "wall", "inout", "wallinout", "runtime_s"]


@dataclass(frozen=True)
class BenchmarkObservation:
    """Per-type site counts of one run plus its measured runtime."""

    counts: dict[SiteType, int]
    runtime_s: float

    def __post_init__(self):
        if self.runtime_s <= 0:
            raise ValueError("runtime must be positive")
        if all(c <= 0 for c in self.counts.values()):
            raise ValueError("at least one site count must be positive")

    def count_row(self) -> np.ndarray:
        return np.array(
            [self.counts.get(t, 0) for t in _TYPE_ORDER], dtype=np.float64
        )


@dataclass(frozen=True)
class FittedCosts:
    """Real per-type costs normalized so bulk = 10.0."""

    bulk: float
    wall: float
    inoutlet: float
    wall_inoutlet: float
    warnings: tuple[str, ...] = ()

    def cost(self, t: SiteType) -> float:
        return self.as_array()[t.value]

    def as_array(self) -> np.ndarray:
        return np.array([self.bulk, self.wall, self.inoutlet, self.wall_inoutlet])


@dataclass(frozen=True)
class WeightTable:
    """Positive integer vertex weights per site type."""

    bulk: int
    wall: int
    inoutlet: int
    wall_inoutlet: int

    def __post_init__(self):
        if min(self.bulk, self.wall, self.inoutlet, self.wall_inoutlet) < 1:
            raise ValueError("weights must be >= 1")

    @classmethod
    def unit(cls) -> "WeightTable":
        """Unweighted baseline: every site type counts as 1."""
        return cls(1, 1, 1, 1)

    def weight(self, t: SiteType) -> int:
        return self.as_array()[t.value]

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.bulk, self.wall, self.inoutlet, self.wall_inoutlet],
            dtype=np.int64,
        )


def fit_costs(observations: list[BenchmarkObservation]) -> FittedCosts:
    """Least-squares per-type costs, scaled so bulk = 10.0.

    Site types absent from every observation inherit the bulk cost (with a
    warning); a rank-deficient system over the present types raises
    :class:`UnderdeterminedFitError`.  Non-positive fitted costs are
    clamped and flagged rather than returned.
    """
    if not observations:
        raise UnderdeterminedFitError("no observations")
    a = np.stack([o.count_row() for o in observations])
    b = np.array([o.runtime_s for o in observations])

    active = np.nonzero(a.sum(axis=0) > 0)[0]
    if SiteType.BULK.value not in active:
        raise UnderdeterminedFitError("no observation contains bulk sites")
    a_act = a[:, active]
    if len(observations) < len(active) or np.linalg.matrix_rank(a_act) < len(active):
        raise UnderdeterminedFitError(
            f"{len(observations)} observations cannot determine "
            f"{len(active)} site-type costs; vary the geometry mix"
        )
    # runtime noise is multiplicative, so weight each observation by its
    # runtime: minimize the relative residuals
    sol, *_ = np.linalg.lstsq(a_act / b[:, None], np.ones(len(b)), rcond=None)

    warnings = []
    costs = np.full(4, np.nan)
    costs[active] = sol
    for idx in range(4):
        name = _TYPE_NAMES[_TYPE_ORDER[idx]]
        if np.isnan(costs[idx]):
            costs[idx] = costs[SiteType.BULK.value]
            warnings.append(f"no {name} sites observed; assuming bulk cost")
        elif costs[idx] <= 0:
            warnings.append(
                f"degenerate fit: non-positive cost for {name} sites, clamped"
            )
            costs[idx] = 1e-6 * abs(costs[SiteType.BULK.value])
    if costs[SiteType.BULK.value] <= 0:
        raise UnderdeterminedFitError("fitted bulk cost is not positive")

    costs *= BULK_COST_NORM / costs[SiteType.BULK.value]
    return FittedCosts(*costs, warnings=tuple(warnings))


def _nearest_power_of_two(v: float) -> int:
    if v <= 1.0:
        return 1
    k = int(np.floor(np.log2(v)))
    lo, hi = 2**k, 2 ** (k + 1)
    return lo if v - lo <= hi - v else hi


def round_costs(c: FittedCosts, base: int = DEFAULT_WEIGHT_BASE) -> WeightTable:
    """Integer weights: nearest power of two to (cost / bulk) * base.

    Wall-in/outlet always inherits the in/outlet weight; its own fit is
    too erratic to trust (those sites are a sub-percent fraction of the
    calibration runs).
    """
    scaled = c.as_array() / c.bulk * base
    w = [_nearest_power_of_two(v) for v in scaled]
    w[SiteType.WALL_INOUTLET.value] = w[SiteType.INOUTLET.value]
    return WeightTable(*w)


def assign_weights(g: Geometry, table: WeightTable) -> np.ndarray:
    """Per-site integer weight vector in geometry site order."""
    return table.as_array()[g.site_type]


def assign_costs(g: Geometry, costs: FittedCosts) -> np.ndarray:
    """Per-site fitted cost vector in geometry site order."""
    return costs.as_array()[g.site_type]


# ---------------------------------------------------------------------------
# file formats

def save_weight_table(table: WeightTable, path) -> None:
    with open(path, "w") as fh:
        for t in _TYPE_ORDER:
            fh.write(f"{_TYPE_NAMES[t]}={table.weight(t)}\n")


def load_weight_table(path) -> WeightTable:
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, _, val = line.partition("=")
            if name.strip() not in _NAME_TYPES:
                raise SchemaError(f"unknown site type {name.strip()!r}")
            values[_NAME_TYPES[name.strip()]] = int(val)
    missing = [t for t in _TYPE_ORDER if t not in values]
    if missing:
        raise SchemaError(f"weight table missing entries for {missing}")
    return WeightTable(*(values[t] for t in _TYPE_ORDER))


def save_observations(observations: list[BenchmarkObservation], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(OBSERVATION_HEADER)
        for o in observations:
            writer.writerow(
                [int(v) for v in o.count_row()] + [repr(o.runtime_s)]
            )


def load_observations(path) -> list[BenchmarkObservation]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != OBSERVATION_HEADER:
            raise SchemaError(
                f"expected header {OBSERVATION_HEADER}, got {header}"
            )
        out = []
        for row in reader:
            if not row:
                continue
            counts = {
                t: int(row[i]) for i, t in enumerate(_TYPE_ORDER)
            }
            out.append(BenchmarkObservation(counts, float(row[4])))
    return out
