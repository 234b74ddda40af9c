"""Command line harness: geometry generation, cost calibration,
decomposition experiments, and report tables.

Timing-dependent work (``calibrate``) is kept separate from the
deterministic decomposition pipeline (``decompose``), whose CSV output is
byte-identical for a fixed config and geometry.
"""

from __future__ import annotations

import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from lbdecomp import geometry as geo
from lbdecomp import lbkernel, partition as part, sfc
from lbdecomp import metrics as met
from lbdecomp import weights as wts
from lbdecomp.errors import LbdecompError, SchemaError

VARIANTS = ("baseline", "weights", "sfc", "weights+sfc")

DEFAULT_WEIGHT_TABLE = wts.WeightTable(4, 8, 16, 16)
DEFAULT_PER_SITE_TIME = 1e-7


@dataclass
class ExperimentConfig:
    geometry_path: str
    part_counts: list[int]
    variants: list[str]
    weight_table: wts.WeightTable
    comm: met.CommModel
    seed: int = 0
    tolerance: float = 1.001
    per_site_time: float = DEFAULT_PER_SITE_TIME
    out_dir: Path = Path(".")

    def __post_init__(self):
        if not self.part_counts or not self.variants:
            raise ValueError("part counts and variants must be non-empty")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise ValueError(f"unknown variants: {sorted(unknown)}")


def _worker_count() -> int:
    raw = os.environ.get("LATTICE_DECOMP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _variant_partition(g, graph_w, graph_u, variant, nparts, tolerance, seed):
    weighted = variant in ("weights", "weights+sfc")
    use_sfc = variant in ("sfc", "weights+sfc")
    graph = graph_w if weighted else graph_u
    cfg = part.PartitionConfig(
        nparts=nparts,
        tolerance=tolerance,
        seed=seed,
        variant=(part.PartitionVariant.GEOM_KWAY if use_sfc
                 else part.PartitionVariant.KWAY),
    )
    if use_sfc:
        return graph, part.partition_geom_kway(graph, cfg)
    return graph, part.partition_kway(graph, cfg)


def run_experiment(cfg: ExperimentConfig) -> list[dict]:
    """Partition and score every (variant, nparts) combination."""
    g = geo.load_geometry(cfg.geometry_path)
    table = cfg.weight_table
    # cost model in which metrics are evaluated: bulk scaled to 10
    cost_table = table if table != wts.WeightTable.unit() else DEFAULT_WEIGHT_TABLE
    site_costs = cost_table.as_array()[g.site_type] / cost_table.bulk * 10.0

    w_weighted = wts.assign_weights(g, table)
    w_unit = np.ones(g.n_sites, dtype=np.int64)
    graph_w = part.build_graph(g, w_weighted)
    graph_u = part.build_graph(g, w_unit)

    jobs = [(v, k) for v in cfg.variants for k in cfg.part_counts]

    def run_one(job):
        variant, nparts = job
        try:
            graph, p = _variant_partition(
                g, graph_w, graph_u, variant, nparts, cfg.tolerance, cfg.seed
            )
            m = met.compute_metrics(graph, p, site_costs, cfg.comm,
                                    cfg.per_site_time)
            return {
                "variant": variant,
                "nparts": nparts,
                "seed": cfg.seed,
                "edge_cut": m.edge_cut,
                "load_imbalance": f"{m.load_imbalance:.6f}",
                "max_comm_volume": int(m.comm_volume.max()),
                "max_partners": int(m.comm_partners.max()),
                "predicted_step_time_s": f"{m.predicted_step_time:.9e}",
            }
        except LbdecompError as exc:
            return {
                "variant": variant,
                "nparts": nparts,
                "seed": cfg.seed,
                "edge_cut": "error",
                "load_imbalance": str(exc),
                "max_comm_volume": "",
                "max_partners": "",
                "predicted_step_time_s": "",
            }

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_one, jobs))
    else:
        rows = [run_one(j) for j in jobs]
    return rows


def write_metrics_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=met.METRICS_CSV_HEADER)
        writer.writeheader()
        writer.writerows(rows)


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != met.METRICS_CSV_HEADER:
            raise SchemaError(
                f"{path}: expected columns {met.METRICS_CSV_HEADER}, "
                f"got {reader.fieldnames}"
            )
        return list(reader)


def summarize(rows: list[dict]) -> list[str]:
    """Per-nparts imbalance reduction of each variant vs baseline."""
    lines = []
    by_nparts: dict[int, dict[str, dict]] = {}
    for r in rows:
        if r["edge_cut"] == "error":
            lines.append(f"{r['variant']} nparts={r['nparts']}: "
                         f"failed ({r['load_imbalance']})")
            continue
        by_nparts.setdefault(int(r["nparts"]), {})[r["variant"]] = r
    for nparts in sorted(by_nparts):
        group = by_nparts[nparts]
        base = group.get("baseline")
        for variant in VARIANTS:
            r = group.get(variant)
            if r is None:
                continue
            msg = (f"nparts={nparts:<5} {variant:<12} "
                   f"cut={r['edge_cut']:>8} "
                   f"imbalance={float(r['load_imbalance']):.4f}")
            if base is not None and variant != "baseline":
                red = met.imbalance_reduction(
                    float(base["load_imbalance"]),
                    float(r["load_imbalance"]),
                )
                msg += f" reduction={red:6.1f}%"
            lines.append(msg)
    return lines


# ---------------------------------------------------------------------------
# click commands

@click.group()
def main():
    """Cost-weighted decomposition toolkit for sparse LB geometries."""


@main.command()
@click.option("--kind", type=click.Choice(["cylinder", "bifurcation", "box"]),
              default="cylinder", show_default=True)
@click.option("--radius", type=float, default=8.0, show_default=True,
              help="cylinder radius")
@click.option("--length", type=int, default=32, show_default=True,
              help="cylinder length / box edge")
@click.option("--axis", type=click.Choice(["x", "y", "z"]), default="z",
              show_default=True)
@click.option("--trunk-radius", type=float, default=6.0, show_default=True)
@click.option("--branch-radius", type=float, default=4.0, show_default=True)
@click.option("--angle", type=float, default=30.0, show_default=True,
              help="branch angle in degrees")
@click.option("--trunk-length", type=int, default=24, show_default=True)
@click.option("--branch-length", type=int, default=24, show_default=True)
@click.option("--pad", type=int, default=0, show_default=True,
              help="empty padding voxels to lower the fluid fraction")
@click.option("--out", type=click.Path(), required=True)
def gen(kind, radius, length, axis, trunk_radius, branch_radius, angle,
        trunk_length, branch_length, pad, out):
    """Generate a synthetic geometry and write it to a file."""
    try:
        if kind == "cylinder":
            g = geo.generate_cylinder(radius, length, axis)
        elif kind == "bifurcation":
            g = geo.generate_bifurcation(
                trunk_radius, branch_radius, angle,
                lengths=(trunk_length, branch_length), pad=pad,
            )
        else:
            g = geo.generate_box(length, length, length)
    except LbdecompError as exc:
        raise click.ClickException(str(exc))
    geo.save_geometry(g, out)
    counts = g.type_counts()
    click.echo(f"wrote {out}: {g.n_sites} sites, "
               f"fluid fraction {geo.fluid_fraction(g):.4f}")
    for t, c in counts.items():
        click.echo(f"  {t.name.lower():<14} {c}")


@main.command()
@click.option("--steps", type=int, default=60, show_default=True,
              help="measured steps per cylinder")
@click.option("--warmup", type=int, default=10, show_default=True)
@click.option("--out", type=click.Path(), default=".", show_default=True,
              help="output directory")
def calibrate(steps, warmup, out):
    """Micro-benchmark six cylinders and fit per-site-type costs."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        observations = lbkernel.measure_site_costs(steps=steps, warmup=warmup)
        costs = wts.fit_costs(observations)
    except LbdecompError as exc:
        raise click.ClickException(
            f"{exc}\nIf the fit is rank deficient, vary the cylinder "
            "aspect ratios or increase --steps."
        )
    table = wts.round_costs(costs)
    wts.save_observations(observations, out_dir / "observations.csv")
    wts.save_weight_table(table, out_dir / "weights.txt")
    with open(out_dir / "costs.txt", "w") as fh:
        fh.write(f"bulk={costs.bulk:.6f}\n")
        fh.write(f"wall={costs.wall:.6f}\n")
        fh.write(f"inout={costs.inoutlet:.6f}\n")
        fh.write(f"wallinout={costs.wall_inoutlet:.6f}\n")
        for w in costs.warnings:
            fh.write(f"# warning: {w}\n")

    a = np.stack([o.count_row() for o in observations])
    b = np.array([o.runtime_s for o in observations])
    scale = b.sum() / (a @ costs.as_array()).sum()
    residual = b - scale * (a @ costs.as_array())
    click.echo(f"fitted costs (bulk=10): wall={costs.wall:.3f} "
               f"inout={costs.inoutlet:.3f} wallinout={costs.wall_inoutlet:.3f}")
    click.echo(f"rounded weights: {tuple(int(v) for v in table.as_array())}")
    click.echo("fit residuals (s/step): "
               + " ".join(f"{r:+.2e}" for r in residual))
    for w in costs.warnings:
        click.echo(f"warning: {w}", err=True)


@main.command()
@click.option("--geometry", type=click.Path(exists=True), required=True)
@click.option("--nparts", default="16", show_default=True,
              help="comma-separated part counts")
@click.option("--variants", default=",".join(VARIANTS), show_default=True,
              help="comma-separated subset of " + ",".join(VARIANTS))
@click.option("--weights", "weights_path", type=click.Path(exists=True),
              default=None, help="weight table file (default: 4,8,16,16)")
@click.option("--tolerance", type=float, default=1.001, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--alpha", type=float, default=0.0, show_default=True,
              help="seconds per message")
@click.option("--beta", type=float, default=0.0, show_default=True,
              help="seconds per byte")
@click.option("--per-site-time", type=float, default=DEFAULT_PER_SITE_TIME,
              show_default=True, help="seconds per bulk site update")
@click.option("--out", type=click.Path(), default=".", show_default=True,
              help="output directory")
def decompose(geometry, nparts, variants, weights_path, tolerance, seed,
              alpha, beta, per_site_time, out):
    """Partition a geometry and emit a metrics CSV plus a summary."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = (wts.load_weight_table(weights_path) if weights_path
             else DEFAULT_WEIGHT_TABLE)
    try:
        cfg = ExperimentConfig(
            geometry_path=geometry,
            part_counts=[int(v) for v in nparts.split(",") if v],
            variants=[v.strip() for v in variants.split(",") if v.strip()],
            weight_table=table,
            comm=met.CommModel(alpha=alpha, beta=beta),
            seed=seed,
            tolerance=tolerance,
            per_site_time=per_site_time,
            out_dir=out_dir,
        )
        rows = run_experiment(cfg)
    except (LbdecompError, ValueError) as exc:
        raise click.ClickException(str(exc))
    csv_path = out_dir / "metrics.csv"
    write_metrics_csv(rows, csv_path)
    click.echo(f"wrote {csv_path}")
    for line in summarize(rows):
        click.echo(line)


@main.command()
@click.argument("csv_paths", nargs=-1, type=click.Path(exists=True),
                required=True)
def report(csv_paths):
    """Tabulate one or more metrics CSVs with reduction percentages."""
    rows = []
    try:
        for path in csv_paths:
            rows.extend(read_metrics_csv(path))
    except SchemaError as exc:
        raise click.ClickException(str(exc))
    header = (f"{'variant':<12} {'nparts':>6} {'seed':>5} {'cut':>9} "
              f"{'imbalance':>10} {'max_vol':>8} {'partners':>8} "
              f"{'step_time_s':>13}")
    click.echo(header)
    for r in rows:
        if r["edge_cut"] == "error":
            click.echo(f"{r['variant']:<12} {r['nparts']:>6} {r['seed']:>5} "
                       f"(failed: {r['load_imbalance']})")
            continue
        click.echo(
            f"{r['variant']:<12} {r['nparts']:>6} {r['seed']:>5} "
            f"{r['edge_cut']:>9} {float(r['load_imbalance']):>10.4f} "
            f"{r['max_comm_volume']:>8} {r['max_partners']:>8} "
            f"{float(r['predicted_step_time_s']):>13.3e}"
        )
    click.echo()
    for line in summarize(rows):
        click.echo(line)


if __name__ == "__main__":
    sys.exit(main())
