"""Site adjacency graph and k-way partitioning.

Three routes to a partition: block seeding (raster-order greedy over
8x8x8 blocks), multilevel weighted k-way (heavy-edge matching, greedy
graph growing, boundary Fiduccia-Mattheyses refinement), and the
geometric variant seeded from Morton order.  All are deterministic for a
given seed.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from lbdecomp import d3q19
from lbdecomp.errors import InfeasibleSeedError, PartitionError
from lbdecomp.geometry import Geometry, neighbor_table
from lbdecomp.sfc import morton_keys


@dataclass
class LatticeGraph:
    """Symmetric CSR graph over fluid sites (or a coarsened version)."""

    n: int
    xadj: np.ndarray        # (n+1,) int64 row offsets
    adjncy: np.ndarray      # int64 neighbour indices
    ewgt: np.ndarray        # int64 edge weights aligned with adjncy
    vwgt: np.ndarray        # (n,) int64 vertex weights
    coords: np.ndarray      # (n, 3) int64 representative coordinates

    @property
    def n_edges(self) -> int:
        """Undirected edge count."""
        return len(self.adjncy) // 2

    def neighbors(self, u: int) -> np.ndarray:
        return self.adjncy[self.xadj[u]:self.xadj[u + 1]]

    def degree(self, u: int) -> int:
        return int(self.xadj[u + 1] - self.xadj[u])

    @classmethod
    def from_edges(cls, n, edges, vwgt=None, coords=None) -> "LatticeGraph":
        """Build from an undirected edge list (tests and small graphs)."""
        pairs = set()
        for u, v in edges:
            if u == v:
                continue
            pairs.add((min(u, v), max(u, v)))
        src, dst = [], []
        for u, v in pairs:
            src += [u, v]
            dst += [v, u]
        src = np.array(src, dtype=np.int64)
        dst = np.array(dst, dtype=np.int64)
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        xadj = np.zeros(n + 1, dtype=np.int64)
        np.add.at(xadj, src + 1, 1)
        xadj = np.cumsum(xadj)
        vw = np.ones(n, dtype=np.int64) if vwgt is None else np.asarray(vwgt, dtype=np.int64)
        co = np.zeros((n, 3), dtype=np.int64) if coords is None else np.asarray(coords, dtype=np.int64)
        return cls(n=n, xadj=xadj, adjncy=dst,
                   ewgt=np.ones(len(dst), dtype=np.int64), vwgt=vw, coords=co)


class PartitionVariant(Enum):
    BLOCK_SEED = "block_seed"
    KWAY = "kway"
    GEOM_KWAY = "geom_kway"


@dataclass(frozen=True)
class PartitionConfig:
    nparts: int
    tolerance: float = 1.001
    seed: int = 0
    variant: PartitionVariant = PartitionVariant.KWAY
    coarsen_target: int | None = None

    def __post_init__(self):
        if self.nparts < 1:
            raise PartitionError("nparts must be >= 1")
        if not 1.0 < self.tolerance <= 2.0:
            raise PartitionError("tolerance must be in (1, 2]")

    @property
    def effective_coarsen_target(self) -> int:
        return self.coarsen_target if self.coarsen_target is not None else 30 * self.nparts


@dataclass
class Partition:
    assignment: np.ndarray
    nparts: int
    config: PartitionConfig
    tolerance_relaxed: bool = False


def build_graph(g: Geometry, weights: np.ndarray) -> LatticeGraph:
    """CSR adjacency over D3Q19 links between fluid sites."""
    weights = np.asarray(weights, dtype=np.int64)
    if len(weights) != g.n_sites:
        raise PartitionError(
            f"weight vector length {len(weights)} != site count {g.n_sites}"
        )
    nbr = neighbor_table(g)
    valid = nbr >= 0
    degrees = valid.sum(axis=1)
    xadj = np.zeros(g.n_sites + 1, dtype=np.int64)
    np.cumsum(degrees, out=xadj[1:])
    adjncy = nbr[valid]  # row-major: grouped by site, direction-ordered
    return LatticeGraph(
        n=g.n_sites,
        xadj=xadj,
        adjncy=adjncy.astype(np.int64),
        ewgt=np.ones(len(adjncy), dtype=np.int64),
        vwgt=weights.copy(),
        coords=g.coords.copy(),
    )


# ---------------------------------------------------------------------------
# block seeding

def block_seed_partition(g: Geometry, nparts: int,
                         weights: np.ndarray | None = None) -> Partition:
    """Greedy raster-order distribution of site blocks.

    Blocks are walked in (z, y, x)-raster order and each part receives a
    contiguous run with roughly total_weight / nparts weight; all sites
    of a block share a part.
    """
    if weights is None:
        weights = np.ones(g.n_sites, dtype=np.int64)
    bs = g.block_size
    bcoord = g.coords // bs
    nb_dims = (g.dims + bs - 1) // bs
    bkey = (bcoord[:, 2] * nb_dims[1] + bcoord[:, 1]) * nb_dims[0] + bcoord[:, 0]
    blocks, inverse = np.unique(bkey, return_inverse=True)
    nb = len(blocks)
    if nparts > nb:
        raise InfeasibleSeedError(
            f"{nparts} parts requested but only {nb} non-empty blocks"
        )
    bw = np.bincount(inverse, weights=weights.astype(np.float64))
    total = bw.sum()
    block_part = np.zeros(nb, dtype=np.int64)
    p = 0
    acc = 0.0
    in_part = 0
    for j in range(nb):
        if p < nparts - 1 and in_part > 0 and (
            acc + bw[j] / 2.0 >= (p + 1) * total / nparts
            or nb - j <= nparts - 1 - p
        ):
            p += 1
            in_part = 0
        block_part[j] = p
        acc += bw[j]
        in_part += 1
    cfg = PartitionConfig(nparts=nparts, variant=PartitionVariant.BLOCK_SEED)
    return Partition(assignment=block_part[inverse], nparts=nparts, config=cfg)


# ---------------------------------------------------------------------------
# multilevel machinery

def coarsen_graph(graph: LatticeGraph, rng: np.random.Generator):
    """One level of heavy-edge matching; returns (coarse graph, cmap).

    Ties in edge weight break toward the lower neighbour index; total
    vertex weight is conserved.
    """
    n = graph.n
    xadj, adjncy, ewgt = graph.xadj, graph.adjncy, graph.ewgt
    match = np.full(n, -1, dtype=np.int64)
    for u in rng.permutation(n):
        if match[u] >= 0:
            continue
        best, best_w = -1, -1
        for idx in range(xadj[u], xadj[u + 1]):
            v = adjncy[idx]
            if match[v] >= 0 or v == u:
                continue
            w = ewgt[idx]
            if w > best_w or (w == best_w and v < best):
                best, best_w = v, w
        if best >= 0:
            match[u] = best
            match[best] = u
        else:
            match[u] = u

    cmap = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for u in range(n):
        if cmap[u] >= 0:
            continue
        cmap[u] = nxt
        cmap[match[u]] = nxt
        nxt += 1

    cvwgt = np.bincount(cmap, weights=graph.vwgt.astype(np.float64),
                        minlength=nxt).astype(np.int64)
    ccoords = np.zeros((nxt, 3), dtype=np.int64)
    # representative coordinate: the first (lowest-index) member
    first = np.full(nxt, -1, dtype=np.int64)
    for u in range(n - 1, -1, -1):
        first[cmap[u]] = u
    ccoords[:] = graph.coords[first]

    src = np.repeat(np.arange(n, dtype=np.int64), np.diff(xadj))
    cu, cv = cmap[src], cmap[adjncy]
    keep = cu != cv
    cu, cv, w = cu[keep], cv[keep], ewgt[keep]
    enc = cu * nxt + cv
    uniq, inv = np.unique(enc, return_inverse=True)
    wsum = np.bincount(inv, weights=w.astype(np.float64)).astype(np.int64)
    cu_u = (uniq // nxt).astype(np.int64)
    cv_u = (uniq % nxt).astype(np.int64)
    cxadj = np.zeros(nxt + 1, dtype=np.int64)
    np.add.at(cxadj, cu_u + 1, 1)
    cxadj = np.cumsum(cxadj)
    coarse = LatticeGraph(n=nxt, xadj=cxadj, adjncy=cv_u, ewgt=wsum,
                          vwgt=cvwgt, coords=ccoords)
    return coarse, cmap


def weighted_cut(graph: LatticeGraph, assignment: np.ndarray) -> int:
    src = np.repeat(np.arange(graph.n, dtype=np.int64), np.diff(graph.xadj))
    cut = graph.ewgt[assignment[src] != assignment[graph.adjncy]].sum()
    return int(cut) // 2


def _part_loads(graph, assignment, nparts):
    return np.bincount(assignment, weights=graph.vwgt.astype(np.float64),
                       minlength=nparts)


def _best_move(graph, assignment, u):
    """Highest-gain adjacent-part move for u; (gain, dest) or (None, None)."""
    a = assignment[u]
    conn: dict[int, int] = {}
    for idx in range(graph.xadj[u], graph.xadj[u + 1]):
        p = assignment[graph.adjncy[idx]]
        conn[p] = conn.get(p, 0) + int(graph.ewgt[idx])
    internal = conn.pop(a, 0)
    best_gain, best_dest = None, None
    for p in sorted(conn):
        gain = conn[p] - internal
        if best_gain is None or gain > best_gain:
            best_gain, best_dest = gain, p
    return best_gain, best_dest


def fm_refine(graph: LatticeGraph, assignment: np.ndarray, nparts: int,
              tolerance: float, max_passes: int = 4) -> np.ndarray:
    """Boundary FM passes with rollback; never increases the cut.

    Moves are admitted when the destination stays under the balance cap
    or the move strictly improves balance; each pass locks moved
    vertices and rolls back to the best prefix.  Hot path runs over plain
    Python lists.
    """
    n = graph.n
    total = int(graph.vwgt.sum())
    cap = max(tolerance * total / nparts, float(graph.vwgt.max()))

    xadj = graph.xadj.tolist()
    adjncy = graph.adjncy.tolist()
    ewgt = graph.ewgt.tolist()
    vwgt = graph.vwgt.tolist()
    asg = [int(p) for p in assignment]
    loads = [0.0] * nparts
    sizes = [0] * nparts
    for u in range(n):
        loads[asg[u]] += vwgt[u]
        sizes[asg[u]] += 1
    stall_limit = max(64, n // 10)

    def best_move(u):
        a = asg[u]
        conn: dict[int, int] = {}
        for idx in range(xadj[u], xadj[u + 1]):
            p = asg[adjncy[idx]]
            conn[p] = conn.get(p, 0) + ewgt[idx]
        internal = conn.pop(a, 0)
        best_gain = None
        best_dest = -1
        for p, wsum in conn.items():
            gain = wsum - internal
            if best_gain is None or gain > best_gain or (
                gain == best_gain and p < best_dest
            ):
                best_gain, best_dest = gain, p
        return best_gain, best_dest

    for _ in range(max_passes):
        cut = weighted_cut(graph, np.array(asg, dtype=np.int64))
        start_cut = cut
        best_cut = cut
        moves: list[tuple[int, int, int]] = []
        best_len = 0
        moved = [False] * n

        heap: list[tuple[int, int, int]] = []
        boundary = set()
        for u in range(n):
            a = asg[u]
            for idx in range(xadj[u], xadj[u + 1]):
                if asg[adjncy[idx]] != a:
                    boundary.add(u)
                    break
        for u in sorted(boundary):
            gain, dest = best_move(u)
            if gain is not None:
                heapq.heappush(heap, (-gain, u, dest))

        since_best = 0
        while heap and since_best < stall_limit:
            neg_gain, u, dest = heapq.heappop(heap)
            if moved[u]:
                continue
            gain, best_dest = best_move(u)
            if gain is None:
                continue
            if -neg_gain != gain or best_dest != dest:
                heapq.heappush(heap, (-gain, u, best_dest))
                continue
            a = asg[u]
            w = vwgt[u]
            if sizes[a] <= 1:
                continue
            if not (loads[dest] + w <= cap or loads[dest] + w < loads[a]):
                continue
            asg[u] = dest
            loads[a] -= w
            loads[dest] += w
            sizes[a] -= 1
            sizes[dest] += 1
            moved[u] = True
            cut -= gain
            moves.append((u, a, dest))
            if cut < best_cut:
                best_cut = cut
                best_len = len(moves)
                since_best = 0
            else:
                since_best += 1
            for idx in range(xadj[u], xadj[u + 1]):
                v = adjncy[idx]
                if moved[v]:
                    continue
                g2, d2 = best_move(v)
                if g2 is not None:
                    heapq.heappush(heap, (-g2, v, d2))

        for u, a, dest in reversed(moves[best_len:]):
            asg[u] = a
            w = vwgt[u]
            loads[dest] -= w
            loads[a] += w
            sizes[dest] -= 1
            sizes[a] += 1
        if best_cut >= start_cut:
            break
    return np.array(asg, dtype=np.int64)


def _repair_balance(graph, assignment, nparts, cap, max_moves=None):
    """Move vertices off overloaded parts until every load fits the cap."""
    loads = _part_loads(graph, assignment, nparts)
    sizes = np.bincount(assignment, minlength=nparts)
    if max_moves is None:
        max_moves = 4 * graph.n
    for _ in range(max_moves):
        over = np.nonzero(loads > cap)[0]
        if len(over) == 0:
            break
        a = int(over[np.argmax(loads[over])])
        members = np.nonzero(assignment == a)[0]
        best = None  # (cut_delta, load_after, u, dest)
        for u in members:
            if sizes[a] <= 1:
                break
            w = int(graph.vwgt[u])
            gain, dest = _best_move(graph, assignment, u)
            if dest is None or loads[dest] + w > cap:
                # fall back to the globally lightest part
                dest = int(np.argmin(loads))
                if dest == a:
                    continue
                gain = None
            if loads[dest] + w >= loads[a]:
                continue
            delta = -(gain if gain is not None else -graph.degree(u))
            cand = (delta, loads[dest] + w, int(u), dest)
            if best is None or cand < best:
                best = cand
        if best is None:
            break
        _, _, u, dest = best
        w = int(graph.vwgt[u])
        loads[assignment[u]] -= w
        loads[dest] += w
        sizes[assignment[u]] -= 1
        sizes[dest] += 1
        assignment[u] = dest
    return assignment


def _fix_empty_parts(graph, assignment, nparts):
    sizes = np.bincount(assignment, minlength=nparts)
    for p in np.nonzero(sizes == 0)[0]:
        donor = int(np.argmax(sizes))
        if sizes[donor] <= 1:
            break
        members = np.nonzero(assignment == donor)[0]
        # give away the lightest member to keep the donor balanced
        u = members[np.argmin(graph.vwgt[members])]
        assignment[u] = p
        sizes[donor] -= 1
        sizes[p] += 1
    return assignment


def _grow_partition(graph, nparts, rng):
    """Greedy graph growing: BFS regions of ~equal weight."""
    n = graph.n
    assignment = np.full(n, -1, dtype=np.int64)
    unassigned = n
    remaining_weight = float(graph.vwgt.sum())
    for p in range(nparts - 1):
        target = remaining_weight / (nparts - p)
        acc = 0.0
        frontier: list[int] = []
        while acc < target and unassigned > nparts - p - 1:
            if not frontier:
                free = np.nonzero(assignment < 0)[0]
                seed = int(free[rng.integers(len(free))])
                frontier = [seed]
            u = frontier.pop(0)
            if assignment[u] >= 0:
                continue
            assignment[u] = p
            unassigned -= 1
            acc += float(graph.vwgt[u])
            remaining_weight -= float(graph.vwgt[u])
            for v in sorted(int(v) for v in graph.neighbors(u)):
                if assignment[v] < 0:
                    frontier.append(v)
    assignment[assignment < 0] = nparts - 1
    return _fix_empty_parts(graph, assignment, nparts)


def _project(assignment, cmap):
    return assignment[cmap]


def _initial_partition(graph, nparts, tolerance, rng, restarts):
    total = int(graph.vwgt.sum())
    cap = max(tolerance * total / nparts, float(graph.vwgt.max()))
    best = None
    for _ in range(restarts):
        asg = _grow_partition(graph, nparts, rng)
        asg = _repair_balance(graph, asg, nparts, cap)
        asg = fm_refine(graph, asg, nparts, tolerance)
        cut = weighted_cut(graph, asg)
        imb = _part_loads(graph, asg, nparts).max()
        key = (cut, imb)
        if best is None or key < best[0]:
            best = (key, asg)
    return best[1]


def partition_kway(graph: LatticeGraph, cfg: PartitionConfig) -> Partition:
    """Multilevel weighted k-way partition (coarsen, grow, refine)."""
    _check(graph, cfg)
    if cfg.nparts == 1:
        return Partition(np.zeros(graph.n, dtype=np.int64), 1, cfg)
    rng = np.random.default_rng(cfg.seed)

    levels = [graph]
    cmaps = []
    while levels[-1].n > cfg.effective_coarsen_target:
        coarse, cmap = coarsen_graph(levels[-1], rng)
        if coarse.n >= 0.95 * levels[-1].n:
            break
        levels.append(coarse)
        cmaps.append(cmap)

    restarts = 8 if levels[-1].n <= 2048 else 2
    assignment = _initial_partition(levels[-1], cfg.nparts, cfg.tolerance,
                                    rng, restarts)
    for level in range(len(levels) - 2, -1, -1):
        assignment = _project(assignment, cmaps[level])
        assignment = _refine_level(levels[level], assignment, cfg)
    if len(levels) == 1:
        assignment = _refine_level(graph, assignment, cfg)
    return _finish(graph, assignment, cfg)


def partition_geom_kway(graph: LatticeGraph, cfg: PartitionConfig) -> Partition:
    """Morton-seeded variant: weight-balanced segments of the Z-order
    traversal, then the same FM refinement."""
    _check(graph, cfg)
    if cfg.nparts == 1:
        return Partition(np.zeros(graph.n, dtype=np.int64), 1, cfg)
    keys = morton_keys(graph.coords)
    order = np.argsort(keys, kind="stable")
    w = graph.vwgt[order].astype(np.float64)
    total = w.sum()
    mids = np.cumsum(w) - w / 2.0
    seg = np.minimum((mids / (total / cfg.nparts)).astype(np.int64),
                     cfg.nparts - 1)
    assignment = np.empty(graph.n, dtype=np.int64)
    assignment[order] = seg
    assignment = _fix_empty_parts(graph, assignment, cfg.nparts)
    assignment = _refine_level(graph, assignment, cfg)
    return _finish(graph, assignment, cfg)


def _check(graph, cfg):
    if cfg.nparts > graph.n:
        raise PartitionError(
            f"nparts {cfg.nparts} exceeds vertex count {graph.n}"
        )


def _refine_level(graph, assignment, cfg):
    total = int(graph.vwgt.sum())
    cap = max(cfg.tolerance * total / cfg.nparts, float(graph.vwgt.max()))
    assignment = _repair_balance(graph, assignment, cfg.nparts, cap)
    # later passes buy little cut on big graphs but cost the most time
    passes = 2 if graph.n > 20000 else 4
    return fm_refine(graph, assignment, cfg.nparts, cfg.tolerance,
                     max_passes=passes)


def _finish(graph, assignment, cfg):
    total = int(graph.vwgt.sum())
    relaxed = float(graph.vwgt.max()) > cfg.tolerance * total / cfg.nparts
    return Partition(assignment=assignment, nparts=cfg.nparts, config=cfg,
                     tolerance_relaxed=relaxed)


def save_partition(p: Partition, path) -> None:
    """Partition dump: CSV ``site_index,part``."""
    with open(path, "w") as fh:
        fh.write("site_index,part\n")
        for i, part in enumerate(p.assignment):
            fh.write(f"{i},{int(part)}\n")
