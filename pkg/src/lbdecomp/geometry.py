"""Sparse voxel lattices: synthetic generators, site classification, file IO.

A :class:`Geometry` stores fluid sites as flat numpy arrays (coordinates,
type, per-link wall distances, per-link in/outlet plane crossings).  Sites
are kept in ascending (z, y, x) order by default; Morton reordering lives
in :mod:`lbdecomp.sfc`.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np
from scipy import ndimage

from lbdecomp import d3q19
from lbdecomp.errors import GeometryParseError, InvalidGeometryError

MAGIC = b"SLBG"
FORMAT_VERSION = 1
Q_SCALE = 65535
# largest representable crossing distance; a stored value of Q_SCALE means
# "no crossing", so real crossings are clamped one step below
Q_MAX = (Q_SCALE - 1) / Q_SCALE

_SITE_DTYPE = np.dtype(
    [("coord", "<u4", 3), ("type", "u1"), ("bid", "<u2"), ("q", "<u2", 18)]
)


class SiteType(IntEnum):
    BULK = 0
    WALL = 1
    INOUTLET = 2
    WALL_INOUTLET = 3


@dataclass(frozen=True)
class Plane:
    """In/outlet plane: a point on the plane, unit normal, and boundary id."""

    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    plane_id: int
    # optional opening radius used to disambiguate coplanar openings
    radius: float | None = None


@dataclass(frozen=True)
class Site:
    """Single-site view, mostly for tests and debugging."""

    coord: tuple[int, int, int]
    site_type: SiteType
    boundary_id: int
    wall_distances: np.ndarray


@dataclass
class Geometry:
    dims: np.ndarray                  # (3,) bounding box in lattice units
    coords: np.ndarray                # (n, 3) int64, unique, inside dims
    site_type: np.ndarray             # (n,) uint8 (SiteType values)
    boundary_id: np.ndarray           # (n,) int64, -1 where not an in/outlet
    wall_q: np.ndarray                # (n, 18) float64, 1.0 = no wall crossing
    io_link: np.ndarray               # (n, 18) int64 plane id, -1 = none
    planes: list[Plane] = field(default_factory=list)
    block_size: int = 8
    periodic: tuple[bool, bool, bool] = (False, False, False)

    @property
    def n_sites(self) -> int:
        return len(self.coords)

    def site(self, i: int) -> Site:
        return Site(
            coord=tuple(int(c) for c in self.coords[i]),
            site_type=SiteType(int(self.site_type[i])),
            boundary_id=int(self.boundary_id[i]),
            wall_distances=self.wall_q[i].copy(),
        )

    def type_counts(self) -> dict[SiteType, int]:
        counts = np.bincount(self.site_type, minlength=4)
        return {t: int(counts[t.value]) for t in SiteType}

    def validate(self) -> None:
        if self.coords.shape != (self.n_sites, 3):
            raise InvalidGeometryError("coords must be (n, 3)")
        if (self.coords < 0).any() or (self.coords >= self.dims).any():
            raise InvalidGeometryError("site coordinates outside bounding box")
        keys = _coord_keys(self.coords, self.dims)
        if len(np.unique(keys)) != self.n_sites:
            raise InvalidGeometryError("duplicate site coordinates")


def fluid_fraction(g: Geometry) -> float:
    """Fluid sites divided by bounding box volume."""
    return g.n_sites / float(np.prod(g.dims.astype(np.float64)))


def classify_sites(g: Geometry) -> Geometry:
    """Assign site types from the per-link crossing data (idempotent).

    Bulk: no link crosses anything.  Wall: wall crossings only.  InOutlet:
    plane crossings only.  WallInOutlet: both.  The boundary id of an
    in/outlet site is the lowest plane id among its crossing links.
    """
    has_wall = (g.wall_q < 1.0).any(axis=1)
    has_io = (g.io_link >= 0).any(axis=1)
    site_type = np.zeros(g.n_sites, dtype=np.uint8)
    site_type[has_wall & ~has_io] = SiteType.WALL
    site_type[~has_wall & has_io] = SiteType.INOUTLET
    site_type[has_wall & has_io] = SiteType.WALL_INOUTLET

    boundary_id = np.full(g.n_sites, -1, dtype=np.int64)
    masked = np.where(g.io_link >= 0, g.io_link, np.iinfo(np.int64).max)
    ids = masked.min(axis=1)
    boundary_id[has_io] = ids[has_io]
    return replace(g, site_type=site_type, boundary_id=boundary_id)


# ---------------------------------------------------------------------------
# neighbour lookup

def _coord_keys(coords: np.ndarray, dims: np.ndarray) -> np.ndarray:
    d = dims.astype(np.int64)
    c = coords.astype(np.int64)
    return (c[:, 2] * d[1] + c[:, 1]) * d[0] + c[:, 0]


def neighbor_table(g: Geometry) -> np.ndarray:
    """(n, 18) array of fluid-neighbour indices along each link, -1 if none.

    Periodic axes wrap; otherwise out-of-box neighbours are -1.
    """
    n = g.n_sites
    keys = _coord_keys(g.coords, g.dims)
    order = np.argsort(keys)
    sorted_keys = keys[order]
    table = np.full((n, 18), -1, dtype=np.int64)
    for d in range(18):
        nc = g.coords + d3q19.C_LINKS[d]
        valid = np.ones(n, dtype=bool)
        nc = nc.copy()
        for ax in range(3):
            if g.periodic[ax]:
                nc[:, ax] %= g.dims[ax]
            else:
                valid &= (nc[:, ax] >= 0) & (nc[:, ax] < g.dims[ax])
        nk = _coord_keys(np.clip(nc, 0, None), g.dims)
        pos = np.searchsorted(sorted_keys, nk)
        pos_c = np.clip(pos, 0, n - 1)
        found = valid & (sorted_keys[pos_c] == nk) & (pos < n)
        table[found, d] = order[pos_c[found]]
    return table


# ---------------------------------------------------------------------------
# generator machinery

def _mask_to_coords(mask: np.ndarray) -> np.ndarray:
    """Fluid coordinates in ascending (z, y, x) order; mask indexed [x,y,z]."""
    z, y, x = np.nonzero(mask.transpose(2, 1, 0))
    return np.column_stack([x, y, z]).astype(np.int64)


def _keep_component(mask: np.ndarray, seed_mask: np.ndarray) -> np.ndarray:
    """Restrict mask to the D3Q19-connected component touching seed_mask."""
    structure = np.zeros((3, 3, 3), dtype=bool)
    for c in d3q19.C:
        structure[tuple(c + 1)] = True
    labels, _ = ndimage.label(mask, structure=structure)
    wanted = np.unique(labels[mask & seed_mask])
    wanted = wanted[wanted > 0]
    if len(wanted) == 0:
        raise InvalidGeometryError("no fluid connected to the inlet")
    return np.isin(labels, wanted) & mask


def _plane_crossing_t(origins, direction, plane: Plane):
    """Parameter t in (0, 1] where the unit-step link crosses the plane.

    NaN where there is no crossing or the hit misses the plane's opening.
    """
    nrm = np.asarray(plane.normal, dtype=np.float64)
    pt = np.asarray(plane.point, dtype=np.float64)
    denom = float(direction @ nrm)
    t = np.full(len(origins), np.nan)
    if denom == 0.0:
        return t
    tt = ((pt - origins) @ nrm) / denom
    ok = (tt > 0.0) & (tt <= 1.0)
    if plane.radius is not None:
        hits = origins + tt[:, None] * direction
        in_plane = hits - pt
        in_plane = in_plane - np.outer(in_plane @ nrm, nrm)
        ok &= (in_plane * in_plane).sum(axis=1) <= plane.radius**2
    t[ok] = tt[ok]
    return t


def _bisect_surface_t(origins, direction, inside_fn, iters: int = 48):
    """Crossing distance of the region surface along unit-step links.

    Assumes origins are inside; where the link endpoint is still inside
    the (uncapped) region, returns NaN.  Bisection to ~1e-14.
    """
    end_inside = inside_fn(origins + direction)
    t = np.full(len(origins), np.nan)
    active = ~end_inside
    if not active.any():
        return t
    lo = np.zeros(active.sum())
    hi = np.ones(active.sum())
    pts = origins[active]
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = inside_fn(pts + mid[:, None] * direction)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    t[active] = 0.5 * (lo + hi)
    return t


def _compute_links(coords, mask, dims, wall_t_fn, planes):
    """Fill wall_q / io_link for every fluid->non-fluid link.

    wall_t_fn(origins, direction) -> per-link surface crossing t or NaN.
    The nearer of wall surface and in/outlet plane wins; ties go to the
    plane.
    """
    n = len(coords)
    wall_q = np.ones((n, 18))
    io_link = np.full((n, 18), -1, dtype=np.int64)
    for d in range(18):
        c = d3q19.C_LINKS[d]
        nc = coords + c
        inb = ((nc >= 0) & (nc < dims)).all(axis=1)
        nbr_fluid = np.zeros(n, dtype=bool)
        nci = np.clip(nc, 0, np.asarray(dims) - 1)
        nbr_fluid[inb] = mask[nci[inb, 0], nci[inb, 1], nci[inb, 2]]
        miss = np.nonzero(~nbr_fluid)[0]
        if len(miss) == 0:
            continue
        origins = coords[miss].astype(np.float64)
        direction = c.astype(np.float64)
        t_wall = wall_t_fn(origins, direction)
        t_plane = np.full(len(miss), np.inf)
        plane_id = np.full(len(miss), -1, dtype=np.int64)
        for plane in planes:
            t = _plane_crossing_t(origins, direction, plane)
            better = np.nan_to_num(t, nan=np.inf) < t_plane
            t_plane[better] = t[better]
            plane_id[better] = plane.plane_id
        tw = np.nan_to_num(t_wall, nan=np.inf)
        use_wall = tw < t_plane
        use_plane = (plane_id >= 0) & ~use_wall
        wall_q[miss[use_wall], d] = np.clip(
            t_wall[use_wall], 1.0 / Q_SCALE, Q_MAX
        )
        io_link[miss[use_plane], d] = plane_id[use_plane]
        # neither a wall nor a plane crossing found: treat as a mid-link
        # wall so every dead link stays well defined
        orphan = ~use_wall & ~use_plane
        wall_q[miss[orphan], d] = 0.5
    return wall_q, io_link


# ---------------------------------------------------------------------------
# generators

def generate_cylinder(
    radius: float,
    length: int,
    axis: str = "z",
    block_size: int = 8,
) -> Geometry:
    """Voxelized circular cylinder capped by in/outlet planes.

    Voxels with squared in-plane distance below radius**2 are fluid; the
    two axis ends carry pressure in/outlet planes (ids 0 and 1).
    """
    if radius < 1.0:
        raise InvalidGeometryError(f"radius must be >= 1.0, got {radius}")
    if length < 2:
        raise InvalidGeometryError(f"length must be >= 2, got {length}")
    if axis not in ("x", "y", "z"):
        raise InvalidGeometryError(f"axis must be x, y or z, got {axis!r}")

    ax = "xyz".index(axis)
    i1, i2 = [i for i in range(3) if i != ax]
    half = math.ceil(radius)
    dims = np.zeros(3, dtype=np.int64)
    dims[ax] = length
    dims[i1] = dims[i2] = 2 * half + 1
    center = float(half)

    grid = np.indices(dims)
    r2 = (grid[i1] - center) ** 2 + (grid[i2] - center) ** 2
    mask = r2 < radius**2
    coords = _mask_to_coords(mask)

    def plane_at(a_val, pid):
        point = [0.0, 0.0, 0.0]
        point[i1] = point[i2] = center
        point[ax] = a_val
        normal = [0.0, 0.0, 0.0]
        normal[ax] = 1.0
        return Plane(tuple(point), tuple(normal), pid, radius=radius)

    planes = [plane_at(-0.5, 0), plane_at(length - 0.5, 1)]

    def wall_t(origins, direction):
        # quadratic for the circular surface in the cross-section plane
        cx, cy = direction[i1], direction[i2]
        a = cx * cx + cy * cy
        t = np.full(len(origins), np.nan)
        if a == 0.0:
            return t
        px = origins[:, i1] - center
        py = origins[:, i2] - center
        b = 2.0 * (px * cx + py * cy)
        cc = px * px + py * py - radius**2
        disc = b * b - 4.0 * a * cc
        root = (-b + np.sqrt(np.maximum(disc, 0.0))) / (2.0 * a)
        ok = (disc >= 0.0) & (root > 0.0) & (root <= 1.0)
        t[ok] = root[ok]
        return t

    wall_q, io_link = _compute_links(coords, mask, dims, wall_t, planes)
    g = Geometry(
        dims=dims,
        coords=coords,
        site_type=np.zeros(len(coords), dtype=np.uint8),
        boundary_id=np.full(len(coords), -1, dtype=np.int64),
        wall_q=wall_q,
        io_link=io_link,
        planes=planes,
        block_size=block_size,
    )
    return classify_sites(g)


def generate_bifurcation(
    trunk_radius: float,
    branch_radius: float,
    branch_angle: float,
    lengths: tuple[int, int] = (24, 24),
    pad: int = 0,
    block_size: int = 8,
) -> Geometry:
    """Y-shaped union of a trunk and two symmetric branches.

    The trunk runs along +y from the inlet plane (id 0); branches leave
    the trunk top at +-branch_angle degrees in the x-y plane and end at a
    shared horizontal outlet level (ids 1 and 2).  ``pad`` adds empty
    voxels around x and z to lower the fluid fraction.
    """
    if trunk_radius < 1.0 or branch_radius < 1.0:
        raise InvalidGeometryError("radii must be >= 1.0")
    if not 0.0 < branch_angle < 90.0:
        raise InvalidGeometryError(
            f"branch angle must be in (0, 90), got {branch_angle}"
        )
    trunk_len, branch_len = lengths
    if trunk_len < 2 or branch_len < 2:
        raise InvalidGeometryError("lengths must be >= 2")

    theta = math.radians(branch_angle)
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    y_top = trunk_len + int(round(branch_len * cos_t))
    if y_top < trunk_len + 2:
        raise InvalidGeometryError("branches too short for the given angle")

    x_reach = max(trunk_radius, branch_len * sin_t + branch_radius)
    cx = math.ceil(x_reach) + pad
    cz = math.ceil(max(trunk_radius, branch_radius)) + pad
    dims = np.array([2 * cx + 1, y_top, 2 * cz + 1], dtype=np.int64)
    junction = np.array([cx, trunk_len, cz], dtype=np.float64)
    branch_dirs = [
        np.array([sin_t, cos_t, 0.0]),
        np.array([-sin_t, cos_t, 0.0]),
    ]

    # outlet openings where the slanted branches meet the top plane
    s_top = (y_top - 0.5 - trunk_len) / cos_t
    out_r = branch_radius / cos_t
    out_centers = [junction + s_top * d for d in branch_dirs]
    if abs(out_centers[0][0] - out_centers[1][0]) <= 2.0 * out_r:
        raise InvalidGeometryError(
            "outlet openings overlap; increase angle or branch length"
        )

    def inside(points):
        # side-wall region only; caps are handled as in/outlet planes
        p = np.atleast_2d(points)
        dx = p[:, 0] - cx
        dz = p[:, 2] - cz
        trunk = (dx * dx + dz * dz < trunk_radius**2) & (
            p[:, 1] <= trunk_len
        )
        result = trunk
        for d in branch_dirs:
            rel = p - junction
            s = rel @ d
            perp = rel - s[:, None] * d
            br = ((perp * perp).sum(axis=1) < branch_radius**2) & (
                s >= -branch_radius - 1.0
            )
            result = result | br
        return result

    grid = np.indices(dims).reshape(3, -1).T.astype(np.float64)
    in_region = inside(grid)
    in_region &= (grid[:, 1] >= 0) & (grid[:, 1] <= y_top - 1)
    mask = in_region.reshape(tuple(dims))

    inlet_seed = np.zeros(tuple(dims), dtype=bool)
    inlet_seed[:, 0, :] = True
    mask = _keep_component(mask, inlet_seed)
    coords = _mask_to_coords(mask)
    if len(coords) == 0:
        raise InvalidGeometryError("bifurcation produced no fluid sites")

    planes = [
        Plane((float(cx), -0.5, float(cz)), (0.0, 1.0, 0.0), 0,
              radius=trunk_radius),
        Plane(tuple(out_centers[0]), (0.0, 1.0, 0.0), 1, radius=out_r + 1.0),
        Plane(tuple(out_centers[1]), (0.0, 1.0, 0.0), 2, radius=out_r + 1.0),
    ]

    def wall_t(origins, direction):
        return _bisect_surface_t(origins, direction, inside)

    wall_q, io_link = _compute_links(coords, mask, dims, wall_t, planes)
    g = Geometry(
        dims=dims,
        coords=coords,
        site_type=np.zeros(len(coords), dtype=np.uint8),
        boundary_id=np.full(len(coords), -1, dtype=np.int64),
        wall_q=wall_q,
        io_link=io_link,
        planes=planes,
        block_size=block_size,
    )
    return classify_sites(g)


def generate_box(nx: int, ny: int, nz: int, block_size: int = 8) -> Geometry:
    """Closed all-wall fluid cuboid (every face a mid-link wall)."""
    if min(nx, ny, nz) < 1:
        raise InvalidGeometryError("box dimensions must be positive")
    dims = np.array([nx, ny, nz], dtype=np.int64)
    mask = np.ones(tuple(dims), dtype=bool)
    coords = _mask_to_coords(mask)

    def wall_t(origins, direction):
        # all dead links leave through a face halfway to the neighbour
        return np.full(len(origins), 0.5)

    wall_q, io_link = _compute_links(coords, mask, dims, wall_t, [])
    g = Geometry(
        dims=dims,
        coords=coords,
        site_type=np.zeros(len(coords), dtype=np.uint8),
        boundary_id=np.full(len(coords), -1, dtype=np.int64),
        wall_q=wall_q,
        io_link=io_link,
        planes=[],
        block_size=block_size,
    )
    return classify_sites(g)


def generate_periodic_box(nx: int, ny: int, nz: int,
                          block_size: int = 8) -> Geometry:
    """Fully periodic fluid cuboid; every site is bulk."""
    dims = np.array([nx, ny, nz], dtype=np.int64)
    mask = np.ones(tuple(dims), dtype=bool)
    coords = _mask_to_coords(mask)
    n = len(coords)
    g = Geometry(
        dims=dims,
        coords=coords,
        site_type=np.zeros(n, dtype=np.uint8),
        boundary_id=np.full(n, -1, dtype=np.int64),
        wall_q=np.ones((n, 18)),
        io_link=np.full((n, 18), -1, dtype=np.int64),
        planes=[],
        block_size=block_size,
        periodic=(True, True, True),
    )
    return classify_sites(g)


def generate_channel(
    length: int,
    height: int,
    depth: int,
    q_wall: float = 0.5,
    block_size: int = 8,
) -> Geometry:
    """Plane channel for Poiseuille validation.

    Walls at y = -q_wall and y = height - 1 + q_wall (channel width
    height - 1 + 2*q_wall); pressure planes cap x (inlet id 0, outlet
    id 1); z is periodic.
    """
    if length < 2 or height < 2 or depth < 1:
        raise InvalidGeometryError("channel dimensions too small")
    if not 0.0 < q_wall <= 1.0:
        raise InvalidGeometryError("q_wall must be in (0, 1]")
    dims = np.array([length, height, depth], dtype=np.int64)
    mask = np.ones(tuple(dims), dtype=bool)
    coords = _mask_to_coords(mask)
    n = len(coords)
    wall_q = np.ones((n, 18))
    io_link = np.full((n, 18), -1, dtype=np.int64)
    for d in range(18):
        c = d3q19.C_LINKS[d]
        t_wall = np.full(n, np.inf)
        if c[1] != 0:
            ny = coords[:, 1] + c[1]
            hits = (ny < 0) | (ny >= height)
            t_wall[hits] = q_wall
        t_plane = np.full(n, np.inf)
        pid = np.full(n, -1, dtype=np.int64)
        if c[0] != 0:
            nx = coords[:, 0] + c[0]
            lo = nx < 0
            hi = nx >= length
            t_plane[lo | hi] = 0.5
            pid[lo] = 0
            pid[hi] = 1
        use_wall = t_wall < t_plane
        use_plane = (pid >= 0) & ~use_wall
        wall_q[use_wall, d] = min(max(q_wall, 1.0 / Q_SCALE), Q_MAX)
        io_link[use_plane, d] = pid[use_plane]
    planes = [
        Plane((-0.5, (height - 1) / 2.0, (depth - 1) / 2.0),
              (1.0, 0.0, 0.0), 0),
        Plane((length - 0.5, (height - 1) / 2.0, (depth - 1) / 2.0),
              (1.0, 0.0, 0.0), 1),
    ]
    g = Geometry(
        dims=dims,
        coords=coords,
        site_type=np.zeros(n, dtype=np.uint8),
        boundary_id=np.full(n, -1, dtype=np.int64),
        wall_q=wall_q,
        io_link=io_link,
        planes=planes,
        block_size=block_size,
        periodic=(False, False, True),
    )
    return classify_sites(g)


# ---------------------------------------------------------------------------
# file IO

def save_geometry(g: Geometry, path) -> None:
    """Write the versioned binary geometry format (little-endian)."""
    header = bytearray()
    header += MAGIC
    header += struct.pack("<I", FORMAT_VERSION)
    header += struct.pack("<3I", *(int(v) for v in g.dims))
    header += struct.pack("<I", g.block_size)
    header += struct.pack("<H", len(g.planes))
    for p in g.planes:
        header += struct.pack("<3d", *p.point)
        header += struct.pack("<3d", *p.normal)
        header += struct.pack("<H", p.plane_id)
    header += struct.pack("<Q", g.n_sites)

    rec = np.zeros(g.n_sites, dtype=_SITE_DTYPE)
    rec["coord"] = g.coords
    rec["type"] = g.site_type
    rec["bid"] = np.where(g.boundary_id >= 0, g.boundary_id, 0)
    rec["q"] = np.round(g.wall_q * Q_SCALE).astype(np.uint16)
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        fh.write(rec.tobytes())


def load_geometry(path) -> Geometry:
    """Read a geometry file; per-link plane crossings are rebuilt from the
    stored plane records."""
    with open(path, "rb") as fh:
        buf = fh.read()
    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(buf):
            raise GeometryParseError("truncated geometry file")
        vals = struct.unpack_from(fmt, buf, off)
        off += size
        return vals

    if buf[:4] != MAGIC:
        raise GeometryParseError("bad magic, not a geometry file")
    off = 4
    (version,) = take("<I")
    if version != FORMAT_VERSION:
        raise GeometryParseError(f"unsupported format version {version}")
    dims = np.array(take("<3I"), dtype=np.int64)
    if (dims <= 0).any():
        raise GeometryParseError("non-positive bounding dims")
    (block_size,) = take("<I")
    (nplanes,) = take("<H")
    planes = []
    for _ in range(nplanes):
        point = take("<3d")
        normal = take("<3d")
        (pid,) = take("<H")
        planes.append(Plane(point, normal, pid))
    (n_sites,) = take("<Q")
    expected = n_sites * _SITE_DTYPE.itemsize
    if len(buf) - off < expected:
        raise GeometryParseError("truncated geometry file")
    if len(buf) - off > expected:
        raise GeometryParseError("trailing bytes after site records")
    rec = np.frombuffer(buf, dtype=_SITE_DTYPE, count=n_sites, offset=off)

    coords = rec["coord"].astype(np.int64)
    if (coords >= dims).any():
        raise GeometryParseError("site coordinate outside bounding box")
    keys = _coord_keys(coords, dims)
    if len(np.unique(keys)) != n_sites:
        raise GeometryParseError("duplicate site coordinates")
    site_type = rec["type"].astype(np.uint8)
    if (site_type > 3).any():
        raise GeometryParseError("unknown site type code")
    wall_q = rec["q"].astype(np.float64) / Q_SCALE
    boundary_id = np.where(
        (site_type == SiteType.INOUTLET) | (site_type == SiteType.WALL_INOUTLET),
        rec["bid"].astype(np.int64),
        -1,
    )

    g = Geometry(
        dims=dims,
        coords=coords,
        site_type=site_type,
        boundary_id=boundary_id,
        wall_q=wall_q,
        io_link=np.full((n_sites, 18), -1, dtype=np.int64),
        planes=planes,
        block_size=int(block_size),
    )
    _rebuild_io_links(g)
    return g


def _rebuild_io_links(g: Geometry) -> None:
    """Recover per-link plane crossings: dead links without a stored wall
    distance must cross one of the declared planes."""
    if not g.planes:
        return
    nbr = neighbor_table(g)
    for d in range(18):
        miss = np.nonzero((nbr[:, d] < 0) & (g.wall_q[:, d] >= 1.0))[0]
        if len(miss) == 0:
            continue
        origins = g.coords[miss].astype(np.float64)
        direction = d3q19.C_LINKS[d].astype(np.float64)
        best_t = np.full(len(miss), np.inf)
        best_id = np.full(len(miss), -1, dtype=np.int64)
        best_dist = np.full(len(miss), np.inf)
        for p in g.planes:
            t = _plane_crossing_t(origins, direction, p)
            tt = np.nan_to_num(t, nan=np.inf)
            hits = origins + np.nan_to_num(t, nan=0.0)[:, None] * direction
            dist = ((hits - np.asarray(p.point)) ** 2).sum(axis=1)
            better = (tt < best_t) | ((tt == best_t) & (dist < best_dist))
            better &= np.isfinite(tt)
            best_t[better] = tt[better]
            best_dist[better] = dist[better]
            best_id[better] = p.plane_id
        found = best_id >= 0
        g.io_link[miss[found], d] = best_id[found]
