"""Geometry generation, classification, neighbours, and file round trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbdecomp import d3q19
from lbdecomp.errors import GeometryParseError, InvalidGeometryError
from lbdecomp.geometry import (
    Geometry,
    SiteType,
    classify_sites,
    fluid_fraction,
    generate_bifurcation,
    generate_box,
    generate_channel,
    generate_cylinder,
    generate_periodic_box,
    load_geometry,
    neighbor_table,
    save_geometry,
)


# ---------------------------------------------------------------------------
# cylinders

def test_cylinder_radius_one_is_a_single_column():
    g = generate_cylinder(1.0, 4)
    assert g.n_sites == 4
    assert tuple(g.dims) == (3, 3, 4)
    # every site touches the wall; the two cap sites also see a plane
    types = {SiteType(int(t)) for t in g.site_type}
    assert types == {SiteType.WALL, SiteType.WALL_INOUTLET}
    counts = g.type_counts()
    assert counts[SiteType.WALL_INOUTLET] == 2
    assert counts[SiteType.WALL] == 2
    assert counts[SiteType.BULK] == 0


def test_cylinder_fluid_count_matches_disc_brute_force():
    g = generate_cylinder(2.5, 16)
    disc = sum(
        1
        for dx in range(-2, 3)
        for dy in range(-2, 3)
        if dx * dx + dy * dy < 2.5**2
    )
    assert disc == 21
    assert g.n_sites == disc * 16


def test_cylinder_rejects_degenerate_parameters():
    with pytest.raises(InvalidGeometryError):
        generate_cylinder(0.5, 8)
    with pytest.raises(InvalidGeometryError):
        generate_cylinder(3.0, 1)
    with pytest.raises(InvalidGeometryError):
        generate_cylinder(3.0, 8, axis="w")


@pytest.mark.parametrize("axis", ["x", "y", "z"])
def test_cylinder_axis_only_permutes_the_lattice(axis):
    g = generate_cylinder(3.0, 12, axis=axis)
    ref = generate_cylinder(3.0, 12, axis="z")
    assert g.n_sites == ref.n_sites
    assert g.type_counts() == ref.type_counts()
    assert sorted(g.dims) == sorted(ref.dims)


def test_cylinder_plane_ids_and_boundary_ids():
    g = generate_cylinder(4.0, 10)
    assert [p.plane_id for p in g.planes] == [0, 1]
    io = g.boundary_id[g.boundary_id >= 0]
    assert set(np.unique(io)) == {0, 1}
    # inlet sites sit at z = 0, outlet sites at z = length - 1
    inlet = g.coords[g.boundary_id == 0]
    outlet = g.coords[g.boundary_id == 1]
    assert (inlet[:, 2] == 0).all()
    assert (outlet[:, 2] == 9).all()


def test_cylinder_wall_q_in_unit_interval():
    g = generate_cylinder(3.5, 8)
    crossing = g.wall_q < 1.0
    assert crossing.any()
    assert (g.wall_q[crossing] > 0.0).all()
    assert (g.wall_q <= 1.0).all()


# ---------------------------------------------------------------------------
# bifurcations

@pytest.fixture(scope="module")
def small_bifurcation():
    return generate_bifurcation(4.0, 3.0, 30.0)


def test_bifurcation_has_three_plane_ids(small_bifurcation):
    g = small_bifurcation
    assert sorted(p.plane_id for p in g.planes) == [0, 1, 2]
    io = set(np.unique(g.boundary_id[g.boundary_id >= 0]))
    assert io == {0, 1, 2}


def test_bifurcation_is_one_connected_component(small_bifurcation):
    g = small_bifurcation
    nbr = neighbor_table(g)
    seen = np.zeros(g.n_sites, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in nbr[u]:
            if v >= 0 and not seen[v]:
                seen[v] = True
                stack.append(int(v))
    assert seen.all()


def test_bifurcation_rejects_flat_and_right_angles():
    with pytest.raises(InvalidGeometryError):
        generate_bifurcation(4.0, 3.0, 0.0)
    with pytest.raises(InvalidGeometryError):
        generate_bifurcation(4.0, 3.0, 90.0)


def test_bifurcation_rejects_overlapping_outlets():
    # near-parallel short branches leave the outlet discs intersecting
    with pytest.raises(InvalidGeometryError):
        generate_bifurcation(4.0, 3.0, 5.0, lengths=(12, 12))


def test_bifurcation_pad_lowers_fluid_fraction():
    g0 = generate_bifurcation(4.0, 3.0, 30.0, pad=0)
    g8 = generate_bifurcation(4.0, 3.0, 30.0, pad=8)
    assert g8.n_sites == g0.n_sites
    assert fluid_fraction(g8) < fluid_fraction(g0)


# ---------------------------------------------------------------------------
# boxes and channels

def test_box_is_fully_fluid_and_closed():
    g = generate_box(4, 4, 4)
    assert g.n_sites == 64
    assert fluid_fraction(g) == 1.0
    assert g.boundary_id.max() == -1
    corner = g.type_counts()
    assert corner[SiteType.INOUTLET] == 0
    assert corner[SiteType.WALL_INOUTLET] == 0
    # 2x2x2 interior of a 4^3 box is bulk
    assert corner[SiteType.BULK] == 8


def test_periodic_box_is_all_bulk_with_full_degree():
    g = generate_periodic_box(4, 4, 4)
    assert g.type_counts()[SiteType.BULK] == g.n_sites
    nbr = neighbor_table(g)
    assert (nbr >= 0).all()


def test_channel_types_and_planes():
    g = generate_channel(8, 6, 3)
    assert [p.plane_id for p in g.planes] == [0, 1]
    inlet = g.coords[g.boundary_id == 0]
    assert (inlet[:, 0] == 0).all()
    walls = g.coords[g.site_type == SiteType.WALL]
    assert set(np.unique(walls[:, 1])) == {0, 5}


def test_channel_wall_q_honours_q_wall():
    g = generate_channel(8, 6, 3, q_wall=0.25)
    q = g.wall_q[g.wall_q < 1.0]
    assert np.allclose(q, 0.25, atol=1e-4)


# ---------------------------------------------------------------------------
# classification and neighbours

def test_classify_sites_is_idempotent(small_bifurcation):
    g = small_bifurcation
    again = classify_sites(g)
    assert np.array_equal(again.site_type, g.site_type)
    assert np.array_equal(again.boundary_id, g.boundary_id)


def test_classify_boundary_id_is_lowest_crossing_plane():
    g = generate_cylinder(3.0, 6)
    multi = (g.io_link >= 0).sum(axis=1) > 0
    expected = np.where(
        g.io_link >= 0, g.io_link, np.iinfo(np.int64).max
    ).min(axis=1)
    assert np.array_equal(g.boundary_id[multi], expected[multi])


def test_neighbor_table_is_symmetric():
    g = generate_cylinder(3.5, 8)
    nbr = neighbor_table(g)
    for q in range(1, 19):
        col = q - 1
        opp_col = int(d3q19.OPP[q]) - 1
        has = nbr[:, col] >= 0
        back = nbr[nbr[has, col], opp_col]
        assert np.array_equal(back, np.nonzero(has)[0])


def test_type_counts_total(small_bifurcation):
    g = small_bifurcation
    assert sum(g.type_counts().values()) == g.n_sites


def test_validate_rejects_duplicates_and_out_of_bounds():
    g = generate_box(2, 2, 2)
    bad = Geometry(
        dims=g.dims,
        coords=np.vstack([g.coords[:1], g.coords[:1]]),
        site_type=g.site_type[:2],
        boundary_id=g.boundary_id[:2],
        wall_q=g.wall_q[:2],
        io_link=g.io_link[:2],
    )
    with pytest.raises(InvalidGeometryError):
        bad.validate()
    oob = Geometry(
        dims=g.dims,
        coords=np.array([[0, 0, 5]]),
        site_type=g.site_type[:1],
        boundary_id=g.boundary_id[:1],
        wall_q=g.wall_q[:1],
        io_link=g.io_link[:1],
    )
    with pytest.raises(InvalidGeometryError):
        oob.validate()


# ---------------------------------------------------------------------------
# file format

def test_save_load_roundtrip(tmp_path, small_bifurcation):
    g = small_bifurcation
    path = tmp_path / "bif.geom"
    save_geometry(g, path)
    back = load_geometry(path)
    assert np.array_equal(back.dims, g.dims)
    assert np.array_equal(back.coords, g.coords)
    assert np.array_equal(back.site_type, g.site_type)
    assert np.array_equal(back.boundary_id, g.boundary_id)
    # wall distances are stored as 16-bit fixed point
    assert np.allclose(back.wall_q, g.wall_q, atol=1.0 / 65535)
    assert len(back.planes) == 3
    # rebuilt plane crossings classify the sites identically
    assert np.array_equal(
        classify_sites(back).site_type, g.site_type
    )


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.geom"
    path.write_bytes(b"XXXX" + b"\x00" * 64)
    with pytest.raises(GeometryParseError):
        load_geometry(path)


def test_load_rejects_bad_version(tmp_path):
    g = generate_box(2, 2, 2)
    path = tmp_path / "v.geom"
    save_geometry(g, path)
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(GeometryParseError):
        load_geometry(path)


def test_load_rejects_truncation_and_trailing(tmp_path):
    g = generate_box(3, 3, 3)
    path = tmp_path / "t.geom"
    save_geometry(g, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(GeometryParseError):
        load_geometry(path)
    path.write_bytes(raw + b"\x00")
    with pytest.raises(GeometryParseError):
        load_geometry(path)


def test_load_rejects_duplicate_sites(tmp_path):
    n = 2
    g = Geometry(
        dims=np.array([2, 1, 1], dtype=np.int64),
        coords=np.zeros((n, 3), dtype=np.int64),  # both at the origin
        site_type=np.zeros(n, dtype=np.uint8),
        boundary_id=np.full(n, -1, dtype=np.int64),
        wall_q=np.ones((n, 18)),
        io_link=np.full((n, 18), -1, dtype=np.int64),
    )
    path = tmp_path / "dup.geom"
    save_geometry(g, path)
    with pytest.raises(GeometryParseError):
        load_geometry(path)


@settings(max_examples=25, deadline=None)
@given(
    nx=st.integers(1, 5),
    ny=st.integers(1, 5),
    nz=st.integers(1, 5),
)
def test_box_roundtrip_preserves_everything(tmp_path_factory, nx, ny, nz):
    g = generate_box(nx, ny, nz)
    path = tmp_path_factory.mktemp("geom") / "box.geom"
    save_geometry(g, path)
    back = load_geometry(path)
    assert np.array_equal(back.coords, g.coords)
    assert np.array_equal(back.site_type, g.site_type)
    assert np.allclose(back.wall_q, g.wall_q, atol=1.0 / 65535)
