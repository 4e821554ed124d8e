from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import L_SHAPE, random_polygon, raster, rect
from rectijac.geometry import (
    Degenerate,
    GridPoint,
    Mbr,
    NotRectilinear,
    OutOfRange,
    SelfIntersecting,
    check_simple,
    compute_mbr,
    pixel_in_polygon,
    polygon_area,
    signed_area2,
    validate_polygon,
)


def test_area_examples():
    assert polygon_area(rect(0, 0, 1, 1)) == 1
    assert polygon_area(validate_polygon([(0, 0), (3, 0), (3, 2), (0, 2)])) == 6
    assert polygon_area(validate_polygon(L_SHAPE)) == 3


def test_pixel_in_polygon_examples(unit_square):
    assert pixel_in_polygon(GridPoint(0, 0), unit_square)
    assert not pixel_in_polygon(GridPoint(5, 5), unit_square)
    ell = validate_polygon(L_SHAPE)
    assert not pixel_in_polygon(GridPoint(1, 1), ell)
    assert pixel_in_polygon(GridPoint(0, 1), ell)
    inside = {(x, y) for x in range(2) for y in range(2) if pixel_in_polygon(GridPoint(x, y), ell)}
    assert inside == {(0, 0), (1, 0), (0, 1)}


def test_mbr_examples(unit_square):
    assert unit_square.mbr == Mbr(0, 0, 1, 1)
    ell = validate_polygon(L_SHAPE)
    assert ell.mbr == Mbr(0, 0, 2, 2)
    assert ell.translate(10, 10).mbr == Mbr(10, 10, 12, 12)
    assert compute_mbr(L_SHAPE) == Mbr(0, 0, 2, 2)


def test_mbr_half_open_semantics():
    a, b = Mbr(0, 0, 2, 2), Mbr(2, 0, 4, 2)
    assert not a.intersects(b)
    assert a.intersection(b).is_empty
    assert a.intersects(Mbr(1, 1, 3, 3))
    assert a.intersection(Mbr(1, 1, 3, 3)) == Mbr(1, 1, 2, 2)
    assert a.union(b) == Mbr(0, 0, 4, 2)
    assert Mbr(0, 0, 4, 4).contains(Mbr(1, 1, 2, 2))
    assert len(list(Mbr(0, 0, 3, 2).pixels())) == 6


def test_validate_reorients_clockwise():
    cw = [(0, 0), (0, 1), (1, 1), (1, 0)]
    assert signed_area2(cw) < 0
    p = validate_polygon(cw)
    assert signed_area2(p.vertices) > 0
    assert p.area == 1


def test_validate_drops_duplicates_and_collinear():
    p = validate_polygon([(0, 0), (2, 0), (2, 0), (2, 2), (0, 2)])
    assert p.area == 4 and len(p.vertices) == 4
    q = validate_polygon([(0, 0), (1, 0), (2, 0), (2, 2), (0, 2), (0, 1)])
    assert len(q.vertices) == 4 and q.area == 4
    closed = validate_polygon([(0, 0), (2, 0), (2, 2), (0, 2), (0, 0)])
    assert closed.vertices == p.vertices


@pytest.mark.parametrize(
    "raw, err",
    [
        ([(0, 0), (1, 1), (1, 0), (0, 1)], NotRectilinear),
        ([(0, 0), (1, 0), (1, 1)], NotRectilinear),
        ([(0, 0), (2, 0), (2, 0)], Degenerate),
        ([(0, 0), (2, 0), (1, 0), (1, 1), (0, 1)], SelfIntersecting),
        ([(0, 0), (2**31, 0), (2**31, 1), (0, 1)], OutOfRange),
        # a bow tie made of two squares touching at a corner
        ([(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (1, 2), (1, 1), (0, 1)], SelfIntersecting),
    ],
)
def test_validate_errors(raw, err):
    with pytest.raises(err):
        validate_polygon(raw)


def test_self_crossing_rejected():
    # figure-eight: two lobes crossing at a point interior to two edges
    raw = [(0, 0), (2, 0), (2, 3), (3, 3), (3, 1), (1, 1), (1, 2), (0, 2)]
    with pytest.raises(SelfIntersecting):
        check_simple(raw)
    with pytest.raises(SelfIntersecting):
        validate_polygon(raw)
    # with the check switched off the ring is taken on trust
    assert validate_polygon(raw, check_simplicity=False).vertices


def test_scale_and_translate():
    p = validate_polygon(L_SHAPE)
    assert p.scale(3).area == 9 * p.area
    assert p.translate(-5, 7).area == p.area
    assert p.with_id(42).id == 42


def _count_pixels(p):
    m = p.mbr
    return sum(pixel_in_polygon(px, p) for px in m.pixels())


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 120), st.integers(-1000, 1000), st.integers(-1000, 1000))
def test_area_equals_pixel_count(seed, area, dx, dy):
    p = random_polygon(seed, 0, area, dx, dy)
    assert polygon_area(p) == area
    assert _count_pixels(p) == area
    m = p.mbr
    assert np.count_nonzero(raster(p, m.xlo, m.ylo, m.xhi, m.yhi)) == area
    assert polygon_area(p) <= m.width * m.height


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 60))
def test_reversed_input_is_equivalent(seed, area):
    p = random_polygon(seed, 1, area)
    r = validate_polygon(list(reversed(p.vertices)), p.id)
    assert r.area == p.area
    for px in p.mbr.pixels():
        assert pixel_in_polygon(px, r) == pixel_in_polygon(px, p)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 60), st.integers(-50, 50), st.integers(-50, 50))
def test_translation_commutes(seed, area, dx, dy):
    p = random_polygon(seed, 2, area)
    t = p.translate(dx, dy)
    for px in p.mbr.pixels():
        assert pixel_in_polygon(px, p) == pixel_in_polygon(GridPoint(px.x + dx, px.y + dy), t)
