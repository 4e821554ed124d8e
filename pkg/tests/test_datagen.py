from __future__ import annotations

import numpy as np
import pytest

from rectijac.datagen import (
    GenSpec,
    accrete,
    draw_area,
    gen_cells,
    gen_polygon,
    gen_tile_pair,
    keyed_rng,
    read_manifest,
    trace_boundary,
    write_corpus,
)
from rectijac.geometry import check_simple, validate_polygon
from rectijac.index import mbr_join
from rectijac.pixelbox import intersection_area_oracle


def test_unit_target():
    p = gen_polygon(keyed_rng(0, 0, 0, 0), 1)
    assert p.area == 1 and len(p.vertices) == 4


def test_generated_polygons_are_valid_and_exact():
    for i in range(200):
        rng = keyed_rng(3, 0, i, 0)
        area = draw_area(keyed_rng(3, 0, i, 2), 150, 100)
        cells = gen_cells(rng, area)
        p = validate_polygon(trace_boundary(cells), i, check_simplicity=True)
        check_simple(p.vertices)
        assert p.area == len(cells) == area


def test_accrete_keeps_cells_and_adds_exactly():
    rng = keyed_rng(1, 0, 0, 0)
    base = gen_cells(rng, 40)
    grown = accrete(rng, base, 9)
    assert base <= grown and len(grown) == 49


def test_mean_area():
    rng = np.random.default_rng(5)
    draws = [draw_area(rng, 150, 100) for _ in range(10_000)]
    assert abs(np.mean(draws) - 150) < 15
    assert draw_area(rng, 7, 0) == 7


def test_spec_validation():
    with pytest.raises(ValueError):
        GenSpec(scale_factor=6)
    with pytest.raises(ValueError):
        GenSpec(drop=1.5)


def test_identical_sets_without_perturbation():
    fa, fb = gen_tile_pair(GenSpec(tiles=1, polygons_per_tile=40, perturbation=0.0), 0)
    assert fa.polygons == fb.polygons
    # the layout never overlaps within a set
    pairs = mbr_join(fa.polygons, fa.polygons)
    assert all(c.p_ref == c.q_ref for c in pairs)


def test_drop_rate():
    fa, fb = gen_tile_pair(GenSpec(tiles=1, polygons_per_tile=1000, drop=0.1, perturbation=0.0, mean_area=20, area_stddev=10), 0)
    missing = len(fa) - len(fb)
    assert 60 <= missing <= 140


def test_scale_law():
    s1 = GenSpec(tiles=1, polygons_per_tile=15, seed=9)
    s3 = GenSpec(tiles=1, polygons_per_tile=15, seed=9, scale_factor=3)
    a1, b1 = gen_tile_pair(s1, 0)
    a3, b3 = gen_tile_pair(s3, 0)
    for c in mbr_join(a1.polygons, b1.polygons):
        i1 = intersection_area_oracle(a1.polygons[c.p_ref], b1.polygons[c.q_ref]).area_intersection
        i3 = intersection_area_oracle(a3.polygons[c.p_ref], b3.polygons[c.q_ref]).area_intersection
        assert i3 == 9 * i1


def test_corpus_is_reproducible(tmp_path):
    spec = GenSpec(tiles=3, polygons_per_tile=10, seed=4)
    write_corpus(spec, tmp_path / "x")
    write_corpus(spec, tmp_path / "y", "bin")
    write_corpus(spec, tmp_path / "z")
    tiles = read_manifest(tmp_path / "x" / "manifest.json")
    assert len(tiles) == 3
    for tid, pa, pb in tiles:
        rel_a, rel_b = pa.relative_to(tmp_path / "x"), pb.relative_to(tmp_path / "x")
        assert pa.read_bytes() == (tmp_path / "z" / rel_a).read_bytes()
        assert pb.read_bytes() == (tmp_path / "z" / rel_b).read_bytes()
    assert (tmp_path / "x" / "manifest.json").read_text() == (tmp_path / "z" / "manifest.json").read_text()
