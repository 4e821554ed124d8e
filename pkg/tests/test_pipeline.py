from __future__ import annotations

import json
import math
from fractions import Fraction

import pytest

from conftest import rect
from rectijac.datagen import GenSpec, read_manifest, write_corpus
from rectijac.migration import MigrationPolicy
from rectijac.parser import PolygonFile, save_polygon_file
from rectijac.pipeline import (
    PipelineConfig,
    PipelineError,
    TileResult,
    aggregate_jaccard,
    run_multistream,
    run_pipeline,
    run_sequential,
)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    write_corpus(GenSpec(tiles=6, polygons_per_tile=15, drop=0.1, seed=2), d)
    return read_manifest(d / "manifest.json")


def test_aggregate_examples():
    t = TileResult("t", 2, 2, 2, 0, 0, ((1, 7), (1, 1)))
    agg = aggregate_jaccard([t])
    assert agg["jaccard"] == pytest.approx(4 / 7, abs=1e-15)
    empty = TileResult("t", 1, 1, 1, 1, 1, ())
    assert aggregate_jaccard([empty])["jaccard"] is None
    assert aggregate_jaccard([empty])["pairs"] == 1


def test_identical_single_tile(tmp_path):
    f = PolygonFile("img.0.0", (rect(0, 0, 3, 3, 0), rect(5, 5, 9, 7, 1)))
    save_polygon_file(f, tmp_path / "img.0.0.a.poly")
    save_polygon_file(f, tmp_path / "img.0.0.b.poly")
    rep = run_pipeline([(tmp_path / "img.0.0.a.poly", tmp_path / "img.0.0.b.poly")], PipelineConfig(workers=1))
    assert rep.jaccard == 1.0 and rep.intersecting == 2 and rep.image == "img"


def test_no_intersections(tmp_path):
    fa = PolygonFile("img.0.0", (rect(0, 0, 3, 3, 0),))
    fb = PolygonFile("img.0.0", (rect(10, 10, 13, 13, 0),))
    save_polygon_file(fa, tmp_path / "a.poly")
    save_polygon_file(fb, tmp_path / "b.poly")
    rep = run_sequential([("img.0.0", tmp_path / "a.poly", tmp_path / "b.poly")])
    d = rep.to_dict()
    assert d["jaccard"] is None and d["pairs"] == 0 and d["polygons_a"] == 1
    assert d["missing_a"] == 1 and d["missing_b"] == 1


def test_modes_agree(corpus):
    ref = run_sequential(corpus, PipelineConfig(workers=1)).to_json(deterministic=True)
    for cfg in (
        PipelineConfig(workers=2, buffer_capacity=1, migration=MigrationPolicy(True)),
        PipelineConfig(workers=3, buffer_capacity=2, batch_min=1),
        PipelineConfig(workers=1, buffer_capacity=1, migration=MigrationPolicy(True), batch_throttle=3.0),
    ):
        assert run_pipeline(corpus, cfg).to_json(deterministic=True) == ref
    assert run_multistream(corpus, PipelineConfig(workers=2), 3).to_json(deterministic=True) == ref


def test_report_contents(corpus):
    rep = run_pipeline(corpus, PipelineConfig(workers=2))
    d = json.loads(rep.to_json())
    assert set(d) >= {"image", "set_a", "set_b", "tiles", "jaccard", "missing_a", "missing_b", "timing", "migration"}
    assert {"tile_id", "pairs", "intersecting", "jaccard"} <= set(d["tiles"][0])
    assert "wall_ms" in d["timing"] and "parse_ms" in d["timing"]
    assert [t["tile_id"] for t in d["tiles"]] == sorted(t["tile_id"] for t in d["tiles"])
    exact = rep.jaccard_exact()
    assert abs(rep.jaccard - float(exact)) < 1e-12
    assert d["missing_a"] >= 1  # drop creates polygons with no counterpart
    tasks = d["migration"]["tasks_by_pool"]
    assert sum(tasks["parse"].values()) == sum(tasks["aggregate"].values()) == len(corpus)


def test_migration_conservation(corpus):
    rep = run_pipeline(
        corpus, PipelineConfig(workers=1, buffer_capacity=1, batch_throttle=20.0, migration=MigrationPolicy(True))
    )
    m = rep.migration
    # a one-slot buffer in front of a slow batch pool fills at once
    assert m["congestion_steals"] >= 1
    assert sum(m["tasks_by_pool"]["aggregate"].values()) == len(corpus)
    assert m["tasks_by_pool"]["aggregate"]["stage"] == m["congestion_steals"]
    assert m["tasks_by_pool"]["parse"]["batch"] == m["idleness_steals"]


def test_migration_off_is_dormant(corpus):
    rep = run_pipeline(corpus, PipelineConfig(workers=2, buffer_capacity=1))
    assert rep.migration["congestion_steals"] == rep.migration["idleness_steals"] == 0


def test_bad_file_aborts_with_tile(tmp_path, corpus):
    bad = tmp_path / "broken.1.1.a.poly"
    bad.write_text("0,0 0 1 1\n")
    manifest = list(corpus) + [("broken.1.1", bad, corpus[0][2])]
    for run in (run_pipeline, run_sequential):
        with pytest.raises(PipelineError) as info:
            run(manifest, PipelineConfig(workers=2))
        assert info.value.tile_id == "broken.1.1"


def test_missing_file_aborts(tmp_path, corpus):
    with pytest.raises(PipelineError):
        run_pipeline([("x.0.0", tmp_path / "nope.poly", corpus[0][2])], PipelineConfig(workers=1))


def test_manifest_validation(corpus):
    with pytest.raises(ValueError):
        run_pipeline([])
    with pytest.raises(ValueError):
        run_pipeline([corpus[0], corpus[0]])
    with pytest.raises(ValueError):
        PipelineConfig(workers=0)


def test_rational_aggregate_accuracy():
    import random

    rnd = random.Random(3)
    ratios = []
    for _ in range(10_000):
        u = rnd.randint(1, 10**6)
        ratios.append((rnd.randint(1, u), u))
    t = TileResult("t", len(ratios), 0, 0, 0, 0, tuple(ratios))
    exact = sum((Fraction(i, u) for i, u in ratios), Fraction(0)) / len(ratios)
    assert abs(aggregate_jaccard([t])["jaccard"] - float(exact)) < 1e-12
    assert math.isclose(t.jaccard, float(exact), abs_tol=1e-12)
