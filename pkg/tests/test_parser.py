from __future__ import annotations

import pytest

from conftest import rect
from rectijac.datagen import GenSpec, gen_tile_pair
from rectijac.parser import (
    BadMagic,
    PolygonFile,
    SourceFormat,
    TextSyntaxError,
    TruncatedRecord,
    ValidationError,
    VersionMismatch,
    load_polygon_file,
    pair_directories,
    parse_text,
    read_binary,
    save_polygon_file,
    sniff_format,
    tile_key,
    to_csv,
    to_wkt,
    write_binary,
)


def test_csv_examples():
    f = parse_text("0,0 0 1 0 1 1 0 1\n", "csv")
    assert len(f) == 1 and f.polygons[0].id == 0 and f.polygons[0].area == 1
    with pytest.raises(TextSyntaxError):
        parse_text("0,0 0 1 1\n", "csv")


def test_wkt_example():
    f = parse_text("POLYGON((0 0, 2 0, 2 2, 0 2, 0 0))\n", "wkt")
    assert f.polygons[0].area == 4 and f.polygons[0].id == 0


def test_blank_and_comment_lines_skipped():
    f = parse_text("# header\n\n7,0 0 1 0 1 1 0 1\r\n  \n3,5 5 6 5 6 6 5 6\n", "csv")
    assert [p.id for p in f.polygons] == [7, 3]
    w = parse_text("# c\nPOLYGON((0 0, 1 0, 1 1, 0 1, 0 0))\n\nPOLYGON((4 4, 5 4, 5 5, 4 5, 4 4))\n", "wkt")
    assert [p.id for p in w.polygons] == [1, 3]


@pytest.mark.parametrize(
    "text, line, col",
    [
        ("0,0 0 1 0 1 1 0 1\nx,0 0\n", 2, 1),
        ("0,0 0 1 0 1  1 0 1\n", 1, 13),
        ("0,0 0 1 0 1 1 0 a\n", 1, 17),
        ("0 0 1 0 1 1 0 1\n", 1, 1),
    ],
)
def test_csv_errors_carry_location(text, line, col):
    with pytest.raises(TextSyntaxError) as info:
        parse_text(text, "csv")
    assert (info.value.line, info.value.column) == (line, col)


@pytest.mark.parametrize(
    "text, err",
    [
        ("MULTIPOLYGON(((0 0, 1 0, 1 1, 0 1, 0 0)))\n", ValidationError),
        ("POLYGON((0 0, 4 0, 4 4, 0 4, 0 0), (1 1, 2 1, 2 2, 1 2, 1 1))\n", ValidationError),
        ("POLYGON EMPTY\n", ValidationError),
        ("POLYGON((0 0, 1 0, 1 1, 0 1))\n", TextSyntaxError),
        ("POLYGON((0 0, 1 0, 1 1, 0 1, 0 0)\n", TextSyntaxError),
        ("LINESTRING(0 0, 1 1)\n", TextSyntaxError),
        ("POLYGON((0 0, 1 1, 1 0, 0 1, 0 0))\n", ValidationError),
    ],
)
def test_wkt_errors(text, err):
    with pytest.raises(err):
        parse_text(text, "wkt")


def test_validation_and_duplicate_errors():
    with pytest.raises(ValidationError) as info:
        parse_text("0,0 0 1 0 1 1 0 1\n1,0 0 2 2 2 0 0 2\n", "csv")
    assert info.value.line == 2
    with pytest.raises(ValidationError):
        parse_text("4,0 0 1 0 1 1 0 1\n4,2 2 3 2 3 3 2 3\n", "csv")
    with pytest.raises(TextSyntaxError):
        parse_text(b"0,0 0 1 0 1 1 0 \xff\n", "csv")


def test_binary_round_trip_and_errors():
    fa, _ = gen_tile_pair(GenSpec(tiles=1, polygons_per_tile=25), 0)
    blob = write_binary(fa)
    back = read_binary(blob, fa.tile_id)
    assert back.polygons == fa.polygons
    empty = PolygonFile("t", ())
    assert len(read_binary(write_binary(empty))) == 0
    with pytest.raises(BadMagic):
        read_binary(b"X" + blob[1:])
    with pytest.raises(VersionMismatch):
        read_binary(blob[:4] + b"\x02\x00" + blob[6:])
    with pytest.raises(TruncatedRecord):
        read_binary(blob[:-3])
    with pytest.raises(TruncatedRecord):
        read_binary(blob + b"\x00")


def test_text_canonical_round_trip():
    fa, fb = gen_tile_pair(GenSpec(tiles=1, polygons_per_tile=30, perturbation=0.5), 0)
    for f in (fa, fb):
        once = parse_text(to_csv(f), "csv", f.tile_id)
        assert once.polygons == f.polygons
        assert to_csv(parse_text(to_csv(once), "csv")) == to_csv(once)
        via_bin = read_binary(write_binary(once))
        assert to_csv(via_bin) == to_csv(once)
        wkt = parse_text(to_wkt(f), "wkt")
        assert [p.vertices for p in wkt.polygons] == [p.vertices for p in f.polygons]


def test_polygon_file_invariants():
    with pytest.raises(ValueError):
        PolygonFile("", ())
    with pytest.raises(ValueError):
        PolygonFile("t", (rect(0, 0, 1, 1, 3), rect(2, 2, 3, 3, 3)))


def test_sniff_and_tile_key(tmp_path):
    assert sniff_format(b"RJPF\x01\x00") is SourceFormat.BINARY
    assert sniff_format(b"# c\nPOLYGON((0 0, 1 0, 1 1, 0 1, 0 0))") is SourceFormat.WKT
    assert sniff_format(b"0,0 0 1 0 1 1 0 1") is SourceFormat.CSV
    assert tile_key("/x/img.3.4.seg1.poly") == "img.3.4"
    assert tile_key("stray.poly") == "stray"
    f = PolygonFile("img.0.0", (rect(0, 0, 2, 2, 0),))
    for fmt in SourceFormat:
        path = tmp_path / f"img.0.0.{fmt.value}.poly"
        save_polygon_file(f, path, fmt)
        loaded = load_polygon_file(path)
        assert loaded.source_format is fmt and loaded.tile_id == "img.0.0"
        assert [p.vertices for p in loaded.polygons] == [p.vertices for p in f.polygons]


def test_pair_directories(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    for name in ("img.0.0.a.poly", "img.0.1.a.poly", "lonely.poly"):
        (a / name).write_text("")
    for name in ("img.0.1.b.poly", "img.0.0.b.poly", "img.9.9.b.poly"):
        (b / name).write_text("")
    pairs, unpaired = pair_directories(a, b)
    assert [k for k, _, _ in pairs] == ["img.0.0", "img.0.1"]
    assert sorted(p.name for p in unpaired) == ["img.9.9.b.poly", "lonely.poly"]
