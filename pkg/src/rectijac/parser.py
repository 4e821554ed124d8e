"""Polygon file loading: CSV and WKT text formats plus a binary cache.

CSV lines read ``id,x0 y0 x1 y1 ... xm ym`` with the ring implicitly closed.
WKT lines hold a single-ring ``POLYGON((x y, ..., x y))`` whose first point
is repeated last; the polygon id is the zero-based line number.  Blank lines
and lines starting with ``#`` are skipped in both.

The binary layout is ``RJPF``, u16 version, u32 polygon count, then per
polygon a u64 id, a u32 vertex count and little-endian i32 vertex pairs.
"""
from __future__ import annotations

import enum
import os
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .geometry import PolygonError, RectilinearPolygon, validate_polygon

MAGIC = b"RJPF"
VERSION = 1
_HEADER = struct.Struct("<4sHI")
_RECORD = struct.Struct("<QI")

TILE_NAME = re.compile(r"^(?P<image>.+)\.(?P<row>\d+)\.(?P<col>\d+)\.(?P<tag>[^.]+)\.poly$")


class SourceFormat(str, enum.Enum):
    CSV = "csv"
    WKT = "wkt"
    BINARY = "bin"


class ParseError(ValueError):
    """Base class for any failure to load a polygon file."""


class TextSyntaxError(ParseError):
    def __init__(self, line: int, column: int, reason: str):
        super().__init__(f"line {line}, column {column}: {reason}")
        self.line = line
        self.column = column
        self.reason = reason


class ValidationError(ParseError):
    def __init__(self, line: int, error: Exception):
        super().__init__(f"line {line}: {error}")
        self.line = line
        self.error = error


class BinaryFormatError(ParseError):
    pass


class BadMagic(BinaryFormatError):
    pass


class VersionMismatch(BinaryFormatError):
    pass


class TruncatedRecord(BinaryFormatError):
    pass


@dataclass(frozen=True)
class PolygonFile:
    tile_id: str
    polygons: tuple[RectilinearPolygon, ...]
    source_format: SourceFormat = SourceFormat.CSV

    def __post_init__(self):
        if not self.tile_id:
            raise ValueError("tile_id must be nonempty")
        ids = [p.id for p in self.polygons]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate polygon ids in tile {self.tile_id}")

    def __len__(self) -> int:
        return len(self.polygons)


_INT = re.compile(r"-?\d+")
_UINT = re.compile(r"\d+")
U64_MAX = 2**64 - 1


def _parse_csv_line(text: str, lineno: int) -> tuple[int, list[tuple[int, int]]]:
    comma = text.find(",")
    if comma < 0:
        raise TextSyntaxError(lineno, 1, "expected 'id,' prefix")
    id_text = text[:comma]
    if not _UINT.fullmatch(id_text):
        raise TextSyntaxError(lineno, 1, f"bad polygon id {id_text!r}")
    pid = int(id_text)
    if pid > U64_MAX:
        raise TextSyntaxError(lineno, 1, "polygon id exceeds 64 bits")
    coords = []
    col = comma + 2
    for tok in text[comma + 1 :].split(" "):
        if not _INT.fullmatch(tok):
            raise TextSyntaxError(lineno, col, f"expected integer, got {tok!r}")
        coords.append(int(tok))
        col += len(tok) + 1
    if len(coords) % 2:
        raise TextSyntaxError(lineno, col - 1, "odd number of coordinates")
    if len(coords) < 8:
        raise TextSyntaxError(lineno, col - 1, f"ring has {len(coords) // 2} vertices, need at least 4")
    return pid, list(zip(coords[::2], coords[1::2]))


_WKT_HEAD = re.compile(r"\s*([A-Za-z]+)\s*")
_WKT_POINT = re.compile(r"\s*(-?\d+)\s+(-?\d+)\s*")


def _parse_wkt_line(text: str, lineno: int) -> list[tuple[int, int]]:
    m = _WKT_HEAD.match(text)
    if not m:
        raise TextSyntaxError(lineno, 1, "expected geometry keyword")
    kind = m.group(1).upper()
    pos = m.end()
    if kind != "POLYGON":
        if kind in ("MULTIPOLYGON", "GEOMETRYCOLLECTION"):
            raise ValidationError(lineno, PolygonError(f"{kind} is not supported, only single-ring POLYGON"))
        raise TextSyntaxError(lineno, 1, f"unknown geometry {m.group(1)!r}")

    def expect(ch: str, pos: int) -> int:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text) or text[pos] != ch:
            got = text[pos] if pos < len(text) else "end of line"
            raise TextSyntaxError(lineno, pos + 1, f"expected {ch!r}, got {got!r}")
        return pos + 1

    if text[pos:].strip().upper() == "EMPTY":
        raise ValidationError(lineno, PolygonError("empty polygon"))
    pos = expect("(", pos)
    pos = expect("(", pos)
    pts = []
    while True:
        pm = _WKT_POINT.match(text, pos)
        if not pm:
            raise TextSyntaxError(lineno, pos + 1, "expected 'x y' integer pair")
        pts.append((int(pm.group(1)), int(pm.group(2))))
        pos = pm.end()
        if pos < len(text) and text[pos] == ",":
            pos += 1
            continue
        break
    pos = expect(")", pos)
    while pos < len(text) and text[pos].isspace():
        pos += 1
    if pos < len(text) and text[pos] == ",":
        raise ValidationError(lineno, PolygonError("polygons with holes are not supported"))
    pos = expect(")", pos)
    if text[pos:].strip():
        raise TextSyntaxError(lineno, pos + 1, "trailing characters")
    if len(pts) < 5:
        raise TextSyntaxError(lineno, pos, f"ring has {len(pts)} points, need at least 5 with closure")
    if pts[0] != pts[-1]:
        raise TextSyntaxError(lineno, pos, "ring is not closed (first point must repeat last)")
    return pts[:-1]


def parse_text(data: bytes | str, fmt: SourceFormat | str = SourceFormat.CSV, tile_id: str = "tile") -> PolygonFile:
    """Parse a whole text polygon file; the first bad line aborts with its location."""
    fmt = SourceFormat(fmt)
    if fmt is SourceFormat.BINARY:
        raise ValueError("use read_binary for binary files")
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            line = data[: exc.start].count(b"\n") + 1
            raise TextSyntaxError(line, 1, "invalid UTF-8") from None
    polygons = []
    seen: set[int] = set()
    for idx, raw in enumerate(data.split("\n")):
        lineno = idx + 1
        text = raw[:-1] if raw.endswith("\r") else raw
        if not text.strip() or text.lstrip().startswith("#"):
            continue
        if fmt is SourceFormat.CSV:
            pid, pts = _parse_csv_line(text, lineno)
        else:
            pid, pts = idx, _parse_wkt_line(text, lineno)
        if pid in seen:
            raise ValidationError(lineno, PolygonError(f"duplicate polygon id {pid}"))
        seen.add(pid)
        try:
            polygons.append(validate_polygon(pts, pid))
        except PolygonError as exc:
            raise ValidationError(lineno, exc) from None
    return PolygonFile(tile_id, tuple(polygons), fmt)


def to_csv(f: PolygonFile | Sequence[RectilinearPolygon]) -> str:
    polys = f.polygons if isinstance(f, PolygonFile) else f
    lines = [f"{p.id}," + " ".join(f"{x} {y}" for x, y in p.vertices) for p in polys]
    return "".join(line + "\n" for line in lines)


def to_wkt(f: PolygonFile | Sequence[RectilinearPolygon]) -> str:
    """WKT rendering; ids are not stored, so re-parsing renumbers by line."""
    polys = f.polygons if isinstance(f, PolygonFile) else f
    out = []
    for p in polys:
        ring = list(p.vertices) + [p.vertices[0]]
        out.append("POLYGON((" + ", ".join(f"{x} {y}" for x, y in ring) + "))\n")
    return "".join(out)


def write_binary(f: PolygonFile) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(f.polygons))]
    for p in f.polygons:
        parts.append(_RECORD.pack(p.id, len(p.vertices)))
        parts.append(struct.pack(f"<{2 * len(p.vertices)}i", *(c for v in p.vertices for c in v)))
    return b"".join(parts)


def read_binary(data: bytes, tile_id: str = "tile") -> PolygonFile:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic("not a polygon cache file")
    if len(data) < _HEADER.size:
        raise TruncatedRecord("header is truncated")
    _, version, count = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise VersionMismatch(f"version {version}, expected {VERSION}")
    pos = _HEADER.size
    polygons = []
    seen: set[int] = set()
    for rec in range(count):
        if pos + _RECORD.size > len(data):
            raise TruncatedRecord(f"record {rec} header is truncated")
        pid, nv = _RECORD.unpack_from(data, pos)
        pos += _RECORD.size
        need = 8 * nv
        if pos + need > len(data):
            raise TruncatedRecord(f"record {rec} vertices are truncated")
        flat = struct.unpack_from(f"<{2 * nv}i", data, pos)
        pos += need
        if pid in seen:
            raise ValidationError(rec + 1, PolygonError(f"duplicate polygon id {pid}"))
        seen.add(pid)
        try:
            polygons.append(validate_polygon(list(zip(flat[::2], flat[1::2])), pid))
        except PolygonError as exc:
            raise ValidationError(rec + 1, exc) from None
    if pos != len(data):
        raise TruncatedRecord(f"{len(data) - pos} trailing bytes after last record")
    return PolygonFile(tile_id, tuple(polygons), SourceFormat.BINARY)


def sniff_format(data: bytes) -> SourceFormat:
    if data[:4] == MAGIC:
        return SourceFormat.BINARY
    for line in data.splitlines():
        s = line.strip()
        if not s or s.startswith(b"#"):
            continue
        if s[:1].isalpha():
            return SourceFormat.WKT
        return SourceFormat.CSV
    return SourceFormat.CSV


def tile_key(path: str | os.PathLike) -> str:
    """``<image>.<row>.<col>`` for conforming names, else the bare stem."""
    name = Path(path).name
    m = TILE_NAME.match(name)
    if m:
        return f"{m['image']}.{m['row']}.{m['col']}"
    return Path(name).stem or name


def parse_polygon_bytes(data: bytes, tile_id: str, fmt: SourceFormat | str | None = None) -> PolygonFile:
    """Parse file contents already in memory; ``fmt`` None or "auto" sniffs."""
    fmt = sniff_format(data) if fmt in (None, "auto") else SourceFormat(fmt)
    if fmt is SourceFormat.BINARY:
        return read_binary(data, tile_id)
    return parse_text(data, fmt, tile_id)


def load_polygon_file(path: str | os.PathLike, fmt: SourceFormat | str | None = None) -> PolygonFile:
    return parse_polygon_bytes(Path(path).read_bytes(), tile_key(path), fmt)


def save_polygon_file(f: PolygonFile, path: str | os.PathLike, fmt: SourceFormat | str = SourceFormat.CSV) -> None:
    fmt = SourceFormat(fmt)
    if fmt is SourceFormat.BINARY:
        Path(path).write_bytes(write_binary(f))
    elif fmt is SourceFormat.WKT:
        Path(path).write_text(to_wkt(f))
    else:
        Path(path).write_text(to_csv(f))


def pair_directories(dir_a: str | os.PathLike, dir_b: str | os.PathLike) -> tuple[list[tuple[str, Path, Path]], list[Path]]:
    """Match ``.poly`` files of two directories by tile key.

    Returns ``(pairs, unpaired)`` with pairs sorted by tile key.
    """
    def collect(d):
        out: dict[str, list[Path]] = {}
        for p in sorted(Path(d).glob("*.poly")):
            out.setdefault(tile_key(p), []).append(p)
        return out

    a, b = collect(dir_a), collect(dir_b)
    pairs, unpaired = [], []
    for key in sorted(set(a) | set(b)):
        fa, fb = a.get(key, []), b.get(key, [])
        if len(fa) == 1 and len(fb) == 1:
            pairs.append((key, fa[0], fb[0]))
        else:
            unpaired.extend(fa + fb)
    return pairs, unpaired
