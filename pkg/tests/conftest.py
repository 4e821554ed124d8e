from __future__ import annotations

import numpy as np
import pytest

from rectijac.datagen import gen_polygon, keyed_rng
from rectijac.geometry import RectilinearPolygon, validate_polygon


def rect(x0: int, y0: int, x1: int, y1: int, pid: int = 0) -> RectilinearPolygon:
    return validate_polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], pid)


L_SHAPE = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]


def raster(p: RectilinearPolygon, xlo: int, ylo: int, xhi: int, yhi: int) -> np.ndarray:
    """Boolean cell mask over [xlo, xhi) x [ylo, yhi) by winding numbers.

    Each vertical edge adds +-1 to every cell to its right on its rows; a
    prefix sum along x then gives the winding number of each cell.  Shares
    nothing with the ray-casting code under test.
    """
    h, w = yhi - ylo, xhi - xlo
    diff = np.zeros((h, w + 1), dtype=np.int64)
    vs = p.vertices
    for (xa, ya), (xb, yb) in zip(vs, vs[1:] + vs[:1]):
        if xa != xb:
            continue
        lo, hi = sorted((ya, yb))
        r0, r1 = max(lo, ylo) - ylo, min(hi, yhi) - ylo
        if r0 >= r1:
            continue
        col = min(max(xa - xlo, 0), w)
        diff[r0:r1, col] += 1 if yb < ya else -1
    # edges left of the window were clamped to column 0, so they still count
    wind = np.cumsum(diff, axis=1)[:, :w]
    return wind != 0


def raster_intersection(p: RectilinearPolygon, q: RectilinearPolygon) -> int:
    box = p.mbr.union(q.mbr)
    a = raster(p, box.xlo, box.ylo, box.xhi, box.yhi)
    b = raster(q, box.xlo, box.ylo, box.xhi, box.yhi)
    return int(np.count_nonzero(a & b))


def random_polygon(seed: int, idx: int, area: int, dx: int = 0, dy: int = 0) -> RectilinearPolygon:
    p = gen_polygon(keyed_rng(seed, 99, idx, 7), area, idx)
    return p.translate(dx, dy)


@pytest.fixture
def unit_square():
    return rect(0, 0, 1, 1)


# Acceptance verdict lines, echoed again in the terminal summary so they
# show up in captured runs as well as with -s.
ACCEPTANCE_LINES: list[str] = []


def record_verdict(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
