"""Compiled inner loops for the sampling-box engine and the pixel scan.

Polygon sets arrive packed: vertical edges ``(vx, vylo, vyhi)`` and
horizontal edges ``(hy, hxlo, hxhi)`` share one offset array, since a
rectilinear ring has as many of one as of the other.
"""
from __future__ import annotations

import numba as nb
import numpy as np

INSIDE = 0
OUTSIDE = 1
HOVER = 2

STATUS_OK = 0
STATUS_STACK_OVERFLOW = 1

_jit = nb.njit(nogil=True, cache=True)


@_jit
def pixel_inside(vx, vylo, vyhi, start, stop, px, py):
    """Parity of vertical edges right of the center of pixel (px, py).

    Edges are visited four at a time.
    """
    cnt = 0
    i = start
    end4 = start + ((stop - start) // 4) * 4
    while i < end4:
        cnt += (vx[i] > px) & (vylo[i] <= py) & (py < vyhi[i])
        cnt += (vx[i + 1] > px) & (vylo[i + 1] <= py) & (py < vyhi[i + 1])
        cnt += (vx[i + 2] > px) & (vylo[i + 2] <= py) & (py < vyhi[i + 2])
        cnt += (vx[i + 3] > px) & (vylo[i + 3] <= py) & (py < vyhi[i + 3])
        i += 4
    while i < stop:
        cnt += (vx[i] > px) & (vylo[i] <= py) & (py < vyhi[i])
        i += 1
    return (cnt & 1) == 1


@_jit
def box_position(vx, vylo, vyhi, hy, hxlo, hxhi, start, stop, xlo, ylo, xhi, yhi):
    for i in range(start, stop):
        x = vx[i]
        a = vylo[i]
        b = vyhi[i]
        # A vertex on the closed box counts as inside the box.
        if xlo <= x and x <= xhi:
            if (ylo <= a and a <= yhi) or (ylo <= b and b <= yhi):
                return HOVER
        if xlo < x and x < xhi:
            if (a < ylo and ylo < b) or (a < yhi and yhi < b):
                return HOVER
    for i in range(start, stop):
        y = hy[i]
        if ylo < y and y < yhi:
            a = hxlo[i]
            b = hxhi[i]
            if (a < xlo and xlo < b) or (a < xhi and xhi < b):
                return HOVER
    cx = (xlo + xhi - 1) // 2
    cy = (ylo + yhi - 1) // 2
    if pixel_inside(vx, vylo, vyhi, start, stop, cx, cy):
        return INSIDE
    return OUTSIDE


@_jit
def _gather_edges(vx, vylo, vyhi, start, stop, x0, y0, y1, out, row):
    """Copy the vertical edges that can cross a ray from some pixel of the
    box into scratch row ``row``; the others add nothing to any parity."""
    m = 0
    for i in range(start, stop):
        if vx[i] > x0 and vylo[i] < y1 and vyhi[i] > y0:
            out[row, m] = vx[i]
            out[row + 1, m] = vylo[i]
            out[row + 2, m] = vyhi[i]
            m += 1
    return m


@_jit
def pixelize_box(
    pvx, pvylo, pvyhi, ps, pe, qvx, qvylo, qvyhi, qs, qe,
    x0, y0, x1, y1, nosep, scratch,
):
    """Test every pixel of a box against both polygons.

    Returns ``(intersection, union)``; the union is only tallied in ``nosep``
    mode.  ``scratch`` is a (6, max edges) work array.
    """
    mp = _gather_edges(pvx, pvylo, pvyhi, ps, pe, x0, y0, y1, scratch, 0)
    mq = _gather_edges(qvx, qvylo, qvyhi, qs, qe, x0, y0, y1, scratch, 3)
    if mp == 0 and not nosep:
        return 0, 0
    ex = scratch[0]
    elo = scratch[1]
    ehi = scratch[2]
    fx = scratch[3]
    flo = scratch[4]
    fhi = scratch[5]
    inter = 0
    uni = 0
    for py in range(y0, y1):
        for px in range(x0, x1):
            a = pixel_inside(ex, elo, ehi, 0, mp, px, py)
            if not (a or nosep):
                continue
            b = pixel_inside(fx, flo, fhi, 0, mq, px, py)
            if a and b:
                inter += 1
            if nosep and (a or b):
                uni += 1
    return inter, uni


@_jit
def partition_into(xlo, ylo, xhi, yhi, fanout, side, sx0, sy0, sx1, sy1, pos):
    """Write the sub-boxes of a box at ``pos``; return how many were written.

    ``side`` is sqrt(fanout) when fanout is a perfect square, else 0.
    """
    w = xhi - xlo
    h = yhi - ylo
    if side > 0 and w > 1 and h > 1:
        nx = min(side, w)
        ny = min(side, h)
    elif w >= h:
        nx = min(fanout, w)
        ny = 1
    else:
        nx = 1
        ny = min(fanout, h)
    bw = w // nx
    rw = w % nx
    bh = h // ny
    rh = h % ny
    k = pos
    x0 = xlo
    for i in range(nx):
        wi = bw + 1 if i < rw else bw
        y0 = ylo
        for j in range(ny):
            hj = bh + 1 if j < rh else bh
            sx0[k] = x0
            sy0[k] = y0
            sx1[k] = x0 + wi
            sy1[k] = y0 + hj
            k += 1
            y0 += hj
        x0 += wi
    return k - pos


@_jit
def stack_capacity(w, h, fanout):
    """Upper bound on stack slots for a root box of ``w`` x ``h`` pixels.

    Every partition at least halves the longer side, so the nesting depth is
    at most ceil(log2 w) + ceil(log2 h); each level keeps its parent slot and
    adds at most ``fanout`` children.
    """
    depth = 0
    s = 1
    while s < w:
        s *= 2
        depth += 1
    s = 1
    while s < h:
        s *= 2
        depth += 1
    return fanout * (depth + 1) + 1


@_jit
def sampling_box_pair(
    pvx, pvylo, pvyhi, phy, phxlo, phxhi, ps, pe,
    qvx, qvylo, qvyhi, qhy, qhxlo, qhxhi, qs, qe,
    rx0, ry0, rx1, ry1,
    threshold, fanout, side, nosep,
    sx0, sy0, sx1, sy1, sp, capacity, scratch,
):
    """Stack-driven sampling-box evaluation of one polygon pair.

    Returns ``(intersection, union, status)``.  ``union`` is only tallied in
    ``nosep`` mode, where union-undecided boxes also keep refining.
    """
    inter = 0
    uni = 0
    if rx0 >= rx1 or ry0 >= ry1:
        return inter, uni, STATUS_OK
    sx0[0] = rx0
    sy0[0] = ry0
    sx1[0] = rx1
    sy1[0] = ry1
    sp[0] = 1
    top = 1
    while top > 0:
        top -= 1
        if sp[top] == 0:
            continue
        x0 = sx0[top]
        y0 = sy0[top]
        x1 = sx1[top]
        y1 = sy1[top]
        size = (x1 - x0) * (y1 - y0)
        # A single pixel cannot be split further, whatever the threshold.
        if size < threshold or size == 1:
            a, u = pixelize_box(
                pvx, pvylo, pvyhi, ps, pe, qvx, qvylo, qvyhi, qs, qe,
                x0, y0, x1, y1, nosep, scratch,
            )
            inter += a
            uni += u
            continue
        if top + 1 + fanout > capacity:
            return inter, uni, STATUS_STACK_OVERFLOW
        cnt = partition_into(x0, y0, x1, y1, fanout, side, sx0, sy0, sx1, sy1, top + 1)
        sp[top] = 0
        for k in range(top + 1, top + 1 + cnt):
            bx0 = sx0[k]
            by0 = sy0[k]
            bx1 = sx1[k]
            by1 = sy1[k]
            f1 = box_position(pvx, pvylo, pvyhi, phy, phxlo, phxhi, ps, pe, bx0, by0, bx1, by1)
            f2 = box_position(qvx, qvylo, qvyhi, qhy, qhxlo, qhxhi, qs, qe, bx0, by0, bx1, by1)
            if nosep:
                c = f1 == HOVER or f2 == HOVER
            else:
                c = (f1 == HOVER and f2 != OUTSIDE) or (f2 == HOVER and f1 != OUTSIDE)
            if not c:
                bsize = (bx1 - bx0) * (by1 - by0)
                if f1 == INSIDE and f2 == INSIDE:
                    inter += bsize
                if nosep and (f1 == INSIDE or f2 == INSIDE):
                    uni += bsize
            sp[k] = 1 if c else 0
        top = top + 1 + cnt
    return inter, uni, STATUS_OK


@_jit
def _max_edges(poff, qoff):
    m = 1
    for i in range(poff.shape[0] - 1):
        m = max(m, poff[i + 1] - poff[i])
    for i in range(qoff.shape[0] - 1):
        m = max(m, qoff[i + 1] - qoff[i])
    return m


@_jit
def sampling_box_batch(
    pvx, pvylo, pvyhi, phy, phxlo, phxhi, poff,
    qvx, qvylo, qvyhi, qhy, qhxlo, qhxhi, qoff,
    pidx, qidx, roots, threshold, fanout, nosep, capacity_override,
):
    """Evaluate many pairs; returns (intersections, unions, status, failed_at)."""
    n = pidx.shape[0]
    inter = np.zeros(n, dtype=np.int64)
    uni = np.zeros(n, dtype=np.int64)
    side = 0
    r = int(np.sqrt(fanout))
    for cand in range(max(r - 1, 0), r + 2):
        if cand * cand == fanout:
            side = cand
    cap = 1
    for k in range(n):
        c = stack_capacity(roots[k, 2] - roots[k, 0], roots[k, 3] - roots[k, 1], fanout)
        if c > cap:
            cap = c
    if capacity_override > 0:
        cap = capacity_override
    sx0 = np.empty(cap, dtype=np.int64)
    sy0 = np.empty(cap, dtype=np.int64)
    sx1 = np.empty(cap, dtype=np.int64)
    sy1 = np.empty(cap, dtype=np.int64)
    sp = np.empty(cap, dtype=np.uint8)
    scratch = np.empty((6, _max_edges(poff, qoff)), dtype=np.int64)
    for k in range(n):
        i = pidx[k]
        j = qidx[k]
        a, u, status = sampling_box_pair(
            pvx, pvylo, pvyhi, phy, phxlo, phxhi, poff[i], poff[i + 1],
            qvx, qvylo, qvyhi, qhy, qhxlo, qhxhi, qoff[j], qoff[j + 1],
            roots[k, 0], roots[k, 1], roots[k, 2], roots[k, 3],
            threshold, fanout, side, nosep,
            sx0, sy0, sx1, sy1, sp, cap, scratch,
        )
        if status != STATUS_OK:
            return inter, uni, status, k
        inter[k] = a
        uni[k] = u
    return inter, uni, STATUS_OK, -1


@_jit
def _crosses(vx, vylo, vyhi, start, stop, px, py):
    inside = False
    for i in range(start, stop):
        if vx[i] > px and vylo[i] <= py and py < vyhi[i]:
            inside = not inside
    return inside


@_jit
def pixel_scan_batch(pvx, pvylo, pvyhi, poff, qvx, qvylo, qvyhi, qoff, pidx, qidx, roots):
    """Brute-force pixel count of every pair's root box, one pixel at a time."""
    n = pidx.shape[0]
    inter = np.zeros(n, dtype=np.int64)
    for k in range(n):
        i = pidx[k]
        j = qidx[k]
        total = 0
        for py in range(roots[k, 1], roots[k, 3]):
            for px in range(roots[k, 0], roots[k, 2]):
                if _crosses(pvx, pvylo, pvyhi, poff[i], poff[i + 1], px, py) and _crosses(
                    qvx, qvylo, qvyhi, qoff[j], qoff[j + 1], px, py
                ):
                    total += 1
        inter[k] = total
    return inter


@_jit
def pixel_only_batch(pvx, pvylo, pvyhi, poff, qvx, qvylo, qvyhi, qoff, pidx, qidx, roots):
    """Pixel-only baseline: every pixel of the root box is tested against
    both polygons, and intersection and union are tallied directly."""
    n = pidx.shape[0]
    inter = np.zeros(n, dtype=np.int64)
    uni = np.zeros(n, dtype=np.int64)
    scratch = np.empty((6, _max_edges(poff, qoff)), dtype=np.int64)
    for k in range(n):
        i = pidx[k]
        j = qidx[k]
        a, u = pixelize_box(
            pvx, pvylo, pvyhi, poff[i], poff[i + 1], qvx, qvylo, qvyhi, qoff[j], qoff[j + 1],
            roots[k, 0], roots[k, 1], roots[k, 2], roots[k, 3], True, scratch,
        )
        inter[k] = a
        uni[k] = u
    return inter, uni
