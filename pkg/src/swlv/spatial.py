"""Sorted-cell spatial index.

Entities are bucketed by flat cell id ``y * width + x``. Buckets are the runs
of a stable argsort, so a rectangle query costs one pair of binary searches
per row plus the matches, independent of population size, and memory stays
O(entities) even on a 10^4 x 10^4 grid.
"""

import numpy as np


class SpatialIndex:
    def __init__(self, xs, ys, width):
        self.width = int(width)
        cells = np.asarray(ys, dtype=np.int64) * self.width + np.asarray(xs, dtype=np.int64)
        # stable sort keeps entity order (and so id order) inside a bucket
        self.order = np.argsort(cells, kind="stable")
        self.cells = cells[self.order]

    def __len__(self):
        return len(self.cells)

    def query_rect(self, x0, x1, y0, y1):
        """Entity positions (indices into the source arrays) inside the
        inclusive rectangle, sorted by index."""
        rows, _ = self.query_rects([x0], [x1], [y0], [y1])
        return np.sort(rows)

    def query_rects(self, x0, x1, y0, y1):
        """Vectorised rectangle query.

        Bounds are inclusive and must already be clipped to the grid; empty
        rectangles (x0 > x1 or y0 > y1) are allowed. Returns ``(entity, owner)``
        pairs where ``owner`` is the position of the rectangle in the input.
        """
        x0 = np.asarray(x0, dtype=np.int64)
        x1 = np.asarray(x1, dtype=np.int64)
        y0 = np.asarray(y0, dtype=np.int64)
        y1 = np.asarray(y1, dtype=np.int64)
        heights = np.where((x1 >= x0) & (y1 >= y0), y1 - y0 + 1, 0)
        total = int(heights.sum())
        if total == 0 or len(self.cells) == 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        owner = np.repeat(np.arange(len(x0)), heights)
        start = np.cumsum(heights) - heights
        row = y0[owner] + (np.arange(total) - start[owner])
        base = row * self.width
        lo = np.searchsorted(self.cells, base + x0[owner], side="left")
        hi = np.searchsorted(self.cells, base + x1[owner], side="right")
        counts = hi - lo
        n = int(counts.sum())
        if n == 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        run_owner = np.repeat(owner, counts)
        offs = np.cumsum(counts) - counts
        pos = np.repeat(lo - offs, counts) + np.arange(n)
        return self.order[pos], run_owner


def clip_rect(x0, x1, y0, y1, width, height):
    return (np.maximum(x0, 0), np.minimum(x1, width - 1),
            np.maximum(y0, 0), np.minimum(y1, height - 1))
