"""32x32 wireframe layout grids: encoding, top-n decoding, guidance marks.

A ground-truth grid holds exp(-0.1 * rank) at each region's quantized center
cell and zero elsewhere, so importance order equals value order.  Decoding
takes the n largest cells (row-major tie-break).  Guidance marks pair region
ranks with anchor indices through a fixed 13-color palette.
"""

from __future__ import annotations

import colorsys
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import CardinalityMismatch
from .imaging import RegionSet

GRID = 32
MAX_ANCHORS = 13

# 13 maximally distinct hues (HSV s=0.85 v=0.95), 8-bit RGB.
PALETTE: tuple[tuple[int, int, int], ...] = tuple(
    tuple(int(round(c * 255)) for c in colorsys.hsv_to_rgb(i / 13.0, 0.85, 0.95))
    for i in range(13)
)


@dataclass(frozen=True)
class LayoutGrid:
    cells: np.ndarray  # (32, 32) float, values in [0,1]

    def __post_init__(self):
        if self.cells.shape != (GRID, GRID):
            raise ValueError(f"grid must be {GRID}x{GRID}, got {self.cells.shape}")


@dataclass(frozen=True)
class Anchor:
    row: int
    col: int
    scale: float = 1.0


@dataclass(frozen=True)
class AnchorSet:
    anchors: tuple[Anchor, ...]  # importance-descending

    @property
    def n(self) -> int:
        return len(self.anchors)


@dataclass(frozen=True)
class GuidanceMarks:
    # (region_rank, anchor_index, rgb) triples; rank i <-> anchor i <-> color i.
    pairs: tuple[tuple[int, int, tuple[int, int, int]], ...]


def importance_value(rank: int) -> float:
    """Grid value for importance rank i (0-based): exp(-0.1 * i)."""
    return math.exp(-0.1 * rank)


def quantize_center(center: tuple[float, float]) -> tuple[int, int]:
    cx, cy = center
    row = min(int(cy * GRID), GRID - 1)
    col = min(int(cx * GRID), GRID - 1)
    return row, col


def _nearest_free(occupied: set[tuple[int, int]], row: int, col: int) -> tuple[int, int]:
    """Manhattan ring search outward; candidates visited in row-major order."""
    for radius in range(1, 2 * GRID):
        ring = []
        for r in range(max(0, row - radius), min(GRID, row + radius + 1)):
            dc = radius - abs(r - row)
            for c in {col - dc, col + dc}:
                if 0 <= c < GRID:
                    ring.append((r, c))
        for cell in sorted(ring):
            if cell not in occupied:
                return cell
    raise RuntimeError("grid full")


def place_centers(rs: RegionSet) -> list[tuple[int, int]]:
    """Quantized center cell per region in rank order, nudging collisions.

    Higher importance keeps its cell; a colliding lower rank moves to the
    nearest free cell.
    """
    occupied: set[tuple[int, int]] = set()
    cells = []
    for region in sorted(rs.regions, key=lambda r: r.rank):
        cell = quantize_center(region.center)
        if cell in occupied:
            cell = _nearest_free(occupied, *cell)
        occupied.add(cell)
        cells.append(cell)
    return cells


def encode_ground_truth(rs: RegionSet) -> LayoutGrid:
    grid = np.zeros((GRID, GRID), dtype=np.float32)
    for rank, (row, col) in enumerate(place_centers(rs)):
        grid[row, col] = importance_value(rank)
    return LayoutGrid(grid)


def decode_top_n(grid: LayoutGrid, n: int) -> AnchorSet:
    if not 1 <= n <= MAX_ANCHORS:
        raise ValueError(f"n must be in 1..{MAX_ANCHORS}, got {n}")
    cells = grid.cells
    rows, cols = np.unravel_index(np.arange(cells.size), cells.shape)
    # Descending value, then row-major for ties.
    order = np.lexsort((cols, rows, -cells.reshape(-1)))
    top = order[:n]
    return AnchorSet(tuple(Anchor(int(rows[i]), int(cols[i])) for i in top))


def guidance_marks(rs: RegionSet, a: AnchorSet) -> GuidanceMarks:
    if rs.n != a.n:
        raise CardinalityMismatch(f"{rs.n} regions vs {a.n} anchors")
    return GuidanceMarks(tuple((i, i, PALETTE[i]) for i in range(rs.n)))


def layout_to_json(a: AnchorSet, grid: LayoutGrid | None = None) -> str:
    doc = {
        "anchors": [
            {
                "row": an.row,
                "col": an.col,
                "scale": an.scale,
                "color": list(PALETTE[i]),
            }
            for i, an in enumerate(a.anchors)
        ],
        "order": "importance-desc",
    }
    if grid is not None:
        doc["grid"] = [[float(v) for v in row] for row in grid.cells]
    return json.dumps(doc)


def layout_from_json(text: str) -> tuple[AnchorSet, LayoutGrid | None]:
    doc = json.loads(text)
    anchors = AnchorSet(
        tuple(Anchor(int(a["row"]), int(a["col"]), float(a.get("scale", 1.0))) for a in doc["anchors"])
    )
    grid = None
    if "grid" in doc and doc["grid"] is not None:
        grid = LayoutGrid(np.asarray(doc["grid"], dtype=np.float32))
    return anchors, grid
