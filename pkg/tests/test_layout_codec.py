import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layoutmuse import layout_codec as lc
from layoutmuse.errors import CardinalityMismatch
from layoutmuse.imaging import Region, RegionSet


def region_at(center, area, rank, canvas=64):
    """Synthetic region whose normalized center lands at `center` = (cx, cy)."""
    cx, cy = center
    px, py = int(cx * canvas), int(cy * canvas)
    mask = np.zeros((canvas, canvas), bool)
    mask[py, px] = True
    return Region(
        id=rank, mask=mask, bbox=(px, py, px + 1, py + 1), center=center, area=area, rank=rank
    )


def region_set(centers):
    return RegionSet(
        tuple(region_at(c, area=100 - i, rank=i) for i, c in enumerate(centers))
    )


def brute_force_top_n(cells, n):
    """Independent decode: full sort of all cells by (-value, row, col)."""
    entries = [
        (-float(cells[r, c]), r, c) for r in range(lc.GRID) for c in range(lc.GRID)
    ]
    entries.sort()
    return [(r, c) for _, r, c in entries[:n]]


class TestImportanceValues:
    def test_anchor_value_is_one(self):
        assert lc.importance_value(0) == 1.0

    def test_matches_direct_evaluation(self):
        for i in range(13):
            assert abs(lc.importance_value(i) - math.exp(-0.1 * i)) < 1e-7

    def test_strictly_decreasing(self):
        vals = [lc.importance_value(i) for i in range(13)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestQuantize:
    def test_center_of_cell(self):
        assert lc.quantize_center((0.5, 0.5)) == (16, 16)

    def test_edges_clamped(self):
        assert lc.quantize_center((1.0, 1.0)) == (31, 31)
        assert lc.quantize_center((0.0, 0.0)) == (0, 0)


class TestPlacement:
    def test_no_collision_keeps_cells(self):
        rs = region_set([(0.1, 0.1), (0.5, 0.5), (0.9, 0.9)])
        assert lc.place_centers(rs) == [(3, 3), (16, 16), (28, 28)]

    def test_collision_nudges_lower_rank(self):
        rs = region_set([(0.5, 0.5), (0.5, 0.5)])
        cells = lc.place_centers(rs)
        assert cells[0] == (16, 16)
        assert cells[1] != (16, 16)
        r, c = cells[1]
        assert abs(r - 16) + abs(c - 16) == 1

    def test_collision_nudge_is_row_major_deterministic(self):
        rs = region_set([(0.5, 0.5), (0.5, 0.5)])
        # Row-major order over the radius-1 Manhattan ring puts (15, 16) first.
        assert lc.place_centers(rs)[1] == (15, 16)

    def test_all_thirteen_stacked(self):
        rs = region_set([(0.5, 0.5)] * 13)
        cells = lc.place_centers(rs)
        assert len(set(cells)) == 13


class TestEncodeDecode:
    def test_round_trip_rank_order(self):
        centers = [(0.12, 0.8), (0.5, 0.22), (0.77, 0.5), (0.31, 0.31)]
        rs = region_set(centers)
        grid = lc.encode_ground_truth(rs)
        anchors = lc.decode_top_n(grid, rs.n)
        assert [(a.row, a.col) for a in anchors.anchors] == lc.place_centers(rs)

    def test_round_trip_with_collisions(self):
        rs = region_set([(0.5, 0.5)] * 5 + [(0.2, 0.2)] * 3)
        grid = lc.encode_ground_truth(rs)
        anchors = lc.decode_top_n(grid, rs.n)
        assert [(a.row, a.col) for a in anchors.anchors] == lc.place_centers(rs)

    def test_decode_matches_brute_force_random_grids(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            cells = rng.random((32, 32)).astype(np.float32)
            grid = lc.LayoutGrid(cells)
            for n in range(1, 14):
                got = [(a.row, a.col) for a in lc.decode_top_n(grid, n).anchors]
                assert got == brute_force_top_n(cells, n)

    def test_decode_tie_break_row_major(self):
        cells = np.zeros((32, 32), np.float32)
        cells[5, 20] = cells[5, 3] = cells[9, 1] = 0.7
        got = [(a.row, a.col) for a in lc.decode_top_n(lc.LayoutGrid(cells), 3).anchors]
        assert got == [(5, 3), (5, 20), (9, 1)]

    def test_decode_bad_n(self):
        grid = lc.LayoutGrid(np.zeros((32, 32), np.float32))
        with pytest.raises(ValueError):
            lc.decode_top_n(grid, 0)
        with pytest.raises(ValueError):
            lc.decode_top_n(grid, 14)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 13))
    @settings(max_examples=30, deadline=None)
    def test_decode_property(self, seed, n):
        cells = np.random.default_rng(seed).random((32, 32)).astype(np.float32)
        got = [(a.row, a.col) for a in lc.decode_top_n(lc.LayoutGrid(cells), n).anchors]
        assert got == brute_force_top_n(cells, n)


class TestMarksAndJson:
    def test_palette_has_13_distinct_colors(self):
        assert len(lc.PALETTE) == 13
        assert len(set(lc.PALETTE)) == 13

    def test_guidance_marks_pair_rank_with_anchor(self):
        rs = region_set([(0.2, 0.2), (0.8, 0.8)])
        anchors = lc.decode_top_n(lc.encode_ground_truth(rs), 2)
        marks = lc.guidance_marks(rs, anchors)
        assert marks.pairs == ((0, 0, lc.PALETTE[0]), (1, 1, lc.PALETTE[1]))

    def test_guidance_marks_cardinality(self):
        rs = region_set([(0.2, 0.2), (0.8, 0.8)])
        anchors = lc.decode_top_n(lc.encode_ground_truth(rs), 2)
        with pytest.raises(CardinalityMismatch):
            lc.guidance_marks(region_set([(0.5, 0.5)]), anchors)

    def test_json_round_trip(self):
        rs = region_set([(0.2, 0.2), (0.8, 0.8), (0.4, 0.6)])
        grid = lc.encode_ground_truth(rs)
        anchors = lc.decode_top_n(grid, 3)
        back, back_grid = lc.layout_from_json(lc.layout_to_json(anchors, grid))
        assert back == anchors
        assert np.allclose(back_grid.cells, grid.cells)

    def test_json_without_grid(self):
        anchors = lc.AnchorSet((lc.Anchor(3, 4),))
        back, back_grid = lc.layout_from_json(lc.layout_to_json(anchors))
        assert back == anchors and back_grid is None
