"""Guidance-mark overlays: color boxes on the drawing, enlarged color dots
on the wireframe, box/dot pairs sharing one palette color."""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from .imaging import RasterImage, RegionSet
from .layout_codec import GRID, PALETTE, AnchorSet


def boxes_overlay(image: RasterImage, rs: RegionSet) -> RasterImage:
    """Draw each region's bbox in its palette color (rank order)."""
    im = Image.fromarray((image.data[:, :, :3] * 255).astype(np.uint8))
    draw = ImageDraw.Draw(im)
    stroke = max(1, min(im.size) // 200)
    for r in rs.regions:
        x0, y0, x1, y1 = r.bbox
        draw.rectangle([x0, y0, x1 - 1, y1 - 1], outline=PALETTE[r.rank], width=stroke)
    return RasterImage(np.asarray(im, dtype=np.float32) / 255.0)


def wireframe_overlay(anchors: AnchorSet, size: int = 256) -> RasterImage:
    """Render anchors as colored dots, 4x bigger than their grid cells."""
    im = Image.new("RGB", (size, size), "white")
    draw = ImageDraw.Draw(im)
    cell = size / GRID
    radius = cell * 4 / 2  # dots are 4x the cell size
    for i, a in enumerate(anchors.anchors):
        x = (a.col + 0.5) * cell
        y = (a.row + 0.5) * cell
        draw.ellipse([x - radius, y - radius, x + radius, y + radius], fill=PALETTE[i])
    return RasterImage(np.asarray(im, dtype=np.float32) / 255.0)
