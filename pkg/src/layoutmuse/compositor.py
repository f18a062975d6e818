"""Differentiable sprite compositing onto a canvas at layout anchors.

Sprites (RGBA patches) are bilinearly resampled onto the canvas centered at
their anchor cells.  The soft merge divides the opacity-weighted sprite sum
by total opacity plus a unit background weight, so output stays in [0,1] and
gradients flow to the layout grid (through per-anchor cell values) and to
sprite pixels (through the bilinear weights).  Anchor cell *selection* is
straight-through: positions come from a hard top-n decode, intensities stay
differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, ops
from .errors import CardinalityMismatch, ShapeMismatch
from .imaging import RasterImage
from .layout_codec import GRID, AnchorSet, LayoutGrid, decode_top_n


@dataclass(frozen=True)
class Sprite:
    rgba: np.ndarray  # (h, w, 4) float in [0,1]
    scale: float = 1.0
    rank: int = 0


@dataclass(frozen=True)
class SpriteSet:
    sprites: tuple[Sprite, ...]  # importance-descending
    canvas: tuple[int, int]  # (width, height)
    background: tuple[float, float, float]


@dataclass(frozen=True)
class CompositeImage:
    image: RasterImage
    anchors: AnchorSet


def _placement(sprite_shape, canvas_hw, center_yx, scale):
    """Bilinear gather plan for placing a sprite centered at a canvas point.

    Restricted to the canvas window the scaled sprite can touch; returns the
    window bounds plus per-corner (iy, ix, weight) arrays over window pixels.
    The induced map from sprite pixels to canvas pixels is linear.
    """
    hs, ws = sprite_shape
    hc, wc = canvas_hw
    cy, cx = center_yx
    th, tw = hs * scale, ws * scale
    ry0 = min(max(0, int(np.floor(cy - th / 2.0)) - 1), hc)
    ry1 = max(min(hc, int(np.ceil(cy + th / 2.0)) + 1), ry0)
    rx0 = min(max(0, int(np.floor(cx - tw / 2.0)) - 1), wc)
    rx1 = max(min(wc, int(np.ceil(cx + tw / 2.0)) + 1), rx0)
    ys = np.arange(ry0, ry1)[:, None] + 0.5  # canvas pixel centers
    xs = np.arange(rx0, rx1)[None, :] + 0.5
    sy = (ys - (cy - th / 2.0)) / scale - 0.5
    sx = (xs - (cx - tw / 2.0)) / scale - 0.5
    sy = np.broadcast_to(sy, (ry1 - ry0, rx1 - rx0))
    sx = np.broadcast_to(sx, (ry1 - ry0, rx1 - rx0))
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    wy = sy - y0
    wx = sx - x0
    plan = []
    for dy, dx, w in (
        (0, 0, (1 - wy) * (1 - wx)),
        (0, 1, (1 - wy) * wx),
        (1, 0, wy * (1 - wx)),
        (1, 1, wy * wx),
    ):
        yy, xx = y0 + dy, x0 + dx
        valid = (yy >= 0) & (yy < hs) & (xx >= 0) & (xx < ws)
        plan.append((np.where(valid, yy, 0), np.where(valid, xx, 0), w * valid))
    return (ry0, ry1, rx0, rx1), plan


def place_sprite(sprite: Tensor, canvas_hw, center_yx, scale: float) -> Tensor:
    """Bilinearly place an (h,w,C) sprite tensor onto an (hc,wc,C) canvas."""
    hs, ws, nc = sprite.shape
    hc, wc = canvas_hw
    (ry0, ry1, rx0, rx1), plan = _placement((hs, ws), canvas_hw, center_yx, scale)

    def fwd(a):
        out = np.zeros((hc, wc, nc), dtype=a.dtype)
        window = out[ry0:ry1, rx0:rx1]
        for yy, xx, w in plan:
            window += a[yy, xx] * w[:, :, None]
        return out

    def bwd(g):
        out = np.zeros((hs, ws, nc), dtype=g.dtype)
        gw = g[ry0:ry1, rx0:rx1]
        for yy, xx, w in plan:
            np.add.at(out, (yy.reshape(-1), xx.reshape(-1)), (gw * w[:, :, None]).reshape(-1, nc))
        return out

    return ad.linear_map(sprite, fwd, bwd)


def _check_cardinality(s: SpriteSet, n: int):
    if n != len(s.sprites):
        raise CardinalityMismatch(f"{len(s.sprites)} sprites vs n={n}")


def soft_composite_t(
    s: SpriteSet,
    grid: Tensor,
    n: int,
    sprite_tensors: list[Tensor] | None = None,
) -> tuple[Tensor, AnchorSet]:
    """Differentiable composite: returns ((hc,wc,3) tensor, anchors used).

    `grid` is a (32,32) tensor; per-sprite weights are its values at the
    decoded anchor cells.  Pass `sprite_tensors` to make sprite pixels
    differentiable as well.
    """
    _check_cardinality(s, n)
    if grid.shape != (GRID, GRID):
        raise ShapeMismatch(f"grid tensor {grid.shape}")
    anchors = decode_top_n(LayoutGrid(np.asarray(grid.data, dtype=np.float32)), n)
    wc, hc = s.canvas
    flat_idx = np.array([a.row * GRID + a.col for a in anchors.anchors])
    weights = ops.gather_flat(grid, flat_idx)  # (n,), differentiable

    bg = np.empty((hc, wc, 3), dtype=grid.data.dtype)
    bg[:, :] = s.background
    num = Tensor(bg)
    den = Tensor(np.ones((hc, wc, 1), dtype=grid.data.dtype))
    for i, (sprite, anchor) in enumerate(zip(s.sprites, anchors.anchors)):
        st = sprite_tensors[i] if sprite_tensors is not None else Tensor(sprite.rgba.astype(grid.data.dtype))
        cy = (anchor.row + 0.5) / GRID * hc
        cx = (anchor.col + 0.5) / GRID * wc
        placed = place_sprite(st, (hc, wc), (cy, cx), sprite.scale)
        alpha = ad.slice_axis(placed, 2, 3, 4)
        rgb = ad.slice_axis(placed, 2, 0, 3)
        w_i = ad.reshape(ops.gather_flat(weights, [i]), (1, 1, 1))
        num = ad.add(num, ad.mul(w_i, ad.mul(alpha, rgb)))
        den = ad.add(den, ad.mul(w_i, alpha))
    return ad.div(num, den), anchors


def soft_composite(s: SpriteSet, grid: LayoutGrid, n: int) -> CompositeImage:
    with ad.no_grad():
        out, anchors = soft_composite_t(s, Tensor(grid.cells), n)
    return CompositeImage(RasterImage(np.clip(out.data, 0, 1).astype(np.float32)), anchors)


def hard_composite(s: SpriteSet, anchors: AnchorSet) -> CompositeImage:
    """Painter's algorithm preview: least-important first, alpha-over."""
    _check_cardinality(s, anchors.n)
    wc, hc = s.canvas
    out = np.empty((hc, wc, 3), dtype=np.float64)
    out[:, :] = s.background
    for sprite, anchor in sorted(
        zip(s.sprites, anchors.anchors), key=lambda t: -t[0].rank
    ):
        cy = (anchor.row + 0.5) / GRID * hc
        cx = (anchor.col + 0.5) / GRID * wc
        with ad.no_grad():
            placed = place_sprite(Tensor(sprite.rgba.astype(np.float64)), (hc, wc), (cy, cx), sprite.scale).data
        alpha = placed[:, :, 3:4]
        out = placed[:, :, :3] * alpha + out * (1 - alpha)
    return CompositeImage(RasterImage(np.clip(out, 0, 1).astype(np.float32)), anchors)


def pyramid(image: Tensor, levels: int) -> list[Tensor]:
    """Blur-and-decimate pyramid: [half, quarter, ...], `levels` entries."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h, w = image.shape[2], image.shape[3]
    if h % 2**levels or w % 2**levels:
        raise ShapeMismatch(f"sides {h}x{w} not divisible by 2^{levels}")
    out = []
    cur = image
    for _ in range(levels):
        cur = ops.binomial_downsample(cur)
        out.append(cur)
    return out
