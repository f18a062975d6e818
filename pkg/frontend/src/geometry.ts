// Grid-to-display coordinate transforms and the snap-on-drag rule.
//
// Anchors live on a 32x32 grid; the display view can be any pixel size, so
// cells may be non-square.  Snap distance is measured in cell units so the
// radius means the same thing at every zoom level.

import { GRID, LayoutAnchor } from "./schema.js";

export interface Point {
  x: number;
  y: number;
}

export interface Size {
  width: number;
  height: number;
}

/** Dragged elements snap when within this many grid cells of their anchor. */
export const SNAP_RADIUS_CELLS = 1.5;

export function cellSize(view: Size): Size {
  return { width: view.width / GRID, height: view.height / GRID };
}

/** Display-pixel center of a grid cell. */
export function cellCenter(row: number, col: number, view: Size): Point {
  return {
    x: ((col + 0.5) / GRID) * view.width,
    y: ((row + 0.5) / GRID) * view.height,
  };
}

export function anchorCenter(anchor: LayoutAnchor, view: Size): Point {
  return cellCenter(anchor.row, anchor.col, view);
}

export function clampToView(p: Point, view: Size): Point {
  return {
    x: Math.min(Math.max(p.x, 0), view.width),
    y: Math.min(Math.max(p.y, 0), view.height),
  };
}

/** Distance between two display points measured in grid cells. */
export function cellDistance(a: Point, b: Point, view: Size): number {
  const cell = cellSize(view);
  return Math.hypot((a.x - b.x) / cell.width, (a.y - b.y) / cell.height);
}

export interface SnapResult {
  point: Point;
  snapped: boolean;
}

/**
 * Snap a dragged point to its color-paired anchor when close enough;
 * otherwise keep the (clamped) manual offset.
 */
export function snapToAnchor(p: Point, anchor: LayoutAnchor, view: Size): SnapResult {
  const clamped = clampToView(p, view);
  const center = anchorCenter(anchor, view);
  if (cellDistance(clamped, center, view) <= SNAP_RADIUS_CELLS) {
    return { point: center, snapped: true };
  }
  return { point: clamped, snapped: false };
}
