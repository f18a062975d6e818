// Canvas rendering: region color boxes over the drawing, and the layout
// overlay with enlarged anchor dots color-paired to draggable elements.

import { anchorCenter, cellSize, Size } from "./geometry.js";
import { cssColor, LayoutAnchor, RegionInfo } from "./schema.js";
import { elementPosition, overlayAnchors, StudioState } from "./state.js";

/** Anchor dots are drawn 4x the base marker radius so pairings read easily. */
export const DOT_ENLARGEMENT = 4;

function baseDotRadius(view: Size): number {
  const cell = cellSize(view);
  return Math.min(cell.width, cell.height) / 8;
}

export function drawRegionBoxes(
  ctx: CanvasRenderingContext2D,
  regions: RegionInfo[],
  imageSize: Size,
  view: Size
): void {
  const sx = view.width / imageSize.width;
  const sy = view.height / imageSize.height;
  for (const region of regions) {
    const [x0, y0, x1, y1] = region.bbox;
    ctx.strokeStyle = cssColor(region.color);
    ctx.lineWidth = region.enabled ? 3 : 1;
    ctx.globalAlpha = region.enabled ? 1 : 0.35;
    ctx.strokeRect(x0 * sx, y0 * sy, (x1 - x0) * sx, (y1 - y0) * sy);
  }
  ctx.globalAlpha = 1;
}

function drawDot(
  ctx: CanvasRenderingContext2D,
  x: number,
  y: number,
  radius: number,
  color: string,
  filled: boolean
): void {
  ctx.beginPath();
  ctx.arc(x, y, radius, 0, Math.PI * 2);
  if (filled) {
    ctx.fillStyle = color;
    ctx.fill();
    ctx.strokeStyle = "#ffffff";
    ctx.lineWidth = 1.5;
    ctx.stroke();
  } else {
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.stroke();
  }
}

/**
 * Draw the selected candidate's anchors (enlarged hollow dots) and the
 * element markers at their current (possibly dragged) positions.
 */
export function drawLayoutOverlay(ctx: CanvasRenderingContext2D, state: StudioState): void {
  const anchors: LayoutAnchor[] = overlayAnchors(state);
  const radius = baseDotRadius(state.view) * DOT_ENLARGEMENT;
  anchors.forEach((anchor, i) => {
    const center = anchorCenter(anchor, state.view);
    const color = cssColor(anchor.color);
    drawDot(ctx, center.x, center.y, radius, color, false);
    const pos = elementPosition(state, i);
    if (pos) {
      drawDot(ctx, pos.x, pos.y, radius * 0.6, color, true);
      if (!pos.snapped) {
        ctx.setLineDash([4, 4]);
        ctx.strokeStyle = color;
        ctx.lineWidth = 1;
        ctx.beginPath();
        ctx.moveTo(center.x, center.y);
        ctx.lineTo(pos.x, pos.y);
        ctx.stroke();
        ctx.setLineDash([]);
      }
    }
  });
}

/** Index of the element marker under a pointer position, or null. */
export function hitTestElement(state: StudioState, x: number, y: number): number | null {
  const anchors = overlayAnchors(state);
  const radius = baseDotRadius(state.view) * DOT_ENLARGEMENT;
  for (let i = anchors.length - 1; i >= 0; i--) {
    const pos = elementPosition(state, i);
    if (pos && Math.hypot(pos.x - x, pos.y - y) <= radius) {
      return i;
    }
  }
  return null;
}
