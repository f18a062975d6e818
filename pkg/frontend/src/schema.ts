// Runtime validation of service payloads and exported layout documents.
//
// Every byte of layout data shown in the UI comes from a response that passed
// these schemas; the UI never fabricates anchors or colors.

import { z } from "zod";

export const GRID = 32;
export const MAX_ANCHORS = 13;

const channel = z.number().int().min(0).max(255);

export const colorSchema = z.tuple([channel, channel, channel]);

export const regionSchema = z.object({
  rank: z.number().int().min(0).max(MAX_ANCHORS - 1),
  bbox: z.array(z.number().int()).length(4),
  center: z.tuple([z.number(), z.number()]),
  area: z.number().int().positive(),
  enabled: z.boolean(),
  color: colorSchema,
});

export const sessionSchema = z.object({
  id: z.string().min(1),
  regions: z.array(regionSchema).min(1).max(MAX_ANCHORS),
  layout_count: z.number().int().min(0),
});

export const anchorSchema = z.object({
  row: z.number().int().min(0).max(GRID - 1),
  col: z.number().int().min(0).max(GRID - 1),
  scale: z.number().positive(),
  color: colorSchema,
});

export const markSchema = z.object({
  region_rank: z.number().int().min(0),
  anchor_index: z.number().int().min(0),
  color: colorSchema,
});

export const layoutSchema = z.object({
  index: z.number().int().min(0),
  anchors: z.array(anchorSchema).min(1).max(MAX_ANCHORS),
  order: z.literal("importance-desc"),
  marks: z.array(markSchema),
  preview_url: z.string(),
});

export const layoutBatchSchema = z.array(layoutSchema).min(1);

// Exported documents are layout documents plus on-canvas element placements;
// extra keys keep them valid under `layoutSchema` (non-strict parsing).
export const placementSchema = z.object({
  anchor_index: z.number().int().min(0),
  x: z.number(),
  y: z.number(),
  snapped: z.boolean(),
});

export const exportSchema = layoutSchema.extend({
  session_id: z.string().min(1),
  canvas: z.object({ width: z.number().positive(), height: z.number().positive() }),
  placements: z.array(placementSchema),
});

export type Color = z.infer<typeof colorSchema>;
export type RegionInfo = z.infer<typeof regionSchema>;
export type SessionMeta = z.infer<typeof sessionSchema>;
export type LayoutAnchor = z.infer<typeof anchorSchema>;
export type LayoutDoc = z.infer<typeof layoutSchema>;
export type Placement = z.infer<typeof placementSchema>;
export type ExportDoc = z.infer<typeof exportSchema>;

export function cssColor([r, g, b]: Color): string {
  return `rgb(${r}, ${g}, ${b})`;
}
