// Shared builders for valid service payloads.

import { LayoutDoc, RegionInfo, SessionMeta } from "../src/schema.js";

export function makeRegion(rank: number, overrides: Partial<RegionInfo> = {}): RegionInfo {
  return {
    rank,
    bbox: [10 * rank, 5, 10 * rank + 20, 40],
    center: [0.2 + 0.2 * rank, 0.5],
    area: 400 - 50 * rank,
    enabled: true,
    color: [(rank * 60) % 256, 128, 200],
    ...overrides,
  };
}

export function makeSession(nRegions = 3, overrides: Partial<SessionMeta> = {}): SessionMeta {
  return {
    id: "abc123def456",
    regions: Array.from({ length: nRegions }, (_, i) => makeRegion(i)),
    layout_count: 0,
    ...overrides,
  };
}

export function makeLayout(index: number, nAnchors = 3): LayoutDoc {
  return {
    index,
    anchors: Array.from({ length: nAnchors }, (_, i) => ({
      row: 4 + 3 * i + index,
      col: 16,
      scale: 1.0,
      color: [(i * 60) % 256, 128, 200] as [number, number, number],
    })),
    order: "importance-desc",
    marks: Array.from({ length: nAnchors }, (_, i) => ({
      region_rank: i,
      anchor_index: i,
      color: [(i * 60) % 256, 128, 200] as [number, number, number],
    })),
    preview_url: `/sessions/abc123def456/layouts/${index}/preview.png`,
  };
}

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
