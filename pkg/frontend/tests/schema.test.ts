import { describe, expect, it } from "vitest";

import { buildExportDoc } from "../src/exporting.js";
import { exportSchema, layoutSchema, sessionSchema } from "../src/schema.js";
import { dragElement, initialState, withCandidates, withSession } from "../src/state.js";
import { makeLayout, makeSession } from "./fixtures.js";

const VIEW = { width: 640, height: 640 };

describe("payload schemas", () => {
  it("accepts a valid session", () => {
    expect(() => sessionSchema.parse(makeSession())).not.toThrow();
  });

  it("rejects out-of-range anchor cells", () => {
    const doc = makeLayout(0);
    doc.anchors[0] = { ...doc.anchors[0], row: 32 };
    expect(() => layoutSchema.parse(doc)).toThrow();
  });

  it("rejects more than 13 anchors", () => {
    const doc = makeLayout(0, 3);
    doc.anchors = Array.from({ length: 14 }, () => doc.anchors[0]);
    expect(() => layoutSchema.parse(doc)).toThrow();
  });

  it("rejects non-8-bit colors", () => {
    const doc = makeLayout(0);
    doc.anchors[0] = { ...doc.anchors[0], color: [0, 0, 300] as never };
    expect(() => layoutSchema.parse(doc)).toThrow();
  });
});

describe("export documents", () => {
  function exportableState() {
    const s = withSession(initialState(VIEW), makeSession(3));
    return withCandidates(s, [makeLayout(0)]);
  }

  it("validates against the layout schema", () => {
    const doc = buildExportDoc(exportableState());
    expect(() => layoutSchema.parse(doc)).not.toThrow();
    expect(() => exportSchema.parse(doc)).not.toThrow();
  });

  it("passes anchors through byte-identical", () => {
    const state = exportableState();
    const doc = buildExportDoc(state);
    expect(doc.anchors).toEqual(state.candidates[0].anchors);
    expect(doc.index).toBe(0);
  });

  it("snapped placements sit exactly on grid cell centers", () => {
    const doc = buildExportDoc(exportableState());
    for (const p of doc.placements) {
      expect(p.snapped).toBe(true);
      // 640 / 32 = 20 px cells; centers at odd multiples of 10
      expect((p.x - 10) % 20).toBeCloseTo(0);
      expect((p.y - 10) % 20).toBeCloseTo(0);
    }
  });

  it("records manual offsets with snapped=false", () => {
    const dragged = dragElement(exportableState(), 0, { x: 600, y: 600 });
    const doc = buildExportDoc(dragged);
    expect(doc.placements[0]).toMatchObject({ x: 600, y: 600, snapped: false });
    expect(() => exportSchema.parse(doc)).not.toThrow();
  });

  it("refuses to export with nothing selected", () => {
    const s = withSession(initialState(VIEW), makeSession(3));
    expect(() => buildExportDoc(s)).toThrow();
  });
});
