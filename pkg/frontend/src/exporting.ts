// Builds the downloadable layout document for the current selection.
//
// The exported JSON is the selected candidate exactly as the service sent it,
// extended with the on-canvas element placements (drag offsets included).  It
// therefore always validates as a layout document.

import { elementPosition, selectedLayout, StudioState } from "./state.js";
import { ExportDoc, exportSchema, Placement } from "./schema.js";

export function buildExportDoc(state: StudioState): ExportDoc {
  const layout = selectedLayout(state);
  if (!layout || !state.session) {
    throw new Error("nothing selected to export");
  }
  const placements: Placement[] = layout.anchors.map((_, i) => {
    const pos = elementPosition(state, i)!;
    return { anchor_index: i, x: pos.x, y: pos.y, snapped: pos.snapped };
  });
  return exportSchema.parse({
    ...layout,
    session_id: state.session.id,
    canvas: { width: state.view.width, height: state.view.height },
    placements,
  });
}

export function exportFilename(state: StudioState, extension: string): string {
  const layout = selectedLayout(state);
  const session = state.session?.id ?? "session";
  const index = layout?.index ?? 0;
  return `layout_${session}_${index}.${extension}`;
}
