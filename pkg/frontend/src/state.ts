// Studio state and its pure transition functions.
//
// Every mutation of layout data goes through the REST API; this module only
// tracks what the server said plus purely visual state (selection, drag
// offsets).  All transitions return new state objects.

import { anchorCenter, Point, Size, snapToAnchor } from "./geometry.js";
import { LayoutAnchor, LayoutDoc, RegionInfo, SessionMeta } from "./schema.js";

export interface DragPosition extends Point {
  snapped: boolean;
}

export interface StudioState {
  session: SessionMeta | null;
  candidates: LayoutDoc[];
  selected: number | null;
  /** Manual element positions keyed by anchor index; absent = at its anchor. */
  drags: Record<number, DragPosition>;
  view: Size;
  generating: boolean;
}

export function initialState(view: Size): StudioState {
  return {
    session: null,
    candidates: [],
    selected: null,
    drags: {},
    view,
    generating: false,
  };
}

export function withSession(state: StudioState, session: SessionMeta): StudioState {
  return { ...initialState(state.view), session };
}

/** Server response to a region toggle replaces the region list. */
export function withRegionUpdate(state: StudioState, regions: RegionInfo[]): StudioState {
  if (!state.session) {
    return state;
  }
  return { ...state, session: { ...state.session, regions } };
}

export function enabledRegions(state: StudioState) {
  return state.session ? state.session.regions.filter((r) => r.enabled) : [];
}

export function enabledCount(state: StudioState): number {
  return enabledRegions(state).length;
}

export function withCandidates(state: StudioState, docs: LayoutDoc[]): StudioState {
  return {
    ...state,
    candidates: docs,
    selected: docs.length > 0 ? 0 : null,
    drags: {},
    generating: false,
  };
}

export function selectCandidate(state: StudioState, index: number): StudioState {
  if (index < 0 || index >= state.candidates.length) {
    return state;
  }
  return { ...state, selected: index, drags: {} };
}

export function selectedLayout(state: StudioState): LayoutDoc | null {
  return state.selected === null ? null : state.candidates[state.selected] ?? null;
}

/**
 * Anchors to draw for the current selection — the exact objects from the
 * service payload, untouched.
 */
export function overlayAnchors(state: StudioState): LayoutAnchor[] {
  const layout = selectedLayout(state);
  return layout ? layout.anchors : [];
}

/** Apply a drag: snap to the element's own anchor when close enough. */
export function dragElement(state: StudioState, anchorIndex: number, p: Point): StudioState {
  const layout = selectedLayout(state);
  if (!layout || anchorIndex < 0 || anchorIndex >= layout.anchors.length) {
    return state;
  }
  const { point, snapped } = snapToAnchor(p, layout.anchors[anchorIndex], state.view);
  return { ...state, drags: { ...state.drags, [anchorIndex]: { ...point, snapped } } };
}

/** Where an element currently sits: its drag position, else its anchor. */
export function elementPosition(state: StudioState, anchorIndex: number): DragPosition | null {
  const layout = selectedLayout(state);
  if (!layout || anchorIndex >= layout.anchors.length) {
    return null;
  }
  const dragged = state.drags[anchorIndex];
  if (dragged) {
    return dragged;
  }
  const center = anchorCenter(layout.anchors[anchorIndex], state.view);
  return { ...center, snapped: true };
}

export function setGenerating(state: StudioState, generating: boolean): StudioState {
  return { ...state, generating };
}
