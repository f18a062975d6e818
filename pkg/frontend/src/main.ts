// DOM wiring for the studio: upload form, region toggle list, candidate
// strip, draggable overlay, and export buttons.  All layout data flows from
// the REST client into StudioState; rendering is a pure function of state.

import { errorMessage, StudioClient } from "./api.js";
import { buildExportDoc, exportFilename } from "./exporting.js";
import { Size } from "./geometry.js";
import { cssColor } from "./schema.js";
import {
  dragElement,
  enabledCount,
  initialState,
  selectCandidate,
  setGenerating,
  StudioState,
  withCandidates,
  withRegionUpdate,
  withSession,
} from "./state.js";
import { drawLayoutOverlay, drawRegionBoxes, hitTestElement } from "./overlay.js";

const VIEW: Size = { width: 512, height: 384 };

const client = new StudioClient();
let state: StudioState = initialState(VIEW);
let drawingImage: HTMLImageElement | null = null;
let previewImage: HTMLImageElement | null = null;
let inflight: AbortController | null = null;
let dragging: number | null = null;

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el;
}

function toast(message: string): void {
  const el = $("toast");
  el.textContent = message;
  el.classList.add("visible");
  setTimeout(() => el.classList.remove("visible"), 4000);
}

function setState(next: StudioState): void {
  state = next;
  render();
}

// ---- rendering ------------------------------------------------------------

function render(): void {
  renderRegions();
  renderCandidates();
  renderCanvas();
  ($("generate") as HTMLButtonElement).disabled = state.session === null || state.generating;
  ($("export-json") as HTMLButtonElement).disabled = state.selected === null;
  ($("export-png") as HTMLButtonElement).disabled = state.selected === null;
  $("status").textContent = state.session
    ? `session ${state.session.id} — ${enabledCount(state)} of ${state.session.regions.length} elements enabled`
    : "upload a drawing and its saliency map to begin";
}

function renderRegions(): void {
  const list = $("regions");
  list.replaceChildren();
  if (!state.session) {
    return;
  }
  for (const region of state.session.regions) {
    const item = document.createElement("li");
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = region.enabled;
    box.addEventListener("change", () => void toggleRegion(region.rank, box.checked));
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.backgroundColor = cssColor(region.color);
    label.append(box, swatch, ` element ${region.rank} (area ${region.area})`);
    item.appendChild(label);
    list.appendChild(item);
  }
}

function renderCandidates(): void {
  const strip = $("candidates");
  strip.replaceChildren();
  state.candidates.forEach((doc, i) => {
    const thumb = document.createElement("img");
    thumb.src = doc.preview_url;
    thumb.alt = `candidate ${i}`;
    thumb.className = i === state.selected ? "thumb selected" : "thumb";
    thumb.addEventListener("click", () => {
      setState(selectCandidate(state, i));
      loadPreview(doc.preview_url);
    });
    strip.appendChild(thumb);
  });
}

function renderCanvas(): void {
  const canvas = $("stage") as HTMLCanvasElement;
  canvas.width = VIEW.width;
  canvas.height = VIEW.height;
  const ctx = canvas.getContext("2d")!;
  ctx.fillStyle = "#1c1f26";
  ctx.fillRect(0, 0, VIEW.width, VIEW.height);
  const backdrop = previewImage ?? drawingImage;
  if (backdrop) {
    ctx.drawImage(backdrop, 0, 0, VIEW.width, VIEW.height);
  }
  if (state.session && drawingImage && !previewImage) {
    drawRegionBoxes(
      ctx,
      state.session.regions,
      { width: drawingImage.naturalWidth, height: drawingImage.naturalHeight },
      VIEW
    );
  }
  drawLayoutOverlay(ctx, state);
}

function loadPreview(url: string): void {
  const img = new Image();
  img.onload = () => {
    previewImage = img;
    render();
  };
  img.src = url;
}

// ---- actions --------------------------------------------------------------

async function createSession(image: File, saliency: File): Promise<void> {
  try {
    const meta = await client.createSession(image, saliency);
    previewImage = null;
    drawingImage = await fileToImage(image);
    setState(withSession(state, meta));
  } catch (err) {
    toast(errorMessage(err));
  }
}

async function toggleRegion(rank: number, enabled: boolean): Promise<void> {
  if (!state.session) {
    return;
  }
  try {
    const regions = await client.setRegionEnabled(state.session.id, rank, enabled);
    setState(withRegionUpdate(state, regions));
  } catch (err) {
    toast(errorMessage(err));
    render(); // restore checkbox to server truth
  }
}

async function generate(): Promise<void> {
  if (!state.session || state.generating) {
    return;
  }
  inflight?.abort();
  inflight = new AbortController();
  setState(setGenerating(state, true));
  try {
    const docs = await client.requestLayouts(state.session.id, {
      signal: inflight.signal,
    });
    setState(withCandidates(state, docs));
    if (docs.length > 0) {
      loadPreview(docs[0].preview_url);
    }
  } catch (err) {
    toast(errorMessage(err));
    setState(setGenerating(state, false));
  }
}

function exportJson(): void {
  try {
    const doc = buildExportDoc(state);
    download(
      new Blob([JSON.stringify(doc, null, 2)], { type: "application/json" }),
      exportFilename(state, "json")
    );
  } catch (err) {
    toast(errorMessage(err));
  }
}

function exportPng(): void {
  const canvas = $("stage") as HTMLCanvasElement;
  canvas.toBlob((blob) => {
    if (blob) {
      download(blob, exportFilename(state, "png"));
    }
  }, "image/png");
}

function download(blob: Blob, filename: string): void {
  const url = URL.createObjectURL(blob);
  const a = document.createElement("a");
  a.href = url;
  a.download = filename;
  a.click();
  URL.revokeObjectURL(url);
}

function fileToImage(file: File): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = reject;
    img.src = URL.createObjectURL(file);
  });
}

// ---- event wiring ---------------------------------------------------------

function pointerPos(canvas: HTMLCanvasElement, ev: PointerEvent) {
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * VIEW.width,
    y: ((ev.clientY - rect.top) / rect.height) * VIEW.height,
  };
}

export function start(): void {
  const form = $("upload-form") as HTMLFormElement;
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const image = ($("image-input") as HTMLInputElement).files?.[0];
    const saliency = ($("saliency-input") as HTMLInputElement).files?.[0];
    if (image && saliency) {
      void createSession(image, saliency);
    } else {
      toast("Choose both a drawing and a saliency map.");
    }
  });

  $("generate").addEventListener("click", () => void generate());
  $("export-json").addEventListener("click", exportJson);
  $("export-png").addEventListener("click", exportPng);

  const canvas = $("stage") as HTMLCanvasElement;
  canvas.addEventListener("pointerdown", (ev) => {
    const p = pointerPos(canvas, ev);
    dragging = hitTestElement(state, p.x, p.y);
    if (dragging !== null) {
      canvas.setPointerCapture(ev.pointerId);
    }
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (dragging !== null) {
      setState(dragElement(state, dragging, pointerPos(canvas, ev)));
    }
  });
  canvas.addEventListener("pointerup", () => {
    dragging = null;
  });

  render();
}

start();
