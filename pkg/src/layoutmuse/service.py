"""Interactive layout service: sessions, region toggling, batch generation.

State lives on disk (one directory per session) so restarts preserve
persisted sessions.  Generation uses an immutable encoder/generator
snapshot shared read-only; each session is guarded by a single-writer lock.
"""

from __future__ import annotations

import io
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, HTTPException, UploadFile
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from . import autodiff as ad
from . import features, imaging, layout_codec, render
from .autodiff import Tensor, checkpoint as ckpt_io
from .compositor import Sprite, SpriteSet, hard_composite
from .errors import (
    DimensionMismatch,
    LayoutMuseError,
    NoEnabledRegions,
    NoRegions,
)
from .layout_codec import PALETTE, Anchor, AnchorSet
from .networks import ArchConfig, Encoder, Generator

PREVIEW_MAX_SIDE = 512


@dataclass(frozen=True)
class ServiceConfig:
    listen: str = "127.0.0.1:8000"
    data_dir: str = "layoutmuse_data"
    checkpoint: str | None = None
    max_sessions: int = 256
    layouts_per_request: int = 10

    def __post_init__(self):
        if self.layouts_per_request < 1:
            raise ValueError("layouts_per_request must be >= 1")

    def resolved_data_dir(self) -> Path:
        return Path(os.environ.get("LAYOUTMUSE_DATA_DIR", self.data_dir))


class SessionNotFound(LayoutMuseError):
    pass


class NoCheckpoint(LayoutMuseError):
    pass


class SessionLimit(LayoutMuseError):
    pass


class GeneratorBundle:
    """Immutable encoder+generator snapshot loaded from a checkpoint."""

    def __init__(self, enc: Encoder, gen: Generator, arch: ArchConfig):
        self.enc, self.gen, self.arch = enc, gen, arch

    @classmethod
    def load(cls, path) -> "GeneratorBundle":
        state, sidecar = ckpt_io.load(path)
        arch = ArchConfig.from_dict(sidecar.get("arch", {}))
        enc, gen = Encoder(arch), Generator(arch)
        enc.load_state(state)
        gen.load_state(state)
        return cls(enc, gen, arch)

    def generate_grid(self, f: np.ndarray, n: int, z: np.ndarray) -> layout_codec.LayoutGrid:
        with ad.no_grad():
            fp = self.enc.forward(Tensor(f[None, :].astype(np.float32)))
            out = self.gen.forward(fp, Tensor(z[None, :].astype(np.float32)), [n], training=False)
        return layout_codec.LayoutGrid(out.data[0, 0].astype(np.float32))


class LayoutService:
    def __init__(self, cfg: ServiceConfig):
        self.cfg = cfg
        self.data_dir = cfg.resolved_data_dir()
        self.sessions_dir = self.data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.bundle: GeneratorBundle | None = None
        if cfg.checkpoint and Path(cfg.checkpoint).exists():
            self.bundle = GeneratorBundle.load(cfg.checkpoint)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # ---- session store --------------------------------------------------

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def _dir(self, session_id: str) -> Path:
        d = self.sessions_dir / session_id
        if not d.exists():
            raise SessionNotFound(session_id)
        return d

    def _meta(self, session_id: str) -> dict:
        return json.loads((self._dir(session_id) / "meta.json").read_text())

    def _write_meta(self, session_id: str, meta: dict) -> None:
        (self._dir(session_id) / "meta.json").write_text(json.dumps(meta, indent=2))

    def region_list(self, meta: dict) -> list[dict]:
        return meta["regions"]

    def create_session(self, image_bytes: bytes, saliency_bytes: bytes) -> dict:
        if sum(1 for _ in self.sessions_dir.iterdir()) >= self.cfg.max_sessions:
            raise SessionLimit("session limit reached")
        pair = imaging.SaliencyPair(
            imaging.RasterImage(_decode_rgb(image_bytes)),
            imaging.SaliencyMap(_decode_gray(saliency_bytes)),
        )
        regions = imaging.watershed_segment(pair.saliency)  # raises NoRegions
        regions = imaging.extract_patches(pair, regions)
        session_id = uuid.uuid4().hex[:12]
        d = self.sessions_dir / session_id
        d.mkdir(parents=True)
        imaging.save_image(pair.image, d / "image.png")
        Image.fromarray((pair.saliency.data * 255).astype(np.uint8)).save(d / "saliency.png")
        descriptors = np.stack([features.descriptor(r) for r in regions.regions])
        np.savez_compressed(
            d / "regions.npz",
            masks=np.stack([r.mask for r in regions.regions]),
            descriptors=descriptors,
        )
        meta = {
            "id": session_id,
            "regions": [
                {
                    "rank": r.rank,
                    "bbox": list(r.bbox),
                    "center": list(r.center),
                    "area": r.area,
                    "enabled": True,
                    "color": list(PALETTE[r.rank]),
                }
                for r in regions.regions
            ],
            "layout_count": 0,
        }
        (d / "meta.json").write_text(json.dumps(meta, indent=2))
        return meta

    def get_session(self, session_id: str) -> dict:
        return self._meta(session_id)

    def set_region_enabled(self, session_id: str, rank: int, enabled: bool) -> dict:
        with self._lock(session_id):
            meta = self._meta(session_id)
            for region in meta["regions"]:
                if region["rank"] == rank:
                    region["enabled"] = bool(enabled)
                    break
            else:
                raise SessionNotFound(f"region rank {rank}")
            self._write_meta(session_id, meta)
            return meta

    # ---- generation -----------------------------------------------------

    def _load_pair(self, session_id: str) -> imaging.SaliencyPair:
        d = self._dir(session_id)
        return imaging.load_pair(d / "image.png", d / "saliency.png", session_id)

    def generate_layouts(self, session_id: str, k: int | None = None, seed: int | None = None) -> list[dict]:
        """Draw k independent noise vectors and persist k layout candidates."""
        if self.bundle is None:
            raise NoCheckpoint("no checkpoint loaded")
        k = k or self.cfg.layouts_per_request
        with self._lock(session_id):
            meta = self._meta(session_id)
            d = self._dir(session_id)
            stash = np.load(d / "regions.npz")
            enabled = [r for r in meta["regions"] if r["enabled"]]
            if not enabled:
                raise NoEnabledRegions("all regions disabled")
            n = len(enabled)
            descriptors = stash["descriptors"]
            f = descriptors[[r["rank"] for r in enabled]].sum(axis=0)

            pair = self._load_pair(session_id)
            masks = stash["masks"]
            sprites, canvas = _session_sprites(pair, masks, enabled)

            rng = np.random.default_rng(seed)
            layouts_dir = d / "layouts"
            layouts_dir.mkdir(exist_ok=True)
            results = []
            for j in range(k):
                z = rng.standard_normal(self.bundle.arch.noise_dim)
                grid = self.bundle.generate_grid(f, n, z)
                anchors = layout_codec.decode_top_n(grid, n)
                marks = [
                    {"region_rank": r["rank"], "anchor_index": i, "color": list(PALETTE[i])}
                    for i, r in enumerate(enabled)
                ]
                preview = hard_composite(SpriteSet(sprites, canvas, _background(pair, masks)), anchors)
                imaging.save_image(preview.image, layouts_dir / f"{j}.png")
                doc = {
                    "index": j,
                    "anchors": [
                        {"row": a.row, "col": a.col, "scale": a.scale, "color": list(PALETTE[i])}
                        for i, a in enumerate(anchors.anchors)
                    ],
                    "order": "importance-desc",
                    "marks": marks,
                    "preview_url": f"/sessions/{session_id}/layouts/{j}/preview.png",
                }
                (layouts_dir / f"{j}.json").write_text(json.dumps(doc))
                results.append(doc)
            meta["layout_count"] = k
            self._write_meta(session_id, meta)
            return results

    def layout(self, session_id: str, index: int) -> dict:
        path = self._dir(session_id) / "layouts" / f"{index}.json"
        if not path.exists():
            raise SessionNotFound(f"layout {index}")
        return json.loads(path.read_text())

    def preview_path(self, session_id: str, index: int) -> Path:
        path = self._dir(session_id) / "layouts" / f"{index}.png"
        if not path.exists():
            raise SessionNotFound(f"preview {index}")
        return path


def _decode_rgb(raw: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(raw)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def _decode_gray(raw: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(raw)) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32)
    peak = arr.max()
    return arr / peak if peak > 0 else arr


def _background(pair, masks) -> tuple[float, float, float]:
    outside = ~np.any(masks, axis=0)
    rgb = pair.image.data[:, :, :3]
    vals = rgb[outside] if outside.any() else rgb.reshape(-1, 3)
    mean = vals.mean(axis=0)
    return (float(mean[0]), float(mean[1]), float(mean[2]))


def _session_sprites(pair, masks, enabled) -> tuple[tuple[Sprite, ...], tuple[int, int]]:
    """Sprites for the enabled regions, rescaled onto the preview canvas."""
    h, w = pair.image.height, pair.image.width
    t = min(1.0, PREVIEW_MAX_SIDE / max(w, h))
    canvas = (max(1, round(w * t)), max(1, round(h * t)))
    sprites = []
    for i, region in enumerate(enabled):
        x0, y0, x1, y1 = region["bbox"]
        mask = masks[region["rank"]][y0:y1, x0:x1]
        crop = pair.image.data[y0:y1, x0:x1, :3]
        rgba = np.dstack([crop, mask.astype(np.float32)])
        sw = max(1, round((x1 - x0) * t))
        sh = max(1, round((y1 - y0) * t))
        im = Image.fromarray((np.clip(rgba, 0, 1) * 255).astype(np.uint8), "RGBA").resize(
            (sw, sh), Image.BILINEAR
        )
        sprites.append(Sprite(np.asarray(im, np.float32) / 255.0, 1.0, i))
    return tuple(sprites), canvas


# ---------------------------------------------------------------------------
# FastAPI app
# ---------------------------------------------------------------------------


class RegionPatch(BaseModel):
    enabled: bool


class LayoutRequest(BaseModel):
    count: int | None = None
    seed: int | None = None


def create_app(cfg: ServiceConfig):
    service = LayoutService(cfg)
    app = FastAPI(title="layoutmuse")
    app.state.service = service

    def _translate(exc: Exception):
        if isinstance(exc, SessionNotFound):
            return HTTPException(404, str(exc))
        if isinstance(exc, NoCheckpoint):
            return HTTPException(409, "no checkpoint loaded")
        if isinstance(exc, (NoRegions, NoEnabledRegions, DimensionMismatch)):
            return HTTPException(422, str(exc))
        if isinstance(exc, SessionLimit):
            return HTTPException(429, str(exc))
        raise exc

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    async def create_session(image: UploadFile = File(...), saliency: UploadFile = File(...)):
        try:
            return service.create_session(await image.read(), await saliency.read())
        except LayoutMuseError as exc:
            raise _translate(exc)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            return service.get_session(session_id)
        except LayoutMuseError as exc:
            raise _translate(exc)

    @app.patch("/sessions/{session_id}/regions/{rank}")
    def patch_region(session_id: str, rank: int, body: RegionPatch):
        try:
            return service.set_region_enabled(session_id, rank, body.enabled)["regions"]
        except LayoutMuseError as exc:
            raise _translate(exc)

    @app.post("/sessions/{session_id}/layouts")
    def post_layouts(session_id: str, body: LayoutRequest | None = None):
        body = body or LayoutRequest()
        try:
            return service.generate_layouts(session_id, body.count, body.seed)
        except LayoutMuseError as exc:
            raise _translate(exc)

    @app.get("/sessions/{session_id}/layouts/{index}")
    def get_layout(session_id: str, index: int):
        try:
            return service.layout(session_id, index)
        except LayoutMuseError as exc:
            raise _translate(exc)

    @app.get("/sessions/{session_id}/layouts/{index}/preview.png")
    def get_preview(session_id: str, index: int):
        try:
            return FileResponse(service.preview_path(session_id, index), media_type="image/png")
        except LayoutMuseError as exc:
            raise _translate(exc)

    static_dir = Path(__file__).parent / "static"
    if static_dir.exists():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="studio")
    return app
