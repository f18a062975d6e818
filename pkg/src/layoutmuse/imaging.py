"""Drawing/saliency pair loading, watershed segmentation, and patch extraction.

The dataset unit is a drawing paired with a same-size grayscale eye-fixation
map.  Fixation regions are segmented with marker-driven watershed flooding;
each region carries its alpha-masked crop of the drawing plus a normalized
center and an importance rank (descending area).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage
from skimage.segmentation import watershed

from .errors import DecodeError, DimensionMismatch, NoRegions

MAX_REGIONS = 13


@dataclass(frozen=True)
class RasterImage:
    """Row-major float image, intensities in [0,1], 3 (RGB) or 4 (RGBA) channels."""

    data: np.ndarray  # (H, W, C) float32

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[2] not in (3, 4):
            raise ValueError(f"expected (H,W,3|4) array, got {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("empty raster")
        if d.min() < -1e-6 or d.max() > 1 + 1e-6:
            raise ValueError("intensities must lie in [0,1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class SaliencyMap:
    """Grayscale attention heatmap, values in [0,1], same size as its drawing."""

    data: np.ndarray  # (H, W) float32

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError("saliency map must be 2-D")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SaliencyPair:
    image: RasterImage
    saliency: SaliencyMap
    id: str = ""

    def __post_init__(self):
        if (self.image.height, self.image.width) != (
            self.saliency.height,
            self.saliency.width,
        ):
            raise DimensionMismatch(
                f"image {self.image.width}x{self.image.height} vs saliency "
                f"{self.saliency.width}x{self.saliency.height}"
            )


@dataclass(frozen=True)
class Region:
    """One segmented fixation region with its alpha-carrying crop."""

    id: int
    mask: np.ndarray  # (H, W) bool over the full canvas
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 (exclusive)
    center: tuple[float, float]  # (cx, cy) in [0,1]^2
    area: int
    rank: int
    patch: RasterImage | None = None  # RGBA crop, filled by extract_patches


@dataclass(frozen=True)
class RegionSet:
    regions: tuple[Region, ...]

    @property
    def n(self) -> int:
        return len(self.regions)


@dataclass(frozen=True)
class SegmentConfig:
    """Watershed knobs.

    blur_sigma_frac: Gaussian sigma as a fraction of min(width, height).
    threshold: absolute marker/flood threshold; None means 0.5 * max(saliency).
    max_regions: keep at most this many regions (largest areas win).
    """

    blur_sigma_frac: float = 0.02
    threshold: float | None = None
    max_regions: int = MAX_REGIONS


def _to_raster(img: Image.Image) -> RasterImage:
    if img.mode not in ("RGB", "RGBA"):
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return RasterImage(arr)


def load_image(path) -> RasterImage:
    try:
        with Image.open(path) as img:
            return _to_raster(img)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc


def load_saliency(path) -> SaliencyMap:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float32)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode saliency {path}: {exc}") from exc
    # Normalize by the observed max so dim 8-bit maps still segment.
    peak = arr.max()
    if peak > 0:
        arr = arr / peak
    return SaliencyMap(arr)


def load_pair(image_path, saliency_path, pair_id: str = "") -> SaliencyPair:
    image = load_image(image_path)
    saliency = load_saliency(saliency_path)
    return SaliencyPair(image, saliency, id=pair_id)


def save_image(raster: RasterImage, path) -> None:
    arr = np.clip(raster.data * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def _region_from_mask(region_id: int, mask: np.ndarray) -> Region:
    ys, xs = np.nonzero(mask)
    h, w = mask.shape
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    cx = (xs.mean() + 0.5) / w
    cy = (ys.mean() + 0.5) / h
    return Region(
        id=region_id,
        mask=mask,
        bbox=(x0, y0, x1, y1),
        center=(float(cx), float(cy)),
        area=int(mask.sum()),
        rank=-1,
    )


def _rank_regions(regions: list[Region], cap: int) -> tuple[Region, ...]:
    # Descending area; ties broken by smaller (cy, cx) center for determinism.
    regions.sort(key=lambda r: (-r.area, r.center[1], r.center[0]))
    ranked = [replace(r, rank=i) for i, r in enumerate(regions[:cap])]
    return tuple(ranked)


def watershed_segment(s: SaliencyMap, cfg: SegmentConfig = SegmentConfig()) -> RegionSet:
    """Segment the fixation map into 1..13 ranked regions.

    Markers are local maxima of the Gaussian-blurred map above the threshold;
    flooding assigns every above-threshold pixel reachable from a marker to
    exactly one region.
    """
    data = s.data.astype(np.float64)
    thr = cfg.threshold if cfg.threshold is not None else 0.5 * float(data.max())
    mask = data >= thr
    if thr <= 0 or not mask.any():
        raise NoRegions("no saliency pixel reaches the threshold")

    sigma = cfg.blur_sigma_frac * min(s.width, s.height)
    blurred = ndimage.gaussian_filter(data, sigma=sigma) if sigma > 0 else data

    # Markers are connected local-max plateaus: pixels equal to the max of
    # their neighborhood, labeled by connectivity so a flat plateau yields a
    # single marker instead of one per pixel.
    size = 2 * max(1, int(round(sigma))) + 1
    local_max = mask & (blurred >= ndimage.maximum_filter(blurred, size=size))
    markers, n_markers = ndimage.label(local_max)
    if n_markers == 0:
        markers, _ = ndimage.label(mask)

    labels = watershed(-blurred, markers=markers, mask=mask)
    regions = []
    for lab in np.unique(labels):
        if lab == 0:
            continue
        m = labels == lab
        if m.any():
            regions.append(_region_from_mask(int(lab), m))
    if not regions:
        raise NoRegions("watershed produced no regions")
    return RegionSet(_rank_regions(regions, cfg.max_regions))


def extract_patches(pair: SaliencyPair, rs: RegionSet) -> RegionSet:
    """Fill each region's RGBA patch: bbox crop with alpha = mask."""
    rgb = pair.image.data[:, :, :3]
    out = []
    for r in rs.regions:
        x0, y0, x1, y1 = r.bbox
        crop = rgb[y0:y1, x0:x1]
        alpha = r.mask[y0:y1, x0:x1].astype(np.float32)
        patch = RasterImage(np.dstack([crop, alpha]))
        out.append(replace(r, patch=patch))
    return RegionSet(tuple(out))


def background_color(pair: SaliencyPair, rs: RegionSet) -> tuple[float, float, float]:
    """Mean RGB over pixels outside every region mask (global mean if none)."""
    rgb = pair.image.data[:, :, :3]
    outside = np.ones(rgb.shape[:2], dtype=bool)
    for r in rs.regions:
        outside &= ~r.mask
    if not outside.any():
        mean = rgb.reshape(-1, 3).mean(axis=0)
    else:
        mean = rgb[outside].mean(axis=0)
    return (float(mean[0]), float(mean[1]), float(mean[2]))
