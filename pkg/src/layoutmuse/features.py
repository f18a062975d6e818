"""Deterministic 512-d patch descriptors and per-drawing aggregation.

The descriptor is a fixed, training-free stand-in for CNN appearance
features: color block means, gradient-orientation histograms, hue and
luminance histograms, plus normalized area/aspect, zero-padded to width 512
and L2-normalized.  Externally computed features (e.g. from a real CNN) can
be imported through the LMF1 binary format and are interchangeable
downstream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBag, FormatError, LengthError
from .imaging import RasterImage, Region

FEATURE_DIM = 512
_MAGIC = b"LMF1"


@dataclass(frozen=True)
class FeatureBag:
    drawing_id: str
    per_region: tuple[np.ndarray, ...]  # each (512,) float32, aligned to ranks

    def __post_init__(self):
        for v in self.per_region:
            if v.shape != (FEATURE_DIM,):
                raise LengthError(f"feature vector has shape {v.shape}")

    @property
    def n(self) -> int:
        return len(self.per_region)


def _resample(patch: np.ndarray, size: int = 16) -> np.ndarray:
    """Area-ish resample of an (H,W,C) patch to (size,size,C) via index mapping."""
    h, w = patch.shape[:2]
    ys = np.minimum((np.arange(size) + 0.5) * h / size, h - 1).astype(int)
    xs = np.minimum((np.arange(size) + 0.5) * w / size, w - 1).astype(int)
    return patch[np.ix_(ys, xs)]


def descriptor(patch: Region) -> np.ndarray:
    """Deterministic 512-d appearance descriptor of a region's RGBA patch."""
    if patch.patch is None:
        raise ValueError("region has no extracted patch")
    rgba = patch.patch.data
    alpha = rgba[:, :, 3] if rgba.shape[2] == 4 else np.ones(rgba.shape[:2], np.float32)
    rgb = rgba[:, :, :3] * alpha[:, :, None]  # matte against black
    small = _resample(np.dstack([rgb, alpha[:, :, None]]))
    srgb, salpha = small[:, :, :3], small[:, :, 3]

    parts = []

    # Mean RGB per 4x4 block of the 16x16 resample: 16 blocks x 3 channels.
    blocks = srgb.reshape(4, 4, 4, 4, 3).mean(axis=(1, 3))
    parts.append(blocks.reshape(-1))

    # 8-bin gradient-orientation histogram per 4x4 block (magnitude-weighted).
    lum = srgb @ np.array([0.299, 0.587, 0.114], dtype=np.float32)
    gy, gx = np.gradient(lum)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)  # unsigned orientation
    bins = np.minimum((ang / np.pi * 8).astype(int), 7)
    ghist = np.zeros((4, 4, 8), dtype=np.float64)
    by = np.arange(16) // 4
    for i in range(16):
        for j in range(16):
            ghist[by[i], by[j], bins[i, j]] += mag[i, j]
    parts.append(ghist.reshape(-1))

    # 64-bin hue histogram over sufficiently opaque pixels, alpha-weighted.
    r, g, b = srgb[:, :, 0], srgb[:, :, 1], srgb[:, :, 2]
    mx, mn = srgb.max(axis=2), srgb.min(axis=2)
    delta = mx - mn
    hue = np.zeros_like(mx)
    nz = delta > 1e-12
    rr = np.where(nz & (mx == r), np.mod((g - b) / np.where(nz, delta, 1), 6), 0)
    gg = np.where(nz & (mx == g) & (mx != r), (b - r) / np.where(nz, delta, 1) + 2, 0)
    bb = np.where(nz & (mx == b) & (mx != r) & (mx != g), (r - g) / np.where(nz, delta, 1) + 4, 0)
    hue = (rr + gg + bb) / 6.0
    hhist, _ = np.histogram(hue, bins=64, range=(0, 1), weights=salpha * (delta > 1e-12))
    parts.append(hhist)

    # 64-bin luminance histogram, alpha-weighted.
    lhist, _ = np.histogram(lum, bins=64, range=(0, 1), weights=salpha)
    parts.append(lhist)

    # Normalized area + aspect ratio.
    x0, y0, x1, y1 = patch.bbox
    full = patch.mask.shape[0] * patch.mask.shape[1]
    parts.append(np.array([patch.area / full, (x1 - x0) / (y1 - y0)]))

    vec = np.concatenate(parts).astype(np.float64)
    out = np.zeros(FEATURE_DIM, dtype=np.float64)
    out[: vec.size] = vec
    norm = np.linalg.norm(out)
    if norm > 0:
        out /= norm
    return out.astype(np.float32)


def bag_from_regions(drawing_id: str, regions) -> FeatureBag:
    return FeatureBag(drawing_id, tuple(descriptor(r) for r in regions))


def sum_features(bag: FeatureBag) -> np.ndarray:
    if bag.n == 0:
        raise EmptyBag(f"bag {bag.drawing_id!r} has no regions")
    return np.sum(np.stack(bag.per_region), axis=0).astype(np.float32)


def export_features(bags: list[FeatureBag], path) -> None:
    """Write bags in the LMF1 little-endian binary format."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(bags)))
        for bag in bags:
            ident = bag.drawing_id.encode("utf-8")
            f.write(struct.pack("<I", len(ident)))
            f.write(ident)
            f.write(struct.pack("<I", bag.n))
            for vec in bag.per_region:
                f.write(vec.astype("<f4").tobytes())


def import_features(path) -> list[FeatureBag]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC:
        raise FormatError("missing LMF1 magic")
    off = 4

    def take(n):
        nonlocal off
        if off + n > len(raw):
            raise FormatError("truncated feature file")
        chunk = raw[off : off + n]
        off += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    bags = []
    for _ in range(count):
        (idlen,) = struct.unpack("<I", take(4))
        ident = take(idlen).decode("utf-8")
        (n,) = struct.unpack("<I", take(4))
        vecs = []
        for _ in range(n):
            vec = np.frombuffer(take(4 * FEATURE_DIM), dtype="<f4").copy()
            vecs.append(vec)
        bags.append(FeatureBag(ident, tuple(vecs)))
    if off != len(raw):
        raise FormatError("trailing bytes after last record")
    return bags
