"""Shared fixtures and synthetic-data builders for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from layoutmuse import imaging

_acceptance_results: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance_results.append((report.nodeid.split("::")[-1], report.outcome.upper()))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, outcome in _acceptance_results:
        terminalreporter.write_line(f"{outcome:6s} {name}")


def blob_pair(centers, size=(96, 128), seed=0, pair_id="drawing", sigma=6.0):
    """In-memory drawing/saliency pair with Gaussian blobs at (row, col)."""
    h, w = size
    rng = np.random.default_rng(seed)
    img = (rng.random((h, w, 3)) * 0.3 + 0.35).astype(np.float32)
    yy, xx = np.mgrid[0:h, 0:w]
    sal = np.zeros((h, w))
    for cy, cx in centers:
        sal += np.exp(-(((yy - cy) / sigma) ** 2 + ((xx - cx) / sigma) ** 2))
    sal /= sal.max()
    return imaging.SaliencyPair(
        imaging.RasterImage(img), imaging.SaliencyMap(sal.astype(np.float32)), id=pair_id
    )


def write_pair(directory: Path, name: str, pair: imaging.SaliencyPair) -> dict:
    """Persist a pair as PNG files; returns its manifest record."""
    from PIL import Image

    directory.mkdir(parents=True, exist_ok=True)
    img_path = directory / f"{name}.png"
    sal_path = directory / f"{name}_saliency.png"
    imaging.save_image(pair.image, img_path)
    Image.fromarray((pair.saliency.data * 255).astype(np.uint8)).save(sal_path)
    return {"image": str(img_path), "saliency": str(sal_path), "id": name}


def write_manifest(directory: Path, records: list[dict]) -> Path:
    path = directory / "manifest.jsonl"
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
    return path


@pytest.fixture
def three_blob_pair():
    return blob_pair([(25, 30), (60, 90), (45, 60)], pair_id="three")


@pytest.fixture
def small_corpus(tmp_path):
    """Three on-disk drawings with 3 blobs each; returns the manifest path."""
    records = []
    for i in range(3):
        pair = blob_pair(
            [(25, 30 + 6 * i), (60, 90 - 5 * i), (45, 60)], seed=i, pair_id=f"draw{i}"
        )
        records.append(write_pair(tmp_path, f"draw{i}", pair))
    return write_manifest(tmp_path, records)
