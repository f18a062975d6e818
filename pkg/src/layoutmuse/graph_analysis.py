"""Layout-graph clustering: Delaunay graphs, continuous WL embeddings,
exact Wasserstein distances, kernel matrix, and average-linkage clustering.

Node positions live on the 32x32 layout grid; node attributes are the 512-d
patch descriptors.  Pairwise graph distances are exact 1-Wasserstein optimal
transport costs between the per-node WL embedding clouds under Euclidean
ground distance.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import Delaunay as _SciDelaunay
from scipy.spatial import QhullError

from . import features as feat
from . import imaging, layout_codec
from .errors import DuplicatePoints, EmptyCorpus, WidthMismatch

log = logging.getLogger(__name__)

DEFAULT_WL_ITERATIONS = 2


@dataclass(frozen=True)
class Triangulation:
    faces: tuple[tuple[int, int, int], ...]
    edges: tuple[tuple[int, int], ...]  # union of face sides, or chain fallback


@dataclass(frozen=True)
class LayoutGraph:
    positions: np.ndarray  # (n, 2) grid (row, col)
    node_features: np.ndarray  # (n, 512)
    weights: np.ndarray  # (n, n) symmetric, 0 = no edge


@dataclass(frozen=True)
class ClusterAssignment:
    labels: dict[str, int]
    k: int
    dendrogram: tuple[tuple[tuple[int, int], float], ...]  # ((i, j), height)


def delaunay(points: list[tuple[int, int]]) -> Triangulation:
    """Delaunay faces of grid points; collinear inputs fall back to a chain."""
    pts = np.asarray(points, dtype=np.float64)
    if len(points) != len({tuple(p) for p in points}):
        raise DuplicatePoints("triangulation input has coincident points")
    n = len(points)
    if n == 1:
        return Triangulation((), ())
    if n == 2:
        return Triangulation((), ((0, 1),))

    def chain() -> Triangulation:
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        edges = tuple((int(order[i]), int(order[i + 1])) for i in range(n - 1))
        return Triangulation((), tuple(tuple(sorted(e)) for e in edges))

    try:
        tri = _SciDelaunay(pts)
    except QhullError:
        return chain()  # all points collinear
    faces = tuple(tuple(int(v) for v in f) for f in tri.simplices)
    edge_set = set()
    for a, b, c in faces:
        edge_set.update({tuple(sorted((a, b))), tuple(sorted((b, c))), tuple(sorted((a, c)))})
    return Triangulation(faces, tuple(sorted(edge_set)))


def graph_from_faces(tri: Triangulation, points, feats: np.ndarray) -> LayoutGraph:
    """Weighted adjacency from triangulation edges: w = exp(-d / mean d)."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    weights = np.zeros((n, n))
    if tri.edges:
        lengths = np.array([np.linalg.norm(pts[a] - pts[b]) for a, b in tri.edges])
        sigma = lengths.mean()
        for (a, b), d in zip(tri.edges, lengths):
            w = math.exp(-d / sigma) if sigma > 0 else 1.0
            weights[a, b] = weights[b, a] = w
    return LayoutGraph(pts, np.asarray(feats, dtype=np.float64), weights)


def wl_embed(g: LayoutGraph, iterations: int = DEFAULT_WL_ITERATIONS) -> np.ndarray:
    """Continuous WL node embeddings, iterations 0..H concatenated per node.

    One iteration averages a node with its degree-normalized weighted
    neighborhood: a' = (a + (1/deg) * sum_u w(v,u) a(u)) / 2.  Isolated nodes
    keep their feature.
    """
    a = g.node_features.copy()
    deg = (g.weights > 0).sum(axis=1).astype(np.float64)
    stacked = [a.copy()]
    for _ in range(iterations):
        neigh = g.weights @ a
        scale = np.where(deg > 0, deg, 1.0)
        nxt = 0.5 * (a + neigh / scale[:, None])
        nxt[deg == 0] = a[deg == 0]
        a = nxt
        stacked.append(a.copy())
    return np.concatenate(stacked, axis=1)


def wasserstein_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Exact 1-Wasserstein cost between uniform clouds of embedding rows.

    Each measure puts mass 1/n on its rows; the ground metric is Euclidean.
    Solved exactly by expanding both sides to lcm(n, m) unit atoms and
    running an optimal assignment (uniform-measure OT always admits a
    permutation solution on the expanded problem).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise WidthMismatch(f"widths {x.shape[1]} vs {y.shape[1]}")
    n, m = x.shape[0], y.shape[0]
    cost = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2)
    lcm = n * m // math.gcd(n, m)
    big = np.repeat(np.repeat(cost, lcm // n, axis=0), lcm // m, axis=1)
    rows, cols = linear_sum_assignment(big)
    return float(big[rows, cols].sum() / lcm)


def kernel_matrix(
    embeddings: list[np.ndarray], gamma: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise Wasserstein distances D and Laplacian kernel K = exp(-gamma D).

    gamma defaults to 1 / median(off-diagonal D) (1.0 when all distances are 0).
    """
    n = len(embeddings)
    if n == 0:
        raise EmptyCorpus("no embeddings")
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = wasserstein_distance(embeddings[i], embeddings[j])
    if gamma is None:
        off = d[~np.eye(n, dtype=bool)]
        med = float(np.median(off)) if off.size else 0.0
        gamma = 1.0 / med if med > 0 else 1.0
    return d, np.exp(-gamma * d)


def psd_clip(k: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues to 0 (WWL kernels on continuous attributes
    are not guaranteed PSD)."""
    vals, vecs = np.linalg.eigh((k + k.T) / 2)
    return (vecs * np.maximum(vals, 0.0)) @ vecs.T


def hierarchical_cluster(
    d: np.ndarray, k: int, ids: list[str] | None = None
) -> ClusterAssignment:
    """Average-linkage agglomeration on a precomputed distance matrix.

    Merge ties are broken by the lexicographically smallest cluster-index
    pair.  Cutting stops when k clusters remain; labels are ordered by each
    cluster's smallest member index.
    """
    n = d.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}")
    if ids is None:
        ids = [str(i) for i in range(n)]
    clusters: dict[int, list[int]] = {i: [i] for i in range(n)}
    merges = []
    active = list(range(n))
    next_id = n
    link = {(i, j): d[i, j] for i in range(n) for j in range(i + 1, n)}

    def pair_dist(a, b):
        return link[(a, b) if a < b else (b, a)]

    while len(active) > k:
        best = min(
            ((pair_dist(a, b), (a, b)) for i, a in enumerate(active) for b in active[i + 1 :]),
            key=lambda t: (t[0], t[1]),
        )
        height, (a, b) = best
        merges.append(((a, b), float(height)))
        merged = clusters[a] + clusters[b]
        na, nb = len(clusters[a]), len(clusters[b])
        for c in active:
            if c in (a, b):
                continue
            avg = (pair_dist(a, c) * na + pair_dist(b, c) * nb) / (na + nb)
            link[(c, next_id) if c < next_id else (next_id, c)] = avg
        active = [c for c in active if c not in (a, b)] + [next_id]
        clusters[next_id] = merged
        next_id += 1

    groups = sorted((sorted(clusters[c]) for c in active), key=lambda g: g[0])
    labels = {}
    for label, members in enumerate(groups):
        for idx in members:
            labels[ids[idx]] = label
    return ClusterAssignment(labels, len(groups), tuple(merges))


def suggest_k(d: np.ndarray, ids: list[str], k_max: int = 10) -> int:
    """Pick k by best silhouette score over 2..min(k_max, n-1)."""
    from sklearn.metrics import silhouette_score

    n = d.shape[0]
    best_k, best_s = 2, -2.0
    for k in range(2, min(k_max, n - 1) + 1):
        assign = hierarchical_cluster(d, k, ids)
        labels = [assign.labels[i] for i in ids]
        if len(set(labels)) < 2:
            continue
        s = silhouette_score(d, labels, metric="precomputed")
        if s > best_s:
            best_k, best_s = k, s
    return best_k


# ---------------------------------------------------------------------------
# Full clustering pipeline over a corpus manifest
# ---------------------------------------------------------------------------


@dataclass
class CorpusItem:
    id: str
    pair: imaging.SaliencyPair
    regions: imaging.RegionSet
    bag: feat.FeatureBag
    cells: list[tuple[int, int]]
    graph: LayoutGraph


def read_manifest(path) -> list[dict]:
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def build_corpus_item(
    record: dict, feature_bags: dict[str, feat.FeatureBag] | None = None
) -> CorpusItem:
    pair_id = record.get("id") or record["image"]
    pair = imaging.load_pair(record["image"], record["saliency"], pair_id)
    regions = imaging.watershed_segment(pair.saliency)
    regions = imaging.extract_patches(pair, regions)
    if feature_bags and pair_id in feature_bags:
        bag = feature_bags[pair_id]
    else:
        bag = feat.bag_from_regions(pair_id, regions.regions)
    cells = layout_codec.place_centers(regions)
    tri = delaunay(cells)
    graph = graph_from_faces(tri, cells, np.stack(bag.per_region))
    return CorpusItem(pair_id, pair, regions, bag, cells, graph)


def cluster_layouts(
    manifest_path,
    wl_iterations: int = DEFAULT_WL_ITERATIONS,
    k: int | None = None,
    out_dir=None,
    feature_file=None,
) -> ClusterAssignment:
    """Run the whole pipeline: segment, embed, distance, kernel, cluster.

    Failed manifest items are skipped with a logged reason.  When out_dir is
    given, writes assignment JSON and per-cluster node-overlay contact sheets.
    """
    records = read_manifest(manifest_path)
    bags = None
    if feature_file:
        bags = {b.drawing_id: b for b in feat.import_features(feature_file)}
    items: list[CorpusItem] = []
    for rec in records:
        try:
            items.append(build_corpus_item(rec, bags))
        except Exception as exc:  # keep going; one bad pair must not kill the run
            log.warning("skipping %s: %s", rec.get("id", rec.get("image")), exc)
    if not items:
        raise EmptyCorpus("manifest yielded no usable drawings")

    embeddings = [wl_embed(item.graph, wl_iterations) for item in items]
    ids = [item.id for item in items]
    d, kmat = kernel_matrix(embeddings)
    if k is None:
        k = suggest_k(d, ids) if len(items) > 2 else 1
    assignment = hierarchical_cluster(d, k, ids)

    if out_dir is not None:
        _write_report(Path(out_dir), items, assignment, d, kmat)
    return assignment


def _write_report(out_dir: Path, items, assignment: ClusterAssignment, d, kmat):
    from PIL import Image, ImageDraw

    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "k": assignment.k,
        "labels": assignment.labels,
        "distance_matrix": d.tolist(),
        "kernel_matrix": kmat.tolist(),
    }
    (out_dir / "assignment.json").write_text(json.dumps(doc, indent=2))

    thumb = 128
    by_cluster: dict[int, list[CorpusItem]] = {}
    for item in items:
        by_cluster.setdefault(assignment.labels[item.id], []).append(item)
    for label, members in sorted(by_cluster.items()):
        sheet = Image.new("RGB", (thumb * len(members), thumb), "white")
        for i, item in enumerate(members):
            arr = (item.pair.image.data[:, :, :3] * 255).astype(np.uint8)
            im = Image.fromarray(arr).resize((thumb, thumb))
            draw = ImageDraw.Draw(im)
            for row, col in item.cells:
                x = (col + 0.5) / layout_codec.GRID * thumb
                y = (row + 0.5) / layout_codec.GRID * thumb
                draw.ellipse([x - 3, y - 3, x + 3, y + 3], fill=(0, 200, 0))
            sheet.paste(im, (i * thumb, 0))
        sheet.save(out_dir / f"cluster_{label:02d}.png")
