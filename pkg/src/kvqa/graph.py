"""Spatial graph over detected objects.

Each detection becomes a node carrying its label's phrase embedding; directed
edges connect a node to its nearest neighbours by squared center distance.
Edge features describe the relative geometry of the two boxes (normalized
center offset, size ratios, area ratio), which makes them invariant to
translating the layout or scaling it uniformly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data.datasets import Detection
from .data.embeddings import EmbeddingTable, embed_phrase, tokenize

log = logging.getLogger(__name__)

EDGE_FEATURE_DIM = 5
DEFAULT_NUM_NEIGHBOURS = 5


def relative_spatial_vector(a: Detection, b: Detection) -> np.ndarray:
    """Geometry of box ``b`` relative to box ``a``.

    Components: center offset (x then y) divided by sqrt(area of ``a``),
    width ratio, height ratio, area ratio. Identical boxes yield
    [0, 0, 1, 1, 1]; translating or uniformly scaling both boxes changes
    nothing.
    """
    ax, ay = a.center
    bx, by = b.center
    norm = np.sqrt(a.width * a.height)
    return np.array(
        [
            (ax - bx) / norm,
            (ay - by) / norm,
            b.width / a.width,
            b.height / a.height,
            (b.width * b.height) / (a.width * a.height),
        ],
        dtype=np.float64,
    )


def nearest_neighbours(detections: list[Detection], num_neighbours: int) -> list[list[int]]:
    """Indices of the nearest other nodes for every node.

    Distance is squared Euclidean between box centers. Ties break toward the
    lower index; a node is never its own neighbour. With M detections each
    node gets exactly min(num_neighbours, M - 1) neighbours, sorted ascending
    by (distance, index).
    """
    m = len(detections)
    centers = np.array([d.center for d in detections], dtype=np.float64)
    out: list[list[int]] = []
    for i in range(m):
        diffs = centers - centers[i]
        dist2 = diffs[:, 0] ** 2 + diffs[:, 1] ** 2
        order = sorted((j for j in range(m) if j != i), key=lambda j: (dist2[j], j))
        out.append(order[: min(num_neighbours, m - 1)])
    return out


@dataclass
class SpatialGraph:
    """Nodes with label embeddings, neighbour lists, and relative-geometry
    edges. Boxes are retained for inspection dumps only."""

    node_feats: np.ndarray  # (M, embed_dim)
    boxes: np.ndarray  # (M, 4)
    neighbours: list[list[int]]  # per node, ascending (distance, index)
    edge_feats: np.ndarray  # (M, K, EDGE_FEATURE_DIM); slot (i, s) is edge i -> s-th neighbour
    labels: list[str]

    @property
    def num_nodes(self) -> int:
        return int(self.node_feats.shape[0])

    @property
    def num_neighbours(self) -> int:
        return int(self.edge_feats.shape[1])

    @property
    def num_edges(self) -> int:
        return sum(len(n) for n in self.neighbours)

    def edge_index_pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nbrs in enumerate(self.neighbours) for j in nbrs]

    def adjacency(self) -> np.ndarray:
        m = self.num_nodes
        adj = np.zeros((m, m))
        for i, nbrs in enumerate(self.neighbours):
            for j in nbrs:
                adj[i, j] = 1.0
        return adj


def build_graph(
    detections: list[Detection],
    table: EmbeddingTable,
    num_neighbours: int = DEFAULT_NUM_NEIGHBOURS,
) -> SpatialGraph:
    """Assemble the spatial graph for one image.

    Node i's feature is the mean word vector of detection i's label. Edge
    slot (i, s) holds the relative-geometry vector between node i and its
    s-th nearest neighbour; every node has the same neighbour count, so the
    edge array is dense. Zero detections degrade to a single zero-embedding
    node with no edges (warned) so the reasoning loop stays total.
    """
    if num_neighbours < 1:
        raise ValueError(f"num_neighbours must be >= 1, got {num_neighbours}")
    if not detections:
        log.warning("no detections; graph falls back to a single zero-feature node")
        return SpatialGraph(
            node_feats=np.zeros((1, table.dim)),
            boxes=np.zeros((1, 4)),
            neighbours=[[]],
            edge_feats=np.zeros((1, 0, EDGE_FEATURE_DIM)),
            labels=["<none>"],
        )
    m = len(detections)
    node_feats = np.stack([embed_phrase(table, tokenize(d.label)) for d in detections])
    boxes = np.array([d.box for d in detections], dtype=np.float64)
    neighbours = nearest_neighbours(detections, num_neighbours)
    width = len(neighbours[0])
    edge_feats = np.zeros((m, width, EDGE_FEATURE_DIM), dtype=np.float64)
    for i, nbrs in enumerate(neighbours):
        for s, j in enumerate(nbrs):
            edge_feats[i, s] = relative_spatial_vector(detections[i], detections[j])
    return SpatialGraph(
        node_feats=node_feats,
        boxes=boxes,
        neighbours=neighbours,
        edge_feats=edge_feats,
        labels=[d.label for d in detections],
    )
