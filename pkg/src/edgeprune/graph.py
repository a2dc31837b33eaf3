"""Graph representation, synthetic dataset generation, and structural primitives.

Graphs are undirected, unweighted, and stored as dense symmetric {0,1}
matrices (desk scale, n up to a few thousand). All randomness flows through
explicitly passed ``numpy.random.Generator`` instances (PCG64).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np


class GraphFormatError(ValueError):
    """Raised when a graph file or matrix violates the graph contract."""


def validate_adjacency(adjacency: np.ndarray) -> None:
    """Check that a matrix is a valid adjacency: square, symmetric, binary, zero diagonal."""
    a = np.asarray(adjacency)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphFormatError(f"adjacency must be square, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise GraphFormatError("adjacency must be symmetric")
    if not np.all((a == 0) | (a == 1)):
        raise GraphFormatError("adjacency entries must be exactly 0 or 1")
    if np.any(np.diag(a) != 0):
        raise GraphFormatError("adjacency diagonal must be zero (no self-loops)")


@dataclass(eq=False)
class Graph:
    """An undirected attributed graph.

    Labels are optional and are consumed only by downstream evaluation,
    never by training, attack, or sanitization.
    """

    n: int
    adjacency: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.adjacency = np.ascontiguousarray(self.adjacency, dtype=np.float64)
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.n <= 0:
            raise GraphFormatError(f"node count must be positive, got {self.n}")
        if self.adjacency.shape != (self.n, self.n):
            raise GraphFormatError(
                f"adjacency shape {self.adjacency.shape} does not match n={self.n}"
            )
        validate_adjacency(self.adjacency)
        if self.features.ndim != 2 or self.features.shape[0] != self.n:
            raise GraphFormatError(
                f"features shape {self.features.shape} does not match n={self.n}"
            )
        if not np.all(np.isfinite(self.features)):
            raise GraphFormatError("features contain non-finite entries")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.n,):
                raise GraphFormatError(
                    f"labels shape {self.labels.shape} does not match n={self.n}"
                )
        # Graphs are immutable once constructed; mutating code must copy.
        self.adjacency.setflags(write=False)
        self.features.setflags(write=False)
        if self.labels is not None:
            self.labels.setflags(write=False)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def edge_count(self) -> int:
        """Number of undirected edges."""
        return int(self.adjacency.sum()) // 2

    def with_adjacency(self, adjacency: np.ndarray) -> "Graph":
        """A new graph sharing features/labels but with a different adjacency."""
        return Graph(self.n, np.array(adjacency), self.features, self.labels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        if self.n != other.n:
            return False
        if not np.array_equal(self.adjacency, other.adjacency):
            return False
        if not np.array_equal(self.features, other.features):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric degree normalization with self-loops.

    Returns D̃^(-1/2) (A + I) D̃^(-1/2) where D̃ is the diagonal degree matrix
    of A + I. Self-loops guarantee every degree is at least 1, so the result
    is always finite.
    """
    validate_adjacency(adjacency)
    return _normalize_general(np.asarray(adjacency, dtype=np.float64))


def _normalize_general(adjacency: np.ndarray) -> np.ndarray:
    # Unvalidated float path shared with the differentiable kernels; degrees
    # are row sums of A + I, so the formula stays defined for the relaxed
    # (continuous, possibly asymmetric) matrices used in gradient checks.
    a_tilde = adjacency + np.eye(adjacency.shape[0])
    deg = a_tilde.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    return a_tilde * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def cosine_feature_similarity(features: np.ndarray, i: int, j: int) -> float:
    """Cosine similarity of feature rows i and j; zero-norm rows compare as 0."""
    n = features.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node index out of range: ({i}, {j}) for n={n}")
    x, y = features[i], features[j]
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.dot(x, y) / (nx * ny))


def cosine_similarity_matrix(features: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities of feature rows; zero-norm rows yield 0."""
    norms = np.linalg.norm(features, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = features / safe[:, None]
    return unit @ unit.T


def mean_neighbor_similarity(graph: Graph) -> float:
    """Mean cosine feature similarity over connected (ordered) node pairs.

    Equals the edge-presence-weighted similarity sum divided by the squared
    Frobenius norm of the adjacency. Returns 0 for an edgeless graph.
    """
    total_entries = graph.adjacency.sum()
    if total_entries == 0:
        return 0.0
    sim = cosine_similarity_matrix(graph.features)
    return float((sim * graph.adjacency).sum() / total_entries)


class EdgeDelta(NamedTuple):
    added: int
    deleted: int


def edge_set_delta(a: np.ndarray, b: np.ndarray) -> EdgeDelta:
    """Undirected edges present in b but not a (added) and in a but not b (deleted)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise GraphFormatError(f"shape mismatch: {a.shape} vs {b.shape}")
    upper = np.triu_indices(a.shape[0], k=1)
    au, bu = a[upper], b[upper]
    added = int(np.sum((bu == 1) & (au == 0)))
    deleted = int(np.sum((au == 1) & (bu == 0)))
    return EdgeDelta(added=added, deleted=deleted)


def undirected_edges(adjacency: np.ndarray) -> list[tuple[int, int]]:
    """Sorted list of (i, j) with i < j for every present edge."""
    rows, cols = np.nonzero(np.triu(np.asarray(adjacency), k=1))
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


@dataclass
class SBMParams:
    """Stochastic block model with block-prototype features."""

    communities: int = 4
    nodes_per_block: int = 25
    p_in: float = 0.3
    p_out: float = 0.02
    feature_dim: int = 16
    feature_noise: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.communities <= 0 or self.nodes_per_block <= 0:
            raise ValueError("communities and nodes_per_block must be positive")
        if not (0.0 <= self.p_out <= 1.0 and 0.0 <= self.p_in <= 1.0):
            raise ValueError("edge probabilities must lie in [0, 1]")
        if self.p_in <= self.p_out:
            raise ValueError("p_in must exceed p_out for a community structure")
        if self.feature_dim < self.communities:
            raise ValueError("feature_dim must be at least the number of communities")
        if self.feature_noise < 0.0:
            raise ValueError("feature_noise must be non-negative")


def generate_sbm(params: SBMParams) -> Graph:
    """Sample a stochastic block model graph, deterministic for a fixed seed.

    Labels are block indices. Features are a per-block prototype (disjoint
    groups of feature dimensions set to 1) plus Gaussian noise scaled by
    ``feature_noise``, clamped to be non-negative so cosine similarities stay
    in [0, 1] as in bag-of-words data.
    """
    rng = np.random.default_rng(params.seed)
    n = params.communities * params.nodes_per_block
    labels = np.repeat(np.arange(params.communities), params.nodes_per_block)

    probs = np.where(labels[:, None] == labels[None, :], params.p_in, params.p_out)
    draws = rng.random((n, n))
    upper = np.triu(draws < probs, k=1)
    adjacency = (upper | upper.T).astype(np.float64)

    prototypes = np.zeros((params.communities, params.feature_dim))
    for block in range(params.communities):
        prototypes[block, block :: params.communities] = 1.0
    features = prototypes[labels] + params.feature_noise * rng.standard_normal(
        (n, params.feature_dim)
    )
    features = np.clip(features, 0.0, None)

    return Graph(n=n, adjacency=adjacency, features=features, labels=labels)


def subsample_nodes(graph: Graph, size: int, seed: int) -> Graph:
    """Induced subgraph on a uniform node sample without replacement."""
    if size > graph.n:
        raise GraphFormatError(f"subsample size {size} exceeds node count {graph.n}")
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(graph.n, size=size, replace=False))
    return Graph(
        n=size,
        adjacency=graph.adjacency[np.ix_(keep, keep)],
        features=graph.features[keep],
        labels=None if graph.labels is None else graph.labels[keep],
    )


def save_graph(graph: Graph, path: str | Path) -> None:
    """Write a graph as JSON: n, d, sorted undirected edge list, features, labels."""
    payload = {
        "n": graph.n,
        "d": graph.feature_dim,
        "edges": [[i, j] for i, j in undirected_edges(graph.adjacency)],
        "features": graph.features.tolist(),
        "labels": None if graph.labels is None else graph.labels.tolist(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_graph(path: str | Path) -> Graph:
    """Read a graph JSON file, enforcing the format and graph invariants."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise GraphFormatError(f"{path}: top-level value must be an object")
    for key in ("n", "d", "edges", "features"):
        if key not in payload:
            raise GraphFormatError(f"{path}: missing field '{key}'")
    n = payload["n"]
    d = payload["d"]
    if not isinstance(n, int) or n <= 0:
        raise GraphFormatError(f"{path}: field 'n' must be a positive integer")

    adjacency = np.zeros((n, n))
    for idx, pair in enumerate(payload["edges"]):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise GraphFormatError(f"{path}: edges[{idx}] must be a pair, got {pair!r}")
        i, j = pair
        if not (isinstance(i, int) and isinstance(j, int)):
            raise GraphFormatError(f"{path}: edges[{idx}] must hold integers, got {pair!r}")
        if i == j:
            raise GraphFormatError(f"{path}: edges[{idx}] = [{i}, {j}] is a self-loop")
        if not (0 <= i < n and 0 <= j < n):
            raise GraphFormatError(f"{path}: edges[{idx}] = [{i}, {j}] out of range for n={n}")
        if i > j:
            raise GraphFormatError(
                f"{path}: edges[{idx}] = [{i}, {j}] must be listed with i < j"
            )
        if adjacency[i, j] == 1:
            raise GraphFormatError(f"{path}: edges[{idx}] = [{i}, {j}] listed twice")
        adjacency[i, j] = adjacency[j, i] = 1.0

    features = np.asarray(payload["features"], dtype=np.float64)
    if features.shape != (n, d):
        raise GraphFormatError(
            f"{path}: field 'features' has shape {features.shape}, expected ({n}, {d})"
        )
    labels = payload.get("labels")
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise GraphFormatError(
                f"{path}: field 'labels' has length {labels.shape}, expected {n}"
            )
    try:
        return Graph(n=n, adjacency=adjacency, features=features, labels=labels)
    except GraphFormatError as exc:
        raise GraphFormatError(f"{path}: {exc}") from exc
