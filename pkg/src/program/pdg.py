"""
Program Dependence Graph Module for the Symmetry Toolkit

This module builds the program dependence graph (PDG) of a code unit, a
sound over-approximation of its interpretation graph, and derives the
structural features consumed by the model: per-token degree sequences and
the lowest-common-ancestor distance matrix.

Author: Symmetry Toolkit Team
Date: 2026-10-18
"""

import json
import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from sortedcontainers import SortedSet

from program.ir import CodeUnit, InstructionKind

logger = logging.getLogger(__name__)

# Sentinel stored in distance matrices when two nodes share no ancestor
NO_ANCESTOR = -1


class EdgeKind(str, Enum):
    RAW = "RAW"
    WAR = "WAR"
    WAW = "WAW"
    CTRL = "CTRL"


class Edge(NamedTuple):
    src: int
    dst: int
    kind: EdgeKind


class Pdg:
    """
    Directed dependence graph over the instructions of a code unit.

    Edges are typed triples kept in a sorted set so every serialization is
    byte-stable.

    Attributes:
        n: node count (one node per instruction)
        node_text: rendered instruction text per node, when known
    """

    def __init__(self, n: int, edges: Iterable[Edge] = (), node_text: Optional[Sequence[str]] = None):
        """
        Initialize the Pdg.

        Args:
            n: number of nodes
            edges: (src, dst, kind) triples
            node_text: optional instruction text per node
        """
        if n < 0:
            raise ValueError("node count must be non-negative")
        self.n = n
        self.node_text = tuple(node_text) if node_text is not None else tuple(f"n{i}" for i in range(n))
        if len(self.node_text) != n:
            raise ValueError("node_text length must equal node count")

        self._edges = SortedSet()
        self._succ = [SortedSet() for _ in range(n)]
        self._pred = [SortedSet() for _ in range(n)]
        self._kinds: Dict[Tuple[int, int], FrozenSet[EdgeKind]] = {}
        for src, dst, kind in edges:
            self._add(int(src), int(dst), EdgeKind(kind))

    def _add(self, src: int, dst: int, kind: EdgeKind):
        if not (0 <= src < self.n and 0 <= dst < self.n):
            raise ValueError(f"edge ({src}, {dst}) outside node range [0, {self.n})")
        if src == dst:
            raise ValueError(f"self-dependence on node {src} is not allowed")
        self._edges.add(Edge(src, dst, kind))
        self._succ[src].add(dst)
        self._pred[dst].add(src)
        self._kinds[(src, dst)] = self._kinds.get((src, dst), frozenset()) | {kind}

    @property
    def edges(self) -> Tuple[Edge, ...]:
        return tuple(self._edges)

    def successors(self, node: int) -> Tuple[int, ...]:
        return tuple(self._succ[node])

    def predecessors(self, node: int) -> Tuple[int, ...]:
        return tuple(self._pred[node])

    def in_degree(self, node: int) -> int:
        return len(self._pred[node])

    def out_degree(self, node: int) -> int:
        return len(self._succ[node])

    def edge_kinds(self, src: int, dst: int) -> FrozenSet[EdgeKind]:
        return self._kinds.get((src, dst), frozenset())

    def has_edge(self, src: int, dst: int, kind: Optional[EdgeKind] = None) -> bool:
        kinds = self.edge_kinds(src, dst)
        return bool(kinds) if kind is None else kind in kinds

    def relabel(self, mapping: Sequence[int]) -> "Pdg":
        """Return the graph with node i renamed to mapping[i]."""
        if len(mapping) != self.n:
            raise ValueError("mapping size must equal node count")
        text = [""] * self.n
        for old, new in enumerate(mapping):
            text[new] = self.node_text[old]
        return Pdg(self.n, (Edge(mapping[s], mapping[d], k) for s, d, k in self._edges), text)

    def same_structure(self, other: "Pdg") -> bool:
        return self.n == other.n and tuple(self._edges) == tuple(other._edges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pdg):
            return NotImplemented
        return self.same_structure(other)

    def __hash__(self) -> int:
        return hash((self.n, tuple(self._edges)))

    def __repr__(self) -> str:
        return f"Pdg(n={self.n}, edges={len(self._edges)})"

    def to_dict(self) -> Dict[str, list]:
        nodes = [
            {"id": i, "text": self.node_text[i], "in_deg": self.in_degree(i), "out_deg": self.out_degree(i)}
            for i in range(self.n)
        ]
        edges = [{"src": e.src, "dst": e.dst, "kind": e.kind.value} for e in self._edges]
        return {"nodes": nodes, "edges": edges}

    def to_json(self, extra: Optional[Dict[str, object]] = None) -> str:
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_dot(self, comment: Optional[str] = None) -> str:
        lines = []
        if comment:
            lines.append(f"// {comment}")
        lines.append("digraph pdg {")
        for i in range(self.n):
            label = self.node_text[i].replace("\\", "\\\\").replace('"', '\\"')
            lines.append(f'  n{i} [label="{i}: {label}"];')
        for e in self._edges:
            lines.append(f'  n{e.src} -> n{e.dst} [label="{e.kind.value}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _data_edges(unit: CodeUnit) -> List[Edge]:
    edges = []
    last_write: Dict[str, int] = {}
    reads_since_write: Dict[str, List[int]] = {}
    for ins in unit.instructions:
        j = ins.index
        reads = ins.reads()
        writes = ins.writes()
        for loc in reads:
            if loc in last_write and last_write[loc] != j:
                edges.append(Edge(last_write[loc], j, EdgeKind.RAW))
        for loc in writes:
            for reader in reads_since_write.get(loc, ()):
                if reader != j:
                    edges.append(Edge(reader, j, EdgeKind.WAR))
            if loc in last_write:
                edges.append(Edge(last_write[loc], j, EdgeKind.WAW))
        for loc in reads:
            reads_since_write.setdefault(loc, []).append(j)
        for loc in writes:
            last_write[loc] = j
            reads_since_write[loc] = []
    return edges


def _control_edges(unit: CodeUnit) -> List[Edge]:
    n = unit.n
    labels = unit.labels
    edges = []

    # Control dependence: a branch governs the range it may skip; a back-edge
    # governs the whole suffix.
    for ins in unit.instructions:
        if ins.kind is not InstructionKind.BRANCH:
            continue
        target = labels[ins.target]
        end = target + 1 if target > ins.index else n
        edges.extend(Edge(ins.index, j, EdgeKind.CTRL) for j in range(ins.index + 1, end))

    # Barrier sequencing keeps labels, branches and halts between the same
    # straight-line segments.
    barriers = [ins.index for ins in unit.instructions if ins.is_barrier]
    for position, k in enumerate(barriers):
        previous = barriers[position - 1] if position > 0 else 0
        following = barriers[position + 1] if position + 1 < len(barriers) else n
        edges.extend(Edge(i, k, EdgeKind.CTRL) for i in range(previous, k))
        edges.extend(Edge(k, j, EdgeKind.CTRL) for j in range(k + 1, following))
    return edges


def build_pdg(unit: CodeUnit) -> Pdg:
    """
    Build the PDG of a code unit.

    Args:
        unit: parsed code unit

    Returns:
        Pdg with RAW/WAR/WAW data edges (all memory accesses alias the single
        cell) and CTRL edges; every edge points forward in source order
    """
    edges = _data_edges(unit) + _control_edges(unit)
    graph = Pdg(unit.n, edges, [ins.text() for ins in unit.instructions])
    logger.debug(f"Built PDG: {graph.n} nodes, {len(graph.edges)} edges")
    return graph


@dataclass(frozen=True)
class DegreeSequences:
    """Per-token model inputs: token text, intra positions and node degrees."""

    x_c: Tuple[str, ...]
    x_pos: Tuple[int, ...]
    x_ind: Tuple[int, ...]
    x_outd: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.x_c)


def degree_sequences(unit: CodeUnit, graph: Pdg) -> DegreeSequences:
    if graph.n != unit.n:
        raise ValueError(f"PDG has {graph.n} nodes but unit has {unit.n} instructions")
    in_deg = [graph.in_degree(i) for i in range(graph.n)]
    out_deg = [graph.out_degree(i) for i in range(graph.n)]
    return DegreeSequences(
        x_c=unit.tokens,
        x_pos=unit.intra_pos,
        x_ind=tuple(in_deg[owner] for owner in unit.token_owner),
        x_outd=tuple(out_deg[owner] for owner in unit.token_owner),
    )


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """
    Pairwise (positive, negative) distances from a lowest common ancestor.

    `positive[i, j]` is the distance from the ancestor to i, `negative[i, j]`
    the distance to j; both hold NO_ANCESTOR when i and j share no ancestor.
    """

    positive: np.ndarray
    negative: np.ndarray

    def __post_init__(self):
        for name in ("positive", "negative"):
            array = np.array(getattr(self, name), dtype=np.int64)
            if array.ndim != 2 or array.shape[0] != array.shape[1]:
                raise ValueError(f"{name} must be a square matrix")
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if self.positive.shape != self.negative.shape:
            raise ValueError("positive and negative matrices must have equal shape")

    @property
    def n(self) -> int:
        return self.positive.shape[0]

    def entry(self, i: int, j: int) -> Optional[Tuple[int, int]]:
        p = int(self.positive[i, j])
        if p == NO_ANCESTOR:
            return None
        return p, int(self.negative[i, j])

    def permuted(self, mapping: Sequence[int]) -> "DistanceMatrix":
        """Entries moved so that new[mapping[i], mapping[j]] = old[i, j]."""
        inverse = np.empty(len(mapping), dtype=np.int64)
        inverse[np.asarray(mapping, dtype=np.int64)] = np.arange(len(mapping))
        index = np.ix_(inverse, inverse)
        return DistanceMatrix(self.positive[index], self.negative[index])

    def equals(self, other: "DistanceMatrix") -> bool:
        return np.array_equal(self.positive, other.positive) and np.array_equal(self.negative, other.negative)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        return self.equals(other)

    __hash__ = None


def shortest_paths(graph: Pdg) -> np.ndarray:
    """Unweighted directed BFS distances; -1 where unreachable."""
    n = graph.n
    dist = np.full((n, n), -1, dtype=np.int64)
    for source in range(n):
        dist[source, source] = 0
        queue = deque([source])
        while queue:
            node = queue.popleft()
            for nxt in graph.successors(node):
                if dist[source, nxt] < 0:
                    dist[source, nxt] = dist[source, node] + 1
                    queue.append(nxt)
    return dist


def distance_matrix(graph: Pdg) -> DistanceMatrix:
    """
    Compute the LCA distance matrix of a PDG.

    For each pair (i, j) the common ancestors minimising dist(a,i)+dist(a,j)
    are selected; the entry is the smallest dist(a,i) and the smallest
    dist(a,j) over that tied set. Only distance values decide, never node
    identity, so the matrix is invariant under every automorphism and
    entries[j][i] is entries[i][j] swapped.

    Args:
        graph: dependence graph

    Returns:
        DistanceMatrix with NO_ANCESTOR where no common ancestor exists
    """
    n = graph.n
    dist = shortest_paths(graph)
    positive = np.full((n, n), NO_ANCESTOR, dtype=np.int64)
    negative = np.full((n, n), NO_ANCESTOR, dtype=np.int64)
    reaches = dist >= 0
    for i in range(n):
        for j in range(n):
            common = reaches[:, i] & reaches[:, j]
            if not common.any():
                continue
            totals = np.where(common, dist[:, i] + dist[:, j], np.iinfo(np.int64).max)
            tied = totals == totals.min()
            positive[i, j] = dist[tied, i].min()
            negative[i, j] = dist[tied, j].min()
    return DistanceMatrix(positive, negative)


def expand_to_tokens(distances: DistanceMatrix, unit: CodeUnit) -> DistanceMatrix:
    """
    Expand an instruction-level distance matrix to token granularity.

    Args:
        distances: matrix built from the unit's PDG
        unit: code unit providing token ownership

    Returns:
        token-level DistanceMatrix; tokens of one instruction get (0, 0)
    """
    if distances.n != unit.n:
        raise ValueError(f"distance matrix has {distances.n} nodes but unit has {unit.n} instructions")
    owner = np.asarray(unit.token_owner, dtype=np.int64)
    index = np.ix_(owner, owner)
    return DistanceMatrix(distances.positive[index], distances.negative[index])
