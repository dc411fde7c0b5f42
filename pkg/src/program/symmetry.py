"""
Symmetry Module for the Symmetry Toolkit

This module materializes the permutation symmetries of a code unit:
block permutations with their token-level and matrix actions, membership
and exhaustive enumeration of the PDG automorphism group, group-axiom
verification, and the seeded topological-sort sampler that produces
semantics-preserving instruction reorderings.

Author: Symmetry Toolkit Team
Date: 2026-10-18
"""

import json
import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from sortedcontainers import SortedList

from program.ir import CodeUnit
from program.pdg import Pdg

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_CAP = 10
DEFAULT_MAX_ELEMENTS = 40320
EXHAUSTIVE_CLOSURE_LIMIT = 256
SAMPLED_CLOSURE_PAIRS = 4096


class SizeMismatchError(ValueError):
    pass


class CycleError(ValueError):
    """Raised when the dependence relation is not a partial order."""

    def __init__(self, cycle: Sequence[int]):
        self.cycle = list(cycle)
        path = " -> ".join(str(node) for node in self.cycle)
        super().__init__(f"dependence relation has a cycle: {path}")


class EnumerationCapError(ValueError):
    pass


class GroupAxiomError(RuntimeError):
    pass


@dataclass(frozen=True)
class BlockPermutation:
    """
    An instruction-level permutation that moves whole token blocks.

    `mapping[i]` is the new position of instruction i. With `block_sizes`
    (tokens per instruction, in source order) the permutation also acts on
    tokens, keeping the order of tokens inside each instruction.
    """

    mapping: Tuple[int, ...]
    block_sizes: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        mapping = tuple(int(v) for v in self.mapping)
        if sorted(mapping) != list(range(len(mapping))):
            raise ValueError(f"mapping {mapping} is not a bijection on [0, {len(mapping)})")
        object.__setattr__(self, "mapping", mapping)
        if self.block_sizes is not None:
            sizes = tuple(int(s) for s in self.block_sizes)
            if len(sizes) != len(mapping) or any(s < 0 for s in sizes):
                raise SizeMismatchError("block_sizes must give a non-negative size per instruction")
            object.__setattr__(self, "block_sizes", sizes)

    @classmethod
    def identity(cls, n: int, block_sizes: Optional[Sequence[int]] = None) -> "BlockPermutation":
        return cls(tuple(range(n)), None if block_sizes is None else tuple(block_sizes))

    @classmethod
    def from_order(cls, order: Sequence[int], block_sizes: Optional[Sequence[int]] = None) -> "BlockPermutation":
        """Build from the sequence of old indices in their new order."""
        mapping = [0] * len(order)
        for position, old in enumerate(order):
            mapping[old] = position
        return cls(tuple(mapping), None if block_sizes is None else tuple(block_sizes))

    @property
    def n(self) -> int:
        return len(self.mapping)

    @property
    def order(self) -> Tuple[int, ...]:
        result = [0] * self.n
        for old, new in enumerate(self.mapping):
            result[new] = old
        return tuple(result)

    @property
    def is_identity(self) -> bool:
        return all(i == v for i, v in enumerate(self.mapping))

    def __call__(self, i: int) -> int:
        return self.mapping[i]

    def with_blocks(self, block_sizes: Sequence[int]) -> "BlockPermutation":
        return BlockPermutation(self.mapping, tuple(block_sizes))

    @property
    def token_map(self) -> Tuple[int, ...]:
        """Token-level bijection; instruction granularity when no block sizes are known."""
        sizes = self.block_sizes if self.block_sizes is not None else (1,) * self.n
        new_sizes = [0] * self.n
        for old, new in enumerate(self.mapping):
            new_sizes[new] = sizes[old]
        new_start = np.concatenate(([0], np.cumsum(new_sizes)[:-1])) if self.n else []
        result = []
        for old, size in enumerate(sizes):
            start = int(new_start[self.mapping[old]])
            result.extend(range(start, start + size))
        return tuple(result)

    def compose(self, other: "BlockPermutation") -> "BlockPermutation":
        """self ∘ other: apply `other` first."""
        if other.n != self.n:
            raise SizeMismatchError(f"cannot compose permutations of size {self.n} and {other.n}")
        return BlockPermutation(tuple(self.mapping[other.mapping[i]] for i in range(self.n)), other.block_sizes)

    def inverse(self) -> "BlockPermutation":
        sizes = None
        if self.block_sizes is not None:
            moved = [0] * self.n
            for old, new in enumerate(self.mapping):
                moved[new] = self.block_sizes[old]
            sizes = tuple(moved)
        return BlockPermutation(self.order, sizes)

    def act_on_rows(self, rows: np.ndarray) -> np.ndarray:
        """Move row s of a token-indexed array to row token_map[s] (σ·e)."""
        result = np.empty_like(rows)
        result[list(self.token_map)] = rows
        return result

    def to_json(self) -> str:
        return json.dumps(list(self.mapping))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BlockPermutation):
            return NotImplemented
        return self.mapping == other.mapping

    def __hash__(self) -> int:
        return hash(self.mapping)


def apply(pi: BlockPermutation, unit: CodeUnit) -> CodeUnit:
    """
    Reorder a code unit: the instruction at index i lands at pi(i).

    Raises:
        SizeMismatchError: when pi and the unit differ in size
    """
    if pi.n != unit.n:
        raise SizeMismatchError(f"permutation of size {pi.n} applied to unit of {unit.n} instructions")
    reordered = [unit.instructions[old] for old in pi.order]
    return CodeUnit.from_instructions(reordered)


def permutation_matrix(pi: BlockPermutation) -> np.ndarray:
    """
    0/1 matrix realizing pi on row-stacked token embeddings.

    Returns:
        matrix P with P[token_map[s], s] = 1, so P @ e permutes the rows of e
    """
    token_map = pi.token_map
    size = len(token_map)
    matrix = np.zeros((size, size), dtype=np.int64)
    matrix[list(token_map), list(range(size))] = 1
    return matrix


def is_automorphism(graph: Pdg, sigma: BlockPermutation) -> bool:
    """True iff sigma maps every typed edge onto a typed edge of the graph."""
    if sigma.n != graph.n:
        raise SizeMismatchError(f"permutation of size {sigma.n} for graph of {graph.n} nodes")
    mapped = set()
    for src, dst, kind in graph.edges:
        image = (sigma(src), sigma(dst), kind)
        if not graph.has_edge(*image):
            return False
        mapped.add(image)
    return len(mapped) == len(graph.edges)


def is_linear_extension(graph: Pdg, pi: BlockPermutation) -> bool:
    """True iff the reordering keeps every edge pointing forward."""
    if pi.n != graph.n:
        raise SizeMismatchError(f"permutation of size {pi.n} for graph of {graph.n} nodes")
    return all(pi(src) < pi(dst) for src, dst, _ in graph.edges)


@dataclass(frozen=True)
class AutomorphismGroup:
    """Explicit element list of Aut(PDG) at instruction granularity."""

    n: int
    elements: Tuple[BlockPermutation, ...]
    closure_check: str = "exhaustive"

    @property
    def order(self) -> int:
        return len(self.elements)

    def __contains__(self, sigma: BlockPermutation) -> bool:
        return sigma.mapping in self._mappings()

    def _mappings(self):
        return {element.mapping for element in self.elements}

    def verify_axioms(self, seed: int = 0) -> str:
        """
        Check identity, inverses and closure on the stored elements.

        Returns:
            "exhaustive" or "sampled", naming how closure was checked

        Raises:
            GroupAxiomError: when an axiom fails
        """
        mappings = self._mappings()
        if tuple(range(self.n)) not in mappings:
            raise GroupAxiomError("identity is missing")
        for element in self.elements:
            if element.inverse().mapping not in mappings:
                raise GroupAxiomError(f"inverse of {element.mapping} is missing")
        if self.order <= EXHAUSTIVE_CLOSURE_LIMIT:
            pairs: Iterator[Tuple[int, int]] = ((a, b) for a in range(self.order) for b in range(self.order))
            mode = "exhaustive"
        else:
            rng = np.random.default_rng(seed)
            drawn = rng.integers(0, self.order, size=(SAMPLED_CLOSURE_PAIRS, 2))
            pairs = ((int(a), int(b)) for a, b in drawn)
            mode = "sampled"
        for a, b in pairs:
            product = self.elements[a].compose(self.elements[b])
            if product.mapping not in mappings:
                raise GroupAxiomError(f"composition {product.mapping} is not in the group")
        return mode


def _signatures(graph: Pdg) -> List[Tuple]:
    incoming: Dict[int, List[str]] = {i: [] for i in range(graph.n)}
    outgoing: Dict[int, List[str]] = {i: [] for i in range(graph.n)}
    for src, dst, kind in graph.edges:
        outgoing[src].append(kind.value)
        incoming[dst].append(kind.value)
    return [
        (graph.in_degree(v), graph.out_degree(v), tuple(sorted(incoming[v])), tuple(sorted(outgoing[v])))
        for v in range(graph.n)
    ]


def automorphisms(
    graph: Pdg,
    cap: int = DEFAULT_ENUMERATION_CAP,
    max_elements: int = DEFAULT_MAX_ELEMENTS,
) -> AutomorphismGroup:
    """
    Enumerate every kind-preserving automorphism of a PDG.

    Backtracking assigns nodes in index order and only tries images with the
    same (in-degree, out-degree, edge-kind multiset) signature.

    Two caps apply. `cap` bounds the node count before any search starts;
    `max_elements` bounds the group itself, so a graph within `cap` can still
    be rejected. An edgeless graph on 9 nodes has 9! = 362880 automorphisms
    and exceeds the default of 8! = 40320.

    Args:
        graph: dependence graph
        cap: largest node count searched exhaustively
        max_elements: largest group order materialized; the search stops
            as soon as one more element is found

    Returns:
        AutomorphismGroup whose axioms were verified

    Raises:
        EnumerationCapError: when the graph has more than `cap` nodes or its
            group more than `max_elements` elements; use sample_reordering
            instead
    """
    n = graph.n
    if n > cap:
        raise EnumerationCapError(f"graph has {n} nodes, above the enumeration cap {cap}; use sampling instead")
    start = time.perf_counter()
    signatures = _signatures(graph)
    candidates = [[w for w in range(n) if signatures[w] == signatures[v]] for v in range(n)]
    assignment = [0] * n
    used = [False] * n
    found: List[BlockPermutation] = []

    def consistent(v: int, w: int) -> bool:
        for u in range(v):
            image = assignment[u]
            if graph.edge_kinds(u, v) != graph.edge_kinds(image, w):
                return False
            if graph.edge_kinds(v, u) != graph.edge_kinds(w, image):
                return False
        return True

    def extend(v: int):
        if v == n:
            if len(found) >= max_elements:
                raise EnumerationCapError(
                    f"automorphism group exceeds {max_elements} elements; use sampling instead"
                )
            found.append(BlockPermutation(tuple(assignment)))
            return
        for w in candidates[v]:
            if used[w] or not consistent(v, w):
                continue
            used[w] = True
            assignment[v] = w
            extend(v + 1)
            used[w] = False

    extend(0)
    group = AutomorphismGroup(n, tuple(found))
    mode = group.verify_axioms()
    group = AutomorphismGroup(n, group.elements, mode)
    logger.debug(f"Enumerated |Aut| = {group.order} for n = {n} in {time.perf_counter() - start:.4f}s")
    return group


def _find_cycle(graph: Pdg, remaining: Sequence[int]) -> List[int]:
    pending = set(remaining)
    node = min(pending)
    seen: Dict[int, int] = {}
    path: List[int] = []
    # every remaining node keeps a remaining predecessor, so walking
    # predecessors must revisit a node
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        node = next(p for p in graph.predecessors(node) if p in pending)
    cycle = path[seen[node]:]
    cycle.reverse()
    return cycle + [cycle[0]]


def kahn_layers(graph: Pdg) -> List[List[int]]:
    """
    Partition nodes into Kahn layers (longest-path layering).

    Raises:
        CycleError: when the edges do not form a DAG
    """
    indegree = [graph.in_degree(v) for v in range(graph.n)]
    layer = [v for v in range(graph.n) if indegree[v] == 0]
    layers = []
    placed = 0
    while layer:
        layers.append(layer)
        placed += len(layer)
        following = []
        for v in layer:
            for w in graph.successors(v):
                indegree[w] -= 1
                if indegree[w] == 0:
                    following.append(w)
        layer = sorted(following)
    if placed != graph.n:
        raise CycleError(_find_cycle(graph, [v for v in range(graph.n) if indegree[v] > 0]))
    return layers


def sample_reordering(
    graph: Pdg,
    percent: float,
    seed: int,
    block_sizes: Optional[Sequence[int]] = None,
) -> BlockPermutation:
    """
    Sample a legal reordering by seeded topological sort.

    A `percent` share of the Kahn layers is picked; nodes in picked layers get
    a random priority, all other nodes keep their source index as priority.
    Kahn's algorithm then repeatedly emits the ready node with the smallest
    priority, so the result is always a linear extension and 0% is the
    identity.

    Args:
        graph: dependence graph (a DAG)
        percent: share of layers shuffled, 0..100
        seed: RNG seed
        block_sizes: optional tokens per instruction for the token action

    Returns:
        BlockPermutation that is a linear extension of the edge order

    Raises:
        CycleError: when the graph has a cycle
    """
    if not 0 <= percent <= 100:
        raise ValueError(f"percent must be within [0, 100], got {percent}")
    n = graph.n
    layers = kahn_layers(graph)
    rng = np.random.default_rng(seed)
    shuffled_count = int(math.floor(percent / 100.0 * len(layers) + 0.5))
    chosen = set(int(i) for i in rng.choice(len(layers), size=shuffled_count, replace=False)) if shuffled_count else set()

    priority = [0.0] * n
    for number, layer in enumerate(layers):
        for v in layer:
            priority[v] = float(rng.uniform(0, n)) if number in chosen else float(v)

    indegree = [graph.in_degree(v) for v in range(n)]
    ready = SortedList((priority[v], v) for v in range(n) if indegree[v] == 0)
    order = []
    while ready:
        _, v = ready.pop(0)
        order.append(v)
        for w in graph.successors(v):
            indegree[w] -= 1
            if indegree[w] == 0:
                ready.add((priority[w], w))
    return BlockPermutation.from_order(order, block_sizes)


def reordering_relationship(
    graph: Pdg,
    group: AutomorphismGroup,
    samples: Sequence[BlockPermutation],
) -> Dict[str, int]:
    """
    Relate Aut(PDG) to sampled linear extensions for one program.

    Returns:
        counts of automorphisms, of automorphisms that are linear extensions,
        of samples, of distinct samples, and of samples that are automorphisms
    """
    distinct = {pi.mapping for pi in samples}
    return {
        "automorphisms": group.order,
        "automorphisms_order_compatible": sum(is_linear_extension(graph, s) for s in group.elements),
        "samples": len(samples),
        "samples_distinct": len(distinct),
        "samples_automorphisms": sum(BlockPermutation(m) in group for m in distinct),
    }
