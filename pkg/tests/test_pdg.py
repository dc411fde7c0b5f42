"""
Unit tests for the PDG module
"""

import pytest
import numpy as np
import json
import os
import sys

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from program.ir import parse
from program.pdg import (
    NO_ANCESTOR,
    DistanceMatrix,
    Edge,
    EdgeKind,
    Pdg,
    build_pdg,
    degree_sequences,
    distance_matrix,
    expand_to_tokens,
    shortest_paths,
)
from program.symmetry import apply, sample_reordering


DIAMOND = "a = 1; b = a; c = a; d = b + c"


class TestBuildPdg:
    """Test cases for dependence edges"""

    def test_single_raw_edge(self):
        """Test the read-after-write edge of a=a+1;b=a"""
        graph = build_pdg(parse("a = a + 1; b = a"))
        assert graph.edges == (Edge(0, 1, EdgeKind.RAW),)

    def test_no_self_edge(self):
        """Test that reading and writing one variable adds no self edge"""
        graph = build_pdg(parse("a = a + 1"))
        assert graph.edges == ()

    def test_war_and_waw(self):
        """Test anti and output dependences"""
        graph = build_pdg(parse("b = a; a = 1; a = 2"))
        assert graph.has_edge(0, 1, EdgeKind.WAR)
        assert graph.has_edge(1, 2, EdgeKind.WAW)
        assert not graph.has_edge(0, 2)

    def test_memory_aliases_one_cell(self):
        """Test that every memory access shares one location"""
        graph = build_pdg(parse("store a; b = load; store c"))
        assert graph.has_edge(0, 1, EdgeKind.RAW)
        assert graph.has_edge(1, 2, EdgeKind.WAR)
        assert graph.has_edge(0, 2, EdgeKind.WAW)

    def test_independent_instructions(self):
        """Test that independent assignments share no edge"""
        assert build_pdg(parse("x = 2; y = 4")).edges == ()

    def test_barrier_sequencing(self):
        """Test that a label is pinned between its neighbours"""
        graph = build_pdg(parse("a = 1; L:; b = 2"))
        assert graph.has_edge(0, 1, EdgeKind.CTRL)
        assert graph.has_edge(1, 2, EdgeKind.CTRL)

    def test_forward_branch_control(self):
        """Test control edges of a forward branch"""
        graph = build_pdg(parse("if a goto L; b = 1; L:; c = 2"))
        ctrl = {(s, d) for s, d, k in graph.edges if k is EdgeKind.CTRL}
        assert ctrl == {(0, 1), (0, 2), (1, 2), (2, 3)}

    def test_edges_point_forward(self):
        """Test that every edge respects source order"""
        source = "k = 2; L:; a = a + 1; store a; k = k - 1; t = 0 < k; if t goto L; b = load"
        graph = build_pdg(parse(source))
        assert all(src < dst for src, dst, _ in graph.edges)

    def test_degrees_count_neighbours(self):
        """Test in/out degrees of the diamond"""
        graph = build_pdg(parse(DIAMOND))
        assert [graph.in_degree(v) for v in range(4)] == [0, 1, 1, 2]
        assert [graph.out_degree(v) for v in range(4)] == [2, 1, 1, 0]

    def test_empty_unit(self):
        """Test the graph of an empty unit"""
        graph = build_pdg(parse(""))
        assert graph.n == 0
        assert json.loads(graph.to_json()) == {"nodes": [], "edges": []}

    def test_to_json_is_stable(self):
        """Test byte-stable JSON with extra keys"""
        graph = build_pdg(parse(DIAMOND))
        first = graph.to_json({"config": {"seed": 1}})
        second = build_pdg(parse(DIAMOND)).to_json({"config": {"seed": 1}})
        assert first == second
        payload = json.loads(first)
        assert payload["config"] == {"seed": 1}
        assert {"src": 0, "dst": 1, "kind": "RAW"} in payload["edges"]

    def test_to_dot(self):
        """Test the DOT rendering"""
        text = build_pdg(parse("a = 1; b = a")).to_dot(comment="seed 3")
        assert text.startswith("// seed 3\ndigraph pdg {")
        assert 'n0 -> n1 [label="RAW"];' in text

    def test_relabel(self):
        """Test node renaming"""
        graph = Pdg(3, [Edge(0, 1, EdgeKind.RAW)])
        assert graph.relabel([2, 0, 1]).edges == (Edge(2, 0, EdgeKind.RAW),)

    def test_rejects_self_loop(self):
        """Test that self edges are refused"""
        with pytest.raises(ValueError):
            Pdg(2, [Edge(1, 1, EdgeKind.RAW)])

    def test_rebuild_after_reordering(self):
        """Test that a legal reordering rebuilds the relabelled graph"""
        unit = parse("a = 1; b = 2; c = a + b; d = 5; store d; e = load")
        graph = build_pdg(unit)
        for seed in range(10):
            pi = sample_reordering(graph, 100.0, seed)
            assert build_pdg(apply(pi, unit)) == graph.relabel(pi.mapping)


class TestDegreeSequences:
    """Test cases for per-token degree features"""

    def test_token_alignment(self):
        """Test that every token carries its instruction's degrees"""
        unit = parse("a = 1; b = a")
        degrees = degree_sequences(unit, build_pdg(unit))

        assert degrees.x_c == ("a", "=", "1", "b", "=", "a")
        assert degrees.x_pos == (1, 2, 3, 1, 2, 3)
        assert degrees.x_ind == (0, 0, 0, 1, 1, 1)
        assert degrees.x_outd == (1, 1, 1, 0, 0, 0)
        assert len(degrees) == 6

    def test_size_mismatch(self):
        """Test a graph of the wrong size"""
        with pytest.raises(ValueError):
            degree_sequences(parse("a = 1"), Pdg(2))


class TestDistanceMatrix:
    """Test cases for lowest-common-ancestor distances"""

    def test_diamond_entries(self):
        """Test hand-computed entries of the diamond"""
        distances = distance_matrix(build_pdg(parse(DIAMOND)))

        assert distances.entry(1, 2) == (1, 1)
        assert distances.entry(0, 3) == (0, 2)
        assert distances.entry(3, 0) == (2, 0)
        assert distances.entry(1, 3) == (0, 1)
        assert distances.entry(2, 2) == (0, 0)

    def test_no_common_ancestor(self):
        """Test the NONE sentinel"""
        distances = distance_matrix(build_pdg(parse("x = 2; y = 4")))
        assert distances.entry(0, 1) is None
        assert distances.positive[0, 1] == NO_ANCESTOR
        assert distances.entry(0, 0) == (0, 0)

    def test_chain(self):
        """Test distances along a chain"""
        distances = distance_matrix(build_pdg(parse("a = 1; b = a; c = b")))
        assert distances.entry(0, 2) == (0, 2)
        assert distances.entry(2, 0) == (2, 0)
        assert distances.entry(1, 2) == (0, 1)

    def test_swap_symmetry(self):
        """Test that entry (j, i) is entry (i, j) swapped"""
        source = "a = 1; b = a; c = a; d = b + c; store d; e = load; f = e + a"
        distances = distance_matrix(build_pdg(parse(source)))
        assert np.array_equal(distances.positive.T, distances.negative)

    def test_read_only(self):
        """Test that matrices cannot be mutated"""
        distances = distance_matrix(build_pdg(parse(DIAMOND)))
        with pytest.raises(ValueError):
            distances.positive[0, 0] = 5

    def test_permuted_diamond_is_invariant(self):
        """Test invariance under the diamond's automorphism"""
        distances = distance_matrix(build_pdg(parse(DIAMOND)))
        assert distances.permuted([0, 2, 1, 3]).equals(distances)
        assert not distances.permuted([3, 1, 2, 0]).equals(distances)

    def test_shortest_paths(self):
        """Test BFS distances with unreachable pairs"""
        dist = shortest_paths(build_pdg(parse("a = 1; b = a; c = b; d = 7")))
        assert dist[0, 2] == 2
        assert dist[2, 0] == -1
        assert dist[3, 3] == 0

    def test_expand_to_tokens(self):
        """Test token-level expansion"""
        unit = parse("a = 1; b = a")
        tokens = expand_to_tokens(distance_matrix(build_pdg(unit)), unit)

        assert tokens.n == 6
        assert tokens.entry(0, 2) == (0, 0)
        assert tokens.entry(0, 4) == (0, 1)
        assert tokens.entry(5, 1) == (1, 0)

    def test_rejects_non_square(self):
        """Test matrix shape validation"""
        with pytest.raises(ValueError):
            DistanceMatrix(np.zeros((2, 3)), np.zeros((2, 3)))
