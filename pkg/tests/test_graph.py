"""
Tests for the interaction graph and its file format.
"""

import numpy as np
import pytest

from pcfgnn.errors import ContractError, FormatError
from pcfgnn.graph import build_graph, load_graph, neighbors, save_graph
from pcfgnn.graph.storage import graph_frame, graph_from_bytes, graph_to_bytes
from pcfgnn.ingest.events import FeatureRef, RelationSchema, accumulate_stats
from pcfgnn.rng import stream
from tests.conftest import random_graph, random_records


class TestBuildGraph:
    """Tests for graph construction."""

    def test_node_order(self, tiny_graph):
        """Nodes are ordered by field position, then value."""
        assert [str(ref) for ref in tiny_graph.nodes] == [
            "user=u1", "user=u2", "user=u3", "item=i1", "item=i2", "item=i3",
        ]

    def test_edges_and_attributes(self, tiny_graph):
        """One edge per observed pair with its click rate as float32."""
        assert tiny_graph.num_edges == 6
        assert tiny_graph.edge_attribute.dtype == np.float32
        k = tiny_graph.edge_index(0, 3)
        edge = tiny_graph.edge(k)
        assert (edge.count, edge.attribute, edge.click_count) == (2, 0.5, 1)

    def test_edge_order(self, tiny_graph):
        """Edges are sorted by (relation, u, v)."""
        keys = list(zip(tiny_graph.edge_relation, tiny_graph.edge_u, tiny_graph.edge_v, strict=True))
        assert keys == sorted(keys)

    def test_min_count_prunes(self, tiny_records, schema):
        """Pairs below min_count are dropped together with orphaned nodes."""
        graph = build_graph(accumulate_stats(tiny_records, schema), schema, min_count=2)
        assert graph.num_edges == 2
        assert graph.num_nodes == 4

    def test_empty_stats(self, schema):
        """No events give an empty graph with the neutral mean."""
        graph = build_graph({}, schema)
        assert (graph.num_nodes, graph.num_edges) == (0, 0)
        assert graph.global_mean_attribute() == 0.5

    def test_matches_brute_force(self):
        """Random logs: every pair becomes exactly one edge with its tallies."""
        schema = RelationSchema(fields=("user", "item", "ctx"), relations=(("user", "item"), ("item", "ctx")))
        for seed in range(100):
            rng = np.random.default_rng(seed)
            records = random_records(rng, schema, {"user": 5, "item": 4, "ctx": 3}, int(rng.integers(1, 201)))
            stats = accumulate_stats(records, schema)
            graph = build_graph(stats, schema)
            assert graph.num_edges == len(stats)
            for key, s in stats.items():
                k = graph.edge_index(graph.node_id(key.left), graph.node_id(key.right))
                edge = graph.edge(k)
                assert edge.count == s.count
                assert edge.attribute == np.float32(s.click_count / s.count)
                assert edge.relation == schema.relation_of(key.left.field, key.right.field)

    def test_has_pair(self, tiny_graph):
        """has_pair sees edges in either orientation and nothing else."""
        u1, i1, i3 = FeatureRef("user", "u1"), FeatureRef("item", "i1"), FeatureRef("item", "i3")
        assert tiny_graph.has_pair(u1, i1)
        assert tiny_graph.has_pair(i1, u1)
        assert not tiny_graph.has_pair(u1, i3)
        assert not tiny_graph.has_pair(u1, FeatureRef("item", "unknown"))

    def test_field_node_counts(self, tiny_graph):
        """Per-field node counts."""
        assert tiny_graph.field_node_counts() == {"user": 3, "item": 3}


class TestNeighbors:
    """Tests for neighbor lists."""

    def test_symmetric(self, tiny_graph):
        """Every edge appears in both endpoints' lists."""
        assert neighbors(tiny_graph, 0, 0) == [3, 4]
        assert neighbors(tiny_graph, 3, 0) == [0, 1]

    def test_out_of_range(self, tiny_graph):
        """Bad node or relation indexes are contract errors."""
        with pytest.raises(ContractError):
            neighbors(tiny_graph, 99, 0)
        with pytest.raises(ContractError):
            neighbors(tiny_graph, 0, 1)

    def test_relations_are_separate(self):
        """A node's neighbors under one relation exclude the other's."""
        graph = random_graph(5, num_relations=2, max_nodes=9)
        for i in range(graph.num_nodes):
            for r in range(2):
                for j in neighbors(graph, i, r):
                    k = graph.edge_index(i, j)
                    assert graph.edge_relation[k] == r

    def test_sample_caps_fanout(self):
        """Sampling keeps at most fanout neighbors and is seeded."""
        graph = random_graph(1, max_nodes=10)
        a = graph.adjacency.sample(2, stream(0, "test"))
        b = graph.adjacency.sample(2, stream(0, "test"))
        assert a.degrees[0].max() <= 2
        for i in range(graph.num_nodes):
            assert set(a.neighbors(i, 0)) <= set(graph.adjacency.neighbors(i, 0))
            np.testing.assert_array_equal(a.neighbors(i, 0), b.neighbors(i, 0))

    def test_receptive_field(self, tiny_graph):
        """One hop from u1 reaches its two items."""
        active = np.zeros(tiny_graph.num_nodes, dtype=bool)
        active[0] = True
        assert np.flatnonzero(tiny_graph.adjacency.receptive_field(active)).tolist() == [0, 3, 4]


class TestStorage:
    """Tests for the graph file."""

    def test_save_and_load(self, tmp_path, tiny_graph):
        """A saved graph loads with identical nodes and edge arrays."""
        path = tmp_path / "g.pcfg"
        save_graph(tiny_graph, path)
        loaded = load_graph(path)
        assert loaded.nodes == tiny_graph.nodes
        assert loaded.schema == tiny_graph.schema
        np.testing.assert_array_equal(loaded.edge_attribute, tiny_graph.edge_attribute)
        np.testing.assert_array_equal(loaded.edge_count, tiny_graph.edge_count)

    def test_deterministic_bytes(self, tiny_graph):
        """Serializing twice gives identical bytes."""
        assert graph_to_bytes(tiny_graph) == graph_to_bytes(tiny_graph)

    def test_corruption_detected(self, tiny_graph):
        """A flipped payload byte fails the checksum."""
        data = bytearray(graph_to_bytes(tiny_graph))
        data[10] ^= 0xFF
        with pytest.raises(FormatError, match="checksum"):
            graph_from_bytes(bytes(data))

    def test_bad_magic(self, tiny_graph):
        """Another container's magic is rejected."""
        data = b"PCFM" + graph_to_bytes(tiny_graph)[4:]
        with pytest.raises(FormatError, match="magic"):
            graph_from_bytes(data)

    def test_truncated(self, tiny_graph):
        """A truncated file is a format error."""
        with pytest.raises(FormatError):
            graph_from_bytes(graph_to_bytes(tiny_graph)[:20])

    def test_frame_columns(self, tiny_graph):
        """The TSV view has one row per edge."""
        frame = graph_frame(tiny_graph)
        assert list(frame.columns) == ["u_field", "u_value", "v_field", "v_value", "relation", "count", "attribute"]
        assert len(frame) == tiny_graph.num_edges
