"""
Graph file I/O.

Binary layout (inside the shared container, magic ``PCFG``):
    schema:  u32 field count, field strings; u32 relation count, (left, right) strings
    nodes:   u64 count, then per node u16 field position + value string
    edges:   columnar arrays u (u32), v (u32), relation (u16), count (u64), attribute (f32)
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from pcfgnn.binfmt import BinaryReader, BinaryWriter
from pcfgnn.errors import FormatError
from pcfgnn.graph.interaction import InteractionGraph
from pcfgnn.ingest.events import FeatureRef, RelationSchema

logger = logging.getLogger(__name__)

GRAPH_MAGIC = b"PCFG"
GRAPH_VERSION = 1


def graph_to_bytes(graph: InteractionGraph) -> bytes:
    writer = BinaryWriter(GRAPH_MAGIC, GRAPH_VERSION)
    schema = graph.schema
    writer.u32(len(schema.fields))
    for name in schema.fields:
        writer.string(name)
    writer.u32(schema.num_relations)
    for left, right in schema.relations:
        writer.string(left)
        writer.string(right)

    writer.u64(graph.num_nodes)
    for ref in graph.nodes:
        writer.u16(schema.field_position(ref.field))
        writer.string(ref.value)

    writer.array(graph.edge_u, "<u4")
    writer.array(graph.edge_v, "<u4")
    writer.array(graph.edge_relation, "<u2")
    writer.array(graph.edge_count, "<u8")
    writer.array(graph.edge_attribute, "<f4")
    return writer.to_bytes()


def graph_from_bytes(data: bytes, what: str = "graph file") -> InteractionGraph:
    reader = BinaryReader(data, GRAPH_MAGIC, GRAPH_VERSION, what=what)
    fields = tuple(reader.string() for _ in range(reader.u32()))
    relations = tuple((reader.string(), reader.string()) for _ in range(reader.u32()))
    schema = RelationSchema(fields=fields, relations=relations)

    nodes = []
    for _ in range(reader.u64()):
        position = reader.u16()
        if position >= len(fields):
            raise FormatError(f"{what} references field #{position} of {len(fields)}")
        nodes.append(FeatureRef(fields[position], reader.string()))

    u = reader.array("<u4").astype(np.int64)
    v = reader.array("<u4").astype(np.int64)
    relation = reader.array("<u2").astype(np.int64)
    count = reader.array("<u8").astype(np.int64)
    attribute = reader.array("<f4").astype(np.float32)
    reader.expect_end()

    if not len(u) == len(v) == len(relation) == len(count) == len(attribute):
        raise FormatError(f"{what} has edge columns of unequal length")
    if len(u) and (max(u.max(), v.max()) >= len(nodes) or relation.max() >= len(relations)):
        raise FormatError(f"{what} has an edge referencing an unknown node or relation")

    return InteractionGraph(
        schema=schema,
        nodes=tuple(nodes),
        edge_u=u,
        edge_v=v,
        edge_relation=relation,
        edge_count=count,
        edge_attribute=attribute,
    )


def save_graph(graph: InteractionGraph, path: str | Path) -> None:
    """Write the graph; identical graphs produce identical bytes."""
    Path(path).write_bytes(graph_to_bytes(graph))
    logger.info("saved graph (%d nodes, %d edges) to %s", graph.num_nodes, graph.num_edges, path)


def load_graph(path: str | Path) -> InteractionGraph:
    """
    Read a graph file.

    Raises:
        FormatError: bad magic, version mismatch, checksum failure or truncation.
    """
    path = Path(path)
    return graph_from_bytes(path.read_bytes(), what=str(path))


def graph_frame(graph: InteractionGraph) -> pd.DataFrame:
    """One row per edge: u_field, u_value, v_field, v_value, relation, count, attribute."""
    u_refs = [graph.nodes[i] for i in graph.edge_u.tolist()]
    v_refs = [graph.nodes[i] for i in graph.edge_v.tolist()]
    return pd.DataFrame(
        {
            "u_field": [r.field for r in u_refs],
            "u_value": [r.value for r in u_refs],
            "v_field": [r.field for r in v_refs],
            "v_value": [r.value for r in v_refs],
            "relation": graph.edge_relation,
            "count": graph.edge_count,
            "attribute": graph.edge_attribute.astype(np.float64),
        }
    )


def export_graph_tsv(graph: InteractionGraph, path: str | Path) -> None:
    graph_frame(graph).to_csv(path, sep="\t", index=False, lineterminator="\n", float_format="%.9g")
