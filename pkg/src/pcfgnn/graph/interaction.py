"""
The heterogeneous feature-interaction graph.

Nodes are features (one global index space across all fields), edges are
observed cross pairs, and each edge carries the pair's empirical click rate
``click_count / count`` as its attribute. Edges are undirected: both
endpoints see each other under the edge's relation.
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from pcfgnn.errors import ContractError
from pcfgnn.ingest.events import FeatureRef, PairKey, PairStats, RelationSchema

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Edge:
    """One observed cross pair; ``u`` lies in the relation's left field."""

    u: int
    v: int
    relation: int
    count: int
    attribute: float

    @property
    def click_count(self) -> int:
        return int(round(self.attribute * self.count))


class Adjacency:
    """
    Per-relation neighbor lists in CSR form.

    ``indices[r][indptr[r][i]:indptr[r][i + 1]]`` is N_r(i) in ascending order;
    ``targets[r]`` repeats each node id once per neighbor, so the pair
    ``(targets[r][k], indices[r][k])`` enumerates every directed neighbor link.
    """

    def __init__(self, num_nodes: int, indptr: list[np.ndarray], indices: list[np.ndarray]):
        self.num_nodes = num_nodes
        self.indptr = tuple(indptr)
        self.indices = tuple(indices)
        self.degrees = tuple(np.diff(p) for p in self.indptr)
        self.targets = tuple(
            np.repeat(np.arange(num_nodes, dtype=np.int64), d) for d in self.degrees
        )

    @property
    def num_relations(self) -> int:
        return len(self.indptr)

    @classmethod
    def from_edges(
        cls, num_nodes: int, num_relations: int, u: np.ndarray, v: np.ndarray, relation: np.ndarray
    ) -> "Adjacency":
        indptr, indices = [], []
        for r in range(num_relations):
            mask = relation == r
            tgt = np.concatenate([u[mask], v[mask]]).astype(np.int64)
            src = np.concatenate([v[mask], u[mask]]).astype(np.int64)
            order = np.lexsort((src, tgt))
            counts = np.bincount(tgt, minlength=num_nodes)
            indptr.append(np.concatenate([[0], np.cumsum(counts)]).astype(np.int64))
            indices.append(src[order])
        return cls(num_nodes, indptr, indices)

    def neighbors(self, i: int, r: int) -> np.ndarray:
        return self.indices[r][self.indptr[r][i] : self.indptr[r][i + 1]]

    def sample(self, fanout: int, rng: np.random.Generator) -> "Adjacency":
        """
        Keep at most ``fanout`` neighbors per node and relation.

        Nodes are visited in ascending order and relations in index order, so
        the result depends only on the generator state.
        """
        indptr, indices = [], []
        for r in range(self.num_relations):
            deg = self.degrees[r]
            keep = np.ones(len(self.indices[r]), dtype=bool)
            for i in np.flatnonzero(deg > fanout):
                start = self.indptr[r][i]
                drop = rng.choice(deg[i], size=deg[i] - fanout, replace=False)
                keep[start + drop] = False
            new_deg = np.minimum(deg, fanout)
            indptr.append(np.concatenate([[0], np.cumsum(new_deg)]).astype(np.int64))
            indices.append(self.indices[r][keep])
        return Adjacency(self.num_nodes, indptr, indices)

    def receptive_field(self, active: np.ndarray) -> np.ndarray:
        """``active`` plus every neighbor (under any relation) of an active node."""
        grown = active.copy()
        for r in range(self.num_relations):
            grown[self.indices[r][active[self.targets[r]]]] = True
        return grown


@dataclass(frozen=True, eq=False)
class InteractionGraph:
    """
    Immutable interaction graph.

    Nodes are ordered by (schema field position, value); edges by
    (relation, u, v). Edge arrays are parallel: ``edge_u[k]``, ``edge_v[k]``,
    ``edge_relation[k]``, ``edge_count[k]``, ``edge_attribute[k]`` (float32).
    """

    schema: RelationSchema
    nodes: tuple[FeatureRef, ...]
    edge_u: np.ndarray
    edge_v: np.ndarray
    edge_relation: np.ndarray
    edge_count: np.ndarray
    edge_attribute: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edge_u)

    @property
    def num_relations(self) -> int:
        return self.schema.num_relations

    @cached_property
    def node_index(self) -> dict[FeatureRef, int]:
        return {ref: i for i, ref in enumerate(self.nodes)}

    @cached_property
    def adjacency(self) -> Adjacency:
        return Adjacency.from_edges(
            self.num_nodes, self.num_relations, self.edge_u, self.edge_v, self.edge_relation
        )

    @cached_property
    def _pair_index(self) -> dict[tuple[int, int], int]:
        lookup: dict[tuple[int, int], int] = {}
        for k, (u, v) in enumerate(zip(self.edge_u.tolist(), self.edge_v.tolist(), strict=True)):
            lookup[(u, v)] = k
            lookup[(v, u)] = k
        return lookup

    def node_id(self, ref: FeatureRef) -> int | None:
        return self.node_index.get(ref)

    def field_of_node(self, i: int) -> str:
        return self.nodes[i].field

    @property
    def edges(self) -> list[Edge]:
        return [self.edge(k) for k in range(self.num_edges)]

    def edge(self, k: int) -> Edge:
        return Edge(
            u=int(self.edge_u[k]),
            v=int(self.edge_v[k]),
            relation=int(self.edge_relation[k]),
            count=int(self.edge_count[k]),
            attribute=float(self.edge_attribute[k]),
        )

    def edge_index(self, u: int, v: int) -> int | None:
        """Index of the edge joining two node ids, in either orientation."""
        return self._pair_index.get((u, v))

    def has_pair(self, left: FeatureRef, right: FeatureRef) -> bool:
        u, v = self.node_id(left), self.node_id(right)
        return u is not None and v is not None and (u, v) in self._pair_index

    def field_node_counts(self) -> dict[str, int]:
        """Nodes per field (N1, N2, ... in field order)."""
        counts = {f: 0 for f in self.schema.fields}
        for ref in self.nodes:
            counts[ref.field] += 1
        return counts

    def relation_edge_counts(self) -> list[int]:
        return np.bincount(self.edge_relation, minlength=self.num_relations).astype(int).tolist()

    def global_mean_attribute(self) -> float:
        """Unweighted mean edge attribute; 0.5 on an empty graph."""
        if self.num_edges == 0:
            return 0.5
        return float(np.mean(self.edge_attribute, dtype=np.float64))

    def select_edges(self, indices: np.ndarray) -> "InteractionGraph":
        """Same node table, only the given edges (kept in ascending edge order)."""
        keep = np.sort(np.asarray(indices, dtype=np.int64))
        return InteractionGraph(
            schema=self.schema,
            nodes=self.nodes,
            edge_u=self.edge_u[keep],
            edge_v=self.edge_v[keep],
            edge_relation=self.edge_relation[keep],
            edge_count=self.edge_count[keep],
            edge_attribute=self.edge_attribute[keep],
        )


def empty_graph(schema: RelationSchema) -> InteractionGraph:
    return InteractionGraph(
        schema=schema,
        nodes=(),
        edge_u=np.zeros(0, dtype=np.int64),
        edge_v=np.zeros(0, dtype=np.int64),
        edge_relation=np.zeros(0, dtype=np.int64),
        edge_count=np.zeros(0, dtype=np.int64),
        edge_attribute=np.zeros(0, dtype=np.float32),
    )


def build_graph(
    stats: Mapping[PairKey, PairStats], schema: RelationSchema, min_count: int = 1
) -> InteractionGraph:
    """
    Materialize the graph from pair statistics.

    One node per distinct feature in a kept pair, one edge per pair whose
    count reaches ``min_count`` (default 1 keeps everything), attribute
    ``click_count / count`` rounded once to float32.
    """
    kept = [s for s in stats.values() if s.count >= min_count]
    if len(kept) < len(stats):
        logger.info("pruned %d pairs below min_count=%d", len(stats) - len(kept), min_count)
    if not kept:
        return empty_graph(schema)

    refs = {s.pair_key.left for s in kept} | {s.pair_key.right for s in kept}
    nodes = tuple(sorted(refs, key=lambda ref: (schema.field_position(ref.field), ref.value)))
    index = {ref: i for i, ref in enumerate(nodes)}

    rows = sorted(
        (
            schema.relation_of(s.pair_key.left.field, s.pair_key.right.field),
            index[s.pair_key.left],
            index[s.pair_key.right],
            s.count,
            s.click_count,
        )
        for s in kept
    )
    table = np.array(rows, dtype=np.int64)
    counts = table[:, 3]
    attribute = (table[:, 4].astype(np.float64) / counts).astype(np.float32)

    return InteractionGraph(
        schema=schema,
        nodes=nodes,
        edge_u=table[:, 1].copy(),
        edge_v=table[:, 2].copy(),
        edge_relation=table[:, 0].copy(),
        edge_count=counts.copy(),
        edge_attribute=attribute,
    )


def neighbors(graph: InteractionGraph, i: int, r: int) -> list[int]:
    """
    N_r(i) in ascending node id order.

    Raises:
        ContractError: node or relation index out of range.
    """
    if not 0 <= i < graph.num_nodes:
        raise ContractError(f"node {i} out of range [0, {graph.num_nodes})")
    if not 0 <= r < graph.num_relations:
        raise ContractError(f"relation {r} out of range [0, {graph.num_relations})")
    return graph.adjacency.neighbors(i, r).tolist()
