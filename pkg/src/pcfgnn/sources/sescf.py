"""
Statistical cross-feature table: the materialized <pair, click rate> mapping.

Besides lookup, this module does the analytic memory accounting that
contrasts the table (one entry per observed pair) with serving inferred
values from per-node embeddings (one row per feature).
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from pcfgnn.errors import ContractError
from pcfgnn.graph.interaction import InteractionGraph
from pcfgnn.ingest.events import FeatureRef, PairKey, RelationSchema
from pcfgnn.model.params import PcfParams
from pcfgnn.sources.base import CrossFeatureSource

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SescfTable:
    """One entry per graph edge, keyed by the pair in relation orientation."""

    schema: RelationSchema
    entries: dict[PairKey, float]
    relation_counts: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def mean_attribute(self) -> float:
        """Unweighted mean of the stored values; 0.5 for an empty table."""
        if not self.entries:
            return 0.5
        return float(np.mean(np.fromiter(self.entries.values(), dtype=np.float64)))


def build_table(graph: InteractionGraph) -> SescfTable:
    """Mirror every edge of ``graph`` with its attribute."""
    entries = {
        PairKey(graph.nodes[e.u], graph.nodes[e.v]): e.attribute for e in graph.edges
    }
    return SescfTable(
        schema=graph.schema,
        entries=entries,
        relation_counts=tuple(graph.relation_edge_counts()),
    )


def lookup(table: SescfTable, u: FeatureRef, v: FeatureRef) -> float | None:
    """The stored click rate of a pair (either orientation), or None when it was never observed."""
    found = table.entries.get(PairKey(u, v))
    if found is None:
        found = table.entries.get(PairKey(v, u))
    return found


class SescfSource(CrossFeatureSource):
    """Cross features read from the table; misses take the fallback."""

    variant = "sescf"

    def __init__(self, table: SescfTable, fallback: float | None = None):
        super().__init__(table.schema, table.mean_attribute() if fallback is None else fallback)
        self.table = table

    def resolve_pair(self, left: FeatureRef, right: FeatureRef) -> float | None:
        return lookup(self.table, left, right)


class CostModel(BaseModel):
    """
    Byte costs used by the memory report (``cost.*`` keys).

    A table key costs the UTF-8 lengths of both values plus one field id per
    side unless ``key_bytes`` fixes it. A node key costs its value length plus
    one field id unless ``node_key_bytes`` fixes it.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    key_bytes: int | None = Field(None, ge=0)
    field_id_bytes: int = Field(1, ge=0)
    value_bytes: int = Field(4, ge=0)
    entry_overhead: int = Field(16, ge=0)
    float_bytes: int = Field(4, ge=1)
    node_key_bytes: int | None = Field(None, ge=0)

    def table_key_bytes(self, key: PairKey) -> int:
        if self.key_bytes is not None:
            return self.key_bytes
        return (
            len(key.left.value.encode("utf-8"))
            + len(key.right.value.encode("utf-8"))
            + 2 * self.field_id_bytes
        )

    def node_key_cost(self, ref: FeatureRef) -> int:
        if self.node_key_bytes is not None:
            return self.node_key_bytes
        return len(ref.value.encode("utf-8")) + self.field_id_bytes


@dataclass
class MemoryReport:
    """Analytic serving cost of the table versus inferred cross features."""

    sescf_bytes: int
    pcf_bytes: int
    ratio: float
    ratio_defined: bool
    breakdown: dict[str, int] = field(default_factory=dict)
    num_entries: int = 0
    num_nodes: int = 0
    embedding_dim: int = 0

    @property
    def saving(self) -> float:
        """Relative reduction of pcf over sescf (0.56 means 56% smaller)."""
        return 1.0 - self.ratio if self.ratio_defined else float("nan")

    def as_dict(self) -> dict[str, int | float | bool]:
        values: dict[str, int | float | bool] = {
            "sescf_bytes": self.sescf_bytes,
            "pcf_bytes": self.pcf_bytes,
            "ratio": self.ratio,
            "ratio_defined": self.ratio_defined,
            "num_entries": self.num_entries,
            "num_nodes": self.num_nodes,
            "embedding_dim": self.embedding_dim,
        }
        values.update(self.breakdown)
        return values

    def to_kv(self) -> str:
        """Machine-readable ``key=value`` lines."""
        lines = []
        for key, value in self.as_dict().items():
            if isinstance(value, bool):
                value = str(value).lower()
            elif isinstance(value, float):
                value = "nan" if np.isnan(value) else f"{value:.9g}"
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        """Aligned human-readable report."""
        rows = [
            ("table entries", f"{self.num_entries:,}"),
            ("nodes", f"{self.num_nodes:,}"),
            ("embedding dim", str(self.embedding_dim)),
            *((name, f"{size:,} B") for name, size in self.breakdown.items()),
            ("sescf total", f"{self.sescf_bytes:,} B"),
            ("pcf total", f"{self.pcf_bytes:,} B"),
            ("pcf / sescf", f"{self.ratio:.6f}" if self.ratio_defined else "undefined (empty table)"),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:>20}" for name, value in rows) + "\n"


def memory_report(
    table: SescfTable,
    params: PcfParams,
    cost_model: CostModel | None = None,
    nodes: Sequence[FeatureRef] | None = None,
) -> MemoryReport:
    """
    Byte accounting for both serving strategies.

    sescf = sum over entries of (key + value + overhead);
    pcf   = N * d_K floats + CrossNet (2 d_K + 1) floats + node keys.

    ``nodes`` supplies the node table for variable-length node keys; it may be
    omitted when the cost model fixes ``node_key_bytes``. A model without
    nodes serves nothing and costs zero bytes.
    """
    cost = cost_model or CostModel()
    n, d = params.num_nodes, params.output_dim
    if cost.node_key_bytes is None and nodes is None:
        raise ContractError("memory_report needs the node table unless node_key_bytes is fixed")

    keys = sum(cost.table_key_bytes(key) for key in table.entries)
    values = len(table) * cost.value_bytes
    overhead = len(table) * cost.entry_overhead
    embeddings = n * d * cost.float_bytes
    crossnet = (2 * d + 1) * cost.float_bytes if n else 0
    if cost.node_key_bytes is not None:
        node_keys = n * cost.node_key_bytes
    else:
        node_keys = sum(cost.node_key_cost(ref) for ref in nodes or ())

    breakdown = {
        "sescf_keys": keys,
        "sescf_values": values,
        "sescf_overhead": overhead,
        "pcf_embeddings": embeddings,
        "pcf_crossnet": crossnet,
        "pcf_node_keys": node_keys,
    }
    sescf_bytes = keys + values + overhead
    pcf_bytes = embeddings + crossnet + node_keys
    defined = sescf_bytes > 0
    if not defined:
        logger.warning("memory ratio undefined: the table costs zero bytes")
    return MemoryReport(
        sescf_bytes=sescf_bytes,
        pcf_bytes=pcf_bytes,
        ratio=pcf_bytes / sescf_bytes if defined else float("nan"),
        ratio_defined=defined,
        breakdown=breakdown,
        num_entries=len(table),
        num_nodes=n,
        embedding_dim=d,
    )


def table_frame(table: SescfTable) -> pd.DataFrame:
    """One row per entry: u_field, u_value, v_field, v_value, attribute."""
    keys = list(table.entries)
    return pd.DataFrame(
        {
            "u_field": [k.left.field for k in keys],
            "u_value": [k.left.value for k in keys],
            "v_field": [k.right.field for k in keys],
            "v_value": [k.right.value for k in keys],
            "attribute": np.fromiter(table.entries.values(), dtype=np.float64, count=len(keys)),
        }
    )


def export_table_tsv(table: SescfTable, path: str | Path) -> None:
    table_frame(table).to_csv(path, sep="\t", index=False, lineterminator="\n", float_format="%.9g")
