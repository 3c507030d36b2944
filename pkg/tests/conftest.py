"""
Shared fixtures: small schemas, logs and graphs.
"""

import numpy as np
import pytest

from pcfgnn.graph.interaction import InteractionGraph, build_graph
from pcfgnn.ingest.events import EventRecord, FeatureRef, RelationSchema, accumulate_stats


def make_records(rows: list[tuple[int, ...]], schema: RelationSchema) -> list[EventRecord]:
    """Records from ``(label, value1, value2, ...)`` tuples in schema field order."""
    return [
        EventRecord(
            label=row[0],
            features=tuple(FeatureRef(f, str(v)) for f, v in zip(schema.fields, row[1:], strict=True)),
        )
        for row in rows
    ]


def random_records(
    rng: np.random.Generator, schema: RelationSchema, sizes: dict[str, int], n: int
) -> list[EventRecord]:
    rows = []
    for _ in range(n):
        values = [f"{f[0]}{rng.integers(sizes[f])}" for f in schema.fields]
        rows.append((int(rng.integers(2)), *values))
    return make_records(rows, schema)


def random_graph(seed: int, num_relations: int = 1, max_nodes: int = 10) -> InteractionGraph:
    """A small random graph over up to three fields with at most ``max_nodes`` nodes."""
    rng = np.random.default_rng(seed)
    if num_relations == 1:
        schema = RelationSchema(fields=("user", "item"), relations=(("user", "item"),))
        sizes = {"user": max_nodes // 2, "item": max_nodes - max_nodes // 2}
    else:
        schema = RelationSchema(
            fields=("user", "item", "ctx"), relations=(("user", "item"), ("item", "ctx"))
        )
        third = max_nodes // 3
        sizes = {"user": third, "item": third, "ctx": max_nodes - 2 * third}
    records = random_records(rng, schema, sizes, 40)
    return build_graph(accumulate_stats(records, schema), schema)


@pytest.fixture
def schema() -> RelationSchema:
    return RelationSchema(fields=("user", "item"), relations=(("user", "item"),))


@pytest.fixture
def genre_schema() -> RelationSchema:
    return RelationSchema(fields=("user", "genres"), relations=(("user", "genres"),))


@pytest.fixture
def tiny_records(schema: RelationSchema) -> list[EventRecord]:
    return make_records(
        [
            (1, "u1", "i1"),
            (0, "u1", "i1"),
            (1, "u1", "i2"),
            (0, "u2", "i1"),
            (0, "u2", "i3"),
            (1, "u3", "i2"),
            (1, "u3", "i2"),
            (0, "u3", "i3"),
        ],
        schema,
    )


@pytest.fixture
def tiny_graph(tiny_records: list[EventRecord], schema: RelationSchema) -> InteractionGraph:
    return build_graph(accumulate_stats(tiny_records, schema), schema)
