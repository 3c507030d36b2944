"""
Event-log ingestion and pair statistics.
"""

from pcfgnn.ingest.events import (
    EventRecord,
    FeatureRef,
    PairKey,
    PairStats,
    RelationSchema,
    accumulate_sharded,
    accumulate_stats,
    load_schema,
    merge_stats,
    parse_event_log,
    read_event_log,
    write_event_log,
)

__all__ = [
    "EventRecord",
    "FeatureRef",
    "PairKey",
    "PairStats",
    "RelationSchema",
    "accumulate_sharded",
    "accumulate_stats",
    "load_schema",
    "merge_stats",
    "parse_event_log",
    "read_event_log",
    "write_event_log",
]
