"""
Click-event log parsing and pair statistics.

An event log is UTF-8 TSV: a header ``label<TAB>field1<TAB>field2...`` and one
data line per impression ``label<TAB>value1<TAB>value2...``. A cell may carry
its field name as a prefix (``user=U1``) and may hold several values
separated by ``|`` (multi-valued fields such as genre lists).
"""

import logging
from collections import Counter
from collections.abc import Iterable, Iterator, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path
from typing import NamedTuple, TextIO

from pcfgnn.config import ConfigValues, load_config_file
from pcfgnn.errors import ConfigError, ContractError, ParseError

logger = logging.getLogger(__name__)

MULTI_VALUE_SEPARATOR = "|"


@dataclass(frozen=True, order=True)
class FeatureRef:
    """One categorical feature: a (field, value) pair. Also the identity of a graph node."""

    field: str
    value: str

    def expand(self) -> tuple["FeatureRef", ...]:
        """Split a multi-valued cell into one reference per value."""
        if MULTI_VALUE_SEPARATOR not in self.value:
            return (self,)
        parts = [v for v in self.value.split(MULTI_VALUE_SEPARATOR) if v]
        return tuple(FeatureRef(self.field, v) for v in parts)

    def __str__(self) -> str:
        return f"{self.field}={self.value}"


@dataclass(frozen=True)
class EventRecord:
    """One labeled impression, with features in schema field order."""

    label: int
    features: tuple[FeatureRef, ...]

    def feature(self, field_name: str) -> FeatureRef:
        for ref in self.features:
            if ref.field == field_name:
                return ref
        raise KeyError(field_name)


class PairKey(NamedTuple):
    """A cross pair oriented as its relation declares it (left field, right field)."""

    left: FeatureRef
    right: FeatureRef


@dataclass(frozen=True)
class PairStats:
    """Co-occurrence count and click count of one cross pair."""

    pair_key: PairKey
    count: int
    click_count: int

    def __post_init__(self) -> None:
        if self.count < 1 or not 0 <= self.click_count <= self.count:
            raise ContractError(
                f"invalid pair stats for {self.pair_key}: count={self.count}, clicks={self.click_count}"
            )


@dataclass(frozen=True)
class RelationSchema:
    """
    Declared fields and the field pairs that form relations.

    The position of a relation in ``relations`` is its relation index r.
    """

    fields: tuple[str, ...]
    relations: tuple[tuple[str, str], ...]
    _relation_index: dict[tuple[str, str], int] = field(
        init=False, repr=False, compare=False, hash=False
    )

    def __post_init__(self) -> None:
        if len(set(self.fields)) != len(self.fields):
            raise ConfigError(f"duplicate field in schema: {list(self.fields)}")
        seen: set[frozenset[str]] = set()
        index: dict[tuple[str, str], int] = {}
        for r, (a, b) in enumerate(self.relations):
            if a not in self.fields or b not in self.fields:
                raise ConfigError(f"relation {a},{b} references an undeclared field")
            if a == b:
                raise ConfigError(f"relation {a},{b} must join two distinct fields")
            key = frozenset((a, b))
            if key in seen:
                raise ConfigError(f"duplicate relation {a},{b}")
            seen.add(key)
            index[(a, b)] = r
        object.__setattr__(self, "_relation_index", index)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def relation_of(self, left_field: str, right_field: str) -> int:
        """Relation index of an oriented field pair."""
        return self._relation_index[(left_field, right_field)]

    def field_position(self, field_name: str) -> int:
        return self.fields.index(field_name)

    @classmethod
    def from_config(cls, values: Mapping[str, list[str]]) -> "RelationSchema":
        """Build from parsed config values (``fields=a,b,c`` and repeated ``relation=a,b``)."""
        raw_fields = values.get("fields")
        if not raw_fields:
            raise ConfigError("schema config is missing 'fields='")
        fields = tuple(f.strip() for f in raw_fields[-1].split(",") if f.strip())
        relations = []
        for raw in values.get("relation", []):
            parts = [p.strip() for p in raw.split(",")]
            if len(parts) != 2 or not all(parts):
                raise ConfigError(f"relation must be 'fieldA,fieldB', got {raw!r}")
            relations.append((parts[0], parts[1]))
        if not relations:
            raise ConfigError("schema config declares no 'relation=' entries")
        return cls(fields=fields, relations=tuple(relations))

    def to_config_text(self) -> str:
        lines = [f"fields={','.join(self.fields)}"]
        lines += [f"relation={a},{b}" for a, b in self.relations]
        return "\n".join(lines) + "\n"


def load_schema(path: str | Path) -> RelationSchema:
    """Load a schema from a key=value config file."""
    values: ConfigValues = load_config_file(path)
    return RelationSchema.from_config(values)


def _parse_cell(cell: str, column_field: str, schema: RelationSchema, line_no: int) -> FeatureRef:
    if "=" in cell:
        prefix, value = cell.split("=", 1)
        if prefix not in schema.fields:
            raise ParseError(f"unknown field {prefix!r}", line_no)
        if prefix != column_field:
            raise ParseError(f"field {prefix!r} in column {column_field!r}", line_no)
    else:
        value = cell
    ref = FeatureRef(column_field, value)
    if not value or not ref.expand():
        raise ParseError(f"empty value for field {column_field!r}", line_no)
    return ref


def parse_event_log(stream: TextIO | Iterable[str], schema: RelationSchema) -> Iterator[EventRecord]:
    """
    Yield one ``EventRecord`` per data line, in input order.

    The header must name every schema field exactly once (in any order);
    records are re-ordered into schema field order. Blank lines are skipped.

    Raises:
        ParseError: wrong column count, non-binary label, unknown or missing
            field, naming the 1-based line number.
    """
    lines = iter(stream)
    header_line = None
    line_no = 0
    for raw in lines:
        line_no += 1
        if raw.strip():
            header_line = raw.rstrip("\r\n")
            break
    if header_line is None:
        return

    header = header_line.split("\t")
    if header[0] != "label":
        raise ParseError("header must start with 'label'", line_no)
    columns = header[1:]
    for name in columns:
        if name not in schema.fields:
            raise ParseError(f"unknown field {name!r}", line_no)
    if len(set(columns)) != len(columns):
        raise ParseError("duplicate field in header", line_no)
    missing = [f for f in schema.fields if f not in columns]
    if missing:
        raise ParseError(f"header is missing field(s) {missing}", line_no)
    order = [columns.index(f) for f in schema.fields]

    for raw in lines:
        line_no += 1
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} columns, found {len(cells)}", line_no)
        if cells[0] not in ("0", "1"):
            raise ParseError(f"non-binary label {cells[0]!r}", line_no)
        parsed = [_parse_cell(c, columns[i], schema, line_no) for i, c in enumerate(cells[1:])]
        yield EventRecord(label=int(cells[0]), features=tuple(parsed[i] for i in order))


def read_event_log(path: str | Path, schema: RelationSchema) -> list[EventRecord]:
    """Parse a whole log file into memory."""
    with open(path, encoding="utf-8") as handle:
        return list(parse_event_log(handle, schema))


def write_event_log(path: str | Path, records: Iterable[EventRecord], schema: RelationSchema) -> int:
    """Write records in the TSV event-log format; returns the number of data lines."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\t".join(["label", *schema.fields]) + "\n")
        for record in records:
            handle.write("\t".join([str(record.label), *(ref.value for ref in record.features)]) + "\n")
            n += 1
    return n


def event_pairs(record: EventRecord, schema: RelationSchema) -> Iterator[tuple[int, PairKey]]:
    """Every (relation index, pair) a record contributes, multi-valued cells expanded."""
    for r, (a, b) in enumerate(schema.relations):
        for left in record.feature(a).expand():
            for right in record.feature(b).expand():
                yield r, PairKey(left, right)


def _tally(events: Iterable[EventRecord], schema: RelationSchema) -> tuple[Counter[PairKey], Counter[PairKey]]:
    counts: Counter[PairKey] = Counter()
    clicks: Counter[PairKey] = Counter()
    for record in events:
        for _, key in event_pairs(record, schema):
            counts[key] += 1
            if record.label:
                clicks[key] += 1
    return counts, clicks


def _to_stats(counts: Counter[PairKey], clicks: Counter[PairKey]) -> dict[PairKey, PairStats]:
    return {
        key: PairStats(pair_key=key, count=counts[key], click_count=clicks.get(key, 0))
        for key in sorted(counts)
    }


def accumulate_stats(events: Iterable[EventRecord], schema: RelationSchema) -> dict[PairKey, PairStats]:
    """
    Tally co-occurrences and clicks for every configured relation in one pass.

    Pairs that never co-occur are absent. The result is keyed in sorted pair
    order, so it does not depend on event order.
    """
    counts, clicks = _tally(events, schema)
    return _to_stats(counts, clicks)


def merge_stats(parts: Sequence[Mapping[PairKey, PairStats]]) -> dict[PairKey, PairStats]:
    """Sum shard-level statistics; the merge is independent of shard order."""
    counts: Counter[PairKey] = Counter()
    clicks: Counter[PairKey] = Counter()
    for part in parts:
        for key, stats in part.items():
            counts[key] += stats.count
            clicks[key] += stats.click_count
    return _to_stats(counts, clicks)


def _chunks(events: Iterable[EventRecord], size: int) -> Iterator[list[EventRecord]]:
    it = iter(events)
    while chunk := list(islice(it, size)):
        yield chunk


def accumulate_sharded(
    events: Iterable[EventRecord],
    schema: RelationSchema,
    threads: int = 1,
    shard_size: int = 50_000,
) -> dict[PairKey, PairStats]:
    """
    Accumulate in shards of ``shard_size`` events on up to ``threads`` workers.

    Produces exactly the same mapping as ``accumulate_stats`` for any thread count.
    """
    if threads <= 1:
        return accumulate_stats(events, schema)

    parts: list[dict[PairKey, PairStats]] = []
    with ThreadPoolExecutor(max_workers=threads) as pool:
        pending = []
        for chunk in _chunks(events, shard_size):
            pending.append(pool.submit(accumulate_stats, chunk, schema))
            # Bound the number of in-flight shards held in memory
            if len(pending) >= 2 * threads:
                parts.append(merge_stats([f.result() for f in pending]))
                pending = []
        parts.extend(f.result() for f in pending)
    logger.debug("merged %d shard results", len(parts))
    return merge_stats(parts)
