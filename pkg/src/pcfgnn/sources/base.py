"""
Base class for cross-feature sources.

A source answers cross queries: for one event record and one configured
relation, the explicit cross-feature value of the record's pair under that
relation. Multi-valued cells expand into one pair per value; the answer is
the mean over the pairs the source can resolve, and the fallback when it
resolves none.
"""

from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from pcfgnn.errors import ContractError
from pcfgnn.ingest.events import EventRecord, FeatureRef, RelationSchema


@dataclass
class CrossQueries:
    """Answers for a batch of records: one column per relation."""

    values: np.ndarray    # (n, R) float64, fallback where unresolved
    resolved: np.ndarray  # (n, R) bool

    @property
    def sample_resolved(self) -> np.ndarray:
        """True for records whose every relation resolved."""
        return self.resolved.all(axis=1)


def expand_query(record: EventRecord, schema: RelationSchema, r: int) -> list[tuple[FeatureRef, FeatureRef]]:
    """The (left, right) pairs behind one cross query, in expansion order."""
    left_field, right_field = schema.relations[r]
    return [
        (left, right)
        for left in record.feature(left_field).expand()
        for right in record.feature(right_field).expand()
    ]


class CrossFeatureSource(ABC):
    """
    Abstract provider of explicit cross-feature values.

    Subclasses implement ``resolve_pair``; batch answering can be overridden
    for speed but must agree with the per-pair definition.
    """

    variant: str = "base"

    def __init__(self, schema: RelationSchema, fallback: float = 0.5):
        if not 0.0 <= fallback <= 1.0:
            raise ContractError(f"fallback must lie in [0, 1], got {fallback}")
        self.schema = schema
        self.fallback = float(fallback)

    @property
    def width(self) -> int:
        """Number of scalars this source appends to a CTR input."""
        return self.schema.num_relations

    @abstractmethod
    def resolve_pair(self, left: FeatureRef, right: FeatureRef) -> float | None:
        """
        Value of a single pair.

        Returns:
            The cross-feature value, or None when the source cannot produce one
        """
        pass

    def query(self, record: EventRecord, r: int) -> tuple[float, bool]:
        """(value, resolved) of one record under relation ``r``."""
        found = [
            value
            for left, right in expand_query(record, self.schema, r)
            if (value := self.resolve_pair(left, right)) is not None
        ]
        if not found:
            return self.fallback, False
        return float(np.mean(found)), True

    def cross_queries(self, records: Sequence[EventRecord]) -> CrossQueries:
        values = np.full((len(records), self.width), self.fallback, dtype=np.float64)
        resolved = np.zeros((len(records), self.width), dtype=bool)
        for row, record in enumerate(records):
            for r in range(self.width):
                values[row, r], resolved[row, r] = self.query(record, r)
        return CrossQueries(values=values, resolved=resolved)


class NoneSource(CrossFeatureSource):
    """No explicit cross features: contributes zero columns."""

    variant = "none"

    @property
    def width(self) -> int:
        return 0

    def resolve_pair(self, left: FeatureRef, right: FeatureRef) -> float | None:
        return None
