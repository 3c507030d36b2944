"""
Ranking metric, cross-feature coverage and the New/Org test split.
"""

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from pcfgnn.errors import MetricError
from pcfgnn.graph.interaction import InteractionGraph
from pcfgnn.ingest.events import EventRecord, RelationSchema
from pcfgnn.sources.base import CrossFeatureSource, NoneSource, expand_query


def auc(labels: Sequence[int] | np.ndarray, scores: Sequence[float] | np.ndarray) -> float:
    """
    Area under the ROC curve as the Mann-Whitney statistic.

    Ties count one half, via average ranks.

    Raises:
        MetricError: lengths differ, a label is not 0/1, or only one class is present.
    """
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise MetricError(f"labels {y.shape} and scores {s.shape} must be equal-length vectors")
    if not np.isin(y, (0, 1)).all():
        raise MetricError("labels must be 0 or 1")
    n_pos = int(np.sum(y == 1))
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined when only one class is present")
    ranks = pd.Series(s).rank(method="average").to_numpy()
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def auc_or_nan(labels: Sequence[int] | np.ndarray, scores: Sequence[float] | np.ndarray) -> float:
    """``auc`` that reports an undefined value as NaN (for optional report columns)."""
    try:
        return auc(labels, scores)
    except MetricError:
        return float("nan")


def is_new(record: EventRecord, graph: InteractionGraph, schema: RelationSchema) -> bool:
    """True when none of the record's cross pairs is an edge of ``graph``."""
    for r in range(schema.num_relations):
        for left, right in expand_query(record, schema, r):
            if graph.has_pair(left, right):
                return False
    return True


def split_new_org(
    test_records: Sequence[EventRecord], graph: InteractionGraph, schema: RelationSchema
) -> tuple[list[EventRecord], list[EventRecord]]:
    """(New, Org): records with only unseen pairs, and all records."""
    org = list(test_records)
    return [r for r in org if is_new(r, graph, schema)], org


def new_mask(test_records: Sequence[EventRecord], graph: InteractionGraph, schema: RelationSchema) -> np.ndarray:
    return np.array([is_new(r, graph, schema) for r in test_records], dtype=bool)


def hit_rate(test_records: Sequence[EventRecord], source: CrossFeatureSource, schema: RelationSchema) -> float:
    """
    Fraction of records whose every cross query the source resolves.

    NaN for the None source or an empty record list.
    """
    if isinstance(source, NoneSource) or not test_records or schema.num_relations == 0:
        return float("nan")
    return float(source.cross_queries(test_records).sample_resolved.mean())


def query_hit_rate(
    test_records: Sequence[EventRecord], source: CrossFeatureSource, schema: RelationSchema
) -> float:
    """Fraction of (record, relation) queries resolved; the diagnostic companion of ``hit_rate``."""
    if isinstance(source, NoneSource) or not test_records or schema.num_relations == 0:
        return float("nan")
    return float(source.cross_queries(test_records).resolved.mean())


@dataclass
class EvalReport:
    """One evaluated run; deltas are against the named baseline run."""

    name: str
    auc_org: float
    auc_new: float
    hit_rate: float
    query_hit_rate: float
    num_org: int
    num_new: int
    baseline: str | None = None
    delta_org: float = float("nan")
    delta_new: float = float("nan")

    @property
    def auc(self) -> float:
        return self.auc_org

    def against(self, baseline: "EvalReport") -> "EvalReport":
        """Fill the delta columns relative to ``baseline``."""
        self.baseline = baseline.name
        self.delta_org = self.auc_org - baseline.auc_org
        self.delta_new = self.auc_new - baseline.auc_new
        return self

    def as_row(self) -> dict[str, object]:
        return asdict(self)


def evaluate(
    name: str,
    labels: Sequence[int] | np.ndarray,
    scores: np.ndarray,
    is_new_row: np.ndarray,
    hit: float = math.nan,
    query_hit: float = math.nan,
) -> EvalReport:
    """
    AUC on the full test set and on its New subset.

    The New AUC is NaN when the subset is empty or single-class.
    """
    y = np.asarray(labels)
    return EvalReport(
        name=name,
        auc_org=auc(y, scores),
        auc_new=auc_or_nan(y[is_new_row], scores[is_new_row]),
        hit_rate=hit,
        query_hit_rate=query_hit,
        num_org=len(y),
        num_new=int(is_new_row.sum()),
    )
