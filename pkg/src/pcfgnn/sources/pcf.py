"""
Cross features inferred by the pre-trained graph network.

A pair resolves whenever both of its features are nodes of the pre-training
graph, whether or not the pair itself was ever observed.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from pcfgnn.graph.interaction import InteractionGraph
from pcfgnn.ingest.events import EventRecord, FeatureRef
from pcfgnn.model.encoder import EncodeOutput, backprop_pairs, cross_logits, encode, sigmoid
from pcfgnn.model.params import GradientSet, PcfParams
from pcfgnn.sources.base import CrossFeatureSource, CrossQueries, expand_query

logger = logging.getLogger(__name__)


@dataclass
class PairPlan:
    """
    The resolvable expanded pairs of a batch of records.

    Pair ``k`` joins nodes ``u[k]`` and ``v[k]`` and belongs to the cross
    query at flat index ``query[k]`` (``row * R + relation``).
    """

    num_records: int
    width: int
    query: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def pairs_per_query(self) -> np.ndarray:
        return np.bincount(self.query, minlength=self.num_records * self.width)


class PcfSource(CrossFeatureSource):
    """
    Inferred cross features.

    With ``finetune`` the source owns a private copy of ``params`` that
    downstream training may update; otherwise the given params are only read.
    """

    variant = "pcf"

    def __init__(
        self,
        graph: InteractionGraph,
        params: PcfParams,
        fallback: float | None = None,
        finetune: bool = False,
    ):
        super().__init__(graph.schema, graph.global_mean_attribute() if fallback is None else fallback)
        params.validate(graph.num_nodes, graph.num_relations)
        self.graph = graph
        self.finetune = finetune
        self.params = params.copy() if finetune else params
        self._encoded: EncodeOutput | None = None

    @property
    def encoded(self) -> EncodeOutput:
        if self._encoded is None:
            self._encoded = encode(self.graph, self.params)
        return self._encoded

    def refresh(self) -> None:
        """Drop cached embeddings after ``params`` changed."""
        self._encoded = None

    def resolve_pair(self, left: FeatureRef, right: FeatureRef) -> float | None:
        i, j = self.graph.node_id(left), self.graph.node_id(right)
        if i is None or j is None:
            return None
        logit = cross_logits(self.encoded.embeddings, np.array([i]), np.array([j]), self.params)
        return float(sigmoid(logit)[0])

    def pair_plan(self, records: Sequence[EventRecord]) -> PairPlan:
        query, us, vs = [], [], []
        width = self.width
        for row, record in enumerate(records):
            for r in range(width):
                for left, right in expand_query(record, self.schema, r):
                    i, j = self.graph.node_id(left), self.graph.node_id(right)
                    if i is not None and j is not None:
                        query.append(row * width + r)
                        us.append(i)
                        vs.append(j)
        return PairPlan(
            num_records=len(records),
            width=width,
            query=np.array(query, dtype=np.int64),
            u=np.array(us, dtype=np.int64),
            v=np.array(vs, dtype=np.int64),
        )

    def answers(self, plan: PairPlan, p: np.ndarray) -> CrossQueries:
        """Average pair predictions into query answers, fallback where nothing resolved."""
        size = plan.num_records * plan.width
        sums = np.zeros(size, dtype=np.float64)
        np.add.at(sums, plan.query, p.astype(np.float64))
        counts = plan.pairs_per_query()
        resolved = counts > 0
        values = np.where(resolved, sums / np.maximum(counts, 1), self.fallback)
        shape = (plan.num_records, plan.width)
        return CrossQueries(values=values.reshape(shape), resolved=resolved.reshape(shape))

    def cross_queries(self, records: Sequence[EventRecord]) -> CrossQueries:
        plan = self.pair_plan(records)
        p = sigmoid(cross_logits(self.encoded.embeddings, plan.u, plan.v, self.params))
        return self.answers(plan, p)

    def forward_plan(self, plan: PairPlan) -> tuple[EncodeOutput, np.ndarray]:
        """Encode only what ``plan`` needs; returns the encoding and per-pair predictions."""
        encoded = encode(self.graph, self.params, targets=np.union1d(plan.u, plan.v))
        return encoded, sigmoid(cross_logits(encoded.embeddings, plan.u, plan.v, self.params))

    def backprop_queries(
        self, plan: PairPlan, encoded: EncodeOutput, p: np.ndarray, dloss_dvalue: np.ndarray
    ) -> GradientSet:
        """
        Gradient of a downstream loss with respect to ``params``.

        ``dloss_dvalue`` has shape (records, R); each query's gradient is shared
        equally among the pairs it averaged.
        """
        counts = plan.pairs_per_query()
        flat = dloss_dvalue.reshape(-1)
        dloss_dp = flat[plan.query] / counts[plan.query]
        return backprop_pairs(self.params, encoded, plan.u, plan.v, p, dloss_dp.astype(self.params.dtype))
