"""
Self-supervised pre-training on edge attributes.

The objective over a set of edges E is

    sum over (u, v) in E of  ln(count_uv + t) * (p_uv - a_uv)^2

where ``a`` is the observed click rate and ``p`` the CrossNet prediction.
With ``weighted_loss`` off every weight is 1.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from pcfgnn.config import TrainConfig
from pcfgnn.errors import ContractError, TrainingDivergedError
from pcfgnn.graph.interaction import Adjacency, InteractionGraph
from pcfgnn.model.encoder import backprop_pairs, encode, predict_pairs
from pcfgnn.model.params import GradientSet, PcfParams, init_params
from pcfgnn.rng import stream
from pcfgnn.training.optim import make_optimizer

logger = logging.getLogger(__name__)


@dataclass
class PretrainResult:
    """Outcome of a pre-training run."""

    params: PcfParams
    loss_trace: list[float]
    started_at: float = field(default_factory=time.time)
    completed_at: float | None = None

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1] if self.loss_trace else float("nan")

    @property
    def duration(self) -> float:
        return (self.completed_at or time.time()) - self.started_at


def edge_weight(count: int, t: float) -> float:
    """
    ``ln(count + t)``.

    Raises:
        ContractError: ``t <= 0`` or ``count < 1``.
    """
    if t <= 0:
        raise ContractError(f"smoothing constant t must be positive, got {t}")
    if count < 1:
        raise ContractError(f"edge count must be at least 1, got {count}")
    return math.log(count + t)


def edge_weights(graph: InteractionGraph, edges: np.ndarray, config: TrainConfig) -> np.ndarray:
    if not config.weighted_loss:
        return np.ones(len(edges), dtype=np.float64)
    if config.t <= 0:
        raise ContractError(f"smoothing constant t must be positive, got {config.t}")
    return np.log(graph.edge_count[edges].astype(np.float64) + config.t)


def _edge_set(graph: InteractionGraph, edge_set: np.ndarray | None) -> np.ndarray:
    if edge_set is None:
        return np.arange(graph.num_edges)
    edges = np.unique(np.asarray(edge_set, dtype=np.int64))
    if len(edges) and (edges[0] < 0 or edges[-1] >= graph.num_edges):
        raise ContractError(f"edge set references edges outside [0, {graph.num_edges})")
    return edges


def loss(
    graph: InteractionGraph,
    params: PcfParams,
    edge_set: np.ndarray | None,
    config: TrainConfig,
    adjacency: Adjacency | None = None,
) -> float:
    """Weighted square loss over ``edge_set`` (all edges when None)."""
    edges = _edge_set(graph, edge_set)
    if len(edges) == 0:
        return 0.0
    u, v = graph.edge_u[edges], graph.edge_v[edges]
    encoded = encode(graph, params, adjacency, targets=np.union1d(u, v))
    p = predict_pairs(graph, params, u, v, encoded)
    a = graph.edge_attribute[edges].astype(params.dtype)
    w = edge_weights(graph, edges, config).astype(params.dtype)
    return float(np.sum(w * (p - a) ** 2))


def backward(
    graph: InteractionGraph,
    params: PcfParams,
    edge_set: np.ndarray | None,
    config: TrainConfig,
    adjacency: Adjacency | None = None,
) -> tuple[float, GradientSet]:
    """Loss and its exact gradient with respect to every tensor of ``params``."""
    edges = _edge_set(graph, edge_set)
    if len(edges) == 0:
        return 0.0, params.zeros_like()
    u, v = graph.edge_u[edges], graph.edge_v[edges]
    encoded = encode(graph, params, adjacency, targets=np.union1d(u, v))
    p = predict_pairs(graph, params, u, v, encoded)
    a = graph.edge_attribute[edges].astype(params.dtype)
    w = edge_weights(graph, edges, config).astype(params.dtype)
    residual = p - a
    value = float(np.sum(w * residual**2))
    grads = backprop_pairs(params, encoded, u, v, p, 2 * w * residual)
    return value, grads


def _batches(num_edges: int, batch_size: int | None, rng: np.random.Generator) -> list[np.ndarray]:
    if batch_size is None or batch_size >= num_edges:
        return [np.arange(num_edges)]
    order = rng.permutation(num_edges)
    return [np.sort(order[i : i + batch_size]) for i in range(0, num_edges, batch_size)]


def _check_finite(value: float, grads: GradientSet, epoch: int, config: TrainConfig) -> None:
    if not math.isfinite(value) or not grads.is_finite():
        raise TrainingDivergedError(
            f"loss became {value} at epoch {epoch}; "
            f"learning rate {config.learning_rate} is likely too high"
        )


def train(graph: InteractionGraph, config: TrainConfig, params: PcfParams | None = None) -> PretrainResult:
    """
    Pre-train on every edge of ``graph``.

    Each epoch shuffles edges into minibatches (full batch by default) and
    takes one optimizer step per batch. The trace holds the summed loss of
    each epoch's batches.

    Raises:
        ContractError: the graph has no edges.
        TrainingDivergedError: loss, a gradient or a parameter stopped being finite.
    """
    if graph.num_edges == 0:
        raise ContractError("cannot pre-train on a graph without edges")

    result = PretrainResult(
        params=params if params is not None else init_params(graph.num_nodes, graph.num_relations, config),
        loss_trace=[],
    )
    params = result.params
    params.validate(graph.num_nodes, graph.num_relations)
    optimizer = make_optimizer(
        config.optimizer, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps
    )
    shuffle_rng = stream(config.seed, "pretrain", "shuffle")
    fanout_rng = stream(config.seed, "pretrain", "fanout")

    logger.info(
        "pre-training on %d nodes / %d edges: K=%d, widths=%s, epochs=%d, optimizer=%s",
        graph.num_nodes,
        graph.num_edges,
        config.num_layers,
        config.layer_widths,
        config.epochs,
        config.optimizer,
    )
    for epoch in range(1, config.epochs + 1):
        adjacency = graph.adjacency
        if config.fanout is not None:
            adjacency = adjacency.sample(config.fanout, fanout_rng)
        epoch_loss = 0.0
        for batch in _batches(graph.num_edges, config.batch_size, shuffle_rng):
            value, grads = backward(graph, params, batch, config, adjacency)
            _check_finite(value, grads, epoch, config)
            optimizer.step(params.named_tensors(), grads.named_tensors())
            if not params.is_finite():
                raise TrainingDivergedError(
                    f"parameters became non-finite at epoch {epoch}; "
                    f"learning rate {config.learning_rate} is likely too high"
                )
            epoch_loss += value
        result.loss_trace.append(epoch_loss)
        logger.debug("epoch %d loss %.6g", epoch, epoch_loss)

    result.completed_at = time.time()
    logger.info("pre-training finished: final loss %.6g in %.1fs", result.final_loss, result.duration)
    return result


def write_loss_trace(trace: list[float], path: str | Path) -> None:
    """TSV ``epoch<TAB>loss`` with 1-based epochs."""
    frame = pd.DataFrame({"epoch": np.arange(1, len(trace) + 1), "loss": trace})
    frame.to_csv(path, sep="\t", index=False, lineterminator="\n", float_format="%.9g")
