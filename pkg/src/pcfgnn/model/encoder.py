"""
Forward pass and pair backpropagation of the cross-feature graph network.

Each layer computes, for every node i,

    m_{i,r} = mean of h_prev[j] over j in N_r(i)   (zero when N_r(i) is empty)
    h_i     = ReLU(concat(h_prev[i], m_{i,1}, ..., m_{i,R}) @ W_k + b_k)

and the CrossNet head maps a pair of final embeddings to
``sigmoid(w . concat(h_u, h_v) + c)``. All arithmetic follows the dtype of
the params it is given.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from pcfgnn.errors import ContractError
from pcfgnn.graph.interaction import Adjacency, InteractionGraph, neighbors
from pcfgnn.ingest.events import FeatureRef
from pcfgnn.model.params import GradientSet, PcfParams


def sigmoid(z: np.ndarray | float) -> np.ndarray:
    """
    Logistic function in the overflow-free ``exp(-|z|)`` form.

    Results are kept strictly inside (0, 1) for the result dtype: where the
    exact value rounds to 0 or 1 the nearest representable neighbor is
    returned instead.
    """
    z = np.asarray(z)
    if z.dtype.kind != "f":
        z = z.astype(np.float64)
    e = np.exp(-np.abs(z))
    p = np.where(z >= 0, 1 / (1 + e), e / (1 + e))
    low = np.nextafter(z.dtype.type(0), z.dtype.type(1))
    high = np.nextafter(z.dtype.type(1), z.dtype.type(0))
    return np.clip(p, low, high)


@dataclass
class LayerCache:
    """What one layer's backward step needs."""

    rows: np.ndarray                 # node ids computed at this layer, ascending
    inputs: np.ndarray               # concat(self, messages) for ``rows``
    pre_activation: np.ndarray       # inputs @ W + b for ``rows``
    links: list[tuple[np.ndarray, np.ndarray]]  # per relation: (target, source) links used
    degrees: list[np.ndarray]        # per relation: |N_r(i)| for every node


@dataclass
class EncodeOutput:
    """
    Final node representations h^(K).

    ``embeddings`` has one row per node. When encoding was restricted to a
    set of target nodes, only those rows are meaningful (``rows``).
    """

    embeddings: np.ndarray
    rows: np.ndarray
    layers: list[LayerCache] = field(default_factory=list)

    def relu_pattern(self) -> tuple[np.ndarray, ...]:
        return tuple(layer.pre_activation > 0 for layer in self.layers)


def aggregate(graph: InteractionGraph, h_prev: np.ndarray, i: int, r: int) -> np.ndarray:
    """Mean of ``h_prev[j]`` over N_r(i); the zero vector when the neighborhood is empty."""
    if h_prev.shape[0] != graph.num_nodes:
        raise ContractError(f"h_prev has {h_prev.shape[0]} rows, graph has {graph.num_nodes} nodes")
    nbrs = neighbors(graph, i, r)
    if not nbrs:
        return np.zeros(h_prev.shape[1], dtype=h_prev.dtype)
    return h_prev[nbrs].mean(axis=0)


def combine(
    h_i_prev: np.ndarray, messages: Sequence[np.ndarray], weight: np.ndarray, bias: np.ndarray
) -> np.ndarray:
    """
    ``ReLU(W^T concat(h_i_prev, m_1, ..., m_R) + b)``.

    Raises:
        ContractError: a message width differs from ``h_i_prev`` or ``W``/``b`` do not fit.
    """
    d_in = h_i_prev.shape[-1]
    for r, m in enumerate(messages):
        if m.shape[-1] != d_in:
            raise ContractError(f"message {r} has width {m.shape[-1]}, expected {d_in}")
    x = np.concatenate([h_i_prev, *messages], axis=-1)
    if weight.shape[0] != x.shape[-1]:
        raise ContractError(f"weight has {weight.shape[0]} input rows, concatenated input has {x.shape[-1]}")
    if bias.shape != (weight.shape[1],):
        raise ContractError(f"bias shape {bias.shape} does not match weight output width {weight.shape[1]}")
    return np.maximum(x @ weight + bias, 0)


def _layer_rows(adjacency: Adjacency, targets: np.ndarray | None, num_layers: int) -> list[np.ndarray]:
    """Active node masks for layers 0..K (layer K is the target set)."""
    n = adjacency.num_nodes
    if targets is None:
        full = np.ones(n, dtype=bool)
        return [full] * (num_layers + 1)
    masks = [np.zeros(n, dtype=bool)]
    masks[0][targets] = True
    for _ in range(num_layers):
        masks.append(adjacency.receptive_field(masks[-1]))
    return masks[::-1]


def encode(
    graph: InteractionGraph,
    params: PcfParams,
    adjacency: Adjacency | None = None,
    targets: np.ndarray | None = None,
) -> EncodeOutput:
    """
    Run K synchronous rounds of aggregate + combine.

    ``adjacency`` defaults to the graph's full neighbor lists; a sampled one
    caps the fan-in. With ``targets``, only the receptive field of those nodes
    is evaluated and only their output rows are meaningful.
    """
    params.validate(graph.num_nodes, graph.num_relations)
    adjacency = adjacency or graph.adjacency
    masks = _layer_rows(adjacency, targets, params.num_layers)

    h = params.node_embeddings
    layers: list[LayerCache] = []
    for k, (weight, bias) in enumerate(zip(params.layer_weights, params.layer_biases, strict=True)):
        active = masks[k + 1]
        rows = np.flatnonzero(active)
        d_in = h.shape[1]
        blocks = [h[rows]]
        links, degrees = [], []
        for r in range(graph.num_relations):
            tgt, src = adjacency.targets[r], adjacency.indices[r]
            keep = active[tgt]
            tgt, src = tgt[keep], src[keep]
            summed = np.zeros((graph.num_nodes, d_in), dtype=h.dtype)
            np.add.at(summed, tgt, h[src])
            deg = adjacency.degrees[r]
            blocks.append(summed[rows] / np.maximum(deg[rows], 1)[:, None].astype(h.dtype))
            links.append((tgt, src))
            degrees.append(deg)
        x = np.concatenate(blocks, axis=1)
        z = x @ weight + bias
        out = np.zeros((graph.num_nodes, weight.shape[1]), dtype=h.dtype)
        out[rows] = np.maximum(z, 0)
        layers.append(LayerCache(rows=rows, inputs=x, pre_activation=z, links=links, degrees=degrees))
        h = out

    return EncodeOutput(embeddings=h, rows=np.flatnonzero(masks[-1]), layers=layers)


def cross_logits(embeddings: np.ndarray, u: np.ndarray, v: np.ndarray, params: PcfParams) -> np.ndarray:
    d = params.output_dim
    w = params.crossnet_weight
    return embeddings[u] @ w[:d] + embeddings[v] @ w[d:] + params.crossnet_bias[0]


def cross_predict(h_u: np.ndarray, h_v: np.ndarray, params: PcfParams) -> float:
    """``sigmoid(w . concat(h_u, h_v) + c)``, a value in (0, 1)."""
    d = params.output_dim
    if h_u.shape[-1] != d or h_v.shape[-1] != d:
        raise ContractError(f"CrossNet expects embeddings of width {d}")
    z = np.concatenate([h_u, h_v]) @ params.crossnet_weight + params.crossnet_bias[0]
    return float(sigmoid(z))


def predict_pairs(
    graph: InteractionGraph,
    params: PcfParams,
    u: np.ndarray,
    v: np.ndarray,
    encoded: EncodeOutput | None = None,
) -> np.ndarray:
    """CrossNet predictions for node-id pairs."""
    if encoded is None:
        encoded = encode(graph, params, targets=np.union1d(u, v))
    return sigmoid(cross_logits(encoded.embeddings, u, v, params))


def infer_pair(
    graph: InteractionGraph,
    params: PcfParams,
    u: FeatureRef,
    v: FeatureRef,
    encoded: EncodeOutput | None = None,
) -> float | None:
    """
    Predicted cross-feature value for any pair of known features, edge or not.

    Returns None when either feature is not a node of ``graph``.
    """
    i, j = graph.node_id(u), graph.node_id(v)
    if i is None or j is None:
        return None
    if encoded is None:
        encoded = encode(graph, params, targets=np.array([i, j]))
    return cross_predict(encoded.embeddings[i], encoded.embeddings[j], params)


def backprop_pairs(
    params: PcfParams,
    encoded: EncodeOutput,
    u: np.ndarray,
    v: np.ndarray,
    p: np.ndarray,
    dloss_dp: np.ndarray,
) -> GradientSet:
    """
    Gradient of a loss with respect to every tensor, given dL/dp per pair.

    Pairs are accumulated in the order given; callers pass them in ascending
    edge order for reproducible sums.
    """
    grads = params.zeros_like()
    dtype = params.dtype
    d = params.output_dim
    h = encoded.embeddings
    w = params.crossnet_weight

    dz = (dloss_dp * p * (1 - p)).astype(dtype)
    grads.crossnet_weight[:d] = h[u].T @ dz
    grads.crossnet_weight[d:] = h[v].T @ dz
    grads.crossnet_bias[0] = dz.sum()

    dh = np.zeros_like(h)
    np.add.at(dh, u, dz[:, None] * w[:d])
    np.add.at(dh, v, dz[:, None] * w[d:])

    for k in range(params.num_layers - 1, -1, -1):
        layer = encoded.layers[k]
        weight = params.layer_weights[k]
        d_in = weight.shape[0] // (params.num_relations + 1)
        dpre = dh[layer.rows] * (layer.pre_activation > 0)
        grads.layer_weights[k][...] = layer.inputs.T @ dpre
        grads.layer_biases[k][...] = dpre.sum(axis=0)
        dx = dpre @ weight.T

        dh_prev = np.zeros((h.shape[0], d_in), dtype=dtype)
        dh_prev[layer.rows] = dx[:, :d_in]
        for r, (tgt, src) in enumerate(layer.links):
            dmsg = np.zeros((h.shape[0], d_in), dtype=dtype)
            dmsg[layer.rows] = dx[:, (r + 1) * d_in : (r + 2) * d_in]
            scale = (1 / np.maximum(layer.degrees[r], 1)).astype(dtype)
            np.add.at(dh_prev, src, dmsg[tgt] * scale[tgt][:, None])
        dh = dh_prev

    grads.node_embeddings[...] = dh
    return grads
