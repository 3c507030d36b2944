"""
Learnable tensors of the cross-feature graph network and their checkpoint format.

Checkpoint layout (inside the shared container, magic ``PCFM``):
    u64 N, u32 d, u32 K, u32 R, K x u32 layer width,
    node_embeddings, then per layer weights and bias, then CrossNet weight and
    bias, every tensor as a little-endian float32 array.
"""

import hashlib
import logging
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import TypeVar

import numpy as np

from pcfgnn.binfmt import BinaryReader, BinaryWriter
from pcfgnn.config import TrainConfig
from pcfgnn.errors import ContractError, FormatError
from pcfgnn.rng import stream

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"PCFM"
CHECKPOINT_VERSION = 1

P = TypeVar("P", bound="PcfParams")


@dataclass
class PcfParams:
    """
    All learnable tensors.

    ``layer_weights[k]`` has shape ``((R + 1) * d_in, d_out)``: the self block
    first, then one block per relation in relation-index order.
    """

    node_embeddings: np.ndarray
    layer_weights: list[np.ndarray]
    layer_biases: list[np.ndarray]
    crossnet_weight: np.ndarray
    crossnet_bias: np.ndarray
    num_relations: int = field(default=1)

    @property
    def num_nodes(self) -> int:
        return int(self.node_embeddings.shape[0])

    @property
    def embedding_dim(self) -> int:
        return int(self.node_embeddings.shape[1])

    @property
    def num_layers(self) -> int:
        return len(self.layer_weights)

    @property
    def layer_widths(self) -> tuple[int, ...]:
        return tuple(int(w.shape[1]) for w in self.layer_weights)

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1] if self.layer_weights else self.embedding_dim

    @property
    def dtype(self) -> np.dtype:
        return self.node_embeddings.dtype

    def named_tensors(self) -> dict[str, np.ndarray]:
        """Every tensor under a stable name; the arrays are the live storage."""
        tensors = {"node_embeddings": self.node_embeddings}
        for k, (w, b) in enumerate(zip(self.layer_weights, self.layer_biases, strict=True)):
            tensors[f"layer_weights.{k}"] = w
            tensors[f"layer_biases.{k}"] = b
        tensors["crossnet_weight"] = self.crossnet_weight
        tensors["crossnet_bias"] = self.crossnet_bias
        return tensors

    def _map(self, fn: Callable[[np.ndarray], np.ndarray], cls: type[P]) -> P:
        return cls(
            node_embeddings=fn(self.node_embeddings),
            layer_weights=[fn(w) for w in self.layer_weights],
            layer_biases=[fn(b) for b in self.layer_biases],
            crossnet_weight=fn(self.crossnet_weight),
            crossnet_bias=fn(self.crossnet_bias),
            num_relations=self.num_relations,
        )

    def copy(self) -> "PcfParams":
        return self._map(np.copy, type(self))

    def astype(self, dtype: np.dtype | str) -> "PcfParams":
        return self._map(lambda a: a.astype(dtype), type(self))

    def zeros_like(self) -> "GradientSet":
        return self._map(np.zeros_like, cls=GradientSet)

    def is_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.named_tensors().values())

    def num_parameters(self) -> int:
        return sum(t.size for t in self.named_tensors().values())

    def validate(self, num_nodes: int, num_relations: int) -> None:
        """
        Raises:
            ContractError: shapes inconsistent with each other or with the graph.
        """
        if self.num_nodes != num_nodes:
            raise ContractError(f"params have {self.num_nodes} node rows, graph has {num_nodes} nodes")
        if self.num_relations != num_relations:
            raise ContractError(
                f"params were built for {self.num_relations} relations, graph has {num_relations}"
            )
        d_in = self.embedding_dim
        for k, (w, b) in enumerate(zip(self.layer_weights, self.layer_biases, strict=True)):
            if w.shape[0] != (num_relations + 1) * d_in or b.shape != (w.shape[1],):
                raise ContractError(
                    f"layer {k} has weight {w.shape} and bias {b.shape}, "
                    f"expected ({(num_relations + 1) * d_in}, d_out) and (d_out,)"
                )
            d_in = w.shape[1]
        if self.crossnet_weight.shape != (2 * d_in,) or self.crossnet_bias.shape != (1,):
            raise ContractError(
                f"CrossNet weight {self.crossnet_weight.shape} does not match output width {d_in}"
            )


class GradientSet(PcfParams):
    """One gradient tensor per parameter tensor, shape-matched."""

    def add_(self, other: "GradientSet") -> "GradientSet":
        for mine, theirs in zip(self.named_tensors().values(), other.named_tensors().values(), strict=True):
            mine += theirs
        return self

    def scale_(self, factor: float) -> "GradientSet":
        for tensor in self.named_tensors().values():
            tensor *= factor
        return self


def init_params(
    num_nodes: int, num_relations: int, config: TrainConfig, seed: int | None = None
) -> PcfParams:
    """
    Seeded uniform initialization.

    Embeddings are drawn from [-1/sqrt(d), 1/sqrt(d)], each weight matrix from
    [-1/sqrt(fan_in), 1/sqrt(fan_in)]; biases start at zero.
    """
    rng = stream(config.seed if seed is None else seed, "pretrain", "init")
    dtype = np.dtype(config.dtype)

    def uniform(shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(dtype)

    d = config.embedding_dim
    embeddings = uniform((num_nodes, d), d)
    weights, biases = [], []
    d_in = d
    for d_out in config.layer_widths:
        fan_in = (num_relations + 1) * d_in
        weights.append(uniform((fan_in, d_out), fan_in))
        biases.append(np.zeros(d_out, dtype=dtype))
        d_in = d_out
    return PcfParams(
        node_embeddings=embeddings,
        layer_weights=weights,
        layer_biases=biases,
        crossnet_weight=uniform((2 * d_in,), 2 * d_in),
        crossnet_bias=np.zeros(1, dtype=dtype),
        num_relations=num_relations,
    )


def _tensor_order(params: PcfParams) -> Iterator[np.ndarray]:
    yield params.node_embeddings
    for w, b in zip(params.layer_weights, params.layer_biases, strict=True):
        yield w
        yield b
    yield params.crossnet_weight
    yield params.crossnet_bias


def checkpoint_bytes(params: PcfParams) -> bytes:
    writer = BinaryWriter(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    writer.u64(params.num_nodes)
    writer.u32(params.embedding_dim)
    writer.u32(params.num_layers)
    writer.u32(params.num_relations)
    for width in params.layer_widths:
        writer.u32(width)
    for tensor in _tensor_order(params):
        writer.array(tensor, "<f4")
    return writer.to_bytes()


def params_from_bytes(data: bytes, what: str = "checkpoint") -> PcfParams:
    reader = BinaryReader(data, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, what=what)
    n, d, k, r = reader.u64(), reader.u32(), reader.u32(), reader.u32()
    widths = [reader.u32() for _ in range(k)]

    def take(shape: tuple[int, ...]) -> np.ndarray:
        flat = reader.array("<f4")
        if flat.size != int(np.prod(shape)):
            raise FormatError(f"{what}: expected {shape} tensor, found {flat.size} values")
        return flat.reshape(shape).astype(np.float32)

    embeddings = take((n, d))
    weights, biases = [], []
    d_in = d
    for d_out in widths:
        weights.append(take(((r + 1) * d_in, d_out)))
        biases.append(take((d_out,)))
        d_in = d_out
    params = PcfParams(
        node_embeddings=embeddings,
        layer_weights=weights,
        layer_biases=biases,
        crossnet_weight=take((2 * d_in,)),
        crossnet_bias=take((1,)),
        num_relations=r,
    )
    reader.expect_end()
    return params


def save_checkpoint(params: PcfParams, path: str | Path) -> None:
    """Write params as float32; identical params give identical bytes."""
    Path(path).write_bytes(checkpoint_bytes(params))
    logger.info("saved checkpoint (%d parameters) to %s", params.num_parameters(), path)


def load_checkpoint(path: str | Path) -> PcfParams:
    """
    Raises:
        FormatError: bad magic, version mismatch, checksum failure or truncation.
    """
    path = Path(path)
    return params_from_bytes(path.read_bytes(), what=str(path))


def params_checksum(params: PcfParams) -> str:
    """SHA-256 of the serialized checkpoint."""
    return hashlib.sha256(checkpoint_bytes(params)).hexdigest()
