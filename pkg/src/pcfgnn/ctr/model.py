"""
Downstream Embedding&MLP CTR model.

Input per record: one embedding per schema field (looked up by the raw cell
value, with a reserved out-of-vocabulary row per field) followed by the
cross-feature scalars of the source, one per relation. Hidden layers use
ReLU; the single-unit output goes through a sigmoid and training minimizes
mean binary cross-entropy with Adam.

Model file layout (inside the shared container, magic ``PCFC``):
    schema, source variant, u32 d, u32 cross width,
    per field: vocabulary strings then the (V + 1, d) float32 table,
    u32 layer count, per layer u32 in, u32 out, weight, bias,
    u16 flag + embedded ``PCFM`` checkpoint blob when fine-tuned.
"""

import logging
import math
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from pcfgnn.binfmt import BinaryReader, BinaryWriter
from pcfgnn.config import CtrConfig
from pcfgnn.errors import ContractError, FormatError, TrainingDivergedError
from pcfgnn.ingest.events import EventRecord, RelationSchema
from pcfgnn.model.encoder import sigmoid
from pcfgnn.model.params import PcfParams, checkpoint_bytes, params_from_bytes
from pcfgnn.rng import stream
from pcfgnn.sources.base import CrossFeatureSource
from pcfgnn.sources.pcf import PcfSource
from pcfgnn.training.optim import Adam

logger = logging.getLogger(__name__)

CTR_MAGIC = b"PCFC"
CTR_VERSION = 1


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]


@dataclass
class CtrModel:
    """Embedding tables, MLP and (when fine-tuned) the updated graph-network params."""

    schema: RelationSchema
    variant: str
    vocab: list[dict[str, int]]
    embeddings: list[np.ndarray]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    cross_width: int
    pcf_params: PcfParams | None = None

    @property
    def embedding_dim(self) -> int:
        return int(self.embeddings[0].shape[1])

    @property
    def input_dim(self) -> int:
        return len(self.schema.fields) * self.embedding_dim + self.cross_width

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def named_tensors(self) -> dict[str, np.ndarray]:
        tensors = {f"embedding.{name}": table for name, table in zip(self.schema.fields, self.embeddings, strict=True)}
        for k, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            tensors[f"mlp_weight.{k}"] = w
            tensors[f"mlp_bias.{k}"] = b
        return tensors

    def token_ids(self, records: Sequence[EventRecord]) -> np.ndarray:
        """(n, F) embedding rows; unseen values map to each field's OOV row."""
        ids = np.empty((len(records), len(self.vocab)), dtype=np.int64)
        for row, record in enumerate(records):
            for f, (ref, vocab) in enumerate(zip(record.features, self.vocab, strict=True)):
                ids[row, f] = vocab.get(ref.value, len(vocab))
        return ids

    def inputs(self, ids: np.ndarray, cross: np.ndarray) -> np.ndarray:
        blocks = [table[ids[:, f]] for f, table in enumerate(self.embeddings)]
        if self.cross_width:
            blocks.append(cross.astype(self.dtype))
        return np.concatenate(blocks, axis=1)

    def forward(self, ids: np.ndarray, cross: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        """Output logits and the activations backward needs."""
        h = self.inputs(ids, cross)
        cache = ForwardCache(inputs=[], pre_activations=[])
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            z = h @ w + b
            cache.inputs.append(h)
            cache.pre_activations.append(z)
            h = z if k == last else np.maximum(z, 0)
        return h[:, 0], cache

    def loss_and_gradients(
        self, ids: np.ndarray, cross: np.ndarray, labels: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
        """Mean BCE, its gradient per named tensor, and its gradient per cross scalar."""
        logits, cache = self.forward(ids, cross)
        y = labels.astype(self.dtype)
        n = len(labels)
        # softplus(z) - y z, evaluated without overflow
        value = float(np.mean(np.maximum(logits, 0) + np.log1p(np.exp(-np.abs(logits))) - y * logits))

        grads: dict[str, np.ndarray] = {}
        dz = ((sigmoid(logits) - y) / n).astype(self.dtype)[:, None]
        for k in range(len(self.weights) - 1, -1, -1):
            if k < len(self.weights) - 1:
                dz = dz * (cache.pre_activations[k] > 0)
            grads[f"mlp_weight.{k}"] = cache.inputs[k].T @ dz
            grads[f"mlp_bias.{k}"] = dz.sum(axis=0)
            dz = dz @ self.weights[k].T
        dx = dz

        d = self.embedding_dim
        for f, name in enumerate(self.schema.fields):
            g = np.zeros_like(self.embeddings[f])
            np.add.at(g, ids[:, f], dx[:, f * d : (f + 1) * d])
            grads[f"embedding.{name}"] = g
        d_cross = dx[:, len(self.embeddings) * d :]
        return value, grads, d_cross


@dataclass
class CtrTrainResult:
    """Outcome of downstream training; ``source`` holds fine-tuned params when FT was on."""

    model: CtrModel
    loss_trace: list[float]
    source: CrossFeatureSource
    started_at: float = field(default_factory=time.time)
    completed_at: float | None = None

    @property
    def finetuned(self) -> bool:
        return self.model.pcf_params is not None


def build_vocab(records: Sequence[EventRecord], schema: RelationSchema) -> list[dict[str, int]]:
    """Per-field sorted vocabulary of raw cell values."""
    values: list[set[str]] = [set() for _ in schema.fields]
    for record in records:
        for f, ref in enumerate(record.features):
            values[f].add(ref.value)
    return [{token: i for i, token in enumerate(sorted(v))} for v in values]


def init_ctr_model(
    schema: RelationSchema,
    vocab: list[dict[str, int]],
    cross_width: int,
    variant: str,
    config: CtrConfig,
) -> CtrModel:
    rng = stream(config.seed, "ctr", "init")
    dtype = np.dtype(config.dtype)
    d = config.embedding_dim

    def uniform(shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(dtype)

    embeddings = [uniform((len(v) + 1, d), d) for v in vocab]
    weights, biases = [], []
    d_in = len(schema.fields) * d + cross_width
    for d_out in (*config.hidden_widths, 1):
        weights.append(uniform((d_in, d_out), d_in))
        biases.append(np.zeros(d_out, dtype=dtype))
        d_in = d_out
    return CtrModel(
        schema=schema,
        variant=variant,
        vocab=vocab,
        embeddings=embeddings,
        weights=weights,
        biases=biases,
        cross_width=cross_width,
    )


def featurize(model: CtrModel, record: EventRecord, source: CrossFeatureSource) -> np.ndarray:
    """Field embeddings followed by the source's cross-feature scalars (none for the None source)."""
    cross = source.cross_queries([record]).values
    return model.inputs(model.token_ids([record]), cross)[0]


def _check(value: float, tensors: dict[str, np.ndarray], epoch: int, config: CtrConfig) -> None:
    if not math.isfinite(value) or not all(np.isfinite(g).all() for g in tensors.values()):
        raise TrainingDivergedError(
            f"CTR loss became {value} at epoch {epoch}; "
            f"learning rate {config.learning_rate} is likely too high"
        )


def train_ctr(
    records: Sequence[EventRecord],
    source: CrossFeatureSource,
    config: CtrConfig,
) -> CtrTrainResult:
    """
    Fit the CTR model on ``records``.

    When ``config.finetune`` is set and the source is graph-backed, the source
    is re-created over a private copy of its params and downstream gradients
    flow through CrossNet and the encoder into that copy; the caller's params
    are never modified.

    Raises:
        ContractError: no training records.
        TrainingDivergedError: loss or gradients stopped being finite.
    """
    if not records:
        raise ContractError("cannot train a CTR model on an empty log")

    pcf: PcfSource | None = None
    if config.finetune and isinstance(source, PcfSource):
        pcf = PcfSource(source.graph, source.params, source.fallback, finetune=True)
        source = pcf
    elif config.finetune:
        logger.warning("fine-tuning requested but source %r has no trainable params", source.variant)

    schema = source.schema
    model = init_ctr_model(schema, build_vocab(records, schema), source.width, source.variant, config)
    result = CtrTrainResult(model=model, loss_trace=[], source=source)

    ids = model.token_ids(records)
    labels = np.array([r.label for r in records], dtype=np.int64)
    cross = None if pcf is not None else source.cross_queries(records).values

    optimizer = Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    pcf_optimizer = Adam(config.finetune_learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    rng = stream(config.seed, "ctr", "shuffle")

    logger.info(
        "training CTR model on %d records: source=%s, fine-tune=%s, epochs=%d",
        len(records),
        source.variant,
        pcf is not None,
        config.epochs,
    )
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(records))
        total = 0.0
        for start in range(0, len(records), config.batch_size):
            batch = np.sort(order[start : start + config.batch_size])
            if pcf is not None:
                plan = pcf.pair_plan([records[i] for i in batch])
                encoded, p = pcf.forward_plan(plan)
                batch_cross = pcf.answers(plan, p).values
            else:
                assert cross is not None
                batch_cross = cross[batch]

            value, grads, d_cross = model.loss_and_gradients(ids[batch], batch_cross, labels[batch])
            _check(value, grads, epoch, config)
            optimizer.step(model.named_tensors(), grads)
            if pcf is not None:
                pcf_grads = pcf.backprop_queries(plan, encoded, p, d_cross)
                _check(value, pcf_grads.named_tensors(), epoch, config)
                pcf_optimizer.step(pcf.params.named_tensors(), pcf_grads.named_tensors())
                pcf.refresh()
            total += value * len(batch)
        result.loss_trace.append(total / len(records))
        logger.debug("CTR epoch %d loss %.6g", epoch, result.loss_trace[-1])

    if pcf is not None:
        model.pcf_params = pcf.params
    result.completed_at = time.time()
    return result


def predict_batch(model: CtrModel, records: Sequence[EventRecord], source: CrossFeatureSource) -> np.ndarray:
    """Click probabilities for ``records``; pure given the model and source."""
    if source.width != model.cross_width:
        raise ContractError(
            f"model expects {model.cross_width} cross features, source {source.variant!r} gives {source.width}"
        )
    if not records:
        return np.zeros(0, dtype=np.float64)
    cross = source.cross_queries(records).values
    logits, _ = model.forward(model.token_ids(records), cross)
    return sigmoid(logits).astype(np.float64)


def predict_ctr(model: CtrModel, record: EventRecord, source: CrossFeatureSource) -> float:
    return float(predict_batch(model, [record], source)[0])


def write_predictions(labels: Sequence[int], scores: np.ndarray, path: str | Path) -> None:
    """TSV ``label<TAB>predicted_probability``."""
    frame = pd.DataFrame({"label": list(labels), "predicted_probability": scores})
    frame.to_csv(path, sep="\t", index=False, lineterminator="\n", float_format="%.9g")


def ctr_model_bytes(model: CtrModel) -> bytes:
    writer = BinaryWriter(CTR_MAGIC, CTR_VERSION)
    writer.u32(len(model.schema.fields))
    for name in model.schema.fields:
        writer.string(name)
    writer.u32(model.schema.num_relations)
    for left, right in model.schema.relations:
        writer.string(left)
        writer.string(right)
    writer.string(model.variant)
    writer.u32(model.embedding_dim)
    writer.u32(model.cross_width)
    for vocab, table in zip(model.vocab, model.embeddings, strict=True):
        writer.u64(len(vocab))
        for token in sorted(vocab, key=vocab.__getitem__):
            writer.string(token)
        writer.array(table, "<f4")
    writer.u32(len(model.weights))
    for w, b in zip(model.weights, model.biases, strict=True):
        writer.u32(w.shape[0])
        writer.u32(w.shape[1])
        writer.array(w, "<f4")
        writer.array(b, "<f4")
    writer.u16(1 if model.pcf_params is not None else 0)
    if model.pcf_params is not None:
        writer.blob(checkpoint_bytes(model.pcf_params))
    return writer.to_bytes()


def ctr_model_from_bytes(data: bytes, what: str = "CTR model") -> CtrModel:
    reader = BinaryReader(data, CTR_MAGIC, CTR_VERSION, what=what)
    fields = tuple(reader.string() for _ in range(reader.u32()))
    relations = tuple((reader.string(), reader.string()) for _ in range(reader.u32()))
    schema = RelationSchema(fields=fields, relations=relations)
    variant = reader.string()
    d = reader.u32()
    cross_width = reader.u32()

    vocab, embeddings = [], []
    for _ in fields:
        tokens = [reader.string() for _ in range(reader.u64())]
        vocab.append({token: i for i, token in enumerate(tokens)})
        table = reader.array("<f4")
        if table.size != (len(tokens) + 1) * d:
            raise FormatError(f"{what}: embedding table size {table.size} does not match vocabulary")
        embeddings.append(table.reshape(len(tokens) + 1, d))

    weights, biases = [], []
    for _ in range(reader.u32()):
        rows, cols = reader.u32(), reader.u32()
        w, b = reader.array("<f4"), reader.array("<f4")
        if w.size != rows * cols or b.size != cols:
            raise FormatError(f"{what}: MLP layer does not match its declared shape")
        weights.append(w.reshape(rows, cols))
        biases.append(b)

    pcf_params = params_from_bytes(reader.blob(), what=f"{what} (embedded checkpoint)") if reader.u16() else None
    reader.expect_end()
    return CtrModel(
        schema=schema,
        variant=variant,
        vocab=vocab,
        embeddings=embeddings,
        weights=weights,
        biases=biases,
        cross_width=cross_width,
        pcf_params=pcf_params,
    )


def save_ctr_model(model: CtrModel, path: str | Path) -> None:
    Path(path).write_bytes(ctr_model_bytes(model))
    logger.info("saved CTR model to %s", path)


def load_ctr_model(path: str | Path) -> CtrModel:
    """
    Raises:
        FormatError: bad magic, version mismatch, checksum failure or truncation.
    """
    path = Path(path)
    return ctr_model_from_bytes(path.read_bytes(), what=str(path))
