"""
Experiment runners: source benchmark, ablation matrix, held-out edge fit,
and the report writers they share.
"""

import logging
import math
import time
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from pcfgnn.config import CtrConfig, TrainConfig
from pcfgnn.ctr.model import predict_batch, train_ctr
from pcfgnn.evaluation.metrics import EvalReport, evaluate, hit_rate, new_mask, query_hit_rate
from pcfgnn.graph.interaction import InteractionGraph, build_graph
from pcfgnn.ingest.events import EventRecord, RelationSchema, accumulate_sharded
from pcfgnn.model.encoder import predict_pairs
from pcfgnn.model.params import PcfParams
from pcfgnn.rng import stream
from pcfgnn.sources.base import CrossFeatureSource, NoneSource
from pcfgnn.sources.pcf import PcfSource
from pcfgnn.sources.sescf import SescfSource, build_table
from pcfgnn.training.pretrainer import PretrainResult, train

logger = logging.getLogger(__name__)

BASELINE = "No-ESCF"


def build_pretrain_graph(
    records: Sequence[EventRecord], schema: RelationSchema, min_count: int = 1, threads: int = 1
) -> InteractionGraph:
    return build_graph(accumulate_sharded(records, schema, threads), schema, min_count)


def evaluate_source(
    name: str,
    source: CrossFeatureSource,
    train_records: Sequence[EventRecord],
    test_records: Sequence[EventRecord],
    ctr_config: CtrConfig,
    is_new_row: np.ndarray,
) -> EvalReport:
    """Train the downstream model with ``source`` and score the test log."""
    result = train_ctr(train_records, source, ctr_config)
    scores = predict_batch(result.model, test_records, result.source)
    labels = [r.label for r in test_records]
    report = evaluate(
        name,
        labels,
        scores,
        is_new_row,
        hit=hit_rate(test_records, result.source, source.schema),
        query_hit=query_hit_rate(test_records, result.source, source.schema),
    )
    logger.info("%s: AUC %.4f (New %.4f, HR %.4f)", name, report.auc_org, report.auc_new, report.hit_rate)
    return report


@dataclass
class BenchmarkResult:
    """No-ESCF / SESCF / PCF-GNN comparison on one split."""

    reports: list[EvalReport]
    graph: InteractionGraph
    pretrain: PretrainResult
    started_at: float = field(default_factory=time.time)
    completed_at: float | None = None

    def report(self, name: str) -> EvalReport:
        for r in self.reports:
            if r.name == name:
                return r
        raise KeyError(name)


def run_benchmark(
    pretrain_records: Sequence[EventRecord],
    train_records: Sequence[EventRecord],
    test_records: Sequence[EventRecord],
    schema: RelationSchema,
    pretrain_config: TrainConfig,
    ctr_config: CtrConfig,
    min_count: int = 1,
    threads: int = 1,
) -> BenchmarkResult:
    """
    Pre-train on the pre-training log, then train and evaluate one downstream
    model per cross-feature source. Deltas are against the No-ESCF run.
    """
    started = time.time()
    graph = build_pretrain_graph(pretrain_records, schema, min_count, threads)
    pretrained = train(graph, pretrain_config)
    reports = compare_sources(graph, pretrained.params, train_records, test_records, ctr_config, threads)
    return BenchmarkResult(
        reports=reports, graph=graph, pretrain=pretrained, started_at=started, completed_at=time.time()
    )


def compare_sources(
    graph: InteractionGraph,
    params: PcfParams,
    train_records: Sequence[EventRecord],
    test_records: Sequence[EventRecord],
    ctr_config: CtrConfig,
    threads: int = 1,
) -> list[EvalReport]:
    """No-ESCF, SESCF and PCF-GNN reports over an existing graph and checkpoint."""
    is_new_row = new_mask(test_records, graph, graph.schema)
    sources: list[tuple[str, CrossFeatureSource]] = [
        (BASELINE, NoneSource(graph.schema)),
        ("SESCF", SescfSource(build_table(graph))),
        ("PCF-GNN", PcfSource(graph, params)),
    ]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [
            pool.submit(evaluate_source, name, source, train_records, test_records, ctr_config, is_new_row)
            for name, source in sources
        ]
        reports = [f.result() for f in futures]
    for report in reports[1:]:
        report.against(reports[0])
    return reports


@dataclass(frozen=True)
class AblationRow:
    """One configuration of the ablation matrix."""

    name: str
    gnn: bool
    weighted_loss: bool
    finetune: bool

    def configs(self, pretrain: TrainConfig, ctr: CtrConfig, seed: int) -> tuple[TrainConfig, CtrConfig]:
        widths = (pretrain.layer_widths or TrainConfig().layer_widths) if self.gnn else ()
        return (
            pretrain.model_copy(update={"layer_widths": widths, "weighted_loss": self.weighted_loss, "seed": seed}),
            ctr.model_copy(update={"finetune": self.finetune, "seed": seed}),
        )


DEFAULT_ABLATION = (
    AblationRow("Base", gnn=False, weighted_loss=False, finetune=False),
    AblationRow("Base+GNN", gnn=True, weighted_loss=False, finetune=False),
    AblationRow("Base+GNN+WL", gnn=True, weighted_loss=True, finetune=False),
    AblationRow("Base+GNN+WL+FT", gnn=True, weighted_loss=True, finetune=True),
)


@dataclass
class AblationSummary:
    """Mean and standard error of one row over seeds."""

    name: str
    reports: list[EvalReport]

    @staticmethod
    def _stats(values: list[float]) -> tuple[float, float]:
        arr = np.array([v for v in values if not math.isnan(v)], dtype=np.float64)
        if len(arr) == 0:
            return float("nan"), float("nan")
        stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        return float(arr.mean()), stderr

    @property
    def mean_auc(self) -> float:
        return self._stats([r.auc_org for r in self.reports])[0]

    @property
    def stderr_auc(self) -> float:
        return self._stats([r.auc_org for r in self.reports])[1]

    @property
    def mean_auc_new(self) -> float:
        return self._stats([r.auc_new for r in self.reports])[0]

    @property
    def stderr_auc_new(self) -> float:
        return self._stats([r.auc_new for r in self.reports])[1]


@dataclass
class AblationResult:
    rows: list[AblationSummary]
    seeds: list[int]

    def row(self, name: str) -> AblationSummary:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)


def _ablation_cell(
    row: AblationRow,
    seed: int,
    graph: InteractionGraph,
    train_records: Sequence[EventRecord],
    test_records: Sequence[EventRecord],
    pretrain_config: TrainConfig,
    ctr_config: CtrConfig,
    is_new_row: np.ndarray,
) -> EvalReport:
    pre_cfg, ctr_cfg = row.configs(pretrain_config, ctr_config, seed)
    pretrained = train(graph, pre_cfg)
    source = PcfSource(graph, pretrained.params)
    return evaluate_source(row.name, source, train_records, test_records, ctr_cfg, is_new_row)


def run_ablation(
    graph: InteractionGraph,
    train_records: Sequence[EventRecord],
    test_records: Sequence[EventRecord],
    pretrain_config: TrainConfig,
    ctr_config: CtrConfig,
    rows: Sequence[AblationRow] = DEFAULT_ABLATION,
    seeds: Sequence[int] = (0,),
    threads: int = 1,
) -> AblationResult:
    """
    One pre-train, downstream-train and evaluation cycle per (row, seed).

    Every row sees the same seeds, so two identical rows report identical
    AUCs. Cells may run concurrently; results are collected in row order.
    """
    is_new_row = new_mask(test_records, graph, graph.schema)
    tasks = [(row, seed) for row in rows for seed in seeds]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [
            pool.submit(
                _ablation_cell,
                row,
                seed,
                graph,
                train_records,
                test_records,
                pretrain_config,
                ctr_config,
                is_new_row,
            )
            for row, seed in tasks
        ]
        reports = [f.result() for f in futures]

    summaries = []
    for k, row in enumerate(rows):
        summaries.append(AblationSummary(name=row.name, reports=reports[k * len(seeds) : (k + 1) * len(seeds)]))
    return AblationResult(rows=summaries, seeds=list(seeds))


@dataclass
class EdgeFitResult:
    """Held-out edge attribute error of the model and of the global-mean predictor."""

    rmse_model: float
    rmse_mean: float
    num_train_edges: int
    num_heldout_edges: int
    pretrain: PretrainResult

    @property
    def improvement(self) -> float:
        """Relative RMSE reduction versus the global mean (0.3 means 30% lower)."""
        return 1.0 - self.rmse_model / self.rmse_mean if self.rmse_mean > 0 else float("nan")


def holdout_edges(graph: InteractionGraph, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Split edge indices into (kept, held out).

    An edge is only held out while both of its endpoints keep at least one
    other edge, so every held-out pair joins two nodes the model trains on.
    """
    rng = stream(seed, "edge-fit", "holdout")
    target = int(round(fraction * graph.num_edges))
    degree = np.bincount(np.concatenate([graph.edge_u, graph.edge_v]), minlength=graph.num_nodes)
    held = np.zeros(graph.num_edges, dtype=bool)
    taken = 0
    for k in rng.permutation(graph.num_edges).tolist():
        if taken >= target:
            break
        u, v = graph.edge_u[k], graph.edge_v[k]
        if degree[u] > 1 and degree[v] > 1:
            held[k] = True
            degree[u] -= 1
            degree[v] -= 1
            taken += 1
    return np.flatnonzero(~held), np.flatnonzero(held)


def edge_fit(
    graph: InteractionGraph,
    config: TrainConfig,
    holdout_fraction: float = 0.2,
    min_eval_count: int = 1,
) -> EdgeFitResult:
    """
    Pre-train on the kept edges and score attribute predictions on the held-out ones.

    Only held-out edges with ``count >= min_eval_count`` are scored.
    """
    kept, held = holdout_edges(graph, holdout_fraction, config.seed)
    held = held[graph.edge_count[held] >= min_eval_count]
    train_graph = graph.select_edges(kept)
    pretrained = train(train_graph, config)

    u, v = graph.edge_u[held], graph.edge_v[held]
    actual = graph.edge_attribute[held].astype(np.float64)
    predicted = predict_pairs(train_graph, pretrained.params, u, v).astype(np.float64)
    mean = train_graph.global_mean_attribute()
    rmse_model = float(np.sqrt(np.mean((predicted - actual) ** 2))) if len(held) else float("nan")
    rmse_mean = float(np.sqrt(np.mean((mean - actual) ** 2))) if len(held) else float("nan")
    logger.info("edge fit on %d held-out edges: RMSE %.4f vs mean %.4f", len(held), rmse_model, rmse_mean)
    return EdgeFitResult(
        rmse_model=rmse_model,
        rmse_mean=rmse_mean,
        num_train_edges=len(kept),
        num_heldout_edges=len(held),
        pretrain=pretrained,
    )


def reports_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in reports])


def ablation_frame(result: AblationResult) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "name": row.name,
                "mean_auc": row.mean_auc,
                "stderr_auc": row.stderr_auc,
                "mean_auc_new": row.mean_auc_new,
                "stderr_auc_new": row.stderr_auc_new,
                "seeds": len(row.reports),
            }
            for row in result.rows
        ]
    )


def _header_lines(header: Mapping[str, object]) -> str:
    return "".join(f"# {key}={value}\n" for key, value in header.items())


def write_report_tsv(frame: pd.DataFrame, path: str | Path, header: Mapping[str, object]) -> None:
    """TSV preceded by ``# key=value`` lines carrying the config and seeds."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(_header_lines(header))
        frame.to_csv(handle, sep="\t", index=False, lineterminator="\n", float_format="%.6f")


def format_report_text(frame: pd.DataFrame, header: Mapping[str, object]) -> str:
    """Aligned plain-text table under the same header lines."""
    return _header_lines(header) + frame.to_string(index=False, float_format=lambda x: f"{x:.4f}") + "\n"
