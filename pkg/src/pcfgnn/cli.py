"""
Command-line interface for pcfgnn.
"""

import logging
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd
import typer
from rich.console import Console
from rich.table import Table

from pcfgnn import __version__
from pcfgnn.config import (
    ConfigValues,
    CtrConfig,
    TrainConfig,
    build_section,
    get_settings,
    load_config_file,
    top_level,
    top_level_int,
)
from pcfgnn.ctr import load_ctr_model, predict_batch, save_ctr_model, train_ctr, write_predictions
from pcfgnn.db import RunRepository, init_db, make_engine, session_scope
from pcfgnn.errors import ContractError, StageError
from pcfgnn.evaluation.experiments import (
    DEFAULT_ABLATION,
    AblationResult,
    ablation_frame,
    build_pretrain_graph,
    compare_sources,
    edge_fit,
    format_report_text,
    reports_frame,
    run_ablation,
    run_benchmark,
)
from pcfgnn.evaluation.experiments import write_report_tsv as write_frame_tsv
from pcfgnn.evaluation.metrics import EvalReport
from pcfgnn.evaluation.synthetic import SyntheticSpec, generate_synthetic
from pcfgnn.graph import export_graph_tsv, load_graph, save_graph
from pcfgnn.graph.interaction import InteractionGraph
from pcfgnn.ingest.events import EventRecord, FeatureRef, RelationSchema, load_schema, read_event_log
from pcfgnn.ingest.movielens import convert_movielens
from pcfgnn.log import setup_logging
from pcfgnn.manifest import RunRecorder
from pcfgnn.model import load_checkpoint, save_checkpoint
from pcfgnn.model.encoder import encode, infer_pair
from pcfgnn.sources import (
    CostModel,
    CrossFeatureSource,
    NoneSource,
    PcfSource,
    SescfSource,
    build_table,
    export_table_tsv,
    memory_report,
)
from pcfgnn.training import train, write_loss_trace

app = typer.Typer(
    name="pcfgnn",
    help="Pre-trained cross-feature graph network: build graphs, pre-train, infer and evaluate.",
    no_args_is_help=True,
)
console = Console()
err_console = Console(stderr=True)
logger = logging.getLogger("pcfgnn.cli")

NA = "NA"

ConfigOption = typer.Option(None, "--config", "-c", help="Run config file (key=value); defaults to $PCFGNN_CONFIG")
SeedOption = typer.Option(None, "--seed", help="Seed for every random stream of the run")
ThreadsOption = typer.Option(1, "--threads", "-j", min=1, help="Worker cap; results do not depend on it")


@app.callback()
def main() -> None:
    setup_logging(get_settings().log_level)


@contextmanager
def _reporting(recorder: RunRecorder) -> Iterator[None]:
    """Turn a stage failure into a tagged message on stderr and exit code 1."""
    try:
        yield
    except StageError as e:
        recorder.fail(e)
        err_console.print(f"✗ {e}", style="red", markup=False, highlight=False, soft_wrap=True)
        raise typer.Exit(code=1) from e


def _config_values(path: Optional[Path]) -> ConfigValues:
    path = path or get_settings().config
    return load_config_file(path) if path else {}


def _seed(values: ConfigValues, seed: Optional[int]) -> Optional[int]:
    if seed is not None:
        return seed
    return top_level_int(values, "seed", 0) if top_level(values, "seed") is not None else None


def _schema(values: ConfigValues, schema_path: Optional[Path]) -> RelationSchema:
    if schema_path is not None:
        return load_schema(schema_path)
    return RelationSchema.from_config(values)


def _train_config(values: ConfigValues, seed: Optional[int], **overrides: Any) -> TrainConfig:
    return build_section(TrainConfig, values, "pretrain", {"seed": seed, **overrides})


def _ctr_config(values: ConfigValues, seed: Optional[int], **overrides: Any) -> CtrConfig:
    return build_section(CtrConfig, values, "ctr", {"seed": seed, **overrides})


def _dump(**models: Any) -> dict[str, Any]:
    return {name: model.model_dump(mode="json") for name, model in models.items()}


def _print_reports(reports: Sequence[EvalReport], title: str) -> None:
    table = Table(title=title)
    for column in ("Run", "AUC (Org)", "AUC (New)", "Δ Org", "Δ New", "HR", "Org", "New"):
        table.add_column(column, style="cyan" if column == "Run" else "white")
    for r in reports:
        table.add_row(
            r.name,
            f"{r.auc_org:.4f}",
            f"{r.auc_new:.4f}",
            f"{r.delta_org:+.4f}",
            f"{r.delta_new:+.4f}",
            f"{r.hit_rate:.2%}" if not np.isnan(r.hit_rate) else "-",
            str(r.num_org),
            str(r.num_new),
        )
    console.print(table)


def _write_report(frame: pd.DataFrame, out: Path, header: dict[str, object]) -> Path:
    """TSV at ``out`` plus the aligned text version next to it."""
    out.parent.mkdir(parents=True, exist_ok=True)
    write_frame_tsv(frame, out, header)
    text_path = out.with_suffix(".txt")
    text_path.write_text(format_report_text(frame, header), encoding="utf-8")
    return text_path


def _flat_header(config: dict[str, Any], **extra: object) -> dict[str, object]:
    header: dict[str, object] = {"version": __version__, **extra}
    for section, values in config.items():
        for key, value in values.items():
            header[f"{section}.{key}"] = value
    return header


@app.command()
def version() -> None:
    """Show the version."""
    console.print(f"[bold blue]pcfgnn[/] version {__version__}")


@app.command("build-graph")
def build_graph_cmd(
    log_path: Path = typer.Argument(..., help="Pre-training event log (TSV)"),
    out: Path = typer.Option(..., "--out", "-o", help="Graph file to write"),
    schema_path: Optional[Path] = typer.Option(None, "--schema", "-s", help="Schema file (fields=, relation=)"),
    min_count: Optional[int] = typer.Option(None, "--min-count", min=1, help="Drop pairs seen fewer times"),
    export_tsv: Optional[Path] = typer.Option(None, "--export-tsv", help="Also write the edges as TSV"),
    config: Optional[Path] = ConfigOption,
    threads: int = ThreadsOption,
) -> None:
    """Tally an event log into the feature interaction graph."""
    recorder = RunRecorder(
        "build-graph", threads=threads, inputs={"log": log_path, "schema": schema_path, "config": config}
    )
    with _reporting(recorder):
        with recorder.stage("config"):
            values = _config_values(config)
            schema = _schema(values, schema_path)
            min_count = min_count or top_level_int(values, "min_count", 1)
            recorder.manifest.config = {"graph": {"min_count": min_count, "schema": schema.to_config_text()}}
        with recorder.stage("parse"):
            records = read_event_log(log_path, schema)
        if not records:
            logger.warning("%s holds no events; writing an empty graph", log_path)
        with recorder.stage("build"):
            graph = build_pretrain_graph(records, schema, min_count, threads)
        with recorder.stage("save"):
            out.parent.mkdir(parents=True, exist_ok=True)
            save_graph(graph, out)
            recorder.artifact("graph", out)
            if export_tsv is not None:
                export_graph_tsv(graph, export_tsv)
                recorder.artifact("graph_tsv", export_tsv)
        recorder.finish(out)

    console.print(f"[green]✓ Graph written to {out}[/]")
    console.print(f"  Events: {len(records):,}  Nodes: {graph.num_nodes:,}  Edges: {graph.num_edges:,}")


@app.command()
def pretrain(
    graph_path: Path = typer.Argument(..., help="Graph file"),
    out: Path = typer.Option(..., "--out", "-o", help="Checkpoint to write"),
    loss_trace: Optional[Path] = typer.Option(None, "--loss-trace", help="Loss trace TSV (default <out>.loss.tsv)"),
    epochs: Optional[int] = typer.Option(None, "--epochs", min=1),
    learning_rate: Optional[float] = typer.Option(None, "--learning-rate", "--lr"),
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    threads: int = ThreadsOption,
) -> None:
    """Pre-train the graph network on edge attributes."""
    recorder = RunRecorder("pretrain", threads=threads, inputs={"graph": graph_path, "config": config})
    with _reporting(recorder):
        with recorder.stage("config"):
            values = _config_values(config)
            train_config = _train_config(
                values, _seed(values, seed), epochs=epochs, learning_rate=learning_rate
            )
            recorder.manifest.seed = train_config.seed
            recorder.manifest.config = _dump(pretrain=train_config)
        with recorder.stage("load"):
            graph = load_graph(graph_path)
        with recorder.stage("train"):
            result = train(graph, train_config)
        with recorder.stage("save"):
            out.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(result.params, out)
            recorder.artifact("checkpoint", out)
            trace_path = loss_trace or Path(f"{out}.loss.tsv")
            write_loss_trace(result.loss_trace, trace_path)
            recorder.artifact("loss_trace", trace_path)
        recorder.finish(out)

    console.print(f"[green]✓ Checkpoint written to {out}[/]")
    console.print(f"  Final loss: {result.final_loss:.6g}  Duration: {result.duration:.1f}s")


@app.command()
def infer(
    checkpoint: Path = typer.Argument(..., help="Checkpoint file"),
    graph_path: Path = typer.Argument(..., help="Graph the checkpoint was trained on"),
    pairs: Path = typer.Argument(..., help="TSV with columns u_field, u_value, v_field, v_value"),
    out: Path = typer.Option(..., "--out", "-o", help="Predictions TSV to write"),
) -> None:
    """Infer cross-feature values for arbitrary feature pairs."""
    recorder = RunRecorder("infer", inputs={"checkpoint": checkpoint, "graph": graph_path, "pairs": pairs})
    with _reporting(recorder):
        with recorder.stage("load"):
            graph = load_graph(graph_path)
            params = load_checkpoint(checkpoint)
            frame = pd.read_csv(pairs, sep="\t", dtype=str, keep_default_na=False)
            missing = {"u_field", "u_value", "v_field", "v_value"} - set(frame.columns)
            if missing:
                raise ContractError(f"{pairs} lacks column(s) {sorted(missing)}")
        with recorder.stage("infer"):
            encoded = encode(graph, params)
            predictions = []
            for row in frame.itertuples(index=False):
                value = infer_pair(
                    graph,
                    params,
                    FeatureRef(row.u_field, row.u_value),
                    FeatureRef(row.v_field, row.v_value),
                    encoded=encoded,
                )
                predictions.append(NA if value is None else f"{value:.9g}")
        with recorder.stage("save"):
            frame["prediction"] = predictions
            frame.to_csv(out, sep="\t", index=False, lineterminator="\n")
            recorder.artifact("predictions", out)
        recorder.finish(out)

    unknown = predictions.count(NA)
    console.print(f"[green]✓ {len(predictions) - unknown:,} predictions written to {out}[/]")
    if unknown:
        console.print(f"  [dim]{unknown:,} pairs with an unknown feature emitted {NA}[/]")


@app.command("export-sescf")
def export_sescf(
    graph_path: Path = typer.Argument(..., help="Graph file"),
    out: Path = typer.Option(..., "--out", "-o", help="Table TSV to write"),
) -> None:
    """Export the explicit cross-feature lookup table."""
    recorder = RunRecorder("export-sescf", inputs={"graph": graph_path})
    with _reporting(recorder):
        with recorder.stage("load"):
            graph = load_graph(graph_path)
        with recorder.stage("export"):
            table = build_table(graph)
            export_table_tsv(table, out)
            recorder.artifact("sescf_table", out)
        recorder.finish(out)
    console.print(f"[green]✓ {len(table):,} table entries written to {out}[/]")


def _make_source(
    variant: str, schema: RelationSchema, graph: Optional[InteractionGraph], checkpoint: Optional[Path]
) -> CrossFeatureSource:
    if variant == "none":
        return NoneSource(schema)
    if graph is None:
        raise ContractError(f"source {variant!r} needs --graph")
    if variant == "sescf":
        return SescfSource(build_table(graph))
    if variant == "pcf":
        if checkpoint is None:
            raise ContractError("source 'pcf' needs --checkpoint")
        return PcfSource(graph, load_checkpoint(checkpoint))
    raise ContractError(f"unknown source {variant!r}; expected none, sescf or pcf")


@app.command("train-ctr")
def train_ctr_cmd(
    train_log: Path = typer.Argument(..., help="Downstream training log"),
    out: Path = typer.Option(..., "--out", "-o", help="CTR model to write"),
    source_name: str = typer.Option("none", "--source", help="Cross features: none, sescf or pcf"),
    graph_path: Optional[Path] = typer.Option(None, "--graph", help="Pre-training graph"),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Pre-trained checkpoint (pcf)"),
    schema_path: Optional[Path] = typer.Option(None, "--schema", "-s", help="Schema file when no graph is given"),
    test_log: Optional[Path] = typer.Option(None, "--test", help="Score this log after training"),
    predictions: Optional[Path] = typer.Option(None, "--predictions", help="Predictions TSV for --test"),
    finetune: Optional[bool] = typer.Option(None, "--finetune/--no-finetune", help="Update PCF params too"),
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Train the downstream CTR model with the chosen cross-feature source."""
    recorder = RunRecorder(
        "train-ctr",
        inputs={
            "train": train_log,
            "test": test_log,
            "graph": graph_path,
            "checkpoint": checkpoint,
            "schema": schema_path,
            "config": config,
        },
    )
    with _reporting(recorder):
        with recorder.stage("config"):
            values = _config_values(config)
            ctr_config = _ctr_config(values, _seed(values, seed), finetune=finetune)
            recorder.manifest.seed = ctr_config.seed
            recorder.manifest.config = {**_dump(ctr=ctr_config), "source": {"variant": source_name}}
        with recorder.stage("load"):
            graph = load_graph(graph_path) if graph_path else None
            schema = graph.schema if graph is not None else _schema(values, schema_path)
            source = _make_source(source_name, schema, graph, checkpoint)
            records = read_event_log(train_log, schema)
        with recorder.stage("train"):
            result = train_ctr(records, source, ctr_config)
        with recorder.stage("save"):
            out.parent.mkdir(parents=True, exist_ok=True)
            save_ctr_model(result.model, out)
            recorder.artifact("ctr_model", out)
        if test_log is not None:
            with recorder.stage("predict"):
                test_records = read_event_log(test_log, schema)
                scores = predict_batch(result.model, test_records, result.source)
                pred_path = predictions or Path(f"{out}.predictions.tsv")
                write_predictions([r.label for r in test_records], scores, pred_path)
                recorder.artifact("predictions", pred_path)
        recorder.finish(out)

    console.print(f"[green]✓ CTR model written to {out}[/]")
    console.print(f"  Source: {source.variant}  Final loss: {result.loss_trace[-1]:.6g}")


@app.command("predict")
def predict_cmd(
    model_path: Path = typer.Argument(..., help="CTR model file"),
    test_log: Path = typer.Argument(..., help="Log to score"),
    out: Path = typer.Option(..., "--out", "-o", help="Predictions TSV to write"),
    graph_path: Optional[Path] = typer.Option(None, "--graph", help="Pre-training graph"),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Checkpoint when the model was not fine-tuned"),
) -> None:
    """Score a log with a saved CTR model."""
    recorder = RunRecorder(
        "predict", inputs={"model": model_path, "test": test_log, "graph": graph_path, "checkpoint": checkpoint}
    )
    with _reporting(recorder):
        with recorder.stage("load"):
            model = load_ctr_model(model_path)
            graph = load_graph(graph_path) if graph_path else None
            if model.pcf_params is not None:
                if graph is None:
                    raise ContractError("a fine-tuned model needs --graph")
                source: CrossFeatureSource = PcfSource(graph, model.pcf_params)
            else:
                source = _make_source(model.variant, model.schema, graph, checkpoint)
            records = read_event_log(test_log, model.schema)
        with recorder.stage("predict"):
            scores = predict_batch(model, records, source)
            write_predictions([r.label for r in records], scores, out)
            recorder.artifact("predictions", out)
        recorder.finish(out)
    console.print(f"[green]✓ {len(records):,} predictions written to {out}[/]")


def _synthetic_logs(
    values: ConfigValues, seed: Optional[int]
) -> tuple[SyntheticSpec, RelationSchema, list[EventRecord], list[EventRecord], list[EventRecord]]:
    spec = build_section(SyntheticSpec, values, "synthetic", {"seed": seed})
    data = generate_synthetic(spec)
    return spec, data.schema, data.pretrain, data.train, data.test


def _ablate(
    graph: InteractionGraph,
    train_records: list[EventRecord],
    test_records: list[EventRecord],
    train_config: TrainConfig,
    ctr_config: CtrConfig,
    seeds: list[int],
    threads: int,
) -> AblationResult:
    return run_ablation(
        graph, train_records, test_records, train_config, ctr_config, DEFAULT_ABLATION, seeds, threads
    )


def _print_ablation(result: AblationResult) -> None:
    table = Table(title=f"Ablation over {len(result.seeds)} seed(s)")
    table.add_column("Row", style="cyan")
    table.add_column("AUC", style="green")
    table.add_column("± stderr", style="white")
    table.add_column("AUC (New)", style="green")
    for row in result.rows:
        table.add_row(row.name, f"{row.mean_auc:.4f}", f"{row.stderr_auc:.4f}", f"{row.mean_auc_new:.4f}")
    console.print(table)


@app.command("eval")
def eval_cmd(
    out: Path = typer.Option(..., "--out", "-o", help="Report TSV (an aligned .txt is written next to it)"),
    synthetic: bool = typer.Option(False, "--synthetic", help="Generate the planted benchmark (synthetic.* keys)"),
    ablate: bool = typer.Option(False, "--ablate", help="Also run the ablation matrix"),
    pretrain_log: Optional[Path] = typer.Option(None, "--pretrain-log", help="Log to build and pre-train on"),
    graph_path: Optional[Path] = typer.Option(None, "--graph", help="Existing graph (instead of --pretrain-log)"),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Existing checkpoint for --graph"),
    train_log: Optional[Path] = typer.Option(None, "--train-log"),
    test_log: Optional[Path] = typer.Option(None, "--test-log"),
    schema_path: Optional[Path] = typer.Option(None, "--schema", "-s"),
    seeds: int = typer.Option(1, "--seeds", min=1, help="Ablation seeds: seed, seed+1, ..."),
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    threads: int = ThreadsOption,
) -> None:
    """Compare No-ESCF, SESCF and PCF-GNN on one split."""
    recorder = RunRecorder(
        "eval",
        threads=threads,
        inputs={
            "pretrain": pretrain_log,
            "graph": graph_path,
            "checkpoint": checkpoint,
            "train": train_log,
            "test": test_log,
            "schema": schema_path,
            "config": config,
        },
    )
    with _reporting(recorder):
        with recorder.stage("config"):
            values = _config_values(config)
            run_seed = _seed(values, seed)
            train_config = _train_config(values, run_seed)
            ctr_config = _ctr_config(values, run_seed)
            min_count = top_level_int(values, "min_count", 1)
            recorder.manifest.seed = train_config.seed
            dumped = _dump(pretrain=train_config, ctr=ctr_config)
        with recorder.stage("data"):
            graph: Optional[InteractionGraph] = None
            pre: list[EventRecord] = []
            params = None
            if synthetic:
                spec, schema, pre, train_records, test_records = _synthetic_logs(values, run_seed)
                dumped.update(_dump(synthetic=spec))
            else:
                if train_log is None or test_log is None:
                    raise ContractError("--train-log and --test-log are required without --synthetic")
                if graph_path is not None:
                    if checkpoint is None:
                        raise ContractError("--graph needs --checkpoint")
                    graph = load_graph(graph_path)
                    params = load_checkpoint(checkpoint)
                    schema = graph.schema
                elif pretrain_log is not None:
                    schema = _schema(values, schema_path)
                    pre = read_event_log(pretrain_log, schema)
                else:
                    raise ContractError("give --pretrain-log, or --graph with --checkpoint")
                train_records = read_event_log(train_log, schema)
                test_records = read_event_log(test_log, schema)
            recorder.manifest.config = dumped
        with recorder.stage("benchmark"):
            if graph is not None and params is not None:
                reports = compare_sources(graph, params, train_records, test_records, ctr_config, threads)
            else:
                result = run_benchmark(
                    pre, train_records, test_records, schema, train_config, ctr_config, min_count, threads
                )
                graph, reports = result.graph, result.reports
        with recorder.stage("report"):
            header = _flat_header(dumped, seed=train_config.seed)
            text = _write_report(reports_frame(reports), out, header)
            recorder.artifact("report", out)
            recorder.artifact("report_text", text)
        if ablate:
            seed_list = [train_config.seed + k for k in range(seeds)]
            assert graph is not None
            with recorder.stage("ablate"):
                ablation = _ablate(graph, train_records, test_records, train_config, ctr_config, seed_list, threads)
            with recorder.stage("ablation-report"):
                ablation_out = out.with_name(f"{out.stem}.ablation{out.suffix or '.tsv'}")
                ablation_header = {**header, "seeds": ",".join(map(str, seed_list))}
                ablation_text = _write_report(ablation_frame(ablation), ablation_out, ablation_header)
                recorder.artifact("ablation", ablation_out)
                recorder.artifact("ablation_text", ablation_text)
        recorder.finish(out)

    _print_reports(reports, "Cross-feature sources")
    if ablate:
        _print_ablation(ablation)
    console.print(f"[green]✓ Report written to {out}[/]")


@app.command()
def ablate(
    out: Path = typer.Option(..., "--out", "-o", help="Ablation report TSV"),
    synthetic: bool = typer.Option(False, "--synthetic", help="Generate the planted benchmark"),
    pretrain_log: Optional[Path] = typer.Option(None, "--pretrain-log"),
    train_log: Optional[Path] = typer.Option(None, "--train-log"),
    test_log: Optional[Path] = typer.Option(None, "--test-log"),
    schema_path: Optional[Path] = typer.Option(None, "--schema", "-s"),
    seeds: int = typer.Option(1, "--seeds", min=1, help="Seeds: seed, seed+1, ..."),
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    threads: int = ThreadsOption,
) -> None:
    """Run the Base / +GNN / +WL / +FT ablation rows."""
    recorder = RunRecorder(
        "ablate",
        threads=threads,
        inputs={
            "pretrain": pretrain_log,
            "train": train_log,
            "test": test_log,
            "schema": schema_path,
            "config": config,
        },
    )
    with _reporting(recorder):
        with recorder.stage("config"):
            values = _config_values(config)
            run_seed = _seed(values, seed)
            train_config = _train_config(values, run_seed)
            ctr_config = _ctr_config(values, run_seed)
            seed_list = [train_config.seed + k for k in range(seeds)]
            recorder.manifest.seed = train_config.seed
            dumped = _dump(pretrain=train_config, ctr=ctr_config)
        with recorder.stage("data"):
            if synthetic:
                spec, schema, pre, train_records, test_records = _synthetic_logs(values, run_seed)
                dumped.update(_dump(synthetic=spec))
            else:
                if pretrain_log is None or train_log is None or test_log is None:
                    raise ContractError("--pretrain-log, --train-log and --test-log are required without --synthetic")
                schema = _schema(values, schema_path)
                pre = read_event_log(pretrain_log, schema)
                train_records = read_event_log(train_log, schema)
                test_records = read_event_log(test_log, schema)
            recorder.manifest.config = dumped
            graph = build_pretrain_graph(pre, schema, top_level_int(values, "min_count", 1), threads)
        with recorder.stage("ablate"):
            result = _ablate(graph, train_records, test_records, train_config, ctr_config, seed_list, threads)
        with recorder.stage("report"):
            header = _flat_header(dumped, seeds=",".join(map(str, seed_list)))
            text = _write_report(ablation_frame(result), out, header)
            recorder.artifact("ablation", out)
            recorder.artifact("ablation_text", text)
        recorder.finish(out)

    _print_ablation(result)
    console.print(f"[green]✓ Report written to {out}[/]")


@app.command("memory-report")
def memory_report_cmd(
    graph_path: Path = typer.Argument(..., help="Graph file"),
    checkpoint: Path = typer.Argument(..., help="Checkpoint file"),
    out: Path = typer.Option(..., "--out", "-o", help="Aligned text report; key=value lines go to <out>.kv"),
    config: Optional[Path] = ConfigOption,
) -> None:
    """Compare the serving memory of the lookup table and inferred features."""
    recorder = RunRecorder("memory-report", inputs={"graph": graph_path, "checkpoint": checkpoint, "config": config})
    with _reporting(recorder):
        with recorder.stage("config"):
            cost = build_section(CostModel, _config_values(config), "cost")
            recorder.manifest.config = _dump(cost=cost)
        with recorder.stage("load"):
            graph = load_graph(graph_path)
            params = load_checkpoint(checkpoint)
            params.validate(graph.num_nodes, graph.num_relations)
        with recorder.stage("report"):
            report = memory_report(build_table(graph), params, cost, graph.nodes)
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(report.to_text(), encoding="utf-8")
            kv_path = Path(f"{out}.kv")
            kv_path.write_text(report.to_kv(), encoding="utf-8")
            recorder.artifact("memory_report", out)
            recorder.artifact("memory_report_kv", kv_path)
        recorder.finish(out)

    console.print(report.to_text(), markup=False, highlight=False)
    console.print(f"[green]✓ Report written to {out}[/]")


@app.command("edge-fit")
def edge_fit_cmd(
    graph_path: Path = typer.Argument(..., help="Graph file"),
    out: Path = typer.Option(..., "--out", "-o", help="Report TSV"),
    holdout: float = typer.Option(0.2, "--holdout", min=0.0, max=1.0, help="Fraction of edges held out"),
    min_eval_count: int = typer.Option(1, "--min-eval-count", min=1, help="Score held-out edges with at least this count"),
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Held-out edge attribute RMSE against the global-mean predictor."""
    recorder = RunRecorder("edge-fit", inputs={"graph": graph_path, "config": config})
    with _reporting(recorder):
        with recorder.stage("config"):
            values = _config_values(config)
            train_config = _train_config(values, _seed(values, seed))
            recorder.manifest.seed = train_config.seed
            dumped = _dump(pretrain=train_config)
            recorder.manifest.config = dumped
        with recorder.stage("load"):
            graph = load_graph(graph_path)
        with recorder.stage("fit"):
            result = edge_fit(graph, train_config, holdout, min_eval_count)
        with recorder.stage("report"):
            frame = pd.DataFrame(
                [
                    {
                        "rmse_model": result.rmse_model,
                        "rmse_mean": result.rmse_mean,
                        "improvement": result.improvement,
                        "train_edges": result.num_train_edges,
                        "heldout_edges": result.num_heldout_edges,
                    }
                ]
            )
            header = _flat_header(dumped, holdout=holdout, min_eval_count=min_eval_count)
            text = _write_report(frame, out, header)
            recorder.artifact("edge_fit", out)
            recorder.artifact("edge_fit_text", text)
        recorder.finish(out)

    console.print(
        f"[green]✓ RMSE {result.rmse_model:.4f} vs global mean {result.rmse_mean:.4f} "
        f"({result.improvement:.1%} lower)[/]"
    )


@app.command()
def synthesize(
    out_dir: Path = typer.Argument(..., help="Directory for pretrain.tsv, train.tsv, test.tsv, schema.conf"),
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Write the planted synthetic logs."""
    recorder = RunRecorder("synthesize", inputs={"config": config})
    with _reporting(recorder):
        with recorder.stage("config"):
            values = _config_values(config)
            spec = build_section(SyntheticSpec, values, "synthetic", {"seed": _seed(values, seed)})
            recorder.manifest.seed = spec.seed
            recorder.manifest.config = _dump(synthetic=spec)
        with recorder.stage("generate"):
            data = generate_synthetic(spec)
        with recorder.stage("save"):
            paths = data.write(out_dir)
            for role, path in paths.items():
                recorder.artifact(role, path)
        recorder.finish(out_dir / "schema.conf")

    console.print(f"[green]✓ Synthetic logs written to {out_dir}[/]")
    console.print(f"  Pretrain: {len(data.pretrain):,}  Train: {len(data.train):,}  Test: {len(data.test):,}")


@app.command()
def movielens(
    source_dir: Path = typer.Argument(..., help="Directory holding ratings.dat and movies.dat"),
    out_dir: Path = typer.Argument(..., help="Directory for the converted logs"),
    click_threshold: int = typer.Option(4, "--click-threshold", min=1, max=5, help="Ratings at or above count as clicks"),
    with_profile: bool = typer.Option(False, "--with-profile", help="Add age and occupation from users.dat"),
) -> None:
    """Convert MovieLens-1M into pretrain/train/test event logs."""
    recorder = RunRecorder("movielens", inputs={"source": source_dir})
    with _reporting(recorder):
        recorder.manifest.config = {"movielens": {"click_threshold": click_threshold, "with_profile": with_profile}}
        with recorder.stage("convert"):
            result = convert_movielens(source_dir, out_dir, click_threshold, include_user_profile=with_profile)
            for split, path in result.log_paths.items():
                recorder.artifact(split, path)
            recorder.artifact("schema", result.schema_path)
        recorder.finish(result.schema_path)

    console.print(f"[green]✓ MovieLens logs written to {out_dir}[/]")
    for split, rows in result.rows.items():
        console.print(f"  {split}: {rows:,} events")
    console.print(f"  Click rate: {result.click_rate:.2%}")


@app.command()
def runs(
    limit: int = typer.Option(20, "--limit", "-n", min=1),
    subcommand: Optional[str] = typer.Option(None, "--subcommand", help="Only runs of this subcommand"),
) -> None:
    """List recorded runs."""
    engine = make_engine(get_settings().database_url)
    init_db(engine)
    with session_scope(engine) as session:
        recorded = RunRepository(session).list_runs(limit=limit, subcommand=subcommand)
        table = Table(title="Recorded Runs")
        table.add_column("Run", style="cyan")
        table.add_column("Subcommand", style="white")
        table.add_column("Status", style="green")
        table.add_column("Seed", style="white")
        table.add_column("Started", style="white")
        table.add_column("Duration", style="white")
        table.add_column("Artifacts", style="white")
        for run in recorded:
            status = "✓ success" if run.status == "success" else f"✗ {run.status}"
            table.add_row(
                run.run_id[:12],
                run.subcommand,
                status,
                "-" if run.seed is None else str(run.seed),
                run.started_at.strftime("%Y-%m-%d %H:%M:%S"),
                "-" if run.duration_seconds is None else f"{run.duration_seconds:.1f}s",
                str(len(run.artifacts)),
            )
    engine.dispose()

    if not recorded:
        console.print("[dim]No runs recorded yet[/]")
        return
    console.print(table)


if __name__ == "__main__":
    app()
