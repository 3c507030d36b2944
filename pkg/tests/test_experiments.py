"""
Tests for the benchmark, ablation and edge-fit runners.

Tests marked ``slow`` run the desk-scale synthetic benchmark and take minutes.
"""

import math

import numpy as np
import pandas as pd
import pytest

from pcfgnn.config import CtrConfig, TrainConfig
from pcfgnn.evaluation import (
    DEFAULT_ABLATION,
    AblationRow,
    SyntheticSpec,
    ablation_frame,
    edge_fit,
    format_report_text,
    generate_synthetic,
    reports_frame,
    run_ablation,
    run_benchmark,
    write_report_tsv,
)
from pcfgnn.evaluation.experiments import BASELINE, build_pretrain_graph, holdout_edges

QUICK_PRETRAIN = TrainConfig(embedding_dim=4, layer_widths=(8, 4), epochs=10)
QUICK_CTR = CtrConfig(embedding_dim=4, hidden_widths=(8,), epochs=1, batch_size=64)
QUICK_SPEC = SyntheticSpec(
    num_users=30, num_items=20, pretrain_samples=1500, train_samples=600, test_samples=400, new_fraction=0.3
)


@pytest.fixture(scope="module")
def quick_data():
    return generate_synthetic(QUICK_SPEC)


@pytest.fixture(scope="module")
def quick_graph(quick_data):
    return build_pretrain_graph(quick_data.pretrain, quick_data.schema)


class TestBenchmark:
    """Tests for the three-source comparison."""

    def test_reports_and_deltas(self, quick_data):
        """One report per source, deltas against the no-cross-feature run."""
        result = run_benchmark(
            quick_data.pretrain, quick_data.train, quick_data.test, quick_data.schema, QUICK_PRETRAIN, QUICK_CTR
        )
        assert [r.name for r in result.reports] == [BASELINE, "SESCF", "PCF-GNN"]
        base = result.report(BASELINE)
        assert math.isnan(base.hit_rate)
        for name in ("SESCF", "PCF-GNN"):
            report = result.report(name)
            assert report.baseline == BASELINE
            assert report.delta_org == pytest.approx(report.auc_org - base.auc_org)
        assert result.report("PCF-GNN").hit_rate > result.report("SESCF").hit_rate
        assert result.report("PCF-GNN").num_new >= 120
        assert len(result.pretrain.loss_trace) == QUICK_PRETRAIN.epochs

    def test_threads_do_not_change_results(self, quick_data):
        """Running sources concurrently gives the same reports."""
        args = (quick_data.pretrain, quick_data.train, quick_data.test, quick_data.schema, QUICK_PRETRAIN, QUICK_CTR)
        serial = reports_frame(run_benchmark(*args, threads=1).reports)
        parallel = reports_frame(run_benchmark(*args, threads=3).reports)
        pd.testing.assert_frame_equal(serial, parallel)


class TestAblation:
    """Tests for the ablation matrix."""

    def test_row_configs(self):
        """Rows toggle layers, loss weighting and fine-tuning."""
        base, gnn, wl, ft = (row.configs(QUICK_PRETRAIN, QUICK_CTR, seed=3) for row in DEFAULT_ABLATION)
        assert base[0].layer_widths == () and not base[0].weighted_loss
        assert gnn[0].layer_widths == (8, 4) and not gnn[0].weighted_loss
        assert wl[0].weighted_loss and not wl[1].finetune
        assert ft[1].finetune
        assert base[0].seed == base[1].seed == 3

    def test_gnn_row_restores_default_layers(self):
        """A GNN row on a layerless base config uses the default widths."""
        pre, _ = DEFAULT_ABLATION[1].configs(TrainConfig(layer_widths=()), QUICK_CTR, seed=0)
        assert pre.layer_widths == TrainConfig().layer_widths

    def test_identical_rows_identical_aucs(self, quick_data, quick_graph):
        """Two rows with the same settings report the same AUCs."""
        rows = (
            AblationRow("A", gnn=True, weighted_loss=True, finetune=False),
            AblationRow("B", gnn=True, weighted_loss=True, finetune=False),
        )
        result = run_ablation(
            quick_graph, quick_data.train, quick_data.test, QUICK_PRETRAIN, QUICK_CTR, rows=rows, seeds=(0, 1), threads=2
        )
        assert result.row("A").mean_auc == result.row("B").mean_auc
        assert result.row("A").stderr_auc == result.row("B").stderr_auc
        assert result.seeds == [0, 1]

    def test_all_rows_report(self, quick_data, quick_graph):
        """The four default rows, fine-tuning included, produce finite AUCs."""
        result = run_ablation(quick_graph, quick_data.train, quick_data.test, QUICK_PRETRAIN, QUICK_CTR)
        frame = ablation_frame(result)
        assert frame["name"].tolist() == [row.name for row in DEFAULT_ABLATION]
        assert np.isfinite(frame["mean_auc"]).all()
        assert (frame["stderr_auc"] == 0).all()


class TestEdgeFit:
    """Tests for held-out edge prediction."""

    def test_holdout_keeps_endpoints_trained(self, quick_graph):
        """Every held-out edge joins two nodes that keep a training edge."""
        kept, held = holdout_edges(quick_graph, 0.3, seed=0)
        assert len(kept) + len(held) == quick_graph.num_edges
        assert 0 < len(held) <= round(0.3 * quick_graph.num_edges)
        trained = set(quick_graph.edge_u[kept].tolist()) | set(quick_graph.edge_v[kept].tolist())
        for k in held.tolist():
            assert quick_graph.edge_u[k] in trained
            assert quick_graph.edge_v[k] in trained

    def test_holdout_is_seeded(self, quick_graph):
        """The split depends only on the seed."""
        a = holdout_edges(quick_graph, 0.2, seed=5)
        b = holdout_edges(quick_graph, 0.2, seed=5)
        np.testing.assert_array_equal(a[1], b[1])

    def test_result_fields(self, quick_graph):
        """The runner reports both RMSEs and the edge counts."""
        result = edge_fit(quick_graph, QUICK_PRETRAIN, holdout_fraction=0.2)
        assert result.num_train_edges + result.num_heldout_edges == quick_graph.num_edges
        assert result.rmse_model >= 0 and result.rmse_mean > 0
        assert math.isfinite(result.improvement)


class TestReportFiles:
    """Tests for the report writers."""

    def test_tsv_header_and_rows(self, tmp_path):
        """Header lines precede a TSV body."""
        frame = pd.DataFrame({"name": ["a", "b"], "auc": [0.61, 0.625]})
        path = tmp_path / "report.tsv"
        write_report_tsv(frame, path, {"seed": 3, "epochs": 10})
        lines = path.read_text().splitlines()
        assert lines[:3] == ["# seed=3", "# epochs=10", "name\tauc"]
        assert pd.read_csv(path, sep="\t", comment="#")["auc"].tolist() == [0.61, 0.625]

    def test_text_table(self):
        """The text rendering carries the same header."""
        text = format_report_text(pd.DataFrame({"name": ["a"], "auc": [0.5]}), {"seed": 1})
        assert text.startswith("# seed=1\n")
        assert "0.5000" in text


@pytest.mark.slow
class TestSyntheticBenchmark:
    """Direction-of-effect checks on the desk-scale planted benchmark."""

    SEEDS = range(5)

    @pytest.fixture(scope="class")
    def benchmark_runs(self):
        runs = []
        for seed in self.SEEDS:
            data = generate_synthetic(SyntheticSpec(seed=seed))
            runs.append(
                run_benchmark(
                    data.pretrain,
                    data.train,
                    data.test,
                    data.schema,
                    TrainConfig(seed=seed),
                    CtrConfig(seed=seed),
                )
            )
        return runs

    def test_auc_ordering(self, benchmark_runs):
        """No cross features < table features <= inferred features, by mean AUC."""
        mean = {
            name: np.mean([run.report(name).auc_org for run in benchmark_runs])
            for name in (BASELINE, "SESCF", "PCF-GNN")
        }
        assert mean[BASELINE] < mean["SESCF"] <= mean["PCF-GNN"]
        assert mean["PCF-GNN"] - mean[BASELINE] >= 0.005

    def test_generalizes_to_new_pairs(self, benchmark_runs):
        """Inferred features cover more samples and help more on New pairs."""
        for run in benchmark_runs:
            assert run.report("PCF-GNN").hit_rate > run.report("SESCF").hit_rate
            assert run.report("PCF-GNN").num_new >= 0.2 * run.report("PCF-GNN").num_org
        delta_pcf = np.mean([run.report("PCF-GNN").delta_new for run in benchmark_runs])
        delta_sescf = np.mean([run.report("SESCF").delta_new for run in benchmark_runs])
        assert delta_pcf > delta_sescf

    def test_ablation_pattern(self):
        """Adding layers and loss weighting does not hurt, within one standard error."""
        data = generate_synthetic(SyntheticSpec())
        graph = build_pretrain_graph(data.pretrain, data.schema)
        result = run_ablation(
            graph, data.train, data.test, TrainConfig(), CtrConfig(), seeds=tuple(self.SEEDS), threads=4
        )
        base, gnn, wl, ft = (result.row(row.name) for row in DEFAULT_ABLATION)
        assert wl.mean_auc >= gnn.mean_auc - max(wl.stderr_auc, gnn.stderr_auc)
        assert gnn.mean_auc >= base.mean_auc - max(gnn.stderr_auc, base.stderr_auc)
        assert math.isfinite(ft.mean_auc)

    def test_edge_fit_beats_global_mean(self):
        """Default benchmark: held-out edges seen 30+ times fit at least 30% better than the mean."""
        data = generate_synthetic(SyntheticSpec())
        graph = build_pretrain_graph(data.pretrain, data.schema)
        result = edge_fit(graph, TrainConfig(), holdout_fraction=0.2, min_eval_count=30)
        assert result.num_heldout_edges >= 20
        assert result.improvement >= 0.3
