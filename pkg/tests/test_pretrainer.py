"""
Tests for pre-training: loss, gradients, optimizers and the training loop.
"""

import math

import numpy as np
import pandas as pd
import pytest

from pcfgnn.config import TrainConfig
from pcfgnn.errors import ContractError, TrainingDivergedError
from pcfgnn.graph import build_graph
from pcfgnn.ingest.events import RelationSchema, accumulate_stats
from pcfgnn.model import init_params, params_checksum, predict_pairs
from pcfgnn.training import (
    Adam,
    Sgd,
    backward,
    check_gradients,
    edge_weight,
    loss,
    make_optimizer,
    train,
    write_loss_trace,
)
from tests.conftest import make_records, random_graph

SMALL = TrainConfig(embedding_dim=3, layer_widths=(4, 3), epochs=20, learning_rate=0.05)


@pytest.fixture
def thirty_percent_edge(schema):
    """One user-item edge with 3 clicks in 10 impressions."""
    records = make_records([(int(k < 3), "u1", "i1") for k in range(10)], schema)
    return build_graph(accumulate_stats(records, schema), schema)


class TestEdgeWeight:
    """Tests for the confidence weight."""

    def test_value(self):
        """ln(count + t)."""
        assert edge_weight(4, 1.0) == pytest.approx(math.log(5))

    def test_grows_with_count(self):
        """More impressions give more weight."""
        assert edge_weight(100, 1.0) > edge_weight(10, 1.0) > edge_weight(1, 1.0)

    @pytest.mark.parametrize(("count", "t"), [(1, 0.0), (1, -1.0), (0, 1.0)])
    def test_rejects_bad_input(self, count, t):
        """Non-positive smoothing or zero counts are contract errors."""
        with pytest.raises(ContractError):
            edge_weight(count, t)


class TestLoss:
    """Tests for the pre-training objective."""

    def test_matches_manual_sum(self, tiny_graph):
        """The loss is the weighted sum of squared residuals."""
        params = init_params(tiny_graph.num_nodes, 1, SMALL).astype(np.float64)
        p = predict_pairs(tiny_graph, params, tiny_graph.edge_u, tiny_graph.edge_v)
        w = np.log(tiny_graph.edge_count + 1.0)
        expected = np.sum(w * (p - tiny_graph.edge_attribute.astype(np.float64)) ** 2)
        assert loss(tiny_graph, params, None, SMALL) == pytest.approx(expected)

    def test_unweighted(self, tiny_graph):
        """Without weighting every edge counts once."""
        config = SMALL.model_copy(update={"weighted_loss": False})
        params = init_params(tiny_graph.num_nodes, 1, config).astype(np.float64)
        p = predict_pairs(tiny_graph, params, tiny_graph.edge_u, tiny_graph.edge_v)
        expected = np.sum((p - tiny_graph.edge_attribute.astype(np.float64)) ** 2)
        assert loss(tiny_graph, params, None, config) == pytest.approx(expected)

    def test_empty_edge_set(self, tiny_graph):
        """An empty edge set has zero loss and zero gradients."""
        params = init_params(tiny_graph.num_nodes, 1, SMALL)
        value, grads = backward(tiny_graph, params, np.array([], dtype=np.int64), SMALL)
        assert value == 0.0
        assert all(not g.any() for g in grads.named_tensors().values())

    def test_edge_set_out_of_range(self, tiny_graph):
        """Edge ids must exist."""
        params = init_params(tiny_graph.num_nodes, 1, SMALL)
        with pytest.raises(ContractError):
            loss(tiny_graph, params, np.array([99]), SMALL)


class TestGradients:
    """Finite-difference checks of the analytic gradients."""

    @pytest.mark.parametrize("layer_widths", [(), (3,), (4, 3)], ids=["K0", "K1", "K2"])
    def test_random_graphs(self, layer_widths):
        """Gradients agree on 20 random small graphs with one or two relations."""
        config = SMALL.model_copy(update={"layer_widths": layer_widths})
        for seed in range(20):
            graph = random_graph(seed, num_relations=1 + seed % 2, max_nodes=8)
            params = init_params(graph.num_nodes, graph.num_relations, config, seed=seed)
            report = check_gradients(graph, params, config)
            assert report.passed, (seed, report.mismatches[:3])
            assert report.checked > 0

    def test_edge_subset(self):
        """Gradients restricted to a minibatch are also exact."""
        graph = random_graph(7, num_relations=2, max_nodes=9)
        params = init_params(graph.num_nodes, graph.num_relations, SMALL)
        report = check_gradients(graph, params, SMALL, edge_set=np.array([0, 2]))
        assert report.passed

    @pytest.mark.parametrize("seed", range(5))
    def test_partition_sums_to_full_batch(self, seed):
        """Minibatch gradients over a partition of the edges add up to the full-batch gradient."""
        graph = random_graph(seed, num_relations=1 + seed % 2, max_nodes=10)
        params = init_params(graph.num_nodes, graph.num_relations, SMALL, seed=seed).astype(np.float64)
        full_value, full = backward(graph, params, None, SMALL)

        order = np.random.default_rng(seed).permutation(graph.num_edges)
        total_value = 0.0
        total = {name: np.zeros_like(g) for name, g in full.named_tensors().items()}
        for batch in np.array_split(order, 3):
            value, grads = backward(graph, params, np.sort(batch), SMALL)
            total_value += value
            for name, g in grads.named_tensors().items():
                total[name] += g

        assert total_value == pytest.approx(full_value, rel=1e-10)
        for name, g in full.named_tensors().items():
            np.testing.assert_allclose(total[name], g, rtol=1e-9, atol=1e-12, err_msg=name)

    def test_unweighted_and_zero_layers(self, tiny_graph):
        """The check also holds without weighting and without graph layers."""
        config = TrainConfig(embedding_dim=3, layer_widths=(), weighted_loss=False)
        params = init_params(tiny_graph.num_nodes, 1, config)
        assert check_gradients(tiny_graph, params, config).passed


class TestOptimizers:
    """Tests for in-place optimizer updates."""

    def test_sgd_step(self):
        """SGD subtracts lr times the gradient."""
        x = np.array([1.0, 2.0])
        Sgd(0.5).step({"x": x}, {"x": np.array([2.0, -2.0])})
        np.testing.assert_allclose(x, [0.0, 3.0])

    def test_adam_first_step_is_lr_sized(self):
        """Bias correction makes the first Adam step about lr in magnitude."""
        x = np.zeros(3)
        Adam(0.1).step({"x": x}, {"x": np.array([5.0, -0.01, 1e3])})
        np.testing.assert_allclose(x, [-0.1, 0.1, -0.1], rtol=1e-5)

    def test_unknown_optimizer(self):
        """Only adam and sgd exist."""
        with pytest.raises(ContractError):
            make_optimizer("lbfgs", 0.1)


class TestTrain:
    """Tests for the training loop."""

    def test_fits_single_edge(self, thirty_percent_edge):
        """One edge is fit to within 0.01 of its click rate in 200 epochs."""
        result = train(thirty_percent_edge, TrainConfig(epochs=200))
        assert len(result.loss_trace) == 200
        graph = thirty_percent_edge
        p = predict_pairs(graph, result.params, graph.edge_u, graph.edge_v)
        assert abs(float(p[0]) - 0.3) < 0.01
        assert result.final_loss < 1e-3

    def test_sgd_loss_non_increasing(self, thirty_percent_edge):
        """Full-batch SGD with a small step never raises the loss over the first 10 epochs."""
        config = TrainConfig(epochs=10, optimizer="sgd", learning_rate=0.01, dtype="float64")
        trace = np.array(train(thirty_percent_edge, config).loss_trace)
        assert len(trace) == 10
        assert (np.diff(trace) <= 1e-12).all(), trace
        assert trace[-1] < trace[0]

    def test_loss_decreases(self):
        """Full-batch Adam lowers the loss on a random graph."""
        graph = random_graph(3, num_relations=2, max_nodes=12)
        result = train(graph, SMALL.model_copy(update={"epochs": 50}))
        assert result.loss_trace[-1] < result.loss_trace[0]

    def test_deterministic(self):
        """Same graph, config and seed give identical params and trace."""
        graph = random_graph(4, max_nodes=10)
        config = SMALL.model_copy(update={"batch_size": 3, "fanout": 2})
        a, b = train(graph, config), train(graph, config)
        assert a.loss_trace == b.loss_trace
        assert params_checksum(a.params) == params_checksum(b.params)

    def test_seed_changes_result(self):
        """A different seed gives different params."""
        graph = random_graph(4, max_nodes=10)
        a = train(graph, SMALL)
        b = train(graph, SMALL.model_copy(update={"seed": 1}))
        assert params_checksum(a.params) != params_checksum(b.params)

    def test_empty_graph(self):
        """Training needs at least one edge."""
        schema = RelationSchema(fields=("user", "item"), relations=(("user", "item"),))
        with pytest.raises(ContractError):
            train(build_graph({}, schema), SMALL)

    @pytest.mark.parametrize("optimizer", ["adam", "sgd"])
    def test_divergence_is_reported(self, tiny_graph, optimizer):
        """An absurd learning rate stops training with a divergence error."""
        config = SMALL.model_copy(update={"learning_rate": 1e39, "optimizer": optimizer})
        with np.errstate(all="ignore"), pytest.raises(TrainingDivergedError, match="learning rate"):
            train(tiny_graph, config)

    def test_loss_trace_file(self, tmp_path):
        """The trace is written as epoch and loss columns."""
        path = tmp_path / "loss.tsv"
        write_loss_trace([3.0, 2.0, 1.5], path)
        frame = pd.read_csv(path, sep="\t")
        assert frame["epoch"].tolist() == [1, 2, 3]
        assert frame["loss"].tolist() == [3.0, 2.0, 1.5]
