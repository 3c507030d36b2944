"""
Tests for the downstream CTR model.
"""

import numpy as np
import pandas as pd
import pytest

from pcfgnn.config import CtrConfig, TrainConfig
from pcfgnn.ctr import featurize, load_ctr_model, predict_batch, predict_ctr, save_ctr_model, train_ctr, write_predictions
from pcfgnn.ctr.model import build_vocab, init_ctr_model
from pcfgnn.errors import ContractError, FormatError
from pcfgnn.model import init_params, params_checksum
from pcfgnn.sources import NoneSource, PcfSource, SescfSource, build_table
from tests.conftest import make_records, random_records

FAST = CtrConfig(embedding_dim=4, hidden_widths=(8,), epochs=3, batch_size=4, learning_rate=0.01)


class TestVocabulary:
    """Tests for field vocabularies."""

    def test_sorted_per_field(self, tiny_records, schema):
        """Values are numbered in sorted order per field."""
        vocab = build_vocab(tiny_records, schema)
        assert vocab[0] == {"u1": 0, "u2": 1, "u3": 2}
        assert vocab[1] == {"i1": 0, "i2": 1, "i3": 2}

    def test_unseen_values_use_oov_row(self, tiny_records, schema):
        """Unknown values map to the reserved last row."""
        model = init_ctr_model(schema, build_vocab(tiny_records, schema), 0, "none", FAST)
        ids = model.token_ids(make_records([(0, "u9", "i2")], schema))
        assert ids.tolist() == [[3, 1]]
        assert model.embeddings[0].shape == (4, 4)

    def test_multi_valued_cell_is_one_token(self, genre_schema):
        """A genre list is embedded as its raw cell."""
        records = make_records([(1, "u1", "Action|Comedy")], genre_schema)
        assert build_vocab(records, genre_schema)[1] == {"Action|Comedy": 0}


class TestGradients:
    """Finite-difference check of the CTR backward pass."""

    def test_loss_and_gradients(self, tiny_records, schema):
        """Every tensor and every cross scalar matches central differences."""
        config = FAST.model_copy(update={"dtype": "float64", "hidden_widths": (5, 3)})
        model = init_ctr_model(schema, build_vocab(tiny_records, schema), 1, "sescf", config)
        ids = model.token_ids(tiny_records)
        cross = np.random.default_rng(0).uniform(size=(len(tiny_records), 1))
        labels = np.array([r.label for r in tiny_records])
        _, grads, d_cross = model.loss_and_gradients(ids, cross, labels)

        step = 1e-6
        for name, tensor in model.named_tensors().items():
            for index in np.ndindex(tensor.shape):
                original = tensor[index]
                tensor[index] = original + step
                plus = model.loss_and_gradients(ids, cross, labels)[0]
                tensor[index] = original - step
                minus = model.loss_and_gradients(ids, cross, labels)[0]
                tensor[index] = original
                assert grads[name][index] == pytest.approx((plus - minus) / (2 * step), abs=1e-6)

        for index in np.ndindex(cross.shape):
            original = cross[index]
            cross[index] = original + step
            plus = model.loss_and_gradients(ids, cross, labels)[0]
            cross[index] = original - step
            minus = model.loss_and_gradients(ids, cross, labels)[0]
            cross[index] = original
            assert d_cross[index] == pytest.approx((plus - minus) / (2 * step), abs=1e-6)


class TestTraining:
    """Tests for CTR training and prediction."""

    def test_loss_decreases(self, schema):
        """Training lowers the mean log-loss on a learnable log."""
        rows = [(int(u == "u1"), u, i) for u in ("u1", "u2") for i in ("i1", "i2", "i3")] * 10
        records = make_records(rows, schema)
        result = train_ctr(records, NoneSource(schema), FAST.model_copy(update={"epochs": 20}))
        assert result.loss_trace[-1] < result.loss_trace[0]
        scores = predict_batch(result.model, make_records([(0, "u1", "i1"), (0, "u2", "i1")], schema), NoneSource(schema))
        assert scores[0] > scores[1]

    def test_none_source_width(self, tiny_records, schema):
        """Without cross features the input is the field embeddings only."""
        model = train_ctr(tiny_records, NoneSource(schema), FAST).model
        assert model.cross_width == 0
        assert model.input_dim == 2 * FAST.embedding_dim
        assert featurize(model, tiny_records[0], NoneSource(schema)).shape == (8,)

    def test_sescf_featurize(self, tiny_graph, tiny_records, schema):
        """The cross scalar follows the field embeddings."""
        source = SescfSource(build_table(tiny_graph))
        model = train_ctr(tiny_records, source, FAST).model
        x = featurize(model, tiny_records[0], source)
        assert x.shape == (9,)
        assert x[-1] == pytest.approx(0.5)

    def test_width_mismatch(self, tiny_graph, tiny_records, schema):
        """A model must be served with a source of the same width."""
        model = train_ctr(tiny_records, NoneSource(schema), FAST).model
        with pytest.raises(ContractError):
            predict_batch(model, tiny_records, SescfSource(build_table(tiny_graph)))

    def test_empty_log(self, schema):
        """Training needs data."""
        with pytest.raises(ContractError):
            train_ctr([], NoneSource(schema), FAST)

    def test_deterministic(self, tiny_graph, tiny_records):
        """Same inputs and seed give the same predictions."""
        params = init_params(tiny_graph.num_nodes, 1, TrainConfig(embedding_dim=3, layer_widths=(3,)))
        source = PcfSource(tiny_graph, params)
        a = predict_batch(train_ctr(tiny_records, source, FAST).model, tiny_records, source)
        b = predict_batch(train_ctr(tiny_records, source, FAST).model, tiny_records, source)
        np.testing.assert_array_equal(a, b)

    def test_predict_single(self, tiny_records, schema):
        """The single-record helper agrees with the batch."""
        source = NoneSource(schema)
        model = train_ctr(tiny_records, source, FAST).model
        assert predict_ctr(model, tiny_records[2], source) == pytest.approx(predict_batch(model, tiny_records, source)[2])


class TestFinetune:
    """Tests for fine-tuning the graph network through the CTR loss."""

    def test_caller_params_untouched(self, tiny_graph, tiny_records):
        """Fine-tuning updates a private copy only."""
        params = init_params(tiny_graph.num_nodes, 1, TrainConfig(embedding_dim=3, layer_widths=(3,)))
        before = params_checksum(params)
        result = train_ctr(tiny_records, PcfSource(tiny_graph, params), FAST.model_copy(update={"finetune": True}))
        assert params_checksum(params) == before
        assert result.finetuned
        assert params_checksum(result.model.pcf_params) != before
        assert result.source.params is result.model.pcf_params

    def test_finetune_ignored_for_table(self, tiny_graph, tiny_records):
        """A table has nothing to fine-tune."""
        result = train_ctr(tiny_records, SescfSource(build_table(tiny_graph)), FAST.model_copy(update={"finetune": True}))
        assert not result.finetuned


class TestPersistence:
    """Tests for the model file."""

    def test_save_and_load(self, tmp_path, tiny_graph, tiny_records):
        """A fine-tuned model reloads with identical predictions."""
        params = init_params(tiny_graph.num_nodes, 1, TrainConfig(embedding_dim=3, layer_widths=(3,)))
        result = train_ctr(tiny_records, PcfSource(tiny_graph, params), FAST.model_copy(update={"finetune": True}))
        path = tmp_path / "ctr.pcfc"
        save_ctr_model(result.model, path)
        loaded = load_ctr_model(path)
        assert loaded.vocab == result.model.vocab
        assert loaded.variant == "pcf"
        assert params_checksum(loaded.pcf_params) == params_checksum(result.model.pcf_params)
        source = PcfSource(tiny_graph, loaded.pcf_params)
        np.testing.assert_allclose(
            predict_batch(loaded, tiny_records, source),
            predict_batch(result.model, tiny_records, result.source),
            rtol=1e-6,
        )

    def test_wrong_container(self, tmp_path):
        """A graph file is not a CTR model."""
        path = tmp_path / "x.pcfc"
        path.write_bytes(b"PCFG" + bytes(40))
        with pytest.raises(FormatError):
            load_ctr_model(path)

    def test_predictions_file(self, tmp_path):
        """Predictions are written as label and probability columns."""
        path = tmp_path / "pred.tsv"
        write_predictions([1, 0], np.array([0.75, 0.25]), path)
        frame = pd.read_csv(path, sep="\t")
        assert list(frame.columns) == ["label", "predicted_probability"]
        assert frame["predicted_probability"].tolist() == [0.75, 0.25]

    def test_random_log_roundtrip_scores(self, tmp_path, schema):
        """A model trained without cross features scores the same after reload."""
        records = random_records(np.random.default_rng(1), schema, {"user": 5, "item": 5}, 60)
        model = train_ctr(records, NoneSource(schema), FAST).model
        path = tmp_path / "none.pcfc"
        save_ctr_model(model, path)
        np.testing.assert_array_equal(
            predict_batch(load_ctr_model(path), records, NoneSource(schema)),
            predict_batch(model, records, NoneSource(schema)),
        )
