"""
Tests for the foresight model, distillation data and minimum-uncertainty
action selection.
"""

import numpy as np
import pytest

from introspect_vmc.env.types import Task
from introspect_vmc.exceptions import (
    ConfigurationError,
    DatasetError,
    DimensionError,
    InsufficientSamplesError,
)
from introspect_vmc.foresight import (
    ForesightDataset,
    ForesightModel,
    action_features,
    collect_distillation_data,
    min_uncertainty_action,
    read_foresight_dataset,
    train_foresight,
    write_foresight_dataset,
)
from introspect_vmc.foresight.distillation import choose_target_transform, r_squared, target_skew
from introspect_vmc.foresight.selection import candidate_action
from introspect_vmc.nn import LstmMemory, gradient_check, mean_squared_error


def synthetic_dataset(n=150, width=8, targets=None, seed=0):
    rng = np.random.default_rng(seed)
    embeddings = rng.normal(size=(n, width))
    features = np.concatenate([rng.normal(scale=0.01, size=(n, 3)), np.full((n, 3), 1.0 / 3.0)], axis=1)
    if targets is None:
        targets = 0.2 + 0.1 * np.tanh(embeddings[:, 0])
    return ForesightDataset(
        header={'type': 'header', 'count': n},
        embeddings=embeddings,
        features=features,
        targets=np.asarray(targets, dtype=np.float64),
        episode_ids=np.zeros(n, dtype=np.int64),
        ticks=np.arange(n, dtype=np.int64),
    )


class TestForesightModel:
    """Tests for ForesightModel."""

    def test_predictions_are_nonnegative(self):
        """Test that the softplus output never predicts negative uncertainty."""
        model = ForesightModel(8, 16, rng=np.random.default_rng(0))
        rng = np.random.default_rng(1)
        preds = model.predict_batch(rng.normal(scale=10.0, size=(50, 8)), rng.normal(scale=10.0, size=(50, 6)))

        assert np.all(preds >= 0.0)

    def test_single_embedding_broadcasts_over_candidates(self):
        """Test that one embedding scores many candidate actions."""
        model = ForesightModel(8, 16)
        preds = model.predict_batch(np.zeros(8), np.zeros((5, 6)))

        assert preds.shape == (5,)
        assert np.all(preds == preds[0])

    def test_wrong_widths_raise(self):
        """Test that embedding and feature widths are enforced."""
        model = ForesightModel(8, 16)

        with pytest.raises(DimensionError):
            model.predict_batch(np.zeros(7), np.zeros(6))
        with pytest.raises(DimensionError):
            model.predict_batch(np.zeros(8), np.zeros(5))

    def test_unknown_transform_raises(self):
        """Test that only the known target transforms are accepted."""
        with pytest.raises(ConfigurationError):
            ForesightModel(8, 16, target_transform='sqrt')

    def test_gradients_match_finite_differences(self):
        """Test the regression gradients against central differences."""
        model = ForesightModel(4, 5, rng=np.random.default_rng(2))
        rng = np.random.default_rng(3)
        inputs = rng.normal(size=(6, 10))
        targets = rng.uniform(size=6)

        def loss(backward):
            pred, cache = model.forward(inputs)
            result = mean_squared_error(pred, targets)
            if backward:
                model.backward(result.grads['pred'], cache)
            return result.total

        assert gradient_check(model, loss) < 1e-6

    def test_save_and_load(self, tmp_path):
        """Test that a reloaded model predicts identically."""
        model = ForesightModel(8, 16, 'log1p', np.random.default_rng(4))
        model.save(tmp_path / 'foresight.ckpt')
        loaded = ForesightModel.load(tmp_path / 'foresight.ckpt')
        e = np.random.default_rng(5).normal(size=(3, 8))
        f = np.random.default_rng(6).normal(size=(3, 6))

        assert loaded.target_transform == 'log1p'
        np.testing.assert_array_equal(model.predict_batch(e, f), loaded.predict_batch(e, f))

    def test_loading_policy_checkpoint_raises(self, tmp_path, oracle_policy):
        """Test that a policy checkpoint is not accepted as a foresight model."""
        oracle_policy.save(tmp_path / 'policy.ckpt')

        with pytest.raises(ConfigurationError):
            ForesightModel.load(tmp_path / 'policy.ckpt')

    def test_action_features(self):
        """Test the delta-plus-probabilities feature layout."""
        features = action_features([0.01, 0.0, -0.01], [0.0, 0.0, 0.0])

        np.testing.assert_allclose(features, [0.01, 0.0, -0.01, 1 / 3, 1 / 3, 1 / 3])


class TestDistillationData:
    """Tests for distillation data collection and its file format."""

    @pytest.fixture
    def dataset(self, oracle_policy):
        """Two short exploration episodes."""
        return collect_distillation_data(oracle_policy, Task.PICK_PLACE, 2, seed=3, samples=3, max_steps=5)

    def test_pairs_tick_with_next_uncertainty(self, dataset, oracle_policy):
        """Test that L-tick episodes yield L - 1 samples with the expected widths."""
        assert len(dataset) == 8
        assert dataset.embeddings.shape == (8, oracle_policy.config.lstm_width)
        assert dataset.features.shape == (8, 6)
        assert np.all(dataset.targets >= 0.0)
        assert list(dataset.ticks[:4]) == [0, 1, 2, 3]
        assert list(dataset.episode_ids) == [0, 0, 0, 0, 1, 1, 1, 1]
        assert dataset.header['count'] == 8

    def test_header_records_target_transform(self, dataset):
        """Test that the header carries the skew and the regression target transform."""
        skew_value, transform = choose_target_transform(dataset.targets)

        assert dataset.header['target_transform'] == transform
        assert dataset.header['target_skew'] == skew_value
        assert transform in ('identity', 'log1p')

    def test_collection_is_deterministic(self, dataset, oracle_policy):
        """Test that equal seeds produce equal data."""
        again = collect_distillation_data(oracle_policy, Task.PICK_PLACE, 2, seed=3, samples=3, max_steps=5)

        np.testing.assert_array_equal(again.targets, dataset.targets)
        np.testing.assert_array_equal(again.embeddings, dataset.embeddings)

    def test_file_round_trip(self, tmp_path, dataset):
        """Test writing and reading the distillation file."""
        path = write_foresight_dataset(tmp_path / 'foresight.jsonl', dataset)
        loaded = read_foresight_dataset(path)

        assert loaded.header == dataset.header
        np.testing.assert_array_equal(loaded.features, dataset.features)
        np.testing.assert_array_equal(loaded.targets, dataset.targets)

    def test_count_mismatch_raises(self, tmp_path, dataset):
        """Test that a header count disagreeing with the rows is rejected."""
        path = write_foresight_dataset(tmp_path / 'foresight.jsonl', dataset)
        lines = path.read_text().splitlines()
        path.write_text('\n'.join(lines[:-1]) + '\n')

        with pytest.raises(DatasetError, match='declares'):
            read_foresight_dataset(path)

    def test_missing_file_raises(self, tmp_path):
        """Test that a missing distillation file is reported."""
        with pytest.raises(DatasetError):
            read_foresight_dataset(tmp_path / 'absent.jsonl')


class TestTrainForesight:
    """Tests for train_foresight."""

    def test_learns_smooth_target(self):
        """Test that training beats the constant predictor on held-out data."""
        dataset = synthetic_dataset()
        result = train_foresight(dataset, seed=0, epochs=60, batch_size=16, learning_rate=1e-2, hidden_width=16)

        assert result.report['heldout_samples'] == 30
        assert result.report['target_transform'] == 'identity'
        assert result.report['heldout_r2'] > 0.0
        assert len(result.curves) == 60

    def test_training_is_deterministic(self):
        """Test that equal seeds give identical reports."""
        dataset = synthetic_dataset()
        first = train_foresight(dataset, seed=1, epochs=3, hidden_width=8)
        second = train_foresight(dataset, seed=1, epochs=3, hidden_width=8)

        assert first.report == second.report

    def test_skewed_targets_use_log_transform(self):
        """Test that heavily skewed targets switch to log1p regression."""
        targets = np.zeros(150)
        targets[:3] = 100.0
        result = train_foresight(synthetic_dataset(targets=targets), seed=0, epochs=1, hidden_width=8)

        assert result.report['target_transform'] == 'log1p'
        assert result.model.target_transform == 'log1p'

    def test_header_transform_is_used(self):
        """Test that the transform recorded in the dataset header drives training."""
        dataset = synthetic_dataset()
        dataset.header['target_transform'] = 'log1p'
        result = train_foresight(dataset, seed=0, epochs=1, hidden_width=8)

        assert result.report['target_transform'] == 'log1p'
        assert result.model.target_transform == 'log1p'

    def test_unknown_header_transform_raises(self):
        dataset = synthetic_dataset()
        dataset.header['target_transform'] = 'sqrt'

        with pytest.raises(DatasetError, match='sqrt'):
            train_foresight(dataset, seed=0, epochs=1)

    def test_too_few_samples_raise(self):
        """Test that small datasets are rejected."""
        with pytest.raises(InsufficientSamplesError):
            train_foresight(synthetic_dataset(n=50), seed=0)

    def test_negative_targets_raise(self):
        """Test that uncertainty targets must be nonnegative."""
        targets = np.full(150, 0.1)
        targets[0] = -0.1

        with pytest.raises(DatasetError):
            train_foresight(synthetic_dataset(targets=targets), seed=0)

    def test_helpers(self):
        """Test the R^2 and skew helpers on simple inputs."""
        assert r_squared(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 1.0
        assert r_squared(np.array([1.5, 1.5]), np.array([1.0, 2.0])) == 0.0
        assert target_skew(np.ones(5)) == 0.0


class TestMinUncertaintyAction:
    """Tests for minimum-uncertainty action selection."""

    def test_selects_argmin_of_scores(self, oracle_policy):
        """Test that the chosen candidate has the lowest predicted uncertainty."""
        foresight = ForesightModel(oracle_policy.config.lstm_width, 8, rng=np.random.default_rng(7))
        s = np.random.default_rng(8).normal(size=oracle_policy.config.state_width)
        mem = LstmMemory.zeros(oracle_policy.config.lstm_width)
        selection = min_uncertainty_action(oracle_policy, foresight, s, mem, 6, noise_root=2, tick=1)

        assert selection.index == int(np.argmin(selection.scores))
        assert selection.scores.shape == (6,)
        assert selection.action == candidate_action(selection.samples, selection.index)
        _, expected_mem = oracle_policy.lstm_forward(s, mem)
        assert selection.memory.equals(expected_mem)

    def test_ties_pick_first_candidate(self, oracle_policy):
        """Test that equal scores resolve to the lowest sample index."""
        foresight = ForesightModel(oracle_policy.config.lstm_width, 8)
        foresight.output.params['weight'].fill(0.0)
        s = np.zeros(oracle_policy.config.state_width)
        selection = min_uncertainty_action(
            oracle_policy, foresight, s, LstmMemory.zeros(oracle_policy.config.lstm_width), 4, noise_root=0
        )

        assert selection.index == 0

    def test_needs_a_candidate(self, oracle_policy):
        """Test that zero candidates are rejected."""
        foresight = ForesightModel(oracle_policy.config.lstm_width, 8)

        with pytest.raises(InsufficientSamplesError):
            min_uncertainty_action(
                oracle_policy, foresight, np.zeros(oracle_policy.config.state_width),
                LstmMemory.zeros(oracle_policy.config.lstm_width), 0, noise_root=0,
            )
