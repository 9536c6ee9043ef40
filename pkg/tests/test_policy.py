"""
Tests for the policy configuration, network, behavioral-cloning training and
closed-loop rollouts.
"""

import numpy as np
import pytest

from introspect_vmc.env.demos import generate_demos
from introspect_vmc.env.types import Gripper, ObservationMode, Task
from introspect_vmc.exceptions import ConfigurationError, DatasetError, DimensionError, InvalidNoiseError
from introspect_vmc.nn import LossWeights, LstmMemory, gradient_check
from introspect_vmc.policy import PolicyConfig, PolicyModel, TrainingConfig, train_policy
from introspect_vmc.policy.rollout import Controller, RolloutContext, rollout
from introspect_vmc.policy.training import (
    BatchUnroll,
    EpisodeArrays,
    episode_arrays,
    frame_buffers,
    read_curves,
    split_episodes,
    write_curves,
)


def fake_episode(frame_shape, ticks, rng):
    """Random policy inputs and targets for one episode."""
    return EpisodeArrays(
        frames=rng.normal(size=(ticks,) + frame_shape),
        proprio=rng.normal(size=(ticks, 4)),
        delta_ee=rng.normal(scale=0.01, size=(ticks, 3)),
        gripper=np.eye(3)[rng.integers(3, size=ticks)],
        q_obj=rng.normal(size=(ticks, 3)),
        q_ee=rng.normal(size=(ticks, 3)),
    )


@pytest.fixture(scope='module')
def oracle_demos():
    """Four oracle-state pick-and-place demonstrations."""
    return generate_demos(Task.PICK_PLACE, 4, 0, ObservationMode.ORACLE_STATE, horizon=60)


class TestPolicyConfig:
    """Tests for PolicyConfig validation."""

    def test_defaults_are_valid(self):
        """Test that the default configuration builds."""
        config = PolicyConfig()

        assert config.state_width == 32 + 16

    @pytest.mark.parametrize('overrides', [
        {'frames': 0},
        {'n_fc': 3, 'n_dropout_layers': 3},
        {'n_fc': 2, 'n_dropout_layers': 1},
        {'lam': 1.5},
        {'activation': 'gelu'},
        {'init_rate': 1.0},
        {'dropout_free': True},
        {'conv_channels': (4,)},
    ])
    def test_invalid_values_raise(self, overrides):
        """Test that inconsistent architectures are rejected."""
        with pytest.raises(ConfigurationError):
            PolicyConfig(**overrides)

    def test_dropout_free_variant(self):
        """Test that a dropout-free policy declares no dropout layers."""
        config = PolicyConfig(dropout_free=True, n_dropout_layers=0)

        assert PolicyModel(config).dropout_layers == []

    def test_architecture_round_trip(self, grid_config):
        """Test that a config survives its checkpoint description."""
        assert PolicyConfig.from_architecture(grid_config.architecture()) == grid_config

    def test_foreign_architecture_raises(self, grid_config):
        """Test that a non-policy architecture is rejected."""
        arch = dict(grid_config.architecture(), kind='foresight')

        with pytest.raises(ConfigurationError):
            PolicyConfig.from_architecture(arch)


class TestPolicyModel:
    """Tests for PolicyModel."""

    def test_encode_width(self, oracle_policy, oracle_demos):
        """Test that the state representation has the configured width."""
        step = oracle_demos.records[0].steps[0]
        s = oracle_policy.encode([step.observation] * 2, step.proprio)

        assert s.shape == (oracle_policy.config.state_width,)

    def test_wrong_buffer_length_raises(self, oracle_policy, oracle_demos):
        """Test that the observation buffer must hold K frames."""
        step = oracle_demos.records[0].steps[0]

        with pytest.raises(DimensionError):
            oracle_policy.encode([step.observation] * 3, step.proprio)

    def test_stochastic_pass_replays_with_same_generator(self, oracle_policy):
        """Test that equal generator states give equal stochastic outputs."""
        s = np.random.default_rng(0).normal(size=oracle_policy.config.state_width)
        mem = LstmMemory.zeros(oracle_policy.config.lstm_width)
        first, _, _ = oracle_policy.policy_step(s, mem, np.random.default_rng(3), stochastic=True)
        second, _, _ = oracle_policy.policy_step(s, mem, np.random.default_rng(3), stochastic=True)
        third, _, _ = oracle_policy.policy_step(s, mem, np.random.default_rng(4), stochastic=True)

        np.testing.assert_array_equal(first.delta_ee, second.delta_ee)
        assert not np.array_equal(first.delta_ee, third.delta_ee)

    def test_stochastic_pass_without_generator_raises(self, oracle_policy):
        """Test that a stochastic pass needs a noise source."""
        s = np.zeros(oracle_policy.config.state_width)

        with pytest.raises(InvalidNoiseError):
            oracle_policy.policy_step(s, LstmMemory.zeros(8), stochastic=True)

    def test_deterministic_pass_is_repeatable(self, grid_policy):
        """Test that the deterministic pass ignores randomness entirely."""
        s = np.random.default_rng(1).normal(size=grid_policy.config.state_width)
        mem = LstmMemory.zeros(grid_policy.config.lstm_width)
        first, e1, m1 = grid_policy.policy_step(s, mem)
        second, e2, m2 = grid_policy.policy_step(s, mem)

        np.testing.assert_array_equal(first.gripper_logits, second.gripper_logits)
        np.testing.assert_array_equal(e1, e2)
        assert m1.equals(m2)

    def test_save_and_load(self, tmp_path, grid_policy):
        """Test that a reloaded policy reproduces the original outputs."""
        grid_policy.save(tmp_path / 'policy.ckpt')
        loaded = PolicyModel.load(tmp_path / 'policy.ckpt')
        s = np.random.default_rng(2).normal(size=grid_policy.config.state_width)
        mem = LstmMemory.zeros(grid_policy.config.lstm_width)

        original, _, _ = grid_policy.policy_step(s, mem, np.random.default_rng(9), stochastic=True)
        restored, _, _ = loaded.policy_step(s, mem, np.random.default_rng(9), stochastic=True)

        assert loaded.config == grid_policy.config
        np.testing.assert_array_equal(original.delta_ee, restored.delta_ee)

    @pytest.mark.parametrize('fixture_name,frame_shape,max_checks', [
        ('oracle_policy', (22,), 20),
        ('grid_policy', (6, 16, 16), 8),
    ])
    def test_full_model_gradients(self, request, fixture_name, frame_shape, max_checks):
        """Test end-to-end BPTT gradients of the imitation loss with frozen noise."""
        model = request.getfixturevalue(fixture_name)
        model.set_dataset_size(100)
        rng = np.random.default_rng(12)
        unroll = BatchUnroll(model, [fake_episode(frame_shape, 4, rng), fake_episode(frame_shape, 3, rng)])

        def loss(backward):
            return unroll.run(np.random.default_rng(5), True, LossWeights(), backward)

        assert gradient_check(model, loss, max_checks_per_param=max_checks) < 1e-4


class TestTrainingHelpers:
    """Tests for the training data helpers."""

    def test_frame_buffers_front_pad(self):
        """Test that early ticks repeat the first observation."""
        observations = [np.array([float(i)]) for i in range(4)]
        stacked = frame_buffers(observations, 3)

        np.testing.assert_array_equal(stacked[0], [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(stacked[1], [0.0, 0.0, 1.0])
        np.testing.assert_array_equal(stacked[3], [1.0, 2.0, 3.0])

    def test_split_episodes_partitions(self):
        """Test that the split is disjoint, covering and keeps one training episode."""
        train, val = split_episodes(10, 0.2, np.random.default_rng(0))

        assert sorted(train + val) == list(range(10))
        assert len(val) == 2

    def test_single_episode_has_no_validation(self):
        """Test that a one-episode dataset is used entirely for training."""
        train, val = split_episodes(1, 0.5, np.random.default_rng(0))

        assert (train, val) == ([0], [])

    def test_episode_arrays_mode_mismatch_raises(self, grid_config, oracle_demos):
        """Test that observations must match the policy's mode."""
        with pytest.raises(DatasetError):
            episode_arrays(oracle_demos.records[0], grid_config)

    def test_episode_arrays_gripper_onehot(self, oracle_config, oracle_demos):
        """Test that gripper targets are one-hot over the command classes."""
        record = oracle_demos.records[0]
        arrays = episode_arrays(record, oracle_config)

        assert arrays.gripper.shape == (len(record), 3)
        np.testing.assert_array_equal(arrays.gripper.sum(axis=1), np.ones(len(record)))
        assert arrays.gripper[0, int(record.steps[0].action.gripper)] == 1.0


class TestTrainPolicy:
    """Tests for train_policy."""

    def test_training_is_deterministic(self, oracle_config, oracle_demos):
        """Test that equal seeds give identical curves and parameters."""
        training = TrainingConfig(epochs=2, batch_episodes=2)
        first = train_policy(oracle_demos, oracle_config, 5, training)
        second = train_policy(oracle_demos, oracle_config, 5, training)

        assert first.curves == second.curves
        for (_, a, _), (_, b, _) in zip(first.model.named_parameters(), second.model.named_parameters()):
            np.testing.assert_array_equal(a, b)

    def test_training_lowers_loss(self, oracle_config, oracle_demos):
        """Test that a short run reduces the training loss."""
        result = train_policy(oracle_demos, oracle_config, 1, TrainingConfig(epochs=10, batch_episodes=2, learning_rate=1e-2))

        assert result.final_train_loss < result.curves[0]['train_loss']
        assert np.isfinite(result.final_val_loss)
        assert set(result.curves[0]) == {'epoch', 'train_loss', 'val_loss', 'p0'}

    def test_mode_mismatch_raises(self, grid_config, oracle_demos):
        """Test that the dataset mode must match the policy."""
        with pytest.raises(DatasetError):
            train_policy(oracle_demos, grid_config, 0, TrainingConfig(epochs=1))

    def test_invalid_training_config_raises(self):
        """Test that training hyperparameters are validated."""
        with pytest.raises(ConfigurationError):
            TrainingConfig(epochs=0)

    def test_curves_round_trip(self, tmp_path):
        """Test writing and reading the per-epoch curves."""
        curves = [{'epoch': 1, 'train_loss': 1.5, 'val_loss': 2.25, 'p0': 0.1}]
        path = write_curves(tmp_path / 'curves.csv', curves)

        assert read_curves(path) == curves


class TestRollout:
    """Tests for closed-loop rollouts."""

    def test_rollout_is_deterministic(self, oracle_policy):
        """Test that equal inputs give identical traces."""
        first = rollout(oracle_policy, Task.PICK_PLACE, 3, max_steps=8, samples=5)
        second = rollout(oracle_policy, Task.PICK_PLACE, 3, max_steps=8, samples=5)

        assert first.states == second.states
        assert first.uncertainties == second.uncertainties

    def test_mc_rollout_records_uncertainty(self, grid_policy):
        """Test that every Monte-Carlo tick records a nonnegative uncertainty."""
        record = rollout(grid_policy, Task.PUSHING, 0, max_steps=6, samples=4)

        assert len(record) == 6
        assert len(record.states) == 7
        assert all(u is not None and u >= 0.0 for u in record.uncertainties)
        assert record.terminal_tick == 6

    def test_deterministic_controller_records_no_uncertainty(self, oracle_policy):
        """Test that the single-pass controller leaves uncertainties empty."""
        record = rollout(oracle_policy, Task.PUSHING, 0, controller=Controller.DETERMINISTIC, max_steps=5)

        assert record.uncertainties == [None] * 5

    def test_single_sample_has_zero_uncertainty(self, oracle_policy):
        """Test that one Monte-Carlo sample reports zero spread."""
        record = rollout(oracle_policy, Task.PUSHING, 0, max_steps=3, samples=1)

        assert record.uncertainties == [0.0, 0.0, 0.0]

    def test_seed_changes_noise(self, oracle_policy):
        """Test that a different run seed draws different dropout noise."""
        first = rollout(oracle_policy, Task.PUSHING, 0, max_steps=3, samples=5, seed=0)
        second = rollout(oracle_policy, Task.PUSHING, 0, max_steps=3, samples=5, seed=1)

        assert first.uncertainties != second.uncertainties

    def test_context_execute_returns_applied_displacement(self, oracle_policy):
        """Test that execute reports the displacement the simulator applied."""
        ctx = RolloutContext(oracle_policy, Task.PICK_PLACE, 0)
        action, u, samples, e_t = ctx.mc_decision(5, 0.3)
        applied = ctx.execute(action, u)

        assert ctx.tick == 1
        assert np.linalg.norm(applied) <= 0.02 + 1e-12
        assert len(samples) == 5
        assert e_t.shape == (oracle_policy.config.lstm_width,)
        assert action.gripper in tuple(Gripper)

    def test_refill_buffer_repeats_current_frame(self, oracle_policy):
        """Test that refilling fills every slot with the current observation."""
        ctx = RolloutContext(oracle_policy, Task.PICK_PLACE, 0)
        action, u, _, _ = ctx.mc_decision(3, 0.3)
        ctx.execute(action, u)
        ctx.refill_buffer()

        assert all(obs.equals(ctx.current_observation()) for obs in ctx.buffer)
