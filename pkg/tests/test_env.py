"""
Tests for the tabletop simulator, scripted experts, stage metrics and the
demonstration dataset format.
"""

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from introspect_vmc.env import simulator
from introspect_vmc.env.demos import (
    dumps_dataset,
    generate_demos,
    loads_dataset,
    read_dataset,
    run_expert_episode,
    write_dataset,
)
from introspect_vmc.env.experts import WaypointExpert
from introspect_vmc.env.metrics import StageTracker, flags_from_states, success_metrics, success_rates
from introspect_vmc.env.types import ActionCommand, Gripper, ObservationMode, StageFlags, Task, Vec3
from introspect_vmc.exceptions import ConfigurationError, DatasetError, ExpertFailureError


finite = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


class TestReset:
    """Tests for scene reset."""

    @pytest.mark.parametrize('task', list(Task))
    def test_reset_is_deterministic(self, task):
        """Test that a scene seed fully determines the initial state."""
        assert simulator.reset(task, 17) == simulator.reset(task, 17)

    def test_pushing_object_and_target_differ(self):
        """Test that pushing scenes never spawn the cube on its target."""
        for seed in range(50):
            state = simulator.reset(Task.PUSHING, seed)
            assert state.object_pos[:2] != state.target_pos[:2]

    def test_spawn_positions_are_grid_cells(self):
        """Test that object and target positions come from the table spawn grid."""
        cells = {tuple(c) for c in simulator.spawn_cells('table')}
        state = simulator.reset(Task.PICK_PLACE, 3)

        assert (state.object_pos.x, state.object_pos.y) in cells
        assert (state.target_pos.x, state.target_pos.y) in cells

    def test_spawn_cells_are_uniform(self):
        """Test that object cells over 1000 scene seeds pass a chi-square uniformity test."""
        counts = np.bincount(
            [simulator.spawn_indices(Task.PICK_PLACE, seed)[0] for seed in range(1000)], minlength=48
        )

        assert counts.sum() == 1000
        assert chisquare(counts).pvalue > 0.001

    def test_stick_grasp_point_is_on_stick_grid(self):
        """Test that the stick's marked end spawns on the stick grid."""
        state = simulator.reset(Task.PICK_REACH, 5)
        grasp = state.grasp_point[:2]

        assert np.min(np.linalg.norm(simulator.spawn_cells('stick') - grasp, axis=1)) < 1e-12

    def test_initial_pose(self):
        """Test that every episode starts at the home pose with the gripper open."""
        state = simulator.reset(Task.PUSHING, 0)

        assert state.ee_pos == simulator.HOME_POSE
        assert state.gripper_open == 1.0
        assert state.tick == 0


class TestStep:
    """Tests for the step function."""

    @pytest.fixture
    def state(self):
        """A pick-and-place scene."""
        return simulator.reset(Task.PICK_PLACE, 1)

    def test_large_delta_is_clipped_to_max_step(self, state):
        """Test that the commanded displacement is clipped to MAX_STEP in norm."""
        after = simulator.step(state, ActionCommand(Vec3(1.0, 0.0, 0.0)))

        np.testing.assert_allclose(simulator.applied_displacement(state, after), [simulator.MAX_STEP, 0.0, 0.0])

    def test_small_delta_is_applied_exactly(self, state):
        """Test that a displacement inside the limit is applied unchanged."""
        after = simulator.step(state, ActionCommand(Vec3(0.01, -0.005, 0.0)))

        np.testing.assert_allclose(simulator.applied_displacement(state, after), [0.01, -0.005, 0.0], atol=1e-15)

    def test_workspace_bounds_hold(self, state):
        """Test that the end effector cannot leave the workspace."""
        state = replace(state, ee_pos=Vec3(0.995, 0.5, 0.1))
        after = simulator.step(state, ActionCommand(Vec3(0.02, 0.0, 0.0)))

        assert after.ee_pos.x == 1.0

    def test_gripper_slews(self, state):
        """Test that the gripper closes at a bounded rate."""
        after = simulator.step(state, ActionCommand(Vec3(0.0, 0.0, 0.0), Gripper.CLOSE))

        assert after.gripper_open == pytest.approx(1.0 - simulator.GRIPPER_SLEW)

    def test_tick_increments_and_input_is_untouched(self, state):
        """Test that step returns a new state and leaves its input alone."""
        before = replace(state)
        after = simulator.step(state, ActionCommand(Vec3(0.01, 0.0, 0.0)))

        assert after.tick == state.tick + 1
        assert state == before

    def test_nan_delta_is_treated_as_zero(self, state):
        """Test that non-finite commands do not move the end effector."""
        after = simulator.step(state, ActionCommand(Vec3(float('nan'), 0.0, 0.0)))

        assert after.ee_pos == state.ee_pos

    def test_close_at_object_attaches(self, state):
        """Test that closing at the grasp point attaches the cube."""
        at_object = replace(state, ee_pos=state.object_pos)
        after = simulator.step(at_object, ActionCommand(Vec3(0.0, 0.0, 0.0), Gripper.CLOSE))

        assert after.attached
        assert after.object_pos == after.ee_pos

    def test_attached_object_follows_and_releases(self, state):
        """Test that an attached cube follows the end effector until Open."""
        held = replace(state, ee_pos=state.object_pos, attached=True, gripper_open=0.0)
        lifted = simulator.step(held, ActionCommand(Vec3(0.0, 0.0, 0.02), Gripper.CLOSE))
        assert lifted.object_pos.z == pytest.approx(held.object_pos.z + 0.02)

        dropped = simulator.step(lifted, ActionCommand(Vec3(0.0, 0.0, 0.0), Gripper.OPEN))
        assert not dropped.attached
        assert dropped.object_pos.z == simulator.REST_Z

    def test_push_moves_cube_along_motion(self):
        """Test that a low sweep into the cube pushes it forward."""
        state = simulator.reset(Task.PUSHING, 2)
        ox, oy, _ = state.object_pos
        state = replace(state, ee_pos=Vec3(ox - 0.04, oy, 0.02))
        after = simulator.step(state, ActionCommand(Vec3(0.02, 0.0, 0.0)))

        assert after.object_pos.x == pytest.approx(ox + 0.015)
        assert after.object_pos.y == pytest.approx(oy)
        assert after.object_yaw == 0.0

    def test_off_center_push_turns_cube(self):
        """Test that a lateral contact offset changes the cube yaw."""
        new_xy, yaw = simulator.resolve_push(
            np.array([0.47, 0.488]), np.array([0.5, 0.5]), 0.0, np.array([0.02, 0.0])
        )

        assert new_xy[0] > 0.5
        assert yaw != 0.0

    def test_high_sweep_does_not_push(self):
        """Test that the end effector passes over the cube above contact height."""
        state = simulator.reset(Task.PUSHING, 2)
        ox, oy, _ = state.object_pos
        state = replace(state, ee_pos=Vec3(ox - 0.02, oy, 0.1))
        after = simulator.step(state, ActionCommand(Vec3(0.02, 0.0, 0.0)))

        assert after.object_pos == state.object_pos

    @settings(max_examples=50, deadline=None)
    @given(dx=finite, dy=finite, dz=finite, gripper=st.sampled_from(list(Gripper)))
    def test_step_is_pure_and_bounded(self, dx, dy, dz, gripper):
        """Test determinism, the displacement bound and workspace containment."""
        state = simulator.reset(Task.PICK_PLACE, 4)
        action = ActionCommand(Vec3(dx, dy, dz), gripper)
        first = simulator.step(state, action)

        assert first == simulator.step(state, action)
        assert np.linalg.norm(simulator.applied_displacement(state, first)) <= simulator.MAX_STEP + 1e-12
        assert np.all(np.asarray(first.ee_pos) >= simulator.WORKSPACE_LOW)
        assert np.all(np.asarray(first.ee_pos) <= simulator.WORKSPACE_HIGH)


class TestObserve:
    """Tests for observation rendering."""

    def test_grid_shape_and_peak(self):
        """Test that the grid has three channels with the ee blob at its cell."""
        state = simulator.reset(Task.PUSHING, 0)
        grid = simulator.observe(state, ObservationMode.GRID_IMAGE).grid

        assert grid.shape == (3, simulator.GRID_SIZE, simulator.GRID_SIZE)
        row, col = np.unravel_index(np.argmax(grid[0]), grid[0].shape)
        assert abs((col + 0.5) / simulator.GRID_SIZE - state.ee_pos.x) <= 0.5 / simulator.GRID_SIZE
        assert abs((row + 0.5) / simulator.GRID_SIZE - state.ee_pos.y) <= 0.5 / simulator.GRID_SIZE

    def test_oracle_state_vector(self):
        """Test the oracle observation layout."""
        state = simulator.reset(Task.PICK_PLACE, 0)
        vec = simulator.observe(state, ObservationMode.ORACLE_STATE).state_vec

        assert vec.shape == (simulator.STATE_VECTOR_WIDTH,)
        np.testing.assert_array_equal(vec[:3], state.ee_pos)
        np.testing.assert_array_equal(vec[4:7], state.object_pos)

    def test_observe_is_deterministic(self):
        """Test that equal states render equal grids."""
        state = simulator.reset(Task.PICK_REACH, 8)

        assert simulator.observe(state).equals(simulator.observe(replace(state)))

    def test_blob_on_cell_center_peaks_and_vanishes_outside_radius(self):
        """Test the blob peak of 1.0 and zero cells beyond 1.5 cells."""
        center = 8.5 / simulator.GRID_SIZE
        state = replace(simulator.reset(Task.PUSHING, 0), ee_pos=Vec3(center, center, 0.1))
        blob = simulator.render_grid(state)[0]

        assert blob[8, 8] == 1.0
        assert blob.max() == 1.0
        assert blob[8, 9] == pytest.approx(0.5)
        rows, cols = np.nonzero(blob)
        assert set(rows) == {7, 8, 9}
        assert set(cols) == {7, 8, 9}

    def test_blob_mass_is_constant_under_translation(self):
        """Test that the summed blob stays within 2% as the entity slides across cells."""
        state = simulator.reset(Task.PUSHING, 0)
        masses = [
            simulator.render_grid(replace(state, ee_pos=Vec3(x, 0.5 + 0.3 * (x - 0.5), 0.1)))[0].sum()
            for x in np.linspace(0.3, 0.7, 97)
        ]

        assert max(masses) <= 1.02 * min(masses)


class TestExperts:
    """Tests for the scripted waypoint experts."""

    @pytest.mark.parametrize('task', list(Task))
    @pytest.mark.parametrize('seed', [0, 1, 2, 3, 4])
    def test_expert_solves_scene(self, task, seed):
        """Test that the expert reaches full success within the horizon."""
        record = run_expert_episode(task, seed, ObservationMode.ORACLE_STATE, horizon=60)

        assert record.success
        assert all(record.stage_flags.values)
        assert len(record.states) == len(record) + 1

    def test_expert_commands_respect_step_limit(self):
        """Test that expert displacements never exceed MAX_STEP."""
        record = run_expert_episode(Task.PICK_PLACE, 0, ObservationMode.ORACLE_STATE)

        for step in record.steps:
            assert np.linalg.norm(np.asarray(step.action.delta_ee)) <= simulator.MAX_STEP + 1e-12

    def test_pushing_path_is_two_perpendicular_segments(self):
        """Test that the in-contact pushing path splits into two directions at right angles."""
        def spread(seed):
            state = simulator.reset(Task.PUSHING, seed)
            return np.abs(np.asarray(state.target_pos)[:2] - np.asarray(state.object_pos)[:2]).min()

        seeds = [seed for seed in range(200) if spread(seed) >= 0.07][:5]
        assert seeds

        for seed in seeds:
            record = run_expert_episode(Task.PUSHING, seed, ObservationMode.ORACLE_STATE)
            path = np.array([np.asarray(s.ee_pos) for s in record.states])
            low = (path[:-1, 2] <= simulator.PUSH_CONTACT_HEIGHT + 1e-9) & (path[1:, 2] <= simulator.PUSH_CONTACT_HEIGHT + 1e-9)
            moves = np.diff(path[:, :2], axis=0)[low]
            lengths = np.linalg.norm(moves, axis=1)
            moves, lengths = moves[lengths > 1e-9], lengths[lengths > 1e-9]
            angles = np.degrees(np.arctan2(moves[:, 1], moves[:, 0])) % 360.0

            # 10 degree bins centered on multiples of 10 degrees
            counts, _ = np.histogram((angles + 5.0) % 360.0, bins=36, range=(0.0, 360.0), weights=lengths)
            top = np.argsort(counts)[::-1][:2]
            gap = abs(float(top[0] - top[1])) * 10.0 % 180.0

            assert counts[top].sum() >= 0.9 * lengths.sum()
            assert 80.0 <= gap <= 100.0

    def test_wrong_task_state_raises(self):
        """Test that an expert refuses a state of another task."""
        expert = WaypointExpert(Task.PUSHING)

        with pytest.raises(ExpertFailureError):
            expert.expert_action(simulator.reset(Task.PICK_PLACE, 0))

    def test_stall_raises(self):
        """Test that an expert stuck on one waypoint gives up."""
        expert = WaypointExpert(Task.PICK_PLACE, stall_limit=3)
        state = simulator.reset(Task.PICK_PLACE, 0)

        with pytest.raises(ExpertFailureError, match='stalled'):
            for _ in range(10):
                expert.expert_action(state)


class TestStageMetrics:
    """Tests for stage success flags."""

    def test_initial_state_has_no_stage(self):
        """Test that nothing is reached at reset."""
        flags = flags_from_states(Task.PICK_PLACE, [simulator.reset(Task.PICK_PLACE, 0)])

        assert flags.values == (False, False, False)

    def test_flags_are_monotone(self):
        """Test that a later stage always implies the earlier ones."""
        for task in Task:
            record = run_expert_episode(task, 6, ObservationMode.ORACLE_STATE)
            tracker = StageTracker(task)
            for state in record.states:
                values = tracker.update(state).values
                for earlier, later in zip(values, values[1:]):
                    assert earlier or not later

    def test_success_metrics_recomputes_from_states(self):
        """Test that recomputed flags match the online tracker."""
        record = run_expert_episode(Task.PUSHING, 3, ObservationMode.ORACLE_STATE)

        assert success_metrics(record) == record.stage_flags

    def test_place_needs_release(self):
        """Test that a held cube over the target does not count as placed."""
        state = simulator.reset(Task.PICK_PLACE, 0)
        held = replace(state, ee_pos=state.target_pos, object_pos=state.target_pos, attached=True)
        tracker = StageTracker(Task.PICK_PLACE)
        tracker.reach = tracker.pick = True

        assert not tracker.update(held).success

    def test_success_rates(self):
        """Test per-stage success fractions."""
        flags = [
            StageFlags(Task.PUSHING, (True, True)),
            StageFlags(Task.PUSHING, (True, False)),
            StageFlags(Task.PUSHING, (False, False)),
            StageFlags(Task.PUSHING, (True, False)),
        ]

        assert success_rates(flags) == [0.75, 0.25]
        assert success_rates([]) == []


class TestDemoDataset:
    """Tests for demonstration generation and the dataset format."""

    @pytest.fixture
    def dataset(self):
        """Three oracle-state pick-and-place demonstrations."""
        return generate_demos(Task.PICK_PLACE, 3, 0, ObservationMode.ORACLE_STATE, horizon=60)

    def test_generate_demos(self, dataset):
        """Test episode ids, the header and the stop-on-success rule."""
        assert len(dataset) == 3
        assert [r.episode_id for r in dataset.records] == [0, 1, 2]
        assert dataset.header['count'] == 3
        assert all(record.success for record in dataset.records)
        assert all(len(record) < 60 for record in dataset.records)

    def test_generation_is_deterministic(self, dataset):
        """Test that equal arguments produce byte-identical datasets."""
        again = generate_demos(Task.PICK_PLACE, 3, 0, ObservationMode.ORACLE_STATE, horizon=60)

        assert dumps_dataset(again) == dumps_dataset(dataset)

    def test_write_then_read_preserves_bytes(self, tmp_path, dataset):
        """Test that a dataset written and read back serializes identically."""
        path = write_dataset(tmp_path / 'demos.jsonl', dataset)
        loaded = read_dataset(path)

        assert loaded.task == Task.PICK_PLACE
        assert loaded.total_ticks == dataset.total_ticks
        assert dumps_dataset(loaded) == path.read_text(encoding='utf-8')

    def test_grid_dataset_reads_back(self):
        """Test that grid observations reload with their image shape."""
        dataset = generate_demos(Task.PUSHING, 1, 0, ObservationMode.GRID_IMAGE, horizon=60)
        loaded = loads_dataset(dumps_dataset(dataset))

        assert loaded.records[0].steps[0].observation.grid.shape == (3, 16, 16)

    def test_non_positive_count_raises(self):
        """Test that a demonstration count must be positive."""
        with pytest.raises(ConfigurationError):
            generate_demos(Task.PUSHING, 0, 0)

    def test_missing_file_raises(self, tmp_path):
        """Test that a missing dataset file is reported."""
        with pytest.raises(DatasetError):
            read_dataset(tmp_path / 'absent.jsonl')

    def test_missing_summary_raises(self, dataset):
        """Test that a truncated episode is rejected."""
        text = dumps_dataset(dataset).splitlines()
        truncated = '\n'.join(text[:-1]) + '\n'

        with pytest.raises(DatasetError):
            loads_dataset(truncated)

    def test_missing_step_field_raises(self, dataset):
        """Test that a step without its action is rejected."""
        lines = dumps_dataset(dataset).splitlines()
        lines[1] = lines[1].replace('"action"', '"actio"')

        with pytest.raises(DatasetError, match='missing fields'):
            loads_dataset('\n'.join(lines))

    def test_wrong_header_count_raises(self, dataset):
        """Test that the header episode count is enforced."""
        lines = dumps_dataset(dataset).splitlines()
        lines[0] = lines[0].replace('"count":3', '"count":4')

        with pytest.raises(DatasetError, match='declares'):
            loads_dataset('\n'.join(lines))
