"""
Tests for the ivmc management commands and the console entry point.

The pipeline test runs every stage once on a tiny oracle-state policy and
checks the artifacts each stage leaves in the run directory.
"""

import json
import os
from io import StringIO
from unittest.mock import patch

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from introspect_vmc.env.types import Task
from introspect_vmc.harness.cli import main
from introspect_vmc.harness.config import RUN_CONFIG_NAME, load_run_config
from introspect_vmc.harness.manifest import RunManifest, sha256_file
from introspect_vmc.harness.reports import read_episode_results
from introspect_vmc.recovery import read_recovery_log

TINY_CONFIG = """\
# tiny oracle-state run
task = pushing
obs_mode = oracle
demo_count = 2
horizon = 60
frames = 2
encoder_width = 4
lstm_width = 4
fc_width = 4
proprio_tile = 1
activation = tanh
epochs = 1
batch_episodes = 2
samples = 2
n_val = 3
n_foresight_episodes = 2
foresight_epochs = 2
n_eval = 2
n_binning = 10
n_convergence = 1
recovery_steps = 3
t_recovery_init = 10
"""


@pytest.fixture(scope='module')
def run_dir(tmp_path_factory):
    """A run directory taken through every pipeline stage."""
    root = tmp_path_factory.mktemp('run')
    config = root / 'tiny.cfg'
    config.write_text(TINY_CONFIG)
    common = ['--config', str(config), '--out', str(root), '--seed', '3']
    outputs = {}
    for command, extra in [
        ('gen_demos', []),
        ('train', []),
        ('train', ['--dropout-free']),
        ('pick_threshold', ['--lambdas', '0.1']),
        ('collect_foresight', []),
        ('train_foresight', []),
        ('evaluate', []),
    ]:
        out = StringIO()
        call_command(command, *common, *extra, stdout=out)
        outputs.setdefault(command, []).append(out.getvalue())
    return root, outputs


class TestPipelineCommands:
    """Tests for the full command sequence on one run directory."""

    def test_gen_demos(self, run_dir):
        """Test that the demonstrations are written and recorded."""
        root, outputs = run_dir
        manifest = RunManifest.load(root)

        assert (root / 'demos.jsonl').exists()
        assert manifest.data['artifacts']['demos']['count'] == 2
        assert 'Wrote 2 demonstrations' in outputs['gen_demos'][0]

    def test_train_records_both_policies(self, run_dir):
        """Test that the Bayesian and dropout-free checkpoints hang off the demos."""
        root, outputs = run_dir
        manifest = RunManifest.load(root)

        assert manifest.verify('policy') == root / 'policy.ckpt'
        assert manifest.verify('vmc_policy') == root / 'policy_vmc.ckpt'
        assert manifest.data['artifacts']['vmc_policy']['dropout_rates'] == []
        assert 'Policy checkpoint written' in outputs['train'][0]

    def test_threshold_sweep(self, run_dir):
        """Test that the configured lam and the extra sweep value are both scanned."""
        root, outputs = run_dir
        manifest = RunManifest.load(root)

        assert set(manifest.data['threshold_sweep']) == {'0.3', '0.1'}
        assert (root / 'threshold' / 'validation_lam0.3.csv').exists()
        assert (root / 'threshold' / 'threshold_lam0.1.csv').exists()
        assert manifest.threshold('pushing', 'bvmc') >= 0.0
        assert 'Threshold recorded in the manifest' in outputs['pick_threshold'][0]

    def test_foresight_artifacts(self, run_dir):
        """Test the distillation data, the model and its report."""
        root, outputs = run_dir
        report = json.loads((root / 'foresight_report.json').read_text())

        assert RunManifest.load(root).verify('foresight') == root / 'foresight.ckpt'
        assert report['samples'] >= 100
        assert 'Held-out MSE' in outputs['train_foresight'][0]

    def test_evaluation_outputs(self, run_dir):
        """Test the paired evaluation rows and the derived report files."""
        root, outputs = run_dir
        out = root / 'evaluation'
        results = read_episode_results(out / 'episodes.csv', Task.PUSHING)

        assert [(r.model, r.mode) for r in results[::2]] == [
            ('vmc', 'none'), ('bvmc', 'none'), ('bvmc', 'rand'), ('bvmc', 'init'), ('bvmc', 'min_unc'),
        ]
        scenes = {(r.model, r.mode): [] for r in results}
        for r in results:
            scenes[(r.model, r.mode)].append(r.scene_seed)
        assert len({tuple(s) for s in scenes.values()}) == 1
        for name in ('results.csv', 'binning.csv', 'mcnemar.csv', 'convergence.csv', 'timing.json', 'report.txt'):
            assert (out / name).exists(), name
        assert all(e.mode != 'none' for e in read_recovery_log(out / 'recovery_log.csv'))
        assert 'Success rates (%) for pushing' in outputs['evaluate'][0]

    def test_report_reproduces_tables(self, run_dir):
        """Test that the report command rebuilds the same text offline."""
        root, _ = run_dir
        before = (root / 'evaluation' / 'report.txt').read_text()
        out = StringIO()
        call_command('report', '--config', str(root / 'tiny.cfg'), '--out', str(root), stdout=out)

        assert out.getvalue() == before

    def test_resolved_config_written(self, run_dir):
        """Test that run_config.txt reloads to the configuration that was used."""
        root, _ = run_dir
        config = load_run_config(root / RUN_CONFIG_NAME)

        assert config.seed == 3
        assert config.obs_mode == 'oracle'
        assert RunManifest.load(root).data['last_command'] == 'evaluate'


class TestDeterminism:
    """Tests for worker-count independence of written artifacts."""

    def test_demos_do_not_depend_on_workers(self, tmp_path):
        """Test that one and two workers write byte-identical datasets."""
        digests = []
        for workers in ('1', '2'):
            out = tmp_path / f'workers{workers}'
            call_command(
                'gen_demos', '--out', str(out), '--count', '3', '--task', 'pick_place',
                '--obs-mode', 'oracle', '--workers', workers, stdout=StringIO(),
            )
            digests.append(sha256_file(out / 'demos.jsonl'))

        assert digests[0] == digests[1]


class TestTrainCommand:
    """Tests for how the train command picks its checkpoint."""

    def test_config_file_selects_dropout_free_baseline(self, tmp_path):
        """Test that dropout_free in the config file trains the VMC checkpoint."""
        config = tmp_path / 'tiny.cfg'
        config.write_text(TINY_CONFIG + 'dropout_free = true\n')
        common = ['--config', str(config), '--out', str(tmp_path)]
        call_command('gen_demos', *common, stdout=StringIO())
        call_command('train', *common, stdout=StringIO())
        manifest = RunManifest.load(tmp_path)

        assert manifest.verify('vmc_policy') == tmp_path / 'policy_vmc.ckpt'
        assert manifest.data['artifacts']['vmc_policy']['dropout_rates'] == []
        assert 'policy' not in manifest.data['artifacts']


class TestCommandErrors:
    """Tests for command-line validation and broken artifact chains."""

    def test_train_without_demos(self, tmp_path):
        """Test that training in an empty run directory names the missing stage."""
        with pytest.raises(CommandError, match='gen-demos'):
            call_command('train', '--out', str(tmp_path), stdout=StringIO())

    def test_report_without_evaluation(self, tmp_path):
        with pytest.raises(CommandError, match='ivmc evaluate'):
            call_command('report', '--out', str(tmp_path), stdout=StringIO())

    def test_nonpositive_count(self, tmp_path):
        with pytest.raises(CommandError, match='--count'):
            call_command('gen_demos', '--out', str(tmp_path), '--count', '0', stdout=StringIO())

    def test_nonpositive_workers(self, tmp_path):
        with pytest.raises(CommandError, match='--workers'):
            call_command('gen_demos', '--out', str(tmp_path), '--workers', '0', stdout=StringIO())

    def test_bad_config_file(self, tmp_path):
        """Test that configuration errors surface as command errors."""
        path = tmp_path / 'bad.cfg'
        path.write_text('task = juggling\n')

        with pytest.raises(CommandError):
            call_command('gen_demos', '--config', str(path), '--out', str(tmp_path), stdout=StringIO())

    def test_bad_lambdas(self, tmp_path):
        with pytest.raises(CommandError, match='--lambdas'):
            call_command('pick_threshold', '--out', str(tmp_path), '--lambdas', '0.1,abc', stdout=StringIO())


class TestSelftestCommand:
    """Tests for the selftest command."""

    @patch('pytest.main', return_value=0)
    def test_runs_fast_suite(self, mock_main, tmp_path):
        out = StringIO()
        call_command('selftest', '--tests', str(tmp_path), stdout=out)

        mock_main.assert_called_once_with(['-q', str(tmp_path)])
        assert 'Self-test passed' in out.getvalue()

    @patch('pytest.main', return_value=0)
    def test_slow_flag(self, mock_main, tmp_path):
        call_command('selftest', '--tests', str(tmp_path), '--slow', stdout=StringIO())

        mock_main.assert_called_once_with(['-q', str(tmp_path), '--runslow'])

    @patch('pytest.main', return_value=1)
    def test_failure_raises(self, mock_main, tmp_path):
        with pytest.raises(CommandError, match='exit code 1'):
            call_command('selftest', '--tests', str(tmp_path), stdout=StringIO())

    def test_missing_directory(self, tmp_path):
        with pytest.raises(CommandError, match='not found'):
            call_command('selftest', '--tests', str(tmp_path / 'absent'), stdout=StringIO())

    @patch('pytest.main', return_value=0)
    def test_default_is_checkout_tests(self, mock_main, tmp_path):
        """Test that without --tests the suite next to the package is used."""
        with patch('introspect_vmc.harness.management.commands.selftest.DEFAULT_TESTS', tmp_path):
            call_command('selftest', stdout=StringIO())

        mock_main.assert_called_once_with(['-q', str(tmp_path)])

    @patch('pytest.main', return_value=0)
    def test_installed_package_without_tests_asks_for_path(self, mock_main, tmp_path):
        """Test that an install without a checkout points the user at --tests."""
        with patch('introspect_vmc.harness.management.commands.selftest.DEFAULT_TESTS', tmp_path / 'absent'):
            with pytest.raises(CommandError, match='--tests'):
                call_command('selftest', stdout=StringIO())

        mock_main.assert_not_called()


class TestConsoleEntryPoint:
    """Tests for the ivmc entry point."""

    @patch('django.core.management.execute_from_command_line')
    def test_hyphenated_subcommand(self, mock_execute, tmp_path):
        """Test that gen-demos dispatches to gen_demos and logs under the run directory."""
        with patch.dict(os.environ, {}, clear=False):
            os.environ.pop('IVMC_LOG_DIR', None)
            main(['gen-demos', '--out', str(tmp_path), '--count', '3'])

            assert os.environ['IVMC_LOG_DIR'] == os.path.join(str(tmp_path), 'logs')
        mock_execute.assert_called_once_with(['ivmc', 'gen_demos', '--out', str(tmp_path), '--count', '3'])

    @patch('django.core.management.execute_from_command_line')
    def test_flags_pass_through(self, mock_execute):
        main(['--help'])

        mock_execute.assert_called_once_with(['ivmc', '--help'])
