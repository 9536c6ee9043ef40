"""
Pipeline stages behind the management commands.

Each stage reads its inputs through the run manifest (verifying the checksum
chain), writes its artifact under the run directory and records it. Episode
campaigns are fanned out over worker processes with per-episode seeds, and
every aggregate is ordered by episode id.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from introspect_vmc.env.demos import generate_demos, read_dataset, write_dataset
from introspect_vmc.env.metrics import success_metrics
from introspect_vmc.env.types import Task
from introspect_vmc.exceptions import ArtifactChainError
from introspect_vmc.foresight.distillation import (
    collect_distillation_data,
    read_foresight_dataset,
    train_foresight,
    write_foresight_dataset,
)
from introspect_vmc.foresight.model import ForesightModel
from introspect_vmc.harness.config import RunConfig, write_run_config
from introspect_vmc.harness.manifest import RunManifest
from introspect_vmc.harness.reports import (
    BinningReport,
    EpisodeResult,
    ResultsTable,
    mcnemar_against,
    read_episode_results,
    write_csv,
    write_episode_results,
)
from introspect_vmc.policy.model import PolicyModel
from introspect_vmc.policy.rollout import Controller, rollout
from introspect_vmc.policy.training import TrainingResult, train_policy, write_curves
from introspect_vmc.recovery.config import ControllerConfig, RecoveryMode
from introspect_vmc.recovery.controller import RecoveryEvent, run_episode, write_recovery_log
from introspect_vmc.uncertainty.sampling import mc_convergence_curve, mc_timing
from introspect_vmc.uncertainty.threshold import (
    ThresholdResult,
    ValidationRecord,
    pick_threshold,
    write_threshold_result,
    write_validation_records,
)
from introspect_vmc.uncertainty.window import max_window_sum
from introspect_vmc.utils import parallel_map
from introspect_vmc.utils.seeding import PURPOSE_NOISE, PURPOSE_SCENE, derive_rng, derive_seed

logger = logging.getLogger(__name__)

# scene-seed streams; disjoint from the demo scenes, which use data_seed + i
STREAM_VALIDATION = 1
STREAM_EVAL = 2
STREAM_BINNING = 3


class RunPaths:
    """File layout of one run directory."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.demos = self.root / 'demos.jsonl'
        self.policy = self.root / 'policy.ckpt'
        self.curves = self.root / 'curves.csv'
        self.vmc_policy = self.root / 'policy_vmc.ckpt'
        self.vmc_curves = self.root / 'curves_vmc.csv'
        self.foresight_data = self.root / 'foresight_data.jsonl'
        self.foresight = self.root / 'foresight.ckpt'
        self.foresight_report = self.root / 'foresight_report.json'
        self.foresight_curves = self.root / 'foresight_curves.csv'
        self.evaluation = self.root / 'evaluation'

    def validation(self, lam: float) -> Path:
        return self.root / 'threshold' / f'validation_lam{lam:g}.csv'

    def threshold(self, lam: float) -> Path:
        return self.root / 'threshold' / f'threshold_lam{lam:g}.csv'


def scene_seeds(seed: int, stream: int, count: int) -> List[int]:
    return [derive_seed(seed, PURPOSE_SCENE, stream, i) for i in range(count)]


def begin(config: RunConfig, root: Union[str, Path], command: str) -> RunManifest:
    """Load the manifest, store the resolved config and write ``run_config.txt``."""
    manifest = RunManifest.load(root)
    manifest.set_config(config.as_dict(), command)
    write_run_config(root, config)
    return manifest


# -- episode campaigns ---------------------------------------------------------


@dataclass
class EpisodeJob:
    model_name: str
    policy: PolicyModel
    foresight: Optional[ForesightModel]
    task: Task
    scene_seed: int
    episode_id: int
    controller: Optional[ControllerConfig]
    seed: int
    window: int
    max_steps: int


def run_job(job: EpisodeJob) -> Tuple[EpisodeResult, List[RecoveryEvent]]:
    """One evaluation episode. A job without a controller config runs the single-pass policy."""
    if job.controller is None:
        record = rollout(
            job.policy,
            job.task,
            job.scene_seed,
            Controller.DETERMINISTIC,
            max_steps=job.max_steps,
            seed=job.seed,
            episode_id=job.episode_id,
        )
        events: List[RecoveryEvent] = []
        mode = RecoveryMode.NONE.value
    else:
        record, events = run_episode(
            job.policy, job.foresight, job.task, job.scene_seed, job.controller, job.seed, job.episode_id
        )
        mode = job.controller.mode.value
    flags = success_metrics(record)
    result = EpisodeResult(
        model=job.model_name,
        mode=mode,
        episode_id=job.episode_id,
        scene_seed=job.scene_seed,
        stages=flags.values,
        max_u=max_window_sum((step.uncertainty for step in record.steps), job.window),
        recoveries=len(events),
        terminal_tick=record.terminal_tick,
    )
    return result, events


def run_campaign(jobs: Sequence[EpisodeJob], workers: int) -> Tuple[List[EpisodeResult], List[RecoveryEvent]]:
    outputs = parallel_map(run_job, jobs, workers)
    results = [result for result, _ in outputs]
    events = [event for _, batch in outputs for event in batch]
    return results, events


# -- stages --------------------------------------------------------------------


def stage_gen_demos(config: RunConfig, root: Union[str, Path], workers: int = 1) -> Path:
    paths = RunPaths(root)
    manifest = begin(config, root, 'gen-demos')
    dataset = generate_demos(
        Task(config.task),
        config.demo_count,
        config.resolved_data_seed,
        config.obs_mode,
        config.horizon,
        workers,
    )
    write_dataset(paths.demos, dataset)
    manifest.record('demos', paths.demos, extra={'count': len(dataset), 'ticks': dataset.total_ticks})
    manifest.save()
    return paths.demos


def stage_train(config: RunConfig, root: Union[str, Path], dropout_free: bool = False) -> TrainingResult:
    paths = RunPaths(root)
    manifest = begin(config, root, 'train')
    dataset = read_dataset(manifest.verify('demos'))
    dropout_free = dropout_free or config.dropout_free
    result = train_policy(
        dataset, config.policy_config(dropout_free), config.resolved_train_seed, config.training_config()
    )
    stage = 'vmc_policy' if dropout_free else 'policy'
    checkpoint = paths.vmc_policy if dropout_free else paths.policy
    result.model.save(checkpoint)
    write_curves(paths.vmc_curves if dropout_free else paths.curves, result.curves)
    manifest.record(
        stage,
        checkpoint,
        parents=['demos'],
        extra={
            'final_train_loss': repr(result.final_train_loss),
            'final_val_loss': repr(result.final_val_loss),
            'dropout_rates': [repr(p) for p in result.model.dropout_rates],
        },
    )
    manifest.save()
    return result


def validation_records(
    config: RunConfig, policy: PolicyModel, lam: float, workers: int = 1
) -> List[ValidationRecord]:
    """Plain Monte-Carlo rollouts on the validation scenes, summarised by maximum window sum."""
    controller = config.controller_config(RecoveryMode.NONE.value, float('inf'), lam)
    jobs = [
        EpisodeJob('bvmc', policy, None, Task(config.task), scene, i, controller,
                   config.resolved_eval_seed, config.window, config.max_steps)
        for i, scene in enumerate(scene_seeds(config.resolved_eval_seed, STREAM_VALIDATION, config.n_val))
    ]
    results, _ = run_campaign(jobs, workers)
    return [ValidationRecord(r.episode_id, r.max_u, r.success) for r in results]


def stage_pick_threshold(
    config: RunConfig, root: Union[str, Path], workers: int = 1, lambdas: Sequence[float] = ()
) -> Dict[float, ThresholdResult]:
    paths = RunPaths(root)
    manifest = begin(config, root, 'pick-threshold')
    policy = PolicyModel.load(manifest.verify('policy'))

    sweep = [config.lam] + [lam for lam in (lambdas or config.lambdas) if lam != config.lam]
    results: Dict[float, ThresholdResult] = {}
    for lam in sweep:
        records = validation_records(config, policy, lam, workers)
        result = pick_threshold(records)
        write_validation_records(paths.validation(lam), records)
        write_threshold_result(paths.threshold(lam), result)
        results[lam] = result
        logger.info('lam=%g: C=%.6g i*=%s r_bar=%.3f', lam, result.C, result.i_star, result.r_bar)

    chosen = results[config.lam]
    manifest.record(
        'threshold',
        paths.threshold(config.lam),
        parents=['policy'],
        extra={'C': repr(chosen.C), 'i_star': chosen.i_star, 'r_bar': repr(chosen.r_bar), 'lam': config.lam},
    )
    manifest.set_threshold(config.task, 'bvmc', chosen.C, lam=config.lam, i_star=chosen.i_star)
    manifest.data['threshold_sweep'] = {
        f'{lam:g}': {'C': repr(r.C), 'i_star': r.i_star, 'r_bar': repr(r.r_bar)} for lam, r in results.items()
    }
    manifest.save()
    return results


def stage_collect_foresight(config: RunConfig, root: Union[str, Path], workers: int = 1) -> Path:
    paths = RunPaths(root)
    manifest = begin(config, root, 'collect-foresight')
    policy = PolicyModel.load(manifest.verify('policy'))
    dataset = collect_distillation_data(
        policy,
        Task(config.task),
        config.n_foresight_episodes,
        config.resolved_train_seed,
        samples=config.samples,
        lam=config.lam,
        max_steps=config.max_steps,
        policy_checksum=manifest.checksum('policy'),
        workers=workers,
        metric=config.metric,
    )
    write_foresight_dataset(paths.foresight_data, dataset)
    manifest.record('foresight_data', paths.foresight_data, parents=['policy'], extra={'count': len(dataset)})
    manifest.save()
    return paths.foresight_data


def stage_train_foresight(config: RunConfig, root: Union[str, Path]) -> Dict[str, object]:
    paths = RunPaths(root)
    manifest = begin(config, root, 'train-foresight')
    dataset = read_foresight_dataset(manifest.verify('foresight_data'))
    if dataset.header.get('policy_checksum') != manifest.checksum('policy'):
        raise ArtifactChainError(
            'foresight_data was collected with a different policy; rerun `ivmc collect-foresight`'
        )
    result = train_foresight(
        dataset,
        config.resolved_train_seed,
        epochs=config.foresight_epochs,
        batch_size=config.foresight_batch,
    )
    result.model.save(paths.foresight)
    write_csv(paths.foresight_curves, result.curves)
    with open(paths.foresight_report, 'w', encoding='utf-8') as handle:
        json.dump(result.report, handle, indent=2, sort_keys=True)
        handle.write('\n')
    manifest.record('foresight', paths.foresight, parents=['foresight_data'], extra={'report': result.report})
    manifest.save()
    return result.report


def stage_evaluate(
    config: RunConfig, root: Union[str, Path], workers: int = 1, modes: Optional[Sequence[str]] = None
) -> str:
    """
    Paired campaign: every row of the table sees the same evaluation scenes.
    Also runs the larger no-recovery binning set, the Monte-Carlo convergence
    curve and the sampling cost measurement, then writes the report.
    """
    paths = RunPaths(root)
    manifest = begin(config, root, 'evaluate')
    modes = [RecoveryMode(m).value for m in (modes or config.modes)]
    task = Task(config.task)
    seed = config.resolved_eval_seed

    parents = ['policy']
    policy = PolicyModel.load(manifest.verify('policy'))
    if manifest.has('vmc_policy'):
        vmc = PolicyModel.load(manifest.verify('vmc_policy'))
        parents.append('vmc_policy')
    else:
        vmc = policy

    threshold = float('inf')
    if any(mode != RecoveryMode.NONE.value for mode in modes):
        if config.threshold is not None:
            threshold = config.threshold
        else:
            manifest.verify('threshold')
            threshold = manifest.threshold(config.task, 'bvmc')
            parents.append('threshold')

    foresight = None
    if RecoveryMode.MIN_UNC.value in modes:
        foresight = ForesightModel.load(manifest.verify('foresight'))
        parents.append('foresight')

    scenes = scene_seeds(seed, STREAM_EVAL, config.n_eval)
    jobs = [
        EpisodeJob('vmc', vmc, None, task, scene, i, None, seed, config.window, config.max_steps)
        for i, scene in enumerate(scenes)
    ]
    for mode in modes:
        controller = config.controller_config(mode, threshold)
        jobs.extend(
            EpisodeJob('bvmc', policy, foresight, task, scene, i, controller, seed, config.window, config.max_steps)
            for i, scene in enumerate(scenes)
        )
    logger.info('Evaluating %d episodes over %d rows (C=%.6g)', len(jobs), len(modes) + 1, threshold)
    results, events = run_campaign(jobs, workers)

    binning_controller = config.controller_config(RecoveryMode.NONE.value, float('inf'))
    binning_jobs = [
        EpisodeJob('bvmc', policy, None, task, scene, i, binning_controller, seed, config.window, config.max_steps)
        for i, scene in enumerate(scene_seeds(seed, STREAM_BINNING, config.n_binning))
    ]
    logger.info('Running %d no-recovery episodes for the uncertainty binning', len(binning_jobs))
    binning_results, _ = run_campaign(binning_jobs, workers)

    out = paths.evaluation
    episodes_path = write_episode_results(out / 'episodes.csv', task, results)
    write_episode_results(out / 'binning_episodes.csv', task, binning_results)
    write_recovery_log(out / 'recovery_log.csv', events)

    if manifest.has('demos') and config.n_convergence > 0:
        demos = read_dataset(manifest.verify('demos'))
        curve = mc_convergence_curve(
            policy, demos.records[: config.n_convergence], noise_root=derive_seed(seed, PURPOSE_NOISE, 0)
        )
        write_csv(out / 'convergence.csv', curve, ['samples', 'error'])
    timing = mc_timing(policy, config.samples, rng=derive_rng(seed, PURPOSE_NOISE, 1))
    with open(out / 'timing.json', 'w', encoding='utf-8') as handle:
        json.dump(timing, handle, indent=2, sort_keys=True)
        handle.write('\n')

    manifest.record('evaluation', episodes_path, parents=parents, extra={'modes': modes, 'C': repr(threshold)})
    manifest.save()
    return stage_report(config, root)


def stage_report(config: RunConfig, root: Union[str, Path]) -> str:
    """Rebuild every table from the per-episode rows of the last evaluation."""
    paths = RunPaths(root)
    task = Task(config.task)
    out = paths.evaluation
    if not (out / 'episodes.csv').exists():
        raise ArtifactChainError(f'No evaluation results under {out}; run `ivmc evaluate` first')
    results = read_episode_results(out / 'episodes.csv', task)
    table = ResultsTable.build(task, results)
    write_csv(out / 'results.csv', table.csv_rows())

    sections = [table.to_text()]

    binning_path = out / 'binning_episodes.csv'
    if binning_path.exists():
        binned = read_episode_results(binning_path, task)
        report = BinningReport.build([r.max_u for r in binned], [r.success for r in binned])
        write_csv(out / 'binning.csv', report.bins, ['bin', 'count', 'mean_max_u', 'success_rate'])
        sections.append(report.to_text())

    tests = mcnemar_against(results)
    if tests:
        rows = [{'baseline': t.baseline, 'b': t.b, 'c': t.c, 'p_value': f'{t.p_value:.6g}'} for t in tests]
        write_csv(out / 'mcnemar.csv', rows, ['baseline', 'b', 'c', 'p_value'])
        lines = ['Paired McNemar counts (BVMC + min unc vs baseline)']
        lines += [f'  {t.baseline}: b={t.b} c={t.c} p={t.p_value:.4g}' for t in tests]
        sections.append('\n'.join(lines) + '\n')

    convergence = out / 'convergence.csv'
    if convergence.exists():
        sections.append('Monte-Carlo convergence (samples, error)\n' + convergence.read_text(encoding='utf-8'))

    text = '\n'.join(sections)
    (out / 'report.txt').write_text(text, encoding='utf-8')
    return text
