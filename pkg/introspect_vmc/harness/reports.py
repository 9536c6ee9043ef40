"""
Evaluation tables: per-stage success with binomial standard errors, the
success-versus-uncertainty binning and paired McNemar counts.

Everything here is recomputed from per-episode result rows, so the ``report``
command reproduces the tables offline from ``episodes.csv``.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import binomtest, spearmanr

from introspect_vmc.env.types import STAGE_NAMES, Task
from introspect_vmc.exceptions import DatasetError

N_BINS = 10

# Table row order: baseline first, then the Bayesian controller with each recovery mode
ROW_ORDER = [('vmc', 'none'), ('bvmc', 'none'), ('bvmc', 'rand'), ('bvmc', 'init'), ('bvmc', 'min_unc')]
ROW_LABELS = {
    ('vmc', 'none'): 'VMC',
    ('bvmc', 'none'): 'BVMC',
    ('bvmc', 'rand'): 'BVMC + rand',
    ('bvmc', 'init'): 'BVMC + init',
    ('bvmc', 'min_unc'): 'BVMC + min unc',
}


@dataclass(frozen=True)
class EpisodeResult:
    model: str
    mode: str
    episode_id: int
    scene_seed: int
    stages: Tuple[bool, ...]
    max_u: float
    recoveries: int = 0
    terminal_tick: int = 0

    @property
    def success(self) -> bool:
        return bool(self.stages[-1])


def standard_error(p: float, n: int) -> float:
    """Binomial standard error in percentage points."""
    if n <= 0:
        return 0.0
    return 100.0 * math.sqrt(p * (1.0 - p) / n)


def result_fields(task: Task) -> List[str]:
    return ['model', 'mode', 'episode_id', 'scene_seed', *STAGE_NAMES[Task(task)], 'max_u', 'recoveries', 'terminal_tick']


def write_episode_results(path: Union[str, Path], task: Task, results: Sequence[EpisodeResult]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = STAGE_NAMES[Task(task)]
    ordered = sorted(results, key=lambda r: (row_rank(r.model, r.mode), r.episode_id))
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.DictWriter(handle, fieldnames=result_fields(task), lineterminator='\n')
        writer.writeheader()
        for r in ordered:
            row = {
                'model': r.model,
                'mode': r.mode,
                'episode_id': r.episode_id,
                'scene_seed': r.scene_seed,
                'max_u': repr(float(r.max_u)),
                'recoveries': r.recoveries,
                'terminal_tick': r.terminal_tick,
            }
            row.update({name: int(value) for name, value in zip(names, r.stages)})
            writer.writerow(row)
    return path


def read_episode_results(path: Union[str, Path], task: Task) -> List[EpisodeResult]:
    names = STAGE_NAMES[Task(task)]
    path = Path(path)
    if not path.exists():
        raise DatasetError(f'Episode results not found: {path}')
    with open(path, newline='', encoding='utf-8') as handle:
        try:
            return [
                EpisodeResult(
                    model=row['model'],
                    mode=row['mode'],
                    episode_id=int(row['episode_id']),
                    scene_seed=int(row['scene_seed']),
                    stages=tuple(bool(int(row[name])) for name in names),
                    max_u=float(row['max_u']),
                    recoveries=int(row['recoveries']),
                    terminal_tick=int(row['terminal_tick']),
                )
                for row in csv.DictReader(handle)
            ]
        except KeyError as exc:
            raise DatasetError(f'Episode results {path} lack column {exc}') from exc


def row_rank(model: str, mode: str) -> Tuple[int, str, str]:
    key = (model, mode)
    return (ROW_ORDER.index(key), '', '') if key in ROW_ORDER else (len(ROW_ORDER), model, mode)


@dataclass
class ResultsRow:
    model: str
    mode: str
    n: int
    percentages: List[float]
    errors: List[float]

    @property
    def label(self) -> str:
        return ROW_LABELS.get((self.model, self.mode), f'{self.model.upper()} + {self.mode}')


@dataclass
class ResultsTable:
    task: Task
    rows: List[ResultsRow] = field(default_factory=list)

    @property
    def stages(self) -> Tuple[str, ...]:
        return STAGE_NAMES[Task(self.task)]

    @classmethod
    def build(cls, task: Task, results: Sequence[EpisodeResult]) -> 'ResultsTable':
        groups: Dict[Tuple[str, str], List[EpisodeResult]] = {}
        for r in results:
            groups.setdefault((r.model, r.mode), []).append(r)
        table = cls(Task(task))
        for key in sorted(groups, key=lambda k: row_rank(*k)):
            group = groups[key]
            n = len(group)
            rates = np.mean(np.array([r.stages for r in group], dtype=np.float64), axis=0)
            table.rows.append(
                ResultsRow(
                    model=key[0],
                    mode=key[1],
                    n=n,
                    percentages=[100.0 * float(p) for p in rates],
                    errors=[standard_error(float(p), n) for p in rates],
                )
            )
        return table

    def row(self, model: str, mode: str) -> Optional[ResultsRow]:
        return next((r for r in self.rows if r.model == model and r.mode == mode), None)

    def csv_rows(self) -> List[Dict[str, object]]:
        out = []
        for row in self.rows:
            entry: Dict[str, object] = {'model': row.label, 'n': row.n}
            for name, pct, se in zip(self.stages, row.percentages, row.errors):
                entry[f'{name}_pct'] = f'{pct:.2f}'
                entry[f'{name}_se'] = f'{se:.2f}'
            out.append(entry)
        return out

    def to_text(self) -> str:
        headers = ['Model', 'n', *[name.capitalize() for name in self.stages]]
        body = [
            [row.label, str(row.n), *[f'{p:.1f} ± {e:.1f}' for p, e in zip(row.percentages, row.errors)]]
            for row in self.rows
        ]
        return format_table(headers, body, title=f'Success rates (%) for {Task(self.task).value}')


@dataclass
class BinningReport:
    bins: List[Dict[str, float]]
    spearman: float

    @classmethod
    def build(cls, max_u: Sequence[float], success: Sequence[bool], n_bins: int = N_BINS) -> 'BinningReport':
        """Sort episodes by ``max_u`` and split them into ``n_bins`` groups whose sizes differ by at most one."""
        if len(max_u) != len(success):
            raise DatasetError('max_u and success lists differ in length')
        if len(max_u) < n_bins:
            raise DatasetError(f'Binning needs at least {n_bins} episodes, got {len(max_u)}')
        order = np.lexsort((np.arange(len(max_u)), np.asarray(max_u, dtype=np.float64)))
        u_sorted = np.asarray(max_u, dtype=np.float64)[order]
        s_sorted = np.asarray(success, dtype=np.float64)[order]
        bins = []
        for index, (u_bin, s_bin) in enumerate(zip(np.array_split(u_sorted, n_bins), np.array_split(s_sorted, n_bins))):
            bins.append(
                {
                    'bin': index + 1,
                    'count': int(len(u_bin)),
                    'mean_max_u': float(np.mean(u_bin)),
                    'success_rate': float(np.mean(s_bin)),
                }
            )
        rho = spearman([b['mean_max_u'] for b in bins], [b['success_rate'] for b in bins])
        return cls(bins, rho)

    def to_text(self) -> str:
        body = [
            [str(b['bin']), str(b['count']), f"{b['mean_max_u']:.6g}", f"{100 * b['success_rate']:.1f}"]
            for b in self.bins
        ]
        text = format_table(['Bin', 'n', 'Mean max u', 'Success %'], body, title='Success vs maximum uncertainty')
        rho = 'n/a' if math.isnan(self.spearman) else f'{self.spearman:.3f}'
        return f'{text}\nSpearman rank correlation: {rho}\n'


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation; NaN when either side is constant."""
    if np.ptp(np.asarray(x, dtype=np.float64)) == 0 or np.ptp(np.asarray(y, dtype=np.float64)) == 0:
        return math.nan
    return float(spearmanr(x, y)[0])


@dataclass(frozen=True)
class McNemarResult:
    baseline: str
    b: int
    c: int
    p_value: float


def mcnemar(treatment: Dict[int, bool], baseline: Dict[int, bool], baseline_name: str = '') -> McNemarResult:
    """
    Paired counts over the shared episode ids: ``b`` where only the treatment
    succeeds and ``c`` where only the baseline does, with an exact two-sided
    binomial p-value.
    """
    shared = sorted(set(treatment) & set(baseline))
    b = sum(1 for i in shared if treatment[i] and not baseline[i])
    c = sum(1 for i in shared if baseline[i] and not treatment[i])
    p_value = 1.0 if b + c == 0 else float(binomtest(b, b + c, 0.5).pvalue)
    return McNemarResult(baseline_name, b, c, p_value)


def mcnemar_against(results: Sequence[EpisodeResult], treatment_mode: str = 'min_unc') -> List[McNemarResult]:
    by_row: Dict[Tuple[str, str], Dict[int, bool]] = {}
    for r in results:
        by_row.setdefault((r.model, r.mode), {})[r.episode_id] = r.success
    treatment = by_row.get(('bvmc', treatment_mode))
    if treatment is None:
        return []
    return [
        mcnemar(treatment, by_row[key], ROW_LABELS.get(key, '/'.join(key)))
        for key in sorted(by_row, key=lambda k: row_rank(*k))
        if key != ('bvmc', treatment_mode)
    ]


def format_table(headers: Sequence[str], rows: Sequence[Sequence[str]], title: str = '') -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    lines = [title] if title else []
    lines.append('  '.join(h.ljust(w) for h, w in zip(headers, widths)).rstrip())
    lines.append('  '.join('-' * w for w in widths))
    for row in rows:
        lines.append('  '.join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return '\n'.join(lines) + '\n'


def write_csv(path: Union[str, Path], rows: Sequence[Dict[str, object]], fieldnames: Optional[List[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fieldnames = fieldnames or (list(rows[0]) if rows else [])
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)
    return path
