"""
Recovery threshold selection on held-out rollouts.

Records are sorted by their maximum window sum ``u``. Choosing candidate
``u_i`` as the threshold would trigger recovery on every episode with
``u > u_i``; the objective is the expected gain in successes if those
episodes then succeeded at the overall rate, minus the successes already
among them:

    objective(i) = |{x : u(x) > u_i}| * r_bar - |{x : u(x) > u_i, success(x)}|

The scan works on ``N * objective`` in integers so ties are exact.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from introspect_vmc.exceptions import DatasetError, InsufficientSamplesError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValidationRecord:
    episode_id: int
    max_u: float
    success: bool


@dataclass
class ThresholdResult:
    """``i_star`` is the 1-based rank of the chosen record in ascending ``max_u`` order."""

    C: float
    i_star: Optional[int]
    r_bar: float
    scan: List[Dict[str, object]] = field(default_factory=list)
    degenerate: bool = False


def pick_threshold(records: Sequence[ValidationRecord]) -> ThresholdResult:
    if len(records) < 2:
        raise InsufficientSamplesError("At least two validation records are needed to pick a threshold")
    for record in records:
        if not record.max_u >= 0 or not math.isfinite(record.max_u):
            raise DatasetError(f"Episode {record.episode_id} has invalid max_u {record.max_u}")

    ordered = sorted(records, key=lambda r: (r.max_u, r.episode_id))
    n = len(ordered)
    n_success = sum(1 for r in ordered if r.success)
    r_bar = n_success / n

    scan = []
    best_score, best_index = None, None
    for i, candidate in enumerate(ordered):
        above = [r for r in ordered if r.max_u > candidate.max_u]
        above_success = sum(1 for r in above if r.success)
        score = len(above) * n_success - n * above_success
        scan.append(
            {
                "rank": i + 1,
                "episode_id": candidate.episode_id,
                "max_u": candidate.max_u,
                "success": candidate.success,
                "n_above": len(above),
                "success_above": above_success,
                "objective": score / n,
            }
        )
        if best_score is None or score > best_score:
            best_score, best_index = score, i

    if n_success in (0, n):
        logger.warning(
            "Validation episodes are all %s; threshold set to +inf (recovery never triggers)",
            "successes" if n_success == n else "failures",
        )
        return ThresholdResult(C=math.inf, i_star=None, r_bar=r_bar, scan=scan, degenerate=True)

    chosen = ordered[best_index]
    logger.info("Threshold C=%.6g at rank %d of %d (r_bar=%.3f)", chosen.max_u, best_index + 1, n, r_bar)
    return ThresholdResult(C=chosen.max_u, i_star=best_index + 1, r_bar=r_bar, scan=scan)


def write_validation_records(path: Union[str, Path], records: Sequence[ValidationRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["episode_id", "max_u", "success"])
        for r in sorted(records, key=lambda r: r.episode_id):
            writer.writerow([r.episode_id, repr(float(r.max_u)), int(r.success)])
    return path


def read_validation_records(path: Union[str, Path]) -> List[ValidationRecord]:
    with open(path, newline="", encoding="utf-8") as handle:
        try:
            return [
                ValidationRecord(int(row["episode_id"]), float(row["max_u"]), bool(int(row["success"])))
                for row in csv.DictReader(handle)
            ]
        except (KeyError, ValueError) as exc:
            raise DatasetError(f"Malformed validation record file {path}: {exc}") from exc


SCAN_FIELDS = ["rank", "episode_id", "max_u", "success", "n_above", "success_above", "objective"]


def write_threshold_result(path: Union[str, Path], result: ThresholdResult) -> Path:
    """Scan table rows followed by a ``# C=... i_star=... r_bar=...`` summary line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=SCAN_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in result.scan:
            writer.writerow(
                {**row, "success": int(row["success"]), "max_u": repr(row["max_u"]), "objective": repr(row["objective"])}
            )
        handle.write(f"# C={result.C!r} i_star={result.i_star} r_bar={result.r_bar!r}\n")
    return path


def read_threshold_summary(path: Union[str, Path]) -> Dict[str, object]:
    with open(path, encoding="utf-8") as handle:
        lines = [line.strip() for line in handle if line.startswith("#")]
    if not lines:
        raise DatasetError(f"No threshold summary line in {path}")
    fields = dict(item.split("=", 1) for item in lines[-1].lstrip("# ").split())
    i_star = None if fields["i_star"] == "None" else int(fields["i_star"])
    return {"C": float(fields["C"]), "i_star": i_star, "r_bar": float(fields["r_bar"])}
