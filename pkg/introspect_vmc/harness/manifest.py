"""
Run manifest and artifact checksum chain.

Each pipeline stage records the sha256 of the artifact it wrote together with
the checksums of the artifacts it was built from. A downstream stage verifies
that chain before reading anything and refuses to run on a broken link.
"""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Union

from introspect_vmc.exceptions import ArtifactChainError

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'

# stage -> command that produces it
STAGE_COMMANDS = {
    'demos': 'gen-demos',
    'policy': 'train',
    'vmc_policy': 'train --dropout-free',
    'threshold': 'pick-threshold',
    'foresight_data': 'collect-foresight',
    'foresight': 'train-foresight',
    'evaluation': 'evaluate',
}


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


class RunManifest:
    """
    ``manifest.json`` under the run directory.

    Artifacts are stored by stage name with a path relative to the run
    directory, their checksum and the checksums of their parent stages.
    """

    def __init__(self, root: Union[str, Path], data: Optional[Dict[str, Any]] = None):
        self.root = Path(root)
        self.data = data or {'config': {}, 'artifacts': {}, 'thresholds': {}, 'last_command': None}

    @classmethod
    def load(cls, root: Union[str, Path]) -> 'RunManifest':
        path = Path(root) / MANIFEST_NAME
        if not path.exists():
            return cls(root)
        with open(path, encoding='utf-8') as handle:
            return cls(root, json.load(handle))

    @property
    def path(self) -> Path:
        return self.root / MANIFEST_NAME

    def save(self) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.path, 'w', encoding='utf-8') as handle:
            json.dump(self.data, handle, indent=2, sort_keys=True)
            handle.write('\n')
        return self.path

    def artifact_path(self, stage: str) -> Path:
        entry = self.data['artifacts'].get(stage)
        if entry is None:
            raise ArtifactChainError(
                f'No {stage} artifact recorded in {self.path}; run `ivmc {STAGE_COMMANDS.get(stage, stage)}` first'
            )
        return self.root / entry['path']

    def has(self, stage: str) -> bool:
        return stage in self.data['artifacts']

    def checksum(self, stage: str) -> str:
        self.artifact_path(stage)
        return self.data['artifacts'][stage]['sha256']

    def record(
        self,
        stage: str,
        path: Union[str, Path],
        parents: Iterable[str] = (),
        extra: Optional[Mapping[str, Any]] = None,
    ) -> str:
        """Record ``path`` as the artifact of ``stage``; returns its checksum."""
        path = Path(path)
        checksum = sha256_file(path)
        entry = {
            'path': Path(os.path.relpath(path, self.root)).as_posix(),
            'sha256': checksum,
            'parents': {name: self.checksum(name) for name in parents},
        }
        if extra:
            entry.update(extra)
        self.data['artifacts'][stage] = entry
        logger.info('Recorded %s artifact %s (sha256 %s)', stage, entry['path'], checksum[:12])
        return checksum

    def verify(self, stage: str) -> Path:
        """Check the file and every parent link of ``stage``; returns the artifact path."""
        path = self.artifact_path(stage)
        entry = self.data['artifacts'][stage]
        command = STAGE_COMMANDS.get(stage, stage)
        if not path.exists():
            raise ArtifactChainError(f'{stage} artifact {path} is missing; rerun `ivmc {command}`')
        if sha256_file(path) != entry['sha256']:
            raise ArtifactChainError(f'{stage} artifact {path} changed after it was recorded; rerun `ivmc {command}`')
        for parent, checksum in entry.get('parents', {}).items():
            if not self.has(parent):
                raise ArtifactChainError(f'{stage} depends on {parent}, which is not recorded in the manifest')
            if self.data['artifacts'][parent]['sha256'] != checksum:
                raise ArtifactChainError(
                    f'{stage} was built from a different {parent} artifact; rerun `ivmc {command}`'
                )
            self.verify(parent)
        return path

    def set_threshold(self, task: str, model: str, value: float, **details: Any) -> None:
        self.data['thresholds'][f'{task}/{model}'] = {'C': repr(float(value)), **details}

    def threshold(self, task: str, model: str) -> float:
        key = f'{task}/{model}'
        if key not in self.data['thresholds']:
            raise ArtifactChainError(f'No threshold recorded for {key}; run `ivmc pick-threshold` first')
        return float(self.data['thresholds'][key]['C'])

    def set_config(self, config: Mapping[str, Any], command: str) -> None:
        self.data['config'] = dict(config)
        self.data['last_command'] = command
