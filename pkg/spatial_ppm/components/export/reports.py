"""
JSON reports and the run manifest
"""
import hashlib
import json
import logging
import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

_logger = logging.getLogger(__name__)

# Significant digits of every float written to a report
SIGNIFICANT = 10


def _clean(value):
    """Plain JSON types, floats rounded to SIGNIFICANT digits, non-finite floats as null"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f'{value:.{SIGNIFICANT}g}')
    return value


def write_json(data, path):
    """Write a report with sorted keys and fixed float precision"""
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=True)
        fh.write('\n')
    return path


def sha256(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunReport:
    """
    Record of one command run: configuration echo, stage timings and file manifest

    Every file written through the report is listed in the manifest with its SHA-256.
    """
    command: str
    output_dir: str
    config: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    def path(self, name):
        os.makedirs(self.output_dir, exist_ok=True)
        return os.path.join(self.output_dir, name)

    def record(self, path):
        if path not in self.files:
            self.files.append(path)
        return path

    @contextmanager
    def stage(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = time.perf_counter() - start
            _logger.info("Stage %s took %.3f s", name, self.timings[name])

    def write_json(self, data, name):
        return self.record(write_json(data, self.path(name)))

    def manifest(self):
        return [
            {'file': os.path.relpath(p, self.output_dir), 'sha256': sha256(p)}
            for p in sorted(self.files)
        ]

    def finish(self, name='run.json'):
        """Write the run record; it is excluded from its own manifest"""
        data = {
            'command': self.command,
            'config': self.config,
            'timings': self.timings,
            'manifest': self.manifest(),
        }
        return write_json(data, self.path(name))
