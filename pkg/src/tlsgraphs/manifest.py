"""Run manifests: a JSON record of what a CLI run did, written atomically.

The manifest carries the command, the resolved configuration, the master seed,
the toolkit version, SHA-256 digests of inputs and outputs, and wall-clock
timings, so any run can be replayed and its outputs verified byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict[str, Any]
    master_seed: int
    toolkit_version: str
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    _stage_started: dict[str, float] = field(default_factory=dict, repr=False)

    def record_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = file_digest(path)

    def record_output(self, path: str | Path) -> None:
        self.outputs[str(path)] = file_digest(path)

    def start(self, stage: str) -> None:
        self._stage_started[stage] = time.perf_counter()

    def stop(self, stage: str) -> None:
        self.timings[stage] = time.perf_counter() - self._stage_started.pop(stage)

    def to_json(self) -> str:
        doc = {
            "command": self.command,
            "config": self.config,
            "master_seed": self.master_seed,
            "toolkit_version": self.toolkit_version,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "timings_seconds": {k: round(v, 3) for k, v in self.timings.items()},
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def write(self, path: str | Path) -> None:
        """Atomic write: temp file in the target directory, then rename."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(self.to_json())
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise


def verify_manifest(path: str | Path) -> list[str]:
    """Digest mismatches (or missing files) among the manifest's outputs."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    problems = []
    for name, digest in doc.get("outputs", {}).items():
        target = Path(name)
        if not target.exists():
            problems.append(f"missing output: {name}")
        elif file_digest(target) != digest:
            problems.append(f"digest mismatch: {name}")
    return problems
