"""Run manifests: enough metadata to reproduce any CLI invocation.

Manifests deliberately contain no wall-clock timestamps so that
re-running an identical invocation yields byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__

__all__ = ["sha256_file", "write_manifest"]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(
    path,
    subcommand: str,
    parameters: dict,
    inputs: list,
    outputs: list,
    seed: int | None = None,
) -> None:
    doc = {
        "tool": "qubursts",
        "version": __version__,
        "subcommand": subcommand,
        "parameters": parameters,
        "seed": seed,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
