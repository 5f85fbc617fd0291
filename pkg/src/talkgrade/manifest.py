"""Run manifests: everything needed to reproduce a command bit-for-bit."""

from __future__ import annotations

import hashlib
import json
import subprocess
from datetime import datetime, timezone
from pathlib import Path


def _revision() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    from . import __version__

    return f"talkgrade-{__version__}"


def content_hash(paths) -> str:
    """SHA-256 over the bytes of the given files, in the given order."""
    digest = hashlib.sha256()
    for path in paths:
        digest.update(str(Path(path).name).encode())
        digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def write_manifest(path, *, command: str, config: dict, inputs, outputs, seed) -> None:
    data = {
        "format_version": 1,
        "command": command,
        "config": config,
        "dataset_hash": content_hash(inputs) if inputs else None,
        "seed": seed,
        "revision": _revision(),
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "outputs": [str(p) for p in outputs],
    }
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
