"""
Run manifests: everything needed to reproduce a result directory.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, is_dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional

from ..config import settings

logger = logging.getLogger(__name__)

_CHUNK = 1 << 16


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(_CHUNK), b""):
            digest.update(block)
    return digest.hexdigest()


def _snapshot(config: Any) -> dict:
    if is_dataclass(config):
        return asdict(config)
    if hasattr(config, "model_dump"):
        return config.model_dump()
    return dict(config)


@dataclass
class RunManifest:
    command: str
    config: dict[str, Any]
    inputs: dict[str, str]
    seed: Optional[int] = None
    version: str = settings.APP_VERSION
    timings: dict[str, float] = field(default_factory=dict)
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    outputs: list[str] = field(default_factory=list)
    status: str = "ok"

    @classmethod
    def create(
        cls,
        command: str,
        config: Any,
        inputs: Iterable[str | Path],
        seed: Optional[int] = None,
    ) -> "RunManifest":
        """Hashes every input file consumed; duplicates are recorded once."""
        hashes = {str(Path(p).resolve()): file_sha256(p) for p in inputs}
        return cls(command=command, config=_snapshot(config), inputs=hashes, seed=seed)

    def write(self, out_dir: Path) -> Path:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        logger.info("Manifest written to %s", path)
        return path


def load_manifest(path: str | Path) -> RunManifest:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunManifest(**raw)
