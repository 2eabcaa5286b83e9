"""
Run manifests written next to every output table.
"""

from pathlib import Path

import structlog

from ..models import RunManifest
from . import BaseRepository

logger = structlog.get_logger(__name__)


class ManifestRepository(BaseRepository[RunManifest]):
    """Repository for JSON run manifests."""

    suffix = ".manifest.json"

    def save(self, name: str, record: RunManifest) -> Path:
        path = self._prepare(name)
        path.write_text(record.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info("manifest_written", path=str(path), command=record.command)
        return path

    def load(self, name: str) -> RunManifest:
        text = self.path_for(name).read_text(encoding="utf-8")
        return RunManifest.model_validate_json(text)
