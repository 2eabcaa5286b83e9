"""
Repository layer: result tables and run manifests under an output directory.
"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Generic, TypeVar, Union

RecordType = TypeVar("RecordType")


class BaseRepository(Generic[RecordType], ABC):
    """
    Base repository class for file-backed result storage.

    Subclasses decide the on-disk format; the base class owns the directory
    and the naming of files inside it.
    """

    suffix: str = ""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def path_for(self, name: str) -> Path:
        """Location of the record called ``name``."""
        if not name or Path(name).name != name:
            raise ValueError(f"invalid record name: {name!r}")
        return self.root / f"{name}{self.suffix}"

    def exists(self, name: str) -> bool:
        """Check if a record exists."""
        return self.path_for(name).is_file()

    def _prepare(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        return self.path_for(name)

    @abstractmethod
    def save(self, name: str, record: RecordType) -> Path:
        """Persist ``record`` and return its path."""

    @abstractmethod
    def load(self, name: str) -> RecordType:
        """Read a record written by :meth:`save`."""


from .manifest_repository import ManifestRepository  # noqa: E402
from .result_repository import CsvResultRepository, ResultTable  # noqa: E402

__all__ = [
    "BaseRepository",
    "CsvResultRepository",
    "ManifestRepository",
    "ResultTable",
]
