"""
CSV result tables.

Tables are UTF-8, comma separated, '\\n' terminated, with a header row in a
fixed column order. Floats are written as '%.10e'; NaN as 'nan'.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import pandas as pd
import structlog

from . import BaseRepository

logger = structlog.get_logger(__name__)

FLOAT_FORMAT = "%.10e"
NA_REP = "nan"


@dataclass(frozen=True)
class ResultTable:
    """Rows plus the column order they are written in."""

    columns: Tuple[str, ...]
    rows: Tuple[Dict[str, Any], ...]

    @classmethod
    def build(
        cls, columns: Sequence[str], rows: Sequence[Mapping[str, Any]]
    ) -> "ResultTable":
        columns = tuple(columns)
        if len(set(columns)) != len(columns):
            raise ValueError("duplicate column names")
        checked: List[Dict[str, Any]] = []
        for index, row in enumerate(rows):
            missing = [c for c in columns if c not in row]
            extra = [k for k in row if k not in columns]
            if missing or extra:
                raise ValueError(
                    f"row {index} does not match the table columns "
                    f"(missing={missing}, extra={extra})"
                )
            checked.append(dict(row))
        return cls(columns=columns, rows=tuple(checked))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(list(self.rows), columns=list(self.columns))


class CsvResultRepository(BaseRepository[ResultTable]):
    """Repository for schema-stable CSV tables."""

    suffix = ".csv"

    def save(self, name: str, record: ResultTable) -> Path:
        path = self._prepare(name)
        record.to_frame().to_csv(
            path,
            index=False,
            float_format=FLOAT_FORMAT,
            na_rep=NA_REP,
            encoding="utf-8",
            lineterminator="\n",
        )
        logger.info("csv_written", path=str(path), rows=len(record.rows))
        return path

    def save_rows(
        self, name: str, columns: Sequence[str], rows: Sequence[Mapping[str, Any]]
    ) -> Path:
        """Validate ``rows`` against ``columns`` and write them."""
        return self.save(name, ResultTable.build(columns, rows))

    def load(self, name: str) -> ResultTable:
        frame = pd.read_csv(self.path_for(name), keep_default_na=False)
        rows = tuple(frame.to_dict(orient="records"))
        return ResultTable(columns=tuple(frame.columns), rows=rows)
