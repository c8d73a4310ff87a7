import sys
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from mpfilter.logging_config import get_logger
from mpfilter.repositories.dataset_repository import fmt

logger = get_logger()

Cell = Union[int, float, str, bool, None]


def format_cell(value: Cell) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return fmt(value)
    return str(value)


class CsvOutputRepository:
    """Writes `#` provenance lines, a column header and rows to a file or stdout."""

    def __init__(self, provenance: Sequence[str] = ()) -> None:
        self._provenance = list(provenance)

    def render(self, columns: Sequence[str], rows: Iterable[Sequence[Cell]]) -> str:
        lines = [f"# {line}" for line in self._provenance]
        lines.append(",".join(columns))
        lines += [",".join(format_cell(c) for c in row) for row in rows]
        return "\n".join(lines) + "\n"

    def write(
        self,
        columns: Sequence[str],
        rows: Iterable[Sequence[Cell]],
        path: Optional[Union[str, Path]] = None,
    ) -> None:
        text = self.render(columns, rows)
        if path is None:
            sys.stdout.write(text)
            sys.stdout.flush()
            return
        Path(path).write_text(text, encoding="utf-8")
        logger.info("csv_written", path=str(path), columns=len(columns))
