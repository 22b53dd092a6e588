import csv
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _format(value: object) -> str:
    if isinstance(value, float | np.floating):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


class CsvWriter:
    """Line-buffered CSV writer with fixed float formatting.

    Floats are written with ``repr`` so identical runs produce identical bytes.
    The file is flushed after every block of rows, which keeps partial results on
    disk when a run aborts.
    """

    __slots__ = ("_file", "_path", "_rows", "_writer")

    def __init__(self, path: str | Path, header: Sequence[str]) -> None:
        """Open the file and write the header row.

        Args:
            path (str | Path): Destination file, parent directories are created.
            header (Sequence[str]): Column names.
        """
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._file = self._path.open("w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(header)
        self._rows = 0

    def __enter__(self) -> "CsvWriter":
        """Enter the context manager."""
        return self

    def __exit__(self, *_exc: object) -> None:
        """Close the file."""
        self.close()

    @property
    def path(self) -> Path:
        """Path of the file being written."""
        return self._path

    def write_rows(self, rows: Iterable[Sequence[object]]) -> None:
        """Append rows and flush them to disk."""
        for row in rows:
            self._writer.writerow([_format(v) for v in row])
            self._rows += 1
        self._file.flush()

    def close(self) -> None:
        """Close the file."""
        if not self._file.closed:
            self._file.close()
            logger.debug("Wrote %d rows to %s", self._rows, self._path)
