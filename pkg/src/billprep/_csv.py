"""Small deterministic CSV helpers shared by the stage writers."""

from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Iterable, Iterator, Sequence


def write_rows(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    """Write ``rows`` under ``header``; ``None`` cells become empty fields."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if c is None else c for c in row])
            n += 1
    return n


def read_rows(path: str | os.PathLike, header: Sequence[str] | None = None) -> Iterator[list[str]]:
    """Yield data rows; checks the header when one is given."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV (no header)") from None
        if header is not None and list(first) != list(header):
            raise ValueError(f"{path}: expected header {list(header)}, got {first}")
        yield from reader


def read_header(path: str | os.PathLike) -> list[str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return next(csv.reader(fh))
