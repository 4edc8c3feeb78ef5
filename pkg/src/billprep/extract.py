"""Walk a folder tree of JSON bills and resolve every GAT into long format.

Each bill is identified by its corpus-relative path, so any extracted value can
be traced straight back to the file it came from.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from billprep._csv import read_rows, write_rows
from billprep.mapping import WILDCARD, Index, JsonPath, Key, MappingSpec

OBSERVATION_HEADER = ("bill_id", "gat", "raw_value")


class JsonNumber(str):
    """A JSON number kept as its source text."""


@dataclass(frozen=True, order=True)
class Observation:
    bill_id: str
    gat: str
    raw_value: Optional[str]


@dataclass
class ExtractionReport:
    files_seen: int = 0
    files_failed: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)
    null_counts: dict[str, int] = field(default_factory=dict)

    @property
    def files_succeeded(self) -> int:
        return self.files_seen - self.files_failed

    def to_dict(self) -> dict:
        return {
            "files_seen": self.files_seen,
            "files_succeeded": self.files_succeeded,
            "files_failed": self.files_failed,
            "failures": [list(f) for f in self.failures],
            "null_counts": dict(self.null_counts),
        }


def load_bill(text: str | bytes) -> Any:
    """Parse JSON keeping numbers as their source text."""
    return json.loads(text, parse_int=JsonNumber, parse_float=JsonNumber, parse_constant=JsonNumber)


def _scalar_text(value: Any) -> Optional[str]:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        # empty display strings carry no value
        return value if value.strip() else None
    if isinstance(value, (int, float)):
        return json.dumps(value)
    return None


def _resolve(node: Any, segments: tuple, start: int) -> Optional[str]:
    for i in range(start, len(segments)):
        seg = segments[i]
        if isinstance(seg, Key):
            if not isinstance(node, dict) or seg.name not in node:
                return None
            node = node[seg.name]
        elif isinstance(seg, Index):
            if not isinstance(node, list) or seg.position >= len(node):
                return None
            node = node[seg.position]
        elif seg is WILDCARD:
            if not isinstance(node, list):
                return None
            for element in node:
                found = _resolve(element, segments, i + 1)
                if found is not None:
                    return found
            return None
    return _scalar_text(node)


def resolve_path(document: Any, path: JsonPath) -> Optional[str]:
    """Follow ``path`` into ``document``; ``None`` when it does not reach a scalar."""
    return _resolve(document, path.segments, 0)


def extract_bill(bill_id: str, document: Any, spec: MappingSpec) -> list[Observation]:
    out = []
    for gat in spec.gats:
        value = None
        for path in gat.paths:
            value = resolve_path(document, path)
            if value is not None:
                break
        out.append(Observation(bill_id, gat.name, value))
    return out


def bill_id_for(path: Path, root: Path) -> str:
    rel = path.relative_to(root).as_posix()
    stem, dot, ext = rel.rpartition(".")
    return f"{stem}{dot}{ext.lower()}" if dot else rel


def find_bills(root: str | os.PathLike) -> list[tuple[str, Path]]:
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(f"corpus root {root} is not a readable directory")
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if name.lower().endswith(".json"):
                p = Path(dirpath) / name
                found.append((bill_id_for(p, root), p))
    found.sort()
    return found


def _extract_files(items: list[tuple[str, str]], spec: MappingSpec):
    observations: list[Observation] = []
    failures: list[tuple[str, str]] = []
    for bill_id, path in items:
        try:
            with open(path, "rb") as fh:
                document = load_bill(fh.read().decode("utf-8"))
        except (OSError, UnicodeDecodeError, ValueError) as exc:
            failures.append((bill_id, f"{type(exc).__name__}: {exc}"))
            continue
        observations.extend(extract_bill(bill_id, document, spec))
    return observations, failures


def _extract_compact(items: list[tuple[str, str]], spec: MappingSpec):
    # one (bill_id, raw values in mapping order) tuple per bill pickles far faster
    # than an Observation per value
    observations, failures = _extract_files(items, spec)
    n = len(spec.gats)
    bills = [
        (observations[i].bill_id, tuple(o.raw_value for o in observations[i : i + n]))
        for i in range(0, len(observations), n)
    ]
    return bills, failures


def _chunks(items: list, n: int) -> list[list]:
    size = max(1, -(-len(items) // n))
    return [items[i : i + size] for i in range(0, len(items), size)]


def extract_corpus(
    root: str | os.PathLike, spec: MappingSpec, workers: int = 1
) -> tuple[list[Observation], ExtractionReport]:
    """Extract every ``*.json`` bill below ``root``.

    Output is sorted by ``(bill_id, gat)`` whatever the worker count. Files that
    cannot be read or parsed are listed in the report and skipped.
    """
    bills = find_bills(root)
    report = ExtractionReport(files_seen=len(bills))
    items: list[tuple[str, str]] = []
    seen: set[str] = set()
    for bill_id, path in bills:
        if bill_id in seen:
            report.failures.append((bill_id, "duplicate bill_id after extension normalization"))
            continue
        seen.add(bill_id)
        items.append((bill_id, str(path)))

    observations: list[Observation] = []
    if workers > 1 and len(items) > 1:
        # several chunks per worker keeps the pool busy when file sizes vary
        chunks = _chunks(items, workers * 4)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            names = spec.names
            for bills, fails in pool.map(_extract_compact, chunks, [spec] * len(chunks)):
                for bill_id, raws in bills:
                    observations.extend(Observation(bill_id, g, v) for g, v in zip(names, raws))
                report.failures.extend(fails)
    else:
        observations, fails = _extract_files(items, spec)
        report.failures.extend(fails)

    observations.sort()
    report.failures.sort()
    report.files_failed = len(report.failures)
    report.null_counts = {name: 0 for name in spec.names}
    for o in observations:
        if o.raw_value is None:
            report.null_counts[o.gat] += 1
    return observations, report


def write_observations(path: str | os.PathLike, observations: list[Observation]) -> int:
    return write_rows(path, OBSERVATION_HEADER, ((o.bill_id, o.gat, o.raw_value) for o in observations))


def read_observations(path: str | os.PathLike) -> list[Observation]:
    return [
        Observation(bill_id, gat, raw if raw != "" else None)
        for bill_id, gat, raw in read_rows(path, OBSERVATION_HEADER)
    ]
