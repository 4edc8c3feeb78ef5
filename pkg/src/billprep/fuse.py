"""Pivot cleaned values into one record per bill, split them into Bill / POD /
User tables and reconcile repeated entity data.

POD and user fields are copied into every bill, so the same entity shows up
many times, sometimes with missing or drifting values. Each attribute of an
entity is resolved independently to its most recent non-null value, ordered by
bill date (ties: greatest bill id). Ages are turned into years of birth before
fusion, using the date of the bill that reported them.
"""

from __future__ import annotations

import datetime as dt
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from billprep._csv import read_header, read_rows, write_rows
from billprep.clean import NULL_VALUE, CleanedRow, CleaningError, CleanValue, parse_rendered, render_value
from billprep.mapping import Entity, MappingSpec, OutputType

QUARANTINE_HEADER = ("kind", "key", "reason")

MIN_AGE, MAX_AGE = 0, 130


class IntegrityError(RuntimeError):
    """Broken key uniqueness or referential integrity; indicates a pipeline bug."""


@dataclass
class WideRecord:
    bill_id: str
    values: dict[str, CleanValue]


@dataclass(frozen=True, order=True)
class QuarantineEntry:
    kind: str
    key: str
    reason: str


@dataclass
class Member:
    bill_date: dt.date
    bill_id: str
    values: dict[str, CleanValue]


@dataclass
class FusionGroup:
    key: str
    members: list[Member] = field(default_factory=list)


@dataclass
class BillRow:
    bill_id: str
    pod_id: str
    values: dict[str, CleanValue]


@dataclass
class EntityTables:
    """Three fused tables; each row maps column name -> :class:`CleanValue`."""

    bill_columns: list[str]
    pod_columns: list[str]
    user_columns: list[str]
    bills: list[dict[str, CleanValue]]
    pods: list[dict[str, CleanValue]]
    users: list[dict[str, CleanValue]]

    def cell_count(self) -> int:
        return (
            len(self.bills) * len(self.bill_columns)
            + len(self.pods) * len(self.pod_columns)
            + len(self.users) * len(self.user_columns)
        )


def _key(value: CleanValue) -> Optional[str]:
    return None if value.is_null else render_value(value)


# -- pivot --------------------------------------------------------------------


def pivot(
    cleaned: Iterable[CleanedRow], spec: MappingSpec
) -> tuple[list[WideRecord], list[QuarantineEntry]]:
    """Long (bill, GAT, value) rows -> one :class:`WideRecord` per bill.

    Bills without a date or POD identifier are quarantined.
    """
    by_bill: dict[str, dict[str, CleanValue]] = defaultdict(dict)
    for row in cleaned:
        values = by_bill[row.bill_id]
        if row.gat in values:
            raise IntegrityError(f"duplicate value for ({row.bill_id}, {row.gat})")
        values[row.gat] = row.value

    date_gat = spec.bill_date.name
    pod_gat = spec.pod_identifier.name
    records, quarantine = [], []
    for bill_id in sorted(by_bill):
        got = by_bill[bill_id]
        values = {name: got.get(name, NULL_VALUE) for name in spec.names}
        if values[date_gat].is_null:
            quarantine.append(QuarantineEntry("bill", bill_id, "null bill date"))
        elif values[pod_gat].is_null:
            quarantine.append(QuarantineEntry("bill", bill_id, "null POD identifier"))
        else:
            records.append(WideRecord(bill_id, values))
    return records, quarantine


def wide_cell_count(records: list[WideRecord], spec: MappingSpec) -> int:
    """Cells of the denormalized table (bill id plus one column per GAT)."""
    return len(records) * (1 + len(spec.gats))


# -- entity split ---------------------------------------------------------------


def split_entities(
    wide: list[WideRecord], spec: MappingSpec
) -> tuple[list[BillRow], dict[str, FusionGroup], dict[str, FusionGroup], list[QuarantineEntry]]:
    date_gat = spec.bill_date.name
    pod_gat = spec.pod_identifier.name
    user_gat = spec.user_identifier.name
    bill_attrs = [g.name for g in spec.for_entity(Entity.BILL)]
    pod_attrs = [g.name for g in spec.for_entity(Entity.POD) if g.name != pod_gat]
    user_attrs = [g.name for g in spec.for_entity(Entity.USER) if g.name != user_gat]

    bills: list[BillRow] = []
    pods: dict[str, FusionGroup] = {}
    users: dict[str, FusionGroup] = {}
    quarantine: list[QuarantineEntry] = []
    for rec in wide:
        v = rec.values
        bill_date = v[date_gat].value
        pod_id = _key(v[pod_gat])
        user_value = v[user_gat]
        bills.append(BillRow(rec.bill_id, pod_id, {a: v[a] for a in bill_attrs}))

        pod_values = {a: v[a] for a in pod_attrs}
        pod_values["user_id"] = user_value
        pods.setdefault(pod_id, FusionGroup(pod_id)).members.append(Member(bill_date, rec.bill_id, pod_values))

        user_id = _key(user_value)
        if user_id is None:
            quarantine.append(QuarantineEntry("user", rec.bill_id, "null user identifier"))
            continue
        users.setdefault(user_id, FusionGroup(user_id)).members.append(
            Member(bill_date, rec.bill_id, {a: v[a] for a in user_attrs})
        )
    return bills, pods, users, quarantine


# -- resolution -----------------------------------------------------------------


def resolve_most_recent_non_null(group: FusionGroup) -> dict[str, CleanValue]:
    """Per attribute, the non-null value from the latest bill (ties: greatest bill id)."""
    if not group.members:
        raise ValueError(f"empty fusion group {group.key!r}")
    ordered = sorted(group.members, key=lambda m: (m.bill_date, m.bill_id), reverse=True)
    fused: dict[str, CleanValue] = {}
    for member in ordered:
        for attr, value in member.values.items():
            if attr not in fused or (fused[attr].is_null and not value.is_null):
                fused[attr] = value
    return fused


def year_of_birth(age: int, bill_date: dt.date) -> int:
    if not MIN_AGE <= age <= MAX_AGE:
        raise CleaningError(f"age {age} outside [{MIN_AGE}, {MAX_AGE}]")
    return bill_date.year - age


def _with_year_of_birth(group: FusionGroup, age_gat: Optional[str], quarantine: list) -> FusionGroup:
    members = []
    for m in group.members:
        values = dict(m.values)
        yob = NULL_VALUE
        if age_gat is not None:
            age = values.pop(age_gat)
            if not age.is_null:
                try:
                    yob = CleanValue(OutputType.INTEGER.value, year_of_birth(age.value, m.bill_date))
                except CleaningError as exc:
                    quarantine.append(QuarantineEntry("age", m.bill_id, str(exc)))
        values["year_of_birth"] = yob
        members.append(Member(m.bill_date, m.bill_id, values))
    return FusionGroup(group.key, members)


def _winning_members(summaries: list[list[tuple]]) -> list[dict[str, int]]:
    """Index of the member each attribute's fused value comes from.

    Works on ``(bill_date, bill_id, ((attr, is_null), ...))`` summaries so only
    small tuples cross the process boundary; mirrors ``resolve_most_recent_non_null``.
    """
    out = []
    for members in summaries:
        order = sorted(range(len(members)), key=lambda i: members[i][:2], reverse=True)
        won: dict[str, int] = {}
        null: dict[str, bool] = {}
        for i in order:
            for attr, is_null in members[i][2]:
                if attr not in won or (null[attr] and not is_null):
                    won[attr] = i
                    null[attr] = is_null
        out.append(won)
    return out


def _resolve_all(groups: list[FusionGroup], workers: int) -> list[dict[str, CleanValue]]:
    if workers <= 1 or len(groups) < 2:
        return [resolve_most_recent_non_null(g) for g in groups]
    summaries = [
        [(m.bill_date, m.bill_id, tuple((a, v.is_null) for a, v in m.values.items())) for m in g.members] for g in groups
    ]
    if any(not s for s in summaries):
        raise ValueError("empty fusion group")
    size = max(1, -(-len(groups) // workers))
    chunks = [summaries[i : i + size] for i in range(0, len(summaries), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        winners = [w for part in pool.map(_winning_members, chunks) for w in part]
    return [{a: g.members[i].values[a] for a, i in won.items()} for g, won in zip(groups, winners)]


def build_tables(
    bill_rows: list[BillRow],
    pod_groups: Mapping[str, FusionGroup],
    user_groups: Mapping[str, FusionGroup],
    spec: MappingSpec,
    workers: int = 1,
) -> tuple[EntityTables, list[QuarantineEntry]]:
    pod_gat = spec.pod_identifier.name
    user_gat = spec.user_identifier.name
    age_gat = spec.age.name if spec.age is not None else None
    bill_attrs = [g.name for g in spec.for_entity(Entity.BILL)]
    pod_attrs = [g.name for g in spec.for_entity(Entity.POD) if g.name != pod_gat]
    user_attrs = [g.name for g in spec.for_entity(Entity.USER) if g.name not in (user_gat, age_gat)]
    quarantine: list[QuarantineEntry] = []

    pod_keys = sorted(pod_groups)
    user_keys = sorted(user_groups)
    converted = [_with_year_of_birth(user_groups[k], age_gat, quarantine) for k in user_keys]
    fused_pods = _resolve_all([pod_groups[k] for k in pod_keys], workers)
    fused_users = _resolve_all(converted, workers)

    tables = EntityTables(
        bill_columns=["bill_id", "pod_id", *bill_attrs],
        pod_columns=["pod_id", "user_id", *pod_attrs],
        user_columns=["user_id", "year_of_birth", *user_attrs],
        bills=[],
        pods=[],
        users=[],
    )
    text = OutputType.TEXT.value
    for row in sorted(bill_rows, key=lambda r: r.bill_id):
        tables.bills.append({"bill_id": CleanValue(text, row.bill_id), "pod_id": CleanValue(text, row.pod_id), **row.values})
    for key, fused in zip(pod_keys, fused_pods):
        user_key = _key(fused["user_id"])
        tables.pods.append(
            {"pod_id": CleanValue(text, key), "user_id": CleanValue(text, user_key) if user_key else NULL_VALUE}
            | {a: fused[a] for a in pod_attrs}
        )
        if user_key is None:
            quarantine.append(QuarantineEntry("pod", key, "no bill carries a user identifier"))
    for key, fused in zip(user_keys, fused_users):
        tables.users.append(
            {"user_id": CleanValue(text, key), "year_of_birth": fused["year_of_birth"]}
            | {a: fused[a] for a in user_attrs}
        )
    check_integrity(tables)
    quarantine.sort()
    return tables, quarantine


def check_integrity(tables: EntityTables) -> None:
    def keys(rows, column):
        values = [r[column].value for r in rows]
        if len(values) != len(set(values)):
            raise IntegrityError(f"duplicate {column} values")
        return set(values)

    keys(tables.bills, "bill_id")
    pod_ids = keys(tables.pods, "pod_id")
    user_ids = keys(tables.users, "user_id")
    for row in tables.bills:
        if row["pod_id"].value not in pod_ids:
            raise IntegrityError(f"bill {row['bill_id'].value} references unknown POD {row['pod_id'].value}")
    for row in tables.pods:
        # a POD whose bills never named a user keeps a null reference
        if not row["user_id"].is_null and row["user_id"].value not in user_ids:
            raise IntegrityError(f"POD {row['pod_id'].value} references unknown user {row['user_id'].value}")


def fuse(cleaned: Iterable[CleanedRow], spec: MappingSpec, workers: int = 1):
    """pivot -> split -> build; returns ``(tables, quarantine, wide_records)``."""
    wide, quarantine = pivot(cleaned, spec)
    bills, pods, users, q_split = split_entities(wide, spec)
    tables, q_build = build_tables(bills, pods, users, spec, workers=workers)
    return tables, sorted(quarantine + q_split + q_build), wide


# -- files ------------------------------------------------------------------------

TABLE_FILES = {"bills": "bills.csv", "pods": "pods.csv", "users": "users.csv"}


def write_table(path: str | os.PathLike, tables: EntityTables, name: str) -> int:
    """Write one of ``bills`` / ``pods`` / ``users``."""
    columns = {"bills": tables.bill_columns, "pods": tables.pod_columns, "users": tables.user_columns}[name]
    rows = getattr(tables, name)
    return write_rows(path, columns, ([render_value(r[c]) for c in columns] for r in rows))


def write_tables(out_dir: str | os.PathLike, tables: EntityTables) -> None:
    for name, filename in TABLE_FILES.items():
        write_table(Path(out_dir) / filename, tables, name)


def column_types(spec: MappingSpec) -> dict[str, str]:
    types = {g.name: g.output_type.value for g in spec.gats}
    types.update(bill_id="text", pod_id="text", user_id="text", year_of_birth="integer")
    return types


def read_tables(in_dir: str | os.PathLike, spec: MappingSpec) -> EntityTables:
    in_dir = Path(in_dir)
    types = column_types(spec)
    loaded = {}
    for name, filename in TABLE_FILES.items():
        header = read_header(in_dir / filename)
        rows = read_rows(in_dir / filename, header)
        loaded[name] = (
            header,
            [
                {c: (NULL_VALUE if cell == "" else parse_rendered(types[c], cell)) for c, cell in zip(header, r)}
                for r in rows
            ],
        )
    tables = EntityTables(
        bill_columns=loaded["bills"][0],
        pod_columns=loaded["pods"][0],
        user_columns=loaded["users"][0],
        bills=loaded["bills"][1],
        pods=loaded["pods"][1],
        users=loaded["users"][1],
    )
    check_integrity(tables)
    return tables


def write_quarantine(path: str | os.PathLike, entries: Iterable[QuarantineEntry]) -> int:
    return write_rows(path, QUARANTINE_HEADER, ((q.kind, q.key, q.reason) for q in entries))


_SQL_TYPES = {
    "decimal": "DECIMAL(18, 2)",
    "integer": "INTEGER",
    "date": "DATE",
    "text": "VARCHAR(255)",
    "hashed_text": "CHAR(64)",
}


def _sql_literal(value: CleanValue) -> str:
    if value.is_null:
        return "NULL"
    if value.tag in ("decimal", "integer"):
        return render_value(value)
    return "'" + render_value(value).replace("'", "''") + "'"


def sql_dump(tables: EntityTables, spec: MappingSpec) -> str:
    """CREATE TABLE + INSERT statements mirroring the CSV tables."""
    types = column_types(spec)
    types["pod_id"] = types["user_id"] = "text"
    out = []
    layout = [
        ("users", tables.user_columns, tables.users, "user_id", []),
        ("pods", tables.pod_columns, tables.pods, "pod_id", [("user_id", "users")]),
        ("bills", tables.bill_columns, tables.bills, "bill_id", [("pod_id", "pods")]),
    ]
    for name, columns, rows, pk, fks in layout:
        defs = [f"    {c} {_SQL_TYPES[types[c]]}{' NOT NULL' if c == pk else ''}" for c in columns]
        defs.append(f"    PRIMARY KEY ({pk})")
        defs += [f"    FOREIGN KEY ({col}) REFERENCES {ref} ({col})" for col, ref in fks]
        out.append(f"CREATE TABLE {name} (\n" + ",\n".join(defs) + "\n);")
    for name, columns, rows, _, _ in layout:
        for r in rows:
            values = ", ".join(_sql_literal(r[c]) for c in columns)
            out.append(f"INSERT INTO {name} ({', '.join(columns)}) VALUES ({values});")
    return "\n".join(out) + "\n"
