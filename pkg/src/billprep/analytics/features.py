"""Per-(POD, offer) feature vectors with churn labels.

A POD's bills are grouped by the offer they were issued under. The numeric
bill fields are summed per group, user data comes from the POD owner, and the
label says whether the POD later moved to another offer: churn is 1 when the
offer of the POD's last bill differs from the group's offer.
"""

from __future__ import annotations

import datetime as dt
import json
import os
from collections import defaultdict
from dataclasses import astuple, dataclass, fields
from decimal import Decimal
from typing import Iterable, Optional, Sequence

import numpy as np

from billprep._csv import read_rows, write_rows
from billprep.fuse import EntityTables
from billprep.mapping import MappingSpec

MISSING_AGE = -1
MISSING_CATEGORY = ""

FEATURE_NAMES = (
    "offer",
    "sex",
    "age",
    "municipality",
    "total_consumption",
    "total_amount",
    "total_light_amount",
    "billed_days",
)
CATEGORICAL = ("municipality", "offer", "sex")


@dataclass(frozen=True)
class FeatureColumns:
    """GAT names feeding each feature; offer and bill date come from the mapping roles."""

    sex: str = "sex"
    municipality: str = "municipality"
    total_consumption: str = "total_consumption"
    total_amount: str = "total_amount"
    total_light_amount: str = "total_light_amount"
    billed_days: str = "billed_days"


@dataclass(frozen=True, order=True)
class FeatureVector:
    pod_id: str
    offer: int
    sex: int
    age: int
    municipality: int
    total_consumption: Decimal
    total_amount: Decimal
    total_light_amount: Decimal
    billed_days: int
    churn: int


FEATURE_HEADER = tuple(f.name for f in fields(FeatureVector))


@dataclass(frozen=True)
class EncodingTable:
    column: str
    codes: dict[str, int]

    def decode(self, code: int) -> str:
        for category, c in self.codes.items():
            if c == code:
                return category
        raise KeyError(code)


def encode_categorical(values: Sequence[str], column: str = "") -> tuple[list[int], EncodingTable]:
    """Ordinal codes 0..k-1 in lexicographic order of the categories."""
    table = EncodingTable(column, {c: i for i, c in enumerate(sorted(set(values)))})
    return [table.codes[v] for v in values], table


def label_churn(pod_bills: Iterable[tuple[dt.date, str, Optional[str]]], offer: str) -> int:
    """``pod_bills`` holds ``(bill_date, bill_id, offer)``; bills without an offer are ignored."""
    dated = [(d, b, o) for d, b, o in pod_bills if o is not None]
    if not dated:
        raise ValueError("POD has no bill with an offer")
    last_offer = max(dated, key=lambda t: (t[0], t[1]))[2]
    return int(last_offer != offer)


@dataclass
class _Group:
    consumption: Decimal = Decimal("0.00")
    amount: Decimal = Decimal("0.00")
    light: Decimal = Decimal("0.00")
    days: int = 0


def _num(row, column, zero):
    v = row.get(column)
    return zero if v is None or v.is_null else v.value


def build_feature_vectors(
    tables: EntityTables, spec: MappingSpec, columns: FeatureColumns = FeatureColumns()
) -> tuple[list[FeatureVector], dict[str, EncodingTable], list[tuple[str, str]]]:
    """Returns ``(vectors, encodings, ledger)``; ledger lists ``(key, reason)`` exclusions.

    Null numeric bill fields count as zero in the sums. A missing sex or
    municipality becomes the empty category; an unknown age becomes -1.
    """
    if spec.offer is None:
        raise ValueError("mapping has no offer GAT")
    offer_col, date_col = spec.offer.name, spec.bill_date.name
    ledger: list[tuple[str, str]] = []
    if not tables.bills:
        return [], {c: EncodingTable(c, {}) for c in CATEGORICAL}, ledger
    latest = max(row[date_col].value for row in tables.bills)

    pods = {row["pod_id"].value: row for row in tables.pods}
    users = {row["user_id"].value: row for row in tables.users}
    history: dict[str, list] = defaultdict(list)
    groups: dict[tuple[str, str], _Group] = {}
    for row in tables.bills:
        pod_id = row["pod_id"].value
        offer = None if row[offer_col].is_null else row[offer_col].value
        history[pod_id].append((row[date_col].value, row["bill_id"].value, offer))
        if offer is None:
            ledger.append((row["bill_id"].value, "null offer"))
            continue
        g = groups.setdefault((pod_id, offer), _Group())
        g.consumption += _num(row, columns.total_consumption, Decimal("0.00"))
        g.amount += _num(row, columns.total_amount, Decimal("0.00"))
        g.light += _num(row, columns.total_light_amount, Decimal("0.00"))
        g.days += _num(row, columns.billed_days, 0)
    for pod_id in sorted(history):
        if all(o is None for _, _, o in history[pod_id]):
            ledger.append((pod_id, "POD has no bill with an offer"))

    raw = []
    for (pod_id, offer), g in sorted(groups.items()):
        pod = pods[pod_id]
        user = users.get(pod["user_id"].value) if not pod["user_id"].is_null else None
        sex = MISSING_CATEGORY
        age = MISSING_AGE
        if user is not None:
            if columns.sex in user and not user[columns.sex].is_null:
                sex = str(user[columns.sex].value)
            if not user["year_of_birth"].is_null:
                age = latest.year - user["year_of_birth"].value
        municipality = MISSING_CATEGORY
        if columns.municipality in pod and not pod[columns.municipality].is_null:
            municipality = str(pod[columns.municipality].value)
        churn = label_churn(history[pod_id], offer)
        raw.append((pod_id, offer, sex, age, municipality, g, churn))

    encodings = {}
    codes = {}
    for name, position in (("offer", 1), ("sex", 2), ("municipality", 4)):
        codes[name], encodings[name] = encode_categorical([r[position] for r in raw], name)
    vectors = [
        FeatureVector(
            pod_id=r[0],
            offer=codes["offer"][i],
            sex=codes["sex"][i],
            age=r[3],
            municipality=codes["municipality"][i],
            total_consumption=r[5].consumption,
            total_amount=r[5].amount,
            total_light_amount=r[5].light,
            billed_days=r[5].days,
            churn=r[6],
        )
        for i, r in enumerate(raw)
    ]
    vectors.sort(key=lambda v: (v.pod_id, v.offer))
    return vectors, encodings, ledger


def feature_matrix(vectors: Sequence[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([[float(getattr(v, name)) for name in FEATURE_NAMES] for v in vectors], dtype=np.float64)
    y = np.array([v.churn for v in vectors], dtype=np.int64)
    return X.reshape(len(vectors), len(FEATURE_NAMES)), y


def feature_columns(vectors: Sequence[FeatureVector]) -> dict[str, np.ndarray]:
    X, _ = feature_matrix(vectors)
    return {name: X[:, j] for j, name in enumerate(FEATURE_NAMES)}


# -- files --------------------------------------------------------------------


def _render(v) -> str:
    return f"{v:.2f}" if isinstance(v, Decimal) else str(v)


def write_features(path: str | os.PathLike, vectors: Iterable[FeatureVector]) -> int:
    return write_rows(path, FEATURE_HEADER, ([_render(x) for x in astuple(v)] for v in vectors))


def read_features(path: str | os.PathLike) -> list[FeatureVector]:
    out = []
    for r in read_rows(path, FEATURE_HEADER):
        out.append(
            FeatureVector(
                r[0], int(r[1]), int(r[2]), int(r[3]), int(r[4]),
                Decimal(r[5]), Decimal(r[6]), Decimal(r[7]), int(r[8]), int(r[9]),
            )
        )
    return out


def encodings_to_json(encodings: dict[str, EncodingTable]) -> str:
    return json.dumps({name: table.codes for name, table in sorted(encodings.items())}, indent=2, sort_keys=True) + "\n"


def encodings_from_json(text: str) -> dict[str, EncodingTable]:
    return {name: EncodingTable(name, codes) for name, codes in json.loads(text).items()}
