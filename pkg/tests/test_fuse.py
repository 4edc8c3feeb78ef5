import datetime as dt
import random
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from billprep.clean import NULL_VALUE, CleanedRow, CleaningError, CleanValue
from billprep.fuse import (
    FusionGroup,
    IntegrityError,
    Member,
    _resolve_all,
    _winning_members,
    check_integrity,
    fuse,
    pivot,
    read_tables,
    resolve_most_recent_non_null,
    split_entities,
    sql_dump,
    wide_cell_count,
    write_tables,
    year_of_birth,
)
from billprep.mapping import MappingSpec, check_spec, make_gat

SPEC = MappingSpec(
    (
        make_gat("bill_date", "d", "date", "bill", "bill_date"),
        make_gat("amount", "a", "decimal", "bill"),
        make_gat("pod_id", "p", "text", "pod", "identifier"),
        make_gat("municipality", "m", "text", "pod"),
        make_gat("user_id", "u", "text", "user", "identifier"),
        make_gat("sex", "s", "text", "user"),
        make_gat("age", "g", "integer", "user", "age"),
    )
)
check_spec(SPEC)


def text(v):
    return NULL_VALUE if v is None else CleanValue("text", v)


def integer(v):
    return NULL_VALUE if v is None else CleanValue("integer", v)


def bill(bill_id, date, pod="P1", user="U1", sex="M", age=30, amount="10.00", municipality="Roma"):
    values = {
        "bill_date": CleanValue("date", date) if date else NULL_VALUE,
        "amount": CleanValue("decimal", Decimal(amount)),
        "pod_id": text(pod),
        "municipality": text(municipality),
        "user_id": text(user),
        "sex": text(sex),
        "age": integer(age),
    }
    return [CleanedRow(bill_id, k, v) for k, v in values.items()]


def rows_of(*bills):
    return [r for b in bills for r in b]


def mixed_provenance_rows():
    # the sex is missing in the later bill and the age changes between bills
    return rows_of(
        bill("b1", dt.date(2021, 1, 15), sex="M", age=20),
        bill("b2", dt.date(2021, 3, 20), sex=None, age=21),
    )


def test_year_of_birth_examples():
    assert year_of_birth(21, dt.date(2021, 3, 20)) == 2000
    assert year_of_birth(0, dt.date(2021, 1, 1)) == 2021
    assert year_of_birth(45, dt.date(1999, 12, 31)) == 1954
    for bad in (-1, 131):
        with pytest.raises(CleaningError):
            year_of_birth(bad, dt.date(2021, 1, 1))


def test_resolution_example():
    group = FusionGroup(
        "U1",
        [
            Member(dt.date(2021, 1, 15), "b1", {"sex": text("M"), "age": integer(20)}),
            Member(dt.date(2021, 3, 20), "b2", {"sex": NULL_VALUE, "age": integer(21)}),
        ],
    )
    assert resolve_most_recent_non_null(group) == {"sex": text("M"), "age": integer(21)}


def test_user_fused_from_two_partial_bills():
    tables, quarantine, _ = fuse(mixed_provenance_rows(), SPEC)
    (user,) = tables.users
    assert user["year_of_birth"] == integer(2000) and user["sex"] == text("M")
    assert quarantine == []
    wide, _ = pivot(mixed_provenance_rows(), SPEC)
    _, _, users, _ = split_entities(wide, SPEC)
    per_bill = [
        (year_of_birth(m.values["age"].value, m.bill_date), m.values["sex"].value) for m in users["U1"].members
    ]
    assert per_bill == [(2001, "M"), (2000, None)]
    assert (2000, "M") not in per_bill


def test_partial_bills_split_into_two_differing_members():
    wide, _ = pivot(mixed_provenance_rows(), SPEC)
    _, pods, users, _ = split_entities(wide, SPEC)
    (group,) = users.values()
    assert len(group.members) == 2
    assert group.members[0].values != group.members[1].values
    assert len(pods["P1"].members) == 2


def test_single_member_identity():
    values = {"a": text("x"), "b": NULL_VALUE}
    assert resolve_most_recent_non_null(FusionGroup("k", [Member(dt.date(2020, 1, 1), "b", values)])) == values


def test_empty_group_rejected():
    with pytest.raises(ValueError):
        resolve_most_recent_non_null(FusionGroup("k", []))


def test_same_date_tie_goes_to_greatest_bill_id():
    d = dt.date(2021, 5, 1)
    group = FusionGroup("k", [Member(d, "b9", {"a": text("nine")}), Member(d, "b10", {"a": text("ten")})])
    assert resolve_most_recent_non_null(group)["a"] == text("nine")


def test_pivot_regroups():
    rows = [CleanedRow(b, g, text(f"{b}{g}")) for b in ("x", "y") for g in ("bill_date", "pod_id", "amount")]
    rows = [
        CleanedRow(r.bill_id, r.gat, CleanValue("date", dt.date(2021, 1, 1)) if r.gat == "bill_date" else r.value)
        for r in rows
    ]
    spec = MappingSpec(tuple(SPEC[n] for n in ("bill_date", "pod_id", "amount")))
    wide, quarantine = pivot(rows, spec)
    assert [w.bill_id for w in wide] == ["x", "y"]
    assert all(len(w.values) == 3 for w in wide) and quarantine == []


def test_pivot_empty():
    assert pivot([], SPEC) == ([], [])


def test_pivot_quarantines_null_date_and_pod():
    rows = rows_of(bill("a", None), bill("b", dt.date(2021, 1, 1), pod=None), bill("c", dt.date(2021, 1, 1)))
    wide, quarantine = pivot(rows, SPEC)
    assert [w.bill_id for w in wide] == ["c"]
    assert [(q.kind, q.key) for q in quarantine] == [("bill", "a"), ("bill", "b")]
    assert "date" in quarantine[0].reason and "POD" in quarantine[1].reason


def test_pivot_duplicate_is_fatal():
    rows = bill("a", dt.date(2021, 1, 1))
    with pytest.raises(IntegrityError):
        pivot(rows + rows[:1], SPEC)


def test_one_user_two_pods_three_bills_each():
    rows = []
    for pod in ("P1", "P2"):
        for m in (1, 3, 5):
            rows += bill(f"{pod}-{m}", dt.date(2021, m, 1), pod=pod)
    wide, _ = pivot(rows, SPEC)
    bills, pods, users, _ = split_entities(wide, SPEC)
    assert len(bills) == 6
    assert sorted(len(g.members) for g in pods.values()) == [3, 3]
    assert [len(g.members) for g in users.values()] == [6]


def test_singleton_bill():
    tables, quarantine, wide = fuse(bill("only", dt.date(2021, 2, 2)), SPEC)
    assert (len(tables.bills), len(tables.pods), len(tables.users)) == (1, 1, 1)
    assert tables.users[0]["year_of_birth"] == integer(1991)
    assert tables.pods[0]["municipality"] == text("Roma")


def test_column_layout():
    tables, _, _ = fuse(mixed_provenance_rows(), SPEC)
    assert tables.bill_columns == ["bill_id", "pod_id", "bill_date", "amount"]
    assert tables.pod_columns == ["pod_id", "user_id", "municipality"]
    assert tables.user_columns == ["user_id", "year_of_birth", "sex"]
    assert "age" not in tables.user_columns


def test_null_user_id_is_quarantined_but_pod_kept():
    rows = rows_of(bill("a", dt.date(2021, 1, 1), pod="P9", user=None))
    tables, quarantine, _ = fuse(rows, SPEC)
    assert [p["pod_id"].value for p in tables.pods] == ["P9"]
    assert tables.pods[0]["user_id"].is_null
    assert tables.users == []
    assert {q.kind for q in quarantine} == {"user", "pod"}


def test_pod_user_recovered_from_other_bill():
    rows = rows_of(bill("a", dt.date(2021, 1, 1), user="U1"), bill("b", dt.date(2021, 3, 1), user=None))
    tables, quarantine, _ = fuse(rows, SPEC)
    assert tables.pods[0]["user_id"] == text("U1")
    assert [q.kind for q in quarantine] == ["user"]


def test_out_of_range_age_quarantined():
    tables, quarantine, _ = fuse(bill("a", dt.date(2021, 1, 1), age=200), SPEC)
    assert tables.users[0]["year_of_birth"].is_null
    assert [(q.kind, q.key) for q in quarantine] == [("age", "a")]


def test_age_conversion_invariant_to_which_bill_carries_it():
    # true birth year 1990, birthday on 1 January: every bill reports the matching age
    dates = [dt.date(2019, 5, 1), dt.date(2020, 7, 1), dt.date(2021, 9, 1)]
    for carrier in range(3):
        rows = rows_of(*[
            bill(f"b{i}", d, age=(d.year - 1990) if i == carrier else None) for i, d in enumerate(dates)
        ])
        tables, _, _ = fuse(rows, SPEC)
        assert tables.users[0]["year_of_birth"] == integer(1990)


def test_no_conflict_tables_project_wide_records():
    rows = rows_of(
        bill("a", dt.date(2021, 1, 1), pod="P1", user="U1", sex="F", age=40, municipality="Roma"),
        bill("b", dt.date(2021, 1, 1), pod="P2", user="U2", sex="M", age=50, municipality="Bari"),
    )
    tables, _, wide = fuse(rows, SPEC)
    for rec, pod, user in zip(wide, tables.pods, tables.users):
        assert pod["pod_id"] == rec.values["pod_id"] and pod["municipality"] == rec.values["municipality"]
        assert user["user_id"] == rec.values["user_id"] and user["sex"] == rec.values["sex"]
        assert user["year_of_birth"].value == 2021 - rec.values["age"].value


def test_integrity_check_detects_dangling_keys():
    tables, _, _ = fuse(mixed_provenance_rows(), SPEC)
    tables.bills[0]["pod_id"] = text("ghost")
    with pytest.raises(IntegrityError, match="unknown POD"):
        check_integrity(tables)
    tables, _, _ = fuse(mixed_provenance_rows(), SPEC)
    tables.pods[0]["user_id"] = text("ghost")
    with pytest.raises(IntegrityError, match="unknown user"):
        check_integrity(tables)
    tables, _, _ = fuse(mixed_provenance_rows(), SPEC)
    tables.users.append(dict(tables.users[0]))
    with pytest.raises(IntegrityError, match="duplicate"):
        check_integrity(tables)


def _corpus_rows(rnd, n_users=6):
    rows = []
    for u in range(n_users):
        for p in range(rnd.randint(1, 3)):
            for m in range(rnd.randint(1, 4)):
                rows += bill(
                    f"U{u}P{p}-{m}",
                    dt.date(2021, 2 * m + 1, rnd.randint(1, 28)),
                    pod=f"U{u}P{p}",
                    user=f"U{u}",
                    sex=rnd.choice(["M", "F", None]),
                    age=rnd.choice([None, 30, 31]),
                    municipality=rnd.choice(["Roma", "Bari", None]),
                )
    return rows


def test_shape_and_cell_counts():
    rows = _corpus_rows(random.Random(3))
    tables, _, wide = fuse(rows, SPEC)
    assert len(tables.bills) >= len(tables.pods) >= len(tables.users)
    assert tables.cell_count() <= wide_cell_count(wide, SPEC)


def test_cell_bound_needs_repeated_bills():
    # one bill per POD: the split repeats keys and costs more cells than the wide table
    rows = rows_of(*[bill(f"b{i}", dt.date(2021, 1, 1), pod=f"P{i}", user=f"U{i}") for i in range(5)])
    tables, _, wide = fuse(rows, SPEC)
    assert tables.cell_count() == 5 * 4 + 5 * 3 + 5 * 3
    assert wide_cell_count(wide, SPEC) == 5 * 8
    assert tables.cell_count() > wide_cell_count(wide, SPEC)


def test_parallel_fusion_matches_serial():
    rows = _corpus_rows(random.Random(5), n_users=30)
    assert fuse(rows, SPEC, workers=3) == fuse(rows, SPEC, workers=1)


def test_table_csv_round_trip(tmp_path):
    tables, _, _ = fuse(_corpus_rows(random.Random(7)), SPEC)
    write_tables(tmp_path, tables)
    assert read_tables(tmp_path, SPEC) == tables
    header = (tmp_path / "users.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "user_id,year_of_birth,sex"


def test_sql_dump_schema_and_rows():
    tables, _, _ = fuse(mixed_provenance_rows(), SPEC)
    sql = sql_dump(tables, SPEC)
    assert "CREATE TABLE users (" in sql and "PRIMARY KEY (user_id)" in sql
    assert "FOREIGN KEY (pod_id) REFERENCES pods (pod_id)" in sql
    assert "FOREIGN KEY (user_id) REFERENCES users (user_id)" in sql
    assert sql.count("INSERT INTO bills") == 2
    assert "INSERT INTO users (user_id, year_of_birth, sex) VALUES ('U1', 2000, 'M');" in sql
    assert sql.index("CREATE TABLE users") < sql.index("CREATE TABLE pods") < sql.index("CREATE TABLE bills")


# -- properties against a brute-force oracle -------------------------------------

ATTRS = ["a0", "a1", "a2", "a3", "a4", "a5"]


@st.composite
def groups(draw):
    n_attrs = draw(st.integers(1, 6))
    attrs = ATTRS[:n_attrs]
    n = draw(st.integers(1, 10))
    ids = draw(st.lists(st.integers(0, 50), min_size=n, max_size=n, unique=True))
    members = []
    for i in ids:
        date = dt.date(2021, 1, 1) + dt.timedelta(days=draw(st.integers(0, 5)))
        values = {a: draw(st.one_of(st.none(), st.sampled_from("xyz"))) for a in attrs}
        members.append(Member(date, f"b{i:02d}", {a: text(v) for a, v in values.items()}))
    return FusionGroup("k", members)


def brute_force(group):
    out = {}
    for attr in group.members[0].values:
        best = None
        for m in group.members:
            v = m.values[attr]
            if v.is_null:
                continue
            if best is None or (m.bill_date, m.bill_id) > (best.bill_date, best.bill_id):
                best = m
        out[attr] = NULL_VALUE if best is None else best.values[attr]
    return out


@settings(max_examples=300)
@given(groups())
def test_matches_brute_force(group):
    assert resolve_most_recent_non_null(group) == brute_force(group)


@settings(max_examples=300)
@given(groups(), st.randoms(use_true_random=False))
def test_permutation_invariant_and_idempotent(group, rnd):
    fused = resolve_most_recent_non_null(group)
    shuffled = list(group.members)
    rnd.shuffle(shuffled)
    assert resolve_most_recent_non_null(FusionGroup("k", shuffled)) == fused
    again = FusionGroup("k", [Member(dt.date(2000, 1, 1), "z", fused)])
    assert resolve_most_recent_non_null(again) == fused


@settings(max_examples=300)
@given(groups())
def test_worker_summary_picks_same_values(group):
    # the parallel path only ships (date, id, null flags) and gets member indices back
    summary = [(m.bill_date, m.bill_id, tuple((a, v.is_null) for a, v in m.values.items())) for m in group.members]
    (won,) = _winning_members([summary])
    assert {a: group.members[i].values[a] for a, i in won.items()} == brute_force(group)


@settings(max_examples=5, deadline=None)
@given(st.lists(groups(), min_size=2, max_size=40))
def test_pooled_resolution_matches_serial(gs):
    assert _resolve_all(gs, workers=2) == _resolve_all(gs, workers=1)
