import json

import pytest

from billprep.extract import (
    Observation,
    extract_bill,
    extract_corpus,
    load_bill,
    read_observations,
    resolve_path,
    write_observations,
)
from billprep.mapping import make_gat, MappingSpec, parse_json_path


def spec_of(*gats):
    return MappingSpec(tuple(gats))


def P(text):
    return parse_json_path(text)


def test_resolve_direct_lookup():
    assert resolve_path({"a": {"b": "x"}}, P("a.b")) == "x"


def test_resolve_wildcard_first_match():
    assert resolve_path({"a": [{"v": 1}, {"v": 2}]}, P("a[*].v")) == "1"


def test_resolve_wildcard_skips_elements_without_value():
    doc = {"a": [{"w": 0}, {"v": {"deep": "no"}}, {"v": "yes"}]}
    assert resolve_path(doc, P("a[*].v")) == "yes"


def test_resolve_missing_key():
    assert resolve_path({"a": {}}, P("a.b")) is None


@pytest.mark.parametrize(
    "doc, path",
    [
        ({"a": "text"}, "a.b"),  # key step on a scalar
        ({"a": [1]}, "a[3]"),  # index out of range
        ({"a": {"0": 1}}, "a[0]"),  # index step on an object
        ({"a": {"b": 1}}, "a"),  # object leaf
        ({"a": [1, 2]}, "a"),  # array leaf
        ({"a": None}, "a"),  # JSON null
        ({"a": 1}, "a[*]"),  # wildcard on a scalar
    ],
)
def test_resolve_absent(doc, path):
    assert resolve_path(doc, P(path)) is None


def test_numbers_keep_source_text():
    doc = load_bill('{"a": 1.50, "b": 1e3, "c": -0, "d": true, "e": false}')
    assert [resolve_path(doc, P(k)) for k in "abcde"] == ["1.50", "1e3", "-0", "true", "false"]


def test_plain_python_numbers_are_stringified():
    assert resolve_path({"a": 21}, P("a")) == "21"


def test_empty_string_counts_as_absent():
    assert resolve_path({"a": "  "}, P("a")) is None


def test_extract_bill_one_observation_per_gat():
    spec = spec_of(
        make_gat("x", "a", "text", "bill"),
        make_gat("y", "b.c", "text", "bill"),
        make_gat("z", "missing", "text", "bill"),
    )
    obs = extract_bill("f.json", {"a": "1", "b": {"c": "2"}}, spec)
    assert obs == [
        Observation("f.json", "x", "1"),
        Observation("f.json", "y", "2"),
        Observation("f.json", "z", None),
    ]


def test_extract_bill_fallback_order():
    spec = spec_of(make_gat("x", "first|second", "text", "bill"))
    assert extract_bill("f", {"second": "2"}, spec)[0].raw_value == "2"
    assert extract_bill("f", {"first": "1", "second": "2"}, spec)[0].raw_value == "1"


def test_extract_empty_document():
    spec = spec_of(make_gat("x", "a", "text", "bill"), make_gat("y", "b[0]", "text", "bill"))
    assert all(o.raw_value is None for o in extract_bill("f", {}, spec))


TWO_GATS = spec_of(make_gat("amount", "total", "text", "bill"), make_gat("date", "when", "text", "bill"))


def _write(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc) if not isinstance(doc, str) else doc, encoding="utf-8")


@pytest.fixture
def small_corpus(tmp_path):
    root = tmp_path / "corpus"
    for month in ("2021-01", "2021-02"):
        for n in (1, 2):
            _write(root / month / f"b{n}.json", {"total": f"{n},00 €", "when": f"{n} January 2021"})
    return root


def test_extract_corpus_counts(small_corpus):
    obs, report = extract_corpus(small_corpus, TWO_GATS)
    assert len(obs) == 8
    assert report.files_seen == 4 and report.files_failed == 0
    assert obs == sorted(obs)
    assert obs[0] == Observation("2021-01/b1.json", "amount", "1,00 €")


def test_extract_corpus_records_malformed(small_corpus):
    _write(small_corpus / "2021-02" / "bad.json", '{"total": ')
    obs, report = extract_corpus(small_corpus, TWO_GATS)
    assert report.files_seen == 5 and report.files_failed == 1
    assert report.files_succeeded == 4
    assert report.failures[0][0] == "2021-02/bad.json"
    assert "JSONDecodeError" in report.failures[0][1]
    assert not any(o.bill_id == "2021-02/bad.json" for o in obs)
    assert len(obs) == report.files_succeeded * 2


def test_extract_empty_corpus(tmp_path):
    obs, report = extract_corpus(tmp_path, TWO_GATS)
    assert obs == [] and report.files_seen == 0


def test_extract_missing_root(tmp_path):
    with pytest.raises(NotADirectoryError):
        extract_corpus(tmp_path / "nope", TWO_GATS)


def test_extension_normalized_and_non_json_ignored(tmp_path):
    _write(tmp_path / "m" / "A.JSON", {"total": "1"})
    _write(tmp_path / "m" / "notes.txt", "hello")
    obs, report = extract_corpus(tmp_path, TWO_GATS)
    assert report.files_seen == 1
    assert {o.bill_id for o in obs} == {"m/A.json"}


def test_null_counts(small_corpus):
    _write(small_corpus / "2021-03" / "b.json", {"total": "5"})
    _, report = extract_corpus(small_corpus, TWO_GATS)
    assert report.null_counts == {"amount": 0, "date": 1}


def test_parallel_matches_serial(small_corpus):
    for i in range(20):
        _write(small_corpus / "2021-03" / f"x{i:02d}.json", {"total": str(i)})
    _write(small_corpus / "2021-03" / "bad.json", "[")
    serial = extract_corpus(small_corpus, TWO_GATS, workers=1)
    parallel = extract_corpus(small_corpus, TWO_GATS, workers=4)
    assert serial[0] == parallel[0]
    assert serial[1].to_dict() == parallel[1].to_dict()


def test_observations_reproducible_from_source(small_corpus):
    obs, _ = extract_corpus(small_corpus, TWO_GATS)
    for o in obs:
        doc = load_bill((small_corpus / o.bill_id).read_text(encoding="utf-8"))
        (path,) = TWO_GATS[o.gat].paths
        assert resolve_path(doc, path) == o.raw_value


def test_observation_csv_round_trip(tmp_path):
    obs = [
        Observation("a/b.json", "g", 'quoted "value", with comma'),
        Observation("a/b.json", "h", None),
        Observation("a/c.json", "g", "line\nbreak"),
    ]
    write_observations(tmp_path / "o.csv", obs)
    assert read_observations(tmp_path / "o.csv") == obs
    assert (tmp_path / "o.csv").read_text(encoding="utf-8").splitlines()[0] == "bill_id,gat,raw_value"
