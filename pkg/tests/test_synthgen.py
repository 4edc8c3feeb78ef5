import hashlib
import json
from decimal import Decimal

import pytest

from billprep.analytics.features import build_feature_vectors
from billprep.clean import clean_observations
from billprep.extract import extract_corpus
from billprep.fuse import fuse, wide_cell_count
from billprep.mapping import check_spec, parse_mapping_file
from billprep.synthgen import (
    DEFAULT_MAPPING,
    SynthConfig,
    bill_document,
    default_mapping_spec,
    format_amount,
    format_kwh,
    generate_corpus,
    ground_truth,
    simulate,
)


def tree_digest(root):
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def run_library_pipeline(root, locale="english", workers=1):
    spec = parse_mapping_file((root / "mapping.csv").read_text(encoding="utf-8"), month_locale=locale)
    observations, report = extract_corpus(root / "bills", spec, workers=workers)
    cleaned, errors = clean_observations(observations, spec, workers=workers)
    tables, quarantine, wide = fuse(cleaned, spec, workers=workers)
    vectors, encodings, _ = build_feature_vectors(tables, spec)
    return report, errors, tables, quarantine, wide, vectors, encodings


def test_default_mapping_is_valid():
    check_spec(default_mapping_spec())
    check_spec(default_mapping_spec("italian"))
    assert parse_mapping_file(DEFAULT_MAPPING) == default_mapping_spec()


def test_minimal_corpus(tmp_path):
    config = SynthConfig(n_users=1, pods_per_user=(1.0,), months=1, seed=3)
    truth = generate_corpus(config, tmp_path)
    files = list((tmp_path / "bills").rglob("*.json"))
    assert len(files) == 1 and truth.n_bills == 1
    assert (len(truth.tables.bills), len(truth.tables.pods), len(truth.tables.users)) == (1, 1, 1)
    assert len(truth.vectors) == 1 and truth.vectors[0].churn == 0


def test_same_seed_same_tree(tmp_path):
    config = SynthConfig(n_users=30, seed=42, malformed_files=2)
    generate_corpus(config, tmp_path / "a")
    generate_corpus(config, tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    generate_corpus(SynthConfig(n_users=30, seed=43), tmp_path / "c")
    assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "c")


def test_prevalence_concentrates():
    corpus = simulate(SynthConfig(n_users=7_400, months=12, seed=11))
    assert len(corpus.pods) >= 10_000
    truth = ground_truth(corpus)
    prevalence = sum(v.churn for v in truth.vectors) / len(truth.vectors)
    assert abs(prevalence - 0.018) <= 0.004


@pytest.mark.parametrize("locale", ["english", "italian"])
def test_pipeline_reproduces_truth(tmp_path, locale):
    config = SynthConfig(n_users=80, months=12, churn_prevalence=0.1, month_locale=locale, malformed_files=2, seed=5)
    truth = generate_corpus(config, tmp_path)
    report, errors, tables, quarantine, wide, vectors, encodings = run_library_pipeline(tmp_path, locale)
    assert report.files_failed == 2 and errors == [] and quarantine == []
    assert tables == truth.tables
    assert vectors == truth.vectors and encodings == truth.encodings
    assert len(tables.bills) >= len(tables.pods) >= len(tables.users)
    assert tables.cell_count() <= wide_cell_count(wide, default_mapping_spec())


def test_labels_match_vectors():
    truth = ground_truth(simulate(SynthConfig(n_users=200, churn_prevalence=0.2, seed=1)))
    codes = truth.encodings["offer"].codes
    decoded = {(v.pod_id, next(o for o, c in codes.items() if c == v.offer)): v.churn for v in truth.vectors}
    assert decoded == truth.labels


def test_churned_vectors_bill_fewer_days_when_signal_strong():
    truth = ground_truth(simulate(SynthConfig(n_users=3_000, months=12, churn_prevalence=0.1, billed_days_churn_strength=1.0, seed=2)))
    pos = [v.billed_days for v in truth.vectors if v.churn]
    neg = [v.billed_days for v in truth.vectors if not v.churn]
    assert sum(pos) / len(pos) < sum(neg) / len(neg)


def test_documents_use_display_formats():
    corpus = simulate(SynthConfig(n_users=20, template_v2_probability=0.5, seed=4))
    templates = {b.template for b in corpus.bills}
    assert templates == {1, 2}
    text = json.dumps([bill_document(b, "italian") for b in corpus.bills], ensure_ascii=False)
    assert "€" in text and "kWh" in text and "giorni" in text
    assert format_amount(Decimal("1234.5")) == "1.234,50 €"
    assert format_kwh(Decimal("12345")) == "12.345 kWh"


def test_config_validation_and_json():
    config = SynthConfig(n_users=5, seed=9)
    assert SynthConfig.from_json(config.to_json()) == config
    with pytest.raises(ValueError):
        SynthConfig(churn_prevalence=1.5)
    with pytest.raises(ValueError):
        SynthConfig(months=0)
    with pytest.raises(ValueError, match="unknown"):
        SynthConfig.from_dict({"users": 3})
