"""Walk one synthetic bill through extraction and cleaning.

Run: python3 demos/01_clean_and_extract.py
"""
import json
import tempfile
from pathlib import Path

from billprep.clean import clean_date, clean_decimal, clean_observations, hash_value
from billprep.extract import extract_corpus
from billprep.mapping import parse_mapping_file
from billprep.synthgen import SynthConfig, generate_corpus

# display-formatted strings as they appear on Italian bills
print(clean_decimal("1.234,50 €"), clean_decimal("-0,005"))
print(clean_date("15 marzo 2021", "italian"), clean_date("15 March 2021"))
print(hash_value("IT001E00000001", salt="demo")[:16], "...")

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    generate_corpus(SynthConfig(n_users=3, months=4, month_locale="italian", seed=1), root)
    first = sorted((root / "bills").rglob("*.json"))[0]
    print(json.dumps(json.loads(first.read_text(encoding="utf-8")), indent=2, ensure_ascii=False)[:600])

    spec = parse_mapping_file((root / "mapping.csv").read_text(encoding="utf-8"), month_locale="italian")
    observations, report = extract_corpus(root / "bills", spec)
    rows, errors = clean_observations(observations, spec)
    print(f"{report.files_seen} files, {len(observations)} raw values, {len(rows)} cleaned, {len(errors)} rejected")
    for raw, row in list(zip(observations, rows))[:8]:
        print(f"  {raw.gat:<20} {raw.raw_value!r:<28} -> {row.value.render()}")
