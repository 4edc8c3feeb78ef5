"""Deterministic synthetic bill corpus with exact ground truth.

The generator simulates users, their PODs and bimonthly bills, writes each bill
as a display-formatted JSON document under ``YYYY-MM/`` folders and computes,
independently of the pipeline, the tables, feature vectors and churn labels the
pipeline is expected to reproduce.

Everything here is synthetic: distributions are simple and documented below,
not fitted to any real tariff data.

* Each POD gets bills every ``cadence_months`` months at a random phase; with
  ``late_start_probability`` it activates later and with
  ``leave_probability`` it stops receiving bills early (left the supplier).
* A POD consumes ``daily_kwh ~ U(3, 15)`` kWh per billed day; the energy cost
  uses the offer's unit price; the total adds per-day fees and 10% tax.
* Exactly ``round(p / (1 - p) * n_pods)`` PODs switch offer once, which makes
  the fraction of positive vectors equal ``p = churn_prevalence``. With
  probability ``billed_days_churn_strength`` the switch happens right after the
  first bill, shortening the billed days of churned vectors.
* User fields drift across bills: sex is blanked with ``missing_sex_probability``
  and age is dropped with ``missing_age_probability``; otherwise age is
  ``bill year - birth year``.
"""

from __future__ import annotations

import calendar
import datetime as dt
import hashlib
import json
import os
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Optional

import numpy as np

from billprep.analytics.features import MISSING_AGE, MISSING_CATEGORY, EncodingTable, FeatureVector
from billprep.clean import CENT, NULL_VALUE, CleanValue, render_date
from billprep.fuse import EntityTables
from billprep.mapping import MappingSpec, MonthLocale, parse_mapping_file

MUNICIPALITIES = (
    "Bologna", "Carpi", "Castelfranco Emilia", "Ferrara", "Formigine", "Imola", "Maranello",
    "Mirandola", "Modena", "Parma", "Piacenza", "Ravenna", "Reggio Emilia", "Rimini",
    "Sassuolo", "Vignola",
)
OFFERS = {
    "Luce Base": Decimal("0.21"),
    "Luce Casa": Decimal("0.19"),
    "Luce Fissa 12": Decimal("0.23"),
    "Luce Flex": Decimal("0.18"),
    "Luce Green": Decimal("0.24"),
    "Luce Night": Decimal("0.17"),
}
DAILY_FEE = Decimal("0.30")
TAX = Decimal("0.10")

DEFAULT_MAPPING = """\
name;paths;output_type;entity;role
bill_date;document.issue_date;date;bill;bill_date
offer;billing.offer.name|billing.offer_name;text;bill;offer
total_amount;billing.totals.amount|billing.summary.total;decimal;bill;attribute
total_light_amount;billing.lines[0].amount|billing.energy[*].amount;decimal;bill;attribute
total_consumption;billing.totals.consumption|billing.summary.kwh;decimal;bill;attribute
billed_days;billing.period.days|billing.summary.days;integer;bill;attribute
pod_id;supply.pod;text;pod;identifier
municipality;supply.address.municipality|supply.municipality;text;pod;attribute
user_id;customer.id;text;user;identifier
sex;customer.personal.sex|customer.sex;text;user;attribute
age;customer.personal.age|customer.age;integer;user;age
"""


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 100
    pods_per_user: tuple[float, ...] = (0.7, 0.2, 0.1)  # P(1 POD), P(2 PODs), ...
    start_year: int = 2021
    start_month: int = 1
    months: int = 6
    cadence_months: int = 2
    churn_prevalence: float = 0.018
    billed_days_churn_strength: float = 0.5
    late_start_probability: float = 0.15
    leave_probability: float = 0.15
    missing_sex_probability: float = 0.2
    missing_age_probability: float = 0.1
    template_v2_probability: float = 0.3
    month_locale: str = "english"
    malformed_files: int = 0
    seed: int = 0

    def __post_init__(self):
        probs = (
            self.churn_prevalence, self.billed_days_churn_strength, self.late_start_probability,
            self.leave_probability, self.missing_sex_probability, self.missing_age_probability,
            self.template_v2_probability,
        )
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.churn_prevalence >= 0.5:
            raise ValueError("churn_prevalence must be below 0.5 (one switch per POD)")
        if self.months < 1 or self.cadence_months < 1 or self.n_users < 1:
            raise ValueError("months, cadence_months and n_users must be >= 1")
        if not self.pods_per_user or any(p < 0 for p in self.pods_per_user) or sum(self.pods_per_user) <= 0:
            raise ValueError("pods_per_user must be non-negative weights with a positive sum")
        if not 1 <= self.start_month <= 12:
            raise ValueError("start_month must be in 1..12")
        MonthLocale(self.month_locale)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        d = dict(d)
        if "pods_per_user" in d:
            d["pods_per_user"] = tuple(d["pods_per_user"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "SynthConfig":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        d = asdict(self)
        d["pods_per_user"] = list(self.pods_per_user)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


@dataclass
class SynthUser:
    user_id: str
    sex: str
    birth_year: int


@dataclass
class SynthPod:
    pod_id: str
    user: SynthUser
    municipality: str
    daily_kwh: float


@dataclass
class SynthBill:
    bill_id: str
    pod: SynthPod
    bill_date: dt.date
    offer: str
    billed_days: int
    consumption: Decimal
    light_amount: Decimal
    total_amount: Decimal
    sex: Optional[str]
    age: Optional[int]
    template: int


@dataclass
class GroundTruth:
    tables: EntityTables
    vectors: list[FeatureVector]
    encodings: dict[str, EncodingTable]
    labels: dict[tuple[str, str], int]
    n_bills: int
    n_malformed: int = 0


@dataclass
class SynthCorpus:
    config: SynthConfig
    users: list[SynthUser]
    pods: list[SynthPod]
    bills: list[SynthBill] = field(default_factory=list)


def default_mapping_spec(month_locale: str = "english") -> MappingSpec:
    return parse_mapping_file(DEFAULT_MAPPING, month_locale)


def _add_months(year: int, month: int, n: int) -> tuple[int, int]:
    m = month - 1 + n
    return year + m // 12, m % 12 + 1


def _period_days(year: int, month: int, span: int) -> int:
    """Days in the ``span`` calendar months ending with (year, month)."""
    total = 0
    for back in range(span):
        y, m = _add_months(year, month, -back)
        total += calendar.monthrange(y, m)[1]
    return total


def _money(x) -> Decimal:
    return Decimal(x).quantize(CENT, rounding=ROUND_HALF_UP)


def simulate(config: SynthConfig) -> SynthCorpus:
    """Draw users, PODs and bills (no files written)."""
    rng = np.random.default_rng(config.seed)
    weights = np.asarray(config.pods_per_user, dtype=float)
    weights = weights / weights.sum()

    users, pods = [], []
    pod_counter = 0
    for u in range(config.n_users):
        user_id = hashlib.sha256(f"synthetic-user-{config.seed}-{u}".encode()).hexdigest()
        user = SynthUser(user_id, "M" if rng.random() < 0.5 else "F", int(rng.integers(1940, 2004)))
        users.append(user)
        for _ in range(int(rng.choice(len(weights), p=weights)) + 1):
            pod_counter += 1
            pods.append(
                SynthPod(
                    f"IT001E{pod_counter:08d}",
                    user,
                    MUNICIPALITIES[int(rng.integers(len(MUNICIPALITIES)))],
                    float(rng.uniform(3.0, 15.0)),
                )
            )

    cadence, span = config.cadence_months, config.months
    schedules = []
    for _ in pods:
        phase = int(rng.integers(0, min(cadence, span)))
        slots = list(range(phase, span, cadence))
        if len(slots) > 1 and rng.random() < config.late_start_probability:
            slots = slots[int(rng.integers(1, len(slots))):]
        if len(slots) > 1 and rng.random() < config.leave_probability:
            slots = slots[: int(rng.integers(1, len(slots)))]
        schedules.append(slots)

    offer_names = sorted(OFFERS)
    eligible = [i for i, s in enumerate(schedules) if len(s) >= 2]
    p = config.churn_prevalence
    n_switch = min(len(eligible), int(round(p / (1 - p) * len(pods))))
    switchers = set(rng.choice(eligible, size=n_switch, replace=False).tolist()) if n_switch else set()

    corpus = SynthCorpus(config, users, pods)
    for i, (pod, slots) in enumerate(zip(pods, schedules)):
        first = offer_names[int(rng.integers(len(offer_names)))]
        offers = [first] * len(slots)
        if i in switchers:
            if rng.random() < config.billed_days_churn_strength:
                k = 1
            else:
                k = int(rng.integers(1, len(slots)))
            others = [o for o in offer_names if o != first]
            second = others[int(rng.integers(len(others)))]
            offers[k:] = [second] * (len(slots) - k)
        for n, (slot, offer) in enumerate(zip(slots, offers), start=1):
            year, month = _add_months(config.start_year, config.start_month, slot)
            bill_date = dt.date(year, month, int(rng.integers(1, 29)))
            days = _period_days(*_add_months(year, month, -1), cadence) - int(rng.integers(0, 5))
            consumption = Decimal(int(pod.daily_kwh * days * rng.uniform(0.8, 1.2))).quantize(CENT)
            light = _money(consumption * OFFERS[offer])
            total = _money((light + DAILY_FEE * days) * (1 + TAX))
            sex = None if rng.random() < config.missing_sex_probability else pod.user.sex
            age = None if rng.random() < config.missing_age_probability else year - pod.user.birth_year
            template = 2 if rng.random() < config.template_v2_probability else 1
            corpus.bills.append(
                SynthBill(
                    f"{year:04d}-{month:02d}/{pod.pod_id}_{n:02d}.json",
                    pod, bill_date, offer, days, consumption, light, total, sex, age, template,
                )
            )
    corpus.bills.sort(key=lambda b: b.bill_id)
    return corpus


# -- rendering ---------------------------------------------------------------------


def format_amount(value: Decimal, unit: str = "€") -> str:
    """``Decimal("1000")`` -> ``"1.000,00 €"``."""
    text = f"{value:,.2f}".replace(",", "_").replace(".", ",").replace("_", ".")
    return f"{text} {unit}"


def format_kwh(value: Decimal) -> str:
    text = f"{int(value):,}".replace(",", ".")
    return f"{text} kWh"


def bill_document(bill: SynthBill, locale: str) -> dict:
    days_unit = "giorni" if MonthLocale(locale) is MonthLocale.ITALIAN else "days"
    issue = render_date(bill.bill_date, locale)
    doc_number = bill.bill_id.rsplit("/", 1)[-1].removesuffix(".json")
    if bill.template == 1:
        personal = {}
        if bill.sex is not None:
            personal["sex"] = bill.sex
        if bill.age is not None:
            personal["age"] = str(bill.age)
        return {
            "document": {"number": doc_number, "issue_date": issue, "template": "v1"},
            "customer": {"id": bill.pod.user.user_id, "personal": personal},
            "supply": {
                "pod": bill.pod.pod_id,
                "address": {"municipality": bill.pod.municipality, "country": "IT"},
            },
            "billing": {
                "offer": {"name": bill.offer},
                "period": {"days": f"{bill.billed_days} {days_unit}"},
                "totals": {
                    "amount": format_amount(bill.total_amount),
                    "consumption": format_kwh(bill.consumption),
                },
                "lines": [
                    {"code": "ENERGY", "amount": format_amount(bill.light_amount)},
                    {"code": "FEES", "amount": format_amount(bill.total_amount - bill.light_amount)},
                ],
            },
        }
    customer = {"id": bill.pod.user.user_id}
    if bill.sex is not None:
        customer["sex"] = bill.sex
    # template v2 stores age as a JSON number and a sex placeholder
    customer["age"] = bill.age
    return {
        "document": {"number": doc_number, "issue_date": issue, "template": "v2"},
        "customer": customer,
        "supply": {"pod": bill.pod.pod_id, "municipality": bill.pod.municipality},
        "billing": {
            "offer_name": bill.offer,
            "summary": {
                "total": format_amount(bill.total_amount),
                "kwh": format_kwh(bill.consumption),
                "days": f"{bill.billed_days} {days_unit}",
            },
            "energy": [
                {"note": "energia"},
                {"amount": format_amount(bill.light_amount)},
            ],
        },
    }


# -- ground truth ------------------------------------------------------------------


def ground_truth(corpus: SynthCorpus) -> GroundTruth:
    """Tables, vectors and labels computed straight from the simulation state."""
    text, integer = "text", "integer"
    bills = corpus.bills
    by_pod: dict[str, list[SynthBill]] = defaultdict(list)
    for b in bills:
        by_pod[b.pod.pod_id].append(b)
    by_user: dict[str, list[SynthBill]] = defaultdict(list)
    for b in bills:
        by_user[b.pod.user.user_id].append(b)

    def dec(x):
        return CleanValue("decimal", x)

    bill_rows = [
        {
            "bill_id": CleanValue(text, b.bill_id),
            "pod_id": CleanValue(text, b.pod.pod_id),
            "bill_date": CleanValue("date", b.bill_date),
            "offer": CleanValue(text, b.offer),
            "total_amount": dec(b.total_amount),
            "total_light_amount": dec(b.light_amount),
            "total_consumption": dec(b.consumption),
            "billed_days": CleanValue(integer, b.billed_days),
        }
        for b in bills
    ]
    pod_rows = []
    for pod in sorted((p for p in corpus.pods if p.pod_id in by_pod), key=lambda p: p.pod_id):
        pod_rows.append(
            {
                "pod_id": CleanValue(text, pod.pod_id),
                "user_id": CleanValue(text, pod.user.user_id),
                "municipality": CleanValue(text, pod.municipality),
            }
        )
    user_rows = []
    user_sex, user_yob = {}, {}
    for user in sorted((u for u in corpus.users if u.user_id in by_user), key=lambda u: u.user_id):
        ub = by_user[user.user_id]
        has_age = any(b.age is not None for b in ub)
        has_sex = any(b.sex is not None for b in ub)
        user_yob[user.user_id] = user.birth_year if has_age else None
        user_sex[user.user_id] = user.sex if has_sex else None
        user_rows.append(
            {
                "user_id": CleanValue(text, user.user_id),
                "year_of_birth": CleanValue(integer, user.birth_year) if has_age else NULL_VALUE,
                "sex": CleanValue(text, user.sex) if has_sex else NULL_VALUE,
            }
        )
    tables = EntityTables(
        bill_columns=["bill_id", "pod_id", "bill_date", "offer", "total_amount",
                      "total_light_amount", "total_consumption", "billed_days"],
        pod_columns=["pod_id", "user_id", "municipality"],
        user_columns=["user_id", "year_of_birth", "sex"],
        bills=bill_rows,
        pods=pod_rows,
        users=user_rows,
    )

    latest_year = max(b.bill_date for b in bills).year if bills else 0
    labels: dict[tuple[str, str], int] = {}
    raw = []
    for pod_id in sorted(by_pod):
        pb = by_pod[pod_id]
        last_offer = max(pb, key=lambda b: (b.bill_date, b.bill_id)).offer
        pod = pb[0].pod
        sums: dict[str, list] = {}
        for b in pb:
            s = sums.setdefault(b.offer, [Decimal("0.00"), Decimal("0.00"), Decimal("0.00"), 0])
            s[0] += b.consumption
            s[1] += b.total_amount
            s[2] += b.light_amount
            s[3] += b.billed_days
        uid = pod.user.user_id
        yob = user_yob[uid]
        for offer, s in sums.items():
            churn = int(offer != last_offer)
            labels[(pod_id, offer)] = churn
            raw.append(
                (
                    pod_id, offer, user_sex[uid] or MISSING_CATEGORY,
                    latest_year - yob if yob is not None else MISSING_AGE,
                    pod.municipality, s, churn,
                )
            )
    enc = {
        name: EncodingTable(name, {c: i for i, c in enumerate(sorted({r[pos] for r in raw}))})
        for name, pos in (("offer", 1), ("sex", 2), ("municipality", 4))
    }
    vectors = sorted(
        (
            FeatureVector(
                pod_id=r[0],
                offer=enc["offer"].codes[r[1]],
                sex=enc["sex"].codes[r[2]],
                age=r[3],
                municipality=enc["municipality"].codes[r[4]],
                total_consumption=r[5][0],
                total_amount=r[5][1],
                total_light_amount=r[5][2],
                billed_days=r[5][3],
                churn=r[6],
            )
            for r in raw
        ),
        key=lambda v: (v.pod_id, v.offer),
    )
    return GroundTruth(tables, vectors, enc, labels, len(bills))


def generate_corpus(config: SynthConfig, out: str | os.PathLike, write_truth: bool = True) -> GroundTruth:
    """Write the JSON corpus under ``out`` (and ``out/truth/``); return the ground truth.

    Bills go to ``out/bills/YYYY-MM/``; ``synth.json`` and the mapping file are
    written next to them.
    """
    from billprep.analytics.features import encodings_to_json, write_features
    from billprep.fuse import write_tables

    out = Path(out)
    corpus = simulate(config)
    bills_dir = out / "bills"
    bills_dir.mkdir(parents=True, exist_ok=True)
    for bill in corpus.bills:
        path = bills_dir / bill.bill_id
        path.parent.mkdir(parents=True, exist_ok=True)
        text = json.dumps(bill_document(bill, config.month_locale), indent=1, ensure_ascii=False)
        path.write_text(text + "\n", encoding="utf-8")
    rng = np.random.default_rng([config.seed, 1])
    for i in range(config.malformed_files):
        month = bills_dir / (corpus.bills[0].bill_id.split("/")[0] if corpus.bills else "")
        month.mkdir(parents=True, exist_ok=True)
        (month / f"broken_{i:03d}.json").write_text('{"document": {"issue_date": ' + str(int(rng.integers(1e6))), encoding="utf-8")
    (out / "synth.json").write_text(config.to_json(), encoding="utf-8")
    (out / "mapping.csv").write_text(DEFAULT_MAPPING, encoding="utf-8")

    truth = ground_truth(corpus)
    truth.n_malformed = config.malformed_files
    if write_truth:
        truth_dir = out / "truth"
        write_tables(truth_dir, truth.tables)
        write_features(truth_dir / "features.csv", truth.vectors)
        (truth_dir / "encodings.json").write_text(encodings_to_json(truth.encodings), encoding="utf-8")
    return truth
