"""Type-directed cleaning of raw display strings.

Bills are formatted for people: amounts look like ``1.000,00 €`` and dates like
``10 January 2021``. The functions here turn those strings into typed values
(fixed-point decimals, integers, calendar dates, text, salted digests).
"""

from __future__ import annotations

import datetime as dt
import hashlib
import os
import re
import unicodedata
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, localcontext
from typing import Any, Iterable, Optional, Union

from billprep._csv import read_rows, write_rows
from billprep.extract import Observation
from billprep.mapping import GatDefinition, MappingSpec, MonthLocale, OutputType

CLEANED_HEADER = ("bill_id", "gat", "type", "value")
ERROR_HEADER = ("bill_id", "gat", "raw_value", "reason")

NULL = "null"
CENT = Decimal("0.01")

MONTHS = {
    MonthLocale.ENGLISH: (
        "January", "February", "March", "April", "May", "June",
        "July", "August", "September", "October", "November", "December",
    ),
    MonthLocale.ITALIAN: (
        "gennaio", "febbraio", "marzo", "aprile", "maggio", "giugno",
        "luglio", "agosto", "settembre", "ottobre", "novembre", "dicembre",
    ),
}
_MONTH_LOOKUP = {
    locale: {name.lower(): i for i, name in enumerate(names, start=1)} for locale, names in MONTHS.items()
}

_GROUPED = re.compile(r"[0-9]{1,3}(?:\.[0-9]{3})+")
_PLAIN = re.compile(r"[0-9]+")


class CleaningError(ValueError):
    """A raw string that cannot be turned into the requested type."""


@dataclass(frozen=True)
class CleanValue:
    tag: str
    value: Any = None

    @property
    def is_null(self) -> bool:
        return self.tag == NULL

    def render(self) -> str:
        return render_value(self)


NULL_VALUE = CleanValue(NULL)


@dataclass(frozen=True)
class CleanError:
    bill_id: str
    gat: str
    raw_value: Optional[str]
    reason: str


@dataclass(frozen=True, order=True)
class CleanedRow:
    bill_id: str
    gat: str
    value: CleanValue


def _strip_unit(text: str) -> str:
    """Drop one trailing unit token (a letter run or a currency-symbol run)."""
    text = text.strip()
    if not text:
        return text
    last = text[-1]
    if last.isalpha():
        test = str.isalpha
    elif unicodedata.category(last) == "Sc":
        test = lambda c: unicodedata.category(c) == "Sc"  # noqa: E731
    else:
        return text
    end = len(text)
    while end > 0 and test(text[end - 1]):
        end -= 1
    return text[:end].rstrip()


def _split_sign(text: str) -> tuple[int, str]:
    if text[:1] in ("+", "-"):
        return (-1 if text[0] == "-" else 1), text[1:]
    return 1, text


def _whole_part(digits: str) -> Optional[str]:
    if _PLAIN.fullmatch(digits):
        return digits
    if _GROUPED.fullmatch(digits):
        return digits.replace(".", "")
    return None


def to_cents(text: str) -> Decimal:
    """Half-up rounding of a plain decimal string to cents, at any magnitude."""
    with localcontext() as ctx:
        # quantize would overflow the default 28-digit precision on long amounts
        ctx.prec = max(ctx.prec, len(text) + 3)
        return Decimal(text).quantize(CENT, rounding=ROUND_HALF_UP)


def clean_decimal(raw: str) -> Decimal:
    """``"1.000,00 €"`` -> ``Decimal("1000.00")``; half-up rounding to cents."""
    body = _strip_unit(raw)
    sign, body = _split_sign(body)
    if body.count(",") > 1:
        raise CleaningError(f"unparseable decimal {raw!r}: more than one comma")
    if "," in body:
        whole, frac = body.split(",")
        whole = _whole_part(whole)
        if whole is None or not _PLAIN.fullmatch(frac):
            raise CleaningError(f"unparseable decimal {raw!r}")
    else:
        whole = _whole_part(body)
        frac = ""
        if whole is None and body.count(".") == 1:
            # canonical point-decimal form such as "1000.00"
            whole, frac = body.split(".")
            if not (_PLAIN.fullmatch(whole) and _PLAIN.fullmatch(frac)):
                whole = None
        if whole is None:
            raise CleaningError(f"unparseable decimal {raw!r}")
    value = to_cents(f"{whole}.{frac or '0'}")
    return -value if sign < 0 else value


def clean_integer(raw: str) -> int:
    """Whole numbers with optional sign, unit and ``.`` thousands separators."""
    body = _strip_unit(raw)
    sign, body = _split_sign(body)
    if "," in body:
        raise CleaningError(f"integer {raw!r} has a fractional part")
    whole = _whole_part(body)
    if whole is None:
        raise CleaningError(f"unparseable integer {raw!r}")
    try:
        return sign * int(whole)
    except ValueError as exc:  # e.g. the int-from-str digit limit
        raise CleaningError(f"unparseable integer {raw!r}: {exc}") from None


def clean_date(raw: str, month_locale: MonthLocale | str = MonthLocale.ENGLISH) -> dt.date:
    """Parse ``"<day> <month name> <year>"`` with locale month names."""
    parts = raw.split()
    if len(parts) != 3:
        raise CleaningError(f"date {raw!r} is not '<day> <month> <year>'")
    day, month, year = parts
    if not (day.isdigit() and day.isascii() and year.isdigit() and year.isascii()):
        raise CleaningError(f"date {raw!r} has a non-numeric day or year")
    month_no = _MONTH_LOOKUP[MonthLocale(month_locale)].get(month.lower())
    if month_no is None:
        raise CleaningError(f"unknown month name {month!r} for locale {MonthLocale(month_locale).value}")
    try:
        return dt.date(int(year), month_no, int(day))
    except ValueError as exc:
        raise CleaningError(f"invalid date {raw!r}: {exc}") from None


def render_date(value: dt.date, month_locale: MonthLocale | str = MonthLocale.ENGLISH) -> str:
    """Display form that :func:`clean_date` reads back."""
    return f"{value.day} {MONTHS[MonthLocale(month_locale)][value.month - 1]} {value.year}"


def hash_value(raw: str, salt: str) -> str:
    return hashlib.sha256((salt + raw).encode("utf-8")).hexdigest()


def clean_observation(
    obs: Observation,
    gat: GatDefinition,
    salt: str = "",
    month_locale: MonthLocale | str = MonthLocale.ENGLISH,
) -> Union[CleanValue, CleanError]:
    raw = obs.raw_value
    if raw is None:
        return NULL_VALUE
    kind = gat.output_type
    try:
        if kind is OutputType.DECIMAL:
            return CleanValue(kind.value, clean_decimal(raw))
        if kind is OutputType.INTEGER:
            return CleanValue(kind.value, clean_integer(raw))
        if kind is OutputType.DATE:
            return CleanValue(kind.value, clean_date(raw, month_locale))
        text = raw.strip()
        if not text:
            return NULL_VALUE
        if kind is OutputType.HASHED_TEXT:
            return CleanValue(kind.value, hash_value(text, salt))
        return CleanValue(kind.value, text)
    except CleaningError as exc:
        return CleanError(obs.bill_id, obs.gat, raw, str(exc))


def _clean_pairs(pairs: list[tuple[str, Optional[str]]], spec: MappingSpec, salt: str):
    out = []
    for gat, raw in pairs:
        result = clean_observation(Observation("", gat, raw), spec[gat], salt, spec.month_locale)
        if isinstance(result, CleanError):
            out.append((False, result.reason))
        else:
            out.append((True, (result.tag, result.value)))
    return out


def clean_observations(
    observations: list[Observation], spec: MappingSpec, salt: str = "", workers: int = 1
) -> tuple[list[CleanedRow], list[CleanError]]:
    """Clean a whole extraction; failing values go to the error ledger, not the output.

    Cleaning depends only on ``(gat, raw_value)``, so each distinct pair is cleaned
    once (fanned out over ``workers`` processes) and the result shared.
    """
    unknown = {o.gat for o in observations} - set(spec.names)
    if unknown:
        raise KeyError(f"observations reference GATs missing from the mapping: {sorted(unknown)}")
    pairs = sorted({(o.gat, o.raw_value) for o in observations}, key=lambda p: (p[0], p[1] is not None, p[1] or ""))
    if workers > 1 and len(pairs) > 1:
        size = max(1, -(-len(pairs) // workers))
        chunks = [pairs[i : i + size] for i in range(0, len(pairs), size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [r for part in pool.map(_clean_pairs, chunks, [spec] * len(chunks), [salt] * len(chunks)) for r in part]
    else:
        results = _clean_pairs(pairs, spec, salt)
    cleaned = {pair: (CleanValue(*value) if ok else value) for pair, (ok, value) in zip(pairs, results)}

    rows, errors = [], []
    for o in observations:
        result = cleaned[(o.gat, o.raw_value)]
        if isinstance(result, CleanValue):
            rows.append(CleanedRow(o.bill_id, o.gat, result))
        else:
            errors.append(CleanError(o.bill_id, o.gat, o.raw_value, result))
    rows.sort(key=lambda r: (r.bill_id, r.gat))
    errors.sort(key=lambda e: (e.bill_id, e.gat))
    return rows, errors


# -- canonical rendering -----------------------------------------------------


def render_value(value: CleanValue) -> str:
    if value.tag == NULL:
        return ""
    if value.tag == OutputType.DECIMAL.value:
        return f"{value.value:.2f}"
    if value.tag == OutputType.DATE.value:
        return value.value.isoformat()
    return str(value.value)


def parse_rendered(tag: str, text: str) -> CleanValue:
    """Inverse of :func:`render_value`."""
    if tag == NULL:
        return NULL_VALUE
    if tag == OutputType.DECIMAL.value:
        return CleanValue(tag, to_cents(text))
    if tag == OutputType.INTEGER.value:
        return CleanValue(tag, int(text))
    if tag == OutputType.DATE.value:
        return CleanValue(tag, dt.date.fromisoformat(text))
    if tag in (OutputType.TEXT.value, OutputType.HASHED_TEXT.value):
        return CleanValue(tag, text)
    raise ValueError(f"unknown value type {tag!r}")


def write_cleaned(path: str | os.PathLike, rows: Iterable[CleanedRow]) -> int:
    return write_rows(path, CLEANED_HEADER, ((r.bill_id, r.gat, r.value.tag, render_value(r.value)) for r in rows))


def read_cleaned(path: str | os.PathLike) -> list[CleanedRow]:
    return [CleanedRow(b, g, parse_rendered(t, v)) for b, g, t, v in read_rows(path, CLEANED_HEADER)]


def write_errors(path: str | os.PathLike, errors: Iterable[CleanError]) -> int:
    return write_rows(path, ERROR_HEADER, ((e.bill_id, e.gat, e.raw_value, e.reason) for e in errors))
