"""Declarative attribute mapping: which Global Attributes (GATs) to pull out of a
bill, where they live in the JSON document, how to type them and which entity
they belong to.

The mapping file is plain `;`-separated text::

    name;paths;output_type;entity;role
    # comment lines are ignored
    bill_date;document.issue_date;date;bill;bill_date
    sex;customer.personal.sex|customer.sex;text;user;attribute

Several paths in one cell (separated by ``|``) are ordered fallbacks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Union

HEADER = "name;paths;output_type;entity;role"


class MappingError(ValueError):
    """Base class for mapping problems."""


class PathSyntaxError(MappingError):
    pass


class MappingParseError(MappingError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MappingValidationError(MappingError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class OutputType(str, Enum):
    DECIMAL = "decimal"
    INTEGER = "integer"
    DATE = "date"
    TEXT = "text"
    HASHED_TEXT = "hashed_text"


class Entity(str, Enum):
    BILL = "bill"
    POD = "pod"
    USER = "user"


class Role(str, Enum):
    IDENTIFIER = "identifier"
    ATTRIBUTE = "attribute"
    BILL_DATE = "bill_date"
    AGE = "age"
    OFFER = "offer"


class MonthLocale(str, Enum):
    ENGLISH = "english"
    ITALIAN = "italian"


# -- JSON paths --------------------------------------------------------------


@dataclass(frozen=True)
class Key:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Index:
    position: int

    def __str__(self) -> str:
        return f"[{self.position}]"


class _Wildcard:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "WILDCARD"

    def __str__(self) -> str:
        return "[*]"

    def __reduce__(self):
        return (_Wildcard, ())


WILDCARD = _Wildcard()

Segment = Union[Key, Index, _Wildcard]

_KEY_CHARS = r"[^.\[\]|;\s]+"
_PART_RE = re.compile(rf"^(?P<key>{_KEY_CHARS})?(?P<steps>(?:\[[^\[\]]*\])*)$")
_STEP_RE = re.compile(r"\[([^\[\]]*)\]")


@dataclass(frozen=True)
class JsonPath:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise PathSyntaxError("path has no segments")
        if sum(1 for s in self.segments if s is WILDCARD) > 1:
            raise PathSyntaxError("wildcard may appear at most once per path")

    def __str__(self) -> str:
        out = []
        for seg in self.segments:
            if isinstance(seg, Key):
                out.append(("." if out else "") + seg.name)
            else:
                out.append(str(seg))
        return "".join(out)


def parse_json_path(text: str) -> JsonPath:
    """Parse ``a.b[0].c`` / ``items[*].amount`` into a :class:`JsonPath`."""
    if not text:
        raise PathSyntaxError("empty path")
    segments: list[Segment] = []
    for part in text.split("."):
        if part == "":
            raise PathSyntaxError(f"empty segment in {text!r}")
        if part.count("[") != part.count("]"):
            raise PathSyntaxError(f"unclosed bracket in {text!r}")
        m = _PART_RE.match(part)
        if m is None:
            raise PathSyntaxError(f"malformed segment {part!r} in {text!r}")
        if m.group("key"):
            segments.append(Key(m.group("key")))
        elif segments:
            # `a.[0]` is not allowed; brackets attach to the preceding key
            raise PathSyntaxError(f"empty segment in {text!r}")
        for step in _STEP_RE.findall(m.group("steps")):
            if step == "*":
                segments.append(WILDCARD)
            elif step.startswith("-") and step[1:].isdigit():
                raise PathSyntaxError(f"negative index [{step}] in {text!r}")
            elif step.isdigit() and step.isascii():
                segments.append(Index(int(step)))
            else:
                raise PathSyntaxError(f"bad index [{step}] in {text!r}")
    return JsonPath(tuple(segments))


# -- GATs and specs ----------------------------------------------------------


@dataclass(frozen=True)
class GatDefinition:
    name: str
    paths: tuple[JsonPath, ...]
    output_type: OutputType
    entity: Entity
    role: Role = Role.ATTRIBUTE


@dataclass(frozen=True)
class MappingSpec:
    gats: tuple[GatDefinition, ...]
    month_locale: MonthLocale = MonthLocale.ENGLISH
    _by_name: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_name", {g.name: g for g in self.gats})

    def __getitem__(self, name: str) -> GatDefinition:
        return self._by_name[name]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    @property
    def names(self) -> list[str]:
        return [g.name for g in self.gats]

    def for_entity(self, entity: Entity) -> list[GatDefinition]:
        return [g for g in self.gats if g.entity is entity]

    def _single(self, entity: Entity | None, role: Role) -> GatDefinition | None:
        for g in self.gats:
            if g.role is role and (entity is None or g.entity is entity):
                return g
        return None

    @property
    def bill_date(self) -> GatDefinition:
        return self._single(Entity.BILL, Role.BILL_DATE)

    @property
    def pod_identifier(self) -> GatDefinition:
        return self._single(Entity.POD, Role.IDENTIFIER)

    @property
    def user_identifier(self) -> GatDefinition:
        return self._single(Entity.USER, Role.IDENTIFIER)

    @property
    def age(self) -> GatDefinition | None:
        return self._single(None, Role.AGE)

    @property
    def offer(self) -> GatDefinition | None:
        return self._single(None, Role.OFFER)

    def without(self, name: str) -> "MappingSpec":
        """Copy of this mapping with one GAT removed (not validated)."""
        return MappingSpec(tuple(g for g in self.gats if g.name != name), self.month_locale)


def validate_spec(spec: MappingSpec) -> list[str]:
    """Return the list of rule violations; empty means valid."""
    problems: list[str] = []
    if not spec.gats:
        return ["no GATs"]
    seen: set[str] = set()
    for g in spec.gats:
        if not g.name:
            problems.append("empty GAT name")
        if g.name in seen:
            problems.append(f"duplicate GAT name {g.name!r}")
        seen.add(g.name)
        if not g.paths:
            problems.append(f"GAT {g.name!r} has no paths")

    def count(pred) -> list[GatDefinition]:
        return [g for g in spec.gats if pred(g)]

    dates = count(lambda g: g.role is Role.BILL_DATE)
    if len(dates) != 1:
        problems.append(f"expected exactly one bill_date GAT, found {len(dates)}")
    elif dates[0].entity is not Entity.BILL or dates[0].output_type is not OutputType.DATE:
        problems.append("bill_date GAT must have entity=bill and output_type=date")
    for entity in (Entity.POD, Entity.USER):
        ids = count(lambda g, e=entity: g.role is Role.IDENTIFIER and g.entity is e)
        if len(ids) != 1:
            problems.append(f"expected exactly one {entity.value} identifier GAT, found {len(ids)}")
    stray_ids = count(lambda g: g.role is Role.IDENTIFIER and g.entity is Entity.BILL)
    if stray_ids:
        problems.append("bill entity cannot carry an identifier GAT (bills are keyed by file path)")
    ages = count(lambda g: g.role is Role.AGE)
    if len(ages) > 1:
        problems.append(f"at most one age GAT allowed, found {len(ages)}")
    for g in ages:
        if g.entity is not Entity.USER or g.output_type is not OutputType.INTEGER:
            problems.append("age GAT must have entity=user and output_type=integer")
    offers = count(lambda g: g.role is Role.OFFER)
    if len(offers) > 1:
        problems.append(f"at most one offer GAT allowed, found {len(offers)}")
    for g in offers:
        if g.entity is not Entity.BILL:
            problems.append("offer GAT must have entity=bill")
    return problems


def check_spec(spec: MappingSpec) -> MappingSpec:
    problems = validate_spec(spec)
    if problems:
        raise MappingValidationError(problems)
    return spec


def _token(enum_cls, raw: str, column: str, lineno: int):
    try:
        return enum_cls(raw.strip())
    except ValueError:
        raise MappingValidationError([f"line {lineno}: unknown {column} {raw.strip()!r}"]) from None


def parse_mapping_file(
    content: str,
    month_locale: MonthLocale | str = MonthLocale.ENGLISH,
    validate: bool = True,
) -> MappingSpec:
    """Parse mapping-file text into a :class:`MappingSpec`.

    With ``validate=False`` the cross-GAT rules are not enforced; row syntax and
    enum tokens still are. Use :func:`validate_spec` to list the violations.
    """
    lines = content.lstrip("﻿").splitlines()
    header_seen = False
    gats: list[GatDefinition] = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if not header_seen:
            if stripped != HEADER:
                raise MappingParseError(f"expected header {HEADER!r}, got {stripped!r}", lineno)
            header_seen = True
            continue
        cells = line.split(";")
        if len(cells) != 5:
            raise MappingParseError(f"expected 5 columns, got {len(cells)}", lineno)
        name, paths_cell, out_type, entity, role = (c.strip() for c in cells)
        if not name:
            raise MappingParseError("empty GAT name", lineno)
        try:
            paths = tuple(parse_json_path(p.strip()) for p in paths_cell.split("|"))
        except PathSyntaxError as exc:
            raise MappingParseError(str(exc), lineno) from None
        gats.append(
            GatDefinition(
                name=name,
                paths=paths,
                output_type=_token(OutputType, out_type, "output_type", lineno),
                entity=_token(Entity, entity, "entity", lineno),
                role=_token(Role, role, "role", lineno),
            )
        )
    if not header_seen:
        raise MappingParseError("missing header line")
    spec = MappingSpec(tuple(gats), MonthLocale(month_locale))
    return check_spec(spec) if validate else spec


def serialize_mapping_file(spec: MappingSpec) -> str:
    rows = [HEADER]
    for g in spec.gats:
        paths = "|".join(str(p) for p in g.paths)
        rows.append(f"{g.name};{paths};{g.output_type.value};{g.entity.value};{g.role.value}")
    return "\n".join(rows) + "\n"


def make_gat(
    name: str,
    paths: str | Iterable[str],
    output_type: str,
    entity: str,
    role: str = "attribute",
) -> GatDefinition:
    """Convenience constructor from strings (``paths`` may be ``a.b|c.d``)."""
    if isinstance(paths, str):
        paths = paths.split("|")
    return GatDefinition(
        name,
        tuple(parse_json_path(p) for p in paths),
        OutputType(output_type),
        Entity(entity),
        Role(role),
    )
