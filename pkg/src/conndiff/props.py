"""Connection-property configuration space.

A :class:`PropertySchema` lists the properties a connector accepts and their
domains; the full configuration space is the cartesian product of those
domains. Since that space grows multiplicatively, campaigns draw from a small
:class:`SubsetCatalog` of curated assignments instead.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Union

from conndiff import fileformat

PropertyValue = Union[bool, int, str]

STRATEGIES = ("defaults-plus-single-flips", "pairwise-interactions", "random")
DEFAULT_K = 8

SCHEMA_KIND = "conndiff-schema"
CATALOG_KIND = "conndiff-catalog"


class PropertyError(ValueError):
    pass


@dataclass(frozen=True)
class Property:
    name: str
    domain: tuple[PropertyValue, ...]
    default: PropertyValue

    def __post_init__(self):
        if len(self.domain) < 2:
            raise PropertyError(f"property {self.name!r}: domain needs at least 2 values")
        if len(set(map(_value_key, self.domain))) != len(self.domain):
            raise PropertyError(f"property {self.name!r}: duplicate domain values")
        if not _contains(self.domain, self.default):
            raise PropertyError(f"property {self.name!r}: default {self.default!r} not in domain")


def _value_key(value: PropertyValue) -> tuple[str, PropertyValue]:
    # bool is an int subclass; keep True and 1 distinct
    return (type(value).__name__, value)


def _contains(domain: tuple[PropertyValue, ...], value: PropertyValue) -> bool:
    return _value_key(value) in {_value_key(v) for v in domain}


@dataclass(frozen=True)
class PropertySchema:
    properties: tuple[Property, ...]
    interaction_pairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        names = [p.name for p in self.properties]
        if len(set(names)) != len(names):
            raise PropertyError("property names must be unique")
        for a, b in self.interaction_pairs:
            if a not in names or b not in names or a == b:
                raise PropertyError(f"bad interaction pair ({a}, {b})")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.properties)

    def get(self, name: str) -> Property:
        for prop in self.properties:
            if prop.name == name:
                return prop
        raise KeyError(name)

    def defaults(self) -> "PropertyAssignment":
        return PropertyAssignment.of({p.name: p.default for p in self.properties})

    def check(self, assignment: "PropertyAssignment") -> list[str]:
        """Return a list of problems with ``assignment`` under this schema."""
        problems = []
        for name, value in assignment.bindings:
            if name not in self.names:
                problems.append(f"unknown property {name!r}")
            elif not _contains(self.get(name).domain, value):
                problems.append(f"{name}={value!r} not in domain {list(self.get(name).domain)}")
        return problems

    def resolve(self, assignment: "PropertyAssignment") -> "PropertyAssignment":
        """Bind every schema property, filling unbound names with defaults."""
        problems = self.check(assignment)
        if problems:
            raise PropertyError("; ".join(problems))
        bound = assignment.as_dict()
        return PropertyAssignment.of({p.name: bound.get(p.name, p.default) for p in self.properties})

    def enumerate(self) -> Iterator["PropertyAssignment"]:
        for combo in itertools.product(*(p.domain for p in self.properties)):
            yield PropertyAssignment.of(dict(zip(self.names, combo)))


@dataclass(frozen=True)
class PropertyAssignment:
    """One point of the configuration space. Unbound names mean "default"."""

    bindings: tuple[tuple[str, PropertyValue], ...] = ()

    @classmethod
    def of(cls, mapping: dict[str, PropertyValue] | None = None) -> "PropertyAssignment":
        return cls(tuple(sorted((mapping or {}).items())))

    def as_dict(self) -> dict[str, PropertyValue]:
        return dict(self.bindings)

    def get(self, name: str, default: PropertyValue | None = None) -> PropertyValue | None:
        return self.as_dict().get(name, default)

    def with_(self, **changes: PropertyValue) -> "PropertyAssignment":
        return PropertyAssignment.of({**self.as_dict(), **changes})

    def __str__(self) -> str:
        if not self.bindings:
            return "(defaults)"
        return ", ".join(f"{k}={fileformat.format_scalar(v)}" for k, v in self.bindings)


@dataclass(frozen=True)
class SubsetCatalog:
    subsets: tuple[tuple[str, tuple[PropertyAssignment, ...]], ...]
    strategy: str
    seed: int = 0

    def __post_init__(self):
        for name, members in self.subsets:
            if not members:
                raise PropertyError(f"subset {name!r} is empty")
            if len(set(members)) != len(members):
                raise PropertyError(f"subset {name!r} has duplicate assignments")

    def flatten(self) -> list[PropertyAssignment]:
        return [a for _, members in self.subsets for a in members]

    def __len__(self) -> int:
        return sum(len(m) for _, m in self.subsets)


def space_size(schema: PropertySchema) -> int:
    return math.prod(len(p.domain) for p in schema.properties)


def curate_subsets(
    schema: PropertySchema,
    k: int = DEFAULT_K,
    strategy: str = "pairwise-interactions",
    seed: int = 0,
) -> SubsetCatalog:
    """Build a catalog of at most ``k`` representative assignments.

    ``defaults-plus-single-flips`` starts from the all-defaults assignment and
    adds every single property moved off its default. ``pairwise-interactions``
    appends the joint off-default flips of every declared interaction pair.
    ``random`` draws ``k`` distinct points uniformly from the full space.
    """
    if k < 1:
        raise PropertyError("k must be >= 1")
    if strategy not in STRATEGIES:
        raise PropertyError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")

    if strategy == "random":
        size = space_size(schema)
        if k > size:
            raise PropertyError(f"space exhausted: k={k} exceeds |V|={size}")
        rng = random.Random(seed)
        picks = sorted(rng.sample(range(size), k))
        members = tuple(_unrank(schema, i) for i in picks)
        return SubsetCatalog((("random", members),), strategy, seed)

    base = schema.defaults()
    subsets: list[tuple[str, list[PropertyAssignment]]] = [("defaults", [base])]
    for prop in schema.properties:
        flips = [base.with_(**{prop.name: v}) for v in prop.domain if not _same(v, prop.default)]
        subsets.append((f"flip:{prop.name}", flips))
    if strategy == "pairwise-interactions":
        for a, b in schema.interaction_pairs:
            pa, pb = schema.get(a), schema.get(b)
            joint = [
                base.with_(**{a: va, b: vb})
                for va in pa.domain
                if not _same(va, pa.default)
                for vb in pb.domain
                if not _same(vb, pb.default)
            ]
            subsets.append((f"pair:{a}+{b}", joint))

    # truncate to k in construction order, dropping repeats across subsets
    seen: set[PropertyAssignment] = set()
    kept: list[tuple[str, tuple[PropertyAssignment, ...]]] = []
    budget = k
    for name, members in subsets:
        fresh = []
        for a in members:
            if budget == 0:
                break
            if a not in seen:
                seen.add(a)
                fresh.append(a)
                budget -= 1
        if fresh:
            kept.append((name, tuple(fresh)))
    return SubsetCatalog(tuple(kept), strategy, seed)


def _same(a: PropertyValue, b: PropertyValue) -> bool:
    return _value_key(a) == _value_key(b)


def _unrank(schema: PropertySchema, index: int) -> PropertyAssignment:
    # mixed-radix decode, last property varies fastest (matches itertools.product)
    values = []
    for prop in reversed(schema.properties):
        index, digit = divmod(index, len(prop.domain))
        values.append(prop.domain[digit])
    return PropertyAssignment.of(dict(zip(schema.names, reversed(values))))


def sample(catalog: SubsetCatalog, rng: random.Random) -> PropertyAssignment:
    members = catalog.flatten()
    if not members:
        raise PropertyError("cannot sample from an empty catalog")
    return members[rng.randrange(len(members))]


# -- files -------------------------------------------------------------------


def schema_from_dict(data: dict) -> PropertySchema:
    try:
        props = tuple(
            Property(p["name"], tuple(p["domain"]), p["default"]) for p in data["properties"]
        )
        pairs = tuple(tuple(pair) for pair in data.get("interaction_pairs", []))
    except (KeyError, TypeError) as exc:
        raise PropertyError(f"malformed schema: {exc}") from exc
    return PropertySchema(props, pairs)


def schema_to_dict(schema: PropertySchema) -> dict:
    return {
        "properties": [
            {"name": p.name, "domain": list(p.domain), "default": p.default}
            for p in schema.properties
        ],
        "interaction_pairs": [list(pair) for pair in schema.interaction_pairs],
    }


def load_schema(path: str | Path) -> PropertySchema:
    return schema_from_dict(fileformat.read_yaml(path, SCHEMA_KIND))


def dump_schema(schema: PropertySchema, path: str | Path) -> None:
    fileformat.write_yaml(path, SCHEMA_KIND, schema_to_dict(schema))


def catalog_to_dict(catalog: SubsetCatalog) -> dict:
    return {
        "strategy": catalog.strategy,
        "seed": catalog.seed,
        "subsets": [
            {"name": name, "assignments": [a.as_dict() for a in members]}
            for name, members in catalog.subsets
        ],
    }


def catalog_from_dict(data: dict) -> SubsetCatalog:
    subsets = tuple(
        (s["name"], tuple(PropertyAssignment.of(a) for a in s["assignments"]))
        for s in data["subsets"]
    )
    return SubsetCatalog(subsets, data["strategy"], data.get("seed", 0))


def load_catalog(path: str | Path) -> SubsetCatalog:
    return catalog_from_dict(fileformat.read_yaml(path, CATALOG_KIND))


def dump_catalog(catalog: SubsetCatalog, path: str | Path) -> None:
    fileformat.write_yaml(path, CATALOG_KIND, catalog_to_dict(catalog))


def default_schema_path() -> Path:
    return Path(__file__).parent / "data" / "properties.yaml"


def default_schema() -> PropertySchema:
    return load_schema(default_schema_path())


__all__ = [
    "DEFAULT_K",
    "Property",
    "PropertyAssignment",
    "PropertyError",
    "PropertySchema",
    "STRATEGIES",
    "SubsetCatalog",
    "curate_subsets",
    "default_schema",
    "sample",
    "space_size",
]
