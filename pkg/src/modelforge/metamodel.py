"""Reflective type system: metamodels, their validation, and the registry.

A metamodel describes one package worth of classes.  Everything here is
immutable; the registry publishes whole snapshots and swaps them atomically,
so readers can hold a snapshot for the duration of a request without locking.
"""

from __future__ import annotations

import enum
import re
import threading
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Iterator, Mapping, Optional, Union

from .errors import DuplicateFeature, SupertypeCycle, UnknownClass, UnknownPackage

UNBOUNDED = -1

IDENTIFIER_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")

# Text-to-value grammars.  The gate in front of int() matters: Python's int()
# accepts separators like "1_0" that must not round-trip through a document.
_INT_RE = re.compile(r"-?[0-9]+\Z")
_DOUBLE_RE = re.compile(r"-?([0-9]+(\.[0-9]*)?|\.[0-9]+)([eE][+-]?[0-9]+)?\Z")


class DataTypeKind(enum.Enum):
    """The four supported attribute types, named as their Ecore datatypes."""

    STRING = "EString"
    INT = "EInt"
    BOOLEAN = "EBoolean"
    DOUBLE = "EDouble"

    @property
    def python_type(self) -> type:
        return _PYTHON_TYPES[self]


_PYTHON_TYPES = {
    DataTypeKind.STRING: str,
    DataTypeKind.INT: int,
    DataTypeKind.BOOLEAN: bool,
    DataTypeKind.DOUBLE: float,
}


def data_type_for(ecore_name: str) -> Optional[DataTypeKind]:
    try:
        return DataTypeKind(ecore_name)
    except ValueError:
        return None


def parse_value(kind: DataTypeKind, text: str):
    """Turn canonical text into a typed value.

    Raises ValueError when the text is not in the accepted grammar for the
    kind; callers wrap this into their own error type.
    """
    if kind is DataTypeKind.STRING:
        return text
    if kind is DataTypeKind.BOOLEAN:
        if text == "true":
            return True
        if text == "false":
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind is DataTypeKind.INT:
        if not _INT_RE.match(text):
            raise ValueError(f"not an integer: {text!r}")
        return int(text)
    if kind is DataTypeKind.DOUBLE:
        if not _DOUBLE_RE.match(text):
            raise ValueError(f"not a double: {text!r}")
        return float(text)
    raise ValueError(f"unsupported kind: {kind}")


def render_value(kind: DataTypeKind, value) -> str:
    """Inverse of parse_value: one canonical spelling per value."""
    if kind is DataTypeKind.STRING:
        return value
    if kind is DataTypeKind.BOOLEAN:
        return "true" if value else "false"
    if kind is DataTypeKind.INT:
        return str(value)
    if kind is DataTypeKind.DOUBLE:
        return repr(float(value))
    raise ValueError(f"unsupported kind: {kind}")


@dataclass(frozen=True)
class Multiplicity:
    lower: int = 0
    upper: int = 1  # UNBOUNDED (-1) means no upper limit

    def is_valid(self) -> bool:
        return self.lower >= 0 and (self.upper == UNBOUNDED or self.upper >= self.lower)

    def covers(self, count: int) -> bool:
        return count >= self.lower and (self.upper == UNBOUNDED or count <= self.upper)


@dataclass(frozen=True)
class Attribute:
    name: str
    data_type: DataTypeKind
    multiplicity: Multiplicity = Multiplicity()

    def __post_init__(self):
        if not self.name:
            raise ValueError("attribute name must be nonempty")


@dataclass(frozen=True)
class Reference:
    name: str
    target_class_name: str
    containment: bool = False
    opposite_name: Optional[str] = None
    multiplicity: Multiplicity = Multiplicity()

    def __post_init__(self):
        if not self.name or not self.target_class_name:
            raise ValueError("reference name and target must be nonempty")


Feature = Union[Attribute, Reference]


@dataclass(frozen=True)
class MetaClass:
    name: str
    is_abstract: bool = False
    super_type_names: tuple[str, ...] = ()
    attributes: tuple[Attribute, ...] = ()
    references: tuple[Reference, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ValueError("class name must be nonempty")

    @property
    def own_features(self) -> tuple[Feature, ...]:
        return self.attributes + self.references


@dataclass(frozen=True)
class MetamodelDefect:
    code: str
    qualified_name: str
    message: str


# Defect codes reported by validate_metamodel.
UNRESOLVED_TYPE = "UNRESOLVED_TYPE"
OPPOSITE_ASYMMETRY = "OPPOSITE_ASYMMETRY"
SUPERTYPE_CYCLE = "SUPERTYPE_CYCLE"
DUPLICATE_CLASS = "DUPLICATE_CLASS"
DUPLICATE_FEATURE = "DUPLICATE_FEATURE"
BAD_MULTIPLICITY = "BAD_MULTIPLICITY"


@dataclass(frozen=True)
class Metamodel:
    package_name: str
    ns_uri: str
    ns_prefix: str
    classes: tuple[MetaClass, ...] = ()

    def __post_init__(self):
        if not self.package_name or not self.ns_uri or not self.ns_prefix:
            raise ValueError("package name, nsURI and nsPrefix must be nonempty")

    @cached_property
    def class_map(self) -> Mapping[str, MetaClass]:
        out: dict[str, MetaClass] = {}
        for c in self.classes:
            out.setdefault(c.name, c)
        return MappingProxyType(out)

    def class_named(self, name: str) -> Optional[MetaClass]:
        return self.class_map.get(name)

    def require_class(self, name: str) -> MetaClass:
        c = self.class_map.get(name)
        if c is None:
            raise UnknownClass(f"package {self.package_name!r} has no class {name!r}")
        return c

    @cached_property
    def _feature_cache(self) -> dict[str, tuple[Feature, ...]]:
        return {}

    def all_features(self, meta_class: MetaClass) -> tuple[Feature, ...]:
        """Own and inherited features, supertypes first, declaration order within.

        The linearization walks supertypes depth-first in declaration order and
        keeps the first visit of each class, so a feature inherited through two
        paths appears once.  Raises SupertypeCycle or DuplicateFeature when the
        hierarchy is unsound; valid metamodels never trigger either.
        """
        cached = self._feature_cache.get(meta_class.name)
        if cached is not None:
            return cached
        order = self.linearize(meta_class)
        features: list[Feature] = []
        seen: dict[str, str] = {}
        for c in order:
            for f in c.own_features:
                if f.name in seen:
                    raise DuplicateFeature(
                        f"feature {f.name!r} declared by both "
                        f"{seen[f.name]!r} and {c.name!r} reaches {meta_class.name!r}"
                    )
                seen[f.name] = c.name
                features.append(f)
        result = tuple(features)
        self._feature_cache[meta_class.name] = result
        return result

    def linearize(self, meta_class: MetaClass) -> list[MetaClass]:
        """Supertypes-before-subtype class order used for feature lookup."""
        order: list[MetaClass] = []
        visited: set[str] = set()
        active: set[str] = set()

        def visit(c: MetaClass):
            if c.name in active:
                raise SupertypeCycle(f"supertype cycle through {c.name!r}")
            if c.name in visited:
                return
            active.add(c.name)
            for super_name in c.super_type_names:
                sup = self.class_map.get(super_name)
                if sup is None:
                    raise UnknownClass(
                        f"class {c.name!r} names unknown supertype {super_name!r}"
                    )
                visit(sup)
            active.discard(c.name)
            visited.add(c.name)
            order.append(c)

        visit(meta_class)
        return order

    def is_subtype_of(self, sub: MetaClass, super_name: str) -> bool:
        """True when sub is super_name or inherits from it (any depth)."""
        if sub.name == super_name:
            return True
        pending = list(sub.super_type_names)
        seen: set[str] = set()
        while pending:
            name = pending.pop()
            if name in seen:
                continue
            seen.add(name)
            if name == super_name:
                return True
            parent = self.class_map.get(name)
            if parent is not None:
                pending.extend(parent.super_type_names)
        return False

    def feature_named(self, meta_class: MetaClass, name: str) -> Optional[Feature]:
        for f in self.all_features(meta_class):
            if f.name == name:
                return f
        return None

    def declaring_class(self, meta_class: MetaClass, feature_name: str) -> Optional[MetaClass]:
        """The class, walking supertypes first, that declares the feature."""
        for c in self.linearize(meta_class):
            for f in c.own_features:
                if f.name == feature_name:
                    return c
        return None

    def concrete_subtypes(self, super_name: str) -> list[MetaClass]:
        return [
            c
            for c in self.classes
            if not c.is_abstract and self.is_subtype_of(c, super_name)
        ]


def validate_metamodel(metamodel: Metamodel) -> list[MetamodelDefect]:
    """Structural soundness checks; an empty list means the metamodel is usable.

    Defects come out in deterministic order: duplicate classes first, then per
    class (in declaration order) supertype problems, attribute problems,
    reference problems, and finally flattened duplicate features.
    """
    defects: list[MetamodelDefect] = []
    pkg = metamodel.package_name
    seen_classes: set[str] = set()
    for c in metamodel.classes:
        if c.name in seen_classes:
            defects.append(
                MetamodelDefect(
                    DUPLICATE_CLASS, f"{pkg}.{c.name}", "class name declared twice"
                )
            )
        seen_classes.add(c.name)

    cycle_members = _cycle_members(metamodel)

    for c in metamodel.classes:
        qn = f"{pkg}.{c.name}"
        for super_name in c.super_type_names:
            if metamodel.class_named(super_name) is None:
                defects.append(
                    MetamodelDefect(
                        UNRESOLVED_TYPE, qn, f"unknown supertype {super_name!r}"
                    )
                )
        if c.name in cycle_members:
            defects.append(
                MetamodelDefect(SUPERTYPE_CYCLE, qn, "class participates in a supertype cycle")
            )
        for a in c.attributes:
            if not a.multiplicity.is_valid() or a.multiplicity.upper != 1:
                defects.append(
                    MetamodelDefect(
                        BAD_MULTIPLICITY,
                        f"{qn}.{a.name}",
                        "attributes must have upper bound 1 and lower <= upper",
                    )
                )
        for r in c.references:
            rqn = f"{qn}.{r.name}"
            target = metamodel.class_named(r.target_class_name)
            if target is None:
                defects.append(
                    MetamodelDefect(
                        UNRESOLVED_TYPE, rqn, f"unknown target class {r.target_class_name!r}"
                    )
                )
            if not r.multiplicity.is_valid():
                defects.append(
                    MetamodelDefect(BAD_MULTIPLICITY, rqn, "lower must be <= upper and >= 0")
                )
            if r.opposite_name is not None and target is not None:
                back = _own_or_inherited_reference(metamodel, target, r.opposite_name)
                if back is None:
                    defects.append(
                        MetamodelDefect(
                            OPPOSITE_ASYMMETRY,
                            rqn,
                            f"target {r.target_class_name!r} has no reference "
                            f"{r.opposite_name!r}",
                        )
                    )
                else:
                    if back.opposite_name != r.name or not metamodel.is_subtype_of(
                        c, back.target_class_name
                    ):
                        defects.append(
                            MetamodelDefect(
                                OPPOSITE_ASYMMETRY,
                                rqn,
                                f"opposite {r.opposite_name!r} does not point back at "
                                f"{c.name}.{r.name}",
                            )
                        )
                    elif r.containment and back.containment:
                        defects.append(
                            MetamodelDefect(
                                OPPOSITE_ASYMMETRY,
                                rqn,
                                "a containment cannot oppose another containment",
                            )
                        )

    # Flattened duplicate features, only for classes whose hierarchy resolved.
    for c in metamodel.classes:
        if c.name in cycle_members:
            continue
        try:
            order = metamodel.linearize(c)
        except (SupertypeCycle, UnknownClass):
            continue
        seen: set[str] = set()
        for cls in order:
            for f in cls.own_features:
                if f.name in seen:
                    defects.append(
                        MetamodelDefect(
                            DUPLICATE_FEATURE,
                            f"{pkg}.{c.name}.{f.name}",
                            f"feature name reaches {c.name!r} more than once",
                        )
                    )
                seen.add(f.name)
    return defects


def _cycle_members(metamodel: Metamodel) -> set[str]:
    members: set[str] = set()
    for c in metamodel.classes:
        stack = list(c.super_type_names)
        seen: set[str] = set()
        while stack:
            name = stack.pop()
            if name == c.name:
                members.add(c.name)
                break
            if name in seen:
                continue
            seen.add(name)
            parent = metamodel.class_named(name)
            if parent is not None:
                stack.extend(parent.super_type_names)
    return members


def _own_or_inherited_reference(
    metamodel: Metamodel, meta_class: MetaClass, name: str
) -> Optional[Reference]:
    pending = [meta_class]
    seen: set[str] = set()
    while pending:
        c = pending.pop(0)
        if c.name in seen:
            continue
        seen.add(c.name)
        for r in c.references:
            if r.name == name:
                return r
        for super_name in c.super_type_names:
            parent = metamodel.class_named(super_name)
            if parent is not None:
                pending.append(parent)
    return None


@dataclass(frozen=True)
class RegistrySnapshot:
    """Immutable view of every installed metamodel at one generation."""

    generation: int
    entries: Mapping[str, Metamodel]
    installed_at: Mapping[str, int]

    def metamodel(self, package_name: str) -> Optional[Metamodel]:
        return self.entries.get(package_name)

    def require(self, package_name: str) -> Metamodel:
        mm = self.entries.get(package_name)
        if mm is None:
            raise UnknownPackage(f"no such package: {package_name!r}")
        return mm

    def package_names(self) -> list[str]:
        return sorted(self.entries)


def resolve_class(snapshot: RegistrySnapshot, package_name: str, class_name: str) -> MetaClass:
    return snapshot.require(package_name).require_class(class_name)


class MetamodelRegistry:
    """Holds the current snapshot; installs and removals swap it atomically.

    The generation counter increases on every successful swap and never on a
    failed one, so a response stamped with a generation can be traced to the
    exact set of metamodels that produced it.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._snapshot = RegistrySnapshot(0, MappingProxyType({}), MappingProxyType({}))

    @property
    def snapshot(self) -> RegistrySnapshot:
        return self._snapshot

    def install(self, metamodel: Metamodel) -> RegistrySnapshot:
        with self._lock:
            old = self._snapshot
            generation = old.generation + 1
            entries = dict(old.entries)
            entries[metamodel.package_name] = metamodel
            installed = dict(old.installed_at)
            installed[metamodel.package_name] = generation
            snap = RegistrySnapshot(
                generation, MappingProxyType(entries), MappingProxyType(installed)
            )
            self._snapshot = snap
            return snap

    def remove(self, package_name: str) -> RegistrySnapshot:
        with self._lock:
            old = self._snapshot
            if package_name not in old.entries:
                raise UnknownPackage(f"no such package: {package_name!r}")
            entries = dict(old.entries)
            del entries[package_name]
            installed = dict(old.installed_at)
            del installed[package_name]
            snap = RegistrySnapshot(
                old.generation + 1, MappingProxyType(entries), MappingProxyType(installed)
            )
            self._snapshot = snap
            return snap
