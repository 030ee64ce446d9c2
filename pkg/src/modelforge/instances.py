"""Instance graphs: typed objects, resources, and fragment-path addressing.

A resource is one model file in memory: a containment tree of objects plus
non-containment references stored as object ids.  Objects pre-create one slot
per declared feature in linearization order, which makes document order (and
therefore every serialization and every view) deterministic without carrying
the metamodel around.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .errors import DanglingPath
from .metamodel import Attribute, MetaClass, Metamodel, Reference

_SEGMENT_RE = re.compile(r"@([A-Za-z][A-Za-z0-9_]*)\.([0-9]+)\Z")


@dataclass(frozen=True)
class FragmentPath:
    """Position of an object in its containment tree, e.g. ``//@books.1``.

    The root is spelled ``/``; every other object appends one
    ``@feature.index`` segment per containment step from the root.
    """

    segments: tuple[tuple[str, int], ...] = ()

    @classmethod
    def parse(cls, text: str) -> "FragmentPath":
        if text == "/":
            return cls(())
        if not text.startswith("//@"):
            raise DanglingPath(f"not a fragment path: {text!r}")
        segments = []
        for raw in text[2:].split("/"):
            m = _SEGMENT_RE.match(raw)
            if m is None:
                raise DanglingPath(f"bad path segment {raw!r} in {text!r}")
            segments.append((m.group(1), int(m.group(2))))
        return cls(tuple(segments))

    def __str__(self) -> str:
        if not self.segments:
            return "/"
        return "/" + "".join(f"/@{name}.{index}" for name, index in self.segments)

    @property
    def is_root(self) -> bool:
        return not self.segments

    def child(self, feature_name: str, index: int) -> "FragmentPath":
        return FragmentPath(self.segments + ((feature_name, index),))


@dataclass
class ModelObject:
    """One node of a model: attribute slots, containment slots, reference slots.

    Containment slots hold child objects; reference slots hold the ids of
    objects elsewhere in the same resource.  Slot dictionaries are created in
    feature order and never gain keys afterwards.
    """

    object_id: int
    class_name: str
    attributes: dict = field(default_factory=dict)
    containments: dict = field(default_factory=dict)
    references: dict = field(default_factory=dict)

    def children(self) -> Iterator["ModelObject"]:
        for kids in self.containments.values():
            yield from kids


def create_object(metamodel: Metamodel, meta_class: MetaClass, object_id: int) -> ModelObject:
    """New empty object with every containment and reference slot pre-created."""
    obj = ModelObject(object_id, meta_class.name)
    for f in metamodel.all_features(meta_class):
        if isinstance(f, Reference):
            if f.containment:
                obj.containments[f.name] = []
            else:
                obj.references[f.name] = []
    return obj


@dataclass
class ModelResource:
    """An in-memory model document plus the id allocator for its objects."""

    model_name: str
    package_name: str
    root: ModelObject
    dirty: bool = False
    next_object_id: int = 0

    def allocate_id(self) -> int:
        oid = self.next_object_id
        self.next_object_id += 1
        return oid

    def objects(self) -> Iterator[ModelObject]:
        """Document order: each object before its children, slots in order."""
        stack = [self.root]
        while stack:
            obj = stack.pop()
            yield obj
            stack.extend(reversed(list(obj.children())))

    def objects_with_paths(self) -> Iterator[tuple[FragmentPath, ModelObject]]:
        def walk(obj: ModelObject, path: FragmentPath):
            yield path, obj
            for name, kids in obj.containments.items():
                for i, child in enumerate(kids):
                    yield from walk(child, path.child(name, i))

        yield from walk(self.root, FragmentPath())

    def paths(self) -> dict[int, FragmentPath]:
        """Object id to fragment path, one tree walk."""
        return {obj.object_id: path for path, obj in self.objects_with_paths()}

    def object_by_id(self, object_id: int) -> Optional[ModelObject]:
        for obj in self.objects():
            if obj.object_id == object_id:
                return obj
        return None

    def clone(self) -> "ModelResource":
        """Deep copy preserving object ids, slot order, and the id allocator."""
        return ModelResource(
            self.model_name,
            self.package_name,
            _clone_object(self.root),
            dirty=self.dirty,
            next_object_id=self.next_object_id,
        )


def _clone_object(obj: ModelObject) -> ModelObject:
    return ModelObject(
        obj.object_id,
        obj.class_name,
        dict(obj.attributes),
        {name: [_clone_object(c) for c in kids] for name, kids in obj.containments.items()},
        {name: list(ids) for name, ids in obj.references.items()},
    )


def resolve_fragment_path(resource: ModelResource, path: FragmentPath) -> ModelObject:
    """Walk the containment tree along the path; DanglingPath when it breaks."""
    obj = resource.root
    for name, index in path.segments:
        kids = obj.containments.get(name)
        if kids is None:
            raise DanglingPath(
                f"{path}: {obj.class_name!r} has no containment {name!r}"
            )
        if index >= len(kids):
            raise DanglingPath(f"{path}: index {index} out of range for {name!r}")
        obj = kids[index]
    return obj


def fragment_path_of(resource: ModelResource, target: ModelObject) -> FragmentPath:
    """Path of an object that belongs to the resource's tree."""
    for path, obj in resource.objects_with_paths():
        if obj is target:
            return path
    raise DanglingPath(f"object {target.object_id} not reachable from the root")
