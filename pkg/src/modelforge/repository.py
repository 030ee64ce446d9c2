"""The model repository: directory-backed storage plus all model operations.

Every mutation follows the same discipline: clone the resource, change the
clone, validate it, write it to disk atomically, then swap it into the
in-memory map.  A failure at any step leaves both the files and the published
resources exactly as they were, and readers only ever see complete resources
because the map itself is replaced, never edited in place.
"""

from __future__ import annotations

import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Mapping, Optional

from .errors import (
    AmbiguousContainment,
    AmbiguousParent,
    AmbiguousTarget,
    DirectoryUnreadable,
    IoFailure,
    NoCandidate,
    NoOppositeReference,
    OfflineResource,
    ParentNotFound,
    RootClassMismatch,
    RootDeletionForbidden,
    ServiceError,
    TargetNotFound,
    UnknownContainment,
    UnknownFeature,
    UnknownModel,
    ValidationRejected,
    ValueParseError,
)
from .instances import (
    FragmentPath,
    ModelObject,
    ModelResource,
    create_object,
    fragment_path_of,
)
from .metamodel import (
    Attribute,
    MetaClass,
    Metamodel,
    Reference,
    RegistrySnapshot,
    parse_value,
)
from .validation import validate_resource
from .xmi import parse_model, serialize_model

MODEL_SUFFIX = ".xmi"
METAMODEL_SUFFIX = ".ecore"


@dataclass(frozen=True)
class LoadError:
    package_name: str
    file_name: str
    reason: str


def _normalize_model_name(name: str) -> str:
    return name[: -len(MODEL_SUFFIX)] if name.endswith(MODEL_SUFFIX) else name


def _atomic_write(target: Path, data: bytes) -> None:
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, target)
    except OSError:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


class Repository:
    """All loaded models for one base directory."""

    def __init__(self, base_directory):
        self.base_directory = Path(base_directory)
        self._resources: dict[tuple[str, str], ModelResource] = {}
        self._offline: dict[tuple[str, str], LoadError] = {}
        self._write_lock = threading.RLock()

    # -- loading -----------------------------------------------------------

    @classmethod
    def load(
        cls, base_directory, snapshot: RegistrySnapshot
    ) -> tuple["Repository", list[LoadError]]:
        repo = cls(base_directory)
        if not repo.base_directory.is_dir():
            raise DirectoryUnreadable(f"not a readable directory: {base_directory}")
        errors: list[LoadError] = []
        for entry in sorted(repo.base_directory.iterdir()):
            if entry.is_dir():
                errors.extend(
                    repo.reload_package(
                        entry.name, snapshot.metamodel(entry.name), snapshot.generation
                    )
                )
        return repo, errors

    def reload_package(
        self, package_name: str, metamodel: Optional[Metamodel], generation: int = 0
    ) -> list[LoadError]:
        """(Re)parse every model file of one package against its metamodel.

        Files that fail to parse or validate become offline: they are left on
        disk untouched, reported, and refuse model-scoped operations until a
        later reload succeeds.
        """
        with self._write_lock:
            errors: list[LoadError] = []
            resources = {
                k: v for k, v in self._resources.items() if k[0] != package_name
            }
            offline = {k: v for k, v in self._offline.items() if k[0] != package_name}
            package_dir = self.base_directory / package_name
            if package_dir.is_dir():
                for path in sorted(package_dir.glob(f"*{MODEL_SUFFIX}")):
                    model_name = path.stem
                    key = (package_name, model_name)
                    if metamodel is None:
                        error = LoadError(
                            package_name, path.name, "package has no registered metamodel"
                        )
                        errors.append(error)
                        offline[key] = error
                        continue
                    try:
                        resource = parse_model(path.read_bytes(), metamodel, model_name)
                    except (ServiceError, OSError) as exc:
                        error = LoadError(package_name, path.name, f"parse failed: {exc}")
                        errors.append(error)
                        offline[key] = error
                        continue
                    report = validate_resource(resource, metamodel, generation)
                    if not report.ok:
                        first = report.violations[0]
                        error = LoadError(
                            package_name,
                            path.name,
                            f"validation failed: {len(report.violations)} violation(s), "
                            f"first is {first.code} at {first.object_path}",
                        )
                        errors.append(error)
                        offline[key] = error
                        continue
                    resources[key] = resource
            self._resources = resources
            self._offline = offline
            return errors

    def drop_package(self, package_name: str) -> None:
        """Forget a package's resources; files stay on disk."""
        with self._write_lock:
            self._resources = {
                k: v for k, v in self._resources.items() if k[0] != package_name
            }
            self._offline = {
                k: v for k, v in self._offline.items() if k[0] != package_name
            }

    # -- lookups -----------------------------------------------------------

    @property
    def resources(self) -> Mapping[tuple[str, str], ModelResource]:
        return self._resources

    @property
    def offline(self) -> Mapping[tuple[str, str], LoadError]:
        return self._offline

    def models_of(self, package_name: str) -> list[ModelResource]:
        resources = self._resources
        return [
            resources[key]
            for key in sorted(resources)
            if key[0] == package_name
        ]

    def model_count(self, package_name: str) -> int:
        return sum(1 for key in self._resources if key[0] == package_name)

    def require_resource(self, package_name: str, model_name: str) -> ModelResource:
        key = (package_name, _normalize_model_name(model_name))
        stale = self._offline.get(key)
        if stale is not None:
            raise OfflineResource(
                f"model {key[1]!r} is offline: {stale.reason}"
            )
        resource = self._resources.get(key)
        if resource is None:
            raise UnknownModel(
                f"package {package_name!r} has no model {key[1]!r}"
            )
        return resource

    # -- reads -------------------------------------------------------------

    def read_all_instances(
        self, snapshot: RegistrySnapshot, package_name: str, class_name: str
    ) -> list[tuple[ModelResource, FragmentPath, ModelObject]]:
        """Every instance of the class (subtypes included) across the package."""
        mm = snapshot.require(package_name)
        mm.require_class(class_name)
        out = []
        for resource in self.models_of(package_name):
            for path, obj in resource.objects_with_paths():
                if _is_instance(mm, obj, class_name):
                    out.append((resource, path, obj))
        return out

    def search(
        self,
        snapshot: RegistrySnapshot,
        package_name: str,
        class_name: str,
        containment_name: str,
        attribute_name: str,
        attribute_value: str,
    ) -> list[tuple[ModelResource, FragmentPath, ModelObject]]:
        """Instances sitting under the named containment whose attribute matches."""
        mm = snapshot.require(package_name)
        meta_class = mm.require_class(class_name)
        if not _containment_declared(mm, containment_name):
            raise UnknownContainment(
                f"package {package_name!r} declares no containment {containment_name!r}"
            )
        feature = _attribute_feature(mm, meta_class, attribute_name)
        wanted = _parse_attribute(feature, attribute_value)
        out = []
        for resource in self.models_of(package_name):
            for slot_name, path, obj in _contained_entries(resource):
                if (
                    slot_name == containment_name
                    and _is_instance(mm, obj, class_name)
                    and attribute_name in obj.attributes
                    and obj.attributes[attribute_name] == wanted
                ):
                    out.append((resource, path, obj))
        return out

    # -- mutations ---------------------------------------------------------

    def add_new_element(
        self,
        snapshot: RegistrySnapshot,
        package_name: str,
        parent_class_name: str,
        child_class_name: str,
        model_name: str,
        attributes: Mapping[str, str],
        parent_attribute: Optional[str] = None,
        parent_value: Optional[str] = None,
        containment_name: Optional[str] = None,
    ) -> tuple[FragmentPath, ModelResource]:
        """Create a child under a parent instance; returns the new object's path."""

        def mutate(mm: Metamodel, working: ModelResource):
            mm.require_class(parent_class_name)
            child_class = mm.require_class(child_class_name)
            _parent_path, parent = _select_single(
                mm,
                working,
                parent_class_name,
                parent_attribute,
                parent_value,
                none_error=ParentNotFound,
                many_error=AmbiguousParent,
            )
            feature = _choose_containment(
                mm, parent, child_class_name, containment_name
            )
            child = _build_child(mm, working, child_class, attributes)
            parent.containments[feature.name].append(child)
            _set_container_backlink(feature, parent, child)
            slot_index = len(parent.containments[feature.name]) - 1
            return fragment_path_of(working, parent).child(feature.name, slot_index), True

        return self._mutate(snapshot, package_name, model_name, mutate)

    def add_existing(
        self,
        snapshot: RegistrySnapshot,
        package_name: str,
        class_name: str,
        model_name: str,
        parent_containment_name: str,
        attribute_to_match: str,
        value_to_match: str,
        child_class_name: str,
        child_containment_name: str,
    ) -> tuple[FragmentPath, ModelResource]:
        """Link the first not-yet-referenced candidate into a reference slot.

        Candidates live under the root's child containment; "not yet
        referenced" means no object in the model references them through a
        slot of the same name.
        """

        def mutate(mm: Metamodel, working: ModelResource):
            meta_class = mm.require_class(class_name)
            mm.require_class(child_class_name)
            match_feature = _attribute_feature(mm, meta_class, attribute_to_match)
            _parse_attribute(match_feature, value_to_match)
            parent_path, parent = _select_single(
                mm,
                working,
                class_name,
                attribute_to_match,
                value_to_match,
                none_error=ParentNotFound,
                many_error=AmbiguousParent,
            )
            ref = mm.feature_named(mm.require_class(parent.class_name), parent_containment_name)
            if not isinstance(ref, Reference) or ref.containment:
                raise UnknownFeature(
                    f"class {class_name!r} has no reference {parent_containment_name!r}"
                )
            root_class = mm.require_class(working.root.class_name)
            pool_feature = mm.feature_named(root_class, child_containment_name)
            if not isinstance(pool_feature, Reference) or not pool_feature.containment:
                raise UnknownContainment(
                    f"root class {root_class.name!r} has no containment "
                    f"{child_containment_name!r}"
                )
            referenced: set[int] = set()
            for obj in working.objects():
                referenced.update(obj.references.get(parent_containment_name, ()))
            candidate = None
            for obj in working.root.containments.get(child_containment_name, ()):
                if _is_instance(mm, obj, child_class_name) and obj.object_id not in referenced:
                    candidate = obj
                    break
            if candidate is None:
                raise NoCandidate(
                    f"every {child_class_name!r} under {child_containment_name!r} is "
                    f"already referenced through {parent_containment_name!r}"
                )
            parent.references[ref.name].append(candidate.object_id)
            _set_reference_backlink(mm, ref, parent, candidate)
            return parent_path, True

        return self._mutate(snapshot, package_name, model_name, mutate)

    def add_with_opposite(
        self,
        snapshot: RegistrySnapshot,
        package_name: str,
        parent_class_name: str,
        child_class_name: str,
        model_name: str,
        field_type: str,
        attributes: Mapping[str, str],
        target_attribute: Optional[str] = None,
        target_value: Optional[str] = None,
    ) -> tuple[FragmentPath, ModelResource]:
        """Create a child and wire the bidirectional pair typed by field_type."""

        def mutate(mm: Metamodel, working: ModelResource):
            child_class = mm.require_class(child_class_name)
            mm.require_class(parent_class_name)
            field_class = mm.require_class(field_type)
            candidates = [
                f
                for f in mm.all_features(child_class)
                if isinstance(f, Reference)
                and not f.containment
                and f.opposite_name is not None
                and f.target_class_name == field_type
            ]
            if not candidates:
                raise NoOppositeReference(
                    f"class {child_class_name!r} has no bidirectional reference "
                    f"typed {field_type!r}"
                )
            if len(candidates) > 1:
                names = ", ".join(f.name for f in candidates)
                raise NoOppositeReference(
                    f"class {child_class_name!r} has several bidirectional references "
                    f"typed {field_type!r}: {names}"
                )
            ref = candidates[0]
            opposite = mm.feature_named(field_class, ref.opposite_name)
            _target_path, target = _select_single(
                mm,
                working,
                parent_class_name,
                target_attribute,
                target_value,
                none_error=TargetNotFound,
                many_error=AmbiguousTarget,
            )
            child = _build_child(mm, working, child_class, attributes)
            if isinstance(opposite, Reference) and opposite.containment:
                container, feature = target, opposite
            else:
                container, feature = _infer_container(
                    mm, working, target, child_class_name
                )
            container.containments[feature.name].append(child)
            _set_container_backlink(feature, container, child)
            if not (isinstance(opposite, Reference) and opposite.containment):
                child.references[ref.name].append(target.object_id)
                _set_reference_backlink(mm, ref, child, target)
            return fragment_path_of(working, child), True

        return self._mutate(snapshot, package_name, model_name, mutate)

    def update_by_attribute(
        self,
        snapshot: RegistrySnapshot,
        package_name: str,
        class_name: str,
        model_name: str,
        attribute_name: str,
        attribute_value: str,
        updated_value: str,
    ) -> tuple[int, ModelResource]:
        """Set the attribute on every matching instance; returns the count."""

        def mutate(mm: Metamodel, working: ModelResource):
            meta_class = mm.require_class(class_name)
            feature = _attribute_feature(mm, meta_class, attribute_name)
            wanted = _parse_attribute(feature, attribute_value)
            new_value = _parse_attribute(feature, updated_value)
            matched = [
                obj
                for obj in working.objects()
                if _is_instance(mm, obj, class_name)
                and attribute_name in obj.attributes
                and obj.attributes[attribute_name] == wanted
            ]
            for obj in matched:
                obj.attributes[attribute_name] = new_value
            return len(matched), bool(matched)

        return self._mutate(snapshot, package_name, model_name, mutate)

    def delete_by_attribute(
        self,
        snapshot: RegistrySnapshot,
        package_name: str,
        class_name: str,
        model_name: str,
        attribute_name: str,
        attribute_value: str,
    ) -> tuple[int, ModelResource]:
        """Delete matching instances, their subtrees, and every reference to them."""

        def mutate(mm: Metamodel, working: ModelResource):
            meta_class = mm.require_class(class_name)
            feature = _attribute_feature(mm, meta_class, attribute_name)
            wanted = _parse_attribute(feature, attribute_value)
            matched = [
                obj
                for obj in working.objects()
                if _is_instance(mm, obj, class_name)
                and attribute_name in obj.attributes
                and obj.attributes[attribute_name] == wanted
            ]
            if not matched:
                return 0, False
            if any(obj is working.root for obj in matched):
                raise RootDeletionForbidden(
                    "the root object cannot be deleted; delete the model instead"
                )
            doomed = {id(obj) for obj in matched}
            removed_ids: set[int] = set()

            def collect(obj: ModelObject):
                removed_ids.add(obj.object_id)
                for child in obj.children():
                    collect(child)

            for obj in matched:
                collect(obj)

            def prune(obj: ModelObject):
                for name, kids in obj.containments.items():
                    kept = [child for child in kids if id(child) not in doomed]
                    obj.containments[name] = kept
                    for child in kept:
                        prune(child)

            prune(working.root)
            for obj in working.objects():
                for name, ids in obj.references.items():
                    obj.references[name] = [t for t in ids if t not in removed_ids]
            return len(matched), True

        return self._mutate(snapshot, package_name, model_name, mutate)

    def delete_model(
        self, snapshot: RegistrySnapshot, package_name: str, class_name: str, model_name: str
    ) -> str:
        """Remove the model file entirely; the root must be of the given class."""
        mm = snapshot.require(package_name)
        mm.require_class(class_name)
        with self._write_lock:
            resource = self.require_resource(package_name, model_name)
            if not _is_instance(mm, resource.root, class_name):
                raise RootClassMismatch(
                    f"root object is a {resource.root.class_name!r}, "
                    f"not a {class_name!r}"
                )
            target = (
                self.base_directory
                / package_name
                / f"{resource.model_name}{MODEL_SUFFIX}"
            )
            try:
                target.unlink()
            except FileNotFoundError:
                pass
            except OSError as exc:
                raise IoFailure(f"could not delete {target}: {exc}") from None
            key = (package_name, resource.model_name)
            self._resources = {
                k: v for k, v in self._resources.items() if k != key
            }
            return resource.model_name

    # -- persistence -------------------------------------------------------

    def commit(self, resource: ModelResource, metamodel: Metamodel) -> bool:
        """Write the resource to its file atomically; no-op when not dirty."""
        if not resource.dirty:
            return False
        data = serialize_model(resource, metamodel)
        target = (
            self.base_directory
            / resource.package_name
            / f"{resource.model_name}{MODEL_SUFFIX}"
        )
        try:
            _atomic_write(target, data)
        except OSError as exc:
            raise IoFailure(f"could not write {target}: {exc}") from None
        resource.dirty = False
        return True

    def _mutate(
        self,
        snapshot: RegistrySnapshot,
        package_name: str,
        model_name: str,
        mutator: Callable[[Metamodel, ModelResource], tuple[object, bool]],
    ):
        """Run one mutation with validate-commit-swap semantics."""
        mm = snapshot.require(package_name)
        with self._write_lock:
            resource = self.require_resource(package_name, model_name)
            working = resource.clone()
            result, changed = mutator(mm, working)
            if not changed:
                return result, resource
            report = validate_resource(working, mm, snapshot.generation)
            if not report.ok:
                raise ValidationRejected(
                    f"mutation would leave {working.model_name!r} with "
                    f"{len(report.violations)} violation(s)",
                    details=report.rows(),
                )
            working.dirty = True
            self.commit(working, mm)
            updated = dict(self._resources)
            updated[(package_name, working.model_name)] = working
            self._resources = updated
            return result, working


# ---------------------------------------------------------------------------
# Shared helpers

def _is_instance(mm: Metamodel, obj: ModelObject, class_name: str) -> bool:
    meta_class = mm.class_named(obj.class_name)
    return meta_class is not None and mm.is_subtype_of(meta_class, class_name)


def _containment_declared(mm: Metamodel, name: str) -> bool:
    return any(
        isinstance(f, Reference) and f.containment and f.name == name
        for c in mm.classes
        for f in c.own_features
    )


def _attribute_feature(mm: Metamodel, meta_class: MetaClass, name: str) -> Attribute:
    feature = mm.feature_named(meta_class, name)
    if not isinstance(feature, Attribute):
        raise UnknownFeature(
            f"class {meta_class.name!r} has no attribute {name!r}"
        )
    return feature


def _parse_attribute(feature: Attribute, raw: str):
    try:
        return parse_value(feature.data_type, raw)
    except ValueError as exc:
        raise ValueParseError(f"{feature.name}: {exc}") from None


def _contained_entries(
    resource: ModelResource,
) -> Iterator[tuple[Optional[str], FragmentPath, ModelObject]]:
    """(containing feature, path, object) in document order; the root has None."""

    def walk(obj: ModelObject, slot: Optional[str], path: FragmentPath):
        yield slot, path, obj
        for name, kids in obj.containments.items():
            for i, child in enumerate(kids):
                yield from walk(child, name, path.child(name, i))

    yield from walk(resource.root, None, FragmentPath())


def _select_single(
    mm: Metamodel,
    working: ModelResource,
    class_name: str,
    attribute_name: Optional[str],
    attribute_value: Optional[str],
    *,
    none_error: type,
    many_error: type,
):
    """The unique instance of class_name, optionally filtered by one attribute."""
    wanted = None
    if attribute_name is not None:
        feature = _attribute_feature(mm, mm.require_class(class_name), attribute_name)
        wanted = _parse_attribute(feature, attribute_value or "")
    matches = []
    for path, obj in working.objects_with_paths():
        if not _is_instance(mm, obj, class_name):
            continue
        if attribute_name is not None and obj.attributes.get(attribute_name) != wanted:
            continue
        matches.append((path, obj))
    if not matches:
        selector = (
            f" with {attribute_name}={attribute_value!r}" if attribute_name else ""
        )
        raise none_error(f"no instance of {class_name!r}{selector}")
    if len(matches) > 1:
        selector = (
            f" with {attribute_name}={attribute_value!r}"
            if attribute_name
            else "; filter by attribute to disambiguate"
        )
        raise many_error(f"{len(matches)} instances of {class_name!r}{selector}")
    return matches[0]


def _choose_containment(
    mm: Metamodel,
    parent: ModelObject,
    child_class_name: str,
    containment_name: Optional[str],
) -> Reference:
    parent_class = mm.require_class(parent.class_name)
    if containment_name is not None:
        feature = mm.feature_named(parent_class, containment_name)
        if (
            not isinstance(feature, Reference)
            or not feature.containment
            or not _accepts(mm, feature, child_class_name)
        ):
            raise UnknownFeature(
                f"class {parent_class.name!r} has no containment "
                f"{containment_name!r} accepting {child_class_name!r}"
            )
        return feature
    candidates = [
        f
        for f in mm.all_features(parent_class)
        if isinstance(f, Reference) and f.containment and _accepts(mm, f, child_class_name)
    ]
    if not candidates:
        raise UnknownFeature(
            f"class {parent_class.name!r} has no containment accepting "
            f"{child_class_name!r}"
        )
    if len(candidates) > 1:
        names = ", ".join(f.name for f in candidates)
        raise AmbiguousContainment(
            f"class {parent_class.name!r} has several containments accepting "
            f"{child_class_name!r}: {names}"
        )
    return candidates[0]


def _accepts(mm: Metamodel, feature: Reference, child_class_name: str) -> bool:
    child = mm.class_named(child_class_name)
    return child is not None and mm.is_subtype_of(child, feature.target_class_name)


def _infer_container(
    mm: Metamodel, working: ModelResource, target: ModelObject, child_class_name: str
) -> tuple[ModelObject, Reference]:
    """Containment for a new child: try the root first, then the target."""
    try:
        return working.root, _choose_containment(mm, working.root, child_class_name, None)
    except UnknownFeature:
        pass
    return target, _choose_containment(mm, target, child_class_name, None)


def _build_child(
    mm: Metamodel,
    working: ModelResource,
    child_class: MetaClass,
    attributes: Mapping[str, str],
) -> ModelObject:
    child = create_object(mm, child_class, working.allocate_id())
    for name, raw in attributes.items():
        feature = _attribute_feature(mm, child_class, name)
        child.attributes[name] = _parse_attribute(feature, raw)
    return child


def _set_container_backlink(feature: Reference, parent: ModelObject, child: ModelObject):
    if feature.opposite_name is not None:
        back = child.references.get(feature.opposite_name)
        if back is not None and parent.object_id not in back:
            back.append(parent.object_id)


def _set_reference_backlink(
    mm: Metamodel, ref: Reference, source: ModelObject, target: ModelObject
):
    if ref.opposite_name is None:
        return
    target_class = mm.class_named(target.class_name)
    opposite = (
        mm.feature_named(target_class, ref.opposite_name)
        if target_class is not None
        else None
    )
    if isinstance(opposite, Reference) and not opposite.containment:
        back = target.references.get(ref.opposite_name)
        if back is not None and source.object_id not in back:
            back.append(source.object_id)
