"""Turning metamodel files on disk into live routes and API documentation.

A change to ``<dir>/<pkg>/<pkg>.ecore`` becomes a ChangeEvent, the event is
applied to the registry and repository, and on success the caller republishes
the route table and API document.  A rejected change leaves every published
structure untouched, so a bad file can never take a working API down.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import DialectViolation, ServiceError, UnknownPackage, WatcherUnavailable
from .metamodel import (
    Attribute,
    MetaClass,
    Metamodel,
    MetamodelRegistry,
    Reference,
    RegistrySnapshot,
)
from .repository import METAMODEL_SUFFIX, LoadError, Repository
from .xmi import parse_metamodel

logger = logging.getLogger("modelforge.provisioning")

ADDED = "Added"
MODIFIED = "Modified"
REMOVED = "Removed"


@dataclass(frozen=True)
class ChangeEvent:
    kind: str
    package_name: str
    source_path: Path


@dataclass(frozen=True)
class ProvisionOutcome:
    kind: str  # Swapped | Rejected | Removed
    package_name: str
    generation: int
    defects: tuple[str, ...] = ()
    load_errors: tuple[LoadError, ...] = ()


def metamodel_file(base_directory, package_name: str) -> Path:
    return Path(base_directory) / package_name / f"{package_name}{METAMODEL_SUFFIX}"


def scan(base_directory) -> list[Path]:
    """Metamodel files present on disk: ``<pkg>/<pkg>.ecore``, sorted.

    Only the file named after its directory counts; any other .ecore file in
    the directory is ignored.
    """
    base = Path(base_directory)
    found = []
    if base.is_dir():
        for entry in sorted(base.iterdir()):
            if entry.is_dir():
                candidate = entry / f"{entry.name}{METAMODEL_SUFFIX}"
                if candidate.is_file():
                    found.append(candidate)
    return found


def apply_change(
    registry: MetamodelRegistry, repository: Repository, event: ChangeEvent
) -> ProvisionOutcome:
    """Apply one metamodel change; never raises for bad input files."""
    package = event.package_name
    if event.kind == REMOVED:
        try:
            snap = registry.remove(package)
        except UnknownPackage:
            outcome = ProvisionOutcome(
                "Rejected",
                package,
                registry.snapshot.generation,
                ("package was not registered",),
            )
            _log(outcome)
            return outcome
        repository.drop_package(package)
        outcome = ProvisionOutcome("Removed", package, snap.generation)
        _log(outcome)
        return outcome

    try:
        metamodel = parse_metamodel(Path(event.source_path).read_bytes())
        if metamodel.package_name != package:
            raise DialectViolation(
                f"package is named {metamodel.package_name!r} but lives in "
                f"directory {package!r}"
            )
    except (ServiceError, OSError) as exc:
        details = getattr(exc, "details", None)
        if isinstance(details, list):
            defects = tuple(
                f"{d.get('code')} at {d.get('element')}: {d.get('message')}"
                for d in details
            )
        else:
            defects = (str(exc),)
        outcome = ProvisionOutcome(
            "Rejected", package, registry.snapshot.generation, defects
        )
        _log(outcome)
        return outcome

    snap = registry.install(metamodel)
    load_errors = repository.reload_package(package, metamodel, snap.generation)
    outcome = ProvisionOutcome("Swapped", package, snap.generation, (), tuple(load_errors))
    _log(outcome)
    return outcome


def _log(outcome: ProvisionOutcome) -> None:
    logger.info(
        "provision package=%s outcome=%s generation=%d",
        outcome.package_name,
        outcome.kind,
        outcome.generation,
    )
    for defect in outcome.defects:
        logger.warning(
            "provision package=%s defect=%s", outcome.package_name, defect
        )
    for error in outcome.load_errors:
        logger.warning(
            "provision package=%s offline file=%s reason=%s",
            outcome.package_name,
            error.file_name,
            error.reason,
        )


# ---------------------------------------------------------------------------
# Route table

@dataclass(frozen=True)
class Route:
    method: str
    template: str  # below the base path, e.g. /library/{className}/all
    kind: str
    package_name: Optional[str] = None

    @property
    def segments(self) -> tuple[str, ...]:
        return tuple(self.template.strip("/").split("/"))


@dataclass(frozen=True)
class RouteTable:
    generation: int
    routes: tuple[Route, ...]

    def match(self, method: str, segments: list[str]) -> Optional[tuple[Route, dict]]:
        for route in self.routes:
            template = route.segments
            if route.method != method or len(template) != len(segments):
                continue
            params: dict[str, str] = {}
            for part, value in zip(template, segments):
                if part.startswith("{"):
                    params[part[1:-1]] = value
                elif part != value:
                    break
            else:
                return route, params
        return None


# (method, number of segments, trailing literal) of every per-package row;
# used to tell "unknown package" apart from "no such route shape".
ROW_SHAPES = (
    ("GET", 3, "all"),
    ("GET", 4, "search"),
    ("POST", 5, "newElement"),
    ("POST", 4, "addExisting"),
    ("POST", 5, "newEopposite"),
    ("PUT", 4, "update"),
    ("DELETE", 4, "deleteByAttribute"),
    ("DELETE", 4, "deleteClassByXMI"),
)


def matches_row_shape(method: str, segments: list[str]) -> bool:
    return any(
        method == m and len(segments) == count and segments[-1] == tail
        for m, count, tail in ROW_SHAPES
    )


def build_route_table(snapshot: RegistrySnapshot) -> RouteTable:
    routes: list[Route] = [
        Route("GET", "/api-docs", "apiDocs"),
        Route("GET", "/packages", "packages"),
    ]
    for package in snapshot.package_names():
        routes.extend(
            [
                Route("GET", f"/{package}/{{className}}/all", "readAll", package),
                Route(
                    "GET",
                    f"/{package}/{{className}}/{{containmentName}}/search",
                    "search",
                    package,
                ),
                Route(
                    "POST",
                    f"/{package}/{{parentClassName}}/{{childClassName}}/{{xmiFileName}}/newElement",
                    "newElement",
                    package,
                ),
                Route(
                    "POST",
                    f"/{package}/{{className}}/{{xmiFileName}}/addExisting",
                    "addExisting",
                    package,
                ),
                Route(
                    "POST",
                    f"/{package}/{{parentClassName}}/{{childClassName}}/{{xmiFileName}}/newEopposite",
                    "newEopposite",
                    package,
                ),
                Route(
                    "PUT",
                    f"/{package}/{{className}}/{{xmiFileName}}/update",
                    "update",
                    package,
                ),
                Route(
                    "DELETE",
                    f"/{package}/{{className}}/{{xmiFileName}}/deleteByAttribute",
                    "deleteByAttribute",
                    package,
                ),
                Route(
                    "DELETE",
                    f"/{package}/{{className}}/{{xmiFileName}}/deleteClassByXMI",
                    "deleteClassByXMI",
                    package,
                ),
            ]
        )
    return RouteTable(snapshot.generation, tuple(routes))


# ---------------------------------------------------------------------------
# API document

_TYPE_MAP = {
    "EString": {"type": "string"},
    "EInt": {"type": "integer"},
    "EBoolean": {"type": "boolean"},
    "EDouble": {"type": "number"},
}

_ERROR_REF = {"$ref": "#/components/schemas/ErrorBody"}


def build_api_document(snapshot: RegistrySnapshot, base_path: str = "/api/v1") -> dict:
    """OpenAPI 3.0 document describing every endpoint of this generation."""
    paths: dict = {
        "/api-docs": {
            "get": {
                "operationId": "getApiDocument",
                "summary": "The live API document for the current generation.",
                "responses": _ok_response({"type": "object"}),
            }
        },
        "/packages": {
            "get": {
                "operationId": "listPackages",
                "summary": "Registered packages with generation and counts.",
                "responses": _ok_response(
                    {
                        "type": "array",
                        "items": {"$ref": "#/components/schemas/PackageInfo"},
                    }
                ),
            }
        },
    }
    schemas: dict = {
        "ErrorBody": {
            "type": "object",
            "properties": {
                "error": {"type": "string", "description": "Stable machine-readable code."},
                "message": {"type": "string"},
                "details": {"description": "Optional structured context."},
            },
            "required": ["error", "message"],
        },
        "PackageInfo": {
            "type": "object",
            "properties": {
                "packageName": {"type": "string"},
                "generation": {"type": "integer"},
                "classCount": {"type": "integer"},
                "modelCount": {"type": "integer"},
            },
            "required": ["packageName", "generation", "classCount", "modelCount"],
        },
    }

    for package in snapshot.package_names():
        mm = snapshot.entries[package]
        for meta_class in mm.classes:
            schemas[f"{package}.{meta_class.name}"] = _class_schema(mm, meta_class)
        _expand_package(paths, mm)

    return {
        "openapi": "3.0.3",
        "info": {
            "title": "modelforge",
            "description": "CRUD endpoints provisioned from the registered metamodels.",
            "version": str(snapshot.generation),
        },
        "servers": [{"url": base_path}],
        "paths": paths,
        "components": {"schemas": schemas},
    }


def _class_schema(mm: Metamodel, meta_class: MetaClass) -> dict:
    description = f"Instance of {mm.package_name}.{meta_class.name}."
    if meta_class.is_abstract:
        description += " The class is abstract; instances always use a concrete subtype."
    properties: dict = {
        "_class": {"type": "string", "description": "Concrete class of the object."},
        "_path": {"type": "string", "description": "Fragment path within its model."},
        "_model": {"type": "string", "description": "Model file the object lives in."},
    }
    required = ["_class", "_path"]
    for feature in mm.all_features(meta_class):
        if isinstance(feature, Attribute):
            properties[feature.name] = dict(_TYPE_MAP[feature.data_type.value])
            if feature.multiplicity.lower >= 1:
                required.append(feature.name)
        elif feature.containment:
            properties[feature.name] = {
                "type": "array",
                "items": {
                    "$ref": f"#/components/schemas/{mm.package_name}.{feature.target_class_name}"
                },
            }
        else:
            properties[feature.name] = {
                "type": "array",
                "items": {"type": "string"},
                "description": "Fragment paths of the referenced objects.",
            }
    return {
        "type": "object",
        "description": description,
        "properties": properties,
        "required": required,
    }


def _ok_response(schema: dict, status: str = "200", description: str = "Success.") -> dict:
    return {
        status: {
            "description": description,
            "content": {"application/json": {"schema": schema}},
        },
        "default": {
            "description": "Error.",
            "content": {"application/json": {"schema": dict(_ERROR_REF)}},
        },
    }


def _param(name: str, location: str) -> dict:
    return {
        "name": name,
        "in": location,
        "required": True,
        "schema": {"type": "string"},
    }


_ATTRIBUTE_BODY = {
    "description": (
        "Attribute values for the new element, all as canonical strings. Keys "
        "starting with an underscore steer the operation instead of setting "
        "an attribute."
    ),
    "content": {
        "application/json": {
            "schema": {"type": "object", "additionalProperties": {"type": "string"}}
        }
    },
}


def _expand_package(paths: dict, mm: Metamodel) -> None:
    pkg = mm.package_name

    def ref(meta_class: MetaClass) -> dict:
        return {"$ref": f"#/components/schemas/{pkg}.{meta_class.name}"}

    for c in mm.classes:
        paths[f"/{pkg}/{c.name}/all"] = {
            "get": {
                "operationId": f"readAll_{pkg}_{c.name}",
                "summary": f"Every {c.name} across the package's models.",
                "responses": _ok_response({"type": "array", "items": ref(c)}),
            }
        }
        paths[f"/{pkg}/{c.name}/{{containmentName}}/search"] = {
            "get": {
                "operationId": f"search_{pkg}_{c.name}",
                "summary": f"{c.name} instances under a containment matching an attribute.",
                "parameters": [
                    _param("containmentName", "path"),
                    _param("attributeName", "query"),
                    _param("attributeValue", "query"),
                ],
                "responses": _ok_response({"type": "array", "items": ref(c)}),
            }
        }
        if _has_plain_reference(mm, c):
            paths[f"/{pkg}/{c.name}/{{xmiFileName}}/addExisting"] = {
                "post": {
                    "operationId": f"addExisting_{pkg}_{c.name}",
                    "summary": (
                        f"Link the first unreferenced candidate into a reference "
                        f"of a {c.name}."
                    ),
                    "parameters": [
                        _param("xmiFileName", "path"),
                        _param("parentContainmentName", "query"),
                        _param("attributeNameToMatch", "query"),
                        _param("attributeValueToMatch", "query"),
                        _param("childClassName", "query"),
                        _param("childContainmentName", "query"),
                    ],
                    "responses": _ok_response(ref(c)),
                }
            }
        paths[f"/{pkg}/{c.name}/{{xmiFileName}}/update"] = {
            "put": {
                "operationId": f"update_{pkg}_{c.name}",
                "summary": f"Set an attribute on every matching {c.name}.",
                "parameters": [
                    _param("xmiFileName", "path"),
                    _param("attributeName", "query"),
                    _param("attributeValue", "query"),
                    _param("updatedValue", "query"),
                ],
                "responses": _ok_response(
                    {
                        "type": "object",
                        "properties": {"updated": {"type": "integer"}},
                        "required": ["updated"],
                    }
                ),
            }
        }
        paths[f"/{pkg}/{c.name}/{{xmiFileName}}/deleteByAttribute"] = {
            "delete": {
                "operationId": f"deleteByAttribute_{pkg}_{c.name}",
                "summary": f"Delete every matching {c.name} with its subtree.",
                "parameters": [
                    _param("xmiFileName", "path"),
                    _param("attributeName", "query"),
                    _param("attributeValue", "query"),
                ],
                "responses": _ok_response(
                    {
                        "type": "object",
                        "properties": {"deleted": {"type": "integer"}},
                        "required": ["deleted"],
                    }
                ),
            }
        }
        paths[f"/{pkg}/{c.name}/{{xmiFileName}}/deleteClassByXMI"] = {
            "delete": {
                "operationId": f"deleteModel_{pkg}_{c.name}",
                "summary": f"Delete a whole model whose root is a {c.name}.",
                "parameters": [_param("xmiFileName", "path")],
                "responses": _ok_response(
                    {
                        "type": "object",
                        "properties": {"deletedModel": {"type": "string"}},
                        "required": ["deletedModel"],
                    }
                ),
            }
        }

    for parent in mm.classes:
        for child in mm.classes:
            if child.is_abstract:
                continue
            if _can_contain(mm, parent, child):
                paths[f"/{pkg}/{parent.name}/{child.name}/{{xmiFileName}}/newElement"] = {
                    "post": {
                        "operationId": f"newElement_{pkg}_{parent.name}_{child.name}",
                        "summary": f"Create a {child.name} under a {parent.name}.",
                        "parameters": [_param("xmiFileName", "path")],
                        "requestBody": dict(_ATTRIBUTE_BODY),
                        "responses": _ok_response(ref(child), "201", "Created."),
                    }
                }
            if _opposite_pairable(mm, parent, child):
                paths[f"/{pkg}/{parent.name}/{child.name}/{{xmiFileName}}/newEopposite"] = {
                    "post": {
                        "operationId": f"newEopposite_{pkg}_{parent.name}_{child.name}",
                        "summary": (
                            f"Create a {child.name} and wire its bidirectional "
                            f"reference to a {parent.name}."
                        ),
                        "parameters": [
                            _param("xmiFileName", "path"),
                            _param("fieldType", "query"),
                        ],
                        "requestBody": dict(_ATTRIBUTE_BODY),
                        "responses": _ok_response(ref(child), "201", "Created."),
                    }
                }


def _has_plain_reference(mm: Metamodel, meta_class: MetaClass) -> bool:
    return any(
        isinstance(f, Reference) and not f.containment
        for f in mm.all_features(meta_class)
    )


def _can_contain(mm: Metamodel, parent: MetaClass, child: MetaClass) -> bool:
    return any(
        isinstance(f, Reference)
        and f.containment
        and mm.is_subtype_of(child, f.target_class_name)
        for f in mm.all_features(parent)
    )


def _opposite_pairable(mm: Metamodel, parent: MetaClass, child: MetaClass) -> bool:
    """Whether newEopposite can plausibly pair these two classes."""
    if child.is_abstract:
        return False
    for f in mm.all_features(child):
        if (
            isinstance(f, Reference)
            and not f.containment
            and f.opposite_name is not None
        ):
            target = mm.class_named(f.target_class_name)
            if target is None:
                continue
            if mm.is_subtype_of(parent, f.target_class_name) or mm.is_subtype_of(
                target, parent.name
            ):
                return True
    return False


# ---------------------------------------------------------------------------
# Directory watcher

class DirectoryWatcher:
    """Polls ``<base>/<pkg>/<pkg>.ecore`` files and emits debounced events.

    Raw filesystem changes are coalesced per package: the debounce window
    restarts on every new change and the last raw kind within the window wins,
    so a create immediately overwritten reports a single Modified event.
    """

    def __init__(
        self,
        base_directory,
        listener: Callable[[ChangeEvent], None],
        *,
        debounce: float = 0.2,
        poll_interval: float = 0.05,
    ):
        self.base_directory = Path(base_directory)
        self.listener = listener
        self.debounce = debounce
        self.poll_interval = poll_interval
        self._lock = threading.Lock()
        self._known = self._scan_files()
        self._pending: dict[str, tuple[str, Path, float]] = {}
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _scan_files(self) -> dict[str, tuple[int, int]]:
        state: dict[str, tuple[int, int]] = {}
        for path in scan(self.base_directory):
            try:
                stat = path.stat()
            except OSError:
                continue
            state[path.parent.name] = (stat.st_mtime_ns, stat.st_size)
        return state

    @staticmethod
    def diff(
        before: dict[str, tuple[int, int]], after: dict[str, tuple[int, int]]
    ) -> list[tuple[str, str]]:
        """Raw (kind, package) changes between two scans, package-sorted."""
        changes = []
        for package in sorted(set(before) | set(after)):
            if package not in before:
                changes.append((ADDED, package))
            elif package not in after:
                changes.append((REMOVED, package))
            elif before[package] != after[package]:
                changes.append((MODIFIED, package))
        return changes

    def poll_once(self, now: Optional[float] = None) -> list[ChangeEvent]:
        """One poll step: fold raw changes into the pending map, emit due events."""
        now = time.monotonic() if now is None else now
        with self._lock:
            current = self._scan_files()
            for kind, package in self.diff(self._known, current):
                self._pending[package] = (
                    kind,
                    metamodel_file(self.base_directory, package),
                    now + self.debounce,
                )
            self._known = current
            due = [
                ChangeEvent(kind, package, path)
                for package, (kind, path, deadline) in sorted(self._pending.items())
                if deadline <= now
            ]
            for event in due:
                del self._pending[event.package_name]
        for event in due:
            self.listener(event)
        return due

    def start(self) -> None:
        if not self.base_directory.is_dir():
            raise WatcherUnavailable(
                f"cannot watch {self.base_directory}: not a directory"
            )
        self._stop.clear()
        self._thread = threading.Thread(
            target=self._run, name="modelforge-watcher", daemon=True
        )
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                self.poll_once()
            except Exception:
                logger.exception("watcher poll failed")
            self._stop.wait(self.poll_interval)
