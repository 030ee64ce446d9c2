"""The HTTP service: dispatch, JSON views, and the ASGI application.

Routing never goes through the framework's route table, which cannot change
after startup.  Instead a single catch-all endpoint hands every request to a
dispatcher that reads one immutable ServiceState (registry snapshot, route
table, API document, all stamped with the same generation) and answers from
it.  Swapping in a new state is one reference assignment, so requests always
see a fully consistent generation and never a half-updated one.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response
from starlette.concurrency import run_in_threadpool

from .errors import (
    BadParameter,
    DirectoryUnreadable,
    MalformedBody,
    MissingParameter,
    RouteNotFound,
    ServiceError,
    UnknownPackage,
    WatcherUnavailable,
)
from .instances import ModelObject, ModelResource, resolve_fragment_path
from .metamodel import Attribute, MetamodelRegistry, Reference, RegistrySnapshot
from .provisioning import (
    ADDED,
    MODIFIED,
    REMOVED,
    ChangeEvent,
    DirectoryWatcher,
    ProvisionOutcome,
    RouteTable,
    apply_change,
    build_api_document,
    build_route_table,
    matches_row_shape,
    metamodel_file,
    scan,
)
from .repository import Repository

logger = logging.getLogger("modelforge.server")
access_logger = logging.getLogger("modelforge.access")


@dataclass(frozen=True)
class ServiceState:
    """Everything a request needs, all from one generation."""

    generation: int
    registry: RegistrySnapshot
    routes: RouteTable
    document: dict
    document_bytes: bytes


@dataclass
class DispatchResult:
    status: int
    body: bytes
    headers: dict = field(default_factory=dict)


def _json_bytes(payload) -> bytes:
    return json.dumps(payload, ensure_ascii=False).encode("utf-8")


def _fingerprint(path: Path) -> Optional[tuple[int, int]]:
    try:
        stat = path.stat()
    except OSError:
        return None
    return (stat.st_mtime_ns, stat.st_size)


class ModelService:
    """One repository directory exposed as a dynamically provisioned API."""

    def __init__(
        self,
        repo_dir,
        *,
        base_path: str = "/api/v1",
        watch: bool = True,
        debounce_ms: int = 200,
        poll_interval_ms: int = 50,
    ):
        self.repo_dir = Path(repo_dir)
        if not self.repo_dir.is_dir():
            raise DirectoryUnreadable(f"not a readable directory: {repo_dir}")
        self.base_path = "/" + base_path.strip("/") if base_path.strip("/") else ""
        self.watch_enabled = watch
        self.registry = MetamodelRegistry()
        self.repository = Repository(self.repo_dir)
        self.outcomes: list[ProvisionOutcome] = []
        self._apply_lock = threading.Lock()
        self._poll_fallback = False
        self._last_fallback_poll = 0.0
        self._applied_files: dict[str, tuple[int, int]] = {}
        # The watcher baseline is taken before the initial scan so nothing
        # slipping in between the two can ever be missed.
        self.watcher = DirectoryWatcher(
            self.repo_dir,
            self.handle_event,
            debounce=debounce_ms / 1000.0,
            poll_interval=poll_interval_ms / 1000.0,
        )
        for path in scan(self.repo_dir):
            self.handle_event(ChangeEvent(ADDED, path.parent.name, path))
        for entry in sorted(self.repo_dir.iterdir()):
            if entry.is_dir() and self.registry.snapshot.metamodel(entry.name) is None:
                self.repository.reload_package(entry.name, None)
        self._rebuild_state()

    # -- provisioning ------------------------------------------------------

    def handle_event(self, event: ChangeEvent) -> ProvisionOutcome:
        with self._apply_lock:
            outcome = apply_change(self.registry, self.repository, event)
            if outcome.kind != "Rejected":
                self._rebuild_state()
            # Remember what was applied (even if rejected) so rescan() can
            # tell a genuinely new file from one it has already processed.
            if event.kind == REMOVED:
                self._applied_files.pop(event.package_name, None)
            else:
                fingerprint = _fingerprint(Path(event.source_path))
                if fingerprint is not None:
                    self._applied_files[event.package_name] = fingerprint
            self.outcomes.append(outcome)
            return outcome

    def _rebuild_state(self) -> None:
        snapshot = self.registry.snapshot
        document = build_api_document(snapshot, self.base_path)
        self._state = ServiceState(
            snapshot.generation,
            snapshot,
            build_route_table(snapshot),
            document,
            _json_bytes(document),
        )

    @property
    def state(self) -> ServiceState:
        return self._state

    def rescan(self) -> list[ProvisionOutcome]:
        """Apply what changed on disk since the last event: for watch-off use."""
        outcomes = []
        on_disk = {path.parent.name: path for path in scan(self.repo_dir)}
        registered = set(self.registry.snapshot.entries)
        for package, path in sorted(on_disk.items()):
            fingerprint = _fingerprint(path)
            if fingerprint is None or fingerprint == self._applied_files.get(package):
                continue
            kind = MODIFIED if package in registered else ADDED
            outcomes.append(self.handle_event(ChangeEvent(kind, package, path)))
        for package in sorted((registered | set(self._applied_files)) - set(on_disk)):
            event = ChangeEvent(REMOVED, package, metamodel_file(self.repo_dir, package))
            outcomes.append(self.handle_event(event))
        return outcomes

    def start_watching(self) -> None:
        if not self.watch_enabled:
            return
        try:
            self.watcher.start()
        except WatcherUnavailable as exc:
            self._poll_fallback = True
            logger.warning(
                "file watching unavailable (%s); falling back to polling on request",
                exc.message,
            )

    def stop_watching(self) -> None:
        if self.watch_enabled and not self._poll_fallback:
            self.watcher.stop()

    def _maybe_poll(self) -> None:
        now = time.monotonic()
        if now - self._last_fallback_poll >= self.watcher.poll_interval:
            self._last_fallback_poll = now
            self.watcher.poll_once(now + self.watcher.debounce)

    # -- dispatch ----------------------------------------------------------

    def dispatch(self, method: str, path: str, query_items, body: bytes) -> DispatchResult:
        started = time.monotonic()
        if self._poll_fallback:
            self._maybe_poll()
        state = self._state
        try:
            segments = self._relative_segments(state, path)
            matched = state.routes.match(method, segments)
            if matched is None:
                if matches_row_shape(method, segments) and segments:
                    raise UnknownPackage(f"no such package: {segments[0]!r}")
                raise RouteNotFound(f"no route for {method} {path}")
            route, params = matched
            if route.package_name is not None:
                params["_package"] = route.package_name
            handler = _HANDLERS[route.kind]
            status, payload, headers = handler(self, state, params, query_items, body)
            body_bytes = payload if isinstance(payload, bytes) else _json_bytes(payload)
            result = DispatchResult(status, body_bytes, headers)
        except ServiceError as exc:
            result = DispatchResult(exc.status, _json_bytes(exc.body()), {})
        except Exception:
            logger.exception("unhandled error for %s %s", method, path)
            body_dict = {"error": "INTERNAL", "message": "unexpected server error"}
            result = DispatchResult(500, _json_bytes(body_dict), {})
        result.headers.setdefault("X-Generation", str(state.generation))
        access_logger.info(
            "access method=%s path=%s status=%d generation=%d duration_ms=%.1f",
            method,
            path,
            result.status,
            state.generation,
            (time.monotonic() - started) * 1000.0,
        )
        return result

    def _relative_segments(self, state: ServiceState, path: str) -> list[str]:
        base = self.base_path
        if base:
            if path == base:
                rest = ""
            elif path.startswith(base + "/"):
                rest = path[len(base) + 1 :]
            else:
                raise RouteNotFound(f"paths live under {base}")
        else:
            rest = path.lstrip("/")
        segments = rest.split("/") if rest else []
        if any(not s for s in segments):
            raise RouteNotFound(f"empty path segment in {path!r}")
        return segments

    # -- handlers ----------------------------------------------------------

    def _h_api_docs(self, state, params, query_items, body):
        _take_query(query_items, [])
        etag = f'"{state.generation}"'
        return 200, state.document_bytes, {"ETag": etag}

    def _h_packages(self, state, params, query_items, body):
        _take_query(query_items, [])
        snapshot = state.registry
        out = []
        for name in snapshot.package_names():
            mm = snapshot.entries[name]
            out.append(
                {
                    "packageName": name,
                    "generation": snapshot.installed_at.get(name, 0),
                    "classCount": len(mm.classes),
                    "modelCount": self.repository.model_count(name),
                }
            )
        return 200, out, {}

    def _h_read_all(self, state, params, query_items, body):
        _take_query(query_items, [])
        rows = self.repository.read_all_instances(
            state.registry, params["_package"], params["className"]
        )
        return 200, _render_rows(state, rows, include_model=True), {}

    def _h_search(self, state, params, query_items, body):
        query = _take_query(query_items, ["attributeName", "attributeValue"])
        rows = self.repository.search(
            state.registry,
            params["_package"],
            params["className"],
            params["containmentName"],
            query["attributeName"],
            query["attributeValue"],
        )
        return 200, _render_rows(state, rows, include_model=True), {}

    def _h_new_element(self, state, params, query_items, body):
        _take_query(query_items, [])
        attributes, steering = _parse_body(
            body, {"_parentAttribute", "_parentValue", "_containment"}
        )
        parent_attribute, parent_value = _paired(
            steering, "_parentAttribute", "_parentValue"
        )
        path, resource = self.repository.add_new_element(
            state.registry,
            params["_package"],
            params["parentClassName"],
            params["childClassName"],
            params["xmiFileName"],
            attributes,
            parent_attribute=parent_attribute,
            parent_value=parent_value,
            containment_name=steering.get("_containment"),
        )
        view = _render_at(state, resource, path)
        return 201, view, {"Location": str(path)}

    def _h_add_existing(self, state, params, query_items, body):
        query = _take_query(
            query_items,
            [
                "parentContainmentName",
                "attributeNameToMatch",
                "attributeValueToMatch",
                "childClassName",
                "childContainmentName",
            ],
        )
        path, resource = self.repository.add_existing(
            state.registry,
            params["_package"],
            params["className"],
            params["xmiFileName"],
            query["parentContainmentName"],
            query["attributeNameToMatch"],
            query["attributeValueToMatch"],
            query["childClassName"],
            query["childContainmentName"],
        )
        return 200, _render_at(state, resource, path), {}

    def _h_new_eopposite(self, state, params, query_items, body):
        query = _take_query(query_items, ["fieldType"])
        attributes, steering = _parse_body(
            body, {"_targetAttribute", "_targetValue"}
        )
        target_attribute, target_value = _paired(
            steering, "_targetAttribute", "_targetValue"
        )
        path, resource = self.repository.add_with_opposite(
            state.registry,
            params["_package"],
            params["parentClassName"],
            params["childClassName"],
            params["xmiFileName"],
            query["fieldType"],
            attributes,
            target_attribute=target_attribute,
            target_value=target_value,
        )
        view = _render_at(state, resource, path)
        return 201, view, {"Location": str(path)}

    def _h_update(self, state, params, query_items, body):
        query = _take_query(
            query_items, ["attributeName", "attributeValue", "updatedValue"]
        )
        count, _resource = self.repository.update_by_attribute(
            state.registry,
            params["_package"],
            params["className"],
            params["xmiFileName"],
            query["attributeName"],
            query["attributeValue"],
            query["updatedValue"],
        )
        return 200, {"updated": count}, {}

    def _h_delete_by_attribute(self, state, params, query_items, body):
        query = _take_query(query_items, ["attributeName", "attributeValue"])
        count, _resource = self.repository.delete_by_attribute(
            state.registry,
            params["_package"],
            params["className"],
            params["xmiFileName"],
            query["attributeName"],
            query["attributeValue"],
        )
        return 200, {"deleted": count}, {}

    def _h_delete_model(self, state, params, query_items, body):
        _take_query(query_items, [])
        deleted = self.repository.delete_model(
            state.registry,
            params["_package"],
            params["className"],
            params["xmiFileName"],
        )
        return 200, {"deletedModel": deleted}, {}


_HANDLERS = {
    "apiDocs": ModelService._h_api_docs,
    "packages": ModelService._h_packages,
    "readAll": ModelService._h_read_all,
    "search": ModelService._h_search,
    "newElement": ModelService._h_new_element,
    "addExisting": ModelService._h_add_existing,
    "newEopposite": ModelService._h_new_eopposite,
    "update": ModelService._h_update,
    "deleteByAttribute": ModelService._h_delete_by_attribute,
    "deleteClassByXMI": ModelService._h_delete_model,
}


# ---------------------------------------------------------------------------
# Request plumbing

def _take_query(query_items, required: list) -> dict:
    seen: dict[str, str] = {}
    for key, value in query_items:
        if key in seen:
            raise BadParameter(f"query parameter {key!r} given more than once")
        if key not in required:
            raise BadParameter(f"unexpected query parameter {key!r}")
        seen[key] = value
    for key in required:
        if key not in seen:
            raise MissingParameter(f"missing query parameter {key!r}")
    return seen


def _parse_body(body: bytes, reserved: set) -> tuple[dict, dict]:
    """Split a JSON body into attribute values and underscore-keyed steering."""
    if not body:
        return {}, {}
    try:
        data = json.loads(body)
    except ValueError as exc:
        raise MalformedBody(f"request body is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise MalformedBody("request body must be a JSON object")
    attributes: dict[str, str] = {}
    steering: dict[str, str] = {}
    for key, value in data.items():
        if not isinstance(value, str):
            raise MalformedBody(f"value for {key!r} must be a string")
        if key.startswith("_"):
            if key not in reserved:
                raise MalformedBody(f"unknown reserved key {key!r}")
            steering[key] = value
        else:
            attributes[key] = value
    return attributes, steering


def _paired(steering: dict, name_key: str, value_key: str):
    name, value = steering.get(name_key), steering.get(value_key)
    if (name is None) != (value is None):
        raise MissingParameter(f"{name_key} and {value_key} must be given together")
    return name, value


# ---------------------------------------------------------------------------
# JSON views

def _render_rows(state: ServiceState, rows, *, include_model: bool) -> list:
    views = []
    paths_cache: dict[int, dict] = {}
    for resource, path, obj in rows:
        paths = paths_cache.get(id(resource))
        if paths is None:
            paths = resource.paths()
            paths_cache[id(resource)] = paths
        views.append(
            _render_object(state, resource, paths, obj, include_model=include_model)
        )
    return views


def _render_at(state: ServiceState, resource: ModelResource, path) -> dict:
    obj = resolve_fragment_path(resource, path)
    return _render_object(state, resource, resource.paths(), obj, include_model=False)


def _render_object(
    state: ServiceState,
    resource: ModelResource,
    paths: dict,
    obj: ModelObject,
    *,
    include_model: bool,
) -> dict:
    view: dict = {"_class": obj.class_name, "_path": str(paths[obj.object_id])}
    if include_model:
        view["_model"] = resource.model_name
    mm = state.registry.metamodel(resource.package_name)
    meta_class = mm.class_named(obj.class_name) if mm is not None else None
    if meta_class is not None:
        features = mm.all_features(meta_class)
        for f in features:
            if isinstance(f, Attribute) and f.name in obj.attributes:
                view[f.name] = obj.attributes[f.name]
        for f in features:
            if isinstance(f, Reference) and f.containment:
                view[f.name] = [
                    _render_object(state, resource, paths, child, include_model=False)
                    for child in obj.containments.get(f.name, ())
                ]
        for f in features:
            if isinstance(f, Reference) and not f.containment:
                ids = obj.references.get(f.name, ())
                if ids:
                    view[f.name] = [str(paths[t]) for t in ids if t in paths]
    else:
        # The class vanished between generations; show what the object holds.
        view.update(obj.attributes)
        for name, kids in obj.containments.items():
            view[name] = [
                _render_object(state, resource, paths, child, include_model=False)
                for child in kids
            ]
        for name, ids in obj.references.items():
            if ids:
                view[name] = [str(paths[t]) for t in ids if t in paths]
    return view


# ---------------------------------------------------------------------------
# ASGI application

def create_app(service: ModelService) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        service.start_watching()
        try:
            yield
        finally:
            service.stop_watching()

    app = FastAPI(
        title="modelforge",
        lifespan=lifespan,
        openapi_url=None,
        docs_url=None,
        redoc_url=None,
    )
    app.state.service = service

    @app.api_route(
        "/{rest:path}",
        methods=["GET", "POST", "PUT", "DELETE"],
        include_in_schema=False,
    )
    async def dispatch_all(rest: str, request: Request) -> Response:
        body = await request.body()
        result = await run_in_threadpool(
            service.dispatch,
            request.method,
            "/" + rest,
            list(request.query_params.multi_items()),
            body,
        )
        return Response(
            content=result.body,
            status_code=result.status,
            media_type="application/json",
            headers=result.headers,
        )

    return app
