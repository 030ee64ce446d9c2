"""Middleware that provisions a REST API on the fly for models conforming to
arbitrary metamodels.

Drop an ``.ecore`` file into a repository directory and every class in it
immediately gets CRUD endpoints and OpenAPI documentation; model files are
validated against their metamodel on every write.
"""

from .errors import ServiceError
from .instances import FragmentPath, ModelObject, ModelResource
from .metamodel import (
    Attribute,
    DataTypeKind,
    MetaClass,
    Metamodel,
    MetamodelDefect,
    MetamodelRegistry,
    Multiplicity,
    Reference,
    RegistrySnapshot,
    resolve_class,
    validate_metamodel,
)
from .provisioning import (
    ChangeEvent,
    DirectoryWatcher,
    ProvisionOutcome,
    Route,
    RouteTable,
    apply_change,
    build_api_document,
    build_route_table,
    scan,
)
from .repository import LoadError, Repository
from .server import ModelService, ServiceState, create_app
from .validation import ValidationReport, Violation, validate_resource
from .xmi import parse_metamodel, parse_model, serialize_metamodel, serialize_model

__version__ = "0.1.0"

__all__ = [
    "Attribute",
    "ChangeEvent",
    "DataTypeKind",
    "DirectoryWatcher",
    "FragmentPath",
    "LoadError",
    "MetaClass",
    "Metamodel",
    "MetamodelDefect",
    "MetamodelRegistry",
    "ModelObject",
    "ModelResource",
    "ModelService",
    "Multiplicity",
    "ProvisionOutcome",
    "Reference",
    "RegistrySnapshot",
    "Repository",
    "Route",
    "RouteTable",
    "ServiceError",
    "ServiceState",
    "ValidationReport",
    "Violation",
    "apply_change",
    "build_api_document",
    "build_route_table",
    "create_app",
    "parse_metamodel",
    "parse_model",
    "resolve_class",
    "scan",
    "serialize_metamodel",
    "serialize_model",
    "validate_metamodel",
    "validate_resource",
]
