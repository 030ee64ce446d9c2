"""Exception hierarchy shared by the parsers, the repository, and the HTTP layer.

Every error carries a stable machine-readable ``code`` and the HTTP status it
maps to when it surfaces through the API.  Errors raised below the HTTP layer
(parsing, provisioning) reuse the same hierarchy so callers never need to
translate between two taxonomies.
"""

from __future__ import annotations

from typing import Any


class ServiceError(Exception):
    """Base class for every recoverable failure the service can report."""

    code: str = "INTERNAL"
    status: int = 500

    def __init__(self, message: str = "", *, details: Any = None):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def body(self) -> dict:
        """Render the canonical error payload."""
        out: dict = {"error": self.code, "message": self.message}
        if self.details is not None:
            out["details"] = self.details
        return out


# ---------------------------------------------------------------------------
# 400: the request itself is malformed

class ValueParseError(ServiceError):
    code = "VALUE_PARSE"
    status = 400


class MissingParameter(ServiceError):
    code = "MISSING_PARAMETER"
    status = 400


class BadParameter(ServiceError):
    code = "BAD_PARAMETER"
    status = 400


class MalformedBody(ServiceError):
    code = "MALFORMED_BODY"
    status = 400


# ---------------------------------------------------------------------------
# 404: something the request names does not exist

class RouteNotFound(ServiceError):
    code = "ROUTE_NOT_FOUND"
    status = 404


class UnknownPackage(ServiceError):
    code = "UNKNOWN_PACKAGE"
    status = 404


class UnknownClass(ServiceError):
    code = "UNKNOWN_CLASS"
    status = 404


class UnknownModel(ServiceError):
    code = "UNKNOWN_MODEL"
    status = 404


class UnknownFeature(ServiceError):
    code = "UNKNOWN_FEATURE"
    status = 404


class UnknownContainment(ServiceError):
    code = "UNKNOWN_CONTAINMENT"
    status = 404


class ParentNotFound(ServiceError):
    code = "PARENT_NOT_FOUND"
    status = 404


class TargetNotFound(ServiceError):
    code = "TARGET_NOT_FOUND"
    status = 404


# ---------------------------------------------------------------------------
# 409: the request names real things but the operation cannot apply

class AmbiguousParent(ServiceError):
    code = "AMBIGUOUS_PARENT"
    status = 409


class AmbiguousContainment(ServiceError):
    code = "AMBIGUOUS_CONTAINMENT"
    status = 409


class AmbiguousTarget(ServiceError):
    code = "AMBIGUOUS_TARGET"
    status = 409


class NoCandidate(ServiceError):
    code = "NO_CANDIDATE"
    status = 409


class NoOppositeReference(ServiceError):
    code = "NO_OPPOSITE_REFERENCE"
    status = 409


class RootClassMismatch(ServiceError):
    code = "ROOT_CLASS_MISMATCH"
    status = 409


class RootDeletionForbidden(ServiceError):
    code = "ROOT_DELETION_FORBIDDEN"
    status = 409


class OfflineResource(ServiceError):
    code = "OFFLINE_RESOURCE"
    status = 409


# ---------------------------------------------------------------------------
# 422: the mutation was understood but would corrupt the model

class ValidationRejected(ServiceError):
    code = "VALIDATION_REJECTED"
    status = 422


# ---------------------------------------------------------------------------
# 500: the environment failed underneath us

class IoFailure(ServiceError):
    code = "IO_FAILURE"
    status = 500


# ---------------------------------------------------------------------------
# Document-level failures.  These are raised while parsing or serializing
# files rather than while answering a request; when they do reach a client it
# is as detail text inside another error (offline resources, rejected
# provisioning), so their status is nominal.

class MalformedXml(ServiceError):
    code = "MALFORMED_XML"
    status = 400


class DialectViolation(ServiceError):
    code = "DIALECT_VIOLATION"
    status = 400


class MetamodelDefectError(ServiceError):
    """First structural defect found while installing a metamodel."""

    code = "METAMODEL_DEFECT"
    status = 409


class DanglingPath(ServiceError):
    code = "DANGLING_PATH"
    status = 404


class AbstractInstantiation(ServiceError):
    code = "ABSTRACT_INSTANTIATION"
    status = 409


class NotATree(ServiceError):
    code = "NOT_A_TREE"
    status = 409


class SupertypeCycle(ServiceError):
    code = "SUPERTYPE_CYCLE"
    status = 409


class DuplicateFeature(ServiceError):
    code = "DUPLICATE_FEATURE"
    status = 409


class DirectoryUnreadable(ServiceError):
    code = "DIRECTORY_UNREADABLE"
    status = 500


class WatcherUnavailable(ServiceError):
    code = "WATCHER_UNAVAILABLE"
    status = 500
