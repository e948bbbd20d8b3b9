"""Shared exception hierarchy for the gateway stack.

Every error carries a short machine-readable ``code`` so the portal service
can map it onto the HTTP error envelope without string matching.
"""

from __future__ import annotations


class SciflowError(Exception):
    """Base class; ``code`` identifies the error kind on the wire."""

    code = "internal"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def __str__(self):
        if self.details:
            extras = ", ".join(f"{k}={v!r}" for k, v in sorted(self.details.items()))
            return f"{self.message} ({extras})"
        return self.message


# --- workflow model ---------------------------------------------------------

class GraphInvalid(SciflowError):
    code = "graph_invalid"


class UnknownNode(SciflowError):
    code = "unknown_node"


class UnconfiguredNode(SciflowError):
    code = "unconfigured_node"


class SweepModeConflict(SciflowError):
    code = "sweep_mode_conflict"


class FrozenFieldWrite(SciflowError):
    code = "frozen_field_write"


class UnknownField(SciflowError):
    code = "unknown_field"


class MissingRequiredFill(SciflowError):
    code = "missing_required_fill"


class CorruptArchive(SciflowError):
    code = "corrupt_archive"


class UnsupportedVersion(SciflowError):
    code = "unsupported_version"


class ManifestMissing(SciflowError):
    code = "manifest_missing"


# --- sweep planner ----------------------------------------------------------

class DotCardinalityMismatch(SciflowError):
    code = "dot_cardinality_mismatch"


class MissingManifest(SciflowError):
    code = "missing_manifest"


class ZeroCount(SciflowError):
    code = "zero_count"


class CoordOutOfRange(SciflowError):
    code = "coord_out_of_range"


class NotACollectorPort(SciflowError):
    code = "not_a_collector_port"


# --- engine -----------------------------------------------------------------

class IncompleteDefinition(SciflowError):
    code = "incomplete_definition"


class UnresolvableBackendSelector(SciflowError):
    code = "unresolvable_backend_selector"


class UnknownInstance(SciflowError):
    code = "unknown_instance"


class UnknownJob(SciflowError):
    code = "unknown_job"


class AlreadyTerminal(SciflowError):
    code = "already_terminal"


class NotInErrorState(SciflowError):
    code = "not_in_error_state"


class AttemptCapExceeded(SciflowError):
    code = "attempt_cap_exceeded"


class IllegalTransition(SciflowError):
    code = "illegal_transition"


class SweepDepthExceeded(SciflowError):
    code = "sweep_depth_exceeded"


class MissingDeclaredOutput(SciflowError):
    code = "missing_declared_output"


# --- bridge -----------------------------------------------------------------

class DuplicateId(SciflowError):
    code = "duplicate_id"


class InvalidCapacity(SciflowError):
    code = "invalid_capacity"


class NoMatchingBackend(SciflowError):
    code = "no_matching_backend"


class BackendDown(SciflowError):
    code = "backend_down"


class QueueFull(SciflowError):
    code = "queue_full"


class UnknownHandle(SciflowError):
    code = "unknown_handle"


class UnknownWorker(SciflowError):
    code = "unknown_worker"


# --- repository -------------------------------------------------------------

class NotFound(SciflowError):
    code = "not_found"


class Forbidden(SciflowError):
    code = "forbidden"


class PublishedImmutable(SciflowError):
    code = "published_immutable"


class SequenceGap(SciflowError):
    code = "sequence_gap"


class IntegrityError(SciflowError):
    code = "integrity_error"


# --- portal service ---------------------------------------------------------

class InvalidCredentials(SciflowError):
    code = "invalid_credentials"


class AccountDisabled(SciflowError):
    code = "account_disabled"


class TokenExpired(SciflowError):
    code = "token_expired"
