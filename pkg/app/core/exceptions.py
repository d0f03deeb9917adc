from typing import Any, Dict, Optional


class RigError(Exception):
    """Base exception for every rig failure that callers are expected to handle"""

    code: str = "rig_error"
    default_detail: str = "Rig operation failed"

    def __init__(self, detail: Optional[str] = None):
        self.detail = detail or self.default_detail
        super().__init__(self.detail)

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.code, "detail": self.detail}


# --- geometry ---

class GeometryError(RigError):
    code = "geometry_error"


class DegenerateTriangle(GeometryError):
    """Baselines do not form a proper triangle (sensors collinear or non-positive)"""
    code = "degenerate_triangle"
    default_detail = "Sensor baselines do not satisfy the strict triangle inequality"


class NoIntersection(GeometryError):
    """The three spheres do not meet within the configured slack"""
    code = "no_intersection"
    default_detail = "Measured radii are inconsistent; spheres do not intersect"


class BehindSensor(GeometryError):
    code = "behind_sensor"
    default_detail = "Target is not in front of the sensor"


class OutOfView(BehindSensor):
    code = "out_of_view"
    default_detail = "Target is outside the sensor's field"


# --- clock sync ---

class ClockSyncError(RigError):
    code = "clock_sync_error"


class NegativeDelay(ClockSyncError):
    code = "negative_delay"
    default_detail = "Computed round-trip delay is negative; sample discarded"


class EmptySamples(ClockSyncError):
    code = "empty_samples"
    default_detail = "No valid sync samples to estimate from"


# --- schedule ---

class ScheduleError(RigError):
    code = "schedule_error"


class UnknownClient(ScheduleError):
    code = "unknown_client"

    def __init__(self, client_id: Any = None):
        super().__init__(f"Client {client_id} is not part of the schedule")


# --- wire format ---

class WireError(RigError):
    code = "wire_error"


class BadMagic(WireError):
    code = "bad_magic"
    default_detail = "Message does not start with the expected magic"


class BadVersion(WireError):
    code = "bad_version"
    default_detail = "Unsupported wire format version"


class Truncated(WireError):
    code = "truncated"
    default_detail = "Message is shorter than its header declares"


class InvariantViolation(WireError):
    code = "invariant_violation"
    default_detail = "Decoded message violates a domain invariant"


class UnknownMessageType(WireError):
    code = "unknown_message_type"
    default_detail = "Unknown message type"


# --- session ---

class SessionError(RigError):
    code = "session_error"


class ClientLost(SessionError):
    code = "client_lost"

    def __init__(self, client_id: Any = None):
        self.client_id = client_id
        super().__init__(f"Lost connection to client {client_id}")

    def to_dict(self) -> Dict[str, Any]:
        body = super().to_dict()
        body["client_id"] = self.client_id
        return body


class DuplicateClientId(SessionError):
    code = "duplicate_client_id"

    def __init__(self, client_id: Any = None):
        self.client_id = client_id
        super().__init__(f"Client id {client_id} is already connected")


class SourceExhausted(SessionError):
    code = "source_exhausted"
    default_detail = "Measurement source has no more samples"


class ReadyTimeout(SessionError):
    code = "ready_timeout"
    default_detail = "Not all clients became ready in time"


class EndpointUnavailable(SessionError):
    code = "endpoint_unavailable"

    def __init__(self, host: str, port: int, reason: str = ""):
        self.host = host
        self.port = port
        detail = f"Cannot reach {host}:{port}"
        if reason:
            detail = f"{detail} ({reason})"
        super().__init__(detail)


# --- analysis ---

class AnalysisError(RigError):
    code = "analysis_error"


class LengthMismatch(AnalysisError):
    code = "length_mismatch"
    default_detail = "Traces are not time-aligned or differ in length"


class InsufficientSamples(AnalysisError):
    code = "insufficient_samples"
    default_detail = "At least two samples are required"


class MissingArtifact(AnalysisError):
    code = "missing_artifact"

    def __init__(self, name: str = "artifact"):
        self.name = name
        super().__init__(f"Missing artifact: {name}")


class CorruptArtifact(AnalysisError):
    code = "corrupt_artifact"

    def __init__(self, name: str = "artifact", reason: str = ""):
        self.name = name
        detail = f"Unreadable artifact: {name}"
        if reason:
            detail = f"{detail} ({reason})"
        super().__init__(detail)


class OutputNotWritable(RigError):
    code = "output_not_writable"

    def __init__(self, path: Any = None, reason: str = ""):
        self.path = path
        detail = f"Cannot write to {path}"
        if reason:
            detail = f"{detail} ({reason})"
        super().__init__(detail)


# --- config ---

class ConfigError(RigError):
    """Invalid or unknown configuration key"""
    code = "config_error"

    def __init__(self, detail: Optional[str] = None, key: Optional[str] = None):
        self.key = key
        super().__init__(detail)

    def to_dict(self) -> Dict[str, Any]:
        body = super().to_dict()
        if self.key:
            body["key"] = self.key
        return body
