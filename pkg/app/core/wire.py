"""
Binary wire format shared by the tracking server and sensor clients.

Every message is an 8 byte header followed by the payload:

    magic "TLRG" (4) | version (1) | type (1) | payload_len (uint16 LE)

Integers are little-endian, measurements IEEE-754 float64 little-endian.
A JOINT_FRAME payload is client_id (1) | seq (4) | client_ts (8) followed by
six (depth, theta1, theta2) triples: 157 bytes.
"""

import asyncio
import struct
from typing import Union

from pydantic import ValidationError

from app.core.exceptions import BadMagic, BadVersion, InvariantViolation, Truncated, UnknownMessageType
from app.schemas.frame import (
    JointFrame,
    MessageType,
    SessionControl,
    SessionOp,
    SyncRequest,
    SyncResponse,
    WireMessage,
)
from app.schemas.geometry import RawMeasurement

MAGIC = b"TLRG"
VERSION = 1

HEADER = struct.Struct("<4sBBH")
FRAME_PAYLOAD = struct.Struct("<BIQ18d")
SYNC_REQ_PAYLOAD = struct.Struct("<Q")
SYNC_RESP_PAYLOAD = struct.Struct("<QQQ")
SESSION_PAYLOAD = struct.Struct("<BBQI")

HEADER_SIZE = HEADER.size
FRAME_PAYLOAD_SIZE = FRAME_PAYLOAD.size

_PAYLOAD_SIZES = {
    MessageType.SYNC_REQ: SYNC_REQ_PAYLOAD.size,
    MessageType.SYNC_RESP: SYNC_RESP_PAYLOAD.size,
    MessageType.JOINT_FRAME: FRAME_PAYLOAD.size,
    MessageType.SESSION_CTRL: SESSION_PAYLOAD.size,
}


def encode_message(msg: WireMessage) -> bytes:
    return HEADER.pack(MAGIC, VERSION, int(msg.type), len(msg.payload)) + msg.payload


def parse_header(header: bytes) -> tuple:
    """Validate a header; returns (MessageType, payload_len)"""
    if len(header) < HEADER_SIZE:
        raise Truncated(f"Header needs {HEADER_SIZE} bytes, got {len(header)}")
    magic, version, raw_type, payload_len = HEADER.unpack_from(header)
    if magic != MAGIC:
        raise BadMagic(f"Expected magic {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise BadVersion(f"Unsupported version {version}")
    try:
        msg_type = MessageType(raw_type)
    except ValueError:
        raise UnknownMessageType(f"Unknown message type {raw_type}")
    expected = _PAYLOAD_SIZES[msg_type]
    if payload_len != expected:
        raise InvariantViolation(
            f"{msg_type.name} payload must be {expected} bytes, header says {payload_len}"
        )
    return msg_type, payload_len


def decode_message(data: bytes) -> WireMessage:
    msg_type, payload_len = parse_header(data)
    payload = data[HEADER_SIZE:]
    if len(payload) < payload_len:
        raise Truncated(f"Payload needs {payload_len} bytes, got {len(payload)}")
    if len(payload) > payload_len:
        raise InvariantViolation(f"{len(payload) - payload_len} trailing bytes after payload")
    return WireMessage(type=msg_type, payload=payload)


async def read_message(reader: asyncio.StreamReader) -> WireMessage:
    """Read one length-prefixed message; raises IncompleteReadError on EOF"""
    header = await reader.readexactly(HEADER_SIZE)
    _, payload_len = parse_header(header)
    payload = await reader.readexactly(payload_len)
    return decode_message(header + payload)


# --- joint frames ---

def encode_frame(f: JointFrame) -> bytes:
    values = []
    for m in f.joints:
        values.extend((m.depth, m.theta1, m.theta2))
    payload = FRAME_PAYLOAD.pack(f.client_id, f.seq, f.client_ts, *values)
    return encode_message(WireMessage(type=MessageType.JOINT_FRAME, payload=payload))


def frame_from_message(msg: WireMessage) -> JointFrame:
    if msg.type is not MessageType.JOINT_FRAME:
        raise InvariantViolation(f"Expected JOINT_FRAME, got {msg.type.name}")
    client_id, seq, client_ts, *values = FRAME_PAYLOAD.unpack(msg.payload)
    try:
        joints = [
            RawMeasurement(depth=values[i], theta1=values[i + 1], theta2=values[i + 2])
            for i in range(0, len(values), 3)
        ]
        return JointFrame(client_id=client_id, seq=seq, client_ts=client_ts, joints=joints)
    except ValidationError as e:
        raise InvariantViolation(f"Invalid joint frame: {e.errors()[0]['msg']}")


def decode_frame(b: bytes) -> JointFrame:
    return frame_from_message(decode_message(b))


# --- sync and session control ---

def encode_sync_request(req: SyncRequest) -> bytes:
    return encode_message(WireMessage(type=MessageType.SYNC_REQ, payload=SYNC_REQ_PAYLOAD.pack(req.t1)))


def encode_sync_response(resp: SyncResponse) -> bytes:
    payload = SYNC_RESP_PAYLOAD.pack(resp.t1, resp.t2, resp.t3)
    return encode_message(WireMessage(type=MessageType.SYNC_RESP, payload=payload))


def encode_session(ctrl: SessionControl) -> bytes:
    payload = SESSION_PAYLOAD.pack(int(ctrl.op), ctrl.client_id, ctrl.value, ctrl.count)
    return encode_message(WireMessage(type=MessageType.SESSION_CTRL, payload=payload))


def parse_payload(msg: WireMessage) -> Union[SyncRequest, SyncResponse, JointFrame, SessionControl]:
    """Typed view of a decoded message"""
    if msg.type is MessageType.JOINT_FRAME:
        return frame_from_message(msg)
    if msg.type is MessageType.SYNC_REQ:
        (t1,) = SYNC_REQ_PAYLOAD.unpack(msg.payload)
        return SyncRequest(t1=t1)
    if msg.type is MessageType.SYNC_RESP:
        t1, t2, t3 = SYNC_RESP_PAYLOAD.unpack(msg.payload)
        return SyncResponse(t1=t1, t2=t2, t3=t3)
    op, client_id, value, count = SESSION_PAYLOAD.unpack(msg.payload)
    try:
        return SessionControl(op=SessionOp(op), client_id=client_id, value=value, count=count)
    except ValueError:
        raise InvariantViolation(f"Unknown session op {op}")
