import asyncio
import math
import struct

import numpy as np
import pytest

from app.core.exceptions import BadMagic, BadVersion, InvariantViolation, Truncated, UnknownMessageType
from app.core.wire import (
    FRAME_PAYLOAD_SIZE,
    HEADER_SIZE,
    decode_frame,
    decode_message,
    encode_frame,
    encode_session,
    encode_sync_request,
    encode_sync_response,
    parse_payload,
    read_message,
)
from app.schemas.frame import JointFrame, MessageType, SessionControl, SessionOp, SyncRequest, SyncResponse
from app.schemas.geometry import RawMeasurement
from tests.conftest import make_frame


def _random_frame(rng) -> JointFrame:
    joints = [
        RawMeasurement(
            depth=float(rng.uniform(1e-3, 1e5)),
            theta1=float(rng.uniform(-1.57, 1.57)),
            theta2=float(rng.uniform(-1.57, 1.57)),
        )
        for _ in range(6)
    ]
    return JointFrame(
        client_id=int(rng.integers(1, 4)),
        seq=int(rng.integers(0, 2 ** 32)),
        client_ts=int(rng.integers(0, 2 ** 63)),
        joints=joints,
    )


def test_frame_size():
    assert FRAME_PAYLOAD_SIZE == 157
    assert len(encode_frame(make_frame())) == HEADER_SIZE + 157


def test_header_layout():
    data = encode_frame(make_frame())
    assert data[:4] == b"TLRG"
    assert data[4] == 1
    assert data[5] == MessageType.JOINT_FRAME
    assert struct.unpack_from("<H", data, 6)[0] == 157


def test_depth_offsets_hold_ieee_doubles():
    frame = JointFrame(
        client_id=2,
        seq=7,
        client_ts=123,
        joints=[RawMeasurement(depth=1000.0, theta1=0.0, theta2=0.0)] * 6,
    )
    data = encode_frame(frame)
    expected = struct.pack("<d", 1000.0)
    for joint in range(6):
        offset = HEADER_SIZE + 13 + 24 * joint
        assert data[offset:offset + 8] == expected
    assert data[HEADER_SIZE] == 2
    assert struct.unpack_from("<I", data, HEADER_SIZE + 1)[0] == 7
    assert struct.unpack_from("<Q", data, HEADER_SIZE + 5)[0] == 123


def test_fuzzed_frames_round_trip():
    rng = np.random.default_rng(42)
    for _ in range(5000):
        frame = _random_frame(rng)
        assert decode_frame(encode_frame(frame)) == frame


def test_extreme_field_values_round_trip():
    frame = make_frame(client_id=3, seq=2 ** 32 - 1, client_ts=2 ** 64 - 1, depth=5e-324)
    assert decode_frame(encode_frame(frame)) == frame


def test_bad_magic():
    data = bytearray(encode_frame(make_frame()))
    data[0:4] = b"XXXX"
    with pytest.raises(BadMagic):
        decode_frame(bytes(data))


def test_bad_version():
    data = bytearray(encode_frame(make_frame()))
    data[4] = 2
    with pytest.raises(BadVersion):
        decode_frame(bytes(data))


def test_unknown_type():
    data = bytearray(encode_frame(make_frame()))
    data[5] = 9
    with pytest.raises(UnknownMessageType):
        decode_frame(bytes(data))


@pytest.mark.parametrize("cut", [0, 5, 10, HEADER_SIZE + 100])
def test_truncated(cut):
    with pytest.raises(Truncated):
        decode_frame(encode_frame(make_frame())[:cut])


def test_trailing_bytes():
    with pytest.raises(InvariantViolation):
        decode_frame(encode_frame(make_frame()) + b"\x00")


def test_declared_length_must_match_type():
    data = bytearray(encode_frame(make_frame()))
    struct.pack_into("<H", data, 6, 156)
    with pytest.raises(InvariantViolation):
        decode_frame(bytes(data))


@pytest.mark.parametrize("depth", [-1.0, 0.0, math.nan])
def test_invalid_depth(depth):
    data = bytearray(encode_frame(make_frame()))
    struct.pack_into("<d", data, HEADER_SIZE + 13, depth)
    with pytest.raises(InvariantViolation):
        decode_frame(bytes(data))


def test_angle_out_of_range():
    data = bytearray(encode_frame(make_frame()))
    struct.pack_into("<d", data, HEADER_SIZE + 13 + 8, 2.0)
    with pytest.raises(InvariantViolation):
        decode_frame(bytes(data))


def test_client_id_out_of_range():
    data = bytearray(encode_frame(make_frame()))
    data[HEADER_SIZE] = 4
    with pytest.raises(InvariantViolation):
        decode_frame(bytes(data))


def test_frame_decoder_rejects_other_types():
    with pytest.raises(InvariantViolation):
        decode_frame(encode_sync_request(SyncRequest(t1=5)))


def test_control_messages():
    assert parse_payload(decode_message(encode_sync_request(SyncRequest(t1=11)))) == SyncRequest(t1=11)
    resp = SyncResponse(t1=1, t2=2, t3=3)
    assert parse_payload(decode_message(encode_sync_response(resp))) == resp
    start = SessionControl(op=SessionOp.START, value=1_200_000, count=1000)
    assert parse_payload(decode_message(encode_session(start))) == start


def test_unknown_session_op():
    data = bytearray(encode_session(SessionControl(op=SessionOp.HELLO, client_id=1)))
    data[HEADER_SIZE] = 42
    with pytest.raises(InvariantViolation):
        parse_payload(decode_message(bytes(data)))


async def test_read_message_from_stream():
    reader = asyncio.StreamReader()
    first = encode_frame(make_frame(seq=1))
    second = encode_session(SessionControl(op=SessionOp.BYE, client_id=1))
    reader.feed_data(first + second)
    reader.feed_eof()
    assert parse_payload(await read_message(reader)) == make_frame(seq=1)
    assert parse_payload(await read_message(reader)).op is SessionOp.BYE
    with pytest.raises(asyncio.IncompleteReadError):
        await read_message(reader)


async def test_read_message_rejects_garbage():
    reader = asyncio.StreamReader()
    reader.feed_data(b"GARBAGE!" + bytes(16))
    reader.feed_eof()
    with pytest.raises(BadMagic):
        await read_message(reader)
