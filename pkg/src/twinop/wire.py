"""Binary codec for the DT1<->DT2 datagrams.

Three kinds share a 16-byte little-endian header and a trailing 1-byte XOR
checksum (XOR of every preceding byte):

    header: magic=0x5457 (u16) | version=1 (u8) | kind (u8) | seq (u32) | t_us (u64)

    kind 1, pose (46 B):   x y z o (f32 each) | c (u8) | 12 zero bytes | csum
    kind 2, object (46 B): x y z (f32) | class_id (u16) | confidence (f32)
                           | instance_id (u32) | 7 zero bytes | csum
    kind 3, cloud chunk (<=1500 B):
                           cloud_id (u16) | chunk_index (u16) | chunk_count (u16)
                           | point_count (u8, <=123) | point_count * 3 f32 | csum

The 46-byte size and the 1500-byte chunk ceiling are protocol constants; a
full 123-point chunk is exactly 1500 bytes.  No acks, no retransmission.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .kinematics import Pose

MAGIC = 0x5457
VERSION = 1
KIND_POSE = 1
KIND_OBJECT = 2
KIND_CLOUD = 3

POSE_DATAGRAM_SIZE = 46
OBJECT_DATAGRAM_SIZE = 46
CLOUD_CHUNK_MAX_SIZE = 1500
MAX_CHUNK_POINTS = 123  # (1500 - 16 header - 7 chunk fields - 1 checksum) // 12

_HEADER = struct.Struct("<HBBIQ")
_POSE_BODY = struct.Struct("<ffffB12x")
_OBJECT_BODY = struct.Struct("<fffHfI7x")
_CHUNK_FIELDS = struct.Struct("<HHHB")


class WireError(ValueError):
    """Base class for codec failures."""


class FormatError(WireError):
    """Malformed datagram: bad magic, version, length, or field range."""


class CorruptionError(WireError):
    """Checksum mismatch."""


class UnsupportedKindError(WireError):
    """Header is valid but the kind byte is unknown."""


class ProtocolError(WireError):
    """Chunks of one cloud disagree about shared fields."""


@dataclass(frozen=True)
class PoseMessage:
    seq: int
    t_us: int
    pose: Pose


@dataclass(frozen=True)
class ObjectMessage:
    seq: int
    t_us: int
    class_id: int
    confidence: float
    instance_id: int
    position: tuple[float, float, float]


@dataclass(frozen=True)
class CloudChunkMessage:
    seq: int
    t_us: int
    cloud_id: int
    chunk_index: int
    chunk_count: int
    points: np.ndarray  # (n, 3) float32


def _checksum(payload: bytes) -> int:
    c = 0
    for b in payload:
        c ^= b
    return c


def _seal(body: bytes) -> bytes:
    return body + bytes([_checksum(body)])


def _header(kind: int, seq: int, t_us: int) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, kind, seq & 0xFFFFFFFF, t_us & 0xFFFFFFFFFFFFFFFF)


def encode_pose(pose: Pose, seq: int, t_us: int) -> bytes:
    body = _header(KIND_POSE, seq, t_us) + _POSE_BODY.pack(
        pose.x, pose.y, pose.z, pose.o, 1 if pose.c else 0
    )
    return _seal(body)


def encode_object(
    class_id: int,
    confidence: float,
    instance_id: int,
    position: tuple[float, float, float],
    seq: int,
    t_us: int,
) -> bytes:
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence {confidence} outside [0, 1]")
    body = _header(KIND_OBJECT, seq, t_us) + _OBJECT_BODY.pack(
        position[0], position[1], position[2], class_id, confidence, instance_id
    )
    return _seal(body)


def chunk_cloud(points: np.ndarray, cloud_id: int, seq_start: int, t_us: int) -> list[bytes]:
    """Split a point cloud into <=1500-byte chunk datagrams.

    An empty cloud still produces one zero-point chunk so the receiver learns
    the cloud is empty.  Chunks carry consecutive seq numbers from seq_start.
    """
    pts = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    n = len(pts)
    chunk_count = max(1, -(-n // MAX_CHUNK_POINTS))
    out = []
    for i in range(chunk_count):
        part = pts[i * MAX_CHUNK_POINTS : (i + 1) * MAX_CHUNK_POINTS]
        body = (
            _header(KIND_CLOUD, seq_start + i, t_us)
            + _CHUNK_FIELDS.pack(cloud_id, i, chunk_count, len(part))
            + part.tobytes()
        )
        out.append(_seal(body))
    return out


def reassemble_cloud(chunks: list[CloudChunkMessage]) -> tuple[np.ndarray, bool]:
    """Merge decoded chunks back into one cloud, tolerating missing chunks.

    Returns (points, complete).  Points are ordered by chunk_index; the flag
    is True only when every index of chunk_count arrived.
    """
    if not chunks:
        return np.zeros((0, 3), dtype=np.float32), False
    cloud_id = chunks[0].cloud_id
    count = chunks[0].chunk_count
    by_index: dict[int, CloudChunkMessage] = {}
    for ch in chunks:
        if ch.cloud_id != cloud_id:
            raise ProtocolError(f"mixed cloud ids {cloud_id} and {ch.cloud_id}")
        if ch.chunk_count != count:
            raise ProtocolError(f"conflicting chunk counts {count} and {ch.chunk_count}")
        by_index[ch.chunk_index] = ch
    parts = [by_index[i].points for i in sorted(by_index)]
    points = np.concatenate(parts) if parts else np.zeros((0, 3), dtype=np.float32)
    return points, len(by_index) == count


def decode(data: bytes) -> PoseMessage | ObjectMessage | CloudChunkMessage:
    """Validate and decode one datagram of any kind.

    The checksum is verified before anything else, so any single corrupted
    byte in an otherwise valid datagram raises CorruptionError.
    """
    if len(data) < _HEADER.size + 1:
        raise FormatError(f"datagram too short ({len(data)} bytes)")
    if _checksum(data) != 0:
        raise CorruptionError("checksum mismatch")
    magic, version, kind, seq, t_us = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic 0x{magic:04x}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    body = data[_HEADER.size : -1]
    if kind == KIND_POSE:
        if len(data) != POSE_DATAGRAM_SIZE:
            raise FormatError(f"pose datagram must be 46 bytes, got {len(data)}")
        x, y, z, o, c = _POSE_BODY.unpack(body)
        return PoseMessage(seq, t_us, Pose(x, y, z, o, bool(c)))
    if kind == KIND_OBJECT:
        if len(data) != OBJECT_DATAGRAM_SIZE:
            raise FormatError(f"object datagram must be 46 bytes, got {len(data)}")
        x, y, z, class_id, confidence, instance_id = _OBJECT_BODY.unpack(body)
        if not 0.0 <= confidence <= 1.0:
            raise FormatError(f"confidence {confidence} outside [0, 1]")
        return ObjectMessage(seq, t_us, class_id, confidence, instance_id, (x, y, z))
    if kind == KIND_CLOUD:
        if len(body) < _CHUNK_FIELDS.size:
            raise FormatError("cloud chunk too short")
        cloud_id, index, count, n_points = _CHUNK_FIELDS.unpack_from(body)
        expected = _HEADER.size + _CHUNK_FIELDS.size + 12 * n_points + 1
        if n_points > MAX_CHUNK_POINTS or len(data) != expected:
            raise FormatError(f"cloud chunk length {len(data)} != {expected} for {n_points} points")
        if index >= count:
            raise FormatError(f"chunk_index {index} >= chunk_count {count}")
        pts = np.frombuffer(body, dtype="<f4", offset=_CHUNK_FIELDS.size).reshape(-1, 3)
        return CloudChunkMessage(seq, t_us, cloud_id, index, count, pts.copy())
    raise UnsupportedKindError(f"unknown kind {kind}")
