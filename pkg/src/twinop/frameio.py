"""Frame files for the standalone discrepancy CLI.

RGB rasters are binary PPM (P6, maxval 255); depth rasters are binary
16-bit PGM (P5, maxval 65535, big-endian) holding millimeters, 0 = invalid.
A "frame" on disk is a pair sharing one path prefix: <prefix>.ppm +
<prefix>.pgm.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .scene import RgbdFrame


class FrameFileError(ValueError):
    """Unreadable or malformed PPM/PGM content."""


def _read_header(data: bytes, magic: bytes, path) -> tuple[int, int, int, int]:
    """Parse a PNM header; returns (width, height, maxval, data offset)."""
    if not data.startswith(magic):
        raise FrameFileError(f"{path}: expected {magic.decode()} file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FrameFileError(f"{path}: truncated header")
        fields.append(int(data[start:pos]))
    return fields[0], fields[1], fields[2], pos + 1


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    w, h, maxval, off = _read_header(data, b"P6", path)
    if maxval != 255:
        raise FrameFileError(f"{path}: only maxval 255 supported")
    body = data[off : off + w * h * 3]
    if len(body) != w * h * 3:
        raise FrameFileError(f"{path}: pixel data truncated")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()


def write_pgm16(path, depth_m: np.ndarray) -> None:
    """Depth in meters -> 16-bit millimeter PGM; invalid (0) stays 0."""
    mm = np.clip(np.rint(np.asarray(depth_m, dtype=float) * 1000.0), 0, 65535).astype(">u2")
    h, w = mm.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode())
        fh.write(mm.tobytes())


def read_pgm16(path) -> np.ndarray:
    data = Path(path).read_bytes()
    w, h, maxval, off = _read_header(data, b"P5", path)
    if maxval != 65535:
        raise FrameFileError(f"{path}: expected 16-bit PGM (maxval 65535)")
    body = data[off : off + w * h * 2]
    if len(body) != w * h * 2:
        raise FrameFileError(f"{path}: pixel data truncated")
    mm = np.frombuffer(body, dtype=">u2").reshape(h, w)
    return mm.astype(float) / 1000.0


def write_frame(prefix, frame: RgbdFrame) -> None:
    """Write <prefix>.ppm and <prefix>.pgm for one RGB-D frame."""
    prefix = Path(prefix)
    write_ppm(prefix.with_suffix(".ppm"), frame.rgb)
    write_pgm16(prefix.with_suffix(".pgm"), frame.depth)


def read_frame(prefix, depth_range=(0.16, 2.0), timestamp: float = 0.0) -> RgbdFrame:
    """Read the <prefix>.ppm + <prefix>.pgm pair back into a frame."""
    prefix = Path(prefix)
    rgb = read_ppm(prefix.with_suffix(".ppm"))
    depth = read_pgm16(prefix.with_suffix(".pgm"))
    if rgb.shape[:2] != depth.shape:
        raise FrameFileError(f"{prefix}: rgb and depth dimensions differ")
    return RgbdFrame(rgb, depth, timestamp, depth_range)


def write_xyz(path_or_stream, points: np.ndarray) -> None:
    """Plain-text cloud: one 'x y z' triple per line."""
    lines = "".join(
        f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n" for p in np.asarray(points, dtype=float)
    )
    if hasattr(path_or_stream, "write"):
        path_or_stream.write(lines)
    else:
        Path(path_or_stream).write_text(lines)
