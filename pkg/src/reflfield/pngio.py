"""Minimal 8-bit PNG reader/writer.

Supports greyscale, RGB, and RGBA images at bit depth 8, no interlacing.
The encoder emits filter type 0 on every scanline; the decoder handles all
five standard scanline filters so externally produced files load too.
"""

import struct
import zlib

import numpy as np

_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_CHANNELS_TO_COLOR_TYPE = {1: 0, 3: 2, 4: 6}
_COLOR_TYPE_TO_CHANNELS = {0: 1, 2: 3, 4: 2, 6: 4}


class PngError(ValueError):
    """Raised for malformed or unsupported PNG data."""


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def encode(image: np.ndarray) -> bytes:
    """Encode a (H, W), (H, W, 3), or (H, W, 4) uint8 array as PNG bytes."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise PngError(f"only uint8 images are supported, got dtype {image.dtype}")
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3 or image.shape[2] not in _CHANNELS_TO_COLOR_TYPE:
        raise PngError(f"unsupported image shape {image.shape}")
    height, width, channels = image.shape
    if height == 0 or width == 0:
        raise PngError("empty image")

    header = struct.pack(
        ">IIBBBBB", width, height, 8, _CHANNELS_TO_COLOR_TYPE[channels], 0, 0, 0
    )
    # Filter byte 0 in front of every scanline.
    raw = np.empty((height, 1 + width * channels), dtype=np.uint8)
    raw[:, 0] = 0
    raw[:, 1:] = image.reshape(height, width * channels)
    return (
        _SIGNATURE
        + _chunk(b"IHDR", header)
        + _chunk(b"IDAT", zlib.compress(raw.tobytes(), 6))
        + _chunk(b"IEND", b"")
    )


def write(path, image: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(image))


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def _unfilter(raw: bytes, height: int, width: int, channels: int) -> np.ndarray:
    stride = width * channels
    if len(raw) != height * (stride + 1):
        raise PngError(
            f"decompressed size {len(raw)} does not match {height}x{width}x{channels}"
        )
    rows = np.frombuffer(raw, dtype=np.uint8).reshape(height, stride + 1)
    out = np.zeros((height, stride), dtype=np.uint8)
    bpp = channels
    for y in range(height):
        ftype = int(rows[y, 0])
        line = rows[y, 1:].copy()
        prev = out[y - 1] if y > 0 else np.zeros(stride, dtype=np.uint8)
        if ftype == 0:
            out[y] = line
        elif ftype == 1:
            for x in range(stride):
                left = out[y, x - bpp] if x >= bpp else 0
                out[y, x] = (int(line[x]) + int(left)) & 0xFF
        elif ftype == 2:
            out[y] = line + prev
        elif ftype == 3:
            for x in range(stride):
                left = int(out[y, x - bpp]) if x >= bpp else 0
                out[y, x] = (int(line[x]) + (left + int(prev[x])) // 2) & 0xFF
        elif ftype == 4:
            for x in range(stride):
                left = int(out[y, x - bpp]) if x >= bpp else 0
                diag = int(prev[x - bpp]) if x >= bpp else 0
                out[y, x] = (int(line[x]) + _paeth(left, int(prev[x]), diag)) & 0xFF
        else:
            raise PngError(f"unknown scanline filter {ftype} on row {y}")
    return out.reshape(height, width, channels)


def decode(data: bytes) -> np.ndarray:
    """Decode PNG bytes to a uint8 array: (H, W) for greyscale, else (H, W, C)."""
    if data[:8] != _SIGNATURE:
        raise PngError("not a PNG stream (bad signature)")
    pos = 8
    header = None
    idat = bytearray()
    while pos + 8 <= len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        payload = data[pos + 8 : pos + 8 + length]
        if len(payload) != length:
            raise PngError(f"truncated {tag!r} chunk")
        (crc,) = struct.unpack(">I", data[pos + 8 + length : pos + 12 + length])
        if crc != (zlib.crc32(tag + payload) & 0xFFFFFFFF):
            raise PngError(f"CRC mismatch in {tag!r} chunk")
        pos += 12 + length
        if tag == b"IHDR":
            header = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            break
    if header is None:
        raise PngError("missing IHDR chunk")
    width, height, depth, color_type, compression, filt, interlace = header
    if depth != 8:
        raise PngError(f"unsupported bit depth {depth}")
    if color_type not in _COLOR_TYPE_TO_CHANNELS:
        raise PngError(f"unsupported color type {color_type}")
    if compression != 0 or filt != 0:
        raise PngError("unsupported compression/filter method")
    if interlace != 0:
        raise PngError("interlaced PNGs are not supported")
    if not idat:
        raise PngError("missing IDAT data")
    raw = zlib.decompress(bytes(idat))
    channels = _COLOR_TYPE_TO_CHANNELS[color_type]
    image = _unfilter(raw, height, width, channels)
    if channels == 1:
        return image[:, :, 0]
    return image


def read(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return decode(data)
    except PngError as exc:
        raise PngError(f"{path}: {exc}") from exc
