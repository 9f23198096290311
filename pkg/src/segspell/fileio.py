"""File formats: binary float matrices, PNG and PPM images, atomic writes.

Matrix format (.fmat): little-endian header of 4 magic bytes ``FMAT``,
uint32 row count, uint32 column count, followed by the row-major float32
payload.  An optional CSV export mirrors the same matrix.

The PNG codec covers exactly what this package emits and consumes:
8-bit grayscale and 8-bit RGB, non-interlaced, any filter on read,
filter 0 on write.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib

import numpy as np

MATRIX_MAGIC = b"FMAT"


def atomic_write_bytes(path, payload):
    """Write via temp file + rename so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_matrix(path, matrix):
    m = np.asarray(matrix, dtype=np.float32)
    if m.ndim != 2:
        raise ValueError("matrix must be 2-D, got shape %s" % (m.shape,))
    header = MATRIX_MAGIC + struct.pack("<II", m.shape[0], m.shape[1])
    atomic_write_bytes(path, header + m.astype("<f4").tobytes(order="C"))


def read_matrix(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MATRIX_MAGIC:
        raise ValueError("%s: bad magic, not a matrix file" % path)
    rows, cols = struct.unpack("<II", raw[4:12])
    data = np.frombuffer(raw[12:], dtype="<f4")
    if data.size != rows * cols:
        raise ValueError("%s: truncated payload" % path)
    return data.reshape(rows, cols).astype(np.float64)


def write_matrix_csv(path, matrix):
    m = np.asarray(matrix)
    lines = [",".join(repr(float(v)) for v in row) for row in m]
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# PNG

def _png_chunk(tag, payload):
    body = tag + payload
    return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))


def write_png(path, image):
    """Write uint8 image: (H, W) grayscale or (H, W, 3) RGB."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        raise ValueError("PNG writer expects uint8 data")
    if arr.ndim == 2:
        color_type, channels = 0, 1
    elif arr.ndim == 3 and arr.shape[2] == 3:
        color_type, channels = 2, 3
    else:
        raise ValueError("unsupported image shape %s" % (arr.shape,))
    h, w = arr.shape[:2]
    flat = arr.reshape(h, w * channels)
    scanlines = b"".join(b"\x00" + flat[i].tobytes() for i in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    payload = (b"\x89PNG\r\n\x1a\n"
               + _png_chunk(b"IHDR", ihdr)
               + _png_chunk(b"IDAT", zlib.compress(scanlines, 6))
               + _png_chunk(b"IEND", b""))
    atomic_write_bytes(path, payload)


def _unfilter(data, h, w, channels):
    stride = w * channels
    bpp = channels
    out = np.zeros((h, stride), dtype=np.uint8)
    pos = 0
    prev = np.zeros(stride, dtype=np.uint8)
    for row in range(h):
        ftype = data[pos]
        pos += 1
        line = np.frombuffer(data[pos:pos + stride], dtype=np.uint8).astype(np.int32)
        pos += stride
        if ftype == 0:
            cur = line
        elif ftype == 1:
            cur = line.copy()
            for i in range(bpp, stride):
                cur[i] = (cur[i] + cur[i - bpp]) & 0xFF
        elif ftype == 2:
            cur = (line + prev) & 0xFF
        elif ftype == 3:
            cur = line.copy()
            for i in range(stride):
                left = cur[i - bpp] if i >= bpp else 0
                cur[i] = (cur[i] + ((left + int(prev[i])) >> 1)) & 0xFF
        elif ftype == 4:
            cur = line.copy()
            for i in range(stride):
                a = cur[i - bpp] if i >= bpp else 0
                b = int(prev[i])
                c = int(prev[i - bpp]) if i >= bpp else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
                cur[i] = (cur[i] + pred) & 0xFF
        else:
            raise ValueError("unsupported PNG filter type %d" % ftype)
        out[row] = cur.astype(np.uint8)
        prev = out[row]
    return out


def read_png(path):
    """Read an 8-bit grayscale or RGB PNG into a uint8 array."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError("%s: not a PNG file" % path)
    pos = 8
    idat = b""
    meta = None
    while pos < len(raw):
        (length,) = struct.unpack(">I", raw[pos:pos + 4])
        tag = raw[pos + 4:pos + 8]
        payload = raw[pos + 8:pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            w, h, depth, color_type, comp, filt, interlace = struct.unpack(">IIBBBBB", payload)
            if depth != 8 or color_type not in (0, 2) or interlace != 0:
                raise ValueError("%s: only 8-bit gray/RGB non-interlaced PNG supported" % path)
            meta = (h, w, 1 if color_type == 0 else 3)
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
    if meta is None:
        raise ValueError("%s: missing IHDR" % path)
    h, w, channels = meta
    data = zlib.decompress(idat)
    flat = _unfilter(data, h, w, channels)
    if channels == 1:
        return flat.reshape(h, w)
    return flat.reshape(h, w, channels)


# ---------------------------------------------------------------------------
# PPM / PGM (binary variants)

def write_ppm(path, image):
    arr = np.asarray(image, dtype=np.uint8)
    if arr.ndim == 2:
        header = b"P5 %d %d 255\n" % (arr.shape[1], arr.shape[0])
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = b"P6 %d %d 255\n" % (arr.shape[1], arr.shape[0])
    else:
        raise ValueError("unsupported image shape %s" % (arr.shape,))
    atomic_write_bytes(path, header + arr.tobytes())


def read_ppm(path):
    with open(path, "rb") as f:
        raw = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while raw[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError("%s: only maxval 255 supported" % path)
    pos += 1
    data = np.frombuffer(raw[pos:], dtype=np.uint8)
    if magic == b"P5":
        return data[:h * w].reshape(h, w)
    if magic == b"P6":
        return data[:h * w * 3].reshape(h, w, 3)
    raise ValueError("%s: unsupported PNM magic %r" % (path, magic))


def read_image(path):
    """Dispatch on extension: .png or .ppm/.pgm."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        return read_png(path)
    if ext in (".ppm", ".pgm", ".pnm"):
        return read_ppm(path)
    raise ValueError("unsupported image format: %s" % path)


def sha256_file(path):
    import hashlib
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
