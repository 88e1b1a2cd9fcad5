"""Binary (P5) and ASCII (P2) 8-bit PGM reading and writing."""

import numpy as np


class PgmError(ValueError):
    pass


def _tokens(raw, count):
    """First ``count`` header tokens and the offset just past the last one."""
    out = []
    i = 0
    n = len(raw)
    while len(out) < count:
        while i < n and raw[i:i + 1].isspace():
            i += 1
        if i < n and raw[i:i + 1] == b"#":
            while i < n and raw[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not raw[i:i + 1].isspace() and raw[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise PgmError("truncated PGM header")
        out.append(raw[start:i])
    return out, i


def parse_pgm(raw):
    (magic, w, h, maxval), pos = _tokens(raw, 4)
    if magic not in (b"P5", b"P2"):
        raise PgmError(f"not a P5/P2 PGM file (magic {magic!r})")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise PgmError("non-numeric PGM header field") from None
    if w < 1 or h < 1:
        raise PgmError(f"invalid PGM size {w}x{h}")
    if maxval != 255:
        raise PgmError(f"only maxval 255 is supported, got {maxval}")
    if magic == b"P5":
        body = raw[pos + 1:pos + 1 + w * h]
        if len(body) != w * h:
            raise PgmError(f"PGM data truncated: expected {w * h} bytes, got {len(body)}")
        data = np.frombuffer(body, dtype=np.uint8)
    else:
        try:
            data = np.array(raw[pos:].split()[:w * h], dtype=np.int64)
        except ValueError:
            raise PgmError("non-numeric PGM sample") from None
        if data.size != w * h:
            raise PgmError(f"PGM data truncated: expected {w * h} samples, got {data.size}")
        if data.min() < 0 or data.max() > 255:
            raise PgmError("PGM sample out of range")
    return data.reshape(h, w).astype(np.float64)


def load_pgm(path):
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def to_uint8(img):
    """Clamp to [0, 255] and round half away from zero."""
    return np.floor(np.clip(np.asarray(img, dtype=np.float64), 0.0, 255.0) + 0.5).astype(np.uint8)


def encode_pgm(img, ascii=False):
    q = to_uint8(img)
    h, w = q.shape
    if ascii:
        rows = "\n".join(" ".join(str(v) for v in row) for row in q)
        return f"P2\n{w} {h}\n255\n{rows}\n".encode("ascii")
    return f"P5\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def save_pgm(img, path, ascii=False):
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img, ascii))
