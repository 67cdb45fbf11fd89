"""Binary PGM/PPM raster I/O and small drawing helpers.

Images are numpy arrays. Grayscale: (H, W) uint8 or uint16. Color: (H, W, 3)
uint8. Row 0 is the TOP image row; grid-aligned renderers are responsible for
flipping the y axis (world +y up, image row down).
"""

from __future__ import annotations

import numpy as np


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # skips whitespace and '#' comment lines between header tokens
    while pos < len(data):
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("truncated PNM header")
    return data[start:pos], pos


def write_pgm(path, image: np.ndarray) -> None:
    """Write a P5 PGM. uint8 -> maxval 255, uint16 -> maxval 65535 (big-endian)."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    if image.dtype == np.uint8:
        maxval, payload = 255, image.tobytes()
    elif image.dtype == np.uint16:
        maxval, payload = 65535, image.astype(">u2").tobytes()
    else:
        raise ValueError(f"unsupported PGM dtype {image.dtype}")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        f.write(payload)


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    magic, pos = _read_token(data, 0)
    if magic != b"P5":
        raise ValueError(f"not a binary PGM (magic {magic!r})")
    w, pos = _read_token(data, pos)
    h, pos = _read_token(data, pos)
    maxval, pos = _read_token(data, pos)
    w, h, maxval = int(w), int(h), int(maxval)
    pos += 1  # single whitespace after maxval
    if maxval == 255:
        arr = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    elif maxval == 65535:
        arr = np.frombuffer(data, dtype=">u2", count=w * h, offset=pos).astype(np.uint16)
    else:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    return arr.reshape(h, w).copy()


def write_ppm(path, image: np.ndarray) -> None:
    """Write a P6 binary PPM from an (H, W, 3) uint8 array."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError("PPM image must be (H, W, 3) uint8")
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    magic, pos = _read_token(data, 0)
    if magic != b"P6":
        raise ValueError(f"not a binary PPM (magic {magic!r})")
    w, pos = _read_token(data, pos)
    h, pos = _read_token(data, pos)
    maxval, pos = _read_token(data, pos)
    w, h = int(w), int(h)
    if int(maxval) != 255:
        raise ValueError("only maxval 255 PPM supported")
    pos += 1
    arr = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return arr.reshape(h, w, 3).copy()


# 3x5 bitmap glyphs, row-major top to bottom. Enough for marker labels.
GLYPHS = {
    "0": ["111", "101", "101", "101", "111"],
    "1": ["010", "110", "010", "010", "111"],
    "2": ["111", "001", "111", "100", "111"],
    "3": ["111", "001", "111", "001", "111"],
    "4": ["101", "101", "111", "001", "001"],
    "5": ["111", "100", "111", "001", "111"],
    "6": ["111", "100", "111", "101", "111"],
    "7": ["111", "001", "010", "010", "010"],
    "8": ["111", "101", "111", "101", "111"],
    "9": ["111", "101", "111", "001", "111"],
    "A": ["010", "101", "111", "101", "101"],
    "-": ["000", "000", "111", "000", "000"],
}


def draw_glyph(image: np.ndarray, row: int, col: int, ch: str, color) -> None:
    """Stamp one 3x5 glyph with its top-left pixel at (row, col); clips at edges."""
    pattern = GLYPHS[ch]
    h, w = image.shape[:2]
    for dr, line in enumerate(pattern):
        for dc, bit in enumerate(line):
            if bit == "1":
                r, c = row + dr, col + dc
                if 0 <= r < h and 0 <= c < w:
                    image[r, c] = color


def draw_text(image: np.ndarray, row: int, col: int, text: str, color) -> None:
    for i, ch in enumerate(text):
        draw_glyph(image, row, col + 4 * i, ch, color)


def draw_line(image: np.ndarray, r0: int, c0: int, r1: int, c1: int, color) -> None:
    """Bresenham line; endpoints included, clipped to the image."""
    h, w = image.shape[:2]
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r0 < r1 else -1
    sc = 1 if c0 < c1 else -1
    err = dr - dc
    r, c = r0, c0
    while True:
        if 0 <= r < h and 0 <= c < w:
            image[r, c] = color
        if r == r1 and c == c1:
            break
        e2 = 2 * err
        if e2 > -dc:
            err -= dc
            r += sr
        if e2 < dr:
            err += dr
            c += sc


def draw_disc(image: np.ndarray, row: int, col: int, radius: int, color) -> None:
    h, w = image.shape[:2]
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            if dr * dr + dc * dc <= radius * radius:
                r, c = row + dr, col + dc
                if 0 <= r < h and 0 <= c < w:
                    image[r, c] = color
