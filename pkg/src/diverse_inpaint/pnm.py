"""Binary PGM (P5) and PPM (P6) codecs for masks, maps and images."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _read_header(buf: bytes, magic: bytes):
    if not buf.startswith(magic):
        raise ValueError(f"expected {magic!r} file, got {buf[:2]!r}")
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            pos = buf.index(b"\n", pos) + 1
            continue
        start = pos
        while not buf[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(buf[start:pos]))
    width, height, maxval = tokens
    if maxval != 255:
        raise ValueError(f"only 8-bit files are supported (maxval {maxval})")
    return width, height, pos + 1


def write_pgm(path, gray: np.ndarray) -> None:
    g = np.asarray(gray, dtype=np.uint8)
    h, w = g.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + g.tobytes())


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    w, h, off = _read_header(buf, b"P5")
    return np.frombuffer(buf, dtype=np.uint8, count=w * h, offset=off).reshape(h, w).copy()


def write_ppm(path, rgb: np.ndarray) -> None:
    """``rgb`` is ``(H, W, 3)`` uint8."""
    a = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = a.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + a.tobytes())


def read_ppm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    w, h, off = _read_header(buf, b"P6")
    return np.frombuffer(buf, dtype=np.uint8, count=w * h * 3, offset=off).reshape(h, w, 3).copy()


def write_mask(path, mask: np.ndarray) -> None:
    write_pgm(path, np.where(np.asarray(mask) == 1, 255, 0))


def read_mask(path) -> np.ndarray:
    g = read_pgm(path)
    return (g >= 128).astype(np.uint8)


def quantize_map(dmap: np.ndarray) -> np.ndarray:
    """Linear 8-bit quantization of a [0, 1] map."""
    return np.round(np.clip(np.asarray(dmap, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_map(path, dmap: np.ndarray) -> None:
    write_pgm(path, quantize_map(dmap))


def image_to_rgb8(img: np.ndarray) -> np.ndarray:
    """``(3, H, W)`` in [-1, 1] -> ``(H, W, 3)`` uint8."""
    x = (np.clip(np.asarray(img, dtype=np.float64), -1.0, 1.0) + 1.0) * 127.5
    return np.round(x).astype(np.uint8).transpose(1, 2, 0)


def rgb8_to_image(rgb: np.ndarray) -> np.ndarray:
    return np.asarray(rgb, dtype=np.float64).transpose(2, 0, 1) / 127.5 - 1.0


def write_image(path, img: np.ndarray) -> None:
    write_ppm(path, image_to_rgb8(img))


def read_image(path) -> np.ndarray:
    return rgb8_to_image(read_ppm(path))


def image_grid(images, cols: int, pad: int = 2) -> np.ndarray:
    """Tile ``(3, H, W)`` images into one ``(H', W', 3)`` uint8 grid."""
    tiles = [image_to_rgb8(im) for im in images]
    h, w, _ = tiles[0].shape
    rows = -(-len(tiles) // cols)
    grid = np.full((rows * (h + pad) + pad, cols * (w + pad) + pad, 3), 255, dtype=np.uint8)
    for i, t in enumerate(tiles):
        r, c = divmod(i, cols)
        y, x = pad + r * (h + pad), pad + c * (w + pad)
        grid[y:y + h, x:x + w] = t
    return grid
