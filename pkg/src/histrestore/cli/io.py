"""File formats: PGM images, text histograms, ``key = value`` configs."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..field import Histogram, Image, LevelGrid

LEVEL_TOL = 1e-9
NORM_TOL = 1e-6


class InputError(ValueError):
    """Malformed or unreadable input; the message names the file and byte offset."""

    def __init__(self, path, message: str, offset: int | None = None):
        where = f"{path}" if offset is None else f"{path} (byte {offset})"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.offset = offset


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(path, f"cannot read file ({exc.strerror})") from exc


class _HeaderScanner:
    def __init__(self, path, raw: bytes):
        self.path, self.raw, self.pos = path, raw, 2
        self.start = 2  # offset of the last integer read

    def skip_space(self):
        raw = self.raw
        while self.pos < len(raw):
            c = raw[self.pos:self.pos + 1]
            if c == b"#":
                while self.pos < len(raw) and raw[self.pos:self.pos + 1] not in (b"\n", b"\r"):
                    self.pos += 1
            elif c.isspace():
                self.pos += 1
            else:
                break

    def integer(self, what: str) -> int:
        self.skip_space()
        start = self.start = self.pos
        while self.pos < len(self.raw) and self.raw[self.pos:self.pos + 1].isdigit():
            self.pos += 1
        if start == self.pos:
            raise InputError(self.path, f"expected {what}", start)
        return int(self.raw[start:self.pos])


def read_pgm(path) -> Image:
    """Read a P2 (ASCII) or P5 (binary) PGM and scale intensities by ``1/maxval``."""
    raw = _read_bytes(path)
    magic = raw[:2]
    if magic not in (b"P2", b"P5"):
        raise InputError(path, f"not a PGM file (magic {magic!r})", 0)
    scan = _HeaderScanner(path, raw)
    width = scan.integer("width")
    height = scan.integer("height")
    maxval = scan.integer("maxval")
    maxval_at = scan.start
    if width < 1 or height < 1:
        raise InputError(path, f"invalid size {width}x{height}", 2)
    if not 0 < maxval < 65536:
        raise InputError(path, f"maxval {maxval} outside 1..65535", maxval_at)
    count = width * height
    if magic == b"P5":
        data_at = scan.pos + 1
        nbytes = 1 if maxval < 256 else 2
        payload = raw[data_at:data_at + count * nbytes]
        if len(payload) < count * nbytes:
            raise InputError(path, f"pixel data truncated: need {count * nbytes} bytes, "
                                   f"found {len(payload)}", data_at + len(payload))
        values = np.frombuffer(payload, dtype=">u2" if nbytes == 2 else np.uint8).astype(np.int64)
        starts = data_at + nbytes * np.arange(count)
    else:
        values = np.empty(count, dtype=np.int64)
        starts = np.empty(count, dtype=np.int64)
        for i in range(count):
            values[i] = scan.integer(f"pixel value {i}")
            starts[i] = scan.start
    over = np.flatnonzero(values > maxval)
    if over.size:
        raise InputError(path, f"pixel {over[0]} exceeds maxval {maxval}", int(starts[over[0]]))
    return Image((values / maxval).reshape(height, width))


def write_pgm(path, image: Image, maxval: int = 65535, binary: bool = True) -> None:
    values = np.rint(image.data * maxval).astype(np.int64)
    header = f"{'P5' if binary else 'P2'}\n{image.width} {image.height}\n{maxval}\n".encode()
    if binary:
        body = values.astype(">u2" if maxval > 255 else np.uint8).tobytes()
    else:
        body = "\n".join(" ".join(str(v) for v in row) for row in values).encode() + b"\n"
    Path(path).write_bytes(header + body)


def read_mask(path, shape=None) -> np.ndarray:
    """Mask image; pixels at or above half intensity are to be inpainted."""
    mask = read_pgm(path).data >= 0.5
    if shape is not None and mask.shape != tuple(shape):
        raise InputError(path, f"mask is {mask.shape[1]}x{mask.shape[0]}, image is {shape[1]}x{shape[0]}")
    return mask


def format_histogram(h: Histogram) -> str:
    lines = [f"k {h.grid.k}"]
    lines += [f"{g:.17g} {p:.17g}" for g, p in zip(h.grid.levels, h.mass)]
    return "\n".join(lines) + "\n"


def write_histogram(path, h: Histogram) -> None:
    Path(path).write_text(format_histogram(h), encoding="utf-8")


def read_histogram(path) -> Histogram:
    raw = _read_bytes(path)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InputError(path, "not valid UTF-8", exc.start) from exc
    offsets, lines, pos = [], [], 0
    for line in text.splitlines(keepends=True):
        if line.strip():
            offsets.append(len(text[:pos].encode()))
            lines.append(line.strip())
        pos += len(line)
    if not lines:
        raise InputError(path, "empty histogram file", 0)
    head = lines[0].split()
    if len(head) != 2 or head[0] != "k" or not head[1].isdigit() or int(head[1]) < 2:
        raise InputError(path, "header must read 'k <int>' with k >= 2", offsets[0])
    grid = LevelGrid(int(head[1]))
    if len(lines) - 1 != grid.k:
        # point at the first surplus line, or at the end of a short file
        at = offsets[grid.k + 1] if len(lines) > grid.k + 1 else len(raw)
        raise InputError(path, f"expected {grid.k} bins, found {len(lines) - 1}", at)
    mass = np.empty(grid.k)
    for i, (line, at) in enumerate(zip(lines[1:], offsets[1:])):
        parts = line.split()
        try:
            level, p = (float(x) for x in parts)
        except ValueError:
            raise InputError(path, f"bin {i + 1}: expected '<level> <mass>'", at) from None
        if abs(level - grid.levels[i]) > LEVEL_TOL:
            raise InputError(path, f"bin {i + 1}: level {level} does not match grid level {grid.levels[i]:.17g}", at)
        if not np.isfinite(p) or p < 0:
            raise InputError(path, f"bin {i + 1}: mass must be finite and nonnegative", at)
        mass[i] = p
    total = mass.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise InputError(path, f"masses sum to {total:.12g}, expected 1")
    return Histogram(grid, mass / total)


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    raw = _read_bytes(path)
    out = {}
    offset = 0
    for line in raw.decode("utf-8", errors="replace").splitlines(keepends=True):
        body = line.split("#", 1)[0].strip()
        if body:
            if "=" not in body:
                raise InputError(path, f"expected 'key = value', got {body!r}", offset)
            key, value = (s.strip() for s in body.split("=", 1))
            out[key.replace("-", "_")] = value
        offset += len(line.encode())
    return out


def write_trace(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "relaxed_energy", "residual"])
        for it, energy, residual in trace:
            writer.writerow([it, repr(float(energy)), repr(float(residual))])


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
