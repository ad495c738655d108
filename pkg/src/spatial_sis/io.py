"""CSV, JSON sidecar and binary greyscale (PGM) output."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import Grid, check_field


def _coord_names(grid: Grid):
    return ["x"] if grid.dim == 1 else ["x", "y"]


def write_fields_csv(path, grid: Grid, columns: dict) -> None:
    """Rows ``x[,y],<columns...>`` with 17 significant digits."""
    arrays = [check_field(grid, v) for v in columns.values()]
    header = ",".join(_coord_names(grid) + list(columns))
    lines = [header]
    data = np.column_stack([grid.node_coords] + arrays)
    lines += [",".join("%.17g" % v for v in row) for row in data]
    Path(path).write_text("\n".join(lines) + "\n")


def write_state_csv(path, grid: Grid, S, I) -> None:
    write_fields_csv(path, grid, {"S": S, "I": I})


def read_fields_csv(path) -> tuple[list, np.ndarray]:
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    return header, data


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    return value


def write_json(path, record: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n")


@dataclass
class HeatmapImage:
    width: int
    height: int
    pixels: bytes
    min_value: float
    max_value: float

    def to_bytes(self) -> bytes:
        return b"P5\n" + f"{self.width} {self.height}\n255\n".encode("ascii") + self.pixels


def heatmap(f, grid: Grid) -> HeatmapImage:
    """Map ``f`` linearly onto 0..255 over the grid lattice.

    ``round(255 (v - min) / (max - min))`` rounds half up; a flat field maps
    to 128; lattice points outside the domain are 0. The first image row
    is the largest ``y``.
    """
    f = check_field(grid, f)
    shape = grid.lattice_shape
    width = shape[0]
    height = shape[1] if grid.dim > 1 else 1
    lo, hi = float(np.min(f)), float(np.max(f))
    if hi > lo:
        values = np.floor(255.0 * (f - lo) / (hi - lo) + 0.5)
        values = np.clip(values, 0, 255).astype(np.uint8)
    else:
        values = np.full(grid.n, 128, dtype=np.uint8)
    image = np.zeros((height, width), dtype=np.uint8)
    ix = grid.lattice_index[:, 0]
    iy = grid.lattice_index[:, 1] if grid.dim > 1 else np.zeros(grid.n, dtype=int)
    image[height - 1 - iy, ix] = values
    return HeatmapImage(width, height, image.tobytes(), lo, hi)


def emit_heatmap(f, grid: Grid, path) -> HeatmapImage:
    img = heatmap(f, grid)
    Path(path).write_bytes(img.to_bytes())
    return img


def read_pgm(path) -> tuple[int, int, np.ndarray]:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5\n"):
        raise ValueError("not a binary PGM file")
    rest = data[3:]
    dims, rest = rest.split(b"\n", 1)
    maxval, pixels = rest.split(b"\n", 1)
    width, height = (int(v) for v in dims.split())
    if int(maxval) != 255:
        raise ValueError("unsupported PGM depth")
    return width, height, np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)
