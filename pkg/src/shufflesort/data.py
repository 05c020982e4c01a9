"""Input data: headerless CSV feature matrices, seeded random colors, PNG grid rendering."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .objective import GridShape


class CSVFormatError(ValueError):
    pass


def load_csv(path) -> np.ndarray:
    """Read headerless comma-separated decimals; every row must have the same width."""
    rows: list[list[float]] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise CSVFormatError(f"{path}: line {lineno}: expected {width} columns, got {len(cells)}")
            try:
                values = [float(c) for c in cells]
            except ValueError:
                col = next(i for i, c in enumerate(cells, start=1) if not _is_float(c))
                raise CSVFormatError(f"{path}: line {lineno}, column {col}: "
                                     f"not a number: {cells[col - 1]!r}") from None
            if not all(np.isfinite(values)):
                raise CSVFormatError(f"{path}: line {lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise CSVFormatError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def write_csv(path, m) -> None:
    """Write rows with ``repr`` precision so ``load_csv`` round-trips exactly."""
    m = np.asarray(m)
    if m.ndim == 1:
        m = m[:, None]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in m:
            fh.write(",".join(repr(v.item()) for v in row) + "\n")


def generate_colors(n: int, seed=0) -> np.ndarray:
    """``n`` RGB colors with i.i.d. uniform [0, 1] channels."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.random.default_rng(seed).random((n, 3))


def to_bytes(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] to 0..255 with round-half-up (0.5 -> 128)."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(255.0 * v + 0.5).astype(np.uint8)


def render_grid_png(x, g: GridShape, path, cell_px: int = 16, project: bool = False) -> Path:
    """Paint row ``k`` of ``x`` into cell ``k`` (row-major) of a ``g`` grid and save as PNG."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != g.n:
        raise ValueError(f"grid size {g.n} != {x.shape[0]} rows")
    if x.shape[1] != 3:
        if project and x.shape[1] > 3:
            x = x[:, :3]
        else:
            raise ValueError(f"PNG rendering needs 3 columns, got {x.shape[1]}; "
                             f"use --project to render the first three dimensions")
    if cell_px < 1:
        raise ValueError("cell_px must be >= 1")
    cells = to_bytes(x).reshape(g.n_y, g.n_x, 3)
    img = np.repeat(np.repeat(cells, cell_px, axis=0), cell_px, axis=1)
    path = Path(path)
    Image.fromarray(img, mode="RGB").save(path, format="PNG")
    return path
