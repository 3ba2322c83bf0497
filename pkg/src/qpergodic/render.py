"""Binary PPM (P6) rasters of fields and partitions, one pixel per grid cell.

The first scan axis runs left to right and the second bottom to top.  Value
cells go through a fixed 256-entry colormap over ``[min, max]`` of the field;
escaped cells get a reserved dark green that does not occur in the colormap.
A sidecar ``<raster>.legend.txt`` records the mapping.
"""

from __future__ import annotations

import hashlib
from importlib import resources

import numpy as np

from .errors import FieldFileError
from .fieldfile import atomic_write
from .partition import PartitionField, TimeAverageField

COLORMAP_FILES = {"viridis": "colormap_viridis.txt"}
COLORMAP_SHA256 = {"viridis": "89ed2dfce22aaa8b42f35f2b6f3f88b82365cdb67885c76dea36cb8f5068b678"}
ESCAPED_RGB = (0, 60, 30)


def load_colormap(name="viridis"):
    """Return the ``(256, 3)`` uint8 table, verifying its checksum."""
    try:
        fname = COLORMAP_FILES[name]
    except KeyError:
        raise FieldFileError(f"unknown colormap {name!r}") from None
    raw = (resources.files("qpergodic") / "data" / fname).read_bytes()
    if hashlib.sha256(raw).hexdigest() != COLORMAP_SHA256[name]:
        raise FieldFileError(f"colormap {name} checksum mismatch")
    rows = [line.split() for line in raw.decode("ascii").splitlines() if line and not line.startswith("#")]
    table = np.array([[int(v) for v in r[1:]] for r in rows], dtype=np.uint8)
    if table.shape != (256, 3):
        raise FieldFileError(f"colormap {name} must have 256 RGB rows")
    return table


def color_indices(values, lo, hi):
    """Map values to colormap bins 0..255 over ``[lo, hi]``; a degenerate range maps to 0."""
    if not hi > lo:
        return np.zeros(values.shape, dtype=np.int64)
    idx = np.floor((values - lo) / (hi - lo) * 256.0)
    return np.clip(np.nan_to_num(idx), 0, 255).astype(np.int64)


def _to_image(grid):
    # grid[i, k]: i -> x (left to right), k -> y (bottom to top)
    return np.ascontiguousarray(np.transpose(grid, (1, 0) + tuple(range(2, grid.ndim)))[::-1])


def field_pixels(field: TimeAverageField, colormap="viridis"):
    table = load_colormap(colormap)
    lo, hi = field.value_range()
    idx = color_indices(np.nan_to_num(field.values), lo, hi)
    rgb = table[idx]
    rgb[field.escaped] = ESCAPED_RGB
    return _to_image(rgb), {"kind": "field", "observable": field.observable_id, "min": lo, "max": hi}


def partition_pixels(part: PartitionField, colormap="viridis"):
    table = load_colormap(colormap)
    index, tuples = part.labels()
    n = len(tuples)
    idx = color_indices(index.astype(float), 0.0, float(max(n - 1, 0)))
    rgb = table[idx]
    rgb[index < 0] = ESCAPED_RGB
    return _to_image(rgb), {"kind": "partition", "labels": n, "min": 0, "max": max(n - 1, 0)}


def encode_ppm(pixels):
    h, w, _ = pixels.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.astype(np.uint8).tobytes()


def decode_ppm(data: bytes):
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise FieldFileError("not a binary PPM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def legend_text(info, colormap, source):
    lines = [
        f"source: {source}",
        f"kind: {info['kind']}",
    ]
    if info["kind"] == "field":
        lines.append(f"observable: {info['observable']}")
    else:
        lines.append(f"labels: {info['labels']}")
    lines += [
        f"min: {info['min']!r}",
        f"max: {info['max']!r}",
        f"colormap: {colormap} (256 entries, sha256 {COLORMAP_SHA256[colormap]})",
        "mapping: bin = floor((value - min) / (max - min) * 256) clipped to 0..255",
        f"escaped: rgb {ESCAPED_RGB[0]} {ESCAPED_RGB[1]} {ESCAPED_RGB[2]}",
        "orientation: first axis left->right, second axis bottom->top",
    ]
    return "\n".join(lines) + "\n"


def write_raster(obj, path, colormap="viridis", source=""):
    """Write ``obj`` (field or partition) to ``path`` plus its legend sidecar; returns the legend path."""
    if isinstance(obj, TimeAverageField):
        pixels, info = field_pixels(obj, colormap)
    else:
        pixels, info = partition_pixels(obj, colormap)
    atomic_write(path, encode_ppm(pixels))
    legend = f"{path}.legend.txt"
    atomic_write(legend, legend_text(info, colormap, source).encode("utf-8"))
    return legend
