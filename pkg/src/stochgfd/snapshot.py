"""
Raw field snapshot files.

Binary layout of one ``.gfsf`` file (all little-endian)::

    4 bytes   magic b"GFSF"
    u32       format version (1)
    u32       number of axes d
    d x u32   points per axis
    float64   values, row-major (C order)

Every scalar component goes into its own file.  A JSON sidecar with the same
stem holds grid lengths, time, grade and free-form parameters.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .grid import PeriodicGrid, SpectralScalarField

MAGIC = b"GFSF"
VERSION = 1


class SnapshotFormatError(ValueError):
    pass


def write_raw(path, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    header = MAGIC + struct.pack("<II", VERSION, values.ndim) + struct.pack(f"<{values.ndim}I", *values.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes(order="C"))


def read_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {data[:4]!r}")
    version, ndim = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise SnapshotFormatError(f"{path}: unsupported format version {version}")
    shape = struct.unpack_from(f"<{ndim}I", data, 12)
    offset = 12 + 4 * ndim
    count = int(np.prod(shape))
    if len(data) - offset != 8 * count:
        raise SnapshotFormatError(f"{path}: payload size does not match header")
    return np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float)


def write_components(directory, stem: str, grid: PeriodicGrid, components: Sequence[np.ndarray],
                     metadata: dict[str, Any] | None = None) -> list[Path]:
    """Write ``stem_c{i}.gfsf`` for each component plus ``stem.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, comp in enumerate(components):
        grid.check_values(np.asarray(comp))
        p = directory / f"{stem}_c{i}.gfsf"
        write_raw(p, comp)
        files.append(p)
    meta = {"n": list(grid.n), "length": list(grid.length), "components": [f.name for f in files]}
    meta.update(metadata or {})
    (directory / f"{stem}.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return files


def read_components(sidecar) -> tuple[PeriodicGrid, list[np.ndarray], dict[str, Any]]:
    """Inverse of :func:`write_components`, given the JSON sidecar path."""
    sidecar = Path(sidecar)
    meta = json.loads(sidecar.read_text())
    grid = PeriodicGrid(tuple(meta["n"]), tuple(meta["length"]))
    comps = []
    for name in meta["components"]:
        arr = read_raw(sidecar.parent / name)
        grid.check_values(arr)
        comps.append(arr)
    return grid, comps, meta


def write_field(directory, stem: str, f: SpectralScalarField, metadata: dict[str, Any] | None = None) -> list[Path]:
    return write_components(directory, stem, f.grid, [f.values], metadata)


def read_field(sidecar) -> tuple[SpectralScalarField, dict[str, Any]]:
    grid, comps, meta = read_components(sidecar)
    if len(comps) != 1:
        raise SnapshotFormatError(f"{sidecar}: expected one component, found {len(comps)}")
    return SpectralScalarField(grid, comps[0]), meta
