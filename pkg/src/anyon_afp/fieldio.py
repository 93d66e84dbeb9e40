"""Raw binary field dumps with a JSON sidecar.

Payload: little-endian float64, row-major, interleaved ``(re, im)``, length
``2 n^2``.  Sidecar: ``{"n", "box_length", "kind", "norm", "endianness"}``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import Grid, norm

_DTYPE = np.dtype("<f8")


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def dump_field(u: np.ndarray, grid: Grid, path: str | Path, kind: str = "wavefunction") -> list[Path]:
    path = Path(path)
    u = grid.check_field(np.asarray(u, dtype=complex), "field")
    if u.shape != (grid.n, grid.n):
        raise ValueError("only scalar fields can be dumped")
    inter = np.empty((grid.n, grid.n, 2), dtype=_DTYPE)
    inter[..., 0] = u.real
    inter[..., 1] = u.imag
    path.write_bytes(inter.tobytes(order="C"))
    side = _sidecar(path)
    side.write_text(json.dumps({
        "n": grid.n,
        "box_length": grid.box_length,
        "kind": kind,
        "norm": norm(u, grid),
        "endianness": "little",
    }, indent=2))
    return [path, side]


def load_field(path: str | Path) -> tuple[np.ndarray, Grid]:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text())
    if meta.get("endianness", "little") != "little":
        raise ValueError(f"endianness tag {meta.get('endianness')!r} does not match little-endian payload")
    n = int(meta["n"])
    raw = path.read_bytes()
    if len(raw) != 2 * n * n * _DTYPE.itemsize:
        raise ValueError(f"payload has {len(raw)} bytes, sidecar n = {n} implies {2 * n * n * 8}")
    arr = np.frombuffer(raw, dtype=_DTYPE).reshape(n, n, 2)
    u = arr[..., 0] + 1j * arr[..., 1]
    return u, Grid(n, float(meta["box_length"]))
