"""Atomic CSV and legacy-VTK writers."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, columns, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([row[c] for c in columns] if isinstance(row, dict) else row)
    return atomic_write_text(path, buf.getvalue())


def vtk_text(mesh, point_data: dict, title: str = "richards") -> str:
    lines = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [f"{x:.17g} {z:.17g} 0" for x, z in mesh.nodes]
    E = mesh.n_triangles
    lines.append(f"CELLS {E} {4 * E}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {E}")
    lines += ["5"] * E
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (mesh.n_nodes,):
                raise ValueError(f"point data {name!r} has shape {values.shape}")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [f"{v:.17g}" for v in values]
    return "\n".join(lines) + "\n"


def write_vtk(path, mesh, point_data: dict, title: str = "richards") -> Path:
    return atomic_write_text(path, vtk_text(mesh, point_data, title))


def read_vtk_points(path):
    """Minimal reader for files produced by :func:`write_vtk`: returns the
    point array and a dict of scalar point data."""
    tokens = Path(path).read_text().split("\n")
    out, data = None, {}
    i = 0
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            out = np.array([[float(v) for v in tokens[i + 1 + k].split()] for k in range(n)])
            i += n
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            n = len(out)
            data[name] = np.array([float(tokens[i + 2 + k]) for k in range(n)])
            i += n + 1
        i += 1
    return out, data
