"""Legacy ASCII VTK export of nodal fields."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ArgumentError
from .mesh import Mesh

_CELL_TYPES = {1: 3, 2: 9}  # VTK_LINE, VTK_QUAD


def vtk_text(mesh: Mesh, u: np.ndarray, d: np.ndarray, alpha: np.ndarray, title: str = "stochfrac fields") -> str:
    n = mesh.n_nodes
    u = np.asarray(u, dtype=float).reshape(n, mesh.dim)
    d = np.asarray(d, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if d.shape != (n,) or alpha.shape != (n,):
        raise ArgumentError("d and alpha must be nodal fields")
    pts = np.zeros((n, 3))
    pts[:, : mesh.dim] = mesh.nodes
    vec = np.zeros((n, 3))
    vec[:, : mesh.dim] = u
    nen = mesh.elements.shape[1]
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {n} double")
    lines += [" ".join(f"{v:.17g}" for v in row) for row in pts]
    lines.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (nen + 1)}")
    lines += [f"{nen} " + " ".join(str(int(i)) for i in cell) for cell in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += [str(_CELL_TYPES[mesh.dim])] * mesh.n_elements
    lines.append(f"POINT_DATA {n}")
    lines.append("VECTORS u double")
    lines += [" ".join(f"{v:.17g}" for v in row) for row in vec]
    for name, field in (("d", d), ("alpha", alpha)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [f"{v:.17g}" for v in field]
    return "\n".join(lines) + "\n"


def write_vtk(path, mesh: Mesh, u, d, alpha, title: str = "stochfrac fields") -> Path:
    path = Path(path)
    path.write_text(vtk_text(mesh, u, d, alpha, title))
    return path
