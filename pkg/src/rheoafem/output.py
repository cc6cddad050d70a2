"""Legacy ASCII VTK and CSV writers for run artifacts."""

from __future__ import annotations

import numpy as np

from .afem import AfemTrace, TraceRow
from .mesh import Mesh

CSV_HEADER = "k,n,elements,dofs,E_pde,E_ic,E_total,E_A,energy,kind,seconds"


class OutputError(Exception):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_vtk(mesh: Mesh, path, point_data=None, cell_data=None,
              title="rheoafem output") -> None:
    """Write a legacy ASCII VTK unstructured grid.

    point_data: {"velocity": (nv, 2) vectors, "pressure": (nv,) scalars}
    cell_data: mapping name -> (nt,) scalars
    """
    point_data = point_data or {}
    cell_data = cell_data or {}
    nv, nt = mesh.num_vertices, mesh.num_triangles
    for name, arr in point_data.items():
        if len(arr) != nv:
            raise OutputError(f"point data '{name}' has {len(arr)} entries, "
                              f"expected {nv}")
    for name, arr in cell_data.items():
        if len(arr) != nt:
            raise OutputError(f"cell data '{name}' has {len(arr)} entries, "
                              f"expected {nt}")

    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    for x, y in mesh.vertices:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    lines.append(f"CELLS {nt} {4 * nt}")
    for v0, v1, v2 in mesh.triangles:
        lines.append(f"3 {v0} {v1} {v2}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)

    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 2:
                lines.append(f"VECTORS {name} double")
                for vx, vy in arr:
                    lines.append(f"{_fmt(vx)} {_fmt(vy)} 0")
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(_fmt(v) for v in arr)
    if cell_data:
        lines.append(f"CELL_DATA {nt}")
        for name, arr in cell_data.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in np.asarray(arr, dtype=float))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_points(path) -> np.ndarray:
    """Minimal reader used by round-trip tests: returns the (nv, 2) points."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    for i, line in enumerate(lines):
        if line.startswith("POINTS"):
            nv = int(line.split()[1])
            pts = [tuple(map(float, lines[i + 1 + j].split()[:2]))
                   for j in range(nv)]
            return np.asarray(pts)
    raise OutputError(f"{path}: no POINTS section found")


def format_row(row: TraceRow) -> str:
    return ",".join([
        str(row.k), str(row.n), str(row.elements), str(row.dofs),
        _fmt(row.E_pde), _fmt(row.E_ic), _fmt(row.E_total), _fmt(row.E_A),
        _fmt(row.energy), row.kind, f"{row.seconds:.3f}",
    ])


def write_csv(trace: AfemTrace, path) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in trace.rows:
            fh.write(format_row(row) + "\n")


def vertex_fields(state) -> dict:
    """Velocity vectors and pressure scalars sampled at the mesh vertices."""
    space = state.space
    nv = space.mesh.num_vertices
    vel = state.U.coeffs.reshape(-1, 2)[:nv]
    if space.pressure_degree == 1:
        pressure = state.P.coeffs[:nv].copy()
    else:  # P0: average adjacent cell values at each vertex
        pressure = np.zeros(nv)
        count = np.zeros(nv)
        for e, tri in enumerate(space.mesh.triangles):
            for v in tri:
                pressure[v] += state.P.coeffs[space.elem_pdofs[e, 0]]
                count[v] += 1
        pressure /= np.maximum(count, 1)
    return {"velocity": vel, "pressure": pressure}
