"""Structured triangular meshes on axis-aligned rectangles."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np


@dataclass(frozen=True)
class DirichletFixed:
    """Time-independent Dirichlet data, a constant or a function of (x, z)."""

    value: Union[float, Callable] = 0.0

    def evaluate(self, x, z, t=None):
        if callable(self.value):
            return np.asarray(self.value(x, z), dtype=float) * np.ones_like(x)
        return np.full_like(x, float(self.value))


@dataclass(frozen=True)
class DirichletTransient:
    """Time-dependent Dirichlet data looked up by profile name at solve time."""

    profile: str


@dataclass(frozen=True)
class NeumannNoFlow:
    pass


BoundaryTag = Union[DirichletFixed, DirichletTransient, NeumannNoFlow]


@dataclass(eq=False)
class Mesh:
    """A conforming triangulation of a rectangle.

    ``nodes`` is (N, 2) with columns (x, z); ``triangles`` is (E, 3) in
    counterclockwise order; ``boundary_edges`` is (B, 2) and ``tags`` holds
    one :data:`BoundaryTag` per boundary edge.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    tags: tuple = ()
    domain: tuple = ((0.0, 1.0), (0.0, 1.0))
    shape: tuple = (1, 1)
    h: tuple = (1.0, 1.0)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def x(self) -> np.ndarray:
        return self.nodes[:, 0]

    @property
    def z(self) -> np.ndarray:
        return self.nodes[:, 1]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def edge_midpoints(self) -> np.ndarray:
        return self.nodes[self.boundary_edges].mean(axis=1)

    def with_tags(self, tags) -> "Mesh":
        tags = tuple(tags)
        if len(tags) != len(self.boundary_edges):
            raise ValueError("need exactly one tag per boundary edge")
        return Mesh(
            self.nodes, self.triangles, self.boundary_edges, tags,
            self.domain, self.shape, self.h,
        )

    def gradient(self, coef) -> np.ndarray:
        """Elementwise constant gradient (E, 2) of a P1 field."""
        from .fem import p1_space

        return p1_space(self).gradient(coef)


def build_structured(domain, nx: int, nz: int, diagonal: str = "/") -> Mesh:
    """Triangulate ``domain = ((x0, x1), (z0, z1))`` with an nx-by-nz grid of
    rectangles, each cut into two right-angled triangles.

    Node (i, j) sits at index ``j * (nx + 1) + i`` (x varies fastest).
    ``diagonal="/"`` cuts every cell from its lower-left to its upper-right
    corner; ``"\\"`` uses the other diagonal.  All boundary edges carry a
    :class:`NeumannNoFlow` placeholder tag.
    """
    (x0, x1), (z0, z1) = domain
    if nx < 1 or nz < 1:
        raise ValueError(f"nx and nz must be >= 1, got {nx}, {nz}")
    if not (x1 > x0 and z1 > z0):
        raise ValueError("rectangle extents must be positive")
    if diagonal not in ("/", "\\"):
        raise ValueError("diagonal must be '/' or '\\'")

    xs = np.linspace(x0, x1, nx + 1)
    zs = np.linspace(z0, z1, nz + 1)
    X, Z = np.meshgrid(xs, zs)
    nodes = np.column_stack([X.ravel(), Z.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(nz))
    i, j = i.ravel(), j.ravel()
    sw = j * (nx + 1) + i
    se = sw + 1
    nw = sw + nx + 1
    ne = nw + 1
    if diagonal == "/":
        lower = np.column_stack([sw, se, ne])
        upper = np.column_stack([sw, ne, nw])
    else:
        lower = np.column_stack([sw, se, nw])
        upper = np.column_stack([se, ne, nw])
    triangles = np.empty((2 * nx * nz, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    bottom = np.column_stack([np.arange(nx), np.arange(1, nx + 1)])
    top = bottom + nz * (nx + 1)
    left = np.column_stack([np.arange(nz) * (nx + 1), np.arange(1, nz + 1) * (nx + 1)])
    right = left + nx
    edges = np.vstack([bottom, right, top, left]).astype(np.int64)

    return Mesh(
        nodes=nodes,
        triangles=triangles,
        boundary_edges=edges,
        tags=tuple(NeumannNoFlow() for _ in range(len(edges))),
        domain=((float(x0), float(x1)), (float(z0), float(z1))),
        shape=(nx, nz),
        h=((x1 - x0) / nx, (z1 - z0) / nz),
    )


def tag_boundary(mesh: Mesh, rule: Callable[[float, float], BoundaryTag]) -> Mesh:
    """Return a copy of ``mesh`` whose boundary edges are tagged by ``rule``
    evaluated at each edge midpoint."""
    tags = []
    for xm, zm in mesh.edge_midpoints():
        tag = rule(float(xm), float(zm))
        if not isinstance(tag, (DirichletFixed, DirichletTransient, NeumannNoFlow)):
            raise TypeError(f"rule returned {tag!r}, not a boundary tag")
        tags.append(tag)
    return mesh.with_tags(tags)


def interpolate_nodal(mesh: Mesh, g) -> np.ndarray:
    """Nodal interpolant of ``g(x, z)`` (vectorized callable or constant)."""
    if not callable(g):
        return np.full(mesh.n_nodes, float(g))
    values = np.asarray(g(mesh.x, mesh.z), dtype=float)
    return np.broadcast_to(values, (mesh.n_nodes,)).copy()


def write_mesh_vtk(mesh: Mesh, path, point_data: dict | None = None, title: str = "richards mesh"):
    """Write a legacy ASCII VTK unstructured grid of triangles (cell type 5)."""
    from .io import write_vtk

    write_vtk(path, mesh, point_data or {}, title=title)
