"""Conforming 2D simplicial meshes of rectangles, with facet topology.

Structured meshes are built by splitting each grid cell into two triangles
along the lower-left -> upper-right diagonal, which reproduces the element
counts and mesh sizes of the reference experiments (e.g. a unit square with
nx = ny = 4 gives 32 elements and h = sqrt(2)/4).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle (x0, x1) x (y0, y1)."""

    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(
                f"degenerate rectangle ({self.x0},{self.x1})x({self.y0},{self.y1})"
            )


@dataclass
class SimplicialMesh:
    """Triangle mesh with facet adjacency, normals and per-element diameters.

    Immutable after construction; all arrays are read-only views.

    Attributes
    ----------
    vertices : (Nv, 2) float
    elements : (Nel, 3) int, counterclockwise vertex triples
    interior_facets : (NFi, 4) int, columns (K1, local_edge_K1, K2, local_edge_K2)
    boundary_facets : (NFb, 2) int, columns (K, local_edge)
    element_diameter : (Nel,) longest edge of each triangle
    facet_normal : (NFi, 2) unit normal pointing out of K1
    facet_length : (NFi,)
    facet_midpoint : (NFi, 2)
    subdomain_id : (Nel,) int tag resolved at element centroids
    """

    vertices: np.ndarray
    elements: np.ndarray
    interior_facets: np.ndarray
    boundary_facets: np.ndarray
    element_diameter: np.ndarray
    facet_normal: np.ndarray
    facet_length: np.ndarray
    facet_midpoint: np.ndarray
    subdomain_id: np.ndarray
    domain: Optional[Rectangle] = None

    def __post_init__(self):
        for arr in (
            self.vertices,
            self.elements,
            self.interior_facets,
            self.boundary_facets,
            self.element_diameter,
            self.facet_normal,
            self.facet_length,
            self.facet_midpoint,
            self.subdomain_id,
        ):
            arr.setflags(write=False)

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_interior_facets(self) -> int:
        return self.interior_facets.shape[0]

    def element_coords(self) -> np.ndarray:
        """(Nel, 3, 2) vertex coordinates of every element."""
        return self.vertices[self.elements]

    def element_areas(self) -> np.ndarray:
        xy = self.element_coords()
        d1 = xy[:, 1] - xy[:, 0]
        d2 = xy[:, 2] - xy[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.element_coords().mean(axis=1)

    def total_area(self) -> float:
        return float(self.element_areas().sum())

    def h_max(self) -> float:
        return float(self.element_diameter.max())

    def to_text(self) -> str:
        """Plain node/element listing for debugging."""
        lines = [f"# nodes {len(self.vertices)}"]
        for i, (x, y) in enumerate(self.vertices):
            lines.append(f"{i} {x:.16e} {y:.16e}")
        lines.append(f"# elements {self.n_elements}")
        for e, (a, b, c) in enumerate(self.elements):
            lines.append(f"{e} {a} {b} {c} {self.subdomain_id[e]}")
        return "\n".join(lines) + "\n"


# local edge e of a triangle joins local vertices e and (e + 1) % 3
_EDGE_VERTS = ((0, 1), (1, 2), (2, 0))


def _build_facets(vertices: np.ndarray, elements: np.ndarray):
    """Match element edges into interior/boundary facets.

    The element with the smaller index owns each interior facet and defines
    its normal orientation.
    """
    edge_owner: dict[tuple[int, int], tuple[int, int]] = {}
    interior = []
    boundary_map: dict[tuple[int, int], tuple[int, int]] = {}
    for k, tri in enumerate(elements):
        for le, (a, b) in enumerate(_EDGE_VERTS):
            key = tuple(sorted((int(tri[a]), int(tri[b]))))
            if key in boundary_map:
                k1, le1 = boundary_map.pop(key)
                interior.append((k1, le1, k, le))
            else:
                boundary_map[key] = (k, le)
    del edge_owner
    boundary = sorted(boundary_map.values())
    interior.sort()
    interior_facets = np.array(interior, dtype=np.int64).reshape(-1, 4)
    boundary_facets = np.array(boundary, dtype=np.int64).reshape(-1, 2)

    # outward normal of K1 on each interior facet (elements are CCW)
    coords = vertices[elements]
    normals = np.zeros((len(interior), 2))
    lengths = np.zeros(len(interior))
    midpoints = np.zeros((len(interior), 2))
    for i, (k1, le1, k2, le2) in enumerate(interior):
        a, b = _EDGE_VERTS[le1]
        pa, pb = coords[k1, a], coords[k1, b]
        t = pb - pa
        ln = np.hypot(t[0], t[1])
        normals[i] = (t[1] / ln, -t[0] / ln)
        lengths[i] = ln
        midpoints[i] = 0.5 * (pa + pb)
    return interior_facets, boundary_facets, normals, lengths, midpoints


def build_structured_mesh(
    domain: Rectangle,
    nx: int,
    ny: int,
    subdomain_map: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> SimplicialMesh:
    """Triangulate ``domain`` into 2*nx*ny triangles.

    Parameters
    ----------
    subdomain_map : callable mapping (N, 2) centroid coordinates to int tags;
        used when the diffusion tensor is piecewise-defined.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be >= 1, got nx={nx}, ny={ny}")
    xs = np.linspace(domain.x0, domain.x1, nx + 1)
    ys = np.linspace(domain.y0, domain.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    elements = []
    for i in range(nx):
        for j in range(ny):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            # split along the a -> c diagonal, both triangles CCW
            elements.append((a, b, c))
            elements.append((a, c, d))
    elements = np.array(elements, dtype=np.int64)

    coords = vertices[elements]
    e01 = np.linalg.norm(coords[:, 1] - coords[:, 0], axis=1)
    e12 = np.linalg.norm(coords[:, 2] - coords[:, 1], axis=1)
    e20 = np.linalg.norm(coords[:, 0] - coords[:, 2], axis=1)
    diameters = np.maximum(np.maximum(e01, e12), e20)

    interior, bound, normals, lengths, midpoints = _build_facets(vertices, elements)

    centroids = coords.mean(axis=1)
    if subdomain_map is None:
        tags = np.zeros(len(elements), dtype=np.int64)
    else:
        tags = np.asarray(subdomain_map(centroids), dtype=np.int64)

    mesh = SimplicialMesh(
        vertices=vertices,
        elements=elements,
        interior_facets=interior,
        boundary_facets=bound,
        element_diameter=diameters,
        facet_normal=normals,
        facet_length=lengths,
        facet_midpoint=midpoints,
        subdomain_id=tags,
        domain=domain,
    )
    areas = mesh.element_areas()
    if np.any(areas <= 0):
        raise ValueError("mesh construction produced a non-CCW element")
    if abs(mesh.total_area() - domain.area) > 1e-12 * domain.area:
        raise ValueError("mesh area does not match the domain area")
    return mesh


def facet_mesh_size(mesh: SimplicialMesh, facet: int) -> float:
    """Mesh-size function on an interior facet: min of the two diameters."""
    if facet < 0 or facet >= mesh.n_interior_facets:
        raise IndexError(
            f"facet {facet} is not an interior facet "
            f"(mesh has {mesh.n_interior_facets}); the mesh-size function is "
            "defined on interior facets only"
        )
    k1 = mesh.interior_facets[facet, 0]
    k2 = mesh.interior_facets[facet, 2]
    return float(min(mesh.element_diameter[k1], mesh.element_diameter[k2]))


def facet_mesh_sizes(mesh: SimplicialMesh) -> np.ndarray:
    """Vectorized mesh-size function over all interior facets."""
    k1 = mesh.interior_facets[:, 0]
    k2 = mesh.interior_facets[:, 2]
    return np.minimum(mesh.element_diameter[k1], mesh.element_diameter[k2])


@dataclass(frozen=True)
class TimeGrid:
    """Partition 0 = t_0 < ... < t_N = T with per-step sizes."""

    breakpoints: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.breakpoints, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("time grid needs at least two breakpoints")
        if t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", t)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def n_steps(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def final_time(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def quasi_uniformity(self) -> float:
        s = self.steps
        return float(s.max() / s.min())

    @staticmethod
    def uniform(T: float, n_steps: int) -> "TimeGrid":
        if T <= 0 or n_steps < 1:
            raise ValueError("need T > 0 and n_steps >= 1")
        return TimeGrid(np.linspace(0.0, T, n_steps + 1))

    @staticmethod
    def with_step(T: float, tau: float) -> "TimeGrid":
        """Uniform grid with step ~tau (rounded so the last step lands on T)."""
        n = max(1, int(round(T / tau)))
        return TimeGrid.uniform(T, n)
