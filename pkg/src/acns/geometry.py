"""Truncated exterior domain: a box with one convex obstacle, on a uniform grid.

Cells are indexed ``[i, j]`` (or ``[i, j, k]``) with axis 0 = x.  Cell ``i``
along axis ``a`` has its center at ``(i + 1/2) * spacing[a]``.  Obstacles are
staircased: a cell is SOLID when its center lies inside the shape.
"""

from dataclasses import dataclass, field
import hashlib

import numpy as np
from scipy import ndimage

from .errors import EmptyFluidRegion, ObstacleTouchesBox, PreconditionError

FLUID = 0
SOLID = 1
OBSTACLE_BOUNDARY = 2
FARFIELD_BOUNDARY = 3

CLASS_NAMES = {
    FLUID: "FLUID",
    SOLID: "SOLID",
    OBSTACLE_BOUNDARY: "OBSTACLE_BOUNDARY",
    FARFIELD_BOUNDARY: "FARFIELD_BOUNDARY",
}


@dataclass(frozen=True)
class Disk:
    """Disk (2-D) or ball (3-D)."""

    center: tuple
    radius: float

    def signed_distance(self, points):
        c = np.asarray(self.center, dtype=float)
        r = np.sqrt(sum((points[a] - c[a]) ** 2 for a in range(len(c))))
        return r - self.radius

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box obstacle ``lo <= x <= hi``."""

    lo: tuple
    hi: tuple

    def signed_distance(self, points):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        q = [np.abs(points[a] - center[a]) - half[a] for a in range(len(lo))]
        outside = np.sqrt(sum(np.maximum(qa, 0.0) ** 2 for qa in q))
        inside = np.minimum(np.maximum.reduce(q), 0.0)
        return outside + inside

    def bounds(self):
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)


@dataclass(frozen=True)
class GeometrySpec:
    box_extents: tuple = (4.0, 4.0)
    cell_counts: tuple = (64, 64)
    obstacle: object = None
    periodic: bool = False


@dataclass(frozen=True, eq=False)
class DomainGeometry:
    box_extents: tuple
    cell_counts: tuple
    spacing: tuple
    obstacle: object
    periodic: bool
    cell_class: np.ndarray
    # per axis: boolean mask over that axis' faces, True where the face separates
    # a fluid cell from a SOLID cell; the matching sign gives the outward normal
    # of the fluid region (+1 means +e_axis).
    obstacle_faces: tuple
    boundary_normals: tuple
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __getstate__(self):
        # factorizations in the cache do not pickle; workers rebuild them
        state = dict(self.__dict__)
        state["_cache"] = {}
        return state

    def __setstate__(self, state):
        object.__setattr__(self, "__dict__", state)

    @property
    def ndim(self):
        return len(self.cell_counts)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def fluid(self):
        return self._cached("fluid", lambda: self.cell_class != SOLID)

    @property
    def n_fluid(self):
        return int(self.fluid.sum())

    def face_shape(self, axis):
        shape = list(self.cell_counts)
        if not self.periodic:
            shape[axis] += 1
        return tuple(shape)

    def active_faces(self, axis):
        """Faces carrying a velocity unknown: both neighbouring cells are fluid."""

        def build():
            f = self.fluid
            if self.periodic:
                return f & np.roll(f, 1, axis=axis)
            act = np.zeros(self.face_shape(axis), dtype=bool)
            inner = [slice(None)] * self.ndim
            inner[axis] = slice(1, -1)
            lo = [slice(None)] * self.ndim
            lo[axis] = slice(None, -1)
            hi = [slice(None)] * self.ndim
            hi[axis] = slice(1, None)
            act[tuple(inner)] = f[tuple(lo)] & f[tuple(hi)]
            return act

        return self._cached(("active", axis), build)

    def cell_centers(self):
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.cell_counts, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")

    def face_centers(self, axis):
        coords = []
        for a, (n, h) in enumerate(zip(self.cell_counts, self.spacing)):
            if a == axis:
                m = n if self.periodic else n + 1
                coords.append(np.arange(m) * h)
            else:
                coords.append((np.arange(n) + 0.5) * h)
        return np.meshgrid(*coords, indexing="ij")

    def obstacle_distance(self, points):
        """Distance from ``points`` to the obstacle surface (inf without obstacle)."""
        if self.obstacle is None:
            return np.full(points[0].shape, np.inf)
        return np.abs(self.obstacle.signed_distance(points))

    def boundary_adjacent(self, which="obstacle"):
        """Fluid cells with at least one no-slip face ('obstacle', 'farfield' or 'all')."""
        if which == "obstacle":
            return self.cell_class == OBSTACLE_BOUNDARY
        if which == "farfield":
            return self.cell_class == FARFIELD_BOUNDARY
        if which == "all":
            return (self.cell_class == OBSTACLE_BOUNDARY) | (self.cell_class == FARFIELD_BOUNDARY)
        raise ValueError(f"unknown boundary selection {which!r}")

    def digest(self):
        """Stable hash of everything that defines the discrete domain."""

        def build():
            h = hashlib.sha256()
            h.update(np.asarray(self.cell_counts, dtype="<i8").tobytes())
            h.update(np.asarray(self.spacing, dtype="<f8").tobytes())
            h.update(b"P" if self.periodic else b"W")
            h.update(np.ascontiguousarray(self.cell_class, dtype="<i1").tobytes())
            return h.hexdigest()[:16]

        return self._cached("digest", build)

    def same_grid(self, other):
        return other is self or (
            self.cell_counts == other.cell_counts
            and np.allclose(self.spacing, other.spacing, rtol=0, atol=0)
            and self.periodic == other.periodic
            and np.array_equal(self.cell_class, other.cell_class)
        )

    def _cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]


def build_domain(config):
    """Classify the grid cells of a box with an embedded obstacle.

    ``config`` is a :class:`GeometrySpec` or anything with a ``geometry``
    attribute holding one (e.g. ``SimConfig``).
    """
    spec = getattr(config, "geometry", config)
    extents = tuple(float(e) for e in spec.box_extents)
    counts = tuple(int(n) for n in spec.cell_counts)
    if len(extents) != len(counts) or len(counts) not in (2, 3):
        raise PreconditionError("box_extents and cell_counts must both have length 2 or 3")
    if min(counts) < 16:
        raise PreconditionError(f"need at least 16 cells per axis, got {counts}")
    spacing = tuple(e / n for e, n in zip(extents, counts))
    if min(spacing) <= 0:
        raise PreconditionError("spacing must be positive")
    d = len(counts)
    obstacle = spec.obstacle
    periodic = bool(spec.periodic)

    axes = [(np.arange(n) + 0.5) * h for n, h in zip(counts, spacing)]
    centers = np.meshgrid(*axes, indexing="ij")
    solid = np.zeros(counts, dtype=bool)
    if obstacle is not None:
        if len(np.atleast_1d(obstacle.bounds()[0])) != d:
            raise PreconditionError("obstacle dimension does not match the grid")
        lo, hi = obstacle.bounds()
        margin = min(np.min(lo), np.min(np.asarray(extents) - hi))
        if margin < 4 * max(spacing):
            raise ObstacleTouchesBox(
                f"obstacle margin {margin:.4g} < 4*max(dx) = {4 * max(spacing):.4g}"
            )
        solid = obstacle.signed_distance(centers) < 0.0

    cls = np.full(counts, FLUID, dtype=np.int8)
    cls[solid] = SOLID
    if not periodic:
        ring = np.zeros(counts, dtype=bool)
        for a in range(d):
            idx = [slice(None)] * d
            idx[a] = 0
            ring[tuple(idx)] = True
            idx[a] = -1
            ring[tuple(idx)] = True
        cls[ring & ~solid] = FARFIELD_BOUNDARY
    near_solid = ndimage.binary_dilation(solid, structure=ndimage.generate_binary_structure(d, 1))
    cls[near_solid & ~solid & (cls == FLUID)] = OBSTACLE_BOUNDARY

    fluid = ~solid
    if not fluid.any():
        raise EmptyFluidRegion("no fluid cells")
    _, n_components = ndimage.label(fluid, structure=ndimage.generate_binary_structure(d, 1))
    if n_components != 1:
        raise EmptyFluidRegion(f"fluid region has {n_components} disconnected pieces")

    obstacle_faces = []
    normals = []
    for a in range(d):
        if periodic:
            left = np.roll(fluid, 1, axis=a)
            right = fluid
            mask = left ^ right
            sign = np.where(mask & left, 1, np.where(mask, -1, 0))
        else:
            shape = list(counts)
            shape[a] += 1
            mask = np.zeros(shape, dtype=bool)
            sign = np.zeros(shape, dtype=np.int8)
            lo = [slice(None)] * d
            lo[a] = slice(None, -1)
            hi = [slice(None)] * d
            hi[a] = slice(1, None)
            inner = [slice(None)] * d
            inner[a] = slice(1, -1)
            left = fluid[tuple(lo)]
            right = fluid[tuple(hi)]
            m = left ^ right
            mask[tuple(inner)] = m
            # fluid on the left => the obstacle lies in +e_a
            sign[tuple(inner)] = np.where(m & left, 1, np.where(m, -1, 0))
        obstacle_faces.append(mask)
        normals.append(sign.astype(np.int8))

    return DomainGeometry(
        box_extents=extents,
        cell_counts=counts,
        spacing=spacing,
        obstacle=obstacle,
        periodic=periodic,
        cell_class=cls,
        obstacle_faces=tuple(obstacle_faces),
        boundary_normals=tuple(normals),
    )


def standard_geometry(n=64):
    """Box [0,4]^2 with a disk of radius 0.3 at (1, 2)."""
    return build_domain(GeometrySpec((4.0, 4.0), (n, n), Disk((1.0, 2.0), 0.3)))
