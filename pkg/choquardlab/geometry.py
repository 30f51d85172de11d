"""Grids, computational domains, boundary distance and boundary quadrature.

A :class:`Grid` is a cell-centred tensor grid over the box ``[-L, L]^n``. A
:class:`DomainMask` marks the nodes inside an analytic shape (ball, box or
ellipsoid) and stores the exact distance to the shape boundary. Surface
integrals use :class:`BoundaryPatches` built from the analytic parametrisation
of the shape, never from the grid.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from choquardlab.utility_functions import ParameterError

logger = logging.getLogger(__name__)

MAX_DIM = 3


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on ``[-L, L]^n`` with ``m`` nodes per axis.

    Attributes:
        n (int): Spatial dimension, 1 to 3.
        L (float): Box half-width.
        m (int): Nodes per axis, even and at least 4."""

    n: int
    L: float
    m: int

    def __post_init__(self):
        if int(self.n) != self.n or not 1 <= self.n <= MAX_DIM:
            raise ParameterError(f"grid dimension n={self.n} must be 1, 2 or 3 (memory guard)")
        if int(self.m) != self.m or self.m < 4:
            raise ParameterError(f"nodes per axis m={self.m} must be an integer >= 4")
        if self.m % 2 != 0:
            raise ParameterError(f"nodes per axis m={self.m} must be even (FFT layout and symmetry need it)")
        if not self.L > 0:
            raise ParameterError(f"box half-width L={self.L} must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.m

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.m,) * self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    @cached_property
    def axis(self) -> np.ndarray:
        # (i - (m-1)/2) h is the cell centre -L + (i + 1/2) h, written so that x_i = -x_{m-1-i} exactly
        axis = (np.arange(self.m) - (self.m - 1) / 2.0) * self.h
        axis.setflags(write=False)
        return axis

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(m, ..., m, n)``."""
        mesh = np.meshgrid(*([self.axis] * self.n), indexing='ij')
        points = np.stack(mesh, axis=-1)
        points.setflags(write=False)
        return points

    def radius(self, center=None) -> np.ndarray:
        """Distance of every node to ``center`` (origin by default)."""
        offset = self.points if center is None else self.points - np.asarray(center, dtype=float)
        return np.sqrt(np.sum(offset ** 2, axis=-1))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


def build_grid(n, L, m) -> Grid:
    """Build and validate a :class:`Grid`.

    Args:
        n (int): Spatial dimension, one of 1, 2, 3.
        L (float): Box half-width, positive.
        m (int): Nodes per axis, even and >= 4.

    Returns:
        Grid: The grid with spacing ``h = 2L/m``.

    Raises:
        ParameterError: On odd ``m``, ``m < 4``, ``n`` outside 1..3 or ``L <= 0``.

    Examples:
        >>> build_grid(1, 1.0, 8).h
        0.25"""
    return Grid(int(n), float(L), int(m))


def _as_center(center, n):
    if center is None:
        return np.zeros(n)
    center = np.asarray(center, dtype=float).reshape(-1)
    if center.size != n:
        raise ParameterError(f"shape centre {center.tolist()} does not have {n} coordinates")
    return center


def _as_axes(value, n, name):
    axes = np.asarray(value, dtype=float).reshape(-1)
    if axes.size == 1:
        axes = np.full(n, axes[0])
    if axes.size != n:
        raise ParameterError(f"{name}={axes.tolist()} needs 1 or {n} entries")
    if np.any(axes <= 0):
        raise ParameterError(f"{name}={axes.tolist()} must be positive")
    return axes


@dataclass(frozen=True)
class Shape:
    """Analytic description of Ω: a ball, an axis-aligned box or an axis-aligned ellipsoid.

    Attributes:
        kind (str): 'ball', 'box' or 'ellipsoid'.
        size (tuple): Radius (ball), half-widths (box) or semi-axes (ellipsoid).
        center (tuple, optional): Centre of the shape, origin by default."""

    kind: str
    size: Tuple[float, ...]
    center: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind not in ('ball', 'box', 'ellipsoid'):
            raise ParameterError(f"unknown domain kind '{self.kind}', expected ball, box or ellipsoid")

    @classmethod
    def ball(cls, r, center=None):
        return cls('ball', (float(r),), None if center is None else tuple(float(c) for c in center))

    @classmethod
    def box(cls, a, center=None):
        return cls('box', tuple(float(v) for v in np.atleast_1d(a)),
                   None if center is None else tuple(float(c) for c in center))

    @classmethod
    def ellipsoid(cls, axes, center=None):
        return cls('ellipsoid', tuple(float(v) for v in np.atleast_1d(axes)),
                   None if center is None else tuple(float(c) for c in center))

    @classmethod
    def from_dict(cls, table):
        """Build a shape from a config table such as ``{kind = "ball", r = 0.8, center = [0,0,0]}``."""
        kind = table.get('kind')
        center = table.get('center')
        if kind == 'ball':
            return cls.ball(table['r'], center)
        if kind == 'box':
            return cls.box(table['a'], center)
        if kind == 'ellipsoid':
            return cls.ellipsoid(table['axes'], center)
        raise ParameterError(f"unknown domain kind '{kind}', expected ball, box or ellipsoid")

    def to_dict(self):
        key = {'ball': 'r', 'box': 'a', 'ellipsoid': 'axes'}[self.kind]
        value = self.size[0] if self.kind == 'ball' else list(self.size)
        return {'kind': self.kind, key: value, 'center': None if self.center is None else list(self.center)}

    def semi_axes(self, n) -> np.ndarray:
        """Per-axis reach of the shape from its centre."""
        if self.kind == 'ball':
            if self.size[0] <= 0:
                raise ParameterError(f"ball radius r={self.size[0]} must be positive")
            return np.full(n, self.size[0])
        name = 'a' if self.kind == 'box' else 'axes'
        return _as_axes(self.size, n, name)

    def inradius(self, n) -> float:
        return float(np.min(self.semi_axes(n)))

    def signed_distance(self, points) -> np.ndarray:
        """Signed distance to the boundary, negative inside.

        Exact for ball and box. For the ellipsoid the interior value is the
        exact distance and the exterior value is only sign-correct.

        Args:
            points (np.ndarray): Coordinates with the last axis of length n.

        Returns:
            np.ndarray: Signed distances, shape ``points.shape[:-1]``."""
        points = np.asarray(points, dtype=float)
        n = points.shape[-1]
        y = points - _as_center(self.center, n)
        axes = self.semi_axes(n)
        if self.kind == 'ball':
            return np.sqrt(np.sum(y ** 2, axis=-1)) - axes[0]
        if self.kind == 'box':
            excess = np.abs(y) - axes
            outside = np.sqrt(np.sum(np.maximum(excess, 0.0) ** 2, axis=-1))
            inside = np.minimum(np.max(excess, axis=-1), 0.0)
            return outside + inside
        level = np.sum((y / axes) ** 2, axis=-1)
        distance = np.zeros(level.shape)
        interior = level < 1.0
        distance[interior] = -_ellipsoid_interior_distance(y[interior], axes)
        # outside the ellipsoid only the sign is used
        distance[~interior] = np.sqrt(level[~interior]) - 1.0
        return distance


def _ellipsoid_interior_distance(y, axes, iterations=200):
    """Exact distance from interior points ``y`` (centred) to the ellipsoid boundary.

    The closest boundary point is ``a_i^2 y_i / (a_i^2 + t)`` with ``t`` the root in
    ``(-a_min^2, 0]`` of ``F(t) = sum (a_i y_i / (a_i^2 + t))^2 - 1``, which is
    decreasing there. Points on the minor-axis hyperplane can have no root, in
    which case the closest point sits at ``t = -a_min^2``."""
    if y.size == 0:
        return np.zeros(0)
    a2 = axes ** 2
    a_min2 = np.min(a2)
    minor = np.isclose(a2, a_min2, rtol=1e-14, atol=0.0)

    def F(t):
        return np.sum((axes * y / (a2 + t[:, None])) ** 2, axis=-1) - 1.0

    lo_edge = -a_min2 * (1.0 - 1e-13)
    lo = np.full(len(y), lo_edge)
    hi = np.zeros(len(y))
    degenerate = F(lo) < 0.0

    # vectorised bisection on every regular point at once
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        positive = F(mid) > 0.0
        lo = np.where(positive, mid, lo)
        hi = np.where(positive, hi, mid)
    t = 0.5 * (lo + hi)
    closest = a2 * y / (a2 + t[:, None])
    distance = np.sqrt(np.sum((closest - y) ** 2, axis=-1))

    if np.any(degenerate):
        yd = y[degenerate]
        major = ~minor
        xd = np.zeros_like(yd)
        xd[:, major] = a2[major] * yd[:, major] / (a2[major] - a_min2)
        remaining = 1.0 - np.sum((xd[:, major] / axes[major]) ** 2, axis=-1)
        gap = np.sum((xd[:, major] - yd[:, major]) ** 2, axis=-1)
        distance[degenerate] = np.sqrt(gap + a_min2 * np.maximum(remaining, 0.0))
    return distance


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Indicator of Ω on a grid plus the boundary distance δ.

    Attributes:
        grid (Grid): The host grid.
        shape (Shape): Analytic shape, ``None`` for the whole-box mask.
        inside (np.ndarray): Boolean per node, read-only.
        delta (np.ndarray): ``dist(x, ∂Ω)`` on inside nodes, 0 elsewhere, read-only.
        free (bool): True for the whole-box mask used by free-space evaluations."""

    grid: Grid
    shape: Optional[Shape]
    inside: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    free: bool = False

    @classmethod
    def whole_box(cls, grid: Grid):
        """All-inside mask for whole-box (free space) quantities such as bubble quotients."""
        inside = np.ones(grid.shape, dtype=bool)
        delta = grid.L - np.max(np.abs(grid.points), axis=-1)
        inside.setflags(write=False)
        delta.setflags(write=False)
        return cls(grid, None, inside, delta, free=True)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.inside))

    @property
    def center(self) -> np.ndarray:
        if self.shape is None:
            return np.zeros(self.n)
        return _as_center(self.shape.center, self.n)

    @property
    def inradius(self) -> float:
        if self.shape is None:
            return self.grid.L
        return self.shape.inradius(self.n)

    def signed_distance(self, points) -> np.ndarray:
        if self.shape is None:
            return np.max(np.abs(np.asarray(points, dtype=float)), axis=-1) - self.grid.L
        return self.shape.signed_distance(points)

    def restrict(self, u) -> np.ndarray:
        """Inside-node values of a full-grid field as a flat vector."""
        return np.asarray(u)[self.inside]

    def embed(self, values) -> np.ndarray:
        """Full-grid field that is ``values`` on inside nodes and 0 elsewhere."""
        u = np.zeros(self.grid.shape)
        u[self.inside] = values
        return u

    def apply(self, u) -> np.ndarray:
        """Zero a full-grid field outside Ω."""
        return np.where(self.inside, u, 0.0)


def build_domain(shape: Shape, grid: Grid, clearance_cells=2.0) -> DomainMask:
    """Mark the grid nodes inside ``shape`` and compute the exact boundary distance.

    Args:
        shape (Shape): Ball, box or ellipsoid.
        grid (Grid): The host grid.
        clearance_cells (float, optional): Minimum gap, in units of h, between the
            shape and the box faces. Defaults to 2.

    Returns:
        DomainMask: Nodes with negative signed distance are inside.

    Raises:
        ParameterError: If the shape reaches within ``clearance_cells * h`` of the
            box faces or contains no node."""
    n, h = grid.n, grid.h
    center = _as_center(shape.center, n)
    reach = np.abs(center) + shape.semi_axes(n)
    clearance = grid.L - np.max(reach)
    if clearance < clearance_cells * h - 1e-12 * grid.L:
        raise ParameterError(
            f"{shape.kind} {shape.to_dict()} leaves clearance {clearance:.6g} to the box faces, "
            f"below {clearance_cells:g}h = {clearance_cells * h:.6g}; enlarge L or refine m")

    distance = shape.signed_distance(grid.points)
    inside = distance < 0.0
    if not np.any(inside):
        raise ParameterError(f"{shape.kind} {shape.to_dict()} contains no grid node; refine m")
    delta = np.where(inside, -distance, 0.0)
    inside.setflags(write=False)
    delta.setflags(write=False)
    logger.debug(f"domain {shape.kind}: {int(inside.sum())} inside nodes on m={grid.m}, n={n}")
    return DomainMask(grid, shape, inside, delta)


@dataclass(frozen=True, eq=False)
class BoundaryPatches:
    """Quadrature of ∂Ω.

    Attributes:
        points (np.ndarray): Patch positions, shape ``(P, n)``.
        normals (np.ndarray): Unit outward normals, shape ``(P, n)``.
        areas (np.ndarray): Surface weights dσ, shape ``(P,)``.
        tolerance (float): Declared absolute error of ``areas.sum()`` against |∂Ω|."""

    points: np.ndarray
    normals: np.ndarray
    areas: np.ndarray
    tolerance: float

    @property
    def total_area(self) -> float:
        return float(np.sum(self.areas))

    def normal_dot_position(self) -> np.ndarray:
        return np.sum(self.normals * self.points, axis=-1)

    def integrate(self, values) -> float:
        return float(np.sum(np.asarray(values) * self.areas))


def _unit_sphere_rule(n, resolution):
    """Points and weights of a product midpoint rule on S^{n-1} that integrates 1 exactly."""
    if n == 1:
        return np.array([[-1.0], [1.0]]), np.ones(2)
    if n == 2:
        count = max(4, int(resolution))
        theta = 2.0 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1), np.full(count, 2.0 * np.pi / count)
    n_z = max(2, int(round(np.sqrt(resolution / 2.0))))
    n_phi = 2 * n_z
    z = -1.0 + (np.arange(n_z) + 0.5) * 2.0 / n_z
    phi = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    zz, pp = np.meshgrid(z, phi, indexing='ij')
    rho = np.sqrt(1.0 - zz ** 2)
    points = np.stack([rho * np.cos(pp), rho * np.sin(pp), zz], axis=-1).reshape(-1, 3)
    weights = np.full(len(points), (2.0 / n_z) * (2.0 * np.pi / n_phi))
    return points, weights


def _ellipsoid_rule(axes, center, resolution):
    n = len(axes)
    omega, weights = _unit_sphere_rule(n, resolution)
    # x = c + A omega; dσ = |det A| |A^{-T} omega| dσ_sphere, normal along A^{-T} omega
    dual = omega / axes
    dual_norm = np.sqrt(np.sum(dual ** 2, axis=-1))
    points = center + omega * axes
    normals = dual / dual_norm[:, None]
    areas = np.prod(axes) * dual_norm * weights
    return points, normals, areas


def _box_rule(axes, center, resolution):
    n = len(axes)
    if n == 1:
        points = np.array([[center[0] - axes[0]], [center[0] + axes[0]]])
        return points, np.array([[-1.0], [1.0]]), np.ones(2)
    per_face = max(1, int(round((resolution / (2.0 * n)) ** (1.0 / (n - 1)))))
    points, normals, areas = [], [], []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        tangent = [(np.arange(per_face) + 0.5) / per_face * 2.0 * axes[j] - axes[j] for j in others]
        mesh = np.meshgrid(*tangent, indexing='ij')
        cell = np.prod([2.0 * axes[j] / per_face for j in others])
        for sign in (-1.0, 1.0):
            face = np.zeros((mesh[0].size, n))
            for k, j in enumerate(others):
                face[:, j] = mesh[k].reshape(-1)
            face[:, i] = sign * axes[i]
            normal = np.zeros((len(face), n))
            normal[:, i] = sign
            points.append(face + center)
            normals.append(normal)
            areas.append(np.full(len(face), cell))
    return np.concatenate(points), np.concatenate(normals), np.concatenate(areas)


def boundary_patches(mask: DomainMask, resolution=2048) -> BoundaryPatches:
    """Quadrature patches on ∂Ω from the analytic parametrisation of the shape.

    Args:
        mask (DomainMask): Mask whose shape is parametrised (not the whole-box mask).
        resolution (int, optional): Target number of patches. Defaults to 2048.

    Returns:
        BoundaryPatches: Points, unit outward normals, areas and the declared tolerance.

    Raises:
        ParameterError: For the whole-box mask, which has no analytic shape.

    Examples:
        For the unit ball in 3D the areas add up to 4π exactly, and every patch
        satisfies ν(x)·x = 1."""
    if mask.shape is None:
        raise ParameterError("the whole-box mask has no analytic boundary parametrisation")
    n = mask.n
    shape = mask.shape
    axes = shape.semi_axes(n)
    center = _as_center(shape.center, n)
    if shape.kind == 'box':
        points, normals, areas = _box_rule(axes, center, resolution)
        tolerance = 1e-12 * float(np.sum(areas))
    else:
        points, normals, areas = _ellipsoid_rule(axes, center, resolution)
        if shape.kind == 'ball' or n == 1:
            tolerance = 1e-12 * float(np.sum(areas))
        else:
            # a rule with half the patch size per direction serves as the error estimate
            coarse = _ellipsoid_rule(axes, center, max(1, resolution // (2 ** (n - 1))))[2]
            tolerance = abs(float(np.sum(areas)) - float(np.sum(coarse)))
    return BoundaryPatches(points, normals, areas, tolerance)


def is_strictly_star_shaped(patches: BoundaryPatches):
    """Check ν(x)·x > 0 on every patch (star-shaped with respect to the origin).

    Args:
        patches (BoundaryPatches): Quadrature of ∂Ω.

    Returns:
        tuple: ``(bool, float)`` with the verdict and the minimum of ν(x)·x."""
    dots = patches.normal_dot_position()
    minimum = float(np.min(dots))
    return bool(minimum > 0.0), minimum
