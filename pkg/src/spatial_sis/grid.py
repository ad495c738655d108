"""Cell-centred Cartesian grids with a conservative no-flux Laplacian.

Nodes sit at cell centres of a uniform lattice. A missing neighbour is
either a mirrored ghost (Neumann: the face contributes nothing) or an odd
reflection (Dirichlet: ghost value ``-u``). With Neumann faces every row of
the Laplacian sums to zero and the matrix is symmetric, so with uniform
cell weights the discrete divergence theorem holds to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import ConfigurationError, UsageError

KINDS = ("interval", "rectangle", "masked_disk")


@dataclass(frozen=True)
class DomainSpec:
    """What to discretise.

    ``extent`` is ``(a, b)`` for an interval, ``((x0, x1), (y0, y1))`` for a
    rectangle and the radius for a disk centred at the origin.
    ``resolution`` is the number of cells per axis (for the disk: across
    the diameter).
    """

    kind: str
    extent: object
    resolution: object
    boundary: str = "neumann"


@dataclass(frozen=True, eq=False)
class Grid:
    kind: str
    node_coords: np.ndarray
    cell_weights: np.ndarray
    laplacian: sp.csr_matrix
    interior_mask: np.ndarray
    domain_measure: float
    spacing: tuple
    lattice_shape: tuple
    lattice_index: np.ndarray
    axes: tuple
    dirichlet_faces: np.ndarray
    boundary: str
    cut_lattice: np.ndarray
    parent_nodes: np.ndarray | None = None
    _tree: list = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return self.node_coords.shape[0]

    @property
    def dim(self) -> int:
        return self.node_coords.shape[1]

    @property
    def h(self) -> float:
        return max(self.spacing)

    @property
    def has_dirichlet(self) -> bool:
        return bool(np.any(self.dirichlet_faces))

    def kdtree(self) -> cKDTree:
        if not self._tree:
            self._tree.append(cKDTree(self.node_coords))
        return self._tree[0]

    def nearest_node(self, point) -> int:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return int(self.kdtree().query(point)[1])

    def field(self, fn) -> np.ndarray:
        """Sample ``fn(x)`` or ``fn(x, y)`` at the nodes."""
        cols = [self.node_coords[:, k] for k in range(self.dim)]
        return np.broadcast_to(np.asarray(fn(*cols), dtype=float), (self.n,)).copy()

    def restrict(self, mask) -> "Grid":
        """Sub-grid on the nodes selected by ``mask``.

        Faces shared with dropped nodes of this grid become homogeneous
        Dirichlet faces; faces on the original boundary keep their type.
        This is the mixed boundary condition of a highest-risk patch.
        """
        mask = check_field(self, mask, dtype=bool)
        if not mask.any():
            raise UsageError("restriction mask selects no nodes")
        active = np.zeros(self.lattice_shape, dtype=bool)
        cut = self.cut_lattice.copy()
        idx = tuple(self.lattice_index.T)
        active[idx] = mask
        cut[idx] = ~mask
        sub = _make_grid(
            self.kind, self.axes, self.spacing, active, cut, self.boundary == "dirichlet"
        )
        parent = np.flatnonzero(mask)
        if self.parent_nodes is not None:
            parent = self.parent_nodes[parent]
        return Grid(**{**_fields(sub), "parent_nodes": parent, "_tree": []})


def _fields(g: Grid) -> dict:
    return {k: getattr(g, k) for k in Grid.__dataclass_fields__}


def _make_grid(kind, axes, spacing, active, cut, outer_dirichlet) -> Grid:
    shape = active.shape
    dim = len(shape)
    lattice_index = np.argwhere(active)
    n = lattice_index.shape[0]
    number = -np.ones(shape, dtype=np.int64)
    number[tuple(lattice_index.T)] = np.arange(n)

    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    dirichlet = np.zeros(n, dtype=np.int64)
    full_neighbours = np.zeros(n, dtype=np.int64)
    # Coefficients are rounded to multiples of a power-of-two quantum so that
    # every partial row sum is exact: rows then sum to exactly zero.
    raw = [1.0 / s**2 for s in spacing]
    quantum = 2.0 ** (np.floor(np.log2(max(raw))) - 45)
    coeffs = [round(c / quantum) * quantum for c in raw]
    for k in range(dim):
        inv_h2 = coeffs[k]
        for step in (-1, 1):
            nb = lattice_index.copy()
            nb[:, k] += step
            inside = (nb[:, k] >= 0) & (nb[:, k] < shape[k])
            nb_number = np.full(n, -1, dtype=np.int64)
            nb_cut = np.zeros(n, dtype=bool)
            sel = np.flatnonzero(inside)
            nb_idx = tuple(nb[sel].T)
            nb_number[sel] = number[nb_idx]
            nb_cut[sel] = cut[nb_idx]
            linked = nb_number >= 0
            rows.append(np.flatnonzero(linked))
            cols.append(nb_number[linked])
            vals.append(np.full(linked.sum(), inv_h2))
            diag[linked] -= inv_h2
            full_neighbours += linked
            dir_face = ~linked & (nb_cut | outer_dirichlet)
            # odd ghost: (-u - u) / h^2
            diag[dir_face] -= 2.0 * inv_h2
            dirichlet += dir_face
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    lap = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    lap.sum_duplicates()
    coords = np.column_stack([axes[k][lattice_index[:, k]] for k in range(dim)])
    cell = float(np.prod(spacing))
    weights = np.full(n, cell)
    return Grid(
        kind=kind,
        node_coords=coords,
        cell_weights=weights,
        laplacian=lap,
        interior_mask=full_neighbours == 2 * dim,
        domain_measure=cell * n,
        spacing=tuple(float(s) for s in spacing),
        lattice_shape=tuple(shape),
        lattice_index=lattice_index,
        axes=tuple(axes),
        dirichlet_faces=dirichlet,
        boundary="dirichlet" if outer_dirichlet else "neumann",
        cut_lattice=cut,
    )


def _resolution(value, dim):
    if np.isscalar(value):
        value = (value,) * dim
    try:
        res = tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"resolution must be integer(s), got {value!r}", key="resolution")
    if len(res) != dim or any(r != v for r, v in zip(res, value)):
        raise ConfigurationError(f"resolution must be {dim} integer(s), got {value!r}", key="resolution")
    if min(res) < 3:
        raise ConfigurationError("resolution must be at least 3 per axis", key="resolution")
    return res


def _cell_centres(a, b, n):
    h = (b - a) / n
    return a + (np.arange(n) + 0.5) * h, h


def build_grid(spec: DomainSpec) -> Grid:
    if spec.kind not in KINDS:
        raise ConfigurationError(f"unknown domain kind {spec.kind!r}", key="kind")
    if spec.boundary not in ("neumann", "dirichlet"):
        raise ConfigurationError(f"unknown boundary {spec.boundary!r}", key="boundary")
    outer_dirichlet = spec.boundary == "dirichlet"

    if spec.kind == "interval":
        a, b = (float(v) for v in spec.extent)
        (n,) = _resolution(spec.resolution, 1)
        boxes = [(a, b)]
        res = (n,)
    elif spec.kind == "rectangle":
        (x0, x1), (y0, y1) = spec.extent
        boxes = [(float(x0), float(x1)), (float(y0), float(y1))]
        res = _resolution(spec.resolution, 2)
    else:
        radius = float(spec.extent)
        if not radius > 0:
            raise ConfigurationError("disk radius must be positive", key="extent")
        (n,) = _resolution(spec.resolution, 1)
        boxes = [(-radius, radius)] * 2
        res = (n, n)
    for lo, hi in boxes:
        if not hi > lo:
            raise ConfigurationError(f"extent must be positive, got ({lo}, {hi})", key="extent")

    axes, spacing = [], []
    for (lo, hi), m in zip(boxes, res):
        c, h = _cell_centres(lo, hi, m)
        axes.append(c)
        spacing.append(h)
    active = np.ones(res, dtype=bool)
    if spec.kind == "masked_disk":
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        active = X**2 + Y**2 <= radius**2 * (1 + 1e-12)
    cut = np.zeros(res, dtype=bool)
    grid = _make_grid(spec.kind, axes, spacing, active, cut, outer_dirichlet)
    if spec.kind != "masked_disk":
        # exact measure of the box rather than the accumulated cell sum
        measure = float(np.prod([hi - lo for lo, hi in boxes]))
        grid = Grid(**{**_fields(grid), "domain_measure": measure, "_tree": []})
    return grid


def interval(a=0.0, b=1.0, n=64, boundary="neumann") -> Grid:
    return build_grid(DomainSpec("interval", (a, b), n, boundary))


def rectangle(x=(0.0, 1.0), y=(0.0, 1.0), n=32, boundary="neumann") -> Grid:
    return build_grid(DomainSpec("rectangle", (x, y), n, boundary))


def masked_disk(radius=1.0, n=65, boundary="neumann") -> Grid:
    return build_grid(DomainSpec("masked_disk", radius, n, boundary))


def check_field(grid: Grid, f, dtype=float) -> np.ndarray:
    arr = np.asarray(f, dtype=dtype)
    if arr.ndim == 0:
        return np.full(grid.n, arr, dtype=dtype)
    if arr.shape != (grid.n,):
        raise UsageError(f"field of shape {arr.shape} does not live on a grid with {grid.n} nodes")
    return arr


def apply_laplacian(grid: Grid, f) -> np.ndarray:
    return grid.laplacian @ check_field(grid, f)


def integrate(grid: Grid, f) -> float:
    return float(grid.cell_weights @ check_field(grid, f))


def inner(grid: Grid, f, g) -> float:
    """Weighted inner product matching the quadrature."""
    return float(grid.cell_weights @ (check_field(grid, f) * check_field(grid, g)))
