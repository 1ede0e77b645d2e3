"""Structured grids on an interval, a rectangle or a disc, nodal fields,
cell gradients, positivity volumes and the field CSV format.

Gradients in 2D come from the two diagonal triangulations of every square
averaged together: each square carries four right triangles of measure
h^2/4, one per corner, whose P1 gradients are one-sided differences.  The
scheme is exact on affine fields, has no checkerboard null modes and,
because every component is a single nodal difference, truncating a field
never increases any cell gradient.

Volumes are counted on the same cells (1D: intervals, 2D: the corner
triangles) through the centroid value of the interpolant of u+ = max(u, 0),
so truncating a field at zero never changes its positivity set.  For a
nonnegative field a triangle's centroid value is positive exactly when the
P1 interpolant is positive on it, so the count is the measure of
{u_h > 0}, averaged over the two triangulations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParameter

__all__ = [
    "Grid",
    "ScalarField",
    "interval",
    "square",
    "disc",
    "grid_from_config",
    "gradient_cells",
    "positivity_volume",
    "smoothed_volume",
    "smoothed_volume_grad",
    "default_theta",
    "center_values",
    "interpolate",
    "interpolate_gradient",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(eq=False)
class Grid:
    dim: int
    h: float
    node_shape: tuple
    origin: tuple
    domain: str
    coords: np.ndarray          # (N, dim)
    active: np.ndarray          # (N,) node touches an active cell
    boundary: np.ndarray        # (N,) Dirichlet node
    dirichlet_values: np.ndarray  # (N,), zero off the boundary
    cell_active: np.ndarray     # cell-shaped boolean mask
    grad_ops: tuple             # sparse (m, N) per component
    grad_weights: np.ndarray    # (m,)
    center_op: sp.csr_matrix    # (ncell, N) vertex averaging (centroid value)
    cell_weights: np.ndarray    # (ncell,)
    cell_centers: np.ndarray    # (ncell, dim)
    geometry: dict

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def interior(self):
        return self.active & ~self.boundary

    @property
    def measure(self):
        return float(self.cell_weights.sum())

    @property
    def cell_measure(self):
        return self.h ** self.dim

    @property
    def max_phi(self):
        vals = self.dirichlet_values[self.boundary]
        return float(vals.max()) if vals.size else 0.0

    @property
    def positive_set(self):
        """Boundary nodes where the Dirichlet datum is positive."""
        return self.boundary & (self.dirichlet_values > 0)

    @property
    def c0(self):
        vals = self.dirichlet_values[self.positive_set]
        return float(vals.min()) if vals.size else 0.0

    @property
    def diameter(self):
        pts = self.coords[self.active]
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))

    def zeros(self):
        return ScalarField(self, np.where(self.boundary, self.dirichlet_values, 0.0))

    def field(self, values):
        return ScalarField(self, np.asarray(values, dtype=float))

    def field_from_function(self, fn):
        """Evaluate ``fn(x)`` (1D) or ``fn(x, y)`` at the active nodes."""
        vals = np.zeros(self.n_nodes)
        pts = self.coords[self.active]
        vals[self.active] = fn(*pts.T)
        return ScalarField(self, vals)

    def to_config(self):
        return dict(self.geometry)


@dataclass(eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise InvalidParameter(
                f"field has shape {self.values.shape}, grid has {self.grid.n_nodes} nodes")

    def copy(self):
        return ScalarField(self.grid, self.values.copy())

    def with_values(self, values):
        return ScalarField(self.grid, values)

    def as_array(self):
        return self.values.reshape(self.grid.node_shape)

    def dirichlet_error(self):
        b = self.grid.boundary
        if not b.any():
            return 0.0
        return float(np.abs(self.values[b] - self.grid.dirichlet_values[b]).max())


# ---------------------------------------------------------------------------
# construction

def _ops_1d(n, h):
    N = n + 1
    rows = np.repeat(np.arange(n), 2)
    cols = np.column_stack([np.arange(n), np.arange(1, N)]).ravel()
    Dx = sp.csr_matrix((np.tile([-1.0 / h, 1.0 / h], n), (rows, cols)), shape=(n, N))
    C = sp.csr_matrix((np.full(2 * n, 0.5), (rows, cols)), shape=(n, N))
    return (Dx,), np.full(n, h), C, np.full(n, h)


def _ops_2d(nx, ny, h, cell_active):
    """Corner-triangle gradient operators for the active squares."""
    Nx, Ny = nx + 1, ny + 1
    I, J = np.nonzero(cell_active)
    k = I.size
    n00 = I * Ny + J
    n10 = (I + 1) * Ny + J
    n01 = I * Ny + J + 1
    n11 = (I + 1) * Ny + J + 1
    # per triangle (T00, T10, T01, T11): x-difference pair, y-difference pair
    xpairs = [(n00, n10), (n00, n10), (n01, n11), (n01, n11)]
    ypairs = [(n00, n01), (n10, n11), (n00, n01), (n10, n11)]
    m = 4 * k

    def build(pairs):
        rows, cols, vals = [], [], []
        for t, (a, b) in enumerate(pairs):
            r = t * k + np.arange(k)
            rows += [r, r]
            cols += [a, b]
            vals += [np.full(k, -1.0 / h), np.full(k, 1.0 / h)]
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(m, Nx * Ny))

    Dx, Dy = build(xpairs), build(ypairs)
    # volume cells are the same triangles; centroid = mean of the 3 corners
    tris = [(n00, n10, n01), (n00, n10, n11), (n00, n01, n11), (n01, n10, n11)]
    crow = np.concatenate([np.repeat(t * k + np.arange(k), 3) for t in range(4)])
    ccol = np.concatenate([np.column_stack(tri).ravel() for tri in tris])
    C = sp.csr_matrix((np.full(3 * m, 1.0 / 3.0), (crow, ccol)), shape=(m, Nx * Ny))
    return (Dx, Dy), np.full(m, h * h / 4.0), C, np.full(m, h * h / 4.0)


def interval(n, a=0.0, b=1.0, left=1.0, right=0.0) -> Grid:
    """[a, b] with n cells and Dirichlet data u(a) = left, u(b) = right."""
    if n < 2 or not b > a:
        raise InvalidParameter("interval needs n >= 2 cells and b > a")
    h = (b - a) / n
    x = a + h * np.arange(n + 1)
    boundary = np.zeros(n + 1, dtype=bool)
    boundary[[0, -1]] = True
    dv = np.zeros(n + 1)
    dv[0], dv[-1] = float(left), float(right)
    ops, wg, C, wc = _ops_1d(n, h)
    return Grid(1, h, (n + 1,), (a,), "interval", x[:, None], np.ones(n + 1, dtype=bool),
                boundary, dv, np.ones(n, dtype=bool), ops, wg, C.tocsr(), wc,
                (x[:-1] + 0.5 * h)[:, None],
                {"dim": 1, "domain": "interval", "extents": [a, b], "n": n,
                 "dirichlet": {"kind": "endpoints", "left": float(left), "right": float(right)}})


def _grid_2d(n, x0, y0, h, cell_active, phi0, project, domain, geometry):
    Nx = Ny = n + 1
    xs = x0 + h * np.arange(Nx)
    ys = y0 + h * np.arange(Ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    coords = np.column_stack([X.ravel(), Y.ravel()])
    ca = np.asarray(cell_active, dtype=bool)
    # node activity / boundary from the four incident cells
    pad = np.zeros((n + 2, n + 2), dtype=bool)
    pad[1:-1, 1:-1] = ca
    inc = [pad[1:, 1:], pad[:-1, 1:], pad[1:, :-1], pad[:-1, :-1]]
    active = np.logical_or.reduce(inc)
    full = np.logical_and.reduce(inc)
    boundary = active & ~full
    active, boundary = active.ravel(), boundary.ravel()
    dv = np.zeros(Nx * Ny)
    bpts = coords[boundary]
    if project is not None:
        bpts = project(bpts)
    if callable(phi0):
        dv[boundary] = np.broadcast_to(phi0(bpts[:, 0], bpts[:, 1]), (bpts.shape[0],))
    else:
        dv[boundary] = float(phi0)
    ops, wg, C, wc = _ops_2d(n, n, h, ca)
    centers = (C @ coords)
    return Grid(2, h, (Nx, Ny), (x0, y0), domain, coords, active, boundary, dv, ca,
                ops, wg, C, wc, centers, geometry)


def square(n, extents=((0.0, 1.0), (0.0, 1.0)), phi0=1.0, dirichlet_spec=None) -> Grid:
    """Square [x0, x1] x [y0, y1] (equal sides) with n cells per side.

    ``phi0`` is a constant or a callable ``phi0(x, y)`` on boundary nodes.
    """
    (x0, x1), (y0, y1) = extents
    if n < 2 or not math.isclose(x1 - x0, y1 - y0):
        raise InvalidParameter("square needs n >= 2 and equal side lengths")
    h = (x1 - x0) / n
    geometry = {"dim": 2, "domain": "square", "extents": [[x0, x1], [y0, y1]], "n": n,
                "dirichlet": dirichlet_spec or _const_spec(phi0)}
    return _grid_2d(n, x0, y0, h, np.ones((n, n), dtype=bool), phi0, None, "square", geometry)


def disc(n, radius=1.0, center=(0.0, 0.0), phi0=1.0, dirichlet_spec=None) -> Grid:
    """Disc of the given radius on an n x n grid over its bounding square.

    Cells whose centers lie inside the disc are active; boundary nodes take
    phi0 at their radial projection onto the circle.
    """
    if n < 4 or radius <= 0:
        raise InvalidParameter("disc needs n >= 4 and radius > 0")
    cx, cy = center
    h = 2.0 * radius / n
    c = -radius + h * (np.arange(n) + 0.5)
    CX, CY = np.meshgrid(c, c, indexing="ij")
    ca = CX ** 2 + CY ** 2 <= radius ** 2

    def project(pts):
        d = pts - np.array([cx, cy])
        r = np.linalg.norm(d, axis=1, keepdims=True)
        r[r == 0] = 1.0
        return np.array([cx, cy]) + radius * d / r

    geometry = {"dim": 2, "domain": "disc", "radius": radius, "center": [cx, cy], "n": n,
                "dirichlet": dirichlet_spec or _const_spec(phi0)}
    return _grid_2d(n, cx - radius, cy - radius, h, ca, phi0, project, "disc", geometry)


def _const_spec(phi0):
    if callable(phi0):
        return {"kind": "callable"}
    return {"kind": "constant", "value": float(phi0)}


def _phi_from_spec(spec):
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return float(spec["value"])
    if kind == "edges":
        # a side value applies on its closed edge; corners take the max
        vals = {k: float(spec.get(k, 0.0)) for k in ("left", "right", "bottom", "top")}

        def fn(x, y, _v=vals, _s=spec):
            (x0, x1), (y0, y1) = _s["_extents"]
            tol = 1e-12 * max(1.0, abs(x1 - x0))
            out = np.zeros(np.shape(x))
            for key, mask in (("left", np.abs(x - x0) < tol), ("right", np.abs(x - x1) < tol),
                              ("bottom", np.abs(y - y0) < tol), ("top", np.abs(y - y1) < tol)):
                out = np.where(mask, np.maximum(out, _v[key]), out)
            return out
        return fn
    raise InvalidParameter(f"unknown dirichlet kind {kind!r}")


def grid_from_config(cfg: dict) -> Grid:
    """Build a grid from the run-config ``"grid"`` object."""
    domain = cfg.get("domain", "interval")
    n = int(cfg["n"])
    dspec = dict(cfg.get("dirichlet", {}))
    if domain == "interval":
        a, b = cfg.get("extents", [0.0, 1.0])
        if dspec.get("kind", "endpoints") != "endpoints":
            raise InvalidParameter("interval grids take endpoint Dirichlet data")
        return interval(n, a, b, dspec.get("left", 1.0), dspec.get("right", 0.0))
    if domain == "square":
        ext = cfg.get("extents", [[0.0, 1.0], [0.0, 1.0]])
        dspec["_extents"] = ext
        phi0 = _phi_from_spec(dspec)
        clean = {k: v for k, v in dspec.items() if not k.startswith("_")}
        return square(n, ext, phi0, clean)
    if domain == "disc":
        phi0 = _phi_from_spec(dspec)
        return disc(n, cfg.get("radius", 1.0), tuple(cfg.get("center", (0.0, 0.0))), phi0, dspec)
    raise InvalidParameter(f"unknown domain {domain!r}")


# ---------------------------------------------------------------------------
# operations

def gradient_cells(field: ScalarField):
    """Per-cell gradient vectors ``(m, dim)`` and the cell weights ``(m,)``."""
    g = field.grid
    grads = np.column_stack([D @ field.values for D in g.grad_ops])
    return grads, g.grad_weights


def default_theta(grid: Grid) -> float:
    return 1e-8 * (grid.max_phi if grid.max_phi > 0 else 1.0)


def positivity_volume(field: ScalarField, theta_pos=None) -> float:
    """Measure of the cells whose center value exceeds ``theta_pos``."""
    g = field.grid
    if theta_pos is None:
        theta_pos = default_theta(g)
    if theta_pos < 0:
        raise InvalidParameter("theta_pos must be >= 0")
    ubar = center_values(field)
    return float(g.cell_weights[ubar > theta_pos].sum())


def center_values(field: ScalarField):
    """Cell-center values of the interpolant of max(u, 0)."""
    return field.grid.center_op @ np.maximum(field.values, 0.0)


def _ramp(t, s):
    return np.clip(t / s, 0.0, 1.0)


def smoothed_volume(field: ScalarField, s: float) -> float:
    """sum_c w_c clamp(u_c / s, 0, 1) over cell-center values u_c."""
    if not s > 0:
        raise InvalidParameter("s must be > 0")
    return float(field.grid.cell_weights @ _ramp(center_values(field), s))


def smoothed_volume_grad(field: ScalarField, s: float):
    """Value and nodal gradient of :func:`smoothed_volume`.

    Derivatives at the kinks are one-sided from above for u = 0 (ramp slope
    1/s on [0, s), u+ slope 1 at u = 0), so nodes sitting at zero still feel
    the volume term from the positive side.
    """
    g = field.grid
    ubar = center_values(field)
    val = float(g.cell_weights @ _ramp(ubar, s))
    slope = np.where(ubar < s, 1.0 / s, 0.0)
    return val, (g.center_op.T @ (g.cell_weights * slope)) * (field.values >= 0)


def _locate(grid: Grid, pts):
    """Cell indices and local coordinates in [0, 1]^dim; -1 when outside."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if grid.dim == 1 and pts.shape[1] != 1:
        pts = pts.reshape(-1, 1)
    rel = (pts - np.array(grid.origin)) / grid.h
    ncell = np.array(grid.node_shape) - 1
    with np.errstate(invalid="ignore"):
        inside = np.all((rel >= -1e-12) & (rel <= ncell + 1e-12), axis=1)
    rel = np.where(np.isfinite(rel), rel, 0.0)
    idx = np.clip(np.floor(rel).astype(int), 0, ncell - 1)
    loc = rel - idx
    if grid.dim == 2:
        inside &= grid.cell_active[idx[:, 0], idx[:, 1]]
    return idx, loc, inside


def _corner_values(grid, values, idx):
    if grid.dim == 1:
        return values[idx[:, 0]], values[idx[:, 0] + 1]
    Ny = grid.node_shape[1]
    i, j = idx[:, 0], idx[:, 1]
    return (values[i * Ny + j], values[(i + 1) * Ny + j],
            values[i * Ny + j + 1], values[(i + 1) * Ny + j + 1])


def interpolate(field: ScalarField, pts):
    """Evaluate the piecewise-linear interpolant; NaN outside the domain.

    In 2D this is the mean of the interpolants on the two diagonal
    triangulations of each square.
    """
    g = field.grid
    idx, loc, inside = _locate(g, pts)
    idx = np.where(inside[:, None], idx, 0)
    if g.dim == 1:
        u0, u1 = _corner_values(g, field.values, idx)
        out = u0 + loc[:, 0] * (u1 - u0)
    else:
        u00, u10, u01, u11 = _corner_values(g, field.values, idx)
        xi, eta = loc[:, 0], loc[:, 1]
        a = np.where(xi + eta <= 1.0,
                     u00 + xi * (u10 - u00) + eta * (u01 - u00),
                     u11 + (xi - 1.0) * (u11 - u01) + (eta - 1.0) * (u11 - u10))
        b = np.where(xi >= eta,
                     u10 + (xi - 1.0) * (u10 - u00) + eta * (u11 - u10),
                     u01 + xi * (u11 - u01) + (eta - 1.0) * (u01 - u00))
        out = 0.5 * (a + b)
    return np.where(inside, out, np.nan)


def interpolate_gradient(field: ScalarField, pts):
    """Gradient of the interpolant at the given points, ``(k, dim)``."""
    g = field.grid
    idx, loc, inside = _locate(g, pts)
    idx = np.where(inside[:, None], idx, 0)
    h = g.h
    if g.dim == 1:
        u0, u1 = _corner_values(g, field.values, idx)
        out = ((u1 - u0) / h)[:, None]
    else:
        u00, u10, u01, u11 = _corner_values(g, field.values, idx)
        xi, eta = loc[:, 0], loc[:, 1]
        lower = xi + eta <= 1.0
        ax = np.where(lower, u10 - u00, u11 - u01)
        ay = np.where(lower, u01 - u00, u11 - u10)
        right = xi >= eta
        bx = np.where(right, u10 - u00, u11 - u01)
        by = np.where(right, u11 - u10, u01 - u00)
        out = np.column_stack([0.5 * (ax + bx), 0.5 * (ay + by)]) / h
    out[~inside] = np.nan
    return out


# ---------------------------------------------------------------------------
# CSV

def write_field_csv(field: ScalarField, path):
    """Header ``x,u`` or ``x,y,u``; active nodes in row-major node order."""
    g = field.grid
    header = ["x", "u"] if g.dim == 1 else ["x", "y", "u"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in np.nonzero(g.active)[0]:
            w.writerow([repr(float(c)) for c in g.coords[k]] + [repr(float(field.values[k]))])


def read_field_csv(path) -> ScalarField:
    """Rebuild a field from its CSV dump.

    The grid is reconstructed from the node coordinates: spacing from the
    sorted unique coordinates, squares active when all four corners are
    present, boundary values taken from the file.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    if header == ["x", "u"]:
        x, u = data[:, 0], data[:, 1]
        order = np.argsort(x)
        x, u = x[order], u[order]
        grid = interval(len(x) - 1, x[0], x[-1], u[0], u[-1])
        return ScalarField(grid, u)
    if header != ["x", "y", "u"]:
        raise InvalidParameter(f"unrecognised field header {header}")
    xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
    h = float(np.min(np.diff(xs)))
    x0, y0 = xs[0], ys[0]
    n = int(round((xs[-1] - x0) / h))
    ny = int(round((ys[-1] - y0) / h))
    n = max(n, ny)
    present = np.zeros((n + 1, n + 1), dtype=bool)
    vals = np.zeros((n + 1, n + 1))
    I = np.rint((data[:, 0] - x0) / h).astype(int)
    J = np.rint((data[:, 1] - y0) / h).astype(int)
    present[I, J] = True
    vals[I, J] = data[:, 2]
    ca = present[:-1, :-1] & present[1:, :-1] & present[:-1, 1:] & present[1:, 1:]
    flat = vals.ravel()

    geometry = {"dim": 2, "domain": "from_csv", "n": n}
    grid = _grid_2d(n, x0, y0, h, ca, 0.0, None, "from_csv", geometry)
    grid.dirichlet_values = np.where(grid.boundary, flat, 0.0)
    return ScalarField(grid, np.where(grid.active, flat, 0.0))
