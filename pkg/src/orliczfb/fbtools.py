"""Free-boundary extraction and local diagnostics of a discrete solution.

All routines are read-only.  Point-wise quantities use the continuous
interpolant from :func:`orliczfb.mesh.interpolate`; ball averages use a
midpoint lattice of the ball with spacing r/16.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.spatial import cKDTree

from . import energy, mesh, orlicz
from .errors import InvalidParameter, NoFreeBoundary

__all__ = [
    "FreeBoundary",
    "FBReport",
    "extract_fb",
    "estimate_lambda",
    "density_ratios",
    "nondegeneracy",
    "linear_growth",
    "blowup_fit",
    "phi_average",
    "l_residual",
    "build_report",
]


@dataclass
class FreeBoundary:
    """Points on the zero level set with unit normals toward {u > 0}.

    ``segments`` holds the marching-squares pieces (k, 2, dim) in 2D and is
    degenerate (both ends equal) in 1D.
    """

    points: np.ndarray
    normals: np.ndarray
    segments: np.ndarray
    h: float

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    def distance(self, pts):
        """Euclidean distance from each row of ``pts`` to the polyline."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        k = min(8, len(self))
        _, idx = cKDTree(self.points).query(pts, k=k)
        idx = idx.reshape(len(pts), k)
        a = self.segments[idx, 0]          # (n, k, dim)
        b = self.segments[idx, 1]
        ab = b - a
        L2 = np.sum(ab * ab, axis=-1)
        ap = pts[:, None, :] - a
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(L2 > 0, np.sum(ap * ab, axis=-1) / L2, 0.0)
        t = np.clip(t, 0.0, 1.0)
        proj = a + t[..., None] * ab
        return np.min(np.linalg.norm(pts[:, None, :] - proj, axis=-1), axis=1)

    def write_csv(self, path):
        names = ["x", "y"][: self.dim] + ["nux", "nuy"][: self.dim]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for p, n in zip(self.points, self.normals):
                w.writerow([repr(float(v)) for v in (*p, *n)])


def extract_fb(fld: mesh.ScalarField, theta_pos=None) -> FreeBoundary:
    """Level set {u = theta_pos}: linear crossings in 1D, marching squares in 2D."""
    grid = fld.grid
    theta = mesh.default_theta(grid) if theta_pos is None else theta_pos
    v = np.where(grid.active, fld.values - theta, -1.0)
    pos = (v > 0) & grid.active
    if not pos.any():
        raise NoFreeBoundary("positivity set is empty")
    if pos[grid.active].all():
        raise NoFreeBoundary("field is positive everywhere")
    if grid.dim == 1:
        return _extract_1d(grid, v)
    return _extract_2d(fld, grid, v)


def _extract_1d(grid, v):
    x = grid.coords[:, 0]
    s = v > 0
    i = np.nonzero(s[:-1] != s[1:])[0]
    xc = x[i] + (x[i + 1] - x[i]) * v[i] / (v[i] - v[i + 1])
    nu = np.sign(v[i + 1] - v[i])
    pts = xc[:, None]
    return FreeBoundary(pts, nu[:, None], np.stack([pts, pts], axis=1), grid.h)


def _extract_2d(fld, grid, v):
    from skimage import measure

    V = v.reshape(grid.node_shape)
    mask = grid.active.reshape(grid.node_shape)
    segs = []
    for c in measure.find_contours(V, 0.0, mask=mask):
        xy = np.asarray(grid.origin) + grid.h * c
        if len(xy) > 1:
            segs.append(np.stack([xy[:-1], xy[1:]], axis=1))
    if not segs:
        raise NoFreeBoundary("no level-set segments found")
    segs = np.concatenate(segs)
    seg_len = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
    segs = segs[seg_len > 1e-12 * grid.h]
    mid = segs.mean(axis=1)
    grad = mesh.interpolate_gradient(fld, mid)
    norm = np.linalg.norm(grad, axis=1)
    # fallback: segment perpendicular, oriented by the field values
    tang = segs[:, 1] - segs[:, 0]
    perp = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
    perp /= np.linalg.norm(perp, axis=1)[:, None]
    probe = mesh.interpolate(fld, mid + 0.25 * grid.h * perp)
    flip = np.where(np.nan_to_num(probe, nan=0.0) >= np.nan_to_num(
        mesh.interpolate(fld, mid - 0.25 * grid.h * perp), nan=0.0), 1.0, -1.0)
    fallback = perp * flip[:, None]
    ok = np.isfinite(norm) & (norm > 0)
    nu = np.where(ok[:, None], grad / np.where(ok, norm, 1.0)[:, None], fallback)
    return FreeBoundary(mid, nu, segs, grid.h)


# ---------------------------------------------------------------------------
# slope at the free boundary

def estimate_lambda(fld: mesh.ScalarField, fb: FreeBoundary, d=None) -> dict:
    """|grad u| sampled at p + d nu for every FB point p (default d = 2h)."""
    h = fld.grid.h
    d = 2.0 * h if d is None else float(d)
    if not h * (1 - 1e-9) <= d <= 5 * h * (1 + 1e-9):
        raise InvalidParameter(f"offset d={d} outside [h, 5h]")
    pts = fb.points + d * fb.normals
    grad = mesh.interpolate_gradient(fld, pts)
    samples = np.linalg.norm(grad, axis=1)
    keep = np.isfinite(samples)
    if not keep.all():
        warnings.warn(f"{int((~keep).sum())} lambda sample points outside the domain skipped")
    samples = samples[keep]
    if samples.size == 0:
        raise NoFreeBoundary("every lambda sample fell outside the domain")
    mean = float(samples.mean())
    cv = float(samples.std() / mean) if mean > 0 else float("inf")
    return {"samples": samples, "lambda_mean": mean, "lambda_cv": cv,
            "d": d, "skipped": int((~keep).sum())}


# ---------------------------------------------------------------------------
# ball averages

def _ball_lattice(dim, r, per_radius=16):
    """Midpoints of a square lattice of spacing r/per_radius inside B_r."""
    k = np.arange(-per_radius, per_radius) + 0.5
    if dim == 1:
        off = (k * r / per_radius)[:, None]
    else:
        X, Y = np.meshgrid(k, k, indexing="ij")
        off = np.stack([X.ravel(), Y.ravel()], axis=1) * (r / per_radius)
        off = off[np.linalg.norm(off, axis=1) <= r]
    return off


def _ball_values(fld, point, r):
    point = np.atleast_1d(np.asarray(point, dtype=float))
    vals = mesh.interpolate(fld, point[None, :] + _ball_lattice(fld.grid.dim, r))
    if not np.all(np.isfinite(vals)):
        return None
    return vals


def density_ratios(fld: mesh.ScalarField, point, radii, theta_pos=None) -> np.ndarray:
    """|B_r(p) n {u > theta}| / |B_r|; NaN for radii whose ball leaves the domain."""
    theta = mesh.default_theta(fld.grid) if theta_pos is None else theta_pos
    out = []
    for r in radii:
        vals = _ball_values(fld, point, r)
        if vals is None:
            warnings.warn(f"ball of radius {r} leaves the domain; skipped")
            out.append(np.nan)
        else:
            out.append(float(np.mean(vals > theta)))
    return np.array(out)


def nondegeneracy(fld: mesh.ScalarField, point, radii, gamma=1.0) -> dict:
    """v(r) = (mean over B_r(p) of (u+)^gamma)^(1/gamma) / r."""
    if gamma < 1:
        raise InvalidParameter("gamma must be >= 1")
    vals = []
    for r in radii:
        u = _ball_values(fld, point, r)
        if u is None:
            warnings.warn(f"ball of radius {r} leaves the domain; skipped")
            vals.append(np.nan)
            continue
        m = np.mean(np.maximum(u, 0.0) ** gamma)
        vals.append(float(m ** (1.0 / gamma) / r))
    vals = np.array(vals)
    fin = vals[np.isfinite(vals)]
    return {"radii": np.asarray(radii, dtype=float), "values": vals,
            "min": float(fin.min()) if fin.size else np.nan,
            "max": float(fin.max()) if fin.size else np.nan}


def linear_growth(fld: mesh.ScalarField, fb: FreeBoundary, theta_pos=None, max_dist=None) -> dict:
    """Ratios u(x) / dist(x, FB) over positive nodes (optionally dist <= max_dist)."""
    grid = fld.grid
    theta = mesh.default_theta(grid) if theta_pos is None else theta_pos
    sel = grid.active & (fld.values > theta)
    pts = grid.coords[sel]
    dist = fb.distance(pts)
    keep = dist > 0
    if max_dist is not None:
        keep &= dist <= max_dist
    ratios = fld.values[sel][keep] / dist[keep]
    if ratios.size == 0:
        return {"ratios": ratios, "min": np.nan, "max": np.nan, "histogram": ([], [])}
    counts, edges = np.histogram(ratios, bins=10)
    return {"ratios": ratios, "dist": dist[keep], "min": float(ratios.min()),
            "max": float(ratios.max()), "histogram": (counts.tolist(), edges.tolist())}


# ---------------------------------------------------------------------------
# blow-up

def _unit_stencil(dim):
    if dim == 1:
        return np.linspace(-1.0, 1.0, 33)[:, None]
    return _ball_lattice(2, 1.0, 8)


def _fit_halfplane(X, v, dim):
    """Least squares v ~ lam (x.nu)^- over lam >= 0 and unit nu."""

    def best(nu):
        a = np.maximum(-(X @ nu), 0.0)
        aa = a @ a
        lam = max(0.0, (a @ v) / aa) if aa > 0 else 0.0
        return lam, float(np.sqrt(np.mean((v - lam * a) ** 2)))

    if dim == 1:
        cands = [np.array([1.0]), np.array([-1.0])]
        fits = [best(nu) for nu in cands]
        k = int(np.argmin([f[1] for f in fits]))
        return fits[k][0], cands[k], fits[k][1]
    angles = np.linspace(0.0, 2 * np.pi, 72, endpoint=False)
    unit = lambda th: np.array([np.cos(th), np.sin(th)])
    coarse = [best(unit(th))[1] for th in angles]
    th0 = angles[int(np.argmin(coarse))]
    step = angles[1] - angles[0]
    res = optimize.minimize_scalar(lambda th: best(unit(th))[1],
                                   bounds=(th0 - step, th0 + step), method="bounded",
                                   options={"xatol": 1e-10})
    th = res.x if res.fun <= min(coarse) else th0
    lam, rms = best(unit(th))
    return lam, unit(th), rms


def blowup_fit(fld: mesh.ScalarField, point, rho_list) -> list:
    """Fit u_rho(x) = u(p + rho x) / rho to lam (x.nu)^- on |x| <= 1.

    ``residual`` is the RMS misfit divided by the fitted lam, so it is
    comparable with the interpolation floor 2h / rho.  ``nu`` points into
    the zero phase.
    """
    grid = fld.grid
    point = np.atleast_1d(np.asarray(point, dtype=float))
    X0 = _unit_stencil(grid.dim)
    out = []
    for rho in rho_list:
        scale = 1.0
        vals = mesh.interpolate(fld, point + rho * X0)
        shrinks = 0
        while not np.all(np.isfinite(vals)) and shrinks < 6:
            scale *= 0.8
            shrinks += 1
            vals = mesh.interpolate(fld, point + rho * scale * X0)
        if not np.all(np.isfinite(vals)):
            warnings.warn(f"blow-up stencil at rho={rho} leaves the domain; skipped")
            continue
        if shrinks:
            warnings.warn(f"blow-up stencil at rho={rho} shrunk to {scale:.3g}")
        X = scale * X0
        lam, nu, rms = _fit_halfplane(X, vals / rho, grid.dim)
        out.append({"rho": float(rho), "lambda": float(lam), "nu": nu.tolist(),
                    "residual": float(rms / lam) if lam > 0 else float("inf"),
                    "rms": float(rms), "noise_floor": float(2 * grid.h / rho),
                    "stencil_scale": scale})
    return out


# ---------------------------------------------------------------------------
# cell-based quantities

def _cell_geometry(grid):
    """Centroids and node-incidence (row-normalised) of the gradient cells."""
    inc = None
    for D in grid.grad_ops:
        a = abs(D)
        inc = a if inc is None else inc + a
    inc = (inc > 0).astype(float).tocsr()
    counts = np.asarray(inc.sum(axis=1)).ravel()
    return inc, counts


def phi_average(fld: mesh.ScalarField, nf, point, radii, lambda_ref, theta_pos=None) -> np.ndarray:
    """Mean of (Phi(lambda_ref) - Phi(|grad u|))^+ over the cells in B_r(p)
    that lie inside the positive phase (all vertices above theta).

    Cells cut by the free boundary carry the slope of a partial layer, not
    of u, and are left out.
    """
    grid = fld.grid
    theta = mesh.default_theta(grid) if theta_pos is None else theta_pos
    inc, counts = _cell_geometry(grid)
    centroids = (inc @ grid.coords) / counts[:, None]
    grads, w = mesh.gradient_cells(fld)
    t = np.linalg.norm(grads, axis=1)
    gap = np.maximum(orlicz.phi(nf, lambda_ref) - orlicz.phi(nf, t), 0.0)
    # cells inside the positive phase: every vertex above theta
    positive = (inc @ (fld.values <= theta).astype(float)) == 0
    dist = np.linalg.norm(centroids - np.atleast_1d(point)[None, :], axis=1)
    out = []
    for r in radii:
        sel = positive & (dist <= r)
        out.append(float(w[sel] @ gap[sel] / w[sel].sum()) if sel.any() else np.nan)
    return np.array(out)


def l_residual(fld: mesh.ScalarField, nf, theta_pos=None, fb=None, min_dist=None) -> dict:
    """Discrete div(g(|grad u|) grad u / |grad u|) at interior nodes where u and
    all cell neighbours are positive and dist(x, FB) > min_dist (default 3h).

    Computed as minus the derivative of the Dirichlet sum divided by the
    lumped nodal weight.
    """
    grid = fld.grid
    theta = mesh.default_theta(grid) if theta_pos is None else theta_pos
    _, dD, _ = energy.smoothed_dirichlet(fld, nf, 0.0)
    inc, _ = _cell_geometry(grid)
    nodal_w = inc.T @ (grid.grad_weights / np.asarray(inc.sum(axis=1)).ravel())
    pos = grid.active & (fld.values > theta)
    # a node qualifies if every node sharing a cell with it is positive
    nbr_bad = (inc.T @ (inc @ (~pos).astype(float))) > 0
    mask = grid.interior & pos & ~nbr_bad
    if min_dist is None:
        min_dist = 3.0 * grid.h
    if fb is None:
        try:
            fb = extract_fb(fld, theta)
        except NoFreeBoundary:
            fb = None
    if fb is not None and mask.any():
        d = np.full(grid.n_nodes, np.inf)
        d[mask] = fb.distance(grid.coords[mask])
        mask &= d > min_dist
    res = np.full(grid.n_nodes, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        res[mask] = -dD[mask] / nodal_w[mask]
    sup = float(np.max(np.abs(res[mask]))) if mask.any() else 0.0
    return {"residual": res, "mask": mask, "sup": sup}


# ---------------------------------------------------------------------------
# report

@dataclass
class FBReport:
    lambda_samples: np.ndarray
    lambda_mean: float
    lambda_cv: float
    q_u_mean: float
    lambda_sensitivity: dict
    density_ratios: list = field(default_factory=list)
    nondegeneracy_stats: list = field(default_factory=list)
    blowup_residuals: list = field(default_factory=list)
    phi_averages: dict = field(default_factory=dict)
    linear_growth: dict = field(default_factory=dict)
    l_residual_sup: float = float("nan")
    brackets: dict = field(default_factory=dict)

    def to_dict(self):
        def clean(x):
            if isinstance(x, np.ndarray):
                return [clean(v) for v in x.tolist()]
            if isinstance(x, dict):
                return {str(k): clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            if isinstance(x, (float, np.floating)):
                x = float(x)
                return x if np.isfinite(x) else None
            if isinstance(x, np.integer):
                return int(x)
            return x

        return clean({
            "lambda_samples": self.lambda_samples,
            "lambda_mean": self.lambda_mean,
            "lambda_cv": self.lambda_cv,
            "q_u_mean": self.q_u_mean,
            "lambda_sensitivity": self.lambda_sensitivity,
            "density_ratios": self.density_ratios,
            "nondegeneracy_stats": self.nondegeneracy_stats,
            "blowup_residuals": self.blowup_residuals,
            "phi_averages": self.phi_averages,
            "linear_growth": {k: v for k, v in self.linear_growth.items() if k in ("min", "max", "histogram")},
            "l_residual_sup": self.l_residual_sup,
            "brackets": self.brackets,
        })

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _spread(n, k):
    """k indices spread evenly over range(n)."""
    if n <= k:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, k).round().astype(int))


def build_report(fld: mesh.ScalarField, nf, theta_pos=None, d=None, max_points=12) -> FBReport:
    """Run every diagnostic on a field; ball-based ones on up to ``max_points``
    FB points spread along the boundary."""
    grid = fld.grid
    h = grid.h
    theta = mesh.default_theta(grid) if theta_pos is None else theta_pos
    fb = extract_fb(fld, theta)
    est = estimate_lambda(fld, fb, d)
    lam = est["lambda_mean"]
    sens = {}
    for k in (1, 2, 3):
        try:
            sens[f"{k}h"] = estimate_lambda(fld, fb, k * h)["lambda_mean"]
        except NoFreeBoundary:
            sens[f"{k}h"] = float("nan")
    radii = [4 * h, 8 * h, 16 * h]
    rhos = [8 * h, 4 * h, 2 * h]
    dyadic = [32 * h, 16 * h, 8 * h, 4 * h]
    dens, nondeg, blow, phis = [], [], [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i in _spread(len(fb), max_points):
            p = fb.points[i]
            dens.append({"point": p, "radii": radii, "ratios": density_ratios(fld, p, radii, theta)})
            nd = nondegeneracy(fld, p, radii)
            nondeg.append({"point": p, **nd})
            blow.append({"point": p, "fits": blowup_fit(fld, p, rhos)})
            phis.append(phi_average(fld, nf, p, dyadic, lam, theta))
    phis = np.array(phis)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        phi_mean = np.nanmean(phis, axis=0) if len(phis) else np.full(len(dyadic), np.nan)
    lg = linear_growth(fld, fb, theta)
    lres = l_residual(fld, nf, theta, fb)
    return FBReport(
        lambda_samples=est["samples"],
        lambda_mean=lam,
        lambda_cv=est["lambda_cv"],
        q_u_mean=float(nf.g(lam)),
        lambda_sensitivity=sens,
        density_ratios=dens,
        nondegeneracy_stats=nondeg,
        blowup_residuals=blow,
        phi_averages={"radii": dyadic, "mean": phi_mean},
        linear_growth=lg,
        l_residual_sup=lres["sup"],
        brackets={"density": [0.05, 0.95], "nondegeneracy_over_lambda": [0.05, 5.0],
                  "lambda_cv_max": 0.10},
    )
