"""Minimisation of the penalised energy over fields with fixed Dirichlet data.

The method is a scaled projected gradient descent with Armijo backtracking,
run in stages of decreasing smoothing (s_grad, s_vol).  Details:

* Metric.  Each step is preconditioned by the lagged-diffusivity matrix
  K_a = sum_c w_c a_s(|grad u|_c) grad(phi)^T grad(phi), restricted to the
  free nodes.  Nodes at a bound whose gradient points outward are held fixed
  (two-metric projection), the rest are clipped to [0, max phi0].
* Volume kink.  F_eps has slope eps below alpha and 1/eps above.  The step
  minimises the model  g_D.d + d.K_a.d/2 + F_eps(V + g_V.d),  which picks the
  slope mu in [eps, 1/eps] in closed form; when the model lands on the kink
  the step keeps the smoothed volume at alpha.
* Truncation.  Clipping to [0, max phi0] never increases the energy, and is
  applied to every trial point.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

from . import energy, mesh
from .errors import InvalidParameter, NoFreeBoundary, NumericError

log = logging.getLogger(__name__)

__all__ = ["SolveConfig", "SolveResult", "initialize", "minimize"]

INIT_STRATEGIES = ("gEllipticExtend", "linearDecay")


@dataclass
class SolveConfig:
    s_grad_init: float | None = None   # default 0.5 max(phi0) / diam
    s_vol_init: float | None = None    # default 0.25 max(phi0)
    continuation_factor: float = 0.5
    s_min_factor: float = 0.125        # last stage at s <= factor * h (scaled)
    max_outer: int = 40
    max_inner: int = 200
    armijo_c: float = 1e-4
    grad_tol: float = 1e-6
    init_strategy: str = "linearDecay"
    rng_seed: int = 0
    restarts: int = 0
    restart_noise: float = 0.05

    def __post_init__(self):
        if not 0 < self.continuation_factor < 1:
            raise InvalidParameter("continuation_factor must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise InvalidParameter("armijo_c must lie in (0, 1)")
        if not (self.grad_tol > 0 and self.s_min_factor > 0):
            raise InvalidParameter("tolerances must be > 0")
        if self.init_strategy not in INIT_STRATEGIES:
            raise InvalidParameter(f"init_strategy must be one of {INIT_STRATEGIES}")
        if self.max_outer < 1 or self.max_inner < 1 or self.restarts < 0:
            raise InvalidParameter("iteration limits must be positive")

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in (d or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self):
        return asdict(self)


@dataclass
class SolveResult:
    field: mesh.ScalarField
    breakdown: energy.EnergyBreakdown
    iterations: int
    converged: bool
    stationarity: float
    lambda_estimate: float | None
    history: list = field(default_factory=list, repr=False)   # smoothed objective per stage
    stages: list = field(default_factory=list, repr=False)    # (s_grad, s_vol, iters, stationarity)
    wall_time: float = 0.0
    rounded_nodes: int = 0                                    # zeroed by the final support snap

    def to_dict(self):
        return {
            "energy": self.breakdown.to_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
            "stationarity": self.stationarity,
            "lambda_estimate": self.lambda_estimate,
            "stages": [list(s) for s in self.stages],
            "wall_time": self.wall_time,
            "rounded_nodes": self.rounded_nodes,
        }


# ---------------------------------------------------------------------------
# helpers

def _scales(grid, cfg):
    M = grid.max_phi if grid.max_phi > 0 else 1.0
    grad_scale = M / grid.diameter
    sg0 = cfg.s_grad_init if cfg.s_grad_init is not None else 0.5 * grad_scale
    sv0 = cfg.s_vol_init if cfg.s_vol_init is not None else 0.25 * M
    sg_min = min(sg0, cfg.s_min_factor * grid.h * grad_scale)
    sv_min = min(sv0, cfg.s_min_factor * grid.h * M)
    return sg0, sv0, sg_min, sv_min


def _metric(grid, a, w):
    a = np.maximum(a, 1e-8 * max(float(a.max()), 1e-300))
    K = None
    for D in grid.grad_ops:
        term = D.T @ sp.diags(w * a) @ D
        K = term if K is None else K + term
    return K.tocsc()


class _Factor:
    """splu of K_a on the free nodes.

    The factorisation is reused while the free set is unchanged and the
    cell coefficients stay within a factor ``1 + tol`` of the ones it was
    built from; the lagged metric is only a preconditioner, so a nearby one
    serves as well and Armijo still guarantees descent.
    """

    def __init__(self, tol=0.25):
        self.tol = tol
        self.a = None
        self.K = None
        self.free_key = None
        self.lu = None

    def _close(self, a):
        if self.a is None or self.a.shape != a.shape:
            return False
        if np.array_equal(a, self.a):
            return True
        floor = 1e-8 * max(float(self.a.max()), 1e-300)
        ratio = np.maximum(a, floor) / np.maximum(self.a, floor)
        return bool(np.all(np.abs(ratio - 1.0) <= self.tol))

    def get(self, grid, a, free):
        fkey = free.tobytes()
        if not self._close(a):
            self.a = a.copy()
            self.K = _metric(grid, a, grid.grad_weights).tocsr()
            self.free_key = None
        if fkey != self.free_key:
            idx = np.nonzero(free)[0]
            self.lu = splu(self.K[idx][:, idx].tocsc(), permc_spec="MMD_AT_PLUS_A",
                           diag_pivot_thresh=0.0, options={"SymmetricMode": True})
            self.free_key = fkey
        return self.lu


class _Problem:
    def __init__(self, grid, nf, pp, s_grad, s_vol):
        self.grid, self.nf, self.pp = grid, nf, pp
        self.s_grad, self.s_vol = s_grad, s_vol

    def value(self, u):
        f = mesh.ScalarField(self.grid, u)
        d, _, _ = energy.smoothed_dirichlet(f, self.nf, self.s_grad)
        return d + energy.f_eps(mesh.smoothed_volume(f, self.s_vol), self.pp)

    def parts(self, u):
        f = mesh.ScalarField(self.grid, u)
        d, gd, a = energy.smoothed_dirichlet(f, self.nf, self.s_grad)
        v, gv = mesh.smoothed_volume_grad(f, self.s_vol)
        gv = np.where(self.grid.interior, gv, 0.0)
        return d, gd, a, v, gv


def _choose_slope(V, a_, q, pp):
    """Slope of F_eps minimising the quadratic model along the scaled step."""
    lo, hi = pp.eps, 1.0 / pp.eps
    if lo >= hi or q <= 0:
        return energy.f_eps_slope(V, pp)
    # model volume after the step: V - (a_ + mu q), decreasing in mu
    if V - (a_ + hi * q) >= pp.alpha:
        return hi
    if V - (a_ + lo * q) <= pp.alpha:
        return lo
    return (V - pp.alpha - a_) / q


def _stage(u, prob, cfg, upper, factor, tol):
    """Run one continuation stage in place; returns (u, history, iters, stationarity)."""
    grid, pp = prob.grid, prob.pp
    interior = grid.interior
    hist = []
    stat = np.inf
    it = 0
    for it in range(1, cfg.max_inner + 1):
        d_val, gd, a, V, gv = prob.parts(u)
        f0 = d_val + energy.f_eps(V, pp)
        if not np.isfinite(f0):
            raise NumericError("non-finite energy during minimisation")
        hist.append(f0)
        g0 = gd + energy.f_eps_slope(V, pp) * gv
        held = interior & (((u <= 0) & (g0 > 0)) | ((u >= upper) & (g0 < 0)))
        # the chosen slope mu can flip the direction at bound nodes; hold those
        # too until the free set and the step agree
        for _ in range(20):
            free = interior & ~held
            if not free.any():
                break
            lu = factor.get(grid, a, free)
            Pgd = lu.solve(gd[free])
            Pgv = lu.solve(gv[free])
            a_ = float(gv[free] @ Pgd)
            q = float(gv[free] @ Pgv)
            mu = _choose_slope(V, a_, q, pp)
            d = np.zeros_like(u)
            d[free] = -(Pgd + mu * Pgv)
            wrong = free & (((u <= 0) & (d < 0)) | ((u >= upper) & (d > 0)))
            if not wrong.any():
                break
            held |= wrong
        if not free.any():
            stat = 0.0
            break

        def trial(t):
            ut = np.clip(u + t * d, 0.0, upper)
            ut[~interior] = u[~interior]
            return ut

        full = trial(1.0)
        stat = float(np.max(np.abs(full - u)))
        if stat <= tol:
            break
        t = 1.0
        accepted = False
        for _ in range(60):
            ut = full if t == 1.0 else trial(t)
            step = ut - u
            pred = gd @ step + energy.f_eps(V + gv @ step, pp) - energy.f_eps(V, pp)
            if pred < 0:
                ft = prob.value(ut)
                if ft <= f0 + cfg.armijo_c * pred:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
        u = ut
    else:
        hist.append(prob.value(u))
    if len(hist) == 0 or hist[-1] != prob.value(u):
        hist.append(prob.value(u))
    return u, hist, it, stat


# ---------------------------------------------------------------------------
# initialisation

def _dirichlet_only(grid, nf, u, s_grad, iters, free=None):
    """Projected steps on the smoothed Dirichlet term alone, moving only
    ``free`` nodes (default: all interior nodes)."""
    pp = energy.PenaltyParams(1.0, grid.measure)
    prob = _Problem(grid, nf, pp, s_grad, 1.0)
    upper = grid.max_phi
    factor = _Factor()
    interior = grid.interior if free is None else free
    free = interior
    for _ in range(iters):
        d_val, gd, a, _, _ = prob.parts(u)
        lu = factor.get(grid, a, free)
        d = np.zeros_like(u)
        d[free] = -lu.solve(gd[free])
        if np.max(np.abs(d)) <= 1e-12 * max(upper, 1.0):
            break
        f0 = d_val
        t = 1.0
        for _ in range(60):
            ut = np.clip(u + t * d, 0.0, upper)
            ut[~interior] = u[~interior]
            val, _, _ = energy.smoothed_dirichlet(mesh.ScalarField(grid, ut), nf, s_grad)
            if val <= f0 + 1e-4 * (gd @ (ut - u)):
                break
            t *= 0.5
        else:
            break
        u = ut
    return u


def _linear_start(grid):
    u = grid.zeros().values.copy()
    if grid.dim == 1:
        x = grid.coords[:, 0]
        a, b = x[0], x[-1]
        left, right = grid.dirichlet_values[0], grid.dirichlet_values[-1]
        return left + (right - left) * (x - a) / (b - a)
    # discrete harmonic extension of the boundary data
    interior = grid.interior
    K = _metric(grid, np.ones(grid.grad_weights.size), grid.grad_weights)
    idx, bidx = np.nonzero(interior)[0], np.nonzero(grid.boundary)[0]
    rhs = -(K[idx][:, bidx] @ grid.dirichlet_values[bidx])
    u[idx] = splu(K[idx][:, idx].tocsc()).solve(rhs)
    return u


def _decay_profile(grid, L, dist, near):
    A = np.nonzero(grid.positive_set)[0]
    u = grid.dirichlet_values[A][near] * np.clip(1.0 - dist / L, 0.0, None)
    u = np.where(grid.active, u, 0.0)
    u[grid.boundary] = grid.dirichlet_values[grid.boundary]
    return u


def initialize(grid, nf, cfg: SolveConfig | None = None, alpha=None) -> mesh.ScalarField:
    """Starting field with the Dirichlet data in place.

    ``gEllipticExtend`` minimises the Dirichlet term alone (no penalty),
    starting from the linear interpolant (1D) or the discrete harmonic
    extension (2D), for up to 200 steps at ``s_grad_init``.
    ``linearDecay`` decays linearly with the distance to the positive part
    of the boundary; the decay length is tuned so that the positive set has
    measure ``alpha`` when that is given.
    """
    cfg = cfg or SolveConfig()
    if not grid.positive_set.any():
        return grid.zeros()
    upper = grid.max_phi
    if cfg.init_strategy == "gEllipticExtend":
        sg0, _, _, _ = _scales(grid, cfg)
        u = np.clip(_linear_start(grid), 0.0, upper)
        u[grid.boundary] = grid.dirichlet_values[grid.boundary]
        u = _dirichlet_only(grid, nf, u, sg0, 200)
        return mesh.ScalarField(grid, u)
    diam = grid.diameter
    dist, near = cKDTree(grid.coords[grid.positive_set]).query(grid.coords)
    if alpha is None or alpha >= grid.measure * (1 - 1e-12):
        L = 2.0 * diam if alpha else 0.5 * diam
        return mesh.ScalarField(grid, _decay_profile(grid, L, dist, near))
    lo, hi = 0.0, 2.0 * diam
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        vol = mesh.positivity_volume(mesh.ScalarField(grid, _decay_profile(grid, mid, dist, near)))
        if vol < alpha:
            lo = mid
        else:
            hi = mid
    L = lo if lo > 0 else hi
    return mesh.ScalarField(grid, _decay_profile(grid, L, dist, near))


# ---------------------------------------------------------------------------
# driver

def _run(grid, nf, pp, cfg, u0, theta_pos):
    sg0, sv0, sg_min, sv_min = _scales(grid, cfg)
    upper = grid.max_phi
    u = np.clip(u0.values.copy(), 0.0, upper)
    u[grid.boundary] = grid.dirichlet_values[grid.boundary]
    u[~grid.active] = 0.0
    sg, sv = sg0, sv0
    history, stages = [], []
    total = 0
    stat = np.inf
    factor = _Factor()
    for k in range(cfg.max_outer):
        last = sg <= sg_min * (1 + 1e-12) and sv <= sv_min * (1 + 1e-12)
        prob = _Problem(grid, nf, pp, sg, sv)
        scale = 1.0 + abs(prob.value(u))
        u, hist, its, stat = _stage(u, prob, cfg, upper, factor, cfg.grad_tol * scale)
        history.append(hist)
        stages.append((sg, sv, its, stat))
        total += its
        log.debug("stage %d s_grad=%.3g s_vol=%.3g iters=%d stat=%.3g f=%.10g",
                  k, sg, sv, its, stat, hist[-1])
        if last:
            break
        sg = max(sg * cfg.continuation_factor, sg_min)
        sv = max(sv * cfg.continuation_factor, sv_min)
    converged = last and stat <= cfg.grad_tol * (1.0 + abs(energy.j_eps(
        mesh.ScalarField(grid, u), nf, pp, theta_pos).total))
    out, bd, removed = _round_support(u, grid, nf, pp, sg, theta_pos)
    return out, bd, total, bool(converged), stat, history, stages, removed


def _round_support(u, grid, nf, pp, s_grad, theta_pos):
    """Snap the cell-counted volume onto the admissible side of alpha.

    The smoothed volume counts cells in the ramp fractionally, while the
    exact count takes every cell with a positive corner.  Candidates zero the
    k smallest positive interior nodes (k = 0, and the two k bracketing
    alpha), re-minimise the Dirichlet term with that support fixed, and the
    lowest exact J_eps is kept, including the unmodified field.
    Returns (field, breakdown, k).
    """
    def score(v):
        f = mesh.ScalarField(grid, v)
        return f, energy.j_eps(f, nf, pp, theta_pos)

    best_f, best_bd = score(u)
    best_k = 0
    pos = np.nonzero(grid.interior & (u > theta_pos))[0]
    if pos.size == 0:
        return best_f, best_bd, 0
    order = pos[np.argsort(u[pos], kind="stable")]

    def zeroed(k):
        v = u.copy()
        v[order[:k]] = 0.0
        return v

    def volume(k):
        return mesh.positivity_volume(mesh.ScalarField(grid, zeroed(k)), theta_pos)

    lo, hi = 0, order.size
    if volume(0) <= pp.alpha:
        ks = [0]
    else:
        while hi - lo > 1:          # smallest k with volume(k) <= alpha
            mid = (lo + hi) // 2
            if volume(mid) <= pp.alpha:
                hi = mid
            else:
                lo = mid
        ks = sorted({0, lo, hi})
    for k in ks:
        v = zeroed(k)
        free = grid.interior & (v > theta_pos)
        if free.any():
            v = _dirichlet_only(grid, nf, v, s_grad, 50, free)
        f, bd = score(v)
        if bd.total < best_bd.total:
            best_f, best_bd, best_k = f, bd, k
    return best_f, best_bd, best_k


def minimize(grid, nf, pp: energy.PenaltyParams, cfg: SolveConfig | None = None,
             init: mesh.ScalarField | None = None, theta_pos=None) -> SolveResult:
    """Minimise J_eps over fields equal to phi0 on the boundary.

    Runs from ``init`` (or :func:`initialize`) and then from ``cfg.restarts``
    further starts: the cold initial field when ``init`` was given, and
    seeded perturbations of it.  The run with the lowest exact J_eps wins.
    Non-convergence is reported through ``converged``, not raised.
    """
    cfg = cfg or SolveConfig()
    pp.check_against(grid)
    if theta_pos is None:
        theta_pos = mesh.default_theta(grid)
    t_start = time.perf_counter()
    starts = []
    cold = initialize(grid, nf, cfg, pp.alpha)
    starts.append(init if init is not None else cold)
    rng = np.random.default_rng(cfg.rng_seed)
    for k in range(cfg.restarts):
        if init is not None and k == 0:
            starts.append(cold)
            continue
        noise = rng.standard_normal(grid.n_nodes) * cfg.restart_noise * max(grid.max_phi, 1.0)
        vals = np.where(grid.interior, cold.values + noise, cold.values)
        starts.append(mesh.ScalarField(grid, vals))
    best = None
    total_iters = 0
    for u0 in starts:
        run = _run(grid, nf, pp, cfg, u0, theta_pos)
        total_iters += run[2]
        if best is None or run[1].total < best[1].total:
            best = run
    out, bd, _, converged, stat, history, stages, removed = best
    lam = None
    try:
        from . import fbtools
        fb = fbtools.extract_fb(out, theta_pos)
        lam = fbtools.estimate_lambda(out, fb, 2.0 * grid.h)["lambda_mean"]
    except NoFreeBoundary:
        pass
    return SolveResult(out, bd, total_iters, converged, stat, lam, history, stages,
                       time.perf_counter() - t_start, removed)
