"""Reference solutions: the 1D ramp and the radial annulus profile."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from . import mesh, orlicz
from .errors import InvalidParameter, NumericError

__all__ = ["OneDSolution", "RadialSolution", "solve_1d_exact", "solve_radial"]


@dataclass(frozen=True)
class OneDSolution:
    phi_left: float
    alpha: float
    lam: float
    J: float

    def __call__(self, x):
        return self.phi_left * np.clip(1.0 - np.asarray(x, dtype=float) / self.alpha, 0.0, None)

    def on_grid(self, grid) -> mesh.ScalarField:
        return mesh.ScalarField(grid, self(grid.coords[:, 0]))

    def to_dict(self):
        return {"kind": "1d", "phi_left": self.phi_left, "alpha": self.alpha,
                "lambda": self.lam, "J": self.J, "volume": self.alpha}


def solve_1d_exact(phi_left, alpha, nf, phi_right=0.0) -> OneDSolution:
    """Minimiser on [0, 1] with u(0) = phi_left, u(1) = 0 and |{u > 0}| = alpha.

    For any admissible u, Jensen gives int G(|u'|) >= alpha G(phi_left / alpha),
    with equality for the linear ramp, whatever the convex G.
    """
    if not phi_left > 0:
        raise InvalidParameter("phi_left must be > 0")
    if phi_right != 0:
        raise InvalidParameter("phi_right must be 0")
    if not 0 < alpha <= 1:
        raise InvalidParameter("alpha must lie in (0, 1]")
    lam = phi_left / alpha
    return OneDSolution(float(phi_left), float(alpha), float(lam), float(alpha * nf.G(lam)))


@dataclass(frozen=True)
class RadialSolution:
    R: float
    phi_boundary: float
    alpha: float
    N: int
    r_star: float
    flux_constant: float
    lam: float
    J: float
    r: np.ndarray
    u: np.ndarray
    nf: orlicz.NFunction

    def slope(self, r):
        r = np.asarray(r, dtype=float)
        return orlicz.g_inverse(self.nf, self.flux_constant / r ** (self.N - 1))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.interp(r, self.r, self.u, left=0.0, right=self.phi_boundary)

    def on_grid(self, grid, center=(0.0, 0.0)) -> mesh.ScalarField:
        rr = np.hypot(grid.coords[:, 0] - center[0], grid.coords[:, 1] - center[1])
        vals = np.where(grid.active, self(rr), 0.0)
        vals[grid.boundary] = grid.dirichlet_values[grid.boundary]
        return mesh.ScalarField(grid, vals)

    def to_dict(self):
        return {"kind": "radial", "R": self.R, "phi_boundary": self.phi_boundary,
                "alpha": self.alpha, "N": self.N, "r_star": self.r_star,
                "flux_constant": self.flux_constant, "lambda": self.lam, "J": self.J}


def _sphere_area(N):
    # |S^{N-1}|: 2 in 1D, 2 pi in 2D, 4 pi in 3D
    from math import gamma, pi
    return 2 * pi ** (N / 2) / gamma(N / 2)


def _ball_volume(N):
    return _sphere_area(N) / N


def solve_radial(R, phi_boundary, alpha, nf, N=2, n_table=401) -> RadialSolution:
    """Radial minimiser on B_R with u = phi_boundary on the sphere and
    positivity set the annulus r_star < r < R of measure alpha.

    On the annulus g(u'(r)) r^(N-1) = C; C is fixed by u(R) = phi_boundary.
    """
    if not (R > 0 and phi_boundary > 0 and N >= 1):
        raise InvalidParameter("need R > 0, phi_boundary > 0, N >= 1")
    wN = _ball_volume(N)
    if not 0 < alpha < wN * R ** N:
        raise InvalidParameter(f"alpha must lie in (0, {wN * R ** N})")
    r_star = (R ** N - alpha / wN) ** (1.0 / N)

    def rise(C, a=r_star, b=R):
        f = lambda r: float(orlicz.g_inverse(nf, C / r ** (N - 1)))
        val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-11, limit=200)
        return val

    # rise(C) is increasing in C; bracket by doubling / halving from 1
    lo = hi = 1.0
    for _ in range(2000):
        if rise(hi) >= phi_boundary:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NumericError("could not bracket the flux constant")
    for _ in range(2000):
        if rise(lo) <= phi_boundary:
            break
        lo, hi = 0.5 * lo, lo
    else:
        raise NumericError("could not bracket the flux constant")
    try:
        C = optimize.brentq(lambda c: rise(c) - phi_boundary, lo, hi, xtol=1e-300, rtol=1e-13, maxiter=300)
    except ValueError as exc:
        raise NumericError(f"flux constant bracket failed: {exc}") from exc
    lam = float(orlicz.g_inverse(nf, C / r_star ** (N - 1)))

    r = np.linspace(r_star, R, n_table)
    slope = lambda s: float(orlicz.g_inverse(nf, C / s ** (N - 1)))
    width = r - r_star

    def table_integrand(s):
        return orlicz.g_inverse(nf, C / (r_star + s * width) ** (N - 1)) * width

    u, _ = integrate.quad_vec(table_integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-11)
    area = _sphere_area(N)
    J = area * integrate.quad(lambda s: float(nf.G(slope(s))) * s ** (N - 1), r_star, R,
                              epsabs=0.0, epsrel=1e-11, limit=200)[0]
    return RadialSolution(float(R), float(phi_boundary), float(alpha), int(N), float(r_star),
                          float(C), lam, float(J), r, u, nf)
