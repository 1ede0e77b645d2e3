"""Discrete energies: the Dirichlet term sum_c w_c G(|grad u|_c), the
piecewise-linear volume penalty F_eps and their sum J_eps, plus the
regularised variant used inside the optimiser and its exact gradient.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import mesh
from .errors import InvalidParameter

__all__ = [
    "PenaltyParams",
    "EnergyBreakdown",
    "f_eps",
    "f_eps_slope",
    "dirichlet_energy",
    "smoothed_dirichlet",
    "j_eps",
    "j_eps_smoothed",
    "grad_j_eps_smoothed",
]


@dataclass(frozen=True)
class PenaltyParams:
    eps: float
    alpha: float

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidParameter(f"eps must be > 0, got {self.eps}")
        if not self.alpha > 0:
            raise InvalidParameter(f"alpha must be > 0, got {self.alpha}")

    def check_against(self, grid):
        # alpha == |Omega| is allowed: the constraint is then trivially met
        if self.alpha > grid.measure * (1 + 1e-12):
            raise InvalidParameter(f"alpha={self.alpha} exceeds |Omega|={grid.measure}")


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet_energy: float
    volume: float
    penalty: float
    total: float

    def to_dict(self):
        return {"J": self.dirichlet_energy, "volume": self.volume,
                "penalty": self.penalty, "J_eps": self.total}

    @classmethod
    def from_dict(cls, d):
        return cls(d["J"], d["volume"], d["penalty"], d["J_eps"])

    def as_tuple(self):
        return tuple(asdict(self).values())


def f_eps(s: float, pp: PenaltyParams) -> float:
    """eps (s - alpha) below alpha, (s - alpha) / eps at or above."""
    d = s - pp.alpha
    return pp.eps * d if d < 0 else d / pp.eps


def f_eps_slope(s: float, pp: PenaltyParams) -> float:
    """Slope of F_eps used for gradients; the upper slope at s = alpha."""
    return pp.eps if s < pp.alpha else 1.0 / pp.eps


def _norms(field):
    grads, w = mesh.gradient_cells(field)
    return np.sqrt(np.sum(grads ** 2, axis=1)), grads, w


def dirichlet_energy(field, nf) -> float:
    t, _, w = _norms(field)
    return float(w @ nf.G(t))


def _flux_coefficient(nf, r):
    """a(r) = g(r) / r, with a(0) = 0 (only ever multiplied by a zero gradient)."""
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = nf.g(r[pos]) / r[pos]
    return out


def smoothed_dirichlet(field, nf, s_grad):
    """Value, nodal gradient and cell coefficients a_s of
    sum_c w_c G_s(|grad u|_c),  G_s(t) = G(sqrt(t^2 + s^2)) - G(s).

    The gradient is zero on Dirichlet and inactive nodes.
    """
    t, grads, w = _norms(field)
    r = np.sqrt(t * t + s_grad * s_grad)
    val = float(w @ (nf.G(r) - nf.G(s_grad))) if s_grad > 0 else float(w @ nf.G(r))
    a = _flux_coefficient(nf, r)
    g = field.grid
    out = sum(D.T @ (w * a * grads[:, k]) for k, D in enumerate(g.grad_ops))
    out = np.where(g.interior, out, 0.0)
    return val, out, a


def j_eps(field, nf, pp: PenaltyParams, theta_pos=None) -> EnergyBreakdown:
    """Exact (unsmoothed) J_eps; used for every reported number."""
    J = dirichlet_energy(field, nf)
    vol = mesh.positivity_volume(field, theta_pos)
    pen = f_eps(vol, pp)
    return EnergyBreakdown(J, vol, pen, J + pen)


def j_eps_smoothed(field, nf, pp: PenaltyParams, s_grad: float, s_vol: float) -> float:
    if not (s_grad > 0 and s_vol > 0):
        raise InvalidParameter("smoothing scales must be > 0")
    val, _, _ = smoothed_dirichlet(field, nf, s_grad)
    return val + f_eps(mesh.smoothed_volume(field, s_vol), pp)


def grad_j_eps_smoothed(field, nf, pp: PenaltyParams, s_grad: float, s_vol: float):
    """Nodal gradient of :func:`j_eps_smoothed`; zero on Dirichlet nodes."""
    if not (s_grad > 0 and s_vol > 0):
        raise InvalidParameter("smoothing scales must be > 0")
    _, gd, _ = smoothed_dirichlet(field, nf, s_grad)
    vol, gv = mesh.smoothed_volume_grad(field, s_vol)
    out = gd + f_eps_slope(vol, pp) * gv
    return np.where(field.grid.interior, out, 0.0)
