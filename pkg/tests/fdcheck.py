"""Central-difference oracle for the smoothed-energy gradient.

Fields are drawn so that no cell sits within reach of a kink of the volume
ramp and the smoothed volume stays away from alpha; there the smoothed
objective is C^2 and central differences are accurate to O(d^2).
"""

import numpy as np

from orliczfb import energy, mesh


def random_case(grid, rng, nf):
    """(field, pp, s_grad, s_vol) with every kink at least 1e-4 away."""
    d = 1e-6
    while True:
        v = np.where(grid.interior, rng.uniform(0.05, 1.0, grid.n_nodes), grid.dirichlet_values)
        f = grid.field(v)
        s_vol = rng.uniform(0.2, 0.8)
        ubar = mesh.center_values(f)
        if np.min(np.abs(ubar - s_vol)) < 1e-4 + d:
            continue
        vol = mesh.smoothed_volume(f, s_vol)
        alpha = vol * rng.choice([0.5, 1.5]) if vol * 1.5 <= grid.measure else 0.5 * vol
        pp = energy.PenaltyParams(float(rng.choice([1e-2, 0.3, 1.0])), alpha)
        return f, pp, rng.uniform(0.05, 1.0), s_vol


def fd_gradient(f, nf, pp, s_grad, s_vol, d=1e-6):
    out = np.zeros(f.grid.n_nodes)
    v = f.values
    for k in np.nonzero(f.grid.interior)[0]:
        vp, vm = v.copy(), v.copy()
        vp[k] += d
        vm[k] -= d
        jp = energy.j_eps_smoothed(f.with_values(vp), nf, pp, s_grad, s_vol)
        jm = energy.j_eps_smoothed(f.with_values(vm), nf, pp, s_grad, s_vol)
        out[k] = (jp - jm) / (2 * d)
    return out


def relative_error(f, nf, pp, s_grad, s_vol):
    an = energy.grad_j_eps_smoothed(f, nf, pp, s_grad, s_vol)
    fd = fd_gradient(f, nf, pp, s_grad, s_vol)
    return float(np.abs(an - fd).max() / max(np.abs(fd).max(), 1e-300))
