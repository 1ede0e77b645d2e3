"""Sweeps over eps: one solve per value, volume attainment and slope bounds.

A *problem* is the JSON-style dict used by the command line::

    {"grid": {"domain": "interval", "n": 400, "dirichlet": {...}},
     "nfunction": {"kind": "power", "p": 2},
     "alpha": 0.5,
     "solver": {...SolveConfig fields...},
     "theta_pos": null}
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import energy, mesh, orlicz, solver
from .errors import InvalidParameter, NumericError

log = logging.getLogger(__name__)

__all__ = ["SweepResult", "COLUMNS", "build_problem", "run_sweep", "detect_eps0",
           "fit_volume_constant", "lambda_ratio"]

COLUMNS = ("eps", "volume", "lambda_mean", "lambda_cv", "J", "J_eps",
           "converged", "iterations", "wall_time")


@dataclass
class SweepResult:
    rows: list                  # dicts keyed by COLUMNS, eps descending
    alpha: float
    measure: float
    cell_measure: float
    fields: list = field(default_factory=list, repr=False)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, path=None, timing=False) -> str:
        """CSV text (and file when ``path`` is given).

        Floats are written with repr so the file round-trips exactly.  Wall
        times vary between runs, so the column is left empty unless
        ``timing`` is set; this keeps repeated sweeps byte-identical.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            out = []
            for c in COLUMNS:
                v = r[c]
                if c == "wall_time" and not timing:
                    out.append("")
                elif isinstance(v, bool):
                    out.append(str(v).lower())
                elif isinstance(v, (int, np.integer)):
                    out.append(str(int(v)))
                else:
                    out.append(repr(float(v)))
            w.writerow(out)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self, vol_tol=None) -> dict:
        tol = self.cell_measure if vol_tol is None else vol_tol
        eps0 = detect_eps0(self, tol)
        return {
            "alpha": self.alpha,
            "vol_tol": tol,
            "eps0": eps0,
            "volume_constant": fit_volume_constant(self),
            "lambda_ratio": lambda_ratio(self),
            "all_converged": all(r["converged"] for r in self.rows),
        }


def build_problem(problem: dict):
    """(grid, nf, alpha, SolveConfig, theta_pos) from a problem dict."""
    try:
        grid = mesh.grid_from_config(problem["grid"])
        nf = orlicz.from_spec(problem.get("nfunction", {"kind": "power", "p": 2}))
        alpha = float(problem["alpha"])
    except KeyError as exc:
        raise InvalidParameter(f"problem is missing {exc}") from exc
    cfg = solver.SolveConfig.from_dict(problem.get("solver"))
    return grid, nf, alpha, cfg, problem.get("theta_pos")


def _check_eps_list(eps_list):
    eps = np.asarray(eps_list, dtype=float)
    if eps.size < 2 or np.any(~(eps > 0)):
        raise InvalidParameter("eps_list needs at least two positive values")
    if eps.max() / eps.min() < 100 * (1 - 1e-12):
        raise InvalidParameter("eps_list must span at least two decades")
    return sorted(set(eps.tolist()), reverse=True)


def _failed_row(eps, t):
    nan = float("nan")
    return {"eps": eps, "volume": nan, "lambda_mean": nan, "lambda_cv": nan, "J": nan,
            "J_eps": nan, "converged": False, "iterations": 0, "wall_time": t}


def run_sweep(problem: dict, eps_list, cfg: solver.SolveConfig | None = None,
              cold_start=False) -> SweepResult:
    """Solve for every eps, largest first.

    By default each solve starts from the previous field.  When that field
    has no free boundary (positive everywhere or nowhere) the cold initial
    field is tried as well and the lower exact J_eps wins: without a
    boundary layer the warm start feels no volume force and stays put.
    ``cold_start`` drops the warm start.  A numeric failure flags its row and
    the sweep continues.
    """
    from . import fbtools

    grid, nf, alpha, pcfg, theta = build_problem(problem)
    cfg = cfg or pcfg
    eps_sorted = _check_eps_list(eps_list)
    rows, fields = [], []
    prev = None
    for eps in eps_sorted:
        pp = energy.PenaltyParams(eps, alpha)
        t0 = time.perf_counter()
        try:
            if prev is None or cold_start:
                res = solver.minimize(grid, nf, pp, cfg, theta_pos=theta)
            else:
                run_cfg = cfg if _has_free_boundary(prev, theta) else replace(
                    cfg, restarts=max(cfg.restarts, 1))
                res = solver.minimize(grid, nf, pp, run_cfg, init=prev, theta_pos=theta)
        except NumericError as exc:
            log.warning("eps=%g failed: %s", eps, exc)
            rows.append(_failed_row(eps, time.perf_counter() - t0))
            fields.append(None)
            continue
        lam_mean = lam_cv = float("nan")
        try:
            fb = fbtools.extract_fb(res.field, theta)
            est = fbtools.estimate_lambda(res.field, fb)
            lam_mean, lam_cv = est["lambda_mean"], est["lambda_cv"]
        except Exception as exc:     # no free boundary is a valid outcome
            log.info("eps=%g: no slope estimate (%s)", eps, exc)
        bd = res.breakdown
        rows.append({"eps": eps, "volume": bd.volume, "lambda_mean": lam_mean,
                     "lambda_cv": lam_cv, "J": bd.dirichlet_energy, "J_eps": bd.total,
                     "converged": res.converged, "iterations": res.iterations,
                     "wall_time": time.perf_counter() - t0})
        fields.append(res.field)
        prev = res.field
    return SweepResult(rows, alpha, grid.measure, grid.cell_measure, fields)


def _has_free_boundary(fld, theta):
    vol = mesh.positivity_volume(fld, theta)
    return 0.0 < vol < fld.grid.measure * (1 - 1e-12)


def detect_eps0(sweep: SweepResult, vol_tol=None):
    """Largest eps such that every row with eps' <= eps has |volume - alpha| <= vol_tol."""
    tol = sweep.cell_measure if vol_tol is None else vol_tol
    eps0 = None
    for r in sorted(sweep.rows, key=lambda r: r["eps"]):
        if not abs(r["volume"] - sweep.alpha) <= tol:
            break
        eps0 = r["eps"]
    return eps0


def fit_volume_constant(sweep: SweepResult) -> float:
    """Smallest C with volume <= alpha + C eps on every converged row."""
    C = 0.0
    for r in sweep.rows:
        if r["converged"] and np.isfinite(r["volume"]):
            C = max(C, (r["volume"] - sweep.alpha) / r["eps"])
    return float(C)


def lambda_ratio(sweep: SweepResult) -> float:
    lam = sweep.column("lambda_mean")
    lam = lam[np.isfinite(lam)]
    if lam.size == 0 or lam.min() <= 0:
        return float("nan")
    return float(lam.max() / lam.min())
