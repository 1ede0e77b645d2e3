"""N-functions G with G' = g and the structure condition

    0 < delta <= t g'(t) / g(t) <= g0      for all t > 0.

Everything Orlicz-side lives here: construction, evaluation of g, g', G,
the inverse g^{-1}, the conjugate-type primitive G~ (G~' = g^{-1}),
Phi(t) = g(t) t - G(t), sampled checks of the structural inequalities and
the Luxemburg norm of a discrete field.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import InvalidParameter, NumericError, PropertyViolation, RangeError

__all__ = [
    "NFunction",
    "make_power",
    "make_sum_powers",
    "make_custom",
    "from_spec",
    "g_inverse",
    "G_tilde",
    "phi",
    "verify_condition",
    "check_g_properties",
    "check_g_tilde_bounds",
    "check_condi",
    "luxemburg_norm",
    "embedding_bound",
    "builtin_nfunctions",
]

T_MAX = 1e300
_COND_TOL = 1e-9


@dataclass(frozen=True)
class NFunction:
    """Immutable (G, g) pair with structure constants ``delta <= g0``.

    The callables accept floats or numpy arrays.
    """

    eval_g: Callable
    eval_g_prime: Callable
    eval_G: Callable
    delta: float
    g0: float
    label: str
    spec: dict = field(default_factory=dict, compare=False)

    def g(self, t):
        return self.eval_g(t)

    def g_prime(self, t):
        return self.eval_g_prime(t)

    def G(self, t):
        return self.eval_G(t)

    def to_spec(self) -> dict:
        return dict(self.spec)

    def __repr__(self):
        return f"NFunction({self.label}, delta={self.delta:g}, g0={self.g0:g})"


def _check_exponent(p):
    if not (isinstance(p, (int, float)) and math.isfinite(p) and p > 1):
        raise InvalidParameter(f"exponent must be a finite real > 1, got {p!r}")


def make_power(p: float) -> NFunction:
    """g(t) = t^(p-1), G(t) = t^p / p, delta = g0 = p - 1."""
    _check_exponent(p)
    p = float(p)
    q = p - 1.0

    def g(t):
        return np.power(t, q)

    def gp(t):
        return q * np.power(t, q - 1.0)

    def G(t):
        return np.power(t, p) / p

    return NFunction(g, gp, G, q, q, f"power(p={p:g})", {"kind": "power", "p": p})


def make_sum_powers(coeffs) -> NFunction:
    """g(t) = sum_i a_i t^(p_i - 1), a_i > 0, p_i > 1.

    delta and g0 are the extreme exponents minus one; the declared constants
    are cross-checked by sampling before the object is returned.
    """
    terms = [tuple(map(float, c)) for c in coeffs]
    if not terms:
        raise InvalidParameter("sum_powers needs at least one term")
    for a, p in terms:
        if not (math.isfinite(a) and a > 0):
            raise InvalidParameter(f"coefficient must be > 0, got {a!r}")
        _check_exponent(p)
    a = np.array([c[0] for c in terms])
    p = np.array([c[1] for c in terms])

    def g(t):
        t = np.asarray(t, dtype=float)
        out = sum(ai * np.power(t, pi - 1.0) for ai, pi in zip(a, p))
        return float(out) if out.ndim == 0 else out

    def gp(t):
        t = np.asarray(t, dtype=float)
        out = sum(ai * (pi - 1.0) * np.power(t, pi - 2.0) for ai, pi in zip(a, p))
        return float(out) if out.ndim == 0 else out

    def G(t):
        t = np.asarray(t, dtype=float)
        out = sum(ai * np.power(t, pi) / pi for ai, pi in zip(a, p))
        return float(out) if out.ndim == 0 else out

    label = "sum_powers(" + ", ".join(f"{ai:g}*t^{pi - 1:g}" for ai, pi in terms) + ")"
    nf = NFunction(g, gp, G, float(p.min() - 1.0), float(p.max() - 1.0), label,
                   {"kind": "sum_powers", "terms": [list(c) for c in terms]})
    # the extremes are only approached as t -> 0 / t -> inf, so a wide window
    if not verify_condition(nf, 1e-6, 1e6, 400)["ok"]:
        raise InvalidParameter(f"{label}: sampled t g'/g leaves [{nf.delta}, {nf.g0}]")
    return nf


def make_custom(g, g_prime, delta, g0, G=None, label="custom") -> NFunction:
    """Wrap user callables. Without a closed-form G it is integrated from g."""
    if not (0 < delta <= g0):
        raise InvalidParameter("need 0 < delta <= g0")
    if G is None:
        def G(t):
            def one(x):
                if x <= 0:
                    return 0.0
                val, _ = integrate.quad(g, 0.0, x, epsrel=1e-10, epsabs=0.0, limit=200)
                return val
            t_arr = np.asarray(t, dtype=float)
            if t_arr.ndim == 0:
                return one(float(t_arr))
            return np.array([one(x) for x in t_arr.ravel()]).reshape(t_arr.shape)
    return NFunction(g, g_prime, G, float(delta), float(g0), label, {"kind": "custom"})


def from_spec(spec: dict) -> NFunction:
    """Build from the JSON form ``{"kind": "power", "p": 2}`` or
    ``{"kind": "sum_powers", "terms": [[a, p], ...]}``."""
    kind = spec.get("kind")
    if kind == "power":
        return make_power(spec["p"])
    if kind == "sum_powers":
        return make_sum_powers(spec["terms"])
    raise InvalidParameter(f"unknown nfunction kind {kind!r}")


def builtin_nfunctions():
    """The N-functions exercised by the property suites."""
    return [make_power(p) for p in (1.5, 2.0, 3.0, 4.0)] + [make_sum_powers([(1, 2), (1, 4)])]


def g_inverse(nf: NFunction, y, rtol=1e-12):
    """Solve g(t) = y for t >= 0 (scalar or array y).

    Bracket [lo, hi] by doubling from 1, then Newton steps that fall back to
    bisection whenever they leave the bracket.
    """
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0) or not np.all(np.isfinite(y_arr)):
        raise InvalidParameter("g_inverse needs finite y >= 0")
    scalar = y_arr.ndim == 0
    y_arr = np.atleast_1d(y_arr).astype(float)
    lo = np.zeros_like(y_arr)
    hi = np.ones_like(y_arr)
    while True:
        short = nf.g(hi) < y_arr
        if not short.any():
            break
        lo = np.where(short, hi, lo)
        hi = np.where(short, hi * 2.0, hi)
        if np.any(hi > T_MAX):
            raise RangeError("g_inverse: no bracket below T_MAX")
    # Newton with bisection fallback, keeping the bracket [lo, hi]
    t = 0.5 * (lo + hi)
    for _ in range(2200):
        gt = nf.g(t)
        below = gt < y_arr
        lo = np.where(below, t, lo)
        hi = np.where(below, hi, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = t - (gt - y_arr) / nf.g_prime(t)
        ok = np.isfinite(cand) & (cand > lo) & (cand < hi)
        new = np.where(ok, cand, 0.5 * (lo + hi))
        done = (np.abs(new - t) <= rtol * new) | (hi - lo <= rtol * hi)
        t = new
        if done.all():
            break
    t = np.where(y_arr == 0, 0.0, t)
    return float(t[0]) if scalar else t


def G_tilde(nf: NFunction, t: float, rtol=1e-8) -> float:
    """G~(t) = int_0^t g^{-1}(s) ds by adaptive quadrature.

    Substituting s = g(tau) gives int_0^{g^{-1}(t)} tau g'(tau) dtau, which
    has a smooth integrand and needs a single inverse evaluation.
    """
    t = float(t)
    if t < 0:
        raise InvalidParameter("G_tilde needs t >= 0")
    if t == 0:
        return 0.0
    top = g_inverse(nf, t)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(lambda x: x * float(nf.g_prime(x)), 0.0, top,
                                    epsrel=rtol, epsabs=0.0, limit=200)
        except integrate.IntegrationWarning as exc:
            raise NumericError(f"G_tilde quadrature failed at t={t}: {exc}") from exc
    return val


def phi(nf: NFunction, t):
    """Phi(t) = g(t) t - G(t); nonnegative and nondecreasing."""
    t = np.asarray(t, dtype=float)
    out = nf.g(t) * t - nf.G(t)
    return float(out) if np.ndim(out) == 0 else out


def verify_condition(nf: NFunction, t_lo: float, t_hi: float, n: int, tol=_COND_TOL) -> dict:
    """Sample t g'(t)/g(t) log-uniformly on [t_lo, t_hi]."""
    if not (0 < t_lo < t_hi) or n < 2:
        raise InvalidParameter("need 0 < t_lo < t_hi and n >= 2")
    t = np.geomspace(t_lo, t_hi, n)
    ratio = t * nf.g_prime(t) / nf.g(t)
    if not np.all(np.isfinite(ratio)):
        raise NumericError(f"non-finite t g'/g for {nf.label}")
    d_hat, g_hat = float(ratio.min()), float(ratio.max())
    ok = d_hat >= nf.delta - tol and g_hat <= nf.g0 + tol
    return {"delta_hat": d_hat, "g0_hat": g_hat, "ok": bool(ok)}


def _default_grids(s_grid, t_grid):
    if s_grid is None:
        s_grid = np.geomspace(1e-2, 1e2, 41)
    if t_grid is None:
        t_grid = np.geomspace(1e-4, 1e4, 81)
    s = np.asarray(s_grid, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    if np.any(s <= 0) or np.any(t <= 0):
        raise InvalidParameter("sample grids must be positive")
    return np.meshgrid(s, t, indexing="ij")


def _worst(lhs, rhs, S, T, rtol, name):
    """Check lhs <= rhs (relative); return the worst relative margin."""
    margin = (rhs - lhs) / np.maximum(np.abs(rhs), np.finfo(float).tiny)
    k = np.unravel_index(np.argmin(margin), margin.shape)
    worst = float(margin[k])
    if worst < -rtol:
        raise PropertyViolation(f"{name} violated (margin {worst:.3e})",
                                {"s": float(S[k]), "t": float(T[k])})
    return worst


def check_g_properties(nf: NFunction, s_grid=None, t_grid=None, rtol=1e-9) -> dict:
    """Pointwise (g1) and (g3) on a sample grid.

    (g1)  min(s^d, s^g0) g(t) <= g(st) <= max(s^d, s^g0) g(t)
    (g3)  t g(t) / (1 + g0) <= G(t) <= t g(t)
    """
    S, T = _default_grids(s_grid, t_grid)
    gst = nf.g(S * T)
    gt = nf.g(T)
    lo = np.minimum(S ** nf.delta, S ** nf.g0) * gt
    hi = np.maximum(S ** nf.delta, S ** nf.g0) * gt
    t1 = T[0]
    Gt, tg = nf.G(t1), t1 * nf.g(t1)
    one = np.zeros_like(t1)
    return {
        "g1_lower": _worst(lo, gst, S, T, rtol, "(g1) lower"),
        "g1_upper": _worst(gst, hi, S, T, rtol, "(g1) upper"),
        "g3_lower": _worst(tg / (1.0 + nf.g0), Gt, one, t1, rtol, "(g3) lower"),
        "g3_upper": _worst(Gt, tg, one, t1, rtol, "(g3) upper"),
    }


def check_g_tilde_bounds(nf: NFunction, s_grid=None, t_grid=None, rtol=1e-9,
                         printed_constants=False) -> dict:
    """Two-sided scaling bound for G~(st) against G~(t).

    With ``c = delta / (1 + delta)`` the checked form is

        c min(s^(1+1/d), s^(1+1/g0)) G~(t) <= G~(st) <= (1/c) max(...) G~(t).

    ``printed_constants=True`` swaps c and 1/c, which fails already for
    pure powers; kept to make that visible in tests.
    """
    if s_grid is None:
        s_grid = np.geomspace(1e-2, 1e2, 9)
    if t_grid is None:
        t_grid = np.geomspace(1e-3, 1e3, 9)
    S, T = _default_grids(s_grid, t_grid)
    gt_st = np.vectorize(lambda x: G_tilde(nf, x))(S * T)
    gt_t = np.vectorize(lambda x: G_tilde(nf, x))(T)
    e1, e2 = 1.0 + 1.0 / nf.delta, 1.0 + 1.0 / nf.g0
    c = nf.delta / (1.0 + nf.delta)
    c_lo, c_hi = (1.0 / c, c) if printed_constants else (c, 1.0 / c)
    lo = c_lo * np.minimum(S ** e1, S ** e2) * gt_t
    hi = c_hi * np.maximum(S ** e1, S ** e2) * gt_t
    # quadrature carries ~1e-8 relative error
    tol = max(rtol, 1e-7)
    return {
        "lower": _worst(lo, gt_st, S, T, tol, "(G~1) lower"),
        "upper": _worst(gt_st, hi, S, T, tol, "(G~1) upper"),
    }


def check_condi(nf: NFunction, t0: float, decades=8) -> dict:
    """Is g(t) <= k t on (0, t0] for some finite k?

    Samples t geometrically down to 1e-8 t0. Unboundedness is flagged when
    g(t)/t still grows toward t -> 0: either by more than 10x over the last
    decade, or with a log-log slope below -0.01 there.
    """
    if not t0 > 0:
        raise InvalidParameter("t0 must be > 0")
    t = np.geomspace(t0 * 10.0 ** (-decades), t0, 40 * decades + 1)
    q = nf.g(t) / t
    if not np.all(np.isfinite(q)):
        return {"k_hat": math.inf, "ok": False}
    k_hat = float(q.max())
    last = q[: 41]
    growth = last[0] / last[-1]
    slope = np.log(last[-1] / last[0]) / np.log(t[40] / t[0])
    ok = growth <= 10.0 and slope >= -0.01
    return {"k_hat": k_hat if ok else math.inf, "ok": bool(ok)}


def luxemburg_norm(values, weights, nf: NFunction) -> float:
    """inf{k > 0 : sum_i w_i G(|u_i| / k) <= 1}."""
    u = np.abs(np.asarray(values, dtype=float))
    w = np.asarray(weights, dtype=float)
    if u.shape != w.shape:
        raise InvalidParameter("values and weights differ in shape")
    if np.any(w < 0) or w.sum() <= 0:
        raise InvalidParameter("weights must be >= 0 with positive sum")
    if not np.all(np.isfinite(u)):
        raise InvalidParameter("values must be finite")
    umax = u.max()
    if umax == 0:
        return 0.0

    # work with k = umax * x so the bracket is scale free
    def resid(x):
        return float(np.dot(w, nf.G(u / (umax * x)))) - 1.0

    lo, hi = 1.0, 1.0
    while resid(lo) < 0:
        lo *= 0.5
    while resid(hi) > 0:
        hi *= 2.0
    x = optimize.brentq(resid, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    return umax * x


def embedding_bound(nf: NFunction, volume: float) -> float:
    """Upper bound for ||u||_{L^(1+delta)} over fields with ||u||_G <= 1.

    G(t) >= G(1) t^(1+delta) for t >= 1, so the integral of |u|^(1+delta)
    is at most |Omega| + 1/G(1).
    """
    return (volume + 1.0 / float(nf.G(1.0))) ** (1.0 / (1.0 + nf.delta))
