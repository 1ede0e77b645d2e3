"""Minimisers of a penalised Orlicz energy with a volume constraint, and
diagnostics for their free boundaries."""

from .errors import (InvalidParameter, NoFreeBoundary, NumericError,
                     PropertyViolation, RangeError)
from .orlicz import NFunction, make_power, make_sum_powers, make_custom, from_spec
from .mesh import Grid, ScalarField, interval, square, disc, grid_from_config
from .energy import PenaltyParams, EnergyBreakdown, j_eps
from .solver import SolveConfig, SolveResult, initialize, minimize
from .oracle import solve_1d_exact, solve_radial

__version__ = "0.1.0"
