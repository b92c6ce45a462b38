"""Constrained, L2-regularized least-squares recovery of thermal parameters
and per-room occupant heat from a noisy sensor trace.

For every room i and step t there is one finite-difference equation

    (T_i(t+1) - T_i(t)) / dt  =  a * amb_i * (T_ext(t) - T_i(t))
                               + b * sum_{j ~ i} (T_j(t) - T_i(t))
                               + w
                               + x[i, t]
                               + phi * (T_hvac_i(t) - T_i(t)) * u_i(t)

written entirely in measured quantities. The unknowns are the three scalars
(a, b, w) and the gamma-scaled occupant heating rates x[i, t] = gamma * M,
one per room per step (all z steps, so k*z + 3 unknowns against k*(z-1)
equations). The phi term is known and moves to the right-hand side. Each
measurement is a single sensor reading, reused verbatim in every equation it
appears in, which is what makes consecutive rows share noise.

Smoothing rows sqrt(lambda) * (x[i, t+1] - x[i, t]) discourage occupancy from
jumping between steps; per-step box constraints

    (1 - eps2) * n_guess * q_avg * gamma
        <= sum_i x[i, t] <=
    (1 + eps1) * n_guess * q_avg * gamma

encode an approximate total-occupancy count (the lower bound is dropped when
eps2 > 1, since heat cannot be negative), and x >= 0 elementwise.

Only the exposure mask, adjacency, gamma, phi and dt are treated as known;
a is informative only for ambient-exposed rooms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import BuildingLayout, ValidationError, adjacency_matrix
from .qp import QuadraticProblem, SolverStats, solve_qp
from .simulate import SensorTrace

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class EstimatorKnowns:
    """Quantities the estimator does not fit.

    t_hvac, when given, overrides the trace's measured supply-air channel
    with a constant per-room value (useful for ingested data where no such
    sensor exists).
    """

    gamma: float
    phi: float
    t_hvac: tuple[float, ...] | None = None


@dataclass(frozen=True)
class EstimatorOptions:
    lam: float = 0.1
    eps1: float = 0.2
    eps2: float = 0.2
    n_guess: int = 0
    q_avg: float = 110.0 * SECONDS_PER_HOUR   # mean per-person emission, J/h

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError(f"lambda: must be >= 0, got {self.lam}")
        if self.q_avg <= 0:
            raise ValidationError(f"q_avg: must be > 0, got {self.q_avg}")
        if self.n_guess < 0:
            raise ValidationError(f"n_guess: must be >= 0, got {self.n_guess}")


@dataclass
class EstimationProblem:
    """Assembled sparse least-squares system plus its constraint data."""

    quad: QuadraticProblem
    layout: BuildingLayout
    knowns: EstimatorKnowns
    opts: EstimatorOptions
    delta_t: float
    k: int
    z: int
    data_rows: int        # k * (z - 1) finite-difference rows
    reg_rows: int         # k * (z - 1) smoothing rows, or 0 when lambda == 0

    @property
    def residual_count(self) -> int:
        return self.data_rows

    @property
    def n_unknowns(self) -> int:
        return self.quad.n_unknowns

    @property
    def sum_bounds(self) -> tuple[float | None, float]:
        return self.quad.sum_lo, self.quad.sum_hi


@dataclass
class EstimationResult:
    alpha_hat: float
    beta_hat: float
    omega_hat: float
    mob_heat_hat: np.ndarray      # (k, z) in W
    x_gamma: np.ndarray           # (k, z) gamma-scaled, K/h
    objective: float
    solver_stats: SolverStats

    def theta(self) -> np.ndarray:
        return np.concatenate([[self.alpha_hat, self.beta_hat, self.omega_hat],
                               self.x_gamma.ravel()])


def assemble(trace: SensorTrace, layout: BuildingLayout | None = None,
             knowns: EstimatorKnowns | None = None,
             opts: EstimatorOptions | None = None) -> EstimationProblem:
    """Build the sparse system from a complete sensor trace."""
    layout = layout if layout is not None else trace.layout
    if knowns is None:
        raise ValidationError("knowns: gamma and phi are required")
    opts = opts if opts is not None else EstimatorOptions()
    k = layout.k
    temps = np.asarray(trace.temps_meas, dtype=float)
    if temps.shape[0] != k:
        raise ValidationError(
            f"trace: {temps.shape[0]} room series but layout has k={k}")
    z = temps.shape[1]
    if z < 2:
        raise ValidationError(f"trace: need at least 2 steps, got {z}")
    ambient = np.asarray(trace.ambient_meas, dtype=float)
    if knowns.t_hvac is not None:
        if len(knowns.t_hvac) != k:
            raise ValidationError(
                f"t_hvac: expected {k} per-room values, got {len(knowns.t_hvac)}")
        hvac_temp = np.asarray(knowns.t_hvac, dtype=float)[:, None] * np.ones((1, z))
    else:
        hvac_temp = np.asarray(trace.hvac_temp_meas, dtype=float)
    u = np.asarray(trace.hvac_state, dtype=float)
    for name, arr in (("temps_meas", temps), ("ambient_meas", ambient),
                      ("hvac_temp_meas", hvac_temp),
                      ("temps_rate_meas", trace.rate_series())):
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{name}: non-finite measurement")
    dt = trace.delta_t

    adj = adjacency_matrix(layout)
    degree = adj.sum(axis=1)
    amb_mask = np.asarray(layout.ambient_exposed, dtype=float)

    # Rows are kept in temperature-increment form (multiplied through by dt):
    # T(t+1) - T(t) = dt * (heat-balance rate). The equations are identical
    # either way; this weighting is what makes a fixed lambda trade data
    # misfit against smoothing on the scale the defaults were tuned for.
    rate = np.asarray(trace.rate_series(), dtype=float)
    cur = temps[:, :-1]                                   # (k, z-1)
    lhs = rate[:, 1:] - rate[:, :-1]
    hvac_term = knowns.phi * (hvac_temp[:, :-1] - cur) * u[:, :-1]
    rhs_data = lhs - dt * hvac_term

    coef_a = dt * amb_mask[:, None] * (ambient[None, :-1] - cur)
    coef_b = dt * (adj @ cur - degree[:, None] * cur)

    total = opts.n_guess * opts.q_avg * knowns.gamma
    hi = (1.0 + opts.eps1) * total
    lo = None if opts.eps2 > 1.0 else (1.0 - opts.eps2) * total
    x0 = np.full((k, z), total / k)
    quad = QuadraticProblem(coef_a=coef_a, coef_b=coef_b, rhs_data=rhs_data,
                            lam=opts.lam, sum_lo=lo, sum_hi=hi, xw_scale=dt,
                            x0=x0)
    return EstimationProblem(quad=quad, layout=layout, knowns=knowns, opts=opts,
                             delta_t=dt, k=k, z=z, data_rows=k * (z - 1),
                             reg_rows=quad.reg_rows)


def solve(problem: EstimationProblem, *, kkt_tol: float = 1e-6,
          feas_tol: float = 1e-8, max_iter: int = 100_000) -> EstimationResult:
    """Minimize the assembled problem and report the recovered quantities.

    Raises InfeasibleError when the sum bounds exclude every nonnegative
    solution. An exhausted iteration budget is not an exception: the best
    iterate is returned with the converged flag cleared.
    """
    theta, stats = solve_qp(problem.quad, kkt_tol=kkt_tol, feas_tol=feas_tol,
                            max_iter=max_iter)
    scalars, x = problem.quad.split(theta)
    mob_w = x / (problem.knowns.gamma * SECONDS_PER_HOUR)
    return EstimationResult(alpha_hat=float(scalars[0]),
                            beta_hat=float(scalars[1]),
                            omega_hat=float(scalars[2]),
                            mob_heat_hat=mob_w, x_gamma=x,
                            objective=stats.objective, solver_stats=stats)


@dataclass
class ResidualReport:
    residuals: np.ndarray   # (k, z-1): lhs minus fitted rhs per equation
    max_abs: float
    rms: float


def residual_report(problem: EstimationProblem,
                    result: EstimationResult) -> ResidualReport:
    """Data-equation residuals at the solution, in K/h, with summaries."""
    theta = result.theta()
    a_mat, rhs = problem.quad.matrices()
    fitted = a_mat[: problem.data_rows] @ theta
    res = (rhs[: problem.data_rows] - fitted).reshape(problem.k, problem.z - 1)
    res = res / problem.delta_t        # increment rows back to rate units
    return ResidualReport(residuals=res,
                          max_abs=float(np.abs(res).max()),
                          rms=float(np.sqrt(np.mean(res ** 2))))
