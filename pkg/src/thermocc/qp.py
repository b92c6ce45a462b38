"""Sparse convex QP solver for the occupancy least-squares problem.

The problem solved here is

    minimize   || A theta - l ||^2
    subject to x >= 0                      (elementwise on the mob-heat block)
               lo <= sum_i x[i, t] <= hi   (one box per time step)

where theta = (a, b, w, x) stacks three free scalars and a k-by-z matrix of
per-room per-step unknowns. Each data row touches one x entry plus the three
scalars; each smoothing row touches two x entries adjacent in time. That
gives the normal matrix a very specific shape: a z-by-z tridiagonal block
shared by every room, bordered by three dense rows and columns. The ADMM
subproblem (normal matrix plus rho*I) is therefore solved exactly with one
banded Cholesky factorization and a 3x3 Schur complement, a few microseconds
per iteration instead of a generic sparse factorization.

Constraints are handled by exact projection onto each step's box-capped
simplex, so returned iterates are feasible to machine precision. Optimality
is certified with a projected-gradient residual.

One structural degeneracy needs explicit care: adding a constant to the
scalar w while subtracting the same constant from every x entry leaves the
objective exactly unchanged (both enter every data row with coefficient one,
and the smoothing rows only see differences in time). When the per-step sum
constraints have slack the optimum is therefore a segment, and we always
report its deterministic canonical point: slide along the direction until
some x entry or lower sum bound becomes active, i.e. attribute the shared
constant offset to w rather than to a uniform occupant background.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded


class SolverError(RuntimeError):
    pass


class InfeasibleError(SolverError):
    """The constraint set is empty; the message names the offending bounds."""


@dataclass
class SolverStats:
    iterations: int = 0
    kkt_residual: float = float("nan")          # relative projected-gradient norm
    max_constraint_violation: float = float("nan")
    wall_time_s: float = 0.0
    objective: float = float("nan")
    converged: bool = False
    polished: bool = False
    rho_final: float = float("nan")
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
            "max_constraint_violation": self.max_constraint_violation,
            "wall_time_s": self.wall_time_s,
            "converged": self.converged,
            "polished": self.polished,
        }


def project_step_sums(x: np.ndarray, lo: float | None, hi: float) -> np.ndarray:
    """Project each column of x (rooms by steps) onto {v >= 0, lo <= sum v <= hi}.

    Exact projection: clip to the orthant; columns whose clipped sum falls
    outside the box get the usual sorted waterfill shift so the sum lands on
    the violated bound.
    """
    proj = np.maximum(x, 0.0)
    sums = proj.sum(axis=0)
    over = sums > hi
    under = np.zeros_like(over) if lo is None else sums < lo
    if np.any(over):
        proj[:, over] = _waterfill(x[:, over], hi)
    if np.any(under):
        proj[:, under] = _waterfill(x[:, under], lo)
    return proj


def _waterfill(v: np.ndarray, target: float) -> np.ndarray:
    """Project columns of v onto {x >= 0, sum x = target} (target >= 0)."""
    if target <= 0.0:
        return np.zeros_like(v)
    k = v.shape[0]
    vs = -np.sort(-v, axis=0)            # descending per column
    cums = np.cumsum(vs, axis=0)
    counts = np.arange(1, k + 1)[:, None]
    taus = (cums - target) / counts
    valid = vs > taus                    # prefix-true along each column
    m = valid.sum(axis=0)
    # m >= 1 always: for m=1 the condition reads v_max > v_max - target.
    tau = taus[m - 1, np.arange(v.shape[1])]
    return np.maximum(v - tau, 0.0)


@dataclass
class QuadraticProblem:
    """min ||A theta - l||^2 with the x block constrained as described above.

    The system is specified by its structured pieces rather than a raw
    matrix: per-row coefficients for the a and b columns, one shared scale
    for the w and x columns (they always carry the same coefficient in a
    data row, which is what makes the offset direction an exact null
    direction), the data right-hand side, and the smoothing weight. The
    smoothing rows act on x directly and are not scaled.
    theta layout: [a, b, w, x(0, 0..z-1), x(1, 0..z-1), ...].
    """

    coef_a: np.ndarray        # (k, z-1) ambient-difference coefficients
    coef_b: np.ndarray        # (k, z-1) neighbour-difference coefficients
    rhs_data: np.ndarray      # (k, z-1)
    lam: float
    sum_lo: float | None
    sum_hi: float
    xw_scale: float = 1.0     # coefficient of w and x in every data row
    x0: np.ndarray | None = None         # initial x block, shape (k, z)
    _a_mat: sp.csr_matrix | None = field(default=None, repr=False)
    _rhs_full: np.ndarray | None = field(default=None, repr=False)

    N_SCALARS = 3

    @property
    def k(self) -> int:
        return self.coef_a.shape[0]

    @property
    def z(self) -> int:
        return self.coef_a.shape[1] + 1

    @property
    def n_unknowns(self) -> int:
        return self.N_SCALARS + self.k * self.z

    @property
    def data_rows(self) -> int:
        return self.k * (self.z - 1)

    @property
    def reg_rows(self) -> int:
        return self.k * (self.z - 1) if self.lam > 0 else 0

    def matrices(self) -> tuple[sp.csr_matrix, np.ndarray]:
        """The explicit sparse system (A, l), built once on demand."""
        if self._a_mat is None:
            k, z, ns = self.k, self.z, self.N_SCALARS
            m1 = self.data_rows
            rows_dat = np.arange(m1)
            room_idx = np.repeat(np.arange(k), z - 1)
            step_idx = np.tile(np.arange(z - 1), k)
            x_col = ns + room_idx * z + step_idx
            rows = [rows_dat] * 4
            cols = [np.zeros(m1, dtype=int), np.ones(m1, dtype=int),
                    np.full(m1, 2), x_col]
            vals = [self.coef_a.ravel(), self.coef_b.ravel(),
                    np.full(m1, self.xw_scale), np.full(m1, self.xw_scale)]
            rhs = self.rhs_data.ravel()
            if self.lam > 0:
                sq = np.sqrt(self.lam)
                rr = m1 + np.arange(m1)
                rows += [rr, rr]
                cols += [x_col, x_col + 1]
                vals += [np.full(m1, -sq), np.full(m1, sq)]
                rhs = np.concatenate([rhs, np.zeros(m1)])
            a_mat = sp.coo_matrix(
                (np.concatenate(vals),
                 (np.concatenate(rows), np.concatenate(cols))),
                shape=(m1 + self.reg_rows, ns + k * z)).tocsr()
            object.__setattr__(self, "_a_mat", a_mat)
            object.__setattr__(self, "_rhs_full", rhs)
        return self._a_mat, self._rhs_full

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return theta[: self.N_SCALARS], theta[self.N_SCALARS:].reshape(self.k, self.z)

    def join(self, scalars: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(scalars, dtype=float), x.ravel()])

    def objective(self, theta: np.ndarray) -> float:
        a_mat, rhs = self.matrices()
        r = a_mat @ theta - rhs
        return float(r @ r)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        a_mat, rhs = self.matrices()
        return 2.0 * (a_mat.T @ (a_mat @ theta - rhs))

    def project(self, theta: np.ndarray) -> np.ndarray:
        scalars, x = self.split(theta)
        return self.join(scalars, project_step_sums(x, self.sum_lo, self.sum_hi))

    def kkt_residuals(self, theta: np.ndarray) -> tuple[float, float]:
        """(relative projected-gradient norm, max constraint violation)."""
        grad = self.gradient(theta)
        pg = np.linalg.norm(theta - self.project(theta - grad))
        rel = pg / (1.0 + np.linalg.norm(grad))
        _, x = self.split(theta)
        viol = max(0.0, float(-x.min(initial=0.0)))
        sums = x.sum(axis=0)
        viol = max(viol, float(np.max(sums - self.sum_hi, initial=0.0)))
        if self.sum_lo is not None:
            viol = max(viol, float(np.max(self.sum_lo - sums, initial=0.0)))
        return rel, viol

    def check_feasible_bounds(self) -> None:
        if self.sum_hi < 0:
            raise InfeasibleError(
                f"upper occupancy-sum bound {self.sum_hi} is negative; no "
                "nonnegative mob-heat vector can satisfy it")
        if self.sum_lo is not None and self.sum_lo > self.sum_hi:
            raise InfeasibleError(
                f"lower occupancy-sum bound {self.sum_lo} exceeds upper bound "
                f"{self.sum_hi}; the constraint set is empty")

    def canonicalize_offset(self, theta: np.ndarray) -> np.ndarray:
        """Slide along the (w up, all x down) null direction to its feasible end.

        The move is objective-invariant, so the result is an equally optimal
        point; it pins the otherwise arbitrary constant split between w and a
        uniform x offset. No-op whenever some x entry or lower bound is active.
        """
        scalars, x = self.split(theta)
        slack = float(x.min()) if x.size else 0.0
        if self.sum_lo is not None:
            slack = min(slack, float(x.sum(axis=0).min() - self.sum_lo) / self.k)
        if slack <= 0.0:
            return theta
        scalars = np.array(scalars, dtype=float)
        scalars[2] += slack
        return self.join(scalars, x - slack)


class _StructuredFactor:
    """Exact solver for (2 A^T A + rho I) theta = r using the banded structure.

    The x-x block of the normal matrix is one tridiagonal z-by-z matrix
    shared by all rooms (data rows contribute 2 on the diagonal except for
    the final step, smoothing rows contribute the usual second-difference
    stencil). The three scalar columns are dense borders, eliminated through
    a 3x3 Schur complement.
    """

    def __init__(self, prob: QuadraticProblem, rho: float):
        k, z, ns = prob.k, prob.z, prob.N_SCALARS
        lam, s = prob.lam, prob.xw_scale
        diag = np.full(z, rho)
        diag[:-1] += 2.0 * s * s
        if lam > 0:
            chain = np.full(z, 2.0 * lam)
            chain[0] = lam
            chain[-1] = lam
            diag += 2.0 * chain
        ab = np.zeros((2, z))
        ab[1] = diag
        if lam > 0:
            ab[0, 1:] = -2.0 * lam
        self._cho = cholesky_banded(ab, lower=False)
        # Dense scalar borders: H_sx[q, i, t] = 2 * coef_q(i, t) * s, zero at t = z-1.
        sx = np.zeros((ns, k, z))
        sx[0, :, :-1] = 2.0 * s * prob.coef_a
        sx[1, :, :-1] = 2.0 * s * prob.coef_b
        sx[2, :, :-1] = 2.0 * s * s
        self._sx = sx
        ca, cb = prob.coef_a.ravel(), prob.coef_b.ravel()
        m1 = prob.data_rows
        h_ss = 2.0 * np.array([
            [ca @ ca, ca @ cb, s * ca.sum()],
            [ca @ cb, cb @ cb, s * cb.sum()],
            [s * ca.sum(), s * cb.sum(), s * s * float(m1)],
        ])
        m_ss = h_ss + rho * np.eye(ns)
        # W[s] = Mxx^{-1} sx[s] per room, solved batched along the step axis.
        flat = sx.reshape(ns * k, z).T          # (z, ns*k)
        w = cho_solve_banded((self._cho, False), flat).T.reshape(ns, k, z)
        self._w = w
        schur = m_ss - np.einsum("siz,tiz->st", sx, w)
        self._schur = schur
        self._k, self._z, self._ns = k, z, ns

    def solve(self, r: np.ndarray) -> np.ndarray:
        ns = self._ns
        r_s = r[:ns]
        r_x = r[ns:].reshape(self._k, self._z)
        x1 = cho_solve_banded((self._cho, False), r_x.T).T   # (k, z)
        rhs_s = r_s - np.einsum("siz,iz->s", self._sx, x1)
        th_s = np.linalg.solve(self._schur, rhs_s)
        th_x = x1 - np.einsum("siz,s->iz", self._w, th_s)
        return np.concatenate([th_s, th_x.ravel()])


def _try_polish(prob: QuadraticProblem, y_x: np.ndarray, feas_tol: float):
    """Solve the KKT system of the active-set equality problem, if well posed.

    Active set read off the projected iterate: x entries at zero and step
    sums at their bounds. When nothing is active the offset degeneracy makes
    the plain normal equations singular, so the canonical contact entry (the
    smallest x, which the offset slide would drive to zero) is pinned as a
    gauge; the certificate afterwards decides whether that guess was right.
    Returns the polished theta or None when the system is singular,
    inconsistent, or leaves the feasible set.
    """
    from scipy.sparse.linalg import splu

    k, z, ns = prob.k, prob.z, prob.N_SCALARS
    n = prob.n_unknowns
    a_mat, rhs = prob.matrices()
    at_zero = (y_x <= 0.0)
    sums = y_x.sum(axis=0)
    hi_active = sums >= prob.sum_hi - max(abs(prob.sum_hi), 1.0) * 1e-12
    if prob.sum_lo is not None:
        lo_active = sums <= prob.sum_lo + max(abs(prob.sum_lo), 1.0) * 1e-12
    else:
        lo_active = np.zeros(z, dtype=bool)
    rows_i: list[int] = []
    cols_i: list[int] = []
    vals: list[float] = []
    rhs_extra: list[float] = []
    row = 0
    # Structurally zero scalar columns (e.g. no room has neighbours) must be
    # pinned or the KKT matrix is singular.
    col_scale = [np.abs(prob.coef_a).max(initial=0.0),
                 np.abs(prob.coef_b).max(initial=0.0), abs(prob.xw_scale)]
    for s in range(ns):
        if col_scale[s] == 0.0:
            rows_i.append(row)
            cols_i.append(s)
            vals.append(1.0)
            rhs_extra.append(0.0)
            row += 1
    if not at_zero.any() and not hi_active.any() and not lo_active.any():
        gauge = int(np.argmin(y_x))
        at_zero.flat[gauge] = True
    zi, zt = np.nonzero(at_zero)
    for i, t in zip(zi, zt):
        rows_i.append(row)
        cols_i.append(ns + i * z + t)
        vals.append(1.0)
        rhs_extra.append(0.0)
        row += 1
    for t in range(z):
        if hi_active[t] or lo_active[t]:
            for i in range(k):
                rows_i.append(row)
                cols_i.append(ns + i * z + t)
                vals.append(1.0)
            rhs_extra.append(prob.sum_hi if hi_active[t] else prob.sum_lo)
            row += 1
    n_eq = row
    e_mat = sp.coo_matrix((vals, (rows_i, cols_i)), shape=(n_eq, n)).tocsr()
    h_mat = 2.0 * (a_mat.T @ a_mat)
    kkt = sp.bmat([[h_mat, e_mat.T], [e_mat, None]], format="csc")
    target = np.concatenate([2.0 * (a_mat.T @ rhs), np.asarray(rhs_extra)])
    try:
        sol = splu(kkt).solve(target)
    except (RuntimeError, ValueError):
        return None
    if not np.all(np.isfinite(sol)):
        return None
    # Singular factorizations can still return garbage; verify the solve.
    back = kkt @ sol - target
    if np.linalg.norm(back) > 1e-8 * (1.0 + np.linalg.norm(target)):
        return None
    theta = sol[:n]
    scalars, x = prob.split(theta)
    if x.min(initial=0.0) < -feas_tol:
        return None
    x = np.maximum(x, 0.0)
    x[at_zero] = 0.0
    return prob.join(scalars, x)


def solve_qp(prob: QuadraticProblem,
             kkt_tol: float = 1e-6,
             feas_tol: float = 1e-8,
             max_iter: int = 100_000,
             rho: float | None = None,
             over_relax: float = 1.7,
             check_every: int = 50) -> tuple[np.ndarray, SolverStats]:
    """Run ADMM until the projected-gradient certificate passes.

    Candidates are canonicalized (offset slide) before certification, and an
    exact active-set polish is attempted a few times once the iterate is
    close. Deterministic: fixed initialization, fixed update and adaptation
    schedule, no randomness anywhere.
    """
    start = time.perf_counter()
    prob.check_feasible_bounds()
    if rho is None:
        # match the typical curvature of the x block
        rho = max(2.0 * prob.xw_scale ** 2 + 4.0 * prob.lam, 1e-4)
    ns = prob.N_SCALARS
    atl = -prob.gradient(np.zeros(prob.n_unknowns))   # = 2 A^T l
    factor = _StructuredFactor(prob, rho)

    if prob.x0 is not None:
        x_init = np.asarray(prob.x0, dtype=float)
    else:
        x_init = np.zeros((prob.k, prob.z))
    y = prob.join(np.zeros(ns), x_init)
    u = np.zeros(prob.n_unknowns)

    stats = SolverStats(rho_final=rho)
    theta = y.copy()
    best: tuple[np.ndarray, float, float] | None = None
    polish_attempts = 0
    for it in range(1, max_iter + 1):
        theta = factor.solve(atl + rho * (y - u))
        relaxed = over_relax * theta + (1.0 - over_relax) * y
        y_prev = y
        y = prob.project(relaxed + u)
        u = u + relaxed - y

        if it % check_every == 0 or it == max_iter:
            candidate = prob.canonicalize_offset(
                prob.join(theta[:ns], prob.split(y)[1]))
            kkt_rel, viol = prob.kkt_residuals(candidate)
            if best is None or kkt_rel < best[1]:
                best = (candidate, kkt_rel, viol)
            if kkt_rel <= kkt_tol and viol <= feas_tol:
                stats.iterations = it
                stats.converged = True
                break
            if kkt_rel < 3e-2 and polish_attempts < 6 and \
                    (polish_attempts == 0 or it % (check_every * 8) == 0):
                polish_attempts += 1
                polished = _try_polish(prob, prob.split(y)[1], feas_tol)
                if polished is not None:
                    polished = prob.canonicalize_offset(polished)
                    p_kkt, p_viol = prob.kkt_residuals(polished)
                    if p_kkt <= kkt_tol and p_viol <= feas_tol:
                        best = (polished, p_kkt, p_viol)
                        stats.iterations = it
                        stats.converged = True
                        stats.polished = True
                        break
            # Residual balancing; the scaled dual must shrink when rho grows.
            if it % (check_every * 2) == 0:
                r_pri = np.linalg.norm(theta - y)
                r_dua = rho * np.linalg.norm(y - y_prev)
                new_rho = rho
                if r_pri > 10.0 * r_dua:
                    new_rho = rho * 2.0
                elif r_dua > 10.0 * r_pri:
                    new_rho = rho / 2.0
                if new_rho != rho and 1e-6 < new_rho < 1e6:
                    u *= rho / new_rho
                    rho = new_rho
                    factor = _StructuredFactor(prob, rho)

    if not stats.converged:
        stats.iterations = max_iter
        stats.message = (f"iteration limit {max_iter} reached; best relative "
                         f"KKT residual {best[1]:.3e}")
    theta_out, kkt_rel, viol = best
    stats.kkt_residual = kkt_rel
    stats.max_constraint_violation = viol
    stats.objective = prob.objective(theta_out)
    stats.rho_final = rho
    stats.wall_time_s = time.perf_counter() - start
    return theta_out, stats
