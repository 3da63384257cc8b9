"""Optimization drivers: generalized conditional gradient, ADMM, L-BFGS.

Three engines, kept independent of any particular clustering model:

* ``smooth_minimize`` -- unconstrained smooth minimization (memory-limited
  quasi-Newton with line search), used for inner subproblems.
* ``gcg_minimize`` -- generalized conditional gradient for objectives of
  the form L(T) + (alpha/2) * norm(T)^2 where the norm is the cluster norm.
  The atom oracle is a dual-norm subgradient; a scalar tracker s majorizes
  the norm of the iterate so the norm itself is only evaluated once, at the
  final iterate.
* ``admm_solve`` -- alternating direction method for minimizing the primal
  divergence D_F(X, M X) over the ``simplex`` relaxation set, splitting the
  row-simplex constraints (handled row-wise by projected gradient) from the
  spectral ones (handled by the closed-form ``rowsum`` projection).
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.optimize

from .clusternorm import cluster_norm, cluster_norm_dual, cluster_norm_dual_subgradient
from .divergences import BERNOULLI_CLIP, family
from .geometry import project_rowsum, simplex_project, simplex_project_rows


class SolverDivergence(RuntimeError):
    """Non-finite objective or gradient encountered; carries the iterate."""

    def __init__(self, message, iterate=None, iteration=None):
        self.iterate = iterate
        self.iteration = iteration
        super().__init__(message)


@dataclass
class SmoothProblem:
    """A smooth objective with gradient oracle over a fixed array shape.

    ``value_and_grad`` maps an array of ``shape`` to ``(value, gradient)``.
    ``value`` may be supplied when the objective alone is cheaper;
    ``segment`` may be supplied as a fast evaluator for line searches:
    ``segment(T, S)`` returns a callable ``phi(a, b)`` equal to the value
    at ``a*T + b*S``.
    """

    shape: tuple
    value_and_grad: Callable
    value: Optional[Callable] = None
    segment: Optional[Callable] = None
    x0: Optional[np.ndarray] = None

    def evaluate(self, x):
        if self.value is not None:
            return self.value(x)
        return self.value_and_grad(x)[0]


@dataclass
class SmoothResult:
    x: np.ndarray
    objective: float
    grad_norm: float
    iterations: int
    converged: bool


def smooth_minimize(problem, tol=1e-8, max_iter=500):
    """Minimize a SmoothProblem to gradient norm < tol * (1 + |objective|).

    Backed by limited-memory BFGS with line search; restarted from its own
    endpoint if the library stopping rule fires before the gradient target
    is reached.  Exhausting ``max_iter`` is reported via the ``converged``
    flag and a warning carrying the final gradient norm.
    """
    shape = tuple(problem.shape)
    x = problem.x0 if problem.x0 is not None else np.zeros(shape)
    x = np.asarray(x, dtype=float).ravel().copy()

    def fun(flat):
        v, g = problem.value_and_grad(flat.reshape(shape))
        return v, np.asarray(g, dtype=float).ravel()

    total_it = 0
    f, g = fun(x)
    gnorm = float(np.linalg.norm(g))
    while total_it < max_iter:
        if gnorm < tol * (1.0 + abs(f)):
            return SmoothResult(x.reshape(shape), float(f), gnorm, total_it, True)
        res = scipy.optimize.minimize(
            fun,
            x,
            jac=True,
            method="L-BFGS-B",
            options={
                "maxiter": max_iter - total_it,
                "ftol": 1e-17,
                "gtol": 1e-14,
                "maxcor": 20,
            },
        )
        x = res.x
        f = float(res.fun)
        g = np.asarray(res.jac, dtype=float)
        gnorm = float(np.linalg.norm(g))
        total_it += max(int(res.nit), 1)
        if res.nit == 0:
            break  # line search can make no further progress at this precision
    converged = gnorm < tol * (1.0 + abs(f))
    if not converged:
        warnings.warn(
            f"smooth_minimize stopped after {total_it} iterations with "
            f"gradient norm {gnorm:.3e}",
            RuntimeWarning,
        )
    return SmoothResult(x.reshape(shape), float(f), gnorm, total_it, converged)


def _minimize_ray(phi, hint):
    """1-d minimization of a convex function over [0, inf)."""
    hi = max(2.0 * hint, 1.0)
    f_hi = phi(hi)
    f_half = phi(0.5 * hi)
    grow = 0
    # expand until the function turns upward, so the minimum is bracketed
    while f_hi < f_half and grow < 60:
        hi *= 2.0
        f_half = f_hi
        f_hi = phi(hi)
        grow += 1
    res = scipy.optimize.minimize_scalar(
        phi, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-10}
    )
    if phi(0.0) <= res.fun:
        return 0.0
    return max(float(res.x), 0.0)


def gcg_line_search(loss, T, S, s, alpha, sweeps=20):
    """Two-variable line search for the conditional-gradient update.

    Minimizes ``phi(a, b) = L(a T + b S) + (alpha/2) (a s + b)^2`` over
    ``a, b >= 0`` by alternating 1-d minimizations, then falls back to the
    better of the pure endpoints (keep the iterate / jump to the atom), so
    the result is never worse than either.
    """
    if loss.segment is not None:
        seg = loss.segment(T, S)
    else:
        seg = lambda a, b: loss.evaluate(a * T + b * S)

    def phi(a, b):
        scale = a * s + b
        return seg(a, b) + 0.5 * alpha * scale * scale

    p_keep = phi(1.0, 0.0)
    p_atom = phi(0.0, 1.0)
    a, b = 1.0, 0.0
    for _ in range(sweeps):
        a_new = _minimize_ray(lambda x: phi(x, b), a)
        b_new = _minimize_ray(lambda x: phi(a_new, x), b)
        moved = abs(a_new - a) + abs(b_new - b)
        a, b = a_new, b_new
        if moved < 1e-12 * (1.0 + a + b):
            break
    val = phi(a, b)
    if p_atom < val and p_atom <= p_keep:
        return 0.0, 1.0
    if p_keep < val:
        return 1.0, 0.0
    return a, b


@dataclass
class GcgResult:
    T: np.ndarray
    norm: float
    objective: float
    iterations: int
    converged: bool
    gap: float
    trace: list = field(default_factory=list)
    norm_tracker: float = 0.0


def gcg_minimize(loss, alpha, d, tol=1e-6, max_iter=1000, callback=None):
    """Generalized conditional gradient for L(T) + (alpha/2) * norm(T)^2.

    Starts from T = 0 with norm tracker s = 0.  Each iteration takes the
    gradient G of L, forms the unit-norm atom S = -subgradient of the dual
    norm at G (whose rescaling by dual(G)/alpha minimizes the linearized
    model <G, S> + (alpha/2) norm(S)^2), line-searches over combinations
    a*T + b*S, and updates s <- a*s + b.  Stops when the relative decrease
    of the majorized objective or the gap estimate, evaluated at the
    rescaled atom, falls below ``tol``.
    """
    T = np.zeros(loss.shape)
    s = 0.0
    f, G = loss.value_and_grad(T)
    objective = float(f)
    trace = [{"iteration": 0, "objective": objective, "gap": None}]
    converged = False
    gap = float("inf")
    iteration = 0
    for iteration in range(1, max_iter + 1):
        if not np.isfinite(f) or not np.all(np.isfinite(G)):
            raise SolverDivergence(
                f"non-finite loss or gradient at iteration {iteration}",
                iterate=T,
                iteration=iteration,
            )
        dual = cluster_norm_dual(G, d)
        if dual <= 1e-300:
            converged = True
            gap = 0.0
            break
        # unit-norm descent atom; the tracker update below stays a valid
        # norm majorization only because norm(S) = 1
        S = -cluster_norm_dual_subgradient(G, d)
        scaled = dual / alpha  # its rescaling minimizes <G,.> + (alpha/2) norm^2
        gap = float(np.sum(G * (T - scaled * S)) + alpha * s * (s - scaled))
        if gap < tol:
            converged = True
            break
        a, b = gcg_line_search(loss, T, S, s, alpha)
        T = a * T + b * S
        s = a * s + b
        f, G = loss.value_and_grad(T)
        new_objective = float(f) + 0.5 * alpha * s * s
        decrease = objective - new_objective
        objective = new_objective
        trace.append({"iteration": iteration, "objective": objective, "gap": gap})
        if callback is not None:
            callback(iteration, objective, gap)
        if decrease < tol * max(1.0, abs(objective)):
            converged = True
            break

    norm_T = cluster_norm(T, d)
    true_objective = float(loss.evaluate(T)) + 0.5 * alpha * norm_T * norm_T
    return GcgResult(
        T=T,
        norm=norm_T,
        objective=true_objective,
        iterations=iteration,
        converged=converged,
        gap=gap,
        trace=trace,
        norm_tracker=s,
    )


def admm_row_step(row_loss, anchor, mu, tol=1e-8, max_iter=500):
    """Minimize loss(m) + ||m - anchor||^2 / (2 mu) over the simplex.

    ``row_loss`` maps a simplex vector to ``(value, gradient)``.  Projected
    gradient with backtracking on the quadratic upper model; stops when the
    step-scaled displacement ||m_next - m|| / eta falls below ``tol``.
    """
    anchor = np.asarray(anchor, dtype=float).ravel()

    def total(m):
        v, g = row_loss(m)
        diff = m - anchor
        return v + 0.5 * (diff @ diff) / mu, g + diff / mu

    m = simplex_project(anchor)
    eta = min(1.0, mu)
    val, grad = total(m)
    for _ in range(max_iter):
        while True:
            cand = simplex_project(m - eta * grad)
            delta = cand - m
            cval, cgrad = total(cand)
            bound = val + grad @ delta + 0.5 * (delta @ delta) / eta
            if cval <= bound + 1e-12 * (1.0 + abs(val)):
                break
            eta *= 0.5
            if eta < 1e-18:
                return m
        step_norm = float(np.linalg.norm(delta)) / eta
        m, val, grad = cand, cval, cgrad
        eta = min(eta * 1.3, 1e6)
        if step_norm < tol:
            break
    return m


def _primal_rows(fam, X, Y):
    """Per-row D_F(X_i, Y_i) without revalidation (hot path)."""
    pot = fam.potential
    return np.sum(pot(X) - pot(Y) - (X - Y) * fam.transfer(Y), axis=1)


def rowwise_objective(fam, X, M):
    """D_F(X, M X) for a row-stochastic M, with domain clamping."""
    fam = family(fam)
    Y = M @ X
    if fam.name == "bernoulli":
        Y = np.clip(Y, BERNOULLI_CLIP, 1.0 - BERNOULLI_CLIP)
    vals = _primal_rows(fam, X, Y)
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise SolverDivergence(f"non-finite objective at row {bad}", iterate=M)
    return float(max(np.sum(vals), 0.0))


def _admm_rows_pg(fam, X, M, anchors, mu, tol, max_iter, lip=None, eta=None):
    """All ADMM row subproblems at once.

    Row i minimizes D_F(X_i, m X) + ||m - anchors_i||^2 / (2 mu) over the
    simplex.  Accelerated projected gradient with per-row gradient-based
    restarts; steps are fixed at 1 / (lip + 1/mu) when a curvature bound is
    supplied, otherwise backtracked per row.  Backtracking only shrinks
    ``eta`` within a call (so the momentum scheme keeps a stationary step);
    the array is updated in place to warm-start the next call.  Stops once
    the Frobenius norm of the step-scaled prox-gradient mapping falls below
    ``tol``.
    """
    clip = fam.name == "bernoulli"

    def predict(B):
        Y = B @ X
        if clip:
            Y = np.clip(Y, BERNOULLI_CLIP, 1.0 - BERNOULLI_CLIP)
        return Y

    def row_values(B, rows):
        loss = _primal_rows(fam, X[rows], predict(B))
        prox = 0.5 * np.sum((B - anchors[rows]) ** 2, axis=1) / mu
        return loss + prox

    def row_grads(B, rows):
        Y = predict(B)
        return ((Y - X[rows]) * fam.transfer_derivative(Y)) @ X.T + (
            B - anchors[rows]
        ) / mu

    t = M.shape[0]
    M = simplex_project_rows(M)
    every = np.arange(t)
    vals = row_values(M, every)
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise SolverDivergence(f"non-finite row objective at row {bad}", iterate=M)
    fixed = lip is not None
    if fixed:
        eta = np.full(t, 1.0 / (lip + 1.0 / mu))
    elif eta is None:
        eta = np.full(t, min(1.0, mu))
    # extrapolated point Y keeps the unit row sums but may dip below zero;
    # predict() clips, so the smooth model stays defined there
    Y = M.copy()
    theta = np.ones(t)
    for _ in range(max_iter):
        grads = row_grads(Y, every)
        if fixed:
            M_new = simplex_project_rows(Y - eta[:, None] * grads)
            moved = np.linalg.norm(M_new - Y, axis=1) / eta
        else:
            base = row_values(Y, every)
            M_new = np.empty_like(M)
            pending = np.ones(t, dtype=bool)
            while np.any(pending):
                p = np.flatnonzero(pending)
                trial = simplex_project_rows(Y[p] - eta[p, None] * grads[p])
                delta = trial - Y[p]
                tvals = row_values(trial, p)
                bound = (
                    base[p]
                    + np.sum(grads[p] * delta, axis=1)
                    + 0.5 * np.sum(delta**2, axis=1) / eta[p]
                    + 1e-12 * (1.0 + np.abs(base[p]))
                )
                accept = (tvals <= bound) | (eta[p] < 1e-18)
                M_new[p[accept]] = trial[accept]
                pending[p[accept]] = False
                eta[p[~accept]] *= 0.5
            moved = np.linalg.norm(M_new - Y, axis=1) / eta
        restart = np.sum((Y - M_new) * (M_new - M), axis=1) > 0.0
        theta_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
        beta = (theta - 1.0) / theta_next
        beta[restart] = 0.0
        theta_next[restart] = 1.0
        Y = M_new + beta[:, None] * (M_new - M)
        M, theta = M_new, theta_next
        if float(np.linalg.norm(moved)) < tol:
            break
    return M


@dataclass
class AdmmResult:
    M: np.ndarray
    Z: np.ndarray
    multiplier: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool
    mu: float
    trace: list = field(default_factory=list)


def admm_solve(
    X,
    d,
    fam="euclidean",
    mu=1.0,
    tol=1e-5,
    max_iter=1000,
    inner_tol=1e-8,
    inner_max_iter=500,
    adapt_mu=True,
    callback=None,
):
    """Minimize D_F(X, M X) over the ``simplex`` relaxation set by ADMM.

    Alternates (1) row-decoupled minimization of the loss plus proximity
    to Z + mu * multiplier over row simplices, (2) projection of
    M - mu * multiplier onto the ``rowsum`` set, (3) multiplier update by
    (Z - M) / mu.  Terminates when max(primal, dual) residual drops below
    tol * sqrt(t).  The penalty mu is rebalanced (halved or doubled) when
    the residuals diverge by more than a factor of ten.

    Returns an AdmmResult whose ``M`` satisfies the row constraints exactly
    (so M @ X stays inside the data hull) and whose ``Z`` satisfies the
    spectral ones; at convergence they agree to within the tolerance.
    """
    fam = family(fam)
    X = fam.check_domain(X)
    t = X.shape[0]
    M = np.full((t, t), 1.0 / t)
    Z = np.full((t, t), 1.0 / t)
    Lam = np.zeros((t, t))
    threshold = tol * np.sqrt(t)
    trace = []
    primal = dual = float("inf")
    iteration = 0
    converged = False
    # the euclidean row losses share the exact curvature bound lam_max(X X')
    lip = float(np.linalg.eigvalsh(X.T @ X)[-1]) if fam.name == "euclidean" else None
    eta = None if lip is not None else np.full(t, min(1.0, mu))
    residual_scale = 1.0
    for iteration in range(1, max_iter + 1):
        anchors = Z + mu * Lam
        # inexact inner solves: accuracy tracks the outer residual so early
        # iterations stay cheap while the tail still meets inner_tol
        itol = max(inner_tol, 0.1 * residual_scale)
        if eta is not None:
            # backtracking only shrinks steps within a call; regrow between
            # calls so one hard subproblem cannot pin the rest of the run
            np.minimum(eta * 1.5, 1e6, out=eta)
        M = _admm_rows_pg(fam, X, M, anchors, mu, itol, inner_max_iter, lip=lip, eta=eta)
        Z_new = project_rowsum(M - mu * Lam, d)
        Lam = Lam + (Z_new - M) / mu
        primal = float(np.linalg.norm(M - Z_new))
        dual = float(np.linalg.norm(Z_new - Z) / mu)
        Z = Z_new
        residual_scale = max(primal, dual)
        objective = rowwise_objective(fam, X, M)
        trace.append(
            {
                "iteration": iteration,
                "objective": objective,
                "primal": primal,
                "dual": dual,
                "mu": mu,
            }
        )
        if callback is not None:
            callback(iteration, objective, max(primal, dual))
        if max(primal, dual) < threshold:
            converged = True
            break
        if adapt_mu:
            if primal > 10.0 * dual and mu > 1e-6:
                mu *= 0.5
            elif dual > 10.0 * primal and mu < 1e6:
                mu *= 2.0
    objective = rowwise_objective(fam, X, M)
    return AdmmResult(
        M=M,
        Z=Z,
        multiplier=Lam,
        objective=objective,
        primal_residual=primal,
        dual_residual=dual,
        iterations=iteration,
        converged=converged,
        mu=mu,
        trace=trace,
    )
