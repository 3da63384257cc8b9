"""Shared oracles and instance generators for the test suite.

The oracles here deliberately avoid the package's own closed forms:
norm values come from a refined water-level scan plus random feasible
probes, gradients from central differences, hard optima from exhaustive
enumeration, and convex references from cvxpy where available.
"""

import itertools

import numpy as np
import pytest

from bregrelax import cond_objective


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def finite_difference_gradient(fun, x, h=1e-6):
    """Central-difference gradient of a scalar function of an ndarray."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        step = h * max(1.0, abs(x[idx]))
        xp = x.copy()
        xm = x.copy()
        xp[idx] += step
        xm[idx] -= step
        g[idx] = (fun(xp) - fun(xm)) / (2.0 * step)
    return g


def grid_norm_squared(s, d, stages=3, points=2000):
    """Reference value of min over sigma in [0,1]^r, sum sigma <= d-1 of
    sum s_i^2 / sigma_i, by scanning the water level on a refined grid.

    The scan parameterizes candidates as sigma_i = min(1, s_i / level)
    and refines the level bracket down to 1e-6; it shares no code with
    the package's breakpoint evaluation.
    """
    s = np.sort(np.abs(np.asarray(s, dtype=float)))[::-1]
    s = s[s > 0]
    budget = d - 1
    if s.size == 0:
        return 0.0
    if s.size <= budget:
        return float(np.sum(s**2))

    def occupancy(level):
        return float(np.sum(np.minimum(1.0, s / level)))

    # bracket the level: tiny level -> occupancy = r > budget; at
    # sum(s)/budget every sigma is interior and occupancy <= budget
    lo = 1e-12
    hi = max(float(np.sum(s)) / budget, float(s[0])) + 1.0
    for _ in range(stages):
        grid = np.linspace(lo, hi, points)
        occ = np.array([occupancy(g) for g in grid])
        # find the first grid point that dips below the budget
        idx = int(np.searchsorted(-occ, -budget))
        idx = min(max(idx, 1), points - 1)
        lo, hi = grid[idx - 1], grid[idx]
    level = 0.5 * (lo + hi)
    sigma = np.minimum(1.0, s / level)
    sigma *= min(1.0, budget / float(np.sum(sigma)))
    return float(np.sum(s**2 / sigma))


def random_feasible_sigma(r, budget, rng):
    """A random point of the box-and-budget feasible set."""
    sigma = rng.uniform(0.05, 1.0, size=r)
    total = float(np.sum(sigma))
    if total > budget:
        sigma *= budget / total
    return sigma


def planted_euclidean(t, d, rng, sep=6.0, noise=0.5):
    """Well-separated gaussian blobs with origin-symmetric means."""
    angles = 2.0 * np.pi * np.arange(d) / max(d, 2)
    base = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    base -= base.mean(axis=0)
    means = sep * base
    labels = np.arange(t) % d
    X = means[labels] + noise * rng.normal(size=(t, 2))
    perm = rng.permutation(t)
    return X[perm], labels[perm]


def planted_bernoulli(t, d, rng, hi=0.85, noise=0.04):
    """Well-separated (0,1)-valued blobs symmetric around one half."""
    n = max(2 * d, 4)
    proto = np.full((d, n), 0.5)
    for j in range(d):
        proto[j, 2 * j] = hi
        proto[j, 2 * j + 1] = 1.0 - hi
    proto -= proto.mean(axis=0) - 0.5
    labels = np.arange(t) % d
    X = proto[labels] + noise * rng.normal(size=(t, n))
    X = np.clip(X, 0.02, 0.98)
    perm = rng.permutation(t)
    return X[perm], labels[perm]


def all_assignments(t, d):
    """All label vectors of length t over d clusters, first point fixed
    to cluster 0 to quotient out one relabeling symmetry."""
    for rest in itertools.product(range(d), repeat=t - 1):
        yield np.array((0,) + rest, dtype=int)


def exhaustive_hard_optimum(X, d, fam="euclidean"):
    """Brute-force minimum of the hard clustering objective."""
    best = np.inf
    best_labels = None
    for labels in all_assignments(X.shape[0], d):
        val = cond_objective(X, labels, fam)
        if val < best:
            best = val
            best_labels = labels
    return best, best_labels


def require_cvxpy():
    return pytest.importorskip("cvxpy")


def cvxpy_project_rowsum(A, d, solver=None):
    """High-precision projection of A onto the row-sum relaxation set."""
    cp = require_cvxpy()
    t = A.shape[0]
    Z = cp.Variable((t, t), symmetric=True)
    constraints = [
        Z >> 0,
        np.eye(t) - Z >> 0,
        cp.trace(Z) <= d,
        Z @ np.ones(t) == np.ones(t),
    ]
    prob = cp.Problem(cp.Minimize(cp.sum_squares(Z - A)), constraints)
    kwargs = {"solver": solver} if solver else {"solver": "CLARABEL"}
    prob.solve(**kwargs)
    if Z.value is None:
        pytest.skip("convex reference solver failed on this instance")
    return np.asarray(Z.value)


def cvxpy_norm_regularized(X, alpha, d, solver="CLARABEL"):
    """Reference for min_T 0.5 ||T - X||_F^2 + (alpha/2) Omega^2(T).

    Uses the epigraph form tr(T' M^+ T) <= tr(R) with a Schur-complement
    block constraint and the centered relaxation set for M.
    """
    cp = require_cvxpy()
    t, n = X.shape
    T = cp.Variable((t, n))
    M = cp.Variable((t, t), symmetric=True)
    R = cp.Variable((n, n), symmetric=True)
    block = cp.bmat([[M, T], [T.T, R]])
    constraints = [
        block >> 0,
        M >> 0,
        np.eye(t) - M >> 0,
        cp.trace(M) <= d - 1,
    ]
    objective = 0.5 * cp.sum_squares(T - X) + 0.5 * alpha * cp.trace(R)
    prob = cp.Problem(cp.Minimize(objective), constraints)
    prob.solve(solver=solver)
    if T.value is None:
        pytest.skip("convex reference solver failed on this instance")
    return float(prob.value), np.asarray(T.value)
