"""Relaxation sets over normalized equivalence matrices and their projections.

A hard clustering with assignment matrix Y induces the normalized
equivalence matrix M = Y (Y'Y)^+ Y', a projection whose entries are
1/(cluster size) inside clusters.  Three nested convex relaxations of the
set of such matrices are used throughout:

  ``simplex``   0 <= M <= I spectrally, tr(M) <= d, every row in the
                probability simplex.  The tightest set; target of ADMM.
  ``rowsum``    0 <= M <= I, tr(M) <= d, M 1 = 1.  Keeps only the row-sum
                part of the simplex constraints; admits a closed-form
                Euclidean projection.
  ``centered``  0 <= M <= I, tr(M) <= d - 1.  The centered problem:
                ``rowsum`` equals {H S H + 11'/t : S in centered} for the
                centering projector H = I - 11'/t.

Projections onto ``rowsum`` reduce, after centering, to projecting the
eigenvalue vector onto the box-capped budget set, which is solved exactly
by a breakpoint scan.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

RELAXATIONS = ("simplex", "rowsum", "centered")

# Eigenvalues below RANK_RTOL * (largest eigenvalue) are treated as zero.
RANK_RTOL = 1e-9


class RangeError(ValueError):
    """A quadratic form tr(T' M^+ T) was requested outside the range of M."""

    def __init__(self, residual, tol):
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"columns leave the range of M: projection residual {residual:.3e} "
            f"exceeds tolerance {tol:.3e}"
        )


@dataclass
class MembershipReport:
    """Outcome of a set-membership check with per-constraint violations."""

    ok: bool
    relaxation: str
    worst: float
    violations: dict = field(default_factory=dict)

    def __bool__(self):
        return self.ok


def equivalence_from_assignment(Y):
    """Normalized equivalence matrix M = Y diag(Y'1)^+ Y' of a hard assignment.

    ``Y`` is a (t, d) 0/1 matrix with one 1 per row.  Empty clusters simply
    contribute nothing.  The result satisfies M' = M and M @ M = M; when no
    cluster is empty it also satisfies M 1 = 1.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValueError("assignment must be a 2-d matrix")
    onehot = np.all((Y == 0.0) | (Y == 1.0))
    if not onehot or not np.all(Y.sum(axis=1) == 1.0):
        bad = int(np.flatnonzero(Y.sum(axis=1) != 1.0)[0]) if Y.size else 0
        raise ValueError(f"row {bad} of the assignment is not one-hot")
    counts = Y.sum(axis=0)
    inv = np.where(counts > 0, 1.0 / np.where(counts > 0, counts, 1.0), 0.0)
    return (Y * inv) @ Y.T


def indicator(labels, d):
    """One-hot (t, d) assignment matrix from integer labels in [0, d)."""
    labels = np.asarray(labels, dtype=int)
    if labels.ndim != 1:
        raise ValueError("labels must be a vector")
    if labels.size and (labels.min() < 0 or labels.max() >= d):
        raise ValueError("labels out of range")
    Y = np.zeros((labels.size, d))
    Y[np.arange(labels.size), labels] = 1.0
    return Y


def check_membership(M, d, relaxation="rowsum", tol=1e-8):
    """Check membership of a symmetric matrix in one of the relaxation sets.

    Returns a MembershipReport rather than raising; ``worst`` is the largest
    constraint violation found, and ``violations`` maps constraint names to
    their magnitudes (only entries exceeding ``tol`` are recorded).
    """
    if relaxation not in RELAXATIONS:
        raise ValueError(f"unknown relaxation {relaxation!r}")
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    t = M.shape[0]
    measured = {}
    measured["symmetry"] = float(np.max(np.abs(M - M.T))) if t else 0.0
    S = 0.5 * (M + M.T)
    eigs = scipy.linalg.eigvalsh(S)
    measured["eig_lower"] = float(max(0.0, -eigs.min()))
    measured["eig_upper"] = float(max(0.0, eigs.max() - 1.0))
    budget = d - 1 if relaxation == "centered" else d
    measured["trace"] = float(max(0.0, np.trace(S) - budget))
    if relaxation == "rowsum":
        measured["row_sums"] = float(np.max(np.abs(M.sum(axis=1) - 1.0)))
    if relaxation == "simplex":
        measured["row_sums"] = float(np.max(np.abs(M.sum(axis=1) - 1.0)))
        measured["nonnegativity"] = float(max(0.0, -M.min()))
    worst = max(measured.values()) if measured else 0.0
    violations = {k: v for k, v in measured.items() if v > tol}
    return MembershipReport(
        ok=not violations, relaxation=relaxation, worst=worst, violations=violations
    )


def capped_box_simplex_project(sigma, budget):
    """Project a vector onto {mu : mu_i in [0, 1], sum mu_i <= budget}.

    Water-filling: mu_i = clip(sigma_i - lam, 0, 1) with the smallest
    shift lam >= 0 meeting the budget.  lam is found by an exact scan over
    the 2t sorted breakpoints {sigma_i, sigma_i - 1}, where the sum of the
    clipped vector is piecewise linear in lam.
    """
    sigma = np.asarray(sigma, dtype=float).ravel()
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    clipped = np.clip(sigma, 0.0, 1.0)
    total = clipped.sum()
    if total <= budget:
        return clipped

    # g(lam) = sum clip(sigma - lam, 0, 1) is nonincreasing, piecewise linear
    # with kinks exactly at the breakpoints; find the segment crossing budget.
    points = np.unique(np.concatenate([sigma, sigma - 1.0]))
    points = points[points > 0.0]
    points = np.concatenate([[0.0], points])

    def g(lam):
        return np.clip(sigma - lam, 0.0, 1.0).sum()

    values = np.array([g(p) for p in points])
    # First breakpoint where the sum has dropped to or below the budget; the
    # crossing lies in the segment ending there (g(0) > budget is known).
    k = int(np.argmax(values <= budget))
    lo, hi = points[k - 1], points[k]
    glo, ghi = values[k - 1], values[k]
    if ghi == budget:
        lam = hi
    else:
        # linear interpolation is exact inside a segment
        lam = lo + (glo - budget) * (hi - lo) / (glo - ghi)
    return np.clip(sigma - lam, 0.0, 1.0)


def simplex_project(v):
    """Euclidean projection onto the probability simplex (sorted threshold)."""
    v = np.asarray(v, dtype=float).ravel()
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.max(idx[u - css / idx > 0.0])
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def simplex_project_rows(V):
    """Row-wise simplex projection of a matrix, vectorized."""
    V = np.asarray(V, dtype=float)
    U = np.sort(V, axis=1)[:, ::-1]
    css = np.cumsum(U, axis=1) - 1.0
    idx = np.arange(1, V.shape[1] + 1)
    mask = U - css / idx > 0.0
    rho = mask.shape[1] - 1 - np.argmax(mask[:, ::-1], axis=1)
    theta = css[np.arange(V.shape[0]), rho] / (rho + 1)
    return np.maximum(V - theta[:, None], 0.0)


def project_rowsum(A, d):
    """Euclidean projection of a symmetric matrix onto the ``rowsum`` set.

    The input is symmetrized first (solver intermediates accumulate
    asymmetry of order machine epsilon).  After subtracting the uniform
    block 11'/t and double-centering, the problem reduces to projecting the
    eigenvalues onto the box-capped budget set with budget d - 1; the
    eigenvalue attached to the constant eigenvector is 0 and stays 0.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    t = A.shape[0]
    A = 0.5 * (A + A.T)
    B = A - 1.0 / t
    ones = np.ones(t)
    HB = B - np.outer(ones, B.mean(axis=0))
    HBH = HB - np.outer(HB.mean(axis=1), ones)
    HBH = 0.5 * (HBH + HBH.T)
    eigvals, eigvecs = scipy.linalg.eigh(HBH)
    mu = capped_box_simplex_project(eigvals, d - 1)
    T = (eigvecs * mu) @ eigvecs.T
    return T + 1.0 / t


def pinv_quadratic_form(M, T, rank_rtol=RANK_RTOL, range_tol=1e-6):
    """tr(T' M^+ T) for symmetric PSD M, requiring Im(T) within Im(M).

    Eigenvalues below ``rank_rtol`` times the largest are treated as zero.
    If the residual of T after projection onto the retained eigenspace
    exceeds ``range_tol`` relative to ||T||_F, a RangeError is raised.
    """
    M = np.asarray(M, dtype=float)
    T = np.asarray(T, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    if M.shape[0] != M.shape[1] or M.shape[0] != T.shape[0]:
        raise ValueError("incompatible shapes")
    M = 0.5 * (M + M.T)
    eigvals, eigvecs = scipy.linalg.eigh(M)
    cutoff = rank_rtol * max(float(np.max(eigvals, initial=0.0)), 0.0)
    keep = eigvals > max(cutoff, 0.0)
    U = eigvecs[:, keep]
    proj = U @ (U.T @ T)
    tnorm = np.linalg.norm(T)
    residual = np.linalg.norm(T - proj)
    if residual > range_tol * max(tnorm, 1e-300):
        raise RangeError(residual, range_tol * tnorm)
    coeffs = U.T @ T
    return float(np.sum(coeffs**2 / eigvals[keep, None]))
