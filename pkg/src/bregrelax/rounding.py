"""Rounding relaxed solutions to partitions, and scoring them.

A relaxed equivalence matrix is turned into a hard clustering by embedding
points with the top eigenvectors and running k-means on the normalized
rows (``spectral_round``).  Hard clusterings are polished with alternating
minimization (``hard_reopt``) and scored against ground truth with a
maximum-weight matching between clusters and classes.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.optimize
from scipy.spatial.distance import cdist

from .divergences import family, pairwise_divergence
from .geometry import RANK_RTOL


@dataclass
class ClusteringResult:
    """A hard clustering: labels in {0..d-1} plus the model that scored it.

    ``centers`` lives in whatever space the producing routine clustered
    (data space for reoptimization, embedding space for spectral rounding).
    ``weights`` carries cluster log-priors when the producing model has
    them, ``trace`` the objective after each alternation sweep.
    """

    labels: np.ndarray
    centers: np.ndarray
    objective: float
    iterations: int = 0
    weights: Optional[np.ndarray] = None
    restarts_summary: Optional[tuple] = None
    trace: list = field(default_factory=list)

    @property
    def n_clusters(self):
        return self.centers.shape[0]


def cluster_means(X, labels, d):
    """Per-cluster means and counts; empty clusters get zero rows."""
    t = X.shape[0]
    onehot = np.zeros((t, d))
    onehot[np.arange(t), labels] = 1.0
    counts = onehot.sum(axis=0)
    safe = np.where(counts > 0, counts, 1.0)
    centers = (onehot.T @ X) / safe[:, None]
    return centers, counts


def _reseed_empty(X, labels, centers, counts, fam, reassign=False):
    """Re-seed each empty cluster at the point farthest from its center.

    Sequential so two empty clusters never grab the same point.  With
    ``reassign`` the chosen point is moved into the revived cluster
    immediately (needed when cluster weights would otherwise stay -inf).
    """
    labels = labels.copy()
    centers = centers.copy()
    empties = np.flatnonzero(counts == 0)
    if empties.size == 0:
        return labels, centers, False
    # divergence of each point from the center it is currently assigned to;
    # only live centers are evaluated (empty rows may sit outside the domain)
    live = np.unique(labels)
    own = pairwise_divergence(fam, X, centers[live])
    div = own[np.arange(X.shape[0]), np.searchsorted(live, labels)].copy()
    for j in empties:
        p = int(np.argmax(div))
        centers[j] = X[p]
        div[p] = -np.inf
        if reassign:
            labels[p] = j
    return labels, centers, True


def hard_reopt(X, labels0, fam="euclidean", max_iter=200, d=None):
    """Alternating minimization of sum_i D_F(x_i, mu_{y_i}) from labels0.

    Classic two-block descent: cluster means given labels, nearest center
    in divergence given means.  Empty clusters are re-seeded at the point
    with the largest divergence from its current center.  The objective
    trace is nonincreasing and the loop stops at a fixed point, so the
    result never scores worse than labels0.
    """
    fam = family(fam)
    X = fam.check_domain(X)
    labels = np.asarray(labels0, dtype=int).ravel().copy()
    t = X.shape[0]
    if labels.shape[0] != t:
        raise ValueError(f"labels0 has {labels.shape[0]} entries for {t} points")
    if labels.min() < 0:
        raise ValueError("labels0 must be nonnegative")
    d = max(int(labels.max()) + 1, d or 0)
    trace = []
    iteration = 0
    for iteration in range(1, max_iter + 1):
        centers, counts = cluster_means(X, labels, d)
        if np.any(counts == 0):
            labels, centers, _ = _reseed_empty(X, labels, centers, counts, fam)
        D = pairwise_divergence(fam, X, centers)
        new_labels = D.argmin(axis=1)
        objective = float(D[np.arange(t), new_labels].sum())
        trace.append(objective)
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    centers, counts = cluster_means(X, labels, d)
    return ClusteringResult(
        labels=labels,
        centers=centers,
        objective=trace[-1],
        iterations=iteration,
        trace=trace,
    )


def _kmeans_pp(X, k, rng):
    t = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(t)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(t))  # degenerate: fewer distinct points than k
        else:
            idx = int(rng.choice(t, p=d2 / total))
        centers[j] = X[idx]
        np.minimum(d2, np.sum((X - centers[j]) ** 2, axis=1), out=d2)
    return centers


def kmeans(X, k, rng=None, max_iter=300):
    """Lloyd iterations from a kmeans++ seeding.

    Returns (labels, centers, inertia) where inertia is the summed squared
    distance to assigned centers.  Empty clusters are repaired by
    re-seeding at the farthest point from its assigned center.
    """
    rng = np.random.default_rng(rng)
    X = np.asarray(X, dtype=float)
    centers = _kmeans_pp(X, k, rng)
    labels = np.full(X.shape[0], -1)
    for _ in range(max_iter):
        D = cdist(X, centers, "sqeuclidean")
        new_labels = D.argmin(axis=1)
        counts = np.bincount(new_labels, minlength=k)
        if np.any(counts == 0):
            div = D[np.arange(X.shape[0]), new_labels].copy()
            for j in np.flatnonzero(counts == 0):
                p = int(np.argmax(div))
                centers[j] = X[p]
                new_labels[p] = j
                div[p] = -np.inf
            counts = np.bincount(new_labels, minlength=k)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        onehot = np.zeros((X.shape[0], k))
        onehot[np.arange(X.shape[0]), labels] = 1.0
        safe = np.where(counts > 0, counts, 1.0)
        centers = (onehot.T @ X) / safe[:, None]
    D = cdist(X, centers, "sqeuclidean")
    labels = D.argmin(axis=1)
    inertia = float(D[np.arange(X.shape[0]), labels].sum())
    return labels, centers, inertia


def spectral_embedding(M, d):
    """Top-d eigenvector embedding of M with unit-normalized rows.

    Only eigenvalues above the relative rank cutoff contribute; if fewer
    than d survive, the embedding proceeds with the available dimensions
    and a warning.  Zero rows stay zero.
    """
    M = np.asarray(M, dtype=float)
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    cutoff = RANK_RTOL * max(float(vals[0]), 0.0)
    usable = int(np.sum(vals[:d] > cutoff))
    if usable < d:
        warnings.warn(
            f"spectrum supports {usable} of {d} embedding dimensions",
            RuntimeWarning,
        )
    usable = max(usable, 1)
    V = vecs[:, :usable].copy()
    norms = np.linalg.norm(V, axis=1)
    keep = norms > 1e-12
    V[keep] /= norms[keep, None]
    V[~keep] = 0.0
    return V


def spectral_round(M, d, restarts=10, rng=None, embedding=None):
    """Round a relaxed equivalence matrix to d clusters.

    Embeds with the top eigenvectors, normalizes rows, and keeps the best
    of ``restarts`` k-means runs by inertia.  Pass ``embedding`` to reuse a
    precomputed embedding across calls.
    """
    rng = np.random.default_rng(rng)
    V = spectral_embedding(M, d) if embedding is None else embedding
    best = None
    inertias = []
    for _ in range(max(restarts, 1)):
        labels, centers, inertia = kmeans(V, d, rng)
        inertias.append(inertia)
        if best is None or inertia < best.objective:
            best = ClusteringResult(
                labels=labels, centers=centers, objective=inertia, iterations=1
            )
    best.restarts_summary = (float(np.mean(inertias)), float(np.std(inertias)))
    return best


def matched_accuracy(pred, truth):
    """Fraction of points whose cluster maps to their class under the best
    one-to-one matching (rectangular case handled by leaving extras
    unmatched).  Returns (accuracy, matching dict cluster -> class).
    """
    pred = np.asarray(pred, dtype=int).ravel()
    truth = np.asarray(truth, dtype=int).ravel()
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth must have equal length")
    k = pred.max() + 1
    c = truth.max() + 1
    table = np.zeros((k, c))
    np.add.at(table, (pred, truth), 1.0)
    rows, cols = scipy.optimize.linear_sum_assignment(table, maximize=True)
    matching = {int(r): int(cc) for r, cc in zip(rows, cols)}
    return float(table[rows, cols].sum() / pred.size), matching


def soft_accuracy(posteriors, truth):
    """Matching-based accuracy for soft assignments.

    Credit for point i under matching pi is its posterior mass on
    pi(class_i); the matching maximizes the total credit.  Returns
    (value, matching dict cluster -> class) like ``matched_accuracy``.
    """
    P = np.asarray(posteriors, dtype=float)
    truth = np.asarray(truth, dtype=int).ravel()
    if P.shape[0] != truth.shape[0]:
        raise ValueError("posterior rows must match number of points")
    sums = P.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-8:
        raise ValueError("posterior rows must sum to one")
    c = truth.max() + 1
    onehot = np.zeros((truth.size, c))
    onehot[np.arange(truth.size), truth] = 1.0
    table = P.T @ onehot
    rows, cols = scipy.optimize.linear_sum_assignment(table, maximize=True)
    matching = {int(r): int(cc) for r, cc in zip(rows, cols)}
    return float(table[rows, cols].sum() / truth.size), matching


def hard_posterior_accuracy(q, centers, X, truth, fam="euclidean"):
    """Accuracy of MAP assignments argmax_j [log q_j - D_F(x_i, mu_j)].

    ``q`` is a prior over clusters; a zero entry rules its cluster out.
    """
    fam = family(fam)
    X = fam.check_domain(X)
    with np.errstate(divide="ignore"):
        logq = np.log(np.asarray(q, dtype=float).ravel())
    scores = logq[None, :] - pairwise_divergence(fam, X, centers)
    labels = scores.argmax(axis=1)
    acc, _ = matched_accuracy(labels, truth)
    return acc
