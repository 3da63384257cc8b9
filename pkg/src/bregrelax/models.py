"""Clustering models: convex relaxations and classical baselines.

Four relaxations share a common recipe: minimize a smooth conjugate-space
loss plus a squared cluster-norm penalty (or, for ``cond-jc``, the primal
divergence directly over the relaxation set), then recover a relaxed
equivalence matrix for rounding.

* ``cond-jc``  -- jointly convex conditional model, solved by ADMM.
* ``cond``     -- conditional model in conjugate coordinates, solved by
                  generalized conditional gradient (GCG).
* ``disc``     -- discriminative self-classification model (sigmoid data
                  only), GCG over the classifier matrix with the bias
                  vector minimized out.
* ``joint``    -- joint model with a relaxed log-prior block stacked next
                  to the conjugate responsibilities.

Baselines: ``alt-hard`` (alternating hard clustering with restarts),
``soft-em`` (mixture EM), and the prior-aware ``joint_hard_reopt`` used to
polish rounded joint solutions.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .clusternorm import recover_equivalence
from .divergences import (
    conjugate_divergence,
    family,
    logsumexp_value_grad,
    pairwise_divergence,
    rowwise_divergence,
)
from .rounding import ClusteringResult, cluster_means, _reseed_empty, hard_reopt
from .solvers import (
    SmoothProblem,
    SolverDivergence,
    admm_solve,
    gcg_minimize,
    smooth_minimize,
)

MODELS = ("cond-jc", "cond", "disc", "joint", "alt-hard", "soft-em")
RELAXATION_MODELS = ("cond-jc", "cond", "disc", "joint")


def derived_rng(seed, *key):
    """Deterministic child generator for (seed, key path)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass
class ModelConfig:
    """Knobs shared by every model; unused ones are simply ignored.

    ``alpha`` weighs the cluster-norm penalty of ``cond``, ``gamma`` the
    one of ``disc``; ``joint`` uses ``alpha`` for the responsibility block
    and ``beta`` for the prior block.
    """

    d: int
    family: str = "euclidean"
    alpha: float = 1e-5
    beta: float = 1e-5
    gamma: float = 1e-6
    tol: float = 1e-6
    admm_tol: float = 1e-5
    max_iter: int = 1000
    mu: float = 1.0
    inner_tol: float = 1e-8
    restarts: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"need at least 2 clusters, got d={self.d}")
        for name in ("alpha", "beta", "gamma", "tol", "admm_tol", "mu"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        family(self.family)  # raises on unknown names


@dataclass
class RelaxationSolution:
    model: str
    M: np.ndarray
    objective: float
    converged: bool
    iterations: int
    trace: list = field(default_factory=list)
    auxiliaries: dict = field(default_factory=dict)


def cond_objective(X, labels, fam="euclidean"):
    """sum_i D_F(x_i, mean of x_i's cluster) for a hard clustering."""
    fam = family(fam)
    X = fam.check_domain(X)
    labels = np.asarray(labels)
    if labels.ndim == 2:
        rows = labels.sum(axis=1)
        if not (np.all((labels == 0) | (labels == 1)) and np.all(rows == 1)):
            raise ValueError("indicator matrix must have one-hot rows")
        labels = labels.argmax(axis=1)
    labels = labels.astype(int).ravel()
    d = int(labels.max()) + 1
    centers, _ = cluster_means(X, labels, d)
    return float(rowwise_divergence(fam, X, centers[labels]))


def solve_cond_jc(X, config):
    """Jointly convex conditional relaxation, solved by ADMM."""
    res = admm_solve(
        X,
        config.d,
        fam=config.family,
        mu=config.mu,
        tol=config.admm_tol,
        max_iter=config.max_iter,
        inner_tol=config.inner_tol,
    )
    return RelaxationSolution(
        model="cond-jc",
        M=res.M,
        objective=res.objective,
        converged=res.converged,
        iterations=res.iterations,
        trace=res.trace,
        auxiliaries={"Z": res.Z, "multiplier": res.multiplier, "mu": res.mu},
    )


def _recover(T, d):
    if np.any(T):
        return recover_equivalence(T, d)
    return np.zeros((T.shape[0], T.shape[0]))


def solve_cond(X, config):
    """Conditional relaxation in conjugate coordinates, solved by GCG.

    Loss D_F*(T, f(X)) is smooth with gradient f_inv(T) - X; the cluster
    norm of T is penalized with weight alpha.
    """
    fam = family(config.family)
    X = fam.check_domain(X)
    FX = fam.transfer(X)

    def value_and_grad(T):
        return conjugate_divergence(fam, T, FX), fam.inverse_transfer(T) - X

    def value(T):
        return conjugate_divergence(fam, T, FX)

    loss = SmoothProblem(shape=X.shape, value_and_grad=value_and_grad, value=value)
    res = gcg_minimize(loss, config.alpha, config.d, tol=config.tol, max_iter=config.max_iter)
    return RelaxationSolution(
        model="cond",
        M=_recover(res.T, config.d),
        objective=res.objective,
        converged=res.converged,
        iterations=res.iterations,
        trace=res.trace,
        auxiliaries={"T": res.T, "norm": res.norm, "gap": res.gap},
    )


def disc_loss(V, tau, X):
    """Self-classification loss for scores Z = X V' / t + 1 tau'.

    Each point doubles as its own class; the loss is the mean logistic
    error of predicting point i's own identity,
    mean_i [logsumexp(Z_i) - Z_ii].  Returns (value, grad_V, grad_tau).
    """
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    tau = np.asarray(tau, dtype=float).ravel()
    t = X.shape[0]
    if V.shape != X.shape or tau.shape[0] != t:
        raise ValueError("V must match X and tau must have one entry per point")
    Z = X @ V.T / t + tau[None, :]
    P = softmax(Z, axis=1)
    lse = logsumexp(Z, axis=1)
    value = float((lse - np.diag(Z)).mean())
    R = (P - np.eye(t)) / t
    return value, R.T @ X / t, R.sum(axis=0)


class DiscriminativeLoss:
    """Self-classification loss with the bias vector minimized out.

    For a classifier matrix V (one linear scorer per point) the score
    matrix is Z = X V' / t + 1 tau'; the loss is the mean of
    [logsumexp(Z_i) - Z_ii].  Evaluation minimizes over tau with a warm
    started smooth solve, so gradients in V are envelope gradients.
    """

    def __init__(self, X, inner_tol=1e-9, inner_max_iter=1000):
        self.X = np.asarray(X, dtype=float)
        self.t = self.X.shape[0]
        self.shape = self.X.shape
        self.tau = np.zeros(self.t)
        self.inner_tol = inner_tol
        self.inner_max_iter = inner_max_iter

    def _solve_tau(self, Z0, tau0):
        t = self.t
        diag0 = np.trace(Z0)

        def vg(tau):
            Z = Z0 + tau[None, :]
            lse = logsumexp(Z, axis=1)
            P = np.exp(Z - lse[:, None])
            val = (lse.sum() - diag0 - tau.sum()) / t
            grad = (P.sum(axis=0) - 1.0) / t
            return val, grad

        prob = SmoothProblem(shape=(t,), value_and_grad=vg, x0=tau0)
        res = smooth_minimize(prob, tol=self.inner_tol, max_iter=self.inner_max_iter)
        if not res.converged:
            raise SolverDivergence(
                f"bias solve stalled at gradient norm {res.grad_norm:.3e}"
            )
        return res

    def value_and_grad(self, V):
        Z0 = self.X @ V.T / self.t
        res = self._solve_tau(Z0, self.tau)
        self.tau = res.x
        Z = Z0 + self.tau[None, :]
        P = np.exp(Z - logsumexp(Z, axis=1)[:, None])
        grad_V = (P - np.eye(self.t)).T @ self.X / self.t**2
        return res.objective, grad_V

    def value(self, V):
        Z0 = self.X @ V.T / self.t
        res = self._solve_tau(Z0, self.tau)
        self.tau = res.x
        return res.objective

    def segment(self, V, S):
        A = self.X @ V.T / self.t
        B = self.X @ S.T / self.t
        state = {"tau": self.tau.copy()}

        def phi(a, b):
            res = self._solve_tau(a * A + b * B, state["tau"])
            state["tau"] = res.x
            return res.objective

        return phi


def solve_disc(X, config):
    """Discriminative relaxation, solved by GCG with the bias solved out.

    The loss is defined for all-real X; pairing with the sigmoid transfer
    is a benchmark-level convention enforced by ExperimentSpec.
    """
    X = np.asarray(X, dtype=float)
    # keep the bias solves ahead of the outer tolerance, but floored: line
    # searches cannot certify gradient norms much below sqrt(eps * |f|),
    # about 1e-8 at the log t scale of this loss
    inner = max(min(config.inner_tol, config.tol * 1e-2), 1e-8)
    disc = DiscriminativeLoss(X, inner_tol=inner)
    loss = SmoothProblem(
        shape=disc.shape,
        value_and_grad=disc.value_and_grad,
        value=disc.value,
        segment=disc.segment,
    )
    res = gcg_minimize(loss, config.gamma, config.d, tol=config.tol, max_iter=config.max_iter)
    return RelaxationSolution(
        model="disc",
        M=_recover(res.T, config.d),
        objective=res.objective,
        converged=res.converged,
        iterations=res.iterations,
        trace=res.trace,
        auxiliaries={"V": res.T, "tau": disc.tau.copy(), "norm": res.norm, "gap": res.gap},
    )


def joint_loss(u, T, X, fam):
    """Relaxed joint objective: lse(u/t) - mean(u) + D_F*(T, f(X)) / t.

    Returns (value, grad_u, grad_T).
    """
    fam = family(fam)
    t = X.shape[0]
    lse, sm = logsumexp_value_grad(u / t)
    val = lse - float(np.mean(u)) + conjugate_divergence(fam, T, fam.transfer(X)) / t
    grad_u = (sm - 1.0) / t
    grad_T = (fam.inverse_transfer(T) - X) / t
    return val, grad_u, grad_T


def solve_joint(X, config):
    """Joint relaxation over the stacked variable [sqrt(beta) u, sqrt(alpha) T].

    The stacking folds the two penalty weights into a single unit-weight
    cluster-norm penalty on W, so GCG runs with weight 1.
    """
    fam = family(config.family)
    X = fam.check_domain(X)
    t, n = X.shape
    ra = np.sqrt(config.alpha)
    rb = np.sqrt(config.beta)
    FX = fam.transfer(X)

    def split(W):
        return W[:, 0] / rb, W[:, 1:] / ra

    def value_and_grad(W):
        u, T = split(W)
        val, gu, gT = joint_loss(u, T, X, fam)
        G = np.empty_like(W)
        G[:, 0] = gu / rb
        G[:, 1:] = gT / ra
        return val, G

    def value(W):
        u, T = split(W)
        lse, _ = logsumexp_value_grad(u / t)
        return lse - float(np.mean(u)) + conjugate_divergence(fam, T, FX) / t

    loss = SmoothProblem(shape=(t, n + 1), value_and_grad=value_and_grad, value=value)
    res = gcg_minimize(loss, 1.0, config.d, tol=config.tol, max_iter=config.max_iter)
    u, T = split(res.T)
    return RelaxationSolution(
        model="joint",
        M=_recover(res.T, config.d),
        objective=res.objective,
        converged=res.converged,
        iterations=res.iterations,
        trace=res.trace,
        auxiliaries={"u": u, "T": T, "W": res.T, "norm": res.norm, "gap": res.gap},
    )


def solve_relaxation(model, X, config):
    solvers = {
        "cond-jc": solve_cond_jc,
        "cond": solve_cond,
        "disc": solve_disc,
        "joint": solve_joint,
    }
    if model not in solvers:
        raise ValueError(f"unknown relaxation model {model!r}; pick from {RELAXATION_MODELS}")
    return solvers[model](X, config)


def alternating_restarts(X, config):
    """One hard alternating run per restart, each from random labels."""
    fam = family(config.family)
    X = fam.check_domain(X)
    t = X.shape[0]
    results = []
    for r in range(config.restarts):
        rng = derived_rng(config.seed, 0, r)
        labels0 = rng.integers(0, config.d, size=t)
        results.append(hard_reopt(X, labels0, fam, d=config.d))
    return results


def alternating_hard(X, config):
    """Bregman k-means with random restarts; returns the best fixed point.

    ``restarts_summary`` carries (mean, std) of the restart objectives.
    """
    results = alternating_restarts(X, config)
    objectives = np.array([r.objective for r in results])
    best = results[int(np.argmin(objectives))]
    best.restarts_summary = (float(objectives.mean()), float(objectives.std()))
    return best


def joint_hard_reopt(X, labels0, fam="euclidean", max_iter=200, d=None):
    """Alternating minimization of the prior-aware hard objective.

    Blocks: cluster weights w = log(counts / t), means, and MAP labels
    argmax_j [w_j - D_F(x_i, mu_j)].  The objective
    sum_i [-w_{y_i} + D_F(x_i, mu_{y_i})] + t * lse(w) rewards skewed
    cluster sizes relative to plain alternating minimization.
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
    w = np.zeros(d)
    centers = None
    iteration = 0
    for iteration in range(1, max_iter + 1):
        centers, counts = cluster_means(X, labels, d)
        if np.any(counts == 0):
            # revived clusters need a member immediately: a -inf weight
            # would otherwise keep them empty forever
            labels, centers, _ = _reseed_empty(
                X, labels, centers, counts, fam, reassign=True
            )
            centers, counts = cluster_means(X, labels, d)
        w = np.log(counts / t)
        scores = w[None, :] - pairwise_divergence(fam, X, centers)
        new_labels = scores.argmax(axis=1)
        objective = float(
            -scores[np.arange(t), new_labels].sum() + t * logsumexp(w)
        )
        trace.append(objective)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return ClusteringResult(
        labels=labels,
        centers=centers,
        objective=trace[-1],
        iterations=iteration,
        weights=w,
        trace=trace,
    )


@dataclass
class SoftEmResult:
    posteriors: np.ndarray
    weights: np.ndarray
    centers: np.ndarray
    loglik: float
    iterations: int
    trace: list = field(default_factory=list)
    restarts_summary: Optional[tuple] = None


def _em_once(X, d, fam, rng, max_iter=300, tol=1e-9):
    t = X.shape[0]
    centers = X[rng.choice(t, size=d, replace=False)].copy()
    logq = np.full(d, -np.log(d))
    prev = -np.inf
    trace = []
    P = np.full((t, d), 1.0 / d)
    iteration = 0
    for iteration in range(1, max_iter + 1):
        S = logq[None, :] - pairwise_divergence(fam, X, centers)
        lse = logsumexp(S, axis=1)
        ll = float(lse.sum())
        P = np.exp(S - lse[:, None])
        trace.append(ll)
        if ll - prev < tol * (1.0 + abs(ll)) and iteration > 1:
            break
        prev = ll
        mass = P.sum(axis=0)
        logq = np.log(np.maximum(mass, 1e-300)) - np.log(t)
        nz = mass > 1e-12
        centers[nz] = (P.T @ X)[nz] / mass[nz, None]
    return SoftEmResult(
        posteriors=P,
        weights=np.exp(logq),
        centers=centers,
        loglik=trace[-1],
        iterations=iteration,
        trace=trace,
    )


def soft_em_restarts(X, config):
    fam = family(config.family)
    X = fam.check_domain(X)
    return [
        _em_once(X, config.d, fam, derived_rng(config.seed, 1, r))
        for r in range(config.restarts)
    ]


def soft_em(X, config):
    """Mixture EM under the chosen divergence; best of random restarts.

    The per-point log-likelihood uses cluster weights q and the divergence
    as the exponential-family log-density up to a carrier term, so the
    trace is nondecreasing within each restart.
    """
    results = soft_em_restarts(X, config)
    logliks = np.array([r.loglik for r in results])
    best = results[int(np.argmax(logliks))]
    best.restarts_summary = (float(logliks.mean()), float(logliks.std()))
    return best
