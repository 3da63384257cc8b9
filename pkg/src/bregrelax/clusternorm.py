"""The cluster norm: the matrix norm induced by budgeted spectral relaxations.

For a cluster budget d, the squared norm of a t x n matrix T is the value of

    min tr(T' M^+ T)   over symmetric M with 0 <= M <= I spectrally,
                       tr(M) <= d - 1 and Im(T) within Im(M),

which reduces, on the singular values s_1 >= ... >= s_t of T, to the
separable program

    f(s) = min sum_i s_i^2 / sigma_i   s.t. sigma_i in [0, 1],
                                            sum_i sigma_i <= d - 1.

f has a closed water-filling solution: the top k values saturate at
sigma = 1 and the rest share the remaining budget proportionally to s_i.
sqrt(f) is a symmetric gauge of s, hence a unitarily invariant norm of T;
it equals the Frobenius norm whenever rank(T) <= d - 1 and grows toward a
scaled trace norm as the spectrum spreads.  The dual norm is the Euclidean
norm of the top d - 1 singular values.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class WaterfillCertificate:
    """Solution of the spectrum program: breakpoint, eigenvalues, value.

    ``sigma`` is the optimal eigenvalue allocation (1 on the top ``k``
    entries, proportional water-filling on the tail) and ``value`` equals
    the squared norm of any matrix with this singular spectrum.
    """

    k: int
    sigma: np.ndarray
    value: float


def spectrum_waterfill(s, d):
    """Evaluate the squared-norm program on a nonincreasing spectrum.

    Scans breakpoints k = 0 .. d-2 for the smallest k whose tail sum covers
    (d-1-k) times the next value; the scan is guaranteed to stop by
    k = d - 2.  Spectra shorter than d - 1 are zero-padded.
    """
    if d < 2:
        raise ValueError(f"cluster budget d must be at least 2, got {d}")
    s = np.asarray(s, dtype=float).ravel()
    if np.any(s < -1e-12):
        raise ValueError("singular spectrum must be nonnegative")
    s = np.maximum(s, 0.0)
    if np.any(np.diff(s) > 1e-9 * max(1.0, float(s.max(initial=0.0)))):
        raise ValueError("singular spectrum must be nonincreasing")
    if s.size < d - 1:
        s = np.concatenate([s, np.zeros(d - 1 - s.size)])
    t = s.size

    tails = np.concatenate([np.cumsum(s[::-1])[::-1], [0.0]])  # tails[k] = sum s[k:]
    k = d - 2
    for cand in range(d - 1):
        if tails[cand] >= (d - 1 - cand) * s[cand]:
            k = cand
            break

    tail = tails[k]
    sigma = np.ones(t)
    if tail > 0.0:
        sigma[k:] = (d - 1 - k) * s[k:] / tail
    else:
        sigma[k:] = 0.0
    value = float(np.sum(s[:k] ** 2) + tail**2 / (d - 1 - k))
    return WaterfillCertificate(k=k, sigma=sigma, value=value)


def cluster_norm(T, d):
    """Norm of a matrix under cluster budget d (full singular decomposition)."""
    T = np.asarray(T, dtype=float)
    s = np.linalg.svd(T, compute_uv=False)
    return float(np.sqrt(max(spectrum_waterfill(s, d).value, 0.0)))


def cluster_norm_dual(R, d):
    """Dual norm: the Euclidean norm of the top d - 1 singular values."""
    R = np.asarray(R, dtype=float)
    s = np.linalg.svd(R, compute_uv=False)
    return float(np.linalg.norm(s[: d - 1]))


def cluster_norm_dual_subgradient(R, d):
    """Unit-norm matrix S attaining <R, S> = dual norm of R.

    Built from the singular triples of R: the top d - 1 singular values,
    normalized to unit Euclidean length, are placed back on their singular
    vectors and the rest are zeroed.  Satisfies cluster_norm(S, d) = 1.
    """
    R = np.asarray(R, dtype=float)
    U, s, Vt = np.linalg.svd(R, full_matrices=False)
    top = s[: d - 1]
    scale = np.linalg.norm(top)
    if scale <= 0.0:
        raise ValueError("zero input: the subgradient direction is undefined")
    r = min(d - 1, s.size)
    return (U[:, :r] * (top[:r] / scale)) @ Vt[:r]


def recover_equivalence(T, d, relaxation="centered"):
    """Optimal relaxation matrix M paired with T at the squared-norm optimum.

    The left singular vectors of T carry the water-filled eigenvalues, so
    tr(T' M^+ T) equals the squared cluster norm and Im(T) lies within
    Im(M).  With ``relaxation="rowsum"`` the centered solution is mapped
    through M -> H M H + 11'/t, for callers that solved the centered
    formulation of a row-sum constrained problem.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    if not np.any(T):
        raise ValueError("cannot recover an equivalence matrix from T = 0")
    U, s, _ = np.linalg.svd(T, full_matrices=False)
    cert = spectrum_waterfill(s, d)
    sigma = cert.sigma[: s.size]
    M = (U * sigma) @ U.T
    if relaxation == "centered":
        return M
    if relaxation == "rowsum":
        t = M.shape[0]
        ones = np.ones(t)
        HM = M - np.outer(ones, M.mean(axis=0))
        HMH = HM - np.outer(HM.mean(axis=1), ones)
        return 0.5 * (HMH + HMH.T) + 1.0 / t
    raise ValueError(f"unsupported target relaxation {relaxation!r}")
