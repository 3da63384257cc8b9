import numpy as np
import pytest

from bregrelax import (
    BERNOULLI_CLIP,
    DomainError,
    conjugate_divergence,
    conjugate_divergence_grad,
    divergence,
    family,
    pairwise_divergence,
    rowwise_divergence,
)
from bregrelax.divergences import SoftMaxPotential, logsumexp_value_grad

from conftest import finite_difference_gradient


def test_family_lookup():
    assert family("euclidean").name == "euclidean"
    assert family("bernoulli").name == "bernoulli"
    fam = family("euclidean")
    assert family(fam) is fam
    with pytest.raises(ValueError):
        family("poisson")


def test_euclidean_divergence_halved_square():
    assert divergence("euclidean", [1.0], [0.0]) == pytest.approx(0.5)


def test_divergence_zero_at_equal_arguments():
    assert divergence("bernoulli", [0.5], [0.5]) == 0.0


def test_bernoulli_divergence_value():
    # 0.5 ln(4/3) + 0.5 ln(2/3): KL of a fair coin from a 1/4 coin
    want = 0.5 * np.log(0.5 / 0.25) + 0.5 * np.log(0.5 / 0.75)
    got = divergence("bernoulli", [0.5], [0.25])
    assert got == pytest.approx(want, rel=1e-12)
    assert got == pytest.approx(0.5 * np.log(4.0 / 3.0), rel=1e-3)


def test_divergence_domain_error_reports_index():
    with pytest.raises(DomainError) as err:
        divergence("bernoulli", [0.5, 1.5], [0.5, 0.5])
    assert "1" in str(err.value)


def test_bernoulli_boundary_grazing_is_clamped():
    # entries within the clip band are accepted and pulled inside
    val = divergence("bernoulli", [BERNOULLI_CLIP / 2], [0.5])
    assert np.isfinite(val)
    with pytest.raises(DomainError):
        divergence("bernoulli", [-1e-3], [0.5])


def test_transfer_inverse_roundtrip(rng):
    for name in ("euclidean", "bernoulli"):
        fam = family(name)
        x = rng.uniform(0.05, 0.95, size=200)
        if name == "euclidean":
            x = rng.normal(size=200) * 3.0
        z = rng.normal(size=200) * 3.0
        assert np.allclose(fam.transfer(fam.inverse_transfer(z)), z, rtol=1e-10, atol=1e-10)
        assert np.allclose(fam.inverse_transfer(fam.transfer(x)), x, rtol=1e-10, atol=1e-10)


def test_divergence_nonnegative_zero_iff_equal(rng):
    for name in ("euclidean", "bernoulli"):
        fam = family(name)
        for _ in range(250):
            if name == "euclidean":
                x, y = rng.normal(size=4), rng.normal(size=4)
            else:
                x, y = rng.uniform(0.02, 0.98, size=4), rng.uniform(0.02, 0.98, size=4)
            val = divergence(fam, x, y)
            assert val >= 0.0
            assert divergence(fam, x, x) <= 1e-12


def test_rowwise_divergence_matches_per_row_sum(rng):
    X = rng.uniform(0.05, 0.95, size=(3, 2))
    Y = rng.uniform(0.05, 0.95, size=(3, 2))
    total = sum(divergence("bernoulli", X[i], Y[i]) for i in range(3))
    assert rowwise_divergence("bernoulli", X, Y) == pytest.approx(total, rel=1e-12)
    assert rowwise_divergence("bernoulli", X, X) == 0.0


def test_rowwise_divergence_euclidean_sum_case():
    X = np.array([[1.0], [0.0]])
    Y = np.zeros((2, 1))
    assert rowwise_divergence("euclidean", X, Y) == pytest.approx(0.5)


def test_rowwise_divergence_shape_mismatch():
    with pytest.raises(ValueError):
        rowwise_divergence("euclidean", np.zeros((2, 2)), np.zeros((3, 2)))


def test_conjugate_identity(rng):
    for name in ("euclidean", "bernoulli"):
        fam = family(name)
        if name == "euclidean":
            X = rng.normal(size=(4, 3))
            Y = rng.normal(size=(4, 3))
        else:
            X = rng.uniform(0.05, 0.95, size=(4, 3))
            Y = rng.uniform(0.05, 0.95, size=(4, 3))
        lhs = rowwise_divergence(fam, X, Y)
        rhs = conjugate_divergence(fam, fam.transfer(Y), fam.transfer(X))
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_conjugate_divergence_euclidean_self_conjugate():
    assert conjugate_divergence("euclidean", np.array([[1.0]]), np.array([[0.0]])) == pytest.approx(0.5)


def test_conjugate_divergence_bernoulli_value():
    a, b = 0.0, np.log(3.0)
    sig = 1.0 / (1.0 + np.exp(-b))
    want = np.log(2.0) - np.log(1.0 + 3.0) + (b - a) * sig
    got = conjugate_divergence("bernoulli", np.array([[a]]), np.array([[b]]))
    assert got == pytest.approx(want, rel=1e-12)
    assert got == pytest.approx(0.1308, abs=1e-4)
    # swap identity: equals the primal divergence of the sigmoid images
    assert got == pytest.approx(divergence("bernoulli", [sig], [0.5]), rel=1e-10)


def test_conjugate_divergence_zero_at_equal(rng):
    A = rng.normal(size=(3, 3))
    assert conjugate_divergence("bernoulli", A, A) == pytest.approx(0.0, abs=1e-14)


def test_conjugate_grad_euclidean_is_difference(rng):
    A = rng.normal(size=(3, 2))
    B = rng.normal(size=(3, 2))
    assert np.allclose(conjugate_divergence_grad("euclidean", A, B), A - B)
    assert np.allclose(conjugate_divergence_grad("euclidean", A, A), 0.0)


def test_conjugate_grad_matches_finite_differences(rng):
    for name in ("euclidean", "bernoulli"):
        A = rng.normal(size=(4, 3))
        B = rng.normal(size=(4, 3))
        grad = conjugate_divergence_grad(name, A, B)
        fd = finite_difference_gradient(lambda Z: conjugate_divergence(name, Z, B), A)
        assert np.linalg.norm(fd - grad) <= 1e-5 * (1.0 + np.linalg.norm(grad))


def test_conjugate_divergence_convex_in_first_argument(rng):
    for name in ("euclidean", "bernoulli"):
        for _ in range(50):
            A1 = rng.normal(size=(3, 2))
            A2 = rng.normal(size=(3, 2))
            B = rng.normal(size=(3, 2))
            lam = rng.uniform(0.1, 0.9)
            mix = conjugate_divergence(name, lam * A1 + (1 - lam) * A2, B)
            bound = lam * conjugate_divergence(name, A1, B) + (1 - lam) * conjugate_divergence(name, A2, B)
            assert mix <= bound + 1e-10


def test_joint_midpoint_convexity(rng):
    for name in ("euclidean", "bernoulli"):
        for _ in range(50):
            if name == "euclidean":
                pairs = rng.normal(size=(4, 5))
                x1, y1, x2, y2 = pairs[0], pairs[1], pairs[2], pairs[3]
            else:
                pairs = rng.uniform(0.05, 0.95, size=(4, 5))
                x1, y1, x2, y2 = pairs[0], pairs[1], pairs[2], pairs[3]
            mid = divergence(name, (x1 + x2) / 2, (y1 + y2) / 2)
            avg = 0.5 * divergence(name, x1, y1) + 0.5 * divergence(name, x2, y2)
            assert mid <= avg + 1e-10


def test_pairwise_divergence_matches_loops(rng):
    X = rng.uniform(0.1, 0.9, size=(5, 3))
    C = rng.uniform(0.1, 0.9, size=(2, 3))
    D = pairwise_divergence("bernoulli", X, C)
    assert D.shape == (5, 2)
    for i in range(5):
        for j in range(2):
            assert D[i, j] == pytest.approx(divergence("bernoulli", X[i], C[j]), rel=1e-12)


def test_logsumexp_value_grad_stability():
    w = np.array([1000.0, 1000.0, -1000.0])
    val, grad = logsumexp_value_grad(w)
    assert np.isfinite(val)
    assert val == pytest.approx(1000.0 + np.log(2.0), rel=1e-12)
    assert grad.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(grad >= 0.0)


def test_softmax_potential_gradient(rng):
    pot = SoftMaxPotential(5)
    w = rng.normal(size=5) * 4.0
    grad = pot.gradient(w)
    fd = finite_difference_gradient(pot.value, w)
    assert grad.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(fd - grad) <= 1e-6 * (1.0 + np.linalg.norm(grad))
    with pytest.raises(ValueError):
        pot.value(np.zeros(4))
    with pytest.raises(ValueError):
        SoftMaxPotential(0)
