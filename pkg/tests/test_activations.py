import numpy as np
import pytest

from gradmag.activations import (Activation, activate, activation_beta_grad,
                                 activation_jacobian, activation_jvp)

KINDS = ("squareplus", "sigmoid", "softmax", "pnorm")


def fd_jacobian(act, z, h):
    n = len(z)
    J = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (activate(act, z + e) - activate(act, z - e)) / (2 * h)
    return J


def test_squareplus_values():
    act = Activation("squareplus", beta=1.0)
    assert activate(act, np.zeros(3))[0] == pytest.approx(0.5, abs=0)
    assert activation_jacobian(act, np.zeros(3))[0, 0] == pytest.approx(0.5, abs=0)
    assert activation_beta_grad(act, np.zeros(1))[0] == pytest.approx(0.25, abs=0)


def test_softmax_uniform_and_normalized():
    rng = np.random.default_rng(0)
    act = Activation("softmax", beta=2.3)
    assert np.allclose(activate(act, np.zeros(7)), np.full(7, 1 / 7), atol=1e-16)
    for _ in range(1000):
        z = rng.normal(0, 3, size=rng.integers(2, 12))
        assert abs(np.sum(activate(act, z)) - 1.0) <= 1e-12


def test_softmax_jacobian_row_sums_zero():
    rng = np.random.default_rng(1)
    act = Activation("softmax", beta=1.7)
    for _ in range(50):
        z = rng.normal(0, 2, size=6)
        J = activation_jacobian(act, z)
        assert np.max(np.abs(J.sum(axis=1))) <= 1e-14


def test_softmax_shift_invariance():
    rng = np.random.default_rng(2)
    act = Activation("softmax", beta=0.8)
    for _ in range(200):
        z = rng.normal(0, 2, size=5)
        c = rng.normal(0, 50)
        assert np.max(np.abs(activate(act, z + c) - activate(act, z))) <= 1e-12


def test_pnorm_zero_vector():
    act = Activation("pnorm", beta=1.4, p=8)
    assert np.array_equal(activate(act, np.zeros(5)), np.zeros(5))
    assert np.array_equal(activation_beta_grad(act, np.zeros(5)), np.zeros(5))


@pytest.mark.parametrize("kind", KINDS)
def test_jacobian_matches_finite_differences(kind):
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        act = Activation(kind, beta=float(np.exp(rng.normal(0, 0.5))), p=8)
        z = rng.normal(0, 1.5, size=n)
        h = 1e-5 * (1 + np.abs(z).max())
        J = activation_jacobian(act, z)
        Jfd = fd_jacobian(act, z, h)
        scale = max(1.0, np.abs(Jfd).max())
        assert np.abs(J - Jfd).max() / scale <= 1e-6


@pytest.mark.parametrize("kind", KINDS)
def test_beta_grad_matches_finite_differences(kind):
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(1, 9)) if kind in ("squareplus", "sigmoid") \
            else int(rng.integers(2, 9))
        beta = float(np.exp(rng.normal(0, 0.5)))
        act = Activation(kind, beta=beta, p=8)
        z = rng.normal(0, 1.5, size=n)
        h = 1e-6 * beta
        g = activation_beta_grad(act, z)
        gfd = (activate(Activation(kind, beta=beta + h, p=8), z)
               - activate(Activation(kind, beta=beta - h, p=8), z)) / (2 * h)
        scale = max(1.0, np.abs(gfd).max())
        assert np.abs(g - gfd).max() / scale <= 1e-6


@pytest.mark.parametrize("kind", KINDS)
def test_jacobian_symmetric_psd(kind):
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(2, 10))
        act = Activation(kind, beta=float(np.exp(rng.normal(0, 0.7))), p=8)
        z = rng.normal(0, 2.0, size=n)
        J = activation_jacobian(act, z)
        assert np.abs(J - J.T).max() <= 1e-12
        assert np.linalg.eigvalsh(J).min() >= -1e-10


def test_jvp_matches_dense_jacobian():
    rng = np.random.default_rng(6)
    for kind in KINDS:
        for _ in range(50):
            act = Activation(kind, beta=1.3, p=8)
            z = rng.normal(0, 1.5, size=6)
            w = rng.normal(0, 1, size=6)
            assert np.allclose(activation_jvp(act, z, w),
                               activation_jacobian(act, z) @ w, atol=1e-13)


def test_squareplus_non_decreasing():
    act = Activation("squareplus", beta=0.3)
    rng = np.random.default_rng(7)
    z = np.sort(rng.normal(0, 3, size=500))
    s = activate(act, z)
    assert np.all(np.diff(s) >= 0)


def test_sigmoid_bounded_and_monotone():
    act = Activation("sigmoid", beta=2.0)
    z = np.linspace(-50, 50, 2001)
    s = activate(act, z)
    assert np.all(s > -1) and np.all(s < 1)
    assert np.all(np.diff(s) > 0)
    assert s[-1] > 0.999 and s[0] < -0.999


def test_pnorm_is_gradient_of_smooth_norm():
    # directional finite differences of S(z) = [1 + sum((b z)^p)]^(1/p) / b
    rng = np.random.default_rng(8)
    beta, p = 1.2, 8

    def S(z):
        return (1 + np.sum((beta * z) ** p)) ** (1 / p) / beta

    act = Activation("pnorm", beta=beta, p=p)
    for _ in range(100):
        z = rng.normal(0, 1.2, size=5)
        d = rng.normal(size=5)
        d /= np.linalg.norm(d)
        h = 1e-5
        fd = (S(z + h * d) - S(z - h * d)) / (2 * h)
        an = float(activate(act, z) @ d)
        assert abs(fd - an) / max(1.0, abs(fd)) <= 1e-6


def test_parameter_validation():
    with pytest.raises(ValueError):
        Activation("squareplus", beta=0.0)
    with pytest.raises(ValueError):
        Activation("softmax", beta=-1.0)
    with pytest.raises(ValueError):
        Activation("pnorm", beta=1.0, p=7)
    with pytest.raises(ValueError):
        Activation("pnorm", beta=1.0, p=0)
    with pytest.raises(ValueError):
        Activation("gelu", beta=1.0)


def test_pnorm_large_inputs_stable():
    act = Activation("pnorm", beta=1.0, p=8)
    z = np.array([1e3, -2e3, 5.0])
    s = activate(act, z)
    assert np.all(np.isfinite(s))
    J = activation_jacobian(act, z)
    assert np.all(np.isfinite(J))
