"""Monotone gradient network: a vector field that is the gradient of a convex scalar.

The network computes g(x) = A0 x + b0 + A^T sigma(A x + b), with A0 a
diagonal PSD matrix and sigma an activation whose Jacobian is symmetric
PSD. Its input Jacobian A0 + A^T J_sigma A is then symmetric PSD at every
point, so g is conservative and monotone by construction.

Parameterization keeps every structural constraint without projections:

* the two free diagonal entries of A0 are mu_floor + softplus(raw), so
  they stay >= mu_floor > 0;
* the activation shape parameter is beta = exp(rho) with rho learnable.

For 4-input networks (flux pair plus two angle features) only the first
two diagonal entries of A0 are free; the angle entries are pinned to zero
so the linear term never acts on the periodic features.
"""

from __future__ import annotations

import numpy as np

from .activations import VALID_KINDS, Activation, activate, activation_beta_grad, activation_jacobian, activation_jvp


class ModelFormatError(ValueError):
    """Raised for malformed or incompatible serialized model documents."""


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def softplus_inv(y):
    """Inverse of softplus for y > 0."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("softplus_inv requires positive input")
    return y + np.log1p(-np.exp(-y))


class GradientNetwork:
    """Single-hidden-layer monotone gradient network.

    Free parameters: A (N x D), b (N), the two raw diagonal entries of A0,
    b0 (D), and rho = log(beta). Total 3N+5 for D=2 and 5N+7 for D=4.
    """

    def __init__(self, A, b, a0_raw, b0, rho, kind, p=8, mu_floor=1e-3):
        self.A = np.array(A, dtype=float)
        self.b = np.array(b, dtype=float)
        self.a0_raw = np.array(a0_raw, dtype=float)
        self.b0 = np.array(b0, dtype=float)
        self.rho = float(rho)
        self.kind = str(kind)
        self.p = int(p)
        self.mu_floor = float(mu_floor)

        if self.A.ndim != 2:
            raise ValueError("A must be a 2-D array (n_hidden x input_dim)")
        n, d = self.A.shape
        if d not in (2, 4):
            raise ValueError(f"input_dim must be 2 or 4, got {d}")
        if n < 1:
            raise ValueError("need at least one hidden unit")
        if self.b.shape != (n,):
            raise ValueError("b must have shape (n_hidden,)")
        if self.a0_raw.shape != (2,):
            raise ValueError("a0_raw must have shape (2,)")
        if self.b0.shape != (d,):
            raise ValueError("b0 must have shape (input_dim,)")
        if self.mu_floor < 0:
            raise ValueError("mu_floor must be >= 0")
        # Validates kind and p eagerly through the Activation constructor.
        Activation(self.kind, beta=np.exp(self.rho), p=self.p)

    @classmethod
    def initialized(cls, kind, n_hidden, input_dim=2, p=8, beta0=1.0, mu0=0.1,
                    mu_floor=1e-3, weight_scale=None, rng=None):
        """Standard initialization: A ~ N(0, 1/sqrt(D)), zero biases.

        weight_scale overrides the default 1/sqrt(D) standard deviation of
        A; a small value starts the network close to its linear term.
        """
        rng = np.random.default_rng(rng)
        scale = 1.0 / np.sqrt(input_dim) if weight_scale is None else weight_scale
        A = rng.normal(0.0, scale, size=(n_hidden, input_dim))
        b = np.zeros(n_hidden)
        b0 = np.zeros(input_dim)
        a0_raw = np.full(2, softplus_inv(max(mu0 - mu_floor, 1e-12)))
        return cls(A, b, a0_raw, b0, np.log(beta0), kind, p=p, mu_floor=mu_floor)

    # -- derived views ---------------------------------------------------

    @property
    def n_hidden(self):
        return self.A.shape[0]

    @property
    def input_dim(self):
        return self.A.shape[1]

    @property
    def beta(self):
        return float(np.exp(self.rho))

    @property
    def activation(self):
        return Activation(self.kind, beta=self.beta, p=self.p)

    @property
    def a0_diag(self):
        """Effective diagonal of A0: floor + softplus(raw), zero-padded for D=4."""
        mu = self.mu_floor + softplus(self.a0_raw)
        if self.input_dim == 2:
            return mu
        return np.concatenate([mu, np.zeros(self.input_dim - 2)])

    def parameter_count(self):
        n, d = self.A.shape
        return n * d + n + 2 + d + 1

    def copy(self):
        return GradientNetwork(self.A, self.b, self.a0_raw, self.b0, self.rho,
                               self.kind, p=self.p, mu_floor=self.mu_floor)

    # -- flat parameter vector (optimizer interface) ----------------------

    def params_flat(self):
        return np.concatenate([self.A.ravel(), self.b, self.a0_raw, self.b0, [self.rho]])

    def set_params_flat(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.parameter_count(),):
            raise ValueError("parameter vector has wrong length")
        n, d = self.A.shape
        self.A = vec[: n * d].reshape(n, d).copy()
        pos = n * d
        self.b = vec[pos: pos + n].copy()
        pos += n
        self.a0_raw = vec[pos: pos + 2].copy()
        pos += 2
        self.b0 = vec[pos: pos + d].copy()
        self.rho = float(vec[pos + d])

    def weight_decay_mask(self):
        """1.0 on hidden-weight entries of the flat vector, 0.0 elsewhere."""
        mask = np.zeros(self.parameter_count())
        mask[: self.A.size] = 1.0
        return mask

    # -- evaluation --------------------------------------------------------

    def forward(self, x):
        """g(x) = A0 x + b0 + A^T sigma(A x + b) for a single input."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.input_dim,):
            raise ValueError(f"expected input of shape ({self.input_dim},), got {x.shape}")
        z = self.A @ x + self.b
        return self.a0_diag * x + self.b0 + self.A.T @ activate(self.activation, z)

    def forward_batch(self, X):
        """Rowwise forward for an (L, D) batch."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(f"expected batch of shape (L, {self.input_dim})")
        Z = X @ self.A.T + self.b
        S = activate(self.activation, Z)
        return X * self.a0_diag + self.b0 + S @ self.A

    def input_jacobian(self, x):
        """Jacobian dg/dx = A0 + A^T J_sigma A. Symmetric PSD."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.input_dim,):
            raise ValueError(f"expected input of shape ({self.input_dim},), got {x.shape}")
        z = self.A @ x + self.b
        act = self.activation
        if act.kind in ("squareplus", "sigmoid"):
            dsig = np.diagonal(activation_jacobian(act, z))
            body = (self.A * dsig[:, None]).T @ self.A
        else:
            body = self.A.T @ activation_jacobian(act, z) @ self.A
        return np.diag(self.a0_diag) + body

    # -- reverse mode -------------------------------------------------------

    def param_grad(self, x, upstream):
        """Gradient of <upstream, g(x)> with respect to the flat parameters."""
        x = np.asarray(x, dtype=float)
        upstream = np.asarray(upstream, dtype=float)
        if x.shape != (self.input_dim,) or upstream.shape != (self.input_dim,):
            raise ValueError("x and upstream must have shape (input_dim,)")
        return self.param_grad_batch(x[None, :], upstream[None, :])

    def param_grad_batch(self, X, U):
        """Accumulated gradient of sum_l <U_l, g(X_l)> over the flat parameters."""
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        if X.shape != U.shape or X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError("X and U must both have shape (L, input_dim)")
        act = self.activation
        Z = X @ self.A.T + self.b
        S = activate(act, Z)
        W = U @ self.A.T                      # rowwise A @ u
        V = activation_jvp(act, Z, W)         # rowwise J_sigma @ w

        grad_A = S.T @ U + V.T @ X
        grad_b = V.sum(axis=0)
        # chain through a0 = mu_floor + softplus(raw): d a0/d raw = sigmoid(raw)
        gate = 1.0 / (1.0 + np.exp(-self.a0_raw))
        grad_a0_raw = (U[:, :2] * X[:, :2]).sum(axis=0) * gate
        grad_b0 = U.sum(axis=0)
        # chain through beta = exp(rho)
        grad_rho = act.beta * float(np.sum(W * activation_beta_grad(act, Z)))
        return np.concatenate([grad_A.ravel(), grad_b, grad_a0_raw, grad_b0, [grad_rho]])

    # -- serialization -------------------------------------------------------

    def to_dict(self):
        """Plain-dict form with full-precision floats; beta/a0_diag are informational."""
        return {
            "input_dim": self.input_dim,
            "n_hidden": self.n_hidden,
            "activation": self.kind,
            "p": self.p,
            "rho": self.rho,
            "beta": self.beta,
            "mu_floor": self.mu_floor,
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "a0_raw": self.a0_raw.tolist(),
            "a0_diag": self.a0_diag.tolist(),
            "b0": self.b0.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        required = ("input_dim", "n_hidden", "activation", "p", "rho", "mu_floor",
                    "A", "b", "a0_raw", "b0")
        for field in required:
            if field not in doc:
                raise ModelFormatError(f"network document missing field {field!r}")
        if doc["activation"] not in VALID_KINDS:
            raise ModelFormatError(f"unknown activation tag {doc['activation']!r}")
        net = cls(doc["A"], doc["b"], doc["a0_raw"], doc["b0"], doc["rho"],
                  doc["activation"], p=doc["p"], mu_floor=doc["mu_floor"])
        if net.input_dim != doc["input_dim"] or net.n_hidden != doc["n_hidden"]:
            raise ModelFormatError("declared dimensions do not match array shapes")
        return net
