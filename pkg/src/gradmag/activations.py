"""Activation families with symmetric positive-semidefinite Jacobians.

Four kinds are supported. "squareplus" and "sigmoid" act elementwise;
"softmax" and "pnorm" act on the whole pre-activation vector. Every kind
is the gradient of a convex scalar function of z, which is what makes the
enclosing network a conservative, monotone vector field.

All functions accept a single vector (N,) or a batch (L, N) applied
rowwise, except :func:`activation_jacobian` which is single-vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VALID_KINDS = ("squareplus", "sigmoid", "softmax", "pnorm")

#: Kinds whose Jacobian is diagonal.
ELEMENTWISE_KINDS = ("squareplus", "sigmoid")


@dataclass(frozen=True)
class Activation:
    """Activation selector: kind, shape parameter beta, exponent p.

    beta must be strictly positive. p is used by "pnorm" only and must be
    an even integer >= 2; it is a fixed configuration value, not learned.
    """

    kind: str
    beta: float = 1.0
    p: int = 8

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if not (np.isfinite(self.beta) and self.beta > 0.0):
            raise ValueError(f"activation beta must be > 0, got {self.beta!r}")
        if self.kind == "pnorm":
            if int(self.p) != self.p or self.p < 2 or self.p % 2 != 0:
                raise ValueError(f"pnorm exponent p must be an even integer >= 2, got {self.p!r}")


def _pnorm_scaled(act, z):
    """Stable helper: returns (y, m, ustar) with w = beta*z, m = max(|w|, 1),
    y = w/m and ustar = m**-p + sum(y**p), so that 1 + sum(w**p) = m**p * ustar."""
    w = act.beta * z
    m = np.maximum(np.max(np.abs(w), axis=-1, keepdims=True), 1.0)
    y = w / m
    ustar = m ** (-float(act.p)) + np.sum(y ** act.p, axis=-1, keepdims=True)
    return y, m, ustar


def activate(act, z):
    """Evaluate the activation vector sigma(z)."""
    z = np.asarray(z, dtype=float)
    if act.kind == "squareplus":
        return 0.5 * (z + np.sqrt(z * z + act.beta))
    if act.kind == "sigmoid":
        return z / np.sqrt(z * z + act.beta)
    if act.kind == "softmax":
        e = np.exp(act.beta * (z - np.max(z, axis=-1, keepdims=True)))
        return e / np.sum(e, axis=-1, keepdims=True)
    # pnorm: gradient of the smooth p-norm [1 + sum((beta z)^p)]^(1/p) / beta.
    y, _, ustar = _pnorm_scaled(act, z)
    p = act.p
    return y ** (p - 1) * ustar ** (-(p - 1) / p)


def activation_jacobian(act, z):
    """Dense Jacobian d sigma / d z at a single vector z. Symmetric PSD."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise ValueError("activation_jacobian expects a single vector")
    if act.kind == "squareplus":
        return np.diag(0.5 * (1.0 + z / np.sqrt(z * z + act.beta)))
    if act.kind == "sigmoid":
        return np.diag(act.beta * (z * z + act.beta) ** -1.5)
    if act.kind == "softmax":
        s = activate(act, z)
        return act.beta * (np.diag(s) - np.outer(s, s))
    y, m, ustar = _pnorm_scaled(act, z)
    u1, m1 = ustar[..., 0], m[..., 0]
    p = act.p
    c = (p - 1) * act.beta / m1
    diag = y ** (p - 2) * u1 ** (-(p - 1) / p)
    r = y ** (p - 1)
    return c * (np.diag(diag) - u1 ** (-(2 * p - 1) / p) * np.outer(r, r))


def activation_jvp(act, z, w):
    """Jacobian-vector product (d sigma / d z) @ w, rowwise on batches.

    Cheaper than forming the dense Jacobian; used by the reverse-mode pass.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    if act.kind == "squareplus":
        return 0.5 * (1.0 + z / np.sqrt(z * z + act.beta)) * w
    if act.kind == "sigmoid":
        return act.beta * (z * z + act.beta) ** -1.5 * w
    if act.kind == "softmax":
        s = activate(act, z)
        sw = np.sum(s * w, axis=-1, keepdims=True)
        return act.beta * (s * w - s * sw)
    y, m, ustar = _pnorm_scaled(act, z)
    p = act.p
    c = (p - 1) * act.beta / m
    r = y ** (p - 1)
    rw = np.sum(r * w, axis=-1, keepdims=True)
    return c * (ustar ** (-(p - 1) / p) * y ** (p - 2) * w - ustar ** (-(2 * p - 1) / p) * r * rw)


def activation_beta_grad(act, z):
    """Derivative of sigma with respect to the shape parameter beta."""
    z = np.asarray(z, dtype=float)
    if act.kind == "squareplus":
        return 0.25 / np.sqrt(z * z + act.beta)
    if act.kind == "sigmoid":
        return -0.5 * z * (z * z + act.beta) ** -1.5
    if act.kind == "softmax":
        s = activate(act, z)
        zs = np.sum(z * s, axis=-1, keepdims=True)
        return s * (z - zs)
    # d sigma_n / d beta = (p-1) sigma_n / (beta * (1 + sum((beta z)^p)))
    y, m, ustar = _pnorm_scaled(act, z)
    p = act.p
    s = y ** (p - 1) * ustar ** (-(p - 1) / p)
    return (p - 1) * s / (act.beta * m**p * ustar)
