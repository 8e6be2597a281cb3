"""Machine-facing magnetic model variants built on gradient networks.

A model maps between stator flux linkage and stator current in rotor
coordinates and produces electromagnetic torque. Variants:

* ``current`` / ``current-sym``: current maps i(psi), optionally with
  q-axis symmetry enforced by reflect-and-average.
* ``flux`` / ``flux-sym``: the dual flux-linkage maps psi(i).
* ``harmonic-current`` / ``harmonic-flux``: angle-dependent maps with the
  rotor angle encoded as [cos(k theta), sin(k theta)] features, periodic
  with electrical period 2*pi/k by construction.
* ``linear``: closed-form magnetically linear baseline with constant
  inductances L_d, L_q and PM flux psi_f; usable as either map.

Inputs are affinely normalized (per-axis scale, d-axis center) before the
network, and outputs are unscaled with the same diagonal so the composed
map stays the gradient of a single scalar potential. The q-axis center is
always zero so symmetrization stays exact.

Models are immutable after construction; all evaluations are pure.
"""

from __future__ import annotations

import json
from typing import NamedTuple

import numpy as np

from .frames import Q_REFLECT, cross_torque_batch
from .gradnet import GradientNetwork, ModelFormatError

FORMAT_VERSION = 1

VARIANTS = ("current", "current-sym", "flux", "flux-sym",
            "harmonic-current", "harmonic-flux", "linear")
CURRENT_MAP_VARIANTS = ("current", "current-sym", "harmonic-current", "linear")
FLUX_MAP_VARIANTS = ("flux", "flux-sym", "harmonic-flux", "linear")
HARMONIC_VARIANTS = ("harmonic-current", "harmonic-flux")
SYMMETRIC_VARIANTS = ("current-sym", "flux-sym")


class VariantError(ValueError):
    """Operation applied to an incompatible model variant."""


class MagneticOutput(NamedTuple):
    primal: np.ndarray  # current for current maps, flux linkage for flux maps
    torque: float


class MagneticModel:
    """Tagged, immutable wrapper tying a gradient network (or the linear
    closed form) to a map direction, symmetry handling, and normalization."""

    def __init__(self, variant, net=None, k=None, in_center=None, in_scale=None,
                 L_d=None, L_q=None, psi_f=None):
        if variant not in VARIANTS:
            raise VariantError(f"unknown model variant {variant!r}")
        self.variant = variant
        self.net = net
        self.k = None if k is None else int(k)

        if variant == "linear":
            if net is not None:
                raise ValueError("linear baseline takes no network")
            if L_d is None or L_q is None or psi_f is None:
                raise ValueError("linear baseline requires L_d, L_q, psi_f")
            if not (L_d > 0 and L_q > 0 and np.isfinite(psi_f)):
                raise ValueError("need L_d > 0, L_q > 0 and finite psi_f")
            self.L_d, self.L_q, self.psi_f = float(L_d), float(L_q), float(psi_f)
            self.in_center = np.zeros(2)
            self.in_scale = np.ones(2)
            return

        if net is None:
            raise ValueError(f"variant {variant!r} requires a GradientNetwork")
        need_d = 4 if variant in HARMONIC_VARIANTS else 2
        if net.input_dim != need_d:
            raise ValueError(f"variant {variant!r} needs input_dim {need_d}, "
                             f"network has {net.input_dim}")
        if variant in HARMONIC_VARIANTS:
            if self.k is None or self.k < 1:
                raise ValueError("harmonic variants require integer k >= 1")
        elif self.k is not None:
            raise ValueError("k is only meaningful for harmonic variants")
        self.L_d = self.L_q = self.psi_f = None

        center = np.zeros(2) if in_center is None else np.array(in_center, dtype=float)
        scale = np.ones(2) if in_scale is None else np.array(in_scale, dtype=float)
        if center.shape != (2,) or scale.shape != (2,):
            raise ValueError("in_center/in_scale describe the two map inputs")
        if center[1] != 0.0:
            raise ValueError("q-axis input center must be 0 to preserve symmetry")
        if np.any(scale <= 0):
            raise ValueError("input scales must be positive")
        self.in_center = center
        self.in_scale = scale

    @property
    def is_current_map(self):
        return self.variant in CURRENT_MAP_VARIANTS

    @property
    def is_flux_map(self):
        return self.variant in FLUX_MAP_VARIANTS

    @property
    def is_harmonic(self):
        return self.variant in HARMONIC_VARIANTS

    def parameter_count(self):
        return 0 if self.net is None else self.net.parameter_count()


def fourier_features(theta_m, k):
    """Periodic angle encoding [cos(k theta), sin(k theta)]; unit norm.

    Scalar input gives shape (2,), array input shape (L, 2).
    """
    if k < 1 or int(k) != k:
        raise ValueError("k must be an integer >= 1")
    theta_m = np.asarray(theta_m, dtype=float)
    return np.stack([np.cos(k * theta_m), np.sin(k * theta_m)], axis=-1)


def symmetrize_current(g_out_plus, g_out_mirror):
    """Reflect-and-average combination 0.5*(g(x) + C g(C x)).

    ``g_out_mirror`` must be the raw map output evaluated at the q-reflected
    input. Works on single vectors and on (L, 2) batches.
    """
    g_out_plus = np.asarray(g_out_plus, dtype=float)
    g_out_mirror = np.asarray(g_out_mirror, dtype=float)
    return 0.5 * (g_out_plus + g_out_mirror @ Q_REFLECT)


def _check_finite(name, x):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")


def _rot90_rows(X):
    """Rowwise application of the +90 degree rotation."""
    return np.stack([-X[:, 1], X[:, 0]], axis=1)


def _eval_net(model, X2, theta):
    """Shared evaluation core for network-backed variants.

    Returns (primal (L,2), tau_vec (L,2) or None, features (L,2) or None).
    """
    net = model.net
    Xs = (X2 - model.in_center) / model.in_scale
    if model.is_harmonic:
        feats = fourier_features(theta, model.k)
        G = net.forward_batch(np.hstack([Xs, feats]))
        return G[:, :2] / model.in_scale, G[:, 2:4], feats
    if model.variant in SYMMETRIC_VARIANTS:
        Gp = net.forward_batch(Xs)
        Gm = net.forward_batch(Xs @ Q_REFLECT)
        return symmetrize_current(Gp, Gm) / model.in_scale, None, None
    return net.forward_batch(Xs) / model.in_scale, None, None


def current_map_batch(model, psi, theta_m=None):
    """Evaluate i(psi, theta) and torque rowwise. psi has shape (L, 2)."""
    if not model.is_current_map:
        raise VariantError(f"variant {model.variant!r} is not a current map")
    psi = np.asarray(psi, dtype=float)
    _check_finite("psi", psi)
    L = psi.shape[0]
    theta = np.zeros(L) if theta_m is None else np.broadcast_to(
        np.asarray(theta_m, dtype=float), (L,))
    if model.variant == "linear":
        i = (psi - [model.psi_f, 0.0]) / [model.L_d, model.L_q]
        return i, cross_torque_batch(i, psi)
    i, tau_vec, feats = _eval_net(model, psi, theta)
    tau = cross_torque_batch(i, psi)
    if tau_vec is not None:
        # energy-based harmonic torque: + k * theta_feat^T J tau_vec
        tau = tau + model.k * np.sum(feats * _rot90_rows(tau_vec), axis=1)
    return i, tau


def flux_map_batch(model, i, theta_m=None):
    """Evaluate psi(i, theta) and torque rowwise. i has shape (L, 2)."""
    if not model.is_flux_map:
        raise VariantError(f"variant {model.variant!r} is not a flux map")
    i = np.asarray(i, dtype=float)
    _check_finite("i", i)
    L = i.shape[0]
    theta = np.zeros(L) if theta_m is None else np.broadcast_to(
        np.asarray(theta_m, dtype=float), (L,))
    if model.variant == "linear":
        psi = i * [model.L_d, model.L_q] + [model.psi_f, 0.0]
        return psi, cross_torque_batch(i, psi)
    psi, tau_vec, feats = _eval_net(model, i, theta)
    tau = cross_torque_batch(i, psi)
    if tau_vec is not None:
        # co-energy-based (dual) harmonic torque: - k * theta_feat^T J tau_vec
        tau = tau - model.k * np.sum(feats * _rot90_rows(tau_vec), axis=1)
    return psi, tau


def current_map(model, psi, theta_m=0.0):
    """Single-point current map: returns MagneticOutput(i, torque)."""
    i, tau = current_map_batch(model, np.asarray(psi, dtype=float)[None, :],
                               np.asarray([theta_m]))
    return MagneticOutput(i[0], float(tau[0]))


def flux_map(model, i, theta_m=0.0):
    """Single-point flux map: returns MagneticOutput(psi, torque)."""
    psi, tau = flux_map_batch(model, np.asarray(i, dtype=float)[None, :],
                              np.asarray([theta_m]))
    return MagneticOutput(psi[0], float(tau[0]))


def _jacobian2(model, x, theta_m):
    """2x2 Jacobian of the primal output with respect to its 2-D input."""
    x = np.asarray(x, dtype=float)
    s = model.in_scale
    xs = (x - model.in_center) / s
    if model.is_harmonic:
        z4 = np.concatenate([xs, fourier_features(float(theta_m), model.k)])
        J = model.net.input_jacobian(z4)[:2, :2]
        return J / np.outer(s, s)
    if model.variant in SYMMETRIC_VARIANTS:
        Jp = model.net.input_jacobian(xs)
        Jm = model.net.input_jacobian(Q_REFLECT @ xs)
        return 0.5 * (Jp + Q_REFLECT @ Jm @ Q_REFLECT) / np.outer(s, s)
    return model.net.input_jacobian(xs) / np.outer(s, s)


def incremental_inverse_inductance(model, psi, theta_m=0.0):
    """d i / d psi at a point: symmetric, positive definite (>= mu floor)."""
    if not model.is_current_map:
        raise VariantError(f"variant {model.variant!r} is not a current map")
    if model.variant == "linear":
        return np.diag([1.0 / model.L_d, 1.0 / model.L_q])
    return _jacobian2(model, psi, theta_m)


def incremental_inductance(model, i, theta_m=0.0):
    """d psi / d i at a point, for flux-map variants."""
    if not model.is_flux_map:
        raise VariantError(f"variant {model.variant!r} is not a flux map")
    if model.variant == "linear":
        return np.diag([model.L_d, model.L_q])
    return _jacobian2(model, i, theta_m)


# -- potentials --------------------------------------------------------------


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def _adaptive_segment_integral(values_fn, tol=1e-10):
    """Adaptive 32-point Gauss-Legendre integral of values_fn over [0, 1].

    values_fn maps an array of parameters t in [0, 1] to integrand values.
    Segments are bisected until the two-half refinement agrees with the
    parent estimate within tol.
    """
    nodes, weights = _GL_NODES, _GL_WEIGHTS

    def gauss(lo, hi):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        return half * float(np.dot(weights, values_fn(mid + half * nodes)))

    def recurse(lo, hi, whole, depth):
        mid = 0.5 * (lo + hi)
        left, right = gauss(lo, mid), gauss(mid, hi)
        if abs(left + right - whole) <= tol or depth >= 24:
            return left + right
        return recurse(lo, mid, left, depth + 1) + recurse(mid, hi, right, depth + 1)

    return recurse(0.0, 1.0, gauss(0.0, 1.0), 0)


def field_energy(model, psi, theta_m=0.0, psi_ref=None, tol=1e-10):
    """Field energy difference W(psi) - W(psi_ref) at fixed rotor angle.

    Computed as the line integral of the current map along the straight
    segment from psi_ref to psi; path-independent because the map is
    conservative.
    """
    if not model.is_current_map:
        raise VariantError(f"variant {model.variant!r} is not a current map")
    psi = np.asarray(psi, dtype=float)
    ref = np.zeros(2) if psi_ref is None else np.asarray(psi_ref, dtype=float)
    delta = psi - ref

    def integrand(t):
        pts = ref + np.outer(t, delta)
        i, _ = current_map_batch(model, pts, float(theta_m))
        return i @ delta

    return _adaptive_segment_integral(integrand, tol=tol)


def co_energy(model, i, theta_m=0.0, i_ref=None, tol=1e-10):
    """Co-energy difference W'(i) - W'(i_ref) at fixed rotor angle, via the
    line integral of the flux-linkage map."""
    if not model.is_flux_map:
        raise VariantError(f"variant {model.variant!r} is not a flux map")
    i = np.asarray(i, dtype=float)
    ref = np.zeros(2) if i_ref is None else np.asarray(i_ref, dtype=float)
    delta = i - ref

    def integrand(t):
        pts = ref + np.outer(t, delta)
        psi, _ = flux_map_batch(model, pts, float(theta_m))
        return psi @ delta

    return _adaptive_segment_integral(integrand, tol=tol)


def energy_change(model, psi0, theta0, psi1, theta1, tol=1e-10):
    """W(psi1, theta1) - W(psi0, theta0) for a current-map model.

    Integrates first along rotor angle at fixed psi0 (using the angle
    derivative of the energy, reduced modulo the electrical period), then
    along flux linkage at fixed theta1.
    """
    if not model.is_current_map:
        raise VariantError(f"variant {model.variant!r} is not a current map")
    psi0 = np.asarray(psi0, dtype=float)
    angle_part = 0.0
    if model.is_harmonic:
        period = 2.0 * np.pi / model.k
        dtheta = theta1 - theta0
        dtheta -= np.round(dtheta / period) * period

        def integrand(t):
            thetas = theta0 + t * dtheta
            pts = np.broadcast_to(psi0, (len(t), 2))
            i, tau = current_map_batch(model, pts, thetas)
            # dW/dtheta = i^T J psi - tau
            return (cross_torque_batch(i, pts) - tau) * dtheta

        angle_part = _adaptive_segment_integral(integrand, tol=tol)
    return angle_part + field_energy(model, psi1, theta1, psi_ref=psi0, tol=tol)


# -- training hook ------------------------------------------------------------


def parameter_gradient_batch(model, X, theta, U_primal, U_tau=None):
    """Accumulated flat-parameter gradient of
    sum_l [ <U_primal_l, primal_l> + U_tau_l * tau_l ].

    This is the reverse-mode chain from model outputs through input/output
    normalization, symmetrization, and the torque expression down to the
    underlying network parameters.
    """
    if model.net is None:
        raise VariantError("linear baseline has no learnable parameters")
    X = np.asarray(X, dtype=float)
    U = np.asarray(U_primal, dtype=float)
    L = X.shape[0]
    theta = np.zeros(L) if theta is None else np.broadcast_to(
        np.asarray(theta, dtype=float), (L,))
    u_tau = np.zeros(L) if U_tau is None else np.asarray(U_tau, dtype=float)

    Jx = _rot90_rows(X)
    if model.is_current_map:
        # tau = <primal, J x> for current maps (x = psi)
        u_eff = U + u_tau[:, None] * Jx
        sign = +1.0
    else:
        # tau = <x, J primal> = -<primal, J x> for flux maps (x = i)
        u_eff = U - u_tau[:, None] * Jx
        sign = -1.0

    s = model.in_scale
    Xs = (X - model.in_center) / s
    U_net2 = u_eff / s

    if model.is_harmonic:
        feats = fourier_features(theta, model.k)
        # d tau / d tau_vec = sign * k * J^T theta_feat = -sign * k * J theta_feat
        U_tvec = -sign * model.k * u_tau[:, None] * _rot90_rows(feats)
        X4 = np.hstack([Xs, feats])
        return model.net.param_grad_batch(X4, np.hstack([U_net2, U_tvec]))
    if model.variant in SYMMETRIC_VARIANTS:
        refl = np.array([1.0, -1.0])
        g1 = model.net.param_grad_batch(Xs, 0.5 * U_net2)
        g2 = model.net.param_grad_batch(Xs * refl, 0.5 * U_net2 * refl)
        return g1 + g2
    return model.net.param_grad_batch(Xs, U_net2)


# -- construction and persistence ---------------------------------------------


def normalization_from_inputs(X):
    """Per-axis affine normalization from dataset extrema.

    d-axis: centered at the midrange, scaled by the half-range. q-axis:
    centered at zero (so symmetrization stays exact), scaled by the
    largest magnitude. Scales are floored at 0.1 to survive degenerate
    grids.
    """
    X = np.asarray(X, dtype=float)
    lo, hi = X[:, 0].min(), X[:, 0].max()
    c_d = 0.5 * (lo + hi)
    s_d = max(0.5 * (hi - lo), 0.1)
    s_q = max(np.max(np.abs(X[:, 1])), 0.1)
    return np.array([c_d, 0.0]), np.array([s_d, s_q])


def build_model(variant, activation_kind, n_hidden, p=8, k=6, grid=None, seed=0,
                beta0=1.0, mu0=0.1, mu_floor=1e-3, weight_scale=None):
    """Construct an untrained model of the given variant.

    If a SampleGrid is supplied, input normalization is taken from its
    flux (current-map variants) or current (flux-map variants) extrema.
    """
    if variant == "linear":
        raise VariantError("use MagneticModel('linear', L_d=..., L_q=..., psi_f=...)")
    if variant not in VARIANTS:
        raise VariantError(f"unknown model variant {variant!r}")
    harmonic = variant in HARMONIC_VARIANTS
    net = GradientNetwork.initialized(
        activation_kind, n_hidden, input_dim=4 if harmonic else 2, p=p,
        beta0=beta0, mu0=mu0, mu_floor=mu_floor, weight_scale=weight_scale,
        rng=np.random.default_rng(seed))
    center, scale = None, None
    if grid is not None:
        X = grid.psi if variant in CURRENT_MAP_VARIANTS else grid.i
        center, scale = normalization_from_inputs(X)
    return MagneticModel(variant, net=net, k=k if harmonic else None,
                         in_center=center, in_scale=scale)


def model_to_dict(model):
    doc = {
        "format_version": FORMAT_VERSION,
        "variant": model.variant,
        "in_center": model.in_center.tolist(),
        "in_scale": model.in_scale.tolist(),
    }
    if model.variant == "linear":
        doc["linear"] = {"L_d": model.L_d, "L_q": model.L_q, "psi_f": model.psi_f}
    else:
        doc["net"] = model.net.to_dict()
        if model.is_harmonic:
            doc["k"] = model.k
    return doc


def model_from_dict(doc):
    for field in ("format_version", "variant", "in_center", "in_scale"):
        if field not in doc:
            raise ModelFormatError(f"model document missing field {field!r}")
    if doc["format_version"] != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {doc['format_version']!r}")
    variant = doc["variant"]
    if variant not in VARIANTS:
        raise ModelFormatError(f"unknown model variant {variant!r}")
    if variant == "linear":
        if "linear" not in doc:
            raise ModelFormatError("linear model document missing field 'linear'")
        lin = doc["linear"]
        return MagneticModel("linear", L_d=lin["L_d"], L_q=lin["L_q"], psi_f=lin["psi_f"])
    if "net" not in doc:
        raise ModelFormatError("model document missing field 'net'")
    k = None
    if variant in HARMONIC_VARIANTS:
        if "k" not in doc:
            raise ModelFormatError("harmonic model document missing field 'k'")
        k = doc["k"]
    net = GradientNetwork.from_dict(doc["net"])
    return MagneticModel(variant, net=net, k=k,
                         in_center=doc["in_center"], in_scale=doc["in_scale"])


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"not a valid model document: {exc}") from exc
    return model_from_dict(doc)
