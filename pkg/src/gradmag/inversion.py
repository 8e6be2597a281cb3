"""Inversion of trained magnetic maps by damped Newton iteration.

Strong monotonicity (the mu floor on the linear output term) makes every
map globally invertible with a positive-definite Jacobian, so Newton with
residual-decreasing step halving converges from any starting point.
"""

from __future__ import annotations

import numpy as np

from . import magnetics
from .magnetics import VariantError


class InversionError(RuntimeError):
    """Newton iteration failed to reach the requested tolerance."""


def _damped_newton(value_fn, jac_fn, target, x0, tol, max_iter):
    x = np.asarray(x0, dtype=float).copy()
    r = value_fn(x) - target
    rn = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if rn <= tol:
            return x
        J = jac_fn(x) + 1e-12 * np.eye(2)
        step = np.linalg.solve(J, -r)
        lam = 1.0
        while True:
            trial = x + lam * step
            r_trial = value_fn(trial) - target
            rn_trial = float(np.linalg.norm(r_trial))
            if np.isfinite(rn_trial) and rn_trial < rn:
                x, r, rn = trial, r_trial, rn_trial
                break
            lam *= 0.5
            if lam < 1e-14:
                raise InversionError(
                    f"step halving stalled at residual {rn:.3e}")
        if not np.all(np.isfinite(x)):
            raise InversionError("iterate became non-finite")
    if rn <= tol:
        return x
    raise InversionError(f"no convergence in {max_iter} iterations "
                         f"(final residual {rn:.3e})")


def invert_current_map(model, i_target, theta_m=0.0, psi_init=None,
                       tol=1e-9, max_iter=100):
    """Solve i(psi, theta_m) = i_target for psi."""
    if not model.is_current_map:
        raise VariantError(f"variant {model.variant!r} is not a current map")
    i_target = np.asarray(i_target, dtype=float)
    if psi_init is None:
        psi_init = np.array([model.psi_f, 0.0]) if model.variant == "linear" \
            else np.zeros(2)
    return _damped_newton(
        lambda psi: magnetics.current_map(model, psi, theta_m).primal,
        lambda psi: magnetics.incremental_inverse_inductance(model, psi, theta_m),
        i_target, psi_init, tol, max_iter)


def invert_flux_map(model, psi_target, theta_m=0.0, i_init=None,
                    tol=1e-9, max_iter=100):
    """Solve psi(i, theta_m) = psi_target for i."""
    if not model.is_flux_map:
        raise VariantError(f"variant {model.variant!r} is not a flux map")
    psi_target = np.asarray(psi_target, dtype=float)
    if i_init is None:
        i_init = np.zeros(2)
    return _damped_newton(
        lambda i: magnetics.flux_map(model, i, theta_m).primal,
        lambda i: magnetics.incremental_inductance(model, i, theta_m),
        psi_target, i_init, tol, max_iter)
