"""Optimal control loci from trained non-harmonic magnetic models.

MTPA: at each torque level, the operating point minimizing current
magnitude. Found by golden-section maximization of torque over the
current angle at fixed magnitude, then bisection on the magnitude to hit
the torque level. MTPV: at each flux magnitude, the flux angle maximizing
torque. Angles are measured from the positive d-axis and scanned over
[90, 180] degrees, the motoring quadrant of machines with L_d < L_q.

Angle-dependent (harmonic) variants are rejected: compute loci from the
matching non-harmonic dual instead.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np

from . import inversion, magnetics
from .magnetics import VariantError

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


class LocusPoint(NamedTuple):
    i: np.ndarray
    psi: np.ndarray
    tau: float


def _golden_max(f, lo, hi, xtol=1e-10):
    """Golden-section maximization of a unimodal scalar function."""
    a, b = float(lo), float(hi)
    c, d = b - _INVPHI * (b - a), a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _check_plain(model):
    if model.is_harmonic:
        raise VariantError("loci are defined for angle-independent models only")


def _point_from_current(model, i_vec):
    """(i, psi, tau) for a current vector, from either map direction."""
    if model.is_flux_map:
        psi, tau = magnetics.flux_map_batch(model, i_vec[None, :])
        return LocusPoint(i_vec, psi[0], float(tau[0]))
    psi = inversion.invert_current_map(model, i_vec, tol=1e-12)
    out = magnetics.current_map(model, psi)
    return LocusPoint(i_vec, psi, out.torque)


def _tau_of_current_angle(model, i_mag, gamma):
    i_vec = i_mag * np.array([np.cos(gamma), np.sin(gamma)])
    return _point_from_current(model, i_vec).tau


def angle_derivative(tau_of_angle, angle, h=1e-5):
    """Central-difference torque-angle derivative used for certificates."""
    return (tau_of_angle(angle + h) - tau_of_angle(angle - h)) / (2.0 * h)


def mtpa_point(model, i_mag, angle_tol=1e-10):
    """Maximum-torque point at fixed current magnitude."""
    _check_plain(model)
    if i_mag == 0.0:
        return _point_from_current(model, np.zeros(2))
    gamma, _ = _golden_max(lambda g: _tau_of_current_angle(model, i_mag, g),
                           0.5 * np.pi, np.pi, xtol=angle_tol)
    return _point_from_current(model, i_mag * np.array([np.cos(gamma), np.sin(gamma)]))


def mtpa_locus(model, torque_levels, tol=1e-8, i_max=3.0):
    """MTPA points for the given torque levels (non-negative, per-unit).

    Raises ValueError when a level exceeds the maximum torque reachable
    within the i_max current bound.
    """
    _check_plain(model)
    cap = mtpa_point(model, i_max).tau
    points = []
    for level in torque_levels:
        if level < 0:
            raise ValueError("torque levels must be >= 0; mirror across the "
                             "d-axis for negative torque")
        if level > cap + 1e-12:
            raise ValueError(f"torque level {level} unreachable within "
                             f"|i| <= {i_max} (max {cap:.4f})")
        lo, hi = 0.0, i_max
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            if mtpa_point(model, mid).tau < level:
                lo = mid
            else:
                hi = mid
        points.append(mtpa_point(model, 0.5 * (lo + hi)))
    return points


def _tau_of_flux_angle(model, psi_mag, delta):
    psi = psi_mag * np.array([np.cos(delta), np.sin(delta)])
    if model.is_current_map:
        return magnetics.current_map(model, psi).torque
    i = inversion.invert_flux_map(model, psi, tol=1e-12)
    _, tau = magnetics.flux_map_batch(model, i[None, :])
    return float(tau[0])


def mtpv_locus(model, flux_levels, tol=1e-8):
    """Maximum-torque points at fixed flux-linkage magnitudes."""
    _check_plain(model)
    points = []
    for level in flux_levels:
        _warn_outside_validity(model, level)
        delta, _ = _golden_max(lambda d: _tau_of_flux_angle(model, level, d),
                               0.5 * np.pi, np.pi, xtol=1e-10)
        psi = level * np.array([np.cos(delta), np.sin(delta)])
        if model.is_current_map:
            out = magnetics.current_map(model, psi)
            points.append(LocusPoint(out.primal, psi, out.torque))
        else:
            i = inversion.invert_flux_map(model, psi, tol=1e-12)
            _, tau = magnetics.flux_map_batch(model, i[None, :])
            points.append(LocusPoint(i, psi, float(tau[0])))
    return points


def _warn_outside_validity(model, psi_mag):
    if model.variant == "linear":
        return
    if model.is_current_map:
        reach = np.abs(model.in_center) + 1.5 * model.in_scale
        if psi_mag > float(np.max(reach)):
            warnings.warn(f"flux level {psi_mag} is outside the model's "
                          "normalized input range; extrapolating", stacklevel=2)


def current_limit_curve(model, i_max, n_points=181):
    """Image of the circle |i| = i_max under the flux map, with torque.

    Returns (i, psi, tau) arrays; the curve is closed (first point equals
    the last).
    """
    if not model.is_flux_map:
        raise VariantError(f"variant {model.variant!r} is not a flux map")
    _check_plain(model)
    phi = np.linspace(0.0, 2.0 * np.pi, n_points)
    i = i_max * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    i[-1] = i[0]
    psi, tau = magnetics.flux_map_batch(model, i)
    return i, psi, tau
