"""Fixed-dimension vector helpers, coordinate transforms, and per-unit bases.

All machine quantities live in the rotor (dq) reference frame as length-2
vectors [d, q] in per-unit. Physical units appear only at dataset
boundaries through :class:`PerUnitBase`.

Everything here is pure and safe to call from any thread.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Rotation by +90 degrees: maps [d, q] to [-q, d]. Squares to -I.
ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])

# Reflection that negates the q component. Squares to I.
Q_REFLECT = np.array([[1.0, 0.0], [0.0, -1.0]])


def vec2(d, q):
    """Build a [d, q] vector as a float array."""
    return np.array([d, q], dtype=float)


def rotation(theta):
    """Rotation matrix by angle theta (closed form, no series)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotate_to_rotor(x_stator, theta_m):
    """Transform a stator-frame vector into the rotor frame (rotate by -theta_m)."""
    c, s = np.cos(theta_m), np.sin(theta_m)
    x = np.asarray(x_stator, dtype=float)
    return np.array([c * x[0] + s * x[1], -s * x[0] + c * x[1]])


def rotate_to_stator(x_rotor, theta_m):
    """Inverse of :func:`rotate_to_rotor` (rotate by +theta_m)."""
    c, s = np.cos(theta_m), np.sin(theta_m)
    x = np.asarray(x_rotor, dtype=float)
    return np.array([c * x[0] - s * x[1], s * x[0] + c * x[1]])


def cross_torque(i, psi):
    """Planar cross product i x psi = i_q*psi_d - i_d*psi_q.

    This is the torque produced by a current vector acting on a flux-linkage
    vector when no angle-dependent energy term is present.
    """
    return i[1] * psi[0] - i[0] * psi[1]


def cross_torque_batch(i, psi):
    """Rowwise :func:`cross_torque` for (L, 2) arrays."""
    return i[:, 1] * psi[:, 0] - i[:, 0] * psi[:, 1]


@dataclass(frozen=True)
class PerUnitBase:
    """Base quantities used to normalize a dataset to per-unit.

    voltage_base: peak line-to-neutral voltage in volts.
    current_base: peak current in amperes.
    frequency_base: electrical frequency in hertz.
    """

    voltage_base: float
    current_base: float
    frequency_base: float

    def __post_init__(self):
        for name in ("voltage_base", "current_base", "frequency_base"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be strictly positive, got {v!r}")

    @property
    def flux_base(self):
        """Flux-linkage base in volt-seconds: V_base / omega_base."""
        return self.voltage_base / (2.0 * np.pi * self.frequency_base)
