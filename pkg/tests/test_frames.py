import numpy as np
import pytest

from gradmag.frames import (PerUnitBase, Q_REFLECT, ROT90, cross_torque,
                            rotate_to_rotor, rotate_to_stator, rotation, vec2)


def test_rotor_identity_at_zero_angle():
    assert np.allclose(rotate_to_rotor(vec2(1, 0), 0.0), [1, 0], atol=0)


def test_rotor_quarter_turn():
    # e^{-(pi/2) ROT90} maps [a, b] -> [b, -a]
    a, b = 0.3, -1.7
    out = rotate_to_rotor(vec2(a, b), np.pi / 2)
    assert np.allclose(out, [b, -a], atol=1e-15)


def test_stator_identity_and_quarter_turn():
    assert np.allclose(rotate_to_stator(vec2(1, 0), 0.0), [1, 0], atol=0)
    assert np.allclose(rotate_to_stator(vec2(0, 1), np.pi / 2), [-1, 0], atol=1e-15)


def test_round_trip_and_norm_preservation():
    rng = np.random.default_rng(10)
    for _ in range(1000):
        x = rng.normal(size=2)
        th = rng.uniform(-20, 20)
        back = rotate_to_stator(rotate_to_rotor(x, th), th)
        assert np.max(np.abs(back - x)) <= 1e-14
        assert abs(np.linalg.norm(rotate_to_rotor(x, th)) - np.linalg.norm(x)) <= 1e-14


def test_rotation_matrix_structure():
    assert np.array_equal(ROT90 @ ROT90, -np.eye(2))
    assert np.array_equal(Q_REFLECT @ Q_REFLECT, np.eye(2))
    th = 0.7
    assert np.allclose(rotation(th) @ rotation(-th), np.eye(2), atol=1e-16)


def test_cross_torque_units():
    assert cross_torque(vec2(0, 1), vec2(1, 0)) == 1.0
    assert cross_torque(vec2(1, 0), vec2(0, 1)) == -1.0
    psi = vec2(0.4, -0.9)
    assert cross_torque(2.5 * psi, psi) == 0.0


def test_cross_torque_antisymmetry_exact():
    rng = np.random.default_rng(11)
    for _ in range(100):
        a, b = rng.normal(size=2), rng.normal(size=2)
        assert cross_torque(a, b) == -cross_torque(b, a)


def test_per_unit_base_validation():
    base = PerUnitBase(375.6, 12.45, 60.0)
    assert base.flux_base == pytest.approx(375.6 / (2 * np.pi * 60.0))
    with pytest.raises(ValueError):
        PerUnitBase(-1.0, 12.45, 60.0)
    with pytest.raises(ValueError):
        PerUnitBase(375.6, 12.45, 0.0)
