import numpy as np
import pytest

from gradmag import dataio, magnetics, training
from gradmag.gradnet import GradientNetwork
from gradmag.training import TrainConfig

ALL_KINDS = ("squareplus", "sigmoid", "softmax", "pnorm")


def random_network(rng, kind, n_hidden=None, input_dim=2, spread=1.0):
    """Random but well-scaled network for property tests."""
    n = int(rng.integers(2, 10)) if n_hidden is None else n_hidden
    net = GradientNetwork.initialized(kind, n, input_dim, rng=rng)
    net.b = rng.normal(0.0, 0.5 * spread, n)
    net.b0 = rng.normal(0.0, 0.5 * spread, input_dim)
    net.rho = float(rng.normal(0.0, 0.4))
    net.a0_raw = rng.normal(0.0, 1.0, 2)
    return net


def random_model(rng, variant, kind, n_hidden=6):
    harmonic = variant.startswith("harmonic")
    net = random_network(rng, kind, n_hidden, 4 if harmonic else 2)
    return magnetics.MagneticModel(
        variant, net=net, k=6 if harmonic else None,
        in_center=[float(rng.normal(0, 0.3)), 0.0],
        in_scale=[float(rng.uniform(0.5, 1.5)), float(rng.uniform(0.5, 1.5))])


@pytest.fixture(scope="session")
def saturable_grid():
    return dataio.synth_saturable((21, 13))


@pytest.fixture(scope="session")
def trained_sym_current(saturable_grid):
    """Symmetric current map fitted to the synthetic saturable grid."""
    train, hold = training.subsample(saturable_grid, 10)
    model = magnetics.build_model("current-sym", "pnorm", 12, p=8,
                                  grid=train, seed=1)
    fitted, trace = training.fit(model, train, TrainConfig(epochs=5000, seed=1),
                                 holdout=hold)
    return fitted, trace, train, hold


@pytest.fixture(scope="session")
def trained_sym_flux(saturable_grid):
    """Symmetric flux map fitted to the same synthetic machine."""
    train, hold = training.subsample(saturable_grid, 10)
    model = magnetics.build_model("flux-sym", "pnorm", 12, p=8,
                                  grid=train, seed=2)
    fitted, _ = training.fit(model, train, TrainConfig(epochs=5000, seed=2),
                             holdout=hold)
    return fitted


@pytest.fixture(scope="session")
def harmonic_plant():
    return dataio.reference_harmonic_current_model()
