"""Dataset-driven fitting of magnetic models.

Losses are plain mean-squared error on the map output for non-harmonic
variants, and a normalized sum of map error and torque error for
angle-dependent variants. Optimization is Adam with decoupled weight decay
(applied to the hidden weight matrix only) and an optional cosine
learning-rate schedule; everything is full-batch by default, deterministic
given the seed, and accumulated in a fixed order so repeated runs are
bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import magnetics
from .magnetics import MagneticModel, VariantError


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during fitting."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    weight_decay: float = 1e-4
    epochs: int = 5000
    batch_size: int = 0  # 0 = full batch
    seed: int = 0
    subsample_stride: int = 1
    lr_decay: str = "cosine"  # "cosine" anneals to learning_rate/1000, or "constant"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.subsample_stride < 1:
            raise ValueError("subsample_stride must be >= 1")
        if self.lr_decay not in ("cosine", "constant"):
            raise ValueError("lr_decay must be 'cosine' or 'constant'")


@dataclass
class ErrorReport:
    """Per-quantity error statistics over a dataset (per-unit)."""

    e_rms: float
    e_max: float
    e_std: float


@dataclass
class TrainingTrace:
    epoch: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    loss: np.ndarray = field(default_factory=lambda: np.zeros(0))
    e_rms_holdout: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.epoch)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("epoch,loss,e_rms_holdout\n")
            for e, lo, h in zip(self.epoch, self.loss, self.e_rms_holdout):
                fh.write(f"{int(e)},{float(lo)!r},{float(h)!r}\n")


# -- dataset views -------------------------------------------------------------


def _xy(model, grid):
    """(inputs, theta, primal targets) for the model's map direction."""
    if model.is_current_map and not model.is_flux_map:
        return grid.psi, grid.theta_m, grid.i
    if model.is_flux_map and not model.is_current_map:
        return grid.i, grid.theta_m, grid.psi
    # linear baseline: treat as a current map by convention
    return grid.psi, grid.theta_m, grid.i


def _predict(model, X, theta):
    if model.is_flux_map and not model.is_current_map:
        return magnetics.flux_map_batch(model, X, theta)
    return magnetics.current_map_batch(model, X, theta)


def subsample(grid, stride):
    """Deterministic every-stride-th split in flattened grid order.

    Returns (train, holdout); their union is the input grid and they are
    disjoint. stride=1 keeps everything for training.
    """
    if stride < 1 or int(stride) != stride:
        raise ValueError("stride must be an integer >= 1")
    n = len(grid)
    train_idx = np.arange(0, n, stride)
    if len(train_idx) == 0:
        raise ValueError("subsampling produced an empty training set")
    mask = np.ones(n, dtype=bool)
    mask[train_idx] = False
    return grid.take(train_idx), grid.take(np.flatnonzero(mask))


# -- losses --------------------------------------------------------------------


def _primal_mse(model, grid):
    X, theta, Y = _xy(model, grid)
    if len(grid) == 0:
        raise ValueError("empty batch")
    pred, _ = _predict(model, X, theta)
    return float(np.sum((pred - Y) ** 2) / len(grid))


def loss_current(model, grid):
    """Mean squared current error (1/L) sum ||i - i_hat||^2."""
    if not model.is_current_map:
        raise VariantError(f"variant {model.variant!r} is not a current map")
    return _primal_mse(model, grid)


def loss_flux(model, grid):
    """Mean squared flux-linkage error, the dual of :func:`loss_current`."""
    if not model.is_flux_map:
        raise VariantError(f"variant {model.variant!r} is not a flux map")
    return _primal_mse(model, grid)


def loss_combined(model, grid, primal_norm=None, tau_norm=None):
    """Normalized map error plus torque error.

    (1/L) sum [ ||y - y_hat||^2 / y_max^2 + (tau - tau_hat)^2 / tau_max^2 ]
    with y the flux linkage for flux maps and the current for energy-based
    (current) maps. Normalizers default to the dataset maxima.
    """
    if not (model.is_flux_map or model.is_harmonic):
        raise VariantError(f"variant {model.variant!r} has no combined loss")
    if grid.tau is None:
        raise ValueError("combined loss requires torque labels")
    if len(grid) == 0:
        raise ValueError("empty batch")
    X, theta, Y = _xy(model, grid)
    if primal_norm is None:
        primal_norm = grid.psi_max if model.is_flux_map else grid.i_max
    if tau_norm is None:
        tau_norm = grid.tau_max
    pred, tau_hat = _predict(model, X, theta)
    per = (np.sum((pred - Y) ** 2, axis=1) / primal_norm**2
           + (tau_hat - grid.tau) ** 2 / tau_norm**2)
    return float(np.sum(per) / len(grid))


def _loss_mode(model, grid):
    """Pick the loss for fit(): combined for harmonic variants, plain MSE
    otherwise. Returns (mode, primal_norm, tau_norm)."""
    if model.is_harmonic:
        if grid.tau is None:
            raise ValueError("harmonic training requires torque labels")
        primal_norm = grid.psi_max if model.is_flux_map else grid.i_max
        return "combined", primal_norm, grid.tau_max
    return "primal", 1.0, 1.0


def _loss_and_grad(model, X, theta, Y, tau, mode, primal_norm, tau_norm):
    n = len(X)
    pred, tau_hat = _predict(model, X, theta)
    if mode == "primal":
        resid = pred - Y
        loss = float(np.sum(resid**2) / n)
        grad = magnetics.parameter_gradient_batch(model, X, theta, 2.0 * resid / n)
        return loss, grad
    resid = (pred - Y) / primal_norm**2
    tau_resid = (tau_hat - tau) / tau_norm**2
    loss = float((np.sum(resid * (pred - Y)) + np.sum(tau_resid * (tau_hat - tau))) / n)
    grad = magnetics.parameter_gradient_batch(
        model, X, theta, 2.0 * resid / n, 2.0 * tau_resid / n)
    return loss, grad


# -- optimizer ------------------------------------------------------------------


class AdamW:
    """Adam with decoupled weight decay on a flat parameter vector.

    The decay mask restricts decay to the hidden weights; biases, the
    output-diagonal raws, and the activation shape parameter are never
    decayed.
    """

    def __init__(self, n_params, decay_mask, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0
        self.decay_mask = decay_mask
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, params, grad, lr, weight_decay):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - lr * (m_hat / (np.sqrt(v_hat) + self.eps)
                              + weight_decay * self.decay_mask * params)


def _lr_at(config, epoch):
    if config.lr_decay == "constant" or config.epochs <= 1:
        return config.learning_rate
    lo = config.learning_rate / 1000.0
    frac = epoch / (config.epochs - 1)
    return lo + 0.5 * (config.learning_rate - lo) * (1.0 + np.cos(np.pi * frac))


def fit(model, grid, config, holdout=None):
    """Train a network-backed model on a grid; returns (model, trace).

    The input model is left untouched; a copy with updated parameters is
    returned. The trace records, per epoch, the training loss at the
    parameters entering the epoch and the holdout primal rms error after
    the epoch (NaN without a holdout set).
    """
    if model.net is None:
        raise VariantError("the linear baseline has no trainable parameters")
    if len(grid) == 0:
        raise ValueError("cannot fit on an empty grid")
    mode, primal_norm, tau_norm = _loss_mode(model, grid)
    net = model.net.copy()
    work = MagneticModel(model.variant, net=net, k=model.k,
                         in_center=model.in_center, in_scale=model.in_scale)
    X, theta, Y = _xy(work, grid)
    tau = grid.tau
    quantity = "flux" if (work.is_flux_map and not work.is_current_map) else "current"

    params = net.params_flat()
    opt = AdamW(len(params), net.weight_decay_mask())
    rng = np.random.default_rng(config.seed)
    n = len(grid)
    batch = n if config.batch_size in (0, None) else min(config.batch_size, n)

    epochs_idx, losses, holdout_rms = [], [], []
    for epoch in range(config.epochs):
        lr = _lr_at(config, epoch)
        if batch >= n:
            order = [np.arange(n)]
        else:
            perm = rng.permutation(n)
            order = [perm[j:j + batch] for j in range(0, n, batch)]
        epoch_loss = 0.0
        for idx in order:
            loss, grad = _loss_and_grad(
                work, X[idx], None if theta is None else theta[idx],
                Y[idx], None if tau is None else tau[idx],
                mode, primal_norm, tau_norm)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            epoch_loss += loss * len(idx)
            params = opt.step(params, grad, lr, config.weight_decay)
            net.set_params_flat(params)
        # reparameterization keeps the structural constraints; cheap sanity net
        assert net.beta > 0.0 and np.all(net.a0_diag >= 0.0)
        epochs_idx.append(epoch)
        losses.append(epoch_loss / n)
        if holdout is not None and len(holdout):
            holdout_rms.append(evaluate(work, holdout)[quantity].e_rms)
        else:
            holdout_rms.append(np.nan)

    trace = TrainingTrace(np.array(epochs_idx, dtype=int), np.array(losses),
                          np.array(holdout_rms))
    return work, trace


# -- metrics --------------------------------------------------------------------


def _report(err):
    e_rms = float(np.sqrt(np.mean(err**2)))
    e_std = float(np.sqrt(np.mean((err - np.mean(err)) ** 2)))
    return ErrorReport(e_rms=e_rms, e_max=float(np.max(err)), e_std=e_std)


def evaluate(model, grid):
    """Error statistics over a dataset.

    Returns a dict keyed by quantity: "current" or "flux" for the map
    output (error magnitude ||y - y_hat|| per sample), plus "torque" when
    the dataset carries torque labels.
    """
    if len(grid) == 0:
        raise ValueError("cannot evaluate on an empty grid")
    X, theta, Y = _xy(model, grid)
    pred, tau_hat = _predict(model, X, theta)
    primal_name = "flux" if (model.is_flux_map and not model.is_current_map) else "current"
    out = {primal_name: _report(np.linalg.norm(pred - Y, axis=1))}
    if grid.tau is not None:
        out["torque"] = _report(np.abs(tau_hat - grid.tau))
    return out
