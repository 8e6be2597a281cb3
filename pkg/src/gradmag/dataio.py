"""Dataset container, CSV grid persistence, and synthetic ground-truth data.

Grid CSV format (UTF-8, LF, per-unit values, full-precision decimals):

    # gradmag-grid v1 kind=current-grid dims=21x13 [ubase=.. ibase=.. fbase=..]
    psi_d,psi_q,i_d,i_q[,theta_m][,tau]
    <one sample per row>

Rows are kept in canonical order: d coordinate slowest, q coordinate next,
rotor angle fastest. The loader accepts any row order and re-sorts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import magnetics
from .frames import PerUnitBase, cross_torque_batch

GRID_KINDS = ("flux-grid", "current-grid", "harmonic-grid")
_MAGIC = "# gradmag-grid v1"


class GridFormatError(ValueError):
    """Malformed dataset file or structurally invalid grid."""


@dataclass
class SampleGrid:
    """Operating-point dataset: flux-linkage and current pairs in per-unit,
    with optional rotor angle and torque labels."""

    psi: np.ndarray
    i: np.ndarray
    theta_m: np.ndarray | None = None
    tau: np.ndarray | None = None
    grid_shape: tuple = ()
    kind: str = "current-grid"
    base: PerUnitBase | None = None

    def __post_init__(self):
        self.psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        self.i = np.atleast_2d(np.asarray(self.i, dtype=float))
        n = self.psi.shape[0]
        if self.psi.shape != (n, 2) or self.i.shape != (n, 2):
            raise GridFormatError("psi and i must both have shape (L, 2)")
        for name in ("theta_m", "tau"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float).reshape(-1)
                if v.shape != (n,):
                    raise GridFormatError(f"{name} must have shape (L,)")
                setattr(self, name, v)
        if self.kind not in GRID_KINDS:
            raise GridFormatError(f"unknown grid kind {self.kind!r}")
        if (self.kind == "harmonic-grid") != (self.theta_m is not None):
            raise GridFormatError("theta_m must be present exactly for harmonic grids")
        for name in ("psi", "i", "theta_m", "tau"):
            v = getattr(self, name)
            if v is not None and not np.all(np.isfinite(v)):
                raise GridFormatError(f"{name} contains non-finite values")
        if not self.grid_shape:
            self.grid_shape = (n,)
        self.grid_shape = tuple(int(d) for d in self.grid_shape)
        if int(np.prod(self.grid_shape)) != n:
            raise GridFormatError(
                f"grid dims {self.grid_shape} describe {int(np.prod(self.grid_shape))} "
                f"samples but {n} rows are present")

    def __len__(self):
        return self.psi.shape[0]

    @property
    def psi_max(self):
        """Largest flux-linkage magnitude in the dataset (loss normalizer)."""
        return float(np.max(np.linalg.norm(self.psi, axis=1)))

    @property
    def i_max(self):
        return float(np.max(np.linalg.norm(self.i, axis=1)))

    @property
    def tau_max(self):
        return None if self.tau is None else float(np.max(np.abs(self.tau)))

    def take(self, indices):
        """Subset by row indices; the result is an unstructured (flat) grid."""
        idx = np.asarray(indices, dtype=int)
        return SampleGrid(
            psi=self.psi[idx], i=self.i[idx],
            theta_m=None if self.theta_m is None else self.theta_m[idx],
            tau=None if self.tau is None else self.tau[idx],
            grid_shape=(len(idx),), kind=self.kind, base=self.base)


def _grid_columns(grid):
    cols = [("psi_d", grid.psi[:, 0]), ("psi_q", grid.psi[:, 1]),
            ("i_d", grid.i[:, 0]), ("i_q", grid.i[:, 1])]
    if grid.theta_m is not None:
        cols.append(("theta_m", grid.theta_m))
    if grid.tau is not None:
        cols.append(("tau", grid.tau))
    return cols


def _sort_keys(grid):
    """Canonical ordering keys: d slowest, q next, angle fastest."""
    if grid.kind == "flux-grid":
        keys = [grid.psi[:, 1], grid.psi[:, 0]]
    else:
        keys = [grid.i[:, 1], grid.i[:, 0]]
    if grid.theta_m is not None:
        keys.insert(0, grid.theta_m)
    return np.lexsort(keys)


def canonical_order(grid):
    """Sort rows into canonical order, preserving the declared grid dims."""
    if not len(grid):
        return grid
    out = grid.take(_sort_keys(grid))
    out.grid_shape = grid.grid_shape
    return out


def save_grid(grid, path):
    cols = _grid_columns(grid)
    dims = "x".join(str(d) for d in grid.grid_shape)
    meta = f"{_MAGIC} kind={grid.kind} dims={dims}"
    if grid.base is not None:
        meta += (f" ubase={grid.base.voltage_base!r} ibase={grid.base.current_base!r}"
                 f" fbase={grid.base.frequency_base!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(meta + "\n")
        fh.write(",".join(name for name, _ in cols) + "\n")
        arrays = [c for _, c in cols]
        for row in zip(*arrays):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_grid(path):
    """Parse and validate a grid CSV; returns a canonically ordered SampleGrid."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(_MAGIC):
        raise GridFormatError(f"{path}: missing '{_MAGIC}' header line")
    meta = {}
    for token in lines[0][len(_MAGIC):].split():
        if "=" not in token:
            raise GridFormatError(f"{path}: bad metadata token {token!r}")
        key, value = token.split("=", 1)
        meta[key] = value
    if "kind" not in meta or "dims" not in meta:
        raise GridFormatError(f"{path}: metadata must declare kind= and dims=")
    kind = meta["kind"]
    if kind not in GRID_KINDS:
        raise GridFormatError(f"{path}: unknown grid kind {kind!r}")
    try:
        dims = tuple(int(d) for d in meta["dims"].split("x"))
    except ValueError as exc:
        raise GridFormatError(f"{path}: bad dims {meta['dims']!r}") from exc
    base = None
    if any(k in meta for k in ("ubase", "ibase", "fbase")):
        try:
            base = PerUnitBase(float(meta["ubase"]), float(meta["ibase"]),
                               float(meta["fbase"]))
        except (KeyError, ValueError) as exc:
            raise GridFormatError(f"{path}: incomplete or invalid per-unit base") from exc

    if len(lines) < 2:
        raise GridFormatError(f"{path}: missing column header line")
    names = [c.strip() for c in lines[1].split(",")]
    required = ["psi_d", "psi_q", "i_d", "i_q"]
    if names[:4] != required or not set(names[4:]) <= {"theta_m", "tau"}:
        raise GridFormatError(f"{path}: bad column header {lines[1]!r}")

    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(names):
            raise GridFormatError(f"{path}:{lineno}: expected {len(names)} fields, "
                                  f"got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise GridFormatError(f"{path}:{lineno}: non-numeric value") from exc

    expected = int(np.prod(dims))
    if len(rows) != expected:
        raise GridFormatError(f"{path}: dims {meta['dims']} require {expected} rows, "
                              f"found {len(rows)}")
    data = np.array(rows, dtype=float) if rows else np.zeros((0, len(names)))
    if data.size and not np.all(np.isfinite(data)):
        bad = np.argwhere(~np.isfinite(data))[0]
        raise GridFormatError(f"{path}:{int(bad[0]) + 3}: non-finite value")
    col = {name: data[:, j] for j, name in enumerate(names)}
    grid = SampleGrid(
        psi=np.stack([col["psi_d"], col["psi_q"]], axis=1),
        i=np.stack([col["i_d"], col["i_q"]], axis=1),
        theta_m=col.get("theta_m"), tau=col.get("tau"),
        grid_shape=dims, kind=kind, base=base)
    grid = canonical_order(grid)
    _monotonicity_spot_check(grid, path)
    return grid


def _monotonicity_spot_check(grid, path):
    """Warn (never fail) when secants along grid axes have the wrong sign;
    measured noise is tolerated, gross sign errors surface early."""
    if len(grid.grid_shape) < 2 or len(grid) == 0:
        return
    try:
        shape = grid.grid_shape
        psi = grid.psi.reshape(*shape, 2)
        cur = grid.i.reshape(*shape, 2)
    except ValueError:
        return
    bad = 0
    for axis in (0, 1):
        dpsi = np.diff(psi[..., axis], axis=axis)
        di = np.diff(cur[..., axis], axis=axis)
        bad += int(np.sum(dpsi * di < -1e-12))
    if bad:
        warnings.warn(f"{path}: {bad} grid secants violate monotonicity "
                      "(tolerated, data kept)", stacklevel=2)


# -- q-axis mirroring ----------------------------------------------------------


def _mirrored(grid):
    return replace(
        grid,
        psi=grid.psi * [1.0, -1.0],
        i=grid.i * [1.0, -1.0],
        tau=None if grid.tau is None else -grid.tau,
        grid_shape=(len(grid),))


def mirror_q_axis(grid):
    """Complete a q>=0 half-plane grid by reflecting across the d-axis.

    The mirrored samples get negated q components and torque. Rows on the
    axis (q exactly 0) are kept once. A grid that is already symmetric is
    returned unchanged; anything else is rejected.
    """
    if grid.kind == "harmonic-grid":
        raise GridFormatError("q-axis mirroring is undefined for angle-dependent grids")
    q = grid.i[:, 1] if grid.kind == "current-grid" else grid.psi[:, 1]
    if np.all(q >= 0.0):
        off_axis = grid.take(np.flatnonzero(q > 0.0))
        merged = canonical_order(_concat(grid, _mirrored(off_axis)))
        n_axis_vals = 1 if np.any(q == 0.0) else 0
        if len(grid.grid_shape) == 2:
            n_d, n_q = grid.grid_shape
            full_shape = (n_d, 2 * n_q - n_axis_vals)
            if int(np.prod(full_shape)) == len(merged):
                merged.grid_shape = full_shape
        return merged
    # Already two-sided: accept only if exactly symmetric.
    a = canonical_order(grid)
    b = canonical_order(_mirrored(grid))
    sym = np.allclose(a.psi, b.psi, atol=1e-12) and np.allclose(a.i, b.i, atol=1e-12)
    if sym and a.tau is not None:
        sym = np.allclose(a.tau, b.tau, atol=1e-12)
    if not sym:
        raise GridFormatError("grid is neither a q>=0 half-plane nor symmetric")
    return a


def _concat(g1, g2):
    def cat(a, b):
        if a is None and b is None:
            return None
        return np.concatenate([a, b])

    return SampleGrid(psi=cat(g1.psi, g2.psi), i=cat(g1.i, g2.i),
                      theta_m=cat(g1.theta_m, g2.theta_m), tau=cat(g1.tau, g2.tau),
                      grid_shape=(len(g1) + len(g2),), kind=g1.kind, base=g1.base)


# -- synthetic ground truth -----------------------------------------------------


@dataclass(frozen=True)
class SaturableParams:
    """Closed-form saturable machine family.

    The flux map is the exact gradient of the convex co-energy

        W'(i) = psi_f*i_d + F_d(i_d) + F_q(i_q) - (c_x/2)*B_d(i_d)*B_q(i_q)

    with F_a' = L_a*x*(1+(x/i_sat_a)^S)^(-1/S) (saturating axis inductance)
    and B(x, w) = x^2/(1+(x/w)^2) shaping the cross-saturation. Even S and
    even B keep the q-axis symmetry exact. The Jacobian is checked to be
    positive definite on every generated grid.
    """

    L_d: float = 0.36
    L_q: float = 0.84
    psi_f: float = 0.40
    i_sat_d: float = 1.6
    i_sat_q: float = 1.1
    sat_exp: int = 4
    c_x: float = 0.08
    w_d: float = 1.0
    w_q: float = 1.0

    def __post_init__(self):
        if self.L_d <= 0 or self.L_q <= 0:
            raise ValueError("inductances must be positive")
        if self.sat_exp < 2 or self.sat_exp % 2:
            raise ValueError("sat_exp must be an even integer >= 2")


def _axis_flux(x, L, a, S):
    u = (x / a) ** S
    return L * x * (1.0 + u) ** (-1.0 / S)


def _axis_flux_deriv(x, L, a, S):
    u = (x / a) ** S
    return L * (1.0 + u) ** (-(S + 1.0) / S)


def _bell(x, w):
    return x * x / (1.0 + (x / w) ** 2)


def _bell_d1(x, w):
    return 2.0 * x / (1.0 + (x / w) ** 2) ** 2


def _bell_d2(x, w):
    r2 = (x / w) ** 2
    return 2.0 * (1.0 - 3.0 * r2) / (1.0 + r2) ** 3


def saturable_flux(i, params):
    """psi(i) for the closed-form family; rowwise on (L, 2)."""
    i = np.asarray(i, dtype=float)
    id_, iq = i[..., 0], i[..., 1]
    p = params
    psi_d = (p.psi_f + _axis_flux(id_, p.L_d, p.i_sat_d, p.sat_exp)
             - 0.5 * p.c_x * _bell_d1(id_, p.w_d) * _bell(iq, p.w_q))
    psi_q = (_axis_flux(iq, p.L_q, p.i_sat_q, p.sat_exp)
             - 0.5 * p.c_x * _bell(id_, p.w_d) * _bell_d1(iq, p.w_q))
    return np.stack([psi_d, psi_q], axis=-1)


def saturable_jacobian(i, params):
    """d psi / d i, shape (L, 2, 2); symmetric by construction."""
    i = np.asarray(i, dtype=float)
    id_, iq = i[..., 0], i[..., 1]
    p = params
    dd = (_axis_flux_deriv(id_, p.L_d, p.i_sat_d, p.sat_exp)
          - 0.5 * p.c_x * _bell_d2(id_, p.w_d) * _bell(iq, p.w_q))
    qq = (_axis_flux_deriv(iq, p.L_q, p.i_sat_q, p.sat_exp)
          - 0.5 * p.c_x * _bell(id_, p.w_d) * _bell_d2(iq, p.w_q))
    dq = -0.5 * p.c_x * _bell_d1(id_, p.w_d) * _bell_d1(iq, p.w_q)
    J = np.empty(i.shape[:-1] + (2, 2))
    J[..., 0, 0], J[..., 1, 1] = dd, qq
    J[..., 0, 1] = J[..., 1, 0] = dq
    return J


def _check_positive_definite(i_pts, params):
    J = saturable_jacobian(i_pts, params)
    tr = J[..., 0, 0] + J[..., 1, 1]
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] ** 2
    eigmin = 0.5 * tr - np.sqrt(np.maximum(0.25 * tr**2 - det, 0.0))
    if np.min(eigmin) <= 0.0:
        raise ValueError("non-monotone saturable parameters: flux-map Jacobian "
                         f"loses positive definiteness (min eig {np.min(eigmin):.3e})")


def invert_saturable(psi_targets, params, tol=1e-13, max_iter=80):
    """Solve psi(i) = target for each row by damped Newton on the closed form."""
    targets = np.atleast_2d(np.asarray(psi_targets, dtype=float))
    i = (targets - [params.psi_f, 0.0]) / [params.L_d, params.L_q]
    for _ in range(max_iter):
        r = saturable_flux(i, params) - targets
        if np.max(np.abs(r)) <= tol:
            return i
        J = saturable_jacobian(i, params)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        step = np.stack([
            (J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / det,
            (J[:, 0, 0] * r[:, 1] - J[:, 1, 0] * r[:, 0]) / det], axis=1)
        rn = np.linalg.norm(r, axis=1)
        lam = np.ones((len(i), 1))
        for _ in range(40):
            trial = i - lam * step
            worse = np.linalg.norm(saturable_flux(trial, params) - targets,
                                   axis=1) > rn
            if not np.any(worse):
                break
            lam[worse] *= 0.5
        i = i - lam * step
    raise RuntimeError("saturable inversion did not converge")


def _axis_points(n, lo, hi):
    return np.linspace(lo, hi, n)


def synth_saturable(shape, params=None, d_range=(-1.5, 1.5), q_range=(0.0, 1.5),
                    coords="current"):
    """Exactly consistent (psi, i, tau) samples from the closed-form family.

    coords="current": equidistant current grid, flux from the closed form.
    coords="flux": equidistant flux-linkage grid, currents recovered by
    dense Newton on the closed form.
    """
    params = params or SaturableParams()
    n_d, n_q = shape
    g_d, g_q = np.meshgrid(_axis_points(n_d, *d_range), _axis_points(n_q, *q_range),
                           indexing="ij")
    pts = np.stack([g_d.ravel(), g_q.ravel()], axis=1)
    if coords == "current":
        i = pts
        _check_positive_definite(i, params)
        psi = saturable_flux(i, params)
        kind = "current-grid"
    elif coords == "flux":
        psi = pts
        i = invert_saturable(psi, params)
        _check_positive_definite(i, params)
        kind = "flux-grid"
    else:
        raise ValueError(f"coords must be 'current' or 'flux', got {coords!r}")
    tau = cross_torque_batch(i, psi)
    return canonical_order(SampleGrid(psi=psi, i=i, tau=tau,
                                      grid_shape=(n_d, n_q), kind=kind))


def grid_from_model(model, shape, d_range, q_range, n_theta=None, coords=None):
    """Evaluate a magnetic model on an equidistant grid to build a dataset.

    Flux-map models are sampled on a current grid, current-map models on a
    flux-linkage grid (override with coords). Harmonic models add n_theta
    equidistant rotor angles covering one electrical period [0, 2*pi/k).
    """
    if coords is None:
        coords = "current" if model.is_flux_map else "flux"
    n_d, n_q = shape
    axes = [_axis_points(n_d, *d_range), _axis_points(n_q, *q_range)]
    dims = (n_d, n_q)
    if model.is_harmonic:
        if not n_theta:
            raise ValueError("harmonic models need n_theta grid points")
        thetas = np.arange(n_theta) * (2.0 * np.pi / model.k) / n_theta
        g_d, g_q, g_t = np.meshgrid(*axes, thetas, indexing="ij")
        pts = np.stack([g_d.ravel(), g_q.ravel()], axis=1)
        theta = g_t.ravel()
        dims = (n_d, n_q, n_theta)
    else:
        g_d, g_q = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g_d.ravel(), g_q.ravel()], axis=1)
        theta = None

    if coords == "current":
        psi, tau = magnetics.flux_map_batch(model, pts, theta)
        i = pts
        kind = "harmonic-grid" if model.is_harmonic else "current-grid"
    else:
        i, tau = magnetics.current_map_batch(model, pts, theta)
        psi = pts
        kind = "harmonic-grid" if model.is_harmonic else "flux-grid"
    return canonical_order(SampleGrid(psi=psi, i=i, theta_m=theta, tau=tau,
                                      grid_shape=dims, kind=kind))


def reference_harmonic_flux_model(seed=2024, n_hidden=24, k=6):
    """Frozen network-backed harmonic flux map used as synthetic ground truth.

    Constructed (not trained) with scales that give machine-like flux
    magnitudes and a few percent of angle-dependent ripple.
    """
    from .gradnet import GradientNetwork, softplus_inv

    rng = np.random.default_rng(seed)
    n = n_hidden
    A = np.hstack([rng.normal(0.0, 0.08, size=(n, 2)),
                   rng.normal(0.0, 0.005, size=(n, 2))])
    b = rng.normal(0.0, 0.4, size=n)
    b0 = np.array([0.40, 0.0, 0.0, 0.0])
    a0_raw = np.full(2, softplus_inv(0.30 - 1e-3))
    net = GradientNetwork(A, b, a0_raw, b0, rho=0.0, kind="sigmoid", mu_floor=1e-3)
    return magnetics.MagneticModel("harmonic-flux", net=net, k=k)


def reference_harmonic_current_model(seed=11, n_hidden=24, k=6, psi_pm=0.55):
    """Frozen network-backed harmonic current map (simulation plant).

    The output bias is chosen so the current vanishes at flux [psi_pm, 0]
    and rotor angle zero, like a PM machine at no load.
    """
    from .gradnet import GradientNetwork, softplus_inv

    rng = np.random.default_rng(seed)
    n = n_hidden
    A = np.hstack([rng.normal(0.0, 0.30, size=(n, 2)),
                   rng.normal(0.0, 0.005, size=(n, 2))])
    b = rng.normal(0.0, 0.4, size=n)
    a0_raw = np.array([softplus_inv(2.2 - 1e-3), softplus_inv(1.0 - 1e-3)])
    net = GradientNetwork(A, b, a0_raw, np.zeros(4), rho=0.0, kind="squareplus",
                          mu_floor=1e-3)
    x_pm = np.array([psi_pm, 0.0, 1.0, 0.0])
    net.b0 = -net.forward(x_pm)
    return magnetics.MagneticModel("harmonic-current", net=net, k=k)
