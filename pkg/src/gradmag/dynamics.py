"""Time-domain simulation of the rotor-coordinate drive equations.

States are the flux-linkage pair, electrical rotor angle, and electrical
speed, all per-unit; time is in per-unit (1 unit = one electrical radian
at rated frequency). The electrical dynamics are

    d psi / dt = u - R_s i(psi, theta) - omega * J psi,

the angle integrates the speed, and a minimal per-unit mechanical
equation 2 H domega/dt = tau - tau_load closes the loop. Electrical input
energy (after resistive loss) and mechanical output energy are integrated
alongside the states by the same fixed-step RK4 scheme so that energy
bookkeeping is as accurate as the trajectory itself.

The speed/flux controller in :func:`run_acceleration` is deliberately
simple (cascaded PI speed loop, MTPA reference tables, feedforward flux
regulation); it exists to produce realistic acceleration scenarios, not to
replicate any particular drive control scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import loci, magnetics
from .inversion import invert_current_map


class SimulationError(RuntimeError):
    """State became non-finite during integration."""


@dataclass
class SimState:
    psi: np.ndarray
    theta_m: float = 0.0
    omega_m: float = 0.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        if self.psi.shape != (2,) or not np.all(np.isfinite(self.psi)):
            raise ValueError("psi must be a finite length-2 vector")


@dataclass
class SimConfig:
    """Simulation settings, all per-unit.

    inertia_H is the inertia constant expressed in per-unit time; 18.85
    corresponds to 0.05 s on a 60 Hz base. speed_ref may be a constant or
    a callable of time.
    """

    R_s: float = 0.04
    inertia_H: float = 18.85
    load_torque: float = 0.0
    dt: float = 2.0 * np.pi / 1000.0
    t_end: float = 377.0
    max_current: float = 2.0
    speed_ref: object = 1.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.R_s < 0:
            raise ValueError("R_s must be >= 0")
        if self.inertia_H <= 0:
            raise ValueError("inertia_H must be > 0")

    def speed_ref_at(self, t):
        return self.speed_ref(t) if callable(self.speed_ref) else float(self.speed_ref)


@dataclass
class SimTrace:
    t: np.ndarray
    psi: np.ndarray
    i: np.ndarray
    tau: np.ndarray
    omega: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    e_elec: np.ndarray = field(default=None)
    e_mech: np.ndarray = field(default=None)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t,psi_d,psi_q,i_d,i_q,tau_m,omega_m,u_d,u_q\n")
            for j in range(len(self.t)):
                row = (self.t[j], self.psi[j, 0], self.psi[j, 1],
                       self.i[j, 0], self.i[j, 1], self.tau[j],
                       self.omega[j], self.u[j, 0], self.u[j, 1])
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _point_evaluator(model):
    """Low-overhead (i_d, i_q, tau) evaluation at a single (psi, theta).

    Equivalent to :func:`gradmag.magnetics.current_map`; unwrapped here
    because the integrator calls it four times per step.
    """
    if not model.is_current_map:
        raise magnetics.VariantError(f"variant {model.variant!r} is not a current map")
    if model.variant == "linear":
        L_d, L_q, psi_f = model.L_d, model.L_q, model.psi_f

        def ev_linear(p0, p1, theta):
            i0 = (p0 - psi_f) / L_d
            i1 = p1 / L_q
            return i0, i1, i1 * p0 - i0 * p1

        return ev_linear

    from .activations import activate

    net = model.net
    A, b, a0, b0 = net.A, net.b, net.a0_diag, net.b0
    act = net.activation
    c0 = model.in_center[0]
    s0, s1 = model.in_scale
    k = model.k

    if model.is_harmonic:
        def ev_harmonic(p0, p1, theta):
            x = np.array([(p0 - c0) / s0, p1 / s1,
                          np.cos(k * theta), np.sin(k * theta)])
            g = a0 * x + b0 + activate(act, A @ x + b) @ A
            i0, i1 = g[0] / s0, g[1] / s1
            tau = i1 * p0 - i0 * p1 + k * (x[3] * g[2] - x[2] * g[3])
            return i0, i1, tau

        return ev_harmonic

    symmetric = model.variant in magnetics.SYMMETRIC_VARIANTS

    def ev_plain(p0, p1, theta):
        x = np.array([(p0 - c0) / s0, p1 / s1])
        g = a0 * x + b0 + activate(act, A @ x + b) @ A
        if symmetric:
            xm = np.array([x[0], -x[1]])
            gm = a0 * xm + b0 + activate(act, A @ xm + b) @ A
            g = 0.5 * np.array([g[0] + gm[0], g[1] - gm[1]])
        i0, i1 = g[0] / s0, g[1] / s1
        return i0, i1, i1 * p0 - i0 * p1

    return ev_plain


def _derivatives(ev, config, u, y):
    """Right-hand side for the extended state [psi_d, psi_q, theta, omega,
    e_elec, e_mech]."""
    i0, i1, tau = ev(y[0], y[1], y[2])
    omega = y[3]
    dpsi0 = u[0] - config.R_s * i0 + omega * y[1]
    dpsi1 = u[1] - config.R_s * i1 - omega * y[0]
    domega = (tau - config.load_torque) / (2.0 * config.inertia_H)
    de_elec = u[0] * i0 + u[1] * i1 - config.R_s * (i0 * i0 + i1 * i1)
    de_mech = tau * omega
    return np.array([dpsi0, dpsi1, omega, domega, de_elec, de_mech])


def _rk4_step(ev, config, u, y, dt):
    k1 = _derivatives(ev, config, u, y)
    k2 = _derivatives(ev, config, u, y + 0.5 * dt * k1)
    k3 = _derivatives(ev, config, u, y + 0.5 * dt * k2)
    k4 = _derivatives(ev, config, u, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(state, u, model, config):
    """Advance one RK4 step with the voltage held constant over the step."""
    ev = _point_evaluator(model)
    y = np.array([state.psi[0], state.psi[1], state.theta_m, state.omega_m, 0.0, 0.0])
    y = _rk4_step(ev, config, np.asarray(u, dtype=float), y, config.dt)
    if not np.all(np.isfinite(y)):
        raise SimulationError("state became non-finite after one step")
    return SimState(psi=y[:2], theta_m=float(y[2]), omega_m=float(y[3]))


def _rk4_step_smooth(ev, config, u_fn, y, t, dt):
    """RK4 step with the voltage re-evaluated at the stage times; keeps
    fourth order when u_fn is a smooth function of time and state."""

    def f(ts, ys):
        u = np.asarray(u_fn(ts, SimState(psi=ys[:2].copy(), theta_m=float(ys[2]),
                                         omega_m=float(ys[3]))), dtype=float)
        return _derivatives(ev, config, u, ys)

    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(model, u_fn, config, state0, stage_voltage=False):
    """Open-loop integration with voltage from u_fn(t, SimState).

    By default the voltage is held constant over each step (zero-order
    hold, matching a sampled controller). With stage_voltage=True the
    voltage is re-evaluated at the RK4 stage times, which preserves
    fourth-order accuracy for smooth voltage profiles.
    """
    ev = _point_evaluator(model)
    n_steps = int(round(config.t_end / config.dt))
    y = np.array([state0.psi[0], state0.psi[1], state0.theta_m, state0.omega_m,
                  0.0, 0.0])
    rows = np.empty((n_steps + 1, 6))
    us = np.empty((n_steps + 1, 2))
    taus = np.empty(n_steps + 1)
    cur = np.empty((n_steps + 1, 2))
    for j in range(n_steps + 1):
        t = j * config.dt
        state = SimState(psi=y[:2].copy(), theta_m=float(y[2]), omega_m=float(y[3]))
        u = np.asarray(u_fn(t, state), dtype=float)
        i0, i1, tau = ev(y[0], y[1], y[2])
        rows[j], us[j], taus[j] = y, u, tau
        cur[j, 0], cur[j, 1] = i0, i1
        if j < n_steps:
            if stage_voltage:
                y = _rk4_step_smooth(ev, config, u_fn, y, t, config.dt)
            else:
                y = _rk4_step(ev, config, u, y, config.dt)
            if not np.all(np.isfinite(y)):
                raise SimulationError(f"state became non-finite at t={t + config.dt:.4f}")
    return SimTrace(t=np.arange(n_steps + 1) * config.dt, psi=rows[:, :2],
                    i=cur, tau=taus, omega=rows[:, 3], u=us, theta=rows[:, 2],
                    e_elec=rows[:, 4], e_mech=rows[:, 5])


class _AccelController:
    """Cascaded speed PI -> MTPA flux/current references -> feedforward
    flux-regulating voltage. Current limiting happens through the torque
    cap of the MTPA table at |i| = max_current."""

    def __init__(self, control_model, config, n_table=41, speed_bw=0.05, flux_bw=0.25):
        mags = np.linspace(0.0, config.max_current, n_table)
        pts = [loci.mtpa_point(control_model, m) for m in mags]
        self.tau_tab = np.array([p.tau for p in pts])
        self.psi_tab = np.array([p.psi for p in pts])
        self.i_tab = np.array([p.i for p in pts])
        self.tau_cap = float(self.tau_tab[-1])
        self.kp = 2.0 * config.inertia_H * speed_bw
        self.ki = 2.0 * config.inertia_H * speed_bw**2 / 4.0
        self.flux_bw = flux_bw
        self.config = config
        self.integral = 0.0

    def torque_reference(self, t, omega):
        err = self.config.speed_ref_at(t) - omega
        tau_unclamped = self.kp * err + self.ki * self.integral
        tau_ref = float(np.clip(tau_unclamped, -self.tau_cap, self.tau_cap))
        if tau_unclamped == tau_ref:  # conditional integration anti-windup
            self.integral += err * self.config.dt
        return tau_ref

    def flux_reference(self, tau_ref):
        mag = np.interp(abs(tau_ref), self.tau_tab, np.arange(len(self.tau_tab)))
        j0 = int(np.floor(mag))
        w = mag - j0
        j1 = min(j0 + 1, len(self.tau_tab) - 1)
        psi_ref = (1.0 - w) * self.psi_tab[j0] + w * self.psi_tab[j1]
        if tau_ref < 0:
            psi_ref = psi_ref * [1.0, -1.0]
        return psi_ref

    def voltage(self, t, state, i_meas):
        tau_ref = self.torque_reference(t, state.omega_m)
        psi_ref = self.flux_reference(tau_ref)
        ff = self.config.R_s * i_meas + state.omega_m * np.array(
            [-state.psi[1], state.psi[0]])
        return ff + self.flux_bw * (psi_ref - state.psi)


def rest_state(model, theta_m=0.0):
    """Zero-current, zero-speed initial state (flux at i = 0)."""
    psi0 = invert_current_map(model, np.zeros(2), theta_m=theta_m, tol=1e-12)
    return SimState(psi=psi0, theta_m=theta_m, omega_m=0.0)


def run_acceleration(model, control_model, config):
    """Closed-loop acceleration scenario driven by the simple controller.

    The plant model must be a current-map variant (the flux linkages are
    the states); the control model must be an angle-independent flux-map
    variant from which the MTPA tables are built.
    """
    controller = _AccelController(control_model, config)
    state0 = rest_state(model, theta_m=0.0)
    ev = _point_evaluator(model)

    def u_fn(t, state):
        i0, i1, _ = ev(state.psi[0], state.psi[1], state.theta_m)
        return controller.voltage(t, state, np.array([i0, i1]))

    return simulate(model, u_fn, config, state0)


def energy_balance_residual(model, config, trace):
    """Electrical-minus-mechanical energy minus the model's stored field
    energy change over a trace; near zero for a conservative model."""
    dW = magnetics.energy_change(model, trace.psi[0], trace.theta[0],
                                 trace.psi[-1], trace.theta[-1])
    return float(trace.e_elec[-1] - trace.e_mech[-1] - dW)


def ripple_orders(trace, speed_tol=0.005, n_fft=4096, max_order=24):
    """Torque-ripple amplitude by electrical order over the constant-speed
    tail of a trace. Returns (orders, amplitudes).

    The torque is resampled uniformly in rotor angle and linearly
    detrended, so slow speed-regulation drift does not leak into the
    angle-periodic orders. Entries below order 1/2 carry whatever drift
    remains; ripple claims should look at orders >= 1/2.
    """
    omega_end = trace.omega[-1]
    steady = np.flatnonzero(np.abs(trace.omega - omega_end)
                            > speed_tol * max(abs(omega_end), 1e-9))
    start = steady[-1] + 1 if len(steady) else 0
    if len(trace.t) - start < 16:
        raise ValueError("no constant-speed window in trace")
    theta = trace.theta[start:]
    tau = trace.tau[start:]
    span = theta[-1] - theta[0]
    grid = np.linspace(theta[0], theta[-1], n_fft)
    tau_u = np.interp(grid, theta, tau)
    tau_u = tau_u - np.polyval(np.polyfit(grid - grid[0], tau_u, 1), grid - grid[0])
    spec = np.abs(np.fft.rfft(tau_u)) / n_fft
    # sample spacing in electrical revolutions -> frequencies in orders
    freqs = np.fft.rfftfreq(n_fft, d=span / (n_fft - 1) / (2.0 * np.pi))
    keep = freqs <= max_order
    return freqs[keep], spec[keep]


def ripple_peak_order(trace, min_order=0.5):
    """Electrical order of the strongest angle-periodic torque component."""
    orders, amps = ripple_orders(trace)
    mask = orders >= min_order
    if not np.any(mask):
        raise ValueError("spectrum has no content above the minimum order")
    return float(orders[mask][int(np.argmax(amps[mask]))])
