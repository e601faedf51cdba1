"""Time-integration drivers: fixed-step and adaptive loops.

Adaptivity combines two mechanisms that multiply into the same dt: a PID
error controller acting on an embedded (or step-doubling) error estimate,
and the relaxation accept/reject rule (grow dt by 1% after a successful
gamma search, shrink by 10% and retry after a failed one).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .relaxation import (MODE_NONE, STATUS_CONVERGED, STATUS_FAILED,
                         RelaxConfig, RelaxOutcome, relax_step)

ADAPT_FIXED = "fixed"
ADAPT_PID = "pid"
ADAPT_RELAX = "relax_only"
ADAPT_PID_RELAX = "pid_and_relax"
ADAPT_MODES = (ADAPT_FIXED, ADAPT_PID, ADAPT_RELAX, ADAPT_PID_RELAX)

GROWTH_CLAMP = (0.2, 5.0)


class IntegrationError(RuntimeError):
    pass


@dataclass
class ControllerState:
    dt: float
    dt_min: float
    dt_max: float
    tol_rel: float = 1e-6
    tol_abs: float = 1e-6
    pid: tuple = (0.7, 0.4, 0.0)
    safety: float = 0.9
    err_history: list = field(default_factory=list)

    def clamp(self, dt: float) -> float:
        return min(max(dt, self.dt_min), self.dt_max)


def pid_update(state: ControllerState, err: float, order_hat: int) -> float:
    """New dt from the PID law; shifts the error history.

    dt_new = dt * clamp(safety * prod_k eps_k^{beta_k/order}, 0.2, 5)
    with eps_k = 1/err_k over the current and two previous errors.
    """
    if err <= 0.0:
        raise ValueError(f"scaled error must be positive, got {err}")
    errs = [err] + list(state.err_history)
    factor = state.safety
    for beta_k, e_k in zip(state.pid, errs):
        if beta_k != 0.0:
            factor *= (1.0 / e_k) ** (beta_k / order_hat)
    factor = min(max(factor, GROWTH_CLAMP[0]), GROWTH_CLAMP[1])
    state.err_history = [err] + state.err_history[:1]
    state.dt = state.clamp(state.dt * factor)
    return state.dt


def relax_adapt(dt: float, relax_ok: bool, dt_min: float = 0.0,
                dt_max: float = np.inf) -> float:
    """Grow dt by 1% on relaxation success, shrink by 10% on failure."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    dt = dt * (1.01 if relax_ok else 0.9)
    return min(max(dt, dt_min), dt_max)


@dataclass
class Trajectory:
    """Accepted steps of one integration run."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    dts: list = field(default_factory=list)
    gammas: list = field(default_factory=list)
    statuses: list = field(default_factory=list)
    etas: list = field(default_factory=list)
    n_rejected: int = 0

    @property
    def n_steps(self) -> int:
        # the stored row 0 is the initial state, not a step
        return max(0, len(self.dts) - 1)

    def append(self, t, u, dt, gamma, status, eta_val):
        self.times.append(float(t))
        self.states.append(np.array(u))
        self.dts.append(float(dt))
        self.gammas.append(float(gamma))
        self.statuses.append(status)
        self.etas.append(float(eta_val))


def _doubling_error(stepper, t, u, dt, record, atol, rtol):
    """Step-doubling estimate for schemes without an aligned stage."""
    half = stepper.step(t, u, 0.5 * dt)
    two = stepper.step(t + 0.5 * dt, half.u_next, 0.5 * dt)
    w = atol + rtol * np.abs(u)
    diff = (record.u_next - two.u_next) / w
    order = stepper.scheme.order
    return float(np.sqrt(np.mean(diff**2))) / (2.0**order - 1.0)


def integrate(stepper, eta, relax_cfg: Optional[RelaxConfig], t0: float,
              u0, t_end: float, dt0: float, adaptivity: str = ADAPT_FIXED,
              rtol: float = 1e-6, atol: float = 1e-6,
              max_steps: int = 2_000_000) -> Trajectory:
    """Integrate from (t0, u0) to t_end.

    Loop: base step, optional PID error test, optional relaxation.  On
    relaxation failure with relax adaptivity enabled, dt shrinks by 10%
    and the step is retried from the same state; without it the base step
    is kept and the failure is recorded.  The final step is truncated to
    land on t_end (up to the gamma time shift).
    """
    if adaptivity not in ADAPT_MODES:
        raise ValueError(f"unknown adaptivity mode {adaptivity!r}")
    if t_end <= t0:
        raise ValueError("t_end must exceed t0")
    span = t_end - t0
    use_pid = adaptivity in (ADAPT_PID, ADAPT_PID_RELAX)
    use_relax_adapt = adaptivity in (ADAPT_RELAX, ADAPT_PID_RELAX)
    relaxing = relax_cfg is not None and relax_cfg.mode != MODE_NONE
    if relaxing and eta is None:
        raise ValueError("relaxation requires an entropy functional")

    ctrl = ControllerState(dt=dt0, dt_min=1e-12 * span, dt_max=span,
                           tol_rel=rtol, tol_abs=atol)
    t = float(t0)
    u = np.array(u0, dtype=float)
    traj = Trajectory()
    eta0 = float(eta.eval(u)) if eta is not None else np.nan
    traj.append(t, u, 0.0, 1.0, "initial", eta0)

    n_attempts = 0
    while t < t_end - 1e-12 * span:
        if n_attempts > max_steps:
            raise IntegrationError(f"step budget exceeded at t = {t}")
        n_attempts += 1
        dt = min(ctrl.dt, t_end - t)
        record = stepper.step(t, u, dt)

        err = None
        if use_pid:
            err = stepper.error_estimate(record, atol, rtol)
            if err is None:
                err = _doubling_error(stepper, t, u, dt, record, atol, rtol)
            err = max(err, 1e-10)
            if err > 1.0:
                traj.n_rejected += 1
                new_dt = pid_update(ctrl, err, stepper.scheme.order)
                if new_dt <= ctrl.dt_min:
                    raise IntegrationError(
                        f"dt underflow at t = {t} (err = {err:.3e})")
                continue

        if relaxing:
            out = relax_step(eta, stepper, record, relax_cfg)
            if out.status == STATUS_FAILED and use_relax_adapt:
                # no PID update here: a gamma-search failure must shrink
                # dt monotonically or retries would race the controller
                traj.n_rejected += 1
                ctrl.dt = relax_adapt(ctrl.dt, False, ctrl.dt_min, ctrl.dt_max)
                if ctrl.dt <= ctrl.dt_min:
                    raise IntegrationError(
                        f"dt underflow after repeated relaxation failures "
                        f"at t = {t}")
                continue
            if use_pid:
                pid_update(ctrl, err, stepper.scheme.order)
            if use_relax_adapt:
                ctrl.dt = relax_adapt(ctrl.dt, True, ctrl.dt_min, ctrl.dt_max)
            t, u = out.t_relaxed, out.u_relaxed
            traj.append(t, u, dt, out.gamma, out.status, out.eta_after)
        else:
            if use_pid:
                pid_update(ctrl, err, stepper.scheme.order)
            t, u = record.t_n + dt, record.u_next
            eta_val = float(eta.eval(u)) if eta is not None else np.nan
            traj.append(t, u, dt, 1.0, "none", eta_val)

    return traj


def reference_solution(stepper, t0: float, u0, t_end: float, dt: float):
    """Fine-step trajectory (no relaxation) for error measurement.

    Returns (times, states) arrays suitable for interp_state.
    """
    traj = integrate(stepper, None, None, t0, u0, t_end, dt,
                     adaptivity=ADAPT_FIXED)
    return np.array(traj.times), np.array(traj.states)


def interp_state(times: np.ndarray, states: np.ndarray, t: float) -> np.ndarray:
    """Piecewise-linear interpolation of a stored trajectory at time t."""
    if t <= times[0]:
        return states[0]
    if t >= times[-1]:
        return states[-1]
    i = int(np.searchsorted(times, t)) - 1
    w = (t - times[i]) / (times[i + 1] - times[i])
    return (1.0 - w) * states[i] + w * states[i + 1]
