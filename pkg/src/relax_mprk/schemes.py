"""Modified Patankar Runge-Kutta one-step maps.

Implements the one-step maps of MPRK22(alpha), MPRK43I(alpha, beta) and
MPSSPRK2(alpha, beta) for production-destruction-rest systems, together
with the gamma-parameterized update machinery used by the relaxation
solver: the denominator vectors sigma_bar(gamma), the matrix M_gamma, the
state u^{n+gamma} and its derivative with respect to gamma.

The key structural fact used throughout: every stage and update is a
linear system whose matrix has unit-plus-nonnegative diagonal and
non-positive off-diagonal entries, so solutions with positive right-hand
sides stay strictly positive for every step size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import lu_solve
from .pdrs import PdrsSystem, PositivityError, RateSet

MPRK22 = "mprk22"
MPRK43I = "mprk43i"
MPSSPRK2 = "mpssprk2"

SCHEME_KINDS = (MPRK22, MPRK43I, MPSSPRK2)

SIGMA_FROZEN = "frozen"
SIGMA_DENSE = "dense"
SIGMA_BOOTSTRAP = "bootstrap"


class SchemeParameterError(ValueError):
    pass


class UnsupportedSchemeError(ValueError):
    pass


@dataclass(frozen=True)
class MpScheme:
    """Validated scheme identity with all derived constants.

    ``a``, ``b``, ``c`` is the underlying explicit Butcher tableau.
    ``update_w`` are the weights used to assemble the Patankar update
    matrix (equal to ``b`` except for MPSSPRK2, where they are
    (beta20, beta21)).  ``p_exp`` is the third-stage denominator exponent
    of MPRK43I and ``sigma_w`` the weights of its sigma system;
    ``s_exp`` is the MPSSPRK2 denominator exponent.
    """

    kind: str
    alpha: float
    beta: float
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    update_w: np.ndarray
    p_exp: Optional[float] = None
    sigma_w: Optional[np.ndarray] = None
    s_exp: Optional[float] = None

    @property
    def stages(self) -> int:
        return len(self.b)

    def label(self) -> str:
        if self.kind == MPRK22:
            return f"MPRK22({self.alpha:g})"
        return f"{self.kind.upper().replace('MPRK43I', 'MPRK43I')}({self.alpha:g},{self.beta:g})"


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise SchemeParameterError(msg)


def build_scheme(kind: str, alpha: float, beta: float = None) -> MpScheme:
    """Construct and validate a scheme from its free parameters."""
    kind = kind.lower()
    if kind == MPRK22:
        _require(alpha >= 0.5, f"MPRK22 requires alpha >= 1/2, got alpha = {alpha}")
        b2 = 1.0 / (2.0 * alpha)
        a = np.array([[0.0, 0.0], [alpha, 0.0]])
        b = np.array([1.0 - b2, b2])
        c = np.array([0.0, alpha])
        return MpScheme(kind, alpha, float("nan"), a, b, c, order=2, update_w=b)

    if kind == MPRK43I:
        if beta is None:
            raise SchemeParameterError("MPRK43I needs two parameters (alpha, beta)")
        _require(alpha > 0.0, f"MPRK43I requires alpha > 0, got {alpha}")
        _require(beta > 0.0, f"MPRK43I requires beta > 0, got {beta}")
        _require(abs(2.0 - 3.0 * alpha) > 1e-14, "MPRK43I requires alpha != 2/3")
        _require(abs(beta - alpha) > 1e-14, "MPRK43I requires beta != alpha")
        a21 = alpha
        a31 = (3.0 * alpha * beta * (1.0 - alpha) - beta**2) / (alpha * (2.0 - 3.0 * alpha))
        a32 = beta * (beta - alpha) / (alpha * (2.0 - 3.0 * alpha))
        b1 = 1.0 + (2.0 - 3.0 * (alpha + beta)) / (6.0 * alpha * beta)
        b2 = (3.0 * beta - 2.0) / (6.0 * alpha * (beta - alpha))
        b3 = (2.0 - 3.0 * alpha) / (6.0 * beta * (beta - alpha))
        for name, val in (("a31", a31), ("a32", a32), ("b1", b1), ("b2", b2), ("b3", b3)):
            _require(val >= -1e-14, f"MPRK43I Butcher entry {name} = {val} < 0")
        p_exp = 3.0 * a21 * (a31 + a32) * b3
        _require(p_exp > 0.0, f"MPRK43I stage-3 exponent p = {p_exp} must be positive")
        a = np.array([[0.0, 0.0, 0.0], [a21, 0.0, 0.0], [a31, a32, 0.0]])
        b = np.array([b1, b2, b3])
        c = np.array([0.0, alpha, beta])
        beta2 = 1.0 / (2.0 * a21)
        sigma_w = np.array([1.0 - beta2, beta2])
        return MpScheme(kind, alpha, beta, a, b, c, order=3, update_w=b,
                        p_exp=p_exp, sigma_w=sigma_w)

    if kind == MPSSPRK2:
        if beta is None:
            raise SchemeParameterError("MPSSPRK2 needs two parameters (alpha, beta)")
        _require(0.0 <= alpha <= 1.0, f"MPSSPRK2 requires 0 <= alpha <= 1, got {alpha}")
        _require(beta > 0.0, f"MPSSPRK2 requires beta > 0, got {beta}")
        _require(alpha * beta + 1.0 / (2.0 * beta) <= 1.0 + 1e-14,
                 f"MPSSPRK2 requires alpha*beta + 1/(2*beta) <= 1, "
                 f"got {alpha * beta + 1.0 / (2.0 * beta)}")
        b21 = 1.0 / (2.0 * beta)
        b20 = 1.0 - b21 - alpha * beta
        s_exp = (1.0 - alpha * beta + alpha * beta**2) / (beta * (1.0 - alpha * beta))
        a = np.array([[0.0, 0.0], [beta, 0.0]])
        b = np.array([alpha * beta + b20, b21])
        c = np.array([0.0, beta])
        return MpScheme(kind, alpha, beta, a, b, c, order=2,
                        update_w=np.array([max(b20, 0.0), b21]), s_exp=s_exp)

    raise SchemeParameterError(f"unknown scheme kind {kind!r}; known: {SCHEME_KINDS}")


def patankar_matrix(P_w: np.ndarray, loss_w: np.ndarray, denom: np.ndarray,
                    fac: float) -> np.ndarray:
    """Assemble I + fac*diag(loss/denom) - fac*P/denom (column-scaled).

    ``P_w`` and ``loss_w`` are already weight-summed rate arrays; ``fac``
    carries the dt (and gamma) factor.  ``denom`` must be positive.
    """
    denom = np.asarray(denom, float)
    bad = np.flatnonzero(denom <= 0.0)
    if bad.size:
        raise PositivityError(f"non-positive denominator component [{bad[0]}]")
    M = -(fac * P_w) / denom[np.newaxis, :]
    np.fill_diagonal(M, 0.0)
    M[np.diag_indices_from(M)] = 1.0 + fac * loss_w / denom
    return M


def ppow(base: np.ndarray, expo) -> np.ndarray:
    """Elementwise base**expo for strictly positive base via exp/log."""
    base = np.maximum(np.asarray(base, float), np.finfo(float).tiny)
    return np.exp(np.asarray(expo, float) * np.log(base))


@dataclass(frozen=True)
class GammaData:
    """Everything needed to evaluate u^{n+gamma} and its gamma-derivative.

    ``upd_P``/``upd_loss`` are the update-weighted rate arrays, ``g`` the
    gamma-linear part of the right-hand side (so the update solves
    M_gamma u = u_n + gamma*g).  For MPRK43I, ``sig_P``/``sig_loss``/
    ``sig_g`` describe the embedded sigma system used by bootstrapping.
    """

    scheme: MpScheme
    dt: float
    u_n: np.ndarray
    u_stage2: np.ndarray
    sigma: np.ndarray
    upd_P: np.ndarray
    upd_loss: np.ndarray
    g: np.ndarray
    sig_P: Optional[np.ndarray] = None
    sig_loss: Optional[np.ndarray] = None
    sig_g: Optional[np.ndarray] = None


@dataclass(frozen=True)
class StepRecord:
    """One accepted MPRK step with caches for relaxation."""

    t_n: float
    dt: float
    u_n: np.ndarray
    stages: tuple
    sigma: np.ndarray
    u_next: np.ndarray
    rest_sum: np.ndarray
    gamma_data: GammaData
    stage_rhs: tuple

    @property
    def scheme(self) -> MpScheme:
        return self.gamma_data.scheme


_TINY = np.finfo(float).tiny


def _check_positive(u: np.ndarray, what: str) -> np.ndarray:
    bad = np.flatnonzero(u < 0.0)
    if bad.size:
        raise PositivityError(f"{what} lost positivity at component {bad[0]}")
    # components whose true value lies below the representable range
    # underflow to zero or denormals; floor them at the smallest normal
    # number so later divisions by sigma stay finite
    small = u < _TINY
    if np.any(small):
        u = np.where(small, _TINY, u)
    return u


def _weighted(rate_sets, weights):
    P = sum(w * r.P for w, r in zip(weights, rate_sets))
    loss = sum(w * r.loss for w, r in zip(weights, rate_sets))
    rP = sum(w * r.rest_prod for w, r in zip(weights, rate_sets))
    return P, loss, rP


def _solve_stage(u_n, rate_sets, weights, denom, dt):
    P, loss, rP = _weighted(rate_sets, weights)
    M = patankar_matrix(P, loss, denom, dt)
    return _check_positive(lu_solve(M, u_n + dt * rP), "stage")


def _sigma_43i(scheme, u_n, u2, rate_sets, dt):
    """Sigma of MPRK43I: solution of its own Patankar-type linear system."""
    tau = ppow(u2, 1.0 / scheme.alpha) * ppow(u_n, 1.0 - 1.0 / scheme.alpha)
    P, loss, rP = _weighted(rate_sets[:2], scheme.sigma_w)
    M = patankar_matrix(P, loss, tau, dt)
    g = dt * rP
    sigma = _check_positive(lu_solve(M, u_n + g), "sigma")
    return sigma, P, loss, g


def step(sys: PdrsSystem, scheme: MpScheme, t_n: float, u_n: np.ndarray,
         dt: float) -> StepRecord:
    """Advance one step of the chosen MP scheme from (t_n, u_n)."""
    u_n = sys.check_state(u_n)
    if dt <= 0.0:
        raise ValueError(f"step size must be positive, got {dt}")
    if scheme.kind == MPSSPRK2 and sys.has_rest:
        raise UnsupportedSchemeError(
            "MPSSPRK2 supports conservative PDS only (no rest terms)")

    rates = [sys.rates(t_n + scheme.c[0] * dt, u_n)]
    stages = [u_n]
    sig_P = sig_loss = sig_g = None

    if scheme.kind in (MPRK22, MPRK43I):
        a = scheme.a
        u2 = _solve_stage(u_n, rates, [a[1, 0]], u_n, dt)
        stages.append(u2)
        rates.append(sys.rates(t_n + scheme.c[1] * dt, u2))
        if scheme.kind == MPRK43I:
            pi3 = ppow(u2, 1.0 / scheme.p_exp) * ppow(u_n, 1.0 - 1.0 / scheme.p_exp)
            u3 = _solve_stage(u_n, rates, a[2, :2], pi3, dt)
            stages.append(u3)
            rates.append(sys.rates(t_n + scheme.c[2] * dt, u3))
            sigma, sig_P, sig_loss, sig_g = _sigma_43i(scheme, u_n, u2, rates, dt)
        else:
            sigma = ppow(u2, 1.0 / scheme.alpha) * ppow(u_n, 1.0 - 1.0 / scheme.alpha)
        upd_P, upd_loss, rP = _weighted(rates, scheme.b)
        rest_sum = rP
        g = dt * rP
    else:  # MPSSPRK2
        beta = scheme.beta
        M2 = patankar_matrix(rates[0].P, rates[0].loss, u_n, beta * dt)
        u2 = _check_positive(lu_solve(M2, u_n), "stage")
        stages.append(u2)
        rates.append(sys.rates(t_n + scheme.c[1] * dt, u2))
        sigma = ppow(u_n, 1.0 - scheme.s_exp) * ppow(u2, scheme.s_exp)
        upd_P, upd_loss, _ = _weighted(rates, scheme.update_w)
        rest_sum = np.zeros_like(u_n)
        g = scheme.alpha * (u2 - u_n)

    gd = GammaData(scheme, dt, u_n, stages[1], sigma, upd_P, upd_loss, g,
                   sig_P, sig_loss, sig_g)
    M = patankar_matrix(upd_P, upd_loss, sigma, dt)
    u_next = _check_positive(lu_solve(M, u_n + g), "update")

    stage_rhs = tuple(r.rhs for r in rates)
    return StepRecord(t_n, dt, u_n, tuple(stages), sigma, u_next, rest_sum,
                      gd, stage_rhs)


def assemble_update_matrix(sys: PdrsSystem, scheme: MpScheme, stages,
                           sigma: np.ndarray, t_n: float, dt: float) -> np.ndarray:
    """Patankar update matrix M for given stage states and denominators."""
    _check_positive(np.asarray(sigma, float), "sigma")
    rates = [sys.rates(t_n + scheme.c[j] * dt, stages[j]) for j in range(len(stages))]
    P, loss, _ = _weighted(rates, scheme.update_w)
    return patankar_matrix(P, loss, sigma, dt)


def _default_sigma_mode(scheme: MpScheme) -> str:
    # MPRK22 keeps sigma frozen (the usual default); MPSSPRK2 carries the
    # gamma exponent in its denominator; MPRK43I needs bootstrapping for
    # third order at the relaxation root.
    return {MPRK22: SIGMA_FROZEN, MPSSPRK2: SIGMA_DENSE,
            MPRK43I: SIGMA_BOOTSTRAP}[scheme.kind]


def sigma_bar(scheme: MpScheme, record_or_data, gamma: float, mode: str):
    """Gamma-dependent denominator vector and its gamma-derivative.

    Returns ``(sbar, sbar_prime)``.  Valid modes: ``frozen`` for any
    scheme, ``dense`` for MPRK22/MPSSPRK2, ``bootstrap`` for MPRK43I.
    """
    gd = record_or_data.gamma_data if isinstance(record_or_data, StepRecord) else record_or_data
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if mode == SIGMA_FROZEN:
        return gd.sigma, np.zeros_like(gd.sigma)

    u_n, u2 = gd.u_n, gd.u_stage2
    log_ratio = np.log(u2) - np.log(u_n)
    if mode == SIGMA_DENSE:
        if scheme.kind == MPRK22:
            rate = 1.0 / scheme.alpha
        elif scheme.kind == MPSSPRK2:
            rate = scheme.s_exp
        else:
            raise ValueError("dense sigma mode is undefined for MPRK43I; use bootstrap")
        sbar = ppow(u2, gamma * rate) * ppow(u_n, 1.0 - gamma * rate)
        return sbar, sbar * rate * log_ratio

    if mode == SIGMA_BOOTSTRAP:
        if scheme.kind != MPRK43I:
            raise ValueError("bootstrap sigma mode applies to MPRK43I only")
        rate = 1.0 / scheme.alpha
        tau = ppow(u2, gamma * rate) * ppow(u_n, 1.0 - gamma * rate)
        M = patankar_matrix(gd.sig_P, gd.sig_loss, tau, gamma * gd.dt)
        sbar = _check_positive(lu_solve(M, u_n + gamma * gd.sig_g), "sigma_bar")
        v = sbar * rate * log_ratio
        rhs = (sbar - u_n) / gamma + M @ v - v
        return sbar, lu_solve(M, rhs)

    raise ValueError(f"unknown sigma mode {mode!r}")


def gamma_matrix(gd: GammaData, gamma: float, mode: str):
    sbar, sprime = sigma_bar(gd.scheme, gd, gamma, mode)
    M = patankar_matrix(gd.upd_P, gd.upd_loss, sbar, gamma * gd.dt)
    return M, sbar, sprime


def gamma_update(record_or_data, gamma: float, mode: str) -> np.ndarray:
    """Positivity-preserving gamma-parameterized update u^{n+gamma}.

    Solves M_gamma u = u_n + gamma*g; reproduces u^{n+1} at gamma = 1 in
    every mode and stays positive for every gamma > 0.
    """
    gd = record_or_data.gamma_data if isinstance(record_or_data, StepRecord) else record_or_data
    M, _, _ = gamma_matrix(gd, gamma, mode)
    return _check_positive(lu_solve(M, gd.u_n + gamma * gd.g), "gamma update")


def gamma_update_derivative(record_or_data, gamma: float, mode: str,
                            u_gamma: np.ndarray) -> np.ndarray:
    """d u^{n+gamma} / d gamma, consistent with ``gamma_update``."""
    gd = record_or_data.gamma_data if isinstance(record_or_data, StepRecord) else record_or_data
    M, sbar, sprime = gamma_matrix(gd, gamma, mode)
    v = u_gamma * sprime / sbar
    rhs = (u_gamma - gd.u_n) / gamma + M @ v - v
    return lu_solve(M, rhs)


class MpStepper:
    """Binds a PDRS, a scheme and a sigma mode into the stepper protocol
    consumed by the relaxation and step-control layers."""

    def __init__(self, sys: PdrsSystem, scheme: MpScheme,
                 sigma_mode: Optional[str] = None):
        self.sys = sys
        self.scheme = scheme
        self.sigma_mode = sigma_mode or _default_sigma_mode(scheme)

    @property
    def linear_invariants(self):
        return self.sys.linear_invariants

    def step(self, t: float, u: np.ndarray, dt: float) -> StepRecord:
        return step(self.sys, self.scheme, t, u, dt)

    def gamma_state(self, record: StepRecord, gamma: float) -> np.ndarray:
        return gamma_update(record, gamma, self.sigma_mode)

    def gamma_state_derivative(self, record: StepRecord, gamma: float,
                               u_gamma: np.ndarray) -> np.ndarray:
        return gamma_update_derivative(record, gamma, self.sigma_mode, u_gamma)

    def entropy_quadrature(self, eta, record: StepRecord) -> float:
        """dt * sum_j b_j eta'(u^(j)) . f(u^(j)) over the stages."""
        acc = 0.0
        for bj, uj, fj in zip(self.scheme.b, record.stages, record.stage_rhs):
            acc += bj * float(eta.grad(uj) @ fj)
        return record.dt * acc

    def error_estimate(self, record: StepRecord, atol: float, rtol: float):
        """Scaled embedded error; None if the scheme has no aligned stage."""
        if self.scheme.kind == MPRK43I:
            return None
        w = atol + rtol * np.abs(record.u_n)
        diff = (record.u_next - record.stages[1]) / w
        return float(np.sqrt(np.mean(diff**2)))
