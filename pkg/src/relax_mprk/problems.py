"""Ready-to-run experiment problems.

Each descriptor bundles a production-destruction(-rest) system, one or
more entropy functionals, initial data, a time span and the default
scheme/relaxation configuration used by the command-line runner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .means import mean_geo, mean_harm, mean_log
from .pdrs import PdrsSystem
from .relaxation import (EntropyFunctional, MODE_CLAMPED, MODE_IMPLICIT,
                         REGIME_CONSERVATIVE, REGIME_DISSIPATIVE)


@dataclass(frozen=True)
class ProblemDescriptor:
    """One experiment: system, entropies, initial data, defaults.

    ``reference(t)`` returns the exact state when an analytic solution is
    known, else None and a fine-step oracle is used.  ``stepper_factory``
    overrides the plain MP stepper for partitioned problems.
    """

    name: str
    sys: Optional[PdrsSystem]
    entropies: tuple
    u0: np.ndarray
    tspan: tuple
    defaults: dict
    reference: Optional[Callable] = None
    mesh: Optional[dict] = None
    stepper_factory: Optional[Callable] = None

    @property
    def eta(self) -> EntropyFunctional:
        return self.entropies[0]


def _pairwise_callbacks(matrix_rates):
    """Scalar rate callbacks derived from a vectorized rate function."""

    def prod(k, nu, t, u):
        return float(matrix_rates(t, u)[0][k, nu])

    def dest(k, nu, t, u):
        return float(matrix_rates(t, u)[1][k, nu])

    return prod, dest


# ---------------------------------------------------------------------------
# Predator-prey system with rest terms

def lotka_volterra() -> ProblemDescriptor:
    """u1' = 2 u1 - u1 u2, u2' = u1 u2 - u2, with conserved
    eta = ln u1 - u1 + 2 ln u2 - u2."""

    def matrix_rates(t, u):
        P = np.zeros((2, 2))
        D = np.zeros((2, 2))
        P[1, 0] = D[0, 1] = u[0] * u[1]
        return P, D, np.array([2.0 * u[0], 0.0]), np.array([0.0, u[1]])

    prod, dest = _pairwise_callbacks(matrix_rates)
    sys = PdrsSystem(
        dim=2, prod=prod, dest=dest,
        rest_prod=lambda k, t, u: 2.0 * u[0] if k == 0 else 0.0,
        rest_dest=lambda k, t, u: u[1] if k == 1 else 0.0,
        sparsity=((1, 0),), matrix_rates=matrix_rates)

    eta = EntropyFunctional(
        eval=lambda u: float(np.log(u[0]) - u[0] + 2.0 * np.log(u[1]) - u[1]),
        grad=lambda u: np.array([1.0 / u[0] - 1.0, 2.0 / u[1] - 1.0]),
        regime=REGIME_CONSERVATIVE, monotone_nondecreasing=False,
        convex=False, name="lv_invariant")

    return ProblemDescriptor(
        name="lotka_volterra", sys=sys, entropies=(eta,),
        u0=np.array([2.0, 2.0]), tspan=(0.0, 200.0),
        defaults=dict(method=("mprk22", 1.0, None), relax=MODE_IMPLICIT,
                      solver="newton", dt0=1.0, adapt="fixed"))


# ---------------------------------------------------------------------------
# Six-constituent atmospheric reaction system (scaled variables)

_STRAT_M = 8.120e16


def _daylight(t: float) -> float:
    """Smooth daylight window on hours [4.5, 19.5] of the 24h clock."""
    T = (t / 3600.0) % 24.0
    Tr, Ts = 4.5, 19.5
    if not (Tr < T < Ts):
        return 0.0
    w = (2.0 * T - Tr - Ts) / (Ts - Tr)
    return 0.5 + 0.5 * math.cos(math.pi * abs(w) * w)


def _strat_reaction_rates(t: float, u: np.ndarray) -> np.ndarray:
    s = _daylight(t)
    u1, u2, u3, u4, u5, u6 = u
    return np.array([
        s**3 * 2.643e-10 * u4,
        8.018e-17 * u2 * u4,
        s * 6.120e-4 * u3,
        1.576e-15 * u2 * u3,
        s**2 * 1.070e-3 * u3,
        7.110e-11 * _STRAT_M * u1,
        1.200e-10 * u1 * u3,
        6.062e-15 * u3 * u5,
        1.069e-11 * u2 * u6,
        s * 1.289e-2 * u6,
        1.0e-8 * u2 * u5,
    ])


def _strat_matrix_rates(t, u):
    r = np.zeros(12)
    r[1:] = _strat_reaction_rates(t, u)  # 1-indexed reactions
    D = np.zeros((6, 6))
    D[0, 1] = r[6]
    D[0, 3] = r[7] / 3.0
    D[1, 2] = r[2] / 2.0
    D[1, 3] = r[4] / 3.0
    D[1, 4] = r[9] / 2.0
    D[1, 5] = r[11]
    D[2, 0] = r[5] / 3.0
    D[2, 1] = r[3] / 3.0
    D[2, 3] = (2.0 / 3.0) * r[3] + r[4] + (2.0 / 3.0) * r[5] + r[7] \
        + (2.0 / 3.0) * r[8]
    D[2, 5] = r[8] / 3.0
    D[3, 1] = r[1]
    D[3, 2] = r[2]
    D[4, 5] = r[11] + r[8] / 3.0
    D[5, 1] = r[10] / 2.0
    D[5, 3] = r[9]
    D[5, 4] = r[10] / 2.0
    zero = np.zeros(6)
    return D.T.copy(), D, zero, zero


def stratospheric() -> ProblemDescriptor:
    """Scaled six-species reaction system over [12h, 84h].

    Both weighted sums n1 = (1,1,1,1,1,1) and n2 = (0,0,0,0,1,1/2) are
    conserved by the flow; n2 is enforced as the relaxation entropy since
    MP schemes only preserve the first automatically.
    """
    prod, dest = _pairwise_callbacks(_strat_matrix_rates)
    n2 = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.5])
    sys = PdrsSystem(
        dim=6, prod=prod, dest=dest, has_rest=False, conservative_pd=True,
        autonomous=False,
        linear_invariants=(np.ones(6), n2),
        matrix_rates=_strat_matrix_rates)

    eta = EntropyFunctional(
        eval=lambda u: float(n2 @ u), grad=lambda u: n2.copy(),
        regime=REGIME_CONSERVATIVE, monotone_nondecreasing=True,
        convex=True, name="second_invariant")

    u0 = np.array([9.906e1, 6.624e8, 1.5978e12, 3.394e16, 8.725e8, 4.480e8])
    return ProblemDescriptor(
        name="stratospheric", sys=sys, entropies=(eta,), u0=u0,
        tspan=(12.0 * 3600.0, 84.0 * 3600.0),
        defaults=dict(method=("mprk22", 1.0, None), relax=MODE_IMPLICIT,
                      solver="regula_falsi", dt0=0.01 * 3600.0,
                      adapt="pid_and_relax", rtol=1e-3, atol=1e-3,
                      # the second-invariant residual has a trivial root at
                      # gamma = 0; a tight lower bound turns tiny-gamma roots
                      # into failures so the step-shrink rule engages
                      relax_opts=dict(gamma_min=0.1)))


# ---------------------------------------------------------------------------
# Entropy-conservative finite-volume advection on a periodic mesh

_ADV_MEANS = {"log": mean_log, "sqrt": mean_geo, "inv": mean_harm}

_ADV_ENTROPY = {
    "log": (lambda u: u * np.log(u) - u, np.log),
    "sqrt": (lambda u: -np.sqrt(u), lambda u: -0.5 / np.sqrt(u)),
    "inv": (lambda u: 1.0 / u, lambda u: -1.0 / u**2),
}

_ADV_DEFAULTS = {
    "log": (("mpssprk2", 0.5, 1.0), "secant"),
    "sqrt": (("mprk43i", 0.5, 0.75), "regula_falsi"),
    "inv": (("mprk22", 1.0, None), "bisection"),
}


def advection_fv(N: int = 100, entropy_kind: str = "log") -> ProblemDescriptor:
    """Linear advection with unit speed on [0, 2], periodic, with the
    entropy-conservative two-point flux matching the chosen entropy."""
    if entropy_kind not in _ADV_MEANS:
        raise ValueError(f"entropy_kind must be one of {tuple(_ADV_MEANS)}")
    if N < 3:
        raise ValueError("advection mesh needs at least 3 cells")
    dx = 2.0 / N
    mean = _ADV_MEANS[entropy_kind]
    U, dU = _ADV_ENTROPY[entropy_kind]

    def matrix_rates(t, u):
        flux = mean(u, np.roll(u, -1)) / dx  # interface i -> i+1
        idx = np.arange(N)
        P = np.zeros((N, N))
        P[(idx + 1) % N, idx] = flux
        zero = np.zeros(N)
        return P, P.T.copy(), zero, zero

    prod, dest = _pairwise_callbacks(matrix_rates)
    sparsity = tuple(((i + 1) % N, i) for i in range(N))
    sys = PdrsSystem(dim=N, prod=prod, dest=dest, has_rest=False,
                     conservative_pd=True, sparsity=sparsity,
                     linear_invariants=(np.ones(N),),
                     matrix_rates=matrix_rates)

    eta = EntropyFunctional(
        eval=lambda u: float(dx * np.sum(U(u))),
        grad=lambda u: dx * dU(u),
        regime=REGIME_CONSERVATIVE, monotone_nondecreasing=False,
        convex=True, name=f"advection_{entropy_kind}")

    x = (np.arange(N) + 0.5) * dx
    u0 = 1.9 * np.sin(np.pi * x) + 2.0
    method, solver = _ADV_DEFAULTS[entropy_kind]
    return ProblemDescriptor(
        name="advection", sys=sys, entropies=(eta,), u0=u0, tspan=(0.0, 2.0),
        defaults=dict(method=method, relax=MODE_IMPLICIT, solver=solver,
                      dt0=dx, adapt="fixed"),
        mesh=dict(N=N, dx=dx, domain=(0.0, 2.0), entropy_kind=entropy_kind))


# ---------------------------------------------------------------------------
# Porous medium equation, second-order finite differences on [-6, 6]

_PME_FLOOR = 1e-30


def barenblatt(t: float, x: np.ndarray, m: float) -> np.ndarray:
    """Self-similar compactly supported exact solution, value 1 at (1, 0)."""
    k = 1.0 / (m + 1.0)
    core = 1.0 - k * (m - 1.0) / (2.0 * m) * x**2 / t**(2.0 * k)
    return t**(-k) * np.maximum(core, 0.0) ** (1.0 / (m - 1.0))


def porous_medium(N: int = 160, m: float = 3.0) -> ProblemDescriptor:
    """u_t = (u^m)_xx with zero boundary data, started from the exact
    self-similar profile at t = 1; eta = (dx^2/2) sum u_i^2 dissipates."""
    if m <= 1.0:
        raise ValueError("porous medium exponent must satisfy m > 1")
    if N < 3:
        raise ValueError("porous medium mesh needs at least 3 cells")
    dx = 12.0 / N
    x = -6.0 + (np.arange(N) + 0.5) * dx
    c2 = 1.0 / (2.0 * dx**2)

    def matrix_rates(t, u):
        a = m * u ** (m - 1.0)
        P = np.zeros((N, N))
        idx = np.arange(N - 1)
        # interior two-sided exchange, a-averaged
        P[idx, idx + 1] = (a[idx] + a[idx + 1]) * c2 * u[idx + 1]
        P[idx + 1, idx] = (a[idx] + a[idx + 1]) * c2 * u[idx]
        # boundary cells produce with the single-neighbor coefficient
        P[0, 1] = a[1] * u[1] * c2
        P[N - 1, N - 2] = a[N - 2] * u[N - 2] * c2
        zero = np.zeros(N)
        return P, P.T.copy(), zero, zero

    prod, dest = _pairwise_callbacks(matrix_rates)
    pairs = [(i, i + 1) for i in range(N - 1)] + [(i + 1, i) for i in range(N - 1)]
    sys = PdrsSystem(dim=N, prod=prod, dest=dest, has_rest=False,
                     conservative_pd=True, sparsity=tuple(pairs),
                     linear_invariants=(np.ones(N),),
                     matrix_rates=matrix_rates)

    eta = EntropyFunctional(
        eval=lambda u: float(0.5 * dx**2 * np.sum(u**2)),
        grad=lambda u: dx**2 * u,
        regime=REGIME_DISSIPATIVE, monotone_nondecreasing=True,
        convex=True, name="pme_energy")

    u0 = np.maximum(barenblatt(1.0, x, m), _PME_FLOOR)
    if m == 3.0:
        method = ("mpssprk2", 0.5, 1.0)
    elif m == 5.0:
        method = ("mprk43i", 0.5, 0.75)
    else:
        method = ("mprk22", 1.0, None)
    return ProblemDescriptor(
        name="pme", sys=sys, entropies=(eta,), u0=u0, tspan=(1.0, 2.0),
        defaults=dict(method=method, relax=MODE_CLAMPED, solver="newton",
                      dt0=dx, adapt="fixed"),
        reference=lambda t: np.maximum(barenblatt(t, x, m), _PME_FLOOR),
        mesh=dict(N=N, dx=dx, domain=(-6.0, 6.0), m=m))


# ---------------------------------------------------------------------------
# Smooth three-species cyclic exchange (convergence-study workhorse)

def cyclic3() -> ProblemDescriptor:
    """Conservative cyclic exchange u1 -> u2 -> u3 -> u1 with bilinear
    rates; eta = -sum ln u_i is conserved and convex."""

    def matrix_rates(t, u):
        P = np.zeros((3, 3))
        P[1, 0] = u[0] * u[1]
        P[2, 1] = u[1] * u[2]
        P[0, 2] = u[2] * u[0]
        zero = np.zeros(3)
        return P, P.T.copy(), zero, zero

    prod, dest = _pairwise_callbacks(matrix_rates)
    sys = PdrsSystem(dim=3, prod=prod, dest=dest, has_rest=False,
                     conservative_pd=True,
                     sparsity=((1, 0), (2, 1), (0, 2)),
                     linear_invariants=(np.ones(3),),
                     matrix_rates=matrix_rates)

    eta = EntropyFunctional(
        eval=lambda u: float(-np.sum(np.log(u))),
        grad=lambda u: -1.0 / u,
        regime=REGIME_CONSERVATIVE, monotone_nondecreasing=False,
        convex=True, name="cyclic3_invariant")

    return ProblemDescriptor(
        name="cyclic3", sys=sys, entropies=(eta,),
        u0=np.array([0.6, 0.7, 1.2]), tspan=(0.0, 1.0),
        defaults=dict(method=("mprk22", 1.0, None), relax=MODE_IMPLICIT,
                      solver="newton", dt0=0.1, adapt="fixed"))


# ---------------------------------------------------------------------------
# Registry

def _euler_factory(**kwargs):
    from .euler import isothermal_euler_fv
    return isothermal_euler_fv(**kwargs)


PROBLEM_FACTORIES = {
    "lotka_volterra": lotka_volterra,
    "stratospheric": stratospheric,
    "advection": advection_fv,
    "euler": _euler_factory,
    "pme": porous_medium,
    "cyclic3": cyclic3,
}


def make_problem(name: str, **kwargs) -> ProblemDescriptor:
    if name not in PROBLEM_FACTORIES:
        raise KeyError(
            f"unknown problem {name!r}; registered: "
            f"{', '.join(sorted(PROBLEM_FACTORIES))}")
    return PROBLEM_FACTORIES[name](**kwargs)
