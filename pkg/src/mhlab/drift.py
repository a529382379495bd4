"""Lyapunov drift machinery.

`apply_kernel_to_V` evaluates (PV)(x) = E[V(X_1) | X_0 = x] by quadrature
against the kernel's one-step law (accepted-move integrand plus the rejection
mass times V(x)).  `fit_drift` then finds constants (gamma, K) with
(PV)(x) <= gamma V(x) + K on an evaluation grid; among the feasible pairs it
picks the one minimizing the very-small-set level R1 = 4K/(1 - gamma), which
is what every downstream bound consumes.  Certificates freeze the fitted
constants together with the sublevel radii R1 and R2 at a given horizon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .kernel import IndependenceProposal, MHKernel
from .model import simpson_quad

GAMMA_SCAN = np.round(np.arange(0.01, 1.00, 0.01), 2)


def apply_kernel_to_V(kernel: MHKernel, V, x: float, n_nodes: int = 2049) -> float:
    """Quadrature evaluation of (PV)(x) for a 1D kernel.

    The integration window is the proposal's effective range (the epsilon ball
    for bounded proposals, 50 epsilon otherwise) clipped to the kernel domain;
    mass outside the domain is rejection and stays at x.  The quadrature is
    split at the target's kinks, the mode, and the ball edges.
    """
    lo, hi = kernel.domain
    if not lo <= x <= hi:
        raise ValueError(f"x={x!r} outside kernel domain [{lo}, {hi}]")

    if isinstance(kernel.proposal, IndependenceProposal):
        dens = kernel.target.density
        mass = simpson_quad(dens, lo, hi, n=n_nodes, breakpoints=kernel.target.breakpoints)
        val = simpson_quad(lambda y: dens(y) * np.asarray(V(y), dtype=float),
                           lo, hi, n=n_nodes, breakpoints=kernel.target.breakpoints)
        return val / mass

    eps = kernel.proposal.epsilon
    reach = eps if kernel.proposal.bounded_by_epsilon else 50.0 * eps
    # integrate in increment coordinates t = y - x so the ball edge falls
    # exactly on a panel endpoint
    tlo, thi = max(lo - x, -reach), min(hi - x, reach)
    logp = kernel.target.log_density
    lp_x = float(logp(np.array([x]))[0])

    def integrand(t):
        y = x + np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            alpha = np.minimum(1.0, np.exp(np.minimum(logp(y) - lp_x, 0.0)))
        return alpha * kernel.proposal.pdf(np.abs(t))

    breaks = tuple(b - x for b in (*kernel.target.breakpoints, kernel.target.mode))
    breaks += (-eps, eps, 0.0)
    move_mass = simpson_quad(integrand, tlo, thi, n=n_nodes, breakpoints=breaks)
    moved_v = simpson_quad(
        lambda t: integrand(t) * np.asarray(V(x + np.asarray(t, dtype=float)), dtype=float),
        tlo, thi, n=n_nodes, breakpoints=breaks)
    vx = float(np.asarray(V(np.array([x])), dtype=float)[0])
    return moved_v + (1.0 - move_mass) * vx


@dataclass(frozen=True)
class DriftFit:
    gamma: float
    K: float
    grid: np.ndarray
    pv: np.ndarray
    v: np.ndarray


def fit_drift(kernel: MHKernel, V, grid=None, gammas=GAMMA_SCAN) -> DriftFit:
    """Fit (gamma, K) with (PV) <= gamma V + K everywhere on the grid.

    For each gamma in the scan, K(gamma) is the smallest feasible offset
    max((PV - gamma V)+); the returned pair minimizes 4K/(1-gamma), with ties
    broken toward smaller gamma.  Always feasible on a compact grid.
    """
    if grid is None:
        lo, hi = kernel.domain
        grid = np.linspace(lo, hi, 257)
    grid = np.asarray(grid, dtype=float)
    v = np.asarray(V(grid), dtype=float)
    if v.min() < -1e-12:
        raise ValueError("Lyapunov function must be nonnegative on the grid")
    pv = np.array([apply_kernel_to_V(kernel, V, float(x)) for x in grid])

    best = None
    for g in gammas:
        K = float(np.clip(pv - g * v, 0.0, None).max())
        level = 4.0 * K / (1.0 - g)
        if best is None or level < best[0] - 1e-15:
            best = (level, float(g), K)
    _, gamma, K = best
    return DriftFit(gamma, K, grid, pv, v)


@dataclass(frozen=True)
class DriftCertificate:
    """Frozen drift constants with the sublevel radii at a fixed horizon.

    R1 = 4K/(1-gamma) and R2 = 8 (4K/(1-gamma)^2 + K tau/(1-gamma)); tau is the
    mixing horizon supplied at finalization.
    """

    V: Callable
    V_name: str
    gamma: float
    K: float
    R1: float
    R2: float
    tau: int
    grid: np.ndarray
    seed: Optional[int] = None

    def to_json(self) -> str:
        return json.dumps({
            "V_name": self.V_name,
            "gamma": self.gamma,
            "K": self.K,
            "R1": self.R1,
            "R2": self.R2,
            "tau": self.tau,
            "grid_n": int(self.grid.size),
            "seed": self.seed,
        })


def finalize_certificate(fit: DriftFit, V, tau: int, V_name: str = "V",
                         seed=None) -> DriftCertificate:
    if tau < 1:
        raise ValueError("certificate horizon tau must be at least 1")
    g, K = fit.gamma, fit.K
    R1 = 4.0 * K / (1.0 - g)
    R2 = 8.0 * (4.0 * K / (1.0 - g) ** 2 + K * tau / (1.0 - g))
    return DriftCertificate(V, V_name, g, K, R1, R2, int(tau), fit.grid, seed)


def verify_certificate(kernel: MHKernel, cert: DriftCertificate,
                       refine: int = 4, rel_tol: float = 1e-6) -> bool:
    """Re-check the drift inequality on a grid ``refine`` times finer."""
    lo, hi = cert.grid.min(), cert.grid.max()
    grid = np.linspace(lo, hi, (cert.grid.size - 1) * refine + 1)
    v = np.asarray(cert.V(grid), dtype=float)
    pv = np.array([apply_kernel_to_V(kernel, cert.V, float(x)) for x in grid])
    bound = cert.gamma * v + cert.K
    scale = np.maximum(np.abs(bound), 1.0)
    return bool(np.all(pv <= bound + rel_tol * scale))


def sublevel_set(V, R: float, grid) -> Optional[tuple[float, float]]:
    """Grid-resolved interval {x : V(x) <= R}; None when empty."""
    if R < 0:
        raise ValueError("sublevel threshold must be nonnegative")
    grid = np.asarray(grid, dtype=float)
    mask = np.asarray(V(grid), dtype=float) <= R
    if not mask.any():
        return None
    idx = np.flatnonzero(mask)
    return float(grid[idx[0]]), float(grid[idx[-1]])


@dataclass(frozen=True)
class ThetaConditionReport:
    passed: bool
    required_level: float
    sublevel: Optional[tuple[float, float]]
    violated_endpoint: Optional[float] = None


def check_theta_condition(theta, cert: DriftCertificate, C: float, eps: float,
                          delta1: float, L: float, p_m: float,
                          grid=None) -> ThetaConditionReport:
    """Is theta large enough to contain the required sublevel set?

    The required level is (8/(1-gamma)) (4K/(1-gamma) + K C eps^-2 delta1^-1
    L^3 p_m); theta passes iff the grid-resolved sublevel set at that level is
    contained in it.
    """
    g, K = cert.gamma, cert.K
    required = (8.0 / (1.0 - g)) * (
        4.0 * K / (1.0 - g) + K * C * eps ** -2 * delta1 ** -1 * L ** 3 * p_m
    )
    grid = cert.grid if grid is None else np.asarray(grid, dtype=float)
    sub = sublevel_set(cert.V, required, grid)
    if sub is None:
        return ThetaConditionReport(True, required, None)
    lo, hi = theta
    if sub[0] < lo - 1e-12:
        return ThetaConditionReport(False, required, sub, sub[0])
    if sub[1] > hi + 1e-12:
        return ThetaConditionReport(False, required, sub, sub[1])
    return ThetaConditionReport(True, required, sub)


# stock Lyapunov functions ---------------------------------------------------

def quadratic_V(mode: float) -> Callable:
    """V(x) = 1 + (x - m)^2; the default certificate for compact experiments."""
    return lambda x: 1.0 + (np.asarray(x, dtype=float) - mode) ** 2


def exponential_V(mode: float, rate: float) -> Callable:
    """V(x) = exp(rate |x - m|); finite (PV) needs sub-exponential proposals."""
    return lambda x: np.exp(rate * np.abs(np.asarray(x, dtype=float) - mode))
