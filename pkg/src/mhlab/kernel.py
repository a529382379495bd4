"""Metropolis-Hastings transition kernel and its forward-map representation.

A kernel pairs a target with an isotropic proposal and an optional restriction
interval: proposals landing outside the restriction are rejected outright, so
the restricted chain targets the renormalized density on that interval.

One transition is the deterministic function ``forward_map(x, delta, u)`` of
the state and two innovations (a proposed increment and a uniform), which is
what lets coupled chains share an identical innovation stream.  ``step``
consumes exactly two uniform draws from its generator: one mapped through the
proposal's inverse CDF to the increment, one for the accept/reject coin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ProposalSpec, TargetSpec


@dataclass(frozen=True)
class IndependenceProposal:
    """Propose fresh draws from the target itself; the accept ratio cancels to 1.

    Useful as the idealized comparison kernel: one step lands the chain exactly
    at stationarity.  Not isotropic, so it carries no envelope constants.
    """

    target: TargetSpec
    epsilon: float = float("inf")
    family: str = "target-iid"
    bounded_by_epsilon: bool = False


@dataclass(frozen=True)
class MHKernel:
    target: TargetSpec
    proposal: ProposalSpec | IndependenceProposal
    restriction: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.restriction is not None:
            a, b = self.target.support
            lo, hi = self.restriction
            if not (a - 1e-12 <= lo < hi <= b + 1e-12):
                raise ValueError(
                    f"restriction [{lo}, {hi}] must be a nondegenerate subinterval "
                    f"of the support [{a}, {b}]"
                )

    @property
    def domain(self) -> tuple[float, float]:
        """Interval the chain lives on: the restriction if set, else the support."""
        return self.restriction if self.restriction is not None else self.target.support

    def in_domain(self, x):
        lo, hi = self.domain
        x = np.asarray(x, dtype=float)
        return (x >= lo) & (x <= hi)

    def restrict(self, interval: tuple[float, float]) -> "MHKernel":
        return MHKernel(self.target, self.proposal, (float(interval[0]), float(interval[1])))


def acceptance(kernel: MHKernel, x: float, y: float) -> float:
    """Accept probability min(1, p(y)/p(x)) for a symmetric proposal.

    Proposals outside the kernel's domain are rejected with probability one
    (boundary points themselves are accepted).  The current state must be
    inside the domain; anything else means the chain state is corrupt.
    """
    if not bool(np.all(kernel.in_domain(x))):
        raise ValueError(f"chain state {x!r} lies outside the kernel domain {kernel.domain}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if isinstance(kernel.proposal, IndependenceProposal):
        out = np.where(kernel.in_domain(y), 1.0, 0.0)
        return float(out) if out.ndim == 0 else out
    logp = kernel.target.log_density
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(np.minimum(logp(y) - logp(x), 0.0))
    out = np.where(kernel.in_domain(y), np.minimum(1.0, ratio), 0.0)
    return float(out) if out.ndim == 0 else out


def forward_map(kernel: MHKernel, x: float, delta: float, u: float) -> float:
    """One transition as a function of state and innovations: move iff u < accept."""
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta, dtype=float)
    moved = np.asarray(u) < acceptance(kernel, x, x + delta)
    out = np.where(moved, x + delta, x)
    return float(out) if out.ndim == 0 else out


def iid_kernel(target: TargetSpec, restriction=None) -> MHKernel:
    """Kernel that resamples the target each step (acceptance identically one)."""
    return MHKernel(target, IndependenceProposal(target), restriction)


def _draw_increment(kernel: MHKernel, x, u):
    if isinstance(kernel.proposal, IndependenceProposal):
        grid, F = kernel.target.cdf_grid()
        return np.interp(np.asarray(u, dtype=float), F, grid) - x
    return kernel.proposal.increments_from_uniform(u)


def step(kernel: MHKernel, x: float, rng: np.random.Generator) -> float:
    """One transition, consuming exactly two uniform draws from ``rng``."""
    u_inc, u_acc = rng.random(2)
    delta = float(_draw_increment(kernel, x, u_inc))
    return forward_map(kernel, x, delta, u_acc)


def run_chain(kernel: MHKernel, x0, n_steps: int, rng: np.random.Generator):
    """Vectorized trajectories from one or many starts.

    Returns (states, accepted): ``states`` has shape (n_steps + 1,) for a
    scalar start or (n_steps + 1, m) for m starts; ``accepted`` counts accepted
    proposals.  Each step consumes one increment row and one uniform row, so a
    scalar run reproduces ``step`` applied with the same generator.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    scalar = np.ndim(x0) == 0
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    logp = kernel.target.log_density
    lo, hi = kernel.domain
    accepted = 0
    lp_x = logp(x)
    for t in range(n_steps):
        raw = rng.random((2, x.size))
        delta = _draw_increment(kernel, x, raw[0])
        y = x + delta
        lp_y = logp(y)
        inside = (y >= lo) & (y <= hi)
        if isinstance(kernel.proposal, IndependenceProposal):
            alpha = np.where(inside, 1.0, 0.0)
        else:
            with np.errstate(over="ignore", invalid="ignore"):
                alpha = np.where(inside, np.exp(np.minimum(lp_y - lp_x, 0.0)), 0.0)
        move = raw[1] < alpha
        x = np.where(move, y, x)
        lp_x = np.where(move, lp_y, lp_x)
        accepted += int(move.sum())
        out[t + 1] = x
    return (out[:, 0] if scalar else out), accepted
