"""Coupled triple chains, hitting-time tails and escape-frequency experiments.

The triple (X, Y, Z) shares one innovation stream per run: X is the
Metropolis chain driven through its forward map, Y a random walk truncated to
the ball of radius L around the mode, Z the free random walk.  Started above
the mode, the coupling keeps m + eps <= X_t <= Y_t until either X enters the
eps-window around the mode or Y falls to it, and Y_t <= Z_t while Z stays
above m - L + eps.  These orderings are exact pathwise facts for
increment-bounded proposals with a truncation radius exceeding the support
radius by at least eps, so both are enforced: violating either is a bug, and
constructions that cannot guarantee them are rejected up front.

All Monte Carlo here pre-draws each run's innovations from its own spawned
Philox stream, so results are independent of batching and scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .drift import DriftCertificate, sublevel_set
from .kernel import MHKernel
from .rng import seed_sequence, split

ORDER_SLACK = 1e-9  # absolute slack for float accumulation in ordering asserts


class CouplingOrderError(AssertionError):
    """A pathwise ordering that must hold was violated: a coupling bug."""


def _require_couplable(kernel: MHKernel):
    prop = kernel.proposal
    if not getattr(prop, "bounded_by_epsilon", False):
        raise ValueError(
            "monotone triple coupling needs increment-bounded proposals "
            "(uniform-ball family); unbounded increments can break the "
            "pathwise ordering"
        )
    lo, hi = kernel.domain
    m = kernel.target.mode
    radius = max(hi - m, m - lo)
    if kernel.target.L < radius + prop.epsilon - 1e-12:
        raise ValueError(
            f"truncation radius L={kernel.target.L} must exceed the support "
            f"radius {radius} by at least epsilon={prop.epsilon}; rebuild the "
            "target with a padded L to keep the coupling monotone"
        )


def _draw_innovations(proposal, seed_seq, T: int):
    """(deltas, us) for one run: one (T, 2) uniform block through the inverse CDF."""
    gen = np.random.Generator(np.random.Philox(seed_seq))
    raw = gen.random((T, 2))
    return proposal.increments_from_uniform(raw[:, 0]), raw[:, 1]


@dataclass(frozen=True)
class TripleTrajectory:
    start: float
    T: int
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    deltas: np.ndarray
    us: np.ndarray
    side: int
    hit_x: Optional[int]
    hit_y: Optional[int]
    seed_entropy: object = None

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,X,Y,Z,delta,u\n")
            for t in range(self.T + 1):
                d = repr(float(self.deltas[t - 1])) if t > 0 else ""
                u = repr(float(self.us[t - 1])) if t > 0 else ""
                fh.write(f"{t},{float(self.X[t])!r},{float(self.Y[t])!r},"
                         f"{float(self.Z[t])!r},{d},{u}\n")


def run_triple(kernel: MHKernel, x: float, T: int, seed) -> TripleTrajectory:
    """One coupled (X, Y, Z) trajectory with ordering checks at every step.

    Starts left of the mode are handled by reflecting the increments, which
    for isotropic proposals leaves their law unchanged.
    """
    _require_couplable(kernel)
    lo, hi = kernel.domain
    if not lo <= x <= hi:
        raise ValueError(f"start {x!r} outside the chain domain [{lo}, {hi}]")
    m = kernel.target.mode
    eps = kernel.proposal.epsilon
    L = kernel.target.L
    side = -1 if x < m else 1

    ss = seed_sequence(seed)
    deltas, us = _draw_innovations(kernel.proposal, ss, T)
    logp = kernel.target.log_density

    ux = uy = uz = side * (x - m)
    X = np.empty(T + 1)
    Y = np.empty(T + 1)
    Z = np.empty(T + 1)
    X[0] = Y[0] = Z[0] = x
    hit_x = 0 if abs(ux) <= eps else None
    hit_y = 0 if uy <= eps else None
    zmin = uz

    lp_cur = float(logp(np.array([x]))[0])
    for t in range(T):
        # increments act in reflected coordinates; left-of-mode starts run the
        # mirror image of the construction, identical in law by isotropy
        d = float(deltas[t])
        u = float(us[t])
        prop = ux + d
        world = m + side * prop
        if lo <= world <= hi:
            lp_prop = float(logp(np.array([world]))[0])
            if u < min(1.0, math.exp(min(lp_prop - lp_cur, 0.0))):
                ux, lp_cur = prop, lp_prop
        # Y: truncated walk; Z: free walk
        if abs(uy + d) <= L:
            uy += d
        uz += d
        zmin = min(zmin, uz)
        X[t + 1] = m + side * ux
        Y[t + 1] = m + side * uy
        Z[t + 1] = m + side * uz
        if hit_x is None and abs(ux) <= eps:
            hit_x = t + 1
        if hit_y is None and uy <= eps:
            hit_y = t + 1
        if hit_x is None and hit_y is None:
            if not (eps < ux <= uy + ORDER_SLACK):
                raise CouplingOrderError(
                    f"X<=Y ordering broken at t={t + 1}: ux={ux!r} uy={uy!r}"
                )
        if zmin >= -L + eps and uy > uz + ORDER_SLACK:
            raise CouplingOrderError(
                f"Y<=Z ordering broken at t={t + 1}: uy={uy!r} uz={uz!r}"
            )
    return TripleTrajectory(x, T, X, Y, Z, deltas, us, side, hit_x, hit_y,
                            seed_entropy=ss.entropy)


def _triple_batch(kernel: MHKernel, x: float, T: int, seeds, check_order=True,
                  stop_when_all_x_hit=False):
    """Vectorized triple runs from a common start; returns hit-time arrays.

    Hit times are T+1 where the window was never reached within the horizon.
    With ``stop_when_all_x_hit`` the loop ends once every run has recorded its
    X hitting time; Y hit times and ordering checks then cover only the steps
    actually taken, so leave it off when those are the point.
    """
    _require_couplable(kernel)
    lo, hi = kernel.domain
    m = kernel.target.mode
    eps = kernel.proposal.epsilon
    L = kernel.target.L
    side = -1 if x < m else 1
    logp = kernel.target.log_density

    B = len(seeds)
    deltas = np.empty((B, T))
    us = np.empty((B, T))
    for i, ss in enumerate(seeds):
        deltas[i], us[i] = _draw_innovations(kernel.proposal, ss, T)

    ux = np.full(B, side * (x - m))
    uy = ux.copy()
    uz = ux.copy()
    hit_x = np.full(B, T + 1, dtype=np.int64)
    hit_y = np.full(B, T + 1, dtype=np.int64)
    if abs(side * (x - m)) <= eps:
        hit_x[:] = 0
    if side * (x - m) <= eps:
        hit_y[:] = 0
    zmin = uz.copy()
    lp_cur = np.asarray(logp(m + side * ux), dtype=float)

    for t in range(T):
        d = deltas[:, t]
        prop = ux + d
        world = m + side * prop
        inside = (world >= lo) & (world <= hi)
        lp_prop = np.asarray(logp(world), dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            alpha = np.where(inside, np.exp(np.minimum(lp_prop - lp_cur, 0.0)), 0.0)
        move = us[:, t] < alpha
        ux = np.where(move, prop, ux)
        lp_cur = np.where(move, lp_prop, lp_cur)
        ymove = np.abs(uy + d) <= L
        uy = np.where(ymove, uy + d, uy)
        uz = uz + d
        zmin = np.minimum(zmin, uz)

        newly_x = (hit_x > T) & (np.abs(ux) <= eps)
        hit_x[newly_x] = t + 1
        newly_y = (hit_y > T) & (uy <= eps)
        hit_y[newly_y] = t + 1

        if check_order:
            pre = (hit_x > T) & (hit_y > T)
            if np.any(pre & ((ux <= eps) | (ux > uy + ORDER_SLACK))):
                raise CouplingOrderError(f"X<=Y ordering broken at t={t + 1}")
            win = zmin >= -L + eps
            if np.any(win & (uy > uz + ORDER_SLACK)):
                raise CouplingOrderError(f"Y<=Z ordering broken at t={t + 1}")
        if stop_when_all_x_hit and np.all(hit_x <= T):
            break
    return hit_x, hit_y


@dataclass(frozen=True)
class HittingTail:
    T0: int
    ks: np.ndarray
    tail: np.ndarray
    decay_rate: float
    r2: float
    n_runs: int
    degenerate: bool
    hit_times: np.ndarray


def hitting_tail(kernel: MHKernel, x: float, n_runs: int, seed,
                 C_hit: float = 2.0, T0: Optional[int] = None, k_max: int = 8,
                 batch_size: int = 2048) -> HittingTail:
    """Empirical tail of the mode-window hitting time on the L^2/eps^2 scale.

    T0 defaults to ceil(C_hit L^2 / eps^2).  The tail curve is
    Pr[hit > k T0] for k = 0..k_max, and a log-linear fit of its nonzero
    entries gives the geometric decay rate per T0 block.
    """
    if n_runs < 1:
        raise ValueError("need at least one run")
    eps = kernel.proposal.epsilon
    L = kernel.target.L
    if T0 is None:
        T0 = math.ceil(C_hit * L * L / (eps * eps))
    horizon = k_max * T0
    seeds = split(seed, n_runs)
    hits = np.empty(n_runs, dtype=np.int64)
    for i in range(0, n_runs, batch_size):
        chunk = seeds[i:i + batch_size]
        hx, _ = _triple_batch(kernel, x, horizon, chunk, stop_when_all_x_hit=True)
        hits[i:i + len(chunk)] = hx

    ks = np.arange(k_max + 1)
    tail = np.array([(hits > k * T0).mean() for k in ks])
    degenerate = bool(tail[1:].max() == 0.0)
    if degenerate:
        return HittingTail(T0, ks, tail, 0.0, float("nan"), n_runs, True, hits)

    nz = tail > 0
    logt = np.log(tail[nz])
    kk = ks[nz].astype(float)
    slope, intercept = np.polyfit(kk, logt, 1)
    fitted = slope * kk + intercept
    ss_res = float(((logt - fitted) ** 2).sum())
    ss_tot = float(((logt - logt.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return HittingTail(T0, ks, tail, float(np.exp(slope)), r2, n_runs, False, hits)


@dataclass(frozen=True)
class EscapeResult:
    frequency: float
    ci_radius: float
    passed: bool
    n_runs: int
    tau: int
    starts: np.ndarray


def _confidence_radius(freq: float, n: int, level: float = 0.99) -> float:
    if n >= 1000:
        z = 2.5758293035489004  # 99% two-sided normal quantile
        return z * math.sqrt(max(freq * (1.0 - freq), 1e-12) / n)
    from scipy.stats import beta
    k = round(freq * n)
    lo = 0.0 if k == 0 else beta.ppf((1 - level) / 2, k, n - k + 1)
    hi = 1.0 if k == n else beta.ppf(1 - (1 - level) / 2, k + 1, n - k)
    return 0.5 * float(hi - lo)


def escape_frequency(kernel: MHKernel, cert: DriftCertificate, theta,
                     tau: int, n_runs: int, seed, n_starts: int = 16,
                     batch_size: int = 1024) -> EscapeResult:
    """Monte Carlo frequency of leaving theta within tau steps from S(R1).

    The certificate must have been finalized with this tau, and theta must
    contain the R2 sublevel set (checked).  Starts are spread across the R1
    sublevel interval; the pass flag compares frequency minus the 99%
    confidence radius against the 1/8 escape bound.
    """
    if tau != cert.tau:
        raise ValueError(f"certificate was finalized at tau={cert.tau}, got {tau}")
    s1 = sublevel_set(cert.V, cert.R1, cert.grid)
    if s1 is None:
        raise ValueError("S(R1) is empty; no admissible starts")
    s2 = sublevel_set(cert.V, cert.R2, cert.grid)
    t_lo, t_hi = theta
    if s2 is not None and (s2[0] < t_lo - 1e-12 or s2[1] > t_hi + 1e-12):
        raise ValueError(f"theta {theta} does not contain the R2 sublevel set {s2}")

    lo, hi = kernel.domain
    starts = np.linspace(max(s1[0], lo), min(s1[1], hi), n_starts)
    seeds = split(seed, n_runs)
    logp = kernel.target.log_density
    escaped = np.zeros(n_runs, dtype=bool)

    for i in range(0, n_runs, batch_size):
        chunk = seeds[i:i + batch_size]
        B = len(chunk)
        deltas = np.empty((B, tau))
        us = np.empty((B, tau))
        for j, ss in enumerate(chunk):
            deltas[j], us[j] = _draw_innovations(kernel.proposal, ss, tau)
        x = starts[(i + np.arange(B)) % n_starts].astype(float).copy()
        lp = np.asarray(logp(x), dtype=float)
        out = np.zeros(B, dtype=bool)
        for t in range(tau):
            y = x + deltas[:, t]
            inside = (y >= lo) & (y <= hi)
            lp_y = np.asarray(logp(y), dtype=float)
            with np.errstate(over="ignore", invalid="ignore"):
                alpha = np.where(inside, np.exp(np.minimum(lp_y - lp, 0.0)), 0.0)
            move = us[:, t] < alpha
            x = np.where(move, y, x)
            lp = np.where(move, lp_y, lp)
            out |= (x < t_lo) | (x > t_hi)
        escaped[i:i + B] = out

    freq = float(escaped.mean())
    radius = _confidence_radius(freq, n_runs)
    return EscapeResult(freq, radius, freq - radius <= 0.125, n_runs, tau, starts)
