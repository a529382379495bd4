"""Target densities and proposal kernels, plus the structural checks they must pass.

A target is a 1D unnormalized density declared unimodal on a compact support
interval; a proposal is an isotropic step distribution at scale ``epsilon``
carrying certified envelope constants (a floor ``delta1`` on the ball of
radius epsilon and a sub-exponential cap ``c1 * exp(-c2 * r / epsilon)``).
Nothing here is trusted: `check_unimodal`, `check_near_uniform` and
`verify_envelope` re-derive every declared property on evaluation grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

SIMPSON_POINTS = 2**14 + 1      # default composite-Simpson resolution
UNIMODAL_SLACK = 1e-12          # relative slack for floating-point plateaus
ENVELOPE_RADII = 512            # log-spaced radius grid for envelope checks


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def simpson_quad(f, lo: float, hi: float, n: int = SIMPSON_POINTS,
                 breakpoints: Sequence[float] = ()) -> float:
    """Composite Simpson integral of ``f`` on [lo, hi].

    ``breakpoints`` are interior points where the integrand has a kink or
    jump; the interval is split there so every Simpson panel sees a smooth
    integrand.  Node count is distributed across panels proportionally to
    panel width (minimum 33 per panel, always an odd count).
    """
    if hi <= lo:
        return 0.0
    cuts = sorted({lo, hi, *(b for b in breakpoints if lo < b < hi)})
    total = 0.0
    span = hi - lo
    for a, b in zip(cuts[:-1], cuts[1:]):
        m = max(33, int(n * (b - a) / span) | 1)
        x = np.linspace(a, b, m)
        y = np.asarray(f(x), dtype=float)
        h = (b - a) / (m - 1)
        total += (h / 3.0) * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())
    return float(total)


# ---------------------------------------------------------------------------
# targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TargetSpec:
    """A 1D unnormalized density with declared mode, support and radius.

    ``log_density`` must accept numpy arrays.  ``mu_theta`` is the quadrature
    normalizer over the support and ``p_theta_at_mode`` the normalized density
    at the mode; both are computed by the factory functions below.
    ``breakpoints`` lists kink locations (used to split quadratures).
    """

    log_density: Callable[[np.ndarray], np.ndarray]
    mode: float
    support: tuple[float, float]
    L: float
    mu_theta: float
    p_theta_at_mode: float
    family: str = "custom"
    params: dict = field(default_factory=dict)
    breakpoints: tuple[float, ...] = ()

    def density(self, x):
        """Unnormalized density, vectorized; zero is a legal value."""
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(self.log_density(np.asarray(x, dtype=float)))

    def pdf(self, x):
        """Normalized density on the support, zero outside it."""
        x = np.asarray(x, dtype=float)
        a, b = self.support
        inside = (x >= a) & (x <= b)
        return np.where(inside, self.density(x) / self.mu_theta, 0.0)

    def cdf_grid(self, n: int = SIMPSON_POINTS):
        """(x, F(x)) arrays of the normalized CDF on the support."""
        a, b = self.support
        x = np.linspace(a, b, n)
        p = self.density(x)
        h = (b - a) / (n - 1)
        cum = np.concatenate([[0.0], np.cumsum((p[1:] + p[:-1]) * 0.5 * h)])
        return x, cum / cum[-1]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-CDF samples from the normalized target."""
        x, F = self.cdf_grid()
        return np.interp(rng.random(size), F, x)


def _finalize_target(log_density, mode, support, L, family, params, breakpoints):
    a, b = float(support[0]), float(support[1])
    if not a < b:
        raise ValueError(f"degenerate support [{a}, {b}]")
    if L <= 0:
        raise ValueError("L must be positive")
    if not (mode - L <= a + 1e-12 and b <= mode + L + 1e-12):
        raise ValueError(f"support [{a}, {b}] not contained in [{mode - L}, {mode + L}]")

    def dens(x):
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(log_density(np.asarray(x, dtype=float)))

    mu = float(simpson_quad(dens, a, b, breakpoints=breakpoints))
    if not (np.isfinite(mu) and mu > 0):
        raise ValueError("target density is not normalizable on its support")
    p_m = float(dens(np.array([mode]))[0]) / mu
    return TargetSpec(
        log_density=log_density, mode=float(mode), support=(a, b), L=float(L),
        mu_theta=mu, p_theta_at_mode=p_m, family=family, params=dict(params),
        breakpoints=tuple(breakpoints),
    )


def uniform_target(support=(-1.0, 1.0), mode=None, L=None) -> TargetSpec:
    """Flat density on [a, b]."""
    a, b = support
    m = 0.5 * (a + b) if mode is None else mode
    radius = max(b - m, m - a)
    return _finalize_target(
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        m, support, radius if L is None else L, "uniform", {}, (),
    )


def gaussian_target(sigma=1.0, support=(-1.0, 1.0), mode=0.0, L=None) -> TargetSpec:
    """Gaussian with standard deviation sigma, truncated to the support."""
    a, b = support
    radius = max(b - mode, mode - a)
    s2 = 2.0 * sigma * sigma
    return _finalize_target(
        lambda x, m=mode, s2=s2: -((np.asarray(x, dtype=float) - m) ** 2) / s2,
        mode, support, radius if L is None else L, "gaussian", {"sigma": sigma}, (),
    )


def laplace_target(scale=1.0, support=(-1.0, 1.0), mode=0.0, L=None) -> TargetSpec:
    """Double-exponential exp(-|x-m|/scale), truncated to the support."""
    a, b = support
    radius = max(b - mode, mode - a)
    return _finalize_target(
        lambda x, m=mode, s=scale: -np.abs(np.asarray(x, dtype=float) - m) / s,
        mode, support, radius if L is None else L, "laplace", {"scale": scale},
        (mode,),
    )


def tent_target(floor=0.9, support=(-1.0, 1.0), mode=0.0, L=None) -> TargetSpec:
    """Piecewise-linear peak: floor + (1-floor) * (1 - |x-m|/W), W the support radius.

    ``floor`` in (0, 1) keeps the density strictly positive at the edges.
    """
    a, b = support
    if not 0.0 < floor < 1.0:
        raise ValueError("tent floor must lie in (0, 1)")
    W = max(b - mode, mode - a)

    def logp(x, m=mode, W=W, f=floor):
        x = np.asarray(x, dtype=float)
        val = f + (1.0 - f) * (1.0 - np.abs(x - m) / W)
        with np.errstate(divide="ignore"):
            return np.log(np.clip(val, 0.0, None))

    radius = W
    return _finalize_target(logp, mode, support, radius if L is None else L,
                            "tent", {"floor": floor}, (mode,))


TARGET_FAMILIES = {
    "uniform": uniform_target,
    "gaussian": gaussian_target,
    "laplace": laplace_target,
    "tent": tent_target,
}


def target_from_config(cfg: dict) -> TargetSpec:
    """Build a target from a JSON-style dict {family, params, support, mode, L}."""
    family = cfg["family"]
    if family not in TARGET_FAMILIES:
        raise ValueError(f"unknown target family {family!r}; known: {sorted(TARGET_FAMILIES)}")
    kwargs = dict(cfg.get("params", {}))
    if "support" in cfg:
        kwargs["support"] = tuple(cfg["support"])
    if "mode" in cfg:
        kwargs["mode"] = cfg["mode"]
    if "L" in cfg:
        kwargs["L"] = cfg["L"]
    return TARGET_FAMILIES[family](**kwargs)


# ---------------------------------------------------------------------------
# proposals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProposalSpec:
    """Isotropic step distribution at scale epsilon with certified envelope.

    ``pdf`` is the density of the signed 1D increment as a function of radius
    ``r >= 0`` (isotropy: the density depends on |increment| only), ``cdf``
    the CDF of the signed increment, and ``inv_cdf`` maps uniforms to signed
    increments.  ``cdf``/``inv_cdf`` are None for custom families, which then
    support envelope checking but not sampling.
    """

    family: str
    epsilon: float
    delta1: float
    c1: float
    c2: float
    pdf: Callable[[np.ndarray], np.ndarray]
    cdf: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inv_cdf: Optional[Callable[[np.ndarray], np.ndarray]] = None
    d: int = 1
    bounded_by_epsilon: bool = False

    def increments_from_uniform(self, u):
        """Map Uniform(0,1) draws to signed step increments (inverse CDF)."""
        if self.inv_cdf is None:
            raise ValueError(f"proposal family {self.family!r} does not support sampling")
        return self.inv_cdf(np.asarray(u, dtype=float))

    def cell_mass(self, lo, hi):
        """Probability that the signed increment lands in [lo, hi]."""
        if self.cdf is not None:
            return self.cdf(np.asarray(hi, dtype=float)) - self.cdf(np.asarray(lo, dtype=float))
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        out = np.array([
            simpson_quad(lambda t: self.pdf(np.abs(t)), a, b, n=257, breakpoints=(0.0,))
            for a, b in zip(lo, hi)
        ])
        return out if out.size > 1 else float(out[0])


def uniform_ball_proposal(epsilon: float) -> ProposalSpec:
    """Uniform step on [-eps, eps]; floor 1/(2 eps), increments bounded by eps."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    e = float(epsilon)
    height = 1.0 / (2.0 * e)
    return ProposalSpec(
        family="uniform-ball", epsilon=e,
        delta1=height, c1=math.e * height, c2=1.0,
        pdf=lambda r: np.where(np.asarray(r, dtype=float) <= e, height, 0.0),
        cdf=lambda t: np.clip((np.asarray(t, dtype=float) + e) / (2.0 * e), 0.0, 1.0),
        inv_cdf=lambda u: e * (2.0 * np.asarray(u, dtype=float) - 1.0),
        bounded_by_epsilon=True,
    )


def gaussian_proposal(epsilon: float) -> ProposalSpec:
    """Gaussian step with standard deviation eps.

    Floor on the eps-ball is the density at r = eps; the sub-exponential cap
    with c2 = 1 is tight at r = eps where r/eps - r^2/(2 eps^2) peaks.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    e = float(epsilon)
    norm = 1.0 / (e * math.sqrt(2.0 * math.pi))
    return ProposalSpec(
        family="gaussian", epsilon=e,
        delta1=norm * math.exp(-0.5), c1=norm * math.exp(0.5), c2=1.0,
        pdf=lambda r: norm * np.exp(-0.5 * (np.asarray(r, dtype=float) / e) ** 2),
        cdf=lambda t: ndtr(np.asarray(t, dtype=float) / e),
        inv_cdf=lambda u: e * ndtri(np.asarray(u, dtype=float)),
    )


def laplace_proposal(epsilon: float) -> ProposalSpec:
    """Double-exponential step with scale eps; the c2 = 1 cap is exact."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    e = float(epsilon)

    def inv(u):
        u = np.asarray(u, dtype=float)
        s = np.sign(u - 0.5)
        return -e * s * np.log1p(-2.0 * np.abs(u - 0.5))

    return ProposalSpec(
        family="laplace", epsilon=e,
        delta1=math.exp(-1.0) / (2.0 * e), c1=1.0 / (2.0 * e), c2=1.0,
        pdf=lambda r: np.exp(-np.asarray(r, dtype=float) / e) / (2.0 * e),
        cdf=lambda t: np.where(
            np.asarray(t, dtype=float) < 0,
            0.5 * np.exp(np.asarray(t, dtype=float) / e),
            1.0 - 0.5 * np.exp(-np.asarray(t, dtype=float) / e),
        ),
        inv_cdf=inv,
    )


def custom_proposal(pdf, epsilon, delta1, c1, c2) -> ProposalSpec:
    """Wrap a user radius-density with declared envelope constants (no sampling)."""
    return ProposalSpec(family="custom", epsilon=float(epsilon), delta1=float(delta1),
                        c1=float(c1), c2=float(c2), pdf=pdf)


PROPOSAL_FAMILIES = {
    "uniform-ball": uniform_ball_proposal,
    "gaussian": gaussian_proposal,
    "laplace": laplace_proposal,
}


def proposal_from_config(cfg: dict) -> ProposalSpec:
    family = cfg["family"]
    if family not in PROPOSAL_FAMILIES:
        raise ValueError(f"unknown proposal family {family!r}; known: {sorted(PROPOSAL_FAMILIES)}")
    return PROPOSAL_FAMILIES[family](cfg["epsilon"])


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnimodalReport:
    passed: bool
    first_violation: Optional[float] = None
    plateau_halfwidth: float = 0.0


def check_unimodal(target: TargetSpec, grid_size: int = 1001) -> UnimodalReport:
    """Grid check that the density rises to the declared mode and falls after it.

    Relative slack 1e-12 separates genuine violations from floating-point
    plateau noise.  The plateau halfwidth (contiguous region around the mode
    where the density stays within slack of its peak) is reported so callers
    can flag flat tops wider than their proposal scale.
    """
    if grid_size < 3:
        raise ValueError("grid_size must be at least 3")
    a, b = target.support
    m = target.mode
    grid = np.unique(np.concatenate([np.linspace(a, b, grid_size), [m]]))
    p = np.asarray(target.density(grid), dtype=float)
    if not np.all(np.isfinite(p)):
        bad = grid[~np.isfinite(p)][0]
        raise ValueError(f"density is not finite at grid point x={bad!r}")

    scale = np.maximum(np.maximum(np.abs(p[:-1]), np.abs(p[1:])), 1e-300)
    diffs = np.diff(p)
    left = grid[:-1] < m
    right = grid[1:] > m
    bad_left = left & (diffs < -UNIMODAL_SLACK * scale)
    bad_right = right & (diffs > UNIMODAL_SLACK * scale)
    if bad_left.any() or bad_right.any():
        idx = np.flatnonzero(bad_left | bad_right)[0]
        return UnimodalReport(False, float(grid[idx + 1]))

    peak = p.max()
    near_peak = p >= peak * (1.0 - 1e-9)
    plateau = grid[near_peak]
    halfwidth = float(max(plateau.max() - m, m - plateau.min(), 0.0)) if plateau.size else 0.0
    return UnimodalReport(True, None, halfwidth)


@dataclass(frozen=True)
class NearUniformReport:
    passed: bool
    ratio: float


def check_near_uniform(target: TargetSpec, epsilon: float,
                       grid_size: int = 2049) -> NearUniformReport:
    """Flatness near the mode: inf of p(x)/p(m) over the 2-eps ball must exceed 15/16."""
    a, b = target.support
    m = target.mode
    if m - 2.0 * epsilon < a - 1e-12 or m + 2.0 * epsilon > b + 1e-12:
        raise ValueError(
            f"ball of radius {2 * epsilon} around the mode leaves the support "
            f"[{a}, {b}]; shrink epsilon"
        )
    grid = np.linspace(m - 2.0 * epsilon, m + 2.0 * epsilon, grid_size)
    p = np.asarray(target.density(grid), dtype=float)
    p_m = float(target.density(np.array([m]))[0])
    ratio = float(p.min() / p_m)
    return NearUniformReport(ratio > 15.0 / 16.0, ratio)


@dataclass(frozen=True)
class EnvelopeReport:
    passed: bool
    delta1: float
    c1: float
    c2: float
    violations: tuple[float, ...] = ()


def envelope_radius_grid(epsilon: float, n: int = ENVELOPE_RADII) -> np.ndarray:
    """Log-spaced radii on [1e-6 eps, 50 eps], with eps itself included."""
    r = np.geomspace(1e-6 * epsilon, 50.0 * epsilon, n)
    return np.unique(np.concatenate([r, [epsilon]]))


def verify_envelope(proposal: ProposalSpec, n_radii: int = ENVELOPE_RADII) -> EnvelopeReport:
    """Check the declared floor/cap constants of a proposal on a radius grid.

    Returns the tightest constants the grid supports alongside the pass flag
    for the declared ones.  A density whose ratio against the declared
    exponential cap keeps growing out to the largest radii cannot satisfy any
    sub-exponential envelope; that is reported as a failure with the offending
    radii listed.
    """
    eps = proposal.epsilon
    r = envelope_radius_grid(eps, n_radii)
    q = np.asarray(proposal.pdf(r), dtype=float)
    if not np.all(np.isfinite(q)) or np.any(q < 0):
        raise ValueError("proposal density not evaluable on the radius grid")
    if proposal.cdf is not None:
        total = float(proposal.cdf(50.0 * eps) - proposal.cdf(-50.0 * eps))
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"proposal density is not normalized (integral {total!r})")
    else:
        # quadrature on the truncated window: heavy (but genuine) densities may
        # hold a percent-level tail beyond 50 eps, so only reject clear
        # non-densities here and let the envelope check fail them properly
        total = 2.0 * simpson_quad(lambda t: proposal.pdf(t), 0.0, 50.0 * eps,
                                   breakpoints=(eps,))
        if abs(total - 1.0) > 0.02:
            raise ValueError(f"proposal density is not normalized (integral {total!r})")

    inside = r <= eps * (1.0 + 1e-12)
    delta1_tight = float(q[inside].min())
    with np.errstate(over="ignore"):
        growth = q * np.exp(proposal.c2 * r / eps)
    c1_tight = float(np.nanmax(growth[np.isfinite(growth)]))

    floor_bad = inside & (q < proposal.delta1 * (1.0 - 1e-12))
    cap_bad = q > proposal.c1 * np.exp(-proposal.c2 * r / eps) * (1.0 + 1e-12)
    violations = tuple(float(x) for x in r[floor_bad | cap_bad])

    # Sub-exponential sanity: if q * exp(c2 r / eps) is still climbing at the
    # far end of the grid, no finite c1 can ever cap the tail.
    tail = r >= 5.0 * eps
    diverging = False
    if tail.sum() >= 8:
        g = growth[tail]
        diverging = bool(np.isfinite(g).all()
                         and np.all(np.diff(g) >= -1e-15 * g[:-1])
                         and g[-1] > 2.0 * g[0])
    if diverging:
        violations = tuple(sorted(set(violations) | {float(x) for x in r[tail][-8:]}))

    passed = not violations and not diverging
    return EnvelopeReport(passed, delta1_tight, c1_tight, proposal.c2, violations)
