"""Closed-form mixing and gap bounds, plus calibration of their free constants.

All formulas are explicit in the model constants (step scale eps, proposal
floor delta1, support radius L, normalized mode density p_m, drift pair
(gamma, K), horizon tau).  The universal prefactors are existential in the
theory, so they enter every calculator as explicit calibration inputs; the
`calibrate_constants` routine makes them concrete from a training sweep (the
smallest constants that validate every training point, doubled for margin).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


def _require_positive(**kwargs):
    for name, v in kwargs.items():
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be positive and finite, got {v!r}")


def mixing_time_bound(C: float, eps: float, delta1: float, L: float, p_m: float) -> float:
    """Mixing-time upper bound C eps^-3 delta1^-1 L^4 p_m."""
    _require_positive(C=C, eps=eps, delta1=delta1, L=L, p_m=p_m)
    return C * eps ** -3 * delta1 ** -1 * L ** 4 * p_m


def _ball_volume_factor(d: int) -> float:
    """pi^(d/2) / Gamma(d/2 + 1): volume of the unit d-ball."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def congestion_gap_bound(d: int, eps: float, delta1: float, L: float, p_m: float) -> float:
    """Spectral-gap lower bound from congestion over linear paths.

    3^-(d+2) eps^3 delta1 L^-(d+3) p_m^-1 Gamma(d/2+1)/pi^(d/2); requires
    eps <= L (paths of eps-steps across a ball of radius L).
    """
    _require_positive(eps=eps, delta1=delta1, L=L, p_m=p_m)
    if eps > L:
        raise ValueError("eps must not exceed L (step size larger than the domain radius)")
    return (3.0 ** -(d + 2) * eps ** 3 * delta1 * L ** -(d + 3)
            / p_m / _ball_volume_factor(d))


def restricted_mixing_bound(C: float, d: int, eps: float, delta1: float,
                            L: float, p_m: float) -> float:
    """Restricted mixing-time bound C log(16) / (gap bound at the same inputs)."""
    _require_positive(C=C, eps=eps, delta1=delta1, L=L, p_m=p_m)
    if eps > L:
        raise ValueError("eps must not exceed L (step size larger than the domain radius)")
    return (C * math.log(16.0) * eps ** -3 * delta1 ** -1 * L ** (d + 3)
            * p_m * _ball_volume_factor(d) * 3.0 ** (d + 2))


def congestion_constant_bound(d: int, eps: float, delta1: float, L: float, p_m: float) -> float:
    """Upper bound on the path-congestion constant; reciprocal of the gap bound."""
    _require_positive(eps=eps, delta1=delta1, L=L, p_m=p_m)
    if eps > L:
        raise ValueError("eps must not exceed L (step size larger than the domain radius)")
    return (_ball_volume_factor(d) * 3.0 ** (2 + d) * eps ** -3 * L ** (d + 3)
            / delta1 * p_m)


def escape_prob_bound(gamma: float, K: float, tau: int) -> float:
    """Probability bound for leaving the R2 sublevel set within tau steps.

    With R1 = 4K/(1-gamma) and R2 = 8 (4K/(1-gamma)^2 + K tau/(1-gamma)), the
    union-plus-Markov argument gives (R1/(1-gamma) + K tau/(1-gamma)) / R2,
    which is 1/8 identically whenever K > 0 (R2 is defined as eight times the
    numerator).  K = 0 means the drift never lifts V above R1: returns 0.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if K < 0 or tau < 1:
        raise ValueError("need K >= 0 and tau >= 1")
    if K == 0.0:
        return 0.0
    numerator = 4.0 * K / (1.0 - gamma) ** 2 + K * tau / (1.0 - gamma)
    return numerator / (8.0 * numerator)


@dataclass(frozen=True)
class HarrisRate:
    alpha_bar: float
    alpha0: float
    alpha_bar_tau_free: float


def _harris_objective(alpha0, gtau):
    first = 1.0 - 5.0 / 8.0 + alpha0
    c = 4.0 * alpha0 / (1.0 - gtau)
    second = (2.0 + c * (gtau + 1.0) / 2.0) / (2.0 + c)
    return np.maximum(first, second), first, second


def harris_rate(gamma: float, tau: int, grid_points: int = 100_000) -> HarrisRate:
    """Geometric contraction rate of the tau-step chain under drift + minorization.

    Minimizes over alpha0 in (0, 5/8) the larger of (3/8 + alpha0) and
    (2 + c (g+1)/2)/(2 + c) with c = 4 alpha0/(1-g), g = gamma^tau.  The first
    term increases and the second decreases in alpha0, so the optimum sits at
    their interior crossing; a coarse grid brackets it and bisection refines.
    Also returns the tau-free value obtained by replacing gamma^tau with gamma
    (an upper bound, since the crossing value decreases in tau).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if tau < 1:
        raise ValueError("tau must be at least 1")

    def minimize(gtau):
        a = np.linspace(0.0, 5.0 / 8.0, grid_points + 2)[1:-1]
        val, first, second = _harris_objective(a, gtau)
        diff = first - second
        idx = int(np.argmin(val))
        # bracket the sign change of first - second around the grid minimum
        lo_i = max(idx - 2, 0)
        hi_i = min(idx + 2, a.size - 1)
        lo, hi = a[lo_i], a[hi_i]
        if diff[lo_i] > 0 or diff[hi_i] < 0:   # crossing outside bracket: widen
            sign = np.flatnonzero(np.diff(np.sign(diff)) != 0)
            if sign.size == 0:
                return float(val[idx]), float(a[idx])
            lo, hi = a[sign[0]], a[sign[0] + 1]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            _, f, s = _harris_objective(np.array([mid]), gtau)
            if f[0] - s[0] < 0:
                lo = mid
            else:
                hi = mid
        mid = 0.5 * (lo + hi)
        v, _, _ = _harris_objective(np.array([mid]), gtau)
        return float(v[0]), float(mid)

    bar, a0 = minimize(gamma ** tau)
    bar_free, _ = minimize(gamma)
    return HarrisRate(bar, a0, bar_free)


def relaxation_bound(alpha_bar: float, tau: int) -> tuple[float, float]:
    """Relaxation-time bound 1/(1 - alpha_bar^(1/tau)) and its ratio to tau."""
    if not 0.0 <= alpha_bar < 1.0:
        raise ValueError("alpha_bar must lie in [0, 1)")
    if tau < 1:
        raise ValueError("tau must be at least 1")
    bound = 1.0 / (1.0 - alpha_bar ** (1.0 / tau))
    return bound, bound / tau


# ---------------------------------------------------------------------------
# reports and calibration
# ---------------------------------------------------------------------------

@dataclass
class BoundReport:
    """Every closed-form bound at one parameter point, with empirical twins."""

    eps: float
    delta1: float
    c1: float
    c2: float
    L: float
    d: int
    p_m: float
    gamma: Optional[float] = None
    K: Optional[float] = None
    tau: Optional[int] = None
    C_mixing: float = 1.0
    C_gap: float = 1.0
    C_hit: float = 2.0
    T: int = 8
    mixing_time_bound: Optional[float] = None
    congestion_gap_lower: Optional[float] = None
    escape_prob: Optional[float] = None
    harris_alpha_bar: Optional[float] = None
    harris_alpha_bar_tau_free: Optional[float] = None
    relaxation_bound: Optional[float] = None
    relaxation_ratio: Optional[float] = None
    exact_gap: Optional[float] = None
    exact_tau: Optional[int] = None
    extras: dict = field(default_factory=dict)

    def evaluate(self) -> "BoundReport":
        """Fill every derivable output from the inputs currently set."""
        self.mixing_time_bound = mixing_time_bound(self.C_mixing, self.eps,
                                                   self.delta1, self.L, self.p_m)
        raw_gap = congestion_gap_bound(self.d, self.eps, self.delta1, self.L, self.p_m)
        self.congestion_gap_lower = raw_gap / self.C_gap
        if self.gamma is not None and self.K is not None and self.tau:
            self.escape_prob = escape_prob_bound(self.gamma, self.K, self.tau)
            hr = harris_rate(self.gamma, self.tau)
            self.harris_alpha_bar = hr.alpha_bar
            self.harris_alpha_bar_tau_free = hr.alpha_bar_tau_free
            self.relaxation_bound, self.relaxation_ratio = relaxation_bound(
                hr.alpha_bar, self.tau)
        return self

    def to_json(self) -> str:
        payload = {k: v for k, v in self.__dict__.items() if k != "extras"}
        payload.update(self.extras)
        return json.dumps(payload, sort_keys=True)


@dataclass(frozen=True)
class CalibrationConstants:
    C_mixing: float
    C_gap: float
    C_hit: float
    T: int

    def to_json(self) -> str:
        return json.dumps({"C_mixing": self.C_mixing, "C_gap": self.C_gap,
                           "C_hit": self.C_hit, "T": self.T})


def calibrate_constants(sweep_results: Sequence, default_C_hit: float = 2.0,
                        default_T: int = 8) -> CalibrationConstants:
    """Smallest constants validating every sweep point, with a 2x safety margin.

    Each result must expose eps, delta1, L, p_m, d, exact_tau and exact_gap
    (attributes or dict keys).  C_mixing scales the mixing bound up until it
    dominates every observed mixing time; C_gap scales the gap bound down
    until it is dominated by every observed gap.  Hitting statistics
    (median_hit, decay_rate in ``extras``) sharpen C_hit and T when present.
    """
    results = list(sweep_results)
    if not results:
        raise ValueError("cannot calibrate from an empty sweep")

    def get(r, key):
        if isinstance(r, dict):
            return r.get(key)
        return getattr(r, key, None) if key != "extras" else getattr(r, "extras", {})

    ratio_mixing = 0.0
    ratio_gap = 0.0
    c3 = 0.0
    T = 0
    for r in results:
        eps, delta1 = get(r, "eps"), get(r, "delta1")
        L, p_m, d = get(r, "L"), get(r, "p_m"), get(r, "d") or 1
        tau, gap = get(r, "exact_tau"), get(r, "exact_gap")
        if tau is None or gap is None:
            raise ValueError("every sweep point needs exact_tau and exact_gap")
        raw_tau = mixing_time_bound(1.0, eps, delta1, L, p_m)
        raw_gap = congestion_gap_bound(d, eps, delta1, L, p_m)
        ratio_mixing = max(ratio_mixing, tau / raw_tau)
        ratio_gap = max(ratio_gap, raw_gap / gap)
        extras = get(r, "extras") or {}
        if extras.get("median_hit"):
            c3 = max(c3, extras["median_hit"] * eps ** 2 / L ** 2)
        if extras.get("decay_rate") and 0.0 < extras["decay_rate"] < 1.0:
            T = max(T, math.ceil(math.log(8.0) / -math.log(extras["decay_rate"])))
    return CalibrationConstants(
        C_mixing=2.0 * ratio_mixing,
        C_gap=2.0 * ratio_gap,
        C_hit=2.0 * c3 if c3 > 0 else default_C_hit,
        T=T if T > 0 else default_T,
    )
