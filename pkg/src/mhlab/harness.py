"""Sweep orchestration: end-to-end validation runs, CSV reports and plots.

A sweep walks a grid of (target family, support radius L, step ratio eps/L)
points.  Each point builds the restricted kernel, discretizes it, computes the
exact spectral gap and mixing times, fits a drift certificate, evaluates every
closed-form bound at the supplied calibration constants, and records dominance
flags (bound vs. empirical).  Rows are emitted in config order with a fixed,
versioned column schema so repeated runs with the same seed are byte-identical.

CSV schema v1 columns are listed in ``SWEEP_COLUMNS``; the file carries a
``# mhlab-sweep-csv schema=1`` comment line above the header.  "Not reached"
mixing times are stored as empty cells and make every dominance flag that
depends on them false.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import bounds as bd
from . import drift as dr
from .kernel import MHKernel
from .model import (PROPOSAL_FAMILIES, TARGET_FAMILIES, check_near_uniform,
                    check_unimodal, gaussian_target, laplace_target,
                    tent_target, uniform_target)
from .operator_lab import (EIGENSOLVE_CAP, build_matrix, discrete_path_gap_bound,
                           mixing_time, restricted_start_indices, spectral_gap,
                           tv_curve)
from .rng import split

SCHEMA_LINE = "# mhlab-sweep-csv schema=1"

SWEEP_COLUMNS = [
    "point_id", "target_family", "proposal_family", "L", "eps_over_L", "eps",
    "n", "seed", "delta1", "c1", "c2", "p_m",
    "near_uniform_ratio", "near_uniform_pass",
    "exact_gap", "exact_tau", "exact_tau_restricted", "path_gap_bound",
    "gamma", "K", "escape_prob_bound",
    "harris_alpha_bar", "harris_alpha_bar_tau_free",
    "relaxation_bound", "relaxation_ratio",
    "C_mixing", "C_gap", "mixing_time_bound", "congestion_gap_lower",
    "mixing_bound_dominates", "gap_bound_dominates", "path_bound_valid",
]

DEFAULT_TARGET_PARAMS = {
    "uniform": {},
    "gaussian": {"sigma_over_L": 1.6},
    "laplace": {"scale_over_L": 9.0},
    "tent": {"floor": 0.95},
}


@dataclass
class SweepConfig:
    target_families: Sequence[str]
    eps_over_L: Sequence[float]
    L_values: Sequence[float] = (1.0,)
    proposal_family: str = "uniform-ball"
    n: int = 1024
    seed: Optional[int] = None
    mixing_threshold: float = 0.25
    restricted_threshold: float = 0.125
    t_cap: int = 2**20
    calibration: Optional[bd.CalibrationConstants] = None
    target_params: dict = field(default_factory=dict)
    drift_grid_n: int = 129
    workers: int = 1

    def validate(self):
        if self.seed is None:
            raise ValueError("sweep config must carry a seed")
        if not self.eps_over_L:
            raise ValueError("empty eps/L grid")
        if not self.L_values:
            raise ValueError("empty L grid")
        for r in self.eps_over_L:
            if not 0.0 < r <= 1.0:
                raise ValueError(f"eps/L ratio {r} violates 0 < eps <= L")
        if not 2 <= self.n <= EIGENSOLVE_CAP:
            raise ValueError(f"n={self.n} outside [2, {EIGENSOLVE_CAP}]")
        for fam in self.target_families:
            if fam not in TARGET_FAMILIES:
                raise ValueError(f"unknown target family {fam!r}")
        if self.proposal_family not in PROPOSAL_FAMILIES:
            raise ValueError(f"unknown proposal family {self.proposal_family!r}")
        return self

    @classmethod
    def from_dict(cls, cfg: dict) -> "SweepConfig":
        sweep = cfg.get("sweep", cfg)
        cal = cfg.get("calibration")
        calibration = None
        if isinstance(cal, dict):
            calibration = bd.CalibrationConstants(
                C_mixing=cal.get("C_mixing", 1.0), C_gap=cal.get("C_gap", 1.0),
                C_hit=cal.get("C_hit", 2.0), T=cal.get("T", 8))
        thresholds = cfg.get("thresholds", {})
        return cls(
            target_families=sweep["target_families"],
            eps_over_L=sweep["eps_over_L"],
            L_values=sweep.get("L", [1.0]),
            proposal_family=sweep.get("proposal_family", "uniform-ball"),
            n=sweep.get("n", 1024),
            seed=cfg.get("seed"),
            mixing_threshold=thresholds.get("mixing", 0.25),
            restricted_threshold=thresholds.get("restricted", 0.125),
            t_cap=sweep.get("t_cap", 2**20),
            calibration=calibration,
            target_params=sweep.get("target_params", {}),
            workers=sweep.get("workers", 1),
        ).validate()


def make_sweep_target(family: str, L: float, params: Optional[dict] = None):
    """Target of the given family on the symmetric support [-L, L]."""
    p = dict(DEFAULT_TARGET_PARAMS.get(family, {}))
    p.update(params or {})
    if family == "uniform":
        return uniform_target(support=(-L, L))
    if family == "gaussian":
        return gaussian_target(sigma=p["sigma_over_L"] * L, support=(-L, L))
    if family == "laplace":
        return laplace_target(scale=p["scale_over_L"] * L, support=(-L, L))
    if family == "tent":
        return tent_target(floor=p["floor"], support=(-L, L))
    raise ValueError(f"unknown target family {family!r}")


def _sweep_point(config: SweepConfig, point_id: int, family: str, L: float,
                 ratio: float, seed_child) -> tuple[dict, list]:
    eps = ratio * L
    target = make_sweep_target(family, L, config.target_params.get(family))
    proposal = PROPOSAL_FAMILIES[config.proposal_family](eps)
    kernel = MHKernel(target, proposal)

    uni = check_unimodal(target, 1001)
    if not uni.passed:
        raise AssertionError(f"sweep target {family} failed the unimodality check")
    near = check_near_uniform(target, eps)

    chain = build_matrix(kernel, config.n)
    gap = spectral_gap(chain)
    tau = mixing_time(chain, config.mixing_threshold, strict=True, t_cap=config.t_cap)
    ball_idx = restricted_start_indices(chain, (target.mode - eps, target.mode + eps))
    tau_r = mixing_time(chain, config.restricted_threshold, start_set=ball_idx,
                        strict=False, t_cap=config.t_cap)
    path_bound = discrete_path_gap_bound(chain)

    V = dr.quadratic_V(target.mode)
    fit = dr.fit_drift(kernel, V, np.linspace(*kernel.domain, config.drift_grid_n))

    cal = config.calibration or bd.CalibrationConstants(1.0, 1.0, 2.0, 8)
    report = bd.BoundReport(
        eps=eps, delta1=proposal.delta1, c1=proposal.c1, c2=proposal.c2,
        L=L, d=1, p_m=target.p_theta_at_mode,
        gamma=fit.gamma, K=fit.K, tau=tau if tau is not None else None,
        C_mixing=cal.C_mixing, C_gap=cal.C_gap, C_hit=cal.C_hit, T=cal.T,
        exact_gap=gap, exact_tau=tau,
    ).evaluate()

    row = {
        "point_id": point_id, "target_family": family,
        "proposal_family": config.proposal_family,
        "L": L, "eps_over_L": ratio, "eps": eps, "n": config.n,
        "seed": config.seed,
        "delta1": proposal.delta1, "c1": proposal.c1, "c2": proposal.c2,
        "p_m": target.p_theta_at_mode,
        "near_uniform_ratio": near.ratio, "near_uniform_pass": near.passed,
        "exact_gap": gap, "exact_tau": tau, "exact_tau_restricted": tau_r,
        "path_gap_bound": path_bound,
        "gamma": fit.gamma, "K": fit.K,
        "escape_prob_bound": report.escape_prob,
        "harris_alpha_bar": report.harris_alpha_bar,
        "harris_alpha_bar_tau_free": report.harris_alpha_bar_tau_free,
        "relaxation_bound": report.relaxation_bound,
        "relaxation_ratio": report.relaxation_ratio,
        "C_mixing": cal.C_mixing, "C_gap": cal.C_gap,
        "mixing_time_bound": report.mixing_time_bound,
        "congestion_gap_lower": report.congestion_gap_lower,
        "mixing_bound_dominates": tau is not None and report.mixing_time_bound >= tau,
        "gap_bound_dominates": report.congestion_gap_lower <= gap,
        "path_bound_valid": path_bound <= gap + 1e-12,
    }

    t_max = min(tau if tau is not None else 200, 400)
    curve = tv_curve(chain, 0, t_max)
    stride = max(1, t_max // 100)
    tv_rows = [(point_id, int(t), float(curve[t]))
               for t in range(0, t_max + 1, stride)]
    return row, tv_rows


def run_sweep(config: SweepConfig):
    """All sweep rows plus the long-format TV curves, in config order."""
    config.validate()
    points = list(itertools.product(config.target_families, config.L_values,
                                    config.eps_over_L))
    children = split(config.seed, len(points))
    args = [(config, i, fam, L, ratio, children[i])
            for i, (fam, L, ratio) in enumerate(points)]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda a: _sweep_point(*a), args))
    else:
        results = [_sweep_point(*a) for a in args]
    rows = [r for r, _ in results]
    tv_rows = [tv for _, tvs in results for tv in tvs]
    return rows, tv_rows


# ---------------------------------------------------------------------------
# CSV io (byte-deterministic)
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_sweep_csv(rows, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(SCHEMA_LINE + "\n")
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in SWEEP_COLUMNS) + "\n")


def write_tv_csv(tv_rows, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("# mhlab-tv-csv schema=1\n")
        fh.write("point_id,t,tv\n")
        for pid, t, tv in tv_rows:
            fh.write(f"{pid},{t},{tv!r}\n")


def write_tails_csv(tails, path):
    """``tails`` maps a label to a HittingTail."""
    with open(path, "w", newline="\n") as fh:
        fh.write("# mhlab-tails-csv schema=1\n")
        fh.write("label,k,T0,tail\n")
        for label, ht in tails.items():
            for k, p in zip(ht.ks, ht.tail):
                fh.write(f"{label},{int(k)},{int(ht.T0)},{float(p)!r}\n")


def read_sweep_csv(path):
    import pandas as pd
    frame = pd.read_csv(path, comment="#")
    if frame.empty:
        raise ValueError(f"{path} contains no sweep rows")
    return frame


# ---------------------------------------------------------------------------
# scaling fits
# ---------------------------------------------------------------------------

def fit_scaling(csv_path_or_frame, column: str, regressors: Sequence[str]) -> dict:
    """Log-log OLS of ``column`` against the regressors.

    Returns {regressor: (exponent, stderr)}.  Requires at least 4 distinct
    values per regressor and strictly positive responses.
    """
    import pandas as pd
    frame = (read_sweep_csv(csv_path_or_frame)
             if not isinstance(csv_path_or_frame, pd.DataFrame) else csv_path_or_frame)
    y = frame[column].to_numpy(dtype=float)
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise ValueError(f"column {column!r} must be positive and finite for a log-log fit")
    X = [np.ones_like(y)]
    for reg in regressors:
        x = frame[reg].to_numpy(dtype=float)
        if np.unique(x).size < 4:
            raise ValueError(f"regressor {reg!r} needs at least 4 distinct values")
        if np.any(x <= 0):
            raise ValueError(f"regressor {reg!r} must be positive")
        X.append(np.log(x))
    X = np.column_stack(X)
    logy = np.log(y)
    beta, *_ = np.linalg.lstsq(X, logy, rcond=None)
    resid = logy - X @ beta
    dof = max(len(y) - X.shape[1], 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))
    return {reg: (float(beta[i + 1]), float(se[i + 1]))
            for i, reg in enumerate(regressors)}


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

def _deterministic_matplotlib():
    import matplotlib
    matplotlib.use("Agg", force=False)
    matplotlib.rcParams["svg.hashsalt"] = "mhlab"
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt
    plt.close(fig)


def emit_plots(csv_path, out_dir, tv_csv=None, tails_csv=None) -> list:
    """Bound-vs-empirical panels from a sweep CSV; TV and tail panels when given.

    Writes self-contained SVGs into ``out_dir`` and returns their paths.
    """
    import pandas as pd
    plt = _deterministic_matplotlib()
    frame = read_sweep_csv(csv_path)
    if not os.path.isdir(out_dir):
        raise OSError(f"output directory {out_dir!r} does not exist")
    written = []

    def scatter_with_bound(xcol, ycol, bound_col, fname, xlabel, ylabel):
        fig, ax = plt.subplots(figsize=(5, 4))
        for fam, grp in frame.groupby("target_family", sort=True):
            g = grp.sort_values(xcol)
            ax.plot(g[xcol], g[ycol], "o", label=f"{fam} empirical")
            ax.plot(g[xcol], g[bound_col], "-", label=f"{fam} bound")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = os.path.join(out_dir, fname)
        _save(fig, path)
        written.append(path)

    has_tau = frame["exact_tau"].notna().all()
    if has_tau:
        scatter_with_bound("eps", "exact_tau", "mixing_time_bound", "tau_vs_eps.svg",
                           "step scale epsilon", "mixing time")
        scatter_with_bound("L", "exact_tau", "mixing_time_bound", "tau_vs_L.svg",
                           "support radius L", "mixing time")
    scatter_with_bound("eps", "exact_gap", "congestion_gap_lower", "gap_vs_eps.svg",
                       "step scale epsilon", "spectral gap")

    if tv_csv is not None and os.path.exists(tv_csv):
        tv = pd.read_csv(tv_csv, comment="#")
        fig, ax = plt.subplots(figsize=(5, 4))
        for pid, grp in tv.groupby("point_id", sort=True):
            ax.plot(grp["t"], grp["tv"].clip(lower=1e-16), label=f"point {pid}")
        ax.set_yscale("log")
        ax.set_xlabel("step t")
        ax.set_ylabel("TV distance to stationarity")
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = os.path.join(out_dir, "tv_decay.svg")
        _save(fig, path)
        written.append(path)

    if tails_csv is not None and os.path.exists(tails_csv):
        tails = pd.read_csv(tails_csv, comment="#")
        fig, ax = plt.subplots(figsize=(5, 4))
        for label, grp in tails.groupby("label", sort=True):
            pos = grp[grp["tail"] > 0]
            ax.plot(pos["k"], pos["tail"], "o-", label=str(label))
        ax.set_yscale("log")
        ax.set_xlabel("tail index k (units of T0)")
        ax.set_ylabel("Pr[hitting time > k T0]")
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = os.path.join(out_dir, "hitting_tail.svg")
        _save(fig, path)
        written.append(path)

    return written
