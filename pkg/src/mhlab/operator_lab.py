"""Exact finite-state twin of a 1D kernel.

`build_matrix` discretizes a restricted kernel onto a uniform grid of cell
centers as a genuine discrete Metropolis chain: the proposal mass between
cells is the cell-integrated step distribution (a symmetric Toeplitz matrix),
the acceptance factor is the cell-center density ratio, and the diagonal
absorbs all rejection and off-domain mass so rows sum to one exactly.  Because
the acceptance is evaluated between cell representatives, detailed balance
with respect to the cell-center density weights holds to machine precision,
which keeps the similarity transform in `spectral_gap` exactly symmetric.

TV curves, mixing times and the canonical-path congestion bound are then
computed by brute force on the matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .kernel import IndependenceProposal, MHKernel
from .model import simpson_quad

EIGENSOLVE_CAP = 4096  # dense symmetric eigensolves beyond this are out of budget


@dataclass(frozen=True)
class DiscretizedChain:
    """Grid of cell centers, row-stochastic matrix and stationary vector."""

    grid: np.ndarray
    cell_width: float
    P: np.ndarray
    pi: np.ndarray

    @property
    def n(self) -> int:
        return self.grid.size

    def validate(self, tol=1e-10):
        """Raise if stochasticity, stationarity or detailed balance fail."""
        rows = self.P.sum(axis=1)
        if np.abs(rows - 1.0).max() > 1e-12 or self.P.min() < -1e-15:
            raise AssertionError("transition matrix is not row-stochastic")
        if abs(self.pi.sum() - 1.0) > 1e-10 or self.pi.min() < -1e-15:
            raise AssertionError("stationary vector is not a distribution")
        if np.abs(self.pi @ self.P - self.pi).max() > tol:
            raise AssertionError("pi is not stationary for P")
        if detailed_balance_error(self) > tol:
            raise AssertionError("detailed balance violated beyond tolerance")


def detailed_balance_error(chain: DiscretizedChain) -> float:
    """Max-norm of diag(pi) P - P^T diag(pi)."""
    F = chain.pi[:, None] * chain.P
    return float(np.abs(F - F.T).max())


def total_variation(u, v) -> float:
    """Half L1 distance between two probability vectors."""
    return 0.5 * float(np.abs(np.asarray(u, dtype=float) - np.asarray(v, dtype=float)).sum())


def _stationary_from_matrix(P: np.ndarray) -> np.ndarray:
    """Left principal eigenvector, via the singular system with a sum-one row."""
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = scipy.linalg.solve(A, b)
    pi = np.where(np.abs(pi) < 1e-300, 0.0, pi)
    if pi.min() < -1e-9:
        raise ValueError("stationary solve produced negative mass; chain may be reducible")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def build_matrix(kernel: MHKernel, n: int) -> DiscretizedChain:
    """Discretize a bounded 1D kernel onto n uniform cells.

    Off-diagonal entries are cell-to-cell transition probabilities
    (cell-integrated proposal mass times the cell-center acceptance ratio);
    the diagonal is one minus the off-row sum, which lumps all rejection and
    off-domain mass and guarantees exact stochasticity.
    """
    if n < 2:
        raise ValueError("need at least 2 cells")
    lo, hi = kernel.domain
    if not np.isfinite(lo) or not np.isfinite(hi):
        raise ValueError("kernel domain must be bounded for discretization")
    h = (hi - lo) / n
    grid = lo + (np.arange(n) + 0.5) * h

    if isinstance(kernel.proposal, IndependenceProposal):
        dens = kernel.target.density
        masses = np.array([
            simpson_quad(dens, lo + i * h, lo + (i + 1) * h, n=129,
                         breakpoints=kernel.target.breakpoints)
            for i in range(n)
        ])
        masses = masses / masses.sum()
        P = np.tile(masses, (n, 1))
        return DiscretizedChain(grid, h, P, masses.copy())

    logw = np.asarray(kernel.target.log_density(grid), dtype=float)
    if not np.all(np.isfinite(logw)):
        raise ValueError("target log-density not finite at some grid centers")

    # proposal mass between cell centers depends only on the center distance
    k = np.arange(n)
    mass = np.asarray(kernel.proposal.cell_mass(k * h - 0.5 * h, k * h + 0.5 * h), dtype=float)
    if mass.min() < -1e-12:
        raise AssertionError("proposal quadrature produced negative mass")
    mass = np.clip(mass, 0.0, None)
    Q = scipy.linalg.toeplitz(mass)

    with np.errstate(over="ignore"):
        acc = np.exp(np.minimum(logw[None, :] - logw[:, None], 0.0))
    P = Q * acc
    np.fill_diagonal(P, 0.0)
    off = P.sum(axis=1)
    if off.max() > 1.0 + 1e-9:
        raise AssertionError("off-diagonal mass exceeds one; quadrature is inconsistent")
    diag = np.clip(1.0 - off, 0.0, None)
    P[np.diag_indices(n)] = diag

    # Symmetry of Q gives w_i P_ij = Q_ij min(w_i, w_j) = w_j P_ji, so the
    # normalized center densities are the left principal eigenvector.  A dense
    # solve would corrupt entries smaller than machine epsilon relative to the
    # peak, so take the closed form and verify the eigen-equation instead.
    w = np.exp(logw - logw.max())
    pi = w / w.sum()
    residual = float(np.abs(pi @ P - pi).max())
    if residual > 1e-12:
        raise AssertionError(f"stationary residual {residual:g}; build is inconsistent")
    return DiscretizedChain(grid, h, P, pi)


def _assert_irreducible(chain: DiscretizedChain):
    G = csr_matrix(chain.P > 0)
    ncomp, _ = connected_components(G, directed=True, connection="strong")
    if ncomp != 1:
        raise ValueError("eigenvalue 1 has multiplicity > 1 (chain is reducible)")


def symmetrized(chain: DiscretizedChain) -> np.ndarray:
    """Similarity transform diag(pi)^(1/2) P diag(pi)^(-1/2), symmetrized."""
    s = np.sqrt(chain.pi)
    if s.min() <= 0:
        raise ValueError("stationary vector has zero mass; cannot symmetrize")
    S = (s[:, None] * chain.P) / s[None, :]
    asym = float(np.abs(S - S.T).max())
    if asym > 1e-8:
        raise ValueError(f"chain is not reversible (symmetrization residual {asym:g})")
    return 0.5 * (S + S.T)


def spectral_gap(chain: DiscretizedChain) -> float:
    """1 - |second largest eigenvalue|, by dense symmetric eigensolve."""
    if chain.n > EIGENSOLVE_CAP:
        raise ValueError(f"dense eigensolve capped at n = {EIGENSOLVE_CAP}")
    _assert_irreducible(chain)
    lam = scipy.linalg.eigvalsh(symmetrized(chain))
    if lam[-1] < 1.0 - 1e-8:
        raise AssertionError("unit eigenvalue missing; stationary vector inconsistent")
    second = max(abs(lam[0]), abs(lam[-2])) if chain.n > 1 else 0.0
    return float(1.0 - min(second, 1.0))


def tv_curve(chain: DiscretizedChain, start, t_max: int) -> np.ndarray:
    """TV distance to stationarity after t = 0..t_max steps from one start.

    ``start`` is a grid index (point mass) or a full distribution vector.
    """
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    if np.ndim(start) == 0:
        v = np.zeros(chain.n)
        v[int(start)] = 1.0
    else:
        v = np.asarray(start, dtype=float).copy()
    out = np.empty(t_max + 1)
    out[0] = total_variation(v, chain.pi)
    for t in range(1, t_max + 1):
        v = v @ chain.P
        out[t] = total_variation(v, chain.pi)
    return out


def _worst_tv(M: np.ndarray, pi: np.ndarray) -> float:
    return 0.5 * float(np.abs(M - pi[None, :]).sum(axis=1).max())


def mixing_time(chain: DiscretizedChain, threshold: float = 0.25,
                start_set: Optional[Sequence[int]] = None, strict: bool = True,
                t_cap: int = 2**20) -> Optional[int]:
    """Smallest t whose worst-start TV beats the threshold, or None past the cap.

    ``strict`` selects "< threshold" (the default convention); with
    ``strict=False`` the criterion is "<= threshold".  ``start_set=None`` means
    all grid points.  For small start sets the distributions are evolved step
    by step; for the full set, matrix powers are built by repeated squaring and
    the crossing time is located by a binary descent over stored powers.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    if start_set is not None and len(start_set) == 0:
        raise ValueError("empty start set")

    def fails(w: float) -> bool:
        return w >= threshold if strict else w > threshold

    n = chain.n
    pi = chain.pi
    if start_set is not None and len(start_set) <= max(64, n // 8):
        M = np.zeros((len(start_set), n))
        M[np.arange(len(start_set)), np.asarray(start_set, dtype=int)] = 1.0
        t = 0
        while fails(_worst_tv(M, pi)):
            if t >= t_cap:
                return None
            M = M @ chain.P
            t += 1
        return t

    rows = np.arange(n) if start_set is None else np.asarray(start_set, dtype=int)
    eye = np.zeros((rows.size, n))
    eye[np.arange(rows.size), rows] = 1.0
    if not fails(_worst_tv(eye, pi)):
        return 0

    powers = [chain.P]          # powers[j] = P^(2^j)
    t = 1
    while fails(_worst_tv(powers[-1][rows], pi)):
        if 2 * t > t_cap:
            return None
        powers.append(powers[-1] @ powers[-1])
        t *= 2
    k = len(powers) - 1
    if k == 0:
        return 1
    # P^(2^(k-1)) fails, P^(2^k) passes: descend by conditionally appending
    # smaller powers while the criterion still fails.
    cur = powers[k - 1].copy()
    t_lo = 2 ** (k - 1)
    for j in range(k - 2, -1, -1):
        cand = cur @ powers[j]
        if fails(_worst_tv(cand[rows], pi)):
            cur = cand
            t_lo += 2 ** j
    return t_lo + 1


def restricted_start_indices(chain: DiscretizedChain, interval) -> np.ndarray:
    """Grid indices whose centers fall inside the closed interval."""
    lo, hi = interval
    idx = np.flatnonzero((chain.grid >= lo - 1e-12) & (chain.grid <= hi + 1e-12))
    if idx.size == 0:
        raise ValueError(f"no grid points inside [{lo}, {hi}]")
    return idx


def discrete_path_gap_bound(chain: DiscretizedChain) -> float:
    """Congestion lower bound on the spectral gap over monotone index paths.

    Every ordered pair (s, t) is routed through the adjacent-cell edges
    between them; the load on edge (i, i+1) is sum over crossing pairs of
    pi_s pi_t |s - t|, divided by the edge capacity pi_i P[i, i+1].  The gap
    is at least the reciprocal of the worst edge load.
    """
    _assert_irreducible(chain)
    n = chain.n
    pi = chain.pi
    p_edge = np.array([chain.P[i, i + 1] for i in range(n - 1)])
    if np.any(pi[:-1] * p_edge <= 0.0):
        raise ValueError("an adjacent-cell transition has zero probability; "
                         "monotone paths are not available on this chain")
    idx = np.arange(n, dtype=float)
    w0 = np.cumsum(pi)                    # sum_{s<=i} pi_s
    w1 = np.cumsum(pi * idx)              # sum_{s<=i} pi_s s
    tot0 = w0[-1]
    tot1 = w1[-1]
    # load_i = sum_{s<=i} sum_{t>i} pi_s pi_t (t - s)
    load = w0[:-1] * (tot1 - w1[:-1]) - w1[:-1] * (tot0 - w0[:-1])
    B = float(np.max(load / (pi[:-1] * p_edge)))
    return 1.0 / B


# ---------------------------------------------------------------------------
# plain-text export
# ---------------------------------------------------------------------------

def export_text(chain: DiscretizedChain, path):
    """Write n, grid, pi and the row-major matrix to a plain-text file."""
    with open(path, "w") as fh:
        fh.write("# mhlab-chain v1\n")
        fh.write(f"{chain.n} {float(chain.cell_width)!r}\n")
        fh.write(" ".join(repr(float(g)) for g in chain.grid) + "\n")
        fh.write(" ".join(repr(float(p)) for p in chain.pi) + "\n")
        for row in chain.P:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_text(path) -> DiscretizedChain:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("# mhlab-chain"):
            raise ValueError(f"{path} is not a chain export")
        n_str, h_str = fh.readline().split()
        n, h = int(n_str), float(h_str)
        grid = np.array([float(v) for v in fh.readline().split()])
        pi = np.array([float(v) for v in fh.readline().split()])
        P = np.array([[float(v) for v in fh.readline().split()] for _ in range(n)])
    return DiscretizedChain(grid, h, P, pi)
