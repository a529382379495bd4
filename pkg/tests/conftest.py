import numpy as np
import pytest

import mhlab


@pytest.fixture(scope="session")
def uniform_kernel():
    target = mhlab.uniform_target(support=(-1.0, 1.0))
    return mhlab.MHKernel(target, mhlab.uniform_ball_proposal(0.25))


@pytest.fixture(scope="session")
def gaussian_kernel():
    target = mhlab.gaussian_target(sigma=0.6, support=(-1.0, 1.0))
    return mhlab.MHKernel(target, mhlab.uniform_ball_proposal(0.25))


@pytest.fixture(scope="session")
def shipped_targets():
    """One representative target per family, on [-1, 1]."""
    return {
        "uniform": mhlab.uniform_target(support=(-1.0, 1.0)),
        "gaussian": mhlab.gaussian_target(sigma=0.6, support=(-1.0, 1.0)),
        "laplace": mhlab.laplace_target(scale=0.8, support=(-1.0, 1.0)),
        "tent": mhlab.tent_target(floor=0.4, support=(-1.0, 1.0)),
    }


@pytest.fixture(scope="session")
def chain_corpus(shipped_targets):
    """Discretized chains across families and step scales."""
    from mhlab import operator_lab as ol
    corpus = {}
    for name, target in shipped_targets.items():
        for eps in (0.25, 0.125):
            kernel = mhlab.MHKernel(target, mhlab.uniform_ball_proposal(eps))
            corpus[f"{name}-eps{eps}"] = ol.build_matrix(kernel, 256)
    return corpus


def two_state_chain(a: float, b: float):
    """Hand-built 2-state chain with its closed-form stationary vector."""
    from mhlab.operator_lab import DiscretizedChain
    P = np.array([[1.0 - a, a], [b, 1.0 - b]])
    pi = np.array([b, a]) / (a + b)
    return DiscretizedChain(np.array([0.0, 1.0]), 1.0, P, pi)


def power_iteration_gap(chain, iters=30000, seed=0):
    """Independent spectral-gap oracle: deflated power iteration.

    Builds the symmetrized operator directly, projects out the known top
    eigenvector, and estimates the dominant remaining modulus from norm
    growth.  Deliberately shares no code with the eigensolver under test.
    """
    s = np.sqrt(chain.pi)
    M = (s[:, None] * chain.P) / s[None, :]
    M = 0.5 * (M + M.T)
    v1 = s / np.linalg.norm(s)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(chain.n)
    x -= (x @ v1) * v1
    norm = np.linalg.norm(x)
    if norm == 0.0:
        return 1.0
    x /= norm
    lam = 0.0
    for _ in range(iters):
        y = M @ x
        y -= (y @ v1) * v1
        lam = np.linalg.norm(y)
        if lam < 1e-280:
            return 1.0
        x = y / lam
    return 1.0 - lam
