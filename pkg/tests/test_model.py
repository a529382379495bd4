"""Targets, proposals and their structural checks."""

import dataclasses
import math

import numpy as np
import pytest

import mhlab
from mhlab.model import TargetSpec, envelope_radius_grid, simpson_quad


def make_raw_target(log_density, mode, support, breakpoints=()):
    """TargetSpec with dummy normalization, for checks that ignore it."""
    return TargetSpec(log_density=log_density, mode=mode, support=support,
                      L=max(support[1] - mode, mode - support[0]),
                      mu_theta=1.0, p_theta_at_mode=1.0, breakpoints=breakpoints)


class TestCheckUnimodal:
    def test_gaussian_passes(self):
        t = mhlab.gaussian_target(sigma=1.0, support=(-1, 1))
        assert mhlab.check_unimodal(t, 101).passed

    def test_antimode_fails_at_first_interior_point(self):
        def logp(x):
            with np.errstate(divide="ignore"):
                return np.log(np.asarray(x, dtype=float) ** 2)

        t = make_raw_target(logp, mode=0.0, support=(-1.0, 1.0))
        rep = mhlab.check_unimodal(t, 101)
        assert not rep.passed
        grid = np.unique(np.concatenate([np.linspace(-1, 1, 101), [0.0]]))
        assert rep.first_violation == pytest.approx(grid[1])
        assert rep.first_violation < 0

    def test_tent_apex_matches_grid_scan_oracle(self):
        t = mhlab.tent_target(floor=0.2, support=(0.0, 1.0), mode=0.3)
        rep = mhlab.check_unimodal(t, 101)
        # oracle: direct monotonicity scan on the same grid
        grid = np.unique(np.concatenate([np.linspace(0, 1, 101), [0.3]]))
        p = t.density(grid)
        left = grid <= 0.3
        ok = (np.all(np.diff(p[left]) >= -1e-12 * np.abs(p[left][:-1]))
              and np.all(np.diff(p[~left]) <= 1e-12 * np.abs(p[~left][:-1])))
        assert rep.passed == ok
        assert rep.passed

    @pytest.mark.parametrize("grid_size", [51, 501, 5001])
    def test_all_families_pass_at_all_resolutions(self, shipped_targets, grid_size):
        for name, target in shipped_targets.items():
            assert mhlab.check_unimodal(target, grid_size).passed, name

    def test_nonfinite_density_is_diagnosed(self):
        t = make_raw_target(
            lambda x: np.where(np.asarray(x, dtype=float) > 0.5, np.nan, 0.0),
            mode=0.0, support=(-1.0, 1.0))
        with pytest.raises(ValueError, match="not finite"):
            mhlab.check_unimodal(t, 101)

    def test_grid_size_precondition(self):
        t = mhlab.uniform_target()
        with pytest.raises(ValueError):
            mhlab.check_unimodal(t, 2)

    def test_uniform_plateau_is_reported(self):
        t = mhlab.uniform_target(support=(-1, 1))
        rep = mhlab.check_unimodal(t, 101)
        assert rep.passed
        assert rep.plateau_halfwidth == pytest.approx(1.0)


class TestCheckNearUniform:
    def test_uniform_ratio_is_one(self):
        t = mhlab.uniform_target(support=(-1, 1))
        rep = mhlab.check_near_uniform(t, 0.2)
        assert rep.passed and rep.ratio == pytest.approx(1.0)

    def test_standard_gaussian_threshold(self):
        t = mhlab.gaussian_target(sigma=1.0, support=(-1, 1))
        assert mhlab.check_near_uniform(t, 0.17).passed
        assert not mhlab.check_near_uniform(t, 0.19).passed
        # closed form: infimum of exp(-2 eps^2) attained at the ball edge
        rep = mhlab.check_near_uniform(t, 0.17)
        assert rep.ratio == pytest.approx(math.exp(-2 * 0.17 ** 2), abs=1e-12)

    def test_laplace_ratio_closed_form(self):
        t = mhlab.laplace_target(scale=1.0, support=(-1, 1))
        rep = mhlab.check_near_uniform(t, 0.01)
        assert rep.passed
        assert rep.ratio == pytest.approx(math.exp(-0.02), abs=1e-12)

    def test_ball_must_fit_inside_support(self):
        t = mhlab.gaussian_target(sigma=1.0, support=(-1, 1))
        with pytest.raises(ValueError, match="shrink"):
            mhlab.check_near_uniform(t, 0.6)

    @pytest.mark.parametrize("family", ["gaussian", "laplace", "tent"])
    def test_ratio_monotone_nonincreasing_in_eps(self, shipped_targets, family):
        target = shipped_targets[family]
        ratios = [mhlab.check_near_uniform(target, e).ratio
                  for e in np.linspace(0.01, 0.4, 12)]
        assert np.all(np.diff(ratios) <= 1e-12)


class TestVerifyEnvelope:
    def test_uniform_ball_floor_is_exact(self):
        p = mhlab.uniform_ball_proposal(0.2)
        rep = mhlab.verify_envelope(p)
        assert rep.passed
        assert rep.delta1 == pytest.approx(1.0 / 0.4, abs=0)

    def test_gaussian_tight_cap_matches_grid_maximization_oracle(self):
        eps = 0.3
        p = mhlab.gaussian_proposal(eps)
        rep = mhlab.verify_envelope(p)
        assert rep.passed
        r = envelope_radius_grid(eps)
        oracle_c1 = float(np.max(p.pdf(r) * np.exp(p.c2 * r / eps)))
        assert rep.c1 == pytest.approx(oracle_c1, rel=1e-12)
        # analytic floor: density at the ball edge
        assert rep.delta1 == pytest.approx(
            math.exp(-0.5) / (eps * math.sqrt(2 * math.pi)), rel=1e-12)

    def test_laplace_cap_is_exact(self):
        eps = 0.5
        rep = mhlab.verify_envelope(mhlab.laplace_proposal(eps))
        assert rep.passed
        assert rep.c1 == pytest.approx(1.0 / (2 * eps), rel=1e-12)

    def test_heavy_tail_fails_with_growing_violations(self):
        eps = 0.1
        # normalized Cauchy-type step density: no sub-exponential cap exists
        pdf = lambda r: 1.0 / (math.pi * eps * (1.0 + (np.asarray(r, dtype=float) / eps) ** 2))
        p = mhlab.custom_proposal(pdf, eps, delta1=pdf(np.array([eps]))[0],
                                  c1=10.0 / eps, c2=1.0)
        rep = mhlab.verify_envelope(p)
        assert not rep.passed
        assert len(rep.violations) > 0
        assert max(rep.violations) == pytest.approx(5.0, rel=1e-6)  # 50 eps

    def test_certified_constants_reverify(self):
        for make in (mhlab.uniform_ball_proposal, mhlab.gaussian_proposal,
                     mhlab.laplace_proposal):
            p = make(0.25)
            rep = mhlab.verify_envelope(p)
            again = dataclasses.replace(p, delta1=rep.delta1, c1=rep.c1, c2=rep.c2)
            assert mhlab.verify_envelope(again).passed, p.family


class TestNormalization:
    @pytest.mark.parametrize("family", ["uniform", "gaussian", "laplace", "tent"])
    def test_pdf_integrates_to_one_at_grid_1e4(self, shipped_targets, family):
        t = shipped_targets[family]
        total = simpson_quad(t.pdf, *t.support, n=10_001, breakpoints=t.breakpoints)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_proposal_normalization(self):
        for make in (mhlab.uniform_ball_proposal, mhlab.gaussian_proposal,
                     mhlab.laplace_proposal):
            p = make(0.17)
            total = float(p.cdf(50 * p.epsilon) - p.cdf(-50 * p.epsilon))
            assert total == pytest.approx(1.0, abs=1e-8)

    def test_sampling_matches_cdf(self):
        p = mhlab.laplace_proposal(0.3)
        u = np.linspace(0.01, 0.99, 99)
        x = p.increments_from_uniform(u)
        assert np.allclose(p.cdf(x), u, atol=1e-12)


class TestConfigConstruction:
    def test_target_roundtrip(self):
        t = mhlab.target_from_config({"family": "gaussian", "params": {"sigma": 0.5},
                                      "support": [-2, 2], "mode": 0.0, "L": 2.5})
        assert t.family == "gaussian" and t.L == 2.5
        assert t.support == (-2.0, 2.0)

    def test_unknown_families_rejected(self):
        with pytest.raises(ValueError, match="unknown target family"):
            mhlab.target_from_config({"family": "cauchy"})
        with pytest.raises(ValueError, match="unknown proposal family"):
            mhlab.proposal_from_config({"family": "student", "epsilon": 0.1})

    def test_support_outside_radius_rejected(self):
        with pytest.raises(ValueError, match="not contained"):
            mhlab.gaussian_target(sigma=1.0, support=(-2, 2), L=1.0)
