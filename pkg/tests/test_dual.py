"""Worst-case dual solver: spec examples, invariants, and oracle agreement."""

import math

import numpy as np
import pytest

from smoothcert.certify import (
    DualVariant,
    FirstOrderStats,
    InfeasibleStatsError,
    SmoothingConfig,
    _dual_residual,
    directional_radius,
    lower_bound_probability,
    max_gradient_magnitude,
    probability_from_dual,
    solve_dual,
)
from smoothcert.classifiers import RngSpec, mc_worst_case_probability
from smoothcert.numerics import DomainError

from helpers import CDF_1, PHI_1, cdf, interval_radius_oracle


HALFSPACE_STATS = FirstOrderStats(CDF_1, -PHI_1 * (1.0 - 1e-6), 0.0)


class TestSolveDual:
    def test_halfspace_interval_variant(self):
        dual = solve_dual(HALFSPACE_STATS, 0.5)
        assert dual.variant is DualVariant.INTERVAL
        p = probability_from_dual(dual)
        assert p == pytest.approx(float(cdf(0.5)), abs=2e-3)

    def test_interior_residuals_small(self):
        stats = FirstOrderStats(0.9, 0.0, 0.08)
        dual = solve_dual(stats, 0.3)
        assert dual.variant is DualVariant.FULL
        theta = np.array([dual.c0, dual.c1, math.log(-dual.c2)])
        residuals = _dual_residual(theta, stats, 0.3, full=True)
        assert np.max(np.abs(residuals)) <= 1e-9

    def test_infeasible_raises(self):
        with pytest.raises(InfeasibleStatsError):
            solve_dual(FirstOrderStats(0.9, 0.0, 0.5), 0.3)

    def test_preconditions(self):
        with pytest.raises(DomainError):
            solve_dual(FirstOrderStats(0.4, 0.0, 0.05), 0.3)
        with pytest.raises(DomainError):
            solve_dual(FirstOrderStats(0.9, 0.0, 0.05), 0.0)

    def test_coefficient_signs(self):
        dual = solve_dual(FirstOrderStats(0.8, 0.05, 0.1), 0.4)
        assert dual.c2 < 0.0
        reduced = solve_dual(FirstOrderStats(0.8, 0.05, 0.1), 0.4,
                             force_variant=DualVariant.REDUCED_NO_SLOPE)
        assert reduced.variant is DualVariant.REDUCED_NO_SLOPE
        assert reduced.c1 == 0.0 and reduced.c0 > 0.0

    def test_reduced_is_conservative(self):
        # dropping the directional constraint can only lower the bound
        stats = FirstOrderStats(0.85, -0.08, 0.1)
        full = probability_from_dual(solve_dual(stats, 0.8))
        red = probability_from_dual(
            solve_dual(stats, 0.8, force_variant=DualVariant.REDUCED_NO_SLOPE)
        )
        assert red <= full + 1e-9

    def test_warm_start_consistency(self):
        stats = FirstOrderStats(0.85, -0.05, 0.12)
        cold = solve_dual(stats, 1.0)
        warm = solve_dual(stats, 1.05, warm=cold)
        p_cold = probability_from_dual(solve_dual(stats, 1.05))
        assert probability_from_dual(warm) == pytest.approx(p_cold, abs=1e-8)


class TestLowerBoundProbability:
    def test_centering(self):
        for stats in (FirstOrderStats(0.7, -0.1, 0.2),
                      FirstOrderStats(0.95, 0.0, 0.05)):
            assert lower_bound_probability(stats, 0.0) == stats.q

    def test_halfspace_value(self):
        got = lower_bound_probability(HALFSPACE_STATS, 0.5)
        assert got == pytest.approx(0.6914625, abs=2e-3)

    def test_against_mc_oracle(self):
        stats = FirstOrderStats(0.8, 0.05, 0.1)
        dual = solve_dual(stats, 0.4)
        p = probability_from_dual(dual)
        est, se = mc_worst_case_probability(dual, 0.4, 1_000_000, RngSpec(7, 1))
        assert abs(p - est) <= 3.0 * se

    def test_monotone_decay_nonpositive_m1(self):
        for stats in (FirstOrderStats(0.9, -0.05, 0.08),
                      FirstOrderStats(0.75, 0.0, 0.2),
                      FirstOrderStats(0.85, -0.15, 0.05)):
            grid = np.arange(0.0, 4.0 + 1e-9, 0.05)
            values = [lower_bound_probability(stats, float(r)) for r in grid]
            diffs = np.diff(values)
            assert np.all(diffs <= 1e-7), f"violation for {stats}"

    def test_range(self):
        stats = FirstOrderStats(0.9, -0.05, 0.08)
        for r in (0.1, 1.0, 3.0, 8.0):
            p = lower_bound_probability(stats, r)
            assert 0.0 <= p <= stats.q + 1e-9

    def test_zero_gradient_info_is_cohen(self):
        stats = FirstOrderStats(0.9, 0.0, 0.0)
        got = lower_bound_probability(stats, 1.0)
        from helpers import QUANTILE_09
        assert got == pytest.approx(float(cdf(QUANTILE_09 - 1.0)), abs=1e-12)


class TestDirectionalRadius:
    def test_abstain(self):
        cfg = SmoothingConfig(1.0, 4)
        res = directional_radius(FirstOrderStats(0.5, 0.0, 0.0), cfg)
        assert res.radius == 0.0 and res.abstained

    def test_halfspace_radius(self):
        cfg = SmoothingConfig(1.0, 4)
        res = directional_radius(HALFSPACE_STATS, cfg)
        assert res.radius == pytest.approx(1.0, rel=0.02)
        assert not res.capped

    def test_degenerate_equals_zeroth(self):
        cfg = SmoothingConfig(0.5, 4)
        res = directional_radius(FirstOrderStats(0.9, 0.0, 0.0), cfg)
        from helpers import QUANTILE_09
        assert res.radius == pytest.approx(0.5 * QUANTILE_09, abs=1e-12)

    def test_interval_path_matches_oracle(self):
        cfg = SmoothingConfig(1.0, 4)
        q, m1 = 0.9, -0.08
        res = directional_radius(FirstOrderStats(q, m1, 0.0), cfg, tol=1e-8)
        assert res.radius == pytest.approx(interval_radius_oracle(q, m1), abs=1e-6)

    def test_perpendicular_boundary_caps(self):
        # gradient fully perpendicular at exactly maximal magnitude: the
        # worst case is the perpendicular halfspace, unbounded along the ray
        cfg = SmoothingConfig(1.0, 4)
        q = 0.9
        m2 = max_gradient_magnitude(q)
        res = directional_radius(FirstOrderStats(q, 0.0, m2), cfg)
        assert res.capped
        assert res.radius == pytest.approx(10.0, rel=1e-12)
        # slightly inside the boundary the certified radius is finite but
        # still dominates the zeroth-order value
        near = directional_radius(FirstOrderStats(q, 0.0, m2 * (1 - 1e-4)), cfg)
        assert not near.capped
        assert near.radius >= cfg.sigma * 1.2815515655446004 - 1e-9

    def test_toward_gradient_caps(self):
        # traveling into the halfspace interior never loses probability
        cfg = SmoothingConfig(1.0, 4)
        q = 0.9
        big_m = max_gradient_magnitude(q)
        res = directional_radius(FirstOrderStats(q, big_m, 0.0), cfg)
        assert res.capped
        # shrunk off the boundary the interval's far edge is finite
        near = directional_radius(FirstOrderStats(q, big_m * (1 - 1e-6), 0.0), cfg)
        assert not near.capped
        assert near.radius > 5.0

    def test_angular_monotonicity_interior(self):
        cfg = SmoothingConfig(1.0, 4)
        q = 0.85
        mag = 0.75 * max_gradient_magnitude(q)
        radii = []
        for theta in np.linspace(0.0, math.pi, 9):
            stats = FirstOrderStats(q, mag * math.cos(theta),
                                    mag * abs(math.sin(theta)))
            radii.append(directional_radius(stats, cfg).radius)
        assert all(b - a <= 1e-9 for a, b in zip(radii, radii[1:]))

    def test_dominates_zeroth(self):
        cfg = SmoothingConfig(1.0, 4)
        zeroth = cfg.sigma * float(np.asarray(1.0363393754396345))  # Phi^-1(0.85)
        for theta in (0.3, 1.2, 2.4, 3.0):
            mag = 0.6 * max_gradient_magnitude(0.85)
            stats = FirstOrderStats(0.85, mag * math.cos(theta),
                                    mag * abs(math.sin(theta)))
            res = directional_radius(stats, cfg)
            assert res.radius >= zeroth - 1e-9
