import math

import numpy as np
import pytest

from ldqueue.errors import BracketError, InfeasibleError
from ldqueue.laws import exponential_service, integrated_tail, uniform_service
from ldqueue.rates import poisson_rate, qbar_from_tilt
from ldqueue.simulate import SurfaceGrid
from ldqueue.solvers import (
    OverflowProblem,
    RuinProblem,
    insurance_surface,
    local_optimality_gap,
    multiplier_equation_G,
    overflow_q,
    overflow_rate_at,
    overflow_surface,
    ruin_rate_at,
    solve_overflow,
    solve_ruin,
    whole_life_payoffs,
)

UNIF = uniform_service(0, 1)
EX1_RATE = 0.5 + 2.0 * (math.log(4.0) - 1.0)


def paper_ruin_problem(x=10.0, u_grid=None):
    h1, h2 = whole_life_payoffs(1.5, 1.0, 0.0)
    return RuinProblem(svc=UNIF, h1=h1, h2=h2, x=x, T=1.0, u_grid=u_grid)


# -- overflow -----------------------------------------------------------------

class TestOverflow:
    def test_paper_instance(self):
        path = solve_overflow(OverflowProblem(svc=UNIF, x=2.0, T=1.0))
        assert path.u_star == 1.0
        assert path.mu == 4.0
        assert path.rate == pytest.approx(EX1_RATE, abs=1e-9)
        assert path.constraint_value == pytest.approx(2.0, abs=1e-12)

    def test_surface_values_and_seam(self):
        p = OverflowProblem(svc=UNIF, x=2.0, T=1.0)
        u, mu = 1.0, 4.0
        assert overflow_q(p, u, mu, 1.0, 0.0) == pytest.approx(2.0, abs=1e-12)
        for y in (0.0, 0.3, 0.8, 1.5):
            assert overflow_q(p, u, mu, 0.0, y) == 0.0
        # continuity across y + t = u
        for t in (0.2, 0.5, 0.8):
            y = u - t
            below = overflow_q(p, u, mu, t, y - 1e-13)
            above = overflow_q(p, u, mu, t, y + 1e-13)
            assert abs(below - above) < 1e-10

    def test_rate_monotone_so_horizon_is_T(self):
        p = OverflowProblem(svc=UNIF, x=2.0, T=1.0)
        us = np.linspace(0.05, 1.0, 40)
        rates = [overflow_rate_at(p, u) for u in us]
        assert np.all(np.diff(rates) <= 1e-12)

    def test_infeasible_when_not_rare(self):
        with pytest.raises(InfeasibleError):
            solve_overflow(OverflowProblem(svc=UNIF, x=0.4, T=1.0))

    def test_kkt_consistency(self):
        path = solve_overflow(OverflowProblem(svc=UNIF, x=2.0, T=1.0))
        assert poisson_rate(path.tilt, UNIF, 1.0) == pytest.approx(
            path.rate, abs=1e-5)

    def test_qbar_closed_form_vs_tilt_quadrature(self):
        path = solve_overflow(OverflowProblem(svc=UNIF, x=2.0, T=1.0))
        for (t, y) in ((0.4, 0.9), (0.7, 0.2), (1.0, 1.0), (0.5, 0.5)):
            assert path.qbar_fn(t, y) == pytest.approx(
                qbar_from_tilt(path.tilt, t, y), abs=1e-7)

    def test_surfaces_monotone(self):
        path = solve_overflow(OverflowProblem(svc=UNIF, x=2.0, T=1.0))
        assert np.all(np.diff(path.surface_q.values, axis=1) <= 1e-10)
        assert np.all(path.surface_q.values >= -1e-12)
        assert np.all(path.surface_qbar.values[0] == 0.0)

    def test_exponential_service_instance(self):
        svc = exponential_service(1.0)
        p = OverflowProblem(svc=svc, x=2.0, T=1.0)
        path = solve_overflow(p)
        A = integrated_tail(svc, path.u_star)
        assert path.mu == pytest.approx(2.0 / A, rel=1e-12)
        assert path.rate == pytest.approx(A + 2.0 * (np.log(2.0 / A) - 1.0),
                                          rel=1e-12)
        assert path.constraint_value == pytest.approx(2.0, abs=1e-10)

    def test_overflow_surface_op(self):
        p = OverflowProblem(svc=UNIF, x=2.0, T=1.0)
        grid = SurfaceGrid(np.linspace(0, 1, 11), np.linspace(0, 1, 11))
        surf = overflow_surface(p, 1.0, 4.0, grid)
        assert surf.value_at(1.0, 0.0) == pytest.approx(2.0, abs=1e-12)
        assert np.all(surf.values[0] == 0.0)


# -- whole-life payoffs -------------------------------------------------------

class TestWholeLifePayoffs:
    def test_zero_discount_values(self):
        h1, h2 = whole_life_payoffs(1.5, 1.0, 0.0)
        assert float(h1(0.2, 0.5)) == pytest.approx(1.2, abs=1e-14)
        assert float(h2(0.0, 1.0)) == pytest.approx(-1.0, abs=1e-14)

    def test_zero_premium(self):
        h1, h2 = whole_life_payoffs(2.0, 0.0, 0.3)
        assert float(h1(0.1, 0.5)) == pytest.approx(2.0 * np.exp(-0.15), abs=1e-14)
        assert float(h2(0.1, 0.9)) == 0.0

    def test_small_discount_matches_limit(self):
        flat = whole_life_payoffs(1.5, 1.0, 0.0)
        tiny = whole_life_payoffs(1.5, 1.0, 1e-9)
        for s, y in ((0.1, 0.6), (0.0, 1.0), (0.3, 0.35)):
            assert float(tiny[0](s, y)) == pytest.approx(float(flat[0](s, y)),
                                                         abs=1e-7)
            assert float(tiny[1](s, y)) == pytest.approx(float(flat[1](s, y)),
                                                         abs=1e-7)


# -- multiplier equation ------------------------------------------------------

class TestMultiplierEquation:
    def test_fluid_value_at_zero(self):
        rp = paper_ruin_problem()
        # analytic mean loss at u = 1: b/2 - p/3
        assert multiplier_equation_G(rp, 1.0, 0.0) == pytest.approx(
            1.5 / 2 - 1.0 / 3, abs=1e-12)

    def test_paper_multiplier_value(self):
        rp = paper_ruin_problem()
        assert multiplier_equation_G(rp, 1.0, 2.251) == pytest.approx(10.0, abs=0.15)

    def test_monotone_in_mu(self):
        rp = paper_ruin_problem()
        mus = np.linspace(0.0, 3.0, 13)
        vals = [multiplier_equation_G(rp, 1.0, m) for m in mus]
        assert np.all(np.diff(vals) > 0)


# -- ruin solver --------------------------------------------------------------

class TestSolveRuin:
    def test_paper_instance(self):
        path = solve_ruin(paper_ruin_problem())
        assert path.u_star == pytest.approx(1.0, abs=1e-9)
        assert abs(path.mu - 2.251) <= 0.01
        assert abs(path.constraint_value - 10.0) < 1e-6

    def test_rate_decreases_with_horizon(self):
        rp = paper_ruin_problem()
        rates = [ruin_rate_at(rp, u)[0] for u in (0.4, 0.6, 0.8, 1.0)]
        assert np.all(np.diff(rates) < 0)

    def test_kkt_consistency(self):
        path = solve_ruin(paper_ruin_problem())
        assert poisson_rate(path.tilt, UNIF, 1.0) == pytest.approx(
            path.rate, abs=1e-5)

    def test_arrival_count_special_case(self):
        ones = lambda s, y: np.ones_like(np.asarray(s, float))
        rp = RuinProblem(svc=UNIF, h1=ones, h2=ones, x=2.0, T=1.0, u_grid=[1.0])
        path = solve_ruin(rp)
        assert path.rate == pytest.approx(2 * math.log(2.0) - 1.0, abs=1e-8)
        assert path.mu == pytest.approx(math.log(2.0), abs=1e-10)
        assert path.constraint_value == pytest.approx(2.0, abs=1e-8)

    def test_departure_count_case_matches_thinned_poisson(self):
        ones = lambda s, y: np.ones_like(np.asarray(s, float))
        zero = lambda s, y: np.zeros_like(np.asarray(s, float))
        rp = RuinProblem(svc=UNIF, h1=ones, h2=zero, x=1.0, T=1.0, u_grid=[1.0])
        path = solve_ruin(rp)
        m = 1.0 - integrated_tail(UNIF, 1.0)  # mean departures by 1
        expected = 1.0 * (math.log(1.0 / m) - 1.0) + m
        assert path.rate == pytest.approx(expected, abs=1e-8)

    def test_infeasible_single_horizon(self):
        with pytest.raises(InfeasibleError):
            solve_ruin(paper_ruin_problem(x=0.2, u_grid=[1.0]))

    def test_bracket_error_bounded_payoffs(self):
        neg = lambda s, y: -np.ones_like(np.asarray(s, float))
        rp = RuinProblem(svc=UNIF, h1=neg, h2=neg, x=2.0, T=1.0, u_grid=[1.0])
        with pytest.raises(BracketError):
            solve_ruin(rp)

    def test_summary_keys(self):
        path = solve_ruin(paper_ruin_problem())
        assert set(path.summary()) == {"mu", "u_star", "rate", "constraint_value"}


# -- insurance surfaces -------------------------------------------------------

class TestInsuranceSurface:
    def setup_method(self):
        self.path = solve_ruin(paper_ruin_problem())
        self.mu = self.path.mu

    def test_zero_at_t0_and_seam_continuity(self):
        grid = SurfaceGrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
        surf = insurance_surface(UNIF, 1.5, 1.0, self.mu, 1.0, grid)
        assert np.all(surf.values[0] == 0.0)
        for t in (0.25, 0.5, 0.75):
            y = 1.0 - t
            below = _closed_q(self.mu, t, y - 1e-13)
            above = _closed_q(self.mu, t, y + 1e-13)
            assert abs(below - above) < 1e-10

    def test_closed_form_vs_numeric_tilt_integral(self):
        got_closed = _closed_q(self.mu, 0.5, 0.25)
        assert got_closed == pytest.approx(self.path.q_fn(0.5, 0.25), abs=1e-6)
        grid = SurfaceGrid(np.linspace(0, 1, 5), np.linspace(0, 1.25, 6))
        closed = insurance_surface(UNIF, 1.5, 1.0, self.mu, 1.0, grid)
        numeric = insurance_surface(UNIF, 1.5, 1.0, self.mu, 1.0, grid,
                                    closed_form="never")
        np.testing.assert_allclose(closed.values, numeric.values, atol=1e-6)

    def test_qbar_matches_tilt_quadrature(self):
        for (t, y) in ((0.3, 0.8), (0.8, 0.3), (1.0, 1.0)):
            assert self.path.qbar_fn(t, y) == pytest.approx(
                qbar_from_tilt(self.path.tilt, t, y), abs=1e-6)


def _closed_q(mu, t, y):
    from ldqueue.solvers import _flat_ruin_q
    return _flat_ruin_q(1.5, 1.0, mu, 1.0, t, y)


# -- horizon sweep machinery ----------------------------------------------------

class TestSweepRefine:
    def test_interior_minimum_refined(self):
        from ldqueue.solvers import _sweep_and_refine
        f = lambda u: (u - 0.37) ** 2
        grid = np.linspace(0.1, 1.0, 10)
        u, fu = _sweep_and_refine(f, grid, 0.1, 1.0)
        assert u == pytest.approx(0.37, abs=1e-4)
        assert fu == pytest.approx(0.0, abs=1e-8)

    def test_constant_ties_break_to_smaller(self):
        from ldqueue.solvers import _sweep_and_refine
        grid = np.linspace(0.1, 1.0, 10)
        u, _ = _sweep_and_refine(lambda u: 1.0, grid, 0.1, 1.0)
        assert u == pytest.approx(0.1, abs=1e-12)

    def test_boundary_minimum_exact(self):
        from ldqueue.solvers import _sweep_and_refine
        grid = np.linspace(0.1, 1.0, 10)
        u, _ = _sweep_and_refine(lambda u: -u, grid, 0.1, 1.0)
        assert u == 1.0


# -- local optimality ---------------------------------------------------------

class TestLocalOptimality:
    def test_overflow_perturbations(self):
        path = solve_overflow(OverflowProblem(svc=UNIF, x=2.0, T=1.0))
        u = path.u_star
        kern = lambda t, r: ((t + r > u) & (t <= u)).astype(float)
        gap = local_optimality_gap(path, UNIF, kern, n_perturbations=20, seed=5)
        assert gap <= 1e-8

    def test_ruin_perturbations(self):
        rp = paper_ruin_problem()
        path = solve_ruin(rp)
        u = path.u_star

        def kern(t, r):
            t, r = np.broadcast_arrays(t, r)
            return np.where(t + r <= u, rp.h1(t, t + r),
                            rp.h2(t, np.full_like(t, u))) * (t <= u)

        gap = local_optimality_gap(path, UNIF, kern, n_perturbations=20, seed=6)
        assert gap <= 1e-8


# -- beyond the paper instances --------------------------------------------------

class TestGeneralInstances:
    def test_overflow_exponential_service_vs_decay_oracle(self):
        """Solver rate for a different service law must match the exact
        Poisson tail oracle's extrapolated decay."""
        from ldqueue.laws import exponential_interarrivals
        from ldqueue.verify import QueueLevelEvent, decay_curve

        svc = exponential_service(1.0)
        path = solve_overflow(OverflowProblem(svc=svc, x=2.0, T=1.0))
        event = QueueLevelEvent(arr=exponential_interarrivals(1.0), svc=svc,
                                u=1.0, level=2.0)
        est = decay_curve(event, [200, 400, 800, 1600, 3200])
        assert abs(est.extrapolated_rate - path.rate) / path.rate < 0.01

    def test_ruin_with_discounting_end_to_end(self):
        h1, h2 = whole_life_payoffs(1.5, 1.0, 0.5)
        rp = RuinProblem(svc=UNIF, h1=h1, h2=h2, x=5.0, T=1.0,
                         u_grid=np.linspace(0.25, 1.0, 16))
        path = solve_ruin(rp, grid_n=8)
        assert path.mu > 0
        assert abs(path.constraint_value - 5.0) < 1e-6
        # evaluator agreement on the discounted tilt
        assert poisson_rate(path.tilt, UNIF, 1.0) == pytest.approx(
            path.rate, abs=1e-5)
        # surfaces still start empty and decrease in y
        assert np.all(path.surface_q.values[0] == 0.0)
        assert np.all(np.diff(path.surface_q.values, axis=1) <= 1e-9)

    def test_ruin_exponential_lifetimes(self):
        svc = exponential_service(1.0)
        h1, h2 = whole_life_payoffs(2.0, 1.0, 0.0)
        rp = RuinProblem(svc=svc, h1=h1, h2=h2, x=6.0, T=1.0,
                         u_grid=np.linspace(0.5, 1.0, 8))
        path = solve_ruin(rp, grid_n=6)
        assert abs(path.constraint_value - 6.0) < 1e-6
        assert poisson_rate(path.tilt, svc, 1.0) == pytest.approx(
            path.rate, abs=1e-4)


class TestOverflowShortHorizon:
    """Closed forms with a critical horizon strictly inside [0, T]:
    beyond u the path continues typically; both surface routes agree."""

    def setup_method(self):
        self.p = OverflowProblem(svc=UNIF, x=2.0, T=1.0)
        self.u = 0.6
        self.mu = 2.0 / integrated_tail(UNIF, self.u)

    def test_continuity_across_horizon(self):
        from ldqueue.solvers import overflow_q
        for y in (0.0, 0.2, 0.7):
            before = overflow_q(self.p, self.u, self.mu, self.u - 1e-12, y)
            after = overflow_q(self.p, self.u, self.mu, self.u + 1e-12, y)
            assert abs(before - after) < 1e-9

    def test_qbar_matches_tilt_quadrature_everywhere(self):
        from ldqueue.rates import qbar_from_tilt
        from ldqueue.solvers import overflow_qbar, overflow_tilt
        tilt = overflow_tilt(self.p, self.u, self.mu)
        for (t, y) in ((0.3, 0.5), (0.5, 0.9), (0.8, 0.4), (1.0, 0.2),
                       (0.9, 0.75), (1.0, 1.3)):
            closed = overflow_qbar(self.p, self.u, self.mu, t, y)
            quad = qbar_from_tilt(tilt, t, y)
            assert closed == pytest.approx(quad, abs=1e-7), (t, y)

    def test_constraint_active_at_u(self):
        from ldqueue.solvers import overflow_q
        assert overflow_q(self.p, self.u, self.mu, self.u, 0.0) == \
            pytest.approx(2.0, abs=1e-12)


def test_insurance_closed_form_short_horizon():
    """Closed form vs numeric tilt integral for a horizon inside [0, T]."""
    grid = SurfaceGrid(np.linspace(0, 1, 6), np.linspace(0, 1, 6))
    closed = insurance_surface(UNIF, 1.5, 1.0, 2.0, 0.7, grid)
    numeric = insurance_surface(UNIF, 1.5, 1.0, 2.0, 0.7, grid,
                                closed_form="never")
    np.testing.assert_allclose(closed.values, numeric.values, atol=1e-6)
