import numpy as np
import pytest

from ldqueue.laws import (
    exponential_interarrivals,
    gamma_interarrivals,
    integrated_tail,
    uniform_service,
)
from ldqueue.psi import PsiEvaluator
from ldqueue.rates import (
    INFINITE,
    IncrementTable,
    TiltDensity,
    cell_masses,
    finite_dim_objective,
    finite_dim_rate,
    finite_dim_rate_detailed,
    increments_from_function,
    increments_from_surface,
    lln_tilt,
    phi_truncate,
    poisson_rate,
    qbar_from_tilt,
    surface_from_tilt,
    truncated_rate,
)
from ldqueue.simulate import EventLog, SurfaceGrid, build_surface

UNIF = uniform_service(0, 1)
POISSON_EV = PsiEvaluator(exponential_interarrivals(1.0))

EX1_RATE = 0.5 + 2.0 * (np.log(4.0) - 1.0)  # frozen closed-form value


def example1_tilt(x=2.0, u=1.0, T=1.0, svc=UNIF, nt=32, nr=32):
    """Most-likely-path tilt for the overflow instance: f below the
    seam t + r = u, mu * f above it."""
    mu = x / integrated_tail(svc, u)
    pdf = svc.pdf

    def fn(t, r):
        t, r = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
        return np.where(t + r <= u, pdf(r), mu * pdf(r))

    return TiltDensity.from_function(
        fn, T, svc.support_bound, nt=nt, nr=nr,
        r_kinks=svc.breakpoints, t_breaks=(u,),
        r_breaks=lambda t: (u - t,))


# -- surface reconstruction ---------------------------------------------------

def test_surface_from_zero_tilt():
    v = TiltDensity.from_grid(np.linspace(0, 1, 5), np.linspace(0, 1, 5),
                              np.zeros((5, 5)))
    surf = surface_from_tilt(v)
    assert np.all(surf.values == 0)


def test_surface_from_lln_tilt_closed_form():
    v = lln_tilt(UNIF, T=1.0)
    # q(t, y) = int_0^t tail(y - s) ds
    assert qbar_from_tilt(v, 1.0, 1.0) == pytest.approx(0.5, abs=1e-9)
    assert qbar_from_tilt(v, 0.5, 0.5) == pytest.approx(0.375, abs=1e-9)
    assert qbar_from_tilt(v, 1.0, 0.0) == pytest.approx(1.0, abs=1e-9)
    grid = SurfaceGrid(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.5, 1.0, 2.0]))
    surf = surface_from_tilt(v, grid)
    assert surf.value_at(1.0, 1.0) == pytest.approx(0.5, abs=1e-8)
    assert surf.value_at(0.5, 0.5) == pytest.approx(0.375, abs=1e-8)
    assert np.all(surf.values[0] == 0)
    assert np.all(np.diff(surf.values, axis=1) <= 1e-12)


def test_surface_from_grid_tilt_matches_callable():
    v = lln_tilt(UNIF, T=1.0, R=1.0)
    v_grid = TiltDensity.from_grid(v.t_nodes, v.r_nodes, v.values)
    grid = SurfaceGrid(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.25, 0.75, 1.5]))
    a = surface_from_tilt(v, grid).values
    b = surface_from_tilt(v_grid, grid).values
    np.testing.assert_allclose(a, b, atol=5e-3)


# -- entropy functional -------------------------------------------------------

def test_poisson_rate_zero_at_mean():
    assert poisson_rate(lln_tilt(UNIF, 1.0), UNIF, 1.0) == pytest.approx(0.0, abs=1e-6)


def test_poisson_rate_constant_tilt():
    c = 4.0
    pdf = UNIF.pdf
    v = TiltDensity.from_function(
        lambda t, r: c * pdf(np.broadcast_arrays(t, r)[1]), 1.0, 1.0,
        r_kinks=UNIF.breakpoints)
    expected = c * (np.log(c) - 1.0) + 1.0
    assert poisson_rate(v, UNIF, 1.0) == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(2.545177, abs=1e-6)


def test_poisson_rate_example1_tilt():
    v = example1_tilt()
    assert poisson_rate(v, UNIF, 1.0) == pytest.approx(EX1_RATE, abs=1e-9)
    assert EX1_RATE == pytest.approx(1.272589, abs=1e-6)


def test_poisson_rate_support_violation():
    v = TiltDensity.from_function(lambda t, r: np.ones(np.broadcast(t, r).shape),
                                  1.0, 2.0)
    assert poisson_rate(v, UNIF, 1.0) == INFINITE


def test_poisson_rate_grid_route():
    v = lln_tilt(UNIF, 1.0, R=1.0)
    v_grid = TiltDensity.from_grid(v.t_nodes, v.r_nodes, v.values)
    assert poisson_rate(v_grid, UNIF, 1.0) == pytest.approx(0.0, abs=1e-6)


def test_poisson_rate_perturbed_tilt_positive():
    pdf = UNIF.pdf

    def fn(t, r):
        t, r = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
        return pdf(r) * (1.0 + 0.3 * np.sin(np.pi * r))

    v = TiltDensity.from_function(fn, 1.0, 1.0, r_kinks=UNIF.breakpoints)
    assert poisson_rate(v, UNIF, 1.0) > 1e-3


# -- increments ---------------------------------------------------------------

def test_increments_zero_surface():
    grid = SurfaceGrid.aligned(1.0, 0.25, 2.0)
    surf = build_surface(EventLog(1.0, 1.0, np.empty(0), np.empty(0)), grid)
    table = increments_from_surface(surf, [0.0, 0.5, 1.0], [0.0, 0.5, np.inf])
    assert np.all(table.deltas == 0)


def test_increments_one_customer_cell():
    grid = SurfaceGrid(np.array([0.0, 0.5, 1.0]),
                       np.array([0.0, 0.6, 1.0, 2.0]))
    log = EventLog(1.0, 1.0, np.array([0.3]), np.array([0.5]))
    surf = build_surface(log, grid)
    table = increments_from_surface(surf, [0.0, 0.5, 1.0], [0.0, 0.6, np.inf])
    # single point mass: arrival 0.3 in (0, 0.5], departure 0.8 in (0.6, inf)
    np.testing.assert_allclose(table.deltas, [[0.0, 1.0], [0.0, 0.0]])


def test_increments_reconstruction_identity():
    v = example1_tilt()
    t_part = np.linspace(0.0, 1.0, 5)
    y_part = np.array([0.0, 0.4, 0.9, 1.3, np.inf])
    table = increments_from_function(lambda t, y: qbar_from_tilt(v, t, y),
                                     t_part, y_part)
    rec = table.reconstruct()
    for i, t in enumerate(t_part):
        for j, y in enumerate(y_part):
            want = 0.0 if np.isinf(y) else qbar_from_tilt(v, t, y)
            assert rec[i, j] == pytest.approx(want, abs=1e-8)


def test_increment_table_validation():
    with pytest.raises(Exception):
        IncrementTable(np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                       np.zeros((2, 2)))


# -- finite-dimensional rate --------------------------------------------------

def test_finite_dim_single_cell_poisson():
    table = IncrementTable(np.array([0.0, 1.0]), np.array([0.0, np.inf]),
                           np.array([[2.0]]))
    val = finite_dim_rate(table, POISSON_EV, UNIF)
    assert val == pytest.approx(2 * np.log(2.0) - 1.0, abs=1e-8)
    assert val == pytest.approx(0.386294, abs=1e-6)


def test_finite_dim_single_cell_vs_numeric_legendre():
    # independent oracle: brute-force the scalar supremum
    for delta, s in ((2.0, 1.0), (0.7, 1.0), (3.0, 2.0)):
        table = IncrementTable(np.array([0.0, s]), np.array([0.0, np.inf]),
                               np.array([[delta]]))
        thetas = np.linspace(-20, 10, 2_000_001)
        brute = np.max(thetas * delta - s * (np.exp(thetas) - 1.0))
        got = finite_dim_rate(table, POISSON_EV, UNIF)
        assert got == pytest.approx(brute, abs=1e-6)
        assert got == pytest.approx(delta * np.log(delta / s) - delta + s, abs=1e-8)


def test_finite_dim_zero_deltas_no_arrival_cost():
    table = IncrementTable(np.array([0.0, 1.0]), np.array([0.0, np.inf]),
                           np.array([[0.0]]))
    # Poisson(1): never seeing an arrival over [0, 1] costs exactly 1
    assert finite_dim_rate(table, POISSON_EV, UNIF) == pytest.approx(1.0, abs=1e-10)


def test_finite_dim_zero_at_mean_increments():
    for law in (exponential_interarrivals(1.0), gamma_interarrivals(2, 2)):
        ev = PsiEvaluator(law)
        rate = 1.0 / law.mean
        t_part = np.array([0.0, 0.4, 1.0])
        y_part = np.array([0.0, 0.5, 1.1, np.inf])
        deltas = rate * cell_masses(t_part, y_part, UNIF)
        table = IncrementTable(t_part, y_part, deltas)
        assert finite_dim_rate(table, ev, UNIF) == pytest.approx(0.0, abs=1e-8)


def test_finite_dim_infinite_on_unreachable_cell():
    # uniform service on [0,1]: a cell at y in (3, 4] for t in (0, 1] is
    # unreachable, so putting mass there certifies an infinite rate
    table = IncrementTable(np.array([0.0, 1.0]),
                           np.array([0.0, 3.0, 4.0, np.inf]),
                           np.array([[0.5, 0.5, 0.0]]))
    assert finite_dim_rate(table, POISSON_EV, UNIF) == INFINITE


def test_finite_dim_infinite_on_negative_delta():
    table = IncrementTable(np.array([0.0, 1.0]), np.array([0.0, 1.0, np.inf]),
                           np.array([[-0.2, 0.5]]))
    assert finite_dim_rate(table, POISSON_EV, UNIF) == INFINITE


def test_finite_dim_gradient_matches_fd():
    rng = np.random.default_rng(31)
    t_part = np.array([0.0, 0.5, 1.0])
    y_part = np.array([0.0, 0.5, 1.2, np.inf])
    deltas = rng.uniform(0.1, 1.0, (2, 3))
    table = IncrementTable(t_part, y_part, deltas)
    for ev in (POISSON_EV, PsiEvaluator(gamma_interarrivals(2, 2))):
        for _ in range(10):
            theta = rng.normal(0.0, 0.7, deltas.shape)
            _, grad = finite_dim_objective(theta, table, ev, UNIF)
            fd = np.empty_like(grad)
            h = 1e-5
            for idx in np.ndindex(*theta.shape):
                tp, tm = theta.copy(), theta.copy()
                tp[idx] += h
                tm[idx] -= h
                fp, _ = finite_dim_objective(tp, table, ev, UNIF)
                fm, _ = finite_dim_objective(tm, table, ev, UNIF)
                fd[idx] = (fp - fm) / (2 * h)
            denom = max(float(np.linalg.norm(fd)), 1e-12)
            assert np.linalg.norm(grad - fd) / denom < 1e-4


def test_finite_dim_refinement_monotone_example1():
    v = example1_tilt()
    qbar = lambda t, y: qbar_from_tilt(v, t, y)
    values = []
    for n in (2, 4, 8, 16):
        t_part = np.linspace(0.0, 1.0, n + 1)
        y_part = np.concatenate([np.linspace(0.0, 1.5, n + 1), [np.inf]])
        table = increments_from_function(qbar, t_part, y_part)
        values.append(finite_dim_rate(table, POISSON_EV, UNIF))
    assert np.all(np.diff(values) >= -1e-6), values
    assert values[-1] <= EX1_RATE + 1e-6
    assert values[-1] > 0.9 * EX1_RATE


def test_finite_dim_seam_aligned_partition_is_exact():
    """With the seam y = u on the partition, every cell has constant
    tilt-to-density ratio, so the partition rate equals the full rate."""
    v = example1_tilt()
    qbar = lambda t, y: qbar_from_tilt(v, t, y)
    t_part = np.linspace(0.0, 1.0, 5)
    y_part = np.concatenate([np.linspace(0.0, 2.0, 9), [np.inf]])
    table = increments_from_function(qbar, t_part, y_part)
    got = finite_dim_rate(table, POISSON_EV, UNIF)
    assert got == pytest.approx(EX1_RATE, abs=1e-7)


def test_finite_dim_detailed_diagnostics():
    table = IncrementTable(np.array([0.0, 1.0]), np.array([0.0, np.inf]),
                           np.array([[2.0]]))
    res = finite_dim_rate_detailed(table, POISSON_EV, UNIF)
    assert res.converged and res.gradient_norm < 1e-8
    d = res.to_json_dict()
    assert set(d) == {"value", "iterations", "gradient_norm", "converged"}


# -- truncation ---------------------------------------------------------------

def test_phi_truncate_identity_and_mass():
    v = lln_tilt(UNIF, 1.0, R=1.0)
    assert phi_truncate(v, 2.0) is v
    half = phi_truncate(v, 0.5)
    assert half.mass() == pytest.approx(0.5, abs=1e-9)
    again = phi_truncate(half, 0.5)
    assert again.mass() == pytest.approx(half.mass(), abs=1e-12)


def test_truncated_rate_matches_closed_form_example1():
    v = example1_tilt()
    ev = POISSON_EV
    vals = []
    for K in (0.25, 0.5, 0.75, 1.0):
        got = truncated_rate(v, ev, UNIF, K, 1.0)
        # by direct integration: K^2 * (full rate) for this instance
        assert got == pytest.approx(EX1_RATE * K * K, abs=1e-8)
        vals.append(got)
    assert np.all(np.diff(vals) > 0)
    assert vals[-1] == pytest.approx(poisson_rate(v, UNIF, 1.0), abs=1e-6)


def test_truncated_rate_below_full_rate():
    v = example1_tilt()
    for K in (0.3, 0.6, 0.9):
        assert truncated_rate(v, POISSON_EV, UNIF, K, 1.0) <= \
            poisson_rate(v, UNIF, 1.0) + 1e-9


def test_truncated_rate_general_renewal_zero_at_mean():
    ev = PsiEvaluator(gamma_interarrivals(2, 2))
    v = lln_tilt(UNIF, 1.0, R=1.0)
    val = truncated_rate(v, ev, UNIF, 0.5, 1.0, partition_cells=6)
    assert val == pytest.approx(0.0, abs=1e-6)


def test_increments_partition_error_off_grid():
    grid = SurfaceGrid.aligned(1.0, 0.25, 2.0)
    surf = build_surface(EventLog(1.0, 1.0, np.empty(0), np.empty(0)), grid)
    with pytest.raises(Exception) as err:
        increments_from_surface(surf, [0.0, 0.3, 1.0], [0.0, 0.5, np.inf])
    assert "partition" in str(err.value).lower() or "grid" in str(err.value).lower()


def test_finite_dim_ceiling_divergence():
    """Enormous mass on a nearly unreachable cell drives the ascent past
    the ceiling, certifying an infinite rate."""
    from ldqueue.laws import exponential_service
    svc = exponential_service(1.0)
    table = IncrementTable(np.array([0.0, 1.0]),
                           np.array([0.0, 50.0, np.inf]),
                           np.array([[0.0, 1e5]]))
    assert finite_dim_rate(table, POISSON_EV, svc) == INFINITE
