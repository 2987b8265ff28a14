"""
Tests for the proximal operators, the primal-dual updates and solve().
"""
import numpy as np
import pytest
from sklearn.base import clone

from fluxemd import solver
from fluxemd.examples import ExampleName, generate, make_spec
from fluxemd.exceptions import (
    ConfigurationError,
    IncompatibleFieldsError,
    InvalidMeasureError,
    NumericalDivergenceError,
    StepSizeError,
)
from fluxemd.lattice import DensityField, DualPotential, FluxField, LatticeGrid, divergence, normalize
from fluxemd.solver import (
    EMDSolver,
    Metric,
    SolverConfig,
    check_step_sizes,
    cost,
    default_step_sizes,
    dual_update,
    eikonal_violation,
    lagrangian_gap,
    operator_norm_bound,
    primal_update_l1,
    primal_update_l2,
    regularized_cost,
    residual_tail_is_monotone,
    shrink,
    shrink2,
    solve,
)


@pytest.mark.parametrize("y, alpha, expected", [(2.0, 0.5, 1.5), (0.3, 0.5, 0.0), (-2.0, 0.5, -1.5), (0.5, 0.5, 0.0)])
def test_shrink_examples(y, alpha, expected):
    assert shrink(y, alpha) == pytest.approx(expected)


@pytest.mark.parametrize(
    "y, alpha, expected",
    [((3.0, 4.0), 2.0, (1.8, 2.4)), ((0.0, 0.0), 1.0, (0.0, 0.0)), ((1.0, 0.0), 2.0, (0.0, 0.0))],
)
def test_shrink2_examples(y, alpha, expected):
    assert shrink2(y, alpha) == pytest.approx(expected)


def test_shrink_satisfies_proximal_optimality(rng):
    ys = rng.normal(scale=3.0, size=1000)
    alphas = rng.uniform(0.0, 2.0, size=1000)
    for y, alpha in zip(ys, alphas):
        x = shrink(y, alpha)
        if x != 0.0:
            assert y - x == pytest.approx(alpha * np.sign(x), abs=1e-12)
        else:
            assert abs(y) <= alpha + 1e-12


def test_shrink2_satisfies_proximal_optimality(rng):
    ys = rng.normal(scale=2.0, size=(1000, 3))
    alphas = rng.uniform(0.0, 3.0, size=1000)
    for y, alpha in zip(ys, alphas):
        x = shrink2(y, alpha)
        norm = np.linalg.norm(x)
        if norm > 0.0:
            assert y - x == pytest.approx(alpha * x / norm, abs=1e-12)
        else:
            assert np.linalg.norm(y) <= alpha + 1e-12


def test_primal_updates_fix_zero(grid40):
    m = FluxField.zeros(grid40)
    phi = DualPotential.zeros(grid40)
    assert np.all(primal_update_l2(m, phi, 0.025).values == 0.0)
    assert np.all(primal_update_l1(m, phi, 0.025, 0.01).values == 0.0)


def test_primal_update_l2_1d(line2):
    m = primal_update_l2(FluxField.zeros(line2), DualPotential(line2, [0.0, 4.0]), 0.5)
    assert m.values.ravel() == pytest.approx([1.5, 0.0])


def test_primal_update_l2_single_face_2d():
    grid = LatticeGrid(shape=(3, 3), spacing=1.0, origin=(0.0, 0.0))
    values = np.zeros((3, 3, 2))
    values[1, 1, 0] = 0.1
    phi = DualPotential(grid, 2.0 * grid.coordinates()[..., 0])
    m = primal_update_l2(FluxField(grid, values), phi, 0.025)
    assert m.values[1, 1] == pytest.approx([0.125, 0.0])


@pytest.mark.parametrize(
    "m_prev, phi, mu, epsilon, expected",
    [
        (0.0, [0.0, 2.0], 0.5, 0.0, 0.5),
        (0.0, [0.0, 2.0], 0.5, 0.01, 0.5 / 1.005),
        (0.1, [0.0, -10.0], 0.025, 0.01, -0.125 / 1.00025),
    ],
)
def test_primal_update_l1_examples(line2, m_prev, phi, mu, epsilon, expected):
    m = primal_update_l1(FluxField(line2, [[m_prev], [0.0]]), DualPotential(line2, phi), mu, epsilon)
    assert m.values[0, 0] == pytest.approx(expected, rel=1e-12)
    assert m.values[1, 0] == 0.0


def test_dual_update_is_stationary_without_residual(line2):
    p = normalize([1.0, 3.0], line2)
    phi = DualPotential(line2, [0.3, -0.2])
    zero = FluxField.zeros(line2)
    assert dual_update(phi, zero, zero, p, p, 0.1, 1.0).values == pytest.approx([0.3, -0.2])


def test_dual_update_examples(line2, transport_pair):
    p0, p1 = transport_pair
    zero = FluxField.zeros(line2)
    phi = DualPotential.zeros(line2)

    assert dual_update(phi, zero, zero, p0, p1, 0.1, 1.0).values == pytest.approx([-0.1, 0.1])

    moved = FluxField(line2, [[1.0], [0.0]])
    assert dual_update(phi, moved, zero, p0, p1, 0.1, 1.0).values == pytest.approx([0.1, -0.1])


def test_cost_examples(line2):
    assert cost(FluxField.zeros(line2), Metric.L1) == 0.0

    single = FluxField(line2, [[1.0], [0.0]])
    assert cost(single, Metric.L1) == pytest.approx(1.0)
    assert cost(single, Metric.L2) == pytest.approx(1.0)

    grid = LatticeGrid(shape=(2, 2), spacing=1.0, origin=(0.0, 0.0))
    values = np.zeros((2, 2, 2))
    values[0, 0] = (3.0, 4.0)
    m = FluxField(grid, values)
    assert cost(m, "l2") == pytest.approx(5.0)
    assert cost(m, "l1") == pytest.approx(7.0)
    assert regularized_cost(m, Metric.L1, 0.01) == pytest.approx(7.0 + 0.005 * 25.0)
    assert regularized_cost(m, Metric.L2, 0.01) == pytest.approx(5.0)


@pytest.mark.parametrize(
    "grid, expected",
    [
        (LatticeGrid.square(40), 800.0),
        (LatticeGrid(shape=(5,), spacing=1.0, origin=(0.0,)), 4.0),
        (LatticeGrid(shape=(4, 4, 4), spacing=0.5, origin=(0.0, 0.0, 0.0)), 48.0),
    ],
)
def test_operator_norm_bound(grid, expected):
    assert operator_norm_bound(grid) == pytest.approx(expected)


def test_default_step_sizes_match_published_parameters(grid40):
    mu, tau = default_step_sizes(grid40)
    assert mu == pytest.approx(0.025)
    assert tau == pytest.approx(0.025)
    assert check_step_sizes(SolverConfig(mu=mu, tau=tau), grid40) == pytest.approx(0.5)


def test_step_size_violation_warns_or_raises(line2):
    with pytest.warns(RuntimeWarning):
        assert check_step_sizes(SolverConfig(mu=1.0, tau=1.0), line2) == pytest.approx(4.0)
    with pytest.raises(StepSizeError):
        check_step_sizes(SolverConfig(mu=1.0, tau=1.0, strict_steps=True), line2)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"mu": 0.0},
        {"tau": -1.0},
        {"theta": 1.5},
        {"epsilon": -0.1},
        {"tol": 0.0},
        {"max_iters": 0},
        {"residual_check_interval": 0},
        {"n_jobs": 0},
        {"gap_tol": 0.0},
        {"metric": "l3"},
        {"metric": Metric.L1, "epsilon": 0.0},
    ],
)
def test_invalid_configs_are_rejected(kwargs):
    with pytest.raises(ConfigurationError):
        SolverConfig(**kwargs)


def test_zero_epsilon_needs_opt_in():
    config = SolverConfig(metric=Metric.L1, epsilon=0.0, allow_nonunique=True)
    assert config.regularization == 0.0
    assert SolverConfig(metric=Metric.L2, epsilon=0.3).regularization == 0.0


def test_solve_single_edge_transport(line2, transport_pair):
    p0, p1 = transport_pair
    mu, tau = default_step_sizes(line2)
    config = SolverConfig(metric=Metric.L1, mu=mu, tau=tau, epsilon=0.0, allow_nonunique=True, tol=1e-10)
    report = solve(p0, p1, config)
    assert report.converged
    assert report.distance == pytest.approx(1.0, abs=1e-8)
    assert report.flux.values.ravel() == pytest.approx([1.0, 0.0], abs=1e-8)
    assert report.final_residual <= 1e-10


@pytest.mark.parametrize("metric", [Metric.L1, Metric.L2])
def test_solve_identity(metric):
    p, _ = generate(make_spec(ExampleName.CROSS_TO_RING, n=12))
    mu, tau = default_step_sizes(p.grid)
    report = solve(p, p, SolverConfig(metric=metric, mu=mu, tau=tau))
    assert report.converged
    assert report.iterations == 1
    assert report.distance == 0.0
    assert np.all(report.flux.values == 0.0)
    assert report.residual_history == ((1, 0.0),)


def test_solve_rejects_unnormalized_input(line2, transport_pair):
    _, p1 = transport_pair
    with pytest.raises(InvalidMeasureError):
        solve(DensityField(line2, [0.5, 0.2]), p1)


def test_solve_rejects_grid_mismatch(transport_pair, grid40):
    p0, _ = transport_pair
    with pytest.raises(IncompatibleFieldsError):
        solve(p0, normalize(np.ones(grid40.shape), grid40))


def test_solve_strict_steps(transport_pair):
    p0, p1 = transport_pair
    with pytest.raises(StepSizeError):
        solve(p0, p1, SolverConfig(mu=1.0, tau=1.0, strict_steps=True))


def test_solve_reports_non_finite_iterates(monkeypatch, transport_pair):
    p0, p1 = transport_pair
    monkeypatch.setattr(solver, "_primal_kernel", lambda shifted, *args: np.full_like(shifted, np.nan))
    with pytest.raises(NumericalDivergenceError) as excinfo:
        solve(p0, p1, SolverConfig(mu=0.1, tau=0.1))
    assert excinfo.value.iteration == 1


def test_residual_checks_follow_interval(transport_pair):
    p0, p1 = transport_pair
    report = solve(p0, p1, SolverConfig(mu=0.01, tau=0.01, max_iters=23, residual_check_interval=5))
    assert not report.converged
    assert report.iterations == 23
    assert [k for k, _ in report.residual_history] == [5, 10, 15, 20, 23]


def test_threaded_primal_step_is_bit_identical(monkeypatch):
    monkeypatch.setattr(solver, "PARALLEL_MIN_FACES", 0)
    p0, p1 = generate(make_spec(ExampleName.DIRAC_SPLIT4, n=12))
    mu, tau = default_step_sizes(p0.grid)
    base = dict(metric=Metric.L2, mu=mu, tau=tau, max_iters=150)
    serial = solve(p0, p1, SolverConfig(**base))
    threaded = solve(p0, p1, SolverConfig(**base, n_jobs=3))
    assert np.array_equal(serial.flux.values, threaded.flux.values)
    assert np.array_equal(serial.potential.values, threaded.potential.values)


def test_small_grids_skip_the_thread_pool(monkeypatch, transport_pair):
    def no_pool(*args, **kwargs):
        raise AssertionError("thread pool started below the face threshold")

    monkeypatch.setattr(solver, "Parallel", no_pool)
    p0, p1 = transport_pair
    report = solve(p0, p1, SolverConfig(mu=0.1, tau=0.1, max_iters=10, n_jobs=4))
    assert report.iterations == 10


def test_threads_do_not_slow_down_an_80_grid():
    p0, p1 = generate(make_spec(ExampleName.DIRAC_SPLIT4, n=80))
    mu, tau = default_step_sizes(p0.grid)
    base = dict(metric=Metric.L2, mu=mu, tau=tau, tol=1e-12, max_iters=300)
    serial = solve(p0, p1, SolverConfig(**base))
    threaded = solve(p0, p1, SolverConfig(**base, n_jobs=4))
    assert threaded.iterations == serial.iterations == 300
    assert threaded.wall_time <= 3.0 * serial.wall_time


def test_lagrangian_gap():
    assert lagrangian_gap(np.array([0.0, 1.0]), np.array([1.0, -1.0])) == pytest.approx(1.0)
    assert lagrangian_gap(np.array([0.4, 0.4]), np.array([0.5, -0.5])) == 0.0


def test_gap_tolerance_extends_the_solve():
    p0, p1 = generate(make_spec(ExampleName.DIRAC_SPLIT4, n=20))
    mu, tau = default_step_sizes(p0.grid)
    base = dict(metric=Metric.L1, mu=mu, tau=tau, epsilon=0.01, tol=1e-6)
    plain = solve(p0, p1, SolverConfig(**base))
    gapped = solve(p0, p1, SolverConfig(**base, gap_tol=1e-7))

    assert plain.converged and gapped.converged
    assert gapped.iterations >= plain.iterations
    constraint = divergence(gapped.flux) + (p1.mass - p0.mass)
    assert lagrangian_gap(gapped.potential.values, constraint) <= 1e-7 * gapped.regularized_distance
    assert gapped.final_residual <= 1e-6


@pytest.mark.parametrize("metric, kwargs", [(Metric.L1, {"epsilon": 0.01, "tol": 1e-6}), (Metric.L2, {"tol": 1e-5})])
def test_swapping_source_and_target_keeps_the_distance(metric, kwargs):
    p0, p1 = generate(make_spec(ExampleName.DIRAC_SPLIT4, n=20))
    mu, tau = default_step_sizes(p0.grid)
    config = SolverConfig(metric=metric, mu=mu, tau=tau, **kwargs)
    forward = solve(p0, p1, config)
    backward = solve(p1, p0, config)
    assert forward.converged and backward.converged
    assert abs(forward.distance - backward.distance) <= 10 * config.tol * p0.grid.size


def _dirac_pair_at(grid, source, target):
    p0, p1 = np.zeros(grid.shape), np.zeros(grid.shape)
    p0[source] = 1.0
    p1[target] = 1.0
    return normalize(p0, grid), normalize(p1, grid)


@pytest.mark.slow
@pytest.mark.parametrize("metric, kwargs", [(Metric.L1, {"epsilon": 0.01, "tol": 1e-9}), (Metric.L2, {"tol": 1e-5})])
def test_shifting_both_diracs_by_one_cell_keeps_the_distance(grid40, metric, kwargs):
    mu, tau = default_step_sizes(grid40)
    config = SolverConfig(metric=metric, mu=mu, tau=tau, **kwargs)
    base = solve(*_dirac_pair_at(grid40, (19, 19), (23, 23)), config)
    shifted = solve(*_dirac_pair_at(grid40, (20, 19), (24, 23)), config)
    assert base.converged and shifted.converged
    assert abs(shifted.distance - base.distance) <= 1e-6 * base.distance


def test_estimator_params_and_fit(transport_pair):
    p0, p1 = transport_pair
    estimator = EMDSolver(metric="l1", mu=0.3, tau=0.3, epsilon=0.01, tol=1e-9)
    assert estimator.get_params()["metric"] == "l1"
    assert clone(estimator).get_params() == estimator.get_params()

    estimator.fit(p0, p1)
    assert estimator.report_.converged
    assert estimator.distance_ == pytest.approx(1.0, abs=1e-6)
    assert estimator.regularized_distance_ == pytest.approx(1.005, abs=1e-6)


def test_estimator_set_params_changes_config():
    estimator = EMDSolver().set_params(metric="l1", epsilon=0.1)
    config = estimator.to_config()
    assert config.metric is Metric.L1
    assert config.epsilon == 0.1


def test_eikonal_violation_of_zero_flux(grid40):
    assert eikonal_violation(FluxField.zeros(grid40), DualPotential.zeros(grid40), Metric.L2) == 0.0


def test_eikonal_violation_of_single_edge(line2):
    flux = FluxField(line2, [[1.0], [0.0]])
    assert eikonal_violation(flux, DualPotential(line2, [0.0, 1.0]), Metric.L1) == pytest.approx(0.0)
    assert eikonal_violation(flux, DualPotential(line2, [0.0, 1.5]), Metric.L1) == pytest.approx(0.5)


def test_residual_tail_monotonicity():
    assert residual_tail_is_monotone([(1, 1.0), (2, 0.5), (3, 0.25), (4, 0.1)])
    assert not residual_tail_is_monotone([(1, 1.0), (2, 0.5), (3, 0.25), (4, 0.5)])
