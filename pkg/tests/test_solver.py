import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonauto.analysis import difference, mr_norms
from nonauto.approx import Kind, Subdivision
from nonauto.forms import (EvolutionProblem, FormError, FormFamily, PolynomialCoefficient,
                           preset_rhs, preset_vector, scenario)
from nonauto.solver import (SolverError, merge_knots, oracle_for, solve_approximate,
                            solve_spectral_oracle, solve_theta, time_grid)
from nonauto.triple import build_fem_triple, from_grams, norm

ONE = from_grams([[1.0]], [[1.0]])


def scalar_family(a, T=1.0):
    return FormFamily(lambda t: np.array([[a]]), T, alpha=max(a, 1e-12), bound_M=max(abs(a), 1.0))


def test_implicit_euler_hand_step():
    traj = solve_theta(EvolutionProblem(scalar_family(1.0, 0.1), None, np.array([1.0]), ONE),
                       steps_per_interval=1, theta=1.0)
    assert traj.grid.tolist() == [0.0, 0.1]
    assert traj.states[1, 0] == pytest.approx(1 / 1.1, rel=1e-15)


@pytest.mark.parametrize("theta", [0.5, 0.7, 1.0])
def test_zero_operator_integrates_constant_source_exactly(theta, tri15):
    zero = FormFamily(lambda t: np.zeros((15, 15)), 1.0, alpha=1.0, bound_M=1.0)
    b = np.linspace(-1, 1, 15)
    u0 = np.ones(15)
    traj = solve_theta(EvolutionProblem(zero, lambda t: b, u0, tri15), 20, theta)
    np.testing.assert_allclose(traj.states, u0 + traj.grid[:, None] * b, atol=1e-13)


def test_crank_nicolson_scalar_decay():
    traj = solve_theta(EvolutionProblem(scalar_family(1.0), None, np.array([1.0]), ONE), 256)
    assert abs(traj.states[-1, 0] - math.exp(-1)) < 1e-4


def test_grid_construction():
    g = time_grid([0.0, 0.3, 1.0], 0.25)
    # 0.3 / 0.25 -> 2 steps, 0.7 / 0.25 -> 3 steps
    np.testing.assert_allclose(g, [0, 0.15, 0.3, 0.3 + 0.7 / 3, 0.3 + 1.4 / 3, 1.0], rtol=1e-15)
    merged = merge_knots([0.0, 1 / 3, 1.0], [0.0, 0.5, 1 / 3 + 1e-15, 1.0])
    np.testing.assert_array_equal(merged, [0.0, 1 / 3, 0.5, 1.0])


def test_trajectory_contains_every_node_and_breakpoint(tri15):
    fam = scenario("jump_coeff", {"times": [0.3]}, tri15)
    u0 = preset_vector("mode_1", tri15)
    for n in (3, 7, 10):
        for kind in Kind:
            traj = solve_approximate(fam, Subdivision(1.0, n), kind, None, u0, tri15, 4)
            assert np.isin(Subdivision(1.0, n).nodes, traj.grid).all()
            assert np.array_equal(traj.states[0], u0)
            assert traj.meta["kind"] is kind and traj.meta["mesh"] == 1.0 / n
    direct = solve_theta(EvolutionProblem(fam, None, u0, tri15), 4)
    assert 0.3 in direct.grid


@pytest.mark.parametrize("n", [1, 4, 9])
def test_constant_family_approximants_reproduce_direct_solve(n, tri15):
    fam = scenario("constant", None, tri15)
    u0 = preset_vector("random_seeded", tri15, 5)
    f = preset_rhs("constant", tri15)
    direct = solve_theta(EvolutionProblem(fam, f, u0, tri15), 8, base_intervals=n)
    for kind in Kind:
        traj = solve_approximate(fam, Subdivision(1.0, n), kind, f, u0, tri15, 8)
        np.testing.assert_array_equal(traj.grid, direct.grid)
        np.testing.assert_array_equal(traj.states, direct.states)


def test_single_interval_linear_equals_step(tri15):
    fam = scenario("linear_coeff", None, tri15)
    u0 = preset_vector("mode_2", tri15)
    a = solve_approximate(fam, Subdivision(1.0, 1), Kind.STEP, None, u0, tri15, 32)
    b = solve_approximate(fam, Subdivision(1.0, 1), Kind.LINEAR, None, u0, tri15, 32)
    np.testing.assert_array_equal(a.states, b.states)


def test_successive_approximations_contract(tri15):
    fam = scenario("linear_coeff", None, tri15)
    u0 = preset_vector("mode_1", tri15)
    trajs = {n: solve_approximate(fam, Subdivision(1.0, n), Kind.LINEAR, None, u0, tri15, 16)
             for n in (8, 16, 32)}
    d1 = mr_norms(difference(trajs[8], trajs[16]), tri15).l2_V
    d2 = mr_norms(difference(trajs[16], trajs[32]), tri15).l2_V
    assert d2 < d1


# oracle


def test_oracle_single_mode(tri15):
    phi = tri15.mode(1)
    mu = (tri15.gram_V @ phi)[0] / (tri15.gram_H @ phi)[0]
    grid = np.linspace(0, 1, 5)
    fam = scenario("constant", None, tri15)
    ref = oracle_for(fam, tri15, None, phi, grid)
    np.testing.assert_allclose(ref.states, np.exp(-mu * grid)[:, None] * phi, rtol=1e-12,
                               atol=1e-15)
    ramp = scenario("separable_spectral", {"coeffs": [1.0, 1.0]}, tri15)
    end = oracle_for(ramp, tri15, None, phi, grid).states[-1]
    np.testing.assert_allclose(end, math.exp(-1.5 * mu) * phi, rtol=1e-12, atol=1e-15)


def test_oracle_duhamel_scalar():
    # u' + u = 1, u(0) = 0  =>  u = 1 - e^{-t}
    coef = PolynomialCoefficient([1.0], 1.0)
    grid = np.linspace(0, 1, 11)
    traj = solve_spectral_oracle(coef, np.array([[1.0]]), ONE, lambda t: np.array([1.0]),
                                 np.array([0.0]), grid)
    np.testing.assert_allclose(traj.states[:, 0], 1 - np.exp(-grid), rtol=1e-13, atol=1e-15)


def test_oracle_handles_jumps():
    # c = 1 then 3 after 1/2: u(1) = exp(-(1/2 + 3/2)) for f = 0
    from nonauto.forms import PiecewiseConstantCoefficient

    coef = PiecewiseConstantCoefficient([0.5], [1.0, 3.0], 1.0)
    traj = solve_spectral_oracle(coef, np.array([[1.0]]), ONE, None, np.array([1.0]), [0.0, 1.0])
    assert traj.states[-1, 0] == pytest.approx(math.exp(-2.0), rel=1e-14)


def test_theta_matches_oracle_on_ramp(tri15):
    fam = scenario("separable_spectral", {"coeffs": [1.0, 1.0]}, tri15)
    u0 = tri15.mode(1)
    traj = solve_theta(EvolutionProblem(fam, None, u0, tri15), 1024)
    ref = oracle_for(fam, tri15, None, u0, traj.grid)
    assert norm(tri15, traj.states - ref.states, "H").max() < 1e-5


def test_oracle_rejects_non_separable(tri15):
    fam = FormFamily(lambda t: tri15.gram_V, 1.0, alpha=1.0, bound_M=1.0)
    with pytest.raises(FormError):
        oracle_for(fam, tri15, None, np.ones(15), [0.0, 1.0])


@pytest.mark.parametrize("theta,need", [(0.5, 1.8), (1.0, 1.4)])
def test_richardson_ratio(theta, need, tri15):
    fam = scenario("separable_spectral", {"coeffs": [1.0, 0.5, 0.5]}, tri15)
    u0 = tri15.mode(1)
    f = preset_rhs("constant", tri15)

    def gap(m):
        traj = solve_theta(EvolutionProblem(fam, f, u0, tri15), m, theta)
        ref = oracle_for(fam, tri15, f, u0, traj.grid)
        return norm(tri15, traj.states - ref.states, "H").max()

    assert gap(64) / gap(128) >= need


# failures


def test_parameter_checks(tri15):
    prob = EvolutionProblem(scenario("constant", None, tri15), None, np.ones(15), tri15)
    with pytest.raises(SolverError):
        solve_theta(prob, 8, theta=0.3)
    with pytest.raises(SolverError):
        solve_theta(prob, 0)
    with pytest.raises(SolverError):
        solve_theta(prob, grid=[0.0, 0.7, 0.5, 1.0])


def test_explicit_grid_must_hold_breakpoints(tri15):
    fam = scenario("jump_coeff", {"times": [0.3]}, tri15)
    prob = EvolutionProblem(fam, None, np.ones(15), tri15)
    with pytest.raises(SolverError):
        solve_theta(prob, grid=np.linspace(0, 1, 11)[[0, 5, 10]])
    traj = solve_theta(prob, grid=[0.0, 0.3, 1.0])
    assert traj.grid.tolist() == [0.0, 0.3, 1.0]


def test_singular_step_is_reported():
    # G_H + dt A = 0 for A = -1/dt on the single step
    fam = FormFamily(lambda t: np.array([[-10.0]]), 0.1, alpha=1.0, bound_M=10.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(SolverError) as info:
            solve_theta(EvolutionProblem(fam, None, np.array([1.0]), ONE), 1, theta=1.0)
    assert info.value.step == 0


def test_non_finite_state_is_reported():
    fam = scalar_family(1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(SolverError, match="non-finite") as info:
            solve_theta(EvolutionProblem(fam, lambda t: np.array([np.inf]), np.array([1.0]), ONE), 4)
    assert info.value.step == 1


# properties


@given(st.floats(0.5, 1.0), st.floats(0.5, 3.0), st.floats(0.0, 2.0), st.integers(1, 12),
       st.integers(0, 10 ** 6), st.sampled_from(list(Kind)))
def test_unforced_runs_are_dissipative(theta, a, b, n, seed, kind):
    tr = build_fem_triple(9)
    fam = scenario("linear_coeff", {"a": a, "b": b}, tr)
    u0 = np.random.default_rng(seed).standard_normal(9)
    traj = solve_approximate(fam, Subdivision(1.0, n), kind, None, u0, tr, 6, theta)
    nh = norm(tr, traj.states, "H")
    assert np.all(np.diff(nh) <= 1e-13 * nh[0])


@given(st.integers(0, 10 ** 6))
def test_complex_states_split_into_real_runs(seed):
    tr = build_fem_triple(5)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 5))
    fam = scenario("linear_coeff", None, tr)
    run = lambda u0: solve_theta(EvolutionProblem(fam, None, u0, tr), 16).states
    np.testing.assert_allclose(run(x + 1j * y), run(x) + 1j * run(y), rtol=1e-12, atol=1e-14)
