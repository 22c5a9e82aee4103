import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonauto.forms import (SCENARIOS, EvolutionProblem, FormError, FormFamily,
                           PiecewiseConstantCoefficient, PolynomialCoefficient, ScenarioError,
                           preset_rhs, preset_vector, scenario, shift_omega, shift_rhs,
                           verify_form_axioms)
from nonauto.solver import Trajectory, solve_theta
from nonauto.analysis import mr_norms
from nonauto.triple import build_fem_triple, embedding_constant, from_grams, norm


def test_gram_V_family_has_zero_defects(tri15):
    fam = FormFamily(lambda t: tri15.gram_V, 1.0, alpha=1.0, bound_M=1.0,
                     bv_modulus=lambda t: 0.0)
    rep = verify_form_axioms(fam, tri15)
    assert rep.passed
    assert rep.worst_continuity_ratio == pytest.approx(1.0, rel=1e-13)
    assert abs(rep.worst_coercivity_margin) < 1e-13
    assert rep.worst_symmetry_defect == 0.0
    assert rep.worst_bv_defect <= 0.0


def test_linear_coeff_constants(tri15):
    fam = scenario("linear_coeff", {"a": 1.0, "b": 1.0}, tri15)
    assert fam.alpha == pytest.approx(1.0, rel=1e-12)
    assert fam.bound_M == pytest.approx(2.0, rel=1e-12)
    rep = verify_form_axioms(fam, tri15, seed=3)
    assert rep.worst_continuity_ratio <= 2.0 * (1 + 1e-12)
    assert rep.worst_coercivity_margin >= -1e-12
    for t in (0.0, 0.25, 0.7, 1.0):
        assert fam.bv_modulus(t) == pytest.approx(t, abs=1e-12)


def test_jump_coeff_modulus(tri15):
    fam = scenario("jump_coeff", None, tri15)
    assert fam.bv_modulus(0.0) == 0.0
    assert fam.bv_modulus(0.4999) == 0.0
    assert fam.bv_modulus(0.5) == pytest.approx(2.0, rel=1e-12)
    assert fam.bv_modulus(1.0) == pytest.approx(2.0, rel=1e-12)
    assert fam.discontinuities == (0.5,)
    np.testing.assert_array_equal(fam.matrix(0.5), 3.0 * tri15.gram_V)
    np.testing.assert_array_equal(fam.matrix(np.nextafter(0.5, 0)), tri15.gram_V)


def test_constant_scenario(tri15):
    fam = scenario("constant", None, tri15)
    assert fam.alpha == pytest.approx(1.0) and fam.bound_M == pytest.approx(1.0)
    assert fam.bv_modulus(1.0) == 0.0
    assert fam.piecewise_constant


def test_stiffness_plus_mass_base(tri15):
    fam = scenario("constant", {"base": "stiffness_plus_mass"}, tri15)
    # spectrum of G_V + G_H relative to G_V is 1 + spectrum(G_H, G_V), topped by 1 + c_H^2
    assert fam.bound_M == pytest.approx(1 + embedding_constant(tri15) ** 2, rel=1e-12)
    assert 1.0 < fam.alpha < fam.bound_M
    assert verify_form_axioms(fam, tri15).passed


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_every_scenario_passes_its_own_axioms(name, tri15):
    fam = scenario(name, None, tri15)
    rep = verify_form_axioms(fam, tri15, seed=11)
    assert rep.passed, rep.failures()
    assert rep.worst_bv_defect <= 1e-10


def test_asymmetric_family_flagged(tri15):
    skew = np.triu(np.ones((15, 15)), 1)
    A = tri15.gram_V + 1e-3 * (skew - skew.T)
    fam = FormFamily(lambda t: A, 1.0, alpha=1.0, bound_M=2.0)
    rep = verify_form_axioms(fam, tri15)
    assert "symmetry" in rep.failures()
    unflagged = FormFamily(lambda t: A, 1.0, alpha=1.0, bound_M=2.0, symmetric=False)
    assert "symmetry" not in verify_form_axioms(unflagged, tri15).failures()


def test_understated_constants_are_caught(tri15):
    fam = FormFamily(lambda t: 2.0 * tri15.gram_V, 1.0, alpha=2.5, bound_M=1.5)
    assert set(verify_form_axioms(fam, tri15).failures()) == {"continuity", "coercivity"}
    bad_g = FormFamily(lambda t: (1 + t) * tri15.gram_V, 1.0, alpha=1.0, bound_M=2.0,
                       bv_modulus=lambda t: 0.5 * t)
    assert "bounded_variation" in verify_form_axioms(bad_g, tri15).failures()


def test_missing_bv_modulus_rejected(tri15):
    fam = FormFamily(lambda t: tri15.gram_V, 1.0, alpha=1.0, bound_M=1.0)
    with pytest.raises(FormError):
        verify_form_axioms(fam, tri15, check_bv=True)


def test_dimension_mismatch_rejected(tri15):
    fam = FormFamily(lambda t: np.eye(3), 1.0, alpha=1.0, bound_M=1.0)
    with pytest.raises(FormError):
        verify_form_axioms(fam, tri15)


def test_family_requires_positive_constants():
    with pytest.raises(FormError):
        FormFamily(lambda t: np.eye(1), 1.0, alpha=1.0, bound_M=0.0)
    with pytest.raises(FormError):
        FormFamily(lambda t: np.eye(1), 0.0, alpha=1.0, bound_M=1.0)


def test_matrix_rejects_times_outside_horizon(tri15):
    fam = scenario("constant", None, tri15)
    with pytest.raises(FormError):
        fam.matrix(1.01)
    with pytest.raises(FormError):
        fam.matrix(-0.1)


def test_scenario_errors(tri15):
    with pytest.raises(ScenarioError):
        scenario("unknown", None, tri15)
    with pytest.raises(ScenarioError):
        scenario("linear_coeff", {"slope": 2}, tri15)
    with pytest.raises(ScenarioError):
        scenario("linear_coeff", {"a": 1.0, "b": -1.5}, tri15)
    with pytest.raises(ScenarioError):
        scenario("jump_coeff", {"times": [0.5], "values": [1.0, 0.0]}, tri15)
    with pytest.raises(ScenarioError):
        scenario("jump_coeff", {"times": [1.5]}, tri15)
    with pytest.raises(ScenarioError):
        scenario("constant", {"base": "laplace"}, tri15)


def test_problem_checks_initial_state(tri15):
    fam = scenario("constant", None, tri15)
    with pytest.raises(FormError):
        EvolutionProblem(fam, None, np.ones(3), tri15)
    with pytest.raises(FormError):
        EvolutionProblem(fam, None, np.full(15, np.inf), tri15)


def test_staircase_shape(tri15):
    fam = scenario("staircase_bv", {"n_jumps": 4, "offset": 0.25, "height": 2.0}, tri15)
    coef = fam.separable.coefficient
    np.testing.assert_allclose(coef.times, [1 / 16, 5 / 16, 9 / 16, 13 / 16])
    assert coef.values[-1] == pytest.approx(3.0)
    assert fam.bv_modulus(1.0) == pytest.approx(2.0, rel=1e-12)


# coefficients


def test_piecewise_constant_coefficient():
    c = PiecewiseConstantCoefficient([0.25, 0.5], [2.0, 1.0, 4.0], 1.0)
    assert c.value(0.0) == 2.0 and c.value(0.25) == 1.0 and c.value(0.75) == 4.0
    assert c.antiderivative(1.0) == pytest.approx(0.5 + 0.25 + 2.0)
    np.testing.assert_allclose(c.antiderivative(np.array([0.1, 0.3])), [0.2, 0.55])
    assert c.variation(0.3) == pytest.approx(1.0) and c.variation(1.0) == pytest.approx(4.0)
    assert c.extremes() == (1.0, 4.0)


def test_polynomial_variation_splits_at_turning_points():
    c = PolynomialCoefficient([1.0, -2.0, 2.0], 1.0)  # minimum 0.5 at t = 1/2
    assert c.kinks == (0.5,)
    assert c.variation(1.0) == pytest.approx(1.0, rel=1e-14)
    assert c.extremes() == pytest.approx((0.5, 1.0))


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=5),
       st.floats(0.0, 2.0))
def test_polynomial_antiderivative(coeffs, t):
    c = PolynomialCoefficient(coeffs, 2.0)
    h = 1e-6
    lo, hi = max(t - h, 0.0), min(t + h, 2.0)
    if hi > lo:
        slope = (c.antiderivative(hi) - c.antiderivative(lo)) / (hi - lo)
        assert slope == pytest.approx(c.value(0.5 * (lo + hi)), rel=1e-5, abs=1e-5)


@given(st.floats(0.5, 4.0), st.floats(-0.45, 3.0), st.integers(0, 1000))
def test_random_linear_coefficients_satisfy_axioms(a, b_frac, seed):
    tr = build_fem_triple(7)
    fam = scenario("linear_coeff", {"a": a, "b": b_frac * a}, tr)
    rep = verify_form_axioms(fam, tr, 16, 8, seed=seed)
    assert rep.passed, rep.failures()


@given(st.lists(st.floats(0.2, 5.0), min_size=2, max_size=6), st.integers(0, 1000))
def test_random_jump_coefficients_satisfy_axioms(values, seed):
    tr = build_fem_triple(7)
    times = list(np.linspace(0, 1, len(values) + 1)[1:-1] * 0.97 + 0.01)
    fam = scenario("jump_coeff", {"times": times, "values": values}, tr)
    assert verify_form_axioms(fam, tr, 16, 8, seed=seed).passed


# omega shift


def test_zero_shift_is_a_no_op(tri15):
    fam = scenario("linear_coeff", None, tri15)
    shifted, back = shift_omega(fam, tri15)
    assert shifted is fam
    traj = Trajectory(np.array([0.0, 1.0]), np.ones((2, 15)))
    assert back(traj) is traj
    f = lambda t: np.ones(15)
    assert shift_rhs(f, 0.0) is f


def test_scalar_shift_example():
    one = from_grams([[1.0]], [[1.0]])
    # A = 0 is coercive only after adding omega * G_H
    fam = FormFamily(lambda t: np.zeros((1, 1)), 1.0, alpha=1.0, bound_M=1.0, omega=1.0)
    shifted, back = shift_omega(fam, one)
    assert shifted.omega == 0.0 and shifted.alpha == 1.0
    np.testing.assert_array_equal(shifted.matrix(0.3), [[1.0]])
    v = solve_theta(EvolutionProblem(shifted, None, np.array([1.0]), one), 1024)
    np.testing.assert_allclose(v.states[:, 0], np.exp(-v.grid), rtol=1e-6)
    np.testing.assert_allclose(back(v).states[:, 0], 1.0, rtol=1e-6)


@pytest.mark.parametrize("name,params", [
    ("linear_coeff", {"a": 1.0, "b": 2.0}),
    ("jump_coeff", {"times": [1 / 3]}),
    ("separable_spectral", {"coeffs": [2.0, -1.0, 0.5]}),
])
def test_shift_round_trip(name, params, tri15):
    f = preset_rhs("constant", tri15)
    u0 = preset_vector("mode_1", tri15)
    fam = scenario(name, {**params, "omega": 1.0}, tri15)
    direct = solve_theta(EvolutionProblem(fam, f, u0, tri15), 512)
    shifted, back = shift_omega(fam, tri15)
    assert verify_form_axioms(shifted, tri15).passed
    v = solve_theta(EvolutionProblem(shifted, shift_rhs(f, 1.0), u0, tri15), 512)
    gap = Trajectory(direct.grid, back(v).states - direct.states)
    assert mr_norms(gap, tri15).l2_H < 2e-5


def test_shifted_scenario_keeps_separable_oracle(tri15):
    fam = scenario("linear_coeff", {"omega": 0.5}, tri15)
    assert fam.separable.mass_shift == -0.5
    shifted, _ = shift_omega(fam, tri15)
    assert shifted.separable.mass_shift == 0.0
    np.testing.assert_allclose(shifted.matrix(0.4), 1.4 * tri15.gram_V, rtol=1e-14)


# presets


def test_presets(tri15):
    assert not preset_vector("zero", tri15).any()
    assert (preset_vector("constant", tri15) == 1.0).all()
    np.testing.assert_array_equal(preset_vector("random_seeded", tri15, 4),
                                  preset_vector("random_seeded", tri15, 4))
    assert norm(tri15, preset_vector("mode_3", tri15), "H") == pytest.approx(1.0)
    assert preset_rhs("zero", tri15) is None
    f = preset_rhs("constant", tri15)
    np.testing.assert_array_equal(f(0.0), f(0.9))
    for bad in ("mode_x", "mode_99", "gaussian"):
        with pytest.raises(ScenarioError):
            preset_vector(bad, tri15)
